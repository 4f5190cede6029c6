//! Library side of the command-line driver. Every command is a plain
//! function so it can be exercised without spawning the binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::dataset::{infer_subject, load_ear, Dataset};
use crate::error::{Error, Result};
use crate::evaluation::{
    accuracy_report, cmc_csv, cmc_curve, equal_error, identify, polyline_svg, rank_of, rank_records, report_csv,
    roc_csv, roc_curve, scores_csv, verify, Calibration, CmcCurve, MatchRecord, ReportRow, Verification,
};
use crate::imaging::{gray_to_color, save_png, ColorImage};
use crate::pipeline::{build_template, score_all, threshold, whole_features, Built, Metric, Rule};
use crate::segmentation::SliceRegion;
use crate::sift::dump::dump_features;
use crate::synth::{self, SynthConfig};
use crate::template::{Template, TemplateStore};

pub fn cmd_generate(out: &Path, cfg: &SynthConfig) -> Result<Vec<String>> {
    synth::generate(out, cfg)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnrollSummary {
    pub store: PathBuf,
    pub enrolled: Vec<String>,
}

fn write_slice_dump(dir: &Path, subject: &str, instance: &str, slices: &[SliceRegion]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, s) in slices.iter().enumerate() {
        // Color crop on the left, equalized gray crop on the right.
        let (w, h) = (s.color_patch.width(), s.color_patch.height());
        let gray = gray_to_color(&s.gray_patch);
        let mut out = ColorImage::filled(2 * w, h, [0, 0, 0])?;
        for y in 0..h {
            for x in 0..w {
                out.set(x, y, s.color_patch.get(x, y));
                out.set(w + x, y, gray.get(x, y));
            }
        }
        save_png(&out, dir.join(format!("{subject}_{instance}_slice{i}.png")))?;
    }
    Ok(())
}

fn build_from_path(path: &Path, subject: &str, config: &RunConfig) -> Result<Built> {
    let ear = load_ear(path, subject)?;
    build_template(&ear, config)
}

/// Builds one template per subject reference image and writes the store.
/// Re-enrolling a subject overwrites its template.
pub fn cmd_enroll(dataset: &Path, store: &Path, config: &RunConfig, dump_slices: Option<&Path>) -> Result<EnrollSummary> {
    config.validate()?;
    let ds = Dataset::scan(dataset)?;
    let refs = ds.references()?;
    if refs.is_empty() {
        return Err(Error::Protocol(format!("no reference images under {}", dataset.display())));
    }
    let built: Vec<Built> = refs
        .par_iter()
        .map(|(id, path)| build_from_path(path, id, config))
        .collect::<Result<_>>()?;
    let mut st = if store.join(crate::template::INDEX_FILE).is_file() {
        TemplateStore::open(store)?
    } else {
        TemplateStore::create(store)?
    };
    for b in &built {
        st.put(&b.template)?;
        if let Some(dir) = dump_slices {
            write_slice_dump(dir, &b.template.subject_id, &b.template.instance, &b.slices)?;
        }
    }
    log::info!("enrolled {} subjects into {}", built.len(), store.display());
    Ok(EnrollSummary {
        store: store.to_path_buf(),
        enrolled: built.into_iter().map(|b| b.template.subject_id).collect(),
    })
}

fn load_gallery(store: &Path) -> Result<Vec<Template>> {
    let gallery = TemplateStore::open(store)?.load_all()?;
    if gallery.is_empty() {
        return Err(Error::EmptyGallery);
    }
    Ok(gallery)
}

pub fn cmd_identify(
    probe: &Path,
    store: &Path,
    config: &RunConfig,
    rule: Rule,
    metric: Metric,
    top: usize,
) -> Result<Vec<MatchRecord>> {
    config.validate()?;
    let gallery = load_gallery(store)?;
    let built = build_from_path(probe, &infer_subject(probe), config)?;
    identify(&built.template, &gallery, top, rule, metric, config)
}

/// Scores the probe against the claimed subject at the configured
/// threshold for the rule and metric.
pub fn cmd_verify(
    probe: &Path,
    claimed: &str,
    store: &Path,
    config: &RunConfig,
    rule: Rule,
    metric: Metric,
) -> Result<Verification> {
    config.validate()?;
    let claimed = TemplateStore::open(store)?.get(claimed)?;
    let built = build_from_path(probe, &infer_subject(probe), config)?;
    Ok(verify(&built.template, &claimed, threshold(rule, metric, config), rule, metric, config))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EvaluateOptions {
    pub plots: bool,
    /// Restrict to the whole-image baseline.
    pub no_segmentation: bool,
}

#[derive(Debug, Clone)]
pub struct EvaluationSummary {
    pub records: Vec<MatchRecord>,
    pub cmc: BTreeMap<(Rule, Metric), CmcCurve>,
    pub report: Vec<ReportRow>,
    pub files: Vec<PathBuf>,
}

fn cell_name(rule: Rule, metric: Metric) -> String {
    format!("{rule}_{metric}")
}

fn write(path: PathBuf, text: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    files.push(path);
    Ok(())
}

/// Builds templates for every probe image, scores them against the whole
/// gallery under every rule and metric and writes `scores.csv`,
/// `report.csv` and per-cell `cmc_*.csv` / `roc_*.csv` (plus SVGs).
pub fn cmd_evaluate(
    dataset: &Path,
    store: &Path,
    config: &RunConfig,
    out: &Path,
    options: EvaluateOptions,
) -> Result<EvaluationSummary> {
    config.validate()?;
    let gallery = load_gallery(store)?;
    let ds = Dataset::scan(dataset)?;
    let probes = ds.probes();
    if probes.is_empty() {
        return Err(Error::Protocol(format!("no probe images under {}", dataset.display())));
    }
    if let Some((id, _)) = probes.iter().find(|(id, _)| !gallery.iter().any(|g| g.subject_id == *id)) {
        return Err(Error::Protocol(format!("probe subject {id} is not enrolled")));
    }
    let templates: Vec<Template> = probes
        .par_iter()
        .map(|(id, path)| build_from_path(path, id, config).map(|b| b.template))
        .collect::<Result<_>>()?;

    let cells: Vec<(Rule, Metric)> = Rule::ALL
        .into_iter()
        .filter(|r| !options.no_segmentation || *r == Rule::Whole)
        .flat_map(|r| Metric::ALL.map(|m| (r, m)))
        .collect();

    // rankings[cell][probe]
    let per_probe: Vec<Vec<Vec<MatchRecord>>> = templates
        .par_iter()
        .map(|p| {
            let mut by_cell: Vec<Vec<MatchRecord>> = vec![Vec::with_capacity(gallery.len()); cells.len()];
            for g in &gallery {
                for (rule, metric, score) in score_all(p, g, config) {
                    if let Some(c) = cells.iter().position(|c| *c == (rule, metric)) {
                        by_cell[c].push(MatchRecord {
                            probe_id: p.subject_id.clone(),
                            gallery_id: g.subject_id.clone(),
                            rule,
                            metric,
                            score,
                        });
                    }
                }
            }
            by_cell.into_iter().map(rank_records).collect()
        })
        .collect();

    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut files = Vec::new();
    let mut records = Vec::new();
    let mut cmc = BTreeMap::new();
    let mut rank1 = BTreeMap::new();
    let mut thresholds = BTreeMap::new();
    for (c, &(rule, metric)) in cells.iter().enumerate() {
        let rankings: Vec<Vec<MatchRecord>> = per_probe.iter().map(|p| p[c].clone()).collect();
        let curve = cmc_curve(&rankings, gallery.len());
        let hits = rankings.iter().filter(|r| rank_of(r) == Some(1)).count();
        rank1.insert((rule, metric), 100.0 * hits as f64 / rankings.len() as f64);
        let (genuine, impostor): (Vec<&MatchRecord>, Vec<&MatchRecord>) =
            rankings.iter().flatten().partition(|r| r.is_genuine());
        let name = cell_name(rule, metric);
        write(out.join(format!("cmc_{name}.csv")), &cmc_csv(&curve), &mut files)?;
        let roc = if impostor.is_empty() {
            None
        } else {
            let g: Vec<f64> = genuine.iter().map(|r| r.score).collect();
            let i: Vec<f64> = impostor.iter().map(|r| r.score).collect();
            Some(roc_curve(&g, &i)?)
        };
        if let Some(roc) = &roc {
            write(out.join(format!("roc_{name}.csv")), &roc_csv(roc), &mut files)?;
        }
        if options.plots {
            let pts: Vec<(f64, f64)> = curve.points.iter().map(|(r, v)| (*r as f64, *v)).collect();
            write(
                out.join(format!("cmc_{name}.svg")),
                &polyline_svg(&format!("CMC {rule} {metric}"), "rank", "identification rate", &pts),
                &mut files,
            )?;
            if let Some(roc) = &roc {
                let pts: Vec<(f64, f64)> = roc.points.iter().map(|p| (p.fpr, p.tpr)).collect();
                write(
                    out.join(format!("roc_{name}.svg")),
                    &polyline_svg(&format!("ROC {rule} {metric}"), "false accept rate", "true accept rate", &pts),
                    &mut files,
                )?;
            }
        }
        thresholds.insert((rule, metric), threshold(rule, metric, config));
        cmc.insert((rule, metric), curve);
        records.extend(rankings.into_iter().flatten());
    }
    let mut report = accuracy_report(&records, &thresholds);
    for row in &mut report {
        row.rank1 = rank1.get(&(row.rule, row.metric)).copied();
    }
    write(out.join("scores.csv"), &scores_csv(&records), &mut files)?;
    write(out.join("report.csv"), &report_csv(&report), &mut files)?;
    files.sort();
    Ok(EvaluationSummary {
        records,
        cmc,
        report,
        files,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    /// From concatenated-feature distances.
    pub psi: Calibration,
    /// From fused-vector distances.
    pub phi: Calibration,
    pub genuine: usize,
    pub impostor: usize,
}

impl CalibrationReport {
    pub fn apply(&self, config: &RunConfig) -> RunConfig {
        RunConfig {
            psi: self.psi.threshold,
            phi: self.phi.threshold,
            ..config.clone()
        }
    }
}

/// Equal-error thresholds from a calibration dataset whose subjects are
/// disjoint from the enrolled gallery. Every calibration probe is compared
/// with every calibration reference.
pub fn cmd_calibrate(calibration: &Path, store: Option<&Path>, config: &RunConfig) -> Result<CalibrationReport> {
    config.validate()?;
    let ds = Dataset::scan(calibration)?;
    if let Some(store) = store {
        let st = TemplateStore::open(store)?;
        if let Some(id) = ds.subject_ids().into_iter().find(|id| st.contains(id)) {
            return Err(Error::Protocol(format!("calibration subject {id} is also enrolled")));
        }
    }
    let refs = ds.references()?;
    let probes = ds.probes();
    let build_all = |items: &[(&str, &Path)]| -> Result<Vec<Template>> {
        items
            .par_iter()
            .map(|(id, p)| build_from_path(p, id, config).map(|b| b.template))
            .collect()
    };
    let refs = build_all(&refs)?;
    let probes = build_all(&probes)?;
    let scored: Vec<(bool, f64, f64)> = probes
        .par_iter()
        .flat_map_iter(|p| {
            refs.iter().map(move |r| {
                let s = score_all(p, r, config);
                (p.subject_id == r.subject_id, s[2].2, s[4].2)
            })
        })
        .collect();
    let pick = |genuine: bool, col: usize| -> Vec<f64> {
        scored
            .iter()
            .filter(|s| s.0 == genuine)
            .map(|s| if col == 0 { s.1 } else { s.2 })
            .collect()
    };
    let (gc, ic, gd, id) = (pick(true, 0), pick(false, 0), pick(true, 1), pick(false, 1));
    Ok(CalibrationReport {
        psi: equal_error(&gc, &ic)?,
        phi: equal_error(&gd, &id)?,
        genuine: gc.len(),
        impostor: ic.len(),
    })
}

/// Whole-image SIFT features of one image in the text dump format.
pub fn cmd_features(image: &Path, config: &RunConfig) -> Result<String> {
    config.validate()?;
    let ear = load_ear(image, &infer_subject(image))?;
    let set = whole_features(&ear.image, &ear.mask, config)?;
    Ok(dump_features(&set.features))
}
