use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;

use earlock::commands::{cmd_calibrate, cmd_enroll, cmd_evaluate, cmd_identify, cmd_verify, EvaluateOptions};
use earlock::config::RunConfig;
use earlock::pipeline::{Metric, Rule};
use earlock::synth::{generate, SynthConfig};
use earlock::template::INDEX_FILE;
use earlock::Error;

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn data(&self) -> PathBuf {
        self.root.join("data")
    }

    fn store(&self) -> PathBuf {
        self.root.join("store")
    }
}

/// Three enrolled synthetic subjects.
fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let synth = SynthConfig {
            subjects: 3,
            ..SynthConfig::default()
        };
        generate(root.join("data"), &synth).unwrap();
        cmd_enroll(&root.join("data"), &root.join("store"), &RunConfig::default(), None).unwrap();
        Fixture { _dir: dir, root }
    })
}

fn image(fx: &Fixture, subject: &str, split: &str) -> PathBuf {
    fx.data().join(subject).join(split).join(format!("{subject}_{split}.png"))
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(from).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            copy_dir(&p, &to.join(p.file_name().unwrap()));
        } else {
            std::fs::copy(&p, to.join(p.file_name().unwrap())).unwrap();
        }
    }
}

#[test]
fn enroll_writes_one_template_per_subject_deterministically() {
    let fx = fixture();
    let files: Vec<_> = std::fs::read_dir(fx.store()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(files.len(), 4, "{files:?}");
    assert!(fx.store().join(INDEX_FILE).is_file());

    let again = tempfile::tempdir().unwrap();
    let dumps = again.path().join("slices");
    cmd_enroll(&fx.data(), again.path(), &RunConfig::default(), Some(&dumps)).unwrap();
    for id in ["s001", "s002", "s003"] {
        let a = std::fs::read(fx.store().join(format!("{id}.eartpl"))).unwrap();
        let b = std::fs::read(again.path().join(format!("{id}.eartpl"))).unwrap();
        assert_eq!(a, b, "{id}");
    }
    assert!(dumps.join("s001_s001_ref_slice0.png").is_file());
}

#[test]
fn two_reference_images_violate_the_protocol() {
    let fx = fixture();
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&fx.data().join("s001"), &dir.path().join("s001"));
    std::fs::copy(image(fx, "s001", "ref"), dir.path().join("s001/ref/second.png")).unwrap();
    let err = cmd_enroll(dir.path(), &dir.path().join("store"), &RunConfig::default(), None).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
}

#[test]
fn self_probe_ranks_first_with_zero_score() {
    let fx = fixture();
    let cfg = RunConfig::default();
    for rule in [Rule::Concat, Rule::Ds] {
        let ranking = cmd_identify(&image(fx, "s002", "ref"), &fx.store(), &cfg, rule, Metric::Euclid, 5).unwrap();
        assert_eq!(ranking.len(), 3);
        assert_eq!(ranking[0].gallery_id, "s002");
        assert_eq!(ranking[0].score, 0.0, "{rule}");
    }
    let probe = cmd_identify(&image(fx, "s003", "probe"), &fx.store(), &cfg, Rule::Ds, Metric::Euclid, 1).unwrap();
    assert_eq!(probe[0].gallery_id, "s003");
}

#[test]
fn identify_needs_a_gallery() {
    let fx = fixture();
    let empty = tempfile::tempdir().unwrap();
    earlock::template::TemplateStore::create(empty.path()).unwrap();
    let err = cmd_identify(&image(fx, "s001", "probe"), empty.path(), &RunConfig::default(), Rule::Concat, Metric::Euclid, 5);
    assert!(matches!(err, Err(Error::EmptyGallery)));
}

#[test]
fn verify_accepts_genuine_and_rejects_impostor_claims() {
    let fx = fixture();
    let cfg = RunConfig::default();
    let probe = image(fx, "s001", "probe");
    for rule in [Rule::Concat, Rule::Ds] {
        let genuine = cmd_verify(&probe, "s001", &fx.store(), &cfg, rule, Metric::Euclid).unwrap();
        assert!(genuine.accept, "{rule}: {}", genuine.score);
        let impostor = cmd_verify(&probe, "s002", &fx.store(), &cfg, rule, Metric::Euclid).unwrap();
        assert!(!impostor.accept, "{rule}: {}", impostor.score);
    }
    let unknown = cmd_verify(&probe, "s999", &fx.store(), &cfg, Rule::Concat, Metric::Euclid);
    assert!(matches!(unknown, Err(Error::UnknownSubject(_))));
}

#[test]
fn evaluate_rejects_bad_probe_sets() {
    let fx = fixture();
    let cfg = RunConfig::default();
    let out = tempfile::tempdir().unwrap();

    let empty = tempfile::tempdir().unwrap();
    copy_dir(&fx.data().join("s001/ref"), &empty.path().join("s001/ref"));
    let err = cmd_evaluate(empty.path(), &fx.store(), &cfg, out.path(), EvaluateOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");

    let stranger = tempfile::tempdir().unwrap();
    copy_dir(&fx.data().join("s001/probe"), &stranger.path().join("s999/probe"));
    let err = cmd_evaluate(stranger.path(), &fx.store(), &cfg, out.path(), EvaluateOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
}

#[test]
fn baseline_evaluation_writes_whole_image_cells() {
    let fx = fixture();
    let out = tempfile::tempdir().unwrap();
    let options = EvaluateOptions {
        plots: true,
        no_segmentation: true,
    };
    let summary = cmd_evaluate(&fx.data(), &fx.store(), &RunConfig::default(), out.path(), options).unwrap();
    assert_eq!(summary.report.len(), 2);
    assert!(summary.report.iter().all(|r| r.rule == Rule::Whole && r.rank1 == Some(100.0)));
    for f in ["cmc_whole_euclid.csv", "roc_whole_nn.csv", "cmc_whole_nn.svg", "scores.csv", "report.csv"] {
        assert!(out.path().join(f).is_file(), "{f}");
    }
    for curve in summary.cmc.values() {
        assert!(curve.points.windows(2).all(|w| w[1].1 >= w[0].1));
        assert_eq!(curve.rate_at(3), 1.0);
    }
}

#[test]
fn calibration_checks_its_inputs() {
    let fx = fixture();
    let cfg = RunConfig::default();
    // Gallery subjects reused for calibration.
    let err = cmd_calibrate(&fx.data(), Some(&fx.store()), &cfg).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
    // One subject cannot provide ten genuine pairs.
    let single = tempfile::tempdir().unwrap();
    copy_dir(&fx.data().join("s001"), &single.path().join("s001"));
    let err = cmd_calibrate(single.path(), None, &cfg).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
}

#[test]
fn binary_exit_codes() {
    let fx = fixture();
    let bin = env!("CARGO_BIN_EXE_earlock");
    let probe = image(fx, "s001", "probe");
    let run = |claim: &str| {
        Command::new(bin)
            .args(["verify", "--probe"])
            .arg(&probe)
            .args(["--claim", claim, "--store"])
            .arg(fx.store())
            .env("EARLOCK_THREADS", "1")
            .output()
            .unwrap()
    };
    let accept = run("s001");
    assert_eq!(accept.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&accept.stdout).starts_with("accept"));
    assert_eq!(run("s002").status.code(), Some(1));
    assert_eq!(run("nobody").status.code(), Some(2));

    let out = Command::new(bin)
        .args(["identify", "--top", "2", "--rule", "ds", "--probe"])
        .arg(&probe)
        .arg("--store")
        .arg(fx.store())
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3, "{text}");
    assert!(lines[1].starts_with("1,s001,s001,ds,euclid,"), "{text}");
}
