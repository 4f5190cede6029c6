//! Enrolled reference templates and their on-disk store.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fusion::{FeatureSet, FeatureSource, MassFunction};
use crate::gmm::{parse_gmm_header, Gmm};
use crate::segmentation::BoundingBox;
use crate::sift::{SiftFeature, DESCRIPTOR_LEN};

const MAGIC: &str = "EARTPL v1";

#[derive(Debug, Clone, PartialEq)]
pub struct SliceSummary {
    pub component_index: usize,
    pub pixel_count: usize,
    pub bounding_box: BoundingBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub subject_id: String,
    /// Source image stem.
    pub instance: String,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    pub width: usize,
    pub height: usize,
    pub gmm: Gmm,
    pub slices: Vec<SliceSummary>,
    /// One set per entry of `slices`.
    pub per_slice_features: Vec<FeatureSet>,
    pub concat_features: FeatureSet,
    /// Whole-image features for the no-segmentation baseline.
    pub whole_features: FeatureSet,
    /// Fused representative; `None` when the slices could not be combined.
    pub fused: Option<MassFunction>,
}

fn write_feature(out: &mut String, f: &SiftFeature) {
    write!(out, "{} {} {} {} {} {}", f.octave, f.layer, f.x, f.y, f.scale, f.orientation).unwrap();
    for d in &f.descriptor {
        write!(out, " {d}").unwrap();
    }
    out.push('\n');
}

fn write_features(out: &mut String, header: &str, set: &FeatureSet) {
    writeln!(out, "{header} {}", set.len()).unwrap();
    for f in &set.features {
        write_feature(out, f);
    }
}

impl Template {
    pub fn validate(&self) -> Result<()> {
        if self.subject_id.is_empty() || self.subject_id.chars().any(char::is_whitespace) {
            return Err(Error::InvalidConfig(format!("bad subject id {:?}", self.subject_id)));
        }
        if self.instance.chars().any(char::is_whitespace) {
            return Err(Error::InvalidConfig(format!("bad instance name {:?}", self.instance)));
        }
        if self.slices.len() != self.per_slice_features.len() {
            return Err(Error::dims(self.slices.len(), self.per_slice_features.len()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{MAGIC}").unwrap();
        writeln!(out, "subject {}", self.subject_id).unwrap();
        writeln!(out, "instance {}", self.instance).unwrap();
        writeln!(out, "created_at {}", self.created_at).unwrap();
        writeln!(out, "image {} {}", self.width, self.height).unwrap();
        out.push_str(&self.gmm.to_text());
        writeln!(out, "slices {}", self.slices.len()).unwrap();
        for (s, set) in self.slices.iter().zip(&self.per_slice_features) {
            let b = s.bounding_box;
            let header = format!(
                "slice {} pixels {} bbox {} {} {} {} features",
                s.component_index, s.pixel_count, b.x0, b.y0, b.x1, b.y1
            );
            write_features(&mut out, &header, set);
        }
        write_features(&mut out, "concat", &self.concat_features);
        write_features(&mut out, "whole", &self.whole_features);
        match &self.fused {
            None => out.push_str("fused none\n"),
            Some(m) => {
                writeln!(out, "fused {}", m.frame_size()).unwrap();
                let line: Vec<String> = m.masses().iter().map(|v| v.to_string()).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut r = Reader {
            lines: text.lines().collect(),
            pos: 0,
        };
        if r.next()? != MAGIC {
            return Err(Error::parse("template", "missing EARTPL v1 header"));
        }
        let subject_id = r.keyed("subject")?.to_string();
        let instance = r.keyed("instance")?.to_string();
        let created_at = parse_num(r.keyed("created_at")?, "created_at")?;
        let dims: Vec<usize> = parse_all(r.keyed("image")?, "image")?;
        if dims.len() != 2 {
            return Err(Error::parse("template", "image needs width and height"));
        }
        let gmm_header = r.next()?;
        let (_, k) = parse_gmm_header(gmm_header)?;
        let mut gmm_text = format!("{gmm_header}\n");
        for _ in 0..k {
            gmm_text.push_str(r.next()?);
            gmm_text.push('\n');
        }
        let gmm = Gmm::from_text(&gmm_text)?;

        let n_slices: usize = parse_num(r.keyed("slices")?, "slices")?;
        let mut slices = Vec::with_capacity(n_slices);
        let mut per_slice = Vec::with_capacity(n_slices);
        for _ in 0..n_slices {
            let fields: Vec<&str> = r.next()?.split_whitespace().collect();
            let ok = fields.len() == 11
                && fields[0] == "slice"
                && fields[2] == "pixels"
                && fields[4] == "bbox"
                && fields[9] == "features";
            if !ok {
                return Err(Error::parse("template", format!("bad slice header {fields:?}")));
            }
            let num = |i: usize| parse_num::<usize>(fields[i], "slice header");
            let component_index = num(1)?;
            slices.push(SliceSummary {
                component_index,
                pixel_count: num(3)?,
                bounding_box: BoundingBox {
                    x0: num(5)?,
                    y0: num(6)?,
                    x1: num(7)?,
                    y1: num(8)?,
                },
            });
            per_slice.push(r.features(num(10)?, FeatureSource::Slice(component_index))?);
        }
        let n = parse_num(r.keyed("concat")?, "concat")?;
        let concat_features = r.features(n, FeatureSource::Augmented)?;
        let n = parse_num(r.keyed("whole")?, "whole")?;
        let whole_features = r.features(n, FeatureSource::Whole)?;
        let fused_header = r.keyed("fused")?;
        let fused = if fused_header == "none" {
            None
        } else {
            let len: usize = parse_num(fused_header, "fused")?;
            let values: Vec<f64> = parse_all(r.next()?, "fused values")?;
            if values.len() != len {
                return Err(Error::parse("template", format!("fused has {} values, want {len}", values.len())));
            }
            Some(MassFunction::new(values)?)
        };
        if r.next()? != "end" {
            return Err(Error::parse("template", "missing end marker"));
        }
        let t = Template {
            subject_id,
            instance,
            created_at,
            width: dims[0],
            height: dims[1],
            gmm,
            slices,
            per_slice_features: per_slice,
            concat_features,
            whole_features,
            fused,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, context: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.trim().parse().map_err(|e: T::Err| Error::parse(context, format!("{s:?}: {e}")))
}

fn parse_all<T: std::str::FromStr>(s: &str, context: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split_whitespace().map(|t| parse_num(t, context)).collect()
}

struct Reader<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn next(&mut self) -> Result<&'a str> {
        let line = self
            .lines
            .get(self.pos)
            .ok_or_else(|| Error::parse("template", "unexpected end of file"))?;
        self.pos += 1;
        Ok(line)
    }

    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next()?;
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .ok_or_else(|| Error::parse("template", format!("expected {key:?}, found {line:?}")))
    }

    fn features(&mut self, n: usize, source: FeatureSource) -> Result<FeatureSet> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let line = self.next()?;
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 6 + DESCRIPTOR_LEN {
                return Err(Error::parse("template feature", format!("{} fields", t.len())));
            }
            out.push(SiftFeature {
                octave: parse_num(t[0], "octave")?,
                layer: parse_num(t[1], "layer")?,
                x: parse_num(t[2], "x")?,
                y: parse_num(t[3], "y")?,
                scale: parse_num(t[4], "scale")?,
                orientation: parse_num(t[5], "orientation")?,
                descriptor: t[6..].iter().map(|v| parse_num(v, "descriptor")).collect::<Result<_>>()?,
            });
        }
        FeatureSet::new(out, source)
    }
}

/// Directory of templates, one per subject, with a tab-separated index.
#[derive(Debug)]
pub struct TemplateStore {
    root: PathBuf,
    index: BTreeMap<String, String>,
}

pub const INDEX_FILE: &str = "index.tsv";

impl TemplateStore {
    pub fn create(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        let store = Self {
            root,
            index: BTreeMap::new(),
        };
        store.write_index()?;
        Ok(store)
    }

    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let path = root.join(INDEX_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut index = BTreeMap::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (id, file) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse("template index", format!("bad line {line:?}")))?;
            if !root.join(file).is_file() {
                return Err(Error::parse("template index", format!("{file} is missing")));
            }
            if index.insert(id.to_string(), file.to_string()).is_some() {
                return Err(Error::Protocol(format!("subject {id} indexed twice")));
            }
        }
        Ok(Self { root, index })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn subjects(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }

    pub fn contains(&self, subject: &str) -> bool {
        self.index.contains_key(subject)
    }

    fn write_index(&self) -> Result<()> {
        let mut text = String::new();
        for (id, file) in &self.index {
            writeln!(text, "{id}\t{file}").unwrap();
        }
        let path = self.root.join(INDEX_FILE);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    /// Adds or replaces the template for `template.subject_id`.
    pub fn put(&mut self, template: &Template) -> Result<()> {
        template.validate()?;
        let file = format!("{}.eartpl", template.subject_id);
        template.save(self.root.join(&file))?;
        self.index.insert(template.subject_id.clone(), file);
        self.write_index()
    }

    pub fn get(&self, subject: &str) -> Result<Template> {
        let file = self
            .index
            .get(subject)
            .ok_or_else(|| Error::UnknownSubject(subject.to_string()))?;
        Template::load(self.root.join(file))
    }

    /// Every template, in subject order.
    pub fn load_all(&self) -> Result<Vec<Template>> {
        self.index.keys().map(|id| self.get(id)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::Gaussian;

    fn feature(x: f32) -> SiftFeature {
        SiftFeature {
            x,
            y: 1.0 / 3.0,
            scale: 2.5,
            orientation: 0.1,
            descriptor: (0..128).map(|i| (i as f32 + 0.5) / 1000.0).collect(),
            octave: 1,
            layer: 2,
        }
    }

    pub(crate) fn sample_template() -> Template {
        let gmm = Gmm::from_unnormalized(vec![
            (1.0, Gaussian::isotropic(vec![10.0, 20.0, 30.0], 2.0).unwrap()),
            (3.0, Gaussian::isotropic(vec![200.0, 20.0, 30.0], 5.0).unwrap()),
        ])
        .unwrap();
        let s0 = FeatureSet::new(vec![feature(1.25), feature(7.1)], FeatureSource::Slice(0)).unwrap();
        let s1 = FeatureSet::new(vec![], FeatureSource::Slice(1)).unwrap();
        Template {
            subject_id: "s01".into(),
            instance: "ref".into(),
            created_at: 1_700_000_000,
            width: 40,
            height: 50,
            gmm,
            slices: vec![
                SliceSummary {
                    component_index: 0,
                    pixel_count: 100,
                    bounding_box: BoundingBox { x0: 1, y0: 2, x1: 20, y1: 30 },
                },
                SliceSummary {
                    component_index: 1,
                    pixel_count: 70,
                    bounding_box: BoundingBox { x0: 0, y0: 0, x1: 9, y1: 9 },
                },
            ],
            per_slice_features: vec![s0.clone(), s1],
            concat_features: FeatureSet::new(s0.features.clone(), FeatureSource::Augmented).unwrap(),
            whole_features: FeatureSet::new(vec![feature(3.0)], FeatureSource::Whole).unwrap(),
            fused: Some(MassFunction::new(vec![0.1, 0.2, 0.7]).unwrap()),
        }
    }

    #[test]
    fn text_roundtrip_is_exact() {
        let t = sample_template();
        let text = t.to_text();
        assert!(text.starts_with("EARTPL v1\n"));
        assert_eq!(Template::from_text(&text).unwrap(), t);
        let mut none = t.clone();
        none.fused = None;
        assert_eq!(Template::from_text(&none.to_text()).unwrap(), none);
    }

    #[test]
    fn truncated_text_fails() {
        let text = sample_template().to_text();
        let cut = &text[..text.len() / 2];
        assert!(Template::from_text(cut).is_err());
        assert!(Template::from_text("EARTPL v2\n").is_err());
    }

    #[test]
    fn store_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = TemplateStore::create(dir.path()).unwrap();
        store.put(&sample_template()).unwrap();
        let reopened = TemplateStore::open(dir.path()).unwrap();
        assert_eq!(reopened.len(), 1);
        assert_eq!(reopened.get("s01").unwrap(), sample_template());
        assert!(matches!(reopened.get("nobody"), Err(Error::UnknownSubject(_))));
    }
}
