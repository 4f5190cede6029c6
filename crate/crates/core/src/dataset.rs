//! On-disk dataset layout: `root/{subject}/{ref|probe}/{image}` with an
//! optional `{stem}.mask.png` next to each image.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::UNIX_EPOCH;

use crate::error::{Error, Result};
use crate::imaging::{load_image, load_mask, Mask};
use crate::pipeline::EarImage;

pub const REF_DIR: &str = "ref";
pub const PROBE_DIR: &str = "probe";
const MASK_SUFFIX: &str = ".mask.png";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubjectEntry {
    pub subject_id: String,
    pub references: Vec<PathBuf>,
    pub probes: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub root: PathBuf,
    /// Sorted by subject id.
    pub subjects: Vec<SubjectEntry>,
}

fn is_image(path: &Path) -> bool {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    if name.ends_with(MASK_SUFFIX) {
        return false;
    }
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "ppm")
    )
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && is_image(&path) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

impl Dataset {
    pub fn scan(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        let mut subjects = Vec::new();
        for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
            let path = entry.map_err(|e| Error::io(root, e))?.path();
            if !path.is_dir() {
                continue;
            }
            let Some(id) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            let references = list_images(&path.join(REF_DIR))?;
            let probes = list_images(&path.join(PROBE_DIR))?;
            if references.is_empty() && probes.is_empty() {
                continue;
            }
            subjects.push(SubjectEntry {
                subject_id: id.to_string(),
                references,
                probes,
            });
        }
        subjects.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
        Ok(Dataset {
            root: root.to_path_buf(),
            subjects,
        })
    }

    /// The single reference image of every subject that has one.
    pub fn references(&self) -> Result<Vec<(&str, &Path)>> {
        let mut out = Vec::new();
        for s in &self.subjects {
            match s.references.as_slice() {
                [] => {}
                [one] => out.push((s.subject_id.as_str(), one.as_path())),
                many => {
                    return Err(Error::Protocol(format!(
                        "subject {} has {} reference images; exactly one is enrolled",
                        s.subject_id,
                        many.len()
                    )))
                }
            }
        }
        Ok(out)
    }

    pub fn probes(&self) -> Vec<(&str, &Path)> {
        self.subjects
            .iter()
            .flat_map(|s| s.probes.iter().map(move |p| (s.subject_id.as_str(), p.as_path())))
            .collect()
    }

    pub fn subject_ids(&self) -> BTreeSet<&str> {
        self.subjects.iter().map(|s| s.subject_id.as_str()).collect()
    }
}

pub fn mask_path(image: &Path) -> PathBuf {
    let stem = image.file_stem().and_then(|s| s.to_str()).unwrap_or("");
    image.with_file_name(format!("{stem}{MASK_SUFFIX}"))
}

/// Subject implied by the layout (`.../{subject}/{ref|probe}/file`), else
/// the file stem.
pub fn infer_subject(image: &Path) -> String {
    let parent = image.parent();
    let in_split = parent
        .and_then(|p| p.file_name())
        .and_then(|n| n.to_str())
        .is_some_and(|n| n == REF_DIR || n == PROBE_DIR);
    let from_layout = if in_split {
        parent
            .and_then(Path::parent)
            .and_then(|p| p.file_name())
            .and_then(|n| n.to_str())
    } else {
        None
    };
    from_layout
        .or_else(|| image.file_stem().and_then(|s| s.to_str()))
        .unwrap_or("probe")
        .to_string()
}

/// Loads an image and its mask. `created_at` is the file's modification
/// time in seconds so that repeated runs on the same files agree.
pub fn load_ear(path: &Path, subject_id: &str) -> Result<EarImage> {
    let image = load_image(path)?;
    let mpath = mask_path(path);
    let mask = if mpath.is_file() {
        let m = load_mask(&mpath)?;
        if (m.width(), m.height()) != (image.width(), image.height()) {
            return Err(Error::dims(
                format!("{}x{}", image.width(), image.height()),
                format!("{}x{}", m.width(), m.height()),
            ));
        }
        m
    } else {
        Mask::full(image.width(), image.height())
    };
    let created_at = fs::metadata(path)
        .and_then(|m| m.modified())
        .ok()
        .and_then(|t| t.duration_since(UNIX_EPOCH).ok())
        .map_or(0, |d| d.as_secs());
    Ok(EarImage {
        subject_id: subject_id.to_string(),
        instance: path.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string(),
        created_at,
        image,
        mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(path: &Path) {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, b"").unwrap();
    }

    #[test]
    fn scan_layout() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        touch(&root.join("b/ref/b1.png"));
        touch(&root.join("b/ref/b1.mask.png"));
        touch(&root.join("b/probe/b2.ppm"));
        touch(&root.join("a/ref/a1.png"));
        touch(&root.join("a/ref/notes.txt"));
        fs::create_dir_all(root.join("empty")).unwrap();
        let ds = Dataset::scan(root).unwrap();
        let ids: Vec<&str> = ds.subjects.iter().map(|s| s.subject_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(ds.references().unwrap().len(), 2);
        assert_eq!(ds.probes(), [("b", root.join("b/probe/b2.ppm").as_path())]);

        touch(&root.join("a/ref/a2.png"));
        let ds = Dataset::scan(root).unwrap();
        assert!(matches!(ds.references(), Err(Error::Protocol(_))));
    }

    #[test]
    fn subject_inference_and_masks() {
        assert_eq!(infer_subject(Path::new("/d/s001/probe/x.png")), "s001");
        assert_eq!(infer_subject(Path::new("/tmp/x.png")), "x");
        assert_eq!(mask_path(Path::new("/d/x.png")), Path::new("/d/x.mask.png"));
    }
}
