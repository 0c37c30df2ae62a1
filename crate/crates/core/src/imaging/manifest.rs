//! Dataset manifest: labeled image paths with subject identity and an
//! optional 3-fold assignment.
//!
//! File format: one `path,subject_id[,fold]` record per line, no header,
//! UTF-8, `#`-prefixed comment lines ignored. `fold` may be omitted to defer
//! the split to [`crate::evaluation::assign_folds`].

use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest {path} line {line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("manifest {path} line {line}: {reason}")]
    InvalidLabel {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("cannot read manifest {path}: {reason}")]
    Unreadable { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: String,
    pub subject_id: usize,
    pub fold: Option<u8>,
}

/// Non-empty list of labeled images. `num_subjects` is `max(subject_id) + 1`;
/// every fold present is in `{0, 1, 2}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
    num_subjects: usize,
}

impl DatasetManifest {
    /// # Panics
    /// On an empty entry list or an out-of-range fold.
    pub fn new(entries: Vec<ManifestEntry>) -> Self {
        assert!(!entries.is_empty(), "manifest must be non-empty");
        assert!(
            entries.iter().all(|e| e.fold.is_none_or(|f| f < 3)),
            "fold out of range"
        );
        let num_subjects = entries.iter().map(|e| e.subject_id).max().unwrap() + 1;
        Self {
            entries,
            num_subjects,
        }
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn num_subjects(&self) -> usize {
        self.num_subjects
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// True when every entry carries a fold assignment.
    pub fn folds_assigned(&self) -> bool {
        self.entries.iter().all(|e| e.fold.is_some())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            match e.fold {
                Some(f) => out.push_str(&format!("{},{},{}\n", e.path, e.subject_id, f)),
                None => out.push_str(&format!("{},{}\n", e.path, e.subject_id)),
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), ManifestError> {
        std::fs::write(path, self.to_csv()).map_err(|e| ManifestError::Unreadable {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|e| ManifestError::Unreadable {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_manifest(&text, &path.display().to_string())
}

pub fn parse_manifest(text: &str, origin: &str) -> Result<DatasetManifest, ManifestError> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(ManifestError::Parse {
                path: origin.into(),
                line: line_no,
                reason: format!("expected `path,subject_id[,fold]`, got {} fields", fields.len()),
            });
        }
        if fields[0].is_empty() {
            return Err(ManifestError::Parse {
                path: origin.into(),
                line: line_no,
                reason: "empty image path".into(),
            });
        }
        let subject_id: usize = fields[1].parse().map_err(|_| ManifestError::Parse {
            path: origin.into(),
            line: line_no,
            reason: format!("bad subject id {:?}", fields[1]),
        })?;
        let fold = match fields.get(2) {
            None => None,
            Some(s) => {
                let f: u8 = s.parse().map_err(|_| ManifestError::Parse {
                    path: origin.into(),
                    line: line_no,
                    reason: format!("bad fold {s:?}"),
                })?;
                if f > 2 {
                    return Err(ManifestError::InvalidLabel {
                        path: origin.into(),
                        line: line_no,
                        reason: format!("fold {f} not in {{0,1,2}}"),
                    });
                }
                Some(f)
            }
        };
        entries.push(ManifestEntry {
            path: fields[0].to_string(),
            subject_id,
            fold,
        });
    }
    if entries.is_empty() {
        return Err(ManifestError::Parse {
            path: origin.into(),
            line: 0,
            reason: "manifest must contain at least one entry".into(),
        });
    }
    Ok(DatasetManifest::new(entries))
}
