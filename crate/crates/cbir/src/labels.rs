//! `path,category_name` label files.

use std::path::{Path, PathBuf};

use cbir_core::Category;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("cannot read labels file {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("labels file line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("labels file line {line}: unknown category {name:?}")]
    UnknownCategory { line: u64, name: String },
    #[error("labels file {0} lists no images")]
    MissingLabels(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelEntry {
    /// Resolved against the labels file's directory when relative.
    pub path: PathBuf,
    pub category: Category,
}

impl LabelEntry {
    /// File name used to match images across directories.
    pub fn file_name(&self) -> String {
        file_name_of(&self.path)
    }
}

pub fn file_name_of(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Reads a labels file; relative paths resolve against `base`, or the
/// labels file's own directory when `base` is `None`.
pub fn read_labels(path: &Path, base: Option<&Path>) -> Result<Vec<LabelEntry>, LabelError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| LabelError::Io { path: path.to_path_buf(), source })?;
    let base = base.unwrap_or_else(|| path.parent().unwrap_or(Path::new(".")));
    let entries = parse_labels(&text, base)?;
    if entries.is_empty() {
        return Err(LabelError::MissingLabels(path.to_path_buf()));
    }
    Ok(entries)
}

/// Parses label rows. A first row whose second column is not a category
/// name is taken as a header and skipped; blank lines and `#` comments are
/// ignored.
pub fn parse_labels(text: &str, base: &Path) -> Result<Vec<LabelEntry>, LabelError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line_of = |row: &csv::StringRecord| row.position().map_or(i as u64 + 1, |p| p.line());
        let row = row.map_err(|e| LabelError::Malformed { line: i as u64 + 1, message: e.to_string() })?;
        let line = line_of(&row);
        if row.len() == 1 && row[0].is_empty() {
            continue;
        }
        if row.len() != 2 {
            return Err(LabelError::Malformed { line, message: format!("expected 2 columns, found {}", row.len()) });
        }
        let name = &row[1];
        let Some(category) = Category::from_name(name) else {
            if i == 0 {
                continue;
            }
            return Err(LabelError::UnknownCategory { line, name: name.to_string() });
        };
        let p = Path::new(&row[0]);
        let path = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        out.push(LabelEntry { path, category });
    }
    Ok(out)
}
