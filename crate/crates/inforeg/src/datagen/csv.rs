//! CSV ingestion and emission for modality feature files.
//!
//! Format, one file per modality: a header row naming the feature columns
//! plus exactly one column named `label`; every following row holds decimal
//! reals for the features and a 0-based integer class label. Files of one
//! dataset must be row-aligned: same sample count, identical label column.
//! No quoting or escaping — fields are plain `,`-separated values.

use std::path::{Path, PathBuf};

use crate::datagen::{MultimodalDataset, Split};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// One parsed modality file, before cross-file alignment checks.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCsv {
    pub feature_names: Vec<String>,
    /// Row-major feature values, `rows.len() == labels.len() * feature_names.len()`.
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
}

impl ParsedCsv {
    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }
}

fn ingest(source: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Ingest { file: source.to_string(), line, msg: msg.into() }
}

/// Parse one modality file. `source` only labels error messages. Total over
/// arbitrary input: every malformed byte sequence maps to an `Ingest` error.
pub fn parse_modality_csv(text: &str, source: &str) -> Result<ParsedCsv> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| ingest(source, 1, "empty file"))?;
    let header = header.trim_end_matches('\r');
    if header.is_empty() {
        return Err(ingest(source, 1, "empty header row"));
    }
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.iter().any(|c| c.is_empty()) {
        return Err(ingest(source, 1, "empty column name in header"));
    }
    let label_positions: Vec<usize> = columns
        .iter()
        .enumerate()
        .filter(|(_, c)| **c == "label")
        .map(|(i, _)| i)
        .collect();
    let label_col = match label_positions.as_slice() {
        [i] => *i,
        [] => return Err(ingest(source, 1, "no `label` column in header")),
        _ => return Err(ingest(source, 1, "multiple `label` columns in header")),
    };
    let feature_names: Vec<String> = columns
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_col)
        .map(|(_, c)| c.to_string())
        .collect();
    if feature_names.is_empty() {
        return Err(ingest(source, 1, "no feature columns in header"));
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let row = raw.trim_end_matches('\r');
        if row.is_empty() {
            continue; // tolerate trailing blank lines
        }
        let fields: Vec<&str> = row.split(',').map(str::trim).collect();
        if fields.len() != columns.len() {
            return Err(ingest(
                source,
                line_no,
                format!("expected {} fields, found {}", columns.len(), fields.len()),
            ));
        }
        for (i, field) in fields.iter().enumerate() {
            if i == label_col {
                let y: usize = field
                    .parse()
                    .map_err(|_| ingest(source, line_no, format!("bad label `{field}`")))?;
                labels.push(y);
            } else {
                let v: f64 = field
                    .parse()
                    .map_err(|_| ingest(source, line_no, format!("non-numeric cell `{field}`")))?;
                if !v.is_finite() {
                    return Err(ingest(source, line_no, format!("non-finite cell `{field}`")));
                }
                features.push(v);
            }
        }
    }
    if labels.is_empty() {
        return Err(ingest(source, 2, "no data rows"));
    }
    Ok(ParsedCsv { feature_names, features, labels })
}

/// Load one dataset from row-aligned per-modality files. The class count is
/// the largest label plus one; label columns must agree across files.
pub fn load_csv(paths: &[PathBuf], split: Split) -> Result<MultimodalDataset> {
    if paths.is_empty() {
        return Err(Error::Input("no modality files given".into()));
    }
    let mut parsed = Vec::with_capacity(paths.len());
    for path in paths {
        let name = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Ingest {
            file: name.clone(),
            line: 0,
            msg: e.to_string(),
        })?;
        let csv = parse_modality_csv(&text, &name)?;
        parsed.push((name, csv));
    }
    let (first_name, first) = &parsed[0];
    let n = first.n_rows();
    for (name, p) in &parsed[1..] {
        if p.n_rows() != n {
            return Err(Error::Ingest {
                file: name.clone(),
                line: p.n_rows() + 1,
                msg: format!("{} rows, but {first_name} has {n}", p.n_rows()),
            });
        }
        if p.labels != first.labels {
            let at = p
                .labels
                .iter()
                .zip(&first.labels)
                .position(|(a, b)| a != b)
                .unwrap_or(0);
            return Err(Error::Ingest {
                file: name.clone(),
                line: at + 2,
                msg: format!("label disagrees with {first_name}"),
            });
        }
    }
    let classes = first.labels.iter().max().copied().unwrap_or(0) + 1;
    let modalities = parsed
        .iter()
        .map(|(_, p)| Tensor::matrix(n, p.n_features(), p.features.clone()))
        .collect::<Result<Vec<_>>>()?;
    MultimodalDataset::new(modalities, first.labels.clone(), classes.max(2), split)
}

/// Write one file per modality into `dir` as `modality_{m}.csv` with feature
/// columns `f0..f{d-1}` and the trailing `label` column. Floats are printed
/// with the shortest round-trip representation, so save → load is exact.
pub fn save_csv(ds: &MultimodalDataset, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::with_capacity(ds.n_modalities());
    for m in 0..ds.n_modalities() {
        let feats = ds.modality(m);
        let d = feats.cols();
        let mut text = String::new();
        for j in 0..d {
            text.push_str(&format!("f{j},"));
        }
        text.push_str("label\n");
        for i in 0..ds.len() {
            for &v in feats.row(i) {
                text.push_str(&format!("{v},"));
            }
            text.push_str(&format!("{}\n", ds.labels()[i]));
        }
        let path = dir.join(format!("modality_{m}.csv"));
        std::fs::write(&path, text)?;
        out.push(path);
    }
    Ok(out)
}
