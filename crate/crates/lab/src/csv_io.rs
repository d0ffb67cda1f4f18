//! Dataset CSV: header `group_id,label,f0,...,f{d-1}`, one row per sample.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use nuce_core::data::GroupedDataset;
use nuce_core::DenseMatrix;

use crate::error::{LabError, Result};

fn expected_header(d: usize) -> Vec<String> {
    let mut h = vec!["group_id".to_string(), "label".to_string()];
    h.extend((0..d).map(|j| format!("f{j}")));
    h
}

/// Reads a grouped dataset. The class count is one more than the largest
/// label present.
pub fn load_csv(path: &Path) -> Result<GroupedDataset> {
    let file = File::open(path).map_err(|e| LabError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let parse_err = |line: usize, message: String| LabError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.iter().all(|h| h.is_empty()) {
        return Err(LabError::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    let d = header.len().saturating_sub(2);
    let want = expected_header(d.max(1));
    let missing: Vec<&str> = want
        .iter()
        .filter(|w| !header.contains(w))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(LabError::MissingColumns {
            path: path.to_path_buf(),
            columns: missing.join(","),
        });
    }
    if header != want {
        return Err(parse_err(
            1,
            format!("header must be exactly `{}`", want.join(",")),
        ));
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut groups = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        if record.len() != header.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        let group: u64 = record[0]
            .parse()
            .map_err(|_| parse_err(line, format!("group_id `{}` is not an integer", &record[0])))?;
        let label: usize = record[1]
            .parse()
            .map_err(|_| parse_err(line, format!("label `{}` is not a class index", &record[1])))?;
        for (j, field) in record.iter().skip(2).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("f{j} `{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("f{j} is not finite ({field})")));
            }
            features.push(v);
        }
        groups.push(group);
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(LabError::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let matrix = DenseMatrix::new(labels.len(), d, features)?;
    Ok(GroupedDataset::new(matrix, labels, groups, classes)?)
}

/// Writes `data` in the format read by [`load_csv`].
pub fn write_csv(data: &GroupedDataset, path: &Path) -> Result<()> {
    let mut out = expected_header(data.dim()).join(",");
    out.push('\n');
    for i in 0..data.len() {
        out.push_str(&format!("{},{}", data.groups()[i], data.labels()[i]));
        for v in data.features().row(i) {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| LabError::io(parent, e))?;
    }
    let mut f = File::create(path).map_err(|e| LabError::io(path, e))?;
    f.write_all(bytes).map_err(|e| LabError::io(path, e))
}
