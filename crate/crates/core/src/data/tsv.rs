use std::path::Path;

use super::{DataError, Dataset};

/// One parsed file: original labels and rows of values.
struct Table {
    labels: Vec<i64>,
    rows: Vec<Vec<f32>>,
}

fn parse_label(tok: &str) -> Option<i64> {
    if let Ok(v) = tok.parse::<i64>() {
        return Some(v);
    }
    let f: f64 = tok.parse().ok()?;
    (f.is_finite() && f.fract() == 0.0 && f.abs() < 9e15).then_some(f as i64)
}

fn parse_table(text: &str, file: &str) -> Result<Table, DataError> {
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<f32>> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| DataError::Parse {
            file: file.to_string(),
            line: ln + 1,
            msg,
        };
        let mut toks = line.split(['\t', ' ', ',']).filter(|t| !t.is_empty());
        let lt = toks.next().ok_or_else(|| err("missing label".into()))?;
        let label = parse_label(lt).ok_or_else(|| err(format!("label {lt:?} is not an integer")))?;
        let values = toks
            .map(|t| t.parse::<f32>().map_err(|_| err(format!("value {t:?} is not a number"))))
            .collect::<Result<Vec<f32>, _>>()?;
        if values.is_empty() {
            return Err(err("row has no values".into()));
        }
        if let Some(first) = rows.first() {
            if first.len() != values.len() {
                return Err(err(format!("row has {} values, expected {}", values.len(), first.len())));
            }
        }
        labels.push(label);
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(DataError::Empty(file.to_string()));
    }
    Ok(Table { labels, rows })
}

fn assemble(name: &str, tables: Vec<Table>) -> Result<Dataset, DataError> {
    let labels = &tables[0].labels;
    let n = labels.len();
    let len = tables[0].rows[0].len();
    for (c, t) in tables.iter().enumerate().skip(1) {
        if t.labels.len() != n {
            return Err(DataError::Shape(format!("channel {c} has {} rows, expected {n}", t.labels.len())));
        }
        if t.rows[0].len() != len {
            return Err(DataError::Shape(format!("channel {c} has length {}, expected {len}", t.rows[0].len())));
        }
        if let Some(i) = (0..n).find(|&i| t.labels[i] != labels[i]) {
            return Err(DataError::Shape(format!("channel {c} row {} has label {}, channel 0 has {}", i + 1, t.labels[i], labels[i])));
        }
    }
    let mut values: Vec<i64> = labels.clone();
    values.sort_unstable();
    values.dedup();
    let index = |v: i64| values.binary_search(&v).expect("label present");
    let channels = tables.len();
    let mut samples = Vec::with_capacity(n * channels * len);
    for i in 0..n {
        for t in &tables {
            samples.extend_from_slice(&t.rows[i]);
        }
    }
    let ds = Dataset {
        name: name.to_string(),
        channels,
        len,
        samples,
        labels: labels.iter().map(|&v| index(v)).collect(),
        classes: values.len(),
        class_values: values,
    };
    ds.validate()?;
    Ok(ds)
}

/// Parses label-first rows (tab, space or comma separated) into a
/// one-channel dataset. Labels may be written as integral floats.
pub fn parse_tsv(text: &str, name: &str) -> Result<Dataset, DataError> {
    assemble(name, vec![parse_table(text, name)?])
}

fn read(path: &Path) -> Result<String, DataError> {
    std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Loads a univariate dataset; labels are remapped to `0..k` in ascending
/// order of their original values.
pub fn load_tsv(path: &Path) -> Result<Dataset, DataError> {
    let text = read(path)?;
    assemble(&stem(path), vec![parse_table(&text, &path.display().to_string())?])
}

/// Loads a multivariate dataset stored as one file per channel with aligned
/// rows and identical labels.
pub fn load_tsv_channels(paths: &[&Path]) -> Result<Dataset, DataError> {
    if paths.is_empty() {
        return Err(DataError::Invalid("no channel files given".into()));
    }
    let tables = paths
        .iter()
        .map(|p| parse_table(&read(p)?, &p.display().to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    assemble(&stem(paths[0]), tables)
}
