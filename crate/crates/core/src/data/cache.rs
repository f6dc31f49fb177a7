use std::path::Path;

use super::{DataError, Dataset};
use crate::records::{find, read_records, write_records, Record, RecordError};

fn io(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `ds` in the record format: `samples [n, C, L]`, `labels [n]` and
/// `class_values [k]`.
pub fn write_cache(ds: &Dataset, path: &Path) -> Result<(), DataError> {
    let n = ds.n();
    let recs = [
        Record::new("samples", &[n, ds.channels, ds.len], ds.samples.clone()),
        Record::new("labels", &[n], ds.labels.iter().map(|&y| y as f32).collect()),
        Record::new("class_values", &[ds.classes], ds.class_values.iter().map(|&v| v as f32).collect()),
    ];
    let f = std::fs::File::create(path).map_err(|e| io(path, e))?;
    write_records(std::io::BufWriter::new(f), &recs)?;
    Ok(())
}

pub fn read_cache(path: &Path) -> Result<Dataset, DataError> {
    let f = std::fs::File::open(path).map_err(|e| io(path, e))?;
    let recs = read_records(std::io::BufReader::new(f))?;
    let samples = find(&recs, "samples")?;
    let labels = find(&recs, "labels")?;
    let values = find(&recs, "class_values")?;
    let bad = |msg: &str| DataError::Records(RecordError::Invalid {
        name: path.display().to_string(),
        msg: msg.into(),
    });
    let [n, channels, len] = samples.shape[..] else {
        return Err(bad("samples must have rank 3"));
    };
    if labels.data.len() != n {
        return Err(bad("label count differs from sample count"));
    }
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ds = Dataset {
        name,
        channels,
        len,
        samples: samples.data.clone(),
        labels: labels.data.iter().map(|&v| v as usize).collect(),
        classes: values.data.len(),
        class_values: values.data.iter().map(|&v| v as i64).collect(),
    };
    ds.validate()?;
    Ok(ds)
}
