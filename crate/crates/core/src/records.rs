//! Binary record framing shared by model checkpoints and dataset caches.
//!
//! Layout: the magic bytes `SREA`, a little-endian `u16` format version, then
//! records until end of input. Each record is a `u16` name length, the UTF-8
//! name, a `u8` rank, one `u32` per extent and the little-endian `f32`
//! payload.

use std::io::{self, Read, Write};

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"SREA";
pub const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("not a record file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported format version {0}")]
    Version(u16),
    #[error("truncated record {0:?}")]
    Truncated(String),
    #[error("record name is not valid UTF-8")]
    Utf8,
    #[error("record {name:?}: {msg}")]
    Invalid { name: String, msg: String },
    #[error("missing record {0:?}")]
    Missing(String),
}

/// A named `f32` array.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Record {
    pub fn new(name: impl Into<String>, shape: &[usize], data: Vec<f32>) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            data,
        }
    }
}

pub fn write_records<W: Write>(mut w: W, records: &[Record]) -> Result<(), RecordError> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for r in records {
        let invalid = |msg: &str| RecordError::Invalid {
            name: r.name.clone(),
            msg: msg.into(),
        };
        let name = r.name.as_bytes();
        let name_len = u16::try_from(name.len()).map_err(|_| invalid("name too long"))?;
        let rank = u8::try_from(r.shape.len()).map_err(|_| invalid("rank too large"))?;
        if r.shape.iter().product::<usize>() != r.data.len() {
            return Err(invalid("shape does not match payload length"));
        }
        w.write_all(&name_len.to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&[rank])?;
        for &e in &r.shape {
            let e = u32::try_from(e).map_err(|_| invalid("extent exceeds u32"))?;
            w.write_all(&e.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(r.data.len() * 4);
        for v in &r.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<(), RecordError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => RecordError::Truncated(what.to_string()),
        _ => RecordError::Io(e),
    })
}

pub fn read_records<R: Read>(mut r: R) -> Result<Vec<Record>, RecordError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| RecordError::BadMagic)?;
    if &magic != MAGIC {
        return Err(RecordError::BadMagic);
    }
    let mut v = [0u8; 2];
    read_exact_or(&mut r, &mut v, "header")?;
    let version = u16::from_le_bytes(v);
    if version != VERSION {
        return Err(RecordError::Version(version));
    }
    let mut out = Vec::new();
    loop {
        let mut len = [0u8; 2];
        // A clean end of input between records terminates the file.
        match r.read(&mut len[..1])? {
            0 => break,
            _ => read_exact_or(&mut r, &mut len[1..], "name length")?,
        }
        let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
        read_exact_or(&mut r, &mut name, "name")?;
        let name = String::from_utf8(name).map_err(|_| RecordError::Utf8)?;
        let mut rank = [0u8; 1];
        read_exact_or(&mut r, &mut rank, &name)?;
        let mut shape = Vec::with_capacity(rank[0] as usize);
        for _ in 0..rank[0] {
            let mut e = [0u8; 4];
            read_exact_or(&mut r, &mut e, &name)?;
            shape.push(u32::from_le_bytes(e) as usize);
        }
        let count: usize = shape.iter().product();
        let mut payload = vec![0u8; count * 4];
        read_exact_or(&mut r, &mut payload, &name)?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push(Record { name, shape, data });
    }
    Ok(out)
}

/// Looks up a record by name.
pub fn find<'a>(records: &'a [Record], name: &str) -> Result<&'a Record, RecordError> {
    records
        .iter()
        .find(|r| r.name == name)
        .ok_or_else(|| RecordError::Missing(name.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let recs = vec![
            Record::new("a", &[2, 3], vec![1.0, -0.0, f32::MIN_POSITIVE, 3.5e-39, f32::MAX, -7.25]),
            Record::new("scalar", &[], vec![std::f32::consts::PI]),
            Record::new("empty", &[0], vec![]),
        ];
        let mut buf = Vec::new();
        write_records(&mut buf, &recs).unwrap();
        let back = read_records(&buf[..]).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in recs.iter().zip(&back) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.shape, b.shape);
            let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.data), bits(&b.data));
        }
    }

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        write_records(&mut buf, &[Record::new("w", &[1], vec![1.0])]).unwrap();
        assert_eq!(&buf[..4], b"SREA");
        assert_eq!(&buf[4..6], &[1, 0]);
        assert_eq!(&buf[6..8], &[1, 0]);
        assert_eq!(buf[8], b'w');
        assert_eq!(buf[9], 1);
        assert_eq!(&buf[10..14], &[1, 0, 0, 0]);
        assert_eq!(&buf[14..], &1.0f32.to_le_bytes());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(read_records(&b"NOPE\x01\x00"[..]), Err(RecordError::BadMagic)));
        assert!(matches!(read_records(&b"SREA\x09\x00"[..]), Err(RecordError::Version(9))));
        let mut buf = Vec::new();
        write_records(&mut buf, &[Record::new("w", &[4], vec![1.0; 4])]).unwrap();
        buf.truncate(buf.len() - 2);
        assert!(matches!(read_records(&buf[..]), Err(RecordError::Truncated(_))));
    }
}
