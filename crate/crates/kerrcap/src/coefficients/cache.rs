//! Plain-text tensor cache.
//!
//! One file per tensor: a `#`-prefixed JSON header line, then CSV rows
//! `s1,s2,s3,s4,re,im` in row-major index order.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::tensor4::{index_tuples, SymmetryClass, Tensor4, TensorKind, TensorMeta};
use crate::error::{Error, Result};

/// Environment variable that overrides the default cache directory.
pub const CACHE_DIR_ENV: &str = "KERRCAP_CACHE_DIR";

const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    schema: u32,
    m: usize,
    symmetry: SymmetryClass,
    meta: TensorMeta,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    s1: i64,
    s2: i64,
    s3: i64,
    s4: i64,
    re: f64,
    im: f64,
}

/// Cache directory from the environment, falling back to `./kerrcap-cache`.
pub fn cache_dir() -> PathBuf {
    std::env::var_os(CACHE_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("kerrcap-cache"))
}

/// File name addressed by kind, order, dispersion, envelope and build tag.
pub fn file_name(kind: TensorKind, m: usize, beta: f64, envelope: &str, build_tag: &str) -> String {
    let env: String = envelope
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '-' })
        .collect();
    format!("{kind}_M{m}_beta{beta:.6}_{env}_{build_tag}.csv")
}

pub fn write_tensor(path: &Path, t: &Tensor4) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut out = BufWriter::new(File::create(path)?);
    let header = Header {
        schema: SCHEMA_VERSION,
        m: t.order(),
        symmetry: t.symmetry(),
        meta: t.meta.clone(),
    };
    writeln!(out, "# {}", serde_json::to_string(&header)?)?;
    {
        let mut w = csv::Writer::from_writer(&mut out);
        for (s, v) in index_tuples(t.order()).zip(t.values()) {
            w.serialize(Row {
                s1: s[0],
                s2: s[1],
                s3: s[2],
                s4: s[3],
                re: v.re,
                im: v.im,
            })?;
        }
        w.flush()?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<Tensor4> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let json = first
        .strip_prefix('#')
        .ok_or_else(|| Error::CacheMismatch(format!("{} has no header line", path.display())))?;
    let header: Header = serde_json::from_str(json.trim())?;
    if header.schema != SCHEMA_VERSION {
        return Err(Error::CacheMismatch(format!("unsupported schema {}", header.schema)));
    }
    let mut values = Vec::new();
    let mut expected = index_tuples(header.m);
    for row in csv::Reader::from_reader(reader).deserialize() {
        let row: Row = row?;
        let want = expected
            .next()
            .ok_or_else(|| Error::CacheMismatch("too many rows".into()))?;
        if want != [row.s1, row.s2, row.s3, row.s4] {
            return Err(Error::CacheMismatch(format!(
                "row {:?} out of order, expected {want:?}",
                [row.s1, row.s2, row.s3, row.s4]
            )));
        }
        values.push(Complex64::new(row.re, row.im));
    }
    if expected.next().is_some() {
        return Err(Error::CacheMismatch("truncated tensor file".into()));
    }
    let t = Tensor4::from_values(header.m, header.meta, values)?;
    if t.symmetry() != header.symmetry {
        return Err(Error::CacheMismatch("symmetry class disagrees with kind".into()));
    }
    Ok(t)
}

/// Reads the tensor if the file exists and matches, otherwise builds and stores it.
pub fn load_or_build<F>(path: &Path, kind: TensorKind, m: usize, build: F) -> Result<Tensor4>
where
    F: FnOnce() -> Result<Tensor4>,
{
    if path.exists() {
        let t = read_tensor(path)?;
        if t.meta.kind != kind || t.order() != m {
            return Err(Error::CacheMismatch(format!(
                "{} holds {} at M={}, wanted {kind} at M={m}",
                path.display(),
                t.meta.kind,
                t.order()
            )));
        }
        return Ok(t);
    }
    let t = build()?;
    write_tensor(path, &t)?;
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let meta = TensorMeta {
            kind: TensorKind::B2,
            beta: 1.25,
            envelope: "sinc".into(),
            method: "test".into(),
            tolerance: 1e-9,
        };
        let t = Tensor4::from_fn(1, meta, |a, b, c, d| Complex64::new(a as f64 / 3.0, (b * c - d) as f64 * 0.1));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(file_name(TensorKind::B2, 1, 1.25, "gauss:0.125", "full"));
        write_tensor(&p, &t).unwrap();
        let back = read_tensor(&p).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn rejects_headerless_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        fs::write(&p, "s1,s2,s3,s4,re,im\n").unwrap();
        assert!(matches!(read_tensor(&p), Err(Error::CacheMismatch(_))));
    }
}
