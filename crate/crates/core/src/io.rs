//! On-disk formats: flat binary field containers, CSV tables and JSON
//! sidecars.
//!
//! Field container layout (little endian):
//!
//! ```text
//! magic    8 bytes  "BKFLD01\0"
//! count    u32      number of records
//! record:
//!   name_len u32, name bytes (UTF-8)
//!   kind     u8   0 = scalar, 1 = flux
//!   ndim     u8
//!   dims     u64 * ndim
//!   spacing  f64
//!   boundary u8   0 = periodic, 1 = neumann
//!   payload  f64 * cells (scalar) or f64 * ndim * cells (flux,
//!            component arrays concatenated), row major
//! ```

use crate::grid::{Boundary, FluxField, GridDomain, ScalarField};
use crate::real::Real;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 8] = b"BKFLD01\0";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o failure on {path}: {source}")]
    File {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("not a field container (bad magic)")]
    BadMagic,
    #[error("malformed field container: {0}")]
    Malformed(&'static str),
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
}

fn file_err(path: &Path) -> impl FnOnce(io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.display().to_string(),
        source,
    }
}

/// A named field going into or coming out of a container.
#[derive(Debug, Clone)]
pub enum FieldRecord<T> {
    Scalar(String, ScalarField<T>),
    Flux(String, FluxField<T>),
}

impl<T: Real> FieldRecord<T> {
    pub fn name(&self) -> &str {
        match self {
            FieldRecord::Scalar(n, _) => n,
            FieldRecord::Flux(n, _) => n,
        }
    }

    pub fn scalar(&self) -> Option<&ScalarField<T>> {
        match self {
            FieldRecord::Scalar(_, f) => Some(f),
            _ => None,
        }
    }

    pub fn flux(&self) -> Option<&FluxField<T>> {
        match self {
            FieldRecord::Flux(_, f) => Some(f),
            _ => None,
        }
    }
}

fn push_domain<T: Real>(buf: &mut Vec<u8>, domain: &GridDomain<T>) {
    buf.push(domain.ndim() as u8);
    for &d in domain.dims() {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    buf.extend_from_slice(&domain.spacing().as_f64().to_le_bytes());
    buf.push(match domain.boundary() {
        Boundary::Periodic => 0,
        Boundary::Neumann => 1,
    });
}

/// Serialize records into one buffer; writing is all-or-nothing so a
/// failing path never leaves a partial container behind.
pub fn encode_fields<T: Real>(records: &[FieldRecord<T>]) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for rec in records {
        let name = rec.name().as_bytes();
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name);
        match rec {
            FieldRecord::Scalar(_, f) => {
                buf.push(0);
                push_domain(&mut buf, f.domain());
                for v in f.values() {
                    buf.extend_from_slice(&v.as_f64().to_le_bytes());
                }
            }
            FieldRecord::Flux(_, f) => {
                buf.push(1);
                push_domain(&mut buf, f.domain());
                for s in 0..f.domain().ndim() {
                    for v in f.component(s) {
                        buf.extend_from_slice(&v.as_f64().to_le_bytes());
                    }
                }
            }
        }
    }
    buf
}

pub fn write_fields<T: Real>(path: &Path, records: &[FieldRecord<T>]) -> Result<(), IoError> {
    fs::write(path, encode_fields(records)).map_err(file_err(path))
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        if self.pos + n > self.data.len() {
            return Err(IoError::Malformed("unexpected end of data"));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, IoError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, IoError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, IoError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_fields<T: Real>(data: &[u8]) -> Result<Vec<FieldRecord<T>>, IoError> {
    let mut cur = Cursor { data, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err(IoError::BadMagic);
    }
    let count = cur.u32()? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = cur.u32()? as usize;
        let name = String::from_utf8(cur.take(name_len)?.to_vec())
            .map_err(|_| IoError::Malformed("record name is not UTF-8"))?;
        let kind = cur.u8()?;
        let ndim = cur.u8()? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(cur.u64()? as usize);
        }
        let spacing = cur.f64()?;
        let boundary = match cur.u8()? {
            0 => Boundary::Periodic,
            1 => Boundary::Neumann,
            _ => return Err(IoError::Malformed("unknown boundary tag")),
        };
        let domain = GridDomain::<T>::new(&dims, T::of(spacing), boundary)?;
        let cells = domain.num_cells();
        match kind {
            0 => {
                let mut vals = Vec::with_capacity(cells);
                for _ in 0..cells {
                    vals.push(T::of(cur.f64()?));
                }
                out.push(FieldRecord::Scalar(
                    name,
                    ScalarField::from_values(&domain, vals)?,
                ));
            }
            1 => {
                let mut flux = FluxField::zeros(&domain);
                for s in 0..ndim {
                    for i in 0..cells {
                        flux.component_mut(s)[i] = T::of(cur.f64()?);
                    }
                }
                out.push(FieldRecord::Flux(name, flux));
            }
            _ => return Err(IoError::Malformed("unknown record kind")),
        }
    }
    Ok(out)
}

pub fn read_fields<T: Real>(path: &Path) -> Result<Vec<FieldRecord<T>>, IoError> {
    let mut data = Vec::new();
    fs::File::open(path)
        .map_err(file_err(path))?
        .read_to_end(&mut data)
        .map_err(file_err(path))?;
    decode_fields(&data)
}

/// Write a small CSV table: header line plus preformatted rows. The whole
/// table is buffered first so I/O failures cannot leave partial files.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<(), IoError> {
    let mut buf = String::with_capacity(header.len() + rows.iter().map(|r| r.len() + 1).sum::<usize>() + 1);
    buf.push_str(header);
    buf.push('\n');
    for row in rows {
        buf.push_str(row);
        buf.push('\n');
    }
    fs::write(path, buf).map_err(file_err(path))
}

/// Write a serializable report as pretty JSON.
pub fn write_json<S: serde::Serialize>(path: &Path, value: &S) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| IoError::File {
            path: path.display().to_string(),
            source: io::Error::new(io::ErrorKind::InvalidData, e),
        })?;
    let mut f = fs::File::create(path).map_err(file_err(path))?;
    f.write_all(text.as_bytes()).map_err(file_err(path))?;
    f.write_all(b"\n").map_err(file_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_magic() {
        assert!(matches!(
            decode_fields::<f64>(b"NOTMAGIC\0\0\0\0"),
            Err(IoError::BadMagic)
        ));
    }

    #[test]
    fn write_to_missing_directory_fails_without_partial_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing").join("fields.bin");
        let domain = GridDomain::<f64>::unit_square(16, Boundary::Periodic).unwrap();
        let rec = vec![FieldRecord::Scalar("u".into(), ScalarField::zeros(&domain))];
        assert!(write_fields(&path, &rec).is_err());
        assert!(!path.exists());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn container_round_trips(seed in 0u64..1000, neumann in proptest::bool::ANY) {
            use rand::{Rng, SeedableRng};
            let boundary = if neumann { Boundary::Neumann } else { Boundary::Periodic };
            let domain = GridDomain::<f64>::new(&[16, 20], 0.05, boundary).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let scalar = ScalarField::from_values(
                &domain,
                (0..domain.num_cells()).map(|_| rng.gen_range(-5.0..5.0)).collect(),
            ).unwrap();
            let mut flux = FluxField::zeros(&domain);
            for s in 0..2 {
                for v in flux.component_mut(s) {
                    *v = rng.gen_range(-5.0..5.0);
                }
            }
            flux.enforce_boundary_pin();
            let recs = vec![
                FieldRecord::Scalar("u".into(), scalar.clone()),
                FieldRecord::Flux("sigma".into(), flux.clone()),
            ];
            let decoded = decode_fields::<f64>(&encode_fields(&recs)).unwrap();
            prop_assert_eq!(decoded.len(), 2);
            prop_assert_eq!(decoded[0].scalar().unwrap().values(), scalar.values());
            for s in 0..2 {
                prop_assert_eq!(decoded[1].flux().unwrap().component(s), flux.component(s));
            }
        }
    }
}
