//! Model files.
//!
//! ```text
//! magic     4 bytes  "RFDM"
//! version   u16      1
//! kind      u8       0 rfd | 1 euclidean | 2 mahalanobis
//! dim       u32
//! meta_len  u32, then meta_len bytes of UTF-8 (free-form, usually JSON)
//! scaler    u8       0 | 1; if 1: dim means then dim stds, f64 each
//! payload:
//!   rfd          position u8, then a forest blob (see forest::io)
//!   euclidean    nothing
//!   mahalanobis  weighting u8 (0 inverse, 1 covariance), dim*dim f64 row-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{CovarianceWeight, DistanceModel, MahalanobisModel, RfdModel};
use crate::dataset::Standardizer;
use crate::error::{Error, Result};
use crate::forest::Forest;

pub const MODEL_MAGIC: &[u8; 4] = b"RFDM";
pub const MODEL_VERSION: u16 = 1;

/// A distance model together with the input scaling it was trained under
/// and free-form metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub model: DistanceModel,
    pub scaler: Option<Standardizer>,
    pub metadata: String,
}

impl SavedModel {
    pub fn new(model: DistanceModel) -> Self {
        Self { model, scaler: None, metadata: String::new() }
    }

    /// Applies the stored scaling (if any) to a raw input point.
    pub fn prepare(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.model.dim() {
            return Err(Error::DimensionMismatch { expected: self.model.dim(), found: x.len() });
        }
        let mut v = x.to_vec();
        if let Some(s) = &self.scaler {
            s.transform_in_place(&mut v);
        }
        Ok(v)
    }

    /// Distance between two raw input points.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        self.model.distance(&self.prepare(a)?, &self.prepare(b)?)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let dim = self.model.dim();
        w.write_all(MODEL_MAGIC)?;
        w.write_u16::<LE>(MODEL_VERSION)?;
        w.write_u8(match self.model {
            DistanceModel::Rfd(_) => 0,
            DistanceModel::Euclidean { .. } => 1,
            DistanceModel::Mahalanobis(_) => 2,
        })?;
        w.write_u32::<LE>(dim as u32)?;
        w.write_u32::<LE>(self.metadata.len() as u32)?;
        w.write_all(self.metadata.as_bytes())?;
        match &self.scaler {
            None => w.write_u8(0)?,
            Some(s) => {
                if s.dim() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: s.dim() });
                }
                w.write_u8(1)?;
                for v in s.means().iter().chain(s.stds()) {
                    w.write_f64::<LE>(*v)?;
                }
            }
        }
        match &self.model {
            DistanceModel::Rfd(m) => {
                w.write_u8(u8::from(m.include_position()))?;
                m.forest().write_to(&mut w)?;
            }
            DistanceModel::Euclidean { .. } => {}
            DistanceModel::Mahalanobis(m) => {
                w.write_u8(match m.weighting() {
                    CovarianceWeight::Inverse => 0,
                    CovarianceWeight::Covariance => 1,
                })?;
                for v in m.weights() {
                    w.write_f64::<LE>(*v)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<SavedModel> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let version = r.read_u16::<LE>()?;
        if version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model version {version}")));
        }
        let kind = r.read_u8()?;
        let dim = r.read_u32::<LE>()? as usize;
        if dim == 0 {
            return Err(Error::Format("model dimension is 0".into()));
        }
        let meta_len = r.read_u32::<LE>()? as usize;
        let mut meta = Vec::new();
        r.by_ref().take(meta_len as u64).read_to_end(&mut meta)?;
        if meta.len() != meta_len {
            return Err(Error::Format("truncated metadata".into()));
        }
        let metadata = String::from_utf8(meta).map_err(|_| Error::Format("metadata is not UTF-8".into()))?;
        let scaler = match r.read_u8()? {
            0 => None,
            1 => {
                let mut read = || (0..dim).map(|_| r.read_f64::<LE>()).collect::<std::io::Result<Vec<f64>>>();
                let means = read()?;
                let stds = read()?;
                Some(Standardizer::from_parts(means, stds)?)
            }
            b => return Err(Error::Format(format!("bad scaler flag {b}"))),
        };
        let model = match kind {
            0 => {
                let pos = match r.read_u8()? {
                    0 => false,
                    1 => true,
                    b => return Err(Error::Format(format!("bad position flag {b}"))),
                };
                let rfd = RfdModel::new(Forest::read_from(&mut r)?, pos)?;
                if rfd.dim() != dim {
                    return Err(Error::Format(format!("forest dimension {} != header {dim}", rfd.dim())));
                }
                DistanceModel::Rfd(rfd)
            }
            1 => DistanceModel::Euclidean { dim },
            2 => {
                let weighting = match r.read_u8()? {
                    0 => CovarianceWeight::Inverse,
                    1 => CovarianceWeight::Covariance,
                    b => return Err(Error::Format(format!("bad weighting {b}"))),
                };
                let weights = (0..dim * dim).map(|_| r.read_f64::<LE>()).collect::<std::io::Result<Vec<f64>>>()?;
                DistanceModel::Mahalanobis(MahalanobisModel::new(weights, dim, weighting)?)
            }
            k => return Err(Error::Format(format!("unknown model kind {k}"))),
        };
        Ok(SavedModel { model, scaler, metadata })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<SavedModel> {
        let mut cursor = bytes;
        let saved = Self::read_from(&mut cursor)?;
        if !cursor.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", cursor.len())));
        }
        Ok(saved)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SavedModel> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}
