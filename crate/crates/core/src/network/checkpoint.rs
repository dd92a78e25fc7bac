//! Binary checkpoint (`D2CM`), little-endian.
//!
//! Layout: magic, version `u32`, `p c H code_size` as `u32`, phase `u8`,
//! `α η σ θ` as `f64`, transform scale and translation as four `f64`, a
//! `u32`-prefixed JSON copy of the full hyperparameters, then the nine
//! parameter blocks as raw `f32` arrays in the order
//! `z, W1, b1, W2, b2, T_C, T_R, W_C, W_R`.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::hyper::{HyperParams, Phase};
use super::model::{FittedModel, ParamSet};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::geometry::NormalizationTransform;

const MAGIC: &[u8; 4] = b"D2CM";
const VERSION: u32 = 1;

impl FittedModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.hyper;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for v in [h.p, h.c, h.hidden, h.code_size] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.push(self.phase.index());
        for v in [h.alpha, h.eta, h.sigma, h.theta] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let t = &self.transform;
        for v in [t.scale, t.translation[0], t.translation[1], t.translation[2]] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let json = serde_json::to_vec(h).expect("hyperparameters serialise");
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for block in self.params.blocks() {
            for v in block.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("missing D2CM magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let dims = [r.u32()?, r.u32()?, r.u32()?, r.u32()?].map(|v| v as usize);
        let phase = Phase::from_index(r.take(1)?[0]).ok_or_else(|| Error::Checkpoint("unknown phase".into()))?;
        let consts = [r.f64()?, r.f64()?, r.f64()?, r.f64()?];
        let transform = NormalizationTransform {
            scale: r.f64()?,
            translation: [r.f64()?, r.f64()?, r.f64()?],
        };
        let json_len = r.u32()? as usize;
        let hyper: HyperParams = serde_json::from_slice(r.take(json_len)?)?;
        if [hyper.p, hyper.c, hyper.hidden, hyper.code_size] != dims
            || [hyper.alpha, hyper.eta, hyper.sigma, hyper.theta] != consts
        {
            return Err(Error::Checkpoint("header disagrees with stored hyperparameters".into()));
        }
        hyper.validate()?;
        let mut blocks = Vec::new();
        for [rows, cols] in ParamSet::<f32>::shapes(&hyper) {
            let raw = r.take(rows * cols * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            blocks.push(Tensor::new(rows, cols, data)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes after parameter blocks".into()));
        }
        Ok(Self {
            hyper,
            phase,
            params: ParamSet::from_blocks(blocks),
            transform,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::UnreadableFile {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let hyper = HyperParams {
            p: 8,
            c: 2,
            code_size: 16,
            hidden: 8,
            seed: 5,
            ..Default::default()
        };
        let transform = NormalizationTransform {
            scale: 0.25,
            translation: [0.1, -0.2, 0.3],
        };
        let model = FittedModel::new(hyper, transform).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.d2cm");
        model.save(&path).unwrap();
        assert_eq!(FittedModel::load(&path).unwrap(), model);
    }

    #[test]
    fn truncated_is_rejected() {
        let model = FittedModel::new(
            HyperParams {
                p: 4,
                c: 2,
                code_size: 4,
                hidden: 4,
                ..Default::default()
            },
            NormalizationTransform::identity(),
        )
        .unwrap();
        let bytes = model.to_bytes();
        assert!(FittedModel::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(FittedModel::from_bytes(b"nope").is_err());
    }
}
