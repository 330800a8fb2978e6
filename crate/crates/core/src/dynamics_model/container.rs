//! Ensemble checkpoint container shared by the dynamics and labeler
//! ensembles: version byte, 4-byte tag, dimensions, normalizer vectors, a
//! temperature, then length-prefixed member parameter blobs.

use super::Normalizer;
use crate::error::{Error, Result};
use crate::numerics::ParamNet;

pub const CONTAINER_VERSION: u8 = 1;
pub const TAG_DYNAMICS: [u8; 4] = *b"DYN\0";
pub const TAG_LABELER: [u8; 4] = *b"PNN\0";

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleBlob {
    pub tag: [u8; 4],
    pub state_dim: usize,
    pub action_dim: usize,
    pub normalizer: Normalizer,
    pub alpha: f64,
    pub members: Vec<ParamNet>,
}

fn put_vec(out: &mut Vec<u8>, v: &[f64]) {
    out.extend_from_slice(&(v.len() as u32).to_le_bytes());
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    cursor: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.cursor..self.cursor + n)
            .ok_or_else(|| Error::Parse("truncated ensemble checkpoint".into()))?;
        self.cursor += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn vec(&mut self) -> Result<Vec<f64>> {
        let n = self.u32()?;
        (0..n).map(|_| self.f64()).collect()
    }
}

impl EnsembleBlob {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![CONTAINER_VERSION];
        out.extend_from_slice(&self.tag);
        out.extend_from_slice(&(self.state_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.action_dim as u32).to_le_bytes());
        let n = &self.normalizer;
        for v in [&n.in_mean, &n.in_std, &n.out_mean, &n.out_std] {
            put_vec(&mut out, v);
        }
        out.extend_from_slice(&self.alpha.to_le_bytes());
        out.extend_from_slice(&(self.members.len() as u32).to_le_bytes());
        for m in &self.members {
            let blob = m.to_bytes();
            out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
            out.extend_from_slice(&blob);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], expected_tag: [u8; 4]) -> Result<Self> {
        let mut r = Reader { bytes, cursor: 0 };
        let version = r.take(1)?[0];
        if version != CONTAINER_VERSION {
            return Err(Error::Parse(format!(
                "unsupported ensemble checkpoint version {version}"
            )));
        }
        let tag: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
        if tag != expected_tag {
            return Err(Error::Parse(format!(
                "ensemble checkpoint tag {:?} does not match expected {:?}",
                String::from_utf8_lossy(&tag),
                String::from_utf8_lossy(&expected_tag)
            )));
        }
        let state_dim = r.u32()?;
        let action_dim = r.u32()?;
        let normalizer = Normalizer {
            in_mean: r.vec()?,
            in_std: r.vec()?,
            out_mean: r.vec()?,
            out_std: r.vec()?,
        };
        let alpha = r.f64()?;
        let n = r.u32()?;
        let mut members = Vec::with_capacity(n);
        for _ in 0..n {
            let len = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")) as usize;
            let (net, used) = ParamNet::from_bytes(r.take(len)?)?;
            if used != len {
                return Err(Error::Parse("member blob length mismatch".into()));
            }
            members.push(net);
        }
        Ok(Self {
            tag,
            state_dim,
            action_dim,
            normalizer,
            alpha,
            members,
        })
    }
}
