//! Binary checkpoint layout (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes  "SQSMODEL"
//! version    u32      1
//! vocab      u32
//! hidden     u32
//! mixture    u32
//! cell       u8       0 vanilla, 1 gru
//! head       u8       0 none, 1 classes, 2 regression
//! head_dim   u32      classes or mixture components (0 without a head)
//! n_params   u64
//! meta_len   u64, followed by that many bytes of JSON:
//!            {"standardizer": {...}, "user": <caller metadata>}
//! params     n_params × f64, blocks in layout order
//! has_adam   u8; when 1: adam step u64, first moments n_params × f64,
//!            second moments n_params × f64
//! ```

use serde_json::{json, Value};

use crate::error::{Error, Result};

use super::{Adam, CellKind, HeadKind, ModelDims, SeqModel, Standardizer};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SQSMODEL";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: SeqModel,
    /// Optimizer moments and step count for resuming.
    pub adam: Option<(u64, Vec<f64>, Vec<f64>)>,
    pub metadata: Value,
}

pub fn encode_checkpoint(model: &SeqModel, adam: Option<&Adam>, metadata: &Value) -> Result<Vec<u8>> {
    let d = &model.dims;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for x in [d.vocab, d.hidden, d.mixture] {
        out.extend_from_slice(&(x as u32).to_le_bytes());
    }
    out.push(match d.cell {
        CellKind::Vanilla => 0,
        CellKind::Gru => 1,
    });
    let (tag, dim) = match d.head {
        HeadKind::None => (0u8, 0u32),
        HeadKind::Classes(c) => (1, c),
        HeadKind::Regression(m) => (2, m),
    };
    out.push(tag);
    out.extend_from_slice(&dim.to_le_bytes());
    out.extend_from_slice(&(model.params.len() as u64).to_le_bytes());
    let meta = serde_json::to_vec(&json!({ "standardizer": model.standardizer, "user": metadata }))?;
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);
    let put = |out: &mut Vec<u8>, xs: &[f64]| xs.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
    put(&mut out, &model.params);
    match adam {
        Some(a) => {
            out.push(1);
            out.extend_from_slice(&a.t.to_le_bytes());
            put(&mut out, &a.m);
            put(&mut out, &a.v);
        }
        None => out.push(0),
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("bad length".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn decode_checkpoint(buf: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let vocab = r.u32()? as usize;
    let hidden = r.u32()? as usize;
    let mixture = r.u32()? as usize;
    let cell = match r.u8()? {
        0 => CellKind::Vanilla,
        1 => CellKind::Gru,
        c => return Err(Error::Format(format!("unknown cell kind {c}"))),
    };
    let (tag, dim) = (r.u8()?, r.u32()?);
    let head = match tag {
        0 => HeadKind::None,
        1 => HeadKind::Classes(dim),
        2 => HeadKind::Regression(dim),
        h => return Err(Error::Format(format!("unknown head kind {h}"))),
    };
    let n = r.u64()? as usize;
    let meta_len = r.u64()? as usize;
    let mut meta: Value = serde_json::from_slice(r.take(meta_len)?)?;
    let standardizer: Standardizer = serde_json::from_value(meta["standardizer"].take())?;
    let dims = ModelDims { vocab, hidden, mixture, cell, head };
    let model = SeqModel::zeros(dims, standardizer).map_err(|e| Error::Format(e.to_string()))?;
    if model.layout.total != n {
        return Err(Error::Format(format!("parameter count {n} does not match dimensions")));
    }
    let model = model.with_params(r.f64s(n)?).map_err(|e| Error::Format(e.to_string()))?;
    let adam = match r.u8()? {
        0 => None,
        1 => {
            let t = r.u64()?;
            Some((t, r.f64s(n)?, r.f64s(n)?))
        }
        f => return Err(Error::Format(format!("bad optimizer flag {f}"))),
    };
    if r.pos != buf.len() {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    Ok(Checkpoint { model, adam, metadata: meta["user"].take() })
}
