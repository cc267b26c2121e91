//! Binary parameter checkpoints.
//!
//! Little-endian throughout:
//!
//! ```text
//! magic        4 bytes  "PEPK"
//! version      u32      1
//! config       5 x u32  d, heads, num_classes, head_hidden, knn_k
//! attr count   u32
//!   per attr   u32 name length, name bytes (UTF-8), u8 kind (0 continuous,
//!              1 categorical), u32 cardinality (0 for continuous)
//! tensor count u32
//!   per tensor u32 name length, name bytes, u32 rank, rank x u32 dims,
//!              product(dims) x f64 payload
//! ```

use std::path::Path;

use crate::cloud::{AttrDesc, AttrKind, AttributeSchema};
use crate::error::{Error, Result};
use crate::grad::Tensor;

use super::config::EncoderConfig;
use super::model::SegmentationModel;
use super::params::EncoderParams;

pub const MAGIC: &[u8; 4] = b"PEPK";
pub const VERSION: u32 = 1;

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len() as u32);
    buf.extend_from_slice(s.as_bytes());
}

pub fn encode_checkpoint(model: &SegmentationModel) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, VERSION);
    let c = model.config();
    for v in [c.d, c.heads, c.num_classes, c.head_hidden, c.knn_k] {
        put_u32(&mut buf, v as u32);
    }
    put_u32(&mut buf, model.schema().len() as u32);
    for a in model.schema().attrs() {
        put_str(&mut buf, &a.name);
        match a.kind {
            AttrKind::Continuous => {
                buf.push(0);
                put_u32(&mut buf, 0);
            }
            AttrKind::Categorical { cardinality } => {
                buf.push(1);
                put_u32(&mut buf, cardinality as u32);
            }
        }
    }
    let names = EncoderParams::names(model.schema(), c);
    let tensors = model.params().tensors();
    put_u32(&mut buf, tensors.len() as u32);
    for (name, t) in names.iter().zip(tensors) {
        put_str(&mut buf, name);
        put_u32(&mut buf, t.rank() as u32);
        for &d in t.dims() {
            put_u32(&mut buf, d as u32);
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::parse(
                "checkpoint",
                format!("truncated while reading {what} at byte {}", self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)? as usize;
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec())
            .map_err(|_| Error::parse("checkpoint", format!("{what} is not UTF-8")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<SegmentationModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::parse("checkpoint", "bad magic (expected PEPK)"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::parse(
            "checkpoint",
            format!("unsupported version {version}"),
        ));
    }
    let mut cfg = [0usize; 5];
    for v in cfg.iter_mut() {
        *v = r.u32("config")? as usize;
    }
    let config = EncoderConfig {
        d: cfg[0],
        heads: cfg[1],
        num_classes: cfg[2],
        head_hidden: cfg[3],
        knn_k: cfg[4],
    };
    let n_attrs = r.u32("attribute count")? as usize;
    let mut attrs = Vec::with_capacity(n_attrs);
    for _ in 0..n_attrs {
        let name = r.string("attribute name")?;
        let kind = r.take(1, "attribute kind")?[0];
        let card = r.u32("cardinality")? as usize;
        attrs.push(match kind {
            0 => AttrDesc::continuous(name, ""),
            1 => AttrDesc::categorical(name, card),
            k => {
                return Err(Error::parse(
                    "checkpoint",
                    format!("unknown attribute kind {k}"),
                ))
            }
        });
    }
    let schema = AttributeSchema::new(attrs)?;
    let expected = EncoderParams::names(&schema, &config);
    let n_tensors = r.u32("tensor count")? as usize;
    if n_tensors != expected.len() {
        return Err(Error::parse(
            "checkpoint",
            format!("expected {} tensors, found {n_tensors}", expected.len()),
        ));
    }
    let mut tensors = Vec::with_capacity(n_tensors);
    for want in &expected {
        let name = r.string("tensor name")?;
        if &name != want {
            return Err(Error::parse(
                "checkpoint",
                format!("expected tensor `{want}`, found `{name}`"),
            ));
        }
        let rank = r.u32("rank")? as usize;
        if rank > crate::grad::MAX_RANK {
            return Err(Error::parse(
                "checkpoint",
                format!("tensor `{name}` rank {rank}"),
            ));
        }
        let dims = (0..rank)
            .map(|_| r.u32("dims").map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let count: usize = dims.iter().product();
        let data = (0..count)
            .map(|_| r.f64("payload"))
            .collect::<Result<Vec<_>>>()?;
        tensors.push(Tensor::new(dims, data)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::parse(
            "checkpoint",
            format!("{} trailing bytes", bytes.len() - r.pos),
        ));
    }
    let params = EncoderParams::from_tensors(&schema, &config, tensors)?;
    SegmentationModel::from_parts(schema, config, params)
}

pub fn save_checkpoint(model: &SegmentationModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<SegmentationModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::AttributeSchema;

    fn model() -> SegmentationModel {
        let schema = AttributeSchema::lidar()
            .with(AttrDesc::categorical("sem", 4))
            .unwrap();
        SegmentationModel::new(schema, EncoderConfig::default(), 5).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let bytes = encode_checkpoint(&m);
        assert_eq!(&bytes[..4], b"PEPK");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back.params(), m.params());
        assert_eq!(back.config(), m.config());
        assert_eq!(encode_checkpoint(&back), bytes);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let bytes = encode_checkpoint(&model());
        assert!(decode_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint(&bad).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
        let mut v2 = bytes;
        v2[4] = 2;
        assert!(decode_checkpoint(&v2).is_err());
    }
}
