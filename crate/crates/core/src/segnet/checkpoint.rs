//! Binary weight files: magic, architecture hash and JSON, then each layer's
//! weights and biases as little-endian `f32`.

use std::path::Path;

use super::network::Network;
use super::ops::ConvLayer;
use super::spec::NetworkSpec;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"CAMSEG01";

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, v: &[f32]) {
    put_u32(out, v.len());
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn to_bytes(net: &Network<f32>) -> Vec<u8> {
    let spec = serde_json::to_vec(net.spec()).expect("spec serializes");
    let mut out = Vec::with_capacity(64 + spec.len() + net.param_count() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&net.spec().hash());
    put_u32(&mut out, spec.len());
    out.extend_from_slice(&spec);
    put_u32(&mut out, net.layers().len());
    for l in net.layers() {
        put_f32s(&mut out, &l.weights);
        put_f32s(&mut out, &l.bias);
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f32s(&mut self, expected: usize, what: &str) -> Result<Vec<f32>> {
        let n = self.u32()?;
        if n != expected {
            return Err(Error::Checkpoint(format!("{what}: {n} values, architecture needs {expected}")));
        }
        Ok(self
            .take(n * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<Network<f32>> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("not a weight file (bad magic)".into()));
    }
    let hash: [u8; 32] = r.take(32)?.try_into().unwrap();
    let len = r.u32()?;
    let spec: NetworkSpec = serde_json::from_slice(r.take(len)?)
        .map_err(|e| Error::Checkpoint(format!("architecture record: {e}")))?;
    if spec.hash() != hash {
        return Err(Error::Checkpoint("architecture hash mismatch".into()));
    }
    let shapes = Network::<f32>::zeros(spec.clone())?;
    let count = r.u32()?;
    if count != shapes.layers().len() {
        return Err(Error::Checkpoint(format!(
            "{count} layers stored, architecture has {}",
            shapes.layers().len()
        )));
    }
    let mut layers = Vec::with_capacity(count);
    for (i, z) in shapes.layers().iter().enumerate() {
        let weights = r.f32s(z.weights.len(), &format!("layer {i} weights"))?;
        let bias = r.f32s(z.bias.len(), &format!("layer {i} biases"))?;
        layers.push(ConvLayer { weights, bias, ..z.clone() });
    }
    if r.pos != buf.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Network::from_layers(spec, layers)
}

pub fn save_checkpoint(path: &Path, net: &Network<f32>) -> Result<()> {
    std::fs::write(path, to_bytes(net)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Network<f32>> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let net = Network::<f32>::init(NetworkSpec::tiny(3), 5).unwrap();
        let back = from_bytes(&to_bytes(&net)).unwrap();
        assert_eq!(back.spec(), net.spec());
        assert_eq!(back.layers(), net.layers());
    }

    #[test]
    fn corruption_is_detected() {
        let net = Network::<f32>::init(NetworkSpec::tiny(2), 1).unwrap();
        let bytes = to_bytes(&net);
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(from_bytes(&bad).is_err());
        let mut bad = bytes;
        bad[10] ^= 1;
        assert!(matches!(from_bytes(&bad), Err(Error::Checkpoint(_))));
    }
}
