//! `MLPS` parameter files.
//!
//! Layout (little-endian): magic `MLPS`, `u32` version (1), `u32` layer
//! count, then per layer `u32` rows, `u32` cols, `rows*cols` f32 weights
//! row-major, `rows` f32 biases; finally a `u64` configuration fingerprint.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::write_atomic;

use super::features::FeatureSpec;
use super::nn::{Activation, Network};

const MAGIC: &[u8; 4] = b"MLPS";
const VERSION: u32 = 1;

/// Fingerprint of everything a parameter file must agree with at load time.
pub fn scorer_fingerprint(spec: &FeatureSpec, activation: Activation) -> u64 {
    let mut h = Sha256::new();
    h.update(b"scorer\0");
    h.update(spec.variant.name().as_bytes());
    h.update((spec.input_dim() as u64).to_le_bytes());
    h.update((spec.dde.rounds as u64).to_le_bytes());
    h.update(activation.name().as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// One dense layer as `(rows, cols, weights row-major, biases)`.
pub type RawLayer = (usize, usize, Vec<f64>, Vec<f64>);

pub fn layers_to_bytes(layers: &[RawLayer], fingerprint: u64) -> Vec<u8> {
    let total: usize = layers.iter().map(|(_, _, w, b)| w.len() + b.len()).sum();
    let mut out = Vec::with_capacity(20 + 8 * layers.len() + total * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for (rows, cols, w, b) in layers {
        out.extend_from_slice(&(*rows as u32).to_le_bytes());
        out.extend_from_slice(&(*cols as u32).to_le_bytes());
        for &x in w.iter().chain(b) {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    out.extend_from_slice(&fingerprint.to_le_bytes());
    out
}

fn raw_layers(net: &Network) -> Vec<RawLayer> {
    net.shapes()
        .iter()
        .enumerate()
        .map(|(l, &(rows, cols))| {
            let (w, b) = net.layer(l);
            (rows, cols, w.to_vec(), b.to_vec())
        })
        .collect()
}

pub fn params_to_bytes(net: &Network, fingerprint: u64) -> Vec<u8> {
    layers_to_bytes(&raw_layers(net), fingerprint)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format(format!("params truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Format("layer too large".into()))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}

/// Parses a parameter file into raw layers and the stored fingerprint.
pub fn layers_from_bytes(bytes: &[u8]) -> Result<(Vec<RawLayer>, u64)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad magic, expected MLPS".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported params version {version}")));
    }
    let count = r.u32()? as usize;
    if count == 0 {
        return Err(Error::Format("params file has no layers".into()));
    }
    let mut layers = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let w = r.f32s(rows.saturating_mul(cols))?;
        let b = r.f32s(rows)?;
        layers.push((rows, cols, w, b));
    }
    let fp = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    if layers.iter().any(|(_, _, w, b)| w.iter().chain(b).any(|x| !x.is_finite())) {
        return Err(Error::Format("params contain non-finite values".into()));
    }
    Ok((layers, fp))
}

/// Parses a parameter file and returns the network and its stored fingerprint.
pub fn params_from_bytes(bytes: &[u8], hidden: Activation, output: Activation) -> Result<(Network, u64)> {
    let (layers, fp) = layers_from_bytes(bytes)?;
    let net = Network::from_layers(layers, hidden, output).map_err(|e| Error::Format(e.to_string()))?;
    Ok((net, fp))
}

pub fn save_params(path: impl AsRef<Path>, net: &Network, fingerprint: u64) -> Result<()> {
    write_atomic(path.as_ref(), &params_to_bytes(net, fingerprint))
}

/// Loads parameters, refusing files built for a different configuration.
pub fn load_params(
    path: impl AsRef<Path>,
    expected_fingerprint: u64,
    hidden: Activation,
    output: Activation,
) -> Result<Network> {
    let (layers, _) = load_layers(path, expected_fingerprint)?;
    Network::from_layers(layers, hidden, output).map_err(|e| Error::Format(e.to_string()))
}

/// Raw layers of a parameter file whose fingerprint must match.
pub fn load_layers(path: impl AsRef<Path>, expected_fingerprint: u64) -> Result<(Vec<RawLayer>, u64)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (layers, fp) = layers_from_bytes(&bytes)?;
    if fp != expected_fingerprint {
        return Err(Error::FingerprintMismatch {
            artifact: path.display().to_string(),
            expected: expected_fingerprint,
            found: fp,
            rerun: "train".into(),
        });
    }
    Ok((layers, fp))
}
