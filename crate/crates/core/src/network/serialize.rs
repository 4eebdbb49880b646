//! Versioned binary model file.
//!
//! ```text
//! "CSEG"  u16 version
//! u32 coarse_output_factor
//! u32 n_factors, u32 factor × n_factors
//! u32 n_chains; per chain: u32 n_layers, layer record × n_layers
//! head: u32 out, u32 in, u32 kh, u32 kw
//! u8 refine input tag, u32 n_layers, layer record × n_layers
//! payload: f32 weights then biases per layer, in declaration order
//! u64 payload length in bytes
//! ```
//! A layer record is `u32 out, u32 in, u32 kh, u32 kw, f32 slope,
//! u8 has_activation`. Everything is little-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::tensor::KernelBank;

use super::config::RefineInput;
use super::{CascadeModel, Chain, ConvLayer, MultiScaleNet, RefineNet};

pub const MAGIC: &[u8; 4] = b"CSEG";
pub const FORMAT_VERSION: u16 = 1;

/// Upper bound on any count read from a header, to reject garbage before
/// allocating.
const MAX_COUNT: u32 = 1 << 20;

pub fn encode_model(model: &CascadeModel<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_u32(&mut out, model.coarse_output_factor);
    let p1 = &model.part1;
    put_u32(&mut out, p1.pyramid_factors.len());
    for &f in &p1.pyramid_factors {
        put_u32(&mut out, f);
    }
    put_u32(&mut out, p1.chains.len());
    for chain in &p1.chains {
        put_u32(&mut out, chain.layers.len());
        for layer in &chain.layers {
            put_layer(&mut out, layer);
        }
    }
    put_bank_dims(&mut out, &p1.head);
    out.push(model.part2.input.tag());
    put_u32(&mut out, model.part2.layers.len());
    for layer in &model.part2.layers {
        put_layer(&mut out, layer);
    }
    let start = out.len();
    for p in p1.params().into_iter().chain(model.part2.params()) {
        for v in p {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let payload = (out.len() - start) as u64;
    out.extend_from_slice(&payload.to_le_bytes());
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<CascadeModel<f32>> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::NotAModelFile);
    }
    let mut r = Reader { bytes, pos: MAGIC.len() };
    let version = u16::from_le_bytes(r.take::<2>()?);
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch { expected: FORMAT_VERSION, found: version });
    }
    let coarse_output_factor = r.count()? as usize;
    let n_factors = r.count()?;
    let factors = (0..n_factors).map(|_| r.count().map(|f| f as usize)).collect::<Result<Vec<_>>>()?;
    let n_chains = r.count()?;
    let mut chain_tables = Vec::new();
    for _ in 0..n_chains {
        let n = r.count()?;
        chain_tables.push((0..n).map(|_| r.layer()).collect::<Result<Vec<_>>>()?);
    }
    let head_dims = r.dims()?;
    let tag = r.take::<1>()?[0];
    let input = RefineInput::from_tag(tag).ok_or_else(|| Error::Integrity(format!("unknown refine input tag {tag}")))?;
    let n_refine = r.count()?;
    let refine_table = (0..n_refine).map(|_| r.layer()).collect::<Result<Vec<_>>>()?;

    let header_end = r.pos;
    if bytes.len() < header_end + 8 {
        return Err(Error::Truncated("missing payload length field".into()));
    }
    let actual = (bytes.len() - header_end - 8) as u64;
    let recorded = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().expect("8 bytes"));
    if recorded != actual {
        return Err(Error::Truncated(format!(
            "payload holds {actual} bytes but the length field records {recorded}"
        )));
    }
    let declared: u64 = chain_tables
        .iter()
        .flatten()
        .chain(&refine_table)
        .map(|l| l.dims.values())
        .chain(std::iter::once(head_dims.values()))
        .sum::<u64>()
        * 4;
    if declared != actual {
        return Err(Error::Integrity(format!(
            "declared layer shapes need {declared} payload bytes, file holds {actual}"
        )));
    }

    let mut payload = Payload { bytes: &bytes[header_end..bytes.len() - 8], pos: 0 };
    let mut chains = Vec::new();
    for table in &chain_tables {
        let layers = table.iter().map(|l| l.build(&mut payload)).collect::<Result<Vec<_>>>()?;
        chains.push(Chain::new(layers).map_err(integrity)?);
    }
    let head = head_dims.build(&mut payload)?;
    let refine_layers = refine_table.iter().map(|l| l.build(&mut payload)).collect::<Result<Vec<_>>>()?;
    let part1 = MultiScaleNet::new(chains, head, factors).map_err(integrity)?;
    let part2 = RefineNet::new(refine_layers, input).map_err(integrity)?;
    let model = CascadeModel::new(part1, part2).map_err(integrity)?;
    if model.coarse_output_factor != coarse_output_factor {
        return Err(Error::Integrity(format!(
            "coarse factor {coarse_output_factor} disagrees with pyramid {:?}",
            model.part1.pyramid_factors
        )));
    }
    Ok(model)
}

pub fn save_model(model: &CascadeModel<f32>, path: &Path) -> Result<()> {
    write_atomic(path, &encode_model(model))
}

pub fn load_model(path: &Path) -> Result<CascadeModel<f32>> {
    decode_model(&std::fs::read(path)?)
}

fn integrity(e: Error) -> Error {
    Error::Integrity(e.to_string())
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_bank_dims(out: &mut Vec<u8>, k: &KernelBank<f32>) {
    for v in [k.out_channels(), k.in_channels(), k.kernel_h(), k.kernel_w()] {
        put_u32(out, v);
    }
}

fn put_layer(out: &mut Vec<u8>, layer: &ConvLayer<f32>) {
    put_bank_dims(out, &layer.kernels);
    out.extend_from_slice(&layer.activation_slope.to_le_bytes());
    out.push(layer.has_activation as u8);
}

#[derive(Clone, Copy)]
struct BankDims {
    out: usize,
    inp: usize,
    kh: usize,
    kw: usize,
}

impl BankDims {
    fn values(&self) -> u64 {
        (self.out * self.inp * self.kh * self.kw + self.out) as u64
    }

    fn build(&self, payload: &mut Payload<'_>) -> Result<KernelBank<f32>> {
        let weights = payload.floats(self.out * self.inp * self.kh * self.kw);
        let bias = payload.floats(self.out);
        KernelBank::new(self.out, self.inp, self.kh, self.kw, weights, bias).map_err(integrity)
    }
}

struct LayerRecord {
    dims: BankDims,
    slope: f32,
    has_activation: bool,
}

impl LayerRecord {
    fn build(&self, payload: &mut Payload<'_>) -> Result<ConvLayer<f32>> {
        ConvLayer::new(self.dims.build(payload)?, self.slope, self.has_activation).map_err(integrity)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Truncated(format!("header ends at byte {}", self.bytes.len())))?;
        self.pos = end;
        Ok(slice.try_into().expect("slice of length N"))
    }

    fn count(&mut self) -> Result<u32> {
        let v = u32::from_le_bytes(self.take::<4>()?);
        if v > MAX_COUNT {
            return Err(Error::Integrity(format!("implausible count {v} at byte {}", self.pos - 4)));
        }
        Ok(v)
    }

    fn dims(&mut self) -> Result<BankDims> {
        Ok(BankDims {
            out: self.count()? as usize,
            inp: self.count()? as usize,
            kh: self.count()? as usize,
            kw: self.count()? as usize,
        })
    }

    fn layer(&mut self) -> Result<LayerRecord> {
        let dims = self.dims()?;
        let slope = f32::from_le_bytes(self.take::<4>()?);
        let has_activation = match self.take::<1>()?[0] {
            0 => false,
            1 => true,
            b => return Err(Error::Integrity(format!("bad activation flag {b}"))),
        };
        Ok(LayerRecord { dims, slope, has_activation })
    }
}

/// Payload cursor; the total length was validated against the header, so
/// reads cannot run past the end.
struct Payload<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Payload<'_> {
    fn floats(&mut self, n: usize) -> Vec<f32> {
        let end = self.pos + 4 * n;
        let v = self.bytes[self.pos..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        self.pos = end;
        v
    }
}
