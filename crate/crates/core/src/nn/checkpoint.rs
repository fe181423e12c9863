//! Binary model checkpoint: little-endian, f32 payloads, trailing CRC32.
//!
//! ```text
//! "LVNN" | version u32 | layer count u32
//! per layer: rows u32 | cols u32 | activation u32 | weights f32[rows*cols] | bias f32[rows]
//! adam step u64, then the first- and second-moment blocks in the per-layer layout
//! crc32 of everything above
//! ```

use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Activation, AdamConfig, AdamState, DenseLayer, LayerGrad, Real, VaeModel};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LVNN";
const VERSION: u32 = 1;
const MAX_LAYER_VALUES: u64 = 1 << 28;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_block<T: Real>(out: &mut Vec<u8>, w: &Array2<T>, b: &Array1<T>, activation: Activation) {
    put_u32(out, w.nrows() as u32);
    put_u32(out, w.ncols() as u32);
    put_u32(out, activation.tag());
    for v in w.iter().chain(b.iter()) {
        out.extend_from_slice(&v.to_f32().unwrap().to_le_bytes());
    }
}

pub fn encode_checkpoint<T: Real>(model: &VaeModel<T>, adam: &AdamState<T>) -> Result<Vec<u8>> {
    if !adam.matches(model) {
        return Err(Error::dims("optimizer state shaped like the model", "mismatched state"));
    }
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, model.layers().len() as u32);
    for l in model.layers() {
        put_block(&mut out, &l.weights, &l.bias, l.activation);
    }
    out.extend_from_slice(&adam.step.to_le_bytes());
    for moments in [&adam.m, &adam.v] {
        for (g, l) in moments.iter().zip(model.layers()) {
            put_block(&mut out, &g.weights, &g.bias, l.activation);
        }
    }
    let crc = crc32fast::hash(&out);
    put_u32(&mut out, crc);
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(Error::TruncatedPayload {
            expected: self.pos.saturating_add(n),
            found: self.bytes.len(),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn block<T: Real>(&mut self) -> Result<(Array2<T>, Array1<T>, Activation)> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let tag = self.u32()?;
        let activation =
            Activation::from_tag(tag).ok_or_else(|| Error::MalformedHeader(format!("unknown activation tag {tag}")))?;
        let n = (rows as u64) * (cols as u64);
        if n > MAX_LAYER_VALUES {
            return Err(Error::DimensionOverflow(format!("layer of {rows} x {cols}")));
        }
        let mut read = |count: usize| -> Result<Vec<T>> {
            let raw = self.take(count * 4)?;
            Ok(raw
                .chunks_exact(4)
                .map(|c| T::from_f32(f32::from_le_bytes(c.try_into().unwrap())).unwrap())
                .collect())
        };
        let w = Array2::from_shape_vec((rows, cols), read(rows * cols)?).expect("sized");
        let b = Array1::from_vec(read(rows)?);
        Ok((w, b, activation))
    }
}

pub fn decode_checkpoint<T: Real>(bytes: &[u8]) -> Result<(VaeModel<T>, AdamState<T>)> {
    if bytes.len() < 16 {
        return Err(Error::TruncatedPayload {
            expected: 16,
            found: bytes.len(),
        });
    }
    if &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::MalformedHeader("bad checkpoint magic".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }
    let mut r = Reader { bytes: body, pos: 4 };
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::MalformedHeader(format!("unsupported checkpoint version {version}")));
    }
    let count = r.u32()? as usize;
    if count > 1024 {
        return Err(Error::DimensionOverflow(format!("{count} layers")));
    }
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let (weights, bias, activation) = r.block()?;
        layers.push(DenseLayer {
            weights,
            bias,
            activation,
        });
    }
    let model = VaeModel::from_layers(layers)?;
    let step = r.u64()?;
    let mut moments = [Vec::with_capacity(count), Vec::with_capacity(count)];
    for block in moments.iter_mut() {
        for _ in 0..count {
            let (weights, bias, _) = r.block()?;
            block.push(LayerGrad { weights, bias });
        }
    }
    if r.pos != body.len() {
        return Err(Error::MalformedHeader(format!("{} trailing bytes", body.len() - r.pos)));
    }
    let [m, v] = moments;
    let adam = AdamState {
        step,
        m,
        v,
        config: AdamConfig::default(),
    };
    if !adam.matches(&model) {
        return Err(Error::MalformedHeader("optimizer state does not match the layers".into()));
    }
    Ok((model, adam))
}

pub fn write_checkpoint<T: Real>(path: impl AsRef<Path>, model: &VaeModel<T>, adam: &AdamState<T>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(model, adam)?;
    // Write-then-rename keeps the previous checkpoint intact on failure.
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::file(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::file(path, e))
}

pub fn read_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<(VaeModel<T>, AdamState<T>)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    decode_checkpoint(&bytes)
}
