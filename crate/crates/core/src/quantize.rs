//! Unbiased stochastic low-precision quantizer and its wire format.
//!
//! A coordinate `x` with `lo + kη <= x < lo + (k+1)η` is sent as level `k+1`
//! with probability `(x - lo - kη)/η` and as level `k` otherwise, so the
//! dequantized value has expectation `x` and variance `(x - kη)(kη + η - x)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Precision of an unquantized exchange, in bits per coordinate.
pub const FULL_PRECISION_BITS: u32 = 16;

pub const WIRE_MAGIC: [u8; 2] = *b"QV";
pub const WIRE_VERSION: u8 = 1;
pub const WIRE_HEADER_LEN: usize = 16;
/// `lo` travels as an f64 prefix of the payload.
pub const WIRE_LO_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    eta: f64,
    bits: u8,
    lo: f64,
}

impl QuantizerSpec {
    /// Grid `{-η·2^(s-1), …, η·(2^(s-1) - 1)}`.
    pub fn new(eta: f64, bits: u8) -> Result<Self> {
        Self::with_lo(eta, bits, -eta * f64::from(1u32 << (bits.clamp(1, 16) - 1)))
    }

    pub fn with_lo(eta: f64, bits: u8, lo: f64) -> Result<Self> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::invalid(format!("quantizer step eta={eta} must be finite and positive")));
        }
        if !(1..=16).contains(&bits) {
            return Err(Error::invalid(format!("quantizer bits={bits} outside 1..=16")));
        }
        if !lo.is_finite() {
            return Err(Error::invalid("quantizer lower edge must be finite"));
        }
        Ok(QuantizerSpec { eta, bits, lo })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn levels(&self) -> u32 {
        1u32 << self.bits
    }

    pub fn max_level(&self) -> u16 {
        (self.levels() - 1) as u16
    }

    /// Upper representable edge `lo + (2^s - 1)η`.
    pub fn hi(&self) -> f64 {
        self.value(self.max_level())
    }

    pub fn value(&self, level: u16) -> f64 {
        self.lo + f64::from(level) * self.eta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedVector {
    spec: QuantizerSpec,
    levels: Vec<u16>,
}

impl QuantizedVector {
    pub fn new(spec: QuantizerSpec, levels: Vec<u16>) -> Result<Self> {
        if let Some(bad) = levels.iter().find(|&&l| l > spec.max_level()) {
            return Err(Error::invalid(format!("level {bad} exceeds {} for {}-bit grid", spec.max_level(), spec.bits)));
        }
        Ok(QuantizedVector { spec, levels })
    }

    pub fn spec(&self) -> &QuantizerSpec {
        &self.spec
    }

    pub fn levels(&self) -> &[u16] {
        &self.levels
    }

    pub fn dim(&self) -> usize {
        self.levels.len()
    }
}

/// Output of [`quantize`]: the vector plus how many coordinates had to be
/// clamped into the representable range. Clamped coordinates are biased.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    pub vector: QuantizedVector,
    pub clamped: usize,
}

pub fn quantize<R: Rng + ?Sized>(x: &[f64], spec: &QuantizerSpec, rng: &mut R) -> Result<Quantized> {
    let max = spec.max_level();
    let mut clamped = 0;
    let mut levels = Vec::with_capacity(x.len());
    for &xi in x {
        if xi.is_nan() {
            return Err(Error::invalid("cannot quantize NaN"));
        }
        if xi <= spec.lo {
            clamped += usize::from(xi < spec.lo);
            levels.push(0);
            continue;
        }
        if xi >= spec.hi() {
            clamped += usize::from(xi > spec.hi());
            levels.push(max);
            continue;
        }
        let u = (xi - spec.lo) / spec.eta;
        let nearest = u.round().clamp(0.0, f64::from(max)) as u16;
        if spec.value(nearest) == xi {
            levels.push(nearest);
            continue;
        }
        let k = u.floor().clamp(0.0, f64::from(max - 1));
        let up = (u - k).clamp(0.0, 1.0);
        let level = if rng.random::<f64>() < up { k + 1.0 } else { k };
        levels.push(level as u16);
    }
    Ok(Quantized { vector: QuantizedVector { spec: *spec, levels }, clamped })
}

pub fn dequantize(q: &QuantizedVector) -> Vec<f64> {
    q.levels.iter().map(|&l| q.spec.value(l)).collect()
}

/// Exact variance of the quantized value of an in-range scalar.
pub fn coordinate_variance(x: f64, spec: &QuantizerSpec) -> f64 {
    let x = x.clamp(spec.lo, spec.hi());
    let u = (x - spec.lo) / spec.eta;
    let k = u.floor();
    let below = x - (spec.lo + k * spec.eta);
    let above = spec.lo + (k + 1.0) * spec.eta - x;
    (below * above).max(0.0)
}

/// Worst-case `E‖Q(x) - x‖² = p·η²/4`.
pub fn variance_bound(spec: &QuantizerSpec, p: usize) -> f64 {
    p as f64 * spec.eta * spec.eta / 4.0
}

/// Bits in the proportional cost model (header excluded).
pub fn message_bits(spec: &QuantizerSpec, p: usize) -> u64 {
    p as u64 * u64::from(spec.bits)
}

/// Transfer time of an `s`-bit vector when a 16-bit vector costs `tc`.
pub fn comm_time(spec: &QuantizerSpec, tc: f64) -> f64 {
    tc * f64::from(spec.bits) / f64::from(FULL_PRECISION_BITS)
}

/// Precision of exchanged models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MessagePrecision {
    /// Models are sent as-is; costed as 16-bit.
    Exact,
    Quantized(QuantizerSpec),
}

impl MessagePrecision {
    pub fn bits_per_coordinate(&self) -> u32 {
        match self {
            MessagePrecision::Exact => FULL_PRECISION_BITS,
            MessagePrecision::Quantized(spec) => u32::from(spec.bits),
        }
    }

    pub fn comm_time(&self, tc: f64) -> f64 {
        match self {
            MessagePrecision::Exact => tc,
            MessagePrecision::Quantized(spec) => comm_time(spec, tc),
        }
    }

    pub fn message_bytes(&self, p: usize) -> u64 {
        (p as u64 * u64::from(self.bits_per_coordinate())).div_ceil(8)
    }

    pub fn variance_bound(&self, p: usize) -> f64 {
        match self {
            MessagePrecision::Exact => 0.0,
            MessagePrecision::Quantized(spec) => variance_bound(spec, p),
        }
    }
}

/// Bytes of packed levels for `p` coordinates at `bits` each.
pub fn packed_len(p: usize, bits: u8) -> usize {
    (p * usize::from(bits)).div_ceil(8)
}

/// Serializes a quantized vector.
///
/// Layout (little-endian): `"QV"`, version `1`, `s`, `p: u32`, `η: f64`
/// (16-byte header), then `lo: f64` and the levels packed LSB-first at `s`
/// bits each, zero-padded to a byte boundary.
pub fn encode(q: &QuantizedVector) -> Vec<u8> {
    let bits = q.spec.bits;
    let mut out = Vec::with_capacity(WIRE_HEADER_LEN + WIRE_LO_LEN + packed_len(q.dim(), bits));
    out.extend_from_slice(&WIRE_MAGIC);
    out.push(WIRE_VERSION);
    out.push(bits);
    out.extend_from_slice(&(q.dim() as u32).to_le_bytes());
    out.extend_from_slice(&q.spec.eta.to_le_bytes());
    out.extend_from_slice(&q.spec.lo.to_le_bytes());

    let mut acc: u64 = 0;
    let mut filled = 0u32;
    for &level in &q.levels {
        acc |= u64::from(level) << filled;
        filled += u32::from(bits);
        while filled >= 8 {
            out.push(acc as u8);
            acc >>= 8;
            filled -= 8;
        }
    }
    if filled > 0 {
        out.push(acc as u8);
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<QuantizedVector> {
    if bytes.len() < WIRE_HEADER_LEN {
        return Err(Error::Decode(format!("truncated header: {} of {WIRE_HEADER_LEN} bytes", bytes.len())));
    }
    if bytes[0..2] != WIRE_MAGIC {
        return Err(Error::Decode(format!("bad magic {:02x}{:02x}", bytes[0], bytes[1])));
    }
    if bytes[2] != WIRE_VERSION {
        return Err(Error::Decode(format!("unsupported version {}", bytes[2])));
    }
    let bits = bytes[3];
    let p = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let eta = f64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));

    let body = &bytes[WIRE_HEADER_LEN..];
    if body.len() < WIRE_LO_LEN {
        return Err(Error::Decode("truncated payload: missing lower edge".into()));
    }
    let lo = f64::from_le_bytes(body[..WIRE_LO_LEN].try_into().expect("8 bytes"));
    let spec = QuantizerSpec::with_lo(eta, bits, lo).map_err(|e| Error::Decode(e.to_string()))?;

    let packed = &body[WIRE_LO_LEN..];
    let expected = packed_len(p, bits);
    if packed.len() < expected {
        return Err(Error::Decode(format!("truncated payload: {} of {expected} level bytes", packed.len())));
    }
    if packed.len() > expected {
        return Err(Error::Decode(format!("{} trailing bytes", packed.len() - expected)));
    }

    let mask = (1u64 << bits) - 1;
    let mut levels = Vec::with_capacity(p);
    let mut acc: u64 = 0;
    let mut filled = 0u32;
    let mut bytes_iter = packed.iter();
    for _ in 0..p {
        while filled < u32::from(bits) {
            let b = bytes_iter.next().expect("length checked");
            acc |= u64::from(*b) << filled;
            filled += 8;
        }
        levels.push((acc & mask) as u16);
        acc >>= bits;
        filled -= u32::from(bits);
    }
    if acc != 0 {
        return Err(Error::Decode("nonzero padding bits".into()));
    }
    Ok(QuantizedVector { spec, levels })
}
