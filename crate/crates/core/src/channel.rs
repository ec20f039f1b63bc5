//! Mean-removal power control, the AWGN multiple-access channel and the
//! parameter-server preprocessing that undoes the power control.
//!
//! A worker with measurement `g` (length m) sends `m + 2` real symbols
//! `sqrt(a)·[1, μ, (g − μ1)ᵀ]`, with `a` chosen so the frame's average symbol
//! power is exactly `P`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Normalizers with `|y_1|` below this abort the round.
pub const DEFAULT_NORMALIZER_EPS: f64 = 1e-12;

/// One worker's transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelFrame {
    pub symbols: Vec<f64>,
    /// Power-control scale `a`.
    pub scale: f64,
    /// Mean `μ` of the measurement.
    pub mean: f64,
}

impl ChannelFrame {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn average_power(&self) -> f64 {
        self.symbols.iter().map(|s| s * s).sum::<f64>() / self.symbols.len() as f64
    }
}

/// The superposed frames plus noise, as seen by the parameter server.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelOutput {
    pub y: Vec<f64>,
    pub noise_std: f64,
}

pub fn power_encode(g_cs: &[f64], power: f64) -> Result<ChannelFrame> {
    if g_cs.is_empty() {
        return Err(Error::InvalidArgument("empty measurement".into()));
    }
    if !(power > 0.0) {
        return Err(Error::InvalidArgument(format!("power must be positive, got {power}")));
    }
    let m = g_cs.len() as f64;
    let mean = g_cs.iter().sum::<f64>() / m;
    let centred: Vec<f64> = g_cs.iter().map(|g| g - mean).collect();
    let energy: f64 = centred.iter().map(|v| v * v).sum();
    let scale = power * (m + 2.0) / (1.0 + mean * mean + energy);
    let amp = scale.sqrt();
    let mut symbols = Vec::with_capacity(g_cs.len() + 2);
    symbols.push(amp);
    symbols.push(amp * mean);
    symbols.extend(centred.iter().map(|v| amp * v));
    Ok(ChannelFrame {
        symbols,
        scale,
        mean,
    })
}

/// Sums the frames in order and adds i.i.d. `N(0, noise_std²)` noise.
pub fn mac_transmit<R: Rng + ?Sized>(
    frames: &[ChannelFrame],
    noise_std: f64,
    rng: &mut R,
) -> Result<ChannelOutput> {
    let len = frames
        .first()
        .map(ChannelFrame::len)
        .ok_or_else(|| Error::InvalidArgument("no frames to transmit".into()))?;
    if let Some(f) = frames.iter().find(|f| f.len() != len) {
        return Err(Error::InvalidArgument(format!(
            "frame lengths differ: {} vs {len}",
            f.len()
        )));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise standard deviation must be non-negative, got {noise_std}"
        )));
    }
    let mut y = vec![0.0; len];
    for f in frames {
        for (acc, s) in y.iter_mut().zip(&f.symbols) {
            *acc += s;
        }
    }
    if noise_std > 0.0 {
        for v in &mut y {
            *v += noise_std * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(ChannelOutput { y, noise_std })
}

/// `ỹ = (y[2..] + y[1]·1) / y[0]`.
pub fn ps_preprocess(out: &ChannelOutput, eps: f64) -> Result<Vec<f64>> {
    if out.y.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "channel output of length {} has no payload",
            out.y.len()
        )));
    }
    let norm = out.y[0];
    if !(norm.abs() >= eps) {
        return Err(Error::DegenerateNormalizer(norm.abs()));
    }
    let shift = out.y[1];
    Ok(out.y[2..].iter().map(|v| (v + shift) / norm).collect())
}
