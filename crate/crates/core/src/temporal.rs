//! Second-order Butterworth band-pass design and per-pixel temporal filtering.
//!
//! The design maps the analog band-pass prototype
//! `H(s) = B s / (s² + B s + Ω₀²)` (`B = Ω_H − Ω_L`, `Ω₀² = Ω_L Ω_H`, both
//! edges pre-warped) through the bilinear transform. The result has the form
//!
//! ```text
//! H(z) = K (1 + z⁻¹)(1 − z⁻¹) / ((1 − p z⁻¹)(1 − p* z⁻¹))
//! ```
//!
//! with zeros at DC and Nyquist and exactly −3 dB at both cut-offs.

use rustfft::num_complex::Complex;

use crate::error::{Error, Result};
use crate::plane::Plane;
use crate::pyramid::LaplacianStack;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandpassDesign {
    /// Scale factor `K`.
    pub gain: f64,
    /// Upper-half-plane pole `p` (its conjugate is the other pole).
    pub pole: Complex<f64>,
    pub f_lo_hz: f64,
    pub f_hi_hz: f64,
    pub fs_hz: f64,
    /// Denominator `1 + a1 z⁻¹ + a2 z⁻²`.
    pub a1: f64,
    pub a2: f64,
}

impl BandpassDesign {
    /// Numerator taps `[K, 0, −K]`.
    pub fn numerator(&self) -> [f64; 3] {
        [self.gain, 0.0, -self.gain]
    }

    pub fn denominator(&self) -> [f64; 3] {
        [1.0, self.a1, self.a2]
    }

    /// `H(e^{j2πf/fs})` evaluated from the realized coefficients.
    pub fn response(&self, f_hz: f64) -> Complex<f64> {
        let w = 2.0 * std::f64::consts::PI * f_hz / self.fs_hz;
        let z1 = Complex::from_polar(1.0, -w);
        let z2 = z1 * z1;
        let num = (Complex::new(1.0, 0.0) - z2) * self.gain;
        let den = Complex::new(1.0, 0.0) + z1 * self.a1 + z2 * self.a2;
        num / den
    }

    pub fn magnitude_db(&self, f_hz: f64) -> f64 {
        20.0 * self.response(f_hz).norm().log10()
    }

    /// Samples to skip before the output can be trusted: one period of the
    /// lower cut-off.
    pub fn warmup_samples(&self) -> usize {
        (self.fs_hz / self.f_lo_hz).ceil() as usize
    }
}

/// Designs the band-pass filter for `[f_lo, f_hi]` at sampling rate `fs`.
pub fn design_bandpass(f_lo_hz: f64, f_hi_hz: f64, fs_hz: f64) -> Result<BandpassDesign> {
    let valid = f_lo_hz.is_finite()
        && f_hi_hz.is_finite()
        && fs_hz.is_finite()
        && 0.0 < f_lo_hz
        && f_lo_hz < f_hi_hz
        && f_hi_hz < fs_hz / 2.0;
    if !valid {
        return Err(Error::InvalidBand {
            f_lo: f_lo_hz,
            f_hi: f_hi_hz,
            fs: fs_hz,
        });
    }
    let c = 2.0 * fs_hz;
    let prewarp = |f: f64| c * (std::f64::consts::PI * f / fs_hz).tan();
    let (wl, wh) = (prewarp(f_lo_hz), prewarp(f_hi_hz));
    let bw = wh - wl;
    let w0sq = wl * wh;

    let d0 = c * c + bw * c + w0sq;
    let d1 = 2.0 * (w0sq - c * c);
    let d2 = c * c - bw * c + w0sq;
    let gain = bw * c / d0;
    let a1 = d1 / d0;
    let a2 = d2 / d0;

    // Roots of z² + a1 z + a2; complex for every band this design accepts
    // in practice, but fall back to the real pair gracefully.
    let disc = a1 * a1 - 4.0 * a2;
    let pole = if disc < 0.0 {
        Complex::new(-a1 / 2.0, (-disc).sqrt() / 2.0)
    } else {
        Complex::new((-a1 + disc.sqrt()) / 2.0, 0.0)
    };
    Ok(BandpassDesign {
        gain,
        pole,
        f_lo_hz,
        f_hi_hz,
        fs_hz,
        a1,
        a2,
    })
}

/// Delay line of one transposed direct-form II section.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FilterState {
    s1: f64,
    s2: f64,
}

impl FilterState {
    #[inline]
    pub fn step(&mut self, d: &BandpassDesign, x: f64) -> f64 {
        let y = d.gain * x + self.s1;
        self.s1 = -d.a1 * y + self.s2;
        self.s2 = -d.gain * x - d.a2 * y;
        y
    }
}

/// Causal filtering from a zero state.
pub fn filter_signal(x: &[f64], d: &BandpassDesign) -> Vec<f64> {
    let mut st = FilterState::default();
    x.iter().map(|&v| st.step(d, v)).collect()
}

/// Independent filters for a fixed-size bank of scalar signals.
#[derive(Debug, Clone)]
pub struct FilterBank {
    design: BandpassDesign,
    states: Vec<FilterState>,
}

impl FilterBank {
    pub fn new(design: BandpassDesign, channels: usize) -> Self {
        Self {
            design,
            states: vec![FilterState::default(); channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.states.len()
    }

    /// Advances every channel by one sample, writing outputs into `out`.
    pub fn process(&mut self, input: &[f64], out: &mut [f64]) {
        assert_eq!(input.len(), self.states.len());
        assert_eq!(out.len(), self.states.len());
        let d = self.design;
        for ((st, &x), y) in self.states.iter_mut().zip(input).zip(out.iter_mut()) {
            *y = st.step(&d, x);
        }
    }
}

/// Streaming per-pixel filter over every level of a pyramid sequence.
#[derive(Debug, Clone)]
pub struct StackFilter {
    geometry: Vec<(usize, usize)>,
    banks: Vec<FilterBank>,
}

impl StackFilter {
    pub fn new(geometry: Vec<(usize, usize)>, design: BandpassDesign) -> Self {
        let banks = geometry
            .iter()
            .map(|&(w, h)| FilterBank::new(design, w * h))
            .collect();
        Self { geometry, banks }
    }

    /// Filters the next stack, returning `γ_m` for every level.
    pub fn push(&mut self, stack: &LaplacianStack) -> Result<Vec<Plane>> {
        if stack.geometry() != self.geometry {
            return Err(Error::GeometryMismatch("temporal"));
        }
        Ok(stack
            .levels()
            .iter()
            .zip(self.banks.iter_mut())
            .map(|(p, bank)| {
                let mut out = Plane::zeros(p.width(), p.height());
                bank.process(p.data(), out.data_mut());
                out
            })
            .collect())
    }
}

/// Filters a whole sequence of stacks.
pub fn filter_stack(stacks: &[LaplacianStack], d: &BandpassDesign) -> Result<Vec<Vec<Plane>>> {
    let Some(first) = stacks.first() else {
        return Ok(Vec::new());
    };
    let mut filt = StackFilter::new(first.geometry(), *d);
    stacks.iter().map(|s| filt.push(s)).collect()
}
