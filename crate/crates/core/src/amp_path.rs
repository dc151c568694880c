//! Amplitude-based motion signals.
//!
//! Every temporally filtered level `γ_m` is scaled by `α_m`, binarized
//! against a shared threshold `Γ_th` and averaged over the level:
//! `l̄_m[n] = mean_u 1{|α_m γ_m[u, n]| ≥ Γ_th}`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::plane::Plane;

/// Smallest default binarization threshold: half an 8-bit gray level.
pub const GAMMA_TH_FLOOR: f64 = 0.5 / 255.0;

/// Amplification schedule and binarization threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct AmpConfig {
    alphas: Vec<f64>,
    gamma_th: f64,
}

impl AmpConfig {
    /// Checks `α_0 = 1`, `α_{M-1} = 0`, `α_m ≥ 0` and `Γ_th > 0`.
    pub fn new(alphas: Vec<f64>, gamma_th: f64) -> Result<Self> {
        if alphas.len() < 2 {
            return Err(Error::InvalidConfig("need an amplification factor per level (M >= 2)".into()));
        }
        if alphas[0] != 1.0 {
            return Err(Error::InvalidConfig("alpha_0 must be 1".into()));
        }
        if *alphas.last().expect("non-empty") != 0.0 {
            return Err(Error::InvalidConfig("alpha_{M-1} must be 0".into()));
        }
        if alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::InvalidConfig("amplification factors must be >= 0".into()));
        }
        if !(gamma_th.is_finite() && gamma_th > 0.0) {
            return Err(Error::InvalidConfig("binarization threshold must be > 0".into()));
        }
        Ok(Self { alphas, gamma_th })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn gamma_th(&self) -> f64 {
        self.gamma_th
    }
}

/// Geometric ramp `α_0 = 1 … α_{M-2} = alpha_end`, with `α_{M-1} = 0`.
pub fn geometric_alphas(num_levels: usize, alpha_end: f64) -> Vec<f64> {
    assert!(num_levels >= 2);
    let mut a = vec![0.0; num_levels];
    let steps = num_levels - 2;
    for (m, v) in a.iter_mut().take(num_levels - 1).enumerate() {
        *v = if steps == 0 {
            1.0
        } else {
            alpha_end.powf(m as f64 / steps as f64)
        };
    }
    a
}

/// `b[u] = 1` where `|α γ[u]| ≥ Γ_th`, else 0.
pub fn binarize_level(gamma_level: &Plane, alpha: f64, gamma_th: f64) -> Plane {
    let data = gamma_level
        .data()
        .iter()
        .map(|&g| if (g * alpha).abs() >= gamma_th { 1.0 } else { 0.0 })
        .collect();
    Plane::from_vec(gamma_level.width(), gamma_level.height(), data)
}

fn binary_fraction(gamma_level: &Plane, alpha: f64, gamma_th: f64) -> f64 {
    if gamma_level.is_empty() {
        return 0.0;
    }
    let hits = gamma_level
        .data()
        .iter()
        .filter(|&&g| (g * alpha).abs() >= gamma_th)
        .count();
    hits as f64 / gamma_level.len() as f64
}

/// Averaged binarized signals `l̄_m[n]`, one row per level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSignals {
    /// `lbar[m][n]`.
    pub lbar: Vec<Vec<f64>>,
    /// `(c_m, r_m)` per level.
    pub dims: Vec<(usize, usize)>,
}

impl LevelSignals {
    pub fn num_levels(&self) -> usize {
        self.lbar.len()
    }

    pub fn len(&self) -> usize {
        self.lbar.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// CSV dump with columns `n,t_s,m,value`.
    pub fn write_csv<W: Write>(&self, out: W, fs_hz: f64) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "t_s", "m", "value"])?;
        for n in 0..self.len() {
            for (m, row) in self.lbar.iter().enumerate() {
                w.write_record(&[
                    n.to_string(),
                    format!("{:.6}", n as f64 / fs_hz),
                    m.to_string(),
                    format!("{:.9}", row[n]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Streaming form of [`extract_amp_signals`]: one call per frame.
#[derive(Debug, Clone)]
pub struct AmpExtractor {
    alphas: Vec<f64>,
    gamma_th: f64,
    dims: Option<Vec<(usize, usize)>>,
    lbar: Vec<Vec<f64>>,
}

impl AmpExtractor {
    pub fn new(cfg: &AmpConfig) -> Self {
        Self::with_raw(cfg.alphas.clone(), cfg.gamma_th)
    }

    /// Skips the `α_0 = 1` anchoring check. Used to demonstrate that a common
    /// rescaling of `α` and `Γ_th` leaves the output unchanged.
    pub fn with_raw(alphas: Vec<f64>, gamma_th: f64) -> Self {
        let m = alphas.len();
        Self {
            alphas,
            gamma_th,
            dims: None,
            lbar: vec![Vec::new(); m],
        }
    }

    pub fn push(&mut self, gammas: &[Plane]) -> Result<()> {
        let dims: Vec<_> = gammas.iter().map(Plane::dims).collect();
        if gammas.len() != self.alphas.len() {
            return Err(Error::GeometryMismatch("amp-path"));
        }
        match &self.dims {
            Some(d) if *d != dims => return Err(Error::GeometryMismatch("amp-path")),
            None => self.dims = Some(dims),
            _ => {}
        }
        for ((g, &a), row) in gammas.iter().zip(&self.alphas).zip(self.lbar.iter_mut()) {
            row.push(binary_fraction(g, a, self.gamma_th));
        }
        Ok(())
    }

    pub fn finish(self) -> LevelSignals {
        LevelSignals {
            lbar: self.lbar,
            dims: self.dims.unwrap_or_default(),
        }
    }
}

/// Binarizes and averages every filtered level of every frame.
pub fn extract_amp_signals(filtered: &[Vec<Plane>], cfg: &AmpConfig) -> Result<LevelSignals> {
    let mut ex = AmpExtractor::new(cfg);
    for g in filtered {
        ex.push(g)?;
    }
    Ok(ex.finish())
}

/// Default `Γ_th`: three times the median of `|α_m γ_m|` pooled over the
/// amplified levels of the calibration frames, floored at
/// [`GAMMA_TH_FLOOR`].
pub fn calibrate_gamma_th(calibration: &[Vec<Plane>], alphas: &[f64]) -> f64 {
    let mut values: Vec<f64> = calibration
        .iter()
        .flat_map(|levels| {
            levels
                .iter()
                .zip(alphas)
                .filter(|(_, &a)| a > 0.0)
                .flat_map(|(g, &a)| g.data().iter().map(move |v| (v * a).abs()))
        })
        .collect();
    if values.is_empty() {
        return GAMMA_TH_FLOOR;
    }
    let mid = values.len() / 2;
    let (_, median, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    (3.0 * *median).max(GAMMA_TH_FLOOR)
}
