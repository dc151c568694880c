//! Multichannel maximum-likelihood estimation of the breathing frequency.
//!
//! With the observation model `x[m,c,n] = b + a cos(2π f₀ T_s n + φ) + w`,
//! the approximate ML estimate of `f₀` maximizes the summed periodogram
//!
//! ```text
//! J(f) = Σ_c Σ_m | Σ_n x̃[m,c,n] e^{−j2π f T_s n} |²
//! ```
//!
//! over `[f_min, f_max]`, where `x̃` is `x` with each channel's sample mean
//! removed. The maximization runs on a uniform grid (ties go to the lower
//! frequency) followed by a three-point parabolic refinement of `log J`.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// `M x C x N` observations sampled at `fs_hz`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionMatrix {
    levels: usize,
    comps: usize,
    len: usize,
    data: Vec<f64>,
    fs_hz: f64,
}

impl MotionMatrix {
    /// `data` is laid out channel by channel: `data[(m * C + c) * N + n]`.
    pub fn new(levels: usize, comps: usize, len: usize, data: Vec<f64>, fs_hz: f64) -> Result<Self> {
        if levels == 0 || comps == 0 {
            return Err(Error::InvalidEstimatorConfig("motion matrix needs at least one channel".into()));
        }
        if len < 2 {
            return Err(Error::InvalidEstimatorConfig("motion matrix needs N >= 2".into()));
        }
        if data.len() != levels * comps * len {
            return Err(Error::InvalidEstimatorConfig(format!(
                "{} samples do not fill {levels}x{comps}x{len}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidEstimatorConfig("non-finite sample".into()));
        }
        if !(fs_hz.is_finite() && fs_hz > 0.0) {
            return Err(Error::InvalidEstimatorConfig("sampling rate must be > 0".into()));
        }
        Ok(Self {
            levels,
            comps,
            len,
            data,
            fs_hz,
        })
    }

    /// Builds from `channels[m][c]` sequences of equal length.
    pub fn from_nested(channels: &[Vec<Vec<f64>>], fs_hz: f64) -> Result<Self> {
        let levels = channels.len();
        let comps = channels.first().map_or(0, Vec::len);
        let len = channels.first().and_then(|r| r.first()).map_or(0, Vec::len);
        let mut data = Vec::with_capacity(levels * comps * len);
        for row in channels {
            if row.len() != comps {
                return Err(Error::InvalidEstimatorConfig("ragged component count".into()));
            }
            for ch in row {
                if ch.len() != len {
                    return Err(Error::InvalidEstimatorConfig("ragged channel length".into()));
                }
                data.extend_from_slice(ch);
            }
        }
        Self::new(levels, comps, len, data, fs_hz)
    }

    /// Stacks matrices along the level axis. All inputs must agree on `C`,
    /// `N` and `fs`.
    pub fn stack(parts: &[&MotionMatrix]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidEstimatorConfig("nothing to stack".into()))?;
        let mut data = Vec::new();
        let mut levels = 0;
        for p in parts {
            if p.comps != first.comps || p.len != first.len || p.fs_hz != first.fs_hz {
                return Err(Error::InvalidEstimatorConfig("stacked matrices disagree in shape".into()));
            }
            levels += p.levels;
            data.extend_from_slice(&p.data);
        }
        Self::new(levels, first.comps, first.len, data, first.fs_hz)
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn comps(&self) -> usize {
        self.comps
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn fs_hz(&self) -> f64 {
        self.fs_hz
    }

    pub fn channel_count(&self) -> usize {
        self.levels * self.comps
    }

    pub fn channel(&self, m: usize, c: usize) -> &[f64] {
        let k = m * self.comps + c;
        &self.data[k * self.len..(k + 1) * self.len]
    }

    pub fn channels(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.len)
    }

    /// Samples `start..end` of every channel.
    pub fn window(&self, start: usize, end: usize) -> Result<Self> {
        assert!(start <= end && end <= self.len, "window out of range");
        let data = self.channels().flat_map(|ch| ch[start..end].iter().copied()).collect();
        Self::new(self.levels, self.comps, end - start, data, self.fs_hz)
    }

    /// Every sample multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= k);
        out
    }
}

/// Search interval, grid and periodicity threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub grid_step_hz: f64,
    /// Periodicity threshold `η`.
    pub eta: f64,
}

impl EstimatorConfig {
    pub const DEFAULT_GRID_STEP_HZ: f64 = 0.005;

    pub fn validate(&self, fs_hz: f64) -> Result<()> {
        let ok = self.f_min_hz > 0.0
            && self.f_min_hz < self.f_max_hz
            && self.f_max_hz < fs_hz / 2.0
            && self.grid_step_hz > 0.0
            && self.grid_step_hz <= (self.f_max_hz - self.f_min_hz) / 10.0 + 1e-12
            && self.eta >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidEstimatorConfig(format!(
                "need 0 < f_min < f_max < fs/2 and 0 < step <= (f_max - f_min)/10, eta >= 0 \
                 (got f_min={}, f_max={}, step={}, eta={}, fs={fs_hz})",
                self.f_min_hz, self.f_max_hz, self.grid_step_hz, self.eta
            )))
        }
    }

    /// The frequency grid `f_min, f_min + step, …, ≤ f_max`.
    pub fn grid(&self) -> Vec<f64> {
        let count = ((self.f_max_hz - self.f_min_hz) / self.grid_step_hz + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|k| self.f_min_hz + k as f64 * self.grid_step_hz)
            .collect()
    }
}

/// Channels with their sample means removed, ready for DTFT evaluation.
struct Centered<'a> {
    x: &'a MotionMatrix,
    means: Vec<f64>,
}

impl<'a> Centered<'a> {
    fn new(x: &'a MotionMatrix) -> Self {
        let means = x
            .channels()
            .map(|ch| ch.iter().sum::<f64>() / ch.len() as f64)
            .collect();
        Self { x, means }
    }

    /// `(Re, Im)` of `Σ_n x̃[n] e^{−j2πf n T_s}` for every channel.
    fn dtft(&self, f: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let w = TWO_PI * f / self.x.fs_hz;
        let phasors: Vec<(f64, f64)> = (0..self.x.len).map(|n| (w * n as f64).sin_cos()).collect();
        self.x.channels().zip(&self.means).map(move |(ch, &mu)| {
            let (mut re, mut im) = (0.0, 0.0);
            for (&v, &(s, c)) in ch.iter().zip(&phasors) {
                let v = v - mu;
                re += v * c;
                im -= v * s;
            }
            (re, im)
        })
    }

    fn objective(&self, f: f64) -> f64 {
        self.dtft(f).map(|(re, im)| re * re + im * im).sum()
    }
}

/// `J(f)`: summed squared DTFT magnitude of the mean-removed channels.
pub fn periodogram_objective(x: &MotionMatrix, f_hz: f64) -> f64 {
    Centered::new(x).objective(f_hz)
}

/// `J` evaluated over a frequency grid.
pub fn objective_on_grid(x: &MotionMatrix, grid: &[f64]) -> Vec<f64> {
    let c = Centered::new(x);
    grid.iter().map(|&f| c.objective(f)).collect()
}

/// Objective summed over several matrices sharing `N` and `fs`.
pub fn fused_objective_on_grid(parts: &[&MotionMatrix], grid: &[f64]) -> Vec<f64> {
    let mut total = vec![0.0; grid.len()];
    for p in parts {
        for (t, v) in total.iter_mut().zip(objective_on_grid(p, grid)) {
            *t += v;
        }
    }
    total
}

/// Index of the largest value; the first (lowest-frequency) one wins ties.
pub fn grid_argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// Outcome of [`estimate_f0`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F0Estimate {
    /// Refined estimate.
    pub f0_hz: f64,
    /// Grid maximizer before refinement.
    pub grid_f0_hz: f64,
    pub grid_index: usize,
    /// `N ≥ 2 / (f_min T_s)` does not hold: fewer than two periods of the
    /// slowest admissible tone fit in the window.
    pub short_window: bool,
}

/// Grid search plus parabolic refinement on `log J`.
pub fn estimate_f0(x: &MotionMatrix, cfg: &EstimatorConfig) -> Result<F0Estimate> {
    cfg.validate(x.fs_hz)?;
    let grid = cfg.grid();
    let values = objective_on_grid(x, &grid);
    refine(&grid, &values, cfg, x.len, x.fs_hz)
}

/// As [`estimate_f0`] for a precomputed objective.
pub fn refine(grid: &[f64], values: &[f64], cfg: &EstimatorConfig, len: usize, fs_hz: f64) -> Result<F0Estimate> {
    let k = grid_argmax(values);
    if !(values[k] > 0.0) {
        return Err(Error::DegenerateWindow);
    }
    let mut f0 = grid[k];
    if k > 0 && k + 1 < grid.len() && values[k - 1] > 0.0 && values[k + 1] > 0.0 {
        let (l0, l1, l2) = (values[k - 1].ln(), values[k].ln(), values[k + 1].ln());
        let denom = l0 - 2.0 * l1 + l2;
        if denom < 0.0 {
            let delta = (0.5 * (l0 - l2) / denom).clamp(-0.5, 0.5);
            f0 += delta * cfg.grid_step_hz;
        }
    }
    let f0 = f0.clamp(cfg.f_min_hz, cfg.f_max_hz);
    Ok(F0Estimate {
        f0_hz: f0,
        grid_f0_hz: grid[k],
        grid_index: k,
        short_window: (len as f64) < 2.0 * fs_hz / cfg.f_min_hz,
    })
}

/// `â[m,c] = (2/N) |Σ_n x̃[m,c,n] e^{−j2π f̂₀ n T_s}|`, channel order `m * C + c`.
pub fn estimate_amplitudes(x: &MotionMatrix, f0_hz: f64) -> Result<Vec<f64>> {
    let bin = x.fs_hz / x.len as f64;
    if !(f0_hz > bin && f0_hz < x.fs_hz / 2.0 - bin) {
        return Err(Error::FrequencyAtEdge { f0: f0_hz });
    }
    let scale = 2.0 / x.len as f64;
    Ok(Centered::new(x)
        .dtft(f0_hz)
        .map(|(re, im)| scale * (re * re + im * im).sqrt())
        .collect())
}

/// `stat = N/(M C) Σ â²`; periodic iff `stat > η`.
pub fn periodicity_test(a_hat: &[f64], len: usize, levels: usize, comps: usize, eta: f64) -> (f64, bool) {
    let stat = len as f64 / (levels * comps) as f64 * a_hat.iter().map(|a| a * a).sum::<f64>();
    (stat, stat > eta)
}

/// Per-window estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct RREstimate {
    pub window_index: usize,
    pub t_start_s: f64,
    pub t_end_s: f64,
    pub f0_hat_hz: f64,
    pub a_hat: Vec<f64>,
    pub periodicity_stat: f64,
    pub periodic: bool,
    pub warmup: bool,
    /// No admissible signal in the window (all-zero channels or every ROI gated).
    pub valid: bool,
    /// ROI gate decisions `κ_r` for this window (empty without ROIs).
    pub gates: Vec<bool>,
}

impl RREstimate {
    pub fn rr_bpm(&self) -> f64 {
        60.0 * self.f0_hat_hz
    }

    /// Placeholder for a window without usable signal.
    pub fn invalid(cfg: &EstimatorConfig) -> Self {
        Self {
            window_index: 0,
            t_start_s: 0.0,
            t_end_s: 0.0,
            f0_hat_hz: cfg.f_min_hz,
            a_hat: Vec::new(),
            periodicity_stat: 0.0,
            periodic: false,
            warmup: false,
            valid: false,
            gates: Vec::new(),
        }
    }
}

/// Runs the full per-window analysis on one motion matrix.
pub fn analyze(x: &MotionMatrix, cfg: &EstimatorConfig) -> Result<RREstimate> {
    analyze_fused(&[x], cfg)
}

/// Joint analysis of several matrices whose objectives add up.
pub fn analyze_fused(parts: &[&MotionMatrix], cfg: &EstimatorConfig) -> Result<RREstimate> {
    let stacked = MotionMatrix::stack(parts)?;
    cfg.validate(stacked.fs_hz)?;
    let grid = cfg.grid();
    let values = fused_objective_on_grid(parts, &grid);
    let est = match refine(&grid, &values, cfg, stacked.len, stacked.fs_hz) {
        Ok(e) => e,
        Err(Error::DegenerateWindow) => return Ok(RREstimate::invalid(cfg)),
        Err(e) => return Err(e),
    };
    let a_hat = estimate_amplitudes(&stacked, est.f0_hz)?;
    let (stat, periodic) = periodicity_test(&a_hat, stacked.len, stacked.levels, stacked.comps, cfg.eta);
    Ok(RREstimate {
        window_index: 0,
        t_start_s: 0.0,
        t_end_s: 0.0,
        f0_hat_hz: est.f0_hz,
        a_hat,
        periodicity_stat: stat,
        periodic,
        warmup: false,
        valid: true,
        gates: Vec::new(),
    })
}

/// Window length and interlacing factor `ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowingConfig {
    pub window_s: f64,
    pub rho: f64,
}

/// One analysis window, frames `start..end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpan {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub warmup: bool,
}

/// Interlaced windows lying fully inside the signal.
///
/// The hop is `round(N (1 − ρ))` frames. The first `⌈N/hop⌉ − 1` windows,
/// those for which `(k + 1)·hop < N`, are flagged as warm-up: a real-time
/// tracker would have seen them only partially filled.
pub fn window_slicer(total_frames: usize, cfg: &WindowingConfig, fs_hz: f64) -> Result<Vec<WindowSpan>> {
    if !(0.0..1.0).contains(&cfg.rho) {
        return Err(Error::InvalidEstimatorConfig(format!("rho {} outside [0, 1)", cfg.rho)));
    }
    let len = (cfg.window_s * fs_hz).round() as usize;
    if len < 2 {
        return Err(Error::InvalidEstimatorConfig("window shorter than two frames".into()));
    }
    if len > total_frames {
        return Err(Error::WindowTooLong {
            window: len,
            total: total_frames,
        });
    }
    let hop = ((len as f64) * (1.0 - cfg.rho)).round() as usize;
    if hop < 1 {
        return Err(Error::InvalidEstimatorConfig("window hop below one frame".into()));
    }
    let count = (total_frames - len) / hop + 1;
    Ok((0..count)
        .map(|k| WindowSpan {
            index: k,
            start: k * hop,
            end: k * hop + len,
            warmup: (k + 1) * hop < len,
        })
        .collect())
}

/// `η` as the 95th percentile of the periodicity statistic over pure-noise
/// windows of the given shape and noise standard deviation.
pub fn calibrate_eta(
    noise_sigma: f64,
    levels: usize,
    comps: usize,
    len: usize,
    fs_hz: f64,
    cfg: &EstimatorConfig,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_sigma.max(0.0)).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let probe = EstimatorConfig { eta: 0.0, ..*cfg };
    let mut stats = Vec::with_capacity(trials);
    for _ in 0..trials.max(1) {
        let data = (0..levels * comps * len).map(|_| normal.sample(&mut rng)).collect();
        let x = MotionMatrix::new(levels, comps, len, data, fs_hz)?;
        let est = analyze(&x, &probe)?;
        stats.push(est.periodicity_stat);
    }
    stats.sort_by(f64::total_cmp);
    let idx = ((0.95 * stats.len() as f64).ceil() as usize).clamp(1, stats.len()) - 1;
    Ok(stats[idx])
}

/// Writes `window,t_start_s,t_end_s,f0_hz,rr_bpm,stat,periodic,warmup`.
pub fn write_results_csv<W: Write>(out: W, results: &[RREstimate]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["window", "t_start_s", "t_end_s", "f0_hz", "rr_bpm", "stat", "periodic", "warmup"])?;
    for r in results {
        w.write_record(&[
            r.window_index.to_string(),
            format!("{:.3}", r.t_start_s),
            format!("{:.3}", r.t_end_s),
            if r.valid { format!("{:.6}", r.f0_hat_hz) } else { "nan".into() },
            if r.valid { format!("{:.4}", r.rr_bpm()) } else { "nan".into() },
            format!("{:.6e}", r.periodicity_stat),
            (r.periodic as u8).to_string(),
            (r.warmup as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A row read back from a results CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResultRow {
    pub window: usize,
    pub t_start_s: f64,
    pub t_end_s: f64,
    pub f0_hz: f64,
    pub stat: f64,
    pub periodic: bool,
    pub warmup: bool,
}

pub fn read_results_csv<R: std::io::Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let bad = |what: &str| Error::InvalidConfig(format!("results csv: bad {what}"));
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let get = |i: usize| rec.get(i).ok_or_else(|| bad("column count"));
        rows.push(ResultRow {
            window: get(0)?.trim().parse().map_err(|_| bad("window"))?,
            t_start_s: get(1)?.trim().parse().map_err(|_| bad("t_start_s"))?,
            t_end_s: get(2)?.trim().parse().map_err(|_| bad("t_end_s"))?,
            f0_hz: get(3)?.trim().parse().map_err(|_| bad("f0_hz"))?,
            stat: get(5)?.trim().parse().map_err(|_| bad("stat"))?,
            periodic: get(6)?.trim() == "1",
            warmup: get(7)?.trim() == "1",
        });
    }
    Ok(rows)
}
