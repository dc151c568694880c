//! Phase-based motion signals from the Riesz pyramid.
//!
//! Per level and pixel the monogenic triple is normalized to a unit
//! quaternion `q̄[n]`. The frame-to-frame phase step is the `(i, j)` part of
//! `log(q̄[n] q̄⁻¹[n-1])` (for `n = 0`, of `log(q̄[0])`), i.e.
//! `(φ' cos θ, φ' sin θ)`. Steps are summed over time, band-passed,
//! amplified and averaged over the level's valid pixels.
//!
//! Coefficients whose amplitude is negligible (below a fraction of the
//! level's peak, or at round-off level) have no meaningful phase and
//! contribute a zero step.

use std::io::Write;

use crate::error::{Error, Result};
use crate::plane::Plane;
use crate::pyramid::{MonogenicLevel, RieszStack};
use crate::quaternion::Quaternion;
use crate::temporal::{filter_signal, BandpassDesign, FilterBank};
use crate::tolerance::Tolerances;

/// Amplitudes at or below this are round-off, whatever the level's peak.
pub const ABSOLUTE_AMPLITUDE_FLOOR: f64 = 1e-9;

/// Local amplitude, phase and orientation of one level.
#[derive(Debug, Clone, PartialEq)]
pub struct QuaternionPhaseField {
    /// `A = ‖q‖`.
    pub amplitude: Plane,
    /// `φ ∈ [0, π]`.
    pub phase: Plane,
    /// `θ ∈ (−π, π]`.
    pub orientation: Plane,
}

impl QuaternionPhaseField {
    pub fn from_level(level: &MonogenicLevel) -> Self {
        let (w, h) = level.p.dims();
        let mut amplitude = Plane::zeros(w, h);
        let mut phase = Plane::zeros(w, h);
        let mut orientation = Plane::zeros(w, h);
        for idx in 0..w * h {
            let (p, r1, r2) = (level.p.data()[idx], level.r1.data()[idx], level.r2.data()[idx]);
            let rn = (r1 * r1 + r2 * r2).sqrt();
            amplitude.data_mut()[idx] = (p * p + rn * rn).sqrt();
            phase.data_mut()[idx] = rn.atan2(p);
            orientation.data_mut()[idx] = r2.atan2(r1);
        }
        Self {
            amplitude,
            phase,
            orientation,
        }
    }

    /// `(φ cos θ, φ sin θ)` per pixel.
    pub fn components(&self) -> (Plane, Plane) {
        let ci = self.phase.zip_map(&self.orientation, quaternionic_components_i);
        let cj = self.phase.zip_map(&self.orientation, quaternionic_components_j);
        (ci, cj)
    }
}

#[inline]
fn quaternionic_components_i(phi: f64, theta: f64) -> f64 {
    phi * theta.cos()
}

#[inline]
fn quaternionic_components_j(phi: f64, theta: f64) -> f64 {
    phi * theta.sin()
}

/// `(φ cos θ, φ sin θ)` for one `(φ, θ)` pair.
pub fn quaternionic_phase(phi: f64, theta: f64) -> (f64, f64) {
    (quaternionic_components_i(phi, theta), quaternionic_components_j(phi, theta))
}

/// Normalized coefficients of one level with their validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct QuaternionField {
    width: usize,
    height: usize,
    unit: Vec<Quaternion>,
    valid: Vec<bool>,
}

impl QuaternionField {
    pub fn from_level(level: &MonogenicLevel, tol: &Tolerances) -> Self {
        let (width, height) = level.p.dims();
        let raw: Vec<Quaternion> = (0..width * height)
            .map(|i| Quaternion::monogenic(level.p.data()[i], level.r1.data()[i], level.r2.data()[i]))
            .collect();
        let peak = raw.iter().map(|q| q.norm()).fold(0.0, f64::max);
        let floor = (tol.phase_mask_rel * peak).max(ABSOLUTE_AMPLITUDE_FLOOR);
        let mut unit = Vec::with_capacity(raw.len());
        let mut valid = Vec::with_capacity(raw.len());
        for q in raw {
            let n = q.norm();
            if n > floor {
                unit.push(q / n);
                valid.push(true);
            } else {
                unit.push(Quaternion::IDENTITY);
                valid.push(false);
            }
        }
        Self {
            width,
            height,
            unit,
            valid,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn unit(&self) -> &[Quaternion] {
        &self.unit
    }
}

/// Per-pixel phase step between consecutive frames.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseStep {
    pub dci: Plane,
    pub dcj: Plane,
    /// Pixels that produced a step (both coefficients valid, no singularity).
    pub valid: Vec<bool>,
    /// Pixels skipped because `q̄[n] q̄⁻¹[n-1] = −1`.
    pub singular: usize,
}

/// Phase step `(φ' cos θ, φ' sin θ)`; `prev = None` for the first frame.
pub fn phase_step(prev: Option<&QuaternionField>, curr: &QuaternionField, tol: &Tolerances) -> Result<PhaseStep> {
    if let Some(p) = prev {
        if p.dims() != curr.dims() {
            return Err(Error::GeometryMismatch("phase-path"));
        }
    }
    let (w, h) = curr.dims();
    let mut dci = Plane::zeros(w, h);
    let mut dcj = Plane::zeros(w, h);
    let mut valid = vec![false; w * h];
    let mut singular = 0;
    for idx in 0..w * h {
        let q = match prev {
            None if curr.valid[idx] => curr.unit[idx],
            // Unit quaternions: the inverse is the conjugate.
            Some(p) if curr.valid[idx] && p.valid[idx] => curr.unit[idx] * p.unit[idx].conj(),
            _ => continue,
        };
        // Re-normalize against accumulated round-off before the log.
        let q = q.normalized().unwrap_or(Quaternion::IDENTITY);
        let log = q.log_unit_with(tol)?;
        if log.singular {
            singular += 1;
            continue;
        }
        dci.data_mut()[idx] = log.value.i;
        dcj.data_mut()[idx] = log.value.j;
        valid[idx] = true;
    }
    Ok(PhaseStep {
        dci,
        dcj,
        valid,
        singular,
    })
}

/// Running sums `c[n] = Σ_{k ≤ n} dc[k]` for one component sequence.
pub fn unwrap_and_accumulate(steps: &[f64]) -> Vec<f64> {
    steps
        .iter()
        .scan(0.0, |acc, &s| {
            *acc += s;
            Some(*acc)
        })
        .collect()
}

/// Band-passes both cumulative components.
pub fn filter_phase(ci: &[f64], cj: &[f64], d: &BandpassDesign) -> (Vec<f64>, Vec<f64>) {
    (filter_signal(ci, d), filter_signal(cj, d))
}

/// Spatially averaged `α f^(i)` and `α f^(j)` for one frame of one level,
/// over the pixels flagged valid.
pub fn extract_phase_signals(fi: &Plane, fj: &Plane, valid: &[bool], alpha: f64) -> (f64, f64) {
    let mut count = 0usize;
    let (mut si, mut sj) = (0.0, 0.0);
    for ((&a, &b), &v) in fi.data().iter().zip(fj.data()).zip(valid) {
        if v {
            si += a;
            sj += b;
            count += 1;
        }
    }
    if count == 0 {
        return (0.0, 0.0);
    }
    (alpha * si / count as f64, alpha * sj / count as f64)
}

/// `y^(i)_m[n]` and `y^(j)_m[n]` for the band-pass levels.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSignals {
    pub yi: Vec<Vec<f64>>,
    pub yj: Vec<Vec<f64>>,
}

impl PhaseSignals {
    pub fn num_levels(&self) -> usize {
        self.yi.len()
    }

    pub fn len(&self) -> usize {
        self.yi.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// CSV dump with columns `n,t_s,m,comp,value`.
    pub fn write_csv<W: Write>(&self, out: W, fs_hz: f64) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "t_s", "m", "comp", "value"])?;
        for n in 0..self.len() {
            for m in 0..self.num_levels() {
                for (comp, row) in [("i", &self.yi[m]), ("j", &self.yj[m])] {
                    w.write_record(&[
                        n.to_string(),
                        format!("{:.6}", n as f64 / fs_hz),
                        m.to_string(),
                        comp.to_string(),
                        format!("{:.9e}", row[n]),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

struct LevelState {
    dims: (usize, usize),
    prev: Option<QuaternionField>,
    ci: Vec<f64>,
    cj: Vec<f64>,
    filt_i: FilterBank,
    filt_j: FilterBank,
    fi: Plane,
    fj: Plane,
}

/// Streaming phase-signal extractor: one Riesz pyramid per frame.
pub struct PhaseExtractor {
    design: BandpassDesign,
    alphas: Vec<f64>,
    tol: Tolerances,
    levels: Vec<LevelState>,
    signals: PhaseSignals,
    singular: usize,
}

impl PhaseExtractor {
    /// `alphas` holds one factor per band-pass level (the residual has no
    /// Riesz components and takes no part).
    pub fn new(design: BandpassDesign, alphas: Vec<f64>) -> Self {
        let m = alphas.len();
        Self {
            design,
            alphas,
            tol: Tolerances::DEFAULT,
            levels: Vec::new(),
            signals: PhaseSignals {
                yi: vec![Vec::new(); m],
                yj: vec![Vec::new(); m],
            },
            singular: 0,
        }
    }

    /// Number of antipodal (`−1`) steps skipped so far.
    pub fn singular_steps(&self) -> usize {
        self.singular
    }

    pub fn push(&mut self, stack: &RieszStack) -> Result<()> {
        if stack.bands.len() != self.alphas.len() {
            return Err(Error::GeometryMismatch("phase-path"));
        }
        if self.levels.is_empty() {
            self.levels = stack
                .bands
                .iter()
                .map(|b| {
                    let (w, h) = b.p.dims();
                    LevelState {
                        dims: (w, h),
                        prev: None,
                        ci: vec![0.0; w * h],
                        cj: vec![0.0; w * h],
                        filt_i: FilterBank::new(self.design, w * h),
                        filt_j: FilterBank::new(self.design, w * h),
                        fi: Plane::zeros(w, h),
                        fj: Plane::zeros(w, h),
                    }
                })
                .collect();
        }
        for (m, band) in stack.bands.iter().enumerate() {
            let st = &mut self.levels[m];
            if band.p.dims() != st.dims {
                return Err(Error::GeometryMismatch("phase-path"));
            }
            let field = QuaternionField::from_level(band, &self.tol);
            let step = phase_step(st.prev.as_ref(), &field, &self.tol)?;
            self.singular += step.singular;
            for (c, d) in st.ci.iter_mut().zip(step.dci.data()) {
                *c += d;
            }
            for (c, d) in st.cj.iter_mut().zip(step.dcj.data()) {
                *c += d;
            }
            st.filt_i.process(&st.ci, st.fi.data_mut());
            st.filt_j.process(&st.cj, st.fj.data_mut());
            let (yi, yj) = extract_phase_signals(&st.fi, &st.fj, field.valid(), self.alphas[m]);
            self.signals.yi[m].push(yi);
            self.signals.yj[m].push(yj);
            st.prev = Some(field);
        }
        Ok(())
    }

    pub fn finish(self) -> PhaseSignals {
        self.signals
    }
}
