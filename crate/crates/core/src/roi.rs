//! Region-of-interest selection, large-motion gating and fused estimation.
//!
//! Selection runs the multichannel estimator on a spatially downsampled
//! calibration block, treating every pixel as a channel. The per-pixel
//! amplitude estimates form a map that is interpolated back to full
//! resolution; ROI centers are its successive maxima under non-maximum
//! suppression.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::estimator::{analyze_fused, estimate_amplitudes, estimate_f0, EstimatorConfig, MotionMatrix, RREstimate};
use crate::frame_io::FrameSequence;
use crate::plane::Plane;

/// Default pixel-difference threshold of the gate (fraction of full scale).
pub const DEFAULT_GAMMA_BIN: f64 = 0.05;
/// Default fraction of moving pixels that gates an ROI.
pub const DEFAULT_GATE_TH: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoiConfig {
    /// Number of ROIs `R`.
    pub num_rois: usize,
    /// ROI side `W`, odd.
    pub side: usize,
    /// Spatial downsampling factor `D`.
    pub downsample: usize,
    /// Calibration frames `L`.
    pub calib_frames: usize,
    pub min_separation_px: usize,
    /// First calibration frame.
    pub offset: usize,
}

impl RoiConfig {
    /// `min_separation_px` defaults to the side so ROIs never overlap.
    pub fn new(num_rois: usize, side: usize, downsample: usize, calib_frames: usize) -> Self {
        Self {
            num_rois,
            side,
            downsample,
            calib_frames,
            min_separation_px: side,
            offset: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.side % 2 == 0 || self.side == 0 {
            return Err(Error::InvalidConfig(format!("ROI side must be odd, got {}", self.side)));
        }
        if self.num_rois == 0 {
            return Err(Error::InvalidConfig("need at least one ROI".into()));
        }
        if self.downsample == 0 {
            return Err(Error::InvalidConfig("downsampling factor must be >= 1".into()));
        }
        if self.calib_frames < 2 {
            return Err(Error::InvalidConfig("need at least two calibration frames".into()));
        }
        Ok(())
    }
}

/// Selected ROI centers and the amplitude map they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiSet {
    pub centers: Vec<(usize, usize)>,
    pub side: usize,
    /// Interpolated amplitude map at full resolution.
    pub amplitude_map: Plane,
    /// Breathing frequency found on the calibration block.
    pub f0_hz: f64,
}

impl RoiSet {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Top-left corner of ROI `r`.
    pub fn origin(&self, r: usize) -> (usize, usize) {
        let h = self.side / 2;
        let (cx, cy) = self.centers[r];
        (cx - h, cy - h)
    }

    pub fn crop(&self, seq: &FrameSequence, r: usize) -> FrameSequence {
        let (x0, y0) = self.origin(r);
        seq.crop(x0, y0, self.side, self.side)
    }

    /// One `r,cx,cy,W` line per ROI.
    pub fn write_manifest<W: Write>(&self, mut out: W) -> Result<()> {
        for (r, (cx, cy)) in self.centers.iter().enumerate() {
            writeln!(out, "{r},{cx},{cy},{}", self.side)?;
        }
        Ok(())
    }
}

/// Parses a manifest into `(cx, cy, W)` per ROI.
pub fn read_manifest<R: BufRead>(input: R) -> Result<Vec<(usize, usize, usize)>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<usize> = line
            .split(',')
            .map(|s| s.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidConfig(format!("bad manifest line {line:?}")))?;
        if f.len() != 4 {
            return Err(Error::InvalidConfig(format!("bad manifest line {line:?}")));
        }
        out.push((f[1], f[2], f[3]));
    }
    Ok(out)
}

/// `D×D` block means; edge blocks average the pixels they have.
pub fn block_downsample(frame: &Plane, d: usize) -> Plane {
    let (w, h) = frame.dims();
    let (wd, hd) = (w.div_ceil(d), h.div_ceil(d));
    Plane::from_fn(wd, hd, |bx, by| {
        let (x0, y0) = (bx * d, by * d);
        let (x1, y1) = ((x0 + d).min(w), (y0 + d).min(h));
        let mut s = 0.0;
        for y in y0..y1 {
            for x in x0..x1 {
                s += frame[(x, y)];
            }
        }
        s / ((x1 - x0) * (y1 - y0)) as f64
    })
}

/// Bilinear interpolation of a block map back to `(width, height)`. Block
/// `(i, j)` is anchored at the center of the pixels it covered.
pub fn upsample_bilinear(map: &Plane, d: usize, width: usize, height: usize) -> Plane {
    let (wd, hd) = map.dims();
    let anchor = (d as f64 - 1.0) / 2.0;
    let coord = |p: usize, n: usize| -> (usize, usize, f64) {
        let t = ((p as f64 - anchor) / d as f64).clamp(0.0, (n - 1) as f64);
        let i0 = t.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, t - i0 as f64)
    };
    Plane::from_fn(width, height, |x, y| {
        let (x0, x1, fx) = coord(x, wd);
        let (y0, y1, fy) = coord(y, hd);
        let top = map[(x0, y0)] * (1.0 - fx) + map[(x1, y0)] * fx;
        let bottom = map[(x0, y1)] * (1.0 - fx) + map[(x1, y1)] * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

/// Successive maxima of `map` among centers whose `side × side` square fits,
/// each at least `min_sep` (Euclidean) from the earlier ones. Returns fewer
/// than `count` centers when no admissible position is left.
pub fn pick_centers(map: &Plane, count: usize, side: usize, min_sep: usize) -> Vec<(usize, usize)> {
    let (w, h) = map.dims();
    let half = side / 2;
    let mut chosen: Vec<(usize, usize)> = Vec::new();
    if side > w || side > h {
        return chosen;
    }
    let min_sep_sq = (min_sep * min_sep) as f64;
    while chosen.len() < count {
        let mut best: Option<((usize, usize), f64)> = None;
        for y in half..h - half {
            for x in half..w - half {
                let far = chosen.iter().all(|&(cx, cy)| {
                    let dx = x as f64 - cx as f64;
                    let dy = y as f64 - cy as f64;
                    dx * dx + dy * dy >= min_sep_sq
                });
                if far && best.is_none_or(|(_, v)| map[(x, y)] > v) {
                    best = Some(((x, y), map[(x, y)]));
                }
            }
        }
        match best {
            Some((c, _)) => chosen.push(c),
            None => break,
        }
    }
    chosen
}

/// Picks ROI centers from frames `offset .. offset + L`.
///
/// The calibration block is assumed to contain only breathing motion.
pub fn select_rois(seq: &FrameSequence, cfg: &RoiConfig, est_cfg: &EstimatorConfig) -> Result<RoiSet> {
    cfg.validate()?;
    let (w, h) = (seq.width(), seq.height());
    if cfg.side > w || cfg.side > h {
        return Err(Error::FrameTooSmall {
            side: cfg.side,
            width: w,
            height: h,
        });
    }
    let need = cfg.offset + cfg.calib_frames;
    if seq.len() < need {
        return Err(Error::InsufficientFrames {
            need,
            have: seq.len(),
        });
    }
    let small: Vec<Plane> = seq.frames()[cfg.offset..need]
        .iter()
        .map(|f| block_downsample(f, cfg.downsample))
        .collect();
    let (wd, hd) = small[0].dims();
    let len = small.len();
    let mut data = vec![0.0; wd * hd * len];
    for (n, f) in small.iter().enumerate() {
        for (u, &v) in f.data().iter().enumerate() {
            data[u * len + n] = v;
        }
    }
    let x = MotionMatrix::new(wd * hd, 1, len, data, seq.fs_hz())?;
    let (f0, amps) = match estimate_f0(&x, est_cfg) {
        Ok(e) => (e.f0_hz, estimate_amplitudes(&x, e.f0_hz)?),
        Err(Error::DegenerateWindow) => (est_cfg.f_min_hz, vec![0.0; wd * hd]),
        Err(e) => return Err(e),
    };
    let coarse = Plane::from_vec(wd, hd, amps);
    let amplitude_map = upsample_bilinear(&coarse, cfg.downsample, w, h);
    let centers = pick_centers(&amplitude_map, cfg.num_rois, cfg.side, cfg.min_separation_px);
    Ok(RoiSet {
        centers,
        side: cfg.side,
        amplitude_map,
        f0_hz: f0,
    })
}

/// Per-frame fraction of ROI pixels that changed by at least `γ_bin`.
#[derive(Debug, Clone, PartialEq)]
pub struct GateDecision {
    /// `ī[n]`; `ī[0] = 0` since frame 0 has no predecessor.
    pub motion: Vec<f64>,
    pub gamma_bin: f64,
    pub gamma_th: f64,
}

impl GateDecision {
    /// `κ` for frames `start..end`: 0 as soon as any `ī[n]` exceeds `γ_th`.
    pub fn kappa(&self, start: usize, end: usize) -> bool {
        !self.motion[start..end].iter().any(|&v| v > self.gamma_th)
    }
}

pub fn gate_roi(frames: &[Plane], gamma_bin: f64, gamma_th: f64) -> GateDecision {
    let mut motion = Vec::with_capacity(frames.len());
    if !frames.is_empty() {
        motion.push(0.0);
    }
    for pair in frames.windows(2) {
        let moved = pair[0]
            .data()
            .iter()
            .zip(pair[1].data())
            .filter(|(a, b)| (*b - *a).abs() >= gamma_bin)
            .count();
        motion.push(moved as f64 / pair[1].len().max(1) as f64);
    }
    GateDecision {
        motion,
        gamma_bin,
        gamma_th,
    }
}

/// Maximizes the sum of the admitted ROIs' objectives.
pub fn fused_estimate(parts: &[MotionMatrix], gates: &[bool], cfg: &EstimatorConfig) -> Result<RREstimate> {
    assert_eq!(parts.len(), gates.len(), "one gate per ROI");
    let admitted: Vec<&MotionMatrix> = parts.iter().zip(gates).filter(|(_, &k)| k).map(|(p, _)| p).collect();
    if admitted.is_empty() {
        return Err(Error::AllRoisGated);
    }
    let mut est = analyze_fused(&admitted, cfg)?;
    est.gates = gates.to_vec();
    Ok(est)
}
