//! End-to-end runs: frames → motion signals → per-window estimates.

use std::fmt;
use std::str::FromStr;

use crate::amp_path::{calibrate_gamma_th, geometric_alphas, AmpConfig, AmpExtractor};
use crate::error::{Error, Result};
use crate::estimator::{analyze, calibrate_eta, window_slicer, EstimatorConfig, MotionMatrix, RREstimate, WindowSpan, WindowingConfig};
use crate::frame_io::FrameSequence;
use crate::phase_path::PhaseExtractor;
use crate::plane::Plane;
use crate::pyramid::{build_laplacian, PyramidKernel, RieszTransformer};
use crate::roi::{fused_estimate, gate_roi, select_rois, GateDecision, RoiConfig, RoiSet};
use crate::temporal::{design_bandpass, StackFilter};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Amplitude,
    Phase,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "amplitude" | "amp" => Ok(Self::Amplitude),
            "phase" => Ok(Self::Phase),
            other => Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Amplitude => "amplitude",
            Self::Phase => "phase",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Adult,
    Newborn,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "adult" => Ok(Self::Adult),
            "newborn" => Ok(Self::Newborn),
            other => Err(Error::InvalidConfig(format!("unknown profile {other:?}"))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Adult => "adult",
            Self::Newborn => "newborn",
        })
    }
}

/// Every tunable of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub profile: Profile,
    pub f_lo_hz: f64,
    pub f_hi_hz: f64,
    /// Frame rate for inputs that do not carry one.
    pub fs_hz: Option<f64>,
    /// Pyramid levels `M`.
    pub levels: usize,
    /// ROI side `W`.
    pub roi_side: usize,
    /// ROI count `R`; 0 analyzes the whole frame.
    pub num_rois: usize,
    /// ROI downsampling `D`.
    pub downsample: usize,
    /// ROI calibration frames `L`.
    pub calib_frames: usize,
    pub roi_offset: usize,
    /// Re-select ROIs every this many windows; 0 selects once.
    pub reselect_every: usize,
    /// Amplification `α` (the ramp end-point on the amplitude path).
    pub alpha: f64,
    /// Binarization threshold `Γ_th`; calibrated when `None`.
    pub gamma_th: Option<f64>,
    pub gate_bin: f64,
    pub gate_th: f64,
    /// Periodicity threshold `η`; calibrated when `None`.
    pub eta: Option<f64>,
    /// Noise standard deviation used to calibrate `η`.
    pub noise_floor: f64,
    pub window_s: f64,
    pub rho: f64,
    pub grid_step_hz: f64,
    pub seed: u64,
}

impl RunConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let base = Self {
            method: Method::Phase,
            profile,
            f_lo_hz: 0.19,
            f_hi_hz: 0.9,
            fs_hz: None,
            levels: 4,
            roi_side: 41,
            num_rois: 3,
            downsample: 2,
            calib_frames: 300,
            roi_offset: 0,
            reselect_every: 0,
            alpha: 20.0,
            gamma_th: None,
            gate_bin: crate::roi::DEFAULT_GAMMA_BIN,
            gate_th: crate::roi::DEFAULT_GATE_TH,
            eta: None,
            noise_floor: 1e-3,
            window_s: 20.0,
            rho: 0.5,
            grid_step_hz: EstimatorConfig::DEFAULT_GRID_STEP_HZ,
            seed: 0,
        };
        match profile {
            Profile::Adult => base,
            Profile::Newborn => Self {
                f_lo_hz: 0.3,
                f_hi_hz: 1.1,
                levels: 3,
                roi_side: 21,
                num_rois: 4,
                alpha: 25.0,
                calib_frames: 250,
                ..base
            },
        }
    }

    /// Starts from the profile named in `pairs` (adult if none) and applies
    /// every other pair in order.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)> + Clone) -> Result<Self> {
        let profile = pairs
            .clone()
            .into_iter()
            .filter(|(k, _)| k.trim() == "profile")
            .last()
            .map(|(_, v)| v.parse())
            .transpose()?
            .unwrap_or(Profile::Adult);
        let mut cfg = Self::for_profile(profile);
        for (k, v) in pairs {
            if k.trim() != "profile" {
                cfg.set(k, v)?;
            }
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let bad = || Error::InvalidConfig(format!("{key}: cannot parse {value:?}"));
        let num = || value.parse::<f64>().map_err(|_| bad());
        let int = || value.parse::<usize>().map_err(|_| bad());
        let auto = |v: &str| v == "auto" || v.is_empty();
        match key.trim() {
            "method" => self.method = value.parse()?,
            "profile" => *self = Self::for_profile(value.parse()?),
            "f_lo_hz" => self.f_lo_hz = num()?,
            "f_hi_hz" => self.f_hi_hz = num()?,
            "fs_hz" => self.fs_hz = if auto(value) { None } else { Some(num()?) },
            "levels" => self.levels = int()?,
            "roi_size" => self.roi_side = int()?,
            "rois" => self.num_rois = int()?,
            "downsample" => self.downsample = int()?,
            "calib_frames" => self.calib_frames = int()?,
            "roi_offset" => self.roi_offset = int()?,
            "reselect_every" => self.reselect_every = int()?,
            "alpha" => self.alpha = num()?,
            "gamma_th" => self.gamma_th = if auto(value) { None } else { Some(num()?) },
            "gate_bin" => self.gate_bin = num()?,
            "gate_th" => self.gate_th = num()?,
            "eta" => self.eta = if auto(value) { None } else { Some(num()?) },
            "noise_floor" => self.noise_floor = num()?,
            "window_s" => self.window_s = num()?,
            "rho" => self.rho = num()?,
            "grid_step_hz" => self.grid_step_hz = num()?,
            "seed" => self.seed = value.parse().map_err(|_| bad())?,
            other => return Err(Error::InvalidConfig(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// The fully resolved configuration as `key=value` lines.
    pub fn render(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("auto".to_string(), |x| x.to_string());
        [
            ("method", self.method.to_string()),
            ("profile", self.profile.to_string()),
            ("f_lo_hz", self.f_lo_hz.to_string()),
            ("f_hi_hz", self.f_hi_hz.to_string()),
            ("fs_hz", opt(self.fs_hz)),
            ("levels", self.levels.to_string()),
            ("roi_size", self.roi_side.to_string()),
            ("rois", self.num_rois.to_string()),
            ("downsample", self.downsample.to_string()),
            ("calib_frames", self.calib_frames.to_string()),
            ("roi_offset", self.roi_offset.to_string()),
            ("reselect_every", self.reselect_every.to_string()),
            ("alpha", self.alpha.to_string()),
            ("gamma_th", opt(self.gamma_th)),
            ("gate_bin", self.gate_bin.to_string()),
            ("gate_th", self.gate_th.to_string()),
            ("eta", opt(self.eta)),
            ("noise_floor", self.noise_floor.to_string()),
            ("window_s", self.window_s.to_string()),
            ("rho", self.rho.to_string()),
            ("grid_step_hz", self.grid_step_hz.to_string()),
            ("seed", self.seed.to_string()),
        ]
        .iter()
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect()
    }

    pub fn validate(&self, fs_hz: f64) -> Result<()> {
        design_bandpass(self.f_lo_hz, self.f_hi_hz, fs_hz)?;
        self.estimator_config(0.0).validate(fs_hz)?;
        if self.levels < 2 {
            return Err(Error::InvalidConfig("need at least two pyramid levels".into()));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::InvalidConfig("alpha must be >= 0".into()));
        }
        if self.gamma_th.is_some_and(|g| !(g > 0.0)) {
            return Err(Error::InvalidConfig("gamma_th must be > 0".into()));
        }
        if self.eta.is_some_and(|e| !(e >= 0.0)) {
            return Err(Error::InvalidConfig("eta must be >= 0".into()));
        }
        if !(self.noise_floor > 0.0) {
            return Err(Error::InvalidConfig("noise_floor must be > 0".into()));
        }
        if self.num_rois > 0 {
            self.roi_config().validate()?;
        }
        Ok(())
    }

    pub fn estimator_config(&self, eta: f64) -> EstimatorConfig {
        EstimatorConfig {
            f_min_hz: self.f_lo_hz,
            f_max_hz: self.f_hi_hz,
            grid_step_hz: self.grid_step_hz,
            eta,
        }
    }

    pub fn roi_config(&self) -> RoiConfig {
        RoiConfig {
            offset: self.roi_offset,
            ..RoiConfig::new(self.num_rois, self.roi_side, self.downsample, self.calib_frames)
        }
    }

    pub fn windowing(&self) -> WindowingConfig {
        WindowingConfig {
            window_s: self.window_s,
            rho: self.rho,
        }
    }
}

/// Parses flat `key=value` text; blank lines and `#` comments are skipped.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("config line {}: expected key=value", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Motion signals of one region, channel `m * comps + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSignals {
    pub levels: usize,
    pub comps: usize,
    pub fs_hz: f64,
    pub channels: Vec<Vec<f64>>,
    /// Binarization threshold used by the amplitude path.
    pub gamma_th: Option<f64>,
    /// Leading samples still carrying the filter's start-up transient.
    pub warmup_samples: usize,
}

impl MotionSignals {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Frames `start..end` as an estimator input, minus any leading
    /// warm-up samples. `None` when fewer than two samples remain.
    pub fn window(&self, start: usize, end: usize) -> Result<Option<MotionMatrix>> {
        let start = start.max(self.warmup_samples);
        if end < start + 2 {
            return Ok(None);
        }
        self.matrix(start, end).map(Some)
    }

    /// Frames `start..end` as an estimator input.
    pub fn matrix(&self, start: usize, end: usize) -> Result<MotionMatrix> {
        let data = self.channels.iter().flat_map(|c| c[start..end].iter().copied()).collect();
        MotionMatrix::new(self.levels, self.comps, end - start, data, self.fs_hz)
    }

    pub fn whole(&self) -> Result<MotionMatrix> {
        self.matrix(0, self.len())
    }
}

fn amplitude_signals(seq: &FrameSequence, cfg: &RunConfig) -> Result<MotionSignals> {
    let kernel = PyramidKernel::default();
    let design = design_bandpass(cfg.f_lo_hz, cfg.f_hi_hz, seq.fs_hz())?;
    let alphas = geometric_alphas(cfg.levels, cfg.alpha);
    let warm = design.warmup_samples();
    let calib_end = warm + cfg.calib_frames;

    let mut filt: Option<StackFilter> = None;
    let mut pending: Vec<Vec<Plane>> = Vec::new();
    let mut ex: Option<(AmpExtractor, f64)> = match cfg.gamma_th {
        Some(th) => Some((AmpExtractor::new(&AmpConfig::new(alphas.clone(), th)?), th)),
        None => None,
    };
    let start = |pending: &mut Vec<Vec<Plane>>| -> Result<(AmpExtractor, f64)> {
        let from = if pending.len() > warm { warm } else { 0 };
        let th = calibrate_gamma_th(&pending[from..], &alphas);
        let mut e = AmpExtractor::new(&AmpConfig::new(alphas.clone(), th)?);
        for g in pending.drain(..) {
            e.push(&g)?;
        }
        Ok((e, th))
    };
    for frame in seq.frames() {
        let stack = build_laplacian(frame, cfg.levels, &kernel)?;
        let f = filt.get_or_insert_with(|| StackFilter::new(stack.geometry(), design));
        let g = f.push(&stack)?;
        match ex.as_mut() {
            Some((e, _)) => e.push(&g)?,
            None => {
                pending.push(g);
                if pending.len() >= calib_end {
                    ex = Some(start(&mut pending)?);
                }
            }
        }
    }
    let (e, th) = match ex {
        Some(v) => v,
        None => start(&mut pending)?,
    };
    let sig = e.finish();
    Ok(MotionSignals {
        levels: cfg.levels,
        comps: 1,
        fs_hz: seq.fs_hz(),
        channels: sig.lbar,
        gamma_th: Some(th),
        warmup_samples: warm,
    })
}

fn phase_signals(seq: &FrameSequence, cfg: &RunConfig) -> Result<MotionSignals> {
    let kernel = PyramidKernel::default();
    let design = design_bandpass(cfg.f_lo_hz, cfg.f_hi_hz, seq.fs_hz())?;
    let bands = cfg.levels - 1;
    let mut riesz = RieszTransformer::new();
    let mut ex = PhaseExtractor::new(design, vec![cfg.alpha; bands]);
    for frame in seq.frames() {
        let stack = build_laplacian(frame, cfg.levels, &kernel)?;
        ex.push(&riesz.build_riesz(&stack))?;
    }
    let sig = ex.finish();
    let channels = sig
        .yi
        .into_iter()
        .zip(sig.yj)
        .flat_map(|(i, j)| [i, j])
        .collect();
    Ok(MotionSignals {
        levels: bands,
        comps: 2,
        fs_hz: seq.fs_hz(),
        channels,
        gamma_th: None,
        warmup_samples: design.warmup_samples(),
    })
}

/// Runs the configured motion path over every frame of `seq`.
pub fn extract_motion(seq: &FrameSequence, cfg: &RunConfig) -> Result<MotionSignals> {
    match cfg.method {
        Method::Amplitude => amplitude_signals(seq, cfg),
        Method::Phase => phase_signals(seq, cfg),
    }
}

/// ROIs chosen for a run of consecutive windows.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiEpoch {
    pub first_window: usize,
    pub rois: RoiSet,
    pub signals: Vec<MotionSignals>,
    pub gates: Vec<GateDecision>,
}

/// Everything a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub results: Vec<RREstimate>,
    pub windows: Vec<WindowSpan>,
    pub epochs: Vec<RoiEpoch>,
    /// Whole-frame signals when no ROIs were used.
    pub signals: Option<MotionSignals>,
    pub eta: f64,
    pub config: RunConfig,
}

impl RunOutput {
    pub fn valid_windows(&self) -> usize {
        self.results.iter().filter(|r| r.valid).count()
    }
}

/// Frames → windows of estimates, with or without ROIs.
pub fn run_estimate(seq: &FrameSequence, cfg: &RunConfig) -> Result<RunOutput> {
    let fs = seq.fs_hz();
    cfg.validate(fs)?;
    let windows = window_slicer(seq.len(), &cfg.windowing(), fs)?;
    let win_len = windows[0].end - windows[0].start;
    let probe_cfg = cfg.estimator_config(0.0);

    let mut epochs = Vec::new();
    let mut signals = None;
    let (levels, comps) = if cfg.num_rois == 0 {
        let s = extract_motion(seq, cfg)?;
        let shape = (s.levels, s.comps);
        signals = Some(s);
        shape
    } else {
        let every = if cfg.reselect_every == 0 {
            windows.len()
        } else {
            cfg.reselect_every
        };
        let roi_cfg = cfg.roi_config();
        for first in (0..windows.len()).step_by(every) {
            let offset = if first == 0 {
                roi_cfg.offset
            } else {
                windows[first].start.min(seq.len().saturating_sub(roi_cfg.calib_frames))
            };
            let rois = select_rois(seq, &RoiConfig { offset, ..roi_cfg }, &probe_cfg)?;
            let mut sigs = Vec::new();
            let mut gates = Vec::new();
            for r in 0..rois.len() {
                let crop = rois.crop(seq, r);
                gates.push(gate_roi(crop.frames(), cfg.gate_bin, cfg.gate_th));
                sigs.push(extract_motion(&crop, cfg)?);
            }
            epochs.push(RoiEpoch {
                first_window: first,
                rois,
                signals: sigs,
                gates,
            });
        }
        match cfg.method {
            Method::Amplitude => (cfg.levels, 1),
            Method::Phase => (cfg.levels - 1, 2),
        }
    };

    let eta = match cfg.eta {
        Some(e) => e,
        None => calibrate_eta(cfg.noise_floor, levels, comps, win_len, fs, &probe_cfg, 100, cfg.seed)?,
    };
    let est_cfg = cfg.estimator_config(eta);

    let mut results = Vec::with_capacity(windows.len());
    for w in &windows {
        let mut r = match &signals {
            Some(s) => match s.window(w.start, w.end)? {
                Some(x) => analyze(&x, &est_cfg)?,
                None => RREstimate::invalid(&est_cfg),
            },
            None => {
                let epoch = epochs
                    .iter()
                    .rev()
                    .find(|e| e.first_window <= w.index)
                    .expect("first epoch starts at window 0");
                let parts = epoch
                    .signals
                    .iter()
                    .map(|s| s.window(w.start, w.end))
                    .collect::<Result<Option<Vec<_>>>>()?;
                let kappa: Vec<bool> = epoch.gates.iter().map(|g| g.kappa(w.start, w.end)).collect();
                let fused = match parts {
                    Some(parts) => fused_estimate(&parts, &kappa, &est_cfg),
                    None => Err(Error::AllRoisGated),
                };
                match fused {
                    Ok(r) => r,
                    Err(Error::AllRoisGated) => RREstimate {
                        gates: kappa,
                        ..RREstimate::invalid(&est_cfg)
                    },
                    Err(e) => return Err(e),
                }
            }
        };
        r.window_index = w.index;
        r.t_start_s = w.start as f64 / fs;
        r.t_end_s = w.end as f64 / fs;
        r.warmup = w.warmup;
        results.push(r);
    }
    Ok(RunOutput {
        results,
        windows,
        epochs,
        signals,
        eta,
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, Rect, SynthSpec};

    #[test]
    fn profile_defaults() {
        let n = RunConfig::for_profile(Profile::Newborn);
        assert_eq!((n.f_lo_hz, n.f_hi_hz, n.levels, n.roi_side, n.alpha), (0.3, 1.1, 3, 21, 25.0));
        assert_eq!((n.window_s, n.rho, n.num_rois), (20.0, 0.5, 4));
        let a = RunConfig::for_profile(Profile::Adult);
        assert_eq!((a.f_lo_hz, a.f_hi_hz, a.levels, a.roi_side, a.alpha), (0.19, 0.9, 4, 41, 20.0));
        assert_eq!(a.num_rois, 3);
    }

    #[test]
    fn whole_frame_override() {
        let c = RunConfig::from_pairs([("profile", "newborn"), ("rois", "0")]).unwrap();
        assert_eq!(c.num_rois, 0);
        assert_eq!(c.roi_side, 21);
    }

    #[test]
    fn config_round_trip() {
        let c = RunConfig::from_pairs([("alpha", "12"), ("profile", "newborn"), ("eta", "3.5"), ("method", "amplitude")]).unwrap();
        assert_eq!(c.profile, Profile::Newborn);
        assert_eq!(c.alpha, 12.0);
        assert_eq!(c.eta, Some(3.5));
        let text = c.render();
        let pairs = parse_kv(&text).unwrap();
        let back = RunConfig::from_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str()))).unwrap();
        assert_eq!(back, c);
        assert!(RunConfig::from_pairs([("nope", "1")]).is_err());
        assert!(parse_kv("a=1\nbroken\n").is_err());
    }

    #[test]
    fn validation_catches_bad_overrides() {
        let mut c = RunConfig::for_profile(Profile::Adult);
        c.f_hi_hz = 20.0;
        assert!(c.validate(30.0).is_err());
        let mut c = RunConfig::for_profile(Profile::Adult);
        c.num_rois = 2;
        c.roi_side = 40;
        assert!(c.validate(30.0).is_err());
    }

    fn quiet_spec() -> SynthSpec {
        SynthSpec {
            width: 32,
            height: 32,
            duration_s: 24.0,
            displacement_px: 0.0,
            noise_sigma: 0.0,
            motion_region: Rect::new(0, 0, 32, 32),
            ..SynthSpec::default()
        }
    }

    #[test]
    fn static_video_is_never_periodic() {
        let (seq, _) = generate(&quiet_spec(), 0).unwrap();
        for method in [Method::Amplitude, Method::Phase] {
            for (rois, side) in [(0, 41), (2, 11)] {
                let mut cfg = RunConfig::for_profile(Profile::Adult);
                cfg.method = method;
                cfg.levels = 3;
                cfg.num_rois = rois;
                cfg.roi_side = side;
                let out = run_estimate(&seq, &cfg).unwrap();
                assert!(out.results.iter().all(|r| !r.periodic), "{method} with {rois} ROIs");
            }
        }
    }

    #[test]
    fn signal_shapes() {
        let spec = SynthSpec {
            duration_s: 2.0,
            ..quiet_spec()
        };
        let (seq, _) = generate(&spec, 0).unwrap();
        let mut cfg = RunConfig::for_profile(Profile::Adult);
        cfg.levels = 3;
        let p = extract_motion(&seq, &cfg).unwrap();
        assert_eq!((p.levels, p.comps, p.channels.len(), p.len()), (2, 2, 4, 60));
        cfg.method = Method::Amplitude;
        let a = extract_motion(&seq, &cfg).unwrap();
        assert_eq!((a.levels, a.comps, a.channels.len(), a.len()), (3, 1, 3, 60));
        assert!(a.gamma_th.unwrap() >= crate::amp_path::GAMMA_TH_FLOOR);
    }
}
