//! Synthetic breathing videos with known ground truth.
//!
//! Each motion region carries a pattern that translates vertically by
//! `d[n] = A sin(2π f₀ n T_s)` pixels. Patterns are evaluated analytically at
//! the shifted continuous coordinate, so subpixel shifts are exact. A
//! distractor adds a constant large offset to a region for a while. Noise is
//! i.i.d. Gaussian per pixel and frame, drawn from a per-frame ChaCha stream
//! so frames are reproducible independently of each other.

use std::f64::consts::PI;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::estimator::WindowSpan;
use crate::frame_io::FrameSequence;
use crate::plane::Plane;

/// Largest breathing displacement, in pixels, the generator accepts.
pub const MAX_DISPLACEMENT_PX: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    /// Soft horizontal edge.
    Gradient,
    /// Horizontal stripes under a Gaussian envelope, sine phase.
    Gabor,
    /// Gaussian spot.
    Blob,
}

impl std::str::FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gradient" => Ok(Self::Gradient),
            "gabor" => Ok(Self::Gabor),
            "blob" => Ok(Self::Blob),
            other => Err(Error::SpecInvalid(format!("unknown pattern {other:?}"))),
        }
    }
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn new(x0: usize, y0: usize, width: usize, height: usize) -> Self {
        Self { x0, y0, width, height }
    }

    /// Continuous center; for odd sizes this is the middle pixel.
    pub fn center(&self) -> (f64, f64) {
        (
            self.x0 as f64 + (self.width as f64 - 1.0) / 2.0,
            self.y0 as f64 + (self.height as f64 - 1.0) / 2.0,
        )
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x0 + self.width && y >= self.y0 && y < self.y0 + self.height
    }

    pub fn overlaps(&self, other: &Rect) -> bool {
        self.x0 < other.x0 + other.width
            && other.x0 < self.x0 + self.width
            && self.y0 < other.y0 + other.height
            && other.y0 < self.y0 + self.height
    }
}

/// Large non-respiratory motion: a constant offset of `magnitude_px` over
/// `[onset_s, onset_s + duration_s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distractor {
    pub onset_s: f64,
    pub duration_s: f64,
    pub magnitude_px: f64,
}

impl Distractor {
    /// Frames `[first, end)` carrying the offset.
    pub fn frame_range(&self, fs_hz: f64) -> (usize, usize) {
        let first = (self.onset_s * fs_hz).ceil().max(0.0) as usize;
        let end = ((self.onset_s + self.duration_s) * fs_hz).ceil().max(0.0) as usize;
        (first, end.max(first))
    }

    fn offset_at(&self, n: usize, fs_hz: f64) -> f64 {
        let (a, b) = self.frame_range(fs_hz);
        if (a..b).contains(&n) {
            self.magnitude_px
        } else {
            0.0
        }
    }
}

/// One moving region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSpec {
    pub rect: Rect,
    pub pattern: Pattern,
    pub f0_hz: f64,
    pub displacement_px: f64,
    pub distractor: Option<Distractor>,
    /// Peak deviation from the background, in `[0, 1]` intensity units.
    pub contrast: f64,
    /// Stripe period of the Gabor pattern. At 8 px the carrier sits on the
    /// Nyquist limit of the third pyramid level, whose phase then stops
    /// being linear in the shift.
    pub wavelength_px: f64,
}

impl RegionSpec {
    pub fn new(rect: Rect, pattern: Pattern, f0_hz: f64, displacement_px: f64) -> Self {
        Self {
            rect,
            pattern,
            f0_hz,
            displacement_px,
            distractor: None,
            contrast: 0.4,
            wavelength_px: 12.0,
        }
    }

    /// Vertical displacement at frame `n`.
    pub fn displacement(&self, n: usize, fs_hz: f64) -> f64 {
        let t = n as f64 / fs_hz;
        let breathing = self.displacement_px * (2.0 * PI * self.f0_hz * t).sin();
        breathing + self.distractor.map_or(0.0, |d| d.offset_at(n, fs_hz))
    }

    /// Deviation from the background at integer pixel `(x, y)` when the
    /// pattern is shifted down by `shift` pixels.
    fn value(&self, x: usize, y: usize, shift: f64) -> f64 {
        let (cx, cy) = self.rect.center();
        let dx = x as f64 - cx;
        let dy = y as f64 - shift - cy;
        let sigma = self.rect.width.min(self.rect.height) as f64 / 6.0;
        let env = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
        match self.pattern {
            Pattern::Gabor => self.contrast * env * (2.0 * PI * dy / self.wavelength_px).sin(),
            Pattern::Blob => self.contrast * env,
            Pattern::Gradient => self.contrast * (dy / (self.rect.height as f64 / 6.0)).tanh(),
        }
    }

    fn validate(&self, canvas: &Canvas) -> Result<()> {
        let r = &self.rect;
        if r.width == 0 || r.height == 0 || r.x0 + r.width > canvas.width || r.y0 + r.height > canvas.height {
            return Err(Error::SpecInvalid(format!("motion region {r:?} outside the canvas")));
        }
        if !(self.f0_hz >= 0.0 && self.f0_hz < canvas.fs_hz / 2.0) {
            return Err(Error::SpecInvalid(format!(
                "breathing frequency {} Hz not below fs/2 = {} Hz",
                self.f0_hz,
                canvas.fs_hz / 2.0
            )));
        }
        if !(self.displacement_px.abs() <= MAX_DISPLACEMENT_PX) {
            return Err(Error::SpecInvalid(format!(
                "displacement {} px exceeds {MAX_DISPLACEMENT_PX} px",
                self.displacement_px
            )));
        }
        if !(self.contrast.is_finite() && self.wavelength_px > 0.0) {
            return Err(Error::SpecInvalid("bad contrast or wavelength".into()));
        }
        if let Some(d) = self.distractor {
            if !(d.onset_s >= 0.0 && d.duration_s > 0.0 && d.magnitude_px.is_finite()) {
                return Err(Error::SpecInvalid("bad distractor".into()));
            }
        }
        Ok(())
    }
}

/// Frame geometry, timing and noise shared by every region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Canvas {
    pub width: usize,
    pub height: usize,
    pub fs_hz: f64,
    pub duration_s: f64,
    pub noise_sigma: f64,
    pub background: f64,
}

impl Canvas {
    pub fn num_frames(&self) -> usize {
        (self.duration_s * self.fs_hz).round() as usize
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::SpecInvalid("empty canvas".into()));
        }
        if !(self.fs_hz > 0.0 && self.duration_s > 0.0 && self.num_frames() >= 2) {
            return Err(Error::SpecInvalid("need fs > 0 and at least two frames".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::SpecInvalid("noise sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// Single-region video description.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub fs_hz: f64,
    pub duration_s: f64,
    pub f0_hz: f64,
    pub displacement_px: f64,
    pub pattern: Pattern,
    pub motion_region: Rect,
    pub noise_sigma: f64,
    /// With a flat background, offsetting the region is the same as
    /// shifting the whole frame.
    pub distractor: Option<Distractor>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            fs_hz: 30.0,
            duration_s: 60.0,
            f0_hz: 0.25,
            displacement_px: 1.0,
            pattern: Pattern::Gabor,
            motion_region: Rect::new(0, 0, 64, 64),
            noise_sigma: 0.01,
            distractor: None,
        }
    }
}

impl SynthSpec {
    pub fn canvas(&self) -> Canvas {
        Canvas {
            width: self.width,
            height: self.height,
            fs_hz: self.fs_hz,
            duration_s: self.duration_s,
            noise_sigma: self.noise_sigma,
            background: 0.5,
        }
    }

    pub fn region(&self) -> RegionSpec {
        RegionSpec {
            distractor: self.distractor,
            ..RegionSpec::new(self.motion_region, self.pattern, self.f0_hz, self.displacement_px)
        }
    }

    fn distractor_mut(&mut self) -> &mut Distractor {
        self.distractor.get_or_insert(Distractor {
            onset_s: 0.0,
            duration_s: 2.0,
            magnitude_px: 10.0,
        })
    }

    /// Sets one field from a `key=value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = |v: &str| -> Result<f64> {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::SpecInvalid(format!("{key}: not a number: {v:?}")))
        };
        let int = |v: &str| -> Result<usize> {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::SpecInvalid(format!("{key}: not an integer: {v:?}")))
        };
        match key.trim() {
            "width" => self.width = int(value)?,
            "height" => self.height = int(value)?,
            "fs_hz" => self.fs_hz = num(value)?,
            "duration_s" => self.duration_s = num(value)?,
            "f0_hz" => self.f0_hz = num(value)?,
            "displacement_px" => self.displacement_px = num(value)?,
            "pattern" => self.pattern = value.parse()?,
            "noise_sigma" => self.noise_sigma = num(value)?,
            "region" => {
                let parts: Vec<&str> = value.split(',').collect();
                if parts.len() != 4 {
                    return Err(Error::SpecInvalid("region expects x0,y0,width,height".into()));
                }
                self.motion_region = Rect::new(int(parts[0])?, int(parts[1])?, int(parts[2])?, int(parts[3])?);
            }
            "distractor_onset_s" => self.distractor_mut().onset_s = num(value)?,
            "distractor_duration_s" => self.distractor_mut().duration_s = num(value)?,
            "distractor_magnitude_px" => self.distractor_mut().magnitude_px = num(value)?,
            other => return Err(Error::SpecInvalid(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parses a flat `key=value` file; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = Self::default();
        let mut region_set = false;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::SpecInvalid(format!("line {}: expected key=value", lineno + 1)))?;
            region_set |= k.trim() == "region";
            spec.set(k, v)?;
        }
        if !region_set {
            spec.motion_region = Rect::new(0, 0, spec.width, spec.height);
        }
        Ok(spec)
    }
}

/// What the generator knows about the video it made.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub fs_hz: f64,
    pub num_frames: usize,
    /// Breathing frequency of the first region.
    pub f0_hz: f64,
    /// `(region index, first frame, end frame)` of every distractor.
    pub distractors: Vec<(usize, usize, usize)>,
    /// Per-region centers `(cx, cy)` at rest.
    pub centers: Vec<(f64, f64)>,
    /// Per-frame displacement of every region, `[region][n]`.
    pub displacement: Vec<Vec<f64>>,
}

/// Ground truth for one analysis window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowTruth {
    pub window: usize,
    pub f0_hz: f64,
    pub distractor: bool,
}

impl GroundTruth {
    /// Whether region `r`'s distractor moves within frames `start..end`,
    /// counting the frame it ends on (the jump back is a motion too).
    pub fn distractor_hits(&self, r: usize, start: usize, end: usize) -> bool {
        self.distractors
            .iter()
            .any(|&(reg, a, b)| reg == r && a < end && start <= b)
    }

    pub fn per_window(&self, windows: &[WindowSpan]) -> Vec<WindowTruth> {
        windows
            .iter()
            .map(|w| WindowTruth {
                window: w.index,
                f0_hz: self.f0_hz,
                distractor: self
                    .distractors
                    .iter()
                    .any(|&(_, a, b)| a < w.end && w.start <= b),
            })
            .collect()
    }

    /// Writes `window,f0_hz,distractor_flag`.
    pub fn write_csv<W: Write>(&self, out: W, windows: &[WindowSpan]) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["window", "f0_hz", "distractor_flag"])?;
        for t in self.per_window(windows) {
            w.write_record(&[t.window.to_string(), format!("{:.6}", t.f0_hz), (t.distractor as u8).to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn render_frame(canvas: &Canvas, regions: &[RegionSpec], n: usize, noise: Option<(u64, Normal<f64>)>) -> Plane {
    let shifts: Vec<f64> = regions.iter().map(|r| r.displacement(n, canvas.fs_hz)).collect();
    let mut frame = Plane::from_fn(canvas.width, canvas.height, |x, y| {
        let mut v = canvas.background;
        for (r, &s) in regions.iter().zip(&shifts) {
            if r.rect.contains(x, y) {
                v += r.value(x, y, s);
            }
        }
        v
    });
    if let Some((seed, normal)) = noise {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(n as u64);
        for v in frame.data_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    for v in frame.data_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    frame
}

/// Renders several non-overlapping regions on one canvas.
pub fn generate_multiroi(canvas: &Canvas, regions: &[RegionSpec], seed: u64) -> Result<(FrameSequence, GroundTruth)> {
    canvas.validate()?;
    if regions.is_empty() {
        return Err(Error::SpecInvalid("no motion region".into()));
    }
    for r in regions {
        r.validate(canvas)?;
    }
    for i in 0..regions.len() {
        for j in i + 1..regions.len() {
            if regions[i].rect.overlaps(&regions[j].rect) {
                return Err(Error::OverlappingRegions(i, j));
            }
        }
    }
    let normal = Normal::new(0.0, canvas.noise_sigma).map_err(|e| Error::SpecInvalid(e.to_string()))?;
    let noise = (canvas.noise_sigma > 0.0).then_some((seed, normal));
    let count = canvas.num_frames();
    let frames = (0..count).map(|n| render_frame(canvas, regions, n, noise)).collect();
    let seq = FrameSequence::new(frames, canvas.fs_hz)?;
    let truth = GroundTruth {
        fs_hz: canvas.fs_hz,
        num_frames: count,
        f0_hz: regions[0].f0_hz,
        distractors: regions
            .iter()
            .enumerate()
            .filter_map(|(i, r)| {
                r.distractor.map(|d| {
                    let (a, b) = d.frame_range(canvas.fs_hz);
                    (i, a, b)
                })
            })
            .collect(),
        centers: regions.iter().map(|r| r.rect.center()).collect(),
        displacement: regions
            .iter()
            .map(|r| (0..count).map(|n| r.displacement(n, canvas.fs_hz)).collect())
            .collect(),
    };
    Ok((seq, truth))
}

/// Renders a single-region video.
pub fn generate(spec: &SynthSpec, seed: u64) -> Result<(FrameSequence, GroundTruth)> {
    generate_multiroi(&spec.canvas(), &[spec.region()], seed)
}

/// Mean over the region of each pixel's temporal variance without noise.
pub fn signal_power(canvas: &Canvas, region: &RegionSpec) -> Result<f64> {
    let quiet = Canvas {
        noise_sigma: 0.0,
        ..*canvas
    };
    let (seq, _) = generate_multiroi(&quiet, std::slice::from_ref(region), 0)?;
    let r = region.rect;
    let n = seq.len() as f64;
    let mut total = 0.0;
    for y in r.y0..r.y0 + r.height {
        for x in r.x0..r.x0 + r.width {
            let (mut s, mut s2) = (0.0, 0.0);
            for f in seq.frames() {
                let v = f[(x, y)];
                s += v;
                s2 += v * v;
            }
            total += s2 / n - (s / n).powi(2);
        }
    }
    Ok(total / (r.width * r.height) as f64)
}

/// Noise standard deviation giving `snr_db` relative to [`signal_power`].
pub fn noise_sigma_for_snr(canvas: &Canvas, region: &RegionSpec, snr_db: f64) -> Result<f64> {
    Ok((signal_power(canvas, region)? / 10f64.powf(snr_db / 10.0)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec {
            width: 32,
            height: 32,
            duration_s: 4.0,
            motion_region: Rect::new(0, 0, 32, 32),
            ..SynthSpec::default()
        }
    }

    #[test]
    fn static_noiseless_video_is_constant() {
        let spec = SynthSpec {
            displacement_px: 0.0,
            noise_sigma: 0.0,
            ..small()
        };
        let (seq, _) = generate(&spec, 1).unwrap();
        let first = &seq.frames()[0];
        assert!(seq.frames().iter().all(|f| f == first));
    }

    #[test]
    fn seeded_output_is_bit_identical() {
        let (a, _) = generate(&small(), 42).unwrap();
        let (b, _) = generate(&small(), 42).unwrap();
        let (c, _) = generate(&small(), 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn frames_stay_in_unit_range() {
        let spec = SynthSpec {
            noise_sigma: 0.5,
            ..small()
        };
        let (seq, _) = generate(&spec, 3).unwrap();
        assert!(seq.frames().iter().flat_map(|f| f.data()).all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn invalid_specs() {
        let big = SynthSpec {
            displacement_px: 6.0,
            ..small()
        };
        assert!(matches!(generate(&big, 0), Err(Error::SpecInvalid(_))));
        let fast = SynthSpec { f0_hz: 15.0, ..small() };
        assert!(matches!(generate(&fast, 0), Err(Error::SpecInvalid(_))));
        let outside = SynthSpec {
            motion_region: Rect::new(20, 20, 20, 20),
            ..small()
        };
        assert!(matches!(generate(&outside, 0), Err(Error::SpecInvalid(_))));
    }

    #[test]
    fn overlapping_regions_rejected() {
        let canvas = small().canvas();
        let a = RegionSpec::new(Rect::new(0, 0, 16, 16), Pattern::Blob, 0.25, 1.0);
        let b = RegionSpec::new(Rect::new(10, 10, 16, 16), Pattern::Blob, 0.25, 1.0);
        assert!(matches!(
            generate_multiroi(&canvas, &[a, b], 0),
            Err(Error::OverlappingRegions(0, 1))
        ));
    }

    #[test]
    fn displacement_peaks_at_f0() {
        let spec = SynthSpec {
            duration_s: 20.0,
            f0_hz: 0.35,
            ..small()
        };
        let (_, truth) = generate(&spec, 0).unwrap();
        let d = &truth.displacement[0];
        let power = |f: f64| {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, v) in d.iter().enumerate() {
                let w = 2.0 * PI * f * n as f64 / spec.fs_hz;
                re += v * w.cos();
                im -= v * w.sin();
            }
            re * re + im * im
        };
        let grid: Vec<f64> = (0..=140).map(|k| 0.1 + k as f64 * 0.005).collect();
        let best = grid.iter().copied().max_by(|a, b| power(*a).total_cmp(&power(*b))).unwrap();
        assert!((best - 0.35).abs() < 1e-9);
    }

    #[test]
    fn subpixel_shift_is_exact_translation() {
        let region = RegionSpec::new(Rect::new(0, 0, 32, 32), Pattern::Gabor, 0.25, 1.0);
        // Shifting by s and sampling at y + s matches the unshifted pattern.
        for s in [0.25, 0.5, 1.0] {
            let a = region.value(10, 12, 0.0);
            let b = region.value(10, 12, s);
            let c = {
                let (cx, cy) = region.rect.center();
                let dx = 10.0 - cx;
                let dy = 12.0 - s - cy;
                let sigma = 32.0 / 6.0;
                0.4 * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp() * (2.0 * PI * dy / 12.0).sin()
            };
            assert!((b - c).abs() < 1e-15);
            assert!(s == 0.0 || (a - b).abs() > 1e-6);
        }
    }

    #[test]
    fn distractor_window_flags() {
        let mut spec = small();
        spec.duration_s = 10.0;
        spec.distractor = Some(Distractor {
            onset_s: 4.0,
            duration_s: 2.0,
            magnitude_px: 10.0,
        });
        let (_, truth) = generate(&spec, 0).unwrap();
        assert_eq!(truth.distractors, vec![(0, 120, 180)]);
        let w = |i, s, e| WindowSpan { index: i, start: s, end: e, warmup: false };
        let flags: Vec<bool> = truth
            .per_window(&[w(0, 0, 100), w(1, 60, 160), w(2, 180, 280), w(3, 181, 281)])
            .iter()
            .map(|t| t.distractor)
            .collect();
        assert_eq!(flags, vec![false, true, true, false]);
        let mut buf = Vec::new();
        truth.write_csv(&mut buf, &[w(0, 0, 100)]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "window,f0_hz,distractor_flag\n0,0.250000,0\n");
    }

    #[test]
    fn snr_helper() {
        let spec = small();
        let canvas = spec.canvas();
        let region = spec.region();
        let p = signal_power(&canvas, &region).unwrap();
        assert!(p > 0.0);
        let s = noise_sigma_for_snr(&canvas, &region, 10.0).unwrap();
        assert!((s * s * 10.0 - p).abs() < 1e-12);
    }

    #[test]
    fn spec_file_parsing() {
        let s = SynthSpec::parse(
            "width=48\nheight = 40 # comment\nf0_hz=0.3\npattern=blob\ndistractor_onset_s=5\n",
        )
        .unwrap();
        assert_eq!((s.width, s.height), (48, 40));
        assert_eq!(s.motion_region, Rect::new(0, 0, 48, 40));
        assert_eq!(s.pattern, Pattern::Blob);
        assert_eq!(s.distractor.unwrap().onset_s, 5.0);
        assert!(SynthSpec::parse("bogus=1").is_err());
        assert!(SynthSpec::parse("width").is_err());
    }
}
