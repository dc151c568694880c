//! Gaussian/Laplacian pyramids and the Riesz transform.
//!
//! `reduce` low-passes with a separable 5-tap Burt–Adelson kernel and keeps
//! every other sample; `expand` interpolates back with the same kernel
//! (only the taps landing on integer coarse indices contribute, hence the
//! factor of 4 in 2-D). Borders replicate the edge pixel. Odd sizes halve
//! with a ceiling, and `expand` takes the target size explicitly so parity
//! survives the round trip.
//!
//! The Riesz transform is evaluated exactly in the frequency domain with
//! periodic extension: `R_i = F⁻¹(−j ω_i/‖ω‖ · F(p))`, with DC mapped to
//! zero.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::plane::Plane;
use crate::tolerance::Tolerances;

/// Separable low-pass kernel `w[k1, k2] = w1[k1] · w1[k2]`, `k ∈ [-R, R]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidKernel {
    taps: Vec<f64>,
}

impl PyramidKernel {
    /// Burt–Adelson generating kernel `[1/4 − a/2, 1/4, a, 1/4, 1/4 − a/2]`.
    pub fn burt_adelson(a: f64) -> Self {
        let e = 0.25 - a / 2.0;
        Self {
            taps: vec![e, 0.25, a, 0.25, e],
        }
    }

    /// Builds a kernel from odd-length symmetric taps summing to one.
    pub fn from_taps(taps: Vec<f64>) -> Result<Self> {
        let symmetric = taps
            .iter()
            .zip(taps.iter().rev())
            .all(|(a, b)| (a - b).abs() < 1e-12);
        let sum: f64 = taps.iter().sum();
        if taps.len() % 2 == 0 || !symmetric || (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(
                "pyramid kernel taps must be odd-length, symmetric and sum to 1".into(),
            ));
        }
        Ok(Self { taps })
    }

    /// `R_M`: the kernel spans `2R + 1` taps.
    pub fn radius(&self) -> usize {
        self.taps.len() / 2
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Tap for offset `k ∈ [-R, R]`.
    #[inline]
    pub fn tap(&self, k: isize) -> f64 {
        self.taps[(k + self.radius() as isize) as usize]
    }

    /// The full `(2R+1) x (2R+1)` mask.
    pub fn weights(&self) -> Plane {
        let n = self.taps.len();
        Plane::from_fn(n, n, |x, y| self.taps[x] * self.taps[y])
    }
}

impl Default for PyramidKernel {
    fn default() -> Self {
        Self::burt_adelson(0.375)
    }
}

#[inline]
fn half_ceil(n: usize) -> usize {
    n.div_ceil(2)
}

/// Size of pyramid level `m` for a `width x height` base.
pub fn level_dims(width: usize, height: usize, m: usize) -> (usize, usize) {
    (0..m).fold((width, height), |(w, h), _| (half_ceil(w), half_ceil(h)))
}

/// `g_m[u] = Σ_k w[k] g_{m-1}[2u - k]`.
pub fn reduce(level: &Plane, kernel: &PyramidKernel) -> Result<Plane> {
    let (w, h) = level.dims();
    if w < 2 || h < 2 {
        return Err(Error::TooSmall { width: w, height: h });
    }
    let r = kernel.radius() as isize;
    let (ow, oh) = (half_ceil(w), half_ceil(h));

    let mut rows = Plane::zeros(ow, h);
    for y in 0..h {
        for ox in 0..ow {
            let c = 2 * ox as isize;
            let mut acc = 0.0;
            for k in -r..=r {
                acc += kernel.tap(k) * level.get_clamped(c - k, y as isize);
            }
            rows[(ox, y)] = acc;
        }
    }
    let mut out = Plane::zeros(ow, oh);
    for oy in 0..oh {
        let c = 2 * oy as isize;
        for x in 0..ow {
            let mut acc = 0.0;
            for k in -r..=r {
                acc += kernel.tap(k) * rows.get_clamped(x as isize, c - k);
            }
            out[(x, oy)] = acc;
        }
    }
    Ok(out)
}

/// `ĝ[u] = 4 Σ_k w[k] g[(u - k)/2]` over the taps where `u - k` is even.
pub fn expand(level: &Plane, target: (usize, usize), kernel: &PyramidKernel) -> Result<Plane> {
    let (w, h) = level.dims();
    let (tw, th) = target;
    if half_ceil(tw) != w || half_ceil(th) != h || w == 0 || h == 0 {
        return Err(Error::DimMismatch {
            from_w: w,
            from_h: h,
            to_w: tw,
            to_h: th,
        });
    }
    let r = kernel.radius() as isize;

    // Per axis the surviving taps sum to 1/2, hence the factor 2 per pass.
    let mut rows = Plane::zeros(tw, h);
    for y in 0..h {
        for x in 0..tw {
            let mut acc = 0.0;
            for k in -r..=r {
                let d = x as isize - k;
                if d.rem_euclid(2) == 0 {
                    acc += kernel.tap(k) * level.get_clamped(d.div_euclid(2), y as isize);
                }
            }
            rows[(x, y)] = 2.0 * acc;
        }
    }
    let mut out = Plane::zeros(tw, th);
    for y in 0..th {
        for x in 0..tw {
            let mut acc = 0.0;
            for k in -r..=r {
                let d = y as isize - k;
                if d.rem_euclid(2) == 0 {
                    acc += kernel.tap(k) * rows.get_clamped(x as isize, d.div_euclid(2));
                }
            }
            out[(x, y)] = 2.0 * acc;
        }
    }
    Ok(out)
}

/// Laplacian pyramid: band-pass levels `p_0 .. p_{M-2}` plus the low-pass
/// residual `p_{M-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianStack {
    levels: Vec<Plane>,
}

impl LaplacianStack {
    /// Wraps precomputed levels, finest first.
    pub fn from_levels(levels: Vec<Plane>) -> Self {
        assert!(levels.len() >= 2, "a stack needs at least two levels");
        Self { levels }
    }

    pub fn levels(&self) -> &[Plane] {
        &self.levels
    }

    pub fn into_levels(self) -> Vec<Plane> {
        self.levels
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn residual(&self) -> &Plane {
        self.levels.last().expect("stack has at least two levels")
    }

    pub fn geometry(&self) -> Vec<(usize, usize)> {
        self.levels.iter().map(Plane::dims).collect()
    }
}

/// Decomposes `frame` into `num_levels` Laplacian levels.
pub fn build_laplacian(frame: &Plane, num_levels: usize, kernel: &PyramidKernel) -> Result<LaplacianStack> {
    if num_levels < 2 {
        return Err(Error::InvalidConfig(format!(
            "a pyramid needs at least 2 levels, got {num_levels}"
        )));
    }
    let (w, h) = frame.dims();
    let (tw, th) = level_dims(w, h, num_levels - 1);
    if tw < 2 || th < 2 {
        return Err(Error::TooManyLevels {
            levels: num_levels,
            width: w,
            height: h,
        });
    }

    let mut gauss = Vec::with_capacity(num_levels);
    gauss.push(frame.clone());
    for m in 1..num_levels {
        let next = reduce(&gauss[m - 1], kernel)?;
        gauss.push(next);
    }
    let mut levels = Vec::with_capacity(num_levels);
    for m in 0..num_levels - 1 {
        let up = expand(&gauss[m + 1], gauss[m].dims(), kernel)?;
        levels.push(gauss[m].zip_map(&up, |g, e| g - e));
    }
    levels.push(gauss.pop().expect("non-empty"));
    Ok(LaplacianStack { levels })
}

/// Inverse of [`build_laplacian`].
pub fn collapse(stack: &LaplacianStack, kernel: &PyramidKernel) -> Result<Plane> {
    let mut acc = stack.residual().clone();
    for p in stack.levels.iter().rev().skip(1) {
        let up = expand(&acc, p.dims(), kernel)?;
        acc = p.zip_map(&up, |a, b| a + b);
    }
    Ok(acc)
}

/// Riesz components `(r1, r2)` of one level.
#[derive(Debug, Clone, PartialEq)]
pub struct RieszPair {
    pub r1: Plane,
    pub r2: Plane,
}

/// A level together with its Riesz components.
#[derive(Debug, Clone, PartialEq)]
pub struct MonogenicLevel {
    pub p: Plane,
    pub r1: Plane,
    pub r2: Plane,
}

/// Monogenic triples for levels `0 .. M-2` plus the untouched residual.
#[derive(Debug, Clone, PartialEq)]
pub struct RieszStack {
    pub bands: Vec<MonogenicLevel>,
    pub residual: Plane,
}

impl RieszStack {
    pub fn geometry(&self) -> Vec<(usize, usize)> {
        self.bands
            .iter()
            .map(|b| b.p.dims())
            .chain(std::iter::once(self.residual.dims()))
            .collect()
    }
}

/// Frequency-domain Riesz transform with cached FFT plans.
pub struct RieszTransformer {
    planner: FftPlanner<f64>,
    tol: Tolerances,
}

impl Default for RieszTransformer {
    fn default() -> Self {
        Self::new()
    }
}

impl RieszTransformer {
    pub fn new() -> Self {
        Self {
            planner: FftPlanner::new(),
            tol: Tolerances::DEFAULT,
        }
    }

    pub fn transform(&mut self, level: &Plane) -> RieszPair {
        let (pair, residue) = self.transform_with_residue(level);
        let scale: f64 = level.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        debug_assert!(
            residue <= self.tol.riesz_imag_rel * scale.max(f64::MIN_POSITIVE),
            "riesz imaginary residue {residue} too large"
        );
        pair
    }

    /// Also returns the largest imaginary magnitude discarded after the
    /// inverse transform.
    pub fn transform_with_residue(&mut self, level: &Plane) -> (RieszPair, f64) {
        let (w, h) = level.dims();
        let row_fwd = self.planner.plan_fft_forward(w);
        let col_fwd = self.planner.plan_fft_forward(h);
        let row_inv = self.planner.plan_fft_inverse(w);
        let col_inv = self.planner.plan_fft_inverse(h);

        let mut spec: Vec<Complex<f64>> = level.data().iter().map(|&v| Complex::new(v, 0.0)).collect();
        fft_2d(&mut spec, w, h, &row_fwd, &col_fwd);

        let mut s1 = spec.clone();
        let mut s2 = spec;
        let two_pi = 2.0 * std::f64::consts::PI;
        for ky in 0..h {
            let wy = signed_freq(ky, h) * two_pi / h as f64;
            let nyq_y = h % 2 == 0 && ky == h / 2;
            for kx in 0..w {
                let idx = ky * w + kx;
                let wx = signed_freq(kx, w) * two_pi / w as f64;
                let nyq_x = w % 2 == 0 && kx == w / 2;
                let mag = (wx * wx + wy * wy).sqrt();
                if mag == 0.0 {
                    s1[idx] = Complex::new(0.0, 0.0);
                    s2[idx] = Complex::new(0.0, 0.0);
                    continue;
                }
                // −j·ω/‖ω‖; an odd response cannot stay real at a Nyquist bin.
                let h1 = if nyq_x { 0.0 } else { wx / mag };
                let h2 = if nyq_y { 0.0 } else { wy / mag };
                s1[idx] *= Complex::new(0.0, -h1);
                s2[idx] *= Complex::new(0.0, -h2);
            }
        }
        fft_2d(&mut s1, w, h, &row_inv, &col_inv);
        fft_2d(&mut s2, w, h, &row_inv, &col_inv);

        let norm = 1.0 / (w * h) as f64;
        let residue = s1
            .iter()
            .chain(&s2)
            .map(|c| (c.im * norm).abs())
            .fold(0.0, f64::max);
        let r1 = Plane::from_vec(w, h, s1.iter().map(|c| c.re * norm).collect());
        let r2 = Plane::from_vec(w, h, s2.iter().map(|c| c.re * norm).collect());
        (RieszPair { r1, r2 }, residue)
    }

    /// Applies the transform to every band-pass level of `stack`.
    pub fn build_riesz(&mut self, stack: &LaplacianStack) -> RieszStack {
        let levels = stack.levels();
        let bands = levels[..levels.len() - 1]
            .iter()
            .map(|p| {
                let RieszPair { r1, r2 } = self.transform(p);
                MonogenicLevel { p: p.clone(), r1, r2 }
            })
            .collect();
        RieszStack {
            bands,
            residual: stack.residual().clone(),
        }
    }
}

/// One-shot convenience wrapper around [`RieszTransformer::transform`].
pub fn riesz_transform(level: &Plane) -> RieszPair {
    RieszTransformer::new().transform(level)
}

/// One-shot convenience wrapper around [`RieszTransformer::build_riesz`].
pub fn build_riesz(stack: &LaplacianStack) -> RieszStack {
    RieszTransformer::new().build_riesz(stack)
}

fn signed_freq(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

fn fft_2d(
    buf: &mut [Complex<f64>],
    w: usize,
    h: usize,
    row: &Arc<dyn Fft<f64>>,
    col: &Arc<dyn Fft<f64>>,
) {
    for r in buf.chunks_exact_mut(w) {
        row.process(r);
    }
    let mut column = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = buf[y * w + x];
        }
        col.process(&mut column);
        for y in 0..h {
            buf[y * w + x] = column[y];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn burt_adelson_taps() {
        let k = PyramidKernel::default();
        assert_eq!(k.taps(), &[0.0625, 0.25, 0.375, 0.25, 0.0625]);
        assert_eq!(k.radius(), 2);
        assert!((k.weights().data().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(PyramidKernel::from_taps(vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn reduce_constant_and_sizes() {
        let k = PyramidKernel::default();
        let c = Plane::filled(64, 64, 0.37);
        let r = reduce(&c, &k).unwrap();
        assert_eq!(r.dims(), (32, 32));
        assert!(r.data().iter().all(|&v| (v - 0.37).abs() < 1e-15));
        assert_eq!(reduce(&r, &k).unwrap().dims(), (16, 16));
        assert_eq!(reduce(&Plane::zeros(5, 7), &k).unwrap().dims(), (3, 4));
        assert!(matches!(reduce(&Plane::zeros(1, 7), &k), Err(Error::TooSmall { .. })));
    }

    #[test]
    fn reduce_impulse_matches_hand_convolution() {
        let k = PyramidKernel::default();
        let mut imp = Plane::zeros(4, 4);
        imp[(0, 0)] = 1.0;
        let r = reduce(&imp, &k).unwrap();

        // Independent direct 2-D sum with clamped indices.
        let w = k.weights();
        let oracle = |ox: usize, oy: usize| {
            let mut acc = 0.0;
            for k2 in -2isize..=2 {
                for k1 in -2isize..=2 {
                    let sx = (2 * ox as isize - k1).clamp(0, 3);
                    let sy = (2 * oy as isize - k2).clamp(0, 3);
                    if sx == 0 && sy == 0 {
                        acc += w[((k1 + 2) as usize, (k2 + 2) as usize)];
                    }
                }
            }
            acc
        };
        for oy in 0..2 {
            for ox in 0..2 {
                assert!((r[(ox, oy)] - oracle(ox, oy)).abs() < 1e-15);
            }
        }
        // w[0,0] plus the taps folded onto the corner by replication.
        assert!((r[(0, 0)] - 0.6875 * 0.6875).abs() < 1e-15);
        assert!((r[(1, 0)] - 0.0625 * 0.6875).abs() < 1e-15);
    }

    #[test]
    fn expand_constant_and_ramp() {
        let k = PyramidKernel::default();
        let c = Plane::filled(5, 4, 0.8);
        let e = expand(&c, (9, 8), &k).unwrap();
        assert_eq!(e.dims(), (9, 8));
        assert!(e.data().iter().all(|&v| (v - 0.8).abs() < 1e-14));

        let ramp = Plane::from_fn(64, 64, |x, y| (x + y) as f64 / 126.0);
        let back = expand(&reduce(&ramp, &k).unwrap(), (64, 64), &k).unwrap();
        // Interior of a linear ramp is reproduced exactly; edge replication
        // bends it slightly at the border.
        assert!(back.max_abs_diff(&ramp) < 0.02);

        assert!(matches!(expand(&c, (12, 8), &k), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn laplacian_geometry_and_constant() {
        let k = PyramidKernel::default();
        let f = Plane::filled(360, 288, 0.4);
        let s = build_laplacian(&f, 3, &k).unwrap();
        assert_eq!(s.geometry(), vec![(360, 288), (180, 144), (90, 72)]);
        for p in &s.levels()[..2] {
            assert!(p.data().iter().all(|v| v.abs() < 1e-14));
        }
        assert!(s.residual().data().iter().all(|&v| (v - 0.4).abs() < 1e-14));
        assert!(matches!(
            build_laplacian(&Plane::zeros(8, 8), 4, &k),
            Err(Error::TooManyLevels { .. })
        ));
        assert!(build_laplacian(&Plane::zeros(8, 8), 3, &k).is_ok());
    }

    #[test]
    fn collapse_reconstructs_odd_sizes() {
        let k = PyramidKernel::default();
        let f = Plane::from_fn(37, 23, |x, y| ((x * 7 + y * 13) % 11) as f64 / 11.0);
        let s = build_laplacian(&f, 4, &k).unwrap();
        assert!(collapse(&s, &k).unwrap().max_abs_diff(&f) < 1e-12);
    }

    #[test]
    fn riesz_of_constant_is_zero() {
        let pair = riesz_transform(&Plane::filled(16, 12, 3.0));
        assert!(pair.r1.data().iter().all(|v| v.abs() < 1e-12));
        assert!(pair.r2.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn riesz_is_hilbert_along_each_axis() {
        let w0 = 2.0 * PI * 5.0 / 64.0;
        let along_x = Plane::from_fn(64, 48, |x, _| (w0 * x as f64).cos());
        let (pair, residue) = RieszTransformer::new().transform_with_residue(&along_x);
        assert!(residue < 1e-12);
        for y in 0..48 {
            for x in 0..64 {
                assert!((pair.r1[(x, y)] - (w0 * x as f64).sin()).abs() < 1e-6);
                assert!(pair.r2[(x, y)].abs() < 1e-6);
            }
        }

        let v0 = 2.0 * PI * 3.0 / 48.0;
        let along_y = Plane::from_fn(64, 48, |_, y| (v0 * y as f64).cos());
        let pair = riesz_transform(&along_y);
        for y in 0..48 {
            for x in 0..64 {
                assert!(pair.r1[(x, y)].abs() < 1e-6);
                assert!((pair.r2[(x, y)] - (v0 * y as f64).sin()).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn riesz_residue_stays_real_on_odd_and_even_grids() {
        let f = Plane::from_fn(21, 16, |x, y| ((x * 31 + y * 17) % 7) as f64 - 3.0);
        let (_, residue) = RieszTransformer::new().transform_with_residue(&f);
        let norm = f.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(residue < 1e-8 * norm);
    }

    #[test]
    fn build_riesz_shapes() {
        let k = PyramidKernel::default();
        let f = Plane::filled(40, 30, 0.5);
        let s = build_laplacian(&f, 3, &k).unwrap();
        let r = build_riesz(&s);
        assert_eq!(r.bands.len(), 2);
        assert_eq!(r.geometry(), s.geometry());
        for b in &r.bands {
            assert_eq!(b.r1.dims(), b.p.dims());
            assert!(b.r1.data().iter().chain(b.r2.data()).all(|v| v.abs() < 1e-12));
        }
        assert_eq!(r.residual, *s.residual());
    }
}
