//! Scoring per-window estimates against a reference.

use std::fmt;
use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Lowest dB value printed as a number; anything below is shown as a floor.
pub const DB_FLOOR: f64 = -60.0;

/// Default relative tolerance of the acceptance band.
pub const DEFAULT_BAND_PCT: f64 = 0.15;

/// `sqrt(Σ (f̂ − f)² / Σ f²)` over the windows not flagged in `skip`.
pub fn normalized_rmse(est: &[f64], reference: &[f64], skip: Option<&[bool]>) -> Result<f64> {
    if est.len() != reference.len() || skip.is_some_and(|s| s.len() != est.len()) {
        return Err(Error::LengthMismatch {
            est: est.len(),
            reference: reference.len(),
        });
    }
    let (mut num, mut den, mut used) = (0.0, 0.0, 0usize);
    for (i, (e, r)) in est.iter().zip(reference).enumerate() {
        if skip.is_some_and(|s| s[i]) {
            continue;
        }
        num += (e - r) * (e - r);
        den += r * r;
        used += 1;
    }
    if used == 0 {
        return Err(Error::LengthMismatch {
            est: 0,
            reference: 0,
        });
    }
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((num / den).sqrt())
}

/// `factor · log10(rmse)`; `factor` is 20 for amplitude ratios.
pub fn to_db(rmse: f64, factor: f64) -> f64 {
    factor * rmse.log10()
}

/// Formats a dB value, printing anything below [`DB_FLOOR`] as `< -60 dB`.
pub fn format_db(db: f64) -> String {
    if db < DB_FLOOR || db.is_nan() {
        format!("< {DB_FLOOR:.0} dB")
    } else {
        format!("{db:.2} dB")
    }
}

/// `((1 − pct) f, (1 + pct) f)` for every reference value.
pub fn tolerance_band(reference: &[f64], pct: f64) -> Vec<(f64, f64)> {
    assert!(pct > 0.0, "tolerance must be positive");
    reference.iter().map(|&f| ((1.0 - pct) * f, (1.0 + pct) * f)).collect()
}

pub fn in_band(est: &[f64], band: &[(f64, f64)]) -> Vec<bool> {
    est.iter()
        .zip(band)
        .map(|(&e, &(lo, hi))| lo <= e && e <= hi)
        .collect()
}

/// Halves an estimate whenever its half is strictly closer to the reference.
pub fn genie_correct(est: &[f64], reference: &[f64]) -> Vec<f64> {
    est.iter()
        .zip(reference)
        .map(|(&e, &r)| if (e / 2.0 - r).abs() < (e - r).abs() { e / 2.0 } else { e })
        .collect()
}

/// Summary of one scored run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rmse: f64,
    pub rmse_db: f64,
    pub db_factor: f64,
    /// `f̂ − f` for every window (warm-up windows included).
    pub errors: Vec<f64>,
    pub in_band_fraction: f64,
    pub band_pct: f64,
    /// Windows that entered the RMSE.
    pub num_windows: usize,
    pub warmup_excluded: bool,
    pub genie: bool,
}

/// Options for [`evaluate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub band_pct: f64,
    pub db_factor: f64,
    pub genie: bool,
    pub exclude_warmup: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            band_pct: DEFAULT_BAND_PCT,
            db_factor: 20.0,
            genie: false,
            exclude_warmup: true,
        }
    }
}

pub fn evaluate(est: &[f64], reference: &[f64], warmup: &[bool], opts: &EvalOptions) -> Result<EvalReport> {
    if est.len() != reference.len() || warmup.len() != est.len() {
        return Err(Error::LengthMismatch {
            est: est.len(),
            reference: reference.len(),
        });
    }
    let est = if opts.genie {
        genie_correct(est, reference)
    } else {
        est.to_vec()
    };
    let skip = opts.exclude_warmup.then_some(warmup);
    let rmse = normalized_rmse(&est, reference, skip)?;
    let band = tolerance_band(reference, opts.band_pct);
    let hits = in_band(&est, &band);
    let considered: Vec<bool> = (0..est.len()).map(|i| !(opts.exclude_warmup && warmup[i])).collect();
    let num_windows = considered.iter().filter(|&&c| c).count();
    let inside = hits.iter().zip(&considered).filter(|(&h, &c)| h && c).count();
    Ok(EvalReport {
        rmse,
        rmse_db: to_db(rmse, opts.db_factor),
        db_factor: opts.db_factor,
        errors: est.iter().zip(reference).map(|(e, r)| e - r).collect(),
        in_band_fraction: inside as f64 / num_windows as f64,
        band_pct: opts.band_pct,
        num_windows,
        warmup_excluded: opts.exclude_warmup,
        genie: opts.genie,
    })
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "windows scored: {}", self.num_windows)?;
        writeln!(f, "warm-up excluded: {}", self.warmup_excluded)?;
        writeln!(f, "genie correction: {}", self.genie)?;
        writeln!(f, "normalized RMSE: {:.4}", self.rmse)?;
        writeln!(
            f,
            "normalized RMSE ({:.0}·log10): {}",
            self.db_factor,
            format_db(self.rmse_db)
        )?;
        writeln!(
            f,
            "within ±{:.0}%: {:.1}%",
            100.0 * self.band_pct,
            100.0 * self.in_band_fraction
        )
    }
}

impl EvalReport {
    /// Writes `window,error_hz` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["window", "error_hz"])?;
        for (i, e) in self.errors.iter().enumerate() {
            w.write_record(&[i.to_string(), format!("{e:.6}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads a `window,f0_hz` reference. Row `k` of the result belongs to
/// estimation window `k`; `offset` is added to the file's window index
/// before alignment. Windows absent from the file are `None`.
pub fn read_reference_csv<R: Read>(input: R, offset: i64, num_windows: usize) -> Result<Vec<Option<f64>>> {
    let mut rd = csv::Reader::from_reader(input);
    let mut out = vec![None; num_windows];
    for rec in rd.records() {
        let rec = rec?;
        let bad = |what: &str| Error::InvalidConfig(format!("reference csv: bad {what}"));
        let window: i64 = rec.get(0).ok_or_else(|| bad("row"))?.trim().parse().map_err(|_| bad("window"))?;
        let f0: f64 = rec.get(1).ok_or_else(|| bad("row"))?.trim().parse().map_err(|_| bad("f0_hz"))?;
        let k = window + offset;
        if (0..num_windows as i64).contains(&k) {
            out[k as usize] = Some(f0);
        }
    }
    Ok(out)
}

/// Writes `t,f_est,f_ref,lo,hi` rows; `t` is the window center in seconds.
pub fn write_plot_data<W: Write>(out: W, t: &[f64], est: &[f64], reference: &[f64], pct: f64) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "f_est", "f_ref", "lo", "hi"])?;
    for (((&t, &e), &r), (lo, hi)) in t.iter().zip(est).zip(reference).zip(tolerance_band(reference, pct)) {
        w.write_record(&[
            format!("{t:.3}"),
            format!("{e:.6}"),
            format!("{r:.6}"),
            format!("{lo:.6}"),
            format!("{hi:.6}"),
        ])?;
    }
    w.flush()?;
    Ok(())
}
