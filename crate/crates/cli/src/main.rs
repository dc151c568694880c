use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rrmag::estimator::{read_results_csv, window_slicer, write_results_csv, WindowingConfig};
use rrmag::eval::{evaluate, read_reference_csv, write_plot_data, EvalOptions, DEFAULT_BAND_PCT};
use rrmag::frame_io::{load_sequence, save_pgm, save_y8, FrameSequence};
use rrmag::pipeline::{parse_kv, run_estimate, MotionSignals, RunConfig};
use rrmag::roi::select_rois;
use rrmag::synth::{generate, SynthSpec};
use rrmag::Plane;

/// Respiratory rate from video by motion magnification.
#[derive(Parser)]
#[command(name = "rrmag", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the breathing rate of a video, one row per analysis window.
    Estimate(EstimateArgs),
    /// Render a synthetic breathing video with its ground truth.
    Synth(SynthArgs),
    /// Score a results CSV against a reference.
    Eval(EvalArgs),
    /// Select ROIs and dump the amplitude map.
    Roi(RoiArgs),
}

/// Run configuration; flags override `--config`, which overrides the profile.
#[derive(Args)]
struct ConfigArgs {
    /// Flat key=value file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    method: Option<String>,
    /// adult or newborn.
    #[arg(long)]
    profile: Option<String>,
    /// Frame rate; required for frame directories.
    #[arg(long)]
    fs: Option<f64>,
    #[arg(long)]
    window_s: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    /// ROI count; 0 analyzes the whole frame.
    #[arg(long)]
    rois: Option<usize>,
    #[arg(long)]
    roi_size: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Periodicity threshold, or `auto`.
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            pairs.extend(parse_kv(&text)?);
        }
        for o in &self.overrides {
            let (k, v) = o.split_once('=').with_context(|| format!("--set {o:?}: expected key=value"))?;
            pairs.push((k.to_string(), v.to_string()));
        }
        let flags = [
            ("method", self.method.clone()),
            ("profile", self.profile.clone()),
            ("fs_hz", self.fs.map(|v| v.to_string())),
            ("window_s", self.window_s.map(|v| v.to_string())),
            ("rho", self.rho.map(|v| v.to_string())),
            ("rois", self.rois.map(|v| v.to_string())),
            ("roi_size", self.roi_size.map(|v| v.to_string())),
            ("alpha", self.alpha.map(|v| v.to_string())),
            ("eta", self.eta.clone()),
            ("seed", self.seed.map(|v| v.to_string())),
        ];
        pairs.extend(flags.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
        Ok(RunConfig::from_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))?)
    }
}

#[derive(Args)]
struct EstimateArgs {
    /// A `.y8` file or a directory of PGM/PNG frames.
    input: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// Results CSV; the resolved config goes to `<out>.config`.
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
    /// Also dump the motion signals fed to the estimator.
    #[arg(long)]
    signals: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Flat key=value video description; defaults apply when omitted.
    spec: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output `.y8` video (a `.meta` sidecar is written next to it).
    #[arg(long, default_value = "synth.y8")]
    out: PathBuf,
    /// Per-window ground truth; defaults to `<out>.truth.csv`.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Window length used to lay out the ground truth.
    #[arg(long, default_value_t = 20.0)]
    window_s: f64,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
}

#[derive(Args)]
struct EvalArgs {
    results: PathBuf,
    /// `window,f0_hz` reference, e.g. a synth ground-truth file.
    reference: PathBuf,
    /// Fold estimates that are closer to the reference when halved.
    #[arg(long)]
    genie: bool,
    /// Added to reference window indices before alignment.
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    offset: i64,
    #[arg(long, default_value_t = DEFAULT_BAND_PCT)]
    band_pct: f64,
    #[arg(long, default_value_t = 20.0)]
    db_factor: f64,
    /// Score warm-up windows too.
    #[arg(long)]
    include_warmup: bool,
    /// Per-window report CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `t,f_est,f_ref,lo,hi` rows for plotting.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct RoiArgs {
    input: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// Manifest with one `r,cx,cy,W` line per ROI.
    #[arg(long, default_value = "rois.csv")]
    out: PathBuf,
    /// PGM heatmap of the amplitude map.
    #[arg(long)]
    heatmap: Option<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load(input: &Path, cfg: &RunConfig) -> Result<FrameSequence> {
    load_sequence(input, cfg.fs_hz).with_context(|| format!("loading {}", input.display()))
}

fn write_signals(path: &Path, s: &MotionSignals, label: &str, out: &mut impl Write) -> Result<()> {
    for (k, ch) in s.channels.iter().enumerate() {
        let (m, c) = (k / s.comps, k % s.comps);
        for (n, v) in ch.iter().enumerate() {
            writeln!(out, "{label},{n},{:.6},{m},{c},{v:e}", n as f64 / s.fs_hz)
                .with_context(|| format!("writing {}", path.display()))?;
        }
    }
    Ok(())
}

/// Returns `true` when at least one window produced an estimate.
fn cmd_estimate(a: &EstimateArgs) -> Result<bool> {
    let cfg = a.config.resolve()?;
    let seq = load(&a.input, &cfg)?;
    let out = run_estimate(&seq, &cfg)?;
    write_results_csv(create(&a.out)?, &out.results)?;
    let echo = format!("{}eta_resolved={}\n", cfg.render(), out.eta);
    fs::write(with_suffix(&a.out, ".config"), echo)?;
    if let Some(path) = &a.signals {
        let mut w = create(path)?;
        writeln!(w, "source,n,t_s,m,c,value")?;
        if let Some(s) = &out.signals {
            write_signals(path, s, "frame", &mut w)?;
        }
        for (e, epoch) in out.epochs.iter().enumerate() {
            for (r, s) in epoch.signals.iter().enumerate() {
                write_signals(path, s, &format!("epoch{e}_roi{r}"), &mut w)?;
            }
        }
        w.flush()?;
    }
    Ok(out.valid_windows() > 0)
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    // Overrides are appended as extra lines so the region still tracks the
    // frame size when neither sets it.
    let mut text = match &a.spec {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    for o in &a.overrides {
        if !o.contains('=') {
            bail!("--set {o:?}: expected key=value");
        }
        text.push('\n');
        text.push_str(o);
    }
    let spec = SynthSpec::parse(&text)?;
    let (seq, truth) = generate(&spec, a.seed)?;
    save_y8(&seq, &a.out)?;
    let windows = window_slicer(
        seq.len(),
        &WindowingConfig {
            window_s: a.window_s,
            rho: a.rho,
        },
        seq.fs_hz(),
    )?;
    let truth_path = a.truth.clone().unwrap_or_else(|| with_suffix(&a.out, ".truth.csv"));
    truth.write_csv(create(&truth_path)?, &windows)?;
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let rows = read_results_csv(BufReader::new(File::open(&a.results).with_context(|| format!("opening {}", a.results.display()))?))?;
    let reference = read_reference_csv(
        BufReader::new(File::open(&a.reference).with_context(|| format!("opening {}", a.reference.display()))?),
        a.offset,
        rows.len(),
    )?;
    // Windows without a reference or without an estimate cannot be scored.
    let scored: Vec<(usize, f64)> = rows
        .iter()
        .zip(&reference)
        .enumerate()
        .filter_map(|(k, (r, f))| f.filter(|_| r.f0_hz.is_finite()).map(|f| (k, f)))
        .collect();
    if scored.is_empty() {
        bail!("no window has both an estimate and a reference");
    }
    let est: Vec<f64> = scored.iter().map(|&(k, _)| rows[k].f0_hz).collect();
    let refs: Vec<f64> = scored.iter().map(|&(_, f)| f).collect();
    let warm: Vec<bool> = scored.iter().map(|&(k, _)| rows[k].warmup).collect();
    let opts = EvalOptions {
        band_pct: a.band_pct,
        db_factor: a.db_factor,
        genie: a.genie,
        exclude_warmup: !a.include_warmup,
    };
    let report = evaluate(&est, &refs, &warm, &opts)?;
    println!("{report}");
    if scored.len() < rows.len() {
        println!("unscored windows: {}", rows.len() - scored.len());
    }
    if let Some(p) = &a.out {
        report.write_csv(create(p)?)?;
    }
    if let Some(p) = &a.plot {
        let t: Vec<f64> = scored.iter().map(|&(k, _)| 0.5 * (rows[k].t_start_s + rows[k].t_end_s)).collect();
        let shown = if a.genie { rrmag::eval::genie_correct(&est, &refs) } else { est };
        write_plot_data(create(p)?, &t, &shown, &refs, a.band_pct)?;
    }
    Ok(())
}

fn cmd_roi(a: &RoiArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let seq = load(&a.input, &cfg)?;
    let roi_cfg = cfg.roi_config();
    let rois = select_rois(&seq, &roi_cfg, &cfg.estimator_config(0.0))?;
    rois.write_manifest(create(&a.out)?)?;
    if let Some(path) = &a.heatmap {
        let map = &rois.amplitude_map;
        let peak = map.data().iter().cloned().fold(0.0, f64::max);
        let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
        let norm = Plane::from_vec(map.width(), map.height(), map.data().iter().map(|v| v * scale).collect());
        save_pgm(&norm, path)?;
    }
    println!("{} ROI(s) at {:?}, f0 {:.4} Hz", rois.len(), rois.centers, rois.f0_hz);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Synth(a) => cmd_synth(a).map(|_| true),
        Command::Eval(a) => cmd_eval(a).map(|_| true),
        Command::Roi(a) => cmd_roi(a).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: no window produced a valid estimate");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
