//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 runtime failure
//! (with a one-line JSON error report on stderr).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::bench::bench_inversion;
use crate::checks::gradcheck_suite;
use crate::error::{Error, Result};
use crate::io::{read_pgm, read_run_config, read_spkl, write_json, write_pgm, write_spkl, write_trajectory, RunConfig, Spkl1};
use crate::measurement::{generate_looks, make_sensing, Ensemble};
use crate::pgd::pgd_run_with;
use crate::rng::{streams, RngSpec};
use crate::theory::{lemma_checks, sweep_mse, write_sweep_csv, SweepConfig};

#[derive(Debug, Parser)]
#[command(name = "speckle-pgd", version, about = "Multilook speckle reconstruction by projected gradient descent")]
pub struct Cli {
    /// Worker threads for parallel patch fits (0 = all cores).
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Measure a PGM scene and write an SPKL1 container.
    Simulate(SimulateArgs),
    /// Reconstruct a scene from an SPKL1 container.
    Reconstruct(ReconstructArgs),
    /// Real-model MSE sweep over (n, m, k, L).
    Sweep(SweepArgs),
    /// Finite-difference checks of all gradients.
    Gradcheck(GradcheckArgs),
    /// Monte-Carlo checks of the matrix lemmas.
    Lemmas(LemmaArgs),
    /// Newton-Schulz step vs exact inversion timing.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Sampling rate m/n.
    #[arg(long, default_value_t = 0.5)]
    pub mn_ratio: f64,
    #[arg(long, default_value_t = 32)]
    pub looks: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = EnsembleArg::HaarRows)]
    pub ensemble: EnsembleArg,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_w: f64,
    #[arg(long, default_value_t = 0.0)]
    pub sigma_z: f64,
    /// Real speckle and noise (needs a real ensemble).
    #[arg(long)]
    pub real: bool,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum EnsembleArg {
    HaarRows,
    HaarRowsReal,
    GaussianComplex,
    GaussianReal,
}

impl From<EnsembleArg> for Ensemble {
    fn from(e: EnsembleArg) -> Self {
        match e {
            EnsembleArg::HaarRows => Ensemble::HaarRows,
            EnsembleArg::HaarRowsReal => Ensemble::HaarRowsReal,
            EnsembleArg::GaussianComplex => Ensemble::GaussianComplex,
            EnsembleArg::GaussianReal => Ensemble::GaussianReal,
        }
    }
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    pub input: PathBuf,
    /// JSON run configuration; defaults apply to everything left out.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Reference image for PSNR/SSIM logging (overrides the configuration).
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// JSON sweep configuration; when absent the grid flags are used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "256")]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "128")]
    pub m: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "8")]
    pub k: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,4,16,64")]
    pub looks: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct LemmaArgs {
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long, default_value_t = 100)]
    pub band_trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Matrix sizes (repeat or comma-separate).
    #[arg(long, value_delimiter = ',', default_value = "512")]
    pub m: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    /// Skip the exact baselines above this size.
    #[arg(long, default_value_t = 2048)]
    pub max_exact_m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses `args` (including the program name), runs, and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let stdout = std::io::stdout();
    match run(&cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{report}");
            ExitCode::from(2)
        }
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    // a second call in one process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    match &cli.command {
        Command::Simulate(a) => simulate(a, out),
        Command::Reconstruct(a) => reconstruct(a, out),
        Command::Sweep(a) => sweep(a, out),
        Command::Gradcheck(a) => gradcheck(a, out),
        Command::Lemmas(a) => lemmas(a, out),
        Command::Bench(a) => bench(a, out),
    }
}

fn simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let scene = read_pgm(&args.image)?;
    let n = scene.len();
    if !(args.mn_ratio > 0.0 && args.mn_ratio <= 1.0) {
        return Err(Error::Config("mn-ratio must be in (0, 1]".into()));
    }
    if args.looks == 0 {
        return Err(Error::Config("at least one look is required".into()));
    }
    let ensemble = Ensemble::from(args.ensemble);
    if args.real && !ensemble.is_real() {
        return Err(Error::Config("real-valued looks need a real ensemble".into()));
    }
    let m = ((args.mn_ratio * n as f64).round() as usize).max(1);
    let a = make_sensing(m, n, ensemble, RngSpec::new(args.seed, streams::SENSING))?;
    let looks = generate_looks(
        &scene,
        &a,
        args.looks,
        args.sigma_w,
        args.sigma_z,
        args.real,
        RngSpec::new(args.seed, streams::LOOKS),
    )?;
    write_spkl(&args.output, &Spkl1::new(a, looks)?)?;
    writeln!(out, "wrote {} (m={m}, n={n}, L={})", args.output.display(), args.looks)?;
    Ok(())
}

fn reconstruct(args: &ReconstructArgs, out: &mut dyn Write) -> Result<()> {
    let container = read_spkl(&args.input)?;
    let mut cfg = match &args.config {
        Some(p) => read_run_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(gt) = &args.ground_truth {
        cfg.ground_truth = Some(gt.clone());
    }
    let cfg = cfg.resolved(container.a.n(), container.looks.count())?;
    let (h, w) = (cfg.height.unwrap_or(0), cfg.width.unwrap_or(0));
    let truth = cfg.ground_truth.as_ref().map(read_pgm).transpose()?;
    std::fs::create_dir_all(&args.output).map_err(|e| Error::io(&args.output, e))?;
    write_json(args.output.join("resolved-config.json"), &cfg)?;
    let dir: &Path = &args.output;
    let every = cfg.checkpoint_every;
    let (x, traj) = pgd_run_with(
        &container.looks,
        &container.a,
        h,
        w,
        &cfg.pgd,
        truth.as_ref(),
        &mut |rec, x| {
            if every.is_some_and(|k| rec.iteration % k == 0) {
                write_pgm(dir.join(format!("iter_{:04}.pgm", rec.iteration)), x)?;
            }
            Ok(())
        },
    )?;
    write_pgm(dir.join("final.pgm"), &x)?;
    write_trajectory(dir.join("trajectory.csv"), &traj, cfg.record_wall_time)?;
    let last = traj.records.last();
    write!(out, "{} iterations, {} Newton-Schulz fallbacks", traj.records.len(), traj.ns_fallbacks)?;
    if let Some(p) = last.and_then(|r| r.psnr) {
        write!(out, ", final PSNR {p:.2} dB")?;
    }
    if let Some(s) = last.and_then(|r| r.ssim) {
        write!(out, ", SSIM {s:.4}")?;
    }
    writeln!(out)?;
    Ok(())
}

fn sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = match &args.config {
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_slice::<SweepConfig>(&bytes).map_err(|e| Error::from(e).at(p.display().to_string()))?
        }
        None => SweepConfig {
            n: args.n.clone(),
            m: args.m.clone(),
            k: args.k.clone(),
            looks: args.looks.clone(),
            trials: args.trials,
            seed: args.seed,
            ..SweepConfig::looks_sweep(1, 1, 1, vec![1])
        },
    };
    let rows = sweep_mse(&cfg)?;
    writeln!(out, "{:>6} {:>6} {:>4} {:>6} {:>12} {:>12} {:>12}", "n", "m", "k", "L", "median", "q1", "q3")?;
    for r in &rows {
        writeln!(
            out,
            "{:>6} {:>6} {:>4} {:>6} {:>12.4e} {:>12.4e} {:>12.4e}",
            r.n, r.m, r.k, r.looks, r.median, r.q1, r.q3
        )?;
    }
    if let Some(p) = &args.output {
        write_sweep_csv(p, &rows)?;
    }
    Ok(())
}

fn gradcheck(args: &GradcheckArgs, out: &mut dyn Write) -> Result<()> {
    let results = gradcheck_suite(args.seed)?;
    let mut failed = 0;
    for r in &results {
        let tag = if r.passed() { "PASS" } else { "FAIL" };
        writeln!(out, "{tag} {}: {:.3e} (< {:.0e})", r.name, r.value, r.threshold)?;
        failed += !r.passed() as usize;
    }
    if failed > 0 {
        return Err(Error::CheckFailed(format!("{failed} of {} gradient checks", results.len())));
    }
    Ok(())
}

fn lemmas(args: &LemmaArgs, out: &mut dyn Write) -> Result<()> {
    let report = lemma_checks(args.trials, args.band_trials, RngSpec::new(args.seed, streams::THEORY))?;
    report.write_text(&mut *out)?;
    if !report.ok() {
        return Err(Error::CheckFailed("lemma suite".into()));
    }
    Ok(())
}

fn bench(args: &BenchArgs, out: &mut dyn Write) -> Result<()> {
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |s| format!("{s:.4}"));
    writeln!(
        out,
        "{:>6} {:>12} {:>12} {:>12} {:>10} {:>10}",
        "m", "ns_step_s", "dense_2m_s", "complex_s", "x_dense", "x_complex"
    )?;
    for &m in &args.m {
        let row = bench_inversion(m, args.reps, args.max_exact_m, RngSpec::new(args.seed, m as u64))?;
        writeln!(
            out,
            "{:>6} {:>12.4} {:>12} {:>12} {:>10} {:>10}",
            m,
            row.ns_step,
            fmt(row.dense_inverse),
            fmt(row.exact_block_inverse),
            row.speedup_vs_dense().map_or("-".into(), |s| format!("{s:.1}")),
            row.speedup_vs_exact().map_or("-".into(), |s| format!("{s:.1}")),
        )?;
    }
    Ok(())
}
