//! Command-line driver for the acquisition-design library.
//!
//! Verbs:
//! * `design`:   solve the water-filling design and emit it as JSON
//! * `tmse`:     closed-form/grid TMSE for a configuration
//! * `simulate`: Monte Carlo run of the full acquisition chain
//! * `sweep`:    parameter sweeps and rate-budget searches (CSV)
//! * `validate`: run the validation suite; nonzero exit on any failure
//!
//! Every flag mirrors a manifest key and wins over the file. Relative
//! default output locations live under `out/`, or the directory named by
//! `ADCOPT_OUT_DIR`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use adcopt_core::acceptance;
use adcopt_core::config::{ExperimentKind, Manifest};
use adcopt_core::design::{
    closed_form_rectangular, optimal_prefilter, pcm_baseline_prefilter, recovery_filter,
    tmse_for_prefilter, tmse_optimal, Method, RectVariant,
};
use adcopt_core::harness::{
    default_rate_sweep_grid, export_design, find_fr_vs_rate, fmt_sig, rate_budget_csv,
    rate_sweep_csv, simulate_csv, sweep_bits, sweep_csv, sweep_fs_at_rate, write_output,
    SimCsvRow, SimOptions,
};
use adcopt_core::quantizer::{distortion_constants, AdcConfig};
use adcopt_core::simulate::{run_trials, QuantizerMode, SimConfig};
use adcopt_core::spectra::{fold, PsdModel, DEFAULT_GRID_LEN};

#[derive(Parser)]
#[command(name = "adcopt", version, about = "TMSE-optimal uniform-ADC acquisition design")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Experiment manifest (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sampling rate override (Hz).
    #[arg(long = "f-s")]
    f_s: Option<f64>,
    /// Bit-depth override.
    #[arg(long = "bits")]
    bits: Option<f64>,
    /// Overload factor override (defaults to the 0.25·b + 1.75 schedule).
    #[arg(long)]
    eta: Option<f64>,
    /// Frequency bins of the design grid.
    #[arg(long, default_value_t = DEFAULT_GRID_LEN)]
    grid: usize,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum TmseMethod {
    Proposed,
    Pcm,
    Adx,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the optimal pre-sampling/recovery filter pair and export it.
    Design {
        #[command(flatten)]
        common: CommonArgs,
        /// Output path for the design JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the theoretical TMSE of a configuration.
    Tmse {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value_t = TmseMethod::Proposed)]
        method: TmseMethod,
        /// PCM quantizer constant for the rectangular closed form
        /// (defaults to the dithered-model constant κ̄).
        #[arg(long = "c-q")]
        c_q: Option<f64>,
    },
    /// Monte Carlo validation run of the full chain.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long = "block-samples")]
        block_samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Quantize with (true) or without (false) triangular dither.
        #[arg(long)]
        dithered: Option<bool>,
        /// Output path for the result CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the aggregate with per-trial records as JSON.
        #[arg(long = "out-json")]
        out_json: Option<PathBuf>,
    },
    /// Run the experiment described by the manifest's [experiment] section.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        seed: Option<u64>,
        /// Output path for the sweep CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the validation suite and report each criterion.
    Validate {
        #[arg(long, default_value_t = acceptance::DEFAULT_SEED)]
        seed: u64,
        /// Directory for the validation CSV.
        #[arg(long = "out-dir")]
        out_dir: Option<PathBuf>,
    },
}

fn out_dir() -> PathBuf {
    std::env::var_os("ADCOPT_OUT_DIR").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"))
}

fn default_out(name: &str) -> PathBuf {
    out_dir().join(name)
}

struct Setup {
    manifest: Option<Manifest>,
    psd: PsdModel,
    adc: AdcConfig,
}

fn load_setup(common: &CommonArgs) -> Result<Setup> {
    let manifest = match &common.config {
        Some(path) => {
            Some(Manifest::load(path).with_context(|| format!("loading {}", path.display()))?)
        }
        None => None,
    };
    let psd = match &manifest {
        Some(m) => m.build_psd()?,
        None => PsdModel::rectangular(1.0)?.normalize_unit_power()?,
    };
    // flags win over the manifest
    let base = manifest.as_ref().and_then(|m| m.adc);
    let f_s = common.f_s.or(base.map(|a| a.f_s));
    let bits = common.bits.or(base.map(|a| a.b));
    let eta = common.eta.or(base.and_then(|a| a.eta));
    let (f_s, b) = match (f_s, bits) {
        (Some(f_s), Some(b)) => (f_s, b),
        _ => bail!("sampling rate and bit depth required (flags or [adc] section)"),
    };
    let adc = match eta {
        Some(eta) => AdcConfig::new(f_s, b, eta)?,
        None => AdcConfig::with_scheduled_eta(f_s, b)?,
    };
    Ok(Setup { manifest, psd, adc })
}

fn run_design(common: &CommonArgs, out: Option<PathBuf>) -> Result<()> {
    let setup = load_setup(common)?;
    let folded = fold(&setup.psd, setup.adc.f_s, common.grid)?;
    let mut design = optimal_prefilter(&folded, &setup.adc)?;
    recovery_filter(&mut design, &setup.psd, common.grid)?;
    let report = tmse_optimal(&folded, &setup.psd, &setup.adc)?;
    let export = export_design(&design, &setup.psd, &report, common.grid)?;
    let path = out.unwrap_or_else(|| default_out("design.json"));
    write_output(&path, &serde_json::to_string_pretty(&export)?)?;
    println!(
        "design: f_s = {}, b = {}, eta = {}, zeta = {}, ntmse = {} -> {}",
        setup.adc.f_s,
        setup.adc.b,
        setup.adc.eta,
        fmt_sig(design.zeta.expect("water-filling design")),
        fmt_sig(report.ntmse),
        path.display()
    );
    Ok(())
}

fn run_tmse(common: &CommonArgs, method: TmseMethod, c_q: Option<f64>) -> Result<()> {
    let setup = load_setup(common)?;
    let report = match method {
        TmseMethod::Proposed => {
            let folded = fold(&setup.psd, setup.adc.f_s, common.grid)?;
            tmse_optimal(&folded, &setup.psd, &setup.adc)?
        }
        TmseMethod::Pcm => match c_q {
            // explicit constant: rectangular closed form
            Some(c_q) => {
                closed_form_rectangular(&setup.adc, setup.psd.f_nyq(), RectVariant::Pcm { c_q })?
            }
            // default κ̄ semantics: brickwall baseline under the dithered model
            None => {
                let folded = fold(&setup.psd, setup.adc.f_s, common.grid)?;
                tmse_for_prefilter(
                    &pcm_baseline_prefilter(&setup.psd, setup.adc.f_s),
                    &setup.psd,
                    &setup.adc,
                    &folded.grid,
                    Method::PcmBaseline,
                )?
            }
        },
        TmseMethod::Adx => {
            closed_form_rectangular(&setup.adc, setup.psd.f_nyq(), RectVariant::Adx)?
        }
    };
    let constants = distortion_constants(&setup.adc)?;
    println!(
        "tmse: method = {:?}, f_s = {}, b = {}, eta = {}, kappa_bar = {}, ntmse = {}{}",
        report.method,
        setup.adc.f_s,
        setup.adc.b,
        setup.adc.eta,
        fmt_sig(constants.kappa_bar),
        fmt_sig(report.ntmse),
        if report.extrapolated { " (PCM baseline extrapolated beyond unimodal PSDs)" } else { "" }
    );
    Ok(())
}

struct SimulateArgs {
    trials: Option<usize>,
    block_samples: Option<usize>,
    seed: Option<u64>,
    dithered: Option<bool>,
    out: Option<PathBuf>,
    out_json: Option<PathBuf>,
}

fn run_simulate(common: &CommonArgs, args: SimulateArgs) -> Result<()> {
    let setup = load_setup(common)?;
    let sim_section = setup.manifest.as_ref().and_then(|m| m.sim);
    let experiment = setup.manifest.as_ref().and_then(|m| m.experiment.as_ref());
    let trials = args.trials.or(sim_section.and_then(|s| s.trials)).unwrap_or(100);
    let block = args.block_samples.or(sim_section.and_then(|s| s.block_samples)).unwrap_or(4096);
    let seed = args.seed.or(experiment.and_then(|e| e.seed)).unwrap_or(0);
    let dithered = args.dithered.or(sim_section.and_then(|s| s.dithered)).unwrap_or(true);

    let folded = fold(&setup.psd, setup.adc.f_s, common.grid)?;
    let design = optimal_prefilter(&folded, &setup.adc)?;
    let theory = tmse_optimal(&folded, &setup.psd, &setup.adc)?;
    let mode = if dithered { QuantizerMode::Dithered } else { QuantizerMode::NonDithered };
    let mut sim = SimConfig::new(&setup.psd, &design, block, trials, seed, mode);
    if let Some(oversample) = sim_section.and_then(|s| s.oversample) {
        sim.oversample = oversample;
    }
    let aggregate = run_trials(&sim)?;

    let row = SimCsvRow {
        f_s: setup.adc.f_s,
        b: setup.adc.b,
        eta: setup.adc.eta,
        dithered,
        ntmse_theory: Some(theory.ntmse),
        ntmse_sim: aggregate.mean_ntmse,
        stderr: aggregate.stderr_ntmse,
        overload_frac: aggregate.mean_overload_fraction,
    };
    let path = args.out.unwrap_or_else(|| default_out("simulate.csv"));
    write_output(&path, &simulate_csv(std::slice::from_ref(&row)))?;
    if let Some(json_path) = args.out_json {
        write_output(&json_path, &serde_json::to_string_pretty(&aggregate)?)?;
    }
    println!(
        "simulate: ntmse = {} +/- {}, theory = {}, overload = {}, {} trials -> {}",
        fmt_sig(aggregate.mean_ntmse),
        fmt_sig(aggregate.stderr_ntmse),
        fmt_sig(theory.ntmse),
        fmt_sig(aggregate.mean_overload_fraction),
        trials,
        path.display()
    );
    Ok(())
}

fn run_sweep(common: &CommonArgs, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let Some(path) = common.config.as_ref() else {
        bail!("sweep needs a manifest with an [experiment] section");
    };
    let manifest = Manifest::load(path)?;
    let Some(experiment) = manifest.experiment.clone() else {
        bail!("manifest {} has no [experiment] section", path.display());
    };
    let psd = manifest.build_psd()?;
    let psd_name = format!("{:?}", manifest.psd.kind).to_lowercase();
    let seed = seed.or(experiment.seed).unwrap_or(0);

    let (csv, default_name) = match experiment.kind {
        ExperimentKind::SweepBits => {
            let bits =
                experiment.bits.unwrap_or_else(|| (1..=8).map(|b| b as f64).collect());
            let ratios = experiment.fs_over_fnyq.unwrap_or_else(|| vec![0.5, 1.0, 2.0]);
            let sim_options = if experiment.simulate.unwrap_or(false) {
                let section = manifest.sim;
                Some(SimOptions {
                    block_samples: section.and_then(|s| s.block_samples).unwrap_or(4096),
                    trials: section.and_then(|s| s.trials).unwrap_or(100),
                    seed,
                })
            } else {
                None
            };
            let rows =
                sweep_bits(&psd, &psd_name, &bits, &ratios, sim_options.as_ref(), common.grid)?;
            (sweep_csv(&rows), "sweep_bits.csv")
        }
        ExperimentKind::SweepFsAtRate => {
            let budget = experiment.rate_budget.unwrap_or(3.75);
            let grid = experiment.fs_over_fnyq.unwrap_or_else(default_rate_sweep_grid);
            let rows = sweep_fs_at_rate(&psd, &psd_name, budget, Some(&grid), common.grid)?;
            (rate_sweep_csv(&rows), "sweep_fs_at_rate.csv")
        }
        ExperimentKind::FindFrVsRate => {
            let rates =
                experiment.rate_grid.unwrap_or_else(|| vec![0.5, 1.0, 2.0, 3.0, 4.0, 5.0]);
            let rows = find_fr_vs_rate(&psd, &psd_name, &rates, common.grid)?;
            (rate_budget_csv(&rows), "fr_vs_rate.csv")
        }
        ExperimentKind::SingleDesign => {
            return run_design(common, out);
        }
        ExperimentKind::Validate => {
            let dir = out.unwrap_or_else(out_dir);
            return run_validate(seed, &dir);
        }
    };
    let path =
        out.or(experiment.output.map(PathBuf::from)).unwrap_or_else(|| default_out(default_name));
    write_output(&path, &csv)?;
    println!("sweep: {:?} -> {}", experiment.kind, path.display());
    Ok(())
}

fn run_validate(seed: u64, dir: &Path) -> Result<()> {
    let outcomes = acceptance::run_all(seed, Some(dir))?;
    for outcome in &outcomes {
        println!("{}", outcome.line());
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        bail!("{failed} of {} criteria failed", outcomes.len());
    }
    println!("all {} criteria passed", outcomes.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Design { common, out } => run_design(&common, out),
        Command::Tmse { common, method, c_q } => run_tmse(&common, method, c_q),
        Command::Simulate { common, trials, block_samples, seed, dithered, out, out_json } => {
            run_simulate(
                &common,
                SimulateArgs { trials, block_samples, seed, dithered, out, out_json },
            )
        }
        Command::Sweep { common, seed, out } => run_sweep(&common, seed, out),
        Command::Validate { seed, out_dir } => {
            run_validate(seed, &out_dir.unwrap_or_else(self::out_dir))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
