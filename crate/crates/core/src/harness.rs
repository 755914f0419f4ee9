//! Experiment drivers: bit-depth sweeps, fixed-rate sampling sweeps, the
//! rate-budget-constrained optimal-sampling-rate search, and plot-ready
//! CSV/JSON export.
//!
//! All drivers are pure functions of their inputs (including seeds), and
//! rows are emitted in parameter order, so re-running an experiment
//! reproduces its output byte for byte.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::design::{
    optimal_prefilter, pcm_baseline_prefilter, tmse_for_prefilter, tmse_optimal, FilterDesign,
    Method, TmseReport,
};
use crate::error::{Error, Result};
use crate::quantizer::AdcConfig;
use crate::simulate::{run_trials, QuantizerMode, SimConfig};
use crate::spectra::{fold, Grid, PsdModel};

/// Default sampling-rate grid of the fixed-rate sweep, in units of `f_nyq`.
pub const RATE_SWEEP_LO: f64 = 0.75;
pub const RATE_SWEEP_HI: f64 = 1.5;
pub const RATE_SWEEP_STEP: f64 = 0.0125;

/// Coarse search grid for the rate-budget search: `f_nyq/200` steps over
/// `(0, 1.5·f_nyq]`, refined by golden section to `1e-4·f_nyq`.
pub const FR_COARSE_DIVISIONS: usize = 200;
pub const FR_MAX_RATIO: f64 = 1.5;
pub const FR_REFINE_TOL: f64 = 1e-4;
/// Bit depths beyond this produce water levels outside f64 range; such
/// sampling rates are never competitive and are skipped by the search.
pub const FR_MAX_BITS: f64 = 128.0;

/// Monte Carlo knobs for sweeps that include simulation points.
#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    pub block_samples: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { block_samples: 4096, trials: 100, seed: 0 }
    }
}

/// One row of the bit-depth sweep. Theory rows always carry
/// `ntmse_theory`; simulation rows add the empirical columns.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub psd: String,
    pub f_s: f64,
    pub b: f64,
    pub eta: f64,
    /// `theory`, `dithered`, or `non_dithered`.
    pub mode: String,
    /// `ok`, or `invalid_config` for bit depths the distortion model
    /// rejects at this η.
    pub status: String,
    pub ntmse_theory: Option<f64>,
    pub ntmse_sim: Option<f64>,
    pub stderr: Option<f64>,
    pub overload_frac: Option<f64>,
}

/// TMSE over bit depths for several sampling rates, optionally validated
/// by dithered and non-dithered Monte Carlo runs at integer bit depths.
pub fn sweep_bits(
    psd: &PsdModel,
    psd_name: &str,
    bits: &[f64],
    fs_over_fnyq: &[f64],
    sim: Option<&SimOptions>,
    grid_len: usize,
) -> Result<Vec<SweepRow>> {
    if bits.is_empty() || fs_over_fnyq.is_empty() {
        return Err(Error::InvalidConfig("sweep ranges must be non-empty".into()));
    }
    let mut rows = Vec::new();
    for &ratio in fs_over_fnyq {
        let f_s = ratio * psd.f_nyq();
        let folded = fold(psd, f_s, grid_len)?;
        for &b in bits {
            let config = AdcConfig::with_scheduled_eta(f_s, b)?;
            let base = SweepRow {
                psd: psd_name.to_string(),
                f_s,
                b,
                eta: config.eta,
                mode: "theory".into(),
                status: "ok".into(),
                ntmse_theory: None,
                ntmse_sim: None,
                stderr: None,
                overload_frac: None,
            };
            let theory = match tmse_optimal(&folded, psd, &config) {
                Ok(report) => report,
                Err(Error::InvalidConfig(_)) => {
                    rows.push(SweepRow { status: "invalid_config".into(), ..base });
                    continue;
                }
                Err(err) => return Err(err),
            };
            rows.push(SweepRow { ntmse_theory: Some(theory.ntmse), ..base.clone() });
            let Some(options) = sim else { continue };
            if b.fract() != 0.0 {
                continue;
            }
            let design = optimal_prefilter(&folded, &config)?;
            for mode in [QuantizerMode::Dithered, QuantizerMode::NonDithered] {
                let agg = run_trials(&SimConfig::new(
                    psd,
                    &design,
                    options.block_samples,
                    options.trials,
                    options.seed,
                    mode,
                ))?;
                rows.push(SweepRow {
                    mode: if mode.is_dithered() { "dithered" } else { "non_dithered" }.into(),
                    ntmse_theory: Some(theory.ntmse),
                    ntmse_sim: Some(agg.mean_ntmse),
                    stderr: Some(agg.stderr_ntmse),
                    overload_frac: Some(agg.mean_overload_fraction),
                    ..base.clone()
                });
            }
        }
    }
    Ok(rows)
}

/// One row of the fixed-rate-budget sampling sweep.
#[derive(Debug, Clone, Serialize)]
pub struct RateSweepRow {
    pub psd: String,
    pub f_s: f64,
    /// Continuous bit depth `R/f_s`.
    pub b: f64,
    /// `proposed` or `pcm`.
    pub method: String,
    pub ntmse: f64,
    /// Marks rows whose bit depth is an integer (the realizable points).
    pub integer_b: bool,
    pub extrapolated: bool,
}

/// Default `f_s/f_nyq` grid of [`sweep_fs_at_rate`].
pub fn default_rate_sweep_grid() -> Vec<f64> {
    let count = ((RATE_SWEEP_HI - RATE_SWEEP_LO) / RATE_SWEEP_STEP).round() as usize;
    (0..=count).map(|i| RATE_SWEEP_LO + i as f64 * RATE_SWEEP_STEP).collect()
}

/// TMSE versus sampling rate under a fixed rate budget `R` (bits per
/// Nyquist interval), with continuous `b = R/f_s`, for the water-filling
/// design and the PCM brickwall baseline under the same distortion model.
pub fn sweep_fs_at_rate(
    psd: &PsdModel,
    psd_name: &str,
    rate_budget: f64,
    fs_over_fnyq: Option<&[f64]>,
    grid_len: usize,
) -> Result<Vec<RateSweepRow>> {
    if !(rate_budget.is_finite() && rate_budget > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "rate budget must be positive, got {rate_budget}"
        )));
    }
    let default_grid;
    let ratios = match fs_over_fnyq {
        Some(g) if !g.is_empty() => g,
        Some(_) => return Err(Error::InvalidConfig("sampling-rate grid must be non-empty".into())),
        None => {
            default_grid = default_rate_sweep_grid();
            &default_grid
        }
    };
    let mut rows = Vec::new();
    for &ratio in ratios {
        let f_s = ratio * psd.f_nyq();
        let b = rate_budget * psd.f_nyq() / f_s;
        let config = AdcConfig::with_scheduled_eta(f_s, b)?;
        let integer_b = (b - b.round()).abs() < 1e-9;
        let folded = fold(psd, f_s, grid_len)?;
        let proposed = tmse_optimal(&folded, psd, &config)?;
        rows.push(RateSweepRow {
            psd: psd_name.to_string(),
            f_s,
            b,
            method: "proposed".into(),
            ntmse: proposed.ntmse,
            integer_b,
            extrapolated: false,
        });
        let pcm = tmse_for_prefilter(
            &pcm_baseline_prefilter(psd, f_s),
            psd,
            &config,
            &folded.grid,
            Method::PcmBaseline,
        )?;
        rows.push(RateSweepRow {
            psd: psd_name.to_string(),
            f_s,
            b,
            method: "pcm".into(),
            ntmse: pcm.ntmse,
            integer_b,
            extrapolated: pcm.extrapolated,
        });
    }
    Ok(rows)
}

/// One row of the rate-budget search: the TMSE-minimizing sampling rate.
#[derive(Debug, Clone, Serialize)]
pub struct RateBudgetRow {
    pub psd: String,
    /// Rate budget in bits per Nyquist interval.
    pub rate: f64,
    /// TMSE-minimizing sampling rate.
    pub f_r: f64,
    pub ntmse: f64,
}

/// Normalized TMSE at `(f_s, b = R/f_s)`, or `None` where the distortion
/// model rejects the config.
fn rate_objective(psd: &PsdModel, f_s: f64, b: f64, grid_len: usize) -> Result<Option<f64>> {
    if b > FR_MAX_BITS {
        return Ok(None);
    }
    let config = match AdcConfig::with_scheduled_eta(f_s, b) {
        Ok(c) => c,
        Err(_) => return Ok(None),
    };
    let folded = fold(psd, f_s, grid_len)?;
    match tmse_optimal(&folded, psd, &config) {
        Ok(report) => Ok(Some(report.ntmse)),
        Err(Error::InvalidConfig(_)) => Ok(None),
        Err(err) => Err(err),
    }
}

/// Frequency bins used by the rate-budget search objective, relative to
/// the caller's design grid. Near the objective's minimum the true TMSE
/// differences are tiny; the finer grid keeps the midpoint rule's
/// support-edge jitter (one bin of band measure) well below them.
pub const FR_SEARCH_REFINEMENT: usize = 4;

/// Searches for the TMSE-minimizing sampling rate `f_R` for each rate
/// budget: a coarse scan over `(0, 1.5·f_nyq]` followed by golden-section
/// refinement. Plateaus resolve to the smallest minimizing `f_s`.
pub fn find_fr_vs_rate(
    psd: &PsdModel,
    psd_name: &str,
    rates: &[f64],
    grid_len: usize,
) -> Result<Vec<RateBudgetRow>> {
    if rates.is_empty() || rates.iter().any(|&r| !(r.is_finite() && r > 0.0)) {
        return Err(Error::InvalidConfig("rate grid must be non-empty and positive".into()));
    }
    let search_len = grid_len.saturating_mul(FR_SEARCH_REFINEMENT);
    let f_nyq = psd.f_nyq();
    let coarse_step = f_nyq / FR_COARSE_DIVISIONS as f64;
    let coarse_count = (FR_MAX_RATIO * FR_COARSE_DIVISIONS as f64).round() as usize;
    let mut rows = Vec::with_capacity(rates.len());
    for &rate in rates {
        let r_abs = rate * f_nyq; // bits per second
        let mut best: Option<(f64, f64)> = None;
        for j in 1..=coarse_count {
            let f_s = j as f64 * coarse_step;
            let Some(value) = rate_objective(psd, f_s, r_abs / f_s, search_len)? else {
                continue;
            };
            // strict improvement keeps the smallest minimizing f_s
            if best.is_none_or(|(_, v)| value < v) {
                best = Some((f_s, value));
            }
        }
        let (coarse_fs, coarse_val) = best.ok_or_else(|| {
            Error::InvalidConfig(format!("no admissible sampling rate for budget {rate}"))
        })?;
        let lo = (coarse_fs - coarse_step).max(coarse_step * 1e-3);
        let hi = (coarse_fs + coarse_step).min(FR_MAX_RATIO * f_nyq);
        let objective = |f_s: f64| -> Result<f64> {
            Ok(rate_objective(psd, f_s, r_abs / f_s, search_len)?.unwrap_or(f64::INFINITY))
        };
        let (mut f_r, mut value) = golden_section(&objective, lo, hi, FR_REFINE_TOL * f_nyq)?;
        if coarse_val < value {
            f_r = coarse_fs;
            value = coarse_val;
        }
        rows.push(RateBudgetRow { psd: psd_name.to_string(), rate, f_r, ntmse: value });
    }
    Ok(rows)
}

/// Golden-section minimization of a unimodal objective on `[lo, hi]`.
fn golden_section(
    objective: &dyn Fn(f64) -> Result<f64>,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = objective(x1)?;
    let mut f2 = objective(x2)?;
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = objective(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = objective(x2)?;
        }
    }
    let mid = 0.5 * (lo + hi);
    Ok((mid, objective(mid)?))
}

/// JSON shape of an exported design, aligned on one true-frequency grid
/// over the input band.
#[derive(Debug, Clone, Serialize)]
pub struct DesignExport {
    pub config: AdcConfig,
    pub zeta: Option<f64>,
    pub grid: Vec<f64>,
    pub h2: Vec<f64>,
    pub g_re: Vec<f64>,
    pub g_im: Vec<f64>,
    pub tmse: f64,
    pub ntmse: f64,
}

/// Samples `|H|²` and `G` over the input band and bundles them with the
/// design's TMSE report. Reuses the design's stored recovery samples when
/// they match the requested grid.
pub fn export_design(
    design: &FilterDesign,
    psd: &PsdModel,
    report: &TmseReport,
    grid_len: usize,
) -> Result<DesignExport> {
    let grid = Grid::symmetric(psd.f_nyq() / 2.0, grid_len)?;
    let g_re: Vec<f64> = match &design.g {
        Some(samples) if samples.grid == grid => samples.values.clone(),
        _ => grid.centers().map(|f| design.recovery_response(psd, f)).collect(),
    };
    let mut freqs = Vec::with_capacity(grid_len);
    let mut h2 = Vec::with_capacity(grid_len);
    for f in grid.centers() {
        freqs.push(f);
        h2.push(design.h2_true(f));
    }
    Ok(DesignExport {
        config: design.config,
        zeta: design.zeta,
        grid: freqs,
        h2,
        g_im: vec![0.0; g_re.len()],
        g_re,
        tmse: report.tmse,
        ntmse: report.ntmse,
    })
}

/// One Monte Carlo result in the simulator's flat CSV schema.
#[derive(Debug, Clone, Serialize)]
pub struct SimCsvRow {
    pub f_s: f64,
    pub b: f64,
    pub eta: f64,
    pub dithered: bool,
    pub ntmse_theory: Option<f64>,
    pub ntmse_sim: f64,
    pub stderr: f64,
    pub overload_frac: f64,
}

/// CSV in the simulator's column layout.
pub fn simulate_csv(rows: &[SimCsvRow]) -> String {
    let mut out =
        String::from("f_s,b,eta,dithered,ntmse_theory,ntmse_sim,stderr,overload_frac\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt_sig(r.f_s),
            fmt_sig(r.b),
            fmt_sig(r.eta),
            r.dithered,
            fmt_opt(r.ntmse_theory),
            fmt_sig(r.ntmse_sim),
            fmt_sig(r.stderr),
            fmt_sig(r.overload_frac),
        ));
    }
    out
}

/// Formats a float with 12 significant digits, the precision all CSV
/// output uses.
pub fn fmt_sig(x: f64) -> String {
    format!("{x:.11e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_default()
}

/// CSV for bit-depth sweep rows (also the schema `validate` emits).
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out =
        String::from("psd,f_s,b,eta,mode,status,ntmse_theory,ntmse_sim,stderr,overload_frac\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.psd,
            fmt_sig(r.f_s),
            fmt_sig(r.b),
            fmt_sig(r.eta),
            r.mode,
            r.status,
            fmt_opt(r.ntmse_theory),
            fmt_opt(r.ntmse_sim),
            fmt_opt(r.stderr),
            fmt_opt(r.overload_frac),
        ));
    }
    out
}

/// CSV for fixed-rate sweep rows.
pub fn rate_sweep_csv(rows: &[RateSweepRow]) -> String {
    let mut out = String::from("psd,f_s,b,method,ntmse,integer_b,extrapolated\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.psd,
            fmt_sig(r.f_s),
            fmt_sig(r.b),
            r.method,
            fmt_sig(r.ntmse),
            r.integer_b,
            r.extrapolated,
        ));
    }
    out
}

/// CSV for rate-budget search rows.
pub fn rate_budget_csv(rows: &[RateBudgetRow]) -> String {
    let mut out = String::from("psd,rate,f_r,ntmse\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.psd,
            fmt_sig(r.rate),
            fmt_sig(r.f_r),
            fmt_sig(r.ntmse),
        ));
    }
    out
}

/// Writes a string to a file, creating parent directories as needed.
pub fn write_output(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(contents.as_bytes())?;
    Ok(())
}
