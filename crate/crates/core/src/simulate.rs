//! Monte Carlo validation of the acquisition chain.
//!
//! Each trial synthesizes one period of a circular WSS Gaussian process
//! with the prescribed PSD on a dense grid of rate `f_d = L·f_s`, pushes it
//! through filter → decimate → (dithered) quantize → reconstruct, and
//! measures the empirical TMSE against the same realization. The circular
//! block makes filtering, decimation aliasing, and shift-invariant
//! reconstruction exact on the block: the dense period spans an integer
//! number of sampling intervals, so averaging the squared error over the
//! whole block realizes the cyclostationary time average with no edge
//! effects.
//!
//! Trials derive independent ChaCha streams from `(seed, trial index)`, so
//! results are bit-reproducible and trials could run in any order.

use std::cell::RefCell;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::design::FilterDesign;
use crate::error::{Error, Result};
use crate::quantizer::{dynamic_range, quantize_stream, QuantizerSpec};
use crate::spectra::PsdModel;

/// Number of error-autocorrelation lags recorded per trial (`R_e[0..=10]`).
pub const AUTOCORR_LAGS: usize = 10;

/// Quantizer placement in the simulated chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantizerMode {
    /// Non-subtractive triangular dither before the mid-rise quantizer.
    Dithered,
    /// Same γ and Δ, no dither signal.
    NonDithered,
    /// No quantizer at all; `z[n] = y[n]`.
    Bypass,
}

impl QuantizerMode {
    pub fn is_dithered(&self) -> bool {
        matches!(self, QuantizerMode::Dithered)
    }
}

/// One Monte Carlo setup: input model, acquisition design, and block shape.
#[derive(Debug, Clone)]
pub struct SimConfig<'a> {
    pub psd: &'a PsdModel,
    pub design: &'a FilterDesign,
    /// Dense-grid oversampling factor `L` (`f_d = L·f_s`).
    pub oversample: usize,
    /// ADC samples per trial block.
    pub block_samples: usize,
    pub trials: usize,
    pub seed: u64,
    pub mode: QuantizerMode,
    /// Fixed quantizer spec instead of the analytic dynamic range;
    /// diagnostic use only (degenerate filters have no analytic γ).
    pub quantizer_override: Option<QuantizerSpec>,
}

impl<'a> SimConfig<'a> {
    pub fn new(
        psd: &'a PsdModel,
        design: &'a FilterDesign,
        block_samples: usize,
        trials: usize,
        seed: u64,
        mode: QuantizerMode,
    ) -> SimConfig<'a> {
        let oversample = default_oversample(design.f_s, psd.f_nyq());
        SimConfig {
            psd,
            design,
            oversample,
            block_samples,
            trials,
            seed,
            mode,
            quantizer_override: None,
        }
    }

    /// Dense-grid rate `f_d = L·f_s`.
    pub fn dense_rate(&self) -> f64 {
        self.oversample as f64 * self.design.f_s
    }

    /// Dense samples per block, `M·L`.
    pub fn dense_len(&self) -> usize {
        self.block_samples * self.oversample
    }

    pub fn validate(&self) -> Result<()> {
        if self.oversample < 4 {
            return Err(Error::InvalidConfig(format!(
                "oversample factor must be at least 4, got {}",
                self.oversample
            )));
        }
        if self.dense_rate() < 2.0 * self.psd.f_nyq() {
            return Err(Error::InvalidConfig(format!(
                "dense rate {} cannot resolve the input band (f_nyq = {})",
                self.dense_rate(),
                self.psd.f_nyq()
            )));
        }
        if self.block_samples < 2 || !self.block_samples.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "block_samples must be even and >= 2, got {}",
                self.block_samples
            )));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("at least one trial is required".into()));
        }
        Ok(())
    }
}

/// Smallest admissible oversampling factor: at least 4, and enough for the
/// dense grid to hold the input band with roll-off margin (`L·f_s ≥ 4·f_nyq`).
pub fn default_oversample(f_s: f64, f_nyq: f64) -> usize {
    let needed = (4.0 * f_nyq / f_s).ceil() as usize;
    needed.max(4)
}

/// Per-trial outcome.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TrialResult {
    /// Mean of `|x̂ - x|²` over the dense block.
    pub empirical_tmse: f64,
    pub overload_fraction: f64,
    /// `R_e[l]` estimates for lags `0..=AUTOCORR_LAGS`.
    pub error_autocorr: Vec<f64>,
    /// Normalized correlation between the quantization error and the
    /// quantizer input.
    pub input_error_corr: f64,
}

/// Mean and spread across trials.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TrialAggregate {
    pub trials: usize,
    /// Analytic input power used to normalize the empirical TMSE.
    pub sigma2: f64,
    pub mean_tmse: f64,
    pub mean_ntmse: f64,
    /// Standard error of the mean normalized TMSE.
    pub stderr_ntmse: f64,
    pub mean_overload_fraction: f64,
    pub mean_error_autocorr: Vec<f64>,
    pub mean_input_error_corr: f64,
    pub per_trial_ntmse: Vec<f64>,
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan_forward(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

fn plan_inverse(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// Signed frequency of DFT bin `m` for an `n`-point transform at `rate`.
fn bin_frequency(m: usize, n: usize, rate: f64) -> f64 {
    let idx = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
    idx * rate / n as f64
}

/// Synthesizes one period of a circular WSS Gaussian process with PSD
/// `psd` at rate `f_d`: independent circular-complex-Gaussian bins with
/// Hermitian symmetry and variance `S_x(f_m)·Δf`, inverse-transformed to a
/// real sequence.
pub fn synthesize_process<R: Rng + ?Sized>(
    psd: &PsdModel,
    f_d: f64,
    length: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if length < 2 || !length.is_multiple_of(2) {
        return Err(Error::DimensionMismatch(format!(
            "synthesis length must be even and >= 2, got {length}"
        )));
    }
    if psd.f_nyq() > f_d {
        return Err(Error::InvalidConfig(format!(
            "input band {} exceeds the dense grid rate {f_d}",
            psd.f_nyq()
        )));
    }
    let df = f_d / length as f64;
    let half = length / 2;
    let mut bins = vec![Complex64::new(0.0, 0.0); length];
    let dc: f64 = rng.sample(StandardNormal);
    bins[0] = Complex64::new(dc * (psd.eval(0.0) * df).sqrt(), 0.0);
    for m in 1..half {
        let scale = (psd.eval(m as f64 * df) * df / 2.0).sqrt();
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        bins[m] = Complex64::new(re * scale, im * scale);
        bins[length - m] = bins[m].conj();
    }
    let nyq: f64 = rng.sample(StandardNormal);
    bins[half] = Complex64::new(nyq * (psd.eval(f_d / 2.0) * df).sqrt(), 0.0);
    plan_inverse(length).process(&mut bins);
    Ok(bins.into_iter().map(|c| c.re).collect())
}

/// Acquisition-side statistics of one trial.
#[derive(Debug, Clone)]
pub struct AcquireStats {
    pub overload_fraction: f64,
    pub error_autocorr: Vec<f64>,
    pub input_error_corr: f64,
}

/// Filters `x_dense` with the design's zero-phase `H`, decimates to the ADC
/// rate, and quantizes. The dynamic range comes from the analytic filtered
/// power `∫|H|²·S_x df`, so theory and simulation share the same Δ.
pub fn acquire<R: Rng + ?Sized>(
    x_dense: &[f64],
    sim: &SimConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, AcquireStats)> {
    let n = sim.dense_len();
    if x_dense.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "dense block has {} samples, config expects {n}",
            x_dense.len()
        )));
    }
    let f_d = sim.dense_rate();
    let mut bins: Vec<Complex64> =
        x_dense.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan_forward(n).process(&mut bins);
    for (m, bin) in bins.iter_mut().enumerate() {
        let h2 = sim.design.h2_true(bin_frequency(m, n, f_d));
        *bin *= if h2 > 0.0 { h2.sqrt() } else { 0.0 };
    }
    plan_inverse(n).process(&mut bins);
    let scale = 1.0 / n as f64;
    let y: Vec<f64> =
        (0..sim.block_samples).map(|i| bins[i * sim.oversample].re * scale).collect();

    let (z, overloads) = match sim.mode {
        QuantizerMode::Bypass => (y.clone(), 0),
        mode => {
            let spec = match sim.quantizer_override {
                Some(spec) => spec,
                None => dynamic_range(
                    &sim.design.config,
                    sim.design.filtered_power,
                    mode.is_dithered(),
                )?,
            };
            let spec = QuantizerSpec { dithered: mode.is_dithered(), ..spec };
            quantize_stream(&spec, &y, rng)
        }
    };

    let m_len = sim.block_samples;
    let e: Vec<f64> = z.iter().zip(&y).map(|(&a, &b)| a - b).collect();
    let mut autocorr = Vec::with_capacity(AUTOCORR_LAGS + 1);
    for lag in 0..=AUTOCORR_LAGS.min(m_len - 1) {
        let acc: f64 = (0..m_len - lag).map(|i| e[i + lag] * e[i]).sum();
        autocorr.push(acc / (m_len - lag) as f64);
    }
    let e_pow: f64 = e.iter().map(|v| v * v).sum();
    let y_pow: f64 = y.iter().map(|v| v * v).sum();
    let cross: f64 = e.iter().zip(&y).map(|(&a, &b)| a * b).sum();
    let input_error_corr =
        if e_pow > 0.0 && y_pow > 0.0 { cross / (e_pow * y_pow).sqrt() } else { 0.0 };

    let stats = AcquireStats {
        overload_fraction: overloads as f64 / m_len as f64,
        error_autocorr: autocorr,
        input_error_corr,
    };
    Ok((z, stats))
}

/// Zero-stuffs `z` to the dense rate and applies the recovery filter on the
/// circular frequency grid: `X̂[m] = Z[m mod M]·f_d·G(f_m)`.
pub fn reconstruct(z: &[f64], sim: &SimConfig) -> Result<Vec<f64>> {
    let m_len = sim.block_samples;
    if z.len() != m_len {
        return Err(Error::DimensionMismatch(format!(
            "got {} ADC samples, config expects {m_len}",
            z.len()
        )));
    }
    let n = sim.dense_len();
    let f_d = sim.dense_rate();
    let mut z_bins: Vec<Complex64> = z.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan_forward(m_len).process(&mut z_bins);
    let mut bins = vec![Complex64::new(0.0, 0.0); n];
    for (m, bin) in bins.iter_mut().enumerate() {
        let g = sim.design.recovery_response(sim.psd, bin_frequency(m, n, f_d));
        if g != 0.0 {
            *bin = z_bins[m % m_len] * (f_d * g);
        }
    }
    plan_inverse(n).process(&mut bins);
    let scale = 1.0 / n as f64;
    Ok(bins.into_iter().map(|c| c.re * scale).collect())
}

/// Runs one trial on its own derived random stream.
pub fn run_trial(sim: &SimConfig, trial: usize) -> Result<TrialResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
    rng.set_stream(trial as u64 + 1);
    let x = synthesize_process(sim.psd, sim.dense_rate(), sim.dense_len(), &mut rng)?;
    let (z, stats) = acquire(&x, sim, &mut rng)?;
    let x_hat = reconstruct(&z, sim)?;
    let n = x.len() as f64;
    let empirical_tmse =
        x.iter().zip(&x_hat).map(|(&a, &b)| (a - b) * (a - b)).sum::<f64>() / n;
    Ok(TrialResult {
        empirical_tmse,
        overload_fraction: stats.overload_fraction,
        error_autocorr: stats.error_autocorr,
        input_error_corr: stats.input_error_corr,
    })
}

/// Runs all trials sequentially (fixed order, fixed reduction) and
/// aggregates their statistics.
pub fn run_trials(sim: &SimConfig) -> Result<TrialAggregate> {
    sim.validate()?;
    let sigma2 = sim.psd.total_power();
    let mut per_trial_ntmse = Vec::with_capacity(sim.trials);
    let mut overload_acc = 0.0;
    let mut corr_acc = 0.0;
    let mut autocorr_acc = [0.0f64; AUTOCORR_LAGS + 1];
    for trial in 0..sim.trials {
        let result = run_trial(sim, trial)?;
        per_trial_ntmse.push(result.empirical_tmse / sigma2);
        overload_acc += result.overload_fraction;
        corr_acc += result.input_error_corr;
        for (acc, v) in autocorr_acc.iter_mut().zip(&result.error_autocorr) {
            *acc += v;
        }
    }
    let t = sim.trials as f64;
    let mean_ntmse = per_trial_ntmse.iter().sum::<f64>() / t;
    let stderr_ntmse = if sim.trials > 1 {
        let var = per_trial_ntmse.iter().map(|v| (v - mean_ntmse).powi(2)).sum::<f64>()
            / (t - 1.0);
        (var / t).sqrt()
    } else {
        0.0
    };
    Ok(TrialAggregate {
        trials: sim.trials,
        sigma2,
        mean_tmse: mean_ntmse * sigma2,
        mean_ntmse,
        stderr_ntmse,
        mean_overload_fraction: overload_acc / t,
        mean_error_autocorr: autocorr_acc.iter().map(|v| v / t).collect(),
        mean_input_error_corr: corr_acc / t,
        per_trial_ntmse,
    })
}
