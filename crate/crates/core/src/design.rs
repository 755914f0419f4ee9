//! TMSE-minimizing acquisition filters and closed-form error evaluation.
//!
//! The pre-sampling filter solves a water-filling problem on the folded
//! spectrum: with `κ` the quantizer distortion constant and `ζ` the water
//! level fixed by `κ·T_s·∫(√(ζ·S̃_x) - 1)⁺ df = 1`, the optimal squared
//! magnitude at the dominant alias of every folded frequency is
//!
//! ```text
//! |H_o|² = (√(ζ·S̃_x) - 1)⁺ / (2^{2b}·S̃_x)
//! ```
//!
//! and zero elsewhere. Frequencies whose density sits below the water level
//! are discarded entirely: they would cost dynamic range without surviving
//! quantization. The matching shift-invariant recovery filter is the Wiener
//! solution for the sampled, noisy observation, and the minimum TMSE has a
//! closed form that [`tmse_optimal`] evaluates on the same grid used by the
//! generic evaluator [`tmse_for_prefilter`], so the two routes agree to
//! near machine precision.
//!
//! The phase of `H_o` is free; this implementation picks zero phase
//! (`H_o = √h2` real), which makes the recovery filter real as well.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quantizer::{distortion_constants, AdcConfig, DistortionConstants};
use crate::spectra::{fold, FoldedSpectrum, Grid, PsdModel};

/// Largest water level accepted by the bisection before declaring failure.
const MAX_BRACKET_DOUBLINGS: usize = 2000;
const MAX_BISECTION_ITERS: usize = 200;
/// Tolerance on the water-filling normalization `|Φ(ζ) - 1|`.
pub const ZETA_TOLERANCE: f64 = 1e-10;

/// How a TMSE figure was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Water-filling pre-sampling filter with its Wiener recovery.
    Proposed,
    /// Brickwall anti-aliasing pre-filter at cutoff `min(f_s, f_nyq)/2`.
    PcmBaseline,
    /// Rectangular-PSD closed form of the fundamental sampling/coding bound.
    AdxRect,
    /// Any other caller-supplied pre-filter.
    Custom,
}

/// TMSE of one acquisition design, in absolute and input-normalized form.
#[derive(Debug, Clone, Serialize)]
pub struct TmseReport {
    pub tmse: f64,
    /// `tmse / σ²`.
    pub ntmse: f64,
    /// Input power the normalization used.
    pub sigma2: f64,
    pub method: Method,
    pub config: AdcConfig,
    /// Water level, when the figure came from a water-filling design.
    pub zeta: Option<f64>,
    /// True when the PCM baseline was applied to a PSD outside its
    /// unimodal contract.
    pub extrapolated: bool,
}

/// Squared-magnitude response of a pre-sampling filter, addressed by folded
/// bin, alias index, and the true frequency `f = f_bin - k·f_s`.
///
/// The bin-aware signature lets grid-designed filters return their stored
/// values exactly at the quadrature nodes.
pub trait Prefilter {
    fn h2(&self, bin: usize, alias: i64, f_true: f64) -> f64;
}

/// Unit-gain brickwall low-pass: `|H|² = 1` for `|f| < cutoff`.
#[derive(Debug, Clone, Copy)]
pub struct Brickwall {
    pub cutoff: f64,
}

impl Prefilter for Brickwall {
    fn h2(&self, _bin: usize, _alias: i64, f_true: f64) -> f64 {
        if f_true.abs() < self.cutoff {
            1.0
        } else {
            0.0
        }
    }
}

/// All-pass `|H|² = 1` over the whole input band.
#[derive(Debug, Clone, Copy)]
pub struct UnitGain;

impl Prefilter for UnitGain {
    fn h2(&self, _bin: usize, _alias: i64, _f_true: f64) -> f64 {
        1.0
    }
}

/// The PCM-baseline anti-aliasing choice: brickwall at `min(f_s, f_nyq)/2`.
///
/// Only specified for unimodal symmetric PSDs; reports produced from it on
/// other PSDs carry the `extrapolated` flag.
pub fn pcm_baseline_prefilter(psd: &PsdModel, f_s: f64) -> Brickwall {
    Brickwall { cutoff: 0.5 * f_s.min(psd.f_nyq()) }
}

/// A pre-sampling filter on a folded grid (one alias per bin), with the
/// derived quantities needed to evaluate its recovery filter.
#[derive(Debug, Clone)]
pub struct FilterDesign {
    pub grid: Grid,
    pub f_s: f64,
    /// Alias index carrying the response of each folded bin.
    pub alias: Vec<i64>,
    /// `|H|²` at `f_bin - alias·f_s`.
    pub h2: Vec<f64>,
    /// Water level; `None` for baseline designs built from a fixed response.
    pub zeta: Option<f64>,
    pub config: AdcConfig,
    pub constants: DistortionConstants,
    /// `|H|²·S_x` per bin (`T_s·S_y` at the bin centers).
    passed: Vec<f64>,
    /// `∫|H|²·S_x df = E{y²}`, by midpoint quadrature.
    pub filtered_power: f64,
    /// Recovery filter samples over the input band, once populated.
    pub g: Option<RecoverySamples>,
}

/// Real recovery-filter samples on a dense grid over the input band.
#[derive(Debug, Clone)]
pub struct RecoverySamples {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl Prefilter for FilterDesign {
    fn h2(&self, bin: usize, alias: i64, _f_true: f64) -> f64 {
        if alias == self.alias[bin] {
            self.h2[bin]
        } else {
            0.0
        }
    }
}

/// A grid design with per-bin multiplicative perturbations, used for
/// optimality spot-checks.
pub struct Perturbed<'a> {
    pub design: &'a FilterDesign,
    /// Relative perturbation `u` per bin; the response is `(h2·(1+u))⁺`.
    pub offsets: Vec<f64>,
}

impl Prefilter for Perturbed<'_> {
    fn h2(&self, bin: usize, alias: i64, _f_true: f64) -> f64 {
        if alias == self.design.alias[bin] {
            (self.design.h2[bin] * (1.0 + self.offsets[bin])).max(0.0)
        } else {
            0.0
        }
    }
}

impl FilterDesign {
    /// `|H|²` at a true frequency, via its folded bin.
    pub fn h2_true(&self, f: f64) -> f64 {
        let k = (f / self.f_s).round() as i64;
        let folded = f - k as f64 * self.f_s;
        let bin = self.grid.bin_of(folded);
        if k == self.alias[bin] {
            self.h2[bin]
        } else {
            0.0
        }
    }

    /// White quantization-noise term of the sampled-spectrum denominator,
    /// `T_s·κ·E{y²}` (equal to `T_s·Δ²/4` under the dither model).
    pub fn noise_floor(&self) -> f64 {
        self.constants.kappa * self.filtered_power / self.f_s
    }

    /// Wiener recovery response `G_o(f) = S_x·H*/(S_y + κ·T_s·∫S_y)` at a
    /// true frequency. Real because the design carries zero-phase `H`.
    pub fn recovery_response(&self, psd: &PsdModel, f: f64) -> f64 {
        let sx = psd.eval(f);
        if sx == 0.0 {
            return 0.0;
        }
        let k = (f / self.f_s).round() as i64;
        let folded = f - k as f64 * self.f_s;
        let bin = self.grid.bin_of(folded);
        if k != self.alias[bin] || self.h2[bin] == 0.0 {
            return 0.0;
        }
        let denom = self.passed[bin] + self.noise_floor();
        if denom <= 0.0 {
            return 0.0;
        }
        sx * self.h2[bin].sqrt() / (self.f_s * denom)
    }
}

/// Normalization functional `Φ(ζ) = κ·T_s·∫(√(ζ·S̃_x) - 1)⁺ df` whose unit
/// level set defines the water level.
pub fn waterfilling_constraint(folded: &FoldedSpectrum, config: &AdcConfig, zeta: f64) -> Result<f64> {
    let constants = distortion_constants(config)?;
    Ok(phi(folded, constants.kappa / config.f_s, zeta))
}

fn phi(folded: &FoldedSpectrum, kappa_ts: f64, zeta: f64) -> f64 {
    let step = folded.grid.step();
    let mut acc = 0.0;
    for &s in &folded.values {
        if s > 0.0 {
            acc += ((zeta * s).sqrt() - 1.0).max(0.0);
        }
    }
    kappa_ts * acc * step
}

/// Solves `Φ(ζ) = 1` by bracketed bisection on the monotone constraint.
pub fn solve_zeta(folded: &FoldedSpectrum, config: &AdcConfig) -> Result<f64> {
    let constants = distortion_constants(config)?;
    solve_zeta_with(folded, config, &constants)
}

fn solve_zeta_with(
    folded: &FoldedSpectrum,
    config: &AdcConfig,
    constants: &DistortionConstants,
) -> Result<f64> {
    let s_max = folded.max_value();
    if s_max.is_nan() || s_max <= 0.0 {
        return Err(Error::NoSignal);
    }
    let kappa_ts = constants.kappa / config.f_s;
    // hoist the per-bin square roots out of the bisection loop
    let roots: Vec<f64> =
        folded.values.iter().filter(|&&s| s > 0.0).map(|&s| s.sqrt()).collect();
    let weight = kappa_ts * folded.grid.step();
    let phi_fast = |zeta: f64| -> f64 {
        let root_zeta = zeta.sqrt();
        weight * roots.iter().map(|&r| (root_zeta * r - 1.0).max(0.0)).sum::<f64>()
    };
    // Φ is zero at ζ = 1/max S̃ and strictly increasing beyond it.
    let mut lo = 1.0 / s_max;
    let mut hi = lo;
    let mut doublings = 0usize;
    loop {
        hi *= 2.0;
        if phi_fast(hi) > 1.0 {
            break;
        }
        doublings += 1;
        if doublings > MAX_BRACKET_DOUBLINGS || !hi.is_finite() {
            return Err(Error::Convergence(format!(
                "no upper bracket for the water level (b = {}, f_s = {})",
                config.b, config.f_s
            )));
        }
    }
    for _ in 0..MAX_BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        if phi_fast(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let zeta = 0.5 * (lo + hi);
    let residual = phi(folded, kappa_ts, zeta) - 1.0;
    if residual.abs() > ZETA_TOLERANCE {
        return Err(Error::Convergence(format!(
            "water-level residual {residual:e} above tolerance"
        )));
    }
    Ok(zeta)
}

/// Builds the TMSE-minimizing pre-sampling filter on the folded grid.
pub fn optimal_prefilter(folded: &FoldedSpectrum, config: &AdcConfig) -> Result<FilterDesign> {
    let constants = distortion_constants(config)?;
    let zeta = solve_zeta_with(folded, config, &constants)?;
    let four_b = config.four_pow_b();
    let n = folded.grid.len();
    let mut h2 = Vec::with_capacity(n);
    let mut passed = Vec::with_capacity(n);
    for &s in &folded.values {
        if s > 0.0 {
            let t = ((zeta * s).sqrt() - 1.0).max(0.0);
            let h = t / (four_b * s);
            h2.push(h);
            passed.push(h * s);
        } else {
            h2.push(0.0);
            passed.push(0.0);
        }
    }
    let filtered_power: f64 = passed.iter().sum::<f64>() * folded.grid.step();
    Ok(FilterDesign {
        grid: folded.grid,
        f_s: folded.f_s,
        alias: folded.fold_index.clone(),
        h2,
        zeta: Some(zeta),
        config: *config,
        constants,
        passed,
        filtered_power,
        g: None,
    })
}

/// Wraps an arbitrary per-bin response (at the dominant alias of each bin)
/// into a [`FilterDesign`], so it can drive the simulator.
pub fn design_from_h2(
    folded: &FoldedSpectrum,
    config: &AdcConfig,
    h2: Vec<f64>,
) -> Result<FilterDesign> {
    if h2.len() != folded.grid.len() {
        return Err(Error::DimensionMismatch(format!(
            "h2 has {} bins, grid has {}",
            h2.len(),
            folded.grid.len()
        )));
    }
    if h2.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidConfig("squared magnitudes must be finite and >= 0".into()));
    }
    let constants = distortion_constants(config)?;
    let passed: Vec<f64> = h2.iter().zip(&folded.values).map(|(&h, &s)| h * s).collect();
    let filtered_power: f64 = passed.iter().sum::<f64>() * folded.grid.step();
    Ok(FilterDesign {
        grid: folded.grid,
        f_s: folded.f_s,
        alias: folded.fold_index.clone(),
        h2,
        zeta: None,
        config: *config,
        constants,
        passed,
        filtered_power,
        g: None,
    })
}

/// Samples the recovery response over the input band and stores it on the
/// design.
pub fn recovery_filter(design: &mut FilterDesign, psd: &PsdModel, grid_len: usize) -> Result<()> {
    let grid = Grid::symmetric(psd.f_nyq() / 2.0, grid_len)?;
    let values = grid.centers().map(|f| design.recovery_response(psd, f)).collect();
    design.g = Some(RecoverySamples { grid, values });
    Ok(())
}

/// Minimum achievable TMSE for the water-filling design, via its closed
/// form on the folded grid.
pub fn tmse_optimal(
    folded: &FoldedSpectrum,
    psd: &PsdModel,
    config: &AdcConfig,
) -> Result<TmseReport> {
    let constants = distortion_constants(config)?;
    let zeta = solve_zeta_with(folded, config, &constants)?;
    let step = folded.grid.step();
    let mut recovered = 0.0;
    for &s in &folded.values {
        if s > 0.0 {
            let t = ((zeta * s).sqrt() - 1.0).max(0.0);
            recovered += t * s / (t + 1.0);
        }
    }
    recovered *= step;
    let sigma2 = psd.total_power();
    // midpoint bins straddling the support edge can overestimate the band
    // measure by a fraction of a bin; recovered power is capped at the
    // input power so TMSE values below grid resolution floor at zero
    let tmse = (sigma2 - recovered).max(0.0);
    debug_assert!(tmse <= sigma2 * (1.0 + 1e-9));
    Ok(TmseReport {
        tmse,
        ntmse: tmse / sigma2,
        sigma2,
        method: Method::Proposed,
        config: *config,
        zeta: Some(zeta),
        extrapolated: false,
    })
}

/// TMSE of an arbitrary pre-sampling filter under the optimal recovery
/// filter, evaluated by midpoint quadrature over the folded band:
/// `TMSE = σ² - ∫ Σ_k |H|²S_x² / (T_s·S_z) df`.
pub fn tmse_for_prefilter(
    prefilter: &dyn Prefilter,
    psd: &PsdModel,
    config: &AdcConfig,
    grid: &Grid,
    method: Method,
) -> Result<TmseReport> {
    let constants = distortion_constants(config)?;
    let f_s = config.f_s;
    let half = psd.f_nyq() / 2.0;
    let n = grid.len();
    let step = grid.step();
    // Per folded bin: a = Σ_k |H|²·S_x (T_s·S_y), b2 = Σ_k |H|²·S_x².
    let mut a = vec![0.0f64; n];
    let mut b2 = vec![0.0f64; n];
    for (i, f) in grid.centers().enumerate() {
        let k_min = ((f - half) / f_s).ceil() as i64;
        let k_max = ((f + half) / f_s).floor() as i64;
        for k in k_min..=k_max {
            let f_true = f - k as f64 * f_s;
            let sx = psd.eval(f_true);
            if sx == 0.0 {
                continue;
            }
            let h = prefilter.h2(i, k, f_true);
            if h == 0.0 {
                continue;
            }
            a[i] += h * sx;
            b2[i] += h * sx * sx;
        }
    }
    let filtered_power: f64 = a.iter().sum::<f64>() * step;
    let noise = constants.kappa * filtered_power / f_s; // T_s·κ·E{y²}
    let mut recovered = 0.0;
    for i in 0..n {
        let denom = a[i] + noise;
        if denom > 0.0 {
            recovered += b2[i] / denom;
        }
    }
    recovered *= step;
    let sigma2 = psd.total_power();
    // same band-measure cap as the closed-form path
    let tmse = (sigma2 - recovered).max(0.0);
    debug_assert!(tmse <= sigma2 * (1.0 + 1e-9));
    let extrapolated = method == Method::PcmBaseline && !psd.is_unimodal();
    Ok(TmseReport {
        tmse,
        ntmse: tmse / sigma2,
        sigma2,
        method,
        config: *config,
        zeta: None,
        extrapolated,
    })
}

/// Closed-form branch selector for rectangular input PSDs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RectVariant {
    Proposed,
    /// Prior-work PCM expression with an explicit quantizer constant `c_q`.
    Pcm { c_q: f64 },
    Adx,
}

/// The non-uniform scalar-quantizer constant `√3·π/2` quoted for Gaussian
/// inputs; a documented alternative to the `c_q = κ̄` substitution.
pub fn cq_nonuniform_gaussian() -> f64 {
    3.0f64.sqrt() * std::f64::consts::PI / 2.0
}

/// Normalized TMSE of a unit-power rectangular PSD in closed form:
/// `1 - (min(f_s,f_nyq)/f_nyq)·factor` with the variant-specific
/// quantization factor.
pub fn closed_form_rectangular(
    config: &AdcConfig,
    f_nyq: f64,
    variant: RectVariant,
) -> Result<TmseReport> {
    if f_nyq <= 0.0 || !f_nyq.is_finite() {
        return Err(Error::InvalidConfig(format!("f_nyq must be positive, got {f_nyq}")));
    }
    let kept_band = config.f_s.min(f_nyq) / f_nyq;
    // T_s·min(f_s, f_nyq): the oversampling reduction of the noise term.
    let ts_min = config.f_s.min(f_nyq) / config.f_s;
    let four_b = config.four_pow_b();
    let (factor, method, zeta) = match variant {
        RectVariant::Proposed => {
            let constants = distortion_constants(config)?;
            (1.0 / (1.0 + ts_min * constants.kappa_bar / four_b), Method::Proposed, None)
        }
        RectVariant::Pcm { c_q } => {
            if c_q <= 0.0 || !c_q.is_finite() {
                return Err(Error::InvalidConfig(format!("c_q must be positive, got {c_q}")));
            }
            (1.0 / (1.0 + ts_min * c_q / four_b), Method::PcmBaseline, None)
        }
        RectVariant::Adx => (1.0 - 1.0 / four_b, Method::AdxRect, None),
    };
    let ntmse = 1.0 - kept_band * factor;
    Ok(TmseReport {
        tmse: ntmse,
        ntmse,
        sigma2: 1.0,
        method,
        config: *config,
        zeta,
        extrapolated: false,
    })
}

/// Convenience: fold, solve, and build the optimal design in one call.
pub fn design_for(psd: &PsdModel, config: &AdcConfig, grid_len: usize) -> Result<FilterDesign> {
    let folded = fold(psd, config.f_s, grid_len)?;
    optimal_prefilter(&folded, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::{fold, PsdModel, DEFAULT_GRID_LEN};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    fn rect_cfg(f_s: f64, b: f64) -> AdcConfig {
        AdcConfig::with_scheduled_eta(f_s, b).unwrap()
    }

    fn unit_rect() -> PsdModel {
        PsdModel::rectangular(1.0).unwrap().normalize_unit_power().unwrap()
    }

    fn unit_tri() -> PsdModel {
        PsdModel::triangular(1.0).unwrap().normalize_unit_power().unwrap()
    }

    fn unit_gauss() -> PsdModel {
        PsdModel::gaussian_3db(1.0).unwrap().normalize_unit_power().unwrap()
    }

    #[test]
    fn zeta_flat_spectrum_closed_form() {
        let cfg = rect_cfg(1.0, 3.0);
        let folded = fold(&unit_rect(), 1.0, DEFAULT_GRID_LEN).unwrap();
        let zeta = solve_zeta(&folded, &cfg).unwrap();
        // flat case: κ(√ζ - 1) = 1, so ζ = (1 + 1/κ)²
        let kappa = distortion_constants(&cfg).unwrap().kappa;
        let expected = (1.0 + 1.0 / kappa).powi(2);
        assert!(close(zeta, expected, 1e-10), "{zeta} vs {expected}");
        assert!(close(zeta, 111.795, 2e-3));
    }

    #[test]
    fn zeta_residual_within_tolerance() {
        for psd in [unit_rect(), unit_tri(), unit_gauss()] {
            for fs in [0.5, 1.0, 2.0] {
                let cfg = rect_cfg(fs, 3.0);
                let folded = fold(&psd, fs, DEFAULT_GRID_LEN).unwrap();
                let zeta = solve_zeta(&folded, &cfg).unwrap();
                let residual = waterfilling_constraint(&folded, &cfg, zeta).unwrap() - 1.0;
                assert!(residual.abs() <= ZETA_TOLERANCE, "residual {residual:e}");
            }
        }
    }

    #[test]
    fn zeta_notches_down_to_peak_as_kappa_blows_up() {
        // η just inside the validity region makes κ huge, which shrinks the
        // water-filling support to the spectral peak: ζ → 1/max S̃ from
        // above, at rate 1 + 2/√κ for the triangular peak.
        let cfg = AdcConfig::new(1.0, 1.0, (6.0f64 * 0.999).sqrt()).unwrap();
        let kappa = distortion_constants(&cfg).unwrap().kappa;
        assert!(kappa > 1e3);
        let folded = fold(&unit_tri(), 1.0, DEFAULT_GRID_LEN).unwrap();
        let zeta = solve_zeta(&folded, &cfg).unwrap();
        let floor = 1.0 / folded.max_value();
        assert!(zeta > floor, "zeta {zeta} below floor {floor}");
        assert!(zeta < floor * (1.0 + 3.0 / kappa.sqrt()), "zeta {zeta} floor {floor}");
    }

    #[test]
    fn zeta_fails_on_silent_spectrum() {
        let psd = PsdModel::tabulated(1.0, vec![(0.0, 0.0), (0.4, 0.0)]).unwrap();
        let folded = fold(&psd, 1.0, 128).unwrap();
        assert!(matches!(solve_zeta(&folded, &rect_cfg(1.0, 3.0)), Err(Error::NoSignal)));
    }

    #[test]
    fn zeta_matches_fine_grid_bisection_oracle() {
        let cfg = rect_cfg(1.0, 3.0);
        let psd = unit_tri();
        let folded = fold(&psd, 1.0, DEFAULT_GRID_LEN).unwrap();
        let zeta = solve_zeta(&folded, &cfg).unwrap();

        // Independent oracle: plain bisection of the constraint sampled on a
        // 10^6-point grid.
        let kappa = distortion_constants(&cfg).unwrap().kappa;
        let n = 1_000_000usize;
        let step = 1.0 / n as f64;
        let sample: Vec<f64> =
            (0..n).map(|i| psd.eval(-0.5 + (i as f64 + 0.5) * step)).collect();
        let phi_oracle = |z: f64| -> f64 {
            kappa * sample.iter().map(|&s| ((z * s).sqrt() - 1.0).max(0.0)).sum::<f64>() * step
        };
        let (mut lo, mut hi) = (0.5, 4096.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if phi_oracle(mid) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        assert!(close(zeta, oracle, 1e-6), "solver {zeta} vs oracle {oracle}");
    }

    #[test]
    fn flat_prefilter_level() {
        let cfg = rect_cfg(1.0, 3.0);
        let folded = fold(&unit_rect(), 1.0, DEFAULT_GRID_LEN).unwrap();
        let design = optimal_prefilter(&folded, &cfg).unwrap();
        for &h in &design.h2 {
            assert!(close(h, 0.149583, 1e-5), "h2 {h}");
        }
    }

    #[test]
    fn high_resolution_prefilter_whitens() {
        let cfg = rect_cfg(1.0, 12.0);
        let psd = unit_tri();
        let folded = fold(&psd, 1.0, DEFAULT_GRID_LEN).unwrap();
        let design = optimal_prefilter(&folded, &cfg).unwrap();
        let mid = folded.grid.len() / 2;
        let h_mid = design.h2[mid];
        let s_mid = folded.values[mid];
        for i in 0..folded.grid.len() {
            let s = folded.values[i];
            if s <= 0.0 {
                continue;
            }
            let shape = design.h2[i] / h_mid;
            let whitening = (s_mid / s).sqrt();
            assert!(
                (shape / whitening - 1.0).abs() < 0.01,
                "bin {i}: shape {shape} vs whitening {whitening}"
            );
        }
    }

    #[test]
    fn low_resolution_prefilter_discards_band_edges() {
        let cfg = AdcConfig::new(1.0, 1.0, 2.0).unwrap();
        let folded = fold(&unit_tri(), 1.0, DEFAULT_GRID_LEN).unwrap();
        let design = optimal_prefilter(&folded, &cfg).unwrap();
        let zeta = design.zeta.unwrap();
        let mut first_active = None;
        let mut last_active = None;
        for i in 0..folded.grid.len() {
            let active = design.h2[i] > 0.0;
            // activity is exactly the water-level crossing √(ζ·S̃) > 1
            assert_eq!(active, zeta * folded.values[i] > 1.0, "bin {i}");
            if active {
                if first_active.is_none() {
                    first_active = Some(i);
                }
                last_active = Some(i);
            }
        }
        let lo = folded.grid.center(first_active.unwrap());
        let hi = folded.grid.center(last_active.unwrap());
        let f_h = hi - lo;
        assert!(f_h > 0.3 && f_h < 1.0 - folded.grid.step(), "support width {f_h}");

        // compare against the analytic crossing S̃(f_H/2) = 1/ζ
        let analytic_edge = 0.5 * (1.0 - 1.0 / (2.0 * zeta));
        assert!((hi - analytic_edge).abs() < folded.grid.step(), "{hi} vs {analytic_edge}");
    }

    #[test]
    fn pcm_passband_wider_than_waterfilling_support() {
        let psd = unit_tri();
        let f_s = 0.9;
        let cfg = AdcConfig::with_scheduled_eta(f_s, 1.0).unwrap();
        let pcm = pcm_baseline_prefilter(&psd, f_s);
        assert!(close(pcm.cutoff, 0.45, 1e-15));
        let folded = fold(&psd, f_s, DEFAULT_GRID_LEN).unwrap();
        let design = optimal_prefilter(&folded, &cfg).unwrap();
        let f_h = folded
            .grid
            .centers()
            .zip(&design.h2)
            .filter(|(_, &h)| h > 0.0)
            .map(|(f, _)| f.abs())
            .fold(0.0, f64::max);
        assert!(f_h < pcm.cutoff, "water-filling support {f_h} vs PCM cutoff {}", pcm.cutoff);
    }

    #[test]
    fn recovery_is_interpolation_at_high_resolution() {
        // H ≡ 1 over the support, negligible quantization noise: G = T_s.
        let psd = unit_rect();
        let f_s = 1.25;
        let cfg = AdcConfig::new(f_s, 40.0, 2.5).unwrap();
        let folded = fold(&psd, f_s, DEFAULT_GRID_LEN).unwrap();
        let h2 = folded.values.iter().map(|&s| if s > 0.0 { 1.0 } else { 0.0 }).collect();
        let design = design_from_h2(&folded, &cfg, h2).unwrap();
        for f in [0.0, -0.2, 0.2, 0.4] {
            let g = design.recovery_response(&psd, f);
            assert!(close(g, 1.0 / f_s, 1e-9), "G({f}) = {g}");
        }
        assert_eq!(design.recovery_response(&psd, 0.55), 0.0);
    }

    #[test]
    fn recovery_of_silent_filter_is_zero() {
        let psd = unit_rect();
        let cfg = rect_cfg(1.0, 3.0);
        let folded = fold(&psd, 1.0, 512).unwrap();
        let design = design_from_h2(&folded, &cfg, vec![0.0; 512]).unwrap();
        for f in [-0.3, 0.0, 0.2] {
            assert_eq!(design.recovery_response(&psd, f), 0.0);
        }
    }

    #[test]
    fn recovery_level_for_unit_filter_at_b3() {
        let psd = unit_rect();
        let cfg = rect_cfg(1.0, 3.0);
        let folded = fold(&psd, 1.0, DEFAULT_GRID_LEN).unwrap();
        let h2 = folded.values.iter().map(|&s| if s > 0.0 { 1.0 } else { 0.0 }).collect();
        let design = design_from_h2(&folded, &cfg, h2).unwrap();
        let g = design.recovery_response(&psd, 0.1);
        assert!(close(g, 0.905423, 1e-5), "G = {g}");
    }

    #[test]
    fn silent_prefilter_keeps_all_signal_power() {
        let psd = unit_tri();
        let cfg = rect_cfg(1.0, 3.0);
        let grid = Grid::symmetric(0.5, DEFAULT_GRID_LEN).unwrap();
        let report = tmse_for_prefilter(
            &Brickwall { cutoff: 0.0 },
            &psd,
            &cfg,
            &grid,
            Method::Custom,
        )
        .unwrap();
        assert!(close(report.tmse, psd.total_power(), 1e-12));
    }

    #[test]
    fn generic_evaluator_matches_closed_form_at_optimum() {
        for psd in [unit_rect(), unit_tri(), unit_gauss()] {
            for fs in [0.5, 1.0] {
                let cfg = rect_cfg(fs, 3.0);
                let folded = fold(&psd, fs, DEFAULT_GRID_LEN).unwrap();
                let design = optimal_prefilter(&folded, &cfg).unwrap();
                let generic =
                    tmse_for_prefilter(&design, &psd, &cfg, &folded.grid, Method::Proposed)
                        .unwrap();
                let optimal = tmse_optimal(&folded, &psd, &cfg).unwrap();
                assert!(
                    close(generic.tmse, optimal.tmse, 1e-9),
                    "fs {fs}: {} vs {}",
                    generic.tmse,
                    optimal.tmse
                );
            }
        }
    }

    #[test]
    fn brickwall_on_rectangle_matches_pcm_closed_form() {
        let psd = unit_rect();
        let cfg = rect_cfg(1.0, 3.0);
        let grid = Grid::symmetric(0.5, DEFAULT_GRID_LEN).unwrap();
        let pcm = pcm_baseline_prefilter(&psd, 1.0);
        let report =
            tmse_for_prefilter(&pcm, &psd, &cfg, &grid, Method::PcmBaseline).unwrap();
        let kappa_bar = distortion_constants(&cfg).unwrap().kappa_bar;
        let closed =
            closed_form_rectangular(&cfg, 1.0, RectVariant::Pcm { c_q: kappa_bar }).unwrap();
        assert!(close(report.ntmse, closed.ntmse, 1e-9));
    }

    #[test]
    fn closed_form_values() {
        let cfg = rect_cfg(1.0, 3.0);
        let proposed = closed_form_rectangular(&cfg, 1.0, RectVariant::Proposed).unwrap();
        assert!(close(proposed.ntmse, 0.094577, 1e-4));
        let adx = closed_form_rectangular(&cfg, 1.0, RectVariant::Adx).unwrap();
        assert!(close(adx.ntmse, 0.015625, 1e-12));
        let kappa_bar = distortion_constants(&cfg).unwrap().kappa_bar;
        let pcm =
            closed_form_rectangular(&cfg, 1.0, RectVariant::Pcm { c_q: kappa_bar }).unwrap();
        assert!(close(pcm.ntmse, proposed.ntmse, 1e-15));

        // the non-uniform scalar-quantizer constant is smaller than κ̄, so
        // the closed form it assumes reports a lower error than the
        // uniform dithered model achieves
        let nonuniform = closed_form_rectangular(
            &cfg,
            1.0,
            RectVariant::Pcm { c_q: cq_nonuniform_gaussian() },
        )
        .unwrap();
        assert!(cq_nonuniform_gaussian() < kappa_bar);
        assert!(nonuniform.ntmse < proposed.ntmse);
        assert!(nonuniform.ntmse > adx.ntmse);
    }

    #[test]
    fn optimal_tmse_rectangular_value() {
        let psd = unit_rect();
        let cfg = rect_cfg(1.0, 3.0);
        let folded = fold(&psd, 1.0, DEFAULT_GRID_LEN).unwrap();
        let report = tmse_optimal(&folded, &psd, &cfg).unwrap();
        assert!(close(report.ntmse, 0.094577, 1e-4));
    }

    #[test]
    fn optimal_tmse_limits() {
        let psd = unit_rect();
        // b → ∞ at Nyquist: perfect reconstruction
        let cfg = AdcConfig::new(1.0, 20.0, eta_sched(20.0)).unwrap();
        let folded = fold(&psd, 1.0, DEFAULT_GRID_LEN).unwrap();
        let report = tmse_optimal(&folded, &psd, &cfg).unwrap();
        assert!(report.ntmse < 1e-9, "ntmse {}", report.ntmse);

        // b → ∞ at half Nyquist: pure sub-Nyquist loss of one half
        let cfg = AdcConfig::new(0.5, 20.0, eta_sched(20.0)).unwrap();
        let folded = fold(&psd, 0.5, DEFAULT_GRID_LEN).unwrap();
        let report = tmse_optimal(&folded, &psd, &cfg).unwrap();
        assert!((report.ntmse - 0.5).abs() < 1e-9, "ntmse {}", report.ntmse);
    }

    fn eta_sched(b: f64) -> f64 {
        crate::quantizer::eta_schedule(b)
    }

    #[test]
    fn tmse_monotone_in_bits_and_rate() {
        let psd = unit_gauss();
        let mut prev = f64::INFINITY;
        for b in [1.0, 2.0, 3.0, 4.0, 6.0, 8.0] {
            let cfg = rect_cfg(1.0, b);
            let folded = fold(&psd, 1.0, 2048).unwrap();
            let ntmse = tmse_optimal(&folded, &psd, &cfg).unwrap().ntmse;
            assert!(ntmse <= prev + 1e-12, "b {b}: {ntmse} vs {prev}");
            prev = ntmse;
        }
        let mut prev = f64::INFINITY;
        for fs in [0.4, 0.7, 1.0, 1.3, 1.6, 2.0] {
            let cfg = rect_cfg(fs, 3.0);
            let folded = fold(&psd, fs, 2048).unwrap();
            let ntmse = tmse_optimal(&folded, &psd, &cfg).unwrap().ntmse;
            assert!(ntmse <= prev + 1e-12, "fs {fs}: {ntmse} vs {prev}");
            prev = ntmse;
        }
    }

    #[test]
    fn ntmse_invariant_under_psd_scaling() {
        let cfg = rect_cfg(1.0, 3.0);
        let base = unit_tri();
        let scaled = base.scaled(3.7).unwrap();
        let folded_base = fold(&base, 1.0, 2048).unwrap();
        let folded_scaled = fold(&scaled, 1.0, 2048).unwrap();
        let r1 = tmse_optimal(&folded_base, &base, &cfg).unwrap();
        let r2 = tmse_optimal(&folded_scaled, &scaled, &cfg).unwrap();
        assert!(close(r1.ntmse, r2.ntmse, 1e-12));
        assert!(close(r2.tmse, 3.7 * r1.tmse, 1e-12));

        // the passed density |H|²·S̃ (and so the sampled SNR profile) is
        // unchanged as well
        let d1 = optimal_prefilter(&folded_base, &cfg).unwrap();
        let d2 = optimal_prefilter(&folded_scaled, &cfg).unwrap();
        for i in 0..2048 {
            let p1 = d1.h2[i] * folded_base.values[i];
            let p2 = d2.h2[i] * folded_scaled.values[i];
            assert!((p1 - p2).abs() <= 1e-12 * p1.abs().max(1e-30));
        }
    }

    #[test]
    fn grid_refinement_is_converged() {
        for psd in [unit_rect(), unit_tri(), unit_gauss()] {
            let cfg = rect_cfg(1.0, 3.0);
            let coarse = fold(&psd, 1.0, 4096).unwrap();
            let fine = fold(&psd, 1.0, 8192).unwrap();
            let t1 = tmse_optimal(&coarse, &psd, &cfg).unwrap().tmse;
            let t2 = tmse_optimal(&fine, &psd, &cfg).unwrap().tmse;
            assert!(close(t1, t2, 1e-6), "{t1} vs {t2}");
        }
    }

    #[test]
    fn random_perturbations_never_beat_the_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for psd in [unit_rect(), unit_tri(), unit_gauss()] {
            for fs in [0.5, 1.0] {
                let cfg = rect_cfg(fs, 3.0);
                let folded = fold(&psd, fs, 1024).unwrap();
                let design = optimal_prefilter(&folded, &cfg).unwrap();
                let best = tmse_for_prefilter(&design, &psd, &cfg, &folded.grid, Method::Proposed)
                    .unwrap()
                    .tmse;
                for _ in 0..100 {
                    let offsets: Vec<f64> =
                        (0..1024).map(|_| rng.random_range(-0.2..0.2)).collect();
                    let perturbed = Perturbed { design: &design, offsets };
                    let worse =
                        tmse_for_prefilter(&perturbed, &psd, &cfg, &folded.grid, Method::Custom)
                            .unwrap()
                            .tmse;
                    assert!(worse >= best - 1e-9, "{worse} < {best}");
                }
            }
        }
    }

    #[test]
    fn alias_structure_is_single_and_dominant() {
        let psd = PsdModel::tabulated(
            1.0,
            vec![(0.0, 0.05), (0.2, 0.1), (0.3, 1.0), (0.4, 0.2), (0.45, 0.0)],
        )
        .unwrap()
        .normalize_unit_power()
        .unwrap();
        let cfg = rect_cfg(0.3, 3.0);
        let folded = fold(&psd, 0.3, 2048).unwrap();
        let design = optimal_prefilter(&folded, &cfg).unwrap();
        for (i, f) in folded.grid.centers().enumerate() {
            // the carried alias is the stored dominant one...
            assert_eq!(design.alias[i], folded.fold_index[i]);
            // ...and dominates every other alias of this bin
            for k in -4i64..=4 {
                assert!(folded.values[i] >= psd.eval(f - k as f64 * 0.3) - 1e-15);
            }
        }
    }

    #[test]
    fn corrupted_water_level_is_detectably_suboptimal() {
        // rebuilding the filter from a +10% water level must trip the
        // optimality spot-check on any shaped PSD (on a flat PSD the level
        // only rescales the filter, which the TMSE is invariant to)
        let psd = unit_tri();
        let cfg = rect_cfg(1.0, 3.0);
        let folded = fold(&psd, 1.0, DEFAULT_GRID_LEN).unwrap();
        let design = optimal_prefilter(&folded, &cfg).unwrap();
        let best = tmse_optimal(&folded, &psd, &cfg).unwrap().tmse;
        let bad_zeta = design.zeta.unwrap() * 1.1;
        let four_b = cfg.four_pow_b();
        let h2: Vec<f64> = folded
            .values
            .iter()
            .map(|&s| if s > 0.0 { ((bad_zeta * s).sqrt() - 1.0).max(0.0) / (four_b * s) } else { 0.0 })
            .collect();
        let corrupted = design_from_h2(&folded, &cfg, h2).unwrap();
        let worse =
            tmse_for_prefilter(&corrupted, &psd, &cfg, &folded.grid, Method::Custom).unwrap().tmse;
        assert!(worse > best + 1e-9, "corrupted level not detected: {worse} vs {best}");
    }

    #[test]
    fn recovery_filter_populates_band_samples() {
        let psd = unit_tri();
        let cfg = rect_cfg(0.9, 3.0);
        let folded = fold(&psd, 0.9, 1024).unwrap();
        let mut design = optimal_prefilter(&folded, &cfg).unwrap();
        assert!(design.g.is_none());
        recovery_filter(&mut design, &psd, 512).unwrap();
        let samples = design.g.clone().unwrap();
        assert_eq!(samples.values.len(), 512);
        assert!((samples.grid.lo() + 0.5).abs() < 1e-15);
        for (f, &g) in samples.grid.centers().zip(&samples.values) {
            assert_eq!(g, design.recovery_response(&psd, f));
        }
    }

    #[test]
    fn h2_true_roundtrip_through_folding() {
        let psd = unit_tri();
        let cfg = rect_cfg(0.7, 3.0);
        let folded = fold(&psd, 0.7, 2048).unwrap();
        let design = optimal_prefilter(&folded, &cfg).unwrap();
        for i in (0..2048).step_by(17) {
            let f_true = folded.true_frequency(i);
            assert_eq!(design.h2_true(f_true), design.h2[i]);
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]

        /// Estimation error never exceeds the signal power, and never goes
        /// negative, across the admissible configuration space.
        #[test]
        fn tmse_report_stays_in_bounds(
            shape in 0usize..3,
            fs_ratio in 0.15f64..2.5,
            b in 1.0f64..10.0,
        ) {
            let psd = match shape {
                0 => unit_rect(),
                1 => unit_tri(),
                _ => unit_gauss(),
            };
            let cfg = AdcConfig::with_scheduled_eta(fs_ratio, b).unwrap();
            let folded = fold(&psd, fs_ratio, 1024).unwrap();
            let report = tmse_optimal(&folded, &psd, &cfg).unwrap();
            proptest::prop_assert!(report.tmse >= 0.0);
            proptest::prop_assert!(report.tmse <= report.sigma2 * (1.0 + 1e-9));
            let generic =
                tmse_for_prefilter(&optimal_prefilter(&folded, &cfg).unwrap(), &psd, &cfg, &folded.grid, Method::Proposed)
                    .unwrap();
            proptest::prop_assert!(generic.tmse >= 0.0 && generic.tmse <= generic.sigma2 * (1.0 + 1e-9));
        }
    }
}
