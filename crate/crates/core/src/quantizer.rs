//! Mid-rise uniform quantization with non-subtractive triangular dither.
//!
//! The quantizer saturates at `±(γ - Δ/2)` and its dynamic range is tied to
//! the input power through the overload factor `η`: `γ² = η²·E{(y + w)²}`.
//! Folding the dither variance `Δ²/6` into that relation gives
//! `γ² = κ̄·E{y²}` with `κ̄ = η²·(1 - 2η²/(3·2^{2b}))⁻¹`; the per-sample
//! distortion constant used by the filter design is `κ = κ̄·2^{-2b}`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Overload factor schedule `η(b) = 0.25·b + 1.75` used by all experiments.
pub fn eta_schedule(b: f64) -> f64 {
    0.25 * b + 1.75
}

/// Sampling rate, amplitude resolution, and overload factor of the ADC.
///
/// `b` may be fractional in theory-side evaluations; building an operable
/// [`QuantizerSpec`] requires an integer bit depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdcConfig {
    pub f_s: f64,
    pub b: f64,
    pub eta: f64,
}

impl AdcConfig {
    pub fn new(f_s: f64, b: f64, eta: f64) -> Result<AdcConfig> {
        if f_s <= 0.0 || !f_s.is_finite() {
            return Err(Error::InvalidConfig(format!("f_s must be positive, got {f_s}")));
        }
        if b <= 0.0 || !b.is_finite() {
            return Err(Error::InvalidConfig(format!("bit depth must be positive, got {b}")));
        }
        if eta <= 0.0 || !eta.is_finite() {
            return Err(Error::InvalidConfig(format!("eta must be positive, got {eta}")));
        }
        Ok(AdcConfig { f_s, b, eta })
    }

    /// Config with `η` taken from [`eta_schedule`].
    pub fn with_scheduled_eta(f_s: f64, b: f64) -> Result<AdcConfig> {
        AdcConfig::new(f_s, b, eta_schedule(b))
    }

    /// Sampling period `T_s = 1/f_s`.
    pub fn sample_period(&self) -> f64 {
        1.0 / self.f_s
    }

    /// Output bit rate `R = f_s·b` in bits per second.
    pub fn bit_rate(&self) -> f64 {
        self.f_s * self.b
    }

    /// `2^{2b}`.
    pub fn four_pow_b(&self) -> f64 {
        (2.0 * self.b).exp2()
    }
}

/// The quantization distortion constants of the dithered mid-rise model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionConstants {
    /// `κ = κ̄·2^{-2b}`.
    pub kappa: f64,
    /// `κ̄ = η²·(1 - 2η²/(3·2^{2b}))⁻¹`.
    pub kappa_bar: f64,
}

/// Computes `κ` and `κ̄`, rejecting configs whose dither power would exceed
/// the dynamic-range budget (`2η²/(3·2^{2b}) ≥ 1`).
pub fn distortion_constants(config: &AdcConfig) -> Result<DistortionConstants> {
    let four_b = config.four_pow_b();
    let denom = 1.0 - 2.0 * config.eta * config.eta / (3.0 * four_b);
    if denom.is_nan() || denom <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "quantizer too coarse for eta = {} at b = {} (1 - 2η²/(3·2^2b) = {denom})",
            config.eta, config.b
        )));
    }
    let kappa_bar = config.eta * config.eta / denom;
    Ok(DistortionConstants { kappa: kappa_bar / four_b, kappa_bar })
}

/// Operable mid-rise quantizer: dynamic range, step size, and dither flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    /// One-sided dynamic range γ.
    pub gamma: f64,
    /// Step size Δ = 2γ/2^b.
    pub delta: f64,
    /// Integer bit depth.
    pub bits: u32,
    /// Whether `quantize_stream` adds triangular dither before quantizing.
    pub dithered: bool,
}

/// Sizes the dynamic range from the analytic filtered-signal power
/// `E{y²}` via `γ = sqrt(κ̄·E{y²})`.
///
/// The same γ and Δ are used for the dithered and non-dithered modes, so a
/// mode switch only removes the dither signal.
pub fn dynamic_range(config: &AdcConfig, signal_power: f64, dithered: bool) -> Result<QuantizerSpec> {
    if signal_power <= 0.0 || !signal_power.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "signal power must be positive, got {signal_power}"
        )));
    }
    if config.b.fract() != 0.0 || config.b < 1.0 || config.b > 32.0 {
        return Err(Error::InvalidConfig(format!(
            "an operable quantizer needs an integer bit depth in 1..=32, got {}",
            config.b
        )));
    }
    let constants = distortion_constants(config)?;
    let gamma = (constants.kappa_bar * signal_power).sqrt();
    let bits = config.b as u32;
    let delta = 2.0 * gamma / (config.b).exp2();
    Ok(QuantizerSpec { gamma, delta, bits, dithered })
}

/// Mid-rise quantization: `Δ(⌊x/Δ⌋ + ½)` inside the dynamic range,
/// `sign(x)·(γ - Δ/2)` on overload. Output always lies in the
/// `2^b`-point lattice.
pub fn midrise(spec: &QuantizerSpec, x: f64) -> f64 {
    let half_levels = (spec.bits as f64 - 1.0).exp2();
    if x.abs() < spec.gamma {
        // clamp guards against x/Δ rounding up to the saturation cell
        let m = (x / spec.delta).floor().clamp(-half_levels, half_levels - 1.0);
        spec.delta * (m + 0.5)
    } else {
        (spec.gamma - spec.delta / 2.0) * x.signum()
    }
}

/// One triangular dither sample on `[-Δ, Δ]` (sum of two independent
/// uniforms on `[-Δ/2, Δ/2]`), zero mean, variance `Δ²/6`.
pub fn draw_dither<R: Rng + ?Sized>(spec: &QuantizerSpec, rng: &mut R) -> f64 {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    (u1 - 0.5) * spec.delta + (u2 - 0.5) * spec.delta
}

/// Quantizes a sample sequence, counting inputs that land outside the
/// dynamic range. Non-dithered specs quantize `y[n]` directly.
pub fn quantize_stream<R: Rng + ?Sized>(
    spec: &QuantizerSpec,
    y: &[f64],
    rng: &mut R,
) -> (Vec<f64>, usize) {
    let mut overloads = 0usize;
    let z = y
        .iter()
        .map(|&sample| {
            let v = if spec.dithered { sample + draw_dither(spec, rng) } else { sample };
            if v.abs() >= spec.gamma {
                overloads += 1;
            }
            midrise(spec, v)
        })
        .collect();
    (z, overloads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn eta_schedule_values() {
        assert_eq!(eta_schedule(3.0), 2.5);
        assert_eq!(eta_schedule(1.0), 2.0);
        assert_eq!(eta_schedule(8.0), 3.75);
    }

    #[test]
    fn distortion_constants_b3() {
        let cfg = AdcConfig::with_scheduled_eta(1.0, 3.0).unwrap();
        let dc = distortion_constants(&cfg).unwrap();
        assert!(close(dc.kappa_bar, 6.68524, 1e-5));
        assert!(close(dc.kappa, 0.104457, 1e-5));
        assert!(close(dc.kappa, dc.kappa_bar / 64.0, 1e-15));
    }

    #[test]
    fn distortion_constants_b1_exact() {
        let cfg = AdcConfig::new(1.0, 1.0, 2.0).unwrap();
        let dc = distortion_constants(&cfg).unwrap();
        assert!(close(dc.kappa_bar, 12.0, 1e-12));
        assert!(close(dc.kappa, 3.0, 1e-12));
    }

    #[test]
    fn distortion_constants_high_b_limit() {
        let cfg = AdcConfig::new(1.0, 40.0, 2.5).unwrap();
        let dc = distortion_constants(&cfg).unwrap();
        assert!(close(dc.kappa_bar, 2.5 * 2.5, 1e-12));
        assert!(dc.kappa < 1e-20);
    }

    #[test]
    fn distortion_constants_rejects_coarse_quantizer() {
        // b = 0.5, η = 1.875: 2η²/(3·2) > 1
        let cfg = AdcConfig::with_scheduled_eta(1.0, 0.5).unwrap();
        assert!(distortion_constants(&cfg).is_err());
    }

    #[test]
    fn dynamic_range_b3() {
        let cfg = AdcConfig::with_scheduled_eta(1.0, 3.0).unwrap();
        let spec = dynamic_range(&cfg, 1.0, true).unwrap();
        assert!(close(spec.gamma, 2.58558, 1e-5));
        assert!(close(spec.delta, 0.646396, 1e-5));
        assert_eq!(spec.bits, 3);
    }

    #[test]
    fn dynamic_range_scale_equivariance() {
        let cfg = AdcConfig::with_scheduled_eta(1.0, 3.0).unwrap();
        let full = dynamic_range(&cfg, 1.0, true).unwrap();
        let quarter = dynamic_range(&cfg, 0.25, true).unwrap();
        assert!(close(quarter.gamma, full.gamma / 2.0, 1e-15));
    }

    #[test]
    fn dynamic_range_high_b_approaches_eta_std() {
        let cfg = AdcConfig::new(1.0, 24.0, 2.5).unwrap();
        let spec = dynamic_range(&cfg, 4.0, true).unwrap();
        assert!(close(spec.gamma, 2.5 * 2.0, 1e-9));
    }

    #[test]
    fn dynamic_range_rejects_bad_inputs() {
        let cfg = AdcConfig::with_scheduled_eta(1.0, 3.0).unwrap();
        assert!(dynamic_range(&cfg, 0.0, true).is_err());
        let frac = AdcConfig::with_scheduled_eta(1.0, 2.5).unwrap();
        assert!(dynamic_range(&frac, 1.0, true).is_err());
    }

    fn spec_b2() -> QuantizerSpec {
        QuantizerSpec { gamma: 1.0, delta: 0.5, bits: 2, dithered: false }
    }

    #[test]
    fn midrise_known_values() {
        let spec = spec_b2();
        assert_eq!(midrise(&spec, 0.3), 0.25);
        assert_eq!(midrise(&spec, 5.0), 0.75); // saturation
        assert_eq!(midrise(&spec, -5.0), -0.75);
        assert_eq!(midrise(&spec, -0.5), -0.25); // floor(-1) + 1/2
    }

    #[test]
    fn midrise_has_no_zero_level() {
        let spec = spec_b2();
        assert_eq!(midrise(&spec, 0.0), 0.25);
        assert_eq!(midrise(&spec, -1e-12), -0.25);
    }

    #[test]
    fn dither_moments() {
        let spec = QuantizerSpec { gamma: 4.0, delta: 0.5, bits: 4, dithered: true };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000usize;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let w = draw_dither(&spec, &mut rng);
            assert!(w.abs() <= spec.delta, "dither outside [-Δ, Δ]: {w}");
            sum += w;
            sum_sq += w * w;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        let target = spec.delta * spec.delta / 6.0;
        // mean: 3 standard errors of a zero-mean triangular sample mean
        assert!(mean.abs() < 3.0 * target.sqrt() / (n as f64).sqrt());
        assert!((var - target).abs() < 0.01 * target, "dither variance {var} vs {target}");
    }

    #[test]
    fn quantize_zero_stream_without_dither() {
        let spec = spec_b2();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (z, overloads) = quantize_stream(&spec, &[0.0; 64], &mut rng);
        assert_eq!(overloads, 0);
        assert!(z.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn overload_fraction_bounded_for_gaussian_input() {
        let cfg = AdcConfig::with_scheduled_eta(1.0, 3.0).unwrap();
        let spec = dynamic_range(&cfg, 1.0, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let y: Vec<f64> =
            (0..200_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (_, overloads) = quantize_stream(&spec, &y, &mut rng);
        let frac = overloads as f64 / y.len() as f64;
        assert!(frac <= 1.0 / (2.5 * 2.5), "Chebyshev bound violated: {frac}");
        assert!(frac < 0.05, "Gaussian overload should be far below the bound: {frac}");
    }

    #[test]
    fn dithered_error_variance_near_quarter_delta_sq() {
        // Clamped Gaussian input guarantees |y + w| < γ, the regime where the
        // dither theorem pins the error moments.
        let spec = QuantizerSpec { gamma: 4.0, delta: 0.5, bits: 4, dithered: true };
        let clip = spec.gamma - spec.delta;
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let y: Vec<f64> = (0..200_000)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                v.clamp(-clip, clip)
            })
            .collect();
        let (z, overloads) = quantize_stream(&spec, &y, &mut rng);
        assert_eq!(overloads, 0);
        let n = y.len() as f64;
        let mean: f64 = z.iter().zip(&y).map(|(&a, &b)| a - b).sum::<f64>() / n;
        let var: f64 = z.iter().zip(&y).map(|(&a, &b)| (a - b - mean).powi(2)).sum::<f64>() / n;
        let target = spec.delta * spec.delta / 4.0;
        assert!(mean.abs() < 2e-3, "error mean {mean}");
        assert!((var - target).abs() < 0.02 * target, "error variance {var} vs {target}");
    }

    proptest! {
        #[test]
        fn midrise_outputs_lie_on_lattice(bits in 1u32..12, gamma in 0.1f64..100.0, x in -500.0f64..500.0) {
            let delta = 2.0 * gamma / (bits as f64).exp2();
            let spec = QuantizerSpec { gamma, delta, bits, dithered: false };
            let z = midrise(&spec, x);
            let m = (z / delta - 0.5).round();
            prop_assert!((z - delta * (m + 0.5)).abs() <= 1e-12 * gamma);
            let half = (bits as f64 - 1.0).exp2();
            prop_assert!(m >= -half && m <= half - 1.0);
            prop_assert!(z.abs() <= gamma - delta / 2.0 + 1e-12 * gamma);
        }

        #[test]
        fn midrise_is_monotone(bits in 1u32..10, gamma in 0.1f64..10.0, a in -50.0f64..50.0, d in 0.0f64..50.0) {
            let delta = 2.0 * gamma / (bits as f64).exp2();
            let spec = QuantizerSpec { gamma, delta, bits, dithered: false };
            prop_assert!(midrise(&spec, a) <= midrise(&spec, a + d));
        }
    }
}
