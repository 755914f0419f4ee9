//! Input power spectral densities and their aliasing fold.
//!
//! A [`PsdModel`] is a symmetric, bandlimited baseband PSD with support
//! `(-f_nyq/2, f_nyq/2)`. [`fold`] maps it onto the sampled band
//! `(-f_s/2, f_s/2)` by keeping, at every folded frequency, the dominant
//! alias `S_x(f - k·f_s)` together with the alias index that achieves it.
//!
//! All band integrals in this crate use the same uniform midpoint grid
//! ([`Grid`]), so cross-checks between different analytic routes stay
//! bit-stable. Bin centers never land on the support edges, where
//! brickwall PSDs are discontinuous.

use crate::error::{Error, Result};

/// Default number of frequency bins for design-side grids.
pub const DEFAULT_GRID_LEN: usize = 4096;

/// Uniform midpoint grid over `(lo, hi)`: bin `i` is centered at
/// `lo + (i + 1/2)·step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    lo: f64,
    hi: f64,
    n: usize,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Grid> {
        if hi <= lo || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidConfig(format!("bad grid bounds [{lo}, {hi}]")));
        }
        if n < 2 {
            return Err(Error::InvalidConfig(format!("grid needs at least 2 bins, got {n}")));
        }
        Ok(Grid { lo, hi, n })
    }

    /// Grid over `(-half_width, +half_width)`.
    pub fn symmetric(half_width: f64, n: usize) -> Result<Grid> {
        Grid::new(-half_width, half_width, n)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / self.n as f64
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// Center of bin `i`.
    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.step()
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.center(i))
    }

    /// Index of the bin containing `f`, clamped to the grid.
    pub fn bin_of(&self, f: f64) -> usize {
        let raw = ((f - self.lo) / self.step()).floor();
        if raw < 0.0 {
            0
        } else {
            (raw as usize).min(self.n - 1)
        }
    }
}

/// Shape family of a [`PsdModel`], before power scaling.
#[derive(Debug, Clone, PartialEq)]
pub enum PsdShape {
    /// Flat density over the whole support.
    Rectangular,
    /// `1 - 2|f|/f_nyq` over the support.
    Triangular,
    /// Gaussian bell whose 3-dB bandwidth is `f_nyq/2` (half-power points at
    /// `±f_nyq/4`), truncated at the support edges.
    Gaussian3db,
    /// Piecewise-linear density over `[0, f_nyq/2]`, mirrored to negative
    /// frequencies. Zero beyond the last knot; constant left of the first.
    Tabulated { knots: Vec<(f64, f64)> },
}

/// Symmetric bandlimited baseband PSD with support `(-f_nyq/2, f_nyq/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdModel {
    shape: PsdShape,
    f_nyq: f64,
    power_scale: f64,
}

impl PsdModel {
    pub fn rectangular(f_nyq: f64) -> Result<PsdModel> {
        PsdModel::from_shape(PsdShape::Rectangular, f_nyq)
    }

    pub fn triangular(f_nyq: f64) -> Result<PsdModel> {
        PsdModel::from_shape(PsdShape::Triangular, f_nyq)
    }

    /// Gaussian PSD with `S(f_nyq/4) = S(0)/2`, truncated to the support.
    pub fn gaussian_3db(f_nyq: f64) -> Result<PsdModel> {
        PsdModel::from_shape(PsdShape::Gaussian3db, f_nyq)
    }

    /// Tabulated PSD from `(frequency, density)` knots on `[0, f_nyq/2]`.
    pub fn tabulated(f_nyq: f64, knots: Vec<(f64, f64)>) -> Result<PsdModel> {
        if knots.len() < 2 {
            return Err(Error::InvalidPsd("table needs at least 2 knots".into()));
        }
        for w in knots.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidPsd(format!(
                    "table frequencies must be strictly increasing ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        for &(f, v) in &knots {
            if !f.is_finite() || f < 0.0 {
                return Err(Error::InvalidPsd(format!("knot frequency {f} out of range")));
            }
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidPsd(format!("negative or non-finite density {v}")));
            }
        }
        if knots.last().unwrap().0 > f_nyq / 2.0 {
            return Err(Error::InvalidPsd("table extends beyond the Nyquist support".into()));
        }
        PsdModel::from_shape(PsdShape::Tabulated { knots }, f_nyq)
    }

    fn from_shape(shape: PsdShape, f_nyq: f64) -> Result<PsdModel> {
        if f_nyq <= 0.0 || !f_nyq.is_finite() {
            return Err(Error::InvalidPsd(format!("f_nyq must be positive, got {f_nyq}")));
        }
        Ok(PsdModel { shape, f_nyq, power_scale: 1.0 })
    }

    pub fn f_nyq(&self) -> f64 {
        self.f_nyq
    }

    pub fn shape(&self) -> &PsdShape {
        &self.shape
    }

    /// Evaluates the density at `f`. Exactly zero for `|f| >= f_nyq/2`.
    pub fn eval(&self, f: f64) -> f64 {
        let half = self.f_nyq / 2.0;
        if f.abs() >= half {
            return 0.0;
        }
        let raw = match &self.shape {
            PsdShape::Rectangular => 1.0,
            PsdShape::Triangular => 1.0 - 2.0 * f.abs() / self.f_nyq,
            PsdShape::Gaussian3db => {
                // exp(-f² ln2 / (f_nyq/4)²) puts the half-power point at f_nyq/4.
                let quarter = self.f_nyq / 4.0;
                (-f * f * std::f64::consts::LN_2 / (quarter * quarter)).exp()
            }
            PsdShape::Tabulated { knots } => interp_knots(knots, f.abs()),
        };
        self.power_scale * raw
    }

    /// Total power `∫ S_x(f) df`, computed analytically per shape.
    pub fn total_power(&self) -> f64 {
        let raw = match &self.shape {
            PsdShape::Rectangular => self.f_nyq,
            PsdShape::Triangular => self.f_nyq / 2.0,
            PsdShape::Gaussian3db => {
                // ∫ exp(-α f²) over (-W/2, W/2) with α = ln2/(W/4)².
                let quarter = self.f_nyq / 4.0;
                let alpha = std::f64::consts::LN_2 / (quarter * quarter);
                (std::f64::consts::PI / alpha).sqrt() * libm::erf(2.0 * std::f64::consts::LN_2.sqrt())
            }
            PsdShape::Tabulated { knots } => {
                let mut half_power = knots[0].0 * knots[0].1;
                for w in knots.windows(2) {
                    half_power += 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0);
                }
                2.0 * half_power
            }
        };
        self.power_scale * raw
    }

    /// Returns a copy rescaled so that `∫ S_x df = 1` (within 1e-12 relative).
    pub fn normalize_unit_power(&self) -> Result<PsdModel> {
        let power = self.total_power();
        if power <= 0.0 || !power.is_finite() {
            return Err(Error::ZeroPower);
        }
        let mut out = self.clone();
        out.power_scale /= power;
        Ok(out)
    }

    /// Returns a copy with the density multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<PsdModel> {
        if c <= 0.0 || !c.is_finite() {
            return Err(Error::InvalidPsd(format!("scale must be positive, got {c}")));
        }
        let mut out = self.clone();
        out.power_scale *= c;
        Ok(out)
    }

    /// True when the density is non-increasing in `|f|`. The PCM baseline
    /// filter is only specified for such PSDs.
    pub fn is_unimodal(&self) -> bool {
        match &self.shape {
            PsdShape::Rectangular | PsdShape::Triangular | PsdShape::Gaussian3db => true,
            PsdShape::Tabulated { knots } => knots.windows(2).all(|w| w[1].1 <= w[0].1),
        }
    }
}

fn interp_knots(knots: &[(f64, f64)], f: f64) -> f64 {
    if f <= knots[0].0 {
        return knots[0].1;
    }
    if f >= knots.last().unwrap().0 {
        // Implicit zero beyond the last knot, except exactly at it.
        return if f == knots.last().unwrap().0 { knots.last().unwrap().1 } else { 0.0 };
    }
    // knots are strictly increasing; find the bracketing segment
    let mut idx = 0;
    for (i, w) in knots.windows(2).enumerate() {
        if f < w[1].0 {
            idx = i;
            break;
        }
    }
    let (f0, v0) = knots[idx];
    let (f1, v1) = knots[idx + 1];
    v0 + (v1 - v0) * (f - f0) / (f1 - f0)
}

/// Dominant alias of `f` under sampling rate `f_s`: the integer `k`
/// maximizing `S_x(f - k·f_s)`. Ties go to the smallest `|k|`, then the
/// positive one; frequencies with no alias inside the support get `(0, 0.0)`.
pub fn dominant_alias(psd: &PsdModel, f_s: f64, f: f64) -> (i64, f64) {
    let half = psd.f_nyq() / 2.0;
    let k_min = ((f - half) / f_s).ceil() as i64;
    let k_max = ((f + half) / f_s).floor() as i64;
    let mut best_k = 0i64;
    let mut best_v = 0.0f64;
    let mut seen = false;
    for k in k_min..=k_max {
        let v = psd.eval(f - k as f64 * f_s);
        let better = if !seen {
            true
        } else if v != best_v {
            v > best_v
        } else {
            // equal densities: prefer the smaller |k|, then the positive one
            k.abs() < best_k.abs() || (k.abs() == best_k.abs() && k > best_k)
        };
        if better {
            best_k = k;
            best_v = v;
            seen = true;
        }
    }
    if !seen {
        (0, 0.0)
    } else {
        (best_k, best_v)
    }
}

/// The dominant-alias spectrum `S̃_x` on the sampled band, with the alias
/// index that produced each value.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldedSpectrum {
    pub grid: Grid,
    pub f_s: f64,
    /// `S̃_x(f)` at the bin centers.
    pub values: Vec<f64>,
    /// `k̃(f)` at the bin centers.
    pub fold_index: Vec<i64>,
}

impl FoldedSpectrum {
    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// True frequency `f - k̃(f)·f_s` carrying the density of bin `i`.
    pub fn true_frequency(&self, i: usize) -> f64 {
        self.grid.center(i) - self.fold_index[i] as f64 * self.f_s
    }
}

/// Folds `psd` onto the band `(-f_s/2, f_s/2)` on a midpoint grid of
/// `grid_len` bins.
pub fn fold(psd: &PsdModel, f_s: f64, grid_len: usize) -> Result<FoldedSpectrum> {
    if f_s <= 0.0 || !f_s.is_finite() {
        return Err(Error::InvalidConfig(format!("f_s must be positive, got {f_s}")));
    }
    let grid = Grid::symmetric(f_s / 2.0, grid_len)?;
    let mut values = Vec::with_capacity(grid_len);
    let mut fold_index = Vec::with_capacity(grid_len);
    for f in grid.centers() {
        let (k, v) = dominant_alias(psd, f_s, f);
        values.push(v);
        fold_index.push(k);
    }
    Ok(FoldedSpectrum { grid, f_s, values, fold_index })
}
