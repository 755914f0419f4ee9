//! Experiment manifests: a single TOML document describing the input PSD,
//! the ADC, and the experiment to run. Every CLI flag mirrors one of these
//! keys; flags win over the file.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::quantizer::AdcConfig;
use crate::spectra::PsdModel;

/// Parsed experiment manifest.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub psd: PsdSection,
    pub adc: Option<AdcSection>,
    pub experiment: Option<ExperimentSection>,
    pub sim: Option<SimSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsdKind {
    Rectangular,
    Triangular,
    Gaussian3db,
    Tabulated,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsdSection {
    pub kind: PsdKind,
    pub f_nyq: f64,
    /// `(frequency, density)` knots for `kind = "tabulated"`.
    pub table: Option<Vec<(f64, f64)>>,
    /// Rescale to unit power after construction (default true).
    pub normalize: Option<bool>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdcSection {
    pub f_s: f64,
    pub b: f64,
    /// Overload factor; defaults to the `0.25·b + 1.75` schedule.
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    SweepBits,
    SweepFsAtRate,
    FindFrVsRate,
    SingleDesign,
    Validate,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    /// Bit depths for `sweep_bits`.
    pub bits: Option<Vec<f64>>,
    /// Sampling rates in units of `f_nyq` for the sweeps.
    pub fs_over_fnyq: Option<Vec<f64>>,
    /// Rate budget (bits per Nyquist interval) for `sweep_fs_at_rate`.
    pub rate_budget: Option<f64>,
    /// Rate-budget grid for `find_fr_vs_rate`.
    pub rate_grid: Option<Vec<f64>>,
    /// Attach Monte Carlo columns where the experiment supports them.
    pub simulate: Option<bool>,
    pub output: Option<String>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    /// Dense-grid oversampling factor; omit for the automatic choice.
    pub oversample: Option<usize>,
    pub block_samples: Option<usize>,
    pub trials: Option<usize>,
    pub dithered: Option<bool>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Manifest> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("manifest: {e}")))
    }

    pub fn load(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path)?;
        Manifest::parse(&text)
    }

    /// Builds the PSD model this manifest describes (normalized to unit
    /// power unless `normalize = false`).
    pub fn build_psd(&self) -> Result<PsdModel> {
        let section = &self.psd;
        let model = match section.kind {
            PsdKind::Rectangular => PsdModel::rectangular(section.f_nyq)?,
            PsdKind::Triangular => PsdModel::triangular(section.f_nyq)?,
            PsdKind::Gaussian3db => PsdModel::gaussian_3db(section.f_nyq)?,
            PsdKind::Tabulated => {
                let knots = section.table.clone().ok_or_else(|| {
                    Error::InvalidConfig("tabulated PSD needs a `table` of knots".into())
                })?;
                PsdModel::tabulated(section.f_nyq, knots)?
            }
        };
        if section.normalize.unwrap_or(true) {
            model.normalize_unit_power()
        } else {
            Ok(model)
        }
    }

    /// Builds the ADC config, applying the η schedule when `eta` is absent.
    pub fn build_adc(&self) -> Result<AdcConfig> {
        let section = self
            .adc
            .ok_or_else(|| Error::InvalidConfig("manifest has no [adc] section".into()))?;
        match section.eta {
            Some(eta) => AdcConfig::new(section.f_s, section.b, eta),
            None => AdcConfig::with_scheduled_eta(section.f_s, section.b),
        }
    }
}
