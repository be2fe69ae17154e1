//! Run configuration: strict JSON with the unit in every dimensioned key.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use qparity_core::analysis::{AveragingScheme, EnsembleConfig, SweepMode};
use qparity_core::montecarlo::{DetectionModel, Experiment, ProtocolConfig};
use qparity_core::transmon::DeviceParams;

use crate::error::{CliError, CliResult};

/// Largest number of grid points a single range may expand to.
const MAX_GRID_POINTS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub device: DeviceParams,
    pub experiment: ExperimentBlocks,
    pub seed: u64,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: Format,
}

/// One parameter block per command; a command fails if its block is absent.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlocks {
    #[serde(default)]
    pub spectroscopy: Option<SpectroscopyParams>,
    #[serde(default)]
    pub parity_ramsey: Option<ProtocolParams>,
    #[serde(default)]
    pub echo: Option<SweepParams>,
    #[serde(default)]
    pub sweep: Option<SweepParams>,
    #[serde(default)]
    pub appendix_a1: Option<AppendixParams>,
}

/// Inclusive range `start_us, start_us + step_us, ..., stop_us`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayRange {
    pub start_us: f64,
    pub stop_us: f64,
    pub step_us: f64,
}

impl DelayRange {
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop_us - self.start_us) / self.step_us + 1e-9).floor() as usize;
        (0..=n).map(|k| self.start_us + k as f64 * self.step_us).collect()
    }

    fn validate(&self, path: &str) -> CliResult<()> {
        positive(&format!("{path}.step_us"), self.step_us)?;
        non_negative(&format!("{path}.start_us"), self.start_us)?;
        if !(self.stop_us >= self.start_us && self.stop_us.is_finite()) {
            return Err(CliError::config(&format!("{path}.stop_us"), "must be finite and >= start_us"));
        }
        if (self.stop_us - self.start_us) / self.step_us >= MAX_GRID_POINTS as f64 {
            return Err(CliError::config(path, format!("more than {MAX_GRID_POINTS} points")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectroscopyParams {
    pub tau_p_us: Vec<f64>,
    pub delta_f_half_width_mhz: f64,
    pub delta_f_step_mhz: f64,
    pub dt_max_us: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolParams {
    pub delays_us: DelayRange,
    pub shots_per_delay: usize,
    pub f_virt_mhz: f64,
    pub tau_p_us: f64,
    pub detection_model: DetectionModel,
    pub readout_error: f64,
    pub dt_max_us: f64,
}

impl ProtocolParams {
    pub fn to_protocol(&self, experiment: Experiment, seed: u64) -> ProtocolConfig {
        ProtocolConfig {
            delays: self.delays_us.values(),
            shots_per_delay: self.shots_per_delay,
            f_virt: self.f_virt_mhz,
            tau_p: self.tau_p_us,
            master_seed: seed,
            detection_model: self.detection_model,
            experiment,
            readout_error: self.readout_error,
            initial_parity: None,
            dt_max: self.dt_max_us,
        }
    }

    fn validate(&self, path: &str) -> CliResult<()> {
        self.delays_us.validate(&format!("{path}.delays_us"))?;
        if self.shots_per_delay == 0 {
            return Err(CliError::config(&format!("{path}.shots_per_delay"), "must be >= 1"));
        }
        finite(&format!("{path}.f_virt_mhz"), self.f_virt_mhz)?;
        positive(&format!("{path}.tau_p_us"), self.tau_p_us)?;
        if !(0.0..=0.5).contains(&self.readout_error) {
            return Err(CliError::config(&format!("{path}.readout_error"), "must lie in [0, 0.5]"));
        }
        positive(&format!("{path}.dt_max_us"), self.dt_max_us)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SchemeParams {
    Uniform,
    Mixture { rate_per_us: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleParams {
    pub f_virt_mhz: f64,
    pub t_max_us: f64,
    pub n_flip_grid: usize,
    pub n_samples: usize,
    pub scheme: SchemeParams,
    pub dt_max_us: f64,
}

impl EnsembleParams {
    pub fn to_ensemble(&self) -> EnsembleConfig {
        EnsembleConfig {
            f_virt: self.f_virt_mhz,
            t_max: self.t_max_us,
            n_flip_grid: self.n_flip_grid,
            n_samples: self.n_samples,
            scheme: match self.scheme {
                SchemeParams::Uniform => AveragingScheme::Uniform,
                SchemeParams::Mixture { rate_per_us } => AveragingScheme::Mixture { rate: rate_per_us },
            },
            dt_max: self.dt_max_us,
        }
    }

    fn validate(&self, path: &str) -> CliResult<()> {
        if let SchemeParams::Mixture { rate_per_us } = self.scheme {
            non_negative(&format!("{path}.scheme.rate_per_us"), rate_per_us)?;
        }
        self.to_ensemble().validate().map_err(|e| match e {
            qparity_core::Error::InvalidParameter { field, reason } => {
                CliError::config(&format!("{path}.{}", ensemble_key(field)), reason)
            }
            other => CliError::config(path, other),
        })
    }
}

fn ensemble_key(field: &str) -> &str {
    match field {
        "f_virt" => "f_virt_mhz",
        "t_max" => "t_max_us",
        "dt_max" => "dt_max_us",
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepParams {
    /// Ascending.
    pub delta01_mhz: Vec<f64>,
    pub mode: SweepMode,
    #[serde(default)]
    pub monte_carlo: Option<ProtocolParams>,
    #[serde(default)]
    pub ensemble: Option<EnsembleParams>,
}

impl SweepParams {
    fn validate(&self, path: &str) -> CliResult<()> {
        ascending(&format!("{path}.delta01_mhz"), &self.delta01_mhz)?;
        match self.mode {
            SweepMode::MonteCarlo => match &self.monte_carlo {
                Some(p) => p.validate(&format!("{path}.monte_carlo")),
                None => Err(CliError::config(&format!("{path}.monte_carlo"), "required in monte_carlo mode")),
            },
            SweepMode::Ensemble => match &self.ensemble {
                Some(e) => e.validate(&format!("{path}.ensemble")),
                None => Err(CliError::config(&format!("{path}.ensemble"), "required in ensemble mode")),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppendixParams {
    pub delta01_mhz: Vec<f64>,
    pub t2_ideal_us: Vec<f64>,
    pub ensemble: EnsembleParams,
}

impl AppendixParams {
    fn validate(&self, path: &str, t1_us: f64) -> CliResult<()> {
        ascending(&format!("{path}.delta01_mhz"), &self.delta01_mhz)?;
        if self.t2_ideal_us.is_empty() {
            return Err(CliError::config(&format!("{path}.t2_ideal_us"), "must not be empty"));
        }
        for (i, &t2) in self.t2_ideal_us.iter().enumerate() {
            if !(t2 > 0.0 && t2 < 2.0 * t1_us) {
                return Err(CliError::config(
                    &format!("{path}.t2_ideal_us[{i}]"),
                    format!("must lie in (0, 2 * device.t1_us), got {t2}"),
                ));
            }
        }
        self.ensemble.validate(&format!("{path}.ensemble"))
    }
}

fn finite(path: &str, v: f64) -> CliResult<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(path, "must be finite"))
    }
}

fn positive(path: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(path, format!("must be > 0, got {v}")))
    }
}

fn non_negative(path: &str, v: f64) -> CliResult<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(path, format!("must be >= 0, got {v}")))
    }
}

fn ascending(path: &str, v: &[f64]) -> CliResult<()> {
    if v.is_empty() {
        return Err(CliError::config(path, "must not be empty"));
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(CliError::config(&format!("{path}[{i}]"), "must be finite"));
    }
    if v.windows(2).any(|w| w[0] > w[1]) {
        return Err(CliError::config(path, "must be sorted ascending"));
    }
    Ok(())
}

fn required<'a, T>(block: &'a Option<T>, path: &str) -> CliResult<&'a T> {
    block
        .as_ref()
        .ok_or_else(|| CliError::config(path, "block required by this command is missing"))
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::config(if path == "." { "<root>" } else { &path }, e.into_inner())
        })?;
        cfg.validate_device()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(&path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    fn validate_device(&self) -> CliResult<()> {
        self.device.validate().map_err(|e| match e {
            qparity_core::Error::InvalidParameter { field, reason } => CliError::config(&format!("device.{field}"), reason),
            other => CliError::config("device", other),
        })
    }

    pub fn spectroscopy(&self) -> CliResult<&SpectroscopyParams> {
        let path = "experiment.spectroscopy";
        let p = required(&self.experiment.spectroscopy, path)?;
        if p.tau_p_us.is_empty() {
            return Err(CliError::config(&format!("{path}.tau_p_us"), "must not be empty"));
        }
        for (i, &t) in p.tau_p_us.iter().enumerate() {
            positive(&format!("{path}.tau_p_us[{i}]"), t)?;
        }
        positive(&format!("{path}.delta_f_half_width_mhz"), p.delta_f_half_width_mhz)?;
        positive(&format!("{path}.delta_f_step_mhz"), p.delta_f_step_mhz)?;
        if p.delta_f_half_width_mhz / p.delta_f_step_mhz >= MAX_GRID_POINTS as f64 {
            return Err(CliError::config(path, format!("detuning grid exceeds {MAX_GRID_POINTS} points")));
        }
        positive(&format!("{path}.dt_max_us"), p.dt_max_us)?;
        Ok(p)
    }

    pub fn parity_ramsey(&self) -> CliResult<&ProtocolParams> {
        let path = "experiment.parity_ramsey";
        let p = required(&self.experiment.parity_ramsey, path)?;
        p.validate(path)?;
        Ok(p)
    }

    pub fn sweep(&self) -> CliResult<&SweepParams> {
        let path = "experiment.sweep";
        let p = required(&self.experiment.sweep, path)?;
        p.validate(path)?;
        Ok(p)
    }

    pub fn echo(&self) -> CliResult<&SweepParams> {
        let path = "experiment.echo";
        let p = required(&self.experiment.echo, path)?;
        p.validate(path)?;
        Ok(p)
    }

    pub fn appendix_a1(&self) -> CliResult<&AppendixParams> {
        let path = "experiment.appendix_a1";
        let p = required(&self.experiment.appendix_a1, path)?;
        p.validate(path, self.device.t1_us)?;
        Ok(p)
    }
}
