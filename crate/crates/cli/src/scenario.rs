//! Scenario files: one system shape, an SNR grid and run settings.

use std::path::{Path, PathBuf};

use mimo_asympt::channel::read_matrix_json;
use mimo_asympt::units::db_to_linear;
use mimo_asympt::{
    CorrelationPair, CovarianceOptions, MeanVariant, SigmaOrder, SolverOptions, SystemConfig,
};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(x) => vec![*x],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum CorrelationSpec {
    Identity {},
    Exponential {
        zeta_r: f64,
        zeta_t: f64,
    },
    /// Paths are relative to the scenario file.
    File {
        r_path: PathBuf,
        t_path: PathBuf,
    },
}

impl Default for CorrelationSpec {
    fn default() -> Self {
        CorrelationSpec::Identity {}
    }
}

fn default_fd_step() -> f64 {
    1e-3
}

fn default_tolerance() -> f64 {
    1e-12
}

fn default_max_iter() -> usize {
    SolverOptions::default().max_iter
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub snr_db: OneOrMany,
    #[serde(default)]
    pub rate_bpcu: Option<OneOrMany>,
    #[serde(default)]
    pub correlation: CorrelationSpec,
    #[serde(default)]
    pub trials: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mean_variant: MeanVariant,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub sigma_order: SigmaOrder,
}

/// A validated scenario with its correlation matrices loaded.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub pair: CorrelationPair,
    pub snr_db: Vec<f64>,
}

impl Scenario {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read scenario {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> CliResult<Self> {
        let file: ScenarioFile =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("scenario: {e}")))?;
        file.validate()?;
        let shape = SystemConfig::new(file.m, file.n, 1.0)?;
        let pair = match &file.correlation {
            CorrelationSpec::Identity {} => CorrelationPair::identity(&shape),
            CorrelationSpec::Exponential { zeta_r, zeta_t } => {
                CorrelationPair::exponential(&shape, *zeta_r, *zeta_t)?
            }
            CorrelationSpec::File { r_path, t_path } => {
                let r = read_matrix_json(base.join(r_path)).map_err(|e| matrix_error(r_path, e))?;
                let t = read_matrix_json(base.join(t_path)).map_err(|e| matrix_error(t_path, e))?;
                let pair = CorrelationPair::new(r, t)?;
                pair.check_dims(&shape)?;
                pair
            }
        };
        let snr_db = file.snr_db.values();
        Ok(Self { file, pair, snr_db })
    }

    pub fn config(&self, snr_db: f64) -> CliResult<SystemConfig> {
        Ok(SystemConfig::new(self.file.m, self.file.n, db_to_linear(snr_db))?)
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions {
            tol: self.file.tolerance,
            max_iter: self.file.max_iter,
        }
    }

    pub fn covariance_options(&self) -> CovarianceOptions {
        CovarianceOptions {
            step: self.file.fd_step,
            order: self.file.sigma_order,
            richardson: true,
            solver: self.solver(),
        }
    }

    pub fn trials(&self) -> CliResult<u64> {
        self.file
            .trials
            .ok_or_else(|| CliError::Config("scenario needs `trials` for this command".into()))
    }

    pub fn rates_bpcu(&self) -> CliResult<Vec<f64>> {
        self.file
            .rate_bpcu
            .as_ref()
            .map(OneOrMany::values)
            .ok_or_else(|| CliError::Config("scenario needs `rate_bpcu` for this command".into()))
    }

    /// The single SNR point of a sampling command.
    pub fn single_snr(&self) -> CliResult<f64> {
        match self.snr_db.as_slice() {
            [x] => Ok(*x),
            _ => Err(CliError::Config(format!(
                "this command takes a single `snr_db` value, got {}",
                self.snr_db.len()
            ))),
        }
    }
}

fn matrix_error(path: &Path, e: mimo_asympt::Error) -> CliError {
    CliError::from(e).context(format!("correlation file {}", path.display()))
}

impl ScenarioFile {
    fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.m == 0 || self.n < self.m {
            return bad(format!("need 1 <= M <= N, got M = {}, N = {}", self.m, self.n));
        }
        let snr = self.snr_db.values();
        if snr.is_empty() || snr.iter().any(|x| !x.is_finite()) {
            return bad("`snr_db` must be a finite number or a nonempty array of them".into());
        }
        if let Some(r) = &self.rate_bpcu {
            let r = r.values();
            if r.is_empty() || r.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return bad("`rate_bpcu` must hold nonnegative finite rates".into());
            }
        }
        if self.trials == Some(0) {
            return bad("`trials` must be at least 1".into());
        }
        if !(self.fd_step > 0.0 && self.fd_step.is_finite()) {
            return bad(format!("`fd_step` must be positive, got {}", self.fd_step));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return bad(format!("`tolerance` must be positive, got {}", self.tolerance));
        }
        if self.max_iter == 0 {
            return bad("`max_iter` must be at least 1".into());
        }
        Ok(())
    }
}
