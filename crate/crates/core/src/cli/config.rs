//! TOML run configuration and its translation into solver inputs.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use super::CliError;
use crate::direct::{DirectProblem, Source};
use crate::growth::{CoefficientProfile, TimeFn};
use crate::inverse::{InverseProblem, SourceProfile};
use crate::operators::{
    custom_spectrum, forward_transform, involution_spectrum, landau_spectrum, InvolutionOperator, SpatialFn,
};
use crate::qlattice::{QLattice, QParams};
use crate::spectral::{CoeffVec, Spectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Direct,
    Inverse,
    Verify,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Direct => "direct",
            Command::Inverse => "inverse",
            Command::Verify => "verify",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub q: Option<f64>,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub lattice_depth: Option<usize>,
    pub n_terms: Option<usize>,
    pub tol: Option<f64>,
    pub modes: usize,
    #[serde(default)]
    pub d: f64,
    pub operator: OperatorConfig,
    pub upsilon: UpsilonConfig,
    pub g: Option<ShapeConfig>,
    pub phi: Option<DataConfig>,
    pub eta: Option<DataConfig>,
    pub source: Option<SourceConfig>,
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OperatorConfig {
    Involution {
        epsilon: f64,
        grid: Option<usize>,
    },
    Landau {
        #[serde(rename = "B")]
        b: f64,
    },
    Custom {
        eigenvalues: Vec<f64>,
        lambda0: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    Constant,
    Affine,
}

/// `a` (constant) or `a + b t` (affine).
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeShape {
    pub kind: ProfileKind,
    pub a: f64,
    #[serde(default)]
    pub b: f64,
}

impl TimeShape {
    fn function(&self, field: &str) -> Result<TimeFn, CliError> {
        if !(self.a.is_finite() && self.b.is_finite()) {
            return Err(CliError::Config(format!("`{field}` coefficients must be finite")));
        }
        if self.kind == ProfileKind::Constant && self.b != 0.0 {
            return Err(CliError::Config(format!("`{field}` of kind constant takes no `b`")));
        }
        let (a, b) = (self.a, self.b);
        Ok(Arc::new(move |t| a + b * t))
    }
}

impl Default for TimeShape {
    fn default() -> Self {
        Self {
            kind: ProfileKind::Constant,
            a: 1.0,
            b: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpsilonConfig {
    pub kind: ProfileKind,
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeConfig {
    pub kind: ProfileKind,
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    pub alpha0: f64,
    pub beta0: f64,
}

/// Coefficients given directly, or a spatial `(x, value)` CSV (involution operator only).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub coeffs: Option<Vec<f64>>,
    pub csv: Option<PathBuf>,
}

/// `f_k(t) = amplitude_k g(t)`, with amplitudes given directly or from a spatial CSV.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub amplitudes: Option<Vec<f64>>,
    pub csv: Option<PathBuf>,
    pub shape: Option<TimeShape>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub q_values: Vec<f64>,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default = "one")]
    pub phi: f64,
}

fn one() -> f64 {
    1.0
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Checks the optional `command` field against the requested subcommand.
    pub fn check_command(&self, requested: Command) -> Result<(), CliError> {
        match self.command {
            Some(c) if c != requested => Err(CliError::Config(format!(
                "config declares command `{}` but `{}` was requested",
                c.name(),
                requested.name()
            ))),
            _ => Ok(()),
        }
    }
}

/// Validated solver inputs shared by every command.
pub struct Setup {
    pub params: QParams,
    pub spectrum: Spectrum,
    pub lattice: QLattice,
    pub horizon: f64,
    pub d: f64,
    pub upsilon: TimeFn,
    pub alpha: f64,
    pub beta: f64,
    pub operator: Option<InvolutionOperator>,
    config: RunConfig,
    base_dir: PathBuf,
}

pub(crate) fn params_for(q: f64, config: &RunConfig) -> Result<QParams, CliError> {
    let params = match config.n_terms {
        Some(n) => QParams::with_terms(q, n),
        None => QParams::new(q),
    }
    .map_err(CliError::config)?;
    match config.tol {
        Some(tol) => params.with_tol(tol).map_err(CliError::config),
        None => Ok(params),
    }
}

pub(crate) fn check_horizon(config: &RunConfig) -> Result<(), CliError> {
    if config.horizon > 0.0 && config.horizon.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("`T` must be positive and finite, got {}", config.horizon)))
    }
}

pub(crate) fn spectrum_for(config: &RunConfig) -> Result<(Spectrum, Option<InvolutionOperator>), CliError> {
    if config.modes == 0 {
        return Err(CliError::Config("`modes` must be at least 1".into()));
    }
    match &config.operator {
        OperatorConfig::Involution { epsilon, grid } => {
            let op = match grid {
                Some(n) => InvolutionOperator::new(*epsilon, config.modes, *n),
                None => InvolutionOperator::with_default_grid(*epsilon, config.modes),
            }
            .map_err(CliError::config)?;
            let spectrum = involution_spectrum(*epsilon, config.modes).map_err(CliError::config)?;
            Ok((spectrum, Some(op)))
        }
        OperatorConfig::Landau { b } => Ok((landau_spectrum(*b, config.modes).map_err(CliError::config)?, None)),
        OperatorConfig::Custom { eigenvalues, lambda0 } => {
            if eigenvalues.len() < config.modes {
                return Err(CliError::Config(format!(
                    "custom operator lists {} eigenvalues but `modes` = {}",
                    eigenvalues.len(),
                    config.modes
                )));
            }
            let values = eigenvalues[..config.modes].to_vec();
            Ok((custom_spectrum(values, *lambda0).map_err(CliError::config)?, None))
        }
    }
}

pub(crate) fn upsilon_for(config: &RunConfig) -> Result<(TimeFn, f64, f64), CliError> {
    let u = config.upsilon;
    let f = TimeShape {
        kind: u.kind,
        a: u.a,
        b: u.b,
    }
    .function("upsilon")?;
    let (alpha, beta) = match (u.kind, u.alpha, u.beta) {
        (_, Some(a), Some(b)) => (a, b),
        (ProfileKind::Constant, None, None) => (u.a, u.a),
        _ => {
            return Err(CliError::Config(
                "`upsilon` needs both `alpha` and `beta` unless it is constant".into(),
            ))
        }
    };
    Ok((f, alpha, beta))
}

impl Setup {
    pub fn new(config: RunConfig, base_dir: &Path) -> Result<Self, CliError> {
        check_horizon(&config)?;
        let q = config
            .q
            .ok_or_else(|| CliError::Config("missing field `q`".into()))?;
        let params = params_for(q, &config)?;
        let lattice = match config.lattice_depth {
            Some(m) => QLattice::new(config.horizon, q, m),
            None => QLattice::with_default_depth(config.horizon, q),
        }
        .map_err(CliError::config)?;
        if !config.d.is_finite() {
            return Err(CliError::Config(format!("`d` must be finite, got {}", config.d)));
        }
        let (spectrum, operator) = spectrum_for(&config)?;
        let (upsilon, alpha, beta) = upsilon_for(&config)?;
        Ok(Self {
            params,
            spectrum,
            lattice,
            horizon: config.horizon,
            d: config.d,
            upsilon,
            alpha,
            beta,
            operator,
            config,
            base_dir: base_dir.to_path_buf(),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    /// Profile with the declared bounds checked on the lattice.
    pub fn validated_profile(&self) -> Result<CoefficientProfile, CliError> {
        CoefficientProfile::new(self.upsilon.clone(), self.alpha, self.beta, self.horizon, &self.params)
            .map_err(CliError::config)
    }

    /// Profile trusting the declared bounds, so that verification can report violations.
    pub fn declared_profile(&self) -> Result<CoefficientProfile, CliError> {
        CoefficientProfile::declared(self.upsilon.clone(), self.alpha, self.beta).map_err(CliError::config)
    }

    fn spatial_coeffs(&self, path: &Path, field: &str) -> Result<Vec<f64>, CliError> {
        let eps = match &self.config.operator {
            OperatorConfig::Involution { epsilon, .. } => *epsilon,
            _ => {
                return Err(CliError::Config(format!(
                    "`{field}.csv` needs the involution operator to project spatial data"
                )))
            }
        };
        let full = self.base_dir.join(path);
        let file = File::open(&full).map_err(|source| CliError::Io {
            path: full.clone(),
            source,
        })?;
        let f = SpatialFn::read_csv(file).map_err(|e| CliError::Config(format!("`{field}.csv`: {e}")))?;
        let op = InvolutionOperator::new(eps, self.config.modes, f.intervals())
            .map_err(|e| CliError::Config(format!("`{field}.csv`: {e}")))?;
        let c = forward_transform(&f, &op).map_err(|e| CliError::Config(format!("`{field}.csv`: {e}")))?;
        Ok(c.into_vec())
    }

    fn coeffs(&self, data: Option<&DataConfig>, field: &str) -> Result<CoeffVec, CliError> {
        let data = data.ok_or_else(|| CliError::Config(format!("missing field `{field}`")))?;
        let values = match (&data.coeffs, &data.csv) {
            (Some(c), None) => c.clone(),
            (None, Some(path)) => self.spatial_coeffs(path, field)?,
            _ => {
                return Err(CliError::Config(format!(
                    "`{field}` needs exactly one of `coeffs` or `csv`"
                )))
            }
        };
        self.check_len(values.len(), field)?;
        CoeffVec::new(values).map_err(|e| CliError::Config(format!("`{field}`: {e}")))
    }

    fn check_len(&self, len: usize, field: &str) -> Result<(), CliError> {
        if len == self.spectrum.len() {
            Ok(())
        } else {
            Err(CliError::Config(format!(
                "`{field}` has {len} entries but `modes` = {}",
                self.spectrum.len()
            )))
        }
    }

    pub fn phi(&self) -> Result<CoeffVec, CliError> {
        self.coeffs(self.config.phi.as_ref(), "phi")
    }

    pub fn eta(&self) -> Result<CoeffVec, CliError> {
        self.coeffs(self.config.eta.as_ref(), "eta")
    }

    /// Source amplitudes and time shape; `None` when the config has no source.
    pub fn source_parts(&self) -> Result<Option<(Vec<f64>, TimeFn)>, CliError> {
        let Some(src) = &self.config.source else {
            return Ok(None);
        };
        let amplitudes = match (&src.amplitudes, &src.csv) {
            (Some(a), None) => a.clone(),
            (None, Some(path)) => self.spatial_coeffs(path, "source")?,
            _ => {
                return Err(CliError::Config(
                    "`source` needs exactly one of `amplitudes` or `csv`".into(),
                ))
            }
        };
        self.check_len(amplitudes.len(), "source.amplitudes")?;
        if let Some(a) = amplitudes.iter().find(|a| !a.is_finite()) {
            return Err(CliError::Config(format!("`source` amplitude {a} is not finite")));
        }
        let shape = src.shape.unwrap_or_default().function("source.shape")?;
        Ok(Some((amplitudes, shape)))
    }

    pub fn source(&self) -> Result<Source, CliError> {
        Ok(match self.source_parts()? {
            Some((a, g)) => Source::separable(a, g),
            None => Source::Zero,
        })
    }

    pub fn shape(&self) -> Result<SourceProfile, CliError> {
        let g = self
            .config
            .g
            .ok_or_else(|| CliError::Config("missing field `g`".into()))?;
        let f = TimeShape {
            kind: g.kind,
            a: g.a,
            b: g.b,
        }
        .function("g")?;
        SourceProfile::new(f, g.alpha0, g.beta0, self.horizon, &self.params).map_err(CliError::config)
    }

    pub fn direct_problem(&self, profile: CoefficientProfile) -> Result<DirectProblem, CliError> {
        DirectProblem::on_lattice(
            self.spectrum.clone(),
            profile,
            self.phi()?,
            self.source()?,
            self.lattice.clone(),
            self.params,
            self.d,
        )
        .map_err(CliError::config)
    }

    pub fn inverse_problem(&self, profile: CoefficientProfile) -> Result<InverseProblem, CliError> {
        InverseProblem::on_lattice(
            self.spectrum.clone(),
            profile,
            self.phi()?,
            self.eta()?,
            self.shape()?,
            self.lattice.clone(),
            self.params,
            self.d,
        )
        .map_err(CliError::config)
    }
}
