//! Experiment configuration: TOML sections mirroring the library types.

use crate::CliError;
use scatrec::baselines::{BaselineConfig, Regularizer};
use scatrec::operators::{Decimation, ForwardOperator, Radon, SrKernel};
use scatrec::processes::{CoxParams, IsingInit, IsingParams, ProcessKind, ProcessSpec, Splat};
use scatrec::solver::{Init, SolverConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub process: ProcessSection,
    pub operator: OperatorSection,
    #[serde(default)]
    pub scattering: ScatteringSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub baselines: Vec<BaselineSection>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    pub output: PathBuf,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProcessSection {
    /// `ising` or `cox`.
    pub kind: String,
    pub size: usize,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_sweeps")]
    pub sweeps: usize,
    /// `random`, `up` or `down`.
    #[serde(default = "default_init")]
    pub init: String,
    /// Omit for a constant intensity.
    #[serde(default)]
    pub smoothing: Option<f64>,
    #[serde(default = "one")]
    pub log_sd: f64,
    #[serde(default)]
    pub base_rate: f64,
    /// `nearest` or `bilinear`.
    #[serde(default = "default_splat")]
    pub splat: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OperatorSection {
    /// `sr` or `radon`.
    pub kind: String,
    #[serde(default = "default_factor")]
    pub factor: usize,
    /// `ideal` or `gaussian`.
    #[serde(default = "default_kernel")]
    pub kernel: String,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Degrees; `angle_start..=angle_stop` in steps of `angle_step`.
    #[serde(default)]
    pub angle_start: f64,
    #[serde(default = "default_angle_stop")]
    pub angle_stop: f64,
    #[serde(default = "default_angle_step")]
    pub angle_step: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScatteringSection {
    pub scales: usize,
    pub orientations: usize,
    pub max_order: usize,
}

impl Default for ScatteringSection {
    fn default() -> Self {
        Self {
            scales: 4,
            orientations: 4,
            max_order: 2,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub step_init: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub epsilon: f64,
    pub epsilon_relative: bool,
    /// `zero` or `right_inverse`.
    pub init: String,
    pub ridge: Option<f64>,
    pub share_covariance: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            outer_iterations: 10,
            inner_iterations: 10,
            step_init: d.step_init,
            backtrack: d.backtrack,
            max_backtracks: d.max_backtracks,
            epsilon: d.epsilon,
            epsilon_relative: d.epsilon_relative,
            init: "zero".into(),
            ridge: None,
            share_covariance: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    pub patch: usize,
    pub stride: usize,
    /// Relative eigenvalue cut-off for the patch statistic; 0 uses the plain
    /// full-rank statistic.
    pub rank_tol: f64,
    /// Patch side of the cokurtosis panels.
    pub cokurtosis_patch: usize,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            patch: 8,
            stride: 2,
            rank_tol: scatrec::metrics::DEFAULT_RANK_TOL,
            cokurtosis_patch: 4,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    pub name: String,
    /// `l1` or `tv`.
    pub regularizer: String,
    pub lambda: f64,
    #[serde(default = "default_baseline_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub box_constraint: bool,
    #[serde(default = "one")]
    pub step_scale: f64,
    #[serde(default = "default_tv_inner")]
    pub tv_inner: usize,
}

fn default_temperature() -> f64 {
    0.3
}
fn default_sweeps() -> usize {
    200
}
fn default_init() -> String {
    "random".into()
}
fn default_splat() -> String {
    "nearest".into()
}
fn one() -> f64 {
    1.0
}
fn default_factor() -> usize {
    4
}
fn default_kernel() -> String {
    "ideal".into()
}
fn default_sigma() -> f64 {
    2.0
}
fn default_angle_stop() -> f64 {
    89.0
}
fn default_angle_step() -> f64 {
    2.0
}
fn default_baseline_iterations() -> usize {
    500
}
fn default_tv_inner() -> usize {
    50
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    /// Parses TOML text after applying `section.key=value` overrides.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table = text.parse().map_err(|e| bad(format!("config: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = table.try_into().map_err(|e| bad(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.experiment.n_train < 2 {
            return Err(bad("experiment.n_train must be >= 2"));
        }
        if self.experiment.n_test == 0 {
            return Err(bad("experiment.n_test must be >= 1"));
        }
        self.process_spec(0)?.validate().map_err(|e| bad(e.to_string()))?;
        self.solver_config()?.validate().map_err(|e| bad(e.to_string()))?;
        self.operator()?;
        for (i, b) in self.baselines.iter().enumerate() {
            self.baseline_config(b)?.validate().map_err(|e| bad(e.to_string()))?;
            if crate::pipeline::PANELS.contains(&b.name.as_str())
                || self.baselines[..i].iter().any(|o| o.name == b.name)
            {
                return Err(bad(format!("baseline name {:?} is reserved or repeated", b.name)));
            }
        }
        if self.evaluation.patch == 0 || self.evaluation.stride == 0 || self.evaluation.cokurtosis_patch == 0 {
            return Err(bad("evaluation patch sizes and stride must be >= 1"));
        }
        Ok(())
    }

    pub fn process_spec(&self, seed: u64) -> Result<ProcessSpec, CliError> {
        let p = &self.process;
        let kind = match p.kind.as_str() {
            "ising" => ProcessKind::Ising(IsingParams {
                temperature: p.temperature,
                sweeps: p.sweeps,
                init: match p.init.as_str() {
                    "random" => IsingInit::Random,
                    "up" => IsingInit::Up,
                    "down" => IsingInit::Down,
                    o => return Err(bad(format!("process.init {o:?} is not random|up|down"))),
                },
            }),
            "cox" => ProcessKind::Cox(CoxParams {
                smoothing: p.smoothing,
                log_sd: p.log_sd,
                base_rate: p.base_rate,
                splat: match p.splat.as_str() {
                    "nearest" => Splat::Nearest,
                    "bilinear" => Splat::Bilinear,
                    o => return Err(bad(format!("process.splat {o:?} is not nearest|bilinear"))),
                },
            }),
            o => return Err(bad(format!("process.kind {o:?} is not ising|cox"))),
        };
        Ok(ProcessSpec {
            kind,
            size: p.size,
            seed,
        })
    }

    /// Seeds of training (`test = false`) and test realizations.
    pub fn realization_seed(&self, test: bool, index: usize) -> u64 {
        let base = self.experiment.seed.wrapping_mul(1_000_003);
        base.wrapping_add(if test { 500_000 } else { 0 })
            .wrapping_add(index as u64)
    }

    pub fn angles(&self) -> Result<Vec<f64>, CliError> {
        let o = &self.operator;
        if o.kind != "radon" {
            return Ok(Vec::new());
        }
        if !(o.angle_step > 0.0) {
            return Err(bad("operator.angle_step must be > 0"));
        }
        let n = ((o.angle_stop - o.angle_start) / o.angle_step + 1e-9).floor();
        if n < 0.0 {
            return Err(bad("operator.angle_stop is below angle_start"));
        }
        Ok((0..=n as usize)
            .map(|i| o.angle_start + i as f64 * o.angle_step)
            .collect())
    }

    pub fn operator(&self) -> Result<Box<dyn ForwardOperator<f64>>, CliError> {
        let o = &self.operator;
        let n = self.process.size;
        match o.kind.as_str() {
            "sr" => {
                let kernel = match o.kernel.as_str() {
                    "ideal" => SrKernel::Ideal,
                    "gaussian" => SrKernel::Gaussian { sigma: o.sigma },
                    k => return Err(bad(format!("operator.kernel {k:?} is not ideal|gaussian"))),
                };
                Ok(Box::new(
                    Decimation::new(n, n, o.factor, kernel).map_err(|e| bad(e.to_string()))?,
                ))
            }
            "radon" => Ok(Box::new(
                Radon::new(n, &self.angles()?).map_err(|e| bad(e.to_string()))?,
            )),
            k => Err(bad(format!("operator.kind {k:?} is not sr|radon"))),
        }
    }

    pub fn solver_config(&self) -> Result<SolverConfig, CliError> {
        let s = &self.solver;
        Ok(SolverConfig {
            outer_iterations: s.outer_iterations,
            inner_iterations: s.inner_iterations,
            step_init: s.step_init,
            backtrack: s.backtrack,
            max_backtracks: s.max_backtracks,
            epsilon: s.epsilon,
            epsilon_relative: s.epsilon_relative,
            init: match s.init.as_str() {
                "zero" => Init::Zero,
                "right_inverse" => Init::RightInverse,
                o => return Err(bad(format!("solver.init {o:?} is not zero|right_inverse"))),
            },
            max_order: self.scattering.max_order,
            ridge: s.ridge,
            share_covariance: s.share_covariance,
            ..SolverConfig::default()
        })
    }

    pub fn baseline_config(&self, b: &BaselineSection) -> Result<BaselineConfig, CliError> {
        let regularizer = match b.regularizer.as_str() {
            "l1" => Regularizer::L1,
            "tv" => Regularizer::Tv,
            o => return Err(bad(format!("baseline {:?}: regularizer {o:?} is not l1|tv", b.name))),
        };
        if b.name.is_empty()
            || !b
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(bad(format!(
                "baseline name {:?} must be non-empty [A-Za-z0-9_-]",
                b.name
            )));
        }
        Ok(BaselineConfig {
            regularizer,
            lambda: b.lambda,
            iterations: b.iterations,
            box_constraint: b.box_constraint,
            step_scale: b.step_scale,
            tv_inner: b.tv_inner,
        })
    }
}

/// `section.key=value`, the value parsed as a TOML value (bare words are
/// taken as strings).
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| bad(format!("override {spec:?} lacks '='")))?;
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let keys: Vec<&str> = path.split('.').collect();
    let (last, parents) = keys.split_last().expect("split yields one item");
    let mut cur = table;
    for k in parents {
        cur = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| bad(format!("override {spec:?}: {k:?} is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[experiment]
name = "t"
output = "out"
seed = 1
n_train = 4
n_test = 2

[process]
kind = "ising"
size = 32

[operator]
kind = "sr"
factor = 4
"#;

    #[test]
    fn defaults_and_round_trip() {
        let cfg = ExperimentConfig::from_toml(BASE, &[]).unwrap();
        assert_eq!(cfg.process.temperature, 0.3);
        assert_eq!(cfg.scattering, ScatteringSection::default());
        let again = ExperimentConfig::from_toml(&cfg.to_toml(), &[]).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn overrides() {
        let o = vec![
            "process.temperature=1.5".to_string(),
            "operator.kind=radon".into(),
            "solver.init=right_inverse".into(),
        ];
        let cfg = ExperimentConfig::from_toml(BASE, &o).unwrap();
        assert_eq!(cfg.process.temperature, 1.5);
        assert_eq!(cfg.angles().unwrap().len(), 45);
        assert!(ExperimentConfig::from_toml(BASE, &["nokey".into()]).is_err());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for o in [
            "process.kind=potts",
            "experiment.n_train=0",
            "operator.kernel=box",
            "process.temperature=-1",
            "solver.backtrack=2",
        ] {
            assert!(
                matches!(ExperimentConfig::from_toml(BASE, &[o.into()]), Err(CliError::Config(_))),
                "{o}"
            );
        }
        assert!(ExperimentConfig::from_toml("[experiment]\nname = 1", &[]).is_err());
    }

    #[test]
    fn seeds_are_distinct() {
        let cfg = ExperimentConfig::from_toml(BASE, &[]).unwrap();
        assert_ne!(cfg.realization_seed(false, 0), cfg.realization_seed(true, 0));
        assert_ne!(cfg.realization_seed(false, 0), cfg.realization_seed(false, 1));
    }
}
