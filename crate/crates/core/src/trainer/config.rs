//! Experiment configuration and its TOML document form.
//!
//! ```toml
//! [env]
//! kind = "double_well"          # or "mountain_car"
//! alphas = [1.0, 1.0]           # any other env constant may be overridden
//!
//! [policy]
//! kind = "deterministic"        # or "gaussian"
//! layers = [32]                 # hidden widths; input/output come from the env
//!
//! [estimator]
//! kind = "trajectory_dpg"       # trajectory_pg | state_space_pg | state_space_pg_biased
//!                               # | trajectory_dpg | state_space_dpg | state_space_dpg_biased
//! variant = "reward_to_go_next" # optional
//! baseline = "none"             # optional, trajectory_pg only
//! m_fraction = 1.0              # optional, state-space estimators only
//!
//! [train]
//! k = 100
//! iterations = 2000
//! lr = 2e-3
//! seed = 7
//! workers = 1                   # optional, threads used for sampling
//! checkpoint_every = 500        # optional
//!
//! [output]
//! dir = "runs/dw2"
//! wall_time = "measured"        # optional, "zero" writes 0 for reproducible files
//! checkpoint_format = "json"    # optional, or "binary"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::env::{EnvSpec, InitialStateDistribution};
use crate::error::{Error, Result};
use crate::policy::checkpoint::PolicyKind;

/// Environment variable that relocates relative `output.dir` paths.
pub const OUTPUT_ROOT_ENV: &str = "RANDHORIZON_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    TrajectoryPg,
    StateSpacePg,
    StateSpacePgBiased,
    TrajectoryDpg,
    StateSpaceDpg,
    StateSpaceDpgBiased,
}

impl EstimatorKind {
    pub const ALL: [Self; 6] = [
        Self::TrajectoryPg,
        Self::StateSpacePg,
        Self::StateSpacePgBiased,
        Self::TrajectoryDpg,
        Self::StateSpaceDpg,
        Self::StateSpaceDpgBiased,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::TrajectoryPg => "trajectory_pg",
            Self::StateSpacePg => "state_space_pg",
            Self::StateSpacePgBiased => "state_space_pg_biased",
            Self::TrajectoryDpg => "trajectory_dpg",
            Self::StateSpaceDpg => "state_space_dpg",
            Self::StateSpaceDpgBiased => "state_space_dpg_biased",
        }
    }

    pub fn is_biased(self) -> bool {
        matches!(self, Self::StateSpacePgBiased | Self::StateSpaceDpgBiased)
    }

    pub fn is_deterministic(self) -> bool {
        matches!(self, Self::TrajectoryDpg | Self::StateSpaceDpg | Self::StateSpaceDpgBiased)
    }

    pub fn is_state_space(self) -> bool {
        !matches!(self, Self::TrajectoryPg | Self::TrajectoryDpg)
    }

    pub fn default_variant(self) -> Variant {
        if self.is_deterministic() {
            Variant::RewardToGoNext
        } else {
            Variant::RewardToGo
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    FullReturn,
    RewardToGo,
    RewardToGoNext,
}

impl Variant {
    fn name(self) -> &'static str {
        match self {
            Self::FullReturn => "full_return",
            Self::RewardToGo => "reward_to_go",
            Self::RewardToGoNext => "reward_to_go_next",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    #[default]
    None,
    BatchMeanReturn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WallTime {
    #[default]
    Measured,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointFormat {
    #[default]
    Json,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Hidden-layer widths.
    pub layers: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    pub variant: Variant,
    pub baseline: Baseline,
    pub m_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub k: usize,
    pub iterations: usize,
    pub lr: f64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub checkpoint_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub wall_time: WallTime,
    pub checkpoint_format: CheckpointFormat,
}

/// Everything a training run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub policy: PolicyConfig,
    pub estimator: EstimatorConfig,
    pub train: TrainConfig,
    pub output: OutputConfig,
}

pub const DEFAULT_CHECKPOINT_EVERY: usize = 500;

impl ExperimentConfig {
    /// A config with defaults for every optional key.
    pub fn new(
        env: EnvSpec,
        policy: PolicyConfig,
        kind: EstimatorKind,
        k: usize,
        iterations: usize,
        lr: f64,
        seed: u64,
    ) -> Self {
        Self {
            env,
            policy,
            estimator: EstimatorConfig {
                kind,
                variant: kind.default_variant(),
                baseline: Baseline::None,
                m_fraction: 1.0,
            },
            train: TrainConfig { k, iterations, lr, seed, workers: None, checkpoint_every: DEFAULT_CHECKPOINT_EVERY },
            output: OutputConfig {
                dir: PathBuf::from("runs"),
                wall_time: WallTime::Measured,
                checkpoint_format: CheckpointFormat::Json,
            },
        }
    }

    pub fn state_dim(&self) -> usize {
        match &self.env {
            EnvSpec::MountainCar(_) => 2,
            EnvSpec::DoubleWell(c) => c.dim(),
        }
    }

    pub fn action_dim(&self) -> usize {
        match &self.env {
            EnvSpec::MountainCar(_) => 1,
            EnvSpec::DoubleWell(c) => c.dim(),
        }
    }

    /// `[d_s, hidden..., d_a]`.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.state_dim()];
        dims.extend(&self.policy.layers);
        dims.push(self.action_dim());
        dims
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        self.env.validate()?;
        if self.policy.layers.contains(&0) {
            return bad("`policy.layers` entries must be positive");
        }
        let est = &self.estimator;
        let kind = est.kind.name();
        match (est.kind.is_deterministic(), self.policy.kind) {
            (true, PolicyKind::Gaussian) => {
                return Err(Error::Config(format!("`estimator.kind` {kind} needs `policy.kind` = \"deterministic\"")));
            }
            (false, PolicyKind::Deterministic) => {
                return Err(Error::Config(format!("`estimator.kind` {kind} needs `policy.kind` = \"gaussian\"")));
            }
            _ => {}
        }
        if est.kind.is_deterministic() && !matches!(self.env, EnvSpec::DoubleWell(_)) {
            return bad("deterministic policy gradients need `env.kind` = \"double_well\"");
        }
        let allowed: &[Variant] = match est.kind {
            EstimatorKind::TrajectoryPg => &[Variant::FullReturn, Variant::RewardToGo],
            EstimatorKind::TrajectoryDpg => &[Variant::FullReturn, Variant::RewardToGoNext],
            EstimatorKind::StateSpacePg | EstimatorKind::StateSpacePgBiased => &[Variant::RewardToGo],
            EstimatorKind::StateSpaceDpg | EstimatorKind::StateSpaceDpgBiased => &[Variant::RewardToGoNext],
        };
        if !allowed.contains(&est.variant) {
            return Err(Error::Config(format!(
                "`estimator.variant` {} is not available for {kind}",
                est.variant.name()
            )));
        }
        if est.baseline != Baseline::None && est.kind != EstimatorKind::TrajectoryPg {
            return Err(Error::Config(format!("`estimator.baseline` is only available for trajectory_pg, not {kind}")));
        }
        if !(est.m_fraction > 0.0 && est.m_fraction <= 1.0) {
            return bad("`estimator.m_fraction` must lie in (0, 1]");
        }
        if est.m_fraction != 1.0 && !est.kind.is_state_space() {
            return Err(Error::Config(format!("`estimator.m_fraction` has no effect for {kind}; leave it at 1")));
        }
        let t = &self.train;
        if t.k == 0 {
            return bad("`train.k` must be >= 1");
        }
        if t.iterations == 0 {
            return bad("`train.iterations` must be >= 1");
        }
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            return bad("`train.lr` must be positive");
        }
        if t.seed > i64::MAX as u64 {
            return bad("`train.seed` must be at most 2^63 - 1");
        }
        if t.workers == Some(0) {
            return bad("`train.workers` must be >= 1");
        }
        if t.checkpoint_every == 0 {
            return bad("`train.checkpoint_every` must be >= 1");
        }
        Ok(())
    }

    /// Parses and validates a TOML config document.
    pub fn from_toml(text: &str) -> Result<Self> {
        let root: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(format!("invalid TOML: {e}")))?;
        let cfg = parse_document(&root)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// Fully explicit TOML; parsing it yields `self` again.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes to TOML")
    }

    /// `output.dir`, placed under `root` when it is relative and a root is given.
    pub fn resolved_output_dir(&self, root: Option<&Path>) -> PathBuf {
        match root {
            Some(root) if self.output.dir.is_relative() => root.join(&self.output.dir),
            _ => self.output.dir.clone(),
        }
    }
}

const SECTIONS: [&str; 5] = ["env", "policy", "estimator", "train", "output"];

struct Section<'a> {
    name: &'static str,
    table: &'a Table,
}

impl<'a> Section<'a> {
    fn get(root: &'a Table, name: &'static str) -> Result<Self> {
        match root.get(name) {
            Some(Value::Table(table)) => Ok(Self { name, table }),
            Some(_) => Err(Error::Config(format!("`{name}` must be a table"))),
            None => Err(Error::Config(format!("missing required section `[{name}]`"))),
        }
    }

    fn key(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn only(&self, allowed: &[&str]) -> Result<()> {
        match self.table.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::Config(format!("unknown key `{}`", self.key(k)))),
            None => Ok(()),
        }
    }

    fn required(&self, key: &str) -> Result<&'a Value> {
        self.table.get(key).ok_or_else(|| Error::Config(format!("missing required key `{}`", self.key(key))))
    }

    fn invalid(&self, key: &str, expected: &str) -> Error {
        Error::Config(format!("`{}` must be {expected}", self.key(key)))
    }

    fn str_of(&self, key: &str, v: &'a Value) -> Result<&'a str> {
        v.as_str().ok_or_else(|| self.invalid(key, "a string"))
    }

    fn uint_of(&self, key: &str, v: &Value) -> Result<u64> {
        v.as_integer().and_then(|i| u64::try_from(i).ok()).ok_or_else(|| self.invalid(key, "a nonnegative integer"))
    }

    fn float_of(&self, key: &str, v: &Value) -> Result<f64> {
        match v {
            Value::Float(f) => Ok(*f),
            Value::Integer(i) => Ok(*i as f64),
            _ => Err(self.invalid(key, "a number")),
        }
    }

    fn usize_of(&self, key: &str, v: &Value) -> Result<usize> {
        usize::try_from(self.uint_of(key, v)?).map_err(|_| self.invalid(key, "a smaller integer"))
    }

    fn choice<T: Copy>(&self, key: &str, v: &Value, options: &[(&str, T)]) -> Result<T> {
        let s = self.str_of(key, v)?;
        options.iter().find(|(name, _)| *name == s).map(|(_, t)| *t).ok_or_else(|| {
            let names: Vec<String> = options.iter().map(|(n, _)| format!("\"{n}\"")).collect();
            self.invalid(key, &format!("one of {}, got \"{s}\"", names.join(", ")))
        })
    }
}

fn parse_document(root: &Table) -> Result<ExperimentConfig> {
    if let Some(k) = root.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
        return Err(Error::Config(format!("unknown key `{k}`")));
    }
    let env = parse_env(&Section::get(root, "env")?)?;

    let s = Section::get(root, "policy")?;
    s.only(&["kind", "layers"])?;
    let kind = s.choice(
        "kind",
        s.required("kind")?,
        &[("gaussian", PolicyKind::Gaussian), ("deterministic", PolicyKind::Deterministic)],
    )?;
    let layers = match s.required("layers")? {
        Value::Array(items) => items.iter().map(|v| s.usize_of("layers", v)).collect::<Result<Vec<_>>>()?,
        _ => return Err(s.invalid("layers", "an array of hidden-layer widths")),
    };
    let policy = PolicyConfig { kind, layers };

    let s = Section::get(root, "estimator")?;
    s.only(&["kind", "variant", "baseline", "m_fraction"])?;
    let kinds: Vec<(&str, EstimatorKind)> = EstimatorKind::ALL.iter().map(|k| (k.name(), *k)).collect();
    let kind = s.choice("kind", s.required("kind")?, &kinds)?;
    let variant = match s.table.get("variant") {
        Some(v) => s.choice(
            "variant",
            v,
            &[
                ("full_return", Variant::FullReturn),
                ("reward_to_go", Variant::RewardToGo),
                ("reward_to_go_next", Variant::RewardToGoNext),
            ],
        )?,
        None => kind.default_variant(),
    };
    let baseline = match s.table.get("baseline") {
        Some(v) => {
            s.choice("baseline", v, &[("none", Baseline::None), ("batch_mean_return", Baseline::BatchMeanReturn)])?
        }
        None => Baseline::None,
    };
    let m_fraction = match s.table.get("m_fraction") {
        Some(v) => s.float_of("m_fraction", v)?,
        None => 1.0,
    };
    let estimator = EstimatorConfig { kind, variant, baseline, m_fraction };

    let s = Section::get(root, "train")?;
    s.only(&["k", "iterations", "lr", "seed", "workers", "checkpoint_every"])?;
    let train = TrainConfig {
        k: s.usize_of("k", s.required("k")?)?,
        iterations: s.usize_of("iterations", s.required("iterations")?)?,
        lr: s.float_of("lr", s.required("lr")?)?,
        seed: s.uint_of("seed", s.required("seed")?)?,
        workers: s.table.get("workers").map(|v| s.usize_of("workers", v)).transpose()?,
        checkpoint_every: match s.table.get("checkpoint_every") {
            Some(v) => s.usize_of("checkpoint_every", v)?,
            None => DEFAULT_CHECKPOINT_EVERY,
        },
    };

    let s = Section::get(root, "output")?;
    s.only(&["dir", "wall_time", "checkpoint_format"])?;
    let output = OutputConfig {
        dir: PathBuf::from(s.str_of("dir", s.required("dir")?)?),
        wall_time: match s.table.get("wall_time") {
            Some(v) => s.choice("wall_time", v, &[("measured", WallTime::Measured), ("zero", WallTime::Zero)])?,
            None => WallTime::Measured,
        },
        checkpoint_format: match s.table.get("checkpoint_format") {
            Some(v) => s.choice(
                "checkpoint_format",
                v,
                &[("json", CheckpointFormat::Json), ("binary", CheckpointFormat::Binary)],
            )?,
            None => CheckpointFormat::Json,
        },
    };

    Ok(ExperimentConfig { env, policy, estimator, train, output })
}

fn parse_env(s: &Section<'_>) -> Result<EnvSpec> {
    let mountain_car = s.choice("kind", s.required("kind")?, &[("mountain_car", true), ("double_well", false)])?;
    let allowed: &[&str] = if mountain_car {
        &["kind", "min_position", "max_position", "max_speed", "goal_position", "action_cost", "initial", "max_steps"]
    } else {
        &["kind", "alphas", "sigma", "dt", "target_level", "initial", "max_steps"]
    };
    s.only(allowed)?;
    if let Some(init) = s.table.get("initial") {
        let Value::Table(t) = init else {
            return Err(s.invalid("initial", "a table"));
        };
        let sub = Section { name: "env.initial", table: t };
        let fixed = sub.choice("kind", sub.required("kind")?, &[("fixed_point", true), ("uniform_box", false)])?;
        sub.only(if fixed { &["kind", "point"] } else { &["kind", "lower", "upper"] })?;
    }
    let spec: EnvSpec = Value::Table(s.table.clone())
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(format!("invalid `env` section: {}", e.message())))?;
    Ok(match spec {
        // The default start is the well (-1, ..., -1) in the configured dimension.
        EnvSpec::DoubleWell(mut c) if !s.table.contains_key("initial") => {
            c.initial = InitialStateDistribution::FixedPoint { point: vec![-1.0; c.dim()] };
            EnvSpec::DoubleWell(c)
        }
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[env]
kind = "double_well"
alphas = [1.0, 1.0]

[policy]
kind = "deterministic"
layers = [8]

[estimator]
kind = "trajectory_dpg"

[train]
k = 4
iterations = 3
lr = 2e-3
seed = 1

[output]
dir = "out"
"#;

    fn err_of(text: &str) -> String {
        ExperimentConfig::from_toml(text).unwrap_err().to_string()
    }

    #[test]
    fn minimal_document_parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.layer_dims(), vec![2, 8, 2]);
        assert_eq!(cfg.estimator.variant, Variant::RewardToGoNext);
        assert_eq!(cfg.train.checkpoint_every, 500);
        assert_eq!(cfg.output.wall_time, WallTime::Measured);
    }

    #[test]
    fn resolved_toml_round_trips() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn missing_key_is_named() {
        let text = MINIMAL.replace("lr = 2e-3\n", "");
        assert!(err_of(&text).contains("`train.lr`"));
        let text = MINIMAL.replace("[output]\ndir = \"out\"\n", "");
        assert!(err_of(&text).contains("`[output]`"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("seed = 1", "seed = 1\nbatch = 3");
        assert!(err_of(&text).contains("`train.batch`"));
        let text = MINIMAL.replace("alphas = [1.0, 1.0]", "alphas = [1.0, 1.0]\nmax_speed = 1.0");
        assert!(err_of(&text).contains("`env.max_speed`"));
        let text = MINIMAL.replace(
            "alphas = [1.0, 1.0]",
            "alphas = [1.0, 1.0]\ninitial = { kind = \"fixed_point\", point = [0.0, 0.0], lower = [1.0] }",
        );
        assert!(err_of(&text).contains("`env.initial.lower`"));
        assert!(err_of(&format!("{MINIMAL}\n[extra]\n")).contains("`extra`"));
    }

    #[test]
    fn inconsistent_choices_are_rejected() {
        let text = MINIMAL.replace("kind = \"deterministic\"", "kind = \"gaussian\"");
        assert!(err_of(&text).contains("policy.kind"));
        let text =
            MINIMAL.replace("kind = \"trajectory_dpg\"", "kind = \"trajectory_dpg\"\nvariant = \"reward_to_go\"");
        assert!(err_of(&text).contains("estimator.variant"));
        let text = MINIMAL.replace("iterations = 3", "iterations = 0");
        assert!(err_of(&text).contains("train.iterations"));
        let text = MINIMAL.replace("lr = 2e-3", "lr = \"fast\"");
        assert!(err_of(&text).contains("`train.lr` must be a number"));
    }

    #[test]
    fn double_well_start_follows_dimension() {
        let text = MINIMAL.replace("alphas = [1.0, 1.0]", "alphas = [5.0, 2.0, 0.5]");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        let EnvSpec::DoubleWell(c) = &cfg.env else { panic!() };
        assert_eq!(c.initial, InitialStateDistribution::FixedPoint { point: vec![-1.0; 3] });
    }

    #[test]
    fn output_root_applies_to_relative_dirs() {
        let mut cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.resolved_output_dir(Some(Path::new("/r"))), PathBuf::from("/r/out"));
        cfg.output.dir = PathBuf::from("/abs");
        assert_eq!(cfg.resolved_output_dir(Some(Path::new("/r"))), PathBuf::from("/abs"));
    }
}
