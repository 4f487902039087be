use std::path::{Path, PathBuf};

use paracflow::cbo::{BenchmarkKind, Family, KtConfig, RefitData, Sense, Strategy};
use paracflow::flows::EliminatorConfig;
use paracflow::taiji::{CompareConfig, TaijiFlowConfig};
use paracflow::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{config, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Taiji,
    TaijiCompare,
    Bo,
    Kt,
    Decomp,
    Verify,
}

impl Experiment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::Taiji => "taiji",
            Experiment::TaijiCompare => "taiji_compare",
            Experiment::Bo => "bo",
            Experiment::Kt => "kt",
            Experiment::Decomp => "decomp",
            Experiment::Verify => "verify",
        }
    }
}

/// One JSON document per run. `seed` is mandatory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub taiji: TaijiParams,
    #[serde(default)]
    pub compare: CompareConfig,
    #[serde(default)]
    pub bo: BoParams,
    #[serde(default)]
    pub kt: KtConfig,
    #[serde(default)]
    pub decomp: DecompParams,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_workers() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaijiParams {
    pub samples: usize,
    pub test_samples: usize,
    pub flow: TaijiFlowConfig,
    pub eliminator: EliminatorConfig,
    /// Skip the eliminator phase when false.
    pub eliminate: bool,
    pub grid_points: usize,
    pub derivative_points: usize,
    pub params: Vec<f64>,
}

impl Default for TaijiParams {
    fn default() -> Self {
        TaijiParams {
            samples: 30000,
            test_samples: 5000,
            flow: TaijiFlowConfig::default(),
            eliminator: taiji_eliminator(),
            eliminate: true,
            grid_points: 200,
            derivative_points: 41,
            params: vec![0.0, 0.5, 1.0],
        }
    }
}

/// Eliminator used for the Taiji flow.
pub fn taiji_eliminator() -> EliminatorConfig {
    EliminatorConfig {
        hidden: vec![32, 32],
        train: TrainConfig { epochs: 400, lr: 0.003, ..TrainConfig::default() },
        ..EliminatorConfig::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoParams {
    pub benchmark: BenchmarkKind,
    pub context_dims: Vec<usize>,
    pub families: Vec<Family>,
    pub strategies: Vec<Strategy>,
    pub trials: usize,
    pub total_steps: usize,
    pub init_steps: usize,
    pub refit_every: usize,
    pub refit_data: RefitData,
    pub sense: Sense,
}

impl Default for BoParams {
    fn default() -> Self {
        BoParams {
            benchmark: BenchmarkKind::Trid,
            context_dims: vec![5, 20],
            families: Family::ALL.to_vec(),
            strategies: vec![Strategy::default()],
            trials: 5,
            total_steps: 1000,
            init_steps: 100,
            refit_every: 100,
            refit_data: RefitData::FullHistory,
            sense: Sense::Minimize,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecompParams {
    pub dims: Vec<usize>,
    /// Random maps per dimension.
    pub maps: usize,
    pub delta: f64,
    pub grid_points: usize,
}

impl Default for DecompParams {
    fn default() -> Self {
        DecompParams { dims: vec![2, 3], maps: 10, delta: 0.1, grid_points: 50 }
    }
}

/// Command-line values that replace config fields when present.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub steps: Option<usize>,
    pub trials: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| config(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = d.clone();
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
        if let Some(s) = o.steps {
            self.bo.total_steps = s;
        }
        if let Some(t) = o.trials {
            self.bo.trials = t;
            self.kt.trials = t;
        }
    }

    /// Checks the fields the selected experiment reads.
    pub fn validate(&self) -> CliResult<()> {
        if self.workers == 0 {
            return Err(config("workers: must be positive"));
        }
        match self.experiment {
            Experiment::Taiji => {
                let t = &self.taiji;
                positive("taiji.samples", t.samples)?;
                positive("taiji.test_samples", t.test_samples)?;
                positive("taiji.grid_points", t.grid_points)?;
                positive("taiji.derivative_points", t.derivative_points)?;
                positive("taiji.flow.n_layers", t.flow.n_layers)?;
                positive("taiji.flow.padding", t.flow.padding)?;
                positive("taiji.flow.train.epochs", t.flow.train.epochs)?;
                positive("taiji.eliminator.n_layers", t.eliminator.n_layers)?;
            }
            Experiment::TaijiCompare => {
                let c = &self.compare;
                positive("compare.samples", c.samples)?;
                positive("compare.test_samples", c.test_samples)?;
                positive("compare.grid_points", c.grid_points)?;
                positive("compare.coverage_cells", c.coverage_cells)?;
                positive("compare.train.epochs", c.train.epochs)?;
            }
            Experiment::Bo => {
                let b = &self.bo;
                nonempty("bo.context_dims", &b.context_dims)?;
                nonempty("bo.families", &b.families)?;
                nonempty("bo.strategies", &b.strategies)?;
                if b.context_dims.contains(&0) {
                    return Err(config("bo.context_dims: every dimension must be positive"));
                }
                positive("bo.trials", b.trials)?;
                positive("bo.init_steps", b.init_steps)?;
                positive("bo.refit_every", b.refit_every)?;
                if b.total_steps < b.init_steps {
                    return Err(config(format!(
                        "bo.total_steps: {} is below bo.init_steps ({})",
                        b.total_steps, b.init_steps
                    )));
                }
                for s in &b.strategies {
                    if let Strategy::Lcb { kappa } = s {
                        if !(*kappa >= 0.0) {
                            return Err(config(format!("bo.strategies: kappa must be non-negative, got {kappa}")));
                        }
                    }
                }
            }
            Experiment::Kt => {
                let k = &self.kt;
                positive("kt.context_dim", k.context_dim)?;
                positive("kt.trials", k.trials)?;
                positive("kt.test_contexts", k.test_contexts)?;
                nonempty("kt.sizes", &k.sizes)?;
                nonempty("kt.families", &k.families)?;
                if k.sizes.contains(&0) {
                    return Err(config("kt.sizes: every size must be positive"));
                }
            }
            Experiment::Decomp => {
                let d = &self.decomp;
                nonempty("decomp.dims", &d.dims)?;
                if d.dims.iter().any(|&k| k == 0 || k > 3) {
                    return Err(config("decomp.dims: dimensions must lie in 1..=3"));
                }
                positive("decomp.maps", d.maps)?;
                if !(d.delta > 0.0 && d.delta < 1.0) {
                    return Err(config(format!("decomp.delta: must lie in (0, 1), got {}", d.delta)));
                }
                if d.grid_points < 2 {
                    return Err(config("decomp.grid_points: need at least 2"));
                }
            }
            Experiment::Verify => {}
        }
        Ok(())
    }
}

fn positive(field: &str, v: usize) -> CliResult<()> {
    if v == 0 {
        return Err(config(format!("{field}: must be positive")));
    }
    Ok(())
}

fn nonempty<T>(field: &str, v: &[T]) -> CliResult<()> {
    if v.is_empty() {
        return Err(config(format!("{field}: must not be empty")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = RunConfig::from_json(r#"{"experiment": "bo", "seed": 7}"#).unwrap();
        assert_eq!(c.bo.total_steps, 1000);
        assert_eq!(c.workers, 1);
        c.validate().unwrap();
    }

    #[test]
    fn seed_is_mandatory() {
        assert!(RunConfig::from_json(r#"{"experiment": "bo"}"#).is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(RunConfig::from_json(r#"{"experiment": "bo", "seed": 1, "bogus": 3}"#).is_err());
        assert!(RunConfig::from_json(r#"{"experiment": "bo", "seed": 1, "bo": {"stepz": 3}}"#).is_err());
    }

    #[test]
    fn negative_kappa_names_the_field() {
        let c = RunConfig::from_json(
            r#"{"experiment": "bo", "seed": 1, "bo": {"strategies": [{"kind": "lcb", "kappa": -1.0}]}}"#,
        )
        .unwrap();
        let e = c.validate().unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("bo.strategies"), "{e}");
    }

    #[test]
    fn overrides_replace_fields() {
        let mut c = RunConfig::from_json(r#"{"experiment": "kt", "seed": 1}"#).unwrap();
        c.apply(&Overrides { seed: Some(9), trials: Some(2), steps: Some(50), ..Default::default() });
        assert_eq!((c.seed, c.kt.trials, c.bo.trials, c.bo.total_steps), (9, 2, 2, 50));
    }
}
