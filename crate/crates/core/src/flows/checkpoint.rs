use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ParaCFlowConfig, ParaCFlowModel};
use super::permutation::Permutation;
use crate::error::{Error, Result};
use crate::numkit::Parameterized;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

/// On-disk form of a [`ParaCFlowModel`]: architecture, frozen permutations and
/// all parameters flattened in row-major order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub dims: ParaCFlowConfig,
    pub permutations: Vec<Vec<usize>>,
    pub params: Vec<f64>,
    pub seed: u64,
}

impl Checkpoint {
    pub fn from_model(model: &ParaCFlowModel) -> Self {
        Checkpoint {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            dims: model.config().clone(),
            permutations: model.body().steps().iter().map(|s| s.perm.indices().to_vec()).collect(),
            params: model.flat_params(),
            seed: model.seed(),
        }
    }

    pub fn into_model(self) -> Result<ParaCFlowModel> {
        if self.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::Checkpoint(format!(
                "schema version {} is not supported (expected {})",
                self.schema_version, CHECKPOINT_SCHEMA_VERSION
            )));
        }
        let mut model = ParaCFlowModel::new(self.dims, self.seed)?;
        if self.permutations.len() != model.body().len() {
            return Err(Error::Checkpoint(format!(
                "{} permutations for {} layers",
                self.permutations.len(),
                model.body().len()
            )));
        }
        for (step, p) in model.body_mut().steps_mut().iter_mut().zip(self.permutations) {
            step.perm = Permutation::new(p)?;
        }
        if self.params.len() != model.param_count() {
            return Err(Error::Checkpoint(format!(
                "{} parameters stored, architecture has {}",
                self.params.len(),
                model.param_count()
            )));
        }
        model.set_flat_params(&self.params)?;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(s)?;
        match v.get("schema_version").and_then(|x| x.as_u64()) {
            Some(ver) if ver == CHECKPOINT_SCHEMA_VERSION as u64 => Ok(serde_json::from_value(v)?),
            Some(ver) => Err(Error::Checkpoint(format!(
                "schema version {ver} is not supported (expected {CHECKPOINT_SCHEMA_VERSION})"
            ))),
            None => Err(Error::Checkpoint("missing schema_version".into())),
        }
    }
}

pub fn save_checkpoint(model: &ParaCFlowModel, path: &Path) -> Result<()> {
    std::fs::write(path, Checkpoint::from_model(model).to_json()?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ParaCFlowModel> {
    Checkpoint::from_json(&std::fs::read_to_string(path)?)?.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{rng_from, Activation};
    use rand::Rng;

    fn model() -> ParaCFlowModel {
        ParaCFlowModel::new(
            ParaCFlowConfig {
                action_dim: 1,
                context_dim: 2,
                width: 4,
                n_layers: 3,
                cond_hidden: vec![6],
                head_hidden: Some(vec![5]),
                activation: Activation::Tanh,
                identity_init: false,
                zero_ascend: false,
                train_ascend: true,
            },
            77,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut m = model();
        let mut rng = rng_from(1);
        // perturb so stored parameters differ from a fresh build with the same seed
        let p: Vec<f64> = m.flat_params().iter().map(|v| v + rng.random_range(-0.1..0.1)).collect();
        m.set_flat_params(&p).unwrap();
        let json = Checkpoint::from_model(&m).to_json().unwrap();
        let back = Checkpoint::from_json(&json).unwrap().into_model().unwrap();
        for _ in 0..50 {
            let c = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let a = [rng.random_range(-3.0..3.0)];
            assert_eq!(m.predict(&c, &a).unwrap().to_bits(), back.predict(&c, &a).unwrap().to_bits());
        }
        assert_eq!(back, m);
    }

    #[test]
    fn version_mismatch_names_versions() {
        let mut ck = Checkpoint::from_model(&model());
        ck.schema_version = 9;
        let err = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap_err().to_string();
        assert!(err.contains('9') && err.contains('1'), "{err}");
    }

    #[test]
    fn wrong_param_count_rejected() {
        let mut ck = Checkpoint::from_model(&model());
        ck.params.pop();
        assert!(matches!(ck.into_model(), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = std::env::temp_dir().join(format!("ck-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.json");
        let m = model();
        save_checkpoint(&m, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), m);
        std::fs::remove_dir_all(&dir).ok();
    }
}
