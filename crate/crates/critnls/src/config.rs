//! Configuration-driven experiment setup. The schema is strict: unknown
//! keys are rejected everywhere, and the resolved configuration is echoed
//! into every output so a run can be reproduced from its artifacts alone.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dim::Dim;
use crate::ensemble::EnsembleSetup;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::noise::{NoiseKind, NoiseOperator, NoiseSpec};
use crate::solver::{Detector, DtPolicy, InitialSpec, NoiseSource, SimState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    Radial { radius: f64, points: usize },
    PeriodicBox { side: f64, points: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsBlock {
    pub lambda: f64,
    pub noise_kind: NoiseKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    pub t_max: f64,
    pub dt: DtPolicy,
    #[serde(default = "default_record_interval")]
    pub record_interval: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub detector: Detector,
}

fn default_record_interval() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleBlock {
    pub paths: usize,
    /// Horizon for the ensemble runs; defaults to run.t_max.
    #[serde(default)]
    pub horizon: Option<f64>,
    /// Energy-excursion threshold as a fraction of H(Q).
    #[serde(default = "default_delta_energy")]
    pub delta_energy: f64,
    /// Noise-amplitude sweep values for the `sweep` subcommand.
    #[serde(default)]
    pub epsilons: Option<Vec<f64>>,
}

fn default_delta_energy() -> f64 {
    0.9
}

/// Parameters of the blow-up condition evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdBlock {
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_epsilon_budget")]
    pub epsilon: f64,
    /// Gradient cap of the auxiliary stopping time.
    #[serde(default = "default_grad_cap")]
    pub grad_cap: f64,
    /// Horizon t of the smallness conditions; defaults to run.t_max.
    #[serde(default)]
    pub horizon: Option<f64>,
}

fn default_delta() -> f64 {
    1.2
}
fn default_epsilon_budget() -> f64 {
    0.1
}
fn default_grad_cap() -> f64 {
    10.0
}

impl Default for ThresholdBlock {
    fn default() -> Self {
        ThresholdBlock {
            delta: default_delta(),
            epsilon: default_epsilon_budget(),
            grad_cap: default_grad_cap(),
            horizon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_version")]
    pub version: String,
    pub dimension: u8,
    pub grid: GridSpec,
    pub physics: PhysicsBlock,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    pub initial: InitialSpec,
    pub run: RunBlock,
    #[serde(default)]
    pub ensemble: Option<EnsembleBlock>,
    #[serde(default)]
    pub thresholds: Option<ThresholdBlock>,
}

fn default_version() -> String {
    "critnls-config-v1".to_owned()
}

impl ExperimentConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(json).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let dim = Dim::new(self.dimension)?;
        if let GridSpec::PeriodicBox { .. } = self.grid {
            if dim != Dim::THREE {
                return Err(Error::Config("periodic box runs support n = 3 only".into()));
            }
        }
        if self.physics.lambda != 1.0 && self.physics.lambda != -1.0 {
            return Err(Error::Config(format!(
                "lambda must be +1 (focusing) or -1 (defocusing), got {}",
                self.physics.lambda
            )));
        }
        if self.physics.noise_kind != NoiseKind::None && self.noise.is_none() {
            return Err(Error::Config(
                "noise_kind requires a noise block with the operator spec".into(),
            ));
        }
        if self.run.t_max < 0.0 {
            return Err(Error::Config(format!("t_max must be >= 0, got {}", self.run.t_max)));
        }
        if !(self.run.record_interval > 0.0) {
            return Err(Error::Config("record_interval must be positive".into()));
        }
        match self.run.dt {
            DtPolicy::Fixed { dt } if !(dt > 0.0) => {
                return Err(Error::Config(format!("dt must be positive, got {dt}")))
            }
            DtPolicy::Adaptive { dt0, dt_min } if !(dt0 > 0.0 && dt_min > 0.0 && dt_min <= dt0) => {
                return Err(Error::Config("adaptive policy needs 0 < dt_min <= dt0".into()))
            }
            _ => {}
        }
        if let Some(e) = &self.ensemble {
            if e.paths == 0 {
                return Err(Error::Config("ensemble paths must be >= 1".into()));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> Dim {
        Dim::new(self.dimension).expect("validated")
    }

    pub fn build_grid(&self) -> Result<Arc<Grid>> {
        match self.grid {
            GridSpec::Radial { radius, points } => Grid::radial(self.dim(), radius, points),
            GridSpec::PeriodicBox { side, points } => {
                Grid::periodic_box(self.dim(), side, points)
            }
        }
    }

    pub fn build_operator(&self, grid: &Arc<Grid>) -> Result<Option<Arc<NoiseOperator>>> {
        match (&self.physics.noise_kind, &self.noise) {
            (NoiseKind::None, _) => Ok(None),
            (_, Some(spec)) => Ok(Some(Arc::new(NoiseOperator::build(spec, grid.clone())?))),
            (_, None) => Err(Error::Config("missing noise block".into())),
        }
    }

    /// Assemble a simulation state for one path index.
    pub fn build_state(&self, path: u64) -> Result<SimState> {
        let grid = self.build_grid()?;
        let op = self.build_operator(&grid)?;
        let u0 = crate::solver::make_initial(&grid, &self.initial)?;
        SimState::new(
            u0,
            self.physics.lambda,
            self.physics.noise_kind,
            op,
            NoiseSource::Stream { seed: self.run.seed, path },
            self.run.detector,
        )
    }

    pub fn ensemble_setup(&self) -> Result<EnsembleSetup> {
        let block = self
            .ensemble
            .clone()
            .ok_or_else(|| Error::Config("config has no ensemble block".into()))?;
        let grid = self.build_grid()?;
        let op = self.build_operator(&grid)?;
        Ok(EnsembleSetup {
            grid,
            initial: self.initial.clone(),
            lambda: self.physics.lambda,
            noise_kind: self.physics.noise_kind,
            op,
            detector: self.run.detector,
            policy: self.run.dt,
            horizon: block.horizon.unwrap_or(self.run.t_max),
            paths: block.paths,
            seed: self.run.seed,
            delta_energy: block.delta_energy,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> String {
        r#"{
            "dimension": 3,
            "grid": { "kind": "radial", "radius": 12.0, "points": 128 },
            "physics": { "lambda": 1.0, "noise_kind": "additive" },
            "noise": { "basis": "sine_radial", "K": 4, "decay_q": 2.0,
                       "epsilon": 0.1, "complexness": "complex_valued" },
            "initial": { "kind": "gaussian", "amplitude": 0.5, "width": 1.5 },
            "run": { "t_max": 0.5, "dt": { "policy": "fixed", "dt": 0.01 }, "seed": 7 }
        }"#
        .to_owned()
    }

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_json(&minimal_json()).unwrap();
        let emitted = serde_json::to_string_pretty(&cfg).unwrap();
        let reparsed = ExperimentConfig::from_json(&emitted).unwrap();
        assert_eq!(cfg, reparsed);
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = minimal_json().replace("\"dimension\"", "\"surprise\": 1, \"dimension\"");
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }

    #[test]
    fn rejects_inconsistent_blocks() {
        let no_noise = minimal_json().replace(
            r#""noise_kind": "additive""#,
            r#""noise_kind": "additive" "#,
        );
        // remove the noise block entirely
        let mut v: serde_json::Value = serde_json::from_str(&no_noise).unwrap();
        v.as_object_mut().unwrap().remove("noise");
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());

        let bad_lambda = minimal_json().replace("\"lambda\": 1.0", "\"lambda\": 0.5");
        assert!(ExperimentConfig::from_json(&bad_lambda).is_err());

        let bad_dim = minimal_json().replace("\"dimension\": 3", "\"dimension\": 6");
        assert!(ExperimentConfig::from_json(&bad_dim).is_err());
    }

    #[test]
    fn builds_state() {
        let cfg = ExperimentConfig::from_json(&minimal_json()).unwrap();
        let state = cfg.build_state(0).unwrap();
        assert_eq!(state.t, 0.0);
    }
}
