//! Scenario assembly for the benchmark harness: maps a scenario id and a
//! repetition seed to concrete train/test datasets plus the analytic model
//! (with its optimization-start coefficients) every method shares.

use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::basis::BasisModel;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::scenario::toy::{toy_generate, toy_model, ToyConfig};
use crate::scenario::via::{via_build_datasets, via_model, via_synthetic_generate, ViaConfig};
use crate::simdyn::{
    self, build_datasets, prior_theta, simulate_rollout, ControllerConfig, MismatchConfig,
    MismatchMode, RobotParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    Toy,
    ViaInstant,
    ViaAr,
    SimdynLl,
    SimdynGl,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 5] = [
        ScenarioId::Toy,
        ScenarioId::ViaInstant,
        ScenarioId::ViaAr,
        ScenarioId::SimdynLl,
        ScenarioId::SimdynGl,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioId::Toy => "toy",
            ScenarioId::ViaInstant => "via_instant",
            ScenarioId::ViaAr => "via_ar",
            ScenarioId::SimdynLl => "simdyn_ll",
            ScenarioId::SimdynGl => "simdyn_gl",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scenario id `{s}`")))
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One repetition's view of a scenario: shared datasets plus the analytic
/// model carrying the coefficient optimization start (the prior).
pub struct ScenarioData {
    pub id: ScenarioId,
    pub seed: u64,
    pub train: Dataset,
    pub interp: Dataset,
    /// Absent for the VIA scenarios, which only have a chronological test set.
    pub extrap: Option<Dataset>,
    pub model: BasisModel,
    /// Generator ground-truth coefficients where the model class contains
    /// the truth (toy, via); None for simdyn base parameters.
    pub true_coefficients: Option<DVector<f64>>,
    /// Default training-row cap for kernel/network learners.
    pub max_train_rows: Option<usize>,
}

/// Fixed seed of the simdyn base-parameter reduction so the basis is
/// identical across repetitions.
const SIMDYN_BASIS_SEED: u64 = 0xba5e;

/// Knobs of scenario generation that benchmarks may override.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioOverrides {
    pub toy: ToyConfig,
    pub via: ViaConfig,
    /// Rollout length of the simdyn scenarios (s).
    pub simdyn_duration: f64,
    /// Training-row cap for kernel/network learners, per scenario family.
    pub max_train_rows_via: usize,
    pub max_train_rows_simdyn: usize,
}

impl Default for ScenarioOverrides {
    fn default() -> Self {
        Self {
            toy: ToyConfig::default(),
            via: ViaConfig::default(),
            simdyn_duration: 100.0,
            max_train_rows_via: 400,
            max_train_rows_simdyn: 400,
        }
    }
}

pub fn generate_scenario(
    id: ScenarioId,
    seed: u64,
    overrides: &ScenarioOverrides,
) -> Result<ScenarioData> {
    match id {
        ScenarioId::Toy => {
            let cfg = ToyConfig {
                seed,
                ..overrides.toy.clone()
            };
            let data = toy_generate(&cfg)?;
            Ok(ScenarioData {
                id,
                seed,
                train: data.train,
                interp: data.interp_test,
                extrap: Some(data.extrap_test),
                // neutral optimization start; the truth is not handed to
                // any learner
                model: toy_model(DVector::from_element(4, 1.0)),
                true_coefficients: Some(DVector::from_row_slice(&cfg.theta_true)),
                max_train_rows: None,
            })
        }
        ScenarioId::ViaInstant | ScenarioId::ViaAr => {
            let cfg = overrides.via.clone();
            let telemetry = via_synthetic_generate(&cfg.synthetic, seed);
            let datasets = via_build_datasets(&cfg, &telemetry)?;
            let (train, interp, dim_in) = match id {
                ScenarioId::ViaInstant => (datasets.instant_train, datasets.instant_test, 2),
                _ => (
                    datasets.ar_train,
                    datasets.ar_test,
                    2 * (cfg.history + 1),
                ),
            };
            Ok(ScenarioData {
                id,
                seed,
                train,
                interp,
                extrap: None,
                model: via_model(dim_in, cfg.theta_init),
                true_coefficients: Some(DVector::from_row_slice(&[
                    cfg.synthetic.stiffness,
                    cfg.synthetic.damping,
                ])),
                max_train_rows: Some(overrides.max_train_rows_via),
            })
        }
        ScenarioId::SimdynLl | ScenarioId::SimdynGl => {
            let mode = if id == ScenarioId::SimdynLl {
                MismatchMode::Local
            } else {
                MismatchMode::GlobalPlusLocal
            };
            let params = RobotParams::ground_truth();
            let mismatch = MismatchConfig::new(mode);
            let theta_hat = prior_theta(&params, seed ^ 0x7072_696f_72);
            let dt = 1e-3;
            let rec0 = simulate_rollout(
                &params,
                Some(&mismatch),
                &ControllerConfig::excitation(theta_hat.clone(), 0.0),
                overrides.simdyn_duration,
                dt,
            )?;
            let rec3 = simulate_rollout(
                &params,
                Some(&mismatch),
                &ControllerConfig::excitation(theta_hat.clone(), 0.3),
                overrides.simdyn_duration,
                dt,
            )?;
            let splits = build_datasets(&rec0, &rec3, id.as_str(), 1e-6, 10, seed ^ 0x6e6f_6973)?;
            let reduction = simdyn::base_param_reduction(
                &params.lengths,
                params.gravity,
                200,
                SIMDYN_BASIS_SEED,
            )?;
            let theta_base = reduction.reduce_theta(&theta_hat);
            let basis = std::sync::Arc::new(simdyn::SimdynBasis::new(
                params.lengths,
                params.gravity,
                reduction,
            ));
            Ok(ScenarioData {
                id,
                seed,
                train: splits.train,
                interp: splits.interp,
                extrap: Some(splits.extrap),
                model: BasisModel::new(basis, theta_base)?,
                true_coefficients: None,
                max_train_rows: Some(overrides.max_train_rows_simdyn),
            })
        }
    }
}
