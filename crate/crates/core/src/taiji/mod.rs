//! The "Taiji" parametric rotation: ground truth, datasets, flow training and evaluation.

pub mod compare;
pub mod data;
pub mod derivative;
pub mod eliminate;
pub mod groundtruth;
pub mod model;

pub use compare::{
    interior_coverage, prediction_grid_for, run_baseline_comparison, train_comparison_model, CompareConfig,
    CompareModel, CompareReport, ModelSummary, PredictionGrid, TaijiRegressor,
};
pub use data::{gen_taiji_dataset, TaijiDataset, TaijiMode, VECTOR_PARAM_DIM, VECTOR_PARAM_STD};
pub use derivative::{derivative_report, DerivativeReport, DerivativeRow, DerivativeSummary, MODEL_FD_STEP};
pub use eliminate::{eliminate_taiji, EliminationReport};
pub use groundtruth::{taiji_angle, taiji_apply, taiji_dx, taiji_dy, taiji_map, RegionLabel, TaijiDerivative};
pub use model::{
    compose_model, composition_region_agreement, disc_grid, model_apply, prediction_grid, test_rmse, train_taiji_flow,
    TaijiFlowConfig,
};
