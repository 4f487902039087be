//! Contextual Bayesian optimization with neural surrogate ensembles.

pub mod benchmark;
pub mod bo;
pub mod ensemble;
pub mod kt;
pub mod nets;

pub use benchmark::{
    benchmark_eval, best_index, best_on_grid, linspace, Benchmark, BenchmarkKind, ContextualProblem, Sense,
    ACTION_GRID_LEN, ACTION_RANGE,
};
pub use bo::{run_bo, BoConfig, BoStep, BoTrace, RefitData, Strategy};
pub use ensemble::{
    acquire_lcb, acquire_thompson, build_net, build_surrogate, ensemble_predict, mean_std, paracflow_config,
    table_shape, Family, Surrogate, SurrogateEnsemble, SurrogateShape, ENSEMBLE_SIZE, INPUT_SCALE, PARACFLOW_WIDTH,
    TABLE_CONTEXT_DIMS,
};
pub use kt::{
    evaluate_kt, kendall_tau, kendall_tau_flagged, kt_experiment, kt_trial, uniform_dataset, KtConfig, KtEntry,
    KtReport, KtSummary,
};
pub use nets::{AppendResnet, AscendMlp, SurrogateNet};
