//! Learning subset choice functions with Pareto-embeddings.
//!
//! Objects are mapped by a small weight-shared network into a
//! low-dimensional utility space; the predicted choice set of a task is the
//! set of its Pareto-optimal points there.

pub mod benchmarks;
pub mod choice;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod io;
pub mod losses;
pub mod net;
pub mod seed;
pub mod training;
pub mod tuning;

pub use benchmarks::{generate_dataset, generate_task, FeatureDomain, Problem, ProblemSpec};
pub use choice::{
    dominates, pareto_front, predict_choice, ChoiceMask, ChoiceTask, Dataset, DatasetMeta,
    Embedding,
};
pub use error::{Error, Result};
pub use evaluation::{
    a_mean, ablate_mds, cv_splits, evaluate, holdout_split, monte_carlo_cv, random_baseline,
    AblationOutcome, Arm, Confusion, CvConfig, CvOutcome, CvSplit, CvSummary, EvalReport,
    FitContext, FitResult,
};
pub use experiment::{run_problem, ExperimentConfig, ProblemOutcome, TunedTrainer};
pub use io::{
    dataset_fingerprint, read_dataset, read_model, write_dataset, write_model, ModelFile,
};
pub use losses::{
    loss_dom, loss_grad, loss_l2, loss_mds, loss_po, loss_total, DomScope, LossBreakdown,
    LossWeights, PairwiseLoss,
};
pub use net::{
    init_params, Architecture, ForwardTrace, Mode, NetworkParams, NormConfig, NormPlacement,
    ParamGrads,
};
pub use seed::derive_seed;
pub use training::{cyclical_lr, train, OptimizerKind, TrainConfig, TrainReport};
pub use tuning::{sample_config, tune, HyperConfig, SearchSpace, Trial, TuneOutcome, TunerKind};
