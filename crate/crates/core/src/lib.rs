//! Stochastic ensemble multi-source transfer learning with statistical
//! invariants.
//!
//! A boosting-style loop builds, per round, one candidate weak learner per
//! source domain. Each candidate is a kernel learner fit on a bootstrap of the
//! labeled target set under a randomly drawn invariant predicate; the candidate
//! with the lowest target error joins the ensemble.

pub mod data;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod learner;
pub mod linalg;
pub mod par;
pub mod predicates;
pub mod sampling;
pub mod stats;

pub use data::{DomainDataset, TransferTask};
pub use ensemble::{train_setrlusi, Ensemble, TrainConfig, TrainOutcome};
pub use error::{Error, ErrorCategory, Result};
pub use experiment::{run_experiment, Config, ExperimentResult, Method};
pub use learner::{fit_weak_learner, HyperParams, RegularizerMode, WeakLearner};
pub use linalg::{KernelConfig, KernelKind};
pub use par::Execution;
pub use predicates::{build_predicate_pool, PoolConfig, PredicatePool, PredicateSpec};
pub use sampling::RngStream;
