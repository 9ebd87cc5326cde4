//! Monte Carlo studies: data generators, accuracy metrics and runners.

mod metrics;
mod runners;
mod studies;

use thiserror::Error;

use crate::borrowing::BorrowingError;
use crate::joint::JointError;
use crate::likelihood::LikelihoodError;

pub use metrics::{mse, quantile_sorted, r_and_p, rmse, RSummary};
pub use runners::{
    lr_quantile_study, performance_study, power_study, run_replication, run_study, summarize, Diagnostics,
    PerformanceSummary, PowerCurve, QuantileRow, QuantileTable, ReplicationOutcome, StudyReport, StudyResult,
    LR_PROBS, SCHEMA,
};
pub use studies::{generate, substream, SimData, StudyConfig, StudyId, StudyKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("unknown study '{0}'")]
    UnknownStudy(String),
    #[error("no evaluation points")]
    NoEvalPoints,
    #[error("separate fit is exact in replication {replication}")]
    DegenerateBaseline { replication: usize },
    #[error("invalid study configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
    #[error(transparent)]
    Borrowing(#[from] BorrowingError),
    #[error(transparent)]
    Joint(#[from] JointError),
}
