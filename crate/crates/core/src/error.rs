use thiserror::Error;

use crate::conditions::ConditionKind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("coupling scale must be positive and finite, got {0}")]
    NonPositiveScale(f64),
    #[error("lower arc must lie in [0, 2pi), got {0}")]
    ArcOutOfRange(f64),
    #[error("connecting link must be finite and non-negative, got {0}")]
    InvalidLink(f64),
    #[error("connecting link and lower arc cannot vanish simultaneously")]
    DoubleDegenerate,
    #[error("S-matrix denominator is singular at k = {k}")]
    SingularDenominator { k: f64 },
    #[error("evaluator for {expected:?} called on {actual:?} geometry")]
    WrongKind {
        expected: ConditionKind,
        actual: ConditionKind,
    },
    #[error("a and b vanish simultaneously at k = {k}")]
    DegeneratePoint { k: f64 },
    #[error("band [{lo}, {hi}] is narrower than four grid steps ({step})")]
    StepTooCoarse { lo: f64, hi: f64, step: f64 },
    #[error("{0} has no rational approximation within the denominator cap")]
    NotCommensurate(f64),
    #[error("found {found} roots where at most {allowed} are possible")]
    RootCountViolation { found: usize, allowed: usize },
    #[error("no width branch matches the coefficients of series {series}, n = {n}: {beta:?}")]
    BranchUnresolved { series: u8, n: u64, beta: Vec<f64> },
    #[error("no band found near k = {center} for n = {n}")]
    MissingBand { n: u64, center: f64 },
    #[error("outside the asymptotic regime: {0}")]
    RegimeViolation(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
