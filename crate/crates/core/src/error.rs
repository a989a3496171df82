use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid reproduction law: {0}")]
    InvalidLaw(String),

    #[error("invalid simulation caps: {0}")]
    InvalidCaps(String),

    #[error("invalid vaccination function: {0}")]
    InvalidAlpha(String),

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("tree is censored at t = {censor_time}; functional `{functional}` is not identified")]
    CensoredTree { functional: String, censor_time: f64 },

    #[error("N(t) requested at t = {t} beyond the simulation horizon {horizon}")]
    BeyondHorizon { t: f64, horizon: f64 },

    #[error("functional `{0}` requires exactly one initial individual")]
    MultipleInitials(String),

    #[error("unknown functional `{0}` (expected T, Ttilde, M, Nt:<days> or Ninf)")]
    UnknownFunctional(String),

    #[error("{unresolved} of {n} replicates were censored (limit 1%); raise caps.max_births or lower caps.horizon")]
    ExplosionRate { unresolved: usize, n: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
