use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid has {got} points but a derivative of order {order} needs at least {min_points}")]
    GridTooSmall {
        order: usize,
        min_points: usize,
        got: usize,
    },

    #[error("derivative order {order} is not supported (maximum {max})")]
    UnsupportedOrder { order: usize, max: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quotient undefined: denominator {denominator:e} is below the degeneracy threshold")]
    QuotientUndefined { denominator: f64 },

    #[error("epsilon too large: eps*T = {eps_t} must be below delta0/2 = {half_delta0} (delta0 = minimal jump spacing)")]
    EpsilonTooLarge { eps_t: f64, half_delta0: f64 },

    #[error("dimension balance violated: residual {residual:e}")]
    DimensionBalance { residual: f64 },

    #[error("optimizer failed on every start: {0}")]
    OptimizerFailed(String),

    #[error("unknown potential '{0}'")]
    UnknownPotential(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
