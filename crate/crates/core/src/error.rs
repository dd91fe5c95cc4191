use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported derivative order ({t},{s}); need t+s <= 4")]
    UnsupportedOrder { t: usize, s: usize },
    #[error("grid too small along axis {axis}: need {need} valid nodes, have {have}")]
    GridTooSmall { axis: usize, need: usize, have: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("expected {expected} components, got {got}")]
    ComponentCount { expected: usize, got: usize },
    #[error("cannot grow margin from {current} to {requested} nodes")]
    MarginGrowth { current: usize, requested: usize },
    #[error("margin {0} is not an integer multiple of the spacing")]
    MarginNotMultiple(f64),
    #[error("mollifier scale {l} is below 2h = {two_h}")]
    UnderResolvedKernel { l: f64, two_h: f64 },
    #[error("collar of {have} nodes cannot absorb {need} nodes")]
    InsufficientCollar { need: usize, have: usize },
    #[error("support violation: |f| = {max_abs:e} on the excluded band")]
    Support { max_abs: f64 },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("codimension {k} too small, need at least {need}")]
    Codimension { k: usize, need: usize },
    #[error("frequency {lambda} unresolved at h = {h} (lambda*h > pi/4); need about {needed_n} nodes per axis")]
    Resolution { lambda: f64, h: f64, needed_n: usize },
    #[error("stage abort at codimension {i}, iteration {r}: {detail}")]
    StageAbort { i: usize, r: usize, detail: String },
    #[error("negative compensation radicand, min = {min:e}")]
    Compensation { min: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::StageAbort { .. } | Error::Compensation { .. } => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Error::Config("x".into()).exit_code(), 2);
        assert_eq!(Error::StageAbort { i: 1, r: 2, detail: String::new() }.exit_code(), 3);
        assert_eq!(Error::Compensation { min: -1.0 }.exit_code(), 3);
        assert_eq!(Error::Resolution { lambda: 1.0, h: 1.0, needed_n: 9 }.exit_code(), 1);
    }
}
