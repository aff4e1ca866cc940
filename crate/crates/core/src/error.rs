use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mixing angle undefined: both tunnelling rates are zero")]
    DegenerateAngle,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("state is not normalised (norm = {norm:.3e})")]
    NotNormalized { norm: f64 },

    #[error("unknown wire `{0}`")]
    UnknownWire(String),

    #[error("evaluation point {point:?} lies within {distance:.3e} m of a wire segment")]
    PointOnWire { point: [f64; 3], distance: f64 },

    #[error("simulation grid intersects wire `{wire}`")]
    GridIntersectsWire { wire: &'static str },

    #[error("guide {guide} has no transverse minimum in slice {z_index}")]
    MinimumAbsent { z_index: usize, guide: &'static str },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("wave packet too close to the boundary along {axis} ({margin_sigmas:.2} sigma, need 6)")]
    PacketTooCloseToBoundary { axis: char, margin_sigmas: f64 },

    #[error("imaginary-time evolution did not converge within {iterations} steps (last relative change {last_change:.3e})")]
    NotConverged { iterations: usize, last_change: f64 },

    #[error("boundary density {edge:.3e} exceeded threshold {threshold:.3e} at step {step} (t = {time:.6e} s)")]
    EdgeBreach { step: usize, time: f64, edge: f64, threshold: f64 },

    #[error("empty population trace")]
    EmptyTrace,

    #[error("malformed QWF1 data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
