use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not reach relative tolerance {requested:e} (achieved {achieved:e})")]
    Accuracy { requested: f64, achieved: f64 },

    #[error("s = {s:e} outside kernel table range [{min:e}, {max:e}]; widen the table or use direct evaluation")]
    Range { s: f64, min: f64, max: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("singular evaluation: target coincides with particle {index} and delta = 0")]
    Singularity { index: usize },

    #[error("particle {index} left the half-plane (z = {z:e}); reduce the time step")]
    HalfPlane { index: usize, z: f64 },

    #[error("particle {index} reached the axis (r = {r:e})")]
    Axis { index: usize, r: f64 },

    #[error("step {step} (t = {t}): {source}")]
    Step {
        step: usize,
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input rather than numerical failure.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Io { .. } | Error::Json { .. } | Error::Parse(_)
        )
    }
}
