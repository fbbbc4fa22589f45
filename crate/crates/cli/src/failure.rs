use std::fmt;
use std::path::PathBuf;

/// Command failure, carrying the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad configuration or malformed input data.
    Validation(String),
    /// An upstream artifact is absent; `producer` names the subcommand that
    /// writes it.
    Missing {
        path: PathBuf,
        producer: Option<&'static str>,
    },
    Internal(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Missing { .. } => 2,
            Failure::Internal(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(m) | Failure::Internal(m) => f.write_str(m),
            Failure::Missing {
                path,
                producer: Some(p),
            } => {
                write!(
                    f,
                    "missing {} (run `forestcurve {p}` first)",
                    path.display()
                )
            }
            Failure::Missing {
                path,
                producer: None,
            } => write!(f, "missing {}", path.display()),
        }
    }
}

impl std::error::Error for Failure {}

impl From<forestcurve_core::Error> for Failure {
    fn from(e: forestcurve_core::Error) -> Self {
        use forestcurve_core::Error as E;
        match e {
            E::MissingFile(path) => Failure::Missing {
                path,
                producer: None,
            },
            E::Io { .. } | E::Stream(_) | E::PngEncode(_) => Failure::Internal(e.to_string()),
            other => Failure::Validation(other.to_string()),
        }
    }
}
