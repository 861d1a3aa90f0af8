use std::fmt;

/// A command failure and the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, configs or inputs (exit 2).
    Usage(String),
    /// Something broke while running (exit 1).
    Runtime(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => f.write_str(m),
        }
    }
}

pub type CliResult<T> = Result<T, Failure>;

/// Wraps an error as a usage failure of `stage`.
pub fn usage<E: fmt::Display>(stage: &str) -> impl FnOnce(E) -> Failure + '_ {
    move |e| Failure::Usage(format!("{stage}: {e}"))
}

/// Wraps an error as a runtime failure of `stage`.
pub fn runtime<E: fmt::Display>(stage: &str) -> impl FnOnce(E) -> Failure + '_ {
    move |e| Failure::Runtime(format!("{stage}: {e}"))
}
