use std::fmt;

/// Failure of a CLI run, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or input data; exit code 2.
    Config(String),
    /// Numerical failure inside a module; exit code 3.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    /// Classifies a core error raised in `module`.
    pub fn from_core(module: &str, err: msvar::Error) -> Self {
        use msvar::Error as E;
        match err {
            E::InvalidInput(_) | E::Csv { .. } | E::Io(_) | E::Dimension(_) => {
                CliError::Config(format!("{module}: {err}"))
            }
            _ => CliError::Numerical(format!("{module}: {err}")),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error in {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("io: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Config(format!("csv: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// `map_err` helper for core results.
pub trait CoreContext<T> {
    fn in_module(self, module: &str) -> CliResult<T>;
}

impl<T> CoreContext<T> for msvar::Result<T> {
    fn in_module(self, module: &str) -> CliResult<T> {
        self.map_err(|e| CliError::from_core(module, e))
    }
}
