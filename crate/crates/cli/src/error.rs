use std::fmt;
use std::path::Path;

use toda_brane::blackhole_report::ReportError;
use toda_brane::lie_cartan::CartanError;
use toda_brane::moduli_poly::ModuliError;
use toda_brane::sigma_model::SigmaError;
use toda_brane::toda_oracle::TodaError;

/// Failure classes, each with its own exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Validation,
    Solver,
    Io,
}

impl Kind {
    pub fn exit_code(self) -> u8 {
        match self {
            Kind::Validation => 1,
            Kind::Solver => 2,
            Kind::Io => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Kind::Validation => "validation",
            Kind::Solver => "solver",
            Kind::Io => "io",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError { kind: Kind::Validation, message: message.into() }
    }

    pub fn solver(message: impl Into<String>) -> Self {
        CliError { kind: Kind::Solver, message: message.into() }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError { kind: Kind::Io, message: format!("{}: {err}", path.display()) }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.kind.label(), self.message)
    }
}

impl std::error::Error for CliError {}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<SigmaError> for CliError {
    fn from(e: SigmaError) -> Self {
        CliError::validation(e.to_string())
    }
}

impl From<CartanError> for CliError {
    fn from(e: CartanError) -> Self {
        CliError::validation(e.to_string())
    }
}

impl From<ModuliError> for CliError {
    fn from(e: ModuliError) -> Self {
        use ModuliError::*;
        let kind = match &e {
            NoConvergence { .. } | Inconsistent { .. } | Positivity { .. } | NoRealRoot { .. } | Branch => Kind::Solver,
            _ => Kind::Validation,
        };
        CliError { kind, message: e.to_string() }
    }
}

impl From<TodaError> for CliError {
    fn from(e: TodaError) -> Self {
        use TodaError::*;
        match e {
            Moduli(inner) => inner.into(),
            EmptyChain | Length { .. } | NonDistinct { .. } | NonzeroSum(_) | ZeroAmplitude(_) | NonPositiveB(_)
            | BadDbar | BadMuBar(_) | BeyondDomain { .. } | ShootingDimension { .. } => {
                CliError::validation(e.to_string())
            }
            _ => CliError::solver(e.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Moduli(inner) => inner.into(),
            ReportError::Positivity { .. } | ReportError::HorizonValue { .. } => CliError::solver(e.to_string()),
            _ => CliError::validation(e.to_string()),
        }
    }
}
