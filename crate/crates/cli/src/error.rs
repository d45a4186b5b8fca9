use restspike_core::ode::OdeError;
use restspike_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Core(#[from] Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    /// Some output was written before the cycle family was lost.
    #[error("partial sweep: {0}")]
    Partial(Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 1,
            CliError::Partial(_) => 6,
            CliError::Core(e) => match e {
                Error::InvalidParameter(_) | Error::SingularLimit => 2,
                Error::Ode(OdeError::InvalidSettings(_)) => 2,
                Error::WrongScenario(_)
                | Error::NotSShaped
                | Error::DegenerateFold { .. }
                | Error::NotASaddle { .. }
                | Error::NoFoldCrossing
                | Error::NoSectionCrossing
                | Error::NoLanding { .. } => 4,
                Error::NoSignChange | Error::NoFixedPoint => 5,
                Error::CycleLost { .. } => 6,
                _ => 3,
            },
        }
    }
}
