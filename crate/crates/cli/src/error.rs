use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("load failed: {0}")]
    Load(String),
    #[error("scenario generation failed: {0}")]
    Generation(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Other(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Load(_) => 3,
            CliError::Generation(_) => 4,
            CliError::Verification(_) => 5,
        }
    }

    pub fn other(e: impl std::fmt::Display) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<tacsim_core::scenario::ScenarioError> for CliError {
    fn from(e: tacsim_core::scenario::ScenarioError) -> Self {
        CliError::Generation(e.to_string())
    }
}

impl From<tacsim_core::evalstats::EvalError> for CliError {
    fn from(e: tacsim_core::evalstats::EvalError) -> Self {
        use tacsim_core::evalstats::EvalError as E;
        match e {
            E::Load { .. } | E::Architecture { .. } => CliError::Load(e.to_string()),
            E::Scenario(s) => s.into(),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<tacsim_core::dqn::DqnError> for CliError {
    fn from(e: tacsim_core::dqn::DqnError) -> Self {
        use tacsim_core::dqn::DqnError as E;
        match e {
            E::Config(m) => CliError::Usage(m),
            E::Scenario(s) => s.into(),
            other => CliError::Other(other.to_string()),
        }
    }
}
