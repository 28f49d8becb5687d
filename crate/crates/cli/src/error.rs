use herald_core::correlator::CorrelatorError;
use herald_core::g2::G2Error;
use herald_core::generator::SimError;
use herald_core::presets::AnalysisError;
use herald_core::resonance::ResonanceError;
use herald_core::spectral::SpectralError;
use herald_core::tags::TagError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Undefined(String),
    #[error("{0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Output(_) => 1,
            Self::Config(_) => 2,
            Self::Data(_) => 3,
            Self::Undefined(_) => 4,
        }
    }

    pub fn output(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        Self::Output(format!("{}: {e}", path.display()))
    }
}

impl From<TagError> for CliError {
    fn from(e: TagError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<CorrelatorError> for CliError {
    fn from(e: CorrelatorError) -> Self {
        match e {
            CorrelatorError::UnknownChannel { .. } | CorrelatorError::InvalidBinning(_) => {
                Self::Config(e.to_string())
            }
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<G2Error> for CliError {
    fn from(e: G2Error) -> Self {
        match e {
            G2Error::NoTriggers(_) | G2Error::EmptyArm(_) => Self::Undefined(e.to_string()),
            G2Error::ChannelsNotDistinct(..) | G2Error::InvalidOptions(_) => {
                Self::Config(e.to_string())
            }
            G2Error::Input(inner) => inner.into(),
        }
    }
}

impl From<ResonanceError> for CliError {
    fn from(e: ResonanceError) -> Self {
        match e {
            ResonanceError::BadTransmissions { .. } => Self::Config(e.to_string()),
            _ => Self::Undefined(e.to_string()),
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::ZeroIntegral => Self::Undefined(e.to_string()),
            SpectralError::Io(_) => Self::Output(e.to_string()),
            _ => Self::Config(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(_) => Self::Config(e.to_string()),
            SimError::Spectral(inner) => inner.into(),
            SimError::Tags(inner) => Self::Output(inner.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Sim(e) => e.into(),
            AnalysisError::Spectral(e) => e.into(),
            AnalysisError::Correlator(e) => e.into(),
            AnalysisError::G2(e) => e.into(),
            AnalysisError::Resonance(e) => e.into(),
        }
    }
}
