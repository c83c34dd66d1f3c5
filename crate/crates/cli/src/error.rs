use std::fmt;
use std::io;

use confprint::augment::AugmentError;
use confprint::autodiff::AutodiffError;
use confprint::binio::FormatError;
use confprint::config::ConfigError;
use confprint::dsp::DspError;
use confprint::encoder::EncoderError;
use confprint::eval::EvalError;
use confprint::index::IndexError;
use confprint::manifest::ManifestError;
use confprint::trainer::TrainerError;
use serde::Serialize;

/// Failure classes, one exit code each. Usage errors exit with 2 (clap).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Runtime,
    MissingFile,
    InvalidConfig,
    DimensionMismatch,
    BadFormat,
    InvalidInput,
    Io,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Runtime => 1,
            Kind::MissingFile => 3,
            Kind::InvalidConfig => 4,
            Kind::DimensionMismatch => 5,
            Kind::BadFormat => 6,
            Kind::InvalidInput => 7,
            Kind::Io => 8,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn context(mut self, path: &std::path::Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }

    /// `{"error":"<kind>","exit_code":<n>,"message":"..."}` on one line.
    pub fn to_json_line(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            error: Kind,
            exit_code: i32,
            message: &'a str,
        }
        serde_json::to_string(&Line {
            error: self.kind,
            exit_code: self.kind.exit_code(),
            message: &self.message,
        })
        .expect("error line serializes")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub trait Classify {
    fn class(&self) -> Kind;
}

fn io_kind(e: &io::Error) -> Kind {
    if e.kind() == io::ErrorKind::NotFound {
        Kind::MissingFile
    } else {
        Kind::Io
    }
}

impl Classify for io::Error {
    fn class(&self) -> Kind {
        io_kind(self)
    }
}

impl Classify for ConfigError {
    fn class(&self) -> Kind {
        match self {
            ConfigError::Io { source, .. } => io_kind(source),
            ConfigError::Parse(_) | ConfigError::Invalid(_) => Kind::InvalidConfig,
        }
    }
}

impl Classify for FormatError {
    fn class(&self) -> Kind {
        Kind::BadFormat
    }
}

impl Classify for DspError {
    fn class(&self) -> Kind {
        match self {
            DspError::Io { source, .. } => io_kind(source),
            DspError::Format(_) | DspError::Wav(_) => Kind::BadFormat,
            DspError::InvalidConfig(_) | DspError::EmptyFilter { .. } => Kind::InvalidConfig,
            _ => Kind::InvalidInput,
        }
    }
}

impl Classify for AutodiffError {
    fn class(&self) -> Kind {
        match self {
            AutodiffError::Shape { .. } => Kind::DimensionMismatch,
            _ => Kind::Runtime,
        }
    }
}

impl Classify for EncoderError {
    fn class(&self) -> Kind {
        match self {
            EncoderError::InvalidConfig(_) => Kind::InvalidConfig,
            EncoderError::MelMismatch { .. }
            | EncoderError::TooManyFrames { .. }
            | EncoderError::HeterogeneousBatch(_)
            | EncoderError::DimMismatch { .. }
            | EncoderError::CheckpointMismatch(_) => Kind::DimensionMismatch,
            EncoderError::NotNormalized { .. } => Kind::Runtime,
            EncoderError::Autodiff(e) => e.class(),
            EncoderError::Format(e) => e.class(),
            EncoderError::Io { source, .. } => io_kind(source),
        }
    }
}

impl Classify for AugmentError {
    fn class(&self) -> Kind {
        match self {
            AugmentError::InvalidSpec(_) | AugmentError::OutOfRange { .. } => Kind::InvalidConfig,
            AugmentError::Dsp(e) => e.class(),
            _ => Kind::InvalidInput,
        }
    }
}

impl Classify for ManifestError {
    fn class(&self) -> Kind {
        match self {
            ManifestError::Io { source, .. } => io_kind(source),
            ManifestError::Parse { .. } => Kind::BadFormat,
            ManifestError::Empty(_) => Kind::InvalidInput,
        }
    }
}

impl Classify for TrainerError {
    fn class(&self) -> Kind {
        match self {
            TrainerError::InvalidConfig(_) | TrainerError::ResumeMismatch(_) => Kind::InvalidConfig,
            TrainerError::NonFiniteLoss { .. } => Kind::Runtime,
            TrainerError::NotEnoughTracks { .. } => Kind::InvalidInput,
            TrainerError::Encoder(e) => e.class(),
            TrainerError::Autodiff(e) => e.class(),
            TrainerError::Augment(e) => e.class(),
            TrainerError::Dsp(e) => e.class(),
            TrainerError::Manifest(e) => e.class(),
            TrainerError::Io { source, .. } => io_kind(source),
        }
    }
}

impl Classify for IndexError {
    fn class(&self) -> Kind {
        match self {
            IndexError::DimMismatch { .. } => Kind::DimensionMismatch,
            IndexError::Empty
            | IndexError::Duplicate { .. }
            | IndexError::InvalidOffset(_)
            | IndexError::InvalidK { .. } => Kind::InvalidInput,
            IndexError::Encoder(e) => e.class(),
            IndexError::Dsp(e) => e.class(),
            IndexError::Format(e) => e.class(),
            IndexError::Io { source, .. } => io_kind(source),
        }
    }
}

impl Classify for EvalError {
    fn class(&self) -> Kind {
        match self {
            EvalError::InvalidProtocol(_) => Kind::InvalidConfig,
            EvalError::MissingTrack(_) | EvalError::NoQueries => Kind::InvalidInput,
            EvalError::Report(_) => Kind::Runtime,
            EvalError::Index(e) => e.class(),
            EvalError::Encoder(e) => e.class(),
            EvalError::Augment(e) => e.class(),
            EvalError::Dsp(e) => e.class(),
            EvalError::Io { source, .. } => io_kind(source),
        }
    }
}

macro_rules! from_classified {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::new(e.class(), e.to_string())
            }
        })*
    };
}

from_classified!(
    io::Error,
    ConfigError,
    FormatError,
    DspError,
    EncoderError,
    AugmentError,
    ManifestError,
    TrainerError,
    IndexError,
    EvalError
);
