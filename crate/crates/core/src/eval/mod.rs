//! Retrieval evaluation: excerpt selection, distortion sweeps, hit rates
//! averaged over repeated runs, and report output.

mod protocol;
mod report;
mod run;

pub use protocol::{select_excerpts, DistortionCase, DistortionKind, EvalProtocol, MissingTrackPolicy, SHIFT_REFERENCE};
pub use report::{emit_report, parse_csv, summary, to_csv, EvalReport, Granularity, ReportRow, ShiftCurve};
pub use run::{distort_query, hits_at, run_eval, shift_similarity_curve, EvalInputs};

use thiserror::Error;

use crate::augment::AugmentError;
use crate::dsp::DspError;
use crate::encoder::EncoderError;
use crate::index::IndexError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),
    #[error("query track {0:?} is not in the database")]
    MissingTrack(String),
    #[error("no track is long enough to query")]
    NoQueries,
    #[error("report: {0}")]
    Report(String),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[cfg(test)]
mod tests;
