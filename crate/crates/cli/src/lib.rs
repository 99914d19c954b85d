//! Command-line pipeline and HTTP inspection server for GCBM models.

pub mod args;
pub mod commands;
pub mod server;
pub mod workspace;

use gcbm::Error;

/// Process exit code for a failed command: 2 for usage or input errors,
/// 1 for everything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<clap::Error>().is_some() {
        return 2;
    }
    match err.downcast_ref::<Error>() {
        Some(e) if is_input_error(e) => 2,
        _ => 1,
    }
}

pub fn is_input_error(err: &Error) -> bool {
    matches!(
        err,
        Error::MissingFile(_)
            | Error::Parse { .. }
            | Error::InvalidGraph { .. }
            | Error::InvalidDataset(_)
            | Error::Stratification { .. }
            | Error::VocabularyMiss { .. }
            | Error::Shape(_)
            | Error::Config(_)
            | Error::EmptyTargetSet
            | Error::NearZeroActivation { .. }
            | Error::ConceptIndex { .. }
            | Error::ArtifactMismatch(_)
            | Error::Json(_)
    )
}
