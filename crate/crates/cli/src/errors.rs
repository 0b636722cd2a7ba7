//! Machine-parsable failure codes.
//!
//! Every failure ends the process with one stderr line
//! `ERROR code=<CODE> msg=<message>` and a non-zero exit status.

use std::fmt;

use acuity_core::Error as CoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Code {
    Config,
    Schema,
    MissingArtifact,
    HashMismatch,
    SplitMismatch,
    InvalidInput,
    Training,
    Io,
    Internal,
}

impl Code {
    pub fn as_str(self) -> &'static str {
        match self {
            Code::Config => "CONFIG",
            Code::Schema => "SCHEMA_MISMATCH",
            Code::MissingArtifact => "MISSING_ARTIFACT",
            Code::HashMismatch => "HASH_MISMATCH",
            Code::SplitMismatch => "SPLIT_MISMATCH",
            Code::InvalidInput => "INVALID_INPUT",
            Code::Training => "TRAINING",
            Code::Io => "IO",
            Code::Internal => "INTERNAL",
        }
    }

    /// Process exit status for the code.
    pub fn exit_status(self) -> i32 {
        match self {
            Code::Config => 2,
            Code::Schema => 3,
            Code::MissingArtifact => 4,
            Code::HashMismatch | Code::SplitMismatch => 5,
            Code::InvalidInput | Code::Training => 6,
            Code::Io => 7,
            Code::Internal => 1,
        }
    }
}

#[derive(Debug)]
pub struct CodedError {
    pub code: Code,
    pub msg: String,
}

impl fmt::Display for CodedError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl std::error::Error for CodedError {}

pub fn coded(code: Code, msg: impl Into<String>) -> anyhow::Error {
    CodedError { code, msg: msg.into() }.into()
}

fn core_code(e: &CoreError) -> Code {
    match e {
        CoreError::Config(_) => Code::Config,
        CoreError::Schema(_) | CoreError::Checkpoint(_) | CoreError::Json(_) | CoreError::Csv(_) => Code::Schema,
        CoreError::Io(_) => Code::Io,
        CoreError::NoCriticalPositives(_) | CoreError::EmptySplit(_) | CoreError::EmptyTrainingSet => Code::Training,
        _ => Code::InvalidInput,
    }
}

/// The outermost explicit code in the chain, else one inferred from the root cause.
pub fn code_of(err: &anyhow::Error) -> Code {
    for cause in err.chain() {
        if let Some(c) = cause.downcast_ref::<CodedError>() {
            return c.code;
        }
        if let Some(c) = cause.downcast_ref::<CoreError>() {
            return core_code(c);
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return Code::Io;
        }
        if cause.downcast_ref::<toml::de::Error>().is_some() {
            return Code::Config;
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return Code::Schema;
        }
    }
    Code::Internal
}

/// The single stderr line for a failure.
pub fn render(err: &anyhow::Error) -> String {
    let msg: Vec<String> = err.chain().map(|c| c.to_string()).collect();
    let msg = msg.join(": ").split_whitespace().collect::<Vec<_>>().join(" ");
    format!("ERROR code={} msg={}", code_of(err).as_str(), msg)
}
