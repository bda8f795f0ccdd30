use std::fmt;

use kep_core::ErrorClass;
use serde::Serialize;

pub type Outcome<T> = Result<T, Failure>;

/// A command failure with its exit class.
#[derive(Debug)]
pub struct Failure {
    pub class: ErrorClass,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure { class: ErrorClass::Config, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Failure { class: ErrorClass::Data, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Failure { class: ErrorClass::Runtime, message: message.into() }
    }

    pub fn exit_code(&self) -> u8 {
        match self.class {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Runtime => 4,
        }
    }

    fn class_name(&self) -> &'static str {
        match self.class {
            ErrorClass::Config => "config",
            ErrorClass::Data => "data",
            ErrorClass::Runtime => "runtime",
        }
    }

    /// One-line JSON for stderr.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Body<'a> {
            error: &'a str,
            class: &'a str,
            exit_code: u8,
        }
        serde_json::to_string(&Body { error: &self.message, class: self.class_name(), exit_code: self.exit_code() })
            .unwrap_or_else(|_| format!("{{\"error\":{:?}}}", self.message))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<kep_core::Error> for Failure {
    fn from(e: kep_core::Error) -> Self {
        Failure { class: e.class(), message: e.to_string() }
    }
}
