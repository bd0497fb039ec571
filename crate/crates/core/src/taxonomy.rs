//! Shared label vocabulary: experimental conditions, diagnostic
//! granularities, and the per-step failure taxonomy.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Interface-representation condition. A = prose documentation, B = JSON
/// Schema, C = JSON Schema plus structured validation diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    A,
    B,
    C,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::A, Condition::B, Condition::C];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::A => "A",
            Condition::B => "B",
            Condition::C => "C",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Condition::A),
            "B" => Ok(Condition::B),
            "C" => Ok(Condition::C),
            other => Err(format!("unknown condition `{other}`, expected A, B, or C")),
        }
    }
}

/// Diagnostic granularity for condition C. C1 returns only the generic
/// sentence, C2 adds violation paths and expected categories, C3 adds
/// allowed values, found values, and corrective hints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Granularity {
    C1,
    C2,
    C3,
}

impl Granularity {
    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::C1 => "C1",
            Granularity::C2 => "C2",
            Granularity::C3 => "C3",
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "C1" => Ok(Granularity::C1),
            "C2" => Ok(Granularity::C2),
            "C3" => Ok(Granularity::C3),
            other => Err(format!("unknown granularity `{other}`, expected C1, C2, or C3")),
        }
    }
}

/// The one label every step receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepClass {
    ValidProductive,
    SemanticMisuse,
    InterfaceMisuse,
    ExecutionFailure,
    FinalAnswer,
}

impl StepClass {
    pub fn as_str(self) -> &'static str {
        match self {
            StepClass::ValidProductive => "valid_productive",
            StepClass::SemanticMisuse => "semantic_misuse",
            StepClass::InterfaceMisuse => "interface_misuse",
            StepClass::ExecutionFailure => "execution_failure",
            StepClass::FinalAnswer => "final_answer",
        }
    }
}

/// Interface-misuse subcategory; present iff the step class is
/// [`StepClass::InterfaceMisuse`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subcategory {
    WrongToolName,
    MalformedJson,
    MissingRequired,
    TypeMismatch,
    EnumViolation,
    ConstraintViolation,
}

impl Subcategory {
    pub const ALL: [Subcategory; 6] = [
        Subcategory::WrongToolName,
        Subcategory::MalformedJson,
        Subcategory::MissingRequired,
        Subcategory::TypeMismatch,
        Subcategory::EnumViolation,
        Subcategory::ConstraintViolation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Subcategory::WrongToolName => "wrong_tool_name",
            Subcategory::MalformedJson => "malformed_json",
            Subcategory::MissingRequired => "missing_required",
            Subcategory::TypeMismatch => "type_mismatch",
            Subcategory::EnumViolation => "enum_violation",
            Subcategory::ConstraintViolation => "constraint_violation",
        }
    }
}
