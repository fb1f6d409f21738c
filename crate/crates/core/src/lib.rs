//! Rule-based classification of radiotherapy prescriptions and accreditation
//! of 3DCRT treatment plans.

pub mod dosimetry;
pub mod engine;
pub mod evaluation;
pub mod facts;
pub mod ontology;
pub mod rulelang;
pub mod rulepack;
pub mod value;

pub use value::{ConceptRef, Unit, Value, ValueKind};
