//! Strategist/Implementor design optimization over generated programs.
//!
//! Each iteration curates a context from the design trace, asks the
//! strategist for a sampling strategy, has the implementor write a
//! candidate program, validates it (compile, run, correctness) with a bounded
//! number of correction rounds, times valid candidates and appends the result
//! to an append-only trace.

pub mod agent;
pub mod evaluator;
pub mod orchestrator;
pub mod problems;
pub mod trace;
pub mod validation;

pub use agent::{ChatMessage, Role, Strategy, StrategistDecision};
pub use orchestrator::{RunConfig, RunError};
pub use problems::ProblemKind;
pub use trace::{CuratedContext, DesignRecord, Trace, TraceError, TraceHeader};
pub use validation::{ValidationOutcome, ValidationStatus};
