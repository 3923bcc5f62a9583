use super::LlmError;
use crate::engine::TaskType;
use jsonschema::error::ValidationErrorKind;
use jsonschema::Validator;
use serde_json::Value;
use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemaKind {
    Decomposition,
    Task(TaskType),
}

const DECOMPOSITION: &str = include_str!("../../assets/schemas/decomposition.json");
const CREATE: &str = include_str!("../../assets/schemas/create.json");
const ANIMATE: &str = include_str!("../../assets/schemas/animate.json");
const FUSE: &str = include_str!("../../assets/schemas/fuse.json");
const CONVERSE: &str = include_str!("../../assets/schemas/converse.json");

struct Compiled {
    document: Value,
    validator: Validator,
}

fn compiled(kind: SchemaKind) -> &'static Compiled {
    static CELLS: [OnceLock<Compiled>; 5] = [const { OnceLock::new() }; 5];
    let (index, text) = match kind {
        SchemaKind::Decomposition => (0, DECOMPOSITION),
        SchemaKind::Task(TaskType::Create) => (1, CREATE),
        SchemaKind::Task(TaskType::Animate) => (2, ANIMATE),
        SchemaKind::Task(TaskType::Fuse) => (3, FUSE),
        SchemaKind::Task(TaskType::Converse) => (4, CONVERSE),
    };
    CELLS[index].get_or_init(|| {
        let document: Value = serde_json::from_str(text).expect("bundled schema is valid JSON");
        let validator = jsonschema::validator_for(&document).expect("bundled schema compiles");
        Compiled { document, validator }
    })
}

pub fn schema_for(kind: SchemaKind) -> &'static Value {
    &compiled(kind).document
}

/// Checks `instance`; the error names the first offending JSON pointer. A
/// missing property is reported at the path it should have had.
pub fn validate(kind: SchemaKind, instance: &Value) -> Result<(), LlmError> {
    let compiled = compiled(kind);
    let Some(error) = compiled.validator.iter_errors(instance).next() else {
        return Ok(());
    };
    let mut path = error.instance_path.as_str().to_string();
    if let ValidationErrorKind::Required { property } = &error.kind {
        if let Some(name) = property.as_str() {
            path.push('/');
            path.push_str(name);
        }
    }
    Err(LlmError::SchemaViolation { path, message: error.to_string() })
}
