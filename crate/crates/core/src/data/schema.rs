use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Categorical,
    Numerical,
}

/// Dense category indexing `[0, n)`; index `n` is the out-of-vocabulary slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    values: Vec<String>,
    index: HashMap<String, u32>,
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(values: Vec<String>) -> Result<Self> {
        Vocabulary::from_values(values)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.values
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        Vocabulary {
            values: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn from_values(values: Vec<String>) -> Result<Self> {
        let mut v = Vocabulary::new();
        for s in values {
            if v.index.contains_key(&s) {
                return Err(Error::Schema(format!("duplicate vocabulary entry {s:?}")));
            }
            v.insert(&s);
        }
        Ok(v)
    }

    /// Returns the index of `value`, adding it if unseen.
    pub fn insert(&mut self, value: &str) -> u32 {
        if let Some(&i) = self.index.get(value) {
            return i;
        }
        let i = self.values.len() as u32;
        self.values.push(value.to_owned());
        self.index.insert(value.to_owned(), i);
        i
    }

    /// Index of `value`, or the OOV index when unseen.
    pub fn encode(&self, value: &str) -> u32 {
        self.index
            .get(value)
            .copied()
            .unwrap_or(self.values.len() as u32)
    }

    /// `None` for the OOV index or anything beyond it.
    pub fn decode(&self, index: u32) -> Option<&str> {
        self.values.get(index as usize).map(String::as_str)
    }

    /// Number of known categories `n` (excluding OOV).
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn oov_index(&self) -> u32 {
        self.values.len() as u32
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

/// How raw numerical values are transformed before embedding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NumericTransform {
    #[default]
    Raw,
    /// `sign(x)·ln(1 + |x|)`
    Log,
    /// `(x − mean) / std` with statistics from the training rows.
    Standardize { mean: f64, std: f64 },
}

impl NumericTransform {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            NumericTransform::Raw => x,
            NumericTransform::Log => x.signum() * x.abs().ln_1p(),
            NumericTransform::Standardize { mean, std } => (x - mean) / std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    pub kind: FieldKind,
    /// Present for categorical fields.
    pub vocab: Option<Vocabulary>,
    #[serde(default)]
    pub transform: NumericTransform,
}

impl Field {
    pub fn categorical(name: impl Into<String>, vocab: Vocabulary) -> Self {
        Field {
            name: name.into(),
            kind: FieldKind::Categorical,
            vocab: Some(vocab),
            transform: NumericTransform::Raw,
        }
    }

    pub fn numerical(name: impl Into<String>) -> Self {
        Field {
            name: name.into(),
            kind: FieldKind::Numerical,
            vocab: None,
            transform: NumericTransform::Raw,
        }
    }

    /// Number of embedding columns: `n + 1` for categorical, 1 for numerical.
    pub fn table_width(&self) -> usize {
        match &self.vocab {
            Some(v) => v.len() + 1,
            None => 1,
        }
    }
}

/// Ordered field definitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    fields: Vec<Field>,
}

impl FeatureSchema {
    pub fn new(fields: Vec<Field>) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::Schema("schema needs at least one field".into()));
        }
        for (i, f) in fields.iter().enumerate() {
            if fields[..i].iter().any(|g| g.name == f.name) {
                return Err(Error::Schema(format!("duplicate field name {:?}", f.name)));
            }
            if (f.kind == FieldKind::Categorical) != f.vocab.is_some() {
                return Err(Error::Schema(format!(
                    "field {:?}: vocabulary must be present exactly for categorical fields",
                    f.name
                )));
            }
        }
        Ok(FeatureSchema { fields })
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn field_count(&self) -> usize {
        self.fields.len()
    }

    /// Checks that `inst` has one well-typed, in-range value per field.
    pub fn validate(&self, inst: &EncodedInstance) -> Result<()> {
        if inst.values.len() != self.fields.len() {
            return Err(Error::Encoding(format!(
                "instance has {} values, schema has {} fields",
                inst.values.len(),
                self.fields.len()
            )));
        }
        for (field, value) in self.fields.iter().zip(&inst.values) {
            match (value, &field.vocab) {
                (FeatureValue::Categorical(idx), Some(vocab)) => {
                    if *idx > vocab.oov_index() {
                        return Err(Error::Encoding(format!(
                            "field {:?}: index {idx} outside [0, {}]",
                            field.name,
                            vocab.oov_index()
                        )));
                    }
                }
                (FeatureValue::Numerical(x), None) => {
                    if !x.is_finite() {
                        return Err(Error::Encoding(format!(
                            "field {:?}: non-finite value {x}",
                            field.name
                        )));
                    }
                }
                _ => {
                    return Err(Error::Encoding(format!(
                        "field {:?}: value kind does not match schema",
                        field.name
                    )))
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureValue {
    /// Index into the field vocabulary; stands for the one-hot vector.
    Categorical(u32),
    Numerical(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedInstance {
    pub values: Vec<FeatureValue>,
    pub label: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub schema: Arc<FeatureSchema>,
    pub instances: Vec<EncodedInstance>,
    /// Generator logits, when the data is synthetic.
    pub true_logits: Option<Vec<f64>>,
    pub split: Option<Split>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.instances.iter().map(|i| i.label).collect()
    }

    pub fn positive_rate(&self) -> f64 {
        if self.instances.is_empty() {
            return 0.0;
        }
        self.instances.iter().filter(|i| i.label == 1).count() as f64 / self.len() as f64
    }

    /// Sub-dataset made of the given rows, in the given order.
    pub fn subset(&self, rows: &[usize], split: Option<Split>) -> Dataset {
        Dataset {
            schema: Arc::clone(&self.schema),
            instances: rows.iter().map(|&r| self.instances[r].clone()).collect(),
            true_logits: self
                .true_logits
                .as_ref()
                .map(|t| rows.iter().map(|&r| t[r]).collect()),
            split,
        }
    }
}
