//! Delimited-text ingestion.
//!
//! Input is a header row followed by data rows. A sidecar schema file lists
//! one column per line as `name,kind` where `kind` is one of
//! `categorical`, `numerical`, `label`, `logit` (generator logit, kept for
//! oracle evaluation, never used as a feature) or `ignore`. Blank lines and
//! lines starting with `#` are skipped.

use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use super::schema::{
    Dataset, EncodedInstance, FeatureSchema, FeatureValue, Field, FieldKind, NumericTransform,
    Vocabulary,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Categorical,
    Numerical,
    Label,
    Logit,
    Ignore,
}

impl ColumnKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ColumnKind::Categorical => "categorical",
            ColumnKind::Numerical => "numerical",
            ColumnKind::Label => "label",
            ColumnKind::Logit => "logit",
            ColumnKind::Ignore => "ignore",
        }
    }
}

impl std::str::FromStr for ColumnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "categorical" => ColumnKind::Categorical,
            "numerical" => ColumnKind::Numerical,
            "label" => ColumnKind::Label,
            "logit" => ColumnKind::Logit,
            "ignore" => ColumnKind::Ignore,
            other => return Err(Error::Schema(format!("unknown column kind {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

/// Parses the sidecar schema text.
pub fn parse_column_specs(text: &str) -> Result<Vec<ColumnSpec>> {
    let mut cols = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, kind) = line.split_once(',').ok_or_else(|| {
            Error::Schema(format!("schema line {}: expected `name,kind`", lineno + 1))
        })?;
        cols.push(ColumnSpec {
            name: name.trim().to_owned(),
            kind: kind.trim().parse()?,
        });
    }
    let labels = cols.iter().filter(|c| c.kind == ColumnKind::Label).count();
    if labels != 1 {
        return Err(Error::Schema(format!(
            "schema must declare exactly one label column, found {labels}"
        )));
    }
    Ok(cols)
}

pub fn format_column_specs(cols: &[ColumnSpec]) -> String {
    cols.iter()
        .map(|c| format!("{},{}\n", c.name, c.kind.as_str()))
        .collect()
}

/// Unparsed rows, already checked for the declared column count.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn read<R: Read>(reader: R, delimiter: u8) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if header.is_empty() || header.iter().all(String::is_empty) {
            return Err(Error::Ingest {
                row: 0,
                msg: "missing header row".into(),
            });
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Ingest {
                row: i + 1,
                msg: e.to_string(),
            })?;
            if rec.len() != header.len() {
                return Err(Error::Ingest {
                    row: i + 1,
                    msg: format!("expected {} columns, found {}", header.len(), rec.len()),
                });
            }
            rows.push(rec.iter().map(str::to_owned).collect());
        }
        Ok(RawTable { header, rows })
    }

    pub fn read_path(path: &Path, delimiter: u8) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(file), delimiter)
    }
}

/// Numerical preprocessing applied at encode time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NumericPrep {
    #[default]
    Raw,
    Log,
    Standardize,
}

/// Builds the schema from `train_rows` (all rows when `None`) and encodes
/// every row of `raw` against it. Categories not seen in the training rows map
/// to the field's OOV index. Empty numerical cells encode as 0.
pub fn build_schema_and_encode(
    raw: &RawTable,
    columns: &[ColumnSpec],
    train_rows: Option<&[usize]>,
    prep: NumericPrep,
) -> Result<(Arc<FeatureSchema>, Dataset)> {
    // map declared columns onto header positions
    if columns.len() != raw.header.len() {
        return Err(Error::Schema(format!(
            "schema declares {} columns, data header has {}",
            columns.len(),
            raw.header.len()
        )));
    }
    let mut positions = Vec::with_capacity(columns.len());
    for c in columns {
        let pos = raw
            .header
            .iter()
            .position(|h| h == &c.name)
            .ok_or_else(|| Error::Schema(format!("column {:?} not in data header", c.name)))?;
        positions.push(pos);
    }
    let label_pos = columns
        .iter()
        .zip(&positions)
        .find(|(c, _)| c.kind == ColumnKind::Label)
        .map(|(_, &p)| p)
        .ok_or_else(|| Error::Schema("no label column".into()))?;
    let logit_pos = columns
        .iter()
        .zip(&positions)
        .find(|(c, _)| c.kind == ColumnKind::Logit)
        .map(|(_, &p)| p);
    let feature_cols: Vec<(&ColumnSpec, usize)> = columns
        .iter()
        .zip(positions.iter().copied())
        .filter(|(c, _)| matches!(c.kind, ColumnKind::Categorical | ColumnKind::Numerical))
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::Schema("no feature columns".into()));
    }

    let all: Vec<usize>;
    let train_rows = match train_rows {
        Some(r) => r,
        None => {
            all = (0..raw.rows.len()).collect();
            &all
        }
    };

    let parse_num = |row: usize, cell: &str| -> Result<f64> {
        if cell.is_empty() {
            return Ok(0.0);
        }
        let v: f64 = cell.trim().parse().map_err(|_| Error::Ingest {
            row: row + 1,
            msg: format!("cannot parse {cell:?} as a number"),
        })?;
        if !v.is_finite() {
            return Err(Error::Ingest {
                row: row + 1,
                msg: format!("non-finite number {cell:?}"),
            });
        }
        Ok(v)
    };

    let mut fields = Vec::with_capacity(feature_cols.len());
    for &(spec, pos) in &feature_cols {
        match spec.kind {
            ColumnKind::Categorical => {
                let mut vocab = Vocabulary::new();
                for &r in train_rows {
                    vocab.insert(&raw.rows[r][pos]);
                }
                fields.push(Field::categorical(spec.name.clone(), vocab));
            }
            ColumnKind::Numerical => {
                let mut field = Field::numerical(spec.name.clone());
                field.transform = match prep {
                    NumericPrep::Raw => NumericTransform::Raw,
                    NumericPrep::Log => NumericTransform::Log,
                    NumericPrep::Standardize => {
                        let vals = train_rows
                            .iter()
                            .map(|&r| parse_num(r, &raw.rows[r][pos]))
                            .collect::<Result<Vec<_>>>()?;
                        let n = vals.len().max(1) as f64;
                        let mean = vals.iter().sum::<f64>() / n;
                        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
                        NumericTransform::Standardize { mean, std }
                    }
                };
                fields.push(field);
            }
            _ => unreachable!(),
        }
    }
    let schema = Arc::new(FeatureSchema::new(fields)?);

    let mut instances = Vec::with_capacity(raw.rows.len());
    let mut logits = logit_pos.map(|_| Vec::with_capacity(raw.rows.len()));
    for (r, row) in raw.rows.iter().enumerate() {
        let label = match row[label_pos].trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::Schema(format!(
                    "row {}: label {other:?} is not 0 or 1",
                    r + 1
                )))
            }
        };
        let mut values = Vec::with_capacity(feature_cols.len());
        for (field, &(_, pos)) in schema.fields().iter().zip(&feature_cols) {
            let cell = &row[pos];
            values.push(match field.kind {
                FieldKind::Categorical => {
                    FeatureValue::Categorical(field.vocab.as_ref().unwrap().encode(cell))
                }
                FieldKind::Numerical => FeatureValue::Numerical(field.transform.apply(parse_num(r, cell)?)),
            });
        }
        if let (Some(l), Some(pos)) = (logits.as_mut(), logit_pos) {
            l.push(parse_num(r, &row[pos])?);
        }
        instances.push(EncodedInstance { values, label });
    }

    let dataset = Dataset {
        schema: Arc::clone(&schema),
        instances,
        true_logits: logits,
        split: None,
    };
    Ok((schema, dataset))
}

/// Encodes `raw` against an existing schema (e.g. one restored from a
/// checkpoint). Columns are matched by field name.
pub fn encode_with_schema(
    raw: &RawTable,
    columns: &[ColumnSpec],
    schema: &Arc<FeatureSchema>,
) -> Result<Dataset> {
    let find = |name: &str| {
        raw.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column {name:?} not in data header")))
    };
    let label_name = &columns
        .iter()
        .find(|c| c.kind == ColumnKind::Label)
        .ok_or_else(|| Error::Schema("no label column".into()))?
        .name;
    let label_pos = find(label_name)?;
    let logit_pos = columns
        .iter()
        .find(|c| c.kind == ColumnKind::Logit)
        .map(|c| find(&c.name))
        .transpose()?;
    let field_pos = schema
        .fields()
        .iter()
        .map(|f| find(&f.name))
        .collect::<Result<Vec<_>>>()?;

    let mut instances = Vec::with_capacity(raw.rows.len());
    let mut logits = logit_pos.map(|_| Vec::new());
    for (r, row) in raw.rows.iter().enumerate() {
        let label = match row[label_pos].trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::Schema(format!(
                    "row {}: label {other:?} is not 0 or 1",
                    r + 1
                )))
            }
        };
        let mut values = Vec::with_capacity(field_pos.len());
        for (field, &pos) in schema.fields().iter().zip(&field_pos) {
            let cell = &row[pos];
            values.push(match &field.vocab {
                Some(v) => FeatureValue::Categorical(v.encode(cell)),
                None => {
                    let x = if cell.is_empty() {
                        0.0
                    } else {
                        cell.trim().parse::<f64>().map_err(|_| Error::Ingest {
                            row: r + 1,
                            msg: format!("cannot parse {cell:?} as a number"),
                        })?
                    };
                    FeatureValue::Numerical(field.transform.apply(x))
                }
            });
        }
        if let (Some(l), Some(pos)) = (logits.as_mut(), logit_pos) {
            l.push(row[pos].trim().parse::<f64>().map_err(|_| Error::Ingest {
                row: r + 1,
                msg: "bad logit".into(),
            })?);
        }
        instances.push(EncodedInstance { values, label });
    }
    Ok(Dataset {
        schema: Arc::clone(schema),
        instances,
        true_logits: logits,
        split: None,
    })
}
