//! Versioned text checkpoint.
//!
//! ```text
//! masknet-checkpoint 1
//! header {"spec":{...},"schema":{...}}
//! param <name> <rows>x<cols>
//! <rows·cols space-separated values>
//! ...
//! end
//! ```
//!
//! Values use the shortest decimal form that parses back to the same `f64`,
//! so save/load is bit-exact.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::FeatureSchema;
use crate::error::{Error, Result};
use crate::model::{Model, ModelSpec};

const MAGIC: &str = "masknet-checkpoint";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    spec: ModelSpec,
    schema: FeatureSchema,
}

pub fn to_string(model: &Model) -> Result<String> {
    let header = Header {
        spec: model.spec().clone(),
        schema: (*model.schema).clone(),
    };
    let json = serde_json::to_string(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut s = format!("{MAGIC} {VERSION}\nheader {json}\n");
    for id in model.params.ids() {
        let info = model.params.info(id);
        let _ = writeln!(s, "param {} {}x{}", info.name, info.shape.0, info.shape.1);
        let mut first = true;
        for v in model.params.value(id) {
            if !first {
                s.push(' ');
            }
            first = false;
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
    s.push_str("end\n");
    Ok(s)
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(to_string(model)?.as_bytes())?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    read(std::fs::File::open(path)?)
}

fn bad(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Checkpoint(format!("line {line}: {msg}"))
}

/// Rebuilds the network from the header, then fills every parameter. Names,
/// shapes and order must match the rebuilt network exactly.
pub fn read<R: Read>(reader: R) -> Result<Model> {
    let mut lines = BufReader::new(reader).lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, l)) => Ok((i + 1, l?)),
            None => Err(Error::Checkpoint(format!("unexpected end of file, expected {what}"))),
        }
    };
    let (n, magic) = next("magic line")?;
    match magic.split_once(' ') {
        Some((MAGIC, v)) if v.trim() == VERSION.to_string() => {}
        Some((MAGIC, v)) => return Err(bad(n, format!("unsupported checkpoint version {v}"))),
        _ => return Err(bad(n, "not a masknet checkpoint")),
    }
    let (n, header) = next("header")?;
    let json = header.strip_prefix("header ").ok_or_else(|| bad(n, "missing header"))?;
    let header: Header = serde_json::from_str(json).map_err(|e| bad(n, e))?;
    let schema = Arc::new(FeatureSchema::new(header.schema.fields().to_vec())?);
    let mut model = Model::new(&header.spec, schema)?;

    let ids: Vec<_> = model.params.ids().collect();
    for id in ids {
        let (n, line) = next("param line")?;
        let info = model.params.info(id).clone();
        let mut parts = line.split(' ');
        let (Some("param"), Some(name), Some(shape), None) = (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(bad(n, format!("expected `param {} ..`, found {line:?}", info.name)));
        };
        if name != info.name {
            return Err(bad(n, format!("parameter {name} where the model expects {}", info.name)));
        }
        let expect = format!("{}x{}", info.shape.0, info.shape.1);
        if shape != expect {
            return Err(bad(n, format!("{name} has shape {shape}, model expects {expect}")));
        }
        let (n, data) = next("values")?;
        let dst = model.params.value_mut(id);
        let mut count = 0;
        for tok in data.split_ascii_whitespace() {
            if count >= dst.len() {
                return Err(bad(n, format!("too many values for {name}")));
            }
            dst[count] = tok.parse().map_err(|_| bad(n, format!("bad number {tok:?}")))?;
            count += 1;
        }
        if count != dst.len() {
            return Err(bad(n, format!("{name} has {count} values, expected {}", dst.len())));
        }
    }
    let (n, end) = next("end")?;
    if end.trim() != "end" {
        return Err(bad(n, format!("expected end, found {end:?} (extra parameters?)")));
    }
    Ok(model)
}
