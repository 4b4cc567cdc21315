//! Plain-text dataset manifest (`key=value` per line) and delimited export.

use std::fmt::Write as _;
use std::io::Write;

use super::ingest::{ColumnKind, ColumnSpec};
use super::schema::{Dataset, FeatureValue};
use super::split::split_indices;
use super::synthetic::SyntheticConfig;
use crate::error::Result;
use crate::eval::auc;

/// Ordered key/value pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn parse(text: &str) -> Manifest {
        let mut m = Manifest::new();
        for line in text.lines() {
            if let Some((k, v)) = line.split_once('=') {
                m.set(k.trim(), v.trim());
            }
        }
        m
    }
}

/// Train-split CTR per category, scored on the test split, one field at a
/// time. Returns the best single-field test AUC (0.5 when undefined).
pub fn best_marginal_auc(data: &Dataset, split_seed: u64) -> f64 {
    let (train, _, test) = split_indices(data.len(), split_seed);
    let test_labels: Vec<u8> = test.iter().map(|&r| data.instances[r].label).collect();
    let mut best: f64 = 0.5;
    for (f, field) in data.schema.fields().iter().enumerate() {
        let Some(vocab) = &field.vocab else { continue };
        let mut counts = vec![(0u64, 0u64); vocab.len() + 1];
        for &r in &train {
            if let FeatureValue::Categorical(c) = data.instances[r].values[f] {
                let e = &mut counts[c as usize];
                e.0 += u64::from(data.instances[r].label);
                e.1 += 1;
            }
        }
        let scores: Vec<f64> = test
            .iter()
            .map(|&r| match data.instances[r].values[f] {
                FeatureValue::Categorical(c) => {
                    let (pos, n) = counts[c as usize];
                    (pos as f64 + 1.0) / (n as f64 + 2.0)
                }
                FeatureValue::Numerical(_) => 0.5,
            })
            .collect();
        if let Ok(a) = auc(&scores, &test_labels) {
            best = best.max(a);
        }
    }
    best
}

/// AUC of ranking by the stored generator logits, over all rows and over the
/// test split for `split_seed`.
pub fn bayes_auc(data: &Dataset, split_seed: u64) -> Option<(f64, f64)> {
    let logits = data.true_logits.as_ref()?;
    let all = auc(logits, &data.labels()).ok()?;
    let (_, _, test) = split_indices(data.len(), split_seed);
    let s: Vec<f64> = test.iter().map(|&r| logits[r]).collect();
    let y: Vec<u8> = test.iter().map(|&r| data.instances[r].label).collect();
    let t = auc(&s, &y).ok()?;
    Some((all, t))
}

pub fn dataset_manifest(data: &Dataset, synthetic: Option<&SyntheticConfig>, split_seed: u64) -> Manifest {
    let mut m = Manifest::new();
    m.set("instances", data.len());
    m.set("fields", data.schema.field_count());
    m.set("positive_rate", data.positive_rate());
    for field in data.schema.fields() {
        match &field.vocab {
            Some(v) => m.set(format!("field.{}", field.name), format!("categorical vocab={}", v.len())),
            None => m.set(format!("field.{}", field.name), "numerical"),
        }
    }
    if let Some(cfg) = synthetic {
        m.set("synthetic.fields", cfg.fields);
        m.set("synthetic.vocab_per_field", cfg.vocab_per_field);
        m.set("synthetic.latent_dim", cfg.latent_dim);
        m.set("synthetic.instances", cfg.instances);
        m.set("synthetic.scale", cfg.scale);
        m.set("synthetic.seed", cfg.seed);
    }
    m.set("split_seed", split_seed);
    if let Some((all, test)) = bayes_auc(data, split_seed) {
        m.set("bayes_auc", all);
        m.set("bayes_auc_test", test);
    }
    m.set("marginal_auc_test", best_marginal_auc(data, split_seed));
    m
}

/// Column specs matching [`write_delimited`] output.
pub fn export_columns(data: &Dataset) -> Vec<ColumnSpec> {
    let mut cols: Vec<ColumnSpec> = data
        .schema
        .fields()
        .iter()
        .map(|f| ColumnSpec {
            name: f.name.clone(),
            kind: if f.vocab.is_some() {
                ColumnKind::Categorical
            } else {
                ColumnKind::Numerical
            },
        })
        .collect();
    cols.push(ColumnSpec {
        name: "label".into(),
        kind: ColumnKind::Label,
    });
    if data.true_logits.is_some() {
        cols.push(ColumnSpec {
            name: "true_logit".into(),
            kind: ColumnKind::Logit,
        });
    }
    cols
}

/// Writes the dataset with decoded category strings; OOV cells are written
/// as `__oov__`.
pub fn write_delimited<W: Write>(data: &Dataset, out: W, delimiter: u8) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(out);
    let cols = export_columns(data);
    w.write_record(cols.iter().map(|c| c.name.as_str()))?;
    let mut record: Vec<String> = Vec::with_capacity(cols.len());
    for (i, inst) in data.instances.iter().enumerate() {
        record.clear();
        for (field, v) in data.schema.fields().iter().zip(&inst.values) {
            record.push(match v {
                FeatureValue::Categorical(c) => field
                    .vocab
                    .as_ref()
                    .and_then(|voc| voc.decode(*c))
                    .unwrap_or("__oov__")
                    .to_owned(),
                FeatureValue::Numerical(x) => x.to_string(),
            });
        }
        record.push(inst.label.to_string());
        if let Some(l) = &data.true_logits {
            record.push(l[i].to_string());
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_schema_and_encode, gen_synthetic, parse_column_specs, NumericPrep, RawTable};

    #[test]
    fn manifest_text_round_trip() {
        let mut m = Manifest::new();
        m.set("a", 1);
        m.set("b", "x y");
        m.set("a", 2);
        let back = Manifest::parse(&m.to_text());
        assert_eq!(back, m);
        assert_eq!(back.get_f64("a"), Some(2.0));
    }

    #[test]
    fn export_then_ingest_round_trips() {
        let cfg = SyntheticConfig {
            fields: 3,
            vocab_per_field: 5,
            instances: 300,
            ..SyntheticConfig::default()
        };
        let d = gen_synthetic(&cfg).unwrap();
        let mut buf = Vec::new();
        write_delimited(&d, &mut buf, b',').unwrap();
        let cols = export_columns(&d);
        let text = crate::data::format_column_specs(&cols);
        let raw = RawTable::read(buf.as_slice(), b',').unwrap();
        let (_, back) =
            build_schema_and_encode(&raw, &parse_column_specs(&text).unwrap(), None, NumericPrep::Raw).unwrap();
        assert_eq!(back.labels(), d.labels());
        assert_eq!(back.true_logits, d.true_logits);
        // vocabulary order follows first appearance, so compare decoded strings
        for (a, b) in d.instances.iter().zip(&back.instances) {
            for f in 0..3 {
                let dec = |ds: &Dataset, v: &FeatureValue| match v {
                    FeatureValue::Categorical(c) => ds.schema.fields()[f]
                        .vocab
                        .as_ref()
                        .unwrap()
                        .decode(*c)
                        .unwrap()
                        .to_owned(),
                    _ => unreachable!(),
                };
                assert_eq!(dec(&d, &a.values[f]), dec(&back, &b.values[f]));
            }
        }
    }

    #[test]
    fn synthetic_manifest_has_oracle_entries() {
        let cfg = SyntheticConfig {
            instances: 5000,
            ..SyntheticConfig::default()
        };
        let d = gen_synthetic(&cfg).unwrap();
        let m = dataset_manifest(&d, Some(&cfg), 1);
        let bayes = m.get_f64("bayes_auc_test").unwrap();
        let marginal = m.get_f64("marginal_auc_test").unwrap();
        assert!(marginal <= bayes);
        assert_eq!(m.get("instances"), Some("5000"));
    }
}
