//! Per-field embedding tables.
//!
//! A categorical field with `n` categories owns an `(n + 1) × k` table (row `c`
//! is column `c` of the embedding matrix, i.e. `W_e · onehot(c)`; row `n` is
//! the OOV slot). A numerical field owns one `k`-vector scaled by the value.
//! Field embeddings are concatenated in schema order into a vector of width
//! `f·k`.

use crate::data::{EncodedInstance, FeatureSchema, FeatureValue};
use crate::error::{Error, Result};
use crate::numeric::{normal_init, Grads, Matrix, ParamId, ParamStore, Rng, Values};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    tables: Vec<ParamId>,
    /// Rows per table; 1 for numerical fields.
    widths: Vec<usize>,
    numerical: Vec<bool>,
    dim: usize,
}

impl EmbeddingTable {
    /// Registers one table per schema field, initialised `N(0, 1/k)`.
    pub fn new(schema: &FeatureSchema, dim: usize, store: &mut ParamStore, rng: &mut Rng, prefix: &str) -> Self {
        let std = 1.0 / (dim as f64).sqrt();
        Self::with_init(schema, dim, store, prefix, |n| normal_init(rng, n, std))
    }

    pub fn with_init(
        schema: &FeatureSchema,
        dim: usize,
        store: &mut ParamStore,
        prefix: &str,
        mut init: impl FnMut(usize) -> Vec<f64>,
    ) -> Self {
        let mut tables = Vec::new();
        let mut widths = Vec::new();
        let mut numerical = Vec::new();
        for field in schema.fields() {
            let rows = field.table_width();
            tables.push(store.add(format!("{prefix}.{}", field.name), (rows, dim), init(rows * dim)));
            widths.push(rows);
            numerical.push(field.vocab.is_none());
        }
        EmbeddingTable {
            tables,
            widths,
            numerical,
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn field_count(&self) -> usize {
        self.tables.len()
    }

    /// Width of the concatenated embedding, `f·k`.
    pub fn output_dim(&self) -> usize {
        self.tables.len() * self.dim
    }

    pub fn table(&self, field: usize) -> ParamId {
        self.tables[field]
    }

    pub fn param_count(&self) -> usize {
        self.widths.iter().sum::<usize>() * self.dim
    }

    fn check(&self, inst: &EncodedInstance) -> Result<()> {
        if inst.values.len() != self.tables.len() {
            return Err(Error::Encoding(format!(
                "instance has {} fields, embedding expects {}",
                inst.values.len(),
                self.tables.len()
            )));
        }
        for (f, v) in inst.values.iter().enumerate() {
            match (*v, self.numerical[f]) {
                (FeatureValue::Categorical(c), false) if (c as usize) < self.widths[f] => {}
                (FeatureValue::Numerical(_), true) => {}
                (FeatureValue::Categorical(c), false) => {
                    return Err(Error::Encoding(format!(
                        "field {f}: index {c} outside vocabulary range [0, {})",
                        self.widths[f]
                    )))
                }
                _ => return Err(Error::Encoding(format!("field {f}: value kind mismatch"))),
            }
        }
        Ok(())
    }

    /// Embeds a single instance.
    pub fn embed(&self, values: Values<'_>, inst: &EncodedInstance) -> Result<Vec<f64>> {
        Ok(self.forward(values, &[inst])?.into_vec())
    }

    /// One row of `f·k` per instance.
    pub fn forward(&self, values: Values<'_>, batch: &[&EncodedInstance]) -> Result<Matrix> {
        let k = self.dim;
        let mut out = Matrix::zeros(batch.len(), self.output_dim());
        for (b, inst) in batch.iter().enumerate() {
            self.check(inst)?;
            let row = out.row_mut(b);
            for (f, v) in inst.values.iter().enumerate() {
                let table = values.get(self.tables[f]);
                let dst = &mut row[f * k..(f + 1) * k];
                match *v {
                    FeatureValue::Categorical(c) => {
                        let c = c as usize;
                        dst.copy_from_slice(&table[c * k..(c + 1) * k]);
                    }
                    FeatureValue::Numerical(x) => {
                        for (d, t) in dst.iter_mut().zip(table) {
                            *d = t * x;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Scatters `d_emb` into the rows the batch touched. Other rows are left
    /// untouched.
    pub fn backward(&self, grads: &mut Grads<'_>, batch: &[&EncodedInstance], d_emb: &Matrix) {
        let k = self.dim;
        for (b, inst) in batch.iter().enumerate() {
            let row = d_emb.row(b);
            for (f, v) in inst.values.iter().enumerate() {
                let g = grads.get_mut(self.tables[f]);
                let src = &row[f * k..(f + 1) * k];
                match *v {
                    FeatureValue::Categorical(c) => {
                        let c = c as usize;
                        for (gi, s) in g[c * k..(c + 1) * k].iter_mut().zip(src) {
                            *gi += s;
                        }
                    }
                    FeatureValue::Numerical(x) => {
                        for (gi, s) in g.iter_mut().zip(src) {
                            *gi += s * x;
                        }
                    }
                }
            }
        }
    }
}
