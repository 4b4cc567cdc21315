//! Plain-loop forward re-derivation that reads parameters by name and
//! shares no code with the library's batched path.

#![allow(dead_code)]

use std::sync::Arc;

use masknet::checks::perturb_zero_params;
use masknet::data::{EncodedInstance, FeatureSchema, FeatureValue, Field, Vocabulary};
use masknet::model::{Model, ModelSpec, Topology};
use masknet::numeric::{ParamStore, Rng};

pub struct Oracle<'a> {
    pub p: &'a ParamStore,
    pub schema: &'a FeatureSchema,
    pub k: usize,
    pub eps: f64,
}

impl Oracle<'_> {
    pub fn get(&self, name: &str) -> &[f64] {
        let id = self.p.find(name).unwrap_or_else(|| panic!("no parameter {name}"));
        self.p.value(id)
    }

    pub fn has(&self, name: &str) -> bool {
        self.p.find(name).is_some()
    }

    pub fn v_emb(&self, inst: &EncodedInstance) -> Vec<f64> {
        let mut v = Vec::new();
        for (field, value) in self.schema.fields().iter().zip(&inst.values) {
            let table = self.get(&format!("emb.{}", field.name));
            match *value {
                FeatureValue::Categorical(c) => {
                    let c = c as usize;
                    v.extend_from_slice(&table[c * self.k..(c + 1) * self.k]);
                }
                FeatureValue::Numerical(x) => v.extend(table.iter().map(|t| t * x)),
            }
        }
        v
    }

    pub fn ln(&self, x: &[f64], g: &[f64], b: &[f64]) -> Vec<f64> {
        let n = x.len() as f64;
        let mu = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
        let d = (var + self.eps).sqrt();
        (0..x.len()).map(|i| g[i] * (x[i] - mu) / d + b[i]).collect()
    }

    /// `W·x (+ b)` with `W` stored row-major as `out × in`.
    pub fn affine(&self, w: &str, b: Option<&str>, x: &[f64]) -> Vec<f64> {
        let w = self.get(w);
        let out = w.len() / x.len();
        (0..out)
            .map(|i| {
                let s: f64 = (0..x.len()).map(|j| w[i * x.len() + j] * x[j]).sum();
                s + b.map_or(0.0, |b| self.get(b)[i])
            })
            .collect()
    }

    pub fn relu(x: Vec<f64>) -> Vec<f64> {
        x.into_iter().map(|v| v.max(0.0)).collect()
    }

    /// `W_d2 · ReLU(W_d1 · v + β_d1) + β_d2`
    pub fn mask(&self, block: usize, v: &[f64]) -> Vec<f64> {
        let p = format!("block{block}.mask");
        let h = Self::relu(self.affine(&format!("{p}.agg.weight"), Some(&format!("{p}.agg.bias")), v));
        self.affine(&format!("{p}.proj.weight"), Some(&format!("{p}.proj.bias")), &h)
    }

    pub fn ln_emb(&self, v: &[f64]) -> Vec<f64> {
        let mut out = Vec::new();
        for f in 0..v.len() / self.k {
            let s = &v[f * self.k..(f + 1) * self.k];
            out.extend(self.ln(
                s,
                self.get(&format!("ln_emb.f{f}.gain")),
                self.get(&format!("ln_emb.f{f}.bias")),
            ));
        }
        out
    }

    /// `ReLU(LN(W_i · masked))`
    pub fn ffn(&self, block: usize, masked: &[f64]) -> Vec<f64> {
        let p = format!("block{block}.ffn");
        let wx = self.affine(&format!("{p}.weight"), None, masked);
        Self::relu(self.ln(&wx, self.get(&format!("{p}.ln.gain")), self.get(&format!("{p}.ln.bias"))))
    }

    pub fn block_on_embedding(&self, block: usize, v: &[f64]) -> Vec<f64> {
        let m = self.mask(block, v);
        let e = self.ln_emb(v);
        let masked: Vec<f64> = m.iter().zip(&e).map(|(a, b)| a * b).collect();
        self.ffn(block, &masked)
    }

    pub fn block_on_block(&self, block: usize, v: &[f64], prev: &[f64]) -> Vec<f64> {
        let m = self.mask(block, v);
        let masked: Vec<f64> = m.iter().zip(prev).map(|(a, b)| a * b).collect();
        self.ffn(block, &masked)
    }

    pub fn head(&self, x: &[f64]) -> f64 {
        self.affine("head.weight", Some("head.bias"), x)[0]
    }

    pub fn serial(&self, inst: &EncodedInstance, blocks: usize) -> (Vec<Vec<f64>>, f64) {
        let v = self.v_emb(inst);
        let mut outs = vec![self.block_on_embedding(0, &v)];
        for i in 1..blocks {
            let next = self.block_on_block(i, &v, outs.last().unwrap());
            outs.push(next);
        }
        let logit = self.head(outs.last().unwrap());
        (outs, logit)
    }

    pub fn parallel(&self, inst: &EncodedInstance, blocks: usize) -> (Vec<Vec<f64>>, f64) {
        let v = self.v_emb(inst);
        let outs: Vec<Vec<f64>> = (0..blocks).map(|i| self.block_on_embedding(i, &v)).collect();
        let mut h: Vec<f64> = outs.concat();
        let mut l = 0;
        while self.has(&format!("top{l}.weight")) {
            h = Self::relu(self.affine(&format!("top{l}.weight"), Some(&format!("top{l}.bias")), &h));
            l += 1;
        }
        (outs, self.head(&h))
    }
}

pub fn tiny_schema() -> Arc<FeatureSchema> {
    let vocab = || Vocabulary::from_values(vec!["a".into(), "b".into(), "c".into()]).unwrap();
    Arc::new(FeatureSchema::new(vec![Field::categorical("u", vocab()), Field::categorical("v", vocab())]).unwrap())
}

pub fn instances(n: usize) -> Vec<EncodedInstance> {
    let mut rng = Rng::new(77);
    (0..n)
        .map(|_| EncodedInstance {
            values: vec![
                FeatureValue::Categorical(rng.below(4) as u32),
                FeatureValue::Categorical(rng.below(4) as u32),
            ],
            label: 0,
        })
        .collect()
}

/// f=2, k=2, q=3, r=1.
pub fn model(topology: Topology, blocks: usize, top: Vec<usize>) -> Model {
    let spec = ModelSpec {
        topology,
        block_widths: vec![3; blocks],
        top_widths: top,
        embedding_dim: 2,
        reduction_ratio: 1,
        seed: 21,
        ..ModelSpec::default()
    };
    let mut m = Model::new(&spec, tiny_schema()).unwrap();
    perturb_zero_params(&mut m.params, 5);
    m
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(1.0)
}

/// Largest `|a − b| / max(|a|, 1)` over block outputs and logits.
pub fn oracle_gap(m: &Model, oracle_fn: impl Fn(&Oracle, &EncodedInstance) -> (Vec<Vec<f64>>, f64)) -> f64 {
    let oracle = Oracle {
        p: &m.params,
        schema: &m.schema,
        k: 2,
        eps: m.spec().ln_eps,
    };
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(1.0);
    let mut gap: f64 = 0.0;
    for inst in &instances(25) {
        let cache = m.forward(&[inst]).unwrap();
        let (blocks, logit) = oracle_fn(&oracle, inst);
        for (i, expect) in blocks.iter().enumerate() {
            let got = cache.blocks[i].output().as_slice();
            assert_eq!(got.len(), expect.len());
            gap = got.iter().zip(expect).fold(gap, |g, (a, b)| g.max(rel(*a, *b)));
        }
        gap = gap.max(rel(cache.logits[0], logit));
    }
    gap
}

pub fn assert_matches(m: &Model, oracle_fn: impl Fn(&Oracle, &EncodedInstance) -> (Vec<Vec<f64>>, f64)) {
    let gap = oracle_gap(m, oracle_fn);
    assert!(gap <= 1e-12, "oracle gap {gap:e}");
}
