//! Synthetic CTR data with purely multiplicative field interactions.
//!
//! Every category of every field owns a latent vector `v ∈ R^d` with i.i.d.
//! `N(0, 1/d)` coordinates. An instance draws one category per field
//! uniformly and gets the logit `s = scale · Σ_{i<j} ⟨v_i, v_j⟩`; its label is
//! `Bernoulli(σ(s))`. Latents have zero mean, so single fields carry almost no
//! marginal signal and a model has to represent the pairwise dot products.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::schema::{Dataset, EncodedInstance, FeatureSchema, FeatureValue, Field, Vocabulary};
use crate::error::{Error, Result};
use crate::numeric::{sigmoid, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub fields: usize,
    pub vocab_per_field: usize,
    pub latent_dim: usize,
    pub instances: usize,
    pub scale: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            fields: 8,
            vocab_per_field: 50,
            latent_dim: 4,
            instances: 60_000,
            scale: 4.0,
            seed: 1,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fields < 2 {
            return Err(Error::Config("synthetic data needs at least 2 fields".into()));
        }
        if self.vocab_per_field < 1 || self.latent_dim < 1 || self.instances < 1 {
            return Err(Error::Config(
                "vocab_per_field, latent_dim and instances must be at least 1".into(),
            ));
        }
        if !self.scale.is_finite() || self.scale < 0.0 {
            return Err(Error::Config("scale must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// The generator's latent table, kept so tests can recompute logits.
#[derive(Debug, Clone)]
pub struct Latents {
    /// `[field][category]` → latent vector.
    pub vectors: Vec<Vec<Vec<f64>>>,
}

impl Latents {
    pub fn logit(&self, categories: &[u32], scale: f64) -> f64 {
        let mut s = 0.0;
        for i in 0..categories.len() {
            let vi = &self.vectors[i][categories[i] as usize];
            for j in i + 1..categories.len() {
                let vj = &self.vectors[j][categories[j] as usize];
                s += vi.iter().zip(vj).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        scale * s
    }
}

pub fn gen_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    gen_synthetic_with_latents(cfg).map(|(d, _)| d)
}

pub fn gen_synthetic_with_latents(cfg: &SyntheticConfig) -> Result<(Dataset, Latents)> {
    cfg.validate()?;
    let mut latent_rng = Rng::derived(cfg.seed, 1);
    let std = 1.0 / (cfg.latent_dim as f64).sqrt();
    let vectors: Vec<Vec<Vec<f64>>> = (0..cfg.fields)
        .map(|_| {
            (0..cfg.vocab_per_field)
                .map(|_| {
                    (0..cfg.latent_dim)
                        .map(|_| {
                            let z = latent_rng.normal() * std;
                            if cfg.scale == 0.0 {
                                0.0
                            } else {
                                z
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let latents = Latents { vectors };

    let fields = (0..cfg.fields)
        .map(|f| {
            let values = (0..cfg.vocab_per_field).map(|c| format!("c{c}")).collect();
            Ok(Field::categorical(format!("f{f}"), Vocabulary::from_values(values)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let schema = Arc::new(FeatureSchema::new(fields)?);

    let mut rng = Rng::derived(cfg.seed, 2);
    let mut instances = Vec::with_capacity(cfg.instances);
    let mut logits = Vec::with_capacity(cfg.instances);
    let mut cats = vec![0u32; cfg.fields];
    for _ in 0..cfg.instances {
        for c in cats.iter_mut() {
            *c = rng.below(cfg.vocab_per_field) as u32;
        }
        let s = latents.logit(&cats, cfg.scale);
        let label = u8::from(rng.bernoulli(sigmoid(s)));
        instances.push(EncodedInstance {
            values: cats.iter().map(|&c| FeatureValue::Categorical(c)).collect(),
            label,
        });
        logits.push(s);
    }
    Ok((
        Dataset {
            schema,
            instances,
            true_logits: Some(logits),
            split: None,
        },
        latents,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(scale: f64, n: usize) -> SyntheticConfig {
        SyntheticConfig {
            fields: 4,
            vocab_per_field: 10,
            latent_dim: 3,
            instances: n,
            scale,
            seed: 5,
        }
    }

    #[test]
    fn zero_scale_is_fair_coin() {
        let d = gen_synthetic(&SyntheticConfig {
            instances: 100_000,
            scale: 0.0,
            ..SyntheticConfig::default()
        })
        .unwrap();
        assert!(d.true_logits.as_ref().unwrap().iter().all(|&s| s == 0.0));
        let rate = d.positive_rate();
        assert!((0.49..=0.51).contains(&rate), "{rate}");
    }

    #[test]
    fn stored_logits_match_pairwise_definition() {
        let (d, lat) = gen_synthetic_with_latents(&small(2.0, 200)).unwrap();
        for (inst, &s) in d.instances.iter().zip(d.true_logits.as_ref().unwrap()) {
            let cats: Vec<u32> = inst
                .values
                .iter()
                .map(|v| match v {
                    FeatureValue::Categorical(c) => *c,
                    _ => unreachable!(),
                })
                .collect();
            // ‖Σv‖² − Σ‖v‖² = 2 Σ_{i<j} ⟨v_i, v_j⟩
            let vs: Vec<&Vec<f64>> = cats
                .iter()
                .enumerate()
                .map(|(f, &c)| &lat.vectors[f][c as usize])
                .collect();
            let sum: Vec<f64> = (0..3).map(|k| vs.iter().map(|v| v[k]).sum()).collect();
            let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
            let expect = 2.0 * 0.5 * (sq(&sum) - vs.iter().map(|v| sq(v)).sum::<f64>());
            assert!((s - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_data() {
        let a = gen_synthetic(&small(1.0, 500)).unwrap();
        let b = gen_synthetic(&small(1.0, 500)).unwrap();
        assert_eq!(a.instances, b.instances);
        assert_eq!(a.true_logits, b.true_logits);
    }

    #[test]
    fn single_category_gives_constant_logit() {
        let d = gen_synthetic(&SyntheticConfig {
            fields: 2,
            vocab_per_field: 1,
            instances: 100,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let l = d.true_logits.unwrap();
        assert!(l.iter().all(|&s| s == l[0]));
    }

    #[test]
    fn rejects_invalid_sizes() {
        assert!(gen_synthetic(&SyntheticConfig { fields: 1, ..small(1.0, 10) }).is_err());
        assert!(gen_synthetic(&SyntheticConfig { latent_dim: 0, ..small(1.0, 10) }).is_err());
        assert!(gen_synthetic(&SyntheticConfig { instances: 0, ..small(1.0, 10) }).is_err());
    }
}
