//! MaskBlock: an instance-guided mask applied to either the (normalized)
//! feature embedding or the previous block's output, followed by a
//! normalized hidden layer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{hadamard, LnHid, LnHidCache, MaskCache, MaskUnit};
use crate::numeric::{Grads, Matrix, ParamStore, Rng, Values};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    OnEmbedding,
    OnBlock,
}

/// Component removals matching the "-w/o" ablation rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablation {
    pub no_mask: bool,
    /// Removes LN_EMB and the output LN. The output LN's bias stays as a
    /// plain bias, so the hidden layer becomes `ReLU(W·x + b)`.
    pub no_ln: bool,
    pub no_ffn: bool,
}

impl Ablation {
    pub fn none() -> Self {
        Self::default()
    }

    /// Parses `no_mask`, `no_ln` or `no_ffn` (comma-separated combinations
    /// are accepted).
    pub fn parse(s: &str) -> Result<Self> {
        let mut a = Ablation::none();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "no_mask" => a.no_mask = true,
                "no_ln" => a.no_ln = true,
                "no_ffn" => a.no_ffn = true,
                "none" => {}
                other => {
                    return Err(Error::Config(format!(
                        "unknown ablation {other:?} (expected no_mask, no_ln or no_ffn)"
                    )))
                }
            }
        }
        Ok(a)
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.no_mask {
            parts.push("no_mask");
        }
        if self.no_ln {
            parts.push("no_ln");
        }
        if self.no_ffn {
            parts.push("no_ffn");
        }
        if parts.is_empty() {
            "none".into()
        } else {
            parts.join(",")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskBlockConfig {
    pub kind: BlockKind,
    /// Output width `q` of the hidden layer (ignored under `no_ffn`).
    pub width: usize,
    pub reduction_ratio: usize,
    pub ablation: Ablation,
    /// Initial value of the mask projection bias.
    pub mask_bias_init: f64,
    pub ln_eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskBlock {
    pub kind: BlockKind,
    pub mask: Option<MaskUnit>,
    pub ffn: Option<LnHid>,
    input_dim: usize,
}

#[derive(Debug, Clone)]
pub struct BlockCache {
    pub mask: Option<(Matrix, MaskCache)>,
    pub masked: Matrix,
    pub ffn: Option<(Matrix, LnHidCache)>,
}

impl BlockCache {
    pub fn output(&self) -> &Matrix {
        match &self.ffn {
            Some((out, _)) => out,
            None => &self.masked,
        }
    }
}

impl MaskBlock {
    /// `embedding_dim` is `m = f·k`; `input_dim` is `m` for an on-embedding
    /// block and the previous block's output width otherwise.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        mask_rng: &mut Rng,
        ffn_rng: &mut Rng,
        name: &str,
        cfg: &MaskBlockConfig,
        embedding_dim: usize,
        input_dim: usize,
    ) -> Result<Self> {
        if cfg.reduction_ratio < 1 {
            return Err(Error::Config("reduction ratio must be at least 1".into()));
        }
        if !cfg.ablation.no_ffn && cfg.width < 1 {
            return Err(Error::Config("block width q must be at least 1".into()));
        }
        if cfg.kind == BlockKind::OnEmbedding && input_dim != embedding_dim {
            return Err(Error::Config(format!(
                "on-embedding block input must be m={embedding_dim}, got {input_dim}"
            )));
        }
        let mask = (!cfg.ablation.no_mask).then(|| {
            MaskUnit::new(
                store,
                mask_rng,
                &format!("{name}.mask"),
                embedding_dim,
                input_dim,
                cfg.reduction_ratio,
                cfg.mask_bias_init,
            )
        });
        let ffn = (!cfg.ablation.no_ffn).then(|| {
            LnHid::new(
                store,
                ffn_rng,
                &format!("{name}.ffn"),
                input_dim,
                cfg.width,
                !cfg.ablation.no_ln,
                cfg.ln_eps,
            )
        });
        Ok(MaskBlock {
            kind: cfg.kind,
            mask,
            ffn,
            input_dim,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.ffn.as_ref().map_or(self.input_dim, LnHid::out_dim)
    }

    /// `v_emb` feeds the mask; `input` is the masked target (the normalized
    /// embedding for an on-embedding block, the previous output otherwise).
    pub fn forward(&self, values: Values<'_>, v_emb: &Matrix, input: &Matrix) -> BlockCache {
        let (masked, mask) = match &self.mask {
            Some(unit) => {
                let (m, c) = unit.forward(values, v_emb);
                (hadamard(&m, input), Some((m, c)))
            }
            None => (input.clone(), None),
        };
        let ffn = self.ffn.as_ref().map(|layer| layer.forward(values, &masked));
        BlockCache { mask, masked, ffn }
    }

    /// Single-instance evaluation.
    pub fn apply(&self, values: Values<'_>, v_emb: &[f64], input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim {
            return Err(Error::shape(
                "mask block",
                format!("input has length {}, block expects {}", input.len(), self.input_dim),
            ));
        }
        if let Some(unit) = &self.mask {
            if v_emb.len() != unit.input_dim() {
                return Err(Error::shape(
                    "mask block",
                    format!("V_emb has length {}, mask expects {}", v_emb.len(), unit.input_dim()),
                ));
            }
        }
        let cache = self.forward(values, &Matrix::row_vector(v_emb), &Matrix::row_vector(input));
        Ok(cache.output().as_slice().to_vec())
    }

    /// Returns `(∂L/∂input, ∂L/∂v_emb through the mask)`.
    pub fn backward(
        &self,
        values: Values<'_>,
        grads: &mut Grads<'_>,
        v_emb: &Matrix,
        input: &Matrix,
        cache: &BlockCache,
        d_out: Matrix,
    ) -> (Matrix, Option<Matrix>) {
        let d_masked = match (&self.ffn, &cache.ffn) {
            (Some(layer), Some((_, c))) => layer
                .backward(values, grads, &cache.masked, c, d_out, true)
                .expect("input gradient requested"),
            _ => d_out,
        };
        match (&self.mask, &cache.mask) {
            (Some(unit), Some((m, c))) => {
                let d_input = hadamard(&d_masked, m);
                let d_mask = hadamard(&d_masked, input);
                let d_emb = unit.backward(values, grads, v_emb, c, &d_mask);
                (d_input, Some(d_emb))
            }
            _ => (d_masked, None),
        }
    }

    pub fn fold_pattern(cache: &BlockCache, state: &mut u64) {
        if let Some((_, c)) = &cache.mask {
            MaskUnit::fold_pattern(c, state);
        }
        if let Some((_, c)) = &cache.ffn {
            LnHid::fold_pattern(c, state);
        }
    }

    pub fn param_count(&self) -> usize {
        self.mask.as_ref().map_or(0, MaskUnit::param_count) + self.ffn.as_ref().map_or(0, LnHid::param_count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::OutputNorm;

    fn cfg(kind: BlockKind, width: usize, ablation: Ablation) -> MaskBlockConfig {
        MaskBlockConfig {
            kind,
            width,
            reduction_ratio: 2,
            ablation,
            mask_bias_init: 0.0,
            ln_eps: crate::layers::LN_EPS,
        }
    }

    fn block(store: &mut ParamStore, c: &MaskBlockConfig, m: usize, input: usize) -> MaskBlock {
        MaskBlock::new(store, &mut Rng::new(1), &mut Rng::new(2), "b", c, m, input).unwrap()
    }

    fn set_identity_mask(store: &mut ParamStore, unit: &MaskUnit) {
        for id in [unit.aggregation.weight, unit.aggregation.bias.unwrap(), unit.projection.weight] {
            store.value_mut(id).iter_mut().for_each(|w| *w = 0.0);
        }
        store.value_mut(unit.projection.bias.unwrap()).iter_mut().for_each(|b| *b = 1.0);
    }

    #[test]
    fn ablation_parsing() {
        assert_eq!(Ablation::parse("no_mask").unwrap().label(), "no_mask");
        let a = Ablation::parse("no_mask,no_ln").unwrap();
        assert!(a.no_mask && a.no_ln && !a.no_ffn);
        assert!(Ablation::parse("no_dropout").is_err());
    }

    #[test]
    fn identity_mask_and_no_ln_is_plain_relu_layer() {
        let mut store = ParamStore::new();
        let no_ln = Ablation {
            no_ln: true,
            ..Ablation::none()
        };
        let b = block(&mut store, &cfg(BlockKind::OnEmbedding, 3, no_ln), 4, 4);
        set_identity_mask(&mut store, b.mask.as_ref().unwrap());
        let v = [0.5, -1.0, 2.0, 0.25];
        let out = b.apply(store.values(), &v, &v).unwrap();
        let w = store.value(b.ffn.unwrap().weight.weight);
        for i in 0..3 {
            let pre: f64 = (0..4).map(|j| w[i * 4 + j] * v[j]).sum();
            assert_eq!(out[i], pre.max(0.0));
        }
    }

    #[test]
    fn zero_ffn_weight_gives_zero_output() {
        let mut store = ParamStore::new();
        let b = block(&mut store, &cfg(BlockKind::OnBlock, 3, Ablation::none()), 4, 5);
        store.value_mut(b.ffn.unwrap().weight.weight).iter_mut().for_each(|w| *w = 0.0);
        let out = b.apply(store.values(), &[1.0; 4], &[0.3, 1.0, -2.0, 0.1, 9.0]).unwrap();
        assert_eq!(out, vec![0.0; 3]);
    }

    #[test]
    fn identity_mask_equals_no_mask_block() {
        let mut store = ParamStore::new();
        let masked = block(&mut store, &cfg(BlockKind::OnBlock, 3, Ablation::none()), 4, 5);
        set_identity_mask(&mut store, masked.mask.as_ref().unwrap());
        let mut store2 = ParamStore::new();
        let nm = Ablation {
            no_mask: true,
            ..Ablation::none()
        };
        let plain = block(&mut store2, &cfg(BlockKind::OnBlock, 3, nm), 4, 5);
        // separate RNG streams for mask and FFN, so weights agree already
        assert_eq!(
            store.value(masked.ffn.unwrap().weight.weight),
            store2.value(plain.ffn.unwrap().weight.weight)
        );
        let mut rng = Rng::new(9);
        for _ in 0..20 {
            let v: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
            let p: Vec<f64> = (0..5).map(|_| rng.normal()).collect();
            assert_eq!(
                masked.apply(store.values(), &v, &p).unwrap(),
                plain.apply(store2.values(), &v, &p).unwrap()
            );
        }
    }

    #[test]
    fn zero_previous_output_gives_relu_of_ln_bias() {
        let mut store = ParamStore::new();
        let b = block(&mut store, &cfg(BlockKind::OnBlock, 3, Ablation::none()), 4, 5);
        let OutputNorm::LayerNorm(ln) = b.ffn.unwrap().norm else { unreachable!() };
        store.value_mut(ln.bias).copy_from_slice(&[0.4, -0.4, 1.5]);
        let out = b.apply(store.values(), &[1.0, 2.0, 3.0, 4.0], &[0.0; 5]).unwrap();
        for (o, e) in out.iter().zip([0.4, 0.0, 1.5]) {
            assert!((o - e).abs() < 1e-12);
        }
    }

    #[test]
    fn no_ffn_output_is_masked_vector() {
        let mut store = ParamStore::new();
        let nf = Ablation {
            no_ffn: true,
            ..Ablation::none()
        };
        let b = block(&mut store, &cfg(BlockKind::OnBlock, 3, nf), 4, 5);
        assert_eq!(b.output_dim(), 5);
        set_identity_mask(&mut store, b.mask.as_ref().unwrap());
        let p = [0.3, 1.0, -2.0, 0.1, 9.0];
        assert_eq!(b.apply(store.values(), &[1.0; 4], &p).unwrap(), p.to_vec());
    }

    #[test]
    fn input_width_checked() {
        let mut store = ParamStore::new();
        let b = block(&mut store, &cfg(BlockKind::OnBlock, 3, Ablation::none()), 4, 5);
        assert!(b.apply(store.values(), &[1.0; 4], &[1.0; 4]).is_err());
        assert!(b.apply(store.values(), &[1.0; 3], &[1.0; 5]).is_err());
        let bad = MaskBlock::new(
            &mut store,
            &mut Rng::new(0),
            &mut Rng::new(0),
            "x",
            &cfg(BlockKind::OnEmbedding, 3, Ablation::none()),
            4,
            5,
        );
        assert!(bad.is_err());
    }
}
