//! Full topologies: serial and parallel MaskNet, the plain DNN baseline and
//! the linear baseline, all ending in a sigmoid prediction head.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, EncodedInstance, FeatureSchema};
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::layers::{mask_unit_param_count, FieldLayerNorm, LnCache, LnHid, LnHidCache, LN_EPS};
use crate::maskblock::{Ablation, BlockCache, BlockKind, MaskBlock, MaskBlockConfig};
use crate::numeric::{sigmoid, Affine, Grads, Matrix, ParamId, ParamStore, Rng, Values};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Serial,
    Parallel,
    Dnn,
    Linear,
}

impl Topology {
    pub fn as_str(self) -> &'static str {
        match self {
            Topology::Serial => "serial",
            Topology::Parallel => "parallel",
            Topology::Dnn => "dnn",
            Topology::Linear => "linear",
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Topology {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "serial" => Ok(Topology::Serial),
            "parallel" => Ok(Topology::Parallel),
            "dnn" => Ok(Topology::Dnn),
            "linear" => Ok(Topology::Linear),
            other => Err(Error::Config(format!(
                "unknown topology {other:?} (expected serial, parallel, dnn or linear)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub topology: Topology,
    /// One entry per MaskBlock (serial/parallel), or the hidden layer widths
    /// of the DNN baseline.
    pub block_widths: Vec<usize>,
    /// Hidden widths of the MLP on top of the parallel blocks.
    pub top_widths: Vec<usize>,
    pub embedding_dim: usize,
    pub reduction_ratio: usize,
    pub ablation: Ablation,
    /// Initial mask projection bias; 1.0 starts every mask near identity.
    pub mask_bias_init: f64,
    pub ln_eps: f64,
    pub seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            topology: Topology::Serial,
            block_widths: vec![64; 3],
            top_widths: vec![64, 64],
            embedding_dim: 10,
            reduction_ratio: 2,
            ablation: Ablation::none(),
            mask_bias_init: 0.0,
            ln_eps: LN_EPS,
            seed: 1,
        }
    }
}

impl ModelSpec {
    /// 400-wide layers, three deep, as used for the large-scale runs.
    pub fn paper_scale() -> Self {
        ModelSpec {
            block_widths: vec![400; 3],
            top_widths: vec![400; 3],
            ..ModelSpec::default()
        }
    }

    pub fn with_topology(mut self, topology: Topology) -> Self {
        self.topology = topology;
        self
    }

    pub fn blocks(&self) -> usize {
        self.block_widths.len()
    }

    /// Embedding width per field actually used (the linear model has one
    /// weight per category).
    pub fn field_dim(&self) -> usize {
        match self.topology {
            Topology::Linear => 1,
            _ => self.embedding_dim,
        }
    }

    fn uses_ln_emb(&self) -> bool {
        matches!(self.topology, Topology::Serial | Topology::Parallel) && !self.ablation.no_ln
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim < 1 {
            return Err(Error::Config("embedding_dim must be at least 1".into()));
        }
        if self.reduction_ratio < 1 {
            return Err(Error::Config("reduction_ratio must be at least 1".into()));
        }
        if !(self.ln_eps > 0.0) {
            return Err(Error::Config("ln_eps must be positive".into()));
        }
        if self.block_widths.contains(&0) || self.top_widths.contains(&0) {
            return Err(Error::Config("layer widths must be at least 1".into()));
        }
        match self.topology {
            Topology::Serial | Topology::Parallel if self.block_widths.is_empty() => {
                Err(Error::Config("MaskNet needs at least one block".into()))
            }
            Topology::Dnn | Topology::Linear if self.ablation != Ablation::none() => Err(Error::Config(format!(
                "ablations apply to MaskNet topologies, not {}",
                self.topology
            ))),
            _ => Ok(()),
        }
    }
}

/// `ŷ = σ(w₀ + w·x)`; the linear topology sums its input instead of
/// weighting it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionHead {
    pub weight: Option<ParamId>,
    pub bias: ParamId,
    pub in_dim: usize,
}

impl PredictionHead {
    fn affine(&self) -> Option<Affine> {
        self.weight.map(|w| Affine {
            weight: w,
            bias: Some(self.bias),
            in_dim: self.in_dim,
            out_dim: 1,
        })
    }

    fn forward(&self, values: Values<'_>, x: &Matrix) -> Vec<f64> {
        match self.affine() {
            Some(a) => a.forward(values, x).into_vec(),
            None => {
                let w0 = values.get(self.bias)[0];
                x.iter_rows().map(|r| w0 + r.iter().sum::<f64>()).collect()
            }
        }
    }

    fn backward(&self, values: Values<'_>, grads: &mut Grads<'_>, x: &Matrix, d_logits: &[f64]) -> Matrix {
        let dy = Matrix::from_vec(d_logits.len(), 1, d_logits.to_vec()).expect("one logit per row");
        match self.affine() {
            Some(a) => a.backward(values, grads, x, &dy),
            None => {
                grads.accumulate(self.bias, &[d_logits.iter().sum()]);
                let mut dx = Matrix::zeros(x.rows(), x.cols());
                for (r, &d) in d_logits.iter().enumerate() {
                    dx.row_mut(r).iter_mut().for_each(|v| *v = d);
                }
                dx
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Serial(Vec<MaskBlock>),
    Parallel { blocks: Vec<MaskBlock>, top: Vec<LnHid> },
    Dnn(Vec<LnHid>),
    Linear,
}

/// Architecture with parameter handles; values live in a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: ModelSpec,
    pub embedding: EmbeddingTable,
    pub ln_emb: Option<FieldLayerNorm>,
    pub body: Body,
    pub head: PredictionHead,
}

/// Activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub v_emb: Matrix,
    ln_emb: Option<(Matrix, LnCache)>,
    pub blocks: Vec<BlockCache>,
    merge: Option<Matrix>,
    layers: Vec<(Matrix, LnHidCache)>,
    pub logits: Vec<f64>,
}

impl ForwardCache {
    /// Mask values per block, one row per instance.
    pub fn masks(&self) -> Vec<Option<&Matrix>> {
        self.blocks.iter().map(|b| b.mask.as_ref().map(|(m, _)| m)).collect()
    }

    /// Input to the first MaskBlock (LN_EMB output, or raw embedding).
    pub fn block_input(&self) -> &Matrix {
        self.ln_emb.as_ref().map_or(&self.v_emb, |(x, _)| x)
    }

    /// Pre-gain normalized embedding slices, when LN_EMB is present.
    pub fn ln_emb_normalized(&self) -> Option<&Matrix> {
        self.ln_emb.as_ref().map(|(_, c)| &c.xhat)
    }

    /// ReLU sign pattern of every rectifier in the pass.
    pub fn relu_fingerprint(&self) -> u64 {
        let mut state = 0xcbf2_9ce4_8422_2325;
        for b in &self.blocks {
            MaskBlock::fold_pattern(b, &mut state);
        }
        for (_, c) in &self.layers {
            LnHid::fold_pattern(c, &mut state);
        }
        state
    }
}

fn block_streams(seed: u64, i: usize) -> (Rng, Rng) {
    (Rng::derived(seed, 200 + i as u64), Rng::derived(seed, 100 + i as u64))
}

fn mlp(
    store: &mut ParamStore,
    seed: u64,
    stream_base: u64,
    name: &str,
    mut in_dim: usize,
    widths: &[usize],
    eps: f64,
) -> Vec<LnHid> {
    widths
        .iter()
        .enumerate()
        .map(|(l, &w)| {
            let mut rng = Rng::derived(seed, stream_base + l as u64);
            let layer = LnHid::new(store, &mut rng, &format!("{name}{l}"), in_dim, w, false, eps);
            in_dim = w;
            layer
        })
        .collect()
}

impl Network {
    /// Registers all parameters in `store`. Random streams are keyed by
    /// component (embedding, block i mask, block i FFN, top layer l), so a
    /// removed component never shifts the initial values of the others.
    pub fn build(spec: &ModelSpec, schema: &FeatureSchema, store: &mut ParamStore) -> Result<Self> {
        spec.validate()?;
        let k = spec.field_dim();
        let embedding = match spec.topology {
            Topology::Linear => EmbeddingTable::with_init(schema, 1, store, "emb", |n| vec![0.0; n]),
            _ => EmbeddingTable::new(schema, k, store, &mut Rng::derived(spec.seed, 1), "emb"),
        };
        let m = embedding.output_dim();
        let ln_emb = spec
            .uses_ln_emb()
            .then(|| FieldLayerNorm::new(store, "ln_emb", schema.field_count(), k, spec.ln_eps));
        let block_cfg = |kind, width| MaskBlockConfig {
            kind,
            width,
            reduction_ratio: spec.reduction_ratio,
            ablation: spec.ablation,
            mask_bias_init: spec.mask_bias_init,
            ln_eps: spec.ln_eps,
        };
        let (body, head_in) = match spec.topology {
            Topology::Serial => {
                let mut blocks: Vec<MaskBlock> = Vec::new();
                let mut width = m;
                for (i, &q) in spec.block_widths.iter().enumerate() {
                    let kind = if i == 0 {
                        BlockKind::OnEmbedding
                    } else {
                        BlockKind::OnBlock
                    };
                    let (mut mr, mut fr) = block_streams(spec.seed, i);
                    let b = MaskBlock::new(store, &mut mr, &mut fr, &format!("block{i}"), &block_cfg(kind, q), m, width)?;
                    width = b.output_dim();
                    blocks.push(b);
                }
                (Body::Serial(blocks), width)
            }
            Topology::Parallel => {
                let mut blocks = Vec::new();
                let mut merged = 0;
                for (i, &q) in spec.block_widths.iter().enumerate() {
                    let (mut mr, mut fr) = block_streams(spec.seed, i);
                    let cfg = block_cfg(BlockKind::OnEmbedding, q);
                    let b = MaskBlock::new(store, &mut mr, &mut fr, &format!("block{i}"), &cfg, m, m)?;
                    merged += b.output_dim();
                    blocks.push(b);
                }
                let top = mlp(store, spec.seed, 300, "top", merged, &spec.top_widths, spec.ln_eps);
                let out = top.last().map_or(merged, LnHid::out_dim);
                (Body::Parallel { blocks, top }, out)
            }
            Topology::Dnn => {
                // same streams as the serial blocks' FFNs
                let mut layers = Vec::new();
                let mut in_dim = m;
                for (i, &w) in spec.block_widths.iter().enumerate() {
                    let (_, mut fr) = block_streams(spec.seed, i);
                    layers.push(LnHid::new(store, &mut fr, &format!("dnn{i}"), in_dim, w, false, spec.ln_eps));
                    in_dim = w;
                }
                (Body::Dnn(layers), in_dim)
            }
            Topology::Linear => (Body::Linear, m),
        };
        let weight = (spec.topology != Topology::Linear)
            .then(|| store.add("head.weight", (1, head_in), vec![0.0; head_in]));
        let bias = store.add("head.bias", (1, 1), vec![0.0]);
        Ok(Network {
            spec: spec.clone(),
            embedding,
            ln_emb,
            body,
            head: PredictionHead {
                weight,
                bias,
                in_dim: head_in,
            },
        })
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding.output_dim()
    }

    pub fn blocks(&self) -> &[MaskBlock] {
        match &self.body {
            Body::Serial(b) | Body::Parallel { blocks: b, .. } => b,
            _ => &[],
        }
    }

    /// Hidden MLP layers (DNN body or the parallel top).
    pub fn mlp_layers(&self) -> &[LnHid] {
        match &self.body {
            Body::Parallel { top, .. } => top,
            Body::Dnn(l) => l,
            _ => &[],
        }
    }

    pub fn forward(&self, values: Values<'_>, batch: &[&EncodedInstance]) -> Result<ForwardCache> {
        let v_emb = self.embedding.forward(values, batch)?;
        let ln_emb = match &self.ln_emb {
            Some(ln) => Some(ln.forward(values, &v_emb)?),
            None => None,
        };
        let x0 = ln_emb.as_ref().map_or(&v_emb, |(x, _)| x);
        let mut blocks: Vec<BlockCache> = Vec::new();
        let mut merge = None;
        let mut layers: Vec<(Matrix, LnHidCache)> = Vec::new();
        let run_mlp = |layers: &mut Vec<(Matrix, LnHidCache)>, stack: &[LnHid], input: &Matrix| {
            for layer in stack {
                let x = layers.last().map_or(input, |(o, _)| o);
                let out = layer.forward(values, x);
                layers.push(out);
            }
        };
        match &self.body {
            Body::Serial(bs) => {
                for b in bs {
                    let input = blocks.last().map_or(x0, BlockCache::output);
                    let c = b.forward(values, &v_emb, input);
                    blocks.push(c);
                }
            }
            Body::Parallel { blocks: bs, top } => {
                for b in bs {
                    blocks.push(b.forward(values, &v_emb, x0));
                }
                let outs: Vec<&Matrix> = blocks.iter().map(BlockCache::output).collect();
                let merged = Matrix::hconcat(&outs);
                run_mlp(&mut layers, top, &merged);
                merge = Some(merged);
            }
            Body::Dnn(stack) => run_mlp(&mut layers, stack, &v_emb),
            Body::Linear => {}
        }
        let head_in = match (&self.body, layers.last(), blocks.last()) {
            (_, Some((o, _)), _) => o,
            (Body::Parallel { .. }, None, _) => merge.as_ref().expect("parallel merge"),
            (Body::Serial(_), None, Some(b)) => b.output(),
            _ => &v_emb,
        };
        let logits = self.head.forward(values, head_in);
        Ok(ForwardCache {
            v_emb,
            ln_emb,
            blocks,
            merge,
            layers,
            logits,
        })
    }

    fn mlp_backward(
        stack: &[LnHid],
        values: Values<'_>,
        grads: &mut Grads<'_>,
        layers: &[(Matrix, LnHidCache)],
        input: &Matrix,
        mut d: Matrix,
    ) -> Matrix {
        for (l, layer) in stack.iter().enumerate().rev() {
            let x = if l == 0 { input } else { &layers[l - 1].0 };
            d = layer
                .backward(values, grads, x, &layers[l].1, d, true)
                .expect("input gradient requested");
        }
        d
    }

    /// Accumulates parameter gradients for `d_logits` (∂L/∂logit per row).
    pub fn backward(
        &self,
        values: Values<'_>,
        grads: &mut Grads<'_>,
        batch: &[&EncodedInstance],
        cache: &ForwardCache,
        d_logits: &[f64],
    ) {
        let v_emb = &cache.v_emb;
        let x0 = cache.block_input();
        let head_in = match (&self.body, cache.layers.last(), cache.blocks.last()) {
            (_, Some((o, _)), _) => o,
            (Body::Parallel { .. }, None, _) => cache.merge.as_ref().expect("parallel merge"),
            (Body::Serial(_), None, Some(b)) => b.output(),
            _ => v_emb,
        };
        let d_head_in = self.head.backward(values, grads, head_in, d_logits);
        let mut d_emb = Matrix::zeros(v_emb.rows(), v_emb.cols());
        let add = |acc: &mut Matrix, d: &Matrix| {
            for (a, b) in acc.as_mut_slice().iter_mut().zip(d.as_slice()) {
                *a += b;
            }
        };
        let mut d_x0: Option<Matrix> = None;
        match &self.body {
            Body::Serial(bs) => {
                let mut d = d_head_in;
                for (i, b) in bs.iter().enumerate().rev() {
                    let input = if i == 0 { x0 } else { cache.blocks[i - 1].output() };
                    let (d_in, d_mask_emb) = b.backward(values, grads, v_emb, input, &cache.blocks[i], d);
                    if let Some(de) = d_mask_emb {
                        add(&mut d_emb, &de);
                    }
                    d = d_in;
                }
                d_x0 = Some(d);
            }
            Body::Parallel { blocks: bs, top } => {
                let merge = cache.merge.as_ref().expect("parallel merge");
                let d_merge = Self::mlp_backward(top, values, grads, &cache.layers, merge, d_head_in);
                let mut acc = Matrix::zeros(x0.rows(), x0.cols());
                let mut off = 0;
                for (i, b) in bs.iter().enumerate() {
                    let w = b.output_dim();
                    let d_out = d_merge.column_slice(off, w);
                    off += w;
                    let (d_in, d_mask_emb) = b.backward(values, grads, v_emb, x0, &cache.blocks[i], d_out);
                    if let Some(de) = d_mask_emb {
                        add(&mut d_emb, &de);
                    }
                    add(&mut acc, &d_in);
                }
                d_x0 = Some(acc);
            }
            Body::Dnn(stack) => {
                let d = Self::mlp_backward(stack, values, grads, &cache.layers, v_emb, d_head_in);
                add(&mut d_emb, &d);
            }
            Body::Linear => add(&mut d_emb, &d_head_in),
        }
        if let Some(d) = d_x0 {
            match (&self.ln_emb, &cache.ln_emb) {
                (Some(ln), Some((_, c))) => add(&mut d_emb, &ln.backward(values, grads, c, &d)),
                _ => add(&mut d_emb, &d),
            }
        }
        self.embedding.backward(grads, batch, &d_emb);
    }
}

/// Closed-form trainable parameter count for `spec` over `schema`.
pub fn param_count(spec: &ModelSpec, schema: &FeatureSchema) -> usize {
    let k = spec.field_dim();
    let rows: usize = schema.fields().iter().map(|f| f.table_width()).sum();
    rows * k + dense_param_count(spec, schema.field_count())
}

/// Parameters outside the embedding tables, for `f` fields.
pub fn dense_param_count(spec: &ModelSpec, f: usize) -> usize {
    let k = spec.field_dim();
    let m = f * k;
    let a = spec.ablation;
    let dense = |i: usize, o: usize| i * o + o;
    let block = |input: usize, q: usize| -> (usize, usize) {
        let mask = if a.no_mask {
            0
        } else {
            mask_unit_param_count(m, input, spec.reduction_ratio)
        };
        if a.no_ffn {
            (mask, input)
        } else {
            let norm = if a.no_ln { q } else { 2 * q };
            (mask + input * q + norm, q)
        }
    };
    let ln_emb = if spec.uses_ln_emb() { 2 * m } else { 0 };
    match spec.topology {
        Topology::Linear => 1,
        Topology::Dnn => {
            let mut n = 0;
            let mut i = m;
            for &w in &spec.block_widths {
                n += dense(i, w);
                i = w;
            }
            n + i + 1
        }
        Topology::Serial => {
            let mut n = ln_emb;
            let mut i = m;
            for &q in &spec.block_widths {
                let (c, o) = block(i, q);
                n += c;
                i = o;
            }
            n + i + 1
        }
        Topology::Parallel => {
            let mut n = ln_emb;
            let mut merged = 0;
            for &q in &spec.block_widths {
                let (c, o) = block(m, q);
                n += c;
                merged += o;
            }
            let mut i = merged;
            for &w in &spec.top_widths {
                n += dense(i, w);
                i = w;
            }
            n + i + 1
        }
    }
}

/// A network together with its parameter values.
#[derive(Debug, Clone)]
pub struct Model {
    pub network: Network,
    pub params: ParamStore,
    pub schema: Arc<FeatureSchema>,
}

/// Rows per forward pass when scoring a dataset.
const PREDICT_CHUNK: usize = 4096;

impl Model {
    pub fn new(spec: &ModelSpec, schema: Arc<FeatureSchema>) -> Result<Self> {
        let mut params = ParamStore::new();
        let network = Network::build(spec, &schema, &mut params)?;
        Ok(Model {
            network,
            params,
            schema,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.network.spec
    }

    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    pub fn forward(&self, batch: &[&EncodedInstance]) -> Result<ForwardCache> {
        self.network.forward(self.params.values(), batch)
    }

    pub fn logits(&self, instances: &[EncodedInstance]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(instances.len());
        for chunk in instances.chunks(PREDICT_CHUNK) {
            let refs: Vec<&EncodedInstance> = chunk.iter().collect();
            out.extend(self.forward(&refs)?.logits);
        }
        Ok(out)
    }

    /// Click probabilities.
    pub fn predict(&self, instances: &[EncodedInstance]) -> Result<Vec<f64>> {
        Ok(self.logits(instances)?.into_iter().map(sigmoid).collect())
    }

    pub fn predict_one(&self, inst: &EncodedInstance) -> Result<f64> {
        Ok(sigmoid(self.forward(&[inst])?.logits[0]))
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.predict(&data.instances)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Field, FeatureValue, Vocabulary};

    pub(crate) fn schema(fields: usize, vocab: usize) -> Arc<FeatureSchema> {
        let fs = (0..fields)
            .map(|f| {
                Field::categorical(
                    format!("f{f}"),
                    Vocabulary::from_values((0..vocab).map(|c| format!("c{c}")).collect()).unwrap(),
                )
            })
            .collect();
        Arc::new(FeatureSchema::new(fs).unwrap())
    }

    fn random_instances(rng: &mut Rng, n: usize, fields: usize, vocab: usize) -> Vec<EncodedInstance> {
        (0..n)
            .map(|_| EncodedInstance {
                values: (0..fields)
                    .map(|_| FeatureValue::Categorical(rng.below(vocab + 1) as u32))
                    .collect(),
                label: u8::from(rng.bernoulli(0.5)),
            })
            .collect()
    }

    fn randomize_head(model: &mut Model, seed: u64) {
        let mut rng = Rng::new(seed);
        for id in [model.network.head.weight.unwrap(), model.network.head.bias] {
            model.params.value_mut(id).iter_mut().for_each(|w| *w = rng.normal());
        }
    }

    #[test]
    fn zero_head_predicts_half_everywhere() {
        let s = schema(3, 4);
        let mut rng = Rng::new(1);
        let insts = random_instances(&mut rng, 20, 3, 4);
        for t in [Topology::Serial, Topology::Parallel, Topology::Dnn, Topology::Linear] {
            let spec = ModelSpec {
                block_widths: vec![5, 4],
                top_widths: vec![3],
                embedding_dim: 2,
                ..ModelSpec::default()
            }
            .with_topology(t);
            let model = Model::new(&spec, s.clone()).unwrap();
            assert!(model.predict(&insts).unwrap().iter().all(|&p| p == 0.5), "{t}");
        }
    }

    #[test]
    fn closed_form_count_matches_enumeration() {
        let s = schema(4, 6);
        let ablations = [
            Ablation::none(),
            Ablation::parse("no_mask").unwrap(),
            Ablation::parse("no_ln").unwrap(),
            Ablation::parse("no_ffn").unwrap(),
            Ablation::parse("no_mask,no_ln").unwrap(),
        ];
        for t in [Topology::Serial, Topology::Parallel] {
            for a in ablations {
                let spec = ModelSpec {
                    topology: t,
                    block_widths: vec![5, 7, 3],
                    top_widths: vec![6, 2],
                    embedding_dim: 3,
                    ablation: a,
                    ..ModelSpec::default()
                };
                let model = Model::new(&spec, s.clone()).unwrap();
                assert_eq!(model.param_count(), param_count(&spec, &s), "{t} {}", a.label());
            }
        }
        for t in [Topology::Dnn, Topology::Linear] {
            let spec = ModelSpec::default().with_topology(t);
            let model = Model::new(&spec, s.clone()).unwrap();
            assert_eq!(model.param_count(), param_count(&spec, &s), "{t}");
        }
    }

    #[test]
    fn linear_count_closed_form() {
        let (f, n) = (5, 9);
        let spec = ModelSpec::default().with_topology(Topology::Linear);
        let model = Model::new(&spec, schema(f, n)).unwrap();
        assert_eq!(model.param_count(), f * (n + 1) + 1);
    }

    #[test]
    fn paper_dnn_dense_count() {
        let spec = ModelSpec {
            block_widths: vec![400; 3],
            ..ModelSpec::default().with_topology(Topology::Dnn)
        };
        assert_eq!(dense_param_count(&spec, 39), 390 * 400 + 400 + 2 * (400 * 400 + 400) + 401);
        assert_eq!(dense_param_count(&spec, 39), 477_601);
        let numeric: Vec<Field> = (0..39).map(|i| Field::numerical(format!("x{i}"))).collect();
        let s = Arc::new(FeatureSchema::new(numeric).unwrap());
        let model = Model::new(&spec, s).unwrap();
        // one 10-vector per numerical field
        assert_eq!(model.param_count(), 477_601 + 390);
    }

    #[test]
    fn serial_equals_parallel_single_block_no_top() {
        let s = schema(3, 5);
        let base = ModelSpec {
            block_widths: vec![6],
            top_widths: vec![],
            embedding_dim: 3,
            ..ModelSpec::default()
        };
        let mut ser = Model::new(&base, s.clone()).unwrap();
        let mut par = Model::new(&base.clone().with_topology(Topology::Parallel), s).unwrap();
        randomize_head(&mut ser, 3);
        randomize_head(&mut par, 3);
        let insts = random_instances(&mut Rng::new(2), 50, 3, 5);
        assert_eq!(ser.logits(&insts).unwrap(), par.logits(&insts).unwrap());
    }

    #[test]
    fn ablated_serial_equals_dnn() {
        let s = schema(4, 8);
        let spec = ModelSpec {
            block_widths: vec![7, 5, 6],
            embedding_dim: 3,
            ablation: Ablation::parse("no_mask,no_ln").unwrap(),
            ..ModelSpec::default()
        };
        let mut ser = Model::new(&spec, s.clone()).unwrap();
        let dnn_spec = ModelSpec {
            ablation: Ablation::none(),
            ..spec.clone().with_topology(Topology::Dnn)
        };
        let mut dnn = Model::new(&dnn_spec, s).unwrap();
        assert_eq!(ser.param_count(), dnn.param_count());
        randomize_head(&mut ser, 4);
        randomize_head(&mut dnn, 4);
        let insts = random_instances(&mut Rng::new(5), 100, 4, 8);
        let a = ser.logits(&insts).unwrap();
        let b = dnn.logits(&insts).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn equal_encodings_equal_predictions() {
        let s = schema(3, 5);
        let mut m = Model::new(&ModelSpec { embedding_dim: 3, ..ModelSpec::default() }, s).unwrap();
        randomize_head(&mut m, 1);
        let mut insts = random_instances(&mut Rng::new(7), 2, 3, 5);
        insts[1] = EncodedInstance {
            label: 1 - insts[0].label,
            ..insts[0].clone()
        };
        let p = m.predict(&insts).unwrap();
        assert_eq!(p[0], p[1]);
    }

    #[test]
    fn ablations_rejected_on_baselines() {
        let spec = ModelSpec {
            ablation: Ablation::parse("no_mask").unwrap(),
            ..ModelSpec::default().with_topology(Topology::Dnn)
        };
        assert!(Model::new(&spec, schema(2, 2)).is_err());
        assert!("mlp".parse::<Topology>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        const ALL: [Topology; 4] = [Topology::Serial, Topology::Parallel, Topology::Dnn, Topology::Linear];

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn predictions_are_probabilities_independent_of_batch(
                t in 0usize..4,
                fields in 2usize..5,
                seed in 0u64..10_000,
            ) {
                let spec = ModelSpec {
                    block_widths: vec![5, 4],
                    top_widths: vec![3],
                    embedding_dim: 3,
                    seed,
                    ..ModelSpec::default().with_topology(ALL[t])
                };
                let mut m = Model::new(&spec, schema(fields, 4)).unwrap();
                crate::checks::perturb_zero_params(&mut m.params, seed + 1);
                let insts = random_instances(&mut crate::numeric::Rng::new(seed + 2), 9, fields, 4);
                let batch = m.predict(&insts).unwrap();
                for (inst, p) in insts.iter().zip(&batch) {
                    prop_assert!(*p > 0.0 && *p < 1.0, "{}", p);
                    let alone = m.predict_one(inst).unwrap();
                    prop_assert!((alone - p).abs() <= 1e-14, "{} vs {}", alone, p);
                }
            }
        }
    }
}
