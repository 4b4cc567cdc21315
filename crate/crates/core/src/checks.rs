//! Finite-difference checks of every layer, both block kinds and the full
//! topologies at tiny sizes. Layer inputs are registered as parameters so
//! input gradients are checked alongside weight gradients.

use std::sync::Arc;

use crate::data::{EncodedInstance, FeatureSchema, FeatureValue, Field, Vocabulary};
use crate::layers::{FieldLayerNorm, LayerNorm, LnHid, MaskUnit, LN_EPS};
use crate::maskblock::{Ablation, BlockKind, MaskBlock, MaskBlockConfig};
use crate::model::{ModelSpec, Network, Topology};
use crate::numeric::{
    fold_relu_pattern, gradcheck, normal_init, relu_backward_in_place, relu_matrix, Affine, GradcheckConfig,
    GradcheckReport, Grads, Matrix, Objective, ParamId, ParamStore, Rng, Values,
};
use crate::train::BatchObjective;

#[derive(Debug, Clone)]
pub struct SuiteEntry {
    pub name: String,
    pub report: GradcheckReport,
}

/// Loss `Σ c ⊙ y` for a fixed random `c`, with closures for the forward
/// pass and its backward given `c`.
struct Probe<F, B> {
    coef: Matrix,
    forward: F,
    backward: B,
}

impl<F, B> Objective for Probe<F, B>
where
    F: Fn(Values<'_>) -> (Matrix, u64),
    B: Fn(Values<'_>, &mut Grads<'_>, &Matrix),
{
    fn loss(&self, store: &ParamStore) -> (f64, u64) {
        let (y, fp) = (self.forward)(store.values());
        (dot(&y, &self.coef), fp)
    }

    fn loss_and_grad(&self, store: &mut ParamStore) -> f64 {
        store.zero_grads();
        let (l, _) = self.loss(store);
        let (values, mut grads) = store.split();
        (self.backward)(values, &mut grads, &self.coef);
        l
    }
}

fn dot(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

fn input(store: &mut ParamStore, rng: &mut Rng, name: &str, rows: usize, cols: usize) -> ParamId {
    store.add(name, (rows, cols), normal_init(rng, rows * cols, 1.0))
}

fn as_matrix(values: Values<'_>, id: ParamId, cols: usize) -> Matrix {
    let v = values.get(id);
    Matrix::from_vec(v.len() / cols, cols, v.to_vec()).expect("input shape")
}

fn coef(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, normal_init(rng, rows * cols, 1.0)).expect("coef shape")
}

fn run(name: &str, obj: &dyn Objective, store: &mut ParamStore, cfg: GradcheckConfig) -> SuiteEntry {
    SuiteEntry {
        name: name.to_owned(),
        report: gradcheck(obj, store, cfg),
    }
}

const ROWS: usize = 3;

fn check_dense_affine(cfg: GradcheckConfig) -> SuiteEntry {
    let mut rng = Rng::new(101);
    let mut store = ParamStore::new();
    let (i, o) = (5, 4);
    let x = input(&mut store, &mut rng, "x", ROWS, i);
    let layer = Affine {
        weight: store.add("W", (o, i), normal_init(&mut rng, o * i, 0.5)),
        bias: Some(store.add("b", (o, 1), normal_init(&mut rng, o, 0.5))),
        in_dim: i,
        out_dim: o,
    };
    let probe = Probe {
        coef: coef(&mut rng, ROWS, o),
        forward: |v: Values<'_>| (layer.forward(v, &as_matrix(v, x, i)), 0),
        backward: |v: Values<'_>, g: &mut Grads<'_>, dy: &Matrix| {
            let dx = layer.backward(v, g, &as_matrix(v, x, i), dy);
            g.accumulate(x, dx.as_slice());
        },
    };
    run("dense_affine", &probe, &mut store, cfg)
}

fn check_relu(cfg: GradcheckConfig) -> SuiteEntry {
    let mut rng = Rng::new(102);
    let mut store = ParamStore::new();
    let w = 6;
    let x = input(&mut store, &mut rng, "x", ROWS, w);
    let probe = Probe {
        coef: coef(&mut rng, ROWS, w),
        forward: |v: Values<'_>| {
            let xm = as_matrix(v, x, w);
            let mut fp = 0;
            fold_relu_pattern(&xm, &mut fp);
            (relu_matrix(&xm), fp)
        },
        backward: |v: Values<'_>, g: &mut Grads<'_>, dy: &Matrix| {
            let mut d = dy.clone();
            relu_backward_in_place(&as_matrix(v, x, w), &mut d);
            g.accumulate(x, d.as_slice());
        },
    };
    run("relu", &probe, &mut store, cfg)
}

fn randomize(store: &mut ParamStore, rng: &mut Rng, ids: &[ParamId], std: f64) {
    for &id in ids {
        let n = store.value(id).len();
        let v = normal_init(rng, n, std);
        store.value_mut(id).copy_from_slice(&v);
    }
}

fn check_layer_norm(cfg: GradcheckConfig) -> SuiteEntry {
    let mut rng = Rng::new(103);
    let mut store = ParamStore::new();
    let h = 6;
    let x = input(&mut store, &mut rng, "x", ROWS, h);
    let ln = LayerNorm::new(&mut store, "ln", h, LN_EPS);
    randomize(&mut store, &mut rng, &[ln.gain, ln.bias], 1.0);
    let probe = Probe {
        coef: coef(&mut rng, ROWS, h),
        forward: |v: Values<'_>| (ln.forward(v, &as_matrix(v, x, h)).0, 0),
        backward: |v: Values<'_>, g: &mut Grads<'_>, dy: &Matrix| {
            let (_, c) = ln.forward(v, &as_matrix(v, x, h));
            let dx = ln.backward(v, g, &c, dy);
            g.accumulate(x, dx.as_slice());
        },
    };
    run("layer_norm", &probe, &mut store, cfg)
}

fn check_ln_emb(cfg: GradcheckConfig) -> SuiteEntry {
    let mut rng = Rng::new(104);
    let mut store = ParamStore::new();
    let (f, k) = (3, 4);
    let x = input(&mut store, &mut rng, "v_emb", ROWS, f * k);
    let ln = FieldLayerNorm::new(&mut store, "ln_emb", f, k, LN_EPS);
    let ids: Vec<ParamId> = ln.fields.iter().flat_map(|l| [l.gain, l.bias]).collect();
    randomize(&mut store, &mut rng, &ids, 1.0);
    let probe = Probe {
        coef: coef(&mut rng, ROWS, f * k),
        forward: |v: Values<'_>| (ln.forward(v, &as_matrix(v, x, f * k)).expect("width").0, 0),
        backward: |v: Values<'_>, g: &mut Grads<'_>, dy: &Matrix| {
            let (_, c) = ln.forward(v, &as_matrix(v, x, f * k)).expect("width");
            let dx = ln.backward(v, g, &c, dy);
            g.accumulate(x, dx.as_slice());
        },
    };
    run("ln_emb", &probe, &mut store, cfg)
}

fn check_ln_hid(cfg: GradcheckConfig, normalize: bool) -> SuiteEntry {
    let mut rng = Rng::new(105);
    let mut store = ParamStore::new();
    let (t, m) = (6, 4);
    let x = input(&mut store, &mut rng, "x", ROWS, t);
    let layer = LnHid::new(&mut store, &mut rng, "hid", t, m, normalize, LN_EPS);
    if let crate::layers::OutputNorm::LayerNorm(ln) = layer.norm {
        randomize(&mut store, &mut rng, &[ln.gain, ln.bias], 1.0);
    }
    let probe = Probe {
        coef: coef(&mut rng, ROWS, m),
        forward: |v: Values<'_>| {
            let (y, c) = layer.forward(v, &as_matrix(v, x, t));
            let mut fp = 0;
            LnHid::fold_pattern(&c, &mut fp);
            (y, fp)
        },
        backward: |v: Values<'_>, g: &mut Grads<'_>, dy: &Matrix| {
            let xm = as_matrix(v, x, t);
            let (_, c) = layer.forward(v, &xm);
            let dx = layer.backward(v, g, &xm, &c, dy.clone(), true).expect("input grad");
            g.accumulate(x, dx.as_slice());
        },
    };
    let name = if normalize { "ln_hid" } else { "relu_dense" };
    run(name, &probe, &mut store, cfg)
}

fn check_instance_mask(cfg: GradcheckConfig) -> SuiteEntry {
    let mut rng = Rng::new(106);
    let mut store = ParamStore::new();
    let (m, z) = (6, 4);
    let x = input(&mut store, &mut rng, "v_emb", ROWS, m);
    let unit = MaskUnit::new(&mut store, &mut rng, "mask", m, z, 2, 0.0);
    randomize(
        &mut store,
        &mut rng,
        &[unit.aggregation.bias.unwrap(), unit.projection.bias.unwrap()],
        0.5,
    );
    let probe = Probe {
        coef: coef(&mut rng, ROWS, z),
        forward: |v: Values<'_>| {
            let (y, c) = unit.forward(v, &as_matrix(v, x, m));
            let mut fp = 0;
            MaskUnit::fold_pattern(&c, &mut fp);
            (y, fp)
        },
        backward: |v: Values<'_>, g: &mut Grads<'_>, dy: &Matrix| {
            let xm = as_matrix(v, x, m);
            let (_, c) = unit.forward(v, &xm);
            let dx = unit.backward(v, g, &xm, &c, dy);
            g.accumulate(x, dx.as_slice());
        },
    };
    run("instance_mask", &probe, &mut store, cfg)
}

fn check_apply_mask(cfg: GradcheckConfig) -> SuiteEntry {
    let mut rng = Rng::new(107);
    let mut store = ParamStore::new();
    let z = 5;
    let mask = input(&mut store, &mut rng, "mask", ROWS, z);
    let target = input(&mut store, &mut rng, "target", ROWS, z);
    let probe = Probe {
        coef: coef(&mut rng, ROWS, z),
        forward: |v: Values<'_>| {
            (crate::layers::hadamard(&as_matrix(v, mask, z), &as_matrix(v, target, z)), 0)
        },
        backward: |v: Values<'_>, g: &mut Grads<'_>, dy: &Matrix| {
            let dm = crate::layers::hadamard(dy, &as_matrix(v, target, z));
            let dt = crate::layers::hadamard(dy, &as_matrix(v, mask, z));
            g.accumulate(mask, dm.as_slice());
            g.accumulate(target, dt.as_slice());
        },
    };
    run("apply_mask", &probe, &mut store, cfg)
}

fn block_cfg(kind: BlockKind) -> MaskBlockConfig {
    MaskBlockConfig {
        kind,
        width: 4,
        reduction_ratio: 2,
        ablation: Ablation::none(),
        mask_bias_init: 0.0,
        ln_eps: LN_EPS,
    }
}

fn randomize_block(store: &mut ParamStore, rng: &mut Rng, block: &MaskBlock) {
    let mut ids = Vec::new();
    if let Some(u) = &block.mask {
        ids.extend([u.aggregation.bias.unwrap(), u.projection.bias.unwrap()]);
    }
    if let Some(crate::layers::OutputNorm::LayerNorm(ln)) = block.ffn.map(|f| f.norm) {
        ids.extend([ln.gain, ln.bias]);
    }
    randomize(store, rng, &ids, 0.5);
}

fn check_block_on_embedding(cfg: GradcheckConfig) -> SuiteEntry {
    let mut rng = Rng::new(108);
    let mut store = ParamStore::new();
    let (f, k) = (2, 3);
    let m = f * k;
    let x = input(&mut store, &mut rng, "v_emb", ROWS, m);
    let ln = FieldLayerNorm::new(&mut store, "ln_emb", f, k, LN_EPS);
    let block = MaskBlock::new(
        &mut store,
        &mut Rng::new(1),
        &mut Rng::new(2),
        "block",
        &block_cfg(BlockKind::OnEmbedding),
        m,
        m,
    )
    .expect("block");
    randomize_block(&mut store, &mut rng, &block);
    let probe = Probe {
        coef: coef(&mut rng, ROWS, 4),
        forward: |v: Values<'_>| {
            let xm = as_matrix(v, x, m);
            let (normed, _) = ln.forward(v, &xm).expect("width");
            let c = block.forward(v, &xm, &normed);
            let mut fp = 0;
            MaskBlock::fold_pattern(&c, &mut fp);
            (c.output().clone(), fp)
        },
        backward: |v: Values<'_>, g: &mut Grads<'_>, dy: &Matrix| {
            let xm = as_matrix(v, x, m);
            let (normed, lc) = ln.forward(v, &xm).expect("width");
            let c = block.forward(v, &xm, &normed);
            let (d_in, d_mask) = block.backward(v, g, &xm, &normed, &c, dy.clone());
            let d_ln = ln.backward(v, g, &lc, &d_in);
            g.accumulate(x, d_ln.as_slice());
            if let Some(d) = d_mask {
                g.accumulate(x, d.as_slice());
            }
        },
    };
    run("block_on_embedding", &probe, &mut store, cfg)
}

fn check_block_on_block(cfg: GradcheckConfig) -> SuiteEntry {
    let mut rng = Rng::new(109);
    let mut store = ParamStore::new();
    let (m, p) = (6, 5);
    let x = input(&mut store, &mut rng, "v_emb", ROWS, m);
    let prev = input(&mut store, &mut rng, "v_prev", ROWS, p);
    let block = MaskBlock::new(
        &mut store,
        &mut Rng::new(3),
        &mut Rng::new(4),
        "block",
        &block_cfg(BlockKind::OnBlock),
        m,
        p,
    )
    .expect("block");
    randomize_block(&mut store, &mut rng, &block);
    let probe = Probe {
        coef: coef(&mut rng, ROWS, 4),
        forward: |v: Values<'_>| {
            let c = block.forward(v, &as_matrix(v, x, m), &as_matrix(v, prev, p));
            let mut fp = 0;
            MaskBlock::fold_pattern(&c, &mut fp);
            (c.output().clone(), fp)
        },
        backward: |v: Values<'_>, g: &mut Grads<'_>, dy: &Matrix| {
            let (xm, pm) = (as_matrix(v, x, m), as_matrix(v, prev, p));
            let c = block.forward(v, &xm, &pm);
            let (d_prev, d_mask) = block.backward(v, g, &xm, &pm, &c, dy.clone());
            g.accumulate(prev, d_prev.as_slice());
            if let Some(d) = d_mask {
                g.accumulate(x, d.as_slice());
            }
        },
    };
    run("block_on_block", &probe, &mut store, cfg)
}

/// Two categorical fields and one numerical field.
pub fn tiny_schema() -> Arc<FeatureSchema> {
    let vocab = |n: usize| Vocabulary::from_values((0..n).map(|c| format!("c{c}")).collect()).expect("vocab");
    Arc::new(
        FeatureSchema::new(vec![
            Field::categorical("a", vocab(4)),
            Field::categorical("b", vocab(3)),
            Field::numerical("x"),
        ])
        .expect("schema"),
    )
}

pub fn tiny_instances(rng: &mut Rng, n: usize) -> Vec<EncodedInstance> {
    (0..n)
        .map(|_| EncodedInstance {
            values: vec![
                FeatureValue::Categorical(rng.below(5) as u32),
                FeatureValue::Categorical(rng.below(4) as u32),
                FeatureValue::Numerical(rng.normal()),
            ],
            label: u8::from(rng.bernoulli(0.5)),
        })
        .collect()
}

pub fn tiny_spec(topology: Topology) -> ModelSpec {
    ModelSpec {
        topology,
        block_widths: vec![4, 3, 4],
        top_widths: vec![3],
        embedding_dim: 3,
        reduction_ratio: 2,
        seed: 7,
        ..ModelSpec::default()
    }
}

/// Replaces every zero-initialised parameter (head, biases, LN) with random
/// values so that every gradient path carries signal.
pub fn perturb_zero_params(store: &mut ParamStore, seed: u64) {
    let mut rng = Rng::new(seed);
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        let name = &store.info(id).name;
        if name.ends_with(".gain") {
            store.value_mut(id).iter_mut().for_each(|g| *g = 1.0 + 0.3 * rng.normal());
        } else if name.ends_with("bias") || name.starts_with("head") {
            store.value_mut(id).iter_mut().for_each(|b| *b = 0.5 * rng.normal());
        }
    }
}

fn check_model(cfg: GradcheckConfig, name: &str, spec: &ModelSpec) -> SuiteEntry {
    let schema = tiny_schema();
    let mut store = ParamStore::new();
    let net = Network::build(spec, &schema, &mut store).expect("tiny model");
    perturb_zero_params(&mut store, 11);
    if spec.topology == Topology::Linear {
        let ids: Vec<ParamId> = store.ids().collect();
        randomize(&mut store, &mut Rng::new(12), &ids, 0.5);
    }
    let insts = tiny_instances(&mut Rng::new(13), 5);
    let obj = BatchObjective {
        network: &net,
        batch: insts.iter().collect(),
        l2: 1e-3,
    };
    run(name, &obj, &mut store, cfg)
}

/// Every layer, both block kinds, and the serial, parallel, DNN and linear
/// models (the serial model also under each ablation).
pub fn run_suite(cfg: GradcheckConfig) -> Vec<SuiteEntry> {
    let mut out = vec![
        check_dense_affine(cfg),
        check_relu(cfg),
        check_layer_norm(cfg),
        check_ln_emb(cfg),
        check_ln_hid(cfg, true),
        check_ln_hid(cfg, false),
        check_instance_mask(cfg),
        check_apply_mask(cfg),
        check_block_on_embedding(cfg),
        check_block_on_block(cfg),
    ];
    for t in [Topology::Serial, Topology::Parallel, Topology::Dnn, Topology::Linear] {
        out.push(check_model(cfg, &format!("model_{t}"), &tiny_spec(t)));
    }
    for a in ["no_mask", "no_ln", "no_ffn"] {
        let spec = ModelSpec {
            ablation: Ablation::parse(a).expect("ablation"),
            ..tiny_spec(Topology::Serial)
        };
        out.push(check_model(cfg, &format!("model_serial_{a}"), &spec));
    }
    out
}
