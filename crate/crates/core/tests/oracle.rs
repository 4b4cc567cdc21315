//! Forward values of the tiny configurations against the plain-loop oracle.

mod support;

use masknet::checks::perturb_zero_params;
use masknet::maskblock::Ablation;
use masknet::model::{Model, ModelSpec, Topology};
use masknet::numeric::Rng;
use support::*;

#[test]
fn block_on_embedding_single_block() {
    let m = model(Topology::Serial, 1, vec![]);
    assert_matches(&m, |o, i| o.serial(i, 1));
}

#[test]
fn block_on_block_chained_serial() {
    let m = model(Topology::Serial, 3, vec![]);
    assert_matches(&m, |o, i| o.serial(i, 3));
}

#[test]
fn parallel_two_blocks_one_top_layer() {
    let m = model(Topology::Parallel, 2, vec![3]);
    assert_matches(&m, |o, i| o.parallel(i, 2));
}

#[test]
fn parallel_without_top_layers() {
    let m = model(Topology::Parallel, 3, vec![]);
    assert_matches(&m, |o, i| o.parallel(i, 3));
}

#[test]
fn doubling_the_embedding_is_not_linear() {
    // a single on-embedding block evaluated at V and 2V
    let m = model(Topology::Serial, 1, vec![]);
    let block = &m.network.blocks()[0];
    let ln = m.network.ln_emb.as_ref().unwrap();
    let mut rng = Rng::new(3);
    let v: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
    let v2: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
    let eval = |x: &[f64]| {
        let xm = masknet::numeric::Matrix::row_vector(x);
        let (normed, _) = ln.forward(m.params.values(), &xm).unwrap();
        block.apply(m.params.values(), x, normed.as_slice()).unwrap()
    };
    let (a, b) = (eval(&v), eval(&v2));
    let gap = a.iter().zip(&b).map(|(x, y)| (2.0 * x - y).abs()).fold(0.0, f64::max);
    assert!(gap > 1e-6, "output scaled linearly (gap {gap})");
}

#[test]
fn ablated_serial_matches_hand_written_mlp() {
    let spec = ModelSpec {
        block_widths: vec![3, 4],
        embedding_dim: 2,
        ablation: Ablation::parse("no_mask,no_ln").unwrap(),
        seed: 4,
        ..ModelSpec::default()
    };
    let mut m = Model::new(&spec, tiny_schema()).unwrap();
    perturb_zero_params(&mut m.params, 8);
    let o = Oracle {
        p: &m.params,
        schema: &m.schema,
        k: 2,
        eps: 0.0,
    };
    for inst in &instances(25) {
        let mut h = o.v_emb(inst);
        for i in 0..2 {
            h = Oracle::relu(o.affine(&format!("block{i}.ffn.weight"), Some(&format!("block{i}.ffn.bias")), &h));
        }
        let expect = o.head(&h);
        let got = m.forward(&[inst]).unwrap().logits[0];
        assert!(close(got, expect), "{got} vs {expect}");
    }
}
