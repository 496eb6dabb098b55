//! Helpers shared by the integration test targets.

#![allow(dead_code)]

use cadec::model::ModelConfig;
use cadec::tensor::{Graph, Tensor, Var};
use cadec::training::Trainable;
use cadec::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
pub const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Random entries bounded away from zero so ReLU kinks are never crossed.
pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.1..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

pub type OpFn = dyn Fn(&mut Graph, &[Var]) -> Result<Var>;

/// Projects `f`'s output onto a fixed random tensor and compares the
/// gradient of every input element with central differences.
pub fn check_op(name: &str, shapes: &[&[usize]], f: &OpFn) {
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs: Vec<Tensor> = shapes.iter().map(|s| rand_tensor(&mut rng, s)).collect();
        let probe = {
            let mut g = Graph::new();
            let vs: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
            let out = f(&mut g, &vs).unwrap();
            rand_tensor(&mut rng, g.value(out).shape())
        };
        let eval = |ins: &[Tensor]| -> f64 {
            let mut g = Graph::new();
            let vs: Vec<Var> = ins.iter().map(|t| g.constant(t.clone())).collect();
            let out = f(&mut g, &vs).unwrap();
            g.value(out).data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
        };
        let mut g = Graph::new();
        let vs: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
        let out = f(&mut g, &vs).unwrap();
        let p = g.constant(probe.clone());
        let prod = g.mul(out, p).unwrap();
        let loss = g.sum(prod);
        let grads = g.backward(loss).unwrap();
        for (k, v) in vs.iter().enumerate() {
            let analytic = grads.get(*v).expect("input received no gradient");
            for i in 0..inputs[k].len() {
                let mut plus = inputs.clone();
                plus[k].data_mut()[i] += H;
                let mut minus = inputs.clone();
                minus[k].data_mut()[i] -= H;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * H);
                let e = rel_err(analytic.data()[i], numeric);
                assert!(
                    e <= TOL,
                    "{name}: seed {seed} input {k}[{i}] analytic {} numeric {numeric} rel {e:e}",
                    analytic.data()[i]
                );
            }
        }
    }
}

/// Compares analytic parameter gradients of `loss` with central differences
/// on every scalar parameter of `model`.
pub fn check_params<M: Trainable>(name: &str, model: &mut M, loss: &dyn Fn(&M, &mut Graph) -> Var) {
    let mut g = Graph::new();
    let l = loss(model, &mut g);
    let grads = g.backward(l).unwrap().for_store(model.params());
    let ids: Vec<_> = model.params().ids().collect();
    let mut checked = 0;
    for id in ids {
        let analytic = grads[id.index()].clone();
        for i in 0..model.params().get(id).len() {
            let orig = model.params().get(id).data()[i];
            let mut at = |x: f64| {
                model.params_mut().get_mut(id).data_mut()[i] = x;
                let mut g = Graph::new();
                let l = loss(model, &mut g);
                g.value(l).item()
            };
            let numeric = (at(orig + H) - at(orig - H)) / (2.0 * H);
            model.params_mut().get_mut(id).data_mut()[i] = orig;
            let a = analytic.as_ref().map_or(0.0, |t| t.data()[i]);
            let e = rel_err(a, numeric);
            assert!(
                e <= TOL,
                "{name}: {}[{i}] analytic {a} numeric {numeric} rel {e:e}",
                model.params().name(id)
            );
            checked += 1;
        }
    }
    assert_eq!(checked, model.params().num_scalars());
}

pub fn micro_config() -> ModelConfig {
    ModelConfig {
        n_layers: 1,
        n_heads: 2,
        d_model: 8,
        d_ff: 8,
        max_context: 2,
        src_vocab: 9,
        tgt_vocab: 9,
        max_len: 6,
        zero_init_output: false,
    }
}


/// Every differentiable graph op with input shapes.
pub fn op_cases() -> Vec<(&'static str, Vec<Vec<usize>>, Box<OpFn>)> {
    fn case(name: &'static str, shapes: &[&[usize]], f: Box<OpFn>) -> (&'static str, Vec<Vec<usize>>, Box<OpFn>) {
        (name, shapes.iter().map(|s| s.to_vec()).collect(), f)
    }
    vec![
        case("matmul", &[&[3, 4], &[4, 2]], Box::new(|g, v| g.matmul(v[0], v[1]))),
        case("matmul_nt", &[&[3, 4], &[5, 4]], Box::new(|g, v| g.matmul_nt(v[0], v[1]))),
        case("transpose", &[&[3, 4]], Box::new(|g, v| g.transpose(v[0]))),
        case("add", &[&[3, 4], &[3, 4]], Box::new(|g, v| g.add(v[0], v[1]))),
        case("sub", &[&[3, 4], &[3, 4]], Box::new(|g, v| g.sub(v[0], v[1]))),
        case("mul", &[&[3, 4], &[3, 4]], Box::new(|g, v| g.mul(v[0], v[1]))),
        case("scale", &[&[3, 4]], Box::new(|g, v| Ok(g.scale(v[0], -1.7)))),
        case("add_row", &[&[3, 4], &[4]], Box::new(|g, v| g.add_row(v[0], v[1]))),
        case("relu", &[&[3, 4]], Box::new(|g, v| Ok(g.relu(v[0])))),
        case("sum", &[&[3, 4]], Box::new(|g, v| Ok(g.sum(v[0])))),
        case("softmax rows", &[&[3, 5]], Box::new(|g, v| g.softmax(v[0], 1))),
        case("softmax cols", &[&[3, 5]], Box::new(|g, v| g.softmax(v[0], 0))),
        case("log_softmax", &[&[3, 5]], Box::new(|g, v| Ok(g.log_softmax(v[0])))),
        case("layer_norm", &[&[3, 6], &[6], &[6]], Box::new(|g, v| g.layer_norm(v[0], v[1], v[2]))),
        case("cross_entropy", &[&[4, 5]], Box::new(|g, v| g.cross_entropy(v[0], &[0, 3, 4, 3]))),
        case("embedding", &[&[6, 4]], Box::new(|g, v| g.embedding(v[0], &[2, 5, 2, 0]))),
        case("concat_cols", &[&[3, 2], &[3, 4]], Box::new(|g, v| g.concat_cols(&[v[0], v[1]]))),
        case("concat_rows", &[&[2, 3], &[4, 3]], Box::new(|g, v| g.concat_rows(&[v[0], v[1]]))),
        case("slice_cols", &[&[3, 6]], Box::new(|g, v| g.slice_cols(v[0], 2, 3))),
        case("slice_rows", &[&[5, 3]], Box::new(|g, v| g.slice_rows(v[0], 1, 3))),
        case("attention", &[&[3, 4], &[5, 4], &[5, 4]], Box::new(|g, v| g.attention(v[0], v[1], v[2], 2, false))),
        case("causal attention", &[&[4, 6], &[4, 6], &[4, 6]], Box::new(|g, v| g.attention(v[0], v[1], v[2], 3, true))),
    ]
}

/// Finite-difference check of a CADec micro-model on a fixed three-sentence
/// input.
pub fn check_cadec_micro(seed: u64) {
    use cadec::model::{BaseModel, CadecModel};
    let base = BaseModel::new(micro_config(), seed).unwrap();
    let mut cadec = CadecModel::new(micro_config(), seed + 100).unwrap();
    let srcs: [&[usize]; 3] = [&[5, 6], &[7], &[8, 5, 6]];
    let ctx: [&[usize]; 2] = [&[6, 7], &[5]];
    let mem = base.cadec_input(&srcs, &[7, 8], &ctx).unwrap().memory(&cadec.cfg).unwrap();
    check_params(&format!("cadec seed {seed}"), &mut cadec, &|m, g| m.loss(g, &mem, &[7, 6, 8], true).unwrap());
}

pub fn check_base_micro(seed: u64) {
    use cadec::model::BaseModel;
    let mut base = BaseModel::new(micro_config(), seed).unwrap();
    check_params(&format!("base seed {seed}"), &mut base, &|m, g| m.loss(g, &[5, 6, 7], &[8, 5], true).unwrap());
}
