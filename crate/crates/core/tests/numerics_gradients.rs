//! Finite-difference checks for every differentiable primitive of the graph.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scwr::numerics::{Graph, Tensor, Var};

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

/// Builds `sum(f(inputs) ⊙ probe)` so that every output element matters with
/// a distinct weight.
type Build = dyn Fn(&mut Graph<f64>, &[Var]) -> Var;

fn loss_value(inputs: &[Tensor<f64>], probe_seed: u64, build: &Build) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = build(&mut g, &vars);
    let mut rng = ChaCha8Rng::seed_from_u64(probe_seed);
    let probe = g.constant(uniform(&mut rng, g.shape(out), -1.0, 1.0));
    let prod = g.mul(out, probe).unwrap();
    let s = g.sum(prod, None).unwrap();
    g.value(s).item().unwrap()
}

/// Worst relative error between analytic and central-difference gradients.
fn max_rel_error(inputs: &[Tensor<f64>], build: &Build) -> f64 {
    let probe_seed = 99;
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = build(&mut g, &vars);
    let mut rng = ChaCha8Rng::seed_from_u64(probe_seed);
    let probe = g.constant(uniform(&mut rng, g.shape(out), -1.0, 1.0));
    let prod = g.mul(out, probe).unwrap();
    let s = g.sum(prod, None).unwrap();
    let grads = g.backward(s).unwrap();

    let mut worst = 0.0f64;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[k]).unwrap();
        for i in 0..input.numel() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += EPS;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= EPS;
            let numeric = (loss_value(&plus, probe_seed, build)
                - loss_value(&minus, probe_seed, build))
                / (2.0 * EPS);
            let a = analytic.data()[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(err);
        }
    }
    worst
}

fn check(name: &str, inputs: Vec<Tensor<f64>>, build: &Build) {
    let err = max_rel_error(&inputs, build);
    assert!(err <= TOL, "{name}: max relative error {err:e}");
}

#[test]
fn every_primitive_matches_finite_differences() {
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut r = |shape: &[usize]| uniform(&mut rng, shape, -2.0, 2.0);
        let a34 = r(&[3, 4]);
        let b42 = r(&[4, 2]);
        let c34 = r(&[3, 4]);
        let row4 = r(&[4]);
        let col31 = r(&[3, 1]);
        let pos34 = a34.map(|v| v.abs() + 0.1);
        let neg34 = a34.map(|v| -v.abs() - 0.1);
        let denom34 = c34.map(|v| v.signum() * (v.abs() + 0.5));
        let seq63 = r(&[6, 3]);
        let kern5 = r(&[5]);

        check("matmul", vec![a34.clone(), b42.clone()], &|g, v| g.matmul(v[0], v[1]).unwrap());
        check("add", vec![a34.clone(), c34.clone()], &|g, v| g.add(v[0], v[1]).unwrap());
        check("sub", vec![a34.clone(), c34.clone()], &|g, v| g.sub(v[0], v[1]).unwrap());
        check("mul", vec![a34.clone(), c34.clone()], &|g, v| g.mul(v[0], v[1]).unwrap());
        check("div", vec![a34.clone(), denom34.clone()], &|g, v| g.div(v[0], v[1]).unwrap());
        check("add-row-broadcast", vec![a34.clone(), row4.clone()], &|g, v| {
            g.add(v[0], v[1]).unwrap()
        });
        check("mul-col-broadcast", vec![a34.clone(), col31.clone()], &|g, v| {
            g.mul(v[0], v[1]).unwrap()
        });
        check("div-row-broadcast", vec![a34.clone(), row4.map(|v| v + 3.0)], &|g, v| {
            g.div(v[0], v[1]).unwrap()
        });
        check("sigmoid", vec![a34.clone()], &|g, v| g.sigmoid(v[0]).unwrap());
        check("tanh", vec![a34.clone()], &|g, v| g.tanh(v[0]).unwrap());
        check("exp", vec![a34.clone()], &|g, v| g.exp(v[0]).unwrap());
        check("log", vec![pos34.clone()], &|g, v| g.log(v[0]).unwrap());
        check("softplus", vec![a34.clone()], &|g, v| g.softplus(v[0]).unwrap());
        check("sqrt", vec![pos34.clone()], &|g, v| g.sqrt(v[0]).unwrap());
        check("square", vec![a34.clone()], &|g, v| g.square(v[0]).unwrap());
        check("neg", vec![a34.clone()], &|g, v| g.neg(v[0]).unwrap());
        check("log1mexp", vec![neg34.clone()], &|g, v| g.log1mexp(v[0]).unwrap());
        check("scale", vec![a34.clone()], &|g, v| g.scale(v[0], -1.7).unwrap());
        check("add_scalar", vec![a34.clone()], &|g, v| g.add_scalar(v[0], 0.3).unwrap());
        check("sum-axis", vec![a34.clone()], &|g, v| g.sum(v[0], Some(1)).unwrap());
        check("mean-axis", vec![a34.clone()], &|g, v| g.mean(v[0], Some(0)).unwrap());
        check("logsumexp-axis", vec![a34.clone()], &|g, v| g.logsumexp(v[0], Some(1)).unwrap());
        check("logsumexp-all", vec![a34.clone()], &|g, v| g.logsumexp(v[0], None).unwrap());
        check("max-axis", vec![a34.clone()], &|g, v| g.max(v[0], Some(1)).unwrap());
        check("transpose", vec![a34.clone()], &|g, v| g.transpose(v[0]).unwrap());
        check("reshape", vec![a34.clone()], &|g, v| g.reshape(v[0], &[2, 6]).unwrap());
        check("slice", vec![a34.clone()], &|g, v| g.slice(v[0], 1, 1, 2).unwrap());
        check("concat", vec![a34.clone(), c34.clone()], &|g, v| {
            g.concat(&[v[0], v[1], v[0]], 0).unwrap()
        });
        check("repeat_rows", vec![seq63.clone()], &|g, v| g.repeat_rows(v[0], 3).unwrap());
        check("smooth", vec![seq63.clone(), kern5.clone()], &|g, v| {
            g.smooth(v[0], v[1]).unwrap()
        });
        check("unfold", vec![seq63.clone()], &|g, v| g.unfold(v[0], 5).unwrap());
        check("gather_rows", vec![seq63.clone()], &|g, v| g.gather_rows(v[0], &[5, 0, 0, 3, 2]).unwrap());
    }
}

#[test]
fn relu_and_clamp_away_from_kinks() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // keep every input at least 0.05 away from the kink
    let x = Tensor::from_fn(&[4, 5], |_| {
        let v: f64 = rng.gen_range(0.05..2.0);
        if rng.gen_bool(0.5) {
            v
        } else {
            -v
        }
    });
    check("relu", vec![x.clone()], &|g, v| g.relu(v[0]).unwrap());
    check("clamp_min", vec![x], &|g, v| g.clamp_min(v[0], 0.0).unwrap());
}

#[test]
fn composite_gru_cell_gradient() {
    let (b, i, h) = (2, 3, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut r = |shape: &[usize]| uniform(&mut rng, shape, -1.0, 1.0);
    let inputs = vec![
        r(&[b, i]),
        r(&[b, h]),
        r(&[i, 3 * h]),
        r(&[h, 3 * h]),
        r(&[3 * h]),
        r(&[3 * h]),
    ];
    let build = move |g: &mut Graph<f64>, v: &[Var]| {
        let (x, hp, wi, wh, bi, bh) = (v[0], v[1], v[2], v[3], v[4], v[5]);
        let gi = g.matmul(x, wi).unwrap();
        let gi = g.add(gi, bi).unwrap();
        let gh = g.matmul(hp, wh).unwrap();
        let gh = g.add(gh, bh).unwrap();
        let part = |g: &mut Graph<f64>, t: Var, k: usize| g.slice(t, 1, k * h, h).unwrap();
        let (ir, iz, inn) = (part(g, gi, 0), part(g, gi, 1), part(g, gi, 2));
        let (hr, hz, hn) = (part(g, gh, 0), part(g, gh, 1), part(g, gh, 2));
        let r_ = g.add(ir, hr).unwrap();
        let r_ = g.sigmoid(r_).unwrap();
        let z = g.add(iz, hz).unwrap();
        let z = g.sigmoid(z).unwrap();
        let rn = g.mul(r_, hn).unwrap();
        let n = g.add(inn, rn).unwrap();
        let n = g.tanh(n).unwrap();
        let d = g.sub(hp, n).unwrap();
        let zd = g.mul(z, d).unwrap();
        g.add(n, zd).unwrap()
    };
    check("gru-cell", inputs, &build);
}

#[test]
fn backward_is_bit_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = Graph::new();
        let a = g.leaf(uniform(&mut rng, &[5, 7], -2.0, 2.0));
        let b = g.leaf(uniform(&mut rng, &[7, 3], -2.0, 2.0));
        let c = g.matmul(a, b).unwrap();
        let c = g.tanh(c).unwrap();
        let l = g.logsumexp(c, Some(1)).unwrap();
        let s = g.sum(l, None).unwrap();
        let grads = g.backward(s).unwrap();
        (grads.get(a).unwrap().clone(), grads.get(b).unwrap().clone())
    };
    let (a1, b1) = run();
    let (a2, b2) = run();
    assert!(a1.bit_eq(&a2) && b1.bit_eq(&b2));
}
