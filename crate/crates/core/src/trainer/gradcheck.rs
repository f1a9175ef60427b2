use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{BoundParams, Graph, ParamStore, Var};

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    pub eps: f64,
    /// Coordinates sampled per tensor; smaller tensors are checked whole.
    pub coords_per_tensor: usize,
    /// Relative errors use `max(|analytic|, |numeric|, floor)` as denominator.
    pub floor: f64,
    /// Error above which a coordinate is inspected for a kink.
    pub tol: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            coords_per_tensor: 200,
            floor: 1e-5,
            tol: 1e-4,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Tensor and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    /// Coordinates whose one-sided differences disagree with each other as
    /// much as with the analytic value: the step crossed a non-differentiable
    /// point (a ReLU or clamp kink) and the central difference is meaningless.
    pub kinks: usize,
}

fn evaluate<F>(loss: &F, store: &ParamStore<f64>) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &BoundParams) -> Result<Var>,
{
    let mut g = Graph::new();
    let bound = store.bind(&mut g, false);
    let v = loss(&mut g, &bound)?;
    let value = g.value(v).item()?;
    if !value.is_finite() {
        return Err(Error::NonFinite("loss under gradient check".into()));
    }
    Ok(value)
}

/// Compares reverse-mode gradients of `loss` with central differences on a
/// random subsample of every parameter tensor.
pub fn gradient_check<F>(
    loss: F,
    params: &ParamStore<f64>,
    cfg: &GradCheckConfig,
    rng: &mut impl Rng,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &BoundParams) -> Result<Var>,
{
    let mut g = Graph::new();
    let bound = params.bind(&mut g, true);
    let out = loss(&mut g, &bound)?;
    let base = g.value(out).item()?;
    if !base.is_finite() {
        return Err(Error::NonFinite("loss under gradient check".into()));
    }
    let grads = bound.gradients(params, &g.backward(out)?);
    drop(g);

    let mut report = GradCheckReport::default();
    let mut probe = params.clone();
    for (name, t) in params.iter() {
        let n = t.numel();
        let coords: Vec<usize> = if n <= cfg.coords_per_tensor {
            (0..n).collect()
        } else {
            let mut c = sample(rng, n, cfg.coords_per_tensor).into_vec();
            c.sort_unstable();
            c
        };
        let analytic = grads.get(name)?.data().to_vec();
        for i in coords {
            let x = t.data()[i];
            probe.get_mut(name)?.data_mut()[i] = x + cfg.eps;
            let up = evaluate(&loss, &probe)?;
            probe.get_mut(name)?.data_mut()[i] = x - cfg.eps;
            let down = evaluate(&loss, &probe)?;
            probe.get_mut(name)?.data_mut()[i] = x;
            let numeric = (up - down) / (2.0 * cfg.eps);
            let a = analytic[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(cfg.floor);
            report.checked += 1;
            if rel > cfg.tol {
                let forward = (up - base) / cfg.eps;
                let backward = (base - down) / cfg.eps;
                let spread = (forward - backward).abs() / forward.abs().max(backward.abs()).max(cfg.floor);
                if spread > 0.5 * rel {
                    report.kinks += 1;
                    continue;
                }
            }
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((name.to_string(), i));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_is_exact() {
        let mut p = ParamStore::new();
        p.insert("x", Tensor::from_fn(&[300], |i| 0.5 + i as f64 / 300.0));
        let report = gradient_check(
            |g, b| {
                let x = b.var("x")?;
                let sq = g.square(x)?;
                let s = g.scale(sq, 0.5)?;
                g.sum(s, None)
            },
            &p,
            &GradCheckConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        assert_eq!(report.checked, 200);
        assert!(report.max_rel_error < 1e-8, "{report:?}");
    }

    #[test]
    fn kinks_are_counted_separately() {
        let mut p = ParamStore::new();
        p.insert("x", Tensor::from_vec(vec![0.5, 1.0]));
        // clamp_min passes gradient only above the bound, so perturbing
        // around 1.0 with a clamp at 1.0 is a kink, and 0.5 is flat
        let report = gradient_check(
            |g, b| {
                let x = b.var("x")?;
                let c = g.clamp_min(x, 1.0)?;
                g.sum(c, None)
            },
            &p,
            &GradCheckConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        assert_eq!(report.kinks, 1);
        assert_eq!(report.max_rel_error, 0.0);
    }
}
