use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Scalar, Tensor};

/// Adam with optional global gradient-norm clipping.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: Option<f64>,
    pub step: u64,
    pub m: ParamStore<T>,
    pub v: ParamStore<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &ParamStore<T>, lr: f64, clip_norm: Option<f64>) -> Self {
        let zeros = |p: &ParamStore<T>| {
            let mut s = ParamStore::new();
            for (n, t) in p.iter() {
                s.insert(n, Tensor::zeros(t.shape()));
            }
            s
        };
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm,
            step: 0,
            m: zeros(params),
            v: zeros(params),
        }
    }

    /// Applies one update and returns the gradient norm before clipping.
    /// Non-finite gradients are rejected without touching the parameters.
    pub fn update(&mut self, params: &mut ParamStore<T>, grads: &ParamStore<T>) -> Result<f64> {
        params.check_layout(grads)?;
        params.check_layout(&self.m)?;
        let norm = global_norm(grads);
        if !norm.is_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        let scale = match self.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let lr = self.lr;
        let eps = self.eps;
        for (((_, p), (_, g)), ((_, m), (_, v))) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let (p, m, v) = (p.data_mut(), m.data_mut(), v.data_mut());
            for i in 0..p.len() {
                let gi = g.data()[i].as_f64() * scale;
                let mi = b1 * m[i].as_f64() + (1.0 - b1) * gi;
                let vi = b2 * v[i].as_f64() + (1.0 - b2) * gi * gi;
                m[i] = T::lit(mi);
                v[i] = T::lit(vi);
                let update = lr * (mi / c1) / ((vi / c2).sqrt() + eps);
                p[i] = T::lit(p[i].as_f64() - update);
            }
        }
        Ok(norm)
    }
}

/// L2 norm over every entry of every tensor.
pub fn global_norm<T: Scalar>(grads: &ParamStore<T>) -> f64 {
    grads
        .iter()
        .map(|(_, t)| t.data().iter().map(|v| v.as_f64().powi(2)).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(v: Vec<f64>) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("x", Tensor::from_vec(v));
        s
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = store(vec![1.0, -1.0]);
        let mut opt = Adam::new(&p, 0.1, None);
        opt.update(&mut p, &store(vec![3.0, -0.5])).unwrap();
        let x = p.get("x").unwrap().data();
        assert!((x[0] - 0.9).abs() < 1e-6);
        assert!((x[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn clipping_reports_raw_norm() {
        let mut p = store(vec![0.0, 0.0]);
        let mut opt = Adam::new(&p, 0.1, Some(1.0));
        let n = opt.update(&mut p, &store(vec![3.0, 4.0])).unwrap();
        assert_eq!(n, 5.0);
    }

    #[test]
    fn nan_gradient_is_rejected() {
        let mut p = store(vec![1.0]);
        let mut opt = Adam::new(&p, 0.1, None);
        assert!(opt.update(&mut p, &store(vec![f64::NAN])).is_err());
        assert_eq!(p.get("x").unwrap().data()[0], 1.0);
        assert_eq!(opt.step, 0);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = store(vec![5.0]);
        let mut opt = Adam::new(&p, 0.1, None);
        for _ in 0..500 {
            let x = p.get("x").unwrap().data()[0];
            opt.update(&mut p, &store(vec![2.0 * (x - 2.0)])).unwrap();
        }
        assert!((p.get("x").unwrap().data()[0] - 2.0).abs() < 1e-2);
    }

    #[test]
    fn square_from_one_in_200_steps() {
        let run = || {
            let mut p = store(vec![1.0]);
            let mut opt = Adam::new(&p, 0.05, Some(3.0));
            for _ in 0..200 {
                let x = p.get("x").unwrap().data()[0];
                opt.update(&mut p, &store(vec![2.0 * x])).unwrap();
            }
            p
        };
        let a = run();
        assert!(a.get("x").unwrap().data()[0].abs() < 1e-2);
        assert!(a.bit_eq(&run()));
    }
}
