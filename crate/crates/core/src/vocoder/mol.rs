use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::kernels::{log1mexp, logsumexp, softplus};
use crate::numerics::{Graph, Scalar, Tensor, Var};

/// Lower bound applied to every mixture log-scale.
pub const LOG_SCALE_MIN: f64 = -7.0;
/// Uniform draws are kept inside `(ε, 1-ε)` so logistic samples stay finite.
pub const SAMPLE_EPS: f64 = 1e-5;

/// One output distribution: `K` logistic components over `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureParams<T = f64> {
    pub logits: Vec<T>,
    pub means: Vec<T>,
    pub log_scales: Vec<T>,
}

impl<T: Scalar> MixtureParams<T> {
    /// Validates lengths and finiteness; log-scales below the floor are raised to it.
    pub fn new(logits: Vec<T>, means: Vec<T>, log_scales: Vec<T>) -> Result<Self> {
        let k = logits.len();
        if k == 0 || means.len() != k || log_scales.len() != k {
            return Err(Error::Shape(format!(
                "mixture needs K ≥ 1 equal-length parts, got {}/{}/{}",
                k,
                means.len(),
                log_scales.len()
            )));
        }
        if logits.iter().chain(&means).chain(&log_scales).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mixture parameters".into()));
        }
        let floor = T::lit(LOG_SCALE_MIN);
        let log_scales = log_scales.into_iter().map(|v| v.max(floor)).collect();
        Ok(Self { logits, means, log_scales })
    }

    /// Splits a head output laid out as `[logits | means | raw log-scales]`.
    pub fn from_head(head: &[T]) -> Result<Self> {
        if head.len() % 3 != 0 {
            return Err(Error::Shape(format!("head width {} is not 3K", head.len())));
        }
        let k = head.len() / 3;
        Self::new(head[..k].to_vec(), head[k..2 * k].to_vec(), head[2 * k..].to_vec())
    }

    pub fn components(&self) -> usize {
        self.logits.len()
    }

    /// Softmax of the logits.
    pub fn weights(&self) -> Vec<T> {
        let lse = logsumexp(&self.logits);
        self.logits.iter().map(|&l| (l - lse).exp()).collect()
    }

    pub fn cast<U: Scalar>(&self) -> MixtureParams<U> {
        let c = |v: &[T]| v.iter().map(|x| U::lit(x.as_f64())).collect();
        MixtureParams {
            logits: c(&self.logits),
            means: c(&self.means),
            log_scales: c(&self.log_scales),
        }
    }
}

fn check_bits(bits: u32) -> Result<()> {
    if !(8..=16).contains(&bits) {
        return Err(Error::Config(format!("bits must be in [8, 16], got {bits}")));
    }
    Ok(())
}

/// Width of one quantization bin, `2 / (2^bits - 1)`.
pub fn bin_width(bits: u32) -> f64 {
    2.0 / ((1u64 << bits) - 1) as f64
}

/// Nearest bin centre of `y`.
pub fn quantize(y: f64, bits: u32) -> f64 {
    let d = bin_width(bits);
    (((y.clamp(-1.0, 1.0) + 1.0) / d).round() * d - 1.0).clamp(-1.0, 1.0)
}

/// Log-probability of the bin around `y`: each component's logistic CDF is
/// differenced over `[y - Δ/2, y + Δ/2]`, the bottom bin extends to -∞ and
/// the top bin to +∞.
pub fn mol_log_prob<T: Scalar>(mp: &MixtureParams<T>, y: T, bits: u32) -> Result<T> {
    check_bits(bits)?;
    if !(y.as_f64() >= -1.0 && y.as_f64() <= 1.0) {
        return Err(Error::Domain(format!("sample {y} outside [-1, 1]")));
    }
    let delta = bin_width(bits);
    let half = T::lit(delta / 2.0);
    let lower_edge = y.as_f64() < -1.0 + delta / 2.0;
    let upper_edge = y.as_f64() > 1.0 - delta / 2.0;
    let lse = logsumexp(&mp.logits);
    let terms: Vec<T> = (0..mp.components())
        .map(|k| {
            let inv_s = (-mp.log_scales[k]).exp();
            let c = y - mp.means[k];
            let plus = inv_s * (c + half);
            let minus = inv_s * (c - half);
            let log_mass = if lower_edge {
                -softplus(-plus)
            } else if upper_edge {
                -softplus(minus)
            } else {
                -softplus(-plus) - softplus(minus) + log1mexp(-T::lit(delta) * inv_s)
            };
            log_mass + mp.logits[k] - lse
        })
        .collect();
    Ok(logsumexp(&terms))
}

/// Draws a component from the softmax weights, then a logistic sample from
/// it, clamped to `[-1, 1]`.
pub fn sample_mol<T: Scalar>(mp: &MixtureParams<T>, rng: &mut impl Rng) -> T {
    let weights = mp.weights();
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut k = weights.len() - 1;
    for (i, w) in weights.iter().enumerate() {
        acc += w.as_f64();
        if u < acc {
            k = i;
            break;
        }
    }
    let v: f64 = rng.gen_range(SAMPLE_EPS..1.0 - SAMPLE_EPS);
    let s = mp.log_scales[k].as_f64().exp();
    let x = mp.means[k].as_f64() + s * (v.ln() - (1.0 - v).ln());
    T::lit(x.clamp(-1.0, 1.0))
}

/// Mean negative log-likelihood of quantized `targets` under the head
/// outputs `head[N × 3K]`, built from graph ops.
pub(crate) fn mol_nll_graph<T: Scalar>(g: &mut Graph<T>, head: Var, targets: &[T], bits: u32) -> Result<Var> {
    check_bits(bits)?;
    let (n, width) = g.value(head).dims2()?;
    if width % 3 != 0 || n != targets.len() {
        return Err(Error::Shape(format!("head [{n}, {width}] for {} targets", targets.len())));
    }
    let k = width / 3;
    let delta = bin_width(bits);
    let logits = g.slice(head, 1, 0, k)?;
    let means = g.slice(head, 1, k, k)?;
    let raw = g.slice(head, 1, 2 * k, k)?;
    let log_scales = g.clamp_min(raw, T::lit(LOG_SCALE_MIN))?;

    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    let mut mid = Vec::with_capacity(n);
    for &y in targets {
        let y = y.as_f64();
        let l = y < -1.0 + delta / 2.0;
        let h = y > 1.0 - delta / 2.0;
        lo.push(if l { T::one() } else { T::zero() });
        hi.push(if h { T::one() } else { T::zero() });
        mid.push(if l || h { T::zero() } else { T::one() });
    }
    let y = g.constant(Tensor::new(&[n, 1], targets.to_vec())?);
    let lo = g.constant(Tensor::new(&[n, 1], lo)?);
    let hi = g.constant(Tensor::new(&[n, 1], hi)?);
    let mid = g.constant(Tensor::new(&[n, 1], mid)?);

    let neg_ls = g.neg(log_scales)?;
    let inv_s = g.exp(neg_ls)?;
    let centered = g.sub(y, means)?;
    let up = g.add_scalar(centered, T::lit(delta / 2.0))?;
    let down = g.add_scalar(centered, T::lit(-delta / 2.0))?;
    let plus = g.mul(inv_s, up)?;
    let minus = g.mul(inv_s, down)?;

    // log σ(plus) and log(1 - σ(minus))
    let neg_plus = g.neg(plus)?;
    let sp_plus = g.softplus(neg_plus)?;
    let log_cdf_plus = g.neg(sp_plus)?;
    let sp_minus = g.softplus(minus)?;
    let log_sf_minus = g.neg(sp_minus)?;
    let width_scaled = g.scale(inv_s, T::lit(-delta))?;
    let log_gap = g.log1mexp(width_scaled)?;
    let interior = g.sub(log_cdf_plus, sp_minus)?;
    let interior = g.add(interior, log_gap)?;

    let a = g.mul(log_cdf_plus, lo)?;
    let b = g.mul(log_sf_minus, hi)?;
    let c = g.mul(interior, mid)?;
    let log_mass = g.add(a, b)?;
    let log_mass = g.add(log_mass, c)?;

    let lse = g.logsumexp(logits, Some(1))?;
    let lse = g.reshape(lse, &[n, 1])?;
    let log_w = g.sub(logits, lse)?;
    let joint = g.add(log_mass, log_w)?;
    let log_p = g.logsumexp(joint, Some(1))?;
    let mean = g.mean(log_p, None)?;
    g.neg(mean)
}
