//! Plain-slice linear algebra kernels shared by the graph and the
//! inference paths.
//!
//! Each output row is produced by exactly one task with a fixed reduction
//! order, so results do not depend on the thread count.

use rayon::prelude::*;

use super::Scalar;

const PAR_THRESHOLD: usize = 1 << 18;

fn parallel(work: usize, rows: usize) -> bool {
    work >= PAR_THRESHOLD && rows > 1 && rayon::current_num_threads() > 1
}

/// `out[m×n] = a[m×k] · b[k×n]`.
pub fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    if n == 0 {
        return out;
    }
    let row = |(i, o): (usize, &mut [T])| {
        let ar = &a[i * k..(i + 1) * k];
        for (p, &av) in ar.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            axpy(av, &b[p * n..(p + 1) * n], o);
        }
    };
    if parallel(m * k * n, m) {
        out.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        out.chunks_mut(n).enumerate().for_each(row);
    }
    out
}

/// `out[m×n] = a[m×k] · b[n×k]ᵀ`.
pub fn matmul_nt<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    if n == 0 {
        return out;
    }
    let row = |(i, o): (usize, &mut [T])| {
        let ar = &a[i * k..(i + 1) * k];
        for (j, v) in o.iter_mut().enumerate() {
            *v = dot(ar, &b[j * k..(j + 1) * k]);
        }
    };
    if parallel(m * k * n, m) {
        out.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        out.chunks_mut(n).enumerate().for_each(row);
    }
    out
}

/// `out[k×n] = a[m×k]ᵀ · b[m×n]`.
pub fn matmul_tn<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); k * n];
    if n == 0 {
        return out;
    }
    let row = |(p, o): (usize, &mut [T])| {
        for i in 0..m {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            axpy(av, &b[i * n..(i + 1) * n], o);
        }
    };
    if parallel(m * k * n, k) {
        out.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        out.chunks_mut(n).enumerate().for_each(row);
    }
    out
}

/// `out += x · w` for a row vector `x` and row-major `w[x.len() × out.len()]`.
pub fn vecmat_acc<T: Scalar>(x: &[T], w: &[T], out: &mut [T]) {
    let n = out.len();
    for (p, &xv) in x.iter().enumerate() {
        if xv == T::zero() {
            continue;
        }
        axpy(xv, &w[p * n..(p + 1) * n], out);
    }
}

#[inline]
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv = *yv + alpha * xv;
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc = acc + x * y;
    }
    acc
}

/// Numerically stable `log(1 + e^x)`.
#[inline]
pub fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `log(1 - e^x)` for `x < 0`.
#[inline]
pub fn log1mexp<T: Scalar>(x: T) -> T {
    // Switch point from Mächler's note on accurate log(1 - exp(-a)).
    if x > T::lit(-std::f64::consts::LN_2) {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// Max-shifted `log Σ exp(x)`.
pub fn logsumexp<T: Scalar>(xs: &[T]) -> T {
    let m = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<T>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_variants_agree() {
        let a: Vec<f64> = (0..12).map(|v| v as f64 * 0.5 - 2.0).collect(); // 3×4
        let b: Vec<f64> = (0..8).map(|v| 1.0 - v as f64 * 0.25).collect(); // 4×2
        let c = matmul(&a, &b, 3, 4, 2);
        // bᵀ stored as 2×4
        let bt: Vec<f64> = (0..8).map(|i| b[(i % 4) * 2 + i / 4]).collect();
        assert_eq!(c, matmul_nt(&a, &bt, 3, 4, 2));
        // aᵀ stored as 4×3
        let at: Vec<f64> = (0..12).map(|i| a[(i % 3) * 4 + i / 3]).collect();
        assert_eq!(c, matmul_tn(&at, &b, 4, 3, 2));
    }

    #[test]
    fn log1mexp_matches_direct_formula() {
        for &x in &[-1e-8f64, -0.1, -0.69, -0.7, -3.0, -40.0] {
            let reference = (-x.exp_m1()).ln();
            assert!((log1mexp(x) - reference).abs() <= 1e-12 * reference.abs().max(1.0));
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0f64), 1000.0);
        assert!(softplus(-1000.0f64) >= 0.0);
        for i in -50..=50 {
            let x = i as f64 / 10.0;
            assert!((softplus(x) - (1.0 + x.exp()).ln()).abs() < 1e-12);
        }
    }
}
