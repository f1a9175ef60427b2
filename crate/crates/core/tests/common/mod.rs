//! Oracles shared by the integration tests.

use rand::Rng;

/// Literal double loop over the definitions.
pub fn brute_force(e: &[Vec<f64>], s: usize, u: usize, w: f64, b: f64) -> (Vec<f64>, f64) {
    let d = e[0].len();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cos = |a: &[f64], c: &[f64]| {
        let mut dot = 0.0;
        for k in 0..d {
            dot += a[k] * c[k];
        }
        dot / (norm(a) * norm(c))
    };
    let mut sm = vec![0.0; s * u * s];
    let mut loss = 0.0;
    for i in 0..s {
        for j in 0..u {
            let eij = &e[i * u + j];
            for k in 0..s {
                let mut c = vec![0.0; d];
                let mut count = 0.0;
                for m in 0..u {
                    if k == i && m == j {
                        continue;
                    }
                    count += 1.0;
                    for x in 0..d {
                        c[x] += e[k * u + m][x];
                    }
                }
                for x in c.iter_mut() {
                    *x /= count;
                }
                sm[(i * u + j) * s + k] = w * cos(eij, &c) + b;
            }
            let row = &sm[(i * u + j) * s..(i * u + j + 1) * s];
            let mut z = 0.0;
            for k in 0..s {
                z += row[k].exp();
            }
            loss += -row[i] + z.ln();
        }
    }
    (sm, loss)
}

pub fn random_unit(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}
