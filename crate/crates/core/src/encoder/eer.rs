use crate::error::{Error, Result};

/// Equal error rate of a verification score set, accepting when
/// `score >= threshold`. Every distinct operating point is visited; at the
/// one where false acceptance and false rejection are closest the two rates
/// are averaged.
pub fn eer(genuine: &[f64], impostor: &[f64]) -> Result<f64> {
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::Data("EER needs genuine and impostor scores".into()));
    }
    if genuine.iter().chain(impostor).any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("verification score".into()));
    }
    let mut scores: Vec<(f64, bool)> = genuine
        .iter()
        .map(|&s| (s, true))
        .chain(impostor.iter().map(|&s| (s, false)))
        .collect();
    scores.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (ng, ni) = (genuine.len() as f64, impostor.len() as f64);
    // threshold below everything: all accepted
    let (mut rejected_gen, mut rejected_imp) = (0usize, 0usize);
    let mut best = (f64::INFINITY, f64::INFINITY);
    let mut consider = |rg: usize, ri: usize| {
        let frr = rg as f64 / ng;
        let far = (ni - ri as f64) / ni;
        let gap = (far - frr).abs();
        let mid = 0.5 * (far + frr);
        if gap < best.0 || (gap == best.0 && mid < best.1) {
            best = (gap, mid);
        }
    };
    consider(0, 0);
    let mut i = 0;
    while i < scores.len() {
        let s = scores[i].0;
        while i < scores.len() && scores[i].0 == s {
            if scores[i].1 {
                rejected_gen += 1;
            } else {
                rejected_imp += 1;
            }
            i += 1;
        }
        consider(rejected_gen, rejected_imp);
    }
    Ok(best.1)
}
