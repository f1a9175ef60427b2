use super::model::l2_normalize_rows;
use super::SpeakerEmbedding;
use crate::error::{Error, Result};
use crate::numerics::{Graph, Scalar, Tensor, Var};

/// Learned scale and offset of the similarity matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ge2eParams {
    pub w: f64,
    pub b: f64,
}

impl Default for Ge2eParams {
    fn default() -> Self {
        Self { w: 10.0, b: -5.0 }
    }
}

/// `S·U × S` scaled cosine similarities, rows ordered speaker-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    pub speakers: usize,
    pub utterances: usize,
    pub values: Vec<f64>,
}

impl SimilarityMatrix {
    /// Similarity of utterance `j` of speaker `i` to centroid `k`.
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[(i * self.utterances + j) * self.speakers + k]
    }
}

fn check_batch(speakers: usize, utterances: usize, rows: usize) -> Result<()> {
    if speakers < 2 || utterances < 2 {
        return Err(Error::Data(format!(
            "GE2E needs at least 2 speakers with 2 utterances each, got {speakers}×{utterances}"
        )));
    }
    if rows != speakers * utterances {
        return Err(Error::Shape(format!(
            "{rows} embeddings for a {speakers}×{utterances} batch"
        )));
    }
    Ok(())
}

/// Builds the similarity matrix on `g` from `[S·U, D]` embeddings and the
/// scalar-shaped `w`, `b`. Utterances are compared against the centroid of
/// the other utterances of their own speaker and the full centroid of every
/// other speaker. Embeddings and centroids are re-normalized before the dot
/// product, so the result is invariant to positive rescaling.
pub fn similarity_graph<T: Scalar>(
    g: &mut Graph<T>,
    embeddings: Var,
    w: Var,
    b: Var,
    speakers: usize,
    utterances: usize,
) -> Result<Var> {
    let (rows, _) = match g.shape(embeddings) {
        [r, d] => (*r, *d),
        s => return Err(Error::Shape(format!("embeddings must be rank 2, got {s:?}"))),
    };
    check_batch(speakers, utterances, rows)?;
    let (s, u) = (speakers, utterances);
    let inv_u = T::lit(1.0 / u as f64);
    let averaging = g.constant(Tensor::from_fn(&[s, s * u], |i| {
        if (i % (s * u)) / u == i / (s * u) { inv_u } else { T::zero() }
    }));
    let own = Tensor::from_fn(&[s * u, s], |i| {
        if (i / s) / u == i % s { T::one() } else { T::zero() }
    });
    let other = own.map(|v| T::one() - v);
    let own = g.constant(own);
    let other = g.constant(other);

    let e = l2_normalize_rows(g, embeddings)?;
    let centroids = g.matmul(averaging, e)?;
    // centroid of the remaining U-1 utterances: (U·c_i - e_ij) / (U-1)
    let own_centroid = g.matmul(own, centroids)?;
    let own_centroid = g.scale(own_centroid, T::lit(u as f64))?;
    let excl = g.sub(own_centroid, e)?;
    let excl = g.scale(excl, T::lit(1.0 / (u as f64 - 1.0)))?;

    let centroids = l2_normalize_rows(g, centroids)?;
    let excl = l2_normalize_rows(g, excl)?;
    let ct = g.transpose(centroids)?;
    let cos_all = g.matmul(e, ct)?;
    let cos_self = g.mul(e, excl)?;
    let cos_self = g.sum(cos_self, Some(1))?;

    let cross = g.mul(cos_all, other)?;
    let diag = g.mul(cos_self, own)?;
    let cos = g.add(cross, diag)?;
    let scaled = g.mul(cos, w)?;
    g.add(scaled, b)
}

/// Softmax GE2E loss summed over every utterance of the batch.
pub fn ge2e_loss_graph<T: Scalar>(g: &mut Graph<T>, sm: Var, speakers: usize, utterances: usize) -> Result<Var> {
    let rows = match g.shape(sm) {
        [r, c] if *c == speakers => *r,
        s => return Err(Error::Shape(format!("similarity matrix shape {s:?}"))),
    };
    check_batch(speakers, utterances, rows)?;
    let own = g.constant(Tensor::from_fn(&[rows, speakers], |i| {
        if (i / speakers) / utterances == i % speakers { T::one() } else { T::zero() }
    }));
    let lse = g.logsumexp(sm, Some(1))?;
    let picked = g.mul(sm, own)?;
    let picked = g.sum(picked, Some(1))?;
    let per_row = g.sub(lse, picked)?;
    g.sum(per_row, None)
}

/// Similarity matrix of speaker-major embeddings.
pub fn similarity_matrix(
    embeddings: &[SpeakerEmbedding],
    speakers: usize,
    utterances: usize,
    params: Ge2eParams,
) -> Result<SimilarityMatrix> {
    check_batch(speakers, utterances, embeddings.len())?;
    let d = embeddings[0].dim();
    if embeddings.iter().any(|e| e.dim() != d) {
        return Err(Error::Shape("embeddings of different dimensions".into()));
    }
    let flat: Vec<f64> = embeddings.iter().flat_map(|e| e.values().iter().copied()).collect();
    let mut g = Graph::<f64>::new();
    let e = g.constant(Tensor::new(&[embeddings.len(), d], flat)?);
    let w = g.constant(Tensor::from_vec(vec![params.w]));
    let b = g.constant(Tensor::from_vec(vec![params.b]));
    let sm = similarity_graph(&mut g, e, w, b, speakers, utterances)?;
    Ok(SimilarityMatrix {
        speakers,
        utterances,
        values: g.value(sm).data().to_vec(),
    })
}

/// GE2E loss of a finished similarity matrix.
pub fn ge2e_loss(sm: &SimilarityMatrix) -> Result<f64> {
    let rows = sm.speakers * sm.utterances;
    let mut g = Graph::<f64>::new();
    let v = g.constant(Tensor::new(&[rows, sm.speakers], sm.values.clone())?);
    let loss = ge2e_loss_graph(&mut g, v, sm.speakers, sm.utterances)?;
    g.value(loss).item()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: &[f64]) -> SpeakerEmbedding {
        SpeakerEmbedding::normalized(v.to_vec()).unwrap()
    }

    #[test]
    fn orthogonal_speakers() {
        let e = [unit(&[1.0, 0.0]), unit(&[1.0, 0.0]), unit(&[0.0, 1.0]), unit(&[0.0, 1.0])];
        let sm = similarity_matrix(&e, 2, 2, Ge2eParams { w: 1.0, b: 0.0 }).unwrap();
        assert!((sm.get(0, 0, 0) - 1.0).abs() < 1e-9);
        assert!(sm.get(0, 0, 1).abs() < 1e-9);
        let loss = ge2e_loss(&sm).unwrap();
        assert!((loss - 1.253048).abs() < 1e-5, "{loss}");
    }

    #[test]
    fn identical_embeddings() {
        let e = vec![unit(&[0.6, 0.8]); 4];
        let sm = similarity_matrix(&e, 2, 2, Ge2eParams { w: 1.0, b: 0.0 }).unwrap();
        let loss = ge2e_loss(&sm).unwrap();
        assert!((loss - 4.0 * 2f64.ln()).abs() < 1e-6, "{loss}");
    }

    #[test]
    fn rejects_single_utterance() {
        let e = vec![unit(&[1.0, 0.0]); 2];
        assert!(matches!(
            similarity_matrix(&e, 2, 1, Ge2eParams::default()),
            Err(Error::Data(_))
        ));
        assert!(matches!(
            similarity_matrix(&e, 2, 2, Ge2eParams::default()),
            Err(Error::Shape(_))
        ));
    }
}
