use crate::error::RetrievalError;

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0f64;
    let mut na = 0f64;
    let mut nb = 0f64;
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// Greedy Maximum Marginal Relevance over `candidates`, returning indices in
/// selection order.
///
/// The first pick maximizes relevance to `query`. Each later pick maximizes
/// `lambda * cos(query, d) - (1 - lambda) * max_s cos(d, s)` over the
/// selected set. Ties go to the lowest index.
pub fn mmr_indices<V: AsRef<[f32]>>(
    query: &[f32],
    candidates: &[V],
    k: usize,
    lambda: f64,
) -> Result<Vec<usize>, RetrievalError> {
    for c in candidates {
        if c.as_ref().len() != query.len() {
            return Err(RetrievalError::DimensionMismatch {
                expected: query.len(),
                actual: c.as_ref().len(),
            });
        }
    }
    let n = candidates.len();
    let k = k.min(n);
    let relevance: Vec<f64> = candidates.iter().map(|c| cosine(query, c.as_ref())).collect();
    // Highest similarity of each candidate to anything selected so far.
    let mut redundancy = vec![f64::NEG_INFINITY; n];
    let mut taken = vec![false; n];
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..n).filter(|&i| !taken[i]) {
            let score = if out.is_empty() {
                relevance[i]
            } else {
                lambda * relevance[i] - (1.0 - lambda) * redundancy[i]
            };
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((i, score));
            }
        }
        let (pick, _) = best.expect("k is clamped to the candidate count");
        taken[pick] = true;
        out.push(pick);
        for i in (0..n).filter(|&i| !taken[i]) {
            redundancy[i] = redundancy[i].max(cosine(candidates[i].as_ref(), candidates[pick].as_ref()));
        }
    }
    Ok(out)
}
