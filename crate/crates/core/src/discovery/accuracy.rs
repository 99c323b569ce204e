//! Clustering accuracy under the best global relabeling of clusters.

use super::DiscoveryError;

/// Largest `k` searched exhaustively (8! = 40320 bijections).
pub const MAX_BRUTE_FORCE_K: usize = 8;

/// All permutations of `0..k` in lexicographic order.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..k).collect();
    loop {
        out.push(p.clone());
        // next lexicographic permutation
        let Some(i) = (1..k).rev().find(|&i| p[i - 1] < p[i]) else {
            return out;
        };
        let j = (i..k).rev().find(|&j| p[j] > p[i - 1]).unwrap();
        p.swap(i - 1, j);
        p[i..].reverse();
    }
}

/// Best mean agreement between `predicted` cluster ids and `truth` labels
/// over every bijection cluster → label, both in `0..k`. Returns the
/// accuracy and the maximizing bijection (`assignment[cluster] = label`);
/// among equally good bijections the lexicographically first wins.
pub fn permutation_accuracy(
    predicted: &[usize],
    truth: &[usize],
    k: usize,
) -> Result<(f64, Vec<usize>), DiscoveryError> {
    if predicted.len() != truth.len() {
        return Err(DiscoveryError::LengthMismatch {
            predicted: predicted.len(),
            truth: truth.len(),
        });
    }
    if predicted.is_empty() {
        return Err(DiscoveryError::InvalidArgument("no labeled pairs".into()));
    }
    if k == 0 || k > MAX_BRUTE_FORCE_K {
        return Err(DiscoveryError::InvalidArgument(format!(
            "k must be in 1..={MAX_BRUTE_FORCE_K}, got {k}"
        )));
    }
    if let Some(&bad) = predicted.iter().chain(truth).find(|&&v| v >= k) {
        return Err(DiscoveryError::InvalidArgument(format!("label {bad} outside 0..{k}")));
    }
    let mut confusion = vec![0usize; k * k];
    for (&p, &t) in predicted.iter().zip(truth) {
        confusion[p * k + t] += 1;
    }
    let mut best = (0, Vec::new());
    for perm in permutations(k) {
        let hits: usize = perm.iter().enumerate().map(|(c, &l)| confusion[c * k + l]).sum();
        if best.1.is_empty() || hits > best.0 {
            best = (hits, perm);
        }
    }
    Ok((best.0 as f64 / predicted.len() as f64, best.1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutation_enumeration() {
        let p = permutations(4);
        assert_eq!(p.len(), 24);
        assert_eq!(p[0], vec![0, 1, 2, 3]);
        assert_eq!(p[23], vec![3, 2, 1, 0]);
        assert!(p.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(permutations(1), vec![vec![0]]);
    }

    #[test]
    fn exact_and_relabeled_clusters_score_one() {
        let truth = [0, 1, 2, 3, 3, 2, 1, 0];
        let (acc, assign) = permutation_accuracy(&truth, &truth, 4).unwrap();
        assert_eq!((acc, assign), (1.0, vec![0, 1, 2, 3]));
        let cycled: Vec<usize> = truth.iter().map(|t| (t + 1) % 4).collect();
        let (acc, assign) = permutation_accuracy(&cycled, &truth, 4).unwrap();
        assert_eq!(acc, 1.0);
        assert_eq!(assign, vec![3, 0, 1, 2]);
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        assert!(matches!(
            permutation_accuracy(&[0, 1], &[0], 2),
            Err(DiscoveryError::LengthMismatch { predicted: 2, truth: 1 })
        ));
    }
}
