use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::error::{Error, Result};

/// Keep the `k` most probable entries, then the shortest descending-probability
/// prefix whose mass reaches `p`, and renormalise. Ties go to the lower index.
pub fn filter_top_k_top_p(probs: &[f64], k: usize, p: f64) -> Result<Vec<f64>> {
    if k < 1 {
        return Err(Error::InvalidArgument(format!("top-k must be at least 1, got {k}")));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidArgument(format!("top-p must be in (0, 1], got {p}")));
    }
    if probs.is_empty() || probs.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidArgument("probabilities must be finite and non-negative".into()));
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    order.truncate(k);
    let kept_mass: f64 = order.iter().map(|&i| probs[i]).sum();
    if kept_mass <= 0.0 {
        return Err(Error::InvalidArgument("distribution has no mass".into()));
    }
    let mut keep = 0;
    let mut cum = 0.0;
    for &i in &order {
        cum += probs[i] / kept_mass;
        keep += 1;
        if cum >= p {
            break;
        }
    }
    order.truncate(keep);
    let mass: f64 = order.iter().map(|&i| probs[i]).sum();
    let mut out = vec![0.0; probs.len()];
    for &i in &order {
        out[i] = probs[i] / mass;
    }
    Ok(out)
}

pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Result<usize> {
    let dist = WeightedIndex::new(probs).map_err(|e| Error::InvalidArgument(format!("cannot sample: {e}")))?;
    Ok(dist.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_examples() {
        let p = [0.5, 0.3, 0.2];
        assert_eq!(filter_top_k_top_p(&p, 3, 1.0).unwrap(), p.to_vec());
        assert_eq!(filter_top_k_top_p(&p, 2, 1.0).unwrap(), vec![0.5 / (0.5 + 0.3), 0.3 / (0.5 + 0.3), 0.0]);
        assert_eq!(filter_top_k_top_p(&p, 3, 0.5).unwrap(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn ties_prefer_lower_index() {
        assert_eq!(filter_top_k_top_p(&[0.25; 4], 2, 1.0).unwrap(), vec![0.5, 0.5, 0.0, 0.0]);
        assert_eq!(filter_top_k_top_p(&[0.2, 0.4, 0.4], 1, 1.0).unwrap(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(filter_top_k_top_p(&[1.0], 0, 1.0).is_err());
        assert!(filter_top_k_top_p(&[1.0], 1, 0.0).is_err());
        assert!(filter_top_k_top_p(&[1.0], 1, 1.5).is_err());
    }
}
