use alloc::format;
use alloc::vec::Vec;

use crate::data::ODSeries;
use crate::diffmath::Tensor;
use crate::error::{Error, Result};

/// The K selected OD pairs as scalar series.
#[derive(Debug, Clone, PartialEq)]
pub struct PairView {
    /// `(origin, destination)` station indices, in entity order.
    pub pairs: Vec<(usize, usize)>,
    /// `[T, K, 1]`.
    pub flows: Tensor,
}

/// Picks the `k` pairs with the largest mean flow over the training bins,
/// ties broken by `(origin, destination)` ascending.
pub fn flatten_pairs(series: &ODSeries, k: usize, train_fraction: f64) -> Result<PairView> {
    let n = series.num_stations();
    if k == 0 || k > n * n {
        return Err(Error::config(format!("K={k} must lie in 1..={}", n * n)));
    }
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(Error::config(format!(
            "train fraction must lie in (0, 1], got {train_fraction}"
        )));
    }
    let total = series.num_bins();
    let train_bins = (libm::floor(total as f64 * train_fraction + 1e-9) as usize).clamp(1, total);
    let per = n * n;
    let data = series.flows.data();
    let mut means: Vec<(f64, usize)> = (0..per)
        .map(|pair| {
            let s: f64 = (0..train_bins).map(|t| data[t * per + pair]).sum();
            (s / train_bins as f64, pair)
        })
        .collect();
    // pair index order is (origin, destination) lexicographic
    means.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let chosen: Vec<usize> = means.iter().take(k).map(|&(_, p)| p).collect();
    let mut out = Vec::with_capacity(total * k);
    for t in 0..total {
        out.extend(chosen.iter().map(|&p| data[t * per + p]));
    }
    Ok(PairView {
        pairs: chosen.iter().map(|&p| (p / n, p % n)).collect(),
        flows: Tensor::new(alloc::vec![total, k, 1], out)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn series(data: Vec<f64>, n: usize) -> ODSeries {
        let t = data.len() / (n * n);
        let names = (0..n).map(|i| i.to_string()).collect();
        ODSeries::contiguous(names, 0, 1800, Tensor::new(vec![t, n, n], data).unwrap()).unwrap()
    }

    #[test]
    fn hand_ranked_two_by_two() {
        // means: A→A 0, A→B 5, B→A 3, B→B 0
        let s = series(vec![0.0, 4.0, 2.0, 0.0, 0.0, 6.0, 4.0, 0.0], 2);
        let v = flatten_pairs(&s, 2, 1.0).unwrap();
        assert_eq!(v.pairs, vec![(0, 1), (1, 0)]);
        assert_eq!(v.flows.data(), &[4.0, 2.0, 6.0, 4.0]);
    }

    #[test]
    fn ties_prefer_lower_indices() {
        let s = series(vec![1.0, 1.0, 1.0, 1.0], 2);
        let v = flatten_pairs(&s, 3, 1.0).unwrap();
        assert_eq!(v.pairs, vec![(0, 0), (0, 1), (1, 0)]);
    }

    #[test]
    fn all_pairs_conserve_flow() {
        let data: Vec<f64> = (0..27).map(|i| ((i * 7) % 5) as f64).collect();
        let s = series(data, 3);
        let v = flatten_pairs(&s, 9, 0.7).unwrap();
        assert_eq!(v.flows.sum(), s.total_flow());
        let mut seen = v.pairs.clone();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 9);
    }

    #[test]
    fn k_out_of_range() {
        let s = series(vec![0.0; 4], 2);
        assert!(flatten_pairs(&s, 0, 1.0).is_err());
        assert!(flatten_pairs(&s, 5, 1.0).is_err());
    }
}
