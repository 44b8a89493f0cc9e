use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{input, param, Result};
use crate::sampling::LabeledDataset;

/// Shuffled split with `round(ratio * n)` training rows (at least one row on each side).
///
/// Both halves keep the bounds of the input.
pub fn split_train_test(data: &LabeledDataset, ratio: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return param(format!("split ratio must lie in (0, 1), got {ratio}"));
    }
    let n = data.len();
    if n < 2 {
        return input(format!("cannot split a dataset of {n} points"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
    Ok((data.subset(&idx[..k]), data.subset(&idx[k..])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Points;

    fn line(n: usize) -> LabeledDataset {
        let rows: Vec<[f64; 2]> = (0..n).map(|i| [i as f64, 0.0]).collect();
        let labels = (0..n).map(|i| 1 + (i % 2) as u32).collect();
        LabeledDataset::new(Points::from_rows(2, &rows).unwrap(), labels, 2).unwrap()
    }

    #[test]
    fn nine_to_one() {
        let (tr, te) = split_train_test(&line(100), 0.9, 3).unwrap();
        assert_eq!((tr.len(), te.len()), (90, 10));
    }

    #[test]
    fn union_is_input_and_deterministic() {
        let d = line(57);
        let (tr, te) = split_train_test(&d, 0.7, 9).unwrap();
        let mut xs: Vec<u64> = tr.points.iter().chain(te.points.iter()).map(|p| p[0].to_bits()).collect();
        xs.sort();
        let mut want: Vec<u64> = d.points.iter().map(|p| p[0].to_bits()).collect();
        want.sort();
        assert_eq!(xs, want);
        assert_eq!(split_train_test(&d, 0.7, 9).unwrap().0, tr);
    }

    #[test]
    fn tiny_and_bad_ratio_rejected() {
        assert!(split_train_test(&line(1), 0.5, 0).is_err());
        assert!(split_train_test(&line(10), 1.0, 0).is_err());
    }
}
