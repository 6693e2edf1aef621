use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    /// Ascending row indices.
    pub train: Vec<usize>,
    /// Ascending row indices.
    pub test: Vec<usize>,
    pub seed: u64,
    pub ratio: f64,
}

/// Number of test rows for `n` rows at `ratio`, rounding halves up.
pub fn test_size(n: usize, ratio: f64) -> usize {
    (n as f64 * ratio).round() as usize
}

/// Seeded random train/test split over rows labelled `labels`.
///
/// With `stratified`, each class contributes `floor(n_k · ratio)` test rows
/// and the remaining quota goes to the largest fractional parts (ties to the
/// lower class), so the total is still `round(N · ratio)`.
pub fn split_dataset(labels: &[usize], test_ratio: f64, seed: u64, stratified: bool) -> Result<SplitResult> {
    let n = labels.len();
    if n < 10 {
        return Err(Error::InvalidArgument(format!("need at least 10 rows to split, got {n}")));
    }
    if !(test_ratio > 0.0 && test_ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("test ratio must be in (0, 1), got {test_ratio}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = test_size(n, test_ratio);

    let (mut test, mut train) = if stratified {
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
        for (i, &y) in labels.iter().enumerate() {
            by_class[y].push(i);
        }
        let exact: Vec<f64> = by_class.iter().map(|c| c.len() as f64 * test_ratio).collect();
        let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut order: Vec<usize> = (0..n_classes).collect();
        order.sort_by(|&a, &b| {
            let (fa, fb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        let mut missing = target.saturating_sub(quota.iter().sum());
        for &k in order.iter().cycle().take(n_classes * 2) {
            if missing == 0 {
                break;
            }
            if quota[k] < by_class[k].len() {
                quota[k] += 1;
                missing -= 1;
            }
        }
        let (mut test, mut train) = (Vec::new(), Vec::new());
        for (k, rows) in by_class.iter_mut().enumerate() {
            if rows.is_empty() {
                continue;
            }
            if quota[k] >= rows.len() {
                return Err(Error::ClassMissingFromTrain(k));
            }
            rows.shuffle(&mut rng);
            test.extend_from_slice(&rows[..quota[k]]);
            train.extend_from_slice(&rows[quota[k]..]);
        }
        (test, train)
    } else {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let train = perm.split_off(target);
        (perm, train)
    };
    test.sort_unstable();
    train.sort_unstable();
    Ok(SplitResult {
        train,
        test,
        seed,
        ratio: test_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ten_rows() {
        for seed in 0..20 {
            let s = split_dataset(&[0; 10], 0.3, seed, false).unwrap();
            assert_eq!(s.test.len(), 3);
            assert_eq!(s.train.len(), 7);
        }
    }

    #[test]
    fn stratified_sixty_forty() {
        let labels: Vec<usize> = (0..100).map(|i| usize::from(i >= 60)).collect();
        let s = split_dataset(&labels, 0.3, 7, true).unwrap();
        let ones = s.test.iter().filter(|&&i| labels[i] == 1).count();
        assert_eq!(s.test.len(), 30);
        assert!((17..=19).contains(&(30 - ones)));
        assert!((11..=13).contains(&ones));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(split_dataset(&[0; 9], 0.3, 0, false).is_err());
        assert!(split_dataset(&[0; 10], 0.0, 0, false).is_err());
        assert!(split_dataset(&[0; 10], 1.0, 0, false).is_err());
        // a singleton class would land entirely in test at ratio 0.9
        let mut labels = vec![0; 20];
        labels[3] = 1;
        assert!(matches!(
            split_dataset(&labels, 0.96, 0, true),
            Err(Error::ClassMissingFromTrain(_))
        ));
    }

    proptest! {
        #[test]
        fn partition_holds(n in 10usize..400, ratio in 0.05f64..0.95, seed in any::<u64>(), strat in any::<bool>(), k in 1usize..5) {
            let labels: Vec<usize> = (0..n).map(|i| (i * 7 + i / 3) % k).collect();
            let Ok(s) = split_dataset(&labels, ratio, seed, strat) else { return Ok(()) };
            prop_assert_eq!(s.test.len(), test_size(n, ratio));
            let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            if strat {
                for c in 0..k {
                    let nk = labels.iter().filter(|&&y| y == c).count();
                    let tk = s.test.iter().filter(|&&i| labels[i] == c).count() as i64;
                    prop_assert!((tk - test_size(nk, ratio) as i64).abs() <= 1);
                }
            }
        }
    }
}
