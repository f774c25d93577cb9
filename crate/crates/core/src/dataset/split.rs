use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DatasetError, DatasetManifest, Split};

/// Stratified train/test split. The train side holds
/// `round(train_fraction · total)` examples unless strata are too small to
/// spare them, shared between strata by largest remainder, so each stratum
/// is within one example of its exact share. Singleton strata cannot be
/// split and are rejected.
pub fn split(manifest: &DatasetManifest, train_fraction: f64, seed: u64) -> Result<DatasetManifest, DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::Invalid(format!("train fraction {train_fraction} not in (0, 1)")));
    }
    let mut strata: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (id, &s) in manifest.strata.iter().enumerate() {
        strata.entry(s).or_default().push(id);
    }
    let quotas = allocate(&strata.values().map(Vec::len).collect::<Vec<_>>(), train_fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for ((key, mut ids), n_train) in strata.into_iter().zip(quotas) {
        ids.shuffle(&mut rng);
        if n_train == 0 || n_train == ids.len() {
            return Err(DatasetError::TooFewExamples(format!(
                "stratum {key} with {} examples leaves an empty train or test side",
                ids.len()
            )));
        }
        test.extend_from_slice(&ids[n_train..]);
        ids.truncate(n_train);
        train.extend(ids);
    }
    train.sort_unstable();
    test.sort_unstable();
    let mut out = manifest.clone();
    out.split = Some(Split { train_fraction, seed, train, test });
    out.normalization = None;
    Ok(out)
}

/// Hamilton apportionment of `round(fraction · Σ sizes)` seats. Strata of
/// two or more keep at least one example on each side, so seats only go to
/// strata with room and the total can fall short when every stratum is
/// nearly full. Ties go to the earlier stratum.
fn allocate(sizes: &[usize], fraction: f64) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let target = (fraction * total as f64).round() as usize;
    let exact: Vec<f64> = sizes.iter().map(|&n| fraction * n as f64).collect();
    let mut quota: Vec<usize> = exact
        .iter()
        .zip(sizes)
        .map(|(e, &n)| if n >= 2 { (e.floor() as usize).clamp(1, n - 1) } else { e.floor() as usize })
        .collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let mut missing = target.saturating_sub(quota.iter().sum());
    for k in order {
        if missing == 0 {
            break;
        }
        if quota[k] + 1 < sizes[k] {
            quota[k] += 1;
            missing -= 1;
        }
    }
    quota
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{CampaignConfig, Task};
    use std::collections::BTreeSet;

    fn manifest(strata: Vec<usize>) -> DatasetManifest {
        DatasetManifest {
            task: Task::Locate3Phi,
            n_buses: 0,
            runs_per_bus: 1,
            seed: 0,
            network_hash: String::new(),
            campaign: CampaignConfig::new(1, 0),
            counts: Default::default(),
            strata,
            scenarios: vec![],
            redraws: 0,
            split: None,
            normalization: None,
            hash: String::new(),
        }
    }

    #[test]
    fn ten_examples() {
        let m = split(&manifest(vec![0; 10]), 0.8, 1).unwrap();
        let s = m.split.unwrap();
        assert_eq!((s.train.len(), s.test.len()), (8, 2));
    }

    #[test]
    fn per_bus_strata_still_give_exact_totals() {
        let strata: Vec<usize> = (0..2300).map(|k| k / 100).collect();
        let s = split(&manifest(strata), 2000.0 / 2300.0, 2).unwrap().split.unwrap();
        assert_eq!((s.train.len(), s.test.len()), (2000, 300));
    }

    #[test]
    fn allocation_hits_target_within_one() {
        for (sizes, f) in [(vec![3, 3, 3], 0.5), (vec![7, 1, 12, 5], 0.3), (vec![100; 23], 0.8)] {
            let q = allocate(&sizes, f);
            let n: usize = sizes.iter().sum();
            assert_eq!(q.iter().sum::<usize>(), (f * n as f64).round() as usize);
            for (qk, sk) in q.iter().zip(&sizes) {
                assert!((*qk as f64 - f * *sk as f64).abs() < 1.0);
            }
        }
    }

    #[test]
    fn small_strata_keep_both_sides() {
        // 0.8 · 4 = 3.2 per stratum; a fourth seat would empty the test side.
        assert_eq!(allocate(&[4; 23], 0.8), vec![3; 23]);
        assert_eq!(allocate(&[2, 10], 0.1), vec![1, 1]);
        let s = split(&manifest((0..92).map(|k| k / 4).collect()), 0.8, 0).unwrap().split.unwrap();
        assert_eq!((s.train.len(), s.test.len()), (69, 23));
    }

    #[test]
    fn two_thousand_of_twenty_three_hundred() {
        let m = split(&manifest(vec![3; 2300]), 2000.0 / 2300.0, 11).unwrap();
        let s = m.split.unwrap();
        assert_eq!((s.train.len(), s.test.len()), (2000, 300));
    }

    #[test]
    fn disjoint_exhaustive_and_stratified() {
        let strata: Vec<usize> = (0..517).map(|i| (i * 7 + i / 3) % 5).collect();
        let frac = 0.73;
        let m = split(&manifest(strata.clone()), frac, 5).unwrap();
        let s = m.split.unwrap();
        let train: BTreeSet<_> = s.train.iter().copied().collect();
        let test: BTreeSet<_> = s.test.iter().copied().collect();
        assert!(train.is_disjoint(&test));
        assert_eq!(train.len() + test.len(), 517);
        for class in 0..5 {
            let total = strata.iter().filter(|&&c| c == class).count();
            let in_train = s.train.iter().filter(|&&i| strata[i] == class).count();
            assert!((in_train as f64 - frac * total as f64).abs() <= 1.0);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let m = manifest((0..100).map(|i| i % 4).collect());
        assert_eq!(split(&m, 0.8, 9).unwrap().split, split(&m, 0.8, 9).unwrap().split);
        assert_ne!(split(&m, 0.8, 9).unwrap().split, split(&m, 0.8, 10).unwrap().split);
    }

    #[test]
    fn singleton_class_is_rejected() {
        let mut strata = vec![0; 20];
        strata.push(1);
        assert!(matches!(split(&manifest(strata), 0.8, 0), Err(DatasetError::TooFewExamples(_))));
    }
}
