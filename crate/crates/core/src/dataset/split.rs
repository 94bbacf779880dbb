use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Catalog;
use crate::error::{Error, Result};
use crate::seed::rng_for;

const SPLIT_TAG: u64 = 0x5917;

/// Sizes of the learning pool and the fixed evaluation set carved out of the
/// test images for active-learning experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub learning_size: usize,
    pub testing_size: usize,
    pub step: usize,
    pub runs: usize,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self, available: usize) -> Result<()> {
        if self.step == 0 {
            return Err(Error::param("step", "must be at least 1"));
        }
        if self.runs == 0 {
            return Err(Error::param("runs", "must be at least 1"));
        }
        let needed = self.learning_size + self.testing_size;
        if needed > available {
            return Err(Error::SplitTooLarge { needed, available });
        }
        Ok(())
    }
}

/// Disjoint learning and testing index sets over `0..total`, both sorted.
pub fn split_indices(total: usize, spec: &SplitSpec, run: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    spec.validate(total)?;
    if run >= spec.runs {
        return Err(Error::param(
            "run",
            format!("run {run} out of range for {} runs", spec.runs),
        ));
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng_for(spec.seed, SPLIT_TAG, run as u64));
    let mut learning = order[..spec.learning_size].to_vec();
    let mut testing =
        order[spec.learning_size..spec.learning_size + spec.testing_size].to_vec();
    learning.sort_unstable();
    testing.sort_unstable();
    Ok((learning, testing))
}

/// Splits the catalog's test images; indices refer to
/// [`Catalog::test_images`].
pub fn split_for_learning(
    catalog: &Catalog,
    spec: &SplitSpec,
    run: usize,
) -> Result<(Vec<usize>, Vec<usize>)> {
    split_indices(catalog.test_images().len(), spec, run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(l: usize, t: usize) -> SplitSpec {
        SplitSpec {
            learning_size: l,
            testing_size: t,
            step: 20,
            runs: 10,
            seed: 4,
        }
    }

    #[test]
    fn sizes_and_disjointness() {
        let (l, t) = split_indices(680, &spec(180, 500), 0).unwrap();
        assert_eq!((l.len(), t.len()), (180, 500));
        assert!(l.iter().all(|i| t.binary_search(i).is_err()));
    }

    #[test]
    fn empty_learning_set() {
        let (l, t) = split_indices(50, &spec(0, 50), 3).unwrap();
        assert!(l.is_empty());
        assert_eq!(t.len(), 50);
    }

    #[test]
    fn runs_differ() {
        let s = spec(180, 500);
        let runs: Vec<_> = (0..10).map(|r| split_indices(680, &s, r).unwrap().0).collect();
        for i in 0..runs.len() {
            for j in i + 1..runs.len() {
                assert_ne!(runs[i], runs[j]);
            }
        }
    }

    #[test]
    fn oversized_split_fails() {
        assert!(matches!(
            split_indices(100, &spec(60, 50), 0),
            Err(Error::SplitTooLarge { .. })
        ));
        assert!(split_indices(100, &spec(10, 10), 10).is_err());
    }

    proptest! {
        #[test]
        fn always_disjoint(total in 1usize..300, l in 0usize..150, t in 0usize..150, run in 0usize..10, seed: u64) {
            prop_assume!(l + t <= total);
            let s = SplitSpec { learning_size: l, testing_size: t, step: 1, runs: 10, seed };
            let (a, b) = split_indices(total, &s, run).unwrap();
            prop_assert_eq!(a.len(), l);
            prop_assert_eq!(b.len(), t);
            prop_assert!(a.iter().all(|i| b.binary_search(i).is_err() && *i < total));
            prop_assert_eq!(split_indices(total, &s, run).unwrap(), (a, b));
        }
    }
}
