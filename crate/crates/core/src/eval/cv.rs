//! Seeded k-fold splits and the nested cross-validation plan.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, RngStream};

/// Shuffles `0..n` with `seed`, then cuts it into `k` contiguous chunks whose
/// sizes differ by at most one. Each returned fold is sorted.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k > n {
        return Err(Error::Invalid(format!(
            "cannot split {n} items into {k} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    RngStream::new(seed).derive("kfold", 0).shuffle(&mut order);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut fold = order[start..start + len].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += len;
    }
    Ok(folds)
}

/// Everything in `0..n` not in `test` (which must be sorted).
pub fn complement(n: usize, test: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(n - test.len());
    let mut t = test.iter().peekable();
    for i in 0..n {
        if t.peek() == Some(&&i) {
            t.next();
        } else {
            out.push(i);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoldPlan {
    pub outer_k: usize,
    pub outer_repeats: usize,
    pub inner_k: usize,
    pub inner_repeats: usize,
    pub seed: u64,
}

impl Default for FoldPlan {
    fn default() -> Self {
        Self {
            outer_k: 10,
            outer_repeats: 10,
            inner_k: 10,
            inner_repeats: 5,
            seed: 0,
        }
    }
}

/// One outer fold: indices into the cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterFold {
    pub repeat: usize,
    pub fold: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl OuterFold {
    /// Position of this fold in the flattened `(repeat, fold)` order.
    pub fn ordinal(&self, plan: &FoldPlan) -> u64 {
        (self.repeat * plan.outer_k + self.fold) as u64
    }
}

/// One inner split, with indices into the cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerFold {
    pub repeat: usize,
    pub fold: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

impl FoldPlan {
    pub fn validate(&self) -> Result<()> {
        if self.outer_k < 2 || self.inner_k < 2 {
            return Err(Error::Invalid(
                "outer and inner fold counts must be at least 2".into(),
            ));
        }
        if self.outer_repeats == 0 || self.inner_repeats == 0 {
            return Err(Error::Invalid("repeat counts must be at least 1".into()));
        }
        Ok(())
    }

    pub fn outer_folds(&self, n: usize) -> Result<Vec<OuterFold>> {
        self.validate()?;
        let mut out = Vec::with_capacity(self.outer_k * self.outer_repeats);
        for r in 0..self.outer_repeats {
            let folds = kfold_split(n, self.outer_k, derive_seed(self.seed, "outer", r as u64))?;
            for (f, test) in folds.into_iter().enumerate() {
                out.push(OuterFold {
                    repeat: r,
                    fold: f,
                    train: complement(n, &test),
                    test,
                });
            }
        }
        Ok(out)
    }

    /// Inner splits of an outer training set.
    pub fn inner_folds(&self, outer: &OuterFold) -> Result<Vec<InnerFold>> {
        let m = outer.train.len();
        let mut out = Vec::with_capacity(self.inner_k * self.inner_repeats);
        for r in 0..self.inner_repeats {
            let idx = outer.ordinal(self) * self.inner_repeats as u64 + r as u64;
            let folds = kfold_split(m, self.inner_k, derive_seed(self.seed, "inner", idx))?;
            for (f, val_local) in folds.into_iter().enumerate() {
                let train_local = complement(m, &val_local);
                out.push(InnerFold {
                    repeat: r,
                    fold: f,
                    train: train_local.iter().map(|&i| outer.train[i]).collect(),
                    val: val_local.iter().map(|&i| outer.train[i]).collect(),
                });
            }
        }
        Ok(out)
    }
}
