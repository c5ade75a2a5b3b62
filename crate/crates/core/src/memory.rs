//! Memory-length calibration from image-sorting trials.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_SET_SIZE: usize = 2;
pub const MAX_SET_SIZE: usize = 9;
pub const TRIALS: usize = 3;

/// One round of a sorting trial: `k` items shown in `shown_order`, then
/// recalled as `recovered_order`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SortingRound {
    pub set_size: usize,
    pub shown_order: Vec<usize>,
    pub recovered_order: Vec<usize>,
    pub exposure_seconds: u32,
}

impl SortingRound {
    pub fn new(shown_order: Vec<usize>, recovered_order: Vec<usize>) -> Self {
        let k = shown_order.len();
        SortingRound {
            set_size: k,
            shown_order,
            recovered_order,
            exposure_seconds: exposure_seconds(k),
        }
    }

    pub fn exact(&self) -> bool {
        self.shown_order == self.recovered_order
    }

    fn validate(&self) -> Result<()> {
        if !(MIN_SET_SIZE..=MAX_SET_SIZE).contains(&self.set_size) {
            return Err(Error::InvalidTrial(alloc::format!("set size {} outside [2, 9]", self.set_size)));
        }
        if !is_permutation(&self.shown_order, self.set_size) {
            return Err(Error::InvalidTrial(alloc::format!(
                "shown order of round k={} is not a permutation",
                self.set_size
            )));
        }
        // recovered order must rearrange exactly the shown items
        let mut a = self.shown_order.clone();
        let mut b = self.recovered_order.clone();
        a.sort_unstable();
        b.sort_unstable();
        if a != b {
            return Err(Error::InvalidTrial(alloc::format!(
                "recovered order of round k={} is not a permutation of the shown items",
                self.set_size
            )));
        }
        Ok(())
    }
}

fn is_permutation(order: &[usize], k: usize) -> bool {
    if order.len() != k {
        return false;
    }
    let mut seen = alloc::vec![false; k];
    for &i in order {
        if i >= k || seen[i] {
            return false;
        }
        seen[i] = true;
    }
    true
}

/// Display time for a round of `k` items: 3 s at `k = 2` up to 10 s at `k = 9`.
pub fn exposure_seconds(k: usize) -> u32 {
    3 + k.saturating_sub(MIN_SET_SIZE) as u32
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SortingTrial {
    pub rounds: Vec<SortingRound>,
}

impl SortingTrial {
    pub fn new(rounds: Vec<SortingRound>) -> Result<Self> {
        let t = SortingTrial { rounds };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds.is_empty() {
            return Err(Error::InvalidTrial("trial has no rounds".into()));
        }
        for r in &self.rounds {
            r.validate()?;
        }
        if self.rounds.windows(2).any(|w| w[1].set_size <= w[0].set_size) {
            return Err(Error::InvalidTrial("set sizes must increase within a trial".into()));
        }
        Ok(())
    }
}

/// Largest set size recovered in exactly the shown order, or 1 if none was.
pub fn score_trial(trial: &SortingTrial) -> Result<usize> {
    trial.validate()?;
    Ok(trial.rounds.iter().filter(|r| r.exact()).map(|r| r.set_size).max().unwrap_or(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryProfile {
    pub trial_scores: [usize; TRIALS],
    pub n_bar: f64,
    pub beta: f64,
    pub budget: usize,
}

/// Drop the weakest of three trial scores (the earliest on ties), average the
/// other two into `n̄`, and set `β = 1 − 1/n̄`.
///
/// The budget is looked up with `n̄` clamped into `[2, 9]`.
pub fn estimate_beta(scores: &[usize]) -> Result<MemoryProfile> {
    let s: [usize; TRIALS] = scores.try_into().map_err(|_| Error::TrialCount(scores.len()))?;
    if s.iter().any(|&k| k == 0 || k > MAX_SET_SIZE) {
        return Err(Error::InvalidTrial(alloc::format!("trial scores must lie in [1, 9], got {s:?}")));
    }
    let mut drop = 0;
    for i in 1..TRIALS {
        if s[i] < s[drop] {
            drop = i;
        }
    }
    let kept: usize = s.iter().enumerate().filter(|(i, _)| *i != drop).map(|(_, k)| k).sum();
    let n_bar = kept as f64 / 2.0;
    let beta = (n_bar - 1.0) / n_bar;
    let budget = teaching_budget(n_bar.clamp(MIN_SET_SIZE as f64, MAX_SET_SIZE as f64))?;
    Ok(MemoryProfile {
        trial_scores: s,
        n_bar,
        beta,
        budget,
    })
}

/// Teaching budget for a memory length: 20 on `[2, 4.5]`, 30 on `(4.5, 6.5]`,
/// 40 on `(6.5, 9]`.
pub fn teaching_budget(n_bar: f64) -> Result<usize> {
    if !(2.0..=9.0).contains(&n_bar) {
        return Err(Error::MemoryOutOfRange(n_bar));
    }
    Ok(if n_bar <= 4.5 {
        20
    } else if n_bar <= 6.5 {
        30
    } else {
        40
    })
}
