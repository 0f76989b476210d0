//! Which programs to cache: exact 0/1 knapsack and enumeration of every
//! capacity-feasible subset.

use serde::{Deserialize, Serialize};

use crate::catalog::ProgramCatalog;
use crate::error::{Error, Result};

/// Largest catalog for which all subsets may be enumerated.
pub const MAX_ENUMERATED_PROGRAMS: usize = 20;
/// Upper bound on the size of the knapsack decision table.
pub const MAX_KNAPSACK_CELLS: u128 = 200_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnapsackItem {
    /// Program id.
    pub index: usize,
    /// Net value in profit units.
    pub value: f64,
    /// Storage units, already scaled to integers.
    pub weight: u64,
}

/// A caching decision `x_j in {0, 1}` over the catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheSet {
    members: Vec<bool>,
    total_weight: u64,
    total_value: f64,
}

impl CacheSet {
    pub fn empty(programs: usize) -> Self {
        Self { members: vec![false; programs], total_weight: 0, total_value: 0.0 }
    }

    /// Membership only; weight and value are left at zero.
    pub fn from_indices(programs: usize, indices: &[usize]) -> Self {
        let mut set = Self::empty(programs);
        for &j in indices {
            set.members[j] = true;
        }
        set
    }

    pub fn full(programs: usize) -> Self {
        Self { members: vec![true; programs], total_weight: 0, total_value: 0.0 }
    }

    pub fn with_totals(mut self, total_weight: u64, total_value: f64) -> Self {
        self.total_weight = total_weight;
        self.total_value = total_value;
        self
    }

    pub fn contains(&self, j: usize) -> bool {
        self.members.get(j).copied().unwrap_or(false)
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().enumerate().filter(|(_, &m)| m).map(|(j, _)| j)
    }

    pub fn members(&self) -> &[bool] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.members.iter().any(|&m| m)
    }

    pub fn num_programs(&self) -> usize {
        self.members.len()
    }

    pub fn total_weight(&self) -> u64 {
        self.total_weight
    }

    pub fn total_value(&self) -> f64 {
        self.total_value
    }

    /// Ordering key: smaller caches first, then lexicographic on the sorted
    /// member indices.
    pub fn order_key(&self) -> (usize, Vec<usize>) {
        (self.len(), self.indices().collect())
    }
}

/// Exact 0/1 knapsack by dynamic programming over integer capacity.
///
/// Items with nonpositive value are never selected. Items are processed in
/// index order and an item only replaces the incumbent on a strict
/// improvement, so the result does not depend on the input order.
pub fn knapsack_01(items: &[KnapsackItem], capacity: u64, num_programs: usize) -> Result<CacheSet> {
    let mut sorted: Vec<KnapsackItem> = items.to_vec();
    sorted.sort_by_key(|it| it.index);
    for pair in sorted.windows(2) {
        if pair[0].index == pair[1].index {
            return Err(Error::DuplicateItem(pair[0].index));
        }
    }
    for it in &sorted {
        if it.index >= num_programs {
            return Err(Error::invalid(
                format!("items[{}].index", it.index),
                format!("must be below the program count {num_programs}"),
            ));
        }
        if it.weight == 0 {
            return Err(Error::NonIntegerWeight { index: it.index, scaled: 0.0 });
        }
        if !it.value.is_finite() {
            return Err(Error::invalid(format!("items[{}].value", it.index), "must be finite"));
        }
    }
    sorted.retain(|it| it.value > 0.0 && it.weight <= capacity);

    let total: u64 = sorted.iter().map(|it| it.weight).sum();
    let cap = capacity.min(total) as usize;
    let cells = (sorted.len() as u128) * (cap as u128 + 1);
    if cells > MAX_KNAPSACK_CELLS {
        return Err(Error::KnapsackTooLarge { cells, limit: MAX_KNAPSACK_CELLS });
    }

    let mut best = vec![0.0_f64; cap + 1];
    let mut take = vec![vec![false; cap + 1]; sorted.len()];
    for (i, it) in sorted.iter().enumerate() {
        let w = it.weight as usize;
        for c in (w..=cap).rev() {
            let candidate = best[c - w] + it.value;
            if candidate > best[c] {
                best[c] = candidate;
                take[i][c] = true;
            }
        }
    }

    let mut chosen = Vec::new();
    let mut c = cap;
    for (i, it) in sorted.iter().enumerate().rev() {
        if take[i][c] {
            chosen.push(*it);
            c -= it.weight as usize;
        }
    }
    chosen.reverse();

    let indices: Vec<usize> = chosen.iter().map(|it| it.index).collect();
    let weight = chosen.iter().map(|it| it.weight).sum();
    let value = chosen.iter().fold(0.0, |acc, it| acc + it.value);
    Ok(CacheSet::from_indices(num_programs, &indices).with_totals(weight, value))
}

/// All subsets of the catalog whose total size fits in `capacity`, smaller
/// subsets first and lexicographic within a size.
pub fn enumerate_feasible_subsets(catalog: &ProgramCatalog, capacity: f64) -> Result<FeasibleSubsets> {
    let n = catalog.len();
    if n > MAX_ENUMERATED_PROGRAMS {
        return Err(Error::TooManySubsets { programs: n, limit: MAX_ENUMERATED_PROGRAMS });
    }
    Ok(FeasibleSubsets {
        weights: catalog.scaled_weights()?,
        capacity: catalog.scaled_capacity(capacity),
        size: 0,
        combo: Some(Vec::new()),
    })
}

#[derive(Debug, Clone)]
pub struct FeasibleSubsets {
    weights: Vec<u64>,
    capacity: u64,
    size: usize,
    combo: Option<Vec<usize>>,
}

impl FeasibleSubsets {
    fn advance(&mut self) {
        let n = self.weights.len();
        let Some(combo) = self.combo.as_mut() else { return };
        let k = combo.len();
        // rightmost position that can still move right
        if let Some(i) = (0..k).rev().find(|&i| combo[i] < n - k + i) {
            combo[i] += 1;
            for t in i + 1..k {
                combo[t] = combo[t - 1] + 1;
            }
            return;
        }
        self.size += 1;
        self.combo = (self.size <= n).then(|| (0..self.size).collect());
    }
}

impl Iterator for FeasibleSubsets {
    type Item = CacheSet;

    fn next(&mut self) -> Option<CacheSet> {
        loop {
            let current = self.combo.clone()?;
            self.advance();
            let weight: u64 = current.iter().map(|&j| self.weights[j]).sum();
            if weight <= self.capacity {
                return Some(CacheSet::from_indices(self.weights.len(), &current).with_totals(weight, 0.0));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Program;

    fn unit_catalog(n: usize, capacity: f64) -> ProgramCatalog {
        ProgramCatalog::new(
            (0..n)
                .map(|_| Program { popularity: 1.0 / n as f64, workload: 1e8, size: 1.0, acquisition_cost: 1.0 })
                .collect(),
            capacity,
        )
    }

    fn item(index: usize, value: f64, weight: u64) -> KnapsackItem {
        KnapsackItem { index, value, weight }
    }

    #[test]
    fn picks_two_most_valuable_unit_items() {
        let set = knapsack_01(&[item(0, 5.0, 1), item(1, 4.0, 1), item(2, 3.0, 1)], 2, 3).unwrap();
        assert_eq!(set.indices().collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(set.total_value(), 9.0);
        assert_eq!(set.total_weight(), 2);
    }

    #[test]
    fn negative_items_are_never_taken() {
        let set = knapsack_01(&[item(0, -1.0, 1), item(1, 2.0, 1)], 10, 2).unwrap();
        assert_eq!(set.indices().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn zero_capacity_takes_nothing() {
        let set = knapsack_01(&[item(0, 1.0, 1)], 0, 1).unwrap();
        assert!(set.is_empty());
    }

    #[test]
    fn rejects_bad_items() {
        assert!(matches!(knapsack_01(&[item(0, 1.0, 1), item(0, 2.0, 1)], 2, 1), Err(Error::DuplicateItem(0))));
        assert!(knapsack_01(&[item(0, 1.0, 0)], 2, 1).is_err());
        assert!(knapsack_01(&[item(3, 1.0, 1)], 2, 1).is_err());
    }

    #[test]
    fn input_order_does_not_matter() {
        let items = [item(0, 3.0, 2), item(1, 3.0, 2), item(2, 3.0, 2), item(3, 1.0, 1)];
        let a = knapsack_01(&items, 4, 4).unwrap();
        let mut rev = items;
        rev.reverse();
        let b = knapsack_01(&rev, 4, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn subset_counts() {
        assert_eq!(enumerate_feasible_subsets(&unit_catalog(3, 2.0), 2.0).unwrap().count(), 7);
        assert_eq!(enumerate_feasible_subsets(&unit_catalog(3, 0.0), 0.0).unwrap().count(), 1);
        assert_eq!(enumerate_feasible_subsets(&unit_catalog(5, 5.0), 5.0).unwrap().count(), 32);
    }

    #[test]
    fn subsets_come_in_graded_lexicographic_order() {
        let subsets: Vec<Vec<usize>> =
            enumerate_feasible_subsets(&unit_catalog(3, 3.0), 3.0).unwrap().map(|s| s.indices().collect()).collect();
        let expected: Vec<Vec<usize>> =
            vec![vec![], vec![0], vec![1], vec![2], vec![0, 1], vec![0, 2], vec![1, 2], vec![0, 1, 2]];
        assert_eq!(subsets, expected);
    }

    #[test]
    fn enumeration_guard() {
        let err = enumerate_feasible_subsets(&unit_catalog(21, 1.0), 1.0).unwrap_err();
        assert!(matches!(err, Error::TooManySubsets { programs: 21, .. }));
    }
}
