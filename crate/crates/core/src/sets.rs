//! Project subsets.
//!
//! Projects are indexed `0..m` internally. Every external rendering (tables,
//! JSON keys, instance files) uses 1-based labels, so `{0, 2}` prints as
//! `{1,3}` and keys as `"1,3"`.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Sorted, duplicate-free set of 0-based project indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProjectSet(Vec<usize>);

impl ProjectSet {
    pub fn empty() -> Self {
        ProjectSet(Vec::new())
    }

    pub fn singleton(j: usize) -> Self {
        ProjectSet(vec![j])
    }

    /// Builds a set from arbitrary indices, sorting and deduplicating.
    pub fn new(indices: impl IntoIterator<Item = usize>) -> Self {
        let mut v: Vec<usize> = indices.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        ProjectSet(v)
    }

    /// Like [`ProjectSet::new`], rejecting any index `>= ground`.
    pub fn checked(indices: impl IntoIterator<Item = usize>, ground: usize) -> Result<Self> {
        let set = ProjectSet::new(indices);
        set.check(ground)?;
        Ok(set)
    }

    pub fn check(&self, ground: usize) -> Result<()> {
        match self.0.last() {
            Some(&j) if j >= ground => Err(Error::input(format!(
                "project index {} out of range for {} projects",
                j + 1,
                ground
            ))),
            _ => Ok(()),
        }
    }

    pub fn from_mask(mask: u64) -> Self {
        ProjectSet(iter_bits(mask).collect())
    }

    /// Bitmask form; only valid when every index is below 64.
    pub fn to_mask(&self) -> u64 {
        self.0.iter().fold(0u64, |acc, &j| acc | (1u64 << j))
    }

    pub fn all(ground: usize) -> Self {
        ProjectSet((0..ground).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.binary_search(&j).is_ok()
    }

    pub fn union(&self, other: &ProjectSet) -> ProjectSet {
        ProjectSet::new(self.0.iter().chain(other.0.iter()).copied())
    }

    pub fn with(&self, j: usize) -> ProjectSet {
        let mut v = self.0.clone();
        if let Err(pos) = v.binary_search(&j) {
            v.insert(pos, j);
        }
        ProjectSet(v)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    /// Comma-separated 1-based labels, e.g. `"1,3,4"`; the empty set keys as `""`.
    pub fn key(&self) -> String {
        self.0
            .iter()
            .map(|j| (j + 1).to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Parses the output of [`ProjectSet::key`].
    pub fn parse_key(key: &str, ground: usize) -> Result<Self> {
        let key = key.trim();
        if key.is_empty() || key == "∅" {
            return Ok(ProjectSet::empty());
        }
        let mut out = Vec::new();
        for part in key.split(',') {
            let label: usize = part
                .trim()
                .parse()
                .map_err(|_| Error::input(format!("bad project label {part:?}")))?;
            if label == 0 {
                return Err(Error::input("project labels are 1-based"));
            }
            out.push(label - 1);
        }
        ProjectSet::checked(out, ground)
    }
}

impl fmt::Display for ProjectSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            write!(f, "∅")
        } else {
            write!(f, "{{{}}}", self.key())
        }
    }
}

impl Serialize for ProjectSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let labels: Vec<usize> = self.0.iter().map(|j| j + 1).collect();
        labels.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ProjectSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let labels = Vec::<usize>::deserialize(deserializer)?;
        if labels.contains(&0) {
            return Err(serde::de::Error::custom("project labels are 1-based"));
        }
        Ok(ProjectSet::new(labels.into_iter().map(|l| l - 1)))
    }
}

pub(crate) fn iter_bits(mut mask: u64) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if mask == 0 {
            None
        } else {
            let j = mask.trailing_zeros() as usize;
            mask &= mask - 1;
            Some(j)
        }
    })
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub(crate) fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.carry += (self.sum - t) + value;
        } else {
            self.carry += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn total(&self) -> f64 {
        self.sum + self.carry
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_round_trip_uses_one_based_labels() {
        let s = ProjectSet::new([3, 0, 2, 2]);
        assert_eq!(s.indices(), &[0, 2, 3]);
        assert_eq!(s.key(), "1,3,4");
        assert_eq!(s.to_string(), "{1,3,4}");
        assert_eq!(ProjectSet::parse_key("1,3,4", 4).unwrap(), s);
        assert_eq!(ProjectSet::empty().to_string(), "∅");
        assert!(ProjectSet::parse_key("5", 4).is_err());
        assert!(ProjectSet::parse_key("0", 4).is_err());
    }

    #[test]
    fn mask_conversions_agree() {
        let s = ProjectSet::new([1, 4, 5]);
        assert_eq!(s.to_mask(), 0b110010);
        assert_eq!(ProjectSet::from_mask(0b110010), s);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut acc = KahanSum::default();
        acc.add(1.0);
        for _ in 0..10 {
            acc.add(1e-16);
        }
        acc.add(-1.0);
        assert!((acc.total() - 1e-15).abs() < 1e-30);
    }
}
