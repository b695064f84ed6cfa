//! Equal-width confidence grid over `[0, 1]`.
//!
//! Bins are 1-based: bin `m` holds `(m-1)/M <= p < m/M`, and the last bin is
//! closed at 1. Grid values are `{i/M : i = 1..=M}`; zero is not a grid value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinGrid {
    m_bins: usize,
}

impl Default for BinGrid {
    fn default() -> Self {
        Self { m_bins: 20 }
    }
}

/// Which side of a threshold an overlapping bin covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "le")]
    AtMost,
    #[serde(rename = "ge")]
    AtLeast,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::AtMost, Side::AtLeast];

    pub fn contains(self, score: f64, threshold: f64) -> bool {
        match self {
            Side::AtMost => score <= threshold,
            Side::AtLeast => score >= threshold,
        }
    }
}

const TIE_TOLERANCE: f64 = 1e-12;

fn check_unit(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Domain(p))
    }
}

impl BinGrid {
    pub fn new(m_bins: usize) -> Result<Self> {
        if m_bins < 2 {
            return Err(Error::Config(format!("grid needs at least 2 bins, got {m_bins}")));
        }
        Ok(Self { m_bins })
    }

    pub fn m_bins(&self) -> usize {
        self.m_bins
    }

    /// `i / M` as stored for grid values and bin edges.
    pub fn edge(&self, i: usize) -> f64 {
        i as f64 / self.m_bins as f64
    }

    pub fn assign_bin(&self, p: f64) -> Result<usize> {
        check_unit(p)?;
        Ok(self.bin_of(p))
    }

    /// Bin index for a score already known to lie in `[0, 1]`.
    pub(crate) fn bin_of(&self, p: f64) -> usize {
        let m = self.m_bins;
        let mut k = ((p * m as f64).floor() as usize).min(m - 1);
        // Settle against the stored edges so boundary values follow the half-open rule.
        while k + 1 < m && p >= self.edge(k + 1) {
            k += 1;
        }
        while k > 0 && p < self.edge(k) {
            k -= 1;
        }
        k + 1
    }

    pub fn round_to_grid(&self, p: f64) -> Result<f64> {
        check_unit(p)?;
        Ok(self.round_unchecked(p))
    }

    /// Nearest grid index in `1..=M`; exact ties go to the larger value.
    pub(crate) fn grid_index(&self, p: f64) -> usize {
        let m = self.m_bins;
        let lo = ((p * m as f64).floor() as usize).clamp(1, m);
        let mut best = lo;
        let mut best_dist = (p - self.edge(lo)).abs();
        for i in [lo.saturating_sub(1).max(1), lo + 1] {
            if i > m || i == lo {
                continue;
            }
            let d = (p - self.edge(i)).abs();
            let tie = (d - best_dist).abs() <= TIE_TOLERANCE;
            if d < best_dist - TIE_TOLERANCE || (tie && i > best) {
                best = i;
                best_dist = d;
            }
        }
        best
    }

    pub(crate) fn round_unchecked(&self, p: f64) -> f64 {
        self.edge(self.grid_index(p))
    }

    /// Indices of `scores` on the requested side of `m/M`, comparison closed.
    pub fn one_sided_bins(&self, scores: &[f64], m: usize, side: Side) -> Vec<usize> {
        let threshold = self.edge(m);
        scores
            .iter()
            .enumerate()
            .filter(|(_, s)| side.contains(**s, threshold))
            .map(|(i, _)| i)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g20() -> BinGrid {
        BinGrid::new(20).unwrap()
    }

    #[test]
    fn assign_edges() {
        let g = g20();
        assert_eq!(g.assign_bin(0.0).unwrap(), 1);
        assert_eq!(g.assign_bin(1.0).unwrap(), 20);
        assert_eq!(g.assign_bin(0.05).unwrap(), 2);
        assert_eq!(g.assign_bin(0.0499999).unwrap(), 1);
        assert_eq!(g.assign_bin(0.95).unwrap(), 20);
    }

    #[test]
    fn assign_every_edge_goes_right() {
        for m in [2usize, 3, 5, 7, 10, 20, 49] {
            let g = BinGrid::new(m).unwrap();
            for i in 0..m {
                assert_eq!(g.assign_bin(g.edge(i)).unwrap(), i + 1, "M={m} i={i}");
            }
        }
    }

    #[test]
    fn domain_errors() {
        let g = g20();
        assert!(matches!(g.assign_bin(-0.01), Err(Error::Domain(_))));
        assert!(matches!(g.round_to_grid(1.5), Err(Error::Domain(_))));
        assert!(g.assign_bin(f64::NAN).is_err());
        assert!(BinGrid::new(1).is_err());
    }

    #[test]
    fn rounding_examples() {
        let g = g20();
        assert_eq!(g.round_to_grid(0.12).unwrap(), 0.10);
        assert_eq!(g.round_to_grid(0.075).unwrap(), 0.10);
        assert_eq!(g.round_to_grid(0.01).unwrap(), 0.05);
        assert_eq!(g.round_to_grid(0.0).unwrap(), 0.05);
        assert_eq!(g.round_to_grid(1.0).unwrap(), 1.0);
        assert_eq!(g.round_to_grid(0.975).unwrap(), 1.0);
        assert_eq!(g.round_to_grid(0.974).unwrap(), 0.95);
    }

    #[test]
    fn one_sided_examples() {
        let g = g20();
        let scores = [0.1, 0.5, 0.9];
        assert_eq!(g.one_sided_bins(&scores, 10, Side::AtMost), vec![0, 1]);
        assert_eq!(g.one_sided_bins(&scores, 20, Side::AtMost), vec![0, 1, 2]);
        assert_eq!(g.one_sided_bins(&scores, 10, Side::AtLeast), vec![1, 2]);
    }

    proptest! {
        #[test]
        fn bins_are_consistent_with_edges(p in 0.0f64..=1.0, m in 2usize..60) {
            let g = BinGrid::new(m).unwrap();
            let b = g.assign_bin(p).unwrap();
            prop_assert!((1..=m).contains(&b));
            prop_assert!(g.edge(b - 1) <= p);
            if b < m { prop_assert!(p < g.edge(b)); } else { prop_assert!(p <= 1.0); }
        }

        #[test]
        fn rounding_is_idempotent_and_close(p in 0.0f64..=1.0, m in 2usize..60) {
            let g = BinGrid::new(m).unwrap();
            let r = g.round_to_grid(p).unwrap();
            prop_assert_eq!(g.round_to_grid(r).unwrap(), r);
            let bound = if p < g.edge(1) { g.edge(1) } else { 0.5 / m as f64 };
            prop_assert!((r - p).abs() <= bound + 1e-12);
            // No other grid value is strictly closer.
            for i in 1..=m {
                prop_assert!((g.edge(i) - p).abs() >= (r - p).abs() - 1e-12);
            }
        }

        #[test]
        fn one_sided_cover(scores in proptest::collection::vec(0.0f64..=1.0, 0..30), m in 1usize..=20) {
            let g = g20();
            let le = g.one_sided_bins(&scores, m, Side::AtMost);
            let ge = g.one_sided_bins(&scores, m, Side::AtLeast);
            for (i, &s) in scores.iter().enumerate() {
                prop_assert!(le.contains(&i) || ge.contains(&i));
                if s == g.edge(m) {
                    prop_assert!(le.contains(&i) && ge.contains(&i));
                }
            }
        }
    }
}
