use serde::{Deserialize, Serialize};

use crate::binning::BinGrid;
use crate::error::{Error, Result};

/// Rounds to the grid, then adds the training residual mean of that grid cell.
///
/// `delta[i - 1]` is the shift for grid value `i/M`; cells unseen in training keep 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBinningModel {
    pub grid: BinGrid,
    pub delta: Vec<f64>,
}

impl HistogramBinningModel {
    pub fn identity(grid: BinGrid) -> Self {
        Self {
            delta: vec![0.0; grid.m_bins()],
            grid,
        }
    }

    pub fn apply(&self, p: f64) -> f64 {
        let i = self.grid.grid_index(p);
        (self.grid.edge(i) + self.delta[i - 1]).clamp(0.0, 1.0)
    }
}

pub fn fit_histogram_binning(scores: &[f64], labels: &[bool], grid: BinGrid) -> Result<HistogramBinningModel> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("histogram binning"));
    }
    let m = grid.m_bins();
    let mut count = vec![0usize; m];
    let mut residual = vec![0.0f64; m];
    for (p, y) in scores.iter().zip(labels) {
        if !(0.0..=1.0).contains(p) {
            return Err(Error::Domain(*p));
        }
        let i = grid.grid_index(*p);
        count[i - 1] += 1;
        residual[i - 1] += f64::from(u8::from(*y)) - grid.edge(i);
    }
    Ok(HistogramBinningModel {
        grid,
        delta: count
            .iter()
            .zip(&residual)
            .map(|(c, r)| if *c == 0 { 0.0 } else { r / *c as f64 })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g20() -> BinGrid {
        BinGrid::new(20).unwrap()
    }

    #[test]
    fn shift_to_bin_accuracy() {
        let scores = [0.7, 0.71, 0.69, 0.7];
        let labels = [true, false, true, false];
        let m = fit_histogram_binning(&scores, &labels, g20()).unwrap();
        assert!((m.delta[13] + 0.2).abs() < 1e-12);
        assert!((m.apply(0.7) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn calibrated_rounded_data_gives_identity() {
        // Rounded confidences 0.25 and 0.75 with matching accuracies.
        let scores = [0.25, 0.25, 0.25, 0.25, 0.75, 0.75, 0.75, 0.75];
        let labels = [true, false, false, false, true, true, true, false];
        let m = fit_histogram_binning(&scores, &labels, g20()).unwrap();
        assert!(m.delta.iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn unseen_cell_rounds_only() {
        let m = fit_histogram_binning(&[0.9], &[true], g20()).unwrap();
        assert_eq!(m.apply(0.42), 0.40);
        assert_eq!(HistogramBinningModel::identity(g20()).apply(0.42), 0.40);
    }

    proptest! {
        #[test]
        fn outputs_match_cell_accuracy(data in proptest::collection::vec((0.0f64..=1.0, any::<bool>()), 1..200)) {
            let (scores, labels): (Vec<f64>, Vec<bool>) = data.into_iter().unzip();
            let grid = g20();
            let m = fit_histogram_binning(&scores, &labels, grid).unwrap();
            for i in 1..=20 {
                let members: Vec<usize> = (0..scores.len()).filter(|&k| grid.grid_index(scores[k]) == i).collect();
                if members.is_empty() { continue; }
                let acc = members.iter().filter(|&&k| labels[k]).count() as f64 / members.len() as f64;
                for k in members {
                    let out = m.apply(scores[k]);
                    prop_assert!((out - acc).abs() <= 1e-12);
                }
            }
        }
    }
}
