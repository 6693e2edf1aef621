use std::io::Write;

use serde::{Deserialize, Serialize};

use super::argmax;
use super::boost::{BoostKind, BoostParams, BoostedModel};
use super::split::split_dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneGrid {
    pub max_depth: Vec<usize>,
    pub n_trees: Vec<usize>,
}

impl Default for TuneGrid {
    fn default() -> Self {
        TuneGrid {
            max_depth: vec![3, 4, 6, 8],
            n_trees: vec![50, 100, 200],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneCell {
    pub max_depth: usize,
    pub n_trees: usize,
    pub holdout_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: BoostParams,
    pub cells: Vec<TuneCell>,
}

/// Grid search over depth and tree count on a seeded internal holdout.
///
/// One model per depth is trained with the largest tree count and scored at
/// every requested prefix. The winner has the highest holdout accuracy, then
/// the fewest trees, then the smallest depth.
pub fn tune(
    x: &Matrix,
    labels: &[usize],
    n_classes: usize,
    base: &BoostParams,
    kind: BoostKind,
    grid: &TuneGrid,
    holdout_ratio: f64,
    seed: u64,
) -> Result<TuneResult> {
    if grid.max_depth.is_empty() || grid.n_trees.is_empty() {
        return Err(Error::InvalidArgument("tuning grid is empty".into()));
    }
    let split = split_dataset(labels, holdout_ratio, seed, false)?;
    let xt = x.select_rows(&split.train);
    let yt: Vec<usize> = split.train.iter().map(|&i| labels[i]).collect();
    let xh = x.select_rows(&split.test);
    let yh: Vec<usize> = split.test.iter().map(|&i| labels[i]).collect();

    let mut depths = grid.max_depth.clone();
    depths.sort_unstable();
    depths.dedup();
    let mut counts = grid.n_trees.clone();
    counts.sort_unstable();
    counts.dedup();
    let max_trees = *counts.last().unwrap_or(&1);

    let mut cells = Vec::new();
    let mut s = vec![0.0; n_classes];
    for &depth in &depths {
        let params = BoostParams {
            max_depth: depth,
            n_trees: max_trees,
            ..base.clone()
        };
        let (model, _) = BoostedModel::fit(&xt, &yt, n_classes, &params, kind)?;
        for &nt in &counts {
            let hits = xh
                .rows()
                .zip(&yh)
                .filter(|(r, &y)| {
                    model.scores_row_prefix(r, nt, &mut s);
                    argmax(&s) == y
                })
                .count();
            cells.push(TuneCell {
                max_depth: depth,
                n_trees: nt,
                holdout_accuracy: hits as f64 / yh.len().max(1) as f64,
            });
        }
    }
    let best = cells
        .iter()
        .min_by(|a, b| {
            b.holdout_accuracy
                .total_cmp(&a.holdout_accuracy)
                .then(a.n_trees.cmp(&b.n_trees))
                .then(a.max_depth.cmp(&b.max_depth))
        })
        .expect("grid is non-empty");
    Ok(TuneResult {
        best: BoostParams {
            max_depth: best.max_depth,
            n_trees: best.n_trees,
            ..base.clone()
        },
        cells,
    })
}

pub fn write_tune_log<W: Write>(w: W, cells: &[TuneCell]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for c in cells {
        out.serialize(c)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn depth_two_rule(n: usize) -> (Matrix, Vec<usize>) {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let a = ((i * 37) % 101) as f64 / 101.0;
            let b = ((i * 59) % 103) as f64 / 103.0;
            rows.push([a, b]);
            y.push(usize::from((a > 0.5) != (b > 0.5)));
        }
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn single_cell_is_returned() {
        let (x, y) = depth_two_rule(100);
        let grid = TuneGrid {
            max_depth: vec![2],
            n_trees: vec![7],
        };
        let r = tune(&x, &y, 2, &BoostParams::default(), BoostKind::SecondOrder, &grid, 0.3, 1).unwrap();
        assert_eq!((r.best.max_depth, r.best.n_trees), (2, 7));
        assert_eq!(r.cells.len(), 1);
    }

    #[test]
    fn planted_depth_wins_and_ties_prefer_fewer_trees() {
        let (x, y) = depth_two_rule(600);
        let grid = TuneGrid {
            max_depth: vec![1, 2],
            n_trees: vec![20, 40],
        };
        let r = tune(&x, &y, 2, &BoostParams::default(), BoostKind::SecondOrder, &grid, 0.3, 1).unwrap();
        assert_eq!(r.cells.len(), 4);
        assert!(r.best.max_depth >= 2);
        let best_acc = r.cells.iter().map(|c| c.holdout_accuracy).fold(0.0, f64::max);
        let fewest = r
            .cells
            .iter()
            .filter(|c| c.holdout_accuracy == best_acc)
            .map(|c| c.n_trees)
            .min()
            .unwrap();
        assert_eq!(r.best.n_trees, fewest);
    }

    #[test]
    fn log_has_header() {
        let mut buf = Vec::new();
        write_tune_log(
            &mut buf,
            &[TuneCell {
                max_depth: 3,
                n_trees: 10,
                holdout_accuracy: 0.5,
            }],
        )
        .unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "max_depth,n_trees,holdout_accuracy\n3,10,0.5\n");
    }
}
