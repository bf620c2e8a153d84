use alloc::vec::Vec;
use core::cmp::Ordering;

use super::GridPoint;
use crate::harness::{cross_validate, FitSettings, ModelKind};
use crate::{Dataset, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GridSearch {
    pub best: GridPoint,
    /// Mean cross-validated iBBS per grid point; failed points score `+inf`.
    pub scores: Vec<(GridPoint, f64)>,
}

fn better(a: &(GridPoint, f64), b: &(GridPoint, f64)) -> Ordering {
    a.1.total_cmp(&b.1)
        .then(a.0.size().cmp(&b.0.size()))
        .then(a.0.learning_rate.total_cmp(&b.0.learning_rate))
}

/// Scores every point of `settings.train.grid` by `folds`-fold
/// cross-validated integrated Brier score and returns the lowest. Ties go to
/// the smaller network, then the lower learning rate.
pub fn grid_search(data: &Dataset, folds: usize, settings: &FitSettings, horizon: f64, seed: u64) -> Result<GridSearch> {
    if settings.train.grid.is_empty() {
        return Err(Error::InvalidConfig("grid must not be empty".into()));
    }
    let scores: Vec<(GridPoint, f64)> = settings
        .train
        .grid
        .iter()
        .map(|point| {
            let candidate = FitSettings {
                kind: ModelKind::Neural,
                em: settings.em.clone(),
                train: settings.train.with_point(point),
            };
            let score = match cross_validate(data, &candidate, folds, horizon, seed) {
                Ok(cv) if cv.mean.is_finite() => cv.mean,
                Ok(_) => f64::INFINITY,
                Err(e) if e.is_validation() => return Err(e),
                Err(e) => {
                    log::warn!("grid point {point:?} failed: {e}");
                    f64::INFINITY
                }
            };
            Ok((*point, score))
        })
        .collect::<Result<_>>()?;
    let best = scores.iter().min_by(|a, b| better(a, b)).map(|s| s.0).ok_or(Error::Domain("empty grid"))?;
    Ok(GridSearch { best, scores })
}
