use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered evaluation timepoints in `(0, t_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct TimeGrid {
    points: Vec<f64>,
    t_max: f64,
}

#[derive(Deserialize)]
struct RawGrid {
    points: Vec<f64>,
    t_max: f64,
}

impl TryFrom<RawGrid> for TimeGrid {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        TimeGrid::new(raw.points, raw.t_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridMode<'a> {
    Even,
    /// Empirical quantiles of the given time sample.
    Quantile(&'a [f64]),
}

impl TimeGrid {
    pub fn new(points: Vec<f64>, t_max: f64) -> Result<Self> {
        if !(t_max.is_finite() && t_max > 0.0) {
            return Err(Error::invalid(format!("t_max must be positive, got {t_max}")));
        }
        if points.is_empty() {
            return Err(Error::invalid("time grid is empty"));
        }
        for (i, &t) in points.iter().enumerate() {
            if !(t > 0.0 && t <= t_max) {
                return Err(Error::invalid(format!(
                    "grid point {t} outside (0, {t_max}]"
                )));
            }
            if i > 0 && points[i - 1] >= t {
                return Err(Error::invalid("grid points must be strictly increasing"));
            }
        }
        Ok(TimeGrid { points, t_max })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.points.iter().position(|&p| p == t)
    }
}

pub fn build_time_grid(t_max: f64, n_points: usize, mode: GridMode<'_>) -> Result<TimeGrid> {
    if !(t_max.is_finite() && t_max > 0.0) {
        return Err(Error::invalid(format!("t_max must be positive, got {t_max}")));
    }
    if n_points == 0 {
        return Err(Error::invalid("n_points must be at least 1"));
    }
    let points = match mode {
        GridMode::Even => (1..=n_points)
            .map(|i| i as f64 * t_max / n_points as f64)
            .collect(),
        GridMode::Quantile(times) => {
            let mut sorted: Vec<f64> = times.iter().copied().filter(|t| t.is_finite()).collect();
            if sorted.is_empty() {
                return Err(Error::invalid("quantile grid needs a non-empty time sample"));
            }
            sorted.sort_by(f64::total_cmp);
            let mut pts: Vec<f64> = (1..=n_points)
                .map(|i| quantile_sorted(&sorted, i as f64 / n_points as f64))
                .filter(|&t| t > 0.0 && t <= t_max)
                .collect();
            pts.dedup();
            if pts.is_empty() {
                return Err(Error::invalid(
                    "no sample quantile falls inside (0, t_max]",
                ));
            }
            pts
        }
    };
    TimeGrid::new(points, t_max)
}

/// Linear-interpolation quantile of a sorted sample.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_grid_seven_points() {
        let g = build_time_grid(70.0, 7, GridMode::Even).unwrap();
        assert_eq!(g.points(), &[10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0]);
    }

    #[test]
    fn single_point_grid() {
        let g = build_time_grid(70.0, 1, GridMode::Even).unwrap();
        assert_eq!(g.points(), &[70.0]);
    }

    #[test]
    fn forty_one_points_end_at_t_max() {
        let g = build_time_grid(70.0, 41, GridMode::Even).unwrap();
        assert_eq!(g.len(), 41);
        assert_eq!(*g.points().last().unwrap(), 70.0);
        assert!(g.points()[0] > 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(build_time_grid(0.0, 3, GridMode::Even).is_err());
        assert!(build_time_grid(-1.0, 3, GridMode::Even).is_err());
        assert!(build_time_grid(10.0, 0, GridMode::Even).is_err());
        assert!(build_time_grid(10.0, 3, GridMode::Quantile(&[])).is_err());
        assert!(TimeGrid::new(vec![1.0, 1.0], 2.0).is_err());
        assert!(TimeGrid::new(vec![0.0, 1.0], 2.0).is_err());
    }

    #[test]
    fn quantile_grid_is_strictly_increasing() {
        let times = [0.0, 1.0, 1.0, 1.0, 2.0, 5.0, 9.0, 70.0, 70.0];
        let g = build_time_grid(70.0, 8, GridMode::Quantile(&times)).unwrap();
        assert!(g.points().windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*g.points().last().unwrap(), 70.0);
    }
}
