use rayon::prelude::*;

use super::OracleError;
use crate::model::{global_utility, Assignment, CdcopInstance};

pub const DEFAULT_GRID_CAP: u64 = 10_000_000;

/// A uniform grid over every domain, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub resolution: usize,
    /// Largest number of grid points allowed.
    pub cap: u64,
}

impl GridSpec {
    pub fn new(resolution: usize) -> Self {
        Self { resolution, cap: DEFAULT_GRID_CAP }
    }

    fn points(&self, n: usize) -> Result<u64, OracleError> {
        if self.resolution < 2 {
            return Err(OracleError::Resolution(self.resolution));
        }
        let total = (self.resolution as f64).powi(n as i32);
        if total > self.cap as f64 {
            return Err(OracleError::CapExceeded { points: total, cap: self.cap });
        }
        Ok(total as u64)
    }
}

/// Best and worst grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct GridExtremes {
    pub best: Assignment,
    pub best_utility: f64,
    pub worst: Assignment,
    pub worst_utility: f64,
}

impl GridExtremes {
    /// `best_utility − worst_utility`.
    pub fn range(&self) -> f64 {
        self.best_utility - self.worst_utility
    }
}

struct Grid<'a> {
    inst: &'a CdcopInstance,
    res: usize,
}

impl Grid<'_> {
    /// Grid point with linear index `idx`; the first agent's coordinate is
    /// the most significant, so index order is lexicographic order.
    fn point(&self, mut idx: u64) -> Vec<f64> {
        let n = self.inst.n();
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let k = (idx % self.res as u64) as usize;
            idx /= self.res as u64;
            let d = self.inst.domains()[i];
            x[i] = if k + 1 == self.res { d.ub() } else { d.lb() + k as f64 * d.width() / (self.res - 1) as f64 };
        }
        x
    }

    fn utility(&self, idx: u64) -> f64 {
        global_utility(self.inst, &Assignment::new(self.point(idx))).expect("grid points lie in their domains")
    }
}

type Best = (f64, u64);

// Higher utility wins; on ties the lower index, which keeps the answer
// independent of how the grid is split across threads.
fn better_max(a: Best, b: Best) -> Best {
    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

fn better_min(a: Best, b: Best) -> Best {
    if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

/// Grid point with the highest global utility; ties go to the
/// lexicographically smallest assignment.
pub fn grid_search(inst: &CdcopInstance, spec: GridSpec) -> Result<(Assignment, f64), OracleError> {
    let ex = grid_extremes(inst, spec)?;
    Ok((ex.best, ex.best_utility))
}

pub fn grid_extremes(inst: &CdcopInstance, spec: GridSpec) -> Result<GridExtremes, OracleError> {
    let total = spec.points(inst.n())?;
    let grid = Grid { inst, res: spec.resolution };
    let init = ((f64::NEG_INFINITY, u64::MAX), (f64::INFINITY, u64::MAX));
    let (max, min) = (0..total)
        .into_par_iter()
        .map(|idx| {
            let u = grid.utility(idx);
            ((u, idx), (u, idx))
        })
        .reduce(|| init, |a, b| (better_max(a.0, b.0), better_min(a.1, b.1)));
    Ok(GridExtremes {
        best: Assignment::new(grid.point(max.1)),
        best_utility: max.0,
        worst: Assignment::new(grid.point(min.1)),
        worst_utility: min.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::pair;

    #[test]
    fn negative_paraboloid_peaks_at_origin() {
        let (x, u) = grid_search(&pair(|x, y| -(x * x + y * y)), GridSpec::new(201)).unwrap();
        assert_eq!(x.values(), &[0.0, 0.0]);
        assert_eq!(u, 0.0);
    }

    #[test]
    fn product_tie_goes_to_smallest_point() {
        let (x, u) = grid_search(&pair(|x, y| x * y), GridSpec::new(3)).unwrap();
        assert_eq!(x.values(), &[-10.0, -10.0]);
        assert_eq!(u, 100.0);
    }

    #[test]
    fn grid_includes_endpoints() {
        let g = grid_extremes(&pair(|x, y| x + y), GridSpec::new(7)).unwrap();
        assert_eq!(g.best.values(), &[10.0, 10.0]);
        assert_eq!(g.worst.values(), &[-10.0, -10.0]);
        assert_eq!(g.range(), 40.0);
    }

    #[test]
    fn cap_and_resolution_errors() {
        let inst = pair(|x, y| x + y);
        assert!(matches!(grid_search(&inst, GridSpec::new(1)), Err(OracleError::Resolution(1))));
        let spec = GridSpec { resolution: 101, cap: 10_000 };
        let err = grid_search(&inst, spec).unwrap_err();
        assert!(matches!(err, OracleError::CapExceeded { .. }));
        assert!(err.to_string().contains("lower the resolution"));
    }
}
