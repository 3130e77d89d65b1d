//! Brute-force reference computations: trapezoid quadrature, central finite
//! differences and exhaustive search over a simplex grid. They work on raw
//! closures and never call into the kernels or flows they are used to check.

use crate::error::{Error, Result};

/// Uniform 1D grid on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureGrid {
    lo: f64,
    hi: f64,
    nodes: usize,
}

impl QuadratureGrid {
    pub fn new(lo: f64, hi: f64, nodes: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidInput(format!(
                "quadrature interval [{lo}, {hi}] is empty"
            )));
        }
        if nodes < 2 {
            return Err(Error::InvalidInput(
                "quadrature needs at least two nodes".into(),
            ));
        }
        Ok(Self { lo, hi, nodes })
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.nodes - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.nodes {
            self.hi
        } else {
            self.lo + i as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.nodes).map(move |i| self.node(i))
    }
}

/// Composite trapezoid rule.
pub fn quad_integral<F: Fn(f64) -> f64>(f: F, grid: &QuadratureGrid) -> Result<f64> {
    let h = grid.spacing();
    let mut acc = 0.0;
    for i in 0..grid.nodes {
        let v = f(grid.node(i));
        if !v.is_finite() {
            return Err(Error::NonFinite { index: i, value: v });
        }
        let w = if i == 0 || i + 1 == grid.nodes {
            0.5
        } else {
            1.0
        };
        acc += w * v;
    }
    Ok(acc * h)
}

/// Central differences, one coordinate at a time.
pub fn finite_diff_grad<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|a| {
            p[a] = x[a] + h;
            let up = f(&p);
            p[a] = x[a] - h;
            let down = f(&p);
            p[a] = x[a];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Minimizes `objective` over the points of the `m`-simplex whose
/// coordinates are multiples of `resolution` (rounded to `1/n`).
pub fn simplex_grid_argmin<F: Fn(&[f64]) -> f64>(
    objective: F,
    m: usize,
    resolution: f64,
) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::InvalidInput(
            "simplex dimension must be positive".into(),
        ));
    }
    if m > 4 {
        return Err(Error::Scale(format!(
            "exhaustive simplex search limited to 4 atoms, got {m}"
        )));
    }
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "resolution must lie in (0, 1], got {resolution}"
        )));
    }
    let n = (1.0 / resolution).round() as usize;
    let mut counts = vec![0usize; m];
    let mut w = vec![0.0; m];
    let mut best = (f64::INFINITY, vec![0.0; m]);
    search(&objective, n, 0, n, &mut counts, &mut w, &mut best);
    Ok(best.1)
}

fn search<F: Fn(&[f64]) -> f64>(
    objective: &F,
    n: usize,
    i: usize,
    remaining: usize,
    counts: &mut [usize],
    w: &mut [f64],
    best: &mut (f64, Vec<f64>),
) {
    let m = counts.len();
    if i + 1 == m {
        counts[i] = remaining;
        for (wi, c) in w.iter_mut().zip(counts.iter()) {
            *wi = *c as f64 / n as f64;
        }
        let v = objective(w);
        if v < best.0 {
            best.0 = v;
            best.1.copy_from_slice(w);
        }
        return;
    }
    for c in 0..=remaining {
        counts[i] = c;
        search(objective, n, i + 1, remaining - c, counts, w, best);
    }
}
