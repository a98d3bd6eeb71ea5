//! Semi-Lagrangian solver for the closed-loop leader problem in the original
//! `(x, y)` variables, used to cross-check the reduced one-dimensional solve.
//!
//! The band `y - x ∈ [lower(t), upper(t)]` does not depend on `x`, so the
//! grid uses equal spacing in `x` and `y` and interpolates along lines of
//! constant `x` in `u = y - x`.

use rayon::prelude::*;

use super::grid::AffineEdge;
use super::PdeError;

/// A discrete control with its running reward and Itô coefficients. Noise is
/// one-dimensional: `(dx, dy) = drift dt + (vol_x, vol_y) dW`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlCoeffs {
    pub a: f64,
    pub z: f64,
    pub reward: f64,
    pub drift_x: f64,
    pub drift_y: f64,
    pub vol_x: f64,
    pub vol_y: f64,
}

pub trait ControlledDynamics2d: Sync {
    fn controls(&self) -> &[ControlCoeffs];
}

/// Grid with `n_x` columns over `[x_lo, x_hi]` and rows at the same spacing
/// covering `y - x ∈ [min lower, max upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    pub horizon: f64,
    pub n_time: usize,
    pub x_lo: f64,
    pub n_x: usize,
    pub h: f64,
    pub lower: AffineEdge,
    pub upper: AffineEdge,
}

impl Grid2D {
    pub fn new(
        horizon: f64,
        n_time: usize,
        x_lo: f64,
        n_x: usize,
        h: f64,
        lower: AffineEdge,
        upper: AffineEdge,
    ) -> Result<Self, PdeError> {
        if n_time < 2 || n_x < 2 || !(h > 0.0) || !(horizon > 0.0) {
            return Err(PdeError::InvalidGrid(format!(
                "2D grid needs n_time ≥ 2, n_x ≥ 2, h > 0 (got {n_time}, {n_x}, {h})"
            )));
        }
        Ok(Self {
            horizon,
            n_time,
            x_lo,
            n_x,
            h,
            lower,
            upper,
        })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / (self.n_time - 1) as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k + 1 == self.n_time {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_lo + j as f64 * self.h
    }

    pub fn x_hi(&self) -> f64 {
        self.x(self.n_x - 1)
    }

    fn u_range(&self) -> (f64, f64) {
        let lo = self.lower.position(0.0, self.horizon).min(self.lower.position(self.horizon, self.horizon));
        let hi = self.upper.position(0.0, self.horizon).max(self.upper.position(self.horizon, self.horizon));
        (lo, hi)
    }

    /// Number of `u` rows; row `i` sits at `u_min + i h`.
    pub fn n_u(&self) -> usize {
        let (lo, hi) = self.u_range();
        ((hi - lo) / self.h).ceil() as usize + 1
    }

    pub fn u(&self, i: usize) -> f64 {
        self.u_range().0 + i as f64 * self.h
    }

    pub fn band(&self, t: f64) -> (f64, f64) {
        (self.lower.position(t, self.horizon), self.upper.position(t, self.horizon))
    }
}

/// Values on the 2D grid, stored by level, column and `u` row; NaN outside
/// the band.
#[derive(Debug, Clone)]
pub struct Surface2D {
    pub grid: Grid2D,
    pub values: Vec<f64>,
    pub edge_values: Vec<Vec<(f64, f64)>>,
    /// Node updates where no control kept both foot points in the band.
    pub fallback_updates: u64,
}

impl Surface2D {
    fn idx(&self, k: usize, j: usize, i: usize) -> usize {
        (k * self.grid.n_x + j) * self.grid.n_u() + i
    }

    pub fn value(&self, k: usize, j: usize, i: usize) -> f64 {
        self.values[self.idx(k, j, i)]
    }

    /// `v(t_k, x_j, x_j + u)` by linear interpolation along the column.
    pub fn column_value(&self, k: usize, j: usize, u: f64) -> Option<f64> {
        let (lo, hi) = self.grid.band(self.grid.time(k));
        let tol = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
        if u < lo - tol || u > hi + tol {
            return None;
        }
        let n_u = self.grid.n_u();
        let start = self.idx(k, j, 0);
        column_interp_local(&self.grid, self.grid.time(k), &self.values[start..start + n_u], self.edge_values[k][j], u)
    }

    /// `max_y v(t_k, x_j, y)` over the nodes and edges of column `j`, with the
    /// maximising `y`.
    pub fn column_max(&self, k: usize, j: usize) -> (f64, f64) {
        let (lo, hi) = self.grid.band(self.grid.time(k));
        let x = self.grid.x(j);
        let (e_lo, e_hi) = self.edge_values[k][j];
        let mut best = if e_hi > e_lo { (e_hi, x + hi) } else { (e_lo, x + lo) };
        for i in 0..self.grid.n_u() {
            let v = self.value(k, j, i);
            if v.is_finite() && v > best.0 {
                best = (v, x + self.grid.u(i));
            }
        }
        best
    }
}

/// Backward semi-Lagrangian solve of `-∂t v - sup_c { L^c v + r_c } = 0`
/// on the band `y - x ∈ [lower(t), upper(t)]` with Dirichlet values
/// `lower_value(t, x)`, `upper_value(t, x)` on its edges.
///
/// Outside the `x` window the value is extended by `v(x + s, y + s) = v + s`.
/// The start level sits `start_offset_steps` before the horizon and takes
/// `profile(t, x, u)`; every column must hold at least three band nodes there.
#[allow(clippy::too_many_arguments)]
pub fn solve_hjb_2d_masked<D: ControlledDynamics2d + ?Sized>(
    grid: &Grid2D,
    dynamics: &D,
    profile: &(dyn Fn(f64, f64, f64) -> f64 + Sync),
    lower_value: &(dyn Fn(f64, f64) -> f64 + Sync),
    upper_value: &(dyn Fn(f64, f64) -> f64 + Sync),
    start_offset_steps: usize,
) -> Result<Surface2D, PdeError> {
    let (n_x, n_u, n_time) = (grid.n_x, grid.n_u(), grid.n_time);
    if start_offset_steps >= n_time - 1 {
        return Err(PdeError::InvalidGrid("start offset leaves nothing to solve".into()));
    }
    let layer_len = n_x * n_u;
    let mut values = vec![f64::NAN; n_time * layer_len];
    let mut edge_values = vec![Vec::new(); n_time];
    let edges_at = |t: f64| -> Vec<(f64, f64)> {
        (0..n_x)
            .map(|j| (lower_value(t, grid.x(j)), upper_value(t, grid.x(j))))
            .collect()
    };

    let k_start = n_time - 1 - start_offset_steps;
    for k in k_start..n_time {
        let t = grid.time(k);
        let (lo, hi) = grid.band(t);
        let mut active = 0;
        for j in 0..n_x {
            for i in 0..n_u {
                let u = grid.u(i);
                if u >= lo && u <= hi {
                    values[(k * n_x + j) * n_u + i] = profile(t, grid.x(j), u);
                    if j == 0 {
                        active += 1;
                    }
                }
            }
        }
        if k == k_start && active < 3 {
            return Err(PdeError::MaskCollapsed { t, active });
        }
        edge_values[k] = edges_at(t);
    }

    let dt = grid.dt();
    let sq = dt.sqrt();
    let controls = dynamics.controls();
    let x_hi = grid.x_hi();
    let mut fallback: u64 = 0;
    for k in (0..k_start).rev() {
        let t_from = grid.time(k + 1);
        let t_to = grid.time(k);
        let (from_lo, from_hi) = grid.band(t_from);
        let (lo, hi) = grid.band(t_to);
        let from_edges = &edge_values[k + 1];
        let layer_from = &values[(k + 1) * layer_len..(k + 2) * layer_len];
        let lookup = |x: f64, y: f64| -> Option<f64> {
            let u = y - x;
            if u < from_lo - 1e-9 || u > from_hi + 1e-9 {
                return None;
            }
            let (x, shift) = if x < grid.x_lo {
                (grid.x_lo, x - grid.x_lo)
            } else if x > x_hi {
                (x_hi, x - x_hi)
            } else {
                (x, 0.0)
            };
            let s = (x - grid.x_lo) / grid.h;
            let j = (s.floor() as usize).min(n_x - 2);
            let w = s - j as f64;
            let col = |j: usize| {
                let local = &layer_from[j * n_u..(j + 1) * n_u];
                column_interp_local(grid, t_from, local, from_edges[j], u)
            };
            let v0 = col(j)?;
            let v1 = col(j + 1)?;
            Some(v0 + w * (v1 - v0) + shift)
        };
        let edges_to = edges_at(t_to);
        let results: Vec<(f64, bool)> = (0..layer_len)
            .into_par_iter()
            .map(|idx| {
                let (j, i) = (idx / n_u, idx % n_u);
                let u = grid.u(i);
                if u < lo || u > hi {
                    return (f64::NAN, false);
                }
                let x = grid.x(j);
                let y = x + u;
                let mut best = f64::NEG_INFINITY;
                for c in controls {
                    let (mx, my) = (x + c.drift_x * dt, y + c.drift_y * dt);
                    let (sx, sy) = (c.vol_x * sq, c.vol_y * sq);
                    let (Some(vp), Some(vm)) = (lookup(mx + sx, my + sy), lookup(mx - sx, my - sy)) else {
                        continue;
                    };
                    let cand = c.reward * dt + 0.5 * (vp + vm);
                    if cand > best {
                        best = cand;
                    }
                }
                if best.is_finite() {
                    (best, false)
                } else {
                    let (e_lo, e_hi) = edges_to[j];
                    let v = if u - lo <= hi - u { e_lo } else { e_hi };
                    (v, true)
                }
            })
            .collect();
        for (idx, (v, fb)) in results.into_iter().enumerate() {
            values[k * layer_len + idx] = v;
            fallback += fb as u64;
        }
        if let Some(bad) = values[k * layer_len..(k + 1) * layer_len]
            .iter()
            .position(|v| v.is_infinite())
        {
            return Err(PdeError::NonFinite {
                t: t_to,
                x: grid.x(bad / n_u),
            });
        }
        edge_values[k] = edges_to;
    }
    Ok(Surface2D {
        grid: *grid,
        values,
        edge_values,
        fallback_updates: fallback,
    })
}

fn column_interp_local(grid: &Grid2D, t: f64, column: &[f64], edges: (f64, f64), u: f64) -> Option<f64> {
    let (lo, hi) = grid.band(t);
    let u = u.clamp(lo, hi);
    if hi - lo <= 1e-12 {
        return Some(0.5 * (edges.0 + edges.1));
    }
    let n_u = column.len();
    let i = (((u - grid.u(0)) / grid.h).floor().max(0.0) as usize).min(n_u - 2);
    let point = |r: usize| {
        let ur = grid.u(r);
        let v = column[r];
        (ur >= lo && ur <= hi && v.is_finite()).then_some((ur, v))
    };
    let left = point(i).filter(|p| p.0 <= u).unwrap_or((lo, edges.0));
    let right = point(i + 1).filter(|p| p.0 >= u).unwrap_or((hi, edges.1));
    if right.0 - left.0 <= 0.0 {
        return Some(left.1);
    }
    let w = (u - left.0) / (right.0 - left.0);
    Some(left.1 + w * (right.1 - left.1))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Uncontrolled(Vec<ControlCoeffs>);

    impl ControlledDynamics2d for Uncontrolled {
        fn controls(&self) -> &[ControlCoeffs] {
            &self.0
        }
    }

    #[test]
    fn translation_invariant_drift() {
        // dx = dt, dy = dt, terminal v = x: v(t, x, y) = x + (T - t)
        let dyn2 = Uncontrolled(vec![ControlCoeffs {
            a: 0.0,
            z: 1.0,
            reward: 0.0,
            drift_x: 1.0,
            drift_y: 1.0,
            vol_x: 1.0,
            vol_y: 1.0,
        }]);
        let g = Grid2D::new(
            1.0,
            21,
            -0.5,
            3,
            0.25,
            AffineEdge { at_horizon: -1.0, rate: 0.0 },
            AffineEdge { at_horizon: 1.0, rate: 0.0 },
        )
        .unwrap();
        let profile = |t: f64, x: f64, _u: f64| x + 1.0 - t;
        let edge = |t: f64, x: f64| x + 1.0 - t;
        let s = solve_hjb_2d_masked(&g, &dyn2, &profile, &edge, &edge, 0).unwrap();
        for j in 0..3 {
            for i in 0..g.n_u() {
                let v = s.value(0, j, i);
                assert!((v - (g.x(j) + 1.0)).abs() < 1e-12, "{v}");
            }
        }
        assert_eq!(s.fallback_updates, 0);
    }

    #[test]
    fn collapsed_start_is_reported() {
        let dyn2 = Uncontrolled(vec![]);
        let g = Grid2D::new(
            1.0,
            11,
            0.0,
            2,
            0.5,
            AffineEdge { at_horizon: 0.0, rate: -1.0 },
            AffineEdge { at_horizon: 0.0, rate: 1.0 },
        )
        .unwrap();
        let zero3 = |_: f64, _: f64, _: f64| 0.0;
        let zero2 = |_: f64, _: f64| 0.0;
        let r = solve_hjb_2d_masked(&g, &dyn2, &zero3, &zero2, &zero2, 1);
        assert!(matches!(r, Err(PdeError::MaskCollapsed { .. })));
    }
}
