use super::grid::{Grid1D, NodeLayout};
use super::hamiltonian::{PolicyHamiltonian, Stencil};
use super::solve1d::Field;
use super::surface::{SolveStats, ValueSurface};
use super::PdeError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImplicitOptions {
    /// Outer steps between the horizon and the level where the profile is
    /// imposed.
    pub start_offset_steps: usize,
    /// Inner steps obey `Δτ <= factor · (Δt / T) · max(τ, Δt)` with
    /// `τ = T - t`, so a domain that shrinks to a point at the horizon keeps
    /// its relative time resolution.
    pub relative_step_factor: f64,
    pub max_policy_iterations: usize,
    /// Policy iteration stops once the update is below `tolerance · (1 + |v|)`.
    pub tolerance: f64,
}

impl Default for ImplicitOptions {
    fn default() -> Self {
        Self {
            start_offset_steps: 0,
            relative_step_factor: 20.0,
            max_policy_iterations: 100,
            tolerance: 1e-12,
        }
    }
}

/// Solves `(1 - Δτ L) v = rhs` for a tridiagonal system in place of `rhs`.
/// `lower[0]` and `upper[n - 1]` are ignored.
fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64], scratch: &mut [f64]) {
    let n = rhs.len();
    scratch[0] = upper[0] / diag[0];
    rhs[0] /= diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * scratch[i - 1];
        scratch[i] = upper[i] / m;
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i] * rhs[i + 1];
    }
}

struct Step {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    scratch: Vec<f64>,
    a: Vec<f64>,
    z: Vec<f64>,
    saturated: u64,
}

/// Backward-Euler monotone scheme with policy iteration for
/// `-∂t v - H(t, x, ∂x v, ∂xx v) = 0` with Dirichlet data on both edges.
///
/// The first and last node must lie on the domain edges at every level,
/// which holds for the scaled layout and for fixed layouts with fixed edges.
/// Nodes of a scaled layout move with the edges; the motion enters as an
/// upwinded transport term.
pub fn solve_hjb_1d_implicit<H: PolicyHamiltonian + ?Sized>(
    grid: &Grid1D,
    ham: &H,
    profile: Field<'_>,
    lower: Field<'_>,
    upper: Field<'_>,
    opts: &ImplicitOptions,
) -> Result<ValueSurface, PdeError> {
    let n_time = grid.n_time();
    let n = grid.n_space();
    let horizon = grid.horizon();
    if grid.layout() == NodeLayout::Fixed
        && (grid.lower_edge().rate != 0.0
            || grid.upper_edge().rate != 0.0
            || grid.node(0) != grid.lower_at(0.0))
    {
        return Err(PdeError::InvalidGrid("implicit solver needs nodes on both edges".into()));
    }
    if opts.start_offset_steps >= n_time - 1 {
        return Err(PdeError::InvalidGrid(format!(
            "start offset of {} steps leaves nothing to solve",
            opts.start_offset_steps
        )));
    }
    if !(opts.relative_step_factor > 0.0) {
        return Err(PdeError::InvalidArgument("relative step factor must be positive".into()));
    }

    let mut values = vec![f64::NAN; n_time * n];
    let mut a_star = vec![f64::NAN; n_time * n];
    let mut z_star = vec![f64::NAN; n_time * n];
    let mut edge_values = vec![(f64::NAN, f64::NAN); n_time];

    let k_start = n_time - 1 - opts.start_offset_steps;
    for k in k_start..n_time {
        let t = grid.time(k);
        for i in 0..n {
            values[k * n + i] = profile(t, grid.node_at(t, i));
        }
        edge_values[k] = (lower(t, grid.lower_at(t)), upper(t, grid.upper_at(t)));
    }

    let dt_outer = grid.dt();
    let lambda = opts.relative_step_factor * dt_outer / horizon;
    let mut cur = values[k_start * n..(k_start + 1) * n].to_vec();
    let mut guess = cur.clone();
    let mut step = Step {
        lower: vec![0.0; n],
        diag: vec![1.0; n],
        upper: vec![0.0; n],
        rhs: vec![0.0; n],
        scratch: vec![0.0; n],
        a: vec![f64::NAN; n],
        z: vec![f64::NAN; n],
        saturated: 0,
    };
    let mut last_step: Option<(Vec<f64>, f64)> = None;
    let mut max_substeps = 0;
    let mut min_dt = f64::INFINITY;
    let mut updates: u64 = 0;
    let mut saturated: u64 = 0;

    for k in (0..k_start).rev() {
        let t_hi = grid.time(k + 1);
        let tau_hi = (horizon - t_hi).max(dt_outer);
        let substeps = ((dt_outer / (lambda * tau_hi)) - 1e-9).ceil().max(1.0) as usize;
        max_substeps = max_substeps.max(substeps);
        let dtau = dt_outer / substeps as f64;
        min_dt = min_dt.min(dtau);
        for s in 0..substeps {
            let t_to = if s + 1 == substeps { grid.time(k) } else { t_hi - (s + 1) as f64 * dtau };
            match &last_step {
                Some((older, dtau_old)) => {
                    let r = dtau / dtau_old;
                    for ((g, &c), &o) in guess.iter_mut().zip(&cur).zip(older) {
                        *g = c + r * (c - o);
                    }
                }
                None => guess.copy_from_slice(&cur),
            }
            implicit_step(grid, ham, lower, upper, opts, t_to, dtau, &cur, &mut guess, &mut step)?;
            let older = last_step.get_or_insert_with(|| (vec![0.0; n], dtau));
            older.0.copy_from_slice(&cur);
            older.1 = dtau;
            std::mem::swap(&mut cur, &mut guess);
            updates += (n - 2) as u64;
            saturated += step.saturated;
        }
        values[k * n..(k + 1) * n].copy_from_slice(&cur);
        a_star[k * n..(k + 1) * n].copy_from_slice(&step.a);
        z_star[k * n..(k + 1) * n].copy_from_slice(&step.z);
        edge_values[k] = (cur[0], cur[n - 1]);
    }

    Ok(ValueSurface {
        grid: *grid,
        values,
        a_star,
        z_star,
        edge_values,
        stats: SolveStats {
            substeps: max_substeps,
            inner_dt: min_dt,
            start_time: grid.time(k_start),
            node_updates: updates,
            saturated_fraction: if updates > 0 { saturated as f64 / updates as f64 } else { 0.0 },
        },
    })
}

#[allow(clippy::too_many_arguments)]
fn implicit_step<H: PolicyHamiltonian + ?Sized>(
    grid: &Grid1D,
    ham: &H,
    lower: Field<'_>,
    upper: Field<'_>,
    opts: &ImplicitOptions,
    t: f64,
    dtau: f64,
    prev: &[f64],
    out: &mut [f64],
    step: &mut Step,
) -> Result<(), PdeError> {
    // `out` holds the starting guess on entry and the new level on exit
    let n = prev.len();
    let h = grid.h_at(t);
    if !(h > 0.0) {
        return Err(PdeError::InvalidGrid(format!("degenerate slice at t={t}")));
    }
    let xs: Vec<f64> = (0..n).map(|i| grid.node_at(t, i)).collect();
    let (v_lo, v_hi) = (lower(t, xs[0]), upper(t, xs[n - 1]));
    out[0] = v_lo;
    out[n - 1] = v_hi;
    let inv_h = 1.0 / h;
    let inv_h2 = inv_h * inv_h;

    for _ in 0..opts.max_policy_iterations {
        step.saturated = 0;
        step.diag[0] = 1.0;
        step.upper[0] = 0.0;
        step.rhs[0] = v_lo;
        step.diag[n - 1] = 1.0;
        step.lower[n - 1] = 0.0;
        step.rhs[n - 1] = v_hi;
        for i in 1..n - 1 {
            let back = (out[i] - out[i - 1]) * inv_h;
            let fwd = (out[i + 1] - out[i]) * inv_h;
            let d = Stencil {
                back,
                fwd,
                second: (fwd - back) * inv_h,
            };
            let (e, lin) = ham.linearize(t, xs[i], &d, grid.node_velocity(i));
            step.lower[i] = dtau * (lin.back * inv_h - lin.second * inv_h2);
            step.upper[i] = -dtau * (lin.fwd * inv_h + lin.second * inv_h2);
            step.diag[i] = 1.0 + dtau * ((lin.fwd - lin.back) * inv_h + 2.0 * lin.second * inv_h2);
            step.rhs[i] = prev[i] + dtau * lin.constant;
            step.a[i] = e.a;
            step.z[i] = e.z;
            step.saturated += e.saturated as u64;
        }
        solve_tridiagonal(&step.lower, &step.diag, &step.upper, &mut step.rhs, &mut step.scratch);
        let mut change: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..n {
            let v = step.rhs[i];
            if !v.is_finite() {
                return Err(PdeError::NonFinite { t, x: xs[i] });
            }
            change = change.max((v - out[i]).abs());
            scale = scale.max(v.abs());
            out[i] = v;
        }
        if change <= opts.tolerance * (1.0 + scale) {
            return Ok(());
        }
    }
    Err(PdeError::PolicyIteration {
        t,
        iterations: opts.max_policy_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::grid::AffineEdge;
    use crate::pde::hamiltonian::HeatHamiltonian;

    #[test]
    fn tridiagonal_matches_dense() {
        let lower = [0.0, -1.0, -0.5, -0.2];
        let diag = [3.0, 4.0, 2.5, 2.0];
        let upper = [-1.0, -0.5, -1.0, 0.0];
        let x = [1.0, -2.0, 0.5, 3.0];
        let mut rhs: Vec<f64> = (0..4)
            .map(|i| {
                let mut r = diag[i] * x[i];
                if i > 0 {
                    r += lower[i] * x[i - 1];
                }
                if i < 3 {
                    r += upper[i] * x[i + 1];
                }
                r
            })
            .collect();
        let mut scratch = [0.0; 4];
        solve_tridiagonal(&lower, &diag, &upper, &mut rhs, &mut scratch);
        for i in 0..4 {
            assert!((rhs[i] - x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn heat_equation_fixed_nodes() {
        let pi = std::f64::consts::PI;
        let g = Grid1D::fixed(1.0, 201, 0.0, pi, 101).unwrap();
        let exact = |t: f64, x: f64| (-(1.0 - t) / 2.0).exp() * x.sin();
        let s = solve_hjb_1d_implicit(&g, &HeatHamiltonian { sigma: 1.0 }, &exact, &exact, &exact, &ImplicitOptions::default())
            .unwrap();
        let err = (0..101)
            .map(|i| (s.value(0, i) - exact(0.0, g.node(i))).abs())
            .fold(0.0, f64::max);
        assert!(err < 2e-3, "max error {err}");
    }

    #[test]
    fn heat_equation_on_a_shrinking_domain() {
        // x² + (T - t) solves -v_t - v_xx/2 = 0 on any domain
        let exact = |t: f64, x: f64| x * x + (1.0 - t);
        let lo = AffineEdge { at_horizon: -0.1, rate: -1.0 };
        let hi = AffineEdge { at_horizon: 0.2, rate: 2.0 };
        let error = |nt: usize, nx: usize| {
            let g = Grid1D::scaled(1.0, nt, nx, lo, hi).unwrap();
            let s = solve_hjb_1d_implicit(&g, &HeatHamiltonian { sigma: 1.0 }, &exact, &exact, &exact, &ImplicitOptions::default())
                .unwrap();
            let mut err: f64 = 0.0;
            for k in 0..nt {
                let t = g.time(k);
                for i in 0..nx {
                    err = err.max((s.value(k, i) - exact(t, g.node_at(t, i))).abs());
                }
            }
            err
        };
        let coarse = error(101, 81);
        let fine = error(201, 161);
        assert!(coarse < 3e-2, "{coarse}");
        assert!(fine < 0.6 * coarse, "{fine} vs {coarse}");
    }

    #[test]
    fn rejects_moving_edges_on_fixed_nodes() {
        let lo = AffineEdge { at_horizon: 0.0, rate: -1.0 };
        let hi = AffineEdge { at_horizon: 0.0, rate: 1.0 };
        let g = Grid1D::moving(1.0, 11, 21, lo, hi).unwrap();
        let f = |_t: f64, _x: f64| 0.0;
        let r = solve_hjb_1d_implicit(&g, &HeatHamiltonian { sigma: 1.0 }, &f, &f, &f, &ImplicitOptions::default());
        assert!(matches!(r, Err(PdeError::InvalidGrid(_))));
    }
}
