use super::grid::{Grid1D, NodeLayout};
use super::hamiltonian::{Hamiltonian, Stencil};
use super::surface::{SolveStats, ValueSurface};
use super::PdeError;

/// Scalar field `(t, x) -> value`.
pub type Field<'a> = &'a (dyn Fn(f64, f64) -> f64 + Sync);

/// Treatment of the two domain edges.
#[derive(Clone, Copy)]
pub enum BoundaryCondition<'a> {
    /// Prescribed values `(t, x_edge) -> value` on the lower and upper edge.
    Dirichlet { lower: Field<'a>, upper: Field<'a> },
    /// Edge value extrapolated linearly from the two nearest computed nodes.
    ExtrapolateLinear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Split outer steps that violate the CFL bound instead of failing.
    pub auto_substep: bool,
    /// Fraction of the CFL bound actually used.
    pub cfl_safety: f64,
    /// Outer steps between the horizon and the level where the profile is
    /// imposed; needed when the domain is degenerate at the horizon.
    pub start_offset_steps: usize,
    /// Nodes closer than this many cells to an edge are interpolated from
    /// the edge value instead of being computed.
    pub edge_margin_cells: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            auto_substep: true,
            cfl_safety: 0.9,
            start_offset_steps: 0,
            edge_margin_cells: 1.0,
        }
    }
}

struct Slice {
    lo: f64,
    hi: f64,
    computed: Vec<bool>,
    first: Option<usize>,
    last: Option<usize>,
}

struct Marcher<'a> {
    grid: &'a Grid1D,
    profile: Field<'a>,
    bc: BoundaryCondition<'a>,
    margin: f64,
    nodes: Vec<f64>,
}

impl Marcher<'_> {
    fn slice(&self, t: f64) -> Slice {
        let (lo, hi) = (self.grid.lower_at(t), self.grid.upper_at(t));
        let gap = self.margin * (1.0 - 1e-9);
        let computed: Vec<bool> = self
            .nodes
            .iter()
            .map(|&x| x - lo >= gap && hi - x >= gap)
            .collect();
        let first = computed.iter().position(|&c| c);
        let last = computed.iter().rposition(|&c| c);
        Slice {
            lo,
            hi,
            computed,
            first,
            last,
        }
    }

    fn edge_values(&self, t: f64, s: &Slice, v: &[f64]) -> Result<(f64, f64), PdeError> {
        match self.bc {
            BoundaryCondition::Dirichlet { lower, upper } => Ok((lower(t, s.lo), upper(t, s.hi))),
            BoundaryCondition::ExtrapolateLinear => {
                let (Some(f), Some(l)) = (s.first, s.last) else {
                    return Ok(((self.profile)(t, s.lo), (self.profile)(t, s.hi)));
                };
                if l < f + 1 || !s.computed[f + 1] || !s.computed[l - 1] {
                    return Err(PdeError::InvalidGrid(format!(
                        "linear extrapolation needs two computed nodes per edge at t={t}"
                    )));
                }
                let h = self.grid.h();
                let lo = v[f] + (s.lo - self.nodes[f]) * (v[f + 1] - v[f]) / h;
                let hi = v[l] + (s.hi - self.nodes[l]) * (v[l] - v[l - 1]) / h;
                Ok((lo, hi))
            }
        }
    }

    /// Fills the nodes that are not computed: linear between an edge and the
    /// nearest computed node, NaN outside the slice.
    fn complete(&self, t: f64, s: &Slice, v: &mut [f64]) -> Result<(f64, f64), PdeError> {
        let edges = self.edge_values(t, s, v)?;
        let (Some(f), Some(l)) = (s.first, s.last) else {
            for (i, &x) in self.nodes.iter().enumerate() {
                v[i] = if x >= s.lo && x <= s.hi { (self.profile)(t, x) } else { f64::NAN };
            }
            return Ok(edges);
        };
        let (xf, vf) = (self.nodes[f], v[f]);
        let (xl, vl) = (self.nodes[l], v[l]);
        for (i, &x) in self.nodes.iter().enumerate() {
            if s.computed[i] {
                continue;
            }
            v[i] = if x < s.lo || x > s.hi {
                f64::NAN
            } else if i < f {
                edges.0 + (x - s.lo) * (vf - edges.0) / (xf - s.lo)
            } else if i > l {
                edges.1 + (x - s.hi) * (vl - edges.1) / (xl - s.hi)
            } else {
                // a gap between computed nodes cannot occur on a convex slice
                f64::NAN
            };
        }
        Ok(edges)
    }
}

/// Solves `-∂t v - H(t, x, ∂x v, ∂xx v) = 0` backward from the profile on
/// the grid's (possibly moving) domain with an explicit monotone scheme.
///
/// `profile(t, x)` provides the terminal condition and the values imposed at
/// the start level.
pub fn solve_hjb_1d<H: Hamiltonian + ?Sized>(
    grid: &Grid1D,
    ham: &H,
    profile: Field<'_>,
    bc: BoundaryCondition<'_>,
    opts: &SolveOptions,
) -> Result<ValueSurface, PdeError> {
    if grid.layout() != NodeLayout::Fixed {
        return Err(PdeError::InvalidGrid("the explicit solver needs fixed nodes".into()));
    }
    let n_time = grid.n_time();
    let n = grid.n_space();
    let h = grid.h();
    let dt_outer = grid.dt();
    if opts.start_offset_steps >= n_time - 1 {
        return Err(PdeError::InvalidGrid(format!(
            "start offset of {} steps leaves nothing to solve",
            opts.start_offset_steps
        )));
    }
    let limit = opts.cfl_safety * ham.bounds().max_step(h);
    let edge_limit = 0.5 * h / grid.edge_speed().max(f64::MIN_POSITIVE);
    let limit = limit.min(edge_limit);
    let substeps = if dt_outer <= limit {
        1
    } else if opts.auto_substep {
        (dt_outer / limit).ceil() as usize
    } else {
        return Err(PdeError::CflViolation { dt: dt_outer, limit });
    };
    let dt = dt_outer / substeps as f64;

    let marcher = Marcher {
        grid,
        profile,
        bc,
        margin: opts.edge_margin_cells * h,
        nodes: grid.nodes(),
    };
    let nodes = &marcher.nodes;

    let mut values = vec![f64::NAN; n_time * n];
    let mut a_star = vec![f64::NAN; n_time * n];
    let mut z_star = vec![f64::NAN; n_time * n];
    let mut edge_values = vec![(f64::NAN, f64::NAN); n_time];

    let k_start = n_time - 1 - opts.start_offset_steps;
    for k in k_start..n_time {
        let t = grid.time(k);
        let (lo, hi) = (grid.lower_at(t), grid.upper_at(t));
        for i in 0..n {
            if nodes[i] >= lo && nodes[i] <= hi {
                values[k * n + i] = profile(t, nodes[i]);
            }
        }
        edge_values[k] = match bc {
            BoundaryCondition::Dirichlet { lower, upper } => (lower(t, lo), upper(t, hi)),
            BoundaryCondition::ExtrapolateLinear => (profile(t, lo), profile(t, hi)),
        };
    }

    let mut cur: Vec<f64> = values[k_start * n..(k_start + 1) * n].to_vec();
    let mut next = cur.clone();
    let mut slice_from = marcher.slice(grid.time(k_start));
    let mut saturated: u64 = 0;
    let mut updates: u64 = 0;
    for k in (0..k_start).rev() {
        let t_outer = grid.time(k + 1);
        for s in 0..substeps {
            let t_from = t_outer - s as f64 * dt;
            let t_to = if s + 1 == substeps { grid.time(k) } else { t_from - dt };
            let edges = marcher.complete(t_from, &slice_from, &mut cur)?;
            let slice_to = marcher.slice(t_to);
            let last_inner = s + 1 == substeps;
            for i in 0..n {
                if !slice_to.computed[i] {
                    next[i] = f64::NAN;
                    continue;
                }
                let centre = cur[i];
                let (vl, hl) = if i > 0 && slice_from.computed[i - 1] {
                    (cur[i - 1], h)
                } else {
                    (edges.0, nodes[i] - slice_from.lo)
                };
                let (vr, hr) = if i + 1 < n && slice_from.computed[i + 1] {
                    (cur[i + 1], h)
                } else {
                    (edges.1, slice_from.hi - nodes[i])
                };
                if !(hl > 0.0 && hr > 0.0 && centre.is_finite()) {
                    return Err(PdeError::InvalidGrid(format!(
                        "domain edge moved past node x={} within one step at t={t_from}",
                        nodes[i]
                    )));
                }
                let back = (centre - vl) / hl;
                let fwd = (vr - centre) / hr;
                let stencil = Stencil {
                    back,
                    fwd,
                    second: 2.0 * (fwd - back) / (hl + hr),
                };
                let e = ham.evaluate(t_from, nodes[i], &stencil);
                let v = centre + dt * e.value;
                if !v.is_finite() {
                    return Err(PdeError::NonFinite { t: t_to, x: nodes[i] });
                }
                next[i] = v;
                updates += 1;
                saturated += e.saturated as u64;
                if last_inner {
                    a_star[k * n + i] = e.a;
                    z_star[k * n + i] = e.z;
                }
            }
            std::mem::swap(&mut cur, &mut next);
            slice_from = slice_to;
        }
        let edges = marcher.complete(grid.time(k), &slice_from, &mut cur)?;
        values[k * n..(k + 1) * n].copy_from_slice(&cur);
        edge_values[k] = edges;
    }

    Ok(ValueSurface {
        grid: *grid,
        values,
        a_star,
        z_star,
        edge_values,
        stats: SolveStats {
            substeps,
            inner_dt: dt,
            start_time: grid.time(k_start),
            node_updates: updates,
            saturated_fraction: if updates > 0 { saturated as f64 / updates as f64 } else { 0.0 },
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::hamiltonian::{HeatHamiltonian, ZeroHamiltonian};

    #[test]
    fn zero_hamiltonian_keeps_terminal() {
        let g = Grid1D::fixed(1.0, 11, -1.0, 1.0, 21).unwrap();
        let f = |_t: f64, x: f64| x * x * x - x;
        let s = solve_hjb_1d(&g, &ZeroHamiltonian, &f, BoundaryCondition::ExtrapolateLinear, &SolveOptions::default())
            .unwrap();
        for i in 0..21 {
            let x = g.node(i);
            let v = s.value(0, i);
            if i == 0 || i == 20 {
                // edge nodes carry the linear extrapolation of the cubic
                assert!(v.is_finite());
            } else {
                assert_eq!(v, f(1.0, x));
            }
        }
    }

    #[test]
    fn heat_equation_dirichlet() {
        // v = e^{-(T-t)/2} sin x solves -v_t - v_xx / 2 = 0
        let pi = std::f64::consts::PI;
        let g = Grid1D::fixed(1.0, 101, 0.0, pi, 101).unwrap();
        let exact = |t: f64, x: f64| (-(1.0 - t) / 2.0).exp() * x.sin();
        let bc = BoundaryCondition::Dirichlet {
            lower: &exact,
            upper: &exact,
        };
        let s = solve_hjb_1d(&g, &HeatHamiltonian { sigma: 1.0 }, &exact, bc, &SolveOptions::default()).unwrap();
        let err = (0..101)
            .map(|i| (s.value(0, i) - exact(0.0, g.node(i))).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-3, "max error {err}");
    }

    #[test]
    fn cfl_violation_without_substeps() {
        let g = Grid1D::fixed(1.0, 3, 0.0, 1.0, 101).unwrap();
        let f = |_t: f64, x: f64| x;
        let opts = SolveOptions {
            auto_substep: false,
            ..SolveOptions::default()
        };
        let r = solve_hjb_1d(&g, &HeatHamiltonian { sigma: 1.0 }, &f, BoundaryCondition::ExtrapolateLinear, &opts);
        assert!(matches!(r, Err(PdeError::CflViolation { .. })));
    }
}
