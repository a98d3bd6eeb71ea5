//! Closed-loop equilibrium through the leader's stochastic target problem.
//!
//! With `v(t, x, y) = x + ψ(t, y - x)` the leader's HJB equation on the
//! band `w-(t, x) ≤ y ≤ w+(t, x)` reduces to a one-dimensional equation in
//! `u = y - x` on the shrinking interval `[c-(T-t), c+(T-t)]`, with Dirichlet
//! data given by the leader's value on the two edges.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::closed_form::{
    boundaries_exact, boundary_leader_values, BoundaryLeaderValues, BoundaryPair, Boundaries,
};
use crate::io::{CsvTable, ParsedCsv};
use crate::model::{
    Control, EquilibriumKind, EquilibriumReport, FeedbackPolicy, FollowerControl, LeaderControl,
    ModelError, OutsideBand, StrategyDescriptor, ValidParams,
};
use crate::pde::{
    default_z_box, solve_hjb_1d, solve_hjb_1d_implicit, solve_hjb_2d_masked, AffineEdge, BandSide, BoundaryCondition,
    BoundaryHamiltonian, ControlCoeffs, ControlledDynamics2d, Grid1D, Grid2D, PdeError,
    ImplicitOptions, ReducedLeaderHamiltonian, SolveOptions, Surface2D, ValueSurface,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TargetError {
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("numerical boundary deviates from its closed form by {error:e} (limit {limit:e})")]
    ExactnessCheckFailed { error: f64, limit: f64 },
    #[error("non-concave region: z search box saturated on {fraction:.3} of node updates (limit {limit})")]
    NonConcave { fraction: f64, limit: f64 },
    #[error("no finite values on the t=0 slice")]
    EmptySlice,
    #[error("cannot read leader artifact: {0}")]
    Artifact(String),
}

/// Grid for the two boundary equations on a fixed `x` window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryGrid {
    pub n_time: usize,
    pub n_space: usize,
    /// Half-width of the window in units of `σ √T`.
    pub window_sigmas: f64,
}

impl Default for BoundaryGrid {
    fn default() -> Self {
        Self {
            n_time: 201,
            n_space: 201,
            window_sigmas: 6.0,
        }
    }
}

/// Numerically solved band edges with their deviation from the closed forms.
#[derive(Debug, Clone)]
pub struct NumericBoundaries {
    pub w_minus: ValueSurface,
    pub w_plus: ValueSurface,
    pub exact: BoundaryPair,
    pub max_error_minus: f64,
    pub max_error_plus: f64,
}

impl NumericBoundaries {
    pub fn max_error(&self) -> f64 {
        self.max_error_minus.max(self.max_error_plus)
    }

    /// Rows `t, x, w_minus, w_plus` on the solver grid.
    pub fn to_csv(&self) -> CsvTable {
        let g = &self.w_minus.grid;
        let mut table = CsvTable::new(&["t", "x", "w_minus", "w_plus"]);
        for k in 0..g.n_time() {
            for i in 0..g.n_space() {
                table.push(vec![
                    g.time(k).into(),
                    g.node(i).into(),
                    self.w_minus.value(k, i).into(),
                    self.w_plus.value(k, i).into(),
                ]);
            }
        }
        table
    }
}

impl Boundaries for NumericBoundaries {
    fn w_minus(&self, t: f64, x: f64) -> f64 {
        self.w_minus.value_at(t, x).unwrap_or(f64::NAN)
    }

    fn w_plus(&self, t: f64, x: f64) -> f64 {
        self.w_plus.value_at(t, x).unwrap_or(f64::NAN)
    }
}

pub const BOUNDARY_EXACTNESS_LIMIT: f64 = 1e-4;

/// Solves the two edge equations with terminal data `w(T, x) = x` and
/// linear extrapolation at the window ends.
pub fn compute_boundaries_numeric(params: &ValidParams, grid: &BoundaryGrid) -> Result<NumericBoundaries, TargetError> {
    let half = grid.window_sigmas * params.sigma.abs() * params.horizon.sqrt();
    let g = Grid1D::fixed(params.horizon, grid.n_time, params.x0 - half, params.x0 + half, grid.n_space)?;
    let terminal = |_t: f64, x: f64| x;
    let opts = SolveOptions::default();
    let exact = boundaries_exact(params);
    let solve = |side| {
        let ham = BoundaryHamiltonian::new(*params, side);
        solve_hjb_1d(&g, &ham, &terminal, BoundaryCondition::ExtrapolateLinear, &opts)
    };
    let w_minus = solve(BandSide::Lower)?;
    let w_plus = solve(BandSide::Upper)?;
    let error = |s: &ValueSurface, f: &dyn Fn(f64, f64) -> f64| {
        let mut worst: f64 = 0.0;
        for k in 0..g.n_time() {
            for i in 0..g.n_space() {
                worst = worst.max((s.value(k, i) - f(g.time(k), g.node(i))).abs());
            }
        }
        worst
    };
    let max_error_minus = error(&w_minus, &|t, x| exact.w_minus(t, x));
    let max_error_plus = error(&w_plus, &|t, x| exact.w_plus(t, x));
    let worst = max_error_minus.max(max_error_plus);
    if !(worst <= BOUNDARY_EXACTNESS_LIMIT) {
        return Err(TargetError::ExactnessCheckFailed {
            error: worst,
            limit: BOUNDARY_EXACTNESS_LIMIT,
        });
    }
    Ok(NumericBoundaries {
        w_minus,
        w_plus,
        exact,
        max_error_minus,
        max_error_plus,
    })
}

/// Discretisation of the reduced leader equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderGrid {
    pub n_time: usize,
    /// Nodes across the widest slice `[c- T, c+ T]`.
    pub n_space: usize,
    /// Search box for `z`; defaults to `[-2 b_max c_F, 3 b_max c_F]`.
    pub z_box: Option<(f64, f64)>,
    /// Outer steps between the horizon and the start level.
    pub start_offset_steps: usize,
    /// Largest tolerated share of saturated `z` maximisations.
    pub max_saturated_fraction: f64,
}

impl Default for LeaderGrid {
    fn default() -> Self {
        Self {
            n_time: 2000,
            n_space: 401,
            z_box: None,
            start_offset_steps: 0,
            max_saturated_fraction: 0.05,
        }
    }
}

impl LeaderGrid {
    pub fn new(n_time: usize, n_space: usize) -> Self {
        Self {
            n_time,
            n_space,
            ..Self::default()
        }
    }
}

/// Reduced-coordinate solution of the leader problem.
#[derive(Debug, Clone)]
pub struct LeaderSolution {
    pub params: ValidParams,
    /// `ψ(t, u)` with `u = y - x`.
    pub surface: Arc<ValueSurface>,
    pub boundaries: BoundaryPair,
    pub edge_values: BoundaryLeaderValues,
    pub grid: LeaderGrid,
    pub y0_star: f64,
    pub v_cl: f64,
    pub v_f_cl: f64,
}

impl LeaderSolution {
    /// `v(t, x, y) = x + ψ(t, y - x)`; `None` off the band.
    pub fn value(&self, t: f64, x: f64, y: f64) -> Option<f64> {
        self.surface.value_at(t, y - x).map(|psi| x + psi)
    }

    pub fn x0(&self) -> f64 {
        self.params.x0
    }

    /// The same solution for another initial state; the reduced equation does
    /// not depend on `x`.
    pub fn shifted(&self, x0: f64) -> LeaderSolution {
        let s = x0 - self.params.x0;
        LeaderSolution {
            params: self.params.with_x0(x0),
            surface: Arc::clone(&self.surface),
            y0_star: self.y0_star + s,
            v_cl: self.v_cl + s,
            v_f_cl: self.v_f_cl + s,
            ..self.clone()
        }
    }

    pub fn report(&self) -> Result<EquilibriumReport, TargetError> {
        let stats = self.surface.stats;
        let diagnostics = BTreeMap::from([
            ("grid_n_time".to_string(), self.grid.n_time as f64),
            ("grid_n_space".to_string(), self.grid.n_space as f64),
            ("y0_star".to_string(), self.y0_star),
            ("substeps".to_string(), stats.substeps as f64),
            ("saturated_fraction".to_string(), stats.saturated_fraction),
        ]);
        let strategy = StrategyDescriptor {
            leader: LeaderControl::FeedbackTable {
                name: "surface.csv".into(),
            },
            follower: FollowerControl::ProjectedSensitivity {
                z_hi: self.params.z_sat_hi(),
                cost_follower: self.params.cost_follower,
            },
        };
        Ok(EquilibriumReport::new(
            EquilibriumKind::Cl,
            &self.params,
            self.v_cl,
            self.v_f_cl,
            strategy,
            diagnostics,
        )?)
    }

    /// Rows `t, u, psi, a_star, z_star`.
    pub fn surface_csv(&self) -> CsvTable {
        self.surface.to_csv("u", "psi")
    }

    /// One row `kind, x0, leader_value, follower_value, y0_star, grid`.
    pub fn summary_csv(&self) -> CsvTable {
        let mut table = CsvTable::new(&["kind", "x0", "leader_value", "follower_value", "y0_star", "grid"]);
        table.push(vec![
            "CL".into(),
            self.params.x0.into(),
            self.v_cl.into(),
            self.v_f_cl.into(),
            self.y0_star.into(),
            format!("{}x{}", self.grid.n_time, self.grid.n_space).into(),
        ]);
        table
    }

    pub fn policy(&self) -> ClPolicy {
        extract_policy(self)
    }

    /// Rebuilds a solution from the `surface.csv` and `summary.csv` written
    /// by an earlier run with the same parameters. Values carry the 9 digits
    /// of the files.
    pub fn from_csv(params: &ValidParams, surface: &ParsedCsv, summary: &ParsedCsv) -> Result<Self, TargetError> {
        let bad = TargetError::Artifact;
        let t = surface.numbers("t").map_err(bad)?;
        let psi = surface.numbers("psi").map_err(bad)?;
        let a_star = surface.numbers("a_star").map_err(bad)?;
        let z_star = surface.numbers("z_star").map_err(bad)?;
        let n_space = t.iter().take_while(|&&tk| tk == t[0]).count();
        if n_space < 3 || t.len() % n_space != 0 {
            return Err(bad(format!("{} rows do not form a grid of {n_space} nodes", t.len())));
        }
        let n_time = t.len() / n_space;
        let field = |name: &str| -> Result<f64, TargetError> {
            let v = summary.numbers(name).map_err(bad)?;
            v.first().copied().ok_or_else(|| bad(format!("summary has no `{name}` row")))
        };
        let x0 = field("x0")?;
        if x0 != params.x0 {
            return Err(bad(format!("summary x0 = {x0} differs from the configured x0 = {}", params.x0)));
        }
        let w = boundaries_exact(params);
        let phi = boundary_leader_values(params);
        let (r_lo, r_hi) = edge_rates(&phi);
        let edge = |rate| AffineEdge { at_horizon: 0.0, rate };
        let g = Grid1D::scaled(params.horizon, n_time, n_space, edge(w.c_minus), edge(w.c_plus))?;
        let edge_values = (0..n_time)
            .map(|k| {
                let tau = params.horizon - g.time(k);
                (r_lo * tau, r_hi * tau)
            })
            .collect();
        let surface = ValueSurface {
            grid: g,
            values: psi,
            a_star,
            z_star,
            edge_values,
            stats: Default::default(),
        };
        Ok(LeaderSolution {
            params: *params,
            surface: Arc::new(surface),
            boundaries: w,
            edge_values: phi,
            grid: LeaderGrid::new(n_time, n_space),
            y0_star: field("y0_star")?,
            v_cl: field("leader_value")?,
            v_f_cl: field("follower_value")?,
        })
    }
}

/// Rate pair `(1/c_F ± a_max - c_L a_max²/2)` as the Dirichlet data of `ψ`.
fn edge_rates(phi: &BoundaryLeaderValues) -> (f64, f64) {
    (phi.rate_minus, phi.rate_plus)
}

/// Start profile: piecewise linear in `u` through the two edge values and
/// `ψ = 0` at `u = 0`.
pub fn start_profile(params: &ValidParams) -> impl Fn(f64, f64) -> f64 + Sync + Copy {
    let w = boundaries_exact(params);
    let (r_lo, r_hi) = edge_rates(&boundary_leader_values(params));
    let (c_lo, c_hi) = (w.c_minus, w.c_plus);
    let horizon = params.horizon;
    move |t: f64, u: f64| {
        let tau = horizon - t;
        if tau <= 0.0 {
            return 0.0;
        }
        if u <= 0.0 {
            (u / (c_lo * tau)).clamp(0.0, 1.0) * r_lo * tau
        } else {
            (u / (c_hi * tau)).clamp(0.0, 1.0) * r_hi * tau
        }
    }
}

/// Solves the reduced leader equation and optimises the follower's initial
/// value at `params.x0`.
pub fn solve_leader(params: &ValidParams, grid: &LeaderGrid) -> Result<LeaderSolution, TargetError> {
    let w = boundaries_exact(params);
    let phi = boundary_leader_values(params);
    let (r_lo, r_hi) = edge_rates(&phi);
    let g = Grid1D::scaled(
        params.horizon,
        grid.n_time,
        grid.n_space,
        AffineEdge {
            at_horizon: 0.0,
            rate: w.c_minus,
        },
        AffineEdge {
            at_horizon: 0.0,
            rate: w.c_plus,
        },
    )?;
    let z_box = grid.z_box.unwrap_or_else(|| default_z_box(params));
    let ham = ReducedLeaderHamiltonian::new(*params, z_box);
    let horizon = params.horizon;
    let lower = move |t: f64, _u: f64| r_lo * (horizon - t);
    let upper = move |t: f64, _u: f64| r_hi * (horizon - t);
    let profile = start_profile(params);
    let opts = ImplicitOptions {
        start_offset_steps: grid.start_offset_steps,
        ..ImplicitOptions::default()
    };
    let surface = solve_hjb_1d_implicit(&g, &ham, &profile, &lower, &upper, &opts)?;
    let fraction = surface.stats.saturated_fraction;
    if fraction > grid.max_saturated_fraction {
        return Err(TargetError::NonConcave {
            fraction,
            limit: grid.max_saturated_fraction,
        });
    }
    let mut solution = LeaderSolution {
        params: *params,
        surface: Arc::new(surface),
        boundaries: w,
        edge_values: phi,
        grid: *grid,
        y0_star: f64::NAN,
        v_cl: f64::NAN,
        v_f_cl: f64::NAN,
    };
    let (y0, v, vf) = optimize_y0(&solution, params.x0)?;
    solution.y0_star = y0;
    solution.v_cl = v;
    solution.v_f_cl = vf;
    Ok(solution)
}

/// Maximises `v(0, x0, y)` over the band: best grid point on the `t = 0`
/// slice (edges included, ties to the smallest `y`), refined by the vertex of
/// the parabola through the best node and its neighbours.
///
/// Returns `(y0_star, V_CL, V_F)` where the follower's value is `y0_star`.
pub fn optimize_y0(solution: &LeaderSolution, x0: f64) -> Result<(f64, f64, f64), TargetError> {
    let s = &solution.surface;
    let g = &s.grid;
    let (lo, hi) = (g.lower_at(0.0), g.upper_at(0.0));
    let (e_lo, e_hi) = s.edge_values[0];
    let mut points: Vec<(f64, f64)> = vec![(lo, e_lo)];
    for i in 0..g.n_space() {
        let u = g.node(i);
        let v = s.value(0, i);
        if u > lo && u < hi && v.is_finite() {
            points.push((u, v));
        }
    }
    points.push((hi, e_hi));
    if points.iter().all(|p| !p.1.is_finite()) {
        return Err(TargetError::EmptySlice);
    }
    let mut best = 0;
    for (j, p) in points.iter().enumerate() {
        if p.1 > points[best].1 {
            best = j;
        }
    }
    let (mut u_star, mut psi_star) = points[best];
    if best > 0 && best + 1 < points.len() {
        let (u0, v0) = points[best - 1];
        let (u1, v1) = points[best];
        let (u2, v2) = points[best + 1];
        let d01 = (v1 - v0) / (u1 - u0);
        let d12 = (v2 - v1) / (u2 - u1);
        let curv = (d12 - d01) / (u2 - u0);
        if curv < 0.0 {
            // vertex of the interpolating parabola
            let u = 0.5 * (u0 + u1) - d01 / (2.0 * curv);
            if u > u0 && u < u2 {
                let v = v1 + (u - u1) * (d01 + curv * (u - u0));
                if v >= psi_star {
                    u_star = u;
                    psi_star = v;
                }
            }
        }
    }
    let y0 = x0 + u_star;
    Ok((y0, x0 + psi_star, y0))
}

/// Closed-loop feedback read from a solved surface. Interior queries use the
/// stored maximisers at the nearest node; within one cell of an edge the
/// edge controls `(∓a_max, 1)` are used. On the start levels next to the
/// horizon, which carry no maximisers, the policy steers straight at the
/// target with `z = 1`.
#[derive(Debug, Clone)]
pub struct ClPolicy {
    surface: Arc<ValueSurface>,
    boundaries: BoundaryPair,
    a_max: f64,
    cell: f64,
}

impl ClPolicy {
    pub fn new(surface: Arc<ValueSurface>, boundaries: BoundaryPair, a_max: f64) -> Self {
        let cell = surface.grid.h();
        Self {
            surface,
            boundaries,
            a_max,
            cell,
        }
    }

    pub fn surface(&self) -> &ValueSurface {
        &self.surface
    }

    fn band_u(&self, t: f64) -> (f64, f64) {
        let tau = self.boundaries.horizon - t;
        (self.boundaries.c_minus * tau, self.boundaries.c_plus * tau)
    }

    /// `z = 1` with the action that reaches `u = 0` at the horizon along the
    /// noiseless drift `m(1) - a`; this is the edge control on either edge.
    fn aim(&self, t: f64, u: f64) -> Control {
        let b = &self.boundaries;
        let tau = b.horizon - t;
        let m1 = -0.5 * (b.c_minus + b.c_plus);
        let a = if tau > 0.0 { u / tau + m1 } else { m1 };
        Control {
            a: a.clamp(-self.a_max, self.a_max),
            z: 1.0,
        }
    }

    fn interior(&self, t: f64, u: f64, lo: f64, hi: f64) -> Option<Control> {
        let s = &self.surface;
        let k = s.layer_index(t);
        let g = &s.grid;
        if hi <= lo {
            return None;
        }
        let pos = (u - lo) / (hi - lo) * (g.n_space() - 1) as f64;
        let nearest = pos.round().clamp(0.0, (g.n_space() - 1) as f64) as usize;
        let inward = if u - lo < hi - u {
            (nearest + 1).min(g.n_space() - 1)
        } else {
            nearest.saturating_sub(1)
        };
        [nearest, inward].into_iter().find_map(|i| {
            let (a, z) = s.controls(k, i);
            (a.is_finite() && z.is_finite()).then_some(Control { a, z })
        })
    }
}

impl FeedbackPolicy for ClPolicy {
    fn control_at(&self, t: f64, x: f64, y: f64) -> Result<Control, OutsideBand> {
        let u = y - x;
        let (lo, hi) = self.band_u(t);
        let tol = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
        if !(u >= lo - tol && u <= hi + tol) {
            return Err(OutsideBand {
                t,
                x,
                y,
                lo: x + lo,
                hi: x + hi,
            });
        }
        let lower_edge = Control { a: -self.a_max, z: 1.0 };
        let upper_edge = Control { a: self.a_max, z: 1.0 };
        let cell = self.surface.grid.h_at(t);
        if u - lo < cell && u - lo <= hi - u {
            return Ok(lower_edge);
        }
        if hi - u < cell {
            return Ok(upper_edge);
        }
        Ok(self.interior(t, u, lo, hi).unwrap_or_else(|| self.aim(t, u)))
    }

    fn band(&self, t: f64, x: f64) -> (f64, f64) {
        (self.boundaries.w_minus(t, x), self.boundaries.w_plus(t, x))
    }

    fn cell_width(&self) -> f64 {
        self.cell
    }
}

pub fn extract_policy(solution: &LeaderSolution) -> ClPolicy {
    ClPolicy::new(Arc::clone(&solution.surface), solution.boundaries, solution.params.a_max)
}

/// Whether `(x, y)` lies in the closure of the reachable set at time `t`,
/// `w-(t, x) ≤ y ≤ w+(t, x)`.
pub fn reachability_contains(params: &ValidParams, t: f64, x: f64, y: f64) -> bool {
    let w = boundaries_exact(params);
    w.w_minus(t, x) <= y && y <= w.w_plus(t, x)
}

/// Discretisation of the two-dimensional cross-check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leader2dGrid {
    pub n_time: usize,
    /// Spacing in both `x` and `y`.
    pub h: f64,
    /// Columns on each side of `x0`.
    pub half_columns: usize,
    pub a_step: f64,
    pub z_step: f64,
    pub z_box: Option<(f64, f64)>,
    pub start_offset_steps: usize,
}

impl Default for Leader2dGrid {
    fn default() -> Self {
        Self {
            n_time: 41,
            h: 0.1,
            half_columns: 2,
            a_step: 0.25,
            z_step: 0.25,
            z_box: None,
            start_offset_steps: 1,
        }
    }
}

/// Leader dynamics in `(x, y)` with discrete control sets.
pub struct LeaderDynamics2d {
    controls: Vec<ControlCoeffs>,
}

impl LeaderDynamics2d {
    pub fn new(params: &ValidParams, a_step: f64, z_step: f64, z_box: (f64, f64)) -> Self {
        let grid_points = |lo: f64, hi: f64, step: f64| -> Vec<f64> {
            let n = ((hi - lo) / step).round() as usize;
            (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
        };
        let cf = params.cost_follower;
        let mut controls = Vec::new();
        for z in grid_points(z_box.0, z_box.1, z_step) {
            let pi = z.clamp(0.0, params.z_sat_hi());
            for a in grid_points(-params.a_max, params.a_max, a_step) {
                controls.push(ControlCoeffs {
                    a,
                    z,
                    reward: -0.5 * params.cost_leader * a * a,
                    drift_x: a + pi / cf,
                    drift_y: pi * pi / (2.0 * cf),
                    vol_x: params.sigma,
                    vol_y: params.sigma * z,
                });
            }
        }
        Self { controls }
    }
}

impl ControlledDynamics2d for LeaderDynamics2d {
    fn controls(&self) -> &[ControlCoeffs] {
        &self.controls
    }
}

/// Solves the leader problem directly in `(x, y)` on a window of columns
/// around `x0`; returns the surface and `max_y v(0, x0, y)`.
pub fn solve_leader_2d(params: &ValidParams, grid: &Leader2dGrid) -> Result<(Surface2D, f64), TargetError> {
    let w = boundaries_exact(params);
    let phi = boundary_leader_values(params);
    let g = Grid2D::new(
        params.horizon,
        grid.n_time,
        params.x0 - grid.half_columns as f64 * grid.h,
        2 * grid.half_columns + 1,
        grid.h,
        AffineEdge {
            at_horizon: 0.0,
            rate: w.c_minus,
        },
        AffineEdge {
            at_horizon: 0.0,
            rate: w.c_plus,
        },
    )?;
    let z_box = grid.z_box.unwrap_or_else(|| default_z_box(params));
    let dynamics = LeaderDynamics2d::new(params, grid.a_step, grid.z_step, z_box);
    let psi0 = start_profile(params);
    let profile = move |t: f64, x: f64, u: f64| x + psi0(t, u);
    let lower = move |t: f64, x: f64| phi.phi_minus(t, x);
    let upper = move |t: f64, x: f64| phi.phi_plus(t, x);
    let surface = solve_hjb_2d_masked(&g, &dynamics, &profile, &lower, &upper, grid.start_offset_steps)?;
    let (v, _) = surface.column_max(0, grid.half_columns);
    Ok((surface, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GameParams;

    fn bench() -> ValidParams {
        GameParams::benchmark().validate().unwrap()
    }

    #[test]
    fn reachability_examples() {
        let p = bench();
        assert!(reachability_contains(&p, 0.0, 0.0, 0.0));
        assert!(reachability_contains(&p, 1.0, 0.7, 0.7));
        assert!(!reachability_contains(&p, 1.0, 0.7, 0.8));
        assert!(reachability_contains(&p, 0.0, 0.0, -9.5));
        assert!(!reachability_contains(&p, 0.0, 0.0, -9.6));
    }

    #[test]
    fn csv_round_trip_keeps_the_policy() {
        let p = bench();
        let sol = solve_leader(&p, &LeaderGrid::new(60, 41)).unwrap();
        let surface = ParsedCsv::parse(&sol.surface_csv().render()).unwrap();
        let summary = ParsedCsv::parse(&sol.summary_csv().render()).unwrap();
        let back = LeaderSolution::from_csv(&p, &surface, &summary).unwrap();
        assert_eq!(back.grid.n_time, 60);
        assert_eq!(back.grid.n_space, 41);
        assert!((back.v_cl - sol.v_cl).abs() < 1e-8);
        let (a, b) = (sol.policy(), back.policy());
        for (t, u) in [(0.0, 1.0), (0.5, -2.0), (0.9, 0.3)] {
            let (ca, cb) = (a.control_at(t, 0.0, u).unwrap(), b.control_at(t, 0.0, u).unwrap());
            assert!((ca.a - cb.a).abs() < 1e-7 && (ca.z - cb.z).abs() < 1e-7);
        }
        assert!(LeaderSolution::from_csv(&p.with_x0(1.0), &surface, &summary).is_err());
    }

    #[test]
    fn policy_edges_and_terminal_aim() {
        let p = bench();
        let sol = solve_leader(&p, &LeaderGrid::new(60, 41)).unwrap();
        let pol = sol.policy();
        assert_eq!(pol.control_at(0.0, 0.0, -9.5).unwrap(), Control { a: -10.0, z: 1.0 });
        assert_eq!(pol.control_at(0.0, 0.0, 10.5).unwrap(), Control { a: 10.0, z: 1.0 });
        assert!(pol.control_at(0.0, 0.0, 10.6).is_err());
        // the start level carries no maximisers: steer at the target
        let c = pol.control_at(1.0, 0.0, 0.0).unwrap();
        assert_eq!((c.a, c.z), (-0.5, 1.0));
    }

    #[test]
    fn start_profile_anchors() {
        let p = bench();
        let f = start_profile(&p);
        assert_eq!(f(0.0, 0.0), 0.0);
        assert_eq!(f(0.0, -9.5), -59.0);
        assert_eq!(f(0.0, 10.5), -39.0);
        assert_eq!(f(1.0, 0.0), 0.0);
    }

    #[test]
    fn numeric_boundaries_match_closed_form() {
        let nb = compute_boundaries_numeric(&bench(), &BoundaryGrid::default()).unwrap();
        assert!(nb.max_error() <= 1e-6, "{}", nb.max_error());
        let g = &nb.w_minus.grid;
        let last = g.n_time() - 1;
        for i in 0..g.n_space() {
            assert_eq!(nb.w_minus.value(last, i), g.node(i));
        }
    }
}
