//! Seeded Euler–Maruyama Monte Carlo for the controlled state and, under a
//! closed-loop policy, the follower's promised-value process `Y`.
//!
//! Every path draws its normals from its own ChaCha8 stream keyed by
//! `(seed, path index)`, so results do not depend on the thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::closed_form;
use crate::io::{Cell, CsvTable};
use crate::model::{
    Control, EquilibriumKind, EquilibriumReport, FeedbackPolicy, FollowerControl, LeaderControl, ModelError,
    OutsideBand, StrategyDescriptor, ValidParams,
};
use crate::target::{solve_leader, LeaderGrid, TargetError};

/// Largest tolerated share of closed-loop paths that leave the band by more
/// than the clamp buffer.
pub const MAX_ESCAPED_FRACTION: f64 = 0.01;

/// Clamp buffer in policy cells.
pub const CLAMP_BUFFER_CELLS: f64 = 2.0;

/// Slack on the hard ordering `AOL ≤ CL ≤ FB` in [`compare_all`].
pub const ORDERING_TOL: f64 = 1e-2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("strategy cannot be simulated without a feedback policy: {0}")]
    NeedsPolicy(&'static str),
    #[error("initial point is off the band: {0}")]
    StartOutsideBand(#[from] OutsideBand),
    #[error("{escaped} of {n_paths} paths left the band beyond the clamp buffer (limit {limit})")]
    DomainErrors { escaped: usize, n_paths: usize, limit: f64 },
    #[error("non-finite payoff on path {path}")]
    NonFinite { path: usize },
    #[error("ordering AOL ≤ CL ≤ FB violated: AOL={aol}, CL={cl}, FB={fb}")]
    Ordering { aol: f64, cl: f64, fb: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Target(#[from] TargetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    /// Pair path `2i + 1` with the negated increments of path `2i`.
    pub antithetic: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            n_steps: 500,
            seed: 42,
            antithetic: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_paths < 2 {
            return Err(SimError::InvalidConfig(format!("n_paths = {} < 2", self.n_paths)));
        }
        if self.n_steps < 1 {
            return Err(SimError::InvalidConfig("n_steps = 0".into()));
        }
        if self.antithetic && self.n_paths % 2 == 1 {
            return Err(SimError::InvalidConfig(format!(
                "antithetic sampling needs an even n_paths, got {}",
                self.n_paths
            )));
        }
        Ok(())
    }
}

/// What drives the controls along a path.
#[derive(Clone, Copy)]
pub enum Strategy<'a> {
    Descriptor(&'a StrategyDescriptor),
    /// Closed-loop feedback started from `(x0, y0)`; the follower plays its
    /// best response `Π_[0, b_max c_F](z) / c_F`.
    Feedback { policy: &'a dyn FeedbackPolicy, y0: f64 },
}

/// Distribution of the terminal miss `|Y_T - X_T|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapStats {
    pub mean: f64,
    pub p95: f64,
    pub max: f64,
    /// Share of paths clamped back onto the band at least once.
    pub boundary_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// `Some(Cl)` for feedback runs; descriptor runs are labelled by the caller.
    pub kind: Option<EquilibriumKind>,
    pub seed: u64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub jl_mean: f64,
    pub jl_se: f64,
    pub jf_mean: f64,
    pub jf_se: f64,
    pub gap: Option<GapStats>,
    pub clamp_fraction: f64,
    /// Paths that left the band by more than the clamp buffer.
    pub escaped: usize,
}

impl SimResult {
    pub fn with_kind(mut self, kind: EquilibriumKind) -> Self {
        self.kind = Some(kind);
        self
    }

    pub fn target_gap_mean(&self) -> Option<f64> {
        self.gap.map(|g| g.mean)
    }
}

/// `sim.csv`: one row per result.
pub fn sim_csv(results: &[SimResult]) -> CsvTable {
    let mut table = CsvTable::new(&[
        "kind",
        "n_paths",
        "n_steps",
        "seed",
        "JL_mean",
        "JL_se",
        "JF_mean",
        "JF_se",
        "target_gap_mean",
        "clamp_fraction",
    ]);
    for r in results {
        table.push(vec![
            r.kind.map_or("custom", EquilibriumKind::label).into(),
            r.n_paths.into(),
            r.n_steps.into(),
            r.seed.into(),
            r.jl_mean.into(),
            r.jl_se.into(),
            r.jf_mean.into(),
            r.jf_se.into(),
            r.target_gap_mean().map_or(Cell::Text(String::new()), Cell::Num),
            r.clamp_fraction.into(),
        ]);
    }
    table
}

/// Compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mut s = Kahan::default();
    xs.iter().for_each(|&x| s.add(x));
    let mean = s.sum / n;
    let mut d = Kahan::default();
    xs.iter().for_each(|&x| d.add((x - mean) * (x - mean)));
    let var = d.sum / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

#[derive(Debug, Clone, Copy)]
struct PathOutcome {
    jl: f64,
    jf: f64,
    gap: f64,
    clamped: bool,
    escaped: bool,
}

enum Plan<'a> {
    Open {
        leader: &'a LeaderControl,
        follower: &'a FollowerControl,
    },
    Closed {
        policy: &'a dyn FeedbackPolicy,
        y0: f64,
        buffer: f64,
    },
}

struct Engine<'a> {
    params: &'a ValidParams,
    plan: Plan<'a>,
    n_steps: usize,
    dt: f64,
}

impl Engine<'_> {
    fn run(&self, stream: u64, seed: u64, sign: f64) -> PathOutcome {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let p = self.params;
        let (dt, sigma, horizon) = (self.dt, p.sigma, p.horizon);
        let sqrt_dt = dt.sqrt();
        let mut x = p.x0;
        let mut cost_a = Kahan::default();
        let mut cost_b = Kahan::default();
        match self.plan {
            Plan::Open { leader, follower } => {
                let mut reference = p.x0;
                let mut deviated = false;
                for n in 0..self.n_steps {
                    let t = n as f64 * dt;
                    let dw = sign * sqrt_dt * normal(&mut rng);
                    let b = follower.effort_at(t, p).expect("checked before the run");
                    let a = match *leader {
                        LeaderControl::Constant { a } => a,
                        LeaderControl::AffineInState { base, gain } => {
                            (base + gain * (x - reference)).clamp(-p.a_max, p.a_max)
                        }
                        LeaderControl::Punishment { a_hat, penalty, .. } => {
                            if deviated {
                                a_hat - penalty
                            } else {
                                a_hat
                            }
                        }
                        LeaderControl::FeedbackTable { .. } => unreachable!("checked before the run"),
                    };
                    cost_a.add(a * a);
                    cost_b.add(b * b);
                    let step = (a + b) * dt + sigma * dw;
                    match *leader {
                        LeaderControl::AffineInState { base, gain } => {
                            let b_ref = (((gain * (horizon - t)).exp()) / p.cost_follower).clamp(0.0, p.b_max);
                            reference += (base + b_ref) * dt + sigma * dw;
                        }
                        LeaderControl::Punishment { b_hat, .. } => {
                            let inferred = (step - sigma * dw) / dt - a;
                            deviated = (inferred - b_hat).abs() > 1e-6 * (1.0 + b_hat.abs());
                        }
                        _ => {}
                    }
                    x += step;
                }
                self.finish(x, cost_a, cost_b, f64::NAN, false, false)
            }
            Plan::Closed { policy, y0, buffer } => {
                let mut y = y0;
                let (mut clamped, mut escaped) = (false, false);
                for n in 0..self.n_steps {
                    let t = n as f64 * dt;
                    let dw = sign * sqrt_dt * normal(&mut rng);
                    let (lo, hi) = policy.band(t, x);
                    let excess = (lo - y).max(y - hi);
                    if excess > 0.0 {
                        clamped = true;
                        escaped |= excess > buffer;
                        y = y.clamp(lo, hi);
                    }
                    let Control { a, z } = policy.control_at(t, x, y).unwrap_or_else(|_| {
                        escaped = true;
                        Control { a: 0.0, z: 1.0 }
                    });
                    let b = p.follower_response(z);
                    let h_f = a * z + b * z - 0.5 * p.cost_follower * b * b;
                    cost_a.add(a * a);
                    cost_b.add(b * b);
                    let dx = (a + b) * dt + sigma * dw;
                    y += -h_f * dt + z * dx;
                    x += dx;
                }
                self.finish(x, cost_a, cost_b, (y - x).abs(), clamped, escaped)
            }
        }
    }

    fn finish(&self, x: f64, cost_a: Kahan, cost_b: Kahan, gap: f64, clamped: bool, escaped: bool) -> PathOutcome {
        let p = self.params;
        PathOutcome {
            jl: x - 0.5 * p.cost_leader * cost_a.sum * self.dt,
            jf: x - 0.5 * p.cost_follower * cost_b.sum * self.dt,
            gap,
            clamped,
            escaped,
        }
    }
}

/// Estimates both payoffs under `strategy` with Euler–Maruyama steps of
/// `T / n_steps` and left-point cost integrals.
pub fn simulate(params: &ValidParams, strategy: Strategy<'_>, cfg: &SimConfig) -> Result<SimResult, SimError> {
    cfg.validate()?;
    let plan = match strategy {
        Strategy::Descriptor(d) => {
            d.check(params)?;
            if matches!(d.leader, LeaderControl::FeedbackTable { .. }) {
                return Err(SimError::NeedsPolicy("leader feedback table"));
            }
            if matches!(d.follower, FollowerControl::ProjectedSensitivity { .. }) {
                return Err(SimError::NeedsPolicy("follower projected sensitivity"));
            }
            Plan::Open {
                leader: &d.leader,
                follower: &d.follower,
            }
        }
        Strategy::Feedback { policy, y0 } => {
            policy.control_at(0.0, params.x0, y0)?;
            Plan::Closed {
                policy,
                y0,
                buffer: CLAMP_BUFFER_CELLS * policy.cell_width(),
            }
        }
    };
    let closed = matches!(plan, Plan::Closed { .. });
    let engine = Engine {
        params,
        plan,
        n_steps: cfg.n_steps,
        dt: params.horizon / cfg.n_steps as f64,
    };
    let outcomes: Vec<PathOutcome> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            if cfg.antithetic {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                engine.run((i / 2) as u64, cfg.seed, sign)
            } else {
                engine.run(i as u64, cfg.seed, 1.0)
            }
        })
        .collect();
    if let Some(path) = outcomes.iter().position(|o| !(o.jl.is_finite() && o.jf.is_finite())) {
        return Err(SimError::NonFinite { path });
    }
    let escaped = outcomes.iter().filter(|o| o.escaped).count();
    if escaped as f64 > MAX_ESCAPED_FRACTION * cfg.n_paths as f64 {
        return Err(SimError::DomainErrors {
            escaped,
            n_paths: cfg.n_paths,
            limit: MAX_ESCAPED_FRACTION,
        });
    }
    let units = |f: fn(&PathOutcome) -> f64| -> Vec<f64> {
        if cfg.antithetic {
            outcomes.chunks(2).map(|c| 0.5 * (f(&c[0]) + f(&c[1]))).collect()
        } else {
            outcomes.iter().map(f).collect()
        }
    };
    let (jl_mean, jl_se) = mean_and_se(&units(|o| o.jl));
    let (jf_mean, jf_se) = mean_and_se(&units(|o| o.jf));
    let n = cfg.n_paths as f64;
    let clamp_fraction = outcomes.iter().filter(|o| o.clamped).count() as f64 / n;
    let gap = closed.then(|| {
        let mut gaps: Vec<f64> = outcomes.iter().map(|o| o.gap).collect();
        let mut s = Kahan::default();
        gaps.iter().for_each(|&g| s.add(g));
        gaps.sort_by(f64::total_cmp);
        let p95 = gaps[((0.95 * n).ceil() as usize).clamp(1, gaps.len()) - 1];
        GapStats {
            mean: s.sum / n,
            p95,
            max: gaps[gaps.len() - 1],
            boundary_fraction: clamp_fraction,
        }
    });
    Ok(SimResult {
        kind: closed.then_some(EquilibriumKind::Cl),
        seed: cfg.seed,
        n_paths: cfg.n_paths,
        n_steps: cfg.n_steps,
        jl_mean,
        jl_se,
        jf_mean,
        jf_se,
        gap,
        clamp_fraction,
        escaped,
    })
}

/// Terminal miss `|Y_T - X_T|` under a closed-loop policy started at `y0`.
pub fn check_target_constraint(
    params: &ValidParams,
    policy: &dyn FeedbackPolicy,
    y0: f64,
    cfg: &SimConfig,
) -> Result<GapStats, SimError> {
    let r = simulate(params, Strategy::Feedback { policy, y0 }, cfg)?;
    Ok(r.gap.expect("feedback runs report the gap"))
}

/// One line of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub kind: EquilibriumKind,
    /// Analytic or PDE report; `None` when the kind is not certified.
    pub report: Option<EquilibriumReport>,
    /// Why the row is not certified.
    pub note: Option<String>,
    pub mc: Option<SimResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    /// `V_CL - V_ACLM` when both are available. The ordering between the two
    /// is reported, not asserted.
    pub cl_minus_aclm: Option<f64>,
}

impl Comparison {
    pub fn row(&self, kind: EquilibriumKind) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.kind == kind)
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut table = CsvTable::new(&[
            "kind",
            "certified",
            "leader_value",
            "follower_value",
            "JL_mean",
            "JL_se",
            "JF_mean",
            "JF_se",
        ]);
        let num = |x: Option<f64>| x.map_or(Cell::Text(String::new()), Cell::Num);
        for r in &self.rows {
            let rep = r.report.as_ref();
            let mc = r.mc.as_ref();
            table.push(vec![
                r.kind.label().into(),
                if rep.is_some() { "yes" } else { "not-certified" }.into(),
                num(rep.map(|r| r.leader_value)),
                num(rep.map(|r| r.follower_value)),
                num(mc.map(|m| m.jl_mean)),
                num(mc.map(|m| m.jl_se)),
                num(mc.map(|m| m.jf_mean)),
                num(mc.map(|m| m.jf_se)),
            ]);
        }
        table
    }
}

/// Every kind side by side: analytic or PDE value next to its Monte Carlo
/// estimate. Fails if `AOL ≤ CL ≤ FB` is violated by more than
/// [`ORDERING_TOL`].
pub fn compare_all(params: &ValidParams, cfg: &SimConfig, grid: &LeaderGrid) -> Result<Comparison, SimError> {
    let mut rows = Vec::with_capacity(6);
    for (kind, result) in closed_form::table(params) {
        rows.push(match result {
            Ok(report) => {
                let mc = simulate(params, Strategy::Descriptor(&report.strategy), cfg)?.with_kind(kind);
                ComparisonRow {
                    kind,
                    report: Some(report),
                    note: None,
                    mc: Some(mc),
                }
            }
            Err(e) => ComparisonRow {
                kind,
                report: None,
                note: Some(e.to_string()),
                mc: None,
            },
        });
    }
    let solution = solve_leader(params, grid)?;
    let policy = solution.policy();
    let cl = solution.report()?;
    let mc = simulate(
        params,
        Strategy::Feedback {
            policy: &policy,
            y0: solution.y0_star,
        },
        cfg,
    )?;
    rows.push(ComparisonRow {
        kind: EquilibriumKind::Cl,
        report: Some(cl),
        note: None,
        mc: Some(mc),
    });
    let value = |k: EquilibriumKind| {
        rows.iter()
            .find(|r| r.kind == k)
            .and_then(|r| r.report.as_ref())
            .map(|r| r.leader_value)
    };
    let v_cl = solution.v_cl;
    if let (Some(aol), Some(fb)) = (value(EquilibriumKind::Aol), value(EquilibriumKind::FirstBest)) {
        if !(aol - ORDERING_TOL <= v_cl && v_cl <= fb + ORDERING_TOL) {
            return Err(SimError::Ordering { aol, cl: v_cl, fb });
        }
    }
    let cl_minus_aclm = value(EquilibriumKind::Aclm).map(|v| v_cl - v);
    Ok(Comparison { rows, cl_minus_aclm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GameParams;

    fn bench() -> ValidParams {
        GameParams::benchmark().validate().unwrap()
    }

    fn cfg(n_paths: usize, n_steps: usize) -> SimConfig {
        SimConfig {
            n_paths,
            n_steps,
            seed: 7,
            antithetic: false,
        }
    }

    #[test]
    fn config_invariants() {
        assert!(cfg(1, 10).validate().is_err());
        assert!(cfg(2, 0).validate().is_err());
        assert!(SimConfig { antithetic: true, ..cfg(3, 1) }.validate().is_err());
        assert!(cfg(2, 1).validate().is_ok());
    }

    #[test]
    fn zero_controls_give_a_martingale() {
        let s = StrategyDescriptor::constant(0.0, 0.0);
        let r = simulate(&bench(), Strategy::Descriptor(&s), &cfg(20_000, 20)).unwrap();
        assert!(r.jl_mean.abs() < 3.0 * r.jl_se, "{r:?}");
        assert_eq!(r.jl_mean, r.jf_mean);
        assert!(r.gap.is_none());
    }

    #[test]
    fn first_best_constants() {
        let s = StrategyDescriptor::constant(1.0, 3.0);
        let r = simulate(&bench(), Strategy::Descriptor(&s), &cfg(20_000, 50)).unwrap();
        assert!((r.jl_mean - 3.5).abs() < 3.0 * r.jl_se, "{r:?}");
        assert!((r.jf_mean + 0.5).abs() < 3.0 * r.jf_se, "{r:?}");
    }

    #[test]
    fn reruns_are_bit_identical() {
        let s = StrategyDescriptor::constant(0.5, 1.0);
        let a = simulate(&bench(), Strategy::Descriptor(&s), &cfg(5_000, 30)).unwrap();
        let b = simulate(&bench(), Strategy::Descriptor(&s), &cfg(5_000, 30)).unwrap();
        assert_eq!(a, b);
        assert_eq!(sim_csv(&[a]).render(), sim_csv(&[b]).render());
    }

    #[test]
    fn antithetic_pairs_cancel_the_noise_for_constant_controls() {
        let s = StrategyDescriptor::constant(1.0, 1.0);
        let c = SimConfig { antithetic: true, ..cfg(1_000, 10) };
        let r = simulate(&bench(), Strategy::Descriptor(&s), &c).unwrap();
        assert!((r.jl_mean - 1.5).abs() < 1e-12);
        assert!(r.jl_se < 1e-12);
    }

    #[test]
    fn punishment_stays_silent_on_the_equilibrium_path() {
        let acl = closed_form::acl(&bench()).unwrap();
        let r = simulate(&bench(), Strategy::Descriptor(&acl.strategy), &cfg(2_000, 100)).unwrap();
        let fb = simulate(&bench(), Strategy::Descriptor(&StrategyDescriptor::constant(1.0, 3.0)), &cfg(2_000, 100))
            .unwrap();
        assert_eq!(r.jl_mean, fb.jl_mean);
    }

    #[test]
    fn deviation_triggers_the_penalty() {
        let mut s = closed_form::acl(&bench()).unwrap().strategy;
        s.follower = FollowerControl::Constant { b: 1.0 };
        let r = simulate(&bench(), Strategy::Descriptor(&s), &cfg(2_000, 100)).unwrap();
        // first step at a_hat, the remaining 99 at a_hat - penalty
        let p = match s.leader {
            LeaderControl::Punishment { penalty, .. } => penalty,
            _ => unreachable!(),
        };
        let a_low = 1.0 - p;
        let drift = (1.0 + 99.0 * a_low) / 100.0 + 1.0;
        let cost = 0.5 * (1.0 + 99.0 * a_low * a_low) / 100.0;
        assert!((r.jl_mean - (drift - cost)).abs() < 3.0 * r.jl_se + 1e-12, "{r:?}");
    }

    #[test]
    fn feedback_tables_need_a_policy() {
        let s = StrategyDescriptor {
            leader: LeaderControl::FeedbackTable { name: "t".into() },
            follower: FollowerControl::Constant { b: 0.0 },
        };
        assert!(matches!(
            simulate(&bench(), Strategy::Descriptor(&s), &cfg(2, 1)),
            Err(SimError::NeedsPolicy(_))
        ));
    }

    #[test]
    fn kahan_recovers_small_terms() {
        let mut k = Kahan::default();
        k.add(1.0);
        for _ in 0..10 {
            k.add(1e-16);
        }
        assert!((k.sum - (1.0 + 1e-15)).abs() < 1e-16);
    }
}
