//! Exact equilibrium values for the information structures that admit a
//! closed form, and the exact auxiliary boundaries of the closed-loop band.
//!
//! Everything here is an explicit formula; the numerical modules are checked
//! against these functions.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{
    EquilibriumKind, EquilibriumReport, FollowerControl, LeaderControl, ModelError,
    StrategyDescriptor, ValidParams,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClosedFormError {
    #[error("ACLM gain k={k} outside (0, {k_bar}]")]
    GainOutOfRange { k: f64, k_bar: f64 },
    #[error("ACLM closed form not certified for these parameters (a_max={a_max} ≤ {threshold})")]
    AclmNotCertified { a_max: f64, threshold: f64 },
    #[error("ACL/first-best equivalence not certified (a_max={a_max} < {threshold})")]
    AclNotCertified { a_max: f64, threshold: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Both players' values when the leader dictates both efforts:
/// `a ≡ 1/c_L`, `b ≡ b_max`.
pub fn first_best(params: &ValidParams) -> Result<EquilibriumReport, ClosedFormError> {
    let (t, cf, cl, b) = (params.horizon, params.cost_follower, params.cost_leader, params.b_max);
    let leader = params.x0 + (0.5 / cl + b) * t;
    let follower = params.x0 + (1.0 / cl + b - 0.5 * cf * b * b) * t;
    Ok(EquilibriumReport::new(
        EquilibriumKind::FirstBest,
        params,
        leader,
        follower,
        StrategyDescriptor::constant(1.0 / cl, b),
        BTreeMap::new(),
    )?)
}

/// Adapted open-loop equilibrium: constant efforts `(1/c_L, 1/c_F)`.
pub fn aol(params: &ValidParams) -> Result<EquilibriumReport, ClosedFormError> {
    let (leader, follower) = open_loop_values(params);
    Ok(EquilibriumReport::new(
        EquilibriumKind::Aol,
        params,
        leader,
        follower,
        StrategyDescriptor::constant(1.0 / params.cost_leader, 1.0 / params.cost_follower),
        BTreeMap::new(),
    )?)
}

/// Adapted feedback equilibrium. The coupled HJB system is solved by affine
/// value functions whose maximisers are the open-loop constants, so values and
/// strategies coincide with [`aol`].
pub fn af(params: &ValidParams) -> Result<EquilibriumReport, ClosedFormError> {
    let mut report = aol(params)?;
    report.kind = EquilibriumKind::Af;
    Ok(report)
}

fn open_loop_values(params: &ValidParams) -> (f64, f64) {
    let (t, cf, cl) = (params.horizon, params.cost_follower, params.cost_leader);
    (
        params.x0 + (0.5 / cl + 1.0 / cf) * t,
        params.x0 + (1.0 / cl + 0.5 / cf) * t,
    )
}

/// Feedback value functions `(v_F, v_L)` of the adapted feedback equilibrium.
pub fn af_value_functions(params: &ValidParams, t: f64, x: f64) -> (f64, f64) {
    let (cf, cl) = (params.cost_follower, params.cost_leader);
    let tau = params.horizon - t;
    (x + (1.0 / cl + 0.5 / cf) * tau, x + (1.0 / cf + 0.5 / cl) * tau)
}

/// Largest certified gain of the affine ACLM rule, `ln(b_max c_F) / T`.
pub fn aclm_gain_bound(params: &ValidParams) -> f64 {
    (params.b_max * params.cost_follower).ln() / params.horizon
}

/// `(e^{kT} - 1) / k`, continuous at `k = 0`.
fn growth_integral(k: f64, t: f64) -> f64 {
    if k == 0.0 {
        t
    } else {
        (k * t).exp_m1() / k
    }
}

/// Leader's reward `f(k)` under the affine rule with gain `k`.
pub fn aclm_leader_reward(params: &ValidParams, k: f64) -> f64 {
    let (t, cf, cl) = (params.horizon, params.cost_follower, params.cost_leader);
    params.x0 + 0.5 * t / cl + growth_integral(k, t) / cf
}

/// Follower value under the affine rule with gain `k` when the follower tracks the
/// reference path with effort `e^{k(T-t)}/c_F`.
pub fn aclm_follower_value(params: &ValidParams, k: f64) -> f64 {
    let (t, cf, cl) = (params.horizon, params.cost_follower, params.cost_leader);
    params.x0 + t / cl + growth_integral(k, t) / cf - growth_integral(2.0 * k, t) / (2.0 * cf)
}

/// Adapted closed-loop memoryless equilibrium restricted to gain `k`.
pub fn aclm(params: &ValidParams, k: f64) -> Result<EquilibriumReport, ClosedFormError> {
    let k_bar = aclm_gain_bound(params);
    // relative slack so that k_bar computed by the caller is accepted
    if !(k > 0.0) || k > k_bar * (1.0 + 1e-12) {
        return Err(ClosedFormError::GainOutOfRange { k, k_bar });
    }
    let strategy = StrategyDescriptor {
        leader: LeaderControl::AffineInState {
            base: 1.0 / params.cost_leader,
            gain: k,
        },
        follower: FollowerControl::TimeCurve {
            amplitude: 1.0 / params.cost_follower,
            rate: k,
        },
    };
    let diagnostics = BTreeMap::from([("k".to_string(), k), ("k_bar".to_string(), k_bar)]);
    Ok(EquilibriumReport::new(
        EquilibriumKind::Aclm,
        params,
        aclm_leader_reward(params, k),
        aclm_follower_value(params, k),
        strategy,
        diagnostics,
    )?)
}

/// The bound `a_max` must exceed for the ACLM value to be the gain-`k_bar` value.
pub fn aclm_threshold(params: &ValidParams) -> f64 {
    let (cf, cl, b) = (params.cost_follower, params.cost_leader, params.b_max);
    let first = 1.0 / cl + b * (b * cf - 1.0);
    let second = (b * b * cf * cf - 1.0) / (2.0 * cf) - 1.0 / cl;
    first.max(second)
}

pub fn aclm_optimal(params: &ValidParams) -> Result<EquilibriumReport, ClosedFormError> {
    let threshold = aclm_threshold(params);
    if params.a_max <= threshold {
        return Err(ClosedFormError::AclmNotCertified {
            a_max: params.a_max,
            threshold,
        });
    }
    let mut report = aclm(params, aclm_gain_bound(params))?;
    report.diagnostics.insert("a_max_threshold".into(), threshold);
    Ok(report)
}

/// Smallest effective punishment `1/(2c_F) + c_F b_max²/2 - b_max`.
pub fn acl_min_penalty(cost_follower: f64, b_max: f64) -> f64 {
    0.5 / cost_follower + 0.5 * cost_follower * b_max * b_max - b_max
}

pub fn acl_threshold(params: &ValidParams) -> f64 {
    acl_min_penalty(params.cost_follower, params.b_max) - 1.0 / params.cost_leader
}

/// Adapted closed-loop equilibrium: when the punishment is affordable the
/// leader replicates the first-best outcome.
pub fn acl(params: &ValidParams) -> Result<EquilibriumReport, ClosedFormError> {
    let threshold = acl_threshold(params);
    if params.a_max < threshold {
        return Err(ClosedFormError::AclNotCertified {
            a_max: params.a_max,
            threshold,
        });
    }
    let a_hat = 1.0 / params.cost_leader;
    let p_min = acl_min_penalty(params.cost_follower, params.b_max);
    // a_hat - p must stay in A; the threshold check guarantees p_min fits
    let penalty = (p_min + 1.0).min(a_hat + params.a_max);
    let fb = first_best(params)?;
    let strategy = StrategyDescriptor {
        leader: LeaderControl::Punishment {
            a_hat,
            penalty,
            b_hat: params.b_max,
        },
        follower: FollowerControl::Constant { b: params.b_max },
    };
    let mut diagnostics = BTreeMap::from([
        ("penalty_min".to_string(), p_min),
        ("penalty".to_string(), penalty),
        ("a_max_threshold".to_string(), threshold),
    ]);
    if p_min <= 1e-12 {
        diagnostics.insert("degenerate_penalty".into(), 1.0);
    }
    Ok(EquilibriumReport::new(
        EquilibriumKind::Acl,
        params,
        fb.leader_value,
        fb.follower_value,
        strategy,
        diagnostics,
    )?)
}

/// Values of every analytic kind, in table order. Uncertified kinds carry
/// their error instead of a report.
pub fn table(params: &ValidParams) -> Vec<(EquilibriumKind, Result<EquilibriumReport, ClosedFormError>)> {
    vec![
        (EquilibriumKind::FirstBest, first_best(params)),
        (EquilibriumKind::Aol, aol(params)),
        (EquilibriumKind::Af, af(params)),
        (EquilibriumKind::Aclm, aclm_optimal(params)),
        (EquilibriumKind::Acl, acl(params)),
    ]
}

/// Values of the auxiliary boundaries of the closed-loop band: something
/// that can evaluate `w-(t, x)` and `w+(t, x)`.
pub trait Boundaries {
    fn w_minus(&self, t: f64, x: f64) -> f64;
    fn w_plus(&self, t: f64, x: f64) -> f64;
}

/// Exact boundaries `w±(t, x) = x + c± (T - t)` with `c± = 1/(2c_F) ± a_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPair {
    pub horizon: f64,
    pub c_minus: f64,
    pub c_plus: f64,
}

impl Boundaries for BoundaryPair {
    fn w_minus(&self, t: f64, x: f64) -> f64 {
        x + self.c_minus * (self.horizon - t)
    }

    fn w_plus(&self, t: f64, x: f64) -> f64 {
        x + self.c_plus * (self.horizon - t)
    }
}

pub fn boundaries_exact(params: &ValidParams) -> BoundaryPair {
    let base = 0.5 / params.cost_follower;
    BoundaryPair {
        horizon: params.horizon,
        c_minus: base - params.a_max,
        c_plus: base + params.a_max,
    }
}

/// Leader's value on the two boundaries,
/// `φ±(t, x) = x + (1/c_F ± a_max - c_L a_max²/2)(T - t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryLeaderValues {
    pub horizon: f64,
    pub rate_minus: f64,
    pub rate_plus: f64,
}

impl BoundaryLeaderValues {
    pub fn phi_minus(&self, t: f64, x: f64) -> f64 {
        x + self.rate_minus * (self.horizon - t)
    }

    pub fn phi_plus(&self, t: f64, x: f64) -> f64 {
        x + self.rate_plus * (self.horizon - t)
    }
}

pub fn boundary_leader_values(params: &ValidParams) -> BoundaryLeaderValues {
    let a = params.a_max;
    let base = 1.0 / params.cost_follower - 0.5 * params.cost_leader * a * a;
    BoundaryLeaderValues {
        horizon: params.horizon,
        rate_minus: base - a,
        rate_plus: base + a,
    }
}
