//! Monotone discrete Hamiltonians for backward equations `-∂t v - H = 0`.
//!
//! A [`Hamiltonian`] sees the backward and forward first differences and a
//! second difference at a node. The explicit scheme is monotone as long as
//! `H` is nonincreasing in the backward difference, nondecreasing in the
//! forward difference and in the second difference, and the step obeys the
//! CFL bound derived from [`CoefficientBounds`].

use super::poly::Poly;
use smallvec::{smallvec, SmallVec};
use crate::model::ValidParams;

/// One-sided and second differences at a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub back: f64,
    pub fwd: f64,
    pub second: f64,
}

impl Stencil {
    pub fn central(&self) -> f64 {
        0.5 * (self.back + self.fwd)
    }
}

/// Value of a discrete Hamiltonian with the controls that attain it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamEval {
    pub value: f64,
    pub a: f64,
    pub z: f64,
    pub saturated: bool,
}

impl HamEval {
    pub fn uncontrolled(value: f64) -> Self {
        Self {
            value,
            a: f64::NAN,
            z: f64::NAN,
            saturated: false,
        }
    }
}

/// Bounds on `|∂H/∂fwd| + |∂H/∂back|` (drift) and `∂H/∂second` (diffusion).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientBounds {
    pub drift: f64,
    pub diffusion: f64,
}

impl CoefficientBounds {
    /// Largest stable explicit step on a grid with minimal spacing `h`.
    pub fn max_step(&self, h: f64) -> f64 {
        let rate = self.drift / h + 2.0 * self.diffusion / (h * h);
        if rate > 0.0 {
            1.0 / rate
        } else {
            f64::INFINITY
        }
    }
}

pub trait Hamiltonian: Sync {
    fn evaluate(&self, t: f64, x: f64, d: &Stencil) -> HamEval;
    fn bounds(&self) -> CoefficientBounds;
}

/// Affine form `constant + back·d.back + fwd·d.fwd + second·d.second` of a
/// Hamiltonian with its maximising controls frozen.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LinearPart {
    pub constant: f64,
    pub back: f64,
    pub fwd: f64,
    pub second: f64,
}

impl LinearPart {
    pub fn apply(&self, d: &Stencil) -> f64 {
        self.constant + self.back * d.back + self.fwd * d.fwd + self.second * d.second
    }
}

/// Hamiltonian given as a supremum of monotone linear operators, which is
/// what policy iteration needs.
///
/// `linearize` handles `H + transport · ∂x v`, the extra term coming from
/// moving nodes. The returned part has `back <= 0`, `fwd >= 0` and
/// `second >= 0`, and its value at `d` is the returned `HamEval` value.
pub trait PolicyHamiltonian: Hamiltonian {
    fn linearize(&self, t: f64, x: f64, d: &Stencil, transport: f64) -> (HamEval, LinearPart);
}

fn upwind_transport(e: HamEval, mut lin: LinearPart, d: &Stencil, transport: f64) -> (HamEval, LinearPart) {
    if transport > 0.0 {
        lin.fwd += transport;
    } else {
        lin.back += transport;
    }
    let value = lin.apply(d);
    (HamEval { value, ..e }, lin)
}

/// `H ≡ 0`: the solution is constant in time.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroHamiltonian;

impl Hamiltonian for ZeroHamiltonian {
    fn evaluate(&self, _t: f64, _x: f64, _d: &Stencil) -> HamEval {
        HamEval::uncontrolled(0.0)
    }

    fn bounds(&self) -> CoefficientBounds {
        CoefficientBounds {
            drift: 0.0,
            diffusion: 0.0,
        }
    }
}

impl PolicyHamiltonian for ZeroHamiltonian {
    fn linearize(&self, _t: f64, _x: f64, d: &Stencil, transport: f64) -> (HamEval, LinearPart) {
        upwind_transport(HamEval::uncontrolled(0.0), LinearPart::default(), d, transport)
    }
}

/// `H = σ²/2 ∂xx v`.
#[derive(Debug, Clone, Copy)]
pub struct HeatHamiltonian {
    pub sigma: f64,
}

impl Hamiltonian for HeatHamiltonian {
    fn evaluate(&self, _t: f64, _x: f64, d: &Stencil) -> HamEval {
        HamEval::uncontrolled(0.5 * self.sigma * self.sigma * d.second)
    }

    fn bounds(&self) -> CoefficientBounds {
        CoefficientBounds {
            drift: 0.0,
            diffusion: 0.5 * self.sigma * self.sigma,
        }
    }
}

impl PolicyHamiltonian for HeatHamiltonian {
    fn linearize(&self, t: f64, x: f64, d: &Stencil, transport: f64) -> (HamEval, LinearPart) {
        let lin = LinearPart {
            second: 0.5 * self.sigma * self.sigma,
            ..LinearPart::default()
        };
        upwind_transport(self.evaluate(t, x, d), lin, d, transport)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandSide {
    Lower,
    Upper,
}

/// Hamiltonian of the band edges `w-` (leader minimises) and `w+` (leader
/// maximises) with the follower sensitivity equal to the slope:
///
/// `f(p) + σ²/2 q` where `f(p) = -Π(p)²/(2c_F) + Π(p) p / c_F ± a_max |p|`.
///
/// The first-order part is discretised with a Lax-Friedrichs flux.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryHamiltonian {
    pub params: ValidParams,
    pub side: BandSide,
}

impl BoundaryHamiltonian {
    pub fn new(params: ValidParams, side: BandSide) -> Self {
        Self { params, side }
    }

    fn flux(&self, p: f64) -> f64 {
        let cf = self.params.cost_follower;
        let pi = p.clamp(0.0, self.params.z_sat_hi());
        let sign = match self.side {
            BandSide::Lower => -1.0,
            BandSide::Upper => 1.0,
        };
        -pi * pi / (2.0 * cf) + pi * p / cf + sign * self.params.a_max * p.abs()
    }

    fn viscosity(&self) -> f64 {
        self.params.a_max + self.params.b_max
    }
}

impl Hamiltonian for BoundaryHamiltonian {
    fn evaluate(&self, _t: f64, _x: f64, d: &Stencil) -> HamEval {
        let p = d.central();
        let s2 = self.params.sigma * self.params.sigma;
        let value = self.flux(p) + 0.5 * self.viscosity() * (d.fwd - d.back) + 0.5 * s2 * d.second;
        let a = match self.side {
            BandSide::Lower => -self.params.a_max * p.signum(),
            BandSide::Upper => self.params.a_max * p.signum(),
        };
        HamEval {
            value,
            a,
            z: p,
            saturated: false,
        }
    }

    fn bounds(&self) -> CoefficientBounds {
        CoefficientBounds {
            drift: self.viscosity(),
            diffusion: 0.5 * self.params.sigma * self.params.sigma,
        }
    }
}

/// Leader Hamiltonian of the closed-loop problem after the reduction
/// `v(t, x, y) = x + ψ(t, y - x)`:
///
/// `sup_{a, z} { a + Π(z)/c_F - c_L a²/2 + (m(z) - a) ψ_u + σ²/2 (z - 1)² ψ_uu }`
///
/// with `m(z) = Π(z)²/(2c_F) - Π(z)/c_F` and `z` restricted to `z_box`.
/// The whole drift `m(z) - a`, together with any transport term, is upwinded
/// by its sign, so the supremum is taken separately over the controls with a
/// nonnegative and with a nonpositive drift.
#[derive(Debug, Clone, Copy)]
pub struct ReducedLeaderHamiltonian {
    pub params: ValidParams,
    pub z_box: (f64, f64),
}

#[derive(Debug, Clone, Copy)]
struct Choice {
    value: f64,
    a: f64,
    z: f64,
    drift: f64,
    forward: bool,
}

impl ReducedLeaderHamiltonian {
    pub fn new(params: ValidParams, z_box: (f64, f64)) -> Self {
        Self { params, z_box }
    }

    /// Drift of `u = y - x` contributed by the follower, `m(z)`.
    pub fn follower_drift(&self, z: f64) -> f64 {
        let cf = self.params.cost_follower;
        let pi = z.clamp(0.0, self.params.z_sat_hi());
        pi * pi / (2.0 * cf) - pi / cf
    }

    /// Pieces of the `z` box on which `Π` is a polynomial, with `m` on each.
    fn drift_pieces(&self) -> impl Iterator<Item = (f64, f64, Poly)> {
        let cf = self.params.cost_follower;
        let z_hi = self.params.z_sat_hi();
        let (lo, hi) = self.z_box;
        let raw = [
            (lo, 0.0, Poly::constant(0.0)),
            (0.0, z_hi, Poly::quadratic(0.0, -1.0 / cf, 0.5 / cf)),
            (z_hi, hi, Poly::constant(self.follower_drift(z_hi))),
        ];
        raw.into_iter()
            .map(move |(a, b, m)| (a.max(lo), b.min(hi), m))
            .filter(|(a, b, _)| a <= b)
    }

    /// Best control with the drift `transport + m(z) - a` of one sign, using
    /// the matching one-sided difference `p`.
    fn branch(&self, p: f64, second: f64, transport: f64, forward: bool) -> Option<Choice> {
        let prm = &self.params;
        let (cl, cf, am) = (prm.cost_leader, prm.cost_follower, prm.a_max);
        let z_hi = prm.z_sat_hi();
        let s2q = 0.5 * prm.sigma * prm.sigma * second;
        let a_free = ((1.0 - p) / cl).clamp(-am, am);
        let g_free = (1.0 - p) * a_free - 0.5 * cl * a_free * a_free;
        let limit = if forward { -am } else { am };
        let diffusion = Poly::quadratic(s2q, -2.0 * s2q, s2q);
        let mut best: Option<(f64, f64)> = None;
        for (lo, hi, m) in self.drift_pieces() {
            let pi = if hi <= 0.0 {
                Poly::constant(0.0)
            } else if lo >= z_hi {
                Poly::constant(z_hi)
            } else {
                Poly::quadratic(0.0, 1.0, 0.0)
            };
            let zpart = pi.scale(1.0 / cf).add(&m.scale(p)).add(&diffusion);
            let shifted = |c: f64| m.add(&Poly::constant(transport - c));
            let mut cuts: SmallVec<[f64; 8]> = smallvec![lo];
            cuts.extend(shifted(a_free).roots_in(lo, hi));
            cuts.extend(shifted(limit).roots_in(lo, hi));
            cuts.push(hi);
            cuts.sort_by(f64::total_cmp);
            for w in cuts.windows(2) {
                let (l, r) = (w[0], w[1]);
                let mid = 0.5 * (l + r);
                let drift_cap = transport + m.eval(mid);
                let feasible = if forward { drift_cap >= -am } else { drift_cap <= am };
                if !feasible {
                    continue;
                }
                let binding = if forward { drift_cap < a_free } else { drift_cap > a_free };
                let objective = if binding {
                    let a_of_z = m.add(&Poly::constant(transport));
                    zpart
                        .add(&a_of_z.scale(1.0 - p))
                        .add(&a_of_z.mul(&a_of_z).scale(-0.5 * cl))
                } else {
                    zpart.add(&Poly::constant(g_free))
                };
                let mut candidates: SmallVec<[f64; 8]> = smallvec![l, r];
                candidates.extend(objective.derivative().roots_in(l, r));
                for z in candidates {
                    let v = objective.eval(z);
                    let better = match best {
                        None => true,
                        Some((bv, bz)) => {
                            let tol = 1e-12 * (1.0 + bv.abs());
                            v > bv + tol || (v >= bv - tol && z < bz)
                        }
                    };
                    if better {
                        best = Some((v, z));
                    }
                }
            }
        }
        let (_, z) = best?;
        let cap = transport + self.follower_drift(z);
        let a = if forward { a_free.min(cap) } else { a_free.max(cap) };
        let drift = if forward { (cap - a).max(0.0) } else { (cap - a).min(0.0) };
        let value = a - 0.5 * cl * a * a + z.clamp(0.0, z_hi) / cf + drift * p + s2q * (z - 1.0).powi(2);
        Some(Choice {
            value,
            a,
            z,
            drift,
            forward,
        })
    }

    fn choose(&self, d: &Stencil, transport: f64) -> (Choice, bool) {
        let fwd = self.branch(d.fwd, d.second, transport, true);
        let back = self.branch(d.back, d.second, transport, false);
        let c = match (fwd, back) {
            (Some(f), Some(b)) => {
                if b.value > f.value {
                    b
                } else {
                    f
                }
            }
            (Some(f), None) => f,
            (None, Some(b)) => b,
            (None, None) => unreachable!("one drift sign is always feasible"),
        };
        let tol = 1e-12 * (1.0 + self.z_box.0.abs().max(self.z_box.1.abs()));
        let saturated = (c.z - self.z_box.0).abs() <= tol || (c.z - self.z_box.1).abs() <= tol;
        (c, saturated)
    }
}

impl Hamiltonian for ReducedLeaderHamiltonian {
    fn evaluate(&self, t: f64, x: f64, d: &Stencil) -> HamEval {
        self.linearize(t, x, d, 0.0).0
    }

    fn bounds(&self) -> CoefficientBounds {
        let cf = self.params.cost_follower;
        let z_hi = self.params.z_sat_hi();
        let m_max = (0.5 / cf).max((z_hi * z_hi - 2.0 * z_hi).abs() / (2.0 * cf));
        let (lo, hi) = self.z_box;
        let spread = (lo - 1.0).powi(2).max((hi - 1.0).powi(2));
        CoefficientBounds {
            drift: self.params.a_max + m_max,
            diffusion: 0.5 * self.params.sigma * self.params.sigma * spread,
        }
    }
}

impl PolicyHamiltonian for ReducedLeaderHamiltonian {
    fn linearize(&self, _t: f64, _x: f64, d: &Stencil, transport: f64) -> (HamEval, LinearPart) {
        let p = &self.params;
        let (c, saturated) = self.choose(d, transport);
        let mut lin = LinearPart {
            constant: c.a - 0.5 * p.cost_leader * c.a * c.a + c.z.clamp(0.0, p.z_sat_hi()) / p.cost_follower,
            second: 0.5 * p.sigma * p.sigma * (c.z - 1.0).powi(2),
            ..LinearPart::default()
        };
        if c.forward {
            lin.fwd = c.drift;
        } else {
            lin.back = c.drift;
        }
        let e = HamEval {
            value: lin.apply(d),
            a: c.a,
            z: c.z,
            saturated,
        };
        (e, lin)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GameParams;
    use crate::pde::maximize::default_z_box;

    fn leader() -> ReducedLeaderHamiltonian {
        let p = GameParams::benchmark().validate().unwrap();
        ReducedLeaderHamiltonian::new(p, default_z_box(&p))
    }

    /// Direct scan over a fine control grid of the upwinded objective.
    fn scan(h: &ReducedLeaderHamiltonian, d: &Stencil, transport: f64) -> f64 {
        let p = h.params;
        let n = 1500;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=n {
            let z = h.z_box.0 + (h.z_box.1 - h.z_box.0) * i as f64 / n as f64;
            let base = z.clamp(0.0, p.z_sat_hi()) / p.cost_follower
                + 0.5 * p.sigma * p.sigma * (z - 1.0).powi(2) * d.second;
            let cap = transport + h.follower_drift(z);
            for j in 0..=n {
                let a = -p.a_max + 2.0 * p.a_max * j as f64 / n as f64;
                let c = cap - a;
                let pd = if c >= 0.0 { d.fwd } else { d.back };
                best = best.max(base + a - 0.5 * p.cost_leader * a * a + c * pd);
            }
        }
        best
    }

    #[test]
    fn leader_matches_scan() {
        let h = leader();
        let cases = [
            (0.5, 0.4, -3.0),
            (-2.0, -1.5, -0.2),
            (3.0, 1.0, -10.0),
            (0.0, 0.0, 0.0),
            (1.0, 1.0, 0.5),
            (4.0, 6.0, -1.0),
        ];
        for (back, fwd, second) in cases {
            let d = Stencil { back, fwd, second };
            for transport in [0.0, -9.5, 4.0, 12.0] {
                let (e, lin) = h.linearize(0.0, 0.0, &d, transport);
                let s = scan(&h, &d, transport);
                assert!(e.value >= s - 1e-9, "{d:?} {transport}: {} < {s}", e.value);
                assert!(e.value - s < 1e-3, "{d:?} {transport}: {} vs {s}", e.value);
                assert!(lin.back <= 0.0 && lin.fwd >= 0.0 && lin.second >= 0.0);
            }
        }
    }

    #[test]
    fn leader_is_monotone_in_each_argument() {
        let h = leader();
        let base = Stencil { back: 0.3, fwd: 0.1, second: -2.0 };
        let v0 = h.evaluate(0.0, 0.0, &base).value;
        let eps = 1e-3;
        let bumped = [
            (Stencil { back: base.back + eps, ..base }, -1.0),
            (Stencil { fwd: base.fwd + eps, ..base }, 1.0),
            (Stencil { second: base.second + eps, ..base }, 1.0),
        ];
        for (d, sign) in bumped {
            let v = h.evaluate(0.0, 0.0, &d).value;
            assert!(sign * (v - v0) >= -1e-12);
        }
    }

    #[test]
    fn leader_bounds_at_benchmark() {
        let b = leader().bounds();
        assert_eq!(b.drift, 11.5);
        assert_eq!(b.diffusion, 32.0);
    }

    #[test]
    fn boundary_flux_is_exact_on_unit_slope() {
        let p = GameParams::benchmark().validate().unwrap();
        let d = Stencil { back: 1.0, fwd: 1.0, second: 0.0 };
        let lo = BoundaryHamiltonian::new(p, BandSide::Lower).evaluate(0.0, 0.0, &d);
        let hi = BoundaryHamiltonian::new(p, BandSide::Upper).evaluate(0.0, 0.0, &d);
        assert_eq!(lo.value, -9.5);
        assert_eq!(hi.value, 10.5);
    }
}
