//! Pointwise Hamiltonian maximisers of the example, in closed form.

use super::PdeError;
use crate::model::ValidParams;

/// Projection of `z` onto `[lo, hi]`.
pub fn project_interval(z: f64, lo: f64, hi: f64) -> Result<f64, PdeError> {
    if lo > hi || lo.is_nan() || hi.is_nan() {
        return Err(PdeError::InvalidArgument(format!(
            "empty projection interval [{lo}, {hi}]"
        )));
    }
    Ok(z.max(lo).min(hi))
}

/// `sup_{a in [lo, hi]} { a p - c a²/2 }` with its maximiser.
pub fn sup_quadratic_cost(p: f64, cost: f64, lo: f64, hi: f64) -> (f64, f64) {
    let a = (p / cost).clamp(lo, hi);
    (a * p - 0.5 * cost * a * a, a)
}

/// `sup_{a in A} { a p - c_L a²/2 }`; returns `(value, a*)` with
/// `a* = Π_A(p / c_L)`.
pub fn sup_a(p: f64, params: &ValidParams) -> (f64, f64) {
    sup_quadratic_cost(p, params.cost_leader, -params.a_max, params.a_max)
}

/// Result of a one-dimensional maximisation over the sensitivity `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZSup {
    pub value: f64,
    pub z_star: f64,
    /// The maximiser sits on an end of the search box, so the box may be
    /// clipping the true supremum.
    pub saturated: bool,
}

/// A quadratic `c0 + c1 z + c2 z²` valid on `[lo, hi]`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct QuadraticPiece {
    pub lo: f64,
    pub hi: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl QuadraticPiece {
    fn eval(&self, z: f64) -> f64 {
        self.c0 + z * (self.c1 + z * self.c2)
    }
}

/// Maximises a continuous piecewise quadratic over `[box_lo, box_hi]` by
/// enumerating piece ends and interior stationary points. Ties go to the
/// smallest `z`.
pub(crate) fn maximize_pieces(pieces: &[QuadraticPiece], box_lo: f64, box_hi: f64) -> ZSup {
    let mut best = ZSup {
        value: f64::NEG_INFINITY,
        z_star: f64::NAN,
        saturated: false,
    };
    let mut consider = |z: f64, value: f64| {
        let tie_tol = 1e-12 * (1.0 + value.abs());
        if value > best.value + tie_tol || (value >= best.value - tie_tol && z < best.z_star) {
            best.value = value;
            best.z_star = z;
        }
    };
    for piece in pieces {
        let lo = piece.lo.max(box_lo);
        let hi = piece.hi.min(box_hi);
        if lo > hi {
            continue;
        }
        consider(lo, piece.eval(lo));
        consider(hi, piece.eval(hi));
        if piece.c2 < 0.0 {
            let z = -piece.c1 / (2.0 * piece.c2);
            if z > lo && z < hi {
                consider(z, piece.eval(z));
            }
        }
    }
    best.saturated = best.z_star <= box_lo || best.z_star >= box_hi;
    best
}

/// Default search box `[-2 z_hi, 3 z_hi]` for `z_hi = b_max c_F`.
pub fn default_z_box(params: &ValidParams) -> (f64, f64) {
    let z_hi = params.z_sat_hi();
    (-2.0 * z_hi, 3.0 * z_hi)
}

/// Maximises, over `z` in `z_box`,
///
/// `g(z) = Π(z) vx / c_F + Π(z)² vy / (2 c_F) + σ² z² vyy / 2 + σ² z vxy`
///
/// where `Π` projects onto `[0, b_max c_F]`. The objective is quadratic on
/// each of `z < 0`, `[0, b_max c_F]`, `z > b_max c_F`.
pub fn sup_z(
    vx: f64,
    vy: f64,
    vyy: f64,
    vxy: f64,
    params: &ValidParams,
    z_box: (f64, f64),
) -> Result<ZSup, PdeError> {
    let (box_lo, box_hi) = z_box;
    let z_hi = params.z_sat_hi();
    if !(box_lo <= 0.0 && box_hi >= z_hi) {
        return Err(PdeError::InvalidArgument(format!(
            "z box [{box_lo}, {box_hi}] must contain [0, {z_hi}]"
        )));
    }
    let cf = params.cost_follower;
    let s2 = params.sigma * params.sigma;
    let diff2 = 0.5 * s2 * vyy;
    let diff1 = s2 * vxy;
    let pieces = [
        QuadraticPiece {
            lo: f64::NEG_INFINITY,
            hi: 0.0,
            c0: 0.0,
            c1: diff1,
            c2: diff2,
        },
        QuadraticPiece {
            lo: 0.0,
            hi: z_hi,
            c0: 0.0,
            c1: vx / cf + diff1,
            c2: vy / (2.0 * cf) + diff2,
        },
        QuadraticPiece {
            lo: z_hi,
            hi: f64::INFINITY,
            c0: z_hi * vx / cf + z_hi * z_hi * vy / (2.0 * cf),
            c1: diff1,
            c2: diff2,
        },
    ];
    Ok(maximize_pieces(&pieces, box_lo, box_hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GameParams;

    fn bench() -> ValidParams {
        GameParams::benchmark().validate().unwrap()
    }

    #[test]
    fn projection() {
        assert_eq!(project_interval(5.0, 0.0, 3.0).unwrap(), 3.0);
        assert_eq!(project_interval(-1.0, 0.0, 3.0).unwrap(), 0.0);
        assert_eq!(project_interval(2.0, 0.0, 3.0).unwrap(), 2.0);
        assert!(project_interval(1.0, 3.0, 0.0).is_err());
    }

    #[test]
    fn sup_a_examples() {
        let p = bench();
        assert_eq!(sup_a(0.0, &p), (0.0, 0.0));
        assert_eq!(sup_a(1.0, &p), (0.5, 1.0));
        assert_eq!(sup_a(20.0, &p), (150.0, 10.0));
        assert_eq!(sup_a(-20.0, &p), (150.0, -10.0));
    }

    #[test]
    fn sup_a_matches_scan() {
        let p = bench();
        for &g in &[-25.0, -3.3, 0.2, 1.0, 7.7, 20.0] {
            let (v, a) = sup_a(g, &p);
            let n = 100_000;
            let mut best = (f64::NEG_INFINITY, 0.0);
            for i in 0..=n {
                let x = -10.0 + 20.0 * i as f64 / n as f64;
                let val = x * g - 0.5 * x * x;
                if val > best.0 {
                    best = (val, x);
                }
            }
            assert!((v - best.0).abs() < 1e-6, "p={g}");
            assert!((a - best.1).abs() < 1e-3);
        }
    }

    #[test]
    fn sup_z_pure_concave() {
        let r = sup_z(0.0, 0.0, -1.0, 0.0, &bench(), (-6.0, 9.0)).unwrap();
        assert_eq!(r.z_star, 0.0);
        assert_eq!(r.value, 0.0);
        assert!(!r.saturated);
    }

    #[test]
    fn sup_z_linear_growth_saturates() {
        let r = sup_z(0.0, 0.0, 0.0, 1.0, &bench(), (-6.0, 9.0)).unwrap();
        assert!(r.saturated);
        assert_eq!(r.z_star, 9.0);
    }

    #[test]
    fn sup_z_flat_tail_breaks_ties_low() {
        // vyy = vxy = 0: g is constant beyond z_hi, smallest maximiser is z_hi
        let r = sup_z(1.0, 0.5, 0.0, 0.0, &bench(), (-6.0, 9.0)).unwrap();
        assert_eq!(r.z_star, 3.0);
        assert!(!r.saturated);
    }

    #[test]
    fn sup_z_rejects_narrow_box() {
        assert!(sup_z(0.0, 0.0, -1.0, 0.0, &bench(), (0.5, 9.0)).is_err());
    }
}
