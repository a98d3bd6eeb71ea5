use smallvec::{smallvec, SmallVec};

pub(crate) type Roots = SmallVec<[f64; 4]>;

/// Real polynomial of degree at most four, coefficients in ascending order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct Poly(pub [f64; 5]);

impl Poly {
    pub fn constant(c: f64) -> Self {
        Self([c, 0.0, 0.0, 0.0, 0.0])
    }

    pub fn quadratic(c0: f64, c1: f64, c2: f64) -> Self {
        Self([c0, c1, c2, 0.0, 0.0])
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn degree(&self) -> usize {
        self.0.iter().rposition(|&c| c != 0.0).unwrap_or(0)
    }

    pub fn derivative(&self) -> Self {
        let c = &self.0;
        Self([c[1], 2.0 * c[2], 3.0 * c[3], 4.0 * c[4], 0.0])
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(other.0) {
            *a += b;
        }
        Self(c)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.map(|c| c * s))
    }

    /// Product; the degrees must add up to at most four.
    pub fn mul(&self, other: &Self) -> Self {
        debug_assert!(self.degree() + other.degree() <= 4);
        let mut c = [0.0; 5];
        for (i, &a) in self.0.iter().enumerate() {
            for (j, &b) in other.0.iter().enumerate() {
                if i + j < 5 {
                    c[i + j] += a * b;
                }
            }
        }
        Self(c)
    }

    /// Roots in `[lo, hi]`, sorted. Quadratics are solved directly; higher
    /// degrees are split into monotone segments at the roots of the
    /// derivative and each sign change is refined. An identically zero
    /// polynomial has no reported roots.
    pub fn roots_in(&self, lo: f64, hi: f64) -> Roots {
        if !(lo <= hi) {
            return Roots::new();
        }
        match self.degree() {
            0 => Roots::new(),
            1 => {
                let r = -self.0[0] / self.0[1];
                if (lo..=hi).contains(&r) { smallvec![r] } else { Roots::new() }
            }
            2 => {
                let [c, b, a, ..] = self.0;
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    return Roots::new();
                }
                let q = -0.5 * (b + b.signum() * disc.sqrt());
                let mut roots: Roots = if q == 0.0 { smallvec![0.0] } else { smallvec![q / a, c / q] };
                roots.sort_by(f64::total_cmp);
                roots.dedup();
                roots.retain(|r| (lo..=hi).contains(r));
                roots
            }
            _ => {
                let mut ends: SmallVec<[f64; 6]> = smallvec![lo];
                ends.extend(self.derivative().roots_in(lo, hi));
                ends.push(hi);
                let mut roots = Roots::new();
                for w in ends.windows(2) {
                    if let Some(r) = self.bisect(w[0], w[1]) {
                        if roots.last().is_none_or(|&last| r > last) {
                            roots.push(r);
                        }
                    }
                }
                roots
            }
        }
    }

    /// Root of a sign change on a monotone segment: Newton steps, falling
    /// back to bisection whenever a step leaves the bracket.
    fn bisect(&self, mut a: f64, mut b: f64) -> Option<f64> {
        let (fa, fb) = (self.eval(a), self.eval(b));
        if fa == 0.0 {
            return Some(a);
        }
        if fb == 0.0 {
            return Some(b);
        }
        if fa.signum() == fb.signum() {
            return None;
        }
        let slope = self.derivative();
        let rising = fb > 0.0;
        let mut x = 0.5 * (a + b);
        for _ in 0..100 {
            let f = self.eval(x);
            if f == 0.0 {
                return Some(x);
            }
            if (f > 0.0) == rising {
                b = x;
            } else {
                a = x;
            }
            let d = slope.eval(x);
            let newton = x - f / d;
            let next = if d != 0.0 && newton > a && newton < b { newton } else { 0.5 * (a + b) };
            if (next - x).abs() <= 4.0 * f64::EPSILON * (1.0 + x.abs()) || next <= a || next >= b {
                return Some(next.clamp(a, b));
            }
            x = next;
        }
        Some(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roots_of_a_quartic() {
        // (x + 2)(x - 0.5)(x - 1)(x - 3)
        let p = Poly::quadratic(-1.0, 1.0, 1.0)
            .add(&Poly::quadratic(0.0, 1.0, 0.0).scale(0.5))
            .mul(&Poly::quadratic(3.0, -4.0, 1.0));
        let r = p.roots_in(-5.0, 5.0);
        let want = [-2.0, 0.5, 1.0, 3.0];
        assert_eq!(r.len(), 4, "{r:?}");
        for (a, b) in r.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{r:?}");
        }
        assert!(p.roots_in(1.5, 2.5).is_empty());
    }

    #[test]
    fn double_root_is_found() {
        let p = Poly::quadratic(1.0, -2.0, 1.0);
        let r = p.roots_in(-1.0, 3.0);
        assert_eq!(r.len(), 1);
        assert!((r[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eval_and_derivative() {
        let p = Poly([1.0, -1.0, 2.0, 0.5, -0.25]);
        assert_eq!(p.eval(2.0), 1.0 - 2.0 + 8.0 + 4.0 - 4.0);
        assert_eq!(p.derivative().0, [-1.0, 4.0, 1.5, -1.0, 0.0]);
        assert_eq!(p.degree(), 4);
        assert_eq!(Poly::constant(0.0).degree(), 0);
    }
}
