//! Double-double ("compensated") arithmetic: ~31 significant decimal digits.
//!
//! Band edges of the trace-map spectra shrink like ξ(λ)^{-k/2}, so below
//! roughly level 12 plain f64 bisection can no longer separate a band from
//! its neighbours.  All band-tree refinement therefore runs on [`Dd`], an
//! unevaluated sum `hi + lo` with `|lo| ≤ ulp(hi)/2`, using the classical
//! error-free transformations (two-sum, FMA-based two-product).

/// Unevaluated sum `hi + lo`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

/// Error-free a + b = s + err with |err| ≤ ulp(s)/2 (Knuth two-sum).
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

/// Two-sum when |a| ≥ |b| is known.
#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let err = b - (s - a);
    (s, err)
}

/// Error-free a · b = p + err via fused multiply-add.
#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let err = a.mul_add(b, -p);
    (p, err)
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    #[inline]
    pub fn from_f64(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    /// Renormalized construction from an unnormalized pair.
    #[inline]
    pub fn from_sum(hi: f64, lo: f64) -> Self {
        let (s, e) = quick_two_sum(hi, lo);
        Dd { hi: s, lo: e }
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn add(self, other: Dd) -> Dd {
        let (s1, e1) = two_sum(self.hi, other.hi);
        let (s2, e2) = two_sum(self.lo, other.lo);
        let (s1, e1b) = quick_two_sum(s1, e1 + s2);
        Dd::from_sum(s1, e1b + e2)
    }

    #[inline]
    pub fn add_f64(self, x: f64) -> Dd {
        let (s, e) = two_sum(self.hi, x);
        Dd::from_sum(s, e + self.lo)
    }

    #[inline]
    pub fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    #[inline]
    pub fn sub(self, other: Dd) -> Dd {
        self.add(other.neg())
    }

    #[inline]
    pub fn mul(self, other: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, other.hi);
        let e = e + self.hi * other.lo + self.lo * other.hi;
        Dd::from_sum(p, e)
    }

    #[inline]
    pub fn mul_f64(self, x: f64) -> Dd {
        let (p, e) = two_prod(self.hi, x);
        Dd::from_sum(p, e + self.lo * x)
    }

    /// Division accurate to full double-double precision (one Newton step on
    /// the f64 quotient).
    pub fn div(self, other: Dd) -> Dd {
        let q1 = self.hi / other.hi;
        let r = self.sub(other.mul_f64(q1));
        let q2 = r.hi / other.hi;
        let r2 = r.sub(other.mul_f64(q2));
        let q3 = r2.hi / other.hi;
        Dd::from_sum(q1, q2).add_f64(q3)
    }

    #[inline]
    pub fn abs(self) -> Dd {
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) {
            self.neg()
        } else {
            self
        }
    }

    /// Exact halving.
    #[inline]
    pub fn half(self) -> Dd {
        Dd { hi: 0.5 * self.hi, lo: 0.5 * self.lo }
    }

    /// Midpoint of two values without overflow concerns.
    #[inline]
    pub fn midpoint(a: Dd, b: Dd) -> Dd {
        a.add(b).half()
    }

    #[inline]
    pub fn lt(self, other: Dd) -> bool {
        self.hi < other.hi || (self.hi == other.hi && self.lo < other.lo)
    }

    #[inline]
    pub fn le(self, other: Dd) -> bool {
        !other.lt(self)
    }

    /// Square root via one Newton–Raphson refinement of the f64 estimate.
    pub fn sqrt(self) -> Dd {
        assert!(self.hi >= 0.0, "sqrt of negative Dd");
        if self.hi == 0.0 {
            return Dd::ZERO;
        }
        let x = self.hi.sqrt();
        let x_dd = Dd::from_f64(x);
        // x' = (x + a/x) / 2
        x_dd.add(self.div(x_dd)).half()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_sum_recovers_lost_bits() {
        let a = 1.0;
        let b = 1e-17; // vanishes in plain f64 addition
        let s = Dd::from_f64(a).add_f64(b);
        assert_eq!(s.hi, 1.0);
        assert_eq!(s.lo, 1e-17);
    }

    #[test]
    fn multiplication_catches_rounding_residue() {
        // (1 + 2^-30)^2 = 1 + 2^-29 + 2^-60; the 2^-60 term survives only in lo.
        let x = Dd::from_f64(1.0 + 2f64.powi(-30));
        let sq = x.mul(x);
        let err = sq.sub(Dd::from_f64(1.0 + 2f64.powi(-29))).sub(Dd::from_f64(2f64.powi(-60)));
        assert!(err.to_f64().abs() < 1e-40);
    }

    #[test]
    fn division_and_sqrt_round_trip() {
        let a = Dd::from_f64(3.0);
        let third = Dd::ONE.div(a);
        let back = third.mul(a).sub(Dd::ONE);
        assert!(back.to_f64().abs() < 1e-31);

        let two = Dd::from_f64(2.0);
        let r = two.sqrt();
        let resid = r.mul(r).sub(two);
        assert!(resid.to_f64().abs() < 1e-31);
    }

    #[test]
    fn comparisons_resolve_below_f64_epsilon() {
        let base = Dd::from_f64(1.0);
        let tiny = base.add_f64(1e-25);
        assert!(base.lt(tiny));
        assert!(!tiny.lt(base));
        assert!(base.le(base));
    }

    #[test]
    fn polynomial_iteration_keeps_30_digits() {
        // x_{k+1} = x_k² − 2 on the invariant interval has the closed form
        // x_k = 2cos(2^k θ) for x_0 = 2cos θ; check 40 digits of drift at k=20
        // against the angle-doubled closed form evaluated in f64 (the f64
        // reference itself is only good to ~1e-10 there, so compare loosely).
        let theta = 0.3f64;
        let mut x = Dd::from_f64(2.0 * theta.cos());
        for _ in 0..20 {
            x = x.mul(x).add_f64(-2.0);
        }
        let expected = 2.0 * ((2f64.powi(20) * theta) % std::f64::consts::TAU).cos();
        assert!((x.to_f64() - expected).abs() < 1e-7);
    }
}
