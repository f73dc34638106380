//! Floating-point values with an explicit power-of-two exponent.
//!
//! Solution recurrences grow like e^{γn} and trace-map orbits grow doubly
//! exponentially off the spectrum, so raw f64 overflows long before the
//! quantities of interest (norm ratios, logarithms, residuals) do.  A
//! [`Scaled`] keeps `value = m · 2^e` with `|m| ∈ [1, 2)`; arithmetic
//! renormalizes after every operation.  [`ScaledSeq`] stores a whole sequence
//! this way but keeps the exponent constant over long runs so that the hot
//! recurrence loops stay in plain f64 between rescales.

/// Threshold at which running recurrences shed a factor 2^±600.
const RESCALE_LIMIT: f64 = 1e150;
const RESCALE_SHIFT: i64 = 600;

/// Split `x = m · 2^e` with `|m| ∈ [1, 2)` (or `(0, 0)` for zero).
#[inline]
pub fn frexp2(x: f64) -> (f64, i64) {
    if x == 0.0 {
        return (0.0, 0);
    }
    debug_assert!(x.is_finite());
    let bits = x.to_bits();
    let raw_exp = ((bits >> 52) & 0x7ff) as i64;
    if raw_exp == 0 {
        // Subnormal: renormalize by a fixed 2^80 lift.
        let (m, e) = frexp2(x * 2f64.powi(80));
        return (m, e - 80);
    }
    let m = f64::from_bits((bits & !(0x7ffu64 << 52)) | (1023u64 << 52));
    (m, raw_exp - 1023)
}

/// `x · 2^k` without intermediate overflow for |k| beyond the f64 range.
#[inline]
pub fn ldexp2(x: f64, k: i64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if k > 2100 {
        return if x > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
    }
    if k < -2200 {
        return 0.0;
    }
    let mut v = x;
    let mut k = k;
    while k > 1000 {
        v *= 2f64.powi(1000);
        k -= 1000;
    }
    while k < -1000 {
        v *= 2f64.powi(-1000);
        k += 1000;
    }
    v * 2f64.powi(k as i32)
}

/// A real number `m · 2^e`, `|m| ∈ [1, 2)` or exactly zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scaled {
    m: f64,
    e: i64,
}

impl Scaled {
    pub const ZERO: Scaled = Scaled { m: 0.0, e: 0 };
    pub const ONE: Scaled = Scaled { m: 1.0, e: 0 };

    #[inline]
    pub fn new(value: f64) -> Self {
        let (m, e) = frexp2(value);
        Scaled { m, e }
    }

    /// `mantissa · 2^exp` with arbitrary (finite) mantissa.
    #[inline]
    pub fn from_parts(mantissa: f64, exp: i64) -> Self {
        let (m, de) = frexp2(mantissa);
        if m == 0.0 {
            Scaled::ZERO
        } else {
            Scaled { m, e: exp + de }
        }
    }

    #[inline]
    pub fn mantissa(self) -> f64 {
        self.m
    }

    #[inline]
    pub fn exponent(self) -> i64 {
        self.e
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.m == 0.0
    }

    /// Best-effort f64 value; saturates to ±∞ / 0 outside the range.
    #[inline]
    pub fn to_f64(self) -> f64 {
        ldexp2(self.m, self.e)
    }

    /// Natural log of |value|; −∞ for zero.
    #[inline]
    pub fn ln_abs(self) -> f64 {
        if self.m == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.m.abs().ln() + self.e as f64 * std::f64::consts::LN_2
        }
    }

    #[inline]
    pub fn abs(self) -> Self {
        Scaled { m: self.m.abs(), e: self.e }
    }

    #[inline]
    pub fn neg(self) -> Self {
        Scaled { m: -self.m, e: self.e }
    }

    #[inline]
    pub fn mul(self, other: Self) -> Self {
        if self.m == 0.0 || other.m == 0.0 {
            return Scaled::ZERO;
        }
        // m1*m2 ∈ [1,4): at most one renormalization step.
        let m = self.m * other.m;
        let e = self.e + other.e;
        if m.abs() >= 2.0 {
            Scaled { m: m * 0.5, e: e + 1 }
        } else {
            Scaled { m, e }
        }
    }

    #[inline]
    pub fn mul_f64(self, x: f64) -> Self {
        self.mul(Scaled::new(x))
    }

    #[inline]
    pub fn sq(self) -> Self {
        self.mul(self)
    }

    pub fn add(self, other: Self) -> Self {
        if self.m == 0.0 {
            return other;
        }
        if other.m == 0.0 {
            return self;
        }
        let (big, small) = if self.e >= other.e { (self, other) } else { (other, self) };
        let de = big.e - small.e;
        if de > 120 {
            return big; // small term is below one ulp of the result
        }
        Scaled::from_parts(big.m + ldexp2(small.m, -de), big.e)
    }

    #[inline]
    pub fn sub(self, other: Self) -> Self {
        self.add(other.neg())
    }

    pub fn div(self, other: Self) -> Self {
        assert!(other.m != 0.0, "division of Scaled by zero");
        if self.m == 0.0 {
            return Scaled::ZERO;
        }
        Scaled::from_parts(self.m / other.m, self.e - other.e)
    }

    /// Square root (value must be ≥ 0).
    pub fn sqrt(self) -> Self {
        assert!(self.m >= 0.0, "sqrt of negative Scaled");
        if self.m == 0.0 {
            return Scaled::ZERO;
        }
        if self.e & 1 == 0 {
            Scaled::from_parts(self.m.sqrt(), self.e / 2)
        } else {
            Scaled::from_parts((2.0 * self.m).sqrt(), (self.e - 1) / 2)
        }
    }

    /// Compare |self| with |other|.
    pub fn cmp_abs(self, other: Self) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        match (self.m == 0.0, other.m == 0.0) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            (false, false) => {
                if self.e != other.e {
                    self.e.cmp(&other.e)
                } else {
                    self.m.abs().partial_cmp(&other.m.abs()).unwrap()
                }
            }
        }
    }
}

impl PartialOrd for Scaled {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.sub(*other).m.partial_cmp(&0.0)?.then(std::cmp::Ordering::Equal))
    }
}

/// Real sequence `value(i) = m[i] · 2^{e[i]}`.
///
/// Built by recurrences that rescale rarely, so `e` is piecewise constant;
/// norm accumulations exploit that by summing plain f64 within segments.
#[derive(Clone, Debug)]
pub struct ScaledSeq {
    m: Vec<f64>,
    e: Vec<i64>,
}

impl ScaledSeq {
    pub fn with_capacity(n: usize) -> Self {
        ScaledSeq { m: Vec::with_capacity(n), e: Vec::with_capacity(n) }
    }

    pub fn from_f64(values: &[f64]) -> Self {
        ScaledSeq { m: values.to_vec(), e: vec![0; values.len()] }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn push(&mut self, mantissa: f64, exp: i64) {
        self.m.push(mantissa);
        self.e.push(exp);
    }

    #[inline]
    pub fn get(&self, i: usize) -> Scaled {
        Scaled::from_parts(self.m[i], self.e[i])
    }

    /// f64 view of entry `i` (saturating).
    #[inline]
    pub fn get_f64(&self, i: usize) -> f64 {
        ldexp2(self.m[i], self.e[i])
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.get_f64(i)).collect()
    }

    /// Raw mantissa/exponent access for segment-wise consumers.
    #[inline]
    pub fn parts(&self, i: usize) -> (f64, i64) {
        (self.m[i], self.e[i])
    }

    /// Σ_{i ∈ [lo, hi)} value(i)², accumulated exactly per exponent segment.
    pub fn norm_sq_range(&self, lo: usize, hi: usize) -> Scaled {
        let mut total = Scaled::ZERO;
        let mut i = lo;
        while i < hi {
            let seg_e = self.e[i];
            let mut seg_sum = 0.0f64;
            let mut j = i;
            while j < hi && self.e[j] == seg_e {
                seg_sum += self.m[j] * self.m[j];
                j += 1;
            }
            total = total.add(Scaled::from_parts(seg_sum, 2 * seg_e));
            i = j;
        }
        total
    }

    /// Σ_{i ∈ [lo, hi)} self(i)·other(i) (no conjugation; both real).
    pub fn dot_range(&self, other: &ScaledSeq, lo: usize, hi: usize) -> Scaled {
        let mut total = Scaled::ZERO;
        let mut i = lo;
        while i < hi {
            let seg_e = self.e[i] + other.e[i];
            let mut seg_sum = 0.0f64;
            let mut j = i;
            while j < hi && self.e[j] + other.e[j] == seg_e {
                seg_sum += self.m[j] * other.m[j];
                j += 1;
            }
            total = total.add(Scaled::from_parts(seg_sum, seg_e));
            i = j;
        }
        total
    }
}

/// Running state for a scaled three-term recurrence: two consecutive values
/// sharing one exponent. `step` maps (u(n-1), u(n)) → (u(n), u(n+1)).
#[derive(Clone, Copy, Debug)]
pub struct ScaledPair {
    pub prev: f64,
    pub cur: f64,
    pub exp: i64,
}

impl ScaledPair {
    pub fn new(prev: f64, cur: f64) -> Self {
        ScaledPair { prev, cur, exp: 0 }
    }

    /// Advance with `next = coeff_cur · cur + coeff_prev · prev`, rescaling
    /// when the magnitude leaves [1e-150, 1e150].
    #[inline]
    pub fn step(&mut self, coeff_cur: f64, coeff_prev: f64) {
        let next = coeff_cur * self.cur + coeff_prev * self.prev;
        self.prev = self.cur;
        self.cur = next;
        let mag = self.cur.abs().max(self.prev.abs());
        if mag > RESCALE_LIMIT {
            self.prev = ldexp2(self.prev, -RESCALE_SHIFT);
            self.cur = ldexp2(self.cur, -RESCALE_SHIFT);
            self.exp += RESCALE_SHIFT;
        } else if mag < 1.0 / RESCALE_LIMIT && mag > 0.0 {
            self.prev = ldexp2(self.prev, RESCALE_SHIFT);
            self.cur = ldexp2(self.cur, RESCALE_SHIFT);
            self.exp -= RESCALE_SHIFT;
        }
    }

    pub fn cur_scaled(&self) -> Scaled {
        Scaled::from_parts(self.cur, self.exp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frexp_ldexp_roundtrip() {
        for &x in &[1.0, -3.75, 1e-200, 6.02e23, -2.2250738585072014e-308, 0.5, 1023.99] {
            let (m, e) = frexp2(x);
            assert!(m.abs() >= 1.0 && m.abs() < 2.0, "bad mantissa {m} for {x}");
            assert_eq!(ldexp2(m, e), x);
        }
        assert_eq!(frexp2(0.0), (0.0, 0));
    }

    #[test]
    fn subnormal_inputs_normalize() {
        let x = 5e-320;
        let (m, e) = frexp2(x);
        assert!(m.abs() >= 1.0 && m.abs() < 2.0);
        assert!((ldexp2(m, e) - x).abs() <= f64::EPSILON * x.abs());
    }

    #[test]
    fn arithmetic_matches_f64_in_range() {
        let a = Scaled::new(3.5);
        let b = Scaled::new(-0.875);
        assert_eq!(a.mul(b).to_f64(), 3.5 * -0.875);
        assert_eq!(a.add(b).to_f64(), 3.5 - 0.875);
        assert_eq!(a.sub(b).to_f64(), 3.5 + 0.875);
        assert_eq!(a.div(b).to_f64(), 3.5 / -0.875);
        assert_eq!(Scaled::new(2.25).sqrt().to_f64(), 1.5);
    }

    #[test]
    fn huge_products_keep_their_logs() {
        // (1e200)^4 = 1e800 is far outside f64 but must keep an accurate log.
        let x = Scaled::new(1e200);
        let p = x.mul(x).mul(x).mul(x);
        let expected = 800.0 * std::f64::consts::LN_10;
        assert!((p.ln_abs() - expected).abs() < 1e-9 * expected);
        assert_eq!(p.to_f64(), f64::INFINITY);
        assert!((p.sqrt().sqrt().to_f64() - 1e200).abs() < 1e186);
    }

    #[test]
    fn add_honors_wide_exponent_gaps() {
        let big = Scaled::from_parts(1.0, 400);
        let small = Scaled::from_parts(1.9, -400);
        assert_eq!(big.add(small), big);
        let near = Scaled::from_parts(1.0, 399);
        assert_eq!(big.add(near).to_f64(), ldexp2(1.5, 400));
    }

    #[test]
    fn pair_recurrence_tracks_fibonacci_growth() {
        // u(n+1) = u(n) + u(n-1) overflows f64 near n = 1476; the scaled pair
        // must sail through and agree with Binet's formula in log space.
        let mut p = ScaledPair::new(0.0, 1.0);
        for _ in 1..3000 {
            p.step(1.0, 1.0);
        }
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let expected_ln = 3000.0 * phi.ln() - 5f64.sqrt().ln();
        assert!((p.cur_scaled().ln_abs() - expected_ln).abs() < 1e-6 * expected_ln);
    }

    #[test]
    fn seq_norms_match_direct_sums() {
        let vals = [0.5, -1.5, 2.0, 0.25, -3.0];
        let s = ScaledSeq::from_f64(&vals);
        let direct: f64 = vals.iter().map(|v| v * v).sum();
        assert!((s.norm_sq_range(0, 5).to_f64() - direct).abs() < 1e-15 * direct);
        let t = ScaledSeq::from_f64(&[1.0, 1.0, -1.0, 2.0, 0.5]);
        let dot: f64 = vals.iter().zip([1.0, 1.0, -1.0, 2.0, 0.5]).map(|(a, b)| a * b).sum();
        assert!((s.dot_range(&t, 0, 5).to_f64() - dot).abs() < 1e-14);
    }

    #[test]
    fn segmented_norm_crosses_rescale_boundaries() {
        let mut s = ScaledSeq::with_capacity(4);
        s.push(1.0, 0);
        s.push(1.5, 0);
        s.push(1.0, 600);
        s.push(-1.25, 600);
        let got = s.norm_sq_range(0, 4);
        let expected = Scaled::from_parts(1.0 + 2.25, 0)
            .add(Scaled::from_parts(1.0 + 1.5625, 1200));
        assert!((got.ln_abs() - expected.ln_abs()).abs() < 1e-14);
    }
}
