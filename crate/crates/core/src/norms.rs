//! Fractional-length norms and pairings on half-line and whole-line sequences.
//!
//! For real L ≥ 0 the norm interpolates the partial sums linearly:
//! ‖φ‖²_L = Σ_{n=1}^{⌊L⌋} |φ(n)|² + (L−⌊L⌋)|φ(⌊L⌋+1)|².  The associated
//! pairing ⟨φ,ψ⟩_L uses the plain product (no conjugation), which is what the
//! Hilbert–Schmidt identities for the transfer kernel require; for real
//! sequences it coincides with the inner product.

use num_complex::Complex64;

use crate::scaled::{Scaled, ScaledSeq};

/// Weight of site `n` (1-based) in the ⟨·,·⟩_L pairing, together with the
/// number of fully-weighted sites.  `frac` multiplies site `⌊L⌋+1`.
#[inline]
pub fn split_length(l: f64) -> (usize, f64) {
    assert!(l >= 0.0 && l.is_finite(), "length must be finite and nonnegative");
    let whole = l.floor() as usize;
    (whole, l - l.floor())
}

/// ‖φ‖²_L for a real sequence indexed from site 1 (`phi[0]` is site 1).
pub fn norm_sq_l(phi: &[f64], l: f64) -> f64 {
    let (whole, frac) = split_length(l);
    assert!(
        whole + (frac > 0.0) as usize <= phi.len(),
        "norm_sq_l: L = {l} needs {} sites, have {}",
        whole + (frac > 0.0) as usize,
        phi.len()
    );
    let mut s = 0.0;
    for &v in &phi[..whole] {
        s += v * v;
    }
    if frac > 0.0 {
        s += frac * phi[whole] * phi[whole];
    }
    s
}

/// ⟨φ,ψ⟩_L = Σ φ(n)ψ(n) + frac·φψ at the boundary site (no conjugation).
pub fn pair_l(phi: &[f64], psi: &[f64], l: f64) -> f64 {
    let (whole, frac) = split_length(l);
    let need = whole + (frac > 0.0) as usize;
    assert!(need <= phi.len() && need <= psi.len(), "pair_l: sequences shorter than L");
    let mut s = 0.0;
    for i in 0..whole {
        s += phi[i] * psi[i];
    }
    if frac > 0.0 {
        s += frac * phi[whole] * psi[whole];
    }
    s
}

/// ‖φ‖²_L for a complex sequence (|φ(n)|² summed).
pub fn norm_sq_l_complex(phi: &[Complex64], l: f64) -> f64 {
    let (whole, frac) = split_length(l);
    assert!(whole + (frac > 0.0) as usize <= phi.len(), "norm_sq_l_complex: too short");
    let mut s = 0.0;
    for v in &phi[..whole] {
        s += v.norm_sqr();
    }
    if frac > 0.0 {
        s += frac * phi[whole].norm_sqr();
    }
    s
}

/// Two-sided norm on a whole-line sequence: sites −⌊L₁⌋+1 … ⌊L₂⌋ fully
/// weighted with linear fractions at both ends,
/// ‖φ‖²_{L₁,L₂} = Σ_{n=−⌊L₁⌋+1}^{⌊L₂⌋} |φ(n)|²
///              + (L₁−⌊L₁⌋)|φ(−⌊L₁⌋)|² + (L₂−⌊L₂⌋)|φ(⌊L₂⌋+1)|².
/// `phi(n)` is addressed through `value`, which must cover the range.
pub fn norm_sq_l1l2(value: impl Fn(i64) -> f64, l1: f64, l2: f64) -> f64 {
    let (w1, f1) = split_length(l1);
    let (w2, f2) = split_length(l2);
    let mut s = 0.0;
    for n in (1 - (w1 as i64))..=(w2 as i64) {
        let v = value(n);
        s += v * v;
    }
    if f1 > 0.0 {
        let v = value(-(w1 as i64));
        s += f1 * v * v;
    }
    if f2 > 0.0 {
        let v = value(w2 as i64 + 1);
        s += f2 * v * v;
    }
    s
}

/// Scaled-sequence ‖φ‖²_L (sequence indexed from site 1 at position 0).
pub fn norm_sq_l_scaled(phi: &ScaledSeq, l: f64) -> Scaled {
    let (whole, frac) = split_length(l);
    assert!(whole + (frac > 0.0) as usize <= phi.len(), "norm_sq_l_scaled: too short");
    let mut s = phi.norm_sq_range(0, whole);
    if frac > 0.0 {
        s = s.add(phi.get(whole).sq().mul_f64(frac));
    }
    s
}

/// Scaled-sequence pairing ⟨φ,ψ⟩_L.
pub fn pair_l_scaled(phi: &ScaledSeq, psi: &ScaledSeq, l: f64) -> Scaled {
    let (whole, frac) = split_length(l);
    let need = whole + (frac > 0.0) as usize;
    assert!(need <= phi.len() && need <= psi.len(), "pair_l_scaled: too short");
    let mut s = phi.dot_range(psi, 0, whole);
    if frac > 0.0 {
        s = s.add(phi.get(whole).mul(psi.get(whole)).mul_f64(frac));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fractional_norm_of_ones() {
        // φ ≡ 1: ‖φ‖²_L = L exactly, fractional part included.
        let phi = [1.0; 8];
        assert_eq!(norm_sq_l(&phi, 2.5), 2.5);
        assert_eq!(norm_sq_l(&phi, 0.0), 0.0);
        assert_eq!(norm_sq_l(&phi, 7.0), 7.0);
        assert!((norm_sq_l(&phi, 0.25) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn integer_lengths_match_plain_partial_sums() {
        let phi = [1.0, -2.0, 3.0, 0.5];
        assert_eq!(norm_sq_l(&phi, 3.0), 1.0 + 4.0 + 9.0);
        assert_eq!(pair_l(&phi, &[1.0, 1.0, 1.0, 1.0], 3.0), 2.0);
    }

    #[test]
    fn norm_is_continuous_and_monotone_in_l() {
        let phi = [0.3, -1.7, 2.2, 0.0, 1.1];
        let mut prev = 0.0;
        for i in 0..=50 {
            let l = 5.0 * i as f64 / 50.0;
            let v = norm_sq_l(&phi, l);
            assert!(v >= prev - 1e-15, "norm decreased at L={l}");
            prev = v;
        }
        // continuity across an integer breakpoint
        let below = norm_sq_l(&phi, 3.0 - 1e-9);
        let above = norm_sq_l(&phi, 3.0 + 1e-9);
        assert!((below - above).abs() < 1e-8);
    }

    #[test]
    fn two_sided_norm_covers_both_ends() {
        // φ(n) = n over sites −2..=3, fractional pieces at −3 and 4.
        let value = |n: i64| n as f64;
        let got = norm_sq_l1l2(value, 3.5, 3.25);
        let expected = (4 + 1 + 0 + 1 + 4 + 9) as f64 + 0.5 * 9.0 + 0.25 * 16.0;
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn scaled_routes_agree_with_f64() {
        let vals = [0.7, -1.3, 2.9, -0.2, 0.0, 4.4];
        let seq = ScaledSeq::from_f64(&vals);
        for &l in &[0.0, 1.0, 2.75, 5.5, 6.0] {
            let a = norm_sq_l(&vals, l);
            let b = norm_sq_l_scaled(&seq, l).to_f64();
            assert!((a - b).abs() <= 1e-15 * a.max(1.0), "L={l}: {a} vs {b}");
        }
        let other = ScaledSeq::from_f64(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let a = pair_l(&vals, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 4.5);
        let b = pair_l_scaled(&seq, &other, 4.5).to_f64();
        assert!((a - b).abs() < 1e-14);
    }
}
