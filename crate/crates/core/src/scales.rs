//! Characteristic length scales of the variation-of-parameters kernel.
//!
//! The kernel is k(n,m;E) = u₀(n)u_{π/2}(m) − u_{π/2}(n)u₀(m); its squared
//! Hilbert–Schmidt norm over a window of (possibly fractional) length L
//! equals the determinant of the 2×2 Gram matrix
//!     Q = [[‖u₀‖²_L, ⟨u₀,u_{π/2}⟩_L], [⟨u₀,u_{π/2}⟩_L, ‖u_{π/2}‖²_L]],
//! which is also max_θ‖u_θ‖²_L · min_θ‖u_θ‖²_L.  The solution-based length
//! scale L⁺_ε(E) solves √det Q = ε⁻¹; the transfer-based scale L̃⁺_ε(E)
//! solves ‖Φ(E)‖_L = 2‖Φ(1,E)⁻¹‖ε⁻¹.
//!
//! Numerics: det Q suffers catastrophic cancellation when the Gram matrix is
//! ill-conditioned (which is the rule off the spectrum), so the production
//! path accumulates the equivalent positive triangular sum
//!     det Q = Σ_{m<n} w_m w_n k(n,m)²,
//! exact in the weights w of the fractional window, with compensated
//! summation.  The explicit determinant is kept (in double-double
//! arithmetic) as the cross-check route.

use rayon::prelude::*;

use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::norms::split_length;
use crate::operator::{solve_pair, transfer_chain, JacobiOperator, SolutionPair};
use crate::scaled::{ldexp2, Scaled};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScaleSide {
    Plus,
    Minus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScaleKind {
    Solution,
    Transfer,
}

#[derive(Clone, Debug)]
pub struct LengthScaleResult {
    pub energy: f64,
    pub epsilon: f64,
    pub l: f64,
    pub side: ScaleSide,
    pub kind: ScaleKind,
    /// Integer cell [n, n+1] enclosing L.
    pub bracket: (usize, usize),
    /// |value·ε − 1| at the returned L (value = √det Q or the normalized
    /// transfer norm, by kind).
    pub residual: f64,
}

/// Default site cap for the length-scale solvers.
pub const DEFAULT_N_CAP: usize = 1 << 22;

// ───────────────────────── HS norm ─────────────────────────

/// |||K(E)|||²_L as the positive triangular sum Σ_{m<n} w_m w_n k(n,m)².
/// Exact for fractional L (boundary weight L−⌊L⌋ at site ⌊L⌋+1).
pub fn hs_norm_sq(pair: &SolutionPair, l: f64) -> Result<Scaled> {
    if !(l >= 0.0) {
        return Err(Error::validation(format!("window length L = {l} must be ≥ 0")));
    }
    let (whole, frac) = split_length(l);
    let top = if frac > 0.0 { whole + 1 } else { whole };
    if top > pair.n_max() {
        return Err(Error::range(format!(
            "L = {l} exceeds the solved window n_max = {}",
            pair.n_max()
        )));
    }
    let mut acc = TriangularSweep::new(pair, top)?;
    for n in 2..=top.min(whole) {
        acc.push_row(n);
    }
    let mut det = acc.det_int();
    if frac > 0.0 && top >= 2 {
        acc.push_row(top);
        det = det.add(acc.last_term().mul_f64(frac));
    }
    Ok(det)
}

/// |||K(E)|||²_L as the explicit Gram determinant ‖u₀‖²‖u_{π/2}‖² − ⟨·,·⟩²,
/// accumulated in double-double arithmetic after exponent alignment.
pub fn hs_norm_sq_gram(pair: &SolutionPair, l: f64) -> Result<Scaled> {
    if !(l >= 0.0) {
        return Err(Error::validation(format!("window length L = {l} must be ≥ 0")));
    }
    let (whole, frac) = split_length(l);
    let top = if frac > 0.0 { whole + 1 } else { whole };
    if top > pair.n_max() {
        return Err(Error::range(format!(
            "L = {l} exceeds the solved window n_max = {}",
            pair.n_max()
        )));
    }
    // Common scale: the largest exponent over both sequences in the window.
    let mut emax = i64::MIN;
    for n in 1..=top {
        emax = emax.max(pair.u0_at(n).exponent()).max(pair.upi_at(n).exponent());
    }
    if emax == i64::MIN {
        return Ok(Scaled::ZERO);
    }
    let mut xs = Vec::with_capacity(top);
    let mut ys = Vec::with_capacity(top);
    let mut ws = Vec::with_capacity(top);
    for n in 1..=top {
        xs.push(ldexp2(pair.u0_at(n).mantissa(), pair.u0_at(n).exponent() - emax));
        ys.push(ldexp2(pair.upi_at(n).mantissa(), pair.upi_at(n).exponent() - emax));
        ws.push(if n <= whole { 1.0 } else { frac });
    }
    let mut a = Dd::ZERO; // ‖u₀‖²
    let mut c = Dd::ZERO; // ⟨u₀, u_{π/2}⟩
    for i in 0..top {
        if ws[i] == 0.0 {
            continue;
        }
        a = a.add(Dd::from_f64(xs[i]).mul_f64(xs[i]).mul_f64(ws[i]));
        c = c.add(Dd::from_f64(xs[i]).mul_f64(ys[i]).mul_f64(ws[i]));
    }
    if a.hi == 0.0 {
        return Ok(Scaled::ZERO);
    }
    // Schur form of the same determinant: det = ‖u₀‖²·‖u_{π/2} − κu₀‖² with
    // κ = ⟨u₀,u_{π/2}⟩/‖u₀‖².  Off the spectrum the two solutions align and
    // the textbook product-minus-square loses ~e^{2γL} of cancellation; the
    // componentwise residual keeps the subtraction at each site, where it is
    // benign, so double-double headroom is preserved.
    let kappa = c.div(a);
    let mut rsq = Dd::ZERO;
    for i in 0..top {
        if ws[i] == 0.0 {
            continue;
        }
        let r = Dd::from_f64(ys[i]).sub(kappa.mul_f64(xs[i]));
        rsq = rsq.add(r.mul(r).mul_f64(ws[i]));
    }
    let det = a.mul(rsq);
    Ok(Scaled::new(det.hi).add(Scaled::new(det.lo)).mul(Scaled::from_parts(1.0, 4 * emax)))
}

/// Eigenvalues of the Gram matrix: (max_θ‖u_θ‖²_L, min_θ‖u_θ‖²_L) and the
/// minimizing angle θ₀ (so θ₀ + π/2 maximizes).  The minimum eigenvalue is
/// recovered as det/λ_max from the cancellation-free determinant.
pub fn gram_extrema(pair: &SolutionPair, l: f64) -> Result<(Scaled, Scaled, f64)> {
    let a = pair.norm_sq_u0(l);
    let b = pair.norm_sq_upi(l);
    let c = pair.pair_u0_upi(l);
    let det = hs_norm_sq(pair, l)?;
    // λ_max = ((a+b) + √((a−b)² + 4c²))/2: no cancellation in this branch.
    let disc = a.sub(b).sq().add(c.sq().mul_f64(4.0)).sqrt();
    let lmax = a.add(b).add(disc).mul_f64(0.5);
    let lmin = if lmax.is_zero() { Scaled::ZERO } else { det.div(lmax) };
    // Eigenvector angle for the *minimal* eigenvalue: Q v = λ_min v with
    // v = (cos θ₀, sin θ₀).
    let scale = a.add(b);
    let (af, bf, cf) = if scale.is_zero() {
        (0.0, 0.0, 0.0)
    } else {
        (a.div(scale).to_f64(), b.div(scale).to_f64(), c.div(scale).to_f64())
    };
    let theta0 = 0.5 * (2.0 * cf).atan2(af - bf) + std::f64::consts::FRAC_PI_2;
    Ok((lmax, lmin, theta0))
}

/// Incremental triangular accumulator: efficient integer-step growth of
/// Σ_{m<n≤N} k(n,m)² with O(N) work per added row.
struct TriangularSweep<'a> {
    pair: &'a SolutionPair,
    // Fast path: plain f64 copies (valid while every value is finite).
    u0: Vec<f64>,
    upi: Vec<f64>,
    fast: bool,
    det: Scaled,
    det_fast: f64,
    det_comp: f64, // Neumaier compensation
    last_term: Scaled,
    rows_done: usize,
}

impl<'a> TriangularSweep<'a> {
    fn new(pair: &'a SolutionPair, top: usize) -> Result<Self> {
        let mut u0 = Vec::with_capacity(top + 1);
        let mut upi = Vec::with_capacity(top + 1);
        u0.push(0.0);
        upi.push(0.0);
        let mut fast = true;
        for n in 1..=top {
            let x = pair.u0_at(n).to_f64();
            let y = pair.upi_at(n).to_f64();
            if !x.is_finite() || !y.is_finite() {
                fast = false;
            }
            u0.push(x);
            upi.push(y);
        }
        Ok(TriangularSweep {
            pair,
            u0,
            upi,
            fast,
            det: Scaled::ZERO,
            det_fast: 0.0,
            det_comp: 0.0,
            last_term: Scaled::ZERO,
            rows_done: 1,
        })
    }

    /// Add row n (all pairs (m, n), m < n); rows must arrive consecutively.
    fn push_row(&mut self, n: usize) {
        debug_assert_eq!(n, self.rows_done + 1);
        self.rows_done = n;
        if self.fast {
            let un = self.u0[n];
            let vn = self.upi[n];
            let mut row = 0.0f64;
            for m in 1..n {
                let k = un * self.upi[m] - vn * self.u0[m];
                row += k * k;
            }
            if row.is_finite() {
                // Neumaier-compensated outer accumulation.
                let t = self.det_fast + row;
                if self.det_fast.abs() >= row.abs() {
                    self.det_comp += (self.det_fast - t) + row;
                } else {
                    self.det_comp += (row - t) + self.det_fast;
                }
                self.det_fast = t;
                self.last_term = Scaled::new(row);
                return;
            }
            // Overflowed mid-run: fall back, reconstructing the scaled total.
            self.fast = false;
            self.det = Scaled::new(self.det_fast).add(Scaled::new(self.det_comp));
        }
        let un = self.pair.u0_at(n);
        let vn = self.pair.upi_at(n);
        let mut row = Scaled::ZERO;
        for m in 1..n {
            let k = un.mul(self.pair.upi_at(m)).sub(vn.mul(self.pair.u0_at(m)));
            row = row.add(k.sq());
        }
        self.det = self.det.add(row);
        self.last_term = row;
    }

    fn det_int(&self) -> Scaled {
        if self.fast {
            Scaled::new(self.det_fast).add(Scaled::new(self.det_comp))
        } else {
            self.det
        }
    }

    fn last_term(&self) -> Scaled {
        self.last_term
    }
}

// ───────────────────────── length scales ─────────────────────────

fn resolve_side(op: &JacobiOperator, side: ScaleSide) -> Result<std::borrow::Cow<'_, JacobiOperator>> {
    match side {
        ScaleSide::Plus => Ok(std::borrow::Cow::Borrowed(op)),
        ScaleSide::Minus => Ok(std::borrow::Cow::Owned(op.reflect()?)),
    }
}

/// Solve √(|||K(E)|||²_L) = ε⁻¹ for L by integer sweep plus an exact
/// fractional step (the squared norm is linear in the boundary weight).
pub fn length_scale(
    op: &JacobiOperator,
    energy: f64,
    epsilon: f64,
    side: ScaleSide,
) -> Result<LengthScaleResult> {
    length_scale_with_cap(op, energy, epsilon, side, DEFAULT_N_CAP)
}

pub fn length_scale_with_cap(
    op: &JacobiOperator,
    energy: f64,
    epsilon: f64,
    side: ScaleSide,
    n_cap: usize,
) -> Result<LengthScaleResult> {
    if !(epsilon > 0.0) {
        return Err(Error::validation(format!("epsilon = {epsilon} must be > 0")));
    }
    let op = resolve_side(op, side)?;
    let target = Scaled::new(1.0 / epsilon).sq();

    let mut n_max = 256usize.min(n_cap.max(8));
    'grow: loop {
        let pair = solve_pair(&op, energy, n_max)?;
        let mut sweep = TriangularSweep::new(&pair, n_max)?;
        let mut prev = Scaled::ZERO;
        for n in 2..=n_max {
            sweep.push_row(n);
            let cur = sweep.det_int();
            if cur.cmp_abs(target).is_ge() {
                // L ∈ [n−1, n]: det(L) = prev + t·term(n), t = frac weight.
                let term = sweep.last_term();
                let t = target.sub(prev).div(term).to_f64().clamp(0.0, 1.0);
                let l = (n - 1) as f64 + t;
                let value_sq = prev.add(term.mul_f64(t));
                let residual = (value_sq.sqrt().mul_f64(epsilon).to_f64() - 1.0).abs();
                return Ok(LengthScaleResult {
                    energy,
                    epsilon,
                    l,
                    side,
                    kind: ScaleKind::Solution,
                    bracket: (n - 1, n),
                    residual,
                });
            }
            prev = cur;
        }
        if n_max >= n_cap {
            return Err(Error::non_convergence(format!(
                "length scale at E = {energy}, ε = {epsilon}: |||K|||² = {:.3e} \
                 below target {:.3e} at the n_cap = {n_cap} window",
                prev.to_f64(),
                target.to_f64()
            )));
        }
        n_max = (n_max * 2).min(n_cap);
        continue 'grow;
    }
}

/// Solve ‖Φ(E)‖_L = 2‖Φ(1,E)⁻¹‖ ε⁻¹ for L on the piecewise-linear
/// cumulative transfer norm.
pub fn length_scale_transfer(
    op: &JacobiOperator,
    energy: f64,
    epsilon: f64,
    side: ScaleSide,
) -> Result<LengthScaleResult> {
    length_scale_transfer_with_cap(op, energy, epsilon, side, DEFAULT_N_CAP)
}

pub fn length_scale_transfer_with_cap(
    op: &JacobiOperator,
    energy: f64,
    epsilon: f64,
    side: ScaleSide,
    n_cap: usize,
) -> Result<LengthScaleResult> {
    if !(epsilon > 0.0) {
        return Err(Error::validation(format!("epsilon = {epsilon} must be > 0")));
    }
    let op = resolve_side(op, side)?;
    let mut n_top = 256usize.min(n_cap.max(8));
    loop {
        let chain = transfer_chain(&op, energy, n_top)?;
        let target_sq = Scaled::new(2.0 * chain.inv_norm_first() / epsilon).sq();
        // ‖Φ‖²_{L=j+t} = cum(j) + t‖Φ(j)‖², cum(j) = Σ_{n<j}; find the cell.
        let mut cum = Scaled::ZERO;
        for j in 1..=n_top {
            let step = chain.op_norm_sq(j);
            let next = cum.add(step);
            if next.cmp_abs(target_sq).is_ge() {
                let t = target_sq.sub(cum).div(step).to_f64().clamp(0.0, 1.0);
                let l = j as f64 + t;
                let value_sq = cum.add(step.mul_f64(t));
                let residual = (value_sq.sqrt().div(target_sq.sqrt()).to_f64() - 1.0).abs();
                return Ok(LengthScaleResult {
                    energy,
                    epsilon,
                    l,
                    side,
                    kind: ScaleKind::Transfer,
                    bracket: (j, j + 1),
                    residual,
                });
            }
            cum = next;
        }
        if n_top >= n_cap {
            return Err(Error::non_convergence(format!(
                "transfer length scale at E = {energy}, ε = {epsilon}: windows up to \
                 n_cap = {n_cap} stay below target"
            )));
        }
        n_top = (n_top * 2).min(n_cap);
    }
}

// ───────────────────────── λ-exponents ─────────────────────────

#[derive(Clone, Debug)]
pub struct LambdaExponents {
    pub energy: f64,
    /// Tail maximum of the local log-log slopes (limsup surrogate).
    pub lambda_up: f64,
    /// Tail minimum of the local log-log slopes (liminf surrogate).
    pub lambda_down: f64,
    pub eps_grid: Vec<f64>,
    pub l_values: Vec<f64>,
    /// Difference quotients Δlog L / Δlog ε⁻¹ between grid neighbours.
    pub local_slopes: Vec<f64>,
    /// Chord ratios log L / log ε⁻¹ at each grid point (diagnostic).
    pub chord_slopes: Vec<f64>,
    /// True when the tail extrema agree between the last half and the last
    /// quarter of the grid to 10% (the finite-grid limits have settled).
    pub tail_stable: bool,
}

/// Finite-grid surrogates for the limsup/liminf exponents of L⁺_ε(E) as
/// ε → 0.  `eps_grid` must be geometric, decreasing, spanning ≥ 4 decades.
pub fn lambda_exponents(
    op: &JacobiOperator,
    energy: f64,
    eps_grid: &[f64],
) -> Result<LambdaExponents> {
    if eps_grid.len() < 5 {
        return Err(Error::validation("need at least 5 grid points".to_string()));
    }
    for w in eps_grid.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::validation("eps grid must be strictly decreasing".to_string()));
        }
    }
    let decades = (eps_grid[0] / eps_grid[eps_grid.len() - 1]).log10();
    if decades < 4.0 - 1e-9 {
        return Err(Error::validation(format!(
            "eps grid spans {decades:.2} decades; need ≥ 4"
        )));
    }
    let l_values: Vec<f64> = eps_grid
        .par_iter()
        .map(|&eps| length_scale(op, energy, eps, ScaleSide::Plus).map(|r| r.l))
        .collect::<Result<Vec<_>>>()?;
    let mut local = Vec::with_capacity(l_values.len() - 1);
    for i in 1..l_values.len() {
        let dl = (l_values[i].ln() - l_values[i - 1].ln())
            / ((1.0 / eps_grid[i]).ln() - (1.0 / eps_grid[i - 1]).ln());
        local.push(dl);
    }
    let chord: Vec<f64> = eps_grid
        .iter()
        .zip(l_values.iter())
        .map(|(&e, &l)| l.ln() / (1.0 / e).ln())
        .collect();
    let tail_start = local.len() / 2;
    let tail = &local[tail_start..];
    let lambda_up = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lambda_down = tail.iter().cloned().fold(f64::INFINITY, f64::min);
    // Stability = the extrema have stopped moving: recomputing them over the
    // last quarter of the grid shifts each by < 10%.  (Monotone tails are too
    // strict a notion — even the free scale carries a period-4 ripple.)
    let quarter = &local[local.len() - (local.len() / 4).max(1)..];
    let q_up = quarter.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let q_down = quarter.iter().cloned().fold(f64::INFINITY, f64::min);
    let close = |x: f64, y: f64| (x - y).abs() <= 0.1 * x.abs().max(y.abs()).max(1.0);
    Ok(LambdaExponents {
        energy,
        lambda_up,
        lambda_down,
        eps_grid: eps_grid.to_vec(),
        l_values,
        local_slopes: local,
        chord_slopes: chord,
        tail_stable: close(q_up, lambda_up) && close(q_down, lambda_down),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::Side;
    use crate::rng::SplitMix64;

    fn free() -> JacobiOperator {
        JacobiOperator::free(Side::HalfLine)
    }

    #[test]
    fn hs_norm_vanishes_at_unit_window_and_matches_free_value() {
        let pair = solve_pair(&free(), 0.0, 16).unwrap();
        assert_eq!(hs_norm_sq(&pair, 1.0).unwrap().to_f64(), 0.0);
        // Free E=0, L=4: ‖u₀‖² = ‖u_{π/2}‖² = 2, ⟨u₀,u_{π/2}⟩ = 0 → det = 4.
        let det = hs_norm_sq(&pair, 4.0).unwrap().to_f64();
        assert!((det - 4.0).abs() < 1e-14, "det = {det}");
        let gram = hs_norm_sq_gram(&pair, 4.0).unwrap().to_f64();
        assert!((gram - 4.0).abs() < 1e-14);
    }

    #[test]
    fn triangular_sum_equals_gram_determinant_on_random_instances() {
        // Energies are drawn inside the spectral hull: at hyperbolic E both
        // routes condition like e^{2γL} on the f64 solution values (γ the
        // Lyapunov rate), which reaches ~1e-5 relative at 2γL ≈ 65 and no
        // summation precision can recover it.
        let mut rng = SplitMix64::new(41);
        for trial in 0..50 {
            let w = rng.next_range(0.1, 2.0);
            let op = JacobiOperator::random_diagonal(w, 1000 + trial, Side::HalfLine).unwrap();
            let e = rng.next_range(-1.9, 1.9);
            let l = rng.next_range(2.0, 60.0);
            let pair = solve_pair(&op, e, 70).unwrap();
            let tri = hs_norm_sq(&pair, l).unwrap();
            let gram = hs_norm_sq_gram(&pair, l).unwrap();
            let rel = tri.sub(gram).abs().div(tri).to_f64();
            assert!(rel < 1e-11, "trial {trial}: rel = {rel:.3e} at E={e}, L={l}");
        }
    }

    #[test]
    fn gram_extrema_match_a_dense_theta_scan() {
        let op = JacobiOperator::random_diagonal(0.8, 7, Side::HalfLine).unwrap();
        let pair = solve_pair(&op, 0.4, 40).unwrap();
        let l = 23.5;
        let (lmax, lmin, theta0) = gram_extrema(&pair, l).unwrap();
        let mut scan_max = f64::NEG_INFINITY;
        let mut scan_min = f64::INFINITY;
        for i in 0..2000 {
            let th = std::f64::consts::PI * i as f64 / 2000.0;
            let v = pair.norm_sq_theta(th, l).to_f64();
            scan_max = scan_max.max(v);
            scan_min = scan_min.min(v);
        }
        assert!((lmax.to_f64() - scan_max).abs() <= 1e-8 * scan_max);
        assert!((lmin.to_f64() - scan_min).abs() <= 1e-8 * scan_max);
        // θ₀ attains the minimum.
        let at_theta0 = pair.norm_sq_theta(theta0, l).to_f64();
        assert!((at_theta0 - scan_min).abs() <= 1e-8 * scan_max);
    }

    #[test]
    fn free_length_scale_is_two_over_epsilon() {
        for eps in [1e-2, 1e-3] {
            let r = length_scale(&free(), 0.0, eps, ScaleSide::Plus).unwrap();
            // |||K|||²_L ~ L²/4 for the period-4 free solutions.
            assert!(
                (r.l - 2.0 / eps).abs() < 0.05 * (2.0 / eps),
                "eps {eps}: L = {}",
                r.l
            );
            assert!(r.residual < 1e-8);
            assert!(r.bracket.0 as f64 <= r.l && r.l <= r.bracket.1 as f64);
        }
    }

    #[test]
    fn length_scale_decreases_in_epsilon_and_tends_to_one() {
        let op = JacobiOperator::random_diagonal(0.6, 99, Side::HalfLine).unwrap();
        let l1 = length_scale(&op, 0.3, 1e-2, ScaleSide::Plus).unwrap().l;
        let l2 = length_scale(&op, 0.3, 1e-3, ScaleSide::Plus).unwrap().l;
        assert!(l2 > l1);
        let big = length_scale(&op, 0.3, 1e6, ScaleSide::Plus).unwrap().l;
        assert!(big > 1.0 && big < 1.0 + 1e-6, "L = {big}");
    }

    #[test]
    fn free_transfer_scale_closed_form() {
        // ‖Φ(1,0)⁻¹‖ = 1 and ‖Φ‖²_L = L−1 ⇒ L̃ = 1 + 4ε⁻².
        for eps in [0.5, 0.1, 1e-2] {
            let r = length_scale_transfer(&free(), 0.0, eps, ScaleSide::Plus).unwrap();
            let expected = 1.0 + 4.0 / (eps * eps);
            assert!(
                (r.l - expected).abs() < 1e-9 * expected,
                "eps {eps}: {} vs {expected}",
                r.l
            );
        }
    }

    #[test]
    fn transfer_scale_dominates_solution_scale() {
        // Lemma-level comparison on a sweep of random operators.
        let mut rng = SplitMix64::new(4242);
        for trial in 0..40 {
            let op = JacobiOperator::random_diagonal(0.5, 300 + trial, Side::HalfLine).unwrap();
            let e = rng.next_range(-2.0, 2.0);
            let eps = 10f64.powf(rng.next_range(-3.0, -1.0));
            let lp = length_scale(&op, e, eps, ScaleSide::Plus).unwrap().l;
            if lp >= 2.0 {
                let lt = length_scale_transfer(&op, e, eps, ScaleSide::Plus).unwrap().l;
                assert!(lt >= lp - 1e-9, "trial {trial}: L̃ = {lt} < L = {lp}");
            }
        }
    }

    #[test]
    fn trans_inequality_pointwise() {
        // 4‖Φ(1,E)⁻¹‖²·(max_θ)(min_θ) ≥ ‖Φ(E)‖²_L for L ≥ 2.
        let mut rng = SplitMix64::new(11);
        for trial in 0..100 {
            let op = JacobiOperator::random_diagonal(0.7, 17 * trial + 1, Side::HalfLine).unwrap();
            let e = rng.next_range(-2.5, 2.5);
            let l = rng.next_range(2.0, 40.0);
            let pair = solve_pair(&op, e, 50).unwrap();
            let chain = transfer_chain(&op, e, 45).unwrap();
            let det = hs_norm_sq(&pair, l).unwrap();
            let inv = chain.inv_norm_first();
            let lhs = det.mul_f64(4.0 * inv * inv).to_f64();
            let rhs = chain.cum_sq_norm(l).to_f64();
            assert!(lhs >= rhs * (1.0 - 1e-10), "trial {trial}: {lhs} < {rhs}");
        }
    }

    #[test]
    fn minus_side_equals_plus_side_of_reflection() {
        let op = JacobiOperator::random_diagonal(0.9, 5150, Side::WholeLine).unwrap();
        let direct = length_scale(&op, 0.2, 1e-2, ScaleSide::Minus).unwrap().l;
        let reflected = op.reflect().unwrap();
        let via = length_scale(&reflected, 0.2, 1e-2, ScaleSide::Plus).unwrap().l;
        assert_eq!(direct, via);
        // Half-line operators have no left side.
        assert!(length_scale(&free(), 0.0, 0.1, ScaleSide::Minus).is_err());
    }

    #[test]
    fn free_lambda_exponents_are_one() {
        let grid: Vec<f64> = (0..=16).map(|i| 10f64.powf(-0.25 * i as f64)).collect();
        let r = lambda_exponents(&free(), 0.0, &grid).unwrap();
        assert!((r.lambda_up - 1.0).abs() < 0.05, "up = {}", r.lambda_up);
        assert!((r.lambda_down - 1.0).abs() < 0.05, "down = {}", r.lambda_down);
        assert!(r.tail_stable);
        assert_eq!(r.l_values.len(), grid.len());
    }
}
