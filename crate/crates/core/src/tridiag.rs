//! Symmetric tridiagonal eigenproblems for truncated Jacobi operators.
//!
//! The spectral measure of a truncated operator relative to a site vector δ_r
//! is atomic: μ_N = Σ_j w_j δ(E_j) with w_j the squared r-th component of the
//! j-th normalized eigenvector.  We therefore need all eigenvalues but only a
//! single *row* of the eigenvector matrix, which the QL iteration with
//! implicit shifts delivers in O(N²): a Givens rotation acts on two columns
//! of the accumulated orthogonal matrix, so one row can be carried along at
//! O(1) per rotation.  A Sturm-sequence bisection solver provides an
//! independent route to the eigenvalues for cross-checking.

use crate::error::{Error, Result};

/// Eigenvalues (ascending) and the `row`-th component of each normalized
/// eigenvector of the symmetric tridiagonal matrix with diagonal `diag` and
/// off-diagonal `off` (len = N−1).
pub fn eigen_row(diag: &[f64], off: &[f64], row: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = diag.len();
    if n == 0 {
        return Err(Error::validation("empty matrix".to_string()));
    }
    if off.len() + 1 != n {
        return Err(Error::validation(format!(
            "off-diagonal length {} does not match dimension {}",
            off.len(),
            n
        )));
    }
    if row >= n {
        return Err(Error::validation(format!("row {row} out of range for N = {n}")));
    }
    let mut d = diag.to_vec();
    // e[i] couples sites i and i+1; e[n-1] is workspace.
    let mut e = vec![0.0f64; n];
    e[..n - 1].copy_from_slice(off);
    let mut z = vec![0.0f64; n];
    z[row] = 1.0;

    for l in 0..n {
        let mut iter = 0;
        loop {
            // Locate the first negligible coupling at or beyond l.
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::non_convergence(format!(
                    "QL iteration stalled at index {l} after 60 sweeps"
                )));
            }
            // Implicit shift from the leading 2×2 block.
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            let sign_r = if g >= 0.0 { r } else { -r };
            g = d[m] - d[l] + e[l] / (g + sign_r);
            let mut s = 1.0f64;
            let mut c = 1.0f64;
            let mut p = 0.0f64;
            let mut underflowed = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    // Deflate without completing the sweep.
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflowed = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                // The rotation mixes columns i and i+1 of the eigenvector
                // matrix; track only the requested row.
                f = z[i + 1];
                z[i + 1] = s * z[i] + c * f;
                z[i] = c * z[i] - s * f;
            }
            if underflowed {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).expect("finite eigenvalues"));
    let energies: Vec<f64> = idx.iter().map(|&i| d[i]).collect();
    let components: Vec<f64> = idx.iter().map(|&i| z[i]).collect();
    Ok((energies, components))
}

/// Number of eigenvalues of (diag, off) strictly below x, by the Sturm
/// (LDLᵀ pivot sign) count.
pub fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let n = diag.len();
    let mut count = 0usize;
    let mut q = 1.0f64;
    let scale = diag.iter().fold(1.0f64, |m, v| m.max(v.abs()))
        + off.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        let coupling = if i > 0 { off[i - 1] * off[i - 1] / q } else { 0.0 };
        q = diag[i] - x - coupling;
        if q == 0.0 {
            q = f64::EPSILON * scale * scale.max(1.0);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// All eigenvalues by Sturm bisection; independent oracle for `eigen_row`.
pub fn eigenvalues_sturm(diag: &[f64], off: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if n == 0 {
        return Err(Error::validation("empty matrix".to_string()));
    }
    if off.len() + 1 != n {
        return Err(Error::validation("off-diagonal length mismatch".to_string()));
    }
    // Gershgorin enclosure.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let mut radius = 0.0;
        if i > 0 {
            radius += off[i - 1].abs();
        }
        if i + 1 < n {
            radius += off[i].abs();
        }
        lo = lo.min(diag[i] - radius);
        hi = hi.max(diag[i] + radius);
    }
    let width = (hi - lo).max(1.0);
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let mut a = lo;
        let mut b = hi;
        // Invariant: count(a) ≤ j < count(b).
        for _ in 0..80 {
            let mid = 0.5 * (a + b);
            if sturm_count(diag, off, mid) <= j {
                a = mid;
            } else {
                b = mid;
            }
            if b - a < 1e-15 * width {
                break;
            }
        }
        out.push(0.5 * (a + b));
    }
    Ok(out)
}

/// Atomic spectral measure of the N×N truncation relative to row `row`.
#[derive(Clone, Debug)]
pub struct RowSpectralData {
    pub energies: Vec<f64>,
    pub weights: Vec<f64>,
}

pub fn row_spectral_data(diag: &[f64], off: &[f64], row: usize) -> Result<RowSpectralData> {
    let (energies, comps) = eigen_row(diag, off, row)?;
    let weights = comps.iter().map(|c| c * c).collect();
    Ok(RowSpectralData { energies, weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn moment_by_power(diag: &[f64], off: &[f64], row: usize, k: usize) -> f64 {
        // ⟨δ_row, H^k δ_row⟩ by repeated sparse application.
        let n = diag.len();
        let mut v = vec![0.0f64; n];
        v[row] = 1.0;
        for _ in 0..k {
            let mut w = vec![0.0f64; n];
            for i in 0..n {
                w[i] = diag[i] * v[i];
                if i > 0 {
                    w[i] += off[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    w[i] += off[i] * v[i + 1];
                }
            }
            v = w;
        }
        v[row]
    }

    #[test]
    fn free_truncation_matches_closed_form() {
        let n = 100;
        let diag = vec![0.0; n];
        let off = vec![1.0; n - 1];
        let data = row_spectral_data(&diag, &off, 0).unwrap();
        // E_j = 2cos(jπ/(N+1)), w_j = (2/(N+1))sin²(jπ/(N+1)); ascending in E
        // means descending in j.
        for (i, (&e, &w)) in data.energies.iter().zip(data.weights.iter()).enumerate() {
            let j = (n - i) as f64;
            let angle = j * std::f64::consts::PI / (n as f64 + 1.0);
            assert!((e - 2.0 * angle.cos()).abs() < 1e-12, "eigenvalue {i}");
            let w_exact = 2.0 / (n as f64 + 1.0) * angle.sin().powi(2);
            assert!((w - w_exact).abs() < 1e-12, "weight {i}: {w} vs {w_exact}");
        }
        let total: f64 = data.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tiny_matrices_are_exact() {
        let (e, z) = eigen_row(&[3.5], &[], 0).unwrap();
        assert_eq!(e, vec![3.5]);
        assert!((z[0].abs() - 1.0).abs() < 1e-15);
        // 2×2 [[1, 2], [2, -1]]: eigenvalues ±√5.
        let (e, z) = eigen_row(&[1.0, -1.0], &[2.0], 0).unwrap();
        let s = 5f64.sqrt();
        assert!((e[0] + s).abs() < 1e-14 && (e[1] - s).abs() < 1e-14);
        let w: f64 = z.iter().map(|c| c * c).sum();
        assert!((w - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ql_agrees_with_sturm_bisection_on_random_matrices() {
        let mut rng = SplitMix64::new(77);
        for trial in 0..6 {
            let n = 40 + 10 * trial;
            let diag: Vec<f64> = (0..n).map(|_| rng.next_range(-2.0, 2.0)).collect();
            let off: Vec<f64> = (0..n - 1).map(|_| rng.next_range(0.2, 1.5)).collect();
            let (eigs, _) = eigen_row(&diag, &off, 0).unwrap();
            let oracle = eigenvalues_sturm(&diag, &off).unwrap();
            for (a, b) in eigs.iter().zip(oracle.iter()) {
                assert!((a - b).abs() < 1e-10, "trial {trial}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn weights_reproduce_moments() {
        let mut rng = SplitMix64::new(2718);
        let n = 80;
        let diag: Vec<f64> = (0..n).map(|_| rng.next_range(-1.0, 1.0)).collect();
        let off: Vec<f64> = (0..n - 1).map(|_| rng.next_range(0.3, 1.2)).collect();
        for row in [0usize, 5, 79] {
            let data = row_spectral_data(&diag, &off, row).unwrap();
            for k in 0..=8 {
                let spectral: f64 = data
                    .energies
                    .iter()
                    .zip(data.weights.iter())
                    .map(|(e, w)| w * e.powi(k as i32))
                    .sum();
                let direct = moment_by_power(&diag, &off, row, k);
                assert!(
                    (spectral - direct).abs() < 1e-10 * direct.abs().max(1.0),
                    "row {row} moment {k}: {spectral} vs {direct}"
                );
            }
        }
    }
}
