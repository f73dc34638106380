//! Jacobi operators and their fundamental solutions.
//!
//! `(Hu)(n) = a(n)u(n+1) + a(n-1)u(n-1) + b(n)u(n)` on ℓ²({1,2,…}) with the
//! convention a(0) = 1 (Dirichlet data enters through site 0), or on ℓ²(ℤ).
//! The two fundamental solutions at energy E carry boundary data
//! u_θ(0) = sin θ, u_θ(1) = cos θ; we track θ = 0 (`u0`) and θ = π/2 (`upi`),
//! every other u_θ = cos θ·u0 + sin θ·upi.  Solutions are stored in scaled
//! form because off-spectrum they grow exponentially in n.
//!
//! Built-in coefficient families: free (b ≡ 0), i.i.d. uniform diagonal
//! disorder (counter-mode seeded draws, so site values are reproducible and
//! order-independent), the Fibonacci potential λ·V(n) generated by exact
//! integer substitution, and explicit arrays.  All families have a ≡ 1 except
//! explicit ones.

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fibonacci;
use crate::rng::site_uniform;
use crate::scaled::{Scaled, ScaledPair, ScaledSeq};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    HalfLine,
    WholeLine,
}

/// Serializable description of an operator; the exchange format used by the
/// CLI and by the multidimensional reduction when it exports its half-line
/// operator.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "family")]
pub enum FamilySpec {
    /// b ≡ 0, a ≡ 1.
    Free,
    /// b(n) i.i.d. uniform on [-w/2, w/2], a ≡ 1, deterministic per seed.
    RandomDiagonal { w: f64, seed: u64 },
    /// b(n) = λ·V(n) with the Fibonacci substitution word V, a ≡ 1.
    Fibonacci { lambda: f64 },
    /// Explicit arrays: `b[i]` is b(i+1); `a[i]` is a(i+1) (defaults to 1).
    /// Whole-line operators may add `a0` = a(0), `b_neg[i]` = b(-i) and
    /// `a_neg[i]` = a(-(i+1)).
    Explicit {
        b: Vec<f64>,
        #[serde(default)]
        a: Option<Vec<f64>>,
        #[serde(default)]
        a0: Option<f64>,
        #[serde(default)]
        b_neg: Option<Vec<f64>>,
        #[serde(default)]
        a_neg: Option<Vec<f64>>,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct OperatorSpec {
    #[serde(flatten)]
    pub family: FamilySpec,
    pub side: Side,
}

// Deserialized by hand: `deny_unknown_fields` cannot be combined with
// `flatten`, and the exchange format must reject unknown keys as well as
// keys that belong to a different family.
impl<'de> Deserialize<'de> for OperatorSpec {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        use serde::de::Error as _;

        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            family: String,
            #[serde(default)]
            w: Option<f64>,
            #[serde(default)]
            seed: Option<u64>,
            #[serde(default)]
            lambda: Option<f64>,
            #[serde(default)]
            b: Option<Vec<f64>>,
            #[serde(default)]
            a: Option<Vec<f64>>,
            #[serde(default)]
            a0: Option<f64>,
            #[serde(default)]
            b_neg: Option<Vec<f64>>,
            #[serde(default)]
            a_neg: Option<Vec<f64>>,
            side: Side,
        }

        let raw = Raw::deserialize(deserializer)?;
        let present: Vec<&str> = [
            ("w", raw.w.is_some()),
            ("seed", raw.seed.is_some()),
            ("lambda", raw.lambda.is_some()),
            ("b", raw.b.is_some()),
            ("a", raw.a.is_some()),
            ("a0", raw.a0.is_some()),
            ("b_neg", raw.b_neg.is_some()),
            ("a_neg", raw.a_neg.is_some()),
        ]
        .iter()
        .filter_map(|&(n, p)| p.then_some(n))
        .collect();
        let allow = |allowed: &[&str]| -> std::result::Result<(), D::Error> {
            for name in &present {
                if !allowed.contains(name) {
                    return Err(D::Error::custom(format!(
                        "field `{name}` is not accepted by family `{}`",
                        raw.family
                    )));
                }
            }
            Ok(())
        };
        let family = match raw.family.as_str() {
            "free" => {
                allow(&[])?;
                FamilySpec::Free
            }
            "random-diagonal" => {
                allow(&["w", "seed"])?;
                FamilySpec::RandomDiagonal {
                    w: raw.w.ok_or_else(|| D::Error::missing_field("w"))?,
                    seed: raw.seed.ok_or_else(|| D::Error::missing_field("seed"))?,
                }
            }
            "fibonacci" => {
                allow(&["lambda"])?;
                FamilySpec::Fibonacci {
                    lambda: raw.lambda.ok_or_else(|| D::Error::missing_field("lambda"))?,
                }
            }
            "explicit" => {
                allow(&["b", "a", "a0", "b_neg", "a_neg"])?;
                FamilySpec::Explicit {
                    b: raw.b.ok_or_else(|| D::Error::missing_field("b"))?,
                    a: raw.a,
                    a0: raw.a0,
                    b_neg: raw.b_neg,
                    a_neg: raw.a_neg,
                }
            }
            other => {
                return Err(D::Error::unknown_variant(
                    other,
                    &["free", "random-diagonal", "fibonacci", "explicit"],
                ))
            }
        };
        Ok(OperatorSpec { family, side: raw.side })
    }
}

#[derive(Clone, Debug)]
enum Kind {
    Free,
    Random { w: f64, seed: u64, reflected: bool },
    Fibonacci { lambda: f64, reflected: bool },
    Explicit {
        a0: f64,
        a: Arc<Vec<f64>>,
        b: Arc<Vec<f64>>,
        a_neg: Arc<Vec<f64>>,
        b_neg: Arc<Vec<f64>>,
    },
}

#[derive(Default)]
struct Caches {
    /// vec[i] = b(i+1)
    b_pos: Mutex<Arc<Vec<f64>>>,
    /// vec[i] = b(-i)
    b_neg: Mutex<Arc<Vec<f64>>>,
    /// Fibonacci substitution word V(1), V(2), …
    fib_word: Mutex<Arc<Vec<u8>>>,
}

struct Inner {
    side: Side,
    kind: Kind,
    caches: Caches,
}

#[derive(Clone)]
pub struct JacobiOperator {
    inner: Arc<Inner>,
}

/// Validate a spec and construct the operator.
pub fn build_operator(spec: &OperatorSpec) -> Result<JacobiOperator> {
    JacobiOperator::build(spec)
}

impl JacobiOperator {
    pub fn build(spec: &OperatorSpec) -> Result<JacobiOperator> {
        let kind = match &spec.family {
            FamilySpec::Free => Kind::Free,
            FamilySpec::RandomDiagonal { w, seed } => {
                if !w.is_finite() || *w < 0.0 {
                    return Err(Error::validation(format!("disorder width w = {w} must be ≥ 0")));
                }
                Kind::Random { w: *w, seed: *seed, reflected: false }
            }
            FamilySpec::Fibonacci { lambda } => {
                if !lambda.is_finite() {
                    return Err(Error::validation("fibonacci coupling must be finite"));
                }
                Kind::Fibonacci { lambda: *lambda, reflected: false }
            }
            FamilySpec::Explicit { b, a, a0, b_neg, a_neg } => {
                if b.is_empty() {
                    return Err(Error::validation("explicit operator needs at least one b value"));
                }
                for (i, v) in b.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(Error::validation(format!("b({}) = {v} is not finite", i + 1)));
                    }
                }
                let a_vec = a.clone().unwrap_or_default();
                if !a_vec.is_empty() && a_vec.len() + 1 < b.len() {
                    return Err(Error::validation(format!(
                        "explicit a has {} entries, need ≥ {} for {} sites",
                        a_vec.len(),
                        b.len() - 1,
                        b.len()
                    )));
                }
                for (i, v) in a_vec.iter().enumerate() {
                    if !v.is_finite() || *v <= 0.0 {
                        return Err(Error::validation(format!(
                            "off-diagonal a({}) = {v} must be strictly positive",
                            i + 1
                        )));
                    }
                }
                let a0v = a0.unwrap_or(1.0);
                match spec.side {
                    Side::HalfLine => {
                        if a0.is_some() && a0v != 1.0 {
                            return Err(Error::validation("half-line operators fix a(0) = 1"));
                        }
                        if b_neg.is_some() || a_neg.is_some() {
                            return Err(Error::validation(
                                "negative-side arrays require side = whole-line",
                            ));
                        }
                    }
                    Side::WholeLine => {
                        if !a0v.is_finite() || a0v <= 0.0 {
                            return Err(Error::validation(format!(
                                "off-diagonal a(0) = {a0v} must be strictly positive"
                            )));
                        }
                    }
                }
                let bn = b_neg.clone().unwrap_or_default();
                let an = a_neg.clone().unwrap_or_default();
                for v in an.iter() {
                    if !v.is_finite() || *v <= 0.0 {
                        return Err(Error::validation("negative-side a must be strictly positive"));
                    }
                }
                if !an.is_empty() && an.len() + 1 < bn.len() {
                    return Err(Error::validation(format!(
                        "explicit a_neg has {} entries, need ≥ {} for {} negative-side sites",
                        an.len(),
                        bn.len() - 1,
                        bn.len()
                    )));
                }
                Kind::Explicit {
                    a0: a0v,
                    a: Arc::new(a_vec),
                    b: Arc::new(b.clone()),
                    a_neg: Arc::new(an),
                    b_neg: Arc::new(bn),
                }
            }
        };
        Ok(JacobiOperator {
            inner: Arc::new(Inner { side: spec.side, kind, caches: Caches::default() }),
        })
    }

    /// Convenience constructors for the built-in families.
    pub fn free(side: Side) -> JacobiOperator {
        Self::build(&OperatorSpec { family: FamilySpec::Free, side }).unwrap()
    }

    pub fn random_diagonal(w: f64, seed: u64, side: Side) -> Result<JacobiOperator> {
        Self::build(&OperatorSpec { family: FamilySpec::RandomDiagonal { w, seed }, side })
    }

    pub fn fibonacci(lambda: f64, side: Side) -> Result<JacobiOperator> {
        Self::build(&OperatorSpec { family: FamilySpec::Fibonacci { lambda }, side })
    }

    pub fn explicit_half_line(b: Vec<f64>, a: Option<Vec<f64>>) -> Result<JacobiOperator> {
        Self::build(&OperatorSpec {
            family: FamilySpec::Explicit { b, a, a0: None, b_neg: None, a_neg: None },
            side: Side::HalfLine,
        })
    }

    /// Whole-line explicit operator.  `b` holds b(1), b(2), …; `b_neg` holds
    /// b(0), b(−1), …; empty `a`/`a_neg` mean a ≡ 1 on that side.
    pub fn explicit_whole_line(
        b: Vec<f64>,
        b_neg: Vec<f64>,
        a: Option<Vec<f64>>,
        a0: f64,
        a_neg: Option<Vec<f64>>,
    ) -> Result<JacobiOperator> {
        Self::build(&OperatorSpec {
            family: FamilySpec::Explicit { b, a, a0: Some(a0), b_neg: Some(b_neg), a_neg },
            side: Side::WholeLine,
        })
    }

    pub fn side(&self) -> Side {
        self.inner.side
    }

    /// Serializable description (reflections are resolved eagerly, so every
    /// operator except reflected families round-trips; reflected built-ins
    /// are not part of the exchange format and return None).
    pub fn spec(&self) -> Option<OperatorSpec> {
        let family = match &self.inner.kind {
            Kind::Free => FamilySpec::Free,
            Kind::Random { w, seed, reflected: false } => {
                FamilySpec::RandomDiagonal { w: *w, seed: *seed }
            }
            Kind::Fibonacci { lambda, reflected: false } => {
                FamilySpec::Fibonacci { lambda: *lambda }
            }
            Kind::Explicit { a0, a, b, a_neg, b_neg } => FamilySpec::Explicit {
                b: b.as_ref().clone(),
                a: if a.is_empty() { None } else { Some(a.as_ref().clone()) },
                a0: if *a0 == 1.0 { None } else { Some(*a0) },
                b_neg: if b_neg.is_empty() { None } else { Some(b_neg.as_ref().clone()) },
                a_neg: if a_neg.is_empty() { None } else { Some(a_neg.as_ref().clone()) },
            },
            _ => return None,
        };
        Some(OperatorSpec { family, side: self.inner.side })
    }

    pub fn label(&self) -> String {
        let base = match &self.inner.kind {
            Kind::Free => "free".to_string(),
            Kind::Random { w, seed, reflected } => {
                format!("random(w={w},seed={seed}){}", if *reflected { " reflected" } else { "" })
            }
            Kind::Fibonacci { lambda, reflected } => {
                format!("fibonacci(λ={lambda}){}", if *reflected { " reflected" } else { "" })
            }
            Kind::Explicit { b, .. } => format!("explicit(n={})", b.len()),
        };
        match self.inner.side {
            Side::HalfLine => base,
            Side::WholeLine => format!("{base} whole-line"),
        }
    }

    /// Largest site with a defined coefficient on the positive side
    /// (None = unbounded family).
    pub fn coefficient_limit(&self) -> Option<usize> {
        match &self.inner.kind {
            Kind::Explicit { b, .. } => Some(b.len()),
            _ => None,
        }
    }

    pub fn coefficient_limit_neg(&self) -> Option<usize> {
        match &self.inner.kind {
            // b(0), b(-1), … : limit in units of |n|, i.e. b(-(len-1)) exists.
            Kind::Explicit { b_neg, .. } => Some(b_neg.len().saturating_sub(1)),
            _ => None,
        }
    }

    /// True when a ≡ 1 on the relevant index range (all built-in families).
    pub fn a_is_unit(&self) -> bool {
        match &self.inner.kind {
            Kind::Explicit { a0, a, a_neg, .. } => {
                *a0 == 1.0 && a.iter().all(|&x| x == 1.0) && a_neg.iter().all(|&x| x == 1.0)
            }
            _ => true,
        }
    }

    pub fn a0(&self) -> f64 {
        match &self.inner.kind {
            Kind::Explicit { a0, .. } => *a0,
            _ => 1.0,
        }
    }

    /// Single-site diagonal value.  Panics on out-of-range explicit access;
    /// bulk paths should use the window methods which return range errors.
    pub fn b_value(&self, n: i64) -> f64 {
        if self.inner.side == Side::HalfLine {
            assert!(n >= 1, "half-line site index must be ≥ 1, got {n}");
        }
        match &self.inner.kind {
            Kind::Free => 0.0,
            Kind::Random { w, seed, reflected } => {
                let site = if *reflected { 1 - n } else { n };
                site_uniform(*seed, site, *w)
            }
            Kind::Fibonacci { lambda, reflected } => {
                let site = if *reflected { 1 - n } else { n };
                *lambda * self.fib_value(site) as f64
            }
            Kind::Explicit { b, b_neg, .. } => {
                if n >= 1 {
                    b[(n - 1) as usize]
                } else {
                    b_neg[(-n) as usize]
                }
            }
        }
    }

    /// Off-diagonal a(n) = coupling between sites n and n+1.
    pub fn a_value(&self, n: i64) -> f64 {
        if self.inner.side == Side::HalfLine {
            assert!(n >= 0, "half-line bond index must be ≥ 0, got {n}");
        }
        match &self.inner.kind {
            Kind::Explicit { a0, a, a_neg, .. } => {
                if n == 0 {
                    *a0
                } else if n >= 1 {
                    if a.is_empty() {
                        1.0
                    } else {
                        a[(n - 1) as usize]
                    }
                } else {
                    if a_neg.is_empty() {
                        1.0
                    } else {
                        a_neg[(-n - 1) as usize]
                    }
                }
            }
            _ => 1.0,
        }
    }

    /// Snapshot of b(1..=n_max) (vec[i] = b(i+1)), cached and grown on demand.
    pub fn b_window(&self, n_max: usize) -> Result<Arc<Vec<f64>>> {
        if let Some(limit) = self.coefficient_limit() {
            if n_max > limit {
                return Err(Error::range(format!(
                    "requested b(1..={n_max}) but explicit operator ends at site {limit}"
                )));
            }
        }
        let mut guard = self.inner.caches.b_pos.lock().unwrap();
        if guard.len() < n_max {
            let target = n_max.max(guard.len() * 2).max(64);
            let target = self.coefficient_limit().map_or(target, |l| target.min(l));
            let mut v = Vec::with_capacity(target);
            v.extend_from_slice(&guard[..]);
            match &self.inner.kind {
                Kind::Fibonacci { lambda, reflected: false } => {
                    let word = self.fib_word(target)?;
                    for i in v.len()..target {
                        v.push(*lambda * word[i] as f64);
                    }
                }
                _ => {
                    for i in v.len()..target {
                        v.push(self.b_value((i + 1) as i64));
                    }
                }
            }
            *guard = Arc::new(v);
        }
        Ok(Arc::clone(&guard))
    }

    /// Snapshot of b(0), b(-1), …, b(-(count-1)) (vec[i] = b(-i)).
    pub fn b_window_neg(&self, count: usize) -> Result<Arc<Vec<f64>>> {
        if self.inner.side == Side::HalfLine {
            return Err(Error::range("half-line operator has no sites n ≤ 0".to_string()));
        }
        if let Some(limit) = self.coefficient_limit_neg() {
            if count > limit + 1 {
                return Err(Error::range(format!(
                    "requested b(0..=-{}) but operator ends at -{limit}",
                    count as i64 - 1
                )));
            }
        }
        let mut guard = self.inner.caches.b_neg.lock().unwrap();
        if guard.len() < count {
            let target = count.max(guard.len() * 2).max(64);
            let target = self.coefficient_limit_neg().map_or(target, |l| target.min(l + 1));
            let mut v = Vec::with_capacity(target);
            v.extend_from_slice(&guard[..]);
            for i in v.len()..target {
                v.push(self.b_value(-(i as i64)));
            }
            *guard = Arc::new(v);
        }
        Ok(Arc::clone(&guard))
    }

    /// a(0..=n_max) as a window, or None when a ≡ 1 on that range.
    pub fn a_window(&self, n_max: usize) -> Result<Option<Vec<f64>>> {
        match &self.inner.kind {
            Kind::Explicit { a0, a, .. } => {
                if a.is_empty() && *a0 == 1.0 {
                    return Ok(None);
                }
                if n_max >= 1 && a.len() < n_max {
                    return Err(Error::range(format!(
                        "requested a(0..={n_max}) but explicit operator has {} bonds",
                        a.len()
                    )));
                }
                let mut v = Vec::with_capacity(n_max + 1);
                v.push(*a0);
                v.extend_from_slice(&a[..n_max]);
                Ok(Some(v))
            }
            _ => Ok(None),
        }
    }

    /// Reflection about the (0,1) bond midpoint: site n ↦ 1−n.  The reflected
    /// operator has b̃(m) = b(1−m) and ã(m) = a(−m); minus-side lengths of the
    /// original operator are plus-side lengths of the reflection.
    pub fn reflect(&self) -> Result<JacobiOperator> {
        if self.inner.side != Side::WholeLine {
            return Err(Error::validation("only whole-line operators can be reflected"));
        }
        let kind = match &self.inner.kind {
            Kind::Free => Kind::Free,
            Kind::Random { w, seed, reflected } => {
                Kind::Random { w: *w, seed: *seed, reflected: !reflected }
            }
            Kind::Fibonacci { lambda, reflected } => {
                Kind::Fibonacci { lambda: *lambda, reflected: !reflected }
            }
            Kind::Explicit { a0, a, b, a_neg, b_neg } => {
                // b̃(m) for m ≥ 1 walks b(0), b(-1), … ; b̃(-i) walks b(i+1).
                let nb: Vec<f64> = b_neg.as_ref().clone();
                let nbn: Vec<f64> = b.as_ref().clone();
                // ã(m) = a(−m): ã(0) = a(0), ã(m≥1) = a_neg[m−1], ã(−i) = a(i).
                Kind::Explicit {
                    a0: *a0,
                    a: Arc::new(a_neg.as_ref().clone()),
                    b: Arc::new(nb),
                    a_neg: Arc::new(a.as_ref().clone()),
                    b_neg: Arc::new(nbn),
                }
            }
        };
        Ok(JacobiOperator {
            inner: Arc::new(Inner { side: Side::WholeLine, kind, caches: Caches::default() }),
        })
    }

    /// Interval certain to contain the ℓ² spectrum (Gershgorin).
    pub fn spectrum_window(&self) -> (f64, f64) {
        match &self.inner.kind {
            Kind::Free => (-2.0, 2.0),
            Kind::Random { w, .. } => (-2.0 - w / 2.0, 2.0 + w / 2.0),
            Kind::Fibonacci { lambda, .. } => {
                (-2.0 + lambda.min(0.0), 2.0 + lambda.max(0.0))
            }
            Kind::Explicit { a0, a, b, a_neg, b_neg } => {
                let bmin = b
                    .iter()
                    .chain(b_neg.iter())
                    .fold(f64::INFINITY, |m, &x| m.min(x))
                    .min(0.0);
                let bmax = b
                    .iter()
                    .chain(b_neg.iter())
                    .fold(f64::NEG_INFINITY, |m, &x| m.max(x))
                    .max(0.0);
                let amax = a
                    .iter()
                    .chain(a_neg.iter())
                    .chain(std::iter::once(a0))
                    .fold(1.0f64, |m, &x| m.max(x));
                (bmin - 2.0 * amax, bmax + 2.0 * amax)
            }
        }
    }

    fn fib_value(&self, n: i64) -> u8 {
        // V(0) = 0, V(-1) = 1, V(-n) = V(n-1) for n ≥ 2; V(n ≥ 1) from the word.
        let idx = match n {
            0 => return 0,
            -1 => return 1,
            n if n >= 1 => (n - 1) as usize,
            n => (-n - 2) as usize,
        };
        let word = self.fib_word(idx + 1).expect("fibonacci word generation");
        word[idx]
    }

    fn fib_word(&self, len: usize) -> Result<Arc<Vec<u8>>> {
        let mut guard = self.inner.caches.fib_word.lock().unwrap();
        if guard.len() < len {
            *guard = Arc::new(fibonacci::fib_word(len));
        }
        Ok(Arc::clone(&guard))
    }
}

impl std::fmt::Debug for JacobiOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "JacobiOperator({})", self.label())
    }
}

/// The two fundamental solutions u_0 (Dirichlet) and u_{π/2} at a real
/// energy, stored over sites 0..=n_max in scaled form.
#[derive(Clone, Debug)]
pub struct SolutionPair {
    pub energy: f64,
    u0: ScaledSeq,
    upi: ScaledSeq,
    a0: f64,
    a: Option<Arc<Vec<f64>>>,
}

/// Run both fundamental-solution recurrences up to site `n_max`.
pub fn solve_pair(op: &JacobiOperator, energy: f64, n_max: usize) -> Result<SolutionPair> {
    if !energy.is_finite() {
        return Err(Error::validation(format!("energy {energy} must be finite")));
    }
    if n_max < 1 {
        return Err(Error::validation("n_max must be ≥ 1"));
    }
    let b = op.b_window(n_max.saturating_sub(1))?;
    let a = op.a_window(n_max.saturating_sub(1))?.map(Arc::new);
    let a0 = op.a0();

    let mut u0 = ScaledSeq::with_capacity(n_max + 1);
    let mut upi = ScaledSeq::with_capacity(n_max + 1);
    // Boundary data u_θ(0) = sin θ, u_θ(1) = cos θ.
    let mut p0 = ScaledPair::new(0.0, 1.0);
    let mut ppi = ScaledPair::new(1.0, 0.0);
    u0.push(0.0, 0);
    u0.push(1.0, 0);
    upi.push(1.0, 0);
    upi.push(0.0, 0);

    for n in 1..n_max {
        // u(n+1) = [(E − b(n))·u(n) − a(n−1)·u(n−1)] / a(n)
        let (cc, cp) = match &a {
            None => (energy - b[n - 1], -1.0),
            Some(av) => {
                let an = av[n];
                ((energy - b[n - 1]) / an, -av[n - 1] / an)
            }
        };
        p0.step(cc, cp);
        ppi.step(cc, cp);
        u0.push(p0.cur, p0.exp);
        upi.push(ppi.cur, ppi.exp);
    }

    Ok(SolutionPair { energy, u0, upi, a0, a })
}

impl SolutionPair {
    /// Largest available site index.
    pub fn n_max(&self) -> usize {
        self.u0.len() - 1
    }

    pub fn u0_at(&self, n: usize) -> Scaled {
        self.u0.get(n)
    }

    pub fn upi_at(&self, n: usize) -> Scaled {
        self.upi.get(n)
    }

    /// u_θ(n) = cos θ·u_0(n) + sin θ·u_{π/2}(n).
    pub fn theta_at(&self, theta: f64, n: usize) -> Scaled {
        self.u0.get(n).mul_f64(theta.cos()).add(self.upi.get(n).mul_f64(theta.sin()))
    }

    fn norm_sq(&self, seq: &ScaledSeq, l: f64) -> Scaled {
        let (whole, frac) = crate::norms::split_length(l);
        assert!(whole + 1 + (frac > 0.0) as usize <= seq.len(), "solution shorter than L = {l}");
        let mut s = seq.norm_sq_range(1, whole + 1);
        if frac > 0.0 {
            s = s.add(seq.get(whole + 1).sq().mul_f64(frac));
        }
        s
    }

    /// ‖u_0‖²_L (sites counted from 1).
    pub fn norm_sq_u0(&self, l: f64) -> Scaled {
        self.norm_sq(&self.u0, l)
    }

    pub fn norm_sq_upi(&self, l: f64) -> Scaled {
        self.norm_sq(&self.upi, l)
    }

    /// ⟨u_0, u_{π/2}⟩_L.
    pub fn pair_u0_upi(&self, l: f64) -> Scaled {
        let (whole, frac) = crate::norms::split_length(l);
        assert!(whole + 1 + (frac > 0.0) as usize <= self.u0.len());
        let mut s = self.u0.dot_range(&self.upi, 1, whole + 1);
        if frac > 0.0 {
            s = s.add(self.u0.get(whole + 1).mul(self.upi.get(whole + 1)).mul_f64(frac));
        }
        s
    }

    /// ‖u_θ‖²_L.
    pub fn norm_sq_theta(&self, theta: f64, l: f64) -> Scaled {
        let (c, s) = (theta.cos(), theta.sin());
        let n00 = self.norm_sq_u0(l).mul_f64(c * c);
        let npp = self.norm_sq_upi(l).mul_f64(s * s);
        let cross = self.pair_u0_upi(l).mul_f64(2.0 * c * s);
        n00.add(npp).add(cross)
    }

    fn a_at(&self, n: usize) -> f64 {
        match &self.a {
            None => {
                if n == 0 {
                    self.a0
                } else {
                    1.0
                }
            }
            Some(av) => av[n],
        }
    }

    /// Wronskian a(n)[u_0(n+1)u_{π/2}(n) − u_0(n)u_{π/2}(n+1)]; constantly
    /// equal to a(0) for this solution pair, which the recurrence must
    /// preserve to rounding accuracy.
    pub fn wronskian(&self, n: usize) -> Scaled {
        let w = self
            .u0
            .get(n + 1)
            .mul(self.upi.get(n))
            .sub(self.u0.get(n).mul(self.upi.get(n + 1)));
        w.mul_f64(self.a_at(n))
    }

    /// Relative residual of the three-term recurrence at site n
    /// (|Hu − Eu| scaled by the magnitude of the largest term).
    pub fn recurrence_residual(&self, op: &JacobiOperator, n: usize) -> f64 {
        let e = Scaled::new(self.energy);
        let b = Scaled::new(op.b_value(n as i64));
        let res = |seq: &ScaledSeq| -> f64 {
            let lhs = seq
                .get(n + 1)
                .mul_f64(self.a_at(n))
                .add(seq.get(n - 1).mul_f64(self.a_at(n - 1)))
                .add(seq.get(n).mul(b));
            let rhs = seq.get(n).mul(e);
            let scale =
                if lhs.abs().cmp_abs(rhs.abs()).is_ge() { lhs.abs() } else { rhs.abs() };
            let diff = lhs.sub(rhs).abs();
            if scale.is_zero() {
                diff.to_f64()
            } else {
                diff.div(scale).to_f64()
            }
        };
        res(&self.u0).max(res(&self.upi))
    }
}

/// Transfer matrices Φ(n,E) = [[u_0(n+1), u_{π/2}(n+1)], [u_0(n), u_{π/2}(n)]]
/// for n = 1..=n_top, with cached operator norms and their prefix sums.
#[derive(Clone, Debug)]
pub struct TransferChain {
    pub energy: f64,
    pair: SolutionPair,
    op_norm_sq: Vec<Scaled>,
    prefix_op_sq: Vec<Scaled>,
    frob_sq: Vec<Scaled>,
}

pub fn transfer_chain(op: &JacobiOperator, energy: f64, n_top: usize) -> Result<TransferChain> {
    if n_top < 1 {
        return Err(Error::validation("transfer chain needs n_top ≥ 1"));
    }
    let pair = solve_pair(op, energy, n_top + 1)?;
    let mut op_norm_sq = Vec::with_capacity(n_top);
    let mut frob_sq = Vec::with_capacity(n_top);
    let mut prefix_op_sq = Vec::with_capacity(n_top);
    let mut acc = Scaled::ZERO;
    for n in 1..=n_top {
        let m = [
            [pair.u0_at(n + 1), pair.upi_at(n + 1)],
            [pair.u0_at(n), pair.upi_at(n)],
        ];
        let f = m[0][0].sq().add(m[0][1].sq()).add(m[1][0].sq()).add(m[1][1].sq());
        let det = m[0][0].mul(m[1][1]).sub(m[0][1].mul(m[1][0]));
        // σ_max² = (‖M‖²_F + √(‖M‖⁴_F − 4 det²)) / 2
        let disc = f.sq().sub(det.sq().mul_f64(4.0));
        let disc = if disc.mantissa() < 0.0 { Scaled::ZERO } else { disc };
        let s_max_sq = f.add(disc.sqrt()).mul_f64(0.5);
        op_norm_sq.push(s_max_sq);
        frob_sq.push(f);
        acc = acc.add(s_max_sq);
        prefix_op_sq.push(acc);
    }
    Ok(TransferChain { energy, pair, op_norm_sq, prefix_op_sq, frob_sq })
}

impl TransferChain {
    pub fn n_top(&self) -> usize {
        self.op_norm_sq.len()
    }

    pub fn pair(&self) -> &SolutionPair {
        &self.pair
    }

    pub fn matrix(&self, n: usize) -> [[Scaled; 2]; 2] {
        [
            [self.pair.u0_at(n + 1), self.pair.upi_at(n + 1)],
            [self.pair.u0_at(n), self.pair.upi_at(n)],
        ]
    }

    pub fn det(&self, n: usize) -> Scaled {
        let m = self.matrix(n);
        m[0][0].mul(m[1][1]).sub(m[0][1].mul(m[1][0]))
    }

    pub fn op_norm_sq(&self, n: usize) -> Scaled {
        self.op_norm_sq[n - 1]
    }

    pub fn frobenius_sq(&self, n: usize) -> Scaled {
        self.frob_sq[n - 1]
    }

    /// ‖Φ(E)‖²_L = Σ_{n=1}^{⌊L⌋−1} ‖Φ(n,E)‖² + (L−⌊L⌋)‖Φ(⌊L⌋,E)‖².
    pub fn cum_sq_norm(&self, l: f64) -> Scaled {
        let (whole, frac) = crate::norms::split_length(l);
        assert!(l >= 1.0, "transfer norm needs L ≥ 1");
        assert!(whole <= self.op_norm_sq.len(), "chain shorter than L = {l}");
        let mut s = if whole >= 2 { self.prefix_op_sq[whole - 2] } else { Scaled::ZERO };
        if frac > 0.0 {
            s = s.add(self.op_norm_sq[whole - 1].mul_f64(frac));
        }
        s
    }

    /// ‖Φ(1,E)⁻¹‖ (operator norm of the inverse 2×2 block).
    pub fn inv_norm_first(&self) -> f64 {
        let m = self.matrix(1);
        let det = self.det(1);
        // ‖M⁻¹‖ = σ_min⁻¹ = σ_max / |det|
        let f = m[0][0].sq().add(m[0][1].sq()).add(m[1][0].sq()).add(m[1][1].sq());
        let disc = f.sq().sub(det.sq().mul_f64(4.0));
        let disc = if disc.mantissa() < 0.0 { Scaled::ZERO } else { disc };
        let s_max = f.add(disc.sqrt()).mul_f64(0.5).sqrt();
        s_max.div(det.abs()).to_f64()
    }
}

/// Landauer resistance ρ(n,E) = ½[½·tr(Φᵀ(n,E)Φ(n,E)) − 1] ≥ 0 for
/// det Φ = ±1, vanishing exactly when Φ is orthogonal.
pub fn landauer_resistance(chain: &TransferChain, n: usize) -> f64 {
    0.5 * (0.5 * chain.frobenius_sq(n).to_f64() - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free_half() -> JacobiOperator {
        JacobiOperator::free(Side::HalfLine)
    }

    #[test]
    fn free_solutions_cycle_with_period_four() {
        // At E = 0: u(n+1) = −u(n−1), so u_0 = 0,1,0,−1,… and u_{π/2} = 1,0,−1,0,…
        let pair = solve_pair(&free_half(), 0.0, 12).unwrap();
        let u0_expect = [0.0, 1.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0, 0.0];
        let upi_expect = [1.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 1.0];
        for n in 0..=12 {
            assert_eq!(pair.u0_at(n).to_f64(), u0_expect[n], "u0({n})");
            assert_eq!(pair.upi_at(n).to_f64(), upi_expect[n], "upi({n})");
        }
        assert_eq!(pair.norm_sq_u0(4.0).to_f64(), 2.0);
        assert_eq!(pair.norm_sq_upi(4.0).to_f64(), 2.0);
        assert_eq!(pair.pair_u0_upi(4.0).to_f64(), 0.0);
    }

    #[test]
    fn wronskian_is_constant_for_random_coefficient_arrays() {
        let mut rng = crate::rng::SplitMix64::new(991);
        for _ in 0..20 {
            let n = 40;
            let b: Vec<f64> = (0..n).map(|_| rng.next_range(-2.0, 2.0)).collect();
            let a: Vec<f64> = (0..n - 1).map(|_| rng.next_range(0.3, 2.5)).collect();
            let op = JacobiOperator::explicit_half_line(b, Some(a)).unwrap();
            let e = rng.next_range(-3.0, 3.0);
            let pair = solve_pair(&op, e, n).unwrap();
            // W(m+1) − W(m) is one step's rounding, ~ε times that step's
            // cross-product magnitude; the drift it leaves behind persists
            // even after the solutions decay again, so the attainable
            // accuracy follows the running peak, not the local magnitude.
            let mut peak = 1.0f64;
            for m in 0..n - 1 {
                let w = pair.wronskian(m).to_f64();
                let cross = pair
                    .u0_at(m + 1)
                    .mul(pair.upi_at(m))
                    .abs()
                    .add(pair.u0_at(m).mul(pair.upi_at(m + 1)).abs())
                    .to_f64();
                peak = peak.max(op.a_value(m as i64) * cross);
                let tol = 4e-15 * (m as f64 + 1.0) * peak;
                assert!(
                    (w - op.a0()).abs() < tol,
                    "wronskian at {m} drifted: {w} (expected {}, tol {tol:.2e})",
                    op.a0()
                );
            }
        }
    }

    #[test]
    fn recurrence_residuals_stay_at_rounding_level() {
        // 100 random (operator, energy) pairs, including energies far outside
        // the spectrum where the solutions overflow f64 without rescaling.
        let mut rng = crate::rng::SplitMix64::new(5150);
        for trial in 0..100 {
            let op: JacobiOperator = match trial % 3 {
                0 => free_half(),
                1 => JacobiOperator::random_diagonal(rng.next_range(0.2, 4.0), rng.next_u64(), Side::HalfLine)
                    .unwrap(),
                _ => JacobiOperator::fibonacci(rng.next_range(0.5, 8.0), Side::HalfLine).unwrap(),
            };
            let e = rng.next_range(-6.0, 12.0);
            let n_max = 200 + (rng.next_u64() % 800) as usize;
            let pair = solve_pair(&op, e, n_max).unwrap();
            for &n in &[1usize, n_max / 3, n_max - 2] {
                let n = n.max(1);
                let r = pair.recurrence_residual(&op, n);
                assert!(r < 1e-10, "residual {r} at site {n} ({})", op.label());
            }
        }
    }

    #[test]
    fn solutions_overflowing_f64_keep_accurate_logs() {
        // E = 10 on the free operator: u(n+1) = 10u(n) − u(n−1) grows like
        // r^n, r = 5 + √24; f64 dies near n = 434 but the scaled pair tracks log growth.
        let pair = solve_pair(&free_half(), 10.0, 2000).unwrap();
        // u_0(n) = (r^n − r^{−n}) / (r − r^{−1})
        let r = 5.0 + 24f64.sqrt();
        let expected = 2000.0 * r.ln() - (r - 1.0 / r).ln();
        let got = pair.u0_at(2000).ln_abs();
        assert!((got - expected).abs() < 1e-6 * expected);
    }

    #[test]
    fn transfer_chain_dets_follow_the_off_diagonals() {
        let mut rng = crate::rng::SplitMix64::new(3117);
        let n = 30;
        let b: Vec<f64> = (0..n).map(|_| rng.next_range(-1.0, 1.0)).collect();
        let a: Vec<f64> = (0..n - 1).map(|_| rng.next_range(0.4, 2.0)).collect();
        let op = JacobiOperator::explicit_half_line(b, Some(a.clone())).unwrap();
        let chain = transfer_chain(&op, 0.7, n - 1).unwrap();
        for m in 1..n - 1 {
            let det = chain.det(m).to_f64();
            let expected = op.a0() / a[m - 1]; // det Φ(n) = a(0)/a(n)
            assert!((det - expected).abs() < 1e-12 * expected.abs().max(1.0), "det at {m}");
        }
    }

    #[test]
    fn free_transfer_norms_and_landauer() {
        // Free at E = 0: every Φ(n) is a rotation (norm 1, resistance 0) and
        // ‖Φ‖²_L = L − 1.
        let chain = transfer_chain(&free_half(), 0.0, 64).unwrap();
        for n in 1..=60 {
            assert!((chain.op_norm_sq(n).to_f64() - 1.0).abs() < 1e-14);
            assert!(landauer_resistance(&chain, n).abs() < 1e-14);
        }
        assert!((chain.cum_sq_norm(3.0).to_f64() - 2.0).abs() < 1e-14);
        assert!((chain.cum_sq_norm(10.5).to_f64() - 9.5).abs() < 1e-14);
        // Landauer is nonnegative once the potential is nontrivial.
        let op = JacobiOperator::fibonacci(2.0, Side::HalfLine).unwrap();
        let chain = transfer_chain(&op, 1.3, 50).unwrap();
        for n in 1..=49 {
            assert!(landauer_resistance(&chain, n) >= -1e-13);
        }
    }

    #[test]
    fn fibonacci_family_matches_substitution_word() {
        let op = JacobiOperator::fibonacci(3.0, Side::HalfLine).unwrap();
        let expect = [1u8, 0, 1, 1, 0, 1, 0, 1];
        for (i, &v) in expect.iter().enumerate() {
            assert_eq!(op.b_value(i as i64 + 1), 3.0 * v as f64, "V({})", i + 1);
        }
        // Whole-line symmetry: V(−n) = V(n−1) for n ≥ 2, V(−1) = 1, V(0) = 0.
        let wl = JacobiOperator::fibonacci(1.0, Side::WholeLine).unwrap();
        assert_eq!(wl.b_value(0), 0.0);
        assert_eq!(wl.b_value(-1), 1.0);
        for n in 2..40i64 {
            assert_eq!(wl.b_value(-n), wl.b_value(n - 1), "symmetry at n={n}");
        }
    }

    #[test]
    fn reflection_swaps_sides_and_is_an_involution() {
        let op = JacobiOperator::random_diagonal(1.5, 77, Side::WholeLine).unwrap();
        let r = op.reflect().unwrap();
        for n in -20..=20i64 {
            assert_eq!(r.b_value(n), op.b_value(1 - n), "b mismatch at {n}");
        }
        let rr = r.reflect().unwrap();
        for n in -20..=20i64 {
            assert_eq!(rr.b_value(n), op.b_value(n));
        }
    }

    #[test]
    fn validation_rejects_bad_explicit_arrays() {
        let zero_bond = OperatorSpec {
            family: FamilySpec::Explicit {
                b: vec![0.0, 0.0, 0.0],
                a: Some(vec![1.0, 0.0]),
                a0: None,
                b_neg: None,
                a_neg: None,
            },
            side: Side::HalfLine,
        };
        assert!(matches!(build_operator(&zero_bond), Err(Error::Validation(_))));

        let op = JacobiOperator::explicit_half_line(vec![0.1, 0.2, 0.3], None).unwrap();
        assert!(matches!(solve_pair(&op, 0.0, 50), Err(Error::Range(_))));
    }

    #[test]
    fn operator_spec_round_trips_through_json() {
        let spec = OperatorSpec {
            family: FamilySpec::Fibonacci { lambda: 8.0 },
            side: Side::HalfLine,
        };
        let s = serde_json::to_string(&spec).unwrap();
        let back: OperatorSpec = serde_json::from_str(&s).unwrap();
        let op = build_operator(&back).unwrap();
        assert_eq!(op.b_value(1), 8.0);
        // Unknown keys must be rejected.
        let bad = r#"{"family":"free","side":"half-line","extra":1}"#;
        assert!(serde_json::from_str::<OperatorSpec>(bad).is_err());
    }

    #[test]
    fn spectrum_window_contains_gershgorin_disks() {
        let op = JacobiOperator::fibonacci(10.0, Side::HalfLine).unwrap();
        assert_eq!(op.spectrum_window(), (-2.0, 12.0));
        let op = JacobiOperator::random_diagonal(2.0, 5, Side::HalfLine).unwrap();
        assert_eq!(op.spectrum_window(), (-3.0, 3.0));
    }
}
