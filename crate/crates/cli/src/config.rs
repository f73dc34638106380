//! Run configuration: strict JSON schema plus flag overrides.
//!
//! One canonical format: every object rejects unknown keys, so typos fail
//! loudly instead of silently running a default.  The resolved configuration
//! is re-serialized in canonical field order and hashed; the hash lands in
//! the CSV provenance header, which is what makes runs auditable.

use serde::{Deserialize, Serialize};
use wavebound::operator::OperatorSpec;
use wavebound::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    Linear,
    Log,
}

/// One sweep axis; `count = 1` collapses to the single point `start`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    pub spacing: Spacing,
}

impl GridSpec {
    pub fn singleton(x: f64) -> Self {
        GridSpec { start: x, stop: x, count: 1, spacing: Spacing::Linear }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if self.count == 0 {
            return Err(Error::validation(format!("grid `{name}` is empty (count = 0)")));
        }
        if !self.start.is_finite() || !self.stop.is_finite() {
            return Err(Error::validation(format!("grid `{name}` has non-finite endpoints")));
        }
        if self.spacing == Spacing::Log && (self.start <= 0.0 || self.stop <= 0.0) {
            return Err(Error::validation(format!(
                "grid `{name}`: log spacing needs positive endpoints"
            )));
        }
        if self.count > 1 && self.start == self.stop {
            return Err(Error::validation(format!(
                "grid `{name}`: count {} over a degenerate range",
                self.count
            )));
        }
        Ok(())
    }

    pub fn expand(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let n = self.count;
        let mut out = Vec::with_capacity(n);
        match self.spacing {
            Spacing::Linear => {
                let step = (self.stop - self.start) / (n - 1) as f64;
                for i in 0..n {
                    out.push(self.start + step * i as f64);
                }
            }
            Spacing::Log => {
                let (la, lb) = (self.start.ln(), self.stop.ln());
                let step = (lb - la) / (n - 1) as f64;
                for i in 0..n {
                    out.push((la + step * i as f64).exp());
                }
            }
        }
        out[n - 1] = self.stop;
        out
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<GridSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<GridSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time: Option<GridSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length: Option<GridSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Continued-fraction truncation tolerance for the m-function.
    #[serde(default = "default_m_tol")]
    pub m_tol: f64,
}

fn default_m_tol() -> f64 {
    wavebound::weyl::DEFAULT_M_TOL
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { m_tol: default_m_tol() }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
}

/// 2-D lattice description for the `lanczos` and `mdhld` experiments.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "family")]
pub enum LatticeSpec {
    Free { extent: usize },
    Random { extent: usize, w: f64, seed: u64 },
}

impl LatticeSpec {
    pub fn build(&self) -> Result<wavebound::multidim::Lattice2D> {
        match *self {
            LatticeSpec::Free { extent } => wavebound::multidim::Lattice2D::free(extent),
            LatticeSpec::Random { extent, w, seed } => {
                wavebound::multidim::Lattice2D::random(extent, w, seed)
            }
        }
    }
}

/// Experiment-specific scalar knobs.  All optional; each experiment
/// validates the subset it consumes.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// `profile`: resolvent (default) or propagate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub route: Option<String>,
    /// `hld`: solution (default) or transfer membership scale.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale_kind: Option<String>,
    /// `hld`/`ldb`/`exponents`: spectral-measure truncation depth.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atoms: Option<usize>,
    /// `ldb`: closed energy intervals forming the set S.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_intervals: Option<Vec<(f64, f64)>>,
    /// `exponents`: lambda (default), beta, or local.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    /// `exponents --kind beta`: profile threshold δ.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// `fib` / `verify`: coupling λ.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// `fib` / `verify --suite bands`: hierarchy depth.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bands: Option<usize>,
    /// `lanczos`: number of exported Jacobi sites.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// `verify`: suite name.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suite: Option<String>,
    /// `verify`: sample count for randomized suites.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// `verify --suite corsq`: trial count.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    /// `verify`: RNG seed for sample draws.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// `verify --suite keyit`: band-hierarchy level and n-range.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_lo: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_hi: Option<usize>,
}

/// The full, resolved run description.  Serialized back out in this field
/// order to compute the provenance hash.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub operator: Option<OperatorSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lattice: Option<LatticeSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub output: OutputPaths,
}

impl RunConfig {
    pub fn from_file(path: &std::path::Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::validation(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::validation(format!("config {}: {e}", path.display())))
    }

    /// Global validation: grids well-formed, tolerances positive.  The
    /// experiment validates presence of what it needs.
    pub fn validate(&self) -> Result<()> {
        for (name, g) in [
            ("energy", &self.grids.energy),
            ("epsilon", &self.grids.epsilon),
            ("time", &self.grids.time),
            ("length", &self.grids.length),
        ] {
            if let Some(g) = g {
                g.validate(name)?;
            }
        }
        if !(self.tolerances.m_tol > 0.0) {
            return Err(Error::validation(format!(
                "tolerances.m_tol = {} must be > 0",
                self.tolerances.m_tol
            )));
        }
        if let Some(d) = self.params.delta {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::validation(format!("params.delta = {d} must lie in (0,1)")));
            }
        }
        if let Some(iv) = &self.params.s_intervals {
            for &(lo, hi) in iv {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(Error::validation(format!("bad S interval [{lo}, {hi}]")));
                }
            }
        }
        Ok(())
    }

    /// Canonical serialization used for the provenance hash.  Output paths
    /// are excluded: renaming the destination must not change the hash of
    /// what was computed.
    pub fn canonical_json(&self) -> String {
        let mut hashed = self.clone();
        hashed.output = OutputPaths::default();
        serde_json::to_string(&hashed).expect("config serializes")
    }
}

/// Grid helpers shared by the experiments.

pub fn require_grid<'a>(g: &'a Option<GridSpec>, name: &str) -> Result<&'a GridSpec> {
    g.as_ref()
        .ok_or_else(|| Error::validation(format!("experiment needs the `{name}` grid")))
}

pub fn positive_grid(g: &GridSpec, name: &str) -> Result<Vec<f64>> {
    let v = g.expand();
    if v.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::validation(format!("grid `{name}` must be strictly positive")));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_expansion_hits_endpoints() {
        let g = GridSpec { start: 1.0, stop: 100.0, count: 5, spacing: Spacing::Log };
        let v = g.expand();
        assert_eq!(v.len(), 5);
        assert_eq!(v[0], 1.0);
        assert_eq!(v[4], 100.0);
        assert!((v[2] - 10.0).abs() < 1e-12);
        let lin = GridSpec { start: 2.0, stop: -2.0, count: 3, spacing: Spacing::Linear };
        assert_eq!(lin.expand(), vec![2.0, 0.0, -2.0]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = r#"{ "experiment": "scales", "grid": {} }"#;
        assert!(serde_json::from_str::<RunConfig>(bad).is_err());
        let bad_nested = r#"{ "grids": { "energy": { "start": 0, "stop": 1, "count": 2, "spacing": "linear", "step": 0.1 } } }"#;
        assert!(serde_json::from_str::<RunConfig>(bad_nested).is_err());
    }

    #[test]
    fn validation_rejects_bad_grids_and_tolerances() {
        let mut cfg = RunConfig::default();
        cfg.grids.time = Some(GridSpec { start: -5.0, stop: 1.0, count: 3, spacing: Spacing::Log });
        assert!(cfg.validate().is_err());
        cfg.grids.time = Some(GridSpec::singleton(1.0));
        cfg.tolerances.m_tol = 0.0;
        assert!(cfg.validate().is_err());
    }
}
