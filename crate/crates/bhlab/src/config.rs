//! Experiment configuration: a TOML schema with nested sections, validated
//! into the domain types. Schema violations are reported with field paths.

use crate::bounds::BoundMode;
use crate::fock::{FockBasis, Sector};
use crate::hamiltonian::{Interaction, ModelSpec};
use crate::lattice::Lattice;
use crate::propagator::{PropagatorSettings, StateEnsemble};
use crate::states;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{field}: {message}")]
    Field { field: String, message: String },
}

impl ConfigError {
    pub fn field(field: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Field {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub lattice: LatticeSection,
    pub sector: SectorSection,
    pub model: ModelSection,
    #[serde(default)]
    pub state: StateSection,
    #[serde(default)]
    pub observables: Option<ObservablesSection>,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub tolerances: ToleranceSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub bounds: Option<BoundsSection>,
    #[serde(default)]
    pub badstate: Option<BadStateSection>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub l: usize,
    pub d: usize,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SectorSection {
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub cap: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_one")]
    pub j: f64,
    /// One of: power_p, power_p_shifted, custom_table, none.
    pub interaction: String,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default = "default_one")]
    pub u: f64,
    #[serde(default)]
    pub mu: f64,
    #[serde(default)]
    pub table: Option<Vec<f64>>,
    /// Auxiliary-interaction envelope parameters used by the moment bound.
    #[serde(default)]
    pub c_wtilde: f64,
    #[serde(default = "default_one")]
    pub eps: f64,
}

fn default_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct StateSection {
    /// One of: mott_uniform, mott_pattern, strip_superposition, bad_state,
    /// mott_pair, mott_superposition, mott_evolved.
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub pattern: Option<Vec<u32>>,
    #[serde(default)]
    pub pattern_b: Option<Vec<u32>>,
    /// Relative phase (degrees) between the two patterns of `mott_pair`.
    #[serde(default)]
    pub phase_deg: f64,
    /// Components of `mott_superposition` with their phases (degrees).
    #[serde(default)]
    pub patterns: Option<Vec<Vec<u32>>>,
    #[serde(default)]
    pub phases_deg: Option<Vec<f64>>,
    /// Pre-evolution time for `mott_evolved`.
    #[serde(default)]
    pub pre_time: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ObservablesSection {
    pub o: ObservableSpec,
    pub otilde: ObservableSpec,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSpec {
    /// One of: vacancy (Pi_{n=0}), occupation_eq, occupation_le,
    /// number_capped (n Pi_{n<=q}), phase (b + b^dagger, capped bases only).
    pub kind: String,
    pub site: usize,
    #[serde(default)]
    pub level: Option<u32>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default)]
    pub times: Vec<f64>,
    #[serde(default)]
    pub distances: Vec<usize>,
    #[serde(default)]
    pub qbar: Vec<u32>,
    #[serde(default)]
    pub sites: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSection {
    #[serde(default = "default_step_tol")]
    pub step: f64,
    #[serde(default = "default_drift_tol")]
    pub energy_drift: f64,
    #[serde(default = "default_slope_tol")]
    pub slope: f64,
    #[serde(default = "default_psd_tol")]
    pub psd: f64,
    #[serde(default = "default_quad_tol")]
    pub quadrature: f64,
}

fn default_step_tol() -> f64 {
    1e-10
}
fn default_drift_tol() -> f64 {
    1e-8
}
fn default_slope_tol() -> f64 {
    0.3
}
fn default_psd_tol() -> f64 {
    1e-9
}
fn default_quad_tol() -> f64 {
    1e-6
}

impl Default for ToleranceSection {
    fn default() -> Self {
        ToleranceSection {
            step: default_step_tol(),
            energy_drift: default_drift_tol(),
            slope: default_slope_tol(),
            psd: default_psd_tol(),
            quadrature: default_quad_tol(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// "trace", "expect", or "both".
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_dense_threshold")]
    pub dense_threshold: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub samples: Option<usize>,
}

fn default_mode() -> String {
    "both".into()
}
fn default_dense_threshold() -> usize {
    4096
}
fn default_seed() -> u64 {
    1
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            mode: default_mode(),
            dense_threshold: default_dense_threshold(),
            seed: default_seed(),
            samples: None,
        }
    }
}

/// Parameters for the `bounds` evaluator subcommand.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    pub d: usize,
    pub p: f64,
    #[serde(default = "default_one")]
    pub j_bar: f64,
    #[serde(default = "default_one")]
    pub gamma: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub t: Vec<f64>,
    #[serde(default)]
    pub r: Vec<f64>,
    #[serde(default = "default_one")]
    pub calibration: f64,
    /// Also report the alternate trace velocity exponent.
    #[serde(default)]
    pub alternate_velocity: bool,
}

fn default_k() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BadStateSection {
    pub ell: usize,
    #[serde(default = "default_gamma0")]
    pub gamma0: f64,
}

fn default_gamma0() -> f64 {
    0.5
}

impl ExperimentConfig {
    pub fn from_path(path: &std::path::Path) -> Result<ExperimentConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        ExperimentConfig::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<ExperimentConfig, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.lattice.l < 2 {
            return Err(ConfigError::field("lattice.l", "side length must be >= 2"));
        }
        if self.lattice.d < 1 {
            return Err(ConfigError::field("lattice.d", "dimension must be >= 1"));
        }
        match (self.sector.n, self.sector.cap) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::field("sector", "give exactly one of n or cap"));
            }
            (None, None) => {
                return Err(ConfigError::field("sector", "give one of n or cap"));
            }
            _ => {}
        }
        match self.model.interaction.as_str() {
            "power_p" | "power_p_shifted" => {
                if self.model.p.is_none() {
                    return Err(ConfigError::field("model.p", "power interactions need p"));
                }
            }
            "custom_table" => {
                if self.model.table.is_none() {
                    return Err(ConfigError::field("model.table", "custom_table needs a table"));
                }
            }
            "none" => {}
            other => {
                return Err(ConfigError::field(
                    "model.interaction",
                    format!("unknown interaction '{other}'"),
                ));
            }
        }
        if let Some(p) = &self.state.preset {
            let known = [
                "mott_uniform",
                "mott_pattern",
                "strip_superposition",
                "bad_state",
                "mott_pair",
                "mott_superposition",
                "mott_evolved",
            ];
            if !known.contains(&p.as_str()) {
                return Err(ConfigError::field(
                    "state.preset",
                    format!("unknown preset '{p}'"),
                ));
            }
        }
        match self.run.mode.as_str() {
            "trace" | "expect" | "both" => {}
            other => {
                return Err(ConfigError::field(
                    "run.mode",
                    format!("mode must be trace, expect, or both, got '{other}'"),
                ));
            }
        }
        Ok(())
    }

    pub fn sector(&self) -> Sector {
        match (self.sector.n, self.sector.cap) {
            (Some(n), None) => Sector::FixedN(n),
            (None, Some(c)) => Sector::Capped(c),
            _ => unreachable!("validated"),
        }
    }

    pub fn lattice(&self) -> Result<Lattice, ConfigError> {
        Lattice::torus(self.lattice.l, self.lattice.d)
            .map_err(|e| ConfigError::field("lattice", e.to_string()))
    }

    pub fn model_spec(&self) -> Result<ModelSpec, ConfigError> {
        let interaction = match self.model.interaction.as_str() {
            "power_p" => Interaction::Power {
                p: self.model.p.unwrap(),
                u: self.model.u,
                mu: self.model.mu,
            },
            "power_p_shifted" => Interaction::ShiftedPower {
                p: self.model.p.unwrap(),
                u: self.model.u,
                mu: self.model.mu,
            },
            "custom_table" => Interaction::Table(self.model.table.clone().unwrap()),
            "none" => Interaction::None,
            _ => unreachable!("validated"),
        };
        Ok(ModelSpec::uniform(self.model.j, interaction))
    }

    pub fn settings(&self) -> PropagatorSettings {
        PropagatorSettings {
            step_tolerance: self.tolerances.step,
            ..Default::default()
        }
    }

    pub fn modes(&self) -> Vec<BoundMode> {
        match self.run.mode.as_str() {
            "trace" => vec![BoundMode::Trace],
            "expect" => vec![BoundMode::Expectation],
            _ => vec![BoundMode::Trace, BoundMode::Expectation],
        }
    }

    /// Build the configured initial state.
    pub fn build_state(
        &self,
        basis: &FockBasis,
        lat: &Lattice,
    ) -> Result<StateEnsemble, ConfigError> {
        let preset = self.state.preset.as_deref().unwrap_or("mott_uniform");
        let err = |m: String| ConfigError::field("state", m);
        match preset {
            "mott_uniform" => {
                let n = match self.sector() {
                    Sector::FixedN(n) => n,
                    Sector::Capped(_) => {
                        return Err(err("mott_uniform needs a fixed-N sector".into()))
                    }
                };
                let sites = basis.n_sites();
                if n % sites != 0 {
                    return Err(err(format!(
                        "uniform fill needs N divisible by {sites}, got {n}"
                    )));
                }
                let fill = (n / sites) as u32;
                states::mott(basis, &vec![fill; sites]).map_err(|e| err(e.to_string()))
            }
            "mott_pattern" => {
                let pattern = self
                    .state
                    .pattern
                    .as_ref()
                    .ok_or_else(|| err("mott_pattern needs state.pattern".into()))?;
                states::mott(basis, pattern).map_err(|e| err(e.to_string()))
            }
            "strip_superposition" => {
                states::strip_superposition(basis, lat).map_err(|e| err(e.to_string()))
            }
            "bad_state" => {
                let b = self
                    .badstate
                    .as_ref()
                    .ok_or_else(|| err("bad_state needs a [badstate] section".into()))?;
                let params = states::BadStateParams::new(lat.side(), b.ell, b.gamma0)
                    .map_err(|e| err(e.to_string()))?;
                let spec = self.model_spec()?;
                states::bad_state(basis, lat, &params, &spec, &self.settings(), 5_000_000)
                    .map_err(|e| err(e.to_string()))
            }
            "mott_pair" => {
                let a = self
                    .state
                    .pattern
                    .as_ref()
                    .ok_or_else(|| err("mott_pair needs state.pattern".into()))?;
                let b = self
                    .state
                    .pattern_b
                    .as_ref()
                    .ok_or_else(|| err("mott_pair needs state.pattern_b".into()))?;
                let ia = basis
                    .index_of(a)
                    .ok_or_else(|| err("state.pattern not in the basis".into()))?;
                let ib = basis
                    .index_of(b)
                    .ok_or_else(|| err("state.pattern_b not in the basis".into()))?;
                if ia == ib {
                    return Err(err("mott_pair patterns must differ".into()));
                }
                let phase = num_complex::Complex64::from_polar(
                    1.0,
                    self.state.phase_deg.to_radians(),
                );
                let amp = num_complex::Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                let mut v = vec![num_complex::Complex64::new(0.0, 0.0); basis.dim()];
                v[ia] = amp;
                v[ib] = amp * phase;
                StateEnsemble::pure(v).map_err(|e| err(e.to_string()))
            }
            "mott_superposition" => {
                let patterns = self
                    .state
                    .patterns
                    .as_ref()
                    .ok_or_else(|| err("mott_superposition needs state.patterns".into()))?;
                let phases = self
                    .state
                    .phases_deg
                    .as_ref()
                    .ok_or_else(|| err("mott_superposition needs state.phases_deg".into()))?;
                if patterns.len() != phases.len() || patterns.len() < 2 {
                    return Err(err("patterns and phases_deg must match, length >= 2".into()));
                }
                let amp = 1.0 / (patterns.len() as f64).sqrt();
                let mut v = vec![num_complex::Complex64::new(0.0, 0.0); basis.dim()];
                for (pat, deg) in patterns.iter().zip(phases) {
                    let idx = basis
                        .index_of(pat)
                        .ok_or_else(|| err(format!("pattern {pat:?} not in the basis")))?;
                    if v[idx] != num_complex::Complex64::new(0.0, 0.0) {
                        return Err(err("superposition patterns must be distinct".into()));
                    }
                    v[idx] = num_complex::Complex64::from_polar(amp, deg.to_radians());
                }
                StateEnsemble::pure(v).map_err(|e| err(e.to_string()))
            }
            "mott_evolved" => {
                let pattern = self
                    .state
                    .pattern
                    .as_ref()
                    .ok_or_else(|| err("mott_evolved needs state.pattern".into()))?;
                let rho = states::mott(basis, pattern).map_err(|e| err(e.to_string()))?;
                let spec = self.model_spec()?;
                let h = crate::hamiltonian::assemble(basis, lat, &spec)
                    .map_err(|e| err(e.to_string()))?;
                rho.evolve(&h, self.state.pre_time, &self.settings())
                    .map_err(|e| err(e.to_string()))
            }
            other => Err(err(format!("unknown preset '{other}'"))),
        }
    }

    /// Build a configured observable.
    pub fn build_observable(
        &self,
        basis: &FockBasis,
        spec: &ObservableSpec,
        field: &str,
    ) -> Result<crate::fock::SparseOperator, ConfigError> {
        let err = |m: String| ConfigError::field(field, m);
        if spec.site >= basis.n_sites() {
            return Err(err(format!("site {} out of range", spec.site)));
        }
        match spec.kind.as_str() {
            "vacancy" => Ok(basis.projector_eq(spec.site, 0)),
            "occupation_eq" => {
                let m = spec.level.ok_or_else(|| err("occupation_eq needs level".into()))?;
                Ok(basis.projector_eq(spec.site, m))
            }
            "occupation_le" => {
                let q = spec.level.ok_or_else(|| err("occupation_le needs level".into()))?;
                Ok(basis.projector_le(spec.site, q))
            }
            "number_capped" => {
                let q = spec.level.ok_or_else(|| err("number_capped needs level".into()))?;
                let n = basis.number_operator(spec.site);
                let p = basis.projector_le(spec.site, q);
                Ok(n.matmul(&p))
            }
            "phase" => {
                let cap = match basis.sector() {
                    Sector::Capped(c) => c as u32,
                    Sector::FixedN(_) => {
                        return Err(err(
                            "phase observables need a capped basis (they change N)".into(),
                        ))
                    }
                };
                let mut trip = Vec::new();
                for (i, s) in basis.states().iter().enumerate() {
                    if s[spec.site] < cap {
                        let mut up = s.clone();
                        up[spec.site] += 1;
                        if let Some(j) = basis.index_of(&up) {
                            let amp = ((s[spec.site] + 1) as f64).sqrt();
                            trip.push((j, i, num_complex::Complex64::new(amp, 0.0)));
                            trip.push((i, j, num_complex::Complex64::new(amp, 0.0)));
                        }
                    }
                }
                Ok(crate::fock::SparseOperator::from_triplets(basis.dim(), trip, true))
            }
            other => Err(err(format!("unknown observable kind '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[lattice]
l = 4
d = 1

[sector]
n = 4

[model]
j = 1.0
interaction = "power_p"
p = 4.0
"#;

    #[test]
    fn parses_minimal_config() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.lattice.l, 4);
        assert_eq!(cfg.sector(), Sector::FixedN(4));
        assert_eq!(cfg.run.dense_threshold, 4096);
        let lat = cfg.lattice().unwrap();
        let basis = FockBasis::build(&lat, cfg.sector()).unwrap();
        let rho = cfg.build_state(&basis, &lat).unwrap();
        assert_eq!(rho.members().len(), 1);
    }

    #[test]
    fn reports_field_paths() {
        let bad = MINIMAL.replace("interaction = \"power_p\"", "interaction = \"quartic\"");
        let e = ExperimentConfig::from_toml(&bad).unwrap_err();
        assert!(e.to_string().contains("model.interaction"), "{e}");

        let bad = MINIMAL.replace("n = 4", "");
        let e = ExperimentConfig::from_toml(&bad).unwrap_err();
        assert!(e.to_string().contains("sector"), "{e}");
    }

    #[test]
    fn roundtrips_through_toml() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let text = toml::to_string(&cfg).unwrap();
        let again = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.lattice.l, again.lattice.l);
        assert_eq!(cfg.model.j, again.model.j);
    }

    #[test]
    fn observables_and_q0() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let lat = cfg.lattice().unwrap();
        let basis = FockBasis::build(&lat, cfg.sector()).unwrap();
        let ob = cfg
            .build_observable(
                &basis,
                &ObservableSpec {
                    kind: "vacancy".into(),
                    site: 0,
                    level: None,
                },
                "observables.o",
            )
            .unwrap();
        assert_eq!(basis.observable_block_width(&ob, &[0]).unwrap(), 0);
    }
}
