//! Experiment configuration: TOML or JSON files, resolved into core objects.
//!
//! Transform and tuple positions are 1-based in configs and reports; point
//! indices (permutation images, indicator supports) are 0-based.

use std::fmt;
use std::path::{Path, PathBuf};

use ergomax_core::averages::{DualTerm, SeminormSpec};
use ergomax_core::family::{BaseFamily, ShiftedPoly, TupleState};
use ergomax_core::finsys::{FiniteSystem, Observable};
use ergomax_core::polyalg::IntPoly;
use num_complex::Complex64;
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A configuration problem, with the file and key (or line) it refers to.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub location: String,
    pub message: String,
}

impl ConfigError {
    pub fn at(location: impl Into<String>, message: impl fmt::Display) -> Self {
        ConfigError {
            location: location.into(),
            message: message.to_string(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error at {}: {}", self.location, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKindConfig {
    Translation,
    Permutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub kind: SystemKindConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moduli: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shifts: Option<Vec<Vec<i64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perms: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

/// Polynomials as coefficient arrays: entry `k` multiplies `n^{k+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub polys: Vec<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rhos: Option<Vec<Vec<i64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_order: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "lowercase", deny_unknown_fields)]
pub enum NamedObservable {
    Character { xi: Vec<i64> },
    Constant { value: [f64; 2] },
    Indicator { points: Vec<usize> },
    Random {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

/// Either explicit `[re, im]` values per point or a named generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObservableSpec {
    Values(Vec<[f64; 2]>),
    Named(NamedObservable),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualConfig {
    pub transform: usize,
    pub level: usize,
    pub generator: ObservableSpec,
    pub iterate: Vec<i64>,
    #[serde(default)]
    pub offset: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    pub h: Option<u64>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_prime: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<Vec<Vec<i64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observable: Option<ObservableSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observables: Option<Vec<ObservableSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_family: Option<Vec<Vec<ObservableSpec>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duals: Option<Vec<DualConfig>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilyConfig>,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Parses by extension: `.json` as JSON, anything else as TOML.
pub fn parse_str(text: &str, path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let loc = path.display().to_string();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        serde_json::from_str(text).map_err(|e| {
            ConfigError::at(format!("{loc}:{}:{}", e.line(), e.column()), e)
        })
    } else {
        toml::from_str(text).map_err(|e| {
            let at = match e.span() {
                Some(span) => {
                    let line = text[..span.start].matches('\n').count() + 1;
                    let col = span.start - text[..span.start].rfind('\n').map_or(0, |p| p + 1) + 1;
                    format!("{loc}:{line}:{col}")
                }
                None => loc.clone(),
            };
            ConfigError::at(at, e.message())
        })
    }
}

pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::at(path.display().to_string(), e))?;
    parse_str(&text, path)
}

pub fn to_json(cfg: &ExperimentConfig) -> String {
    serde_json::to_string_pretty(cfg).expect("config serialises") + "\n"
}

fn one_based(v: usize, len: usize, key: &str) -> Result<usize, ConfigError> {
    if v == 0 || v > len {
        return Err(ConfigError::at(key, format!("index {v} outside 1..={len}")));
    }
    Ok(v - 1)
}

impl ExperimentConfig {
    pub fn system(&self) -> Result<FiniteSystem, ConfigError> {
        let sys = self
            .system
            .as_ref()
            .ok_or_else(|| ConfigError::at("system", "missing [system] table"))?;
        match sys.kind {
            SystemKindConfig::Translation => {
                let moduli = sys
                    .moduli
                    .as_ref()
                    .ok_or_else(|| ConfigError::at("system.moduli", "required for translation systems"))?;
                let shifts = sys
                    .shifts
                    .as_ref()
                    .ok_or_else(|| ConfigError::at("system.shifts", "required for translation systems"))?;
                if sys.perms.is_some() || sys.weights.is_some() {
                    return Err(ConfigError::at(
                        "system",
                        "translation systems take moduli and shifts only",
                    ));
                }
                for (i, a) in shifts.iter().enumerate() {
                    if a.len() != moduli.len() {
                        return Err(ConfigError::at(
                            format!("system.shifts[{i}]"),
                            format!("{} coordinates, expected {}", a.len(), moduli.len()),
                        ));
                    }
                }
                FiniteSystem::translation(moduli, shifts).map_err(|e| ConfigError::at("system", e))
            }
            SystemKindConfig::Permutation => {
                let perms = sys
                    .perms
                    .clone()
                    .ok_or_else(|| ConfigError::at("system.perms", "required for permutation systems"))?;
                FiniteSystem::permutation(perms, sys.weights.clone()).map_err(|e| ConfigError::at("system", e))
            }
        }
    }

    fn family_config(&self) -> Result<&FamilyConfig, ConfigError> {
        self.family
            .as_ref()
            .ok_or_else(|| ConfigError::at("family", "missing [family] table"))
    }

    pub fn base(&self) -> Result<BaseFamily, ConfigError> {
        let fam = self.family_config()?;
        let polys: Vec<IntPoly> = fam.polys.iter().map(|c| IntPoly::from_i64(c)).collect();
        BaseFamily::new(polys).map_err(|e| ConfigError::at("family.polys", e))
    }

    /// The configured tuple, or the identity tuple when neither `eta` nor `rhos` is given.
    pub fn tuple(&self) -> Result<TupleState, ConfigError> {
        let fam = self.family_config()?;
        let base = self.base()?;
        let l = base.len();
        let eta = match &fam.eta {
            Some(e) => e
                .iter()
                .enumerate()
                .map(|(k, &v)| one_based(v, l, &format!("family.eta[{k}]")))
                .collect::<Result<Vec<_>, _>>()?,
            None => (0..l).collect(),
        };
        let rhos = match &fam.rhos {
            Some(r) => r.iter().map(|c| IntPoly::from_i64(c)).collect(),
            None => base.polys().to_vec(),
        };
        TupleState::new(base, eta, rhos).map_err(|e| ConfigError::at("family", e))
    }

    /// Explicit class order, converted to 0-based positions.
    pub fn class_order(&self) -> Result<Option<Vec<Vec<usize>>>, ConfigError> {
        let fam = self.family_config()?;
        let l = fam.polys.len();
        fam.class_order
            .as_ref()
            .map(|order| {
                order
                    .iter()
                    .enumerate()
                    .map(|(c, class)| {
                        class
                            .iter()
                            .map(|&v| one_based(v, l, &format!("family.class_order[{c}]")))
                            .collect()
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn seed(&self) -> u64 {
        self.params.seed.unwrap_or(0)
    }

    pub fn observable(&self, spec: &ObservableSpec, sys: &FiniteSystem, key: &str, salt: u64) -> Result<Observable, ConfigError> {
        let n = sys.size();
        match spec {
            ObservableSpec::Values(v) => {
                if v.len() != n {
                    return Err(ConfigError::at(key, format!("{} values for {n} points", v.len())));
                }
                Ok(Observable::new(v.iter().map(|[re, im]| Complex64::new(*re, *im)).collect()))
            }
            ObservableSpec::Named(NamedObservable::Character { xi }) => {
                Observable::character(sys, xi).map_err(|e| ConfigError::at(key, e))
            }
            ObservableSpec::Named(NamedObservable::Constant { value }) => {
                Ok(Observable::constant(n, Complex64::new(value[0], value[1])))
            }
            ObservableSpec::Named(NamedObservable::Indicator { points }) => {
                if let Some(&x) = points.iter().find(|&&x| x >= n) {
                    return Err(ConfigError::at(key, format!("point {x} outside 0..{n}")));
                }
                Ok(Observable::indicator(n, points))
            }
            ObservableSpec::Named(NamedObservable::Random { seed }) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(self.seed().wrapping_add(salt)));
                Ok(Observable::new(
                    (0..n)
                        .map(|_| {
                            Complex64::from_polar(
                                rng.gen_range(0.0..1.0),
                                rng.gen_range(0.0..std::f64::consts::TAU),
                            )
                        })
                        .collect(),
                ))
            }
        }
    }

    pub fn single_observable(&self, sys: &FiniteSystem) -> Result<Observable, ConfigError> {
        let spec = self
            .params
            .observable
            .as_ref()
            .ok_or_else(|| ConfigError::at("params.observable", "required"))?;
        self.observable(spec, sys, "params.observable", 0)
    }

    pub fn observables(&self, sys: &FiniteSystem, len: usize) -> Result<Vec<Observable>, ConfigError> {
        let specs = self
            .params
            .observables
            .as_ref()
            .ok_or_else(|| ConfigError::at("params.observables", "required"))?;
        if specs.len() != len {
            return Err(ConfigError::at(
                "params.observables",
                format!("{} observables for a tuple of length {len}", specs.len()),
            ));
        }
        specs
            .iter()
            .enumerate()
            .map(|(k, s)| self.observable(s, sys, &format!("params.observables[{k}]"), k as u64))
            .collect()
    }

    pub fn test_family(&self, sys: &FiniteSystem) -> Result<Option<Vec<Vec<Observable>>>, ConfigError> {
        self.params
            .test_family
            .as_ref()
            .map(|fam| {
                fam.iter()
                    .enumerate()
                    .map(|(t, tuple)| {
                        tuple
                            .iter()
                            .enumerate()
                            .map(|(k, s)| {
                                self.observable(s, sys, &format!("params.test_family[{t}][{k}]"), (t * 64 + k) as u64)
                            })
                            .collect()
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn duals(&self, sys: &FiniteSystem) -> Result<Vec<DualTerm>, ConfigError> {
        let Some(duals) = &self.params.duals else {
            return Ok(Vec::new());
        };
        duals
            .iter()
            .enumerate()
            .map(|(k, d)| {
                let key = format!("params.duals[{k}]");
                if d.level == 0 {
                    return Err(ConfigError::at(format!("{key}.level"), "must be at least 1"));
                }
                let mut iterate = ShiftedPoly::from_poly(IntPoly::from_i64(&d.iterate));
                iterate.offset = d.offset.into();
                Ok(DualTerm {
                    transform: one_based(d.transform, sys.num_transforms(), &format!("{key}.transform"))?,
                    level: d.level,
                    generator: self.observable(&d.generator, sys, &format!("{key}.generator"), 1000 + k as u64)?,
                    iterate,
                })
            })
            .collect()
    }

    /// Either explicit `params.spec` vectors or `e_j^{×s}`.
    pub fn seminorm_spec(&self, sys: &FiniteSystem) -> Result<SeminormSpec, ConfigError> {
        let l = sys.num_transforms();
        if let Some(spec) = &self.params.spec {
            for (k, v) in spec.iter().enumerate() {
                if v.len() != l {
                    return Err(ConfigError::at(
                        format!("params.spec[{k}]"),
                        format!("{} entries for {l} transforms", v.len()),
                    ));
                }
            }
            return SeminormSpec::from_i64(spec).map_err(|e| ConfigError::at("params.spec", e));
        }
        let j = one_based(self.params.j.unwrap_or(1), l, "params.j")?;
        let s = self.params.s.ok_or_else(|| ConfigError::at("params.s", "required without params.spec"))?;
        if s == 0 {
            return Err(ConfigError::at("params.s", "box seminorms need s ≥ 1"));
        }
        SeminormSpec::unit(l, j, s).map_err(|e| ConfigError::at("params", e))
    }

    pub fn alphas(&self) -> Result<Vec<Ratio<i64>>, ConfigError> {
        let alphas = self
            .params
            .alphas
            .as_ref()
            .ok_or_else(|| ConfigError::at("params.alphas", "required"))?;
        alphas
            .iter()
            .enumerate()
            .map(|(k, a)| {
                let key = format!("params.alphas[{k}]");
                let (num, den) = match a.split_once('/') {
                    Some((p, q)) => (p.trim().parse::<i64>(), q.trim().parse::<i64>()),
                    None => (a.trim().parse::<i64>(), Ok(1)),
                };
                match (num, den) {
                    (Ok(_), Ok(0)) => Err(ConfigError::at(key, "zero denominator")),
                    (Ok(p), Ok(q)) => Ok(Ratio::new(p, q)),
                    _ => Err(ConfigError::at(key, format!("`{a}` is not a rational p/q"))),
                }
            })
            .collect()
    }
}
