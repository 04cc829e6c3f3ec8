//! Declarative experiment configuration (strict JSON) and the bundled
//! figure scenarios.

use serde::{Deserialize, Serialize};

use crate::coherence::CoherenceSolution;
use crate::error::{Error, Result};
use crate::model::{mixedness_constant, NoiseRates, QubitState, SystemParams};
use crate::profiles::{crossing_times, PhaseProfile, PopulationProfile};
use crate::synthesis::{NumeratorConvention, SynthesisOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub omega: f64,
    pub mu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub gamma: f64,
    #[serde(rename = "Gamma")]
    pub big_gamma: f64,
    pub nbar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(rename = "C0")]
    pub c0: f64,
    /// Must equal the profile's P(0) when given.
    #[serde(rename = "P0", default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<f64>,
    /// Must equal the profile's Φ(0) when given.
    #[serde(rename = "Phi0", default, skip_serializing_if = "Option::is_none")]
    pub phi0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PopulationConfig {
    Constant {
        #[serde(rename = "P")]
        p: f64,
    },
    SineSquared {
        #[serde(rename = "Pi")]
        pi: f64,
        #[serde(rename = "Pf")]
        pf: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhaseConfig {
    /// Φ = α·t; give `alpha` or the end value `Phi_f`.
    Linear {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
        #[serde(rename = "Phi_f", default, skip_serializing_if = "Option::is_none")]
        phi_f: Option<f64>,
    },
    Quadratic {
        #[serde(rename = "Phi_i")]
        phi_i: f64,
        #[serde(rename = "Phi_f")]
        phi_f: f64,
        t_vertex: f64,
        #[serde(
            rename = "Phi_vertex",
            default,
            skip_serializing_if = "Option::is_none"
        )]
        phi_vertex: Option<f64>,
    },
    /// `t_ref` defaults to the first population crossing.
    Tanh {
        #[serde(rename = "Phi_i")]
        phi_i: f64,
        #[serde(rename = "Phi_f")]
        phi_f: f64,
        beta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t_ref: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FrameConfig {
    #[default]
    Lab,
    Rwa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NumeratorConfig {
    #[default]
    Consistent,
    SwappedRates,
}

fn default_n_samples() -> usize {
    2001
}
fn default_n_grid() -> usize {
    crate::reachability::DEFAULT_GRID
}
fn default_n_t() -> usize {
    crate::reachability::DEFAULT_TIME_SAMPLES
}
fn default_n_points() -> usize {
    101
}
fn default_phase_tol() -> f64 {
    crate::profiles::DEFAULT_PHASE_TOL
}
fn default_tol_p() -> f64 {
    0.02
}
fn default_tol_phi() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    /// Lab-frame step; defaults to min(period/100, t_f/1e5).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// RWA step; defaults to t_f/1e4.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_rwa: Option<f64>,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default = "default_n_grid")]
    pub n_grid: usize,
    #[serde(default = "default_n_t")]
    pub n_t: usize,
    #[serde(default = "default_n_points")]
    pub n_points: usize,
    #[serde(default = "default_phase_tol")]
    pub phase_tol: f64,
    #[serde(rename = "tol_P", default = "default_tol_p")]
    pub tol_p: f64,
    #[serde(rename = "tol_Phi", default = "default_tol_phi")]
    pub tol_phi: f64,
    #[serde(default)]
    pub force: bool,
    #[serde(default)]
    pub numerator: NumeratorConfig,
    #[serde(default)]
    pub frame: FrameConfig,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all numerics fields have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
    /// Subset of `csv`, `pgm`; empty means all.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub formats: Vec<String>,
}

impl OutputsConfig {
    pub fn wants(&self, format: &str) -> bool {
        self.formats.is_empty() || self.formats.iter().any(|f| f == format)
    }
}

/// Parameter lists; the run is repeated over their Cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<f64>>,
    #[serde(rename = "Gamma", default, skip_serializing_if = "Option::is_none")]
    pub big_gamma: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nbar: Option<Vec<f64>>,
    #[serde(rename = "C0", default, skip_serializing_if = "Option::is_none")]
    pub c0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Free-text remarks on parameter choices; ignored by the solver.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub system: SystemConfig,
    pub noise: NoiseConfig,
    pub initial: InitialConfig,
    pub t_f: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<PopulationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<PhaseConfig>,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub outputs: OutputsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be finite and > 0")))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every field that does not need a population or phase profile.
    pub fn validate(&self) -> Result<()> {
        self.params()?;
        self.rates()?;
        positive("t_f", self.t_f)?;
        if !(self.initial.c0 >= 0.0 && self.initial.c0.is_finite()) {
            return Err(Error::Config("initial.C0 must be finite and >= 0".into()));
        }
        let n = &self.numerics;
        for (name, v) in [("numerics.dt", n.dt), ("numerics.dt_rwa", n.dt_rwa)] {
            if let Some(v) = v {
                positive(name, v)?;
            }
        }
        positive("numerics.phase_tol", n.phase_tol)?;
        positive("numerics.tol_P", n.tol_p)?;
        positive("numerics.tol_Phi", n.tol_phi)?;
        if n.n_samples < 2 || n.n_grid < 2 || n.n_points < 2 {
            return Err(Error::Config(
                "numerics.n_samples, n_grid and n_points must be >= 2".into(),
            ));
        }
        if n.n_t < crate::reachability::MIN_TIME_SAMPLES {
            return Err(Error::Config("numerics.n_t must be >= 100".into()));
        }
        for f in &self.outputs.formats {
            if f != "csv" && f != "pgm" {
                return Err(Error::Config(format!("unknown output format `{f}`")));
            }
        }
        if let Some(s) = &self.sweep {
            for (name, list) in [
                ("gamma", &s.gamma),
                ("Gamma", &s.big_gamma),
                ("nbar", &s.nbar),
                ("C0", &s.c0),
            ] {
                if list.as_ref().is_some_and(Vec::is_empty) {
                    return Err(Error::Config(format!("sweep.{name} is empty")));
                }
            }
            for (_, run) in self.expand_sweep() {
                run.rates()?;
            }
        }
        if let Some(p) = &self.population {
            self.build_population(p)?;
        }
        Ok(())
    }

    pub fn params(&self) -> Result<SystemParams> {
        let s = &self.system;
        SystemParams::with_carrier(s.omega, s.mu, s.omega_p.unwrap_or(s.omega)).map_err(config_err)
    }

    pub fn rates(&self) -> Result<NoiseRates> {
        let n = &self.noise;
        NoiseRates::new(n.gamma, n.big_gamma, n.nbar).map_err(config_err)
    }

    /// One config per point of the sweep grid (just `self` without a sweep),
    /// each labelled by its overridden values.
    pub fn expand_sweep(&self) -> Vec<(String, ExperimentConfig)> {
        let Some(s) = &self.sweep else {
            return vec![(String::new(), self.clone())];
        };
        let mut runs = vec![(
            String::new(),
            ExperimentConfig {
                sweep: None,
                ..self.clone()
            },
        )];
        type Setter = fn(&mut ExperimentConfig, f64);
        let axes: [(&str, &Option<Vec<f64>>, Setter); 4] = [
            ("gamma", &s.gamma, |c, v| c.noise.gamma = v),
            ("Gamma", &s.big_gamma, |c, v| c.noise.big_gamma = v),
            ("nbar", &s.nbar, |c, v| c.noise.nbar = v),
            ("C0", &s.c0, |c, v| c.initial.c0 = v),
        ];
        for (name, values, set) in axes {
            let Some(values) = values else { continue };
            runs = runs
                .into_iter()
                .flat_map(|(label, cfg)| {
                    values.iter().map(move |&v| {
                        let mut c = cfg.clone();
                        set(&mut c, v);
                        let sep = if label.is_empty() { "" } else { "_" };
                        (format!("{label}{sep}{name}={v}"), c)
                    })
                })
                .collect();
        }
        runs
    }

    fn build_population(&self, p: &PopulationConfig) -> Result<PopulationProfile> {
        let profile = match *p {
            PopulationConfig::Constant { p } => PopulationProfile::constant(p, self.t_f),
            PopulationConfig::SineSquared { pi, pf } => {
                PopulationProfile::sine_squared(pi, pf, self.t_f)
            }
        }
        .map_err(config_err)?;
        if let Some(p0) = self.initial.p0 {
            if (p0 - profile.initial()).abs() > 1e-12 {
                return Err(Error::Config(format!(
                    "initial.P0 = {p0} disagrees with the population profile (P(0) = {})",
                    profile.initial()
                )));
            }
        }
        Ok(profile)
    }

    pub fn population(&self) -> Result<PopulationProfile> {
        let p = self
            .population
            .as_ref()
            .ok_or_else(|| Error::Config("missing `population` section".into()))?;
        self.build_population(p)
    }

    pub fn phase(&self) -> Result<PhaseProfile> {
        let ph = self
            .phase
            .as_ref()
            .ok_or_else(|| Error::Config("missing `phase` section".into()))?;
        let t_f = self.t_f;
        let profile = match *ph {
            PhaseConfig::Linear { alpha, phi_f } => match (alpha, phi_f) {
                (Some(a), None) => PhaseProfile::linear(a, t_f),
                (None, Some(f)) => PhaseProfile::linear(f / t_f, t_f),
                _ => {
                    return Err(Error::Config(
                        "linear phase needs exactly one of alpha, Phi_f".into(),
                    ))
                }
            },
            PhaseConfig::Quadratic {
                phi_i,
                phi_f,
                t_vertex,
                phi_vertex,
            } => PhaseProfile::quadratic(phi_i, phi_f, t_vertex, phi_vertex, t_f),
            PhaseConfig::Tanh {
                phi_i,
                phi_f,
                beta,
                t_ref,
            } => {
                let t_ref = match t_ref {
                    Some(t) => t,
                    None => {
                        let pop = self.population()?;
                        *crossing_times(&pop, 1e-9).times().first().ok_or_else(|| {
                            Error::Config(
                                "tanh phase without t_ref needs a population crossing".into(),
                            )
                        })?
                    }
                };
                PhaseProfile::tanh(phi_i, phi_f, beta, t_ref, t_f)
            }
        }
        .map_err(config_err)?;
        if let Some(phi0) = self.initial.phi0 {
            let actual = profile.value_and_rate(0.0).0;
            if (phi0 - actual).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "initial.Phi0 = {phi0} disagrees with the phase profile (Phi(0) = {actual})"
                )));
            }
        }
        Ok(profile)
    }

    pub fn synthesis_options(&self) -> SynthesisOptions {
        SynthesisOptions {
            phase_tol: self.numerics.phase_tol,
            force: self.numerics.force,
            convention: match self.numerics.numerator {
                NumeratorConfig::Consistent => NumeratorConvention::Consistent,
                NumeratorConfig::SwappedRates => NumeratorConvention::SwappedRates,
            },
        }
    }

    pub fn coherence(&self) -> Result<CoherenceSolution> {
        let pop = self.population()?;
        mixedness_constant(pop.initial(), self.initial.c0)?;
        CoherenceSolution::new(pop, self.rates()?, self.initial.c0)
    }

    /// ρ(0) with P(0), C0 and Φ(0) from the profiles.
    pub fn initial_state(&self) -> Result<QubitState> {
        let pop = self.population()?;
        let phi0 = self.phase()?.value_and_rate(0.0).0;
        QubitState::from_polar(pop.initial(), self.initial.c0, phi0)
    }

    pub fn lab_dt(&self) -> Result<f64> {
        let params = self.params()?;
        Ok(self
            .numerics
            .dt
            .unwrap_or_else(|| crate::propagate::default_lab_dt(&params, self.t_f)))
    }

    pub fn rwa_dt(&self) -> f64 {
        self.numerics
            .dt_rwa
            .unwrap_or_else(|| crate::propagate::default_rwa_dt(self.t_f))
    }
}

/// Bundled figure scenarios by number.
pub fn figure_json(n: u32) -> Option<&'static str> {
    Some(match n {
        1 => include_str!("../configs/fig1.json"),
        2 => include_str!("../configs/fig2.json"),
        3 => include_str!("../configs/fig3.json"),
        4 => include_str!("../configs/fig4.json"),
        5 => include_str!("../configs/fig5.json"),
        6 => include_str!("../configs/fig6.json"),
        7 => include_str!("../configs/fig7.json"),
        8 => include_str!("../configs/fig8.json"),
        9 => include_str!("../configs/fig9.json"),
        _ => return None,
    })
}

pub const FIGURES: [u32; 9] = [1, 2, 3, 4, 5, 6, 7, 8, 9];

/// Figures whose configs describe a tracking run (population and phase).
pub const TRACKING_FIGURES: [u32; 4] = [2, 5, 6, 8];

pub fn figure(n: u32) -> Result<ExperimentConfig> {
    let text = figure_json(n).ok_or_else(|| Error::Config(format!("no bundled figure {n}")))?;
    ExperimentConfig::from_json(text)
}
