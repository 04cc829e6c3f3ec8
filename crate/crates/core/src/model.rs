//! Physical parameters, noise rates and the two-level density-matrix state.
//!
//! Conventions: atomic units (ħ = 1). Level |0⟩ is the ground level and
//! `rho00` its population; `rho01 = ⟨0|ρ|1⟩` is the coherence.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack used when checking positivity of a numerically produced state.
pub const STATE_TOL: f64 = 1e-9;

/// Two-level system and carrier parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Resonance (transition) frequency.
    pub omega: f64,
    /// Dipole projection on the field polarization axis.
    pub mu: f64,
    /// Carrier frequency of the pulse.
    pub omega_p: f64,
}

impl SystemParams {
    /// Resonant carrier (`omega_p = omega`).
    pub fn new(omega: f64, mu: f64) -> Result<Self> {
        Self::with_carrier(omega, mu, omega)
    }

    pub fn with_carrier(omega: f64, mu: f64, omega_p: f64) -> Result<Self> {
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::domain("omega", "must be finite and > 0"));
        }
        if !(mu.is_finite() && mu != 0.0) {
            return Err(Error::domain("mu", "must be finite and nonzero"));
        }
        if !(omega_p.is_finite() && omega_p > 0.0) {
            return Err(Error::domain("omega_p", "must be finite and > 0"));
        }
        Ok(Self { omega, mu, omega_p })
    }

    /// Carrier period `2π/ω`.
    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega
    }
}

/// Raw Markovian noise rates together with every derived decay constant.
///
/// Construct through [`NoiseRates::new`] (or [`derive_rates`]); the derived
/// fields are always recomputed from `(gamma, big_gamma, nbar)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseRates {
    /// Dephasing rate γ.
    pub gamma: f64,
    /// Thermal-noise rate Γ.
    pub big_gamma: f64,
    /// Mean thermal occupation n̄.
    pub nbar: f64,
    /// Total coherence decay Γ̃ = γ + Γ(2n̄+1).
    pub gamma_total: f64,
    /// Γ1 = 2Γ(n̄+1).
    pub gamma1: f64,
    /// Γ2 = 2Γ(2n̄+1).
    pub gamma2: f64,
    /// γ̃ = Γ1/(2Γ̃), defined as 0 when Γ̃ = 0.
    pub gamma_ratio: f64,
    /// Γ̃1 = 2Γ1 + Γ2 − 2Γ̃.
    pub gamma_tilde1: f64,
    /// Γ̃2 = 2(Γ̃ − Γ2).
    pub gamma_tilde2: f64,
}

impl NoiseRates {
    pub fn new(gamma: f64, big_gamma: f64, nbar: f64) -> Result<Self> {
        for (name, v) in [("gamma", gamma), ("Gamma", big_gamma), ("nbar", nbar)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::domain(name, "must be finite and >= 0"));
            }
        }
        let gamma_total = gamma + big_gamma * (2.0 * nbar + 1.0);
        let gamma1 = 2.0 * big_gamma * (nbar + 1.0);
        let gamma2 = 2.0 * big_gamma * (2.0 * nbar + 1.0);
        let gamma_ratio = if gamma_total > 0.0 {
            gamma1 / (2.0 * gamma_total)
        } else {
            0.0
        };
        Ok(Self {
            gamma,
            big_gamma,
            nbar,
            gamma_total,
            gamma1,
            gamma2,
            gamma_ratio,
            gamma_tilde1: 2.0 * gamma1 + gamma2 - 2.0 * gamma_total,
            gamma_tilde2: 2.0 * (gamma_total - gamma2),
        })
    }

    /// Noise-free (unitary) dynamics.
    pub fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0).expect("zero rates are valid")
    }

    pub fn is_unitary(&self) -> bool {
        self.gamma_total == 0.0 && self.gamma1 == 0.0 && self.gamma2 == 0.0
    }

    /// Thermal fixed point of the ground population, `Γ1/Γ2 = (n̄+1)/(2n̄+1)`.
    pub fn thermal_population(&self) -> f64 {
        (self.nbar + 1.0) / (2.0 * self.nbar + 1.0)
    }

    /// λ(P) = γ̃ − P(Γ̃1 + PΓ̃2)/(2Γ̃); zero when Γ̃ = 0.
    pub fn lambda(&self, p: f64) -> f64 {
        if self.gamma_total > 0.0 {
            self.gamma_ratio
                - p * (self.gamma_tilde1 + p * self.gamma_tilde2) / (2.0 * self.gamma_total)
        } else {
            0.0
        }
    }
}

impl<'de> Deserialize<'de> for NoiseRates {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            gamma: f64,
            #[serde(rename = "Gamma")]
            big_gamma: f64,
            nbar: f64,
        }
        let raw = Raw::deserialize(d)?;
        NoiseRates::new(raw.gamma, raw.big_gamma, raw.nbar).map_err(serde::de::Error::custom)
    }
}

/// Builds [`NoiseRates`] from the raw rates.
pub fn derive_rates(gamma: f64, big_gamma: f64, nbar: f64) -> Result<NoiseRates> {
    NoiseRates::new(gamma, big_gamma, nbar)
}

/// Two-level density matrix stored as `(ρ00, Re ρ01, Im ρ01)`; `ρ11 = 1 − ρ00`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitState {
    pub rho00: f64,
    pub rho01_re: f64,
    pub rho01_im: f64,
}

impl QubitState {
    /// Validated constructor (exact bounds, no slack).
    pub fn new(rho00: f64, rho01: Complex64) -> Result<Self> {
        let s = Self::unchecked(rho00, rho01);
        s.check(0.0)?;
        Ok(s)
    }

    pub fn unchecked(rho00: f64, rho01: Complex64) -> Self {
        Self {
            rho00,
            rho01_re: rho01.re,
            rho01_im: rho01.im,
        }
    }

    /// State with ground population `p` and coherence `c·e^{iφ}`. Allows a
    /// few ulps of slack so that `c = √(p − p²)` builds a pure state.
    pub fn from_polar(p: f64, c: f64, phi: f64) -> Result<Self> {
        let s = Self::unchecked(p, Complex64::from_polar(c, phi));
        s.check(4.0 * f64::EPSILON)?;
        Ok(s)
    }

    pub fn ground() -> Self {
        Self::unchecked(1.0, Complex64::new(0.0, 0.0))
    }

    pub fn rho01(&self) -> Complex64 {
        Complex64::new(self.rho01_re, self.rho01_im)
    }

    pub fn coherence_sq(&self) -> f64 {
        self.rho01_re * self.rho01_re + self.rho01_im * self.rho01_im
    }

    pub fn coherence(&self) -> f64 {
        self.rho01().norm()
    }

    /// Tr ρ² = ρ00² + ρ11² + 2|ρ01|².
    pub fn purity(&self) -> f64 {
        let p = self.rho00;
        p * p + (1.0 - p) * (1.0 - p) + 2.0 * self.coherence_sq()
    }

    /// Amount by which the state violates `0 ≤ ρ00 ≤ 1` or
    /// `|ρ01|² ≤ ρ00(1−ρ00)`; zero for a valid state.
    pub fn positivity_violation(&self) -> f64 {
        let p = self.rho00;
        let below = (-p).max(0.0);
        let above = (p - 1.0).max(0.0);
        let coh = (self.coherence_sq() - p * (1.0 - p)).max(0.0);
        below.max(above).max(coh)
    }

    pub fn check(&self, tol: f64) -> Result<()> {
        if !(self.rho00.is_finite() && self.rho01_re.is_finite() && self.rho01_im.is_finite()) {
            return Err(Error::InfeasibleState(
                "non-finite density-matrix element".into(),
            ));
        }
        let v = self.positivity_violation();
        if v > tol {
            return Err(Error::InfeasibleState(format!(
                "density matrix not positive: violation {v:.3e} (rho00 = {}, |rho01|^2 = {})",
                self.rho00,
                self.coherence_sq()
            )));
        }
        Ok(())
    }
}

/// k = P(0) − P(0)² − C(0)², related to the initial purity by Tr ρ(0)² = 1 − 2k.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct MixednessConstant(f64);

impl MixednessConstant {
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn initial_purity(self) -> f64 {
        1.0 - 2.0 * self.0
    }

    /// Wraps a value already known to lie in `[0, 1/4]`, e.g. λ(P) for a
    /// steady-state design.
    pub fn from_value(k: f64) -> Result<Self> {
        if !(0.0..=0.25).contains(&k) {
            return Err(Error::InfeasibleState(format!(
                "mixedness constant {k} outside [0, 1/4]"
            )));
        }
        Ok(Self(k))
    }
}

/// Rounding slack allowed on `C0² ≤ P0 − P0²` before the state is rejected.
const MIXEDNESS_SLACK: f64 = 1e-15;

pub fn mixedness_constant(p0: f64, c0: f64) -> Result<MixednessConstant> {
    if !(0.0..=1.0).contains(&p0) {
        return Err(Error::domain("P0", "must lie in [0, 1]"));
    }
    if !(c0.is_finite() && c0 >= 0.0) {
        return Err(Error::domain("C0", "must be finite and >= 0"));
    }
    let k = p0 - p0 * p0 - c0 * c0;
    if k < -MIXEDNESS_SLACK {
        return Err(Error::InfeasibleState(format!(
            "initial coherence C0 = {c0} exceeds the purity bound sqrt(P0 - P0^2) = {}",
            (p0 - p0 * p0).sqrt()
        )));
    }
    Ok(MixednessConstant(k.clamp(0.0, 0.25)))
}
