//! Coherence modulus C(t) implied by a population prescription.
//!
//! C² obeys `d/dt C² = (1 − 2P)(Ṗ + Γ2·P − Γ1) − 2Γ̃·C²`. Its solution is
//!
//! ```text
//! C² = (P − P²) + e^{−2Γ̃t}(γ̃ − k) − γ̃ + e^{−2Γ̃t}[Γ̃1·I1(t) + Γ̃2·I2(t)]
//! I1 = ∫₀ᵗ P e^{2Γ̃s} ds,   I2 = ∫₀ᵗ P² e^{2Γ̃s} ds
//! ```
//!
//! Internally the integrals are carried pre-multiplied by `e^{−2Γ̃t}` so that
//! nothing overflows for long horizons.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{mixedness_constant, MixednessConstant, NoiseRates};
use crate::profiles::{clamp_to_horizon, ClosedForm, Population};
use crate::quadrature;

/// Absolute slack on min C² separating infeasibility from rounding dust.
pub const FEAS_TOL: f64 = 1e-12;

/// Below this value of Γ̃·t, `f1` switches to its Taylor expansion.
pub const SERIES_THRESHOLD: f64 = 1e-6;

/// Below this value of (π/t_f)·t the cosine integrals are summed as a power
/// series; the closed forms lose digits to cancellation there.
const COSINE_SERIES_THRESHOLD: f64 = 0.5;

/// Grid used to locate min C².
pub const DEFAULT_FEASIBILITY_POINTS: usize = 4001;

/// Right-hand side of the C² equation.
pub fn coherence_ode_rhs(p: f64, p_dot: f64, rates: &NoiseRates, csq: f64) -> f64 {
    (1.0 - 2.0 * p) * (p_dot + rates.gamma2 * p - rates.gamma1) - 2.0 * rates.gamma_total * csq
}

/// Unitary limit: C² = P − P² − k.
pub fn coherence_unitary(p: f64, k: MixednessConstant) -> f64 {
    p - p * p - k.value()
}

/// Constant population: C² = C∞² + (λ(P) − k)·e^{−2Γ̃t}.
pub fn coherence_constant_population(
    p: f64,
    rates: &NoiseRates,
    k: MixednessConstant,
    t: f64,
) -> f64 {
    if rates.gamma_total <= 0.0 {
        return coherence_unitary(p, k);
    }
    let lambda = rates.lambda(p);
    let c_inf_sq = p - p * p - lambda;
    c_inf_sq + (lambda - k.value()) * (-2.0 * rates.gamma_total * t).exp()
}

/// Long-time coherence at fixed population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Asymptote {
    /// C∞ = √(C∞²) ≥ 0.
    Feasible(f64),
    /// C∞² < 0 (the stored value); only its real part, zero, is physical.
    Infeasible(f64),
}

impl Asymptote {
    /// C∞² as computed.
    pub fn squared(&self) -> f64 {
        match *self {
            Asymptote::Feasible(c) => c * c,
            Asymptote::Infeasible(sq) => sq,
        }
    }

    /// Re C∞, i.e. zero when infeasible.
    pub fn real_part(&self) -> f64 {
        match *self {
            Asymptote::Feasible(c) => c,
            Asymptote::Infeasible(_) => 0.0,
        }
    }
}

/// C∞² = P − P² − λ(P), evaluated as (2P − 1)(Γ1 − Γ2·P)/(2Γ̃) so both
/// roots come out exact.
pub fn asymptotic_coherence_sq(p: f64, rates: &NoiseRates) -> Result<f64> {
    if rates.gamma_total <= 0.0 {
        return Err(Error::domain(
            "rates",
            "asymptotic coherence needs a nonzero total decay rate",
        ));
    }
    Ok((2.0 * p - 1.0) * (rates.gamma1 - rates.gamma2 * p) / (2.0 * rates.gamma_total))
}

pub fn asymptotic_coherence(p: f64, rates: &NoiseRates) -> Result<Asymptote> {
    let sq = asymptotic_coherence_sq(p, rates)?;
    Ok(if sq >= 0.0 {
        Asymptote::Feasible(sq.sqrt())
    } else {
        Asymptote::Infeasible(sq)
    })
}

/// Initial condition that keeps C(t) constant under a constant population.
#[derive(Debug, Clone, PartialEq)]
pub enum SteadyState {
    /// C(0) = C∞ with k = λ(P).
    Steady {
        c0: f64,
        k: MixednessConstant,
    },
    Infeasible {
        reason: String,
    },
}

/// Requires Γ̃ > 0. Pure dephasing (Γ = 0) is reported infeasible: there
/// C∞ ≡ 0 and no coherence can be sustained.
pub fn steady_state_coherence(p: f64, rates: &NoiseRates) -> Result<SteadyState> {
    let sq = asymptotic_coherence_sq(p, rates)?;
    if rates.gamma1 == 0.0 {
        return Ok(SteadyState::Infeasible {
            reason: "pure dephasing: the asymptotic coherence vanishes for every population".into(),
        });
    }
    if sq < -FEAS_TOL {
        return Ok(SteadyState::Infeasible {
            reason: format!("C_inf^2 = {sq:.6e} < 0"),
        });
    }
    let lambda = rates.lambda(p);
    let c0 = sq.max(0.0).sqrt();
    match MixednessConstant::from_value(lambda) {
        Ok(k) if c0 * c0 <= p - p * p + FEAS_TOL => Ok(SteadyState::Steady { c0, k }),
        _ => Ok(SteadyState::Infeasible {
            reason: format!("lambda(P) = {lambda:.6e} is not an admissible mixedness constant"),
        }),
    }
}

// ---------------------------------------------------------------------------
// closed-form integrals

/// `e^{−bt}·f1 = (1 − e^{−bt})/b` with `b = 2Γ̃`.
fn scaled_f1(b: f64, t: f64) -> f64 {
    let x = b * t;
    if x < SERIES_THRESHOLD {
        t * (1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0)
    } else {
        -(-x).exp_m1() / b
    }
}

/// `e^{−bt}·∫₀ᵗ cos(as) e^{bs} ds`. The constant term `−b` carries `e^{−bt}`
/// after scaling, i.e. it is not multiplied by `e^{bt}` before scaling.
fn scaled_fcos(a: f64, b: f64, t: f64) -> f64 {
    (b * (a * t).cos() + a * (a * t).sin() - b * (-b * t).exp()) / (a * a + b * b)
}

/// `m_n(x) = ∫₀¹ uⁿ e^{−x(1−u)} du`.
fn scaled_moment(n: usize, x: f64) -> f64 {
    if x > 50.0 && x > 2.0 * n as f64 {
        // forward recurrence m_n = (1 − n·m_{n−1})/x, stable for x > n
        let mut m = if x > 700.0 {
            1.0 / x
        } else {
            -(-x).exp_m1() / x
        };
        for j in 1..=n {
            m = (1.0 - j as f64 * m) / x;
        }
        return m;
    }
    // e^{−x} Σ_j x^j / (j! (n + j + 1)), all terms positive
    let mut term = 1.0;
    let mut sum = 1.0 / (n as f64 + 1.0);
    for j in 1..2000 {
        term *= x / j as f64;
        let add = term / (n + j + 1) as f64;
        sum += add;
        if add < 1e-17 * sum {
            break;
        }
    }
    sum * (-x).exp()
}

/// `e^{−bt}·∫₀ᵗ (1 − cos as) e^{bs} ds` and `e^{−bt}·∫₀ᵗ (1 − cos as)² e^{bs} ds`.
fn scaled_cosine_moments(a: f64, b: f64, t: f64) -> (f64, f64) {
    let theta = a * t;
    if theta >= COSINE_SERIES_THRESHOLD {
        let e1 = scaled_f1(b, t);
        let c1 = scaled_fcos(a, b, t);
        let c2 = scaled_fcos(2.0 * a, b, t);
        return (e1 - c1, 1.5 * e1 - 2.0 * c1 + 0.5 * c2);
    }
    let x = b * t;
    let th2 = theta * theta;
    let mut u = 0.0;
    let mut v = 0.0;
    // θ^{2k}/(2k)!
    let mut pow_fact = 1.0;
    for k in 1..=30usize {
        pow_fact *= th2 / ((2 * k - 1) * (2 * k)) as f64;
        let m = t * scaled_moment(2 * k, x);
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        // 1 − cos θ = Σ (−1)^{k+1} θ^{2k}/(2k)!
        let du = sign * pow_fact * m;
        u += du;
        // (1 − cos θ)² = Σ_{k≥2} (−1)^k (2^{2k−1} − 2) θ^{2k}/(2k)!
        let dv = if k >= 2 {
            -sign * (2f64.powi(2 * k as i32 - 1) - 2.0) * pow_fact * m
        } else {
            0.0
        };
        v += dv;
        if k >= 2 && du.abs() <= 1e-17 * u.abs() && dv.abs() <= 1e-17 * v.abs() {
            break;
        }
    }
    (u, v)
}

/// `(e^{−2Γ̃t}·I1, e^{−2Γ̃t}·I2)` for the sine-squared profile.
fn scaled_sine_squared_integrals(
    rates: &NoiseRates,
    pi: f64,
    pf: f64,
    t_f: f64,
    t: f64,
) -> (f64, f64) {
    let b = 2.0 * rates.gamma_total;
    let a = PI / t_f;
    let e1 = scaled_f1(b, t);
    let dp = pf - pi;
    if dp == 0.0 {
        return (pi * e1, pi * pi * e1);
    }
    let (u, v) = scaled_cosine_moments(a, b, t);
    let k1 = pi * e1 + 0.5 * dp * u;
    let k2 = pi * pi * e1 + 0.25 * dp * dp * v + pi * dp * u;
    (k1, k2)
}

fn check_sine_args(pi: f64, pf: f64, t_f: f64, t: f64) -> Result<f64> {
    for (name, p) in [("Pi", pi), ("Pf", pf)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(name, "population must lie in [0, 1]"));
        }
    }
    if !(t_f.is_finite() && t_f > 0.0) {
        return Err(Error::domain("t_f", "must be finite and > 0"));
    }
    clamp_to_horizon(t, t_f)
}

/// I1(Γ̃, t) = ∫₀ᵗ P(s) e^{2Γ̃s} ds for P = (Pf − Pi)sin²(πs/(2t_f)) + Pi.
pub fn integral_i1_sine_squared(
    rates: &NoiseRates,
    pi: f64,
    pf: f64,
    t_f: f64,
    t: f64,
) -> Result<f64> {
    let t = check_sine_args(pi, pf, t_f, t)?;
    let (k1, _) = scaled_sine_squared_integrals(rates, pi, pf, t_f, t);
    Ok(k1 * (2.0 * rates.gamma_total * t).exp())
}

/// I2(Γ̃, t) = ∫₀ᵗ P(s)² e^{2Γ̃s} ds for the sine-squared profile.
pub fn integral_i2_sine_squared(
    rates: &NoiseRates,
    pi: f64,
    pf: f64,
    t_f: f64,
    t: f64,
) -> Result<f64> {
    let t = check_sine_args(pi, pf, t_f, t)?;
    let (_, k2) = scaled_sine_squared_integrals(rates, pi, pf, t_f, t);
    Ok(k2 * (2.0 * rates.gamma_total * t).exp())
}

// ---------------------------------------------------------------------------
// general solution

/// How C² was (or is to be) evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ClosedConstant,
    ClosedSineSquared,
    Unitary,
    Quadrature,
}

/// Evaluation strategy requested by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    /// Closed form when the profile has one, otherwise quadrature.
    #[default]
    Auto,
    /// Quadrature for every profile.
    ForceQuadrature,
    /// Closed forms only; profiles without one are a capability error.
    ClosedOnly,
}

fn select_method<P: Population + ?Sized>(
    profile: &P,
    rates: &NoiseRates,
    strategy: Strategy,
) -> Result<Method> {
    if rates.gamma_total == 0.0 && rates.gamma1 == 0.0 && rates.gamma2 == 0.0 {
        return Ok(Method::Unitary);
    }
    match (strategy, profile.closed_form()) {
        (Strategy::ForceQuadrature, _) => Ok(Method::Quadrature),
        (_, Some(ClosedForm::Constant { .. })) => Ok(Method::ClosedConstant),
        (_, Some(ClosedForm::SineSquared { .. })) => Ok(Method::ClosedSineSquared),
        (Strategy::Auto, None) => Ok(Method::Quadrature),
        (Strategy::ClosedOnly, None) => Err(Error::Capability),
    }
}

fn assemble(p: f64, rates: &NoiseRates, k: f64, t: f64, k1: f64, k2: f64) -> f64 {
    let decay = (-2.0 * rates.gamma_total * t).exp();
    (p - p * p) + decay * (rates.gamma_ratio - k) - rates.gamma_ratio
        + rates.gamma_tilde1 * k1
        + rates.gamma_tilde2 * k2
}

fn csq_at<P: Population + ?Sized>(
    profile: &P,
    rates: &NoiseRates,
    k: MixednessConstant,
    method: Method,
    t: f64,
) -> Result<f64> {
    let (p, _) = profile.value_and_rate(t);
    Ok(match method {
        Method::Unitary => coherence_unitary(p, k),
        Method::ClosedConstant => coherence_constant_population(p, rates, k, t),
        Method::ClosedSineSquared => {
            let Some(ClosedForm::SineSquared { pi, pf }) = profile.closed_form() else {
                return Err(Error::Capability);
            };
            let (k1, k2) = scaled_sine_squared_integrals(rates, pi, pf, profile.t_final(), t);
            assemble(p, rates, k.value(), t, k1, k2)
        }
        Method::Quadrature => {
            let b = 2.0 * rates.gamma_total;
            let k1 = quadrature::integrate(
                |s| profile.value_and_rate(s).0 * (-b * (t - s)).exp(),
                0.0,
                t,
            )?
            .value;
            let k2 = quadrature::integrate(
                |s| {
                    let q = profile.value_and_rate(s).0;
                    q * q * (-b * (t - s)).exp()
                },
                0.0,
                t,
            )?
            .value;
            assemble(p, rates, k.value(), t, k1, k2)
        }
    })
}

/// C²(t) for a population profile, rates and initial coherence `c0`.
pub fn coherence_general<P: Population + ?Sized>(
    profile: &P,
    rates: &NoiseRates,
    c0: f64,
    t: f64,
) -> Result<f64> {
    coherence_general_with(profile, rates, c0, t, Strategy::Auto)
}

pub fn coherence_general_with<P: Population + ?Sized>(
    profile: &P,
    rates: &NoiseRates,
    c0: f64,
    t: f64,
    strategy: Strategy,
) -> Result<f64> {
    let t = clamp_to_horizon(t, profile.t_final())?;
    let k = mixedness_constant(profile.value_and_rate(0.0).0, c0)?;
    let method = select_method(profile, rates, strategy)?;
    csq_at(profile, rates, k, method, t)
}

/// C(t) for a fixed prescription, with its feasibility verdict.
#[derive(Debug, Clone)]
pub struct CoherenceSolution<P: Population = crate::profiles::PopulationProfile> {
    profile: P,
    rates: NoiseRates,
    k: MixednessConstant,
    c0: f64,
    method: Method,
    min_csq: f64,
    argmin: f64,
}

impl<P: Population> CoherenceSolution<P> {
    pub fn new(profile: P, rates: NoiseRates, c0: f64) -> Result<Self> {
        Self::with_options(
            profile,
            rates,
            c0,
            Strategy::Auto,
            DEFAULT_FEASIBILITY_POINTS,
        )
    }

    pub fn with_options(
        profile: P,
        rates: NoiseRates,
        c0: f64,
        strategy: Strategy,
        grid_points: usize,
    ) -> Result<Self> {
        let k = mixedness_constant(profile.value_and_rate(0.0).0, c0)?;
        Self::from_mixedness(profile, rates, k, c0, strategy, grid_points)
    }

    /// Uses a given k (e.g. λ(P) for a steady-state design) instead of
    /// recomputing it from `c0`.
    pub fn from_mixedness(
        profile: P,
        rates: NoiseRates,
        k: MixednessConstant,
        c0: f64,
        strategy: Strategy,
        grid_points: usize,
    ) -> Result<Self> {
        let method = select_method(&profile, &rates, strategy)?;
        let t_f = profile.t_final();
        let n = grid_points.max(2);
        let mut min_csq = f64::INFINITY;
        let mut argmin = 0.0;
        for i in 0..n {
            let t = t_f * i as f64 / (n - 1) as f64;
            let v = csq_at(&profile, &rates, k, method, t)?;
            if v < min_csq {
                min_csq = v;
                argmin = t;
            }
        }
        Ok(Self {
            profile,
            rates,
            k,
            c0,
            method,
            min_csq,
            argmin,
        })
    }

    pub fn profile(&self) -> &P {
        &self.profile
    }

    pub fn rates(&self) -> &NoiseRates {
        &self.rates
    }

    pub fn mixedness(&self) -> MixednessConstant {
        self.k
    }

    pub fn initial_coherence(&self) -> f64 {
        self.c0
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn t_final(&self) -> f64 {
        self.profile.t_final()
    }

    pub fn min_csq(&self) -> f64 {
        self.min_csq
    }

    /// Time of the sampled minimum of C².
    pub fn argmin(&self) -> f64 {
        self.argmin
    }

    pub fn feasible(&self) -> bool {
        self.min_csq >= -FEAS_TOL
    }

    pub fn csq(&self, t: f64) -> Result<f64> {
        let t = clamp_to_horizon(t, self.t_final())?;
        csq_at(&self.profile, &self.rates, self.k, self.method, t)
    }

    /// C(t) = √max(C², 0).
    pub fn modulus(&self, t: f64) -> Result<f64> {
        Ok(self.csq(t)?.max(0.0).sqrt())
    }

    /// d(C²)/dt from the equation of motion.
    pub fn csq_rate(&self, t: f64) -> Result<f64> {
        let t = clamp_to_horizon(t, self.t_final())?;
        let (p, p_dot) = self.profile.value_and_rate(t);
        let csq = csq_at(&self.profile, &self.rates, self.k, self.method, t)?;
        Ok(coherence_ode_rhs(p, p_dot, &self.rates, csq))
    }
}
