//! Prescribed trajectories: ground population P(t) and coherence phase Φ(t).

use std::f64::consts::PI;
use std::fmt::Debug;

use crate::error::{Error, Result};
use crate::model::{MixednessConstant, NoiseRates};

/// Default bound on |Φ̇| at population crossings.
pub const DEFAULT_PHASE_TOL: f64 = 1e-4;

/// Grid size used by the generic sign-change crossing search.
const CROSSING_SCAN_POINTS: usize = 10_000;

/// Grid size used when checking the unitary population band.
const BAND_CHECK_POINTS: usize = 10_001;

/// Relative slack on the `[0, t_f]` domain; times within it are clamped.
const DOMAIN_SLACK: f64 = 1e-12;

pub(crate) fn clamp_to_horizon(t: f64, t_f: f64) -> Result<f64> {
    let slack = DOMAIN_SLACK * t_f;
    if !t.is_finite() || t < -slack || t > t_f + slack {
        return Err(Error::Domain {
            field: "t".into(),
            reason: format!("{t} outside [0, {t_f}]"),
        });
    }
    Ok(t.clamp(0.0, t_f))
}

/// Closed-form families the coherence module knows how to integrate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClosedForm {
    Constant { p: f64 },
    SineSquared { pi: f64, pf: f64 },
}

/// Times at which P(t) = 1/2.
#[derive(Debug, Clone, PartialEq)]
pub enum Crossings {
    At(Vec<f64>),
    /// P ≡ 1/2 on the whole horizon.
    WholeInterval,
}

impl Crossings {
    pub fn times(&self) -> &[f64] {
        match self {
            Crossings::At(v) => v,
            Crossings::WholeInterval => &[],
        }
    }
}

/// A population trajectory on `[0, t_f]`.
///
/// [`PopulationProfile`] covers the shipped families; other implementors are
/// handled by quadrature in the coherence module.
pub trait Population: Debug + Send + Sync {
    fn t_final(&self) -> f64;

    /// `(P, Ṗ)` at `t`, with `t` already inside the horizon.
    fn value_and_rate(&self, t: f64) -> (f64, f64);

    fn closed_form(&self) -> Option<ClosedForm> {
        None
    }

    /// Solutions of P(t) = 1/2. The default scans a uniform grid for sign
    /// changes and refines each by bisection to `tol`.
    fn crossings(&self, tol: f64) -> Crossings {
        scan_crossings(self, tol)
    }

    fn eval(&self, t: f64) -> Result<(f64, f64)> {
        let t = clamp_to_horizon(t, self.t_final())?;
        Ok(self.value_and_rate(t))
    }
}

fn scan_crossings<P: Population + ?Sized>(profile: &P, tol: f64) -> Crossings {
    let t_f = profile.t_final();
    let f = |t: f64| profile.value_and_rate(t).0 - 0.5;
    let n = CROSSING_SCAN_POINTS;
    let node = |i: usize| t_f * i as f64 / n as f64;
    let mut out: Vec<f64> = Vec::new();
    let mut prev_t = 0.0;
    let mut prev = f(0.0);
    if prev == 0.0 {
        out.push(0.0);
    }
    for i in 1..=n {
        let t = node(i);
        let cur = f(t);
        if cur == 0.0 {
            out.push(t);
        } else if prev != 0.0 && prev.signum() != cur.signum() {
            let (mut lo, mut hi, mut flo) = (prev_t, t, prev);
            while hi - lo > tol.max(f64::EPSILON * t_f) {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid);
                if fm.signum() == flo.signum() {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            out.push(0.5 * (lo + hi));
        }
        prev_t = t;
        prev = cur;
    }
    if !out.is_empty() && out.len() == n + 1 {
        return Crossings::WholeInterval;
    }
    Crossings::At(out)
}

/// Shipped population families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PopulationProfile {
    Constant {
        p: f64,
        t_f: f64,
    },
    /// P(t) = (Pf − Pi)·sin²(πt/(2t_f)) + Pi.
    SineSquared {
        pi: f64,
        pf: f64,
        t_f: f64,
    },
}

fn check_horizon(t_f: f64) -> Result<()> {
    if !(t_f.is_finite() && t_f > 0.0) {
        return Err(Error::domain("t_f", "must be finite and > 0"));
    }
    Ok(())
}

fn check_population(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(name, "population must lie in [0, 1]"));
    }
    Ok(())
}

impl PopulationProfile {
    pub fn constant(p: f64, t_f: f64) -> Result<Self> {
        check_population("P", p)?;
        check_horizon(t_f)?;
        Ok(Self::Constant { p, t_f })
    }

    pub fn sine_squared(pi: f64, pf: f64, t_f: f64) -> Result<Self> {
        check_population("Pi", pi)?;
        check_population("Pf", pf)?;
        check_horizon(t_f)?;
        Ok(Self::SineSquared { pi, pf, t_f })
    }

    pub fn initial(&self) -> f64 {
        match *self {
            Self::Constant { p, .. } => p,
            Self::SineSquared { pi, .. } => pi,
        }
    }

    pub fn last(&self) -> f64 {
        match *self {
            Self::Constant { p, .. } => p,
            Self::SineSquared { pf, .. } => pf,
        }
    }
}

impl Population for PopulationProfile {
    fn t_final(&self) -> f64 {
        match *self {
            Self::Constant { t_f, .. } | Self::SineSquared { t_f, .. } => t_f,
        }
    }

    fn value_and_rate(&self, t: f64) -> (f64, f64) {
        match *self {
            Self::Constant { p, .. } => (p, 0.0),
            Self::SineSquared { pi, pf, t_f } => {
                let dp = pf - pi;
                let s = (PI * t / (2.0 * t_f)).sin();
                let rate = dp * (PI / (2.0 * t_f)) * (PI * t / t_f).sin();
                (dp * s * s + pi, rate)
            }
        }
    }

    fn closed_form(&self) -> Option<ClosedForm> {
        Some(match *self {
            Self::Constant { p, .. } => ClosedForm::Constant { p },
            Self::SineSquared { pi, pf, .. } => ClosedForm::SineSquared { pi, pf },
        })
    }

    fn crossings(&self, tol: f64) -> Crossings {
        match *self {
            Self::Constant { p, .. } => {
                if (p - 0.5).abs() <= tol {
                    Crossings::WholeInterval
                } else {
                    Crossings::At(Vec::new())
                }
            }
            Self::SineSquared { pi, pf, t_f } => {
                if pi == pf {
                    return Self::Constant { p: pi, t_f }.crossings(tol);
                }
                let s = (0.5 - pi) / (pf - pi);
                if !(0.0..=1.0).contains(&s) {
                    return Crossings::At(Vec::new());
                }
                // monotone profile: single analytic inverse
                Crossings::At(vec![2.0 * t_f / PI * s.sqrt().asin()])
            }
        }
    }
}

pub fn eval_population<P: Population + ?Sized>(profile: &P, t: f64) -> Result<(f64, f64)> {
    profile.eval(t)
}

pub fn crossing_times<P: Population + ?Sized>(profile: &P, tol: f64) -> Crossings {
    profile.crossings(tol)
}

/// Prescribed coherence phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseProfile {
    /// Φ(t) = α·t.
    Linear { alpha: f64, t_f: f64 },
    /// Φ(t) = Φ_v + c·(t − t_v)².
    Quadratic {
        curvature: f64,
        t_vertex: f64,
        phi_vertex: f64,
        t_f: f64,
    },
    /// Φ(t) = (Φf − Φi)/2·tanh(βt + χ) + (Φf + Φi)/2.
    Tanh {
        phi_i: f64,
        phi_f: f64,
        beta: f64,
        chi: f64,
        t_f: f64,
    },
}

impl PhaseProfile {
    pub fn linear(alpha: f64, t_f: f64) -> Result<Self> {
        check_horizon(t_f)?;
        if !alpha.is_finite() {
            return Err(Error::domain("alpha", "must be finite"));
        }
        Ok(Self::Linear { alpha, t_f })
    }

    /// Parabola through Φ(0) = `phi0` and Φ(t_f) = `phi_f` with its vertex at
    /// `t_vertex`. When `t_vertex = t_f/2` the endpoints coincide and the
    /// vertex value `phi_vertex` must be supplied to fix the curvature;
    /// otherwise `phi_vertex` is optional and must agree with the endpoints.
    pub fn quadratic(
        phi0: f64,
        phi_f: f64,
        t_vertex: f64,
        phi_vertex: Option<f64>,
        t_f: f64,
    ) -> Result<Self> {
        check_horizon(t_f)?;
        if !(0.0..=t_f).contains(&t_vertex) {
            return Err(Error::Profile(format!(
                "vertex time {t_vertex} outside [0, {t_f}]"
            )));
        }
        let denom = t_f * (t_f - 2.0 * t_vertex);
        let scale = 1.0 + phi0.abs().max(phi_f.abs());
        let (curvature, vertex) = if denom.abs() > 1e-12 * t_f * t_f {
            let c = (phi_f - phi0) / denom;
            let v = phi0 - c * t_vertex * t_vertex;
            if let Some(given) = phi_vertex {
                if (given - v).abs() > 1e-9 * scale.max(v.abs()) {
                    return Err(Error::Profile(format!(
                        "Phi_vertex = {given} inconsistent with endpoints (implied {v})"
                    )));
                }
            }
            (c, v)
        } else {
            if (phi_f - phi0).abs() > 1e-12 * scale {
                return Err(Error::Profile(
                    "vertex at t_f/2 requires Phi(0) = Phi(t_f)".into(),
                ));
            }
            let v = phi_vertex.ok_or_else(|| {
                Error::Profile("vertex at t_f/2 leaves the curvature free: give Phi_vertex".into())
            })?;
            if t_vertex == 0.0 {
                return Err(Error::Profile("degenerate parabola".into()));
            }
            ((phi0 - v) / (t_vertex * t_vertex), v)
        };
        Ok(Self::Quadratic {
            curvature,
            t_vertex,
            phi_vertex: vertex,
            t_f,
        })
    }

    /// Tanh switch from `phi_i` to `phi_f`. The offset is
    /// χ = ½·ln[(1+σ)/(1−σ)] − β·t_ref with σ = (1 − Φf − Φi)/(Φf − Φi),
    /// which places Φ(t_ref) = 1/2 rad; |σ| < 1 is required.
    pub fn tanh(phi_i: f64, phi_f: f64, beta: f64, t_ref: f64, t_f: f64) -> Result<Self> {
        check_horizon(t_f)?;
        if !(beta.is_finite() && t_ref.is_finite()) {
            return Err(Error::Profile("beta and t_ref must be finite".into()));
        }
        if phi_f == phi_i {
            return Err(Error::Profile("tanh profile needs Phi_f != Phi_i".into()));
        }
        let sigma = (1.0 - phi_f - phi_i) / (phi_f - phi_i);
        if sigma.abs() >= 1.0 {
            return Err(Error::Profile(format!(
                "tanh offset undefined: |sigma| = {} >= 1",
                sigma.abs()
            )));
        }
        let chi = 0.5 * ((1.0 + sigma) / (1.0 - sigma)).ln() - beta * t_ref;
        Ok(Self::Tanh {
            phi_i,
            phi_f,
            beta,
            chi,
            t_f,
        })
    }

    pub fn t_final(&self) -> f64 {
        match *self {
            Self::Linear { t_f, .. } | Self::Quadratic { t_f, .. } | Self::Tanh { t_f, .. } => t_f,
        }
    }

    /// `(Φ, Φ̇)` without the domain check.
    pub fn value_and_rate(&self, t: f64) -> (f64, f64) {
        match *self {
            Self::Linear { alpha, .. } => (alpha * t, alpha),
            Self::Quadratic {
                curvature,
                t_vertex,
                phi_vertex,
                ..
            } => {
                let d = t - t_vertex;
                (phi_vertex + curvature * d * d, 2.0 * curvature * d)
            }
            Self::Tanh {
                phi_i,
                phi_f,
                beta,
                chi,
                ..
            } => {
                let half = 0.5 * (phi_f - phi_i);
                let th = (beta * t + chi).tanh();
                (
                    half * th + 0.5 * (phi_f + phi_i),
                    half * beta * (1.0 - th * th),
                )
            }
        }
    }

    pub fn eval(&self, t: f64) -> Result<(f64, f64)> {
        let t = clamp_to_horizon(t, self.t_final())?;
        Ok(self.value_and_rate(t))
    }
}

pub fn eval_phase(profile: &PhaseProfile, t: f64) -> Result<(f64, f64)> {
    profile.eval(t)
}

/// Admissibility of a (P, Φ) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PrescriptionReport {
    pub crossing_times: Vec<f64>,
    /// P ≡ 1/2 on the whole horizon.
    pub crossing_everywhere: bool,
    /// |Φ̇(t*)| ≤ phase_tol, one entry per crossing time.
    pub phase_constraint_ok: Vec<bool>,
    /// P(t) stays within 1/2 ± √(1/4 − k) on a dense grid.
    pub unitary_band_ok: bool,
    pub violations: Vec<(f64, String)>,
}

impl PrescriptionReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the phase constraint at every crossing and, for noise-free
/// dynamics, the population band implied by `k`. Report only; never fails.
pub fn validate_prescription<P: Population + ?Sized>(
    population: &P,
    phase: &PhaseProfile,
    k: MixednessConstant,
    rates: &NoiseRates,
    phase_tol: f64,
) -> PrescriptionReport {
    let t_f = population.t_final();
    let mut violations = Vec::new();
    if (phase.t_final() - t_f).abs() > DOMAIN_SLACK * t_f {
        violations.push((
            0.0,
            format!(
                "horizon mismatch: population t_f = {t_f}, phase t_f = {}",
                phase.t_final()
            ),
        ));
    }

    let crossings = population.crossings(1e-9 * t_f);
    let mut crossing_times = Vec::new();
    let mut phase_constraint_ok = Vec::new();
    let crossing_everywhere = matches!(crossings, Crossings::WholeInterval);
    match crossings {
        Crossings::At(times) => {
            for t in times {
                let rate = phase.value_and_rate(t.clamp(0.0, phase.t_final())).1;
                let ok = rate.abs() <= phase_tol;
                if !ok {
                    violations.push((
                        t,
                        format!(
                            "phase rate {rate:.6e} at population crossing t* = {t} exceeds {phase_tol:e}"
                        ),
                    ));
                }
                crossing_times.push(t);
                phase_constraint_ok.push(ok);
            }
        }
        Crossings::WholeInterval => {
            let n = BAND_CHECK_POINTS;
            let worst = (0..n)
                .map(|i| t_f * i as f64 / (n - 1) as f64)
                .map(|t| (t, phase.value_and_rate(t).1.abs()))
                .fold((0.0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
            let ok = worst.1 <= phase_tol;
            if !ok {
                violations.push((
                    worst.0,
                    format!(
                        "population is 1/2 everywhere but phase rate reaches {:.6e}",
                        worst.1
                    ),
                ));
            }
            phase_constraint_ok.push(ok);
        }
    }

    let half_width = (0.25 - k.value()).max(0.0).sqrt();
    let (lo, hi) = (0.5 - half_width, 0.5 + half_width);
    let n = BAND_CHECK_POINTS;
    let mut band_ok = true;
    let mut first_exit = None;
    for i in 0..n {
        let t = t_f * i as f64 / (n - 1) as f64;
        let p = population.value_and_rate(t).0;
        // tolerance matches the feasibility slack on C²
        if p - p * p - k.value() < -crate::coherence::FEAS_TOL {
            band_ok = false;
            first_exit.get_or_insert((t, p));
        }
    }
    if rates.is_unitary() {
        if let Some((t, p)) = first_exit {
            violations.push((
                t,
                format!("P = {p} leaves the unitary band [{lo:.6}, {hi:.6}]"),
            ));
        }
    }

    PrescriptionReport {
        crossing_times,
        crossing_everywhere,
        phase_constraint_ok,
        unitary_band_ok: band_ok,
        violations,
    }
}
