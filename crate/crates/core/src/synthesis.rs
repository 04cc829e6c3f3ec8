//! Field inversion: builds the control pulse that makes the RWA dynamics
//! follow a prescribed (P, Φ) with the coherence modulus C from
//! [`crate::coherence`].
//!
//! The pulse is carried as the quadrature pair
//!
//! ```text
//! X = (Ṗ + Γ2·P − Γ1) / (2C)      Y = C·Φ̇ / (2P − 1)
//! E = (2/μ)[X·sin(ωt + Φ) − Y·cos(ωt + Φ)] = A·sin(ωt + Φ + Λ)
//! ```
//!
//! with rotating-frame envelope `μ·ε = (iX − Y)·e^{−iΦ}`.

use num_complex::Complex64;

use crate::coherence::CoherenceSolution;
use crate::error::{Error, Result};
use crate::model::{NoiseRates, SystemParams};
use crate::profiles::{
    clamp_to_horizon, validate_prescription, PhaseProfile, Population, PopulationProfile,
    PrescriptionReport, DEFAULT_PHASE_TOL,
};

/// Below this modulus X is only evaluated through the removable-limit path.
pub const C_FLOOR: f64 = 1e-9;
/// Numerator magnitude under which a vanishing C is treated as 0/0.
pub const NUM_FLOOR: f64 = 1e-9;
/// |2P − 1| under which Y is only evaluated through the removable-limit path.
pub const POLE_FLOOR: f64 = 1e-9;
/// Offset, as a fraction of t_f, of the points used to extrapolate through
/// removable singularities.
pub const EXTRAPOLATION_FRACTION: f64 = 1e-3;
/// Number of grid points scanned for singularities at construction.
const SCAN_POINTS: usize = 4001;

/// Placement of the thermal rates in the X numerator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NumeratorConvention {
    /// Ṗ + Γ2·P − Γ1, consistent with the C² equation of motion.
    #[default]
    Consistent,
    /// Ṗ + Γ1·P − Γ2 (swapped rates); kept to demonstrate its tracking failure.
    SwappedRates,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisOptions {
    pub phase_tol: f64,
    /// Synthesize even when the prescription report has violations.
    pub force: bool,
    pub convention: NumeratorConvention,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            phase_tol: DEFAULT_PHASE_TOL,
            force: false,
            convention: NumeratorConvention::Consistent,
        }
    }
}

/// One sample of a synthesized pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveformSample {
    pub t: f64,
    pub field: f64,
    pub envelope: f64,
    pub chirp: f64,
    pub x: f64,
    pub y: f64,
}

/// A synthesized pulse on `[0, t_f]`.
#[derive(Debug, Clone)]
pub struct ControlField<P: Population = PopulationProfile> {
    coherence: CoherenceSolution<P>,
    phase: PhaseProfile,
    params: SystemParams,
    options: SynthesisOptions,
    report: PrescriptionReport,
}

fn sgn(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Builds the pulse. Refuses infeasible coherence and, unless forced,
/// prescriptions with constraint violations.
pub fn synthesize<P: Population>(
    phase: PhaseProfile,
    coherence: CoherenceSolution<P>,
    params: SystemParams,
    rates: &NoiseRates,
    options: SynthesisOptions,
) -> Result<ControlField<P>> {
    if coherence.rates() != rates {
        return Err(Error::domain(
            "rates",
            "coherence solution was built with different noise rates",
        ));
    }
    if params.omega_p != params.omega {
        return Err(Error::domain(
            "omega_p",
            "synthesis is defined on the resonant carrier only",
        ));
    }
    if !coherence.feasible() {
        return Err(Error::Infeasible(format!(
            "C^2 reaches {:.6e} at t = {} (tolerance {:e})",
            coherence.min_csq(),
            coherence.argmin(),
            crate::coherence::FEAS_TOL
        )));
    }
    let report = validate_prescription(
        coherence.profile(),
        &phase,
        coherence.mixedness(),
        rates,
        options.phase_tol,
    );
    if !report.passed() && !options.force {
        let msg = report
            .violations
            .iter()
            .map(|(t, m)| format!("t = {t}: {m}"))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::Infeasible(msg));
    }
    let field = ControlField {
        coherence,
        phase,
        params,
        options,
        report,
    };
    let t_f = field.t_final();
    for i in 0..SCAN_POINTS {
        field.quadrature_pair(t_f * i as f64 / (SCAN_POINTS - 1) as f64)?;
    }
    Ok(field)
}

impl<P: Population> ControlField<P> {
    pub fn t_final(&self) -> f64 {
        self.coherence.t_final()
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn rates(&self) -> &NoiseRates {
        self.coherence.rates()
    }

    pub fn coherence(&self) -> &CoherenceSolution<P> {
        &self.coherence
    }

    pub fn population(&self) -> &P {
        self.coherence.profile()
    }

    pub fn phase(&self) -> &PhaseProfile {
        &self.phase
    }

    pub fn report(&self) -> &PrescriptionReport {
        &self.report
    }

    /// True when built despite a failed prescription report.
    pub fn forced(&self) -> bool {
        self.options.force && !self.report.passed()
    }

    pub fn options(&self) -> &SynthesisOptions {
        &self.options
    }

    fn numerator(&self, p: f64, p_dot: f64) -> f64 {
        let r = self.coherence.rates();
        match self.options.convention {
            NumeratorConvention::Consistent => p_dot + r.gamma2 * p - r.gamma1,
            NumeratorConvention::SwappedRates => p_dot + r.gamma1 * p - r.gamma2,
        }
    }

    /// X(t), or `None` when t sits on a removable 0/0 point.
    fn raw_x(&self, t: f64) -> Result<Option<f64>> {
        let (p, p_dot) = self.population().value_and_rate(t);
        let num = self.numerator(p, p_dot);
        let c = self.coherence.modulus(t)?;
        if c > C_FLOOR {
            return Ok(Some(num / (2.0 * c)));
        }
        if num.abs() <= NUM_FLOOR {
            return Ok(None);
        }
        let h = EXTRAPOLATION_FRACTION * self.t_final();
        Err(Error::Singularity {
            start: (t - h).max(0.0),
            end: (t + h).min(self.t_final()),
            reason: format!("C = {c:.3e} vanishes while the population drive is {num:.3e}"),
        })
    }

    fn raw_y(&self, t: f64) -> Result<Option<f64>> {
        let (p, _) = self.population().value_and_rate(t);
        let (_, phi_dot) = self.phase.value_and_rate(t);
        let c = self.coherence.modulus(t)?;
        let den = 2.0 * p - 1.0;
        if den.abs() > POLE_FLOOR {
            return Ok(Some(c * phi_dot / den));
        }
        if phi_dot.abs() <= self.options.phase_tol || c <= C_FLOOR || self.options.force {
            return Ok(None);
        }
        let h = EXTRAPOLATION_FRACTION * self.t_final();
        Err(Error::Singularity {
            start: (t - h).max(0.0),
            end: (t + h).min(self.t_final()),
            reason: format!("phase rate {phi_dot:.3e} at equal populations"),
        })
    }

    /// Value through a removable point: mean of the neighbours at ±h when
    /// both exist, else quadratic extrapolation from one side. When every
    /// neighbour is itself 0/0 the state sits on a stretch that needs no
    /// drive and the limit is zero.
    fn through_removable(
        &self,
        t: f64,
        f: impl Fn(f64) -> Result<Option<f64>>,
        what: &str,
    ) -> Result<f64> {
        let t_f = self.t_final();
        let h = EXTRAPOLATION_FRACTION * t_f;
        let offsets: Vec<f64> = if t - h >= 0.0 && t + h <= t_f {
            vec![-h, h]
        } else {
            let dir = if t + 3.0 * h <= t_f { 1.0 } else { -1.0 };
            vec![dir * h, dir * 2.0 * h, dir * 3.0 * h]
        };
        let vals = offsets
            .iter()
            .map(|&d| f(t + d))
            .collect::<Result<Vec<_>>>()?;
        if vals.iter().all(Option::is_none) {
            return Ok(0.0);
        }
        let vals: Vec<f64> =
            vals.into_iter()
                .collect::<Option<_>>()
                .ok_or_else(|| Error::Singularity {
                    start: (t - 3.0 * h).max(0.0),
                    end: (t + 3.0 * h).min(t_f),
                    reason: format!("{what} undefined on part of the extrapolation stencil"),
                })?;
        Ok(match vals.as_slice() {
            [a, b] => 0.5 * (a + b),
            [a, b, c] => 3.0 * a - 3.0 * b + c,
            _ => unreachable!(),
        })
    }

    /// Quadrature coefficients (X, Y) at `t`.
    pub fn quadrature_pair(&self, t: f64) -> Result<(f64, f64)> {
        let t = clamp_to_horizon(t, self.t_final())?;
        let x = match self.raw_x(t)? {
            Some(x) => x,
            None => self.through_removable(t, |s| self.raw_x(s), "X")?,
        };
        let y = match self.raw_y(t)? {
            Some(y) => y,
            None => self.through_removable(t, |s| self.raw_y(s), "Y")?,
        };
        Ok((x, y))
    }

    /// E(t) in the quadrature representation.
    pub fn field(&self, t: f64) -> Result<f64> {
        let (x, y) = self.quadrature_pair(t)?;
        let t = t.clamp(0.0, self.t_final());
        let theta = self.params.omega * t + self.phase.value_and_rate(t).0;
        Ok(2.0 / self.params.mu * (x * theta.sin() - y * theta.cos()))
    }

    /// A(t) = (2/μ)·ξ·√(X² + Y²) with ξ = sgn X.
    pub fn envelope(&self, t: f64) -> Result<f64> {
        let (x, y) = self.quadrature_pair(t)?;
        Ok(2.0 / self.params.mu * sgn(x) * x.hypot(y))
    }

    /// Λ(t) = arctan(C·Φ̇ / (Ċ + Γ̃C)) = arctan(−Y/X), principal branch,
    /// paired with the signed envelope.
    pub fn chirp(&self, t: f64) -> Result<f64> {
        let (x, y) = self.quadrature_pair(t)?;
        Ok(chirp_from_pair(x, y))
    }

    /// Total phase ωt + Φ + Λ.
    pub fn total_phase(&self, t: f64) -> Result<f64> {
        let lam = self.chirp(t)?;
        let t = t.clamp(0.0, self.t_final());
        Ok(self.params.omega * t + self.phase.value_and_rate(t).0 + lam)
    }

    /// E(t) = A(t)·sin(ωt + Φ + Λ).
    pub fn field_polar(&self, t: f64) -> Result<f64> {
        Ok(self.envelope(t)? * self.total_phase(t)?.sin())
    }

    /// Rotating-frame envelope μ·ε(t) = (iX − Y)·e^{−iΦ}.
    pub fn rwa_envelope(&self, t: f64) -> Result<Complex64> {
        let (x, y) = self.quadrature_pair(t)?;
        let phi = self.phase.value_and_rate(t.clamp(0.0, self.t_final())).0;
        Ok(Complex64::new(-y, x) * Complex64::from_polar(1.0, -phi))
    }

    pub fn sample(&self, t: f64) -> Result<WaveformSample> {
        let (x, y) = self.quadrature_pair(t)?;
        let t = t.clamp(0.0, self.t_final());
        let theta = self.params.omega * t + self.phase.value_and_rate(t).0;
        let k = 2.0 / self.params.mu;
        Ok(WaveformSample {
            t,
            field: k * (x * theta.sin() - y * theta.cos()),
            envelope: k * sgn(x) * x.hypot(y),
            chirp: chirp_from_pair(x, y),
            x,
            y,
        })
    }
}

fn chirp_from_pair(x: f64, y: f64) -> f64 {
    if x != 0.0 {
        (-y / x).atan()
    } else if y == 0.0 {
        0.0
    } else {
        -sgn(y) * std::f64::consts::FRAC_PI_2
    }
}

pub fn envelope<P: Population>(field: &ControlField<P>, t: f64) -> Result<f64> {
    field.envelope(t)
}

/// Samples `n ≥ 2` points on a uniform grid including both endpoints.
pub fn sample_waveform<P: Population>(
    field: &ControlField<P>,
    n: usize,
) -> Result<Vec<WaveformSample>> {
    if n < 2 {
        return Err(Error::domain("n", "waveform needs at least two samples"));
    }
    let t_f = field.t_final();
    (0..n)
        .map(|i| field.sample(t_f * i as f64 / (n - 1) as f64))
        .collect()
}

/// CSV with header `t,E,A,Lambda,X,Y`.
pub fn write_waveform_csv<W: std::io::Write>(rows: &[WaveformSample], mut w: W) -> Result<()> {
    writeln!(w, "t,E,A,Lambda,X,Y")?;
    for r in rows {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.t, r.field, r.envelope, r.chirp, r.x, r.y
        )?;
    }
    Ok(())
}
