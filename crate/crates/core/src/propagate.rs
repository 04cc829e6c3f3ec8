//! Master-equation propagation under a given field, used to verify
//! synthesized pulses with and without the rotating-wave approximation.
//!
//! The lab-frame equations
//!
//! ```text
//! ρ̇00 = 2μE·Im ρ01 + Γ1 − Γ2·ρ00
//! ρ̇01 = iω·ρ01 − iμE(2ρ00 − 1) − Γ̃·ρ01
//! ```
//!
//! are integrated for σ = ρ01·e^{−iωt}, which removes the free precession
//! from the stepper while keeping the full (counter-rotating) coupling.
//! The RWA equations drop the counter-rotating part:
//!
//! ```text
//! ρ̇00 = 2·Im(μ·ε·σ) + Γ1 − Γ2·ρ00
//! σ̇   = −i(2ρ00 − 1)·(μ·ε)* − Γ̃·σ
//! ```

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{NoiseRates, QubitState, SystemParams, STATE_TOL};
use crate::profiles::{PhaseProfile, Population};
use crate::synthesis::ControlField;

/// Coherence modulus below which the phase is reported as undefined.
pub const PHASE_UNDEFINED_BELOW: f64 = 1e-6;

/// Anything that can drive the qubit.
pub trait Drive {
    /// Real lab-frame field E(t).
    fn field(&self, t: f64) -> Result<f64>;
    /// Rotating-frame envelope μ·ε(t).
    fn rwa_coupling(&self, t: f64) -> Result<Complex64>;
}

impl<P: Population> Drive for ControlField<P> {
    fn field(&self, t: f64) -> Result<f64> {
        ControlField::field(self, t)
    }

    fn rwa_coupling(&self, t: f64) -> Result<Complex64> {
        self.rwa_envelope(t)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroField;

impl Drive for ZeroField {
    fn field(&self, _t: f64) -> Result<f64> {
        Ok(0.0)
    }

    fn rwa_coupling(&self, _t: f64) -> Result<Complex64> {
        Ok(Complex64::new(0.0, 0.0))
    }
}

/// Drive given by closures for E(t) and μ·ε(t).
pub struct FnDrive<F, G> {
    pub field: F,
    pub coupling: G,
}

impl<F, G> Drive for FnDrive<F, G>
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> Complex64,
{
    fn field(&self, t: f64) -> Result<f64> {
        Ok((self.field)(t))
    }

    fn rwa_coupling(&self, t: f64) -> Result<Complex64> {
        Ok((self.coupling)(t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    Lab,
    Rwa,
}

/// Dense propagation record. States are lab-frame density matrices.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub frame: Frame,
    pub omega: f64,
    pub times: Vec<f64>,
    pub states: Vec<QubitState>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.rho00).collect()
    }

    pub fn coherences(&self) -> Vec<f64> {
        self.states.iter().map(QubitState::coherence).collect()
    }

    /// Unwrapped interaction-picture phase, `None` where C < 1e-6.
    pub fn phases(&self) -> Vec<Option<f64>> {
        extract_phase(self, self.omega)
    }

    pub fn last(&self) -> Option<&QubitState> {
        self.states.last()
    }
}

/// Interaction-picture phase arg(ρ01·e^{−iωt}), unwrapped across the
/// phase-defined samples.
pub fn extract_phase(traj: &Trajectory, omega: f64) -> Vec<Option<f64>> {
    let mut prev: Option<f64> = None;
    traj.times
        .iter()
        .zip(&traj.states)
        .map(|(&t, s)| {
            let rho = s.rho01();
            if rho.norm() < PHASE_UNDEFINED_BELOW {
                return None;
            }
            let raw = (rho * Complex64::from_polar(1.0, -omega * t)).arg();
            let v = match prev {
                None => raw,
                Some(p) => raw + 2.0 * PI * ((p - raw) / (2.0 * PI)).round(),
            };
            prev = Some(v);
            Some(v)
        })
        .collect()
}

/// Distance between two angles on the circle, in [0, π].
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

/// Default lab step: 100 points per carrier period, at most t_f/10⁵.
pub fn default_lab_dt(params: &SystemParams, t_f: f64) -> f64 {
    (params.period() / 100.0).min(t_f / 1e5)
}

/// Default RWA step: t_f/10⁴.
pub fn default_rwa_dt(t_f: f64) -> f64 {
    t_f / 1e4
}

type Vec3 = [f64; 3];

fn axpy(y: &Vec3, h: f64, k: &Vec3) -> Vec3 {
    [y[0] + h * k[0], y[1] + h * k[1], y[2] + h * k[2]]
}

fn rk4_step<F>(f: &F, t: f64, y: &Vec3, h: f64) -> Result<Vec3>
where
    F: Fn(f64, &Vec3) -> Result<Vec3>,
{
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * h, &axpy(y, 0.5 * h, &k1))?;
    let k3 = f(t + 0.5 * h, &axpy(y, 0.5 * h, &k2))?;
    let k4 = f(t + h, &axpy(y, h, &k3))?;
    Ok([
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        y[2] + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
    ])
}

fn step_count(t_f: f64, dt: f64) -> usize {
    // guards against t_f/(t_f/n) rounding up to n + 1
    ((t_f / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

fn lab_state(omega: f64, t: f64, y: &Vec3) -> QubitState {
    let rho01 = Complex64::new(y[1], y[2]) * Complex64::from_polar(1.0, omega * t);
    QubitState::unchecked(y[0], rho01)
}

fn integrate<F>(
    rhs: F,
    frame: Frame,
    omega: f64,
    rho0: &QubitState,
    t_f: f64,
    dt: f64,
) -> Result<Trajectory>
where
    F: Fn(f64, &Vec3) -> Result<Vec3>,
{
    rho0.check(STATE_TOL)?;
    let n = step_count(t_f, dt);
    let h = t_f / n as f64;
    let mut y = [rho0.rho00, rho0.rho01_re, rho0.rho01_im];
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    times.push(0.0);
    states.push(*rho0);
    for i in 0..n {
        let t = h * i as f64;
        y = rk4_step(&rhs, t, &y, h)?;
        let t_next = if i + 1 == n { t_f } else { h * (i + 1) as f64 };
        let s = lab_state(omega, t_next, &y);
        let v = s.positivity_violation();
        if v.is_nan() || v > STATE_TOL {
            return Err(Error::Integration {
                time: t_next,
                reason: format!("density matrix left the physical set (violation {v:.3e})"),
            });
        }
        times.push(t_next);
        states.push(s);
    }
    Ok(Trajectory {
        frame,
        omega,
        times,
        states,
    })
}

fn check_horizon(t_f: f64, dt: f64) -> Result<()> {
    if !(t_f > 0.0 && t_f.is_finite()) {
        return Err(Error::domain("t_f", "must be positive and finite"));
    }
    if !(dt > 0.0 && dt <= t_f) {
        return Err(Error::domain("dt", "must lie in (0, t_f]"));
    }
    Ok(())
}

/// Full (non-RWA) master equation with RK4 on a uniform grid of at most
/// `dt` spacing. `rho0` carries a lab-frame coherence at t = 0.
pub fn propagate_lab<D: Drive + ?Sized>(
    params: &SystemParams,
    rates: &NoiseRates,
    drive: &D,
    rho0: &QubitState,
    t_f: f64,
    dt: f64,
) -> Result<Trajectory> {
    check_horizon(t_f, dt)?;
    if dt > params.period() / 40.0 {
        return Err(Error::domain(
            "dt",
            "must resolve the carrier (at most 1/40 of a period)",
        ));
    }
    let omega = params.omega;
    let mu = params.mu;
    let rhs = |t: f64, y: &Vec3| -> Result<Vec3> {
        let e = mu * drive.field(t)?;
        let (s, c) = (omega * t).sin_cos();
        let im_rho = y[1] * s + y[2] * c;
        let inv = 2.0 * y[0] - 1.0;
        Ok([
            2.0 * e * im_rho + rates.gamma1 - rates.gamma2 * y[0],
            -e * inv * s - rates.gamma_total * y[1],
            -e * inv * c - rates.gamma_total * y[2],
        ])
    };
    integrate(rhs, Frame::Lab, omega, rho0, t_f, dt)
}

/// Rotating-frame master equation driven by the complex envelope.
pub fn propagate_rwa<D: Drive + ?Sized>(
    params: &SystemParams,
    rates: &NoiseRates,
    drive: &D,
    rho0: &QubitState,
    t_f: f64,
    dt: f64,
) -> Result<Trajectory> {
    check_horizon(t_f, dt)?;
    if params.omega_p != params.omega {
        return Err(Error::domain(
            "omega_p",
            "RWA propagation assumes resonance",
        ));
    }
    if dt > t_f / 1000.0 {
        return Err(Error::domain("dt", "must be at most t_f/1000"));
    }
    let rhs = |t: f64, y: &Vec3| -> Result<Vec3> {
        let g = drive.rwa_coupling(t)?;
        let sigma = Complex64::new(y[1], y[2]);
        let inv = 2.0 * y[0] - 1.0;
        let ds = Complex64::new(0.0, -inv) * g.conj() - rates.gamma_total * sigma;
        Ok([
            2.0 * (g * sigma).im + rates.gamma1 - rates.gamma2 * y[0],
            ds.re,
            ds.im,
        ])
    };
    integrate(rhs, Frame::Rwa, params.omega, rho0, t_f, dt)
}

/// Observed order estimates from successive step halvings.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub steps: Vec<f64>,
    /// log2 of successive difference ratios; one fewer than the differences.
    pub orders: Vec<f64>,
    pub order: f64,
    /// False when the estimates disagree or the differences hit round-off.
    pub reliable: bool,
}

const ROUNDOFF_FLOOR: f64 = 1e-13;

/// Runs `run(dt / 2^j)` for `j < levels` and estimates the global order
/// from the max-norm differences between consecutive final states.
pub fn convergence_check<F>(run: F, dt: f64, levels: usize) -> Result<ConvergenceReport>
where
    F: Fn(f64) -> Result<QubitState>,
{
    if levels < 3 {
        return Err(Error::domain(
            "levels",
            "need at least three refinement levels",
        ));
    }
    let steps: Vec<f64> = (0..levels).map(|j| dt / 2f64.powi(j as i32)).collect();
    let finals = steps.iter().map(|&h| run(h)).collect::<Result<Vec<_>>>()?;
    let diffs: Vec<f64> = finals
        .windows(2)
        .map(|w| {
            (w[0].rho00 - w[1].rho00)
                .abs()
                .max((w[0].rho01_re - w[1].rho01_re).abs())
                .max((w[0].rho01_im - w[1].rho01_im).abs())
        })
        .collect();
    let orders: Vec<f64> = diffs.windows(2).map(|d| (d[0] / d[1]).log2()).collect();
    let order = *orders.last().expect("levels >= 3");
    let consistent = orders.windows(2).all(|o| (o[0] - o[1]).abs() < 0.3);
    let above_roundoff = diffs.iter().all(|&d| d > ROUNDOFF_FLOOR);
    Ok(ConvergenceReport {
        steps,
        orders,
        order,
        reliable: consistent && above_roundoff && order.is_finite(),
    })
}

/// Deviations of a trajectory from a (P, Φ) prescription.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingErrors {
    pub max_population: f64,
    pub max_phase: f64,
    pub final_population: f64,
    /// `None` when the final sample is phase-undefined.
    pub final_phase: Option<f64>,
    pub phase_samples: usize,
}

/// Compares populations and circular phase distances on phase-defined
/// samples.
pub fn tracking_errors<P: Population + ?Sized>(
    traj: &Trajectory,
    population: &P,
    phase: &PhaseProfile,
) -> TrackingErrors {
    let phases = traj.phases();
    let mut out = TrackingErrors {
        max_population: 0.0,
        max_phase: 0.0,
        final_population: 0.0,
        final_phase: None,
        phase_samples: 0,
    };
    for ((&t, s), phi) in traj.times.iter().zip(&traj.states).zip(&phases) {
        let dp = (s.rho00 - population.value_and_rate(t).0).abs();
        out.max_population = out.max_population.max(dp);
        out.final_population = dp;
        out.final_phase = phi.map(|v| circular_distance(v, phase.value_and_rate(t).0));
        if let Some(d) = out.final_phase {
            out.max_phase = out.max_phase.max(d);
            out.phase_samples += 1;
        }
    }
    out
}

/// CSV with header `t,P_num,C_num,Phi_num,rho01_re,rho01_im`; undefined
/// phases are written as `NaN`.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, mut w: W) -> Result<()> {
    writeln!(w, "t,P_num,C_num,Phi_num,rho01_re,rho01_im")?;
    for ((&t, s), phi) in traj.times.iter().zip(&traj.states).zip(traj.phases()) {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            t,
            s.rho00,
            s.coherence(),
            phi.unwrap_or(f64::NAN),
            s.rho01_re,
            s.rho01_im
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::derive_rates;
    use approx::assert_relative_eq;

    fn params() -> SystemParams {
        SystemParams::new(0.02, 6.0).unwrap()
    }

    #[test]
    fn free_relaxation_from_excited_state() {
        let r = derive_rates(0.0, 1e-3, 0.0).unwrap();
        let rho0 = QubitState::unchecked(0.0, Complex64::new(0.0, 0.0));
        let p = params();
        let traj = propagate_lab(
            &p,
            &r,
            &ZeroField,
            &rho0,
            1000.0,
            default_lab_dt(&p, 1000.0),
        )
        .unwrap();
        for (&t, s) in traj.times.iter().zip(&traj.states) {
            let exact = 1.0 - (-2e-3 * t).exp();
            assert!((s.rho00 - exact).abs() <= 1e-8 * exact.max(1e-300) || t == 0.0);
        }
    }

    #[test]
    fn free_coherence_decays_with_fixed_phase() {
        let r = derive_rates(2e-3, 1e-3, 0.3).unwrap();
        let rho0 = QubitState::from_polar(0.6, 0.3, 0.7).unwrap();
        let p = params();
        let traj =
            propagate_lab(&p, &r, &ZeroField, &rho0, 800.0, default_lab_dt(&p, 800.0)).unwrap();
        let phases = traj.phases();
        for ((&t, s), phi) in traj.times.iter().zip(&traj.states).zip(&phases) {
            assert_relative_eq!(
                s.coherence(),
                0.3 * (-r.gamma_total * t).exp(),
                max_relative = 1e-9
            );
            assert!((phi.unwrap() - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn frames_coincide_without_field() {
        let r = derive_rates(1e-3, 2e-3, 0.5).unwrap();
        let rho0 = QubitState::from_polar(0.9, 0.1, -1.0).unwrap();
        let p = params();
        let a = propagate_lab(&p, &r, &ZeroField, &rho0, 500.0, 0.05).unwrap();
        let b = propagate_rwa(&p, &r, &ZeroField, &rho0, 500.0, 0.05).unwrap();
        let (sa, sb) = (a.last().unwrap(), b.last().unwrap());
        assert!((sa.rho00 - sb.rho00).abs() < 1e-14);
        assert!((sa.rho01() - sb.rho01()).norm() < 1e-14);
    }

    #[test]
    fn unitary_free_evolution_is_static() {
        let rho0 = QubitState::from_polar(0.5, 0.5, 0.3).unwrap();
        let p = params();
        let traj = propagate_lab(
            &p,
            &NoiseRates::zero(),
            &ZeroField,
            &rho0,
            3500.0,
            default_lab_dt(&p, 3500.0),
        )
        .unwrap();
        let p0 = rho0.purity();
        assert!(traj.states.iter().all(|s| (s.purity() - p0).abs() < 1e-12));
    }

    #[test]
    fn step_validation() {
        let p = params();
        let r = NoiseRates::zero();
        let g = QubitState::ground();
        assert!(propagate_lab(&p, &r, &ZeroField, &g, 100.0, 10.0).is_err());
        assert!(propagate_lab(&p, &r, &ZeroField, &g, 1.0, 2.0).is_err());
        assert!(propagate_rwa(&p, &r, &ZeroField, &g, 100.0, 0.5).is_err());
        let bad = QubitState::unchecked(0.5, Complex64::new(0.6, 0.0));
        assert!(propagate_lab(&p, &r, &ZeroField, &bad, 100.0, 0.1).is_err());
    }

    #[test]
    fn grid_lands_on_horizon() {
        let p = params();
        let traj = propagate_lab(
            &p,
            &NoiseRates::zero(),
            &ZeroField,
            &QubitState::ground(),
            100.0,
            0.3,
        )
        .unwrap();
        assert_eq!(*traj.times.last().unwrap(), 100.0);
        assert_eq!(traj.len(), 335);
    }

    #[test]
    fn phase_undefined_for_zero_coherence() {
        let p = params();
        let traj = propagate_lab(
            &p,
            &NoiseRates::zero(),
            &ZeroField,
            &QubitState::ground(),
            10.0,
            0.1,
        )
        .unwrap();
        assert!(traj.phases().iter().all(Option::is_none));
    }

    #[test]
    fn unwrapping_removes_jumps() {
        let times: Vec<f64> = (0..200).map(|i| i as f64).collect();
        let states = times
            .iter()
            .map(|&t| QubitState::from_polar(0.5, 0.4, 0.1 * t).unwrap())
            .collect();
        let traj = Trajectory {
            frame: Frame::Rwa,
            omega: 0.0,
            times,
            states,
        };
        let ph = traj.phases();
        for (i, v) in ph.iter().enumerate() {
            assert!((v.unwrap() - 0.1 * i as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn circular_distance_wraps() {
        assert!(circular_distance(0.1, 2.0 * PI - 0.1) - 0.2 < 1e-15);
        assert!((circular_distance(3.0 * PI, 0.0) - PI).abs() < 1e-12);
        assert_eq!(circular_distance(1.0, 1.0), 0.0);
    }

    #[test]
    fn rk4_order_on_driven_problem() {
        let p = params();
        let r = derive_rates(1e-3, 1e-3, 0.2).unwrap();
        let drive = FnDrive {
            field: |t: f64| 2e-3 * (0.02 * t).sin(),
            coupling: |_t: f64| Complex64::new(0.0, 6e-3),
        };
        let rep = convergence_check(
            |h| {
                propagate_lab(&p, &r, &drive, &QubitState::ground(), 400.0, h)
                    .map(|t| *t.last().unwrap())
            },
            400.0 / 256.0,
            4,
        )
        .unwrap();
        assert!(rep.reliable, "{rep:?}");
        assert!((3.7..=4.3).contains(&rep.order), "{rep:?}");
    }

    #[test]
    fn roundoff_limited_refinement_is_unreliable() {
        let p = params();
        let rep = convergence_check(
            |h| {
                propagate_lab(
                    &p,
                    &NoiseRates::zero(),
                    &ZeroField,
                    &QubitState::ground(),
                    10.0,
                    h,
                )
                .map(|t| *t.last().unwrap())
            },
            0.1,
            3,
        )
        .unwrap();
        assert!(!rep.reliable);
        assert!(convergence_check(|_| Ok(QubitState::ground()), 0.1, 2).is_err());
    }

    #[test]
    fn csv_shape() {
        let p = params();
        let traj = propagate_lab(
            &p,
            &NoiseRates::zero(),
            &ZeroField,
            &QubitState::ground(),
            1.0,
            0.5,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,P_num,C_num,Phi_num,rho01_re,rho01_im");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].contains("NaN"));
    }
}
