use std::f64::consts::PI;

use proptest::prelude::*;

use qutrack_core::coherence::CoherenceSolution;
use qutrack_core::model::{derive_rates, NoiseRates, QubitState, SystemParams};
use qutrack_core::profiles::{PhaseProfile, PopulationProfile};
use qutrack_core::propagate::{
    default_lab_dt, default_rwa_dt, propagate_lab, propagate_rwa, tracking_errors,
};
use qutrack_core::synthesis::{synthesize, SynthesisOptions};

/// Lab-frame population error for a scenario stretched by `s`: horizon
/// times `s`, rates and phase slope divided by `s`, so the field shrinks
/// as 1/s while the carrier stays fixed.
fn lab_error(s: f64) -> f64 {
    let params = SystemParams::new(0.02, 6.0).unwrap();
    let rates = derive_rates(1e-3 / s, 1e-4 / s, 0.3).unwrap();
    let t_f = 1500.0 * s;
    let pop = PopulationProfile::sine_squared(0.2, 0.6, t_f).unwrap();
    let phase = PhaseProfile::quadratic(0.0, 1.5 * PI, 1000.0 * s, None, t_f).unwrap();
    let coh = CoherenceSolution::new(pop, rates, 0.2).unwrap();
    let field = synthesize(phase, coh, params, &rates, SynthesisOptions::default()).unwrap();
    let rho0 = QubitState::from_polar(0.2, 0.2, 0.0).unwrap();
    let rwa = propagate_rwa(&params, &rates, &field, &rho0, t_f, default_rwa_dt(t_f)).unwrap();
    assert!(tracking_errors(&rwa, &pop, &phase).max_population < 1e-9);
    let lab = propagate_lab(
        &params,
        &rates,
        &field,
        &rho0,
        t_f,
        default_lab_dt(&params, t_f),
    )
    .unwrap();
    tracking_errors(&lab, &pop, &phase).max_population
}

#[test]
fn agreement_improves_as_the_drive_weakens() {
    let errs: Vec<f64> = [1.0, 2.0, 4.0].iter().map(|&s| lab_error(s)).collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    assert!(errs[2] < 0.5 * errs[0], "{errs:?}");
}

#[test]
fn field_free_lab_and_rwa_agree_up_to_the_frame() {
    let params = SystemParams::new(0.02, 6.0).unwrap();
    let rates = derive_rates(1e-3, 1e-4, 0.3).unwrap();
    let rho0 = QubitState::from_polar(0.7, 0.3, 0.5).unwrap();
    let t_f = 2000.0;
    let zero = qutrack_core::propagate::ZeroField;
    let lab = propagate_lab(
        &params,
        &rates,
        &zero,
        &rho0,
        t_f,
        default_lab_dt(&params, t_f),
    )
    .unwrap();
    let rwa = propagate_rwa(&params, &rates, &zero, &rho0, t_f, default_rwa_dt(t_f)).unwrap();
    let (a, b) = (lab.last().unwrap(), rwa.last().unwrap());
    assert!((a.rho00 - b.rho00).abs() < 1e-10);
    assert!((a.coherence() - b.coherence()).abs() < 1e-10);
}

fn unitary_rates() -> NoiseRates {
    NoiseRates::zero()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Unitary driven evolution keeps a pure state pure in either frame.
    #[test]
    fn purity_is_conserved_without_noise(pi in 0.55f64..1.0, pf in 0.55f64..1.0, alpha in -2e-3f64..2e-3) {
        let params = SystemParams::new(0.02, 6.0).unwrap();
        let rates = unitary_rates();
        let t_f = 1000.0;
        let pop = PopulationProfile::sine_squared(pi, pf, t_f).unwrap();
        let c0 = (pi - pi * pi).sqrt();
        let coh = CoherenceSolution::new(pop, rates, c0).unwrap();
        let phase = PhaseProfile::linear(alpha, t_f).unwrap();
        let field = synthesize(phase, coh, params, &rates, SynthesisOptions::default()).unwrap();
        let rho0 = QubitState::from_polar(pi, c0, 0.0).unwrap();
        for traj in [
            propagate_lab(&params, &rates, &field, &rho0, t_f, default_lab_dt(&params, t_f)).unwrap(),
            propagate_rwa(&params, &rates, &field, &rho0, t_f, default_rwa_dt(t_f)).unwrap(),
        ] {
            for s in &traj.states {
                prop_assert!((s.purity() - 1.0).abs() < 1e-9);
            }
        }
    }
}
