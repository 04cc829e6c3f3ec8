//! Which (Pi → Pf) transitions a prescription family can realize, with and
//! without noise.
//!
//! A transition is accessible when the implied C²(t) stays nonnegative
//! (within [`FEAS_TOL`]) on a uniform time grid. The unitary and noisy
//! verdicts are kept separately because noise can open transitions that are
//! closed unitarily when thermal relaxation is present.

use std::io::Write;

use serde::Serialize;

use crate::coherence::{
    asymptotic_coherence, coherence_unitary, CoherenceSolution, Strategy, FEAS_TOL,
};
use crate::error::{Error, Result};
use crate::model::{mixedness_constant, NoiseRates};
use crate::parallel::{map_indexed, Execution};
use crate::profiles::{Population, PopulationProfile};

pub const DEFAULT_GRID: usize = 201;
pub const DEFAULT_TIME_SAMPLES: usize = 400;
pub const MIN_TIME_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Class {
    /// C0² exceeds Pi − Pi².
    InvalidInitial,
    /// Closed with and without noise.
    UnitaryInaccessible,
    /// Open unitarily, closed with noise.
    UnitaryOnly,
    /// Open with noise.
    NoiseAccessible,
}

impl Class {
    pub fn code(self) -> u8 {
        match self {
            Class::InvalidInitial => 0,
            Class::UnitaryInaccessible => 1,
            Class::UnitaryOnly => 2,
            Class::NoiseAccessible => 3,
        }
    }

    /// Heatmap gray level: white, light, dark, black for invalid.
    pub fn gray(self) -> u8 {
        match self {
            Class::InvalidInitial => 0,
            Class::UnitaryInaccessible => 255,
            Class::UnitaryOnly => 170,
            Class::NoiseAccessible => 85,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub class: Class,
    pub unitary_ok: bool,
    pub noisy_ok: bool,
}

impl Cell {
    const INVALID: Cell = Cell {
        class: Class::InvalidInitial,
        unitary_ok: false,
        noisy_ok: false,
    };

    fn from_flags(unitary_ok: bool, noisy_ok: bool) -> Self {
        let class = if noisy_ok {
            Class::NoiseAccessible
        } else if unitary_ok {
            Class::UnitaryOnly
        } else {
            Class::UnitaryInaccessible
        };
        Cell {
            class,
            unitary_ok,
            noisy_ok,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MapMetadata {
    pub gamma: f64,
    #[serde(rename = "Gamma")]
    pub big_gamma: f64,
    pub nbar: f64,
    pub c0: f64,
    pub t_f: f64,
    pub n_grid: usize,
    pub n_t: usize,
}

/// Classification over a uniform (Pi, Pf) grid on [0, 1]².
#[derive(Debug, Clone, PartialEq)]
pub struct ReachabilityGrid {
    pub axis: Vec<f64>,
    /// Row-major in Pi: `cells[i_pi * n + i_pf]`.
    pub cells: Vec<Cell>,
    pub metadata: MapMetadata,
}

impl ReachabilityGrid {
    pub fn n(&self) -> usize {
        self.axis.len()
    }

    pub fn cell(&self, i_pi: usize, i_pf: usize) -> Cell {
        self.cells[i_pi * self.n() + i_pf]
    }

    pub fn count(&self, class: Class) -> usize {
        self.cells.iter().filter(|c| c.class == class).count()
    }

    /// Cells open with noise but closed unitarily.
    pub fn dark_outside_light(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| c.noisy_ok && !c.unitary_ok)
            .count()
    }

    /// CSV `Pi,Pf,class`, Pi-major.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "Pi,Pf,class")?;
        for (i, &pi) in self.axis.iter().enumerate() {
            for (j, &pf) in self.axis.iter().enumerate() {
                writeln!(
                    w,
                    "{:.16e},{:.16e},{}",
                    pi,
                    pf,
                    self.cell(i, j).class.code()
                )?;
            }
        }
        Ok(())
    }

    /// Binary PGM: columns are Pi ascending, rows are Pf descending.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.n();
        write!(
            w,
            "P5\n# columns: Pi 0..1 left to right; rows: Pf 1..0 top to bottom; 255 inaccessible, 170 unitary only, 85 noise accessible, 0 invalid initial state\n{n} {n}\n255\n"
        )?;
        let mut buf = Vec::with_capacity(n * n);
        for j in (0..n).rev() {
            for i in 0..n {
                buf.push(self.cell(i, j).class.gray());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }
}

fn min_unitary_csq<P: Population>(
    profile: &P,
    k: crate::model::MixednessConstant,
    n_t: usize,
) -> f64 {
    let t_f = profile.t_final();
    (0..n_t)
        .map(|i| {
            let t = t_f * i as f64 / (n_t - 1) as f64;
            coherence_unitary(profile.value_and_rate(t).0, k)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Classifies one transition for an arbitrary profile family.
pub fn classify_with<P, F>(
    family: &F,
    pi: f64,
    pf: f64,
    rates: &NoiseRates,
    c0: f64,
    t_f: f64,
    n_t: usize,
) -> Result<Cell>
where
    P: Population,
    F: Fn(f64, f64, f64) -> Result<P>,
{
    if n_t < MIN_TIME_SAMPLES {
        return Err(Error::domain("n_t", "need at least 100 time samples"));
    }
    let k = match mixedness_constant(pi, c0) {
        Ok(k) => k,
        Err(_) => return Ok(Cell::INVALID),
    };
    let profile = family(pi, pf, t_f)?;
    let unitary_ok = min_unitary_csq(&profile, k, n_t) >= -FEAS_TOL;
    let noisy_ok = if rates.is_unitary() {
        unitary_ok
    } else {
        CoherenceSolution::from_mixedness(profile, *rates, k, c0, Strategy::Auto, n_t)?.feasible()
    };
    Ok(Cell::from_flags(unitary_ok, noisy_ok))
}

fn sine_squared_family(pi: f64, pf: f64, t_f: f64) -> Result<PopulationProfile> {
    PopulationProfile::sine_squared(pi, pf, t_f)
}

/// Sine-squared transition Pi → Pf. Inputs outside the physical range
/// classify as invalid.
pub fn classify_transition(
    pi: f64,
    pf: f64,
    rates: &NoiseRates,
    c0: f64,
    t_f: f64,
    n_t: usize,
) -> Result<Class> {
    if !(0.0..=1.0).contains(&pi) || !(0.0..=1.0).contains(&pf) || c0.is_nan() || c0 < 0.0 {
        return Ok(Class::InvalidInitial);
    }
    Ok(classify_with(&sine_squared_family, pi, pf, rates, c0, t_f, n_t)?.class)
}

/// Full sine-squared map.
pub fn accessibility_map(
    rates: &NoiseRates,
    c0: f64,
    t_f: f64,
    n_grid: usize,
    n_t: usize,
) -> Result<ReachabilityGrid> {
    accessibility_map_with(
        &sine_squared_family,
        rates,
        c0,
        t_f,
        n_grid,
        n_t,
        Execution::Auto,
    )
}

/// Map for any profile family, evaluated per `exec`.
pub fn accessibility_map_with<P, F>(
    family: &F,
    rates: &NoiseRates,
    c0: f64,
    t_f: f64,
    n_grid: usize,
    n_t: usize,
    exec: Execution,
) -> Result<ReachabilityGrid>
where
    P: Population,
    F: Fn(f64, f64, f64) -> Result<P> + Sync,
{
    if n_grid < 2 {
        return Err(Error::domain("n_grid", "need at least 2 points per axis"));
    }
    if !(c0 >= 0.0 && c0.is_finite()) {
        return Err(Error::domain("C0", "must be finite and >= 0"));
    }
    if n_t < MIN_TIME_SAMPLES {
        return Err(Error::domain("n_t", "need at least 100 time samples"));
    }
    let axis: Vec<f64> = (0..n_grid)
        .map(|i| i as f64 / (n_grid - 1) as f64)
        .collect();
    let cells = map_indexed(n_grid * n_grid, exec, |idx| {
        let (pi, pf) = (axis[idx / n_grid], axis[idx % n_grid]);
        classify_with(family, pi, pf, rates, c0, t_f, n_t)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(ReachabilityGrid {
        axis,
        cells,
        metadata: MapMetadata {
            gamma: rates.gamma,
            big_gamma: rates.big_gamma,
            nbar: rates.nbar,
            c0,
            t_f,
            n_grid,
            n_t,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub p: f64,
    /// Re C∞, zero where C∞² < 0.
    pub re_c: f64,
    pub c_sq: f64,
    /// True where C∞² < 0 was clamped.
    pub clamped: bool,
}

/// Re C∞ over a uniform P grid on [0, 1].
pub fn asymptotic_curve(rates: &NoiseRates, n_points: usize) -> Result<Vec<CurvePoint>> {
    if n_points < 2 {
        return Err(Error::domain("n_points", "need at least 2 points"));
    }
    (0..n_points)
        .map(|i| {
            let p = i as f64 / (n_points - 1) as f64;
            let a = asymptotic_coherence(p, rates)?;
            Ok(CurvePoint {
                p,
                re_c: a.real_part(),
                c_sq: a.squared(),
                clamped: a.squared() < 0.0,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherence::{steady_state_coherence, SteadyState};
    use crate::model::derive_rates;
    use proptest::prelude::*;

    fn deph(gamma: f64) -> NoiseRates {
        derive_rates(gamma, 0.0, 0.0).unwrap()
    }

    #[test]
    fn dephasing_limits_a_transfer() {
        for g in [1e-4, 1e-3] {
            assert_eq!(
                classify_transition(0.9, 0.4, &deph(g), 0.02, 1500.0, 400).unwrap(),
                Class::NoiseAccessible
            );
        }
        assert_eq!(
            classify_transition(0.9, 0.4, &deph(5e-3), 0.02, 1500.0, 400).unwrap(),
            Class::UnitaryOnly
        );
    }

    #[test]
    fn band_excludes_full_population() {
        let c = classify_transition(0.5, 1.0, &NoiseRates::zero(), 0.2, 1500.0, 400).unwrap();
        assert_eq!(c, Class::UnitaryInaccessible);
        assert_eq!(
            classify_transition(0.5, 0.69, &NoiseRates::zero(), 0.2, 1500.0, 400).unwrap(),
            Class::NoiseAccessible
        );
    }

    #[test]
    fn invalid_initial_state() {
        let c = classify_transition(0.99, 0.5, &deph(1e-3), 0.2, 1500.0, 400).unwrap();
        assert_eq!(c, Class::InvalidInitial);
        assert!(classify_transition(0.5, 0.5, &deph(1e-3), 0.1, 1500.0, 10).is_err());
    }

    #[test]
    fn pure_initial_band_is_between_pi_and_its_mirror() {
        let g = accessibility_map(&NoiseRates::zero(), 0.0, 1500.0, 21, 400).unwrap();
        for (i, &pi) in g.axis.iter().enumerate() {
            for (j, &pf) in g.axis.iter().enumerate() {
                let lo = pi.min(1.0 - pi) - 1e-12;
                let hi = pi.max(1.0 - pi) + 1e-12;
                let expect = (lo..=hi).contains(&pf);
                assert_eq!(g.cell(i, j).unitary_ok, expect, "Pi={pi} Pf={pf}");
            }
        }
    }

    #[test]
    fn unitary_map_is_mirror_symmetric() {
        let g = accessibility_map(&NoiseRates::zero(), 0.0, 1500.0, 31, 200).unwrap();
        let n = g.n();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(
                    g.cell(i, j).unitary_ok,
                    g.cell(n - 1 - i, n - 1 - j).unitary_ok
                );
            }
        }
    }

    #[test]
    fn thermal_noise_opens_cells() {
        let r = derive_rates(1e-3, 1e-3, 0.3).unwrap();
        let g = accessibility_map(&r, 0.02, 1500.0, 41, 400).unwrap();
        assert!(g.dark_outside_light() > 0);
    }

    #[test]
    fn minimal_grid_and_outputs() {
        let g = accessibility_map(&deph(1e-3), 0.0, 100.0, 2, 100).unwrap();
        assert_eq!(g.cells.len(), 4);
        let mut csv = Vec::new();
        g.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 5);
        let mut pgm = Vec::new();
        g.write_pgm(&mut pgm).unwrap();
        assert!(pgm.starts_with(b"P5\n#"));
        // two rows of two pixels after the header
        assert_eq!(
            &pgm[pgm.len() - 4..],
            &[
                g.cell(0, 1).class.gray(),
                g.cell(1, 1).class.gray(),
                g.cell(0, 0).class.gray(),
                g.cell(1, 0).class.gray()
            ]
        );
        assert!(accessibility_map(&deph(1e-3), 0.0, 100.0, 1, 100).is_err());
    }

    #[test]
    fn sequential_and_parallel_maps_match() {
        let r = derive_rates(1e-3, 1e-4, 0.3).unwrap();
        let a = accessibility_map_with(
            &sine_squared_family,
            &r,
            0.2,
            1500.0,
            15,
            150,
            Execution::Auto,
        )
        .unwrap();
        let b = accessibility_map_with(
            &sine_squared_family,
            &r,
            0.2,
            1500.0,
            15,
            150,
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn asymptotic_curve_shapes() {
        let zero_t = derive_rates(1e-3, 1e-3, 0.0).unwrap();
        for pt in asymptotic_curve(&zero_t, 101).unwrap() {
            let inside = pt.p > 0.5 + 1e-12 && pt.p < 1.0 - 1e-12;
            assert_eq!(pt.re_c > 0.0, inside, "P={}", pt.p);
        }
        for pt in asymptotic_curve(&deph(1e-3), 11).unwrap() {
            assert_eq!(pt.re_c, 0.0);
        }
        assert!(asymptotic_curve(&NoiseRates::zero(), 11).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn steady_diagonal_is_noise_accessible(p in 0.05f64..0.95, g in 1e-4f64..5e-3, big in 1e-5f64..1e-3, nbar in 0.0f64..1.0) {
            let r = derive_rates(g, big, nbar).unwrap();
            if let SteadyState::Steady { c0, .. } = steady_state_coherence(p, &r).unwrap() {
                // c0 from √λ-consistent k may sit a few ulps above P − P²
                if mixedness_constant(p, c0).is_ok() {
                    prop_assert_eq!(classify_transition(p, p, &r, c0, 1500.0, 200).unwrap(), Class::NoiseAccessible);
                }
            }
        }

        #[test]
        fn dephasing_never_opens_cells(pi in 0.0f64..1.0, pf in 0.0f64..1.0, g in 1e-5f64..1e-2, c0 in 0.0f64..0.3) {
            let fam = sine_squared_family;
            let cell = classify_with(&fam, pi, pf, &deph(g), c0, 1500.0, 200).unwrap();
            prop_assert!(!cell.noisy_ok || cell.unitary_ok);
        }
    }
}
