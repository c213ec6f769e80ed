//! Survival amplitude of the discrete level, `A(tau) = int w(lambda)
//! e^{-i lambda tau} dlambda` with the spectral weight
//! `w = rho / |h_+|^2`, and its comparison with pure exponential decay.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denominator::{self, ResonancePole};
use crate::error::{Error, Result};
use crate::model::{Model, SpectralDensity};
use crate::quad;

/// Largest accepted `tau * panel width`.
pub const RESOLUTION_LIMIT: f64 = 10.0;

/// Gauss-Legendre nodes per panel.
const PANEL_ORDER: usize = 16;

/// Half-width of the integration window around the level for densities with
/// unbounded support.
const FLAT_HALF_RANGE: f64 = 400.0;
const LORENTZIAN_HALF_RANGE: f64 = 200.0;

/// Controls the construction of the spectral measure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureOptions {
    /// Largest time at which the amplitude will be requested.
    pub tau_max: f64,
    /// Refinement stops when doubling the panel count moves `|A(tau_max)|`
    /// by less than this.
    pub refine_tol: f64,
    pub max_doublings: usize,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        MeasureOptions {
            tau_max: 20.0,
            refine_tol: 1e-7,
            max_doublings: 6,
        }
    }
}

impl MeasureOptions {
    pub fn up_to(tau_max: f64) -> Self {
        MeasureOptions {
            tau_max,
            ..Default::default()
        }
    }
}

/// Tabulated `w(lambda) = rho / |h_+|^2` with quadrature weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralMeasure {
    pub grid: Vec<f64>,
    pub weights: Vec<f64>,
    /// Quadrature weight of each node.
    pub quad_weights: Vec<f64>,
    /// Model line shape `a / ((lambda - c)^2 + 1)` removed before quadrature
    /// and added back analytically, as `(a, c)`.
    pub subtracted: Option<(f64, f64)>,
    pub total_mass: f64,
    /// Widest panel, which bounds the resolvable time.
    pub max_panel: f64,
}

fn window(model: &Model) -> (f64, f64) {
    let w = model.params.omega_v;
    match &model.density {
        SpectralDensity::Flat { .. } => (w - FLAT_HALF_RANGE, w + FLAT_HALF_RANGE),
        SpectralDensity::Lorentzian { center, .. } => (
            w.min(*center) - LORENTZIAN_HALF_RANGE,
            w.max(*center) + LORENTZIAN_HALF_RANGE,
        ),
        SpectralDensity::Tabulated { .. } => model.density.support(),
        d => {
            let (a, b) = d.support();
            (a.min(w - 1.0), b.max(w + 1.0))
        }
    }
}

/// Panel edges graded geometrically away from the resonance peak.
fn panel_edges(lo: f64, hi: f64, peak: f64, width: f64, h_max: f64) -> Vec<f64> {
    let h0 = (width / 8.0).min(h_max).max(1e-9);
    let peak = peak.clamp(lo, hi);
    let side = |dir: f64, limit: f64| {
        let mut out = Vec::new();
        let mut x = peak;
        let mut h = h0;
        loop {
            let next = x + dir * h;
            if (dir > 0.0 && next >= limit) || (dir < 0.0 && next <= limit) {
                // merge a sliver into the previous panel
                if (limit - x).abs() < 0.25 * h && !out.is_empty() {
                    out.pop();
                }
                out.push(limit);
                break;
            }
            out.push(next);
            x = next;
            h = (h * 1.15).min(h_max);
        }
        out
    };
    let mut edges: Vec<f64> = side(-1.0, lo).into_iter().rev().collect();
    if peak > lo && peak < hi {
        edges.push(peak);
    }
    edges.extend(side(1.0, hi));
    edges.dedup();
    edges
}

fn build(model: &Model, h_max: f64, peak: f64, width: f64) -> Result<SpectralMeasure> {
    let (lo, hi) = window(model);
    let edges = panel_edges(lo, hi, peak, width, h_max);
    let (x, wq) = quad::gauss_legendre(PANEL_ORDER);
    let mut grid = Vec::with_capacity(edges.len() * PANEL_ORDER);
    let mut quad_weights = Vec::with_capacity(grid.capacity());
    let mut max_panel: f64 = 0.0;
    for e in edges.windows(2) {
        let (a, b) = (e[0], e[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        max_panel = max_panel.max(b - a);
        for i in 0..PANEL_ORDER {
            grid.push(mid + half * x[i]);
            quad_weights.push(half * wq[i]);
        }
    }
    let values: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&l| {
            let b = denominator::h_boundary(model, l)?;
            let h2 = b.h_plus.norm_sqr();
            if h2 == 0.0 {
                return Err(Error::BoundState(l));
            }
            Ok((b.rho / h2, b.h_plus.re))
        })
        .collect::<Result<_>>()?;
    // a real zero of h: Re h changes sign where the density vanishes
    let scale = values.iter().map(|v| v.0).fold(0.0, f64::max);
    for (i, pair) in values.windows(2).enumerate() {
        let tiny = |w: f64| w <= 1e-14 * scale || w == 0.0;
        let rho_small = |k: usize| {
            let l = grid[k];
            model.rho(l).map(|r| r <= 1e-12).unwrap_or(false)
        };
        if pair[0].1.signum() != pair[1].1.signum()
            && (tiny(pair[0].0) || rho_small(i))
            && (tiny(pair[1].0) || rho_small(i + 1))
        {
            return Err(Error::BoundState(0.5 * (grid[i] + grid[i + 1])));
        }
    }
    let weights: Vec<f64> = values.iter().map(|v| v.0).collect();
    let inf = model.density.asymptote(&model.params);
    let subtracted = (inf > 0.0).then_some((inf, model.params.omega_v));
    let mut m = SpectralMeasure {
        grid,
        weights,
        quad_weights,
        subtracted,
        total_mass: 1.0,
        max_panel,
    };
    m.total_mass = m.raw_transform(0.0).re;
    Ok(m)
}

/// Tabulates the spectral weight of the discrete level.
pub fn spectral_measure(model: &Model, opts: MeasureOptions) -> Result<SpectralMeasure> {
    if model.params.is_free() {
        return Err(Error::BoundState(model.params.omega_v));
    }
    if !(opts.tau_max >= 0.0) {
        return Err(Error::Invalid("tau_max must be nonnegative".into()));
    }
    let est = denominator::weak_coupling_estimate(model)?;
    let peak = est.re;
    let width = est.im.abs().max(1e-6);
    let mut h_max = (4.0 / opts.tau_max.max(1e-3)).min(1.0);
    let mut m = build(model, h_max, peak, width)?;
    let probe = opts.tau_max;
    let mut prev = m.raw_transform(probe).norm() / m.total_mass;
    for _ in 0..opts.max_doublings {
        h_max *= 0.5;
        let next = build(model, h_max, peak, width)?;
        let val = next.raw_transform(probe).norm() / next.total_mass;
        m = next;
        if (val - prev).abs() < opts.refine_tol {
            return Ok(m);
        }
        prev = val;
    }
    log::warn!(
        "spectral measure refinement stopped after {} doublings",
        opts.max_doublings
    );
    Ok(m)
}

impl SpectralMeasure {
    fn raw_transform(&self, tau: f64) -> Complex64 {
        let mut sum = Complex64::new(0.0, 0.0);
        for ((&l, &w), &q) in self.grid.iter().zip(&self.weights).zip(&self.quad_weights) {
            let v = match self.subtracted {
                Some((a, c)) => w - a / ((l - c) * (l - c) + 1.0),
                None => w,
            };
            sum += q * v * Complex64::from_polar(1.0, -l * tau);
        }
        if let Some((a, c)) = self.subtracted {
            sum += a * PI * Complex64::from_polar((-tau.abs()).exp(), -c * tau);
        }
        sum
    }
}

/// `A(tau)`, normalized so that `A(0) = 1` exactly.
pub fn survival_amplitude(measure: &SpectralMeasure, tau: f64) -> Result<Complex64> {
    if !tau.is_finite() {
        return Err(Error::Invalid(format!("tau = {tau} is not finite")));
    }
    let r = tau.abs() * measure.max_panel;
    if r > RESOLUTION_LIMIT {
        return Err(Error::UnderResolved(r));
    }
    Ok(measure.raw_transform(tau) / measure.total_mass)
}

/// `|A(tau1 + tau2) - A(tau1) A(tau2)|`.
pub fn semigroup_defect(measure: &SpectralMeasure, tau1: f64, tau2: f64) -> Result<f64> {
    let a12 = survival_amplitude(measure, tau1 + tau2)?;
    let a1 = survival_amplitude(measure, tau1)?;
    let a2 = survival_amplitude(measure, tau2)?;
    Ok((a12 - a1 * a2).norm())
}

/// One line of the survival-versus-exponential table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentialRow {
    pub tau: f64,
    pub abs_a: f64,
    /// `e^{Im(mu) tau}`.
    pub exp_model: f64,
    /// `|r| e^{Im(mu) tau}` with the pole residue `r`.
    pub residue_model: f64,
    /// `| |A| - |r| e^{Im(mu) tau} |`.
    pub deviation: f64,
}

pub fn compare_exponential(
    measure: &SpectralMeasure,
    pole: &ResonancePole,
    taus: &[f64],
) -> Result<Vec<ExponentialRow>> {
    let r = pole.residue.norm();
    taus.par_iter()
        .map(|&tau| {
            let abs_a = survival_amplitude(measure, tau)?.norm();
            let exp_model = (pole.mu.im * tau).exp();
            let residue_model = r * exp_model;
            Ok(ExponentialRow {
                tau,
                abs_a,
                exp_model,
                residue_model,
                deviation: (abs_a - residue_model).abs(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denominator::find_pole;

    #[test]
    fn flat_line_shape() {
        let m = Model::flat(0.2);
        let meas = spectral_measure(&m, MeasureOptions::up_to(10.0)).unwrap();
        for (l, w) in meas.grid.iter().zip(&meas.weights).step_by(997) {
            let want = (0.2 / (2.0 * PI)) / ((l - 1.0).powi(2) + 0.01);
            assert!((w - want).abs() < 1e-13 * want.max(1.0));
        }
        assert!((meas.total_mass - 1.0).abs() < 1e-9);
        let a = survival_amplitude(&meas, 5.0).unwrap();
        assert!((a.norm() - (-0.5f64).exp()).abs() < 1e-6);
        assert_eq!(survival_amplitude(&meas, 0.0).unwrap(), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn decoupled_level_has_no_continuum_measure() {
        let m = Model::flat(0.2).with_coupling(0.0);
        assert!(matches!(
            spectral_measure(&m, MeasureOptions::default()),
            Err(Error::BoundState(_))
        ));
    }

    #[test]
    fn lorentzian_mass() {
        let m = Model::lorentzian(1.0, 0.1, 0.2);
        let meas = spectral_measure(&m, MeasureOptions::up_to(10.0)).unwrap();
        assert!((meas.total_mass - 1.0).abs() < 1e-6, "{}", meas.total_mass);
    }

    #[test]
    fn conjugate_symmetry_and_bound() {
        let m = Model::lorentzian(1.0, 0.1, 0.2);
        let meas = spectral_measure(&m, MeasureOptions::up_to(20.0)).unwrap();
        for tau in [0.3, 2.0, 7.5, 20.0] {
            let a = survival_amplitude(&meas, tau).unwrap();
            let b = survival_amplitude(&meas, -tau).unwrap();
            assert!((a - b.conj()).norm() < 1e-14);
            assert!(a.norm() <= 1.0);
        }
    }

    #[test]
    fn resolution_guard() {
        let m = Model::flat(0.2);
        let meas = spectral_measure(&m, MeasureOptions::up_to(1.0)).unwrap();
        assert!(matches!(
            survival_amplitude(&meas, 1e4),
            Err(Error::UnderResolved(_))
        ));
    }

    #[test]
    fn defects() {
        let flat = spectral_measure(&Model::flat(0.2), MeasureOptions::up_to(10.0)).unwrap();
        for (a, b) in [(1.0, 2.0), (2.5, 2.5), (0.1, 4.0)] {
            assert!(semigroup_defect(&flat, a, b).unwrap() < 1e-8);
        }
        let m = Model::lorentzian(1.0, 0.1, 0.2);
        let lor = spectral_measure(&m, MeasureOptions::up_to(10.0)).unwrap();
        assert!(semigroup_defect(&lor, 5.0, 5.0).unwrap() > 1e-3);
        assert_eq!(semigroup_defect(&lor, 0.0, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn exponential_table() {
        let m = Model::flat(0.2);
        let pole = find_pole(&m, Complex64::new(1.0, -0.05)).unwrap();
        let meas = spectral_measure(&m, MeasureOptions::up_to(30.0)).unwrap();
        let rows = compare_exponential(&meas, &pole, &[0.0, 1.0, 10.0, 30.0]).unwrap();
        assert!(rows.iter().all(|r| r.deviation < 1e-6));
        assert_eq!(rows[0].abs_a, 1.0);
        assert_eq!(rows[0].exp_model, 1.0);
    }
}
