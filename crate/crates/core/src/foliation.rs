//! Discretized direct-integral space `L^2(R, C^d)` with its incoming and
//! outgoing translation and spectral representations, the subspaces `D+`
//! and `D-`, the compressed evolution `Z(tau) = P_K U(tau) P_K` and the
//! resonant state.
//!
//! Grid conventions: `sigma_j = -Omega + j dsigma`, `dsigma = 2 Omega / N`,
//! and `s_k = (k - N/2) ds`, `ds = pi / Omega`, so that `dsigma ds = 2 pi / N`.
//! The transform pair is
//! `f(s) = (2 pi)^(-1/2) sum_j dsigma e^{i sigma_j s} F_j`, which makes
//! multiplication by `e^{-i sigma tau}` a right shift by `tau`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::denominator::ResonancePole;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::smatrix::{self, AuxiliaryVector};

/// Sampling of the spectral variable and of its conjugate foliation variable.
#[derive(Clone)]
pub struct FoliationGrid {
    n: usize,
    omega: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for FoliationGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FoliationGrid")
            .field("n", &self.n)
            .field("omega", &self.omega)
            .finish()
    }
}

impl PartialEq for FoliationGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.omega == other.omega
    }
}

impl FoliationGrid {
    pub const DEFAULT_N: usize = 1 << 14;
    pub const DEFAULT_OMEGA: f64 = 20.0;

    pub fn new(n: usize, omega: f64) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::Invalid("N must be a power of two".into()));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::Invalid("Omega must be positive".into()));
        }
        let mut planner = FftPlanner::new();
        Ok(FoliationGrid {
            n,
            omega,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn d_sigma(&self) -> f64 {
        2.0 * self.omega / self.n as f64
    }

    pub fn d_s(&self) -> f64 {
        PI / self.omega
    }

    pub fn sigma(&self, j: usize) -> f64 {
        -self.omega + j as f64 * self.d_sigma()
    }

    pub fn s(&self, k: usize) -> f64 {
        (k as f64 - (self.n / 2) as f64) * self.d_s()
    }

    pub fn sigmas(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.sigma(j)).collect()
    }

    pub fn ss(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.s(k)).collect()
    }

    /// Half-width of the foliation window, `N ds / 2`.
    pub fn s_max(&self) -> f64 {
        (self.n / 2) as f64 * self.d_s()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    OutSpectral,
    OutTranslation,
    InSpectral,
    InTranslation,
}

impl Representation {
    pub fn is_spectral(self) -> bool {
        matches!(self, Representation::OutSpectral | Representation::InSpectral)
    }

    pub fn is_incoming(self) -> bool {
        matches!(self, Representation::InSpectral | Representation::InTranslation)
    }

    pub fn name(self) -> &'static str {
        match self {
            Representation::OutSpectral => "out_spectral",
            Representation::OutTranslation => "out_translation",
            Representation::InSpectral => "in_spectral",
            Representation::InTranslation => "in_translation",
        }
    }

    fn dual(self) -> Representation {
        match self {
            Representation::OutSpectral => Representation::OutTranslation,
            Representation::OutTranslation => Representation::OutSpectral,
            Representation::InSpectral => Representation::InTranslation,
            Representation::InTranslation => Representation::InSpectral,
        }
    }
}

/// Grid samples of a vector in `L^2(R, C^d)`: `N` rows, `d` columns.
#[derive(Clone, Debug, PartialEq)]
pub struct FoliatedState {
    pub samples: Array2<Complex64>,
    pub representation: Representation,
    pub grid: FoliationGrid,
}

impl FoliatedState {
    pub fn new(grid: FoliationGrid, representation: Representation, samples: Array2<Complex64>) -> Result<Self> {
        if samples.nrows() != grid.n() || samples.ncols() == 0 {
            return Err(Error::Invalid(format!(
                "state needs {} rows and at least one column, got {:?}",
                grid.n(),
                samples.dim()
            )));
        }
        Ok(FoliatedState {
            samples,
            representation,
            grid,
        })
    }

    /// Samples `f` at every grid point of the representation's variable.
    pub fn from_fn<F>(grid: &FoliationGrid, representation: Representation, d: usize, f: F) -> Self
    where
        F: Fn(f64, usize) -> Complex64,
    {
        let x = if representation.is_spectral() {
            grid.sigmas()
        } else {
            grid.ss()
        };
        let samples = Array2::from_shape_fn((grid.n(), d), |(i, a)| f(x[i], a));
        FoliatedState {
            samples,
            representation,
            grid: grid.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    /// Quadrature weight of one sample, `ds` or `dsigma`.
    pub fn cell(&self) -> f64 {
        if self.representation.is_spectral() {
            self.grid.d_sigma()
        } else {
            self.grid.d_s()
        }
    }

    /// Sample points of the current representation's variable.
    pub fn points(&self) -> Vec<f64> {
        if self.representation.is_spectral() {
            self.grid.sigmas()
        } else {
            self.grid.ss()
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.cell() * self.samples.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `<self, other>` (antilinear in `self`).
    pub fn inner(&self, other: &FoliatedState) -> Result<Complex64> {
        self.same_frame(other)?;
        let s: Complex64 = self
            .samples
            .iter()
            .zip(other.samples.iter())
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(s * self.cell())
    }

    /// `|| self - other ||`.
    pub fn distance(&self, other: &FoliatedState) -> Result<f64> {
        self.same_frame(other)?;
        let d: f64 = self
            .samples
            .iter()
            .zip(other.samples.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        Ok((d * self.cell()).sqrt())
    }

    pub fn scaled(&self, factor: Complex64) -> FoliatedState {
        FoliatedState {
            samples: self.samples.mapv(|c| c * factor),
            ..self.clone()
        }
    }

    pub fn normalized(&self) -> Result<FoliatedState> {
        let n = self.norm();
        if !(n > 0.0) {
            return Err(Error::Invalid("cannot normalize a zero state".into()));
        }
        Ok(self.scaled(Complex64::new(1.0 / n, 0.0)))
    }

    fn same_frame(&self, other: &FoliatedState) -> Result<()> {
        if self.representation != other.representation {
            return Err(Error::Representation {
                expected: self.representation.name(),
                found: other.representation.name(),
            });
        }
        if self.grid != other.grid || self.dim() != other.dim() {
            return Err(Error::Invalid("states live on different grids".into()));
        }
        Ok(())
    }
}

fn sign(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn transform(state: &FoliatedState, to_translation: bool) -> FoliatedState {
    let g = &state.grid;
    let n = g.n();
    let half = n / 2;
    let mut out = Array2::zeros((n, state.dim()));
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for a in 0..state.dim() {
        let col = state.samples.column(a);
        if to_translation {
            for j in 0..n {
                buf[j] = col[j] * sign(j);
            }
            g.inverse.process(&mut buf);
            let scale = g.d_sigma() / (2.0 * PI).sqrt();
            for k in 0..n {
                out[[k, a]] = buf[k] * (scale * sign(k + half));
            }
        } else {
            for k in 0..n {
                buf[k] = col[k] * sign(k + half);
            }
            g.forward.process(&mut buf);
            let scale = g.d_s() / (2.0 * PI).sqrt();
            for j in 0..n {
                out[[j, a]] = buf[j] * (scale * sign(j));
            }
        }
    }
    FoliatedState {
        samples: out,
        representation: state.representation.dual(),
        grid: state.grid.clone(),
    }
}

/// Spectral to translation representation (same in/out family).
pub fn to_translation(state: &FoliatedState) -> Result<FoliatedState> {
    if !state.representation.is_spectral() {
        return Err(Error::Representation {
            expected: "spectral",
            found: state.representation.name(),
        });
    }
    Ok(transform(state, true))
}

/// Translation to spectral representation (same in/out family).
pub fn to_spectral(state: &FoliatedState) -> Result<FoliatedState> {
    if state.representation.is_spectral() {
        return Err(Error::Representation {
            expected: "translation",
            found: state.representation.name(),
        });
    }
    Ok(transform(state, false))
}

/// Multiplies spectral samples by `e^{-i sigma tau}`.
pub fn evolve_free(state: &FoliatedState, tau: f64) -> Result<FoliatedState> {
    if !state.representation.is_spectral() {
        return Err(Error::Representation {
            expected: "spectral",
            found: state.representation.name(),
        });
    }
    if tau == 0.0 {
        return Ok(state.clone());
    }
    let mut out = state.clone();
    for (j, mut row) in out.samples.rows_mut().into_iter().enumerate() {
        let phase = Complex64::from_polar(1.0, -state.grid.sigma(j) * tau);
        row.mapv_inplace(|c| c * phase);
    }
    Ok(out)
}

/// Zeroes the translation samples on one side of `s = 0`.
fn cut(state: &mut FoliatedState, keep_negative: bool) {
    let half = state.grid.n() / 2;
    for (k, mut row) in state.samples.rows_mut().into_iter().enumerate() {
        let drop = if keep_negative { k > half } else { k < half };
        if drop {
            row.fill(Complex64::new(0.0, 0.0));
        }
    }
}

/// Removes the `D+` component of an outgoing state (samples at `s > 0` of
/// the outgoing translation representation). The result is returned in the
/// representation of the input.
pub fn project_out_dplus(state: &FoliatedState) -> Result<FoliatedState> {
    if state.representation.is_incoming() {
        return Err(Error::Representation {
            expected: "outgoing",
            found: state.representation.name(),
        });
    }
    let spectral = state.representation.is_spectral();
    let mut t = if spectral { to_translation(state)? } else { state.clone() };
    cut(&mut t, true);
    if spectral {
        to_spectral(&t)
    } else {
        Ok(t)
    }
}

/// Norm fraction of a translation-representation state found at `s < 0`.
pub fn negative_fraction(state: &FoliatedState) -> Result<f64> {
    if state.representation.is_spectral() {
        return Err(Error::Representation {
            expected: "translation",
            found: state.representation.name(),
        });
    }
    let half = state.grid.n() / 2;
    let total: f64 = state.samples.iter().map(|c| c.norm_sqr()).sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let neg: f64 = state
        .samples
        .rows()
        .into_iter()
        .take(half)
        .map(|r| r.iter().map(|c| c.norm_sqr()).sum::<f64>())
        .sum();
    Ok(neg / total)
}

/// Norm fraction of an outgoing state lying in `D+`.
pub fn dplus_fraction(state: &FoliatedState) -> Result<f64> {
    let total = state.norm_sq();
    if total == 0.0 {
        return Ok(0.0);
    }
    let kept = project_out_dplus(state)?.norm_sq();
    Ok(((total - kept) / total).max(0.0))
}

/// Evolves a translation-representation state freely by `tau` and returns the
/// norm fraction that ends up at `s < 0`.
pub fn dplus_leakage(state: &FoliatedState, tau: f64) -> Result<f64> {
    if tau == 0.0 {
        return negative_fraction(state);
    }
    let spec = to_spectral(state)?;
    negative_fraction(&to_translation(&evolve_free(&spec, tau)?)?)
}

/// Random smooth states supported in `s > 0`, evolved by every `tau`; returns
/// the largest norm fraction found at `s < 0`.
pub fn check_dplus_invariance(grid: &FoliationGrid, taus: &[f64], states: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = 4.0 * grid.d_s().max(0.5);
    let hi = (0.5 * grid.s_max()).max(lo + 1.0);
    let mut worst: f64 = 0.0;
    for _ in 0..states {
        let bumps: Vec<(f64, f64, Complex64)> = (0..4)
            .map(|_| {
                let width: f64 = rng.random_range(0.5..1.5);
                let center = rng.random_range(lo + 8.0 * width..hi + 8.0 * width);
                let amp = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                (center, width, amp)
            })
            .collect();
        let state = FoliatedState::from_fn(grid, Representation::OutTranslation, 1, |s, _| {
            if s <= 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            bumps
                .iter()
                .map(|(c, w, a)| a * (-0.5 * ((s - c) / w).powi(2)).exp())
                .sum()
        });
        for &tau in taus {
            worst = worst.max(dplus_leakage(&state, tau)?);
        }
    }
    Ok(worst)
}

/// How the projection onto `K = (D+ + D-)^perp` is formed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KProjection {
    /// `P+^perp P-^perp` applied once.
    Composition,
    /// Alternating projections iterated to the projection onto the
    /// intersection of the two complements.
    Alternating { tol: f64, max_iterations: usize },
}

impl Default for KProjection {
    fn default() -> Self {
        KProjection::Alternating {
            tol: 1e-13,
            max_iterations: 200,
        }
    }
}

/// Scattering data sampled on a foliation grid: everything needed to move
/// between the incoming and outgoing pictures.
#[derive(Clone, Debug)]
pub struct LaxPhillips {
    pub grid: FoliationGrid,
    /// `s(sigma_j)`.
    pub s: Vec<Complex64>,
    /// Projector onto the auxiliary direction that scatters.
    pub projector: Array2<Complex64>,
    pub mode: KProjection,
    /// `Some(false)` when the continued S-matrix is known to have
    /// upper-half-plane poles.
    pub inner: Option<bool>,
}

impl LaxPhillips {
    /// Samples `s` on the grid. `aux = None` means a one-dimensional
    /// auxiliary space.
    pub fn new(model: &Model, aux: Option<&AuxiliaryVector>, grid: &FoliationGrid) -> Result<Self> {
        let s: Vec<Complex64> = grid
            .sigmas()
            .par_iter()
            .map(|&x| smatrix::s_scalar(model, x))
            .collect::<Result<_>>()?;
        let inner = if model.params.is_free() {
            Some(true)
        } else if !model.density.continuation_available() {
            None
        } else {
            Some(
                model
                    .density
                    .continuation_poles(&model.params)
                    .iter()
                    .all(|z| z.im <= 0.0),
            )
        };
        let projector = match aux {
            None => Array2::from_elem((1, 1), Complex64::new(1.0, 0.0)),
            Some(a) => smatrix::projector(a, 0.0).or_else(|_| smatrix::projector(a, model.params.omega_v))?,
        };
        Self::from_samples(grid, s, projector, inner)
    }

    pub fn from_samples(
        grid: &FoliationGrid,
        s: Vec<Complex64>,
        projector: Array2<Complex64>,
        inner: Option<bool>,
    ) -> Result<Self> {
        if s.len() != grid.n() {
            return Err(Error::Invalid("one S-matrix sample per grid point required".into()));
        }
        let worst = s.iter().map(|v| (v.norm() - 1.0).abs()).fold(0.0, f64::max);
        if worst > 1e-8 {
            return Err(Error::Invalid(format!(
                "S-matrix not unimodular on the grid (deviation {worst:.3e})"
            )));
        }
        match inner {
            Some(false) => log::warn!(
                "S-matrix is not inner: D+ and D- need not be orthogonal and the semigroup law may fail"
            ),
            None => log::warn!("inner property of the S-matrix is unknown on the real axis alone"),
            _ => {}
        }
        Ok(LaxPhillips {
            grid: grid.clone(),
            s,
            projector,
            mode: KProjection::default(),
            inner,
        })
    }

    pub fn with_mode(mut self, mode: KProjection) -> Self {
        self.mode = mode;
        self
    }

    pub fn dim(&self) -> usize {
        self.projector.nrows()
    }

    /// Applies `S(sigma_j)` (or its adjoint) row by row.
    fn scatter(&self, state: &FoliatedState, adjoint: bool) -> FoliatedState {
        let mut out = state.clone();
        for (j, mut row) in out.samples.rows_mut().into_iter().enumerate() {
            let s = if adjoint { self.s[j].conj() } else { self.s[j] };
            let v = Array1::from_iter(row.iter().copied());
            let pv = self.projector.dot(&v);
            for (a, x) in row.iter_mut().enumerate() {
                *x += (s - 1.0) * pv[a];
            }
        }
        out
    }

    fn check(&self, state: &FoliatedState) -> Result<()> {
        if state.grid != self.grid || state.dim() != self.dim() {
            return Err(Error::Invalid("state does not match the scattering grid".into()));
        }
        Ok(())
    }

    /// Converts any state to the requested representation.
    pub fn convert(&self, state: &FoliatedState, target: Representation) -> Result<FoliatedState> {
        self.check(state)?;
        let mut cur = state.clone();
        if cur.representation == target {
            return Ok(cur);
        }
        if cur.representation.is_incoming() != target.is_incoming() {
            if !cur.representation.is_spectral() {
                cur = to_spectral(&cur)?;
            }
            cur = if target.is_incoming() {
                FoliatedState {
                    representation: Representation::InSpectral,
                    ..self.scatter(&cur, true)
                }
            } else {
                FoliatedState {
                    representation: Representation::OutSpectral,
                    ..self.scatter(&cur, false)
                }
            };
        }
        if cur.representation != target {
            cur = transform(&cur, cur.representation.is_spectral());
        }
        Ok(cur)
    }

    /// `P+^perp`: removes the part supported at `s > 0` in the outgoing
    /// translation representation.
    pub fn project_out_dplus(&self, state: &FoliatedState) -> Result<FoliatedState> {
        let mut t = self.convert(state, Representation::OutTranslation)?;
        cut(&mut t, true);
        self.convert(&t, state.representation)
    }

    /// `P-^perp`: removes the part supported at `s < 0` in the incoming
    /// translation representation.
    pub fn project_out_dminus(&self, state: &FoliatedState) -> Result<FoliatedState> {
        let mut t = self.convert(state, Representation::InTranslation)?;
        cut(&mut t, false);
        self.convert(&t, state.representation)
    }

    /// `P+^perp P-^perp` once.
    pub fn compose_complements(&self, state: &FoliatedState) -> Result<FoliatedState> {
        self.project_out_dplus(&self.project_out_dminus(state)?)
    }

    /// Projection onto `K`.
    pub fn project_k(&self, state: &FoliatedState) -> Result<FoliatedState> {
        match self.mode {
            KProjection::Composition => self.compose_complements(state),
            KProjection::Alternating { tol, max_iterations } => {
                let scale = state.norm().max(f64::MIN_POSITIVE);
                let mut x = self.compose_complements(state)?;
                for _ in 1..max_iterations {
                    let next = self.compose_complements(&x)?;
                    let step = next.distance(&x)?;
                    x = next;
                    if step <= tol * scale {
                        break;
                    }
                }
                Ok(x)
            }
        }
    }

    /// `Z(tau) = P_K U(tau) P_K`.
    pub fn semigroup_z(&self, state: &FoliatedState, tau: f64) -> Result<FoliatedState> {
        if tau < 0.0 || tau.is_nan() {
            return Err(Error::NegativeTime(tau));
        }
        let k = self.project_k(state)?;
        let spec = self.convert(&k, Representation::OutSpectral)?;
        let moved = evolve_free(&spec, tau)?;
        let out = self.project_k(&moved)?;
        self.convert(&out, state.representation)
    }
}

/// Unnormalized resonant state: outgoing spectral samples
/// `2 i Im(mu) u_alpha / (sigma - mu)`.
pub fn resonant_state_unnormalized(
    pole: &ResonancePole,
    aux: Option<&AuxiliaryVector>,
    grid: &FoliationGrid,
) -> Result<FoliatedState> {
    let mu = pole.mu;
    if !(mu.im < 0.0) {
        return Err(Error::RealPole);
    }
    let u: Vec<Complex64> = match aux {
        Some(a) => a.clone().normalized()?.components,
        None => vec![Complex64::new(1.0, 0.0)],
    };
    let amp = Complex64::new(0.0, 2.0 * mu.im);
    Ok(FoliatedState::from_fn(grid, Representation::OutSpectral, u.len(), |x, a| {
        amp * u[a] / (x - mu)
    }))
}

/// Unit-norm resonant state.
pub fn resonant_state(
    pole: &ResonancePole,
    aux: Option<&AuxiliaryVector>,
    grid: &FoliationGrid,
) -> Result<FoliatedState> {
    resonant_state_unnormalized(pole, aux, grid)?.normalized()
}

/// `sum_s ds (psi_s, A_s psi_s)` for a family of self-adjoint matrices.
pub fn expectation<F>(state: &FoliatedState, family: F) -> Result<f64>
where
    F: Fn(f64) -> Array2<Complex64>,
{
    if state.representation.is_spectral() {
        return Err(Error::Representation {
            expected: "translation",
            found: state.representation.name(),
        });
    }
    let d = state.dim();
    let mut total = Complex64::new(0.0, 0.0);
    for (k, row) in state.samples.rows().into_iter().enumerate() {
        let s = state.grid.s(k);
        let a = family(s);
        if a.dim() != (d, d) {
            return Err(Error::Invalid(format!("operator at s = {s} has shape {:?}", a.dim())));
        }
        let adj = a.t().mapv(|c| c.conj());
        let scale = smatrix::frobenius(&a);
        if smatrix::frobenius(&(&a - &adj)) > 1e-12 * (1.0 + scale) {
            return Err(Error::NotSelfAdjoint(s));
        }
        let v = row.to_owned();
        let av = a.dot(&v);
        total += v.iter().zip(av.iter()).map(|(x, y)| x.conj() * y).sum::<Complex64>();
    }
    Ok((total * state.cell()).re)
}
