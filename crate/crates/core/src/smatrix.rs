//! Scalar and operator S-matrix on the real axis, its inner-function
//! structure and the factorization into Blaschke factors times a residual
//! phase.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denominator::{self, ResonancePole};
use crate::error::{Error, Result};
use crate::model::{EnergyProfile, Model};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Deepest bisection level used when unwrapping the phase of `s`.
const MAX_REFINE_DEPTH: u32 = 30;

/// Direction of the form factor in the auxiliary space, with its energy
/// profile.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxiliaryVector {
    pub components: Vec<Complex64>,
    pub profile: EnergyProfile,
    /// Per-component profiles `g_alpha(sigma)`; breaks factorization.
    pub per_component_profiles: Option<Vec<EnergyProfile>>,
}

impl AuxiliaryVector {
    /// Factorized vector with a constant profile, normalized to unit length.
    pub fn new(components: Vec<Complex64>) -> Result<Self> {
        AuxiliaryVector {
            components,
            profile: EnergyProfile::Constant(1.0),
            per_component_profiles: None,
        }
        .normalized()
    }

    pub fn with_profile(mut self, profile: EnergyProfile) -> Self {
        self.profile = profile;
        self
    }

    /// Non-factorized vector `n_alpha(sigma) = g_alpha(sigma) u_alpha`.
    pub fn with_component_profiles(mut self, profiles: Vec<EnergyProfile>) -> Result<Self> {
        if profiles.len() != self.components.len() {
            return Err(Error::Invalid("one profile per component required".into()));
        }
        self.per_component_profiles = Some(profiles);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.components.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Invalid("auxiliary vector has zero norm".into()));
        }
        for c in &mut self.components {
            *c /= n;
        }
        Ok(self)
    }

    /// `n(sigma)` before normalization.
    pub fn at(&self, sigma: f64) -> Vec<Complex64> {
        match &self.per_component_profiles {
            None => {
                let g = self.profile.eval(sigma);
                self.components.iter().map(|c| c * g).collect()
            }
            Some(ps) => self
                .components
                .iter()
                .zip(ps)
                .map(|(c, p)| c * p.eval(sigma))
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    InnerRational,
    InnerWithSingularFactor,
    NotInner,
}

impl Classification {
    pub fn tag(&self) -> &'static str {
        match self {
            Classification::InnerRational => "inner_rational",
            Classification::InnerWithSingularFactor => "inner_with_singular_factor",
            Classification::NotInner => "not_inner",
        }
    }
}

/// Upper-half-plane pole of the continued `s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectFactor {
    pub location: Complex64,
    pub multiplicity: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerFactorization {
    pub blaschke_zeros: Vec<Complex64>,
    pub sigma: Vec<f64>,
    /// Unwrapped phase `f(sigma)` of `s` divided by the Blaschke product.
    pub phase_samples: Vec<f64>,
    pub defect_factors: Vec<DefectFactor>,
    pub classification: Classification,
    /// `max |residual - 1|` over the grid.
    pub residual_deviation: f64,
    /// Set when the density has no continuation, so that only real-axis data
    /// informed the classification.
    pub real_axis_only: bool,
    /// Largest `|s(z)|` seen on sample points above the axis, if the
    /// continuation exists.
    pub upper_half_sup: Option<f64>,
}

impl InnerFactorization {
    /// No resonance and no residual phase: `s = 1`.
    pub fn is_trivial(&self) -> bool {
        self.blaschke_zeros.is_empty()
            && self.defect_factors.is_empty()
            && self.classification == Classification::InnerRational
    }
}

/// `s(sigma) = h_-(sigma) / h_+(sigma)`.
pub fn s_scalar(model: &Model, sigma: f64) -> Result<Complex64> {
    if model.params.is_free() {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let b = denominator::h_boundary(model, sigma)?;
    if b.h_plus.norm() == 0.0 {
        return Err(Error::RealZero(sigma));
    }
    Ok(b.h_minus / b.h_plus)
}

/// Continuation of `s` into the upper half-plane,
/// `1 - 2 pi i rho~(z) / h(z)`.
pub fn s_continued(model: &Model, z: Complex64) -> Result<Complex64> {
    if !(z.im > 0.0) {
        return Err(Error::Invalid(format!("s_continued needs Im z > 0, got {z}")));
    }
    if model.params.is_free() {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let rho = model.density.continued(&model.params, z)?;
    let h = denominator::h_upper(model, z)?;
    Ok(1.0 - 2.0 * PI * I * rho / h)
}

/// Blaschke factor `(z - mu*) / (z - mu)`.
pub fn blaschke_factor(mu: Complex64, z: Complex64) -> Complex64 {
    (z - mu.conj()) / (z - mu)
}

fn outer(u: &[Complex64]) -> Array2<Complex64> {
    let d = u.len();
    Array2::from_shape_fn((d, d), |(i, j)| u[i] * u[j].conj())
}

/// `|n(sigma)><n(sigma)| / <n(sigma)|n(sigma)>`.
pub fn projector(aux: &AuxiliaryVector, sigma: f64) -> Result<Array2<Complex64>> {
    let n = aux.at(sigma);
    let norm2: f64 = n.iter().map(|c| c.norm_sqr()).sum();
    if !(norm2 > 0.0) {
        return Err(Error::ZeroAuxiliary(sigma));
    }
    Ok(outer(&n) / Complex64::new(norm2, 0.0))
}

/// `(1 - P) + s(sigma) P`.
pub fn s_operator(model: &Model, aux: &AuxiliaryVector, sigma: f64) -> Result<Array2<Complex64>> {
    let s = s_scalar(model, sigma)?;
    let p = projector(aux, sigma)?;
    let id = Array2::<Complex64>::eye(aux.dim());
    Ok(&id - &p + p * s)
}

/// `T(sigma + i0) = rho(sigma) P / h_+(sigma)`, so that `S = 1 - 2 pi i T`.
pub fn t_matrix(model: &Model, aux: &AuxiliaryVector, sigma: f64) -> Result<Array2<Complex64>> {
    t_matrix_side(model, aux, sigma, true)
}

/// The boundary value of `T` from below, built from `h_-`.
pub fn t_matrix_minus(model: &Model, aux: &AuxiliaryVector, sigma: f64) -> Result<Array2<Complex64>> {
    t_matrix_side(model, aux, sigma, false)
}

fn t_matrix_side(
    model: &Model,
    aux: &AuxiliaryVector,
    sigma: f64,
    upper: bool,
) -> Result<Array2<Complex64>> {
    let p = projector(aux, sigma)?;
    if model.params.is_free() {
        return Ok(Array2::zeros((aux.dim(), aux.dim())));
    }
    let b = denominator::h_boundary(model, sigma)?;
    if b.h_plus.norm() == 0.0 {
        return Err(Error::RealZero(sigma));
    }
    let h = if upper { b.h_plus } else { b.h_minus };
    Ok(p * (b.rho / h))
}

/// Frobenius norm of `a`.
pub fn frobenius(a: &Array2<Complex64>) -> f64 {
    a.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// `|| A A^dagger - 1 ||_F`.
pub fn unitarity_defect(a: &Array2<Complex64>) -> f64 {
    let adj = a.t().mapv(|c| c.conj());
    let prod = a.dot(&adj);
    let id = Array2::<Complex64>::eye(a.nrows());
    frobenius(&(prod - id))
}

/// Unwraps a sequence of phases so that consecutive differences lie in
/// `(-pi, pi]`.
pub fn unwrap_phase(values: &[Complex64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    let mut prev: Option<Complex64> = None;
    for v in values {
        match prev {
            None => acc = v.arg(),
            Some(p) => acc += (v / p).arg(),
        }
        out.push(acc);
        prev = Some(*v);
    }
    out
}

/// Phase of `s` unwrapped along a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseScan {
    pub sigma: Vec<f64>,
    pub s: Vec<Complex64>,
    pub unwrapped: Vec<f64>,
}

/// Samples `s` on `grid` and unwraps its phase; the accumulated phase
/// between neighbours is measured by bisecting each interval until every
/// sub-step is below `pi / 2`.
pub fn phase_scan(model: &Model, grid: &[f64]) -> Result<PhaseScan> {
    let s: Vec<Complex64> = grid
        .par_iter()
        .map(|&x| s_scalar(model, x))
        .collect::<Result<_>>()?;
    let steps: Vec<f64> = grid
        .par_windows(2)
        .zip(s.par_windows(2))
        .map(|(x, v)| refined_step(model, x[0], x[1], v[0], v[1], 0))
        .collect::<Result<_>>()?;
    let mut unwrapped = Vec::with_capacity(grid.len());
    let mut acc = s.first().map(|v| v.arg()).unwrap_or(0.0);
    unwrapped.push(acc);
    for d in steps {
        acc += d;
        unwrapped.push(acc);
    }
    if grid.is_empty() {
        unwrapped.clear();
    }
    Ok(PhaseScan {
        sigma: grid.to_vec(),
        s,
        unwrapped,
    })
}

fn refined_step(model: &Model, a: f64, b: f64, sa: Complex64, sb: Complex64, depth: u32) -> Result<f64> {
    let d = (sb / sa).arg();
    if d.abs() < 0.5 * PI {
        return Ok(d);
    }
    let mid = 0.5 * (a + b);
    if depth >= MAX_REFINE_DEPTH || mid <= a || mid >= b {
        return Err(Error::PhaseJump {
            sigma: mid,
            step: d.abs(),
        });
    }
    let sm = s_scalar(model, mid)?;
    Ok(refined_step(model, a, mid, sa, sm, depth + 1)? + refined_step(model, mid, b, sm, sb, depth + 1)?)
}

/// Uniform grid of `n` points over `[-omega, omega]`.
pub fn symmetric_grid(omega: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| -omega + 2.0 * omega * i as f64 / (n - 1) as f64)
        .collect()
}

/// Total phase change of `s` over `[-omega, omega]` in units of `2 pi`,
/// rounded; counterclockwise is positive.
pub fn winding_number(model: &Model, omega: f64, n: usize) -> Result<i64> {
    if n < 1 << 10 {
        return Err(Error::Invalid(format!("winding scan needs N >= 1024, got {n}")));
    }
    if !(omega > 0.0) {
        return Err(Error::Invalid("scan half-width must be positive".into()));
    }
    let scan = phase_scan(model, &symmetric_grid(omega, n))?;
    let total = scan.unwrapped.last().unwrap() - scan.unwrapped.first().unwrap();
    Ok((total / (2.0 * PI)).round() as i64)
}

/// Number of upper-half-plane zeros minus poles of the continued `s`,
/// counted from the resonance poles (each contributes the zero `mu*`) and
/// the continuation poles of the density.
pub fn argument_principle_count(model: &Model, poles: &[ResonancePole]) -> i64 {
    if model.params.is_free() {
        return 0;
    }
    let zeros = poles.iter().filter(|p| p.mu.im < 0.0).count() as i64;
    let defects = model
        .density
        .continuation_poles(&model.params)
        .iter()
        .filter(|z| z.im > 0.0)
        .count() as i64;
    zeros - defects
}

/// `max ||s(sigma)| - 1|` over the grid.
pub fn unitarity_scan(model: &Model, grid: &[f64]) -> Result<f64> {
    grid.par_iter()
        .map(|&x| s_scalar(model, x).map(|s| (s.norm() - 1.0).abs()))
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// Divides `s` by the Blaschke product of `poles`, records the residual
/// phase on `grid` and classifies the result.
pub fn factorize(model: &Model, poles: &[ResonancePole], grid: &[f64]) -> Result<InnerFactorization> {
    let zeros: Vec<Complex64> = poles.iter().map(|p| p.mu).filter(|m| m.im < 0.0).collect();
    let residual: Vec<Complex64> = grid
        .par_iter()
        .map(|&x| {
            let s = s_scalar(model, x)?;
            let b: Complex64 = zeros.iter().map(|&m| blaschke_factor(m, Complex64::new(x, 0.0))).product();
            Ok(s / b)
        })
        .collect::<Result<_>>()?;
    let residual_deviation = residual.iter().map(|r| (r - 1.0).norm()).fold(0.0, f64::max);
    let phase_samples = unwrap_phase(&residual);
    let real_axis_only = !model.params.is_free() && !model.density.continuation_available();

    let mut defect_factors: Vec<DefectFactor> = Vec::new();
    for z in model.density.continuation_poles(&model.params) {
        if z.im <= 0.0 {
            continue;
        }
        match defect_factors.iter_mut().find(|d| (d.location - z).norm() < 1e-12) {
            Some(d) => d.multiplicity += 1,
            None => defect_factors.push(DefectFactor {
                location: z,
                multiplicity: 1,
            }),
        }
    }

    let classification = if !defect_factors.is_empty() {
        Classification::NotInner
    } else if residual_deviation < 1e-8 {
        Classification::InnerRational
    } else {
        Classification::InnerWithSingularFactor
    };
    if classification == Classification::NotInner {
        log::info!(
            "S-matrix of the {} density has upper-half-plane poles; not inner",
            model.density.name()
        );
    }

    let upper_half_sup = if real_axis_only {
        None
    } else {
        Some(upper_half_sup(model, grid)?)
    };

    Ok(InnerFactorization {
        blaschke_zeros: zeros,
        sigma: grid.to_vec(),
        phase_samples,
        defect_factors,
        classification,
        residual_deviation,
        real_axis_only,
        upper_half_sup,
    })
}

fn upper_half_sup(model: &Model, grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Ok(1.0);
    }
    let stride = (grid.len() / 40).max(1);
    let pts: Vec<Complex64> = grid
        .iter()
        .step_by(stride)
        .flat_map(|&x| [0.1, 0.5, 1.0, 2.0, 4.0].map(|y| Complex64::new(x, y)))
        .collect();
    pts.par_iter()
        .map(|&z| match s_continued(model, z) {
            Ok(s) => Ok(s.norm()),
            // exactly on a continuation pole
            Err(Error::Quadrature { .. }) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denominator::{find_all_poles, Rectangle};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> AuxiliaryVector {
        let comps = (0..d)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        AuxiliaryVector::new(comps).unwrap()
    }

    #[test]
    fn scalar_examples() {
        let m = Model::flat(0.2);
        assert!(close(s_scalar(&m, 1.0).unwrap(), c(-1.0), 1e-15));
        assert!(close(s_scalar(&m, 1.1).unwrap(), -I, 1e-14));
        let free = m.clone().with_coupling(0.0);
        for x in [-3.0, 1.0, 7.0] {
            assert_eq!(s_scalar(&free, x).unwrap(), c(1.0));
        }
    }

    #[test]
    fn scalar_matches_blaschke_form() {
        let m = Model::lorentzian(1.0, 0.1, 0.2);
        let disc = c(0.15).sqrt();
        let mu1 = 1.0 + 0.5 * (-0.1 * I + disc);
        let mu2 = 1.0 + 0.5 * (-0.1 * I - disc);
        for x in [-2.0, 0.7, 1.0, 1.3, 5.0] {
            let z = c(x);
            let oracle = blaschke_factor(mu1, z) * blaschke_factor(mu2, z) * (z - 1.0 + 0.1 * I)
                / (z - 1.0 - 0.1 * I);
            assert!(close(s_scalar(&m, x).unwrap(), oracle, 1e-12));
        }
    }

    #[test]
    fn operator_examples() {
        let m = Model::flat(0.2);
        let aux = AuxiliaryVector::new(vec![c(1.0), c(0.0)]).unwrap();
        let s = s_operator(&m, &aux, 1.0).unwrap();
        let want = Array2::from_diag(&ndarray::arr1(&[c(-1.0), c(1.0)]));
        assert!(frobenius(&(s - want)) < 1e-14);
        let free = m.clone().with_coupling(0.0);
        let s = s_operator(&free, &aux, 0.3).unwrap();
        assert!(frobenius(&(s - Array2::<Complex64>::eye(2))) == 0.0);
    }

    #[test]
    fn rank_one_spectrum() {
        let m = Model::flat(0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let aux = random_unit(&mut rng, 3);
        let s = s_operator(&m, &aux, 1.1).unwrap();
        let u = ndarray::Array1::from(aux.components.clone());
        let su = s.dot(&u);
        assert!(su.iter().zip(u.iter()).all(|(a, b)| close(*a, -I * b, 1e-13)));
        // any vector orthogonal to u is fixed
        let mut v = ndarray::Array1::from(vec![c(1.0), c(-2.0), I]);
        let proj: Complex64 = u.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
        v = &v - &(&u * proj);
        let sv = s.dot(&v);
        assert!(sv.iter().zip(v.iter()).all(|(a, b)| close(*a, *b, 1e-13)));
    }

    #[test]
    fn operator_unitary_and_t_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in [Model::flat(0.2), Model::lorentzian(1.0, 0.1, 0.2), Model::gaussian(1.0, 1.0, 0.2)] {
            for d in 1..=8 {
                let aux = random_unit(&mut rng, d);
                let x = rng.random_range(-5.0..5.0);
                let s = s_operator(&m, &aux, x).unwrap();
                assert!(unitarity_defect(&s) < 1e-10);
                let t = t_matrix(&m, &aux, x).unwrap();
                let rebuilt = Array2::<Complex64>::eye(d) - t.mapv(|v| 2.0 * PI * I * v);
                assert!(frobenius(&(rebuilt - &s)) < 1e-10);
                let tm = t_matrix_minus(&m, &aux, x).unwrap();
                let adj = t.t().mapv(|v| v.conj());
                assert!(frobenius(&(adj - tm)) < 1e-14);
            }
        }
    }

    #[test]
    fn t_matrix_examples() {
        let aux = AuxiliaryVector::new(vec![c(0.6), Complex64::new(0.0, 0.8)]).unwrap();
        let free = Model::flat(0.2).with_coupling(0.0);
        assert_eq!(frobenius(&t_matrix(&free, &aux, 0.4).unwrap()), 0.0);
        let m = Model::flat(0.2);
        let t = t_matrix(&m, &aux, 1.0).unwrap();
        let s = Array2::<Complex64>::eye(2) - t.mapv(|v| 2.0 * PI * I * v);
        let u = ndarray::Array1::from(aux.components.clone());
        let su = s.dot(&u);
        assert!(su.iter().zip(u.iter()).all(|(a, b)| close(*a, -b, 1e-14)));
    }

    #[test]
    fn projector_sigma_independence() {
        let aux = AuxiliaryVector::new(vec![c(1.0), Complex64::new(0.3, -0.4)])
            .unwrap()
            .with_profile(EnergyProfile::Gaussian {
                center: 0.0,
                width: 2.0,
                amplitude: 3.0,
            });
        let p1 = projector(&aux, 1.0).unwrap();
        let p2 = projector(&aux, -2.5).unwrap();
        assert!(frobenius(&(p1 - p2)) < 1e-12);

        let split = AuxiliaryVector::new(vec![c(1.0), c(1.0)])
            .unwrap()
            .with_component_profiles(vec![
                EnergyProfile::Constant(1.0),
                EnergyProfile::Custom(std::sync::Arc::new(|s| s)),
            ])
            .unwrap();
        let diff = frobenius(&(projector(&split, 1.0).unwrap() - projector(&split, 2.0).unwrap()));
        // [[1,1],[1,1]]/2 against [[1,2],[2,4]]/5
        let want = {
            let d = [0.5 - 0.2, 0.5 - 0.4, 0.5 - 0.4, 0.5 - 0.8];
            d.iter().map(|x: &f64| x * x).sum::<f64>().sqrt()
        };
        assert!((diff - want).abs() < 1e-14);
        assert!(diff > 0.1);

        let one = AuxiliaryVector::new(vec![Complex64::new(0.0, 2.0)]).unwrap();
        assert!(close(projector(&one, 3.0).unwrap()[[0, 0]], c(1.0), 1e-15));
        let zero = AuxiliaryVector::new(vec![c(1.0)])
            .unwrap()
            .with_profile(EnergyProfile::Constant(0.0));
        assert_eq!(projector(&zero, 0.5), Err(Error::ZeroAuxiliary(0.5)));
    }

    #[test]
    fn winding_numbers() {
        assert_eq!(winding_number(&Model::flat(0.2), 20.0, 1024).unwrap(), 1);
        assert_eq!(winding_number(&Model::lorentzian(1.0, 0.1, 0.2), 20.0, 1024).unwrap(), 1);
        assert_eq!(winding_number(&Model::flat(0.2).with_coupling(0.0), 20.0, 1024).unwrap(), 0);
        assert!(winding_number(&Model::flat(0.2), 20.0, 100).is_err());
    }

    #[test]
    fn coarse_grid_is_refined() {
        // unit spacing puts a sample on the resonance, where s jumps by
        // nearly pi; bisection must recover the full turn
        let m = Model::flat(0.2);
        let grid = symmetric_grid(20.0, 41);
        let scan = phase_scan(&m, &grid).unwrap();
        let total = scan.unwrapped.last().unwrap() - scan.unwrapped[0];
        let exact = 2.0 * (PI - (0.1f64 / 19.0).atan() - (0.1f64 / 21.0).atan());
        assert!((total - exact).abs() < 1e-10, "{total} vs {exact}");
        let naive = unwrap_phase(&scan.s);
        assert!(naive.windows(2).any(|w| (w[1] - w[0]).abs() > 0.5 * PI));
    }

    #[test]
    fn factorizations() {
        let grid = symmetric_grid(10.0, 401);
        let rect = Rectangle::new((0.0, 2.0), (-0.3, 0.0));

        let m = Model::flat(0.2);
        let poles = find_all_poles(&m, rect, 5, 5);
        let f = factorize(&m, &poles, &grid).unwrap();
        assert_eq!(f.classification, Classification::InnerRational);
        assert_eq!(f.blaschke_zeros.len(), 1);
        assert!(f.residual_deviation < 1e-12);
        assert!(f.upper_half_sup.unwrap() <= 1.0 + 1e-12);

        let m = Model::lorentzian(1.0, 0.1, 0.2);
        let poles = find_all_poles(&m, rect, 5, 5);
        let f = factorize(&m, &poles, &grid).unwrap();
        assert_eq!(f.classification, Classification::NotInner);
        assert_eq!(
            f.defect_factors,
            vec![DefectFactor {
                location: Complex64::new(1.0, 0.1),
                multiplicity: 1
            }]
        );
        assert!(f.upper_half_sup.unwrap() > 1.0);

        let m = Model::flat(0.2).with_coupling(0.0);
        let poles = find_all_poles(&m, rect, 5, 5);
        let f = factorize(&m, &poles, &grid).unwrap();
        assert_eq!(f.classification, Classification::InnerRational);
        assert!(f.is_trivial());
        assert_eq!(f.residual_deviation, 0.0);
    }

    #[test]
    fn blaschke_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mu = Complex64::new(1.0, -0.1);
        for _ in 0..1000 {
            let z = Complex64::new(rng.random_range(-50.0..50.0), rng.random_range(0.0..50.0));
            assert!(blaschke_factor(mu, z).norm() <= 1.0);
        }
    }

    #[test]
    fn unitarity() {
        let grid = symmetric_grid(10.0, 1000);
        assert!(unitarity_scan(&Model::flat(0.2), &grid).unwrap() < 1e-12);
        assert!(unitarity_scan(&Model::lorentzian(1.0, 0.1, 0.2), &grid).unwrap() < 1e-10);
        assert!(unitarity_scan(&Model::gaussian(1.0, 1.0, 0.2), &grid).unwrap() < 1e-6);
    }

    #[test]
    fn unwrap_removes_jumps() {
        let v: Vec<Complex64> = (0..50).map(|k| Complex64::from_polar(1.0, 0.3 * k as f64)).collect();
        let u = unwrap_phase(&v);
        assert!((u[49] - 0.3 * 49.0).abs() < 1e-12);
    }
}
