//! Model parameters and the spectral densities that summarize the N-theta
//! continuum seen by the discrete V level.
//!
//! Every density is a nonnegative weight `rho(lambda)` on the real energy
//! axis. The closed-form variants (flat, Lorentzian, Gaussian) also carry an
//! analytic continuation off the axis, which the second-sheet machinery in
//! [`crate::denominator`] relies on.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{self, Tolerance};

/// Beyond this many standard deviations a Gaussian weight is treated as zero.
pub(crate) const GAUSSIAN_SUPPORT_SIGMAS: f64 = 14.0;

/// Masses, coupling and the discrete level of the reduced one-V sector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    pub m_v: f64,
    pub m_n: f64,
    pub m_theta: f64,
    /// Energy of the discrete level at the chosen foliation point.
    pub omega_v: f64,
    /// Foliation two-momentum `(p^0, p^1)`, signature `(-, +)`.
    pub p: [f64; 2],
    pub g: f64,
}

impl ModelParameters {
    /// Masses `(2, 1, 1)` at rest with the given level and coupling.
    pub fn new(omega_v: f64, g: f64) -> Self {
        ModelParameters {
            m_v: 2.0,
            m_n: 1.0,
            m_theta: 1.0,
            omega_v,
            p: [0.0, 0.0],
            g,
        }
    }

    pub fn with_masses(mut self, m_v: f64, m_n: f64, m_theta: f64) -> Self {
        self.m_v = m_v;
        self.m_n = m_n;
        self.m_theta = m_theta;
        self
    }

    pub fn with_momentum(mut self, p0: f64, p1: f64) -> Self {
        self.p = [p0, p1];
        self
    }

    pub fn coupling_sq(&self) -> f64 {
        self.g * self.g
    }

    /// True when the level is decoupled from the continuum.
    pub fn is_free(&self) -> bool {
        self.g == 0.0
    }
}

/// Energy dependence of a form factor.
#[derive(Clone, Serialize, Deserialize)]
pub enum EnergyProfile {
    Gaussian {
        center: f64,
        width: f64,
        amplitude: f64,
    },
    Constant(f64),
    /// `(lambda, g(lambda))` evaluated through a user closure; cannot be
    /// serialized.
    #[serde(skip)]
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl EnergyProfile {
    pub fn eval(&self, lambda: f64) -> f64 {
        match self {
            EnergyProfile::Gaussian {
                center,
                width,
                amplitude,
            } => {
                let x = (lambda - center) / width;
                amplitude * (-0.5 * x * x).exp()
            }
            EnergyProfile::Constant(c) => *c,
            EnergyProfile::Custom(f) => f(lambda),
        }
    }

    /// Profile multiplied by a constant factor.
    pub fn scaled(&self, factor: f64) -> EnergyProfile {
        match self {
            EnergyProfile::Gaussian {
                center,
                width,
                amplitude,
            } => EnergyProfile::Gaussian {
                center: *center,
                width: *width,
                amplitude: amplitude * factor,
            },
            EnergyProfile::Constant(c) => EnergyProfile::Constant(c * factor),
            EnergyProfile::Custom(f) => {
                let f = Arc::clone(f);
                EnergyProfile::Custom(Arc::new(move |x| factor * f(x)))
            }
        }
    }
}

impl fmt::Debug for EnergyProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnergyProfile::Gaussian {
                center,
                width,
                amplitude,
            } => f
                .debug_struct("Gaussian")
                .field("center", center)
                .field("width", width)
                .field("amplitude", amplitude)
                .finish(),
            EnergyProfile::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            EnergyProfile::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl PartialEq for EnergyProfile {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (
                EnergyProfile::Gaussian {
                    center: a,
                    width: b,
                    amplitude: c,
                },
                EnergyProfile::Gaussian {
                    center: x,
                    width: y,
                    amplitude: z,
                },
            ) => a == x && b == y && c == z,
            (EnergyProfile::Constant(a), EnergyProfile::Constant(b)) => a == b,
            (EnergyProfile::Custom(a), EnergyProfile::Custom(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

/// Form factor `f(k) = g(omega(p, k)) u`, split into an energy profile and a
/// direction `u` in the degeneracy space.
///
/// The Minkowski level sets of `omega` are hyperbolae of infinite length, so
/// the boost direction is cut off at `|rapidity| <= rapidity_cutoff`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormFactorProfile {
    pub profile: EnergyProfile,
    pub components: Vec<Complex64>,
    /// Per-component profiles `g_alpha`; `None` for a factorized form factor.
    pub component_profiles: Option<Vec<EnergyProfile>>,
    pub rapidity_cutoff: f64,
    /// Energy window outside which the profile is negligible.
    pub support: (f64, f64),
}

impl FormFactorProfile {
    pub fn factorized(profile: EnergyProfile, components: Vec<Complex64>) -> Self {
        let support = match &profile {
            EnergyProfile::Gaussian { center, width, .. } => (
                center - GAUSSIAN_SUPPORT_SIGMAS * width,
                center + GAUSSIAN_SUPPORT_SIGMAS * width,
            ),
            _ => (-50.0, 50.0),
        };
        FormFactorProfile {
            profile,
            components,
            component_profiles: None,
            rapidity_cutoff: 2.0,
            support,
        }
    }

    pub fn is_factorized(&self) -> bool {
        self.component_profiles.is_none()
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    /// `sum_alpha |f_alpha|^2` for a point whose continuum energy is `lambda`.
    fn weight_at(&self, lambda: f64) -> f64 {
        match &self.component_profiles {
            None => {
                let g = self.profile.eval(lambda);
                let u2: f64 = self.components.iter().map(|c| c.norm_sqr()).sum();
                g * g * u2
            }
            Some(profiles) => profiles
                .iter()
                .zip(&self.components)
                .map(|(p, c)| {
                    let g = p.eval(lambda);
                    g * g * c.norm_sqr()
                })
                .sum(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        FormFactorProfile {
            profile: self.profile.scaled(factor),
            component_profiles: self
                .component_profiles
                .as_ref()
                .map(|ps| ps.iter().map(|p| p.scaled(factor)).collect()),
            ..self.clone()
        }
    }
}

/// Continuum weight under the dispersion integral.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum SpectralDensity {
    /// Wide-band limit `rho = gamma_total / 2 pi`.
    Flat { gamma_total: f64 },
    /// `g^2 (width / pi) / ((lambda - center)^2 + width^2)`.
    Lorentzian { center: f64, width: f64 },
    /// `g^2 / (width sqrt(2 pi)) exp(-(lambda - center)^2 / 2 width^2)`.
    Gaussian { center: f64, width: f64 },
    /// Linear interpolation of `values` on the strictly increasing `grid`.
    Tabulated { grid: Vec<f64>, values: Vec<f64> },
    FromFormFactor(FormFactorProfile),
}

impl SpectralDensity {
    pub fn name(&self) -> &'static str {
        match self {
            SpectralDensity::Flat { .. } => "flat",
            SpectralDensity::Lorentzian { .. } => "lorentzian",
            SpectralDensity::Gaussian { .. } => "gaussian",
            SpectralDensity::Tabulated { .. } => "tabulated",
            SpectralDensity::FromFormFactor(_) => "form_factor",
        }
    }

    pub fn continuation_available(&self) -> bool {
        matches!(
            self,
            SpectralDensity::Flat { .. }
                | SpectralDensity::Lorentzian { .. }
                | SpectralDensity::Gaussian { .. }
        )
    }

    /// `rho(lambda)` on the real axis.
    pub fn value(&self, params: &ModelParameters, lambda: f64) -> Result<f64> {
        if params.is_free() {
            if let SpectralDensity::Tabulated { grid, .. } = self {
                check_range(grid, lambda)?;
            }
            return Ok(0.0);
        }
        let g2 = params.coupling_sq();
        Ok(match self {
            SpectralDensity::Flat { gamma_total } => gamma_total / (2.0 * PI),
            SpectralDensity::Lorentzian { center, width } => {
                let x = lambda - center;
                g2 * width / PI / (x * x + width * width)
            }
            SpectralDensity::Gaussian { center, width } => {
                let x = (lambda - center) / width;
                g2 / (width * (2.0 * PI).sqrt()) * (-0.5 * x * x).exp()
            }
            SpectralDensity::Tabulated { grid, values } => {
                check_range(grid, lambda)?;
                interpolate(grid, values, lambda)
            }
            SpectralDensity::FromFormFactor(profile) => {
                density_from_form_factor(profile, params, lambda)?
            }
        })
    }

    /// `rho'(lambda)`, when a derivative is available in closed form or from
    /// the interpolant.
    pub(crate) fn derivative(&self, params: &ModelParameters, lambda: f64) -> Option<f64> {
        if params.is_free() {
            return Some(0.0);
        }
        match self {
            SpectralDensity::Flat { .. } => Some(0.0),
            SpectralDensity::Lorentzian { .. } | SpectralDensity::Gaussian { .. } => {
                Some(self.continued_derivative(params, Complex64::new(lambda, 0.0)).ok()?.re)
            }
            SpectralDensity::Tabulated { grid, values } => {
                if lambda < grid[0] || lambda > grid[grid.len() - 1] {
                    return Some(0.0);
                }
                let i = segment(grid, lambda);
                Some((values[i + 1] - values[i]) / (grid[i + 1] - grid[i]))
            }
            SpectralDensity::FromFormFactor(_) => None,
        }
    }

    /// Analytic continuation `rho~(z)` of the density off the real axis.
    pub fn continued(&self, params: &ModelParameters, z: Complex64) -> Result<Complex64> {
        if params.is_free() {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let g2 = params.coupling_sq();
        match self {
            SpectralDensity::Flat { gamma_total } => Ok(Complex64::new(gamma_total / (2.0 * PI), 0.0)),
            SpectralDensity::Lorentzian { center, width } => {
                let x = z - center;
                Ok(g2 * width / PI / (x * x + width * width))
            }
            SpectralDensity::Gaussian { center, width } => {
                let x = (z - center) / width;
                Ok(g2 / (width * (2.0 * PI).sqrt()) * (-0.5 * x * x).exp())
            }
            _ => Err(Error::ContinuationUnavailable(self.name())),
        }
    }

    pub fn continued_derivative(&self, params: &ModelParameters, z: Complex64) -> Result<Complex64> {
        if params.is_free() {
            return Ok(Complex64::new(0.0, 0.0));
        }
        match self {
            SpectralDensity::Flat { .. } => Ok(Complex64::new(0.0, 0.0)),
            SpectralDensity::Lorentzian { center, width } => {
                let x = z - center;
                let d = x * x + width * width;
                Ok(-2.0 * params.coupling_sq() * width / PI * x / (d * d))
            }
            SpectralDensity::Gaussian { center, width } => {
                let rho = self.continued(params, z)?;
                Ok(-rho * (z - center) / (width * width))
            }
            _ => Err(Error::ContinuationUnavailable(self.name())),
        }
    }

    /// Poles of the continued density in the complex plane.
    pub fn continuation_poles(&self, params: &ModelParameters) -> Vec<Complex64> {
        match self {
            SpectralDensity::Lorentzian { center, width } if !params.is_free() => vec![
                Complex64::new(*center, -width),
                Complex64::new(*center, *width),
            ],
            _ => Vec::new(),
        }
    }

    /// Large-|lambda| constant value of rho (nonzero only in the wide band).
    pub(crate) fn asymptote(&self, params: &ModelParameters) -> f64 {
        match self {
            SpectralDensity::Flat { gamma_total } if !params.is_free() => gamma_total / (2.0 * PI),
            _ => 0.0,
        }
    }

    /// Interval carrying the weight, possibly unbounded.
    pub(crate) fn support(&self) -> (f64, f64) {
        match self {
            SpectralDensity::Flat { .. } | SpectralDensity::Lorentzian { .. } => {
                (f64::NEG_INFINITY, f64::INFINITY)
            }
            SpectralDensity::Gaussian { center, width } => (
                center - GAUSSIAN_SUPPORT_SIGMAS * width,
                center + GAUSSIAN_SUPPORT_SIGMAS * width,
            ),
            SpectralDensity::Tabulated { grid, .. } => (grid[0], grid[grid.len() - 1]),
            SpectralDensity::FromFormFactor(p) => p.support,
        }
    }

    /// Points at which the density changes character; used as quadrature
    /// breakpoints.
    pub(crate) fn features(&self) -> Vec<f64> {
        match self {
            SpectralDensity::Flat { .. } => Vec::new(),
            SpectralDensity::Lorentzian { center, width } | SpectralDensity::Gaussian { center, width } => {
                vec![center - 3.0 * width, *center, center + 3.0 * width]
            }
            SpectralDensity::Tabulated { grid, .. } => grid.clone(),
            SpectralDensity::FromFormFactor(p) => {
                let (a, b) = p.support;
                let n = 8;
                (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
            }
        }
    }

    /// Cauchy transform `int rho / (z - lambda)` in closed form, if known.
    pub(crate) fn cauchy_closed(&self, params: &ModelParameters, z: Complex64) -> Option<Complex64> {
        let upper = z.im > 0.0;
        if params.is_free() {
            return Some(Complex64::new(0.0, 0.0));
        }
        match self {
            SpectralDensity::Flat { gamma_total } => {
                let half = 0.5 * gamma_total;
                Some(Complex64::new(0.0, if upper { -half } else { half }))
            }
            SpectralDensity::Lorentzian { center, width } => {
                let shift = if upper { *width } else { -width };
                Some(params.coupling_sq() / (z - center + Complex64::new(0.0, shift)))
            }
            _ => None,
        }
    }

    /// Principal value `PV int rho / (sigma - lambda)` in closed form, if known.
    pub(crate) fn pv_closed(&self, params: &ModelParameters, sigma: f64) -> Option<f64> {
        if params.is_free() {
            return Some(0.0);
        }
        match self {
            SpectralDensity::Flat { .. } => Some(0.0),
            SpectralDensity::Lorentzian { center, width } => {
                let x = sigma - center;
                Some(params.coupling_sq() * x / (x * x + width * width))
            }
            _ => None,
        }
    }
}

fn check_range(grid: &[f64], lambda: f64) -> Result<()> {
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    if lambda < lo || lambda > hi || lambda.is_nan() {
        return Err(Error::OutOfRange { lambda, lo, hi });
    }
    Ok(())
}

fn segment(grid: &[f64], lambda: f64) -> usize {
    let i = grid.partition_point(|&x| x <= lambda);
    i.saturating_sub(1).min(grid.len() - 2)
}

fn interpolate(grid: &[f64], values: &[f64], lambda: f64) -> f64 {
    let i = segment(grid, lambda);
    let t = (lambda - grid[i]) / (grid[i + 1] - grid[i]);
    values[i] + t * (values[i + 1] - values[i])
}

/// Checks every type invariant and returns the pair unchanged.
pub fn validate(
    params: ModelParameters,
    density: SpectralDensity,
) -> Result<(ModelParameters, SpectralDensity)> {
    let invalid = |s: &str| Err(Error::Invalid(s.to_string()));
    if !(params.m_v > 0.0 && params.m_n > 0.0 && params.m_theta > 0.0) {
        return invalid("nonpositive mass");
    }
    if !params.omega_v.is_finite() {
        return invalid("omega_V must be finite");
    }
    if !(params.g >= 0.0 && params.g.is_finite()) {
        return invalid("coupling must be finite and nonnegative");
    }
    if !(params.p[0].is_finite() && params.p[1].is_finite()) {
        return invalid("foliation momentum must be finite");
    }
    match &density {
        SpectralDensity::Flat { gamma_total } => {
            if !(*gamma_total > 0.0 && gamma_total.is_finite()) {
                return invalid("flat density needs gamma_total > 0");
            }
        }
        SpectralDensity::Lorentzian { center, width } | SpectralDensity::Gaussian { center, width } => {
            if !center.is_finite() {
                return invalid("density center must be finite");
            }
            if !(*width > 0.0 && width.is_finite()) {
                return invalid("density width must be positive");
            }
        }
        SpectralDensity::Tabulated { grid, values } => {
            if grid.len() < 2 || grid.len() != values.len() {
                return invalid("table needs at least two points and matching lengths");
            }
            if grid.windows(2).any(|w| !(w[1] > w[0])) {
                return invalid("unsorted table");
            }
            if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return invalid("negative density sample");
            }
        }
        SpectralDensity::FromFormFactor(p) => {
            if p.components.is_empty() {
                return invalid("form factor needs d >= 1");
            }
            if p.components.iter().map(|c| c.norm_sqr()).sum::<f64>() <= 0.0 {
                return invalid("form factor direction has zero norm");
            }
            if let Some(ps) = &p.component_profiles {
                if ps.len() != p.components.len() {
                    return invalid("one profile per component required");
                }
            }
            if !(p.rapidity_cutoff > 0.0 && p.rapidity_cutoff.is_finite()) {
                return invalid("rapidity cutoff must be positive");
            }
            if !(p.support.1 > p.support.0) {
                return invalid("form factor support must be a nonempty interval");
            }
        }
    }
    Ok((params, density))
}

/// Options for the numeric dispersion integrals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DispersionOptions {
    /// Use adaptive quadrature even when a closed form exists.
    pub force_quadrature: bool,
    pub tolerance: Tolerance,
    /// Largest absolute quadrature error accepted before failing.
    pub accept: f64,
}

impl Default for DispersionOptions {
    fn default() -> Self {
        DispersionOptions {
            force_quadrature: false,
            tolerance: Tolerance {
                abs: 1e-13,
                rel: 1e-13,
                max_intervals: 2000,
            },
            accept: 1e-9,
        }
    }
}

/// A validated parameter set and density, the input of every computation.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub params: ModelParameters,
    pub density: SpectralDensity,
    pub options: DispersionOptions,
}

impl Model {
    pub fn new(params: ModelParameters, density: SpectralDensity) -> Result<Model> {
        let (params, density) = validate(params, density)?;
        Ok(Model {
            params,
            density,
            options: DispersionOptions::default(),
        })
    }

    /// Stock wide-band model: flat density, `omega_V = 1`.
    pub fn flat(gamma_total: f64) -> Model {
        Model::new(ModelParameters::new(1.0, 1.0), SpectralDensity::Flat { gamma_total })
            .expect("stock flat model is valid")
    }

    /// Stock Lorentzian model: `omega_V = 1`, coupling `g`.
    pub fn lorentzian(center: f64, width: f64, g: f64) -> Model {
        Model::new(
            ModelParameters::new(1.0, g),
            SpectralDensity::Lorentzian { center, width },
        )
        .expect("stock lorentzian model is valid")
    }

    /// Stock Gaussian model: `omega_V = 1`, coupling `g`.
    pub fn gaussian(center: f64, width: f64, g: f64) -> Model {
        Model::new(
            ModelParameters::new(1.0, g),
            SpectralDensity::Gaussian { center, width },
        )
        .expect("stock gaussian model is valid")
    }

    pub fn with_quadrature(mut self) -> Model {
        self.options.force_quadrature = true;
        self
    }

    pub fn with_omega(mut self, omega_v: f64) -> Model {
        self.params.omega_v = omega_v;
        self
    }

    pub fn with_coupling(mut self, g: f64) -> Model {
        self.params.g = g;
        self
    }

    pub fn rho(&self, lambda: f64) -> Result<f64> {
        self.density.value(&self.params, lambda)
    }
}

/// Level-set reduction of the form factor in 1+1 dimensions:
/// `rho_p(lambda) = int d^2k |f(k)|^2 delta(lambda - omega(p, k))` with
/// `omega(p, k) = (p - k)^2 / 2 M_N + k^2 / 2 M_theta` in signature `(-, +)`.
///
/// Completing the square gives `omega = a q.q + E0` with `q = k - k*`,
/// `a = 1 / 2 mu` (reduced mass `mu`), so every level set is a pair of
/// hyperbola branches. Each branch is parameterized by rapidity `t`, on
/// which the delta function contributes the constant Jacobian `1 / 2a`.
pub fn density_from_form_factor(
    profile: &FormFactorProfile,
    params: &ModelParameters,
    lambda: f64,
) -> Result<f64> {
    let m_sum = params.m_n + params.m_theta;
    let reduced = params.m_n * params.m_theta / m_sum;
    let a = 0.5 / reduced;
    let [p0, p1] = params.p;
    let e0 = (-p0 * p0 + p1 * p1) / (2.0 * m_sum);
    let k_star = [p0 * params.m_theta / m_sum, p1 * params.m_theta / m_sum];
    let c = (lambda - e0) / a;
    let r = c.abs().sqrt();
    let timelike = c < 0.0;

    let omega = |k: [f64; 2]| {
        let d = [p0 - k[0], p1 - k[1]];
        let dd = -d[0] * d[0] + d[1] * d[1];
        let kk = -k[0] * k[0] + k[1] * k[1];
        dd / (2.0 * params.m_n) + kk / (2.0 * params.m_theta)
    };
    let branch = |t: f64, sign: f64| {
        let (q0, q1) = if timelike {
            (sign * r * t.cosh(), r * t.sinh())
        } else {
            (r * t.sinh(), sign * r * t.cosh())
        };
        [k_star[0] + q0, k_star[1] + q1]
    };
    let integrand = |t: f64| {
        let w: f64 = [1.0, -1.0]
            .iter()
            .map(|&s| profile.weight_at(omega(branch(t, s))))
            .sum();
        Complex64::new(w / (2.0 * a), 0.0)
    };
    let cut = profile.rapidity_cutoff;
    let tol = Tolerance {
        abs: 1e-14,
        rel: 1e-10,
        max_intervals: 200,
    };
    let est = quad::integrate(integrand, &[-cut, 0.0, cut], tol)?;
    Ok(est.value.re.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(g: f64) -> ModelParameters {
        ModelParameters::new(1.0, g)
    }

    #[test]
    fn accepts_reference_configuration() {
        let d = SpectralDensity::Lorentzian {
            center: 1.0,
            width: 0.1,
        };
        let (pp, dd) = validate(p(0.2), d.clone()).unwrap();
        assert_eq!(pp, p(0.2));
        assert_eq!(dd, d);
    }

    #[test]
    fn rejects_nonpositive_mass() {
        let err = validate(
            p(0.2).with_masses(-1.0, 1.0, 1.0),
            SpectralDensity::Flat { gamma_total: 0.2 },
        )
        .unwrap_err();
        assert_eq!(err, Error::Invalid("nonpositive mass".into()));
    }

    #[test]
    fn rejects_unsorted_table() {
        let err = validate(
            p(0.2),
            SpectralDensity::Tabulated {
                grid: vec![0.0, 0.0, 1.0],
                values: vec![0.1, 0.1, 0.1],
            },
        )
        .unwrap_err();
        assert_eq!(err, Error::Invalid("unsorted table".into()));
    }

    #[test]
    fn rejects_negative_sample() {
        let err = validate(
            p(0.2),
            SpectralDensity::Tabulated {
                grid: vec![0.0, 1.0],
                values: vec![0.1, -0.1],
            },
        )
        .unwrap_err();
        assert_eq!(err, Error::Invalid("negative density sample".into()));
    }

    #[test]
    fn closed_form_values() {
        let flat = SpectralDensity::Flat { gamma_total: 0.2 };
        assert!((flat.value(&p(0.2), 123.0).unwrap() - 0.031_830_988_618_379_07).abs() < 1e-15);
        let lor = SpectralDensity::Lorentzian {
            center: 1.0,
            width: 0.1,
        };
        let v1 = lor.value(&p(0.2), 1.0).unwrap();
        let v2 = lor.value(&p(0.2), 1.1).unwrap();
        assert!((v1 - 0.04 / (PI * 0.1)).abs() < 1e-15);
        assert!((v2 - 0.04 / (2.0 * PI * 0.1)).abs() < 1e-15);
        assert!((v1 - 0.127324).abs() < 1e-6);
        assert!((v2 - 0.063662).abs() < 1e-6);
    }

    #[test]
    fn tabulated_interpolates_and_rejects_out_of_range() {
        let d = SpectralDensity::Tabulated {
            grid: vec![0.0, 1.0, 3.0],
            values: vec![0.0, 1.0, 0.0],
        };
        assert!((d.value(&p(0.1), 0.5).unwrap() - 0.5).abs() < 1e-15);
        assert!((d.value(&p(0.1), 2.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((d.value(&p(0.1), 3.0).unwrap() - 0.0).abs() < 1e-15);
        assert!(matches!(
            d.value(&p(0.1), 3.5),
            Err(Error::OutOfRange { .. })
        ));
        assert!(matches!(
            d.continued(&p(0.1), Complex64::new(1.0, -0.1)),
            Err(Error::ContinuationUnavailable("tabulated"))
        ));
    }

    #[test]
    fn decoupled_density_vanishes() {
        for d in [
            SpectralDensity::Flat { gamma_total: 0.2 },
            SpectralDensity::Gaussian {
                center: 0.0,
                width: 1.0,
            },
        ] {
            assert_eq!(d.value(&p(0.0), 0.3).unwrap(), 0.0);
        }
    }

    #[test]
    fn continuation_matches_axis_values() {
        let params = p(0.2);
        for d in [
            SpectralDensity::Lorentzian {
                center: 1.0,
                width: 0.1,
            },
            SpectralDensity::Gaussian {
                center: 0.5,
                width: 0.7,
            },
        ] {
            for x in [-1.0, 0.3, 1.0, 2.5] {
                let on = d.value(&params, x).unwrap();
                let cont = d.continued(&params, Complex64::new(x, 0.0)).unwrap();
                assert!((cont.re - on).abs() < 1e-15 && cont.im.abs() < 1e-15);
                // derivative against a central difference
                let h = 1e-5;
                let fd = (d.value(&params, x + h).unwrap() - d.value(&params, x - h).unwrap()) / (2.0 * h);
                let an = d.derivative(&params, x).unwrap();
                assert!((fd - an).abs() < 1e-8 * (1.0 + an.abs()));
            }
        }
    }

    fn gaussian_profile() -> FormFactorProfile {
        FormFactorProfile::factorized(
            EnergyProfile::Gaussian {
                center: 0.5,
                width: 0.8,
                amplitude: 0.3,
            },
            vec![Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)],
        )
    }

    #[test]
    fn zero_form_factor_gives_zero() {
        let prof = FormFactorProfile::factorized(
            EnergyProfile::Constant(0.0),
            vec![Complex64::new(1.0, 0.0)],
        );
        let params = p(1.0).with_momentum(1.2, 0.3);
        for x in [-3.0, 0.0, 0.7, 5.0] {
            assert_eq!(density_from_form_factor(&prof, &params, x).unwrap(), 0.0);
        }
    }

    #[test]
    fn form_factor_is_quadratic_in_scale() {
        let prof = gaussian_profile();
        let double = prof.scaled(2.0);
        let params = p(1.0).with_momentum(1.5, 0.4);
        for x in [-2.0, -0.3, 0.5, 1.7] {
            let a = density_from_form_factor(&prof, &params, x).unwrap();
            let b = density_from_form_factor(&double, &params, x).unwrap();
            assert!((b / a - 4.0).abs() < 1e-12, "lambda={x}");
        }
    }

    #[test]
    fn form_factor_level_set_measure() {
        // The profile only depends on omega, so rho is g(lambda)^2 |u|^2
        // times the level-set measure 2 T / a, on both sides of the cone.
        let prof = gaussian_profile();
        let params = p(1.0).with_momentum(0.9, -0.2).with_masses(2.0, 1.0, 1.5);
        let reduced = 1.0 * 1.5 / 2.5;
        let measure = 2.0 * prof.rapidity_cutoff * 2.0 * reduced;
        let e0 = (-0.81 + 0.04) / 5.0;
        for x in [e0 - 1.0, e0 - 0.01, e0 + 0.01, 0.5, 2.0] {
            let got = density_from_form_factor(&prof, &params, x).unwrap();
            let g = prof.profile.eval(x);
            let want = g * g * measure;
            assert!((got - want).abs() < 1e-12 * want.max(1e-300), "lambda={x}: {got} vs {want}");
        }
    }
}
