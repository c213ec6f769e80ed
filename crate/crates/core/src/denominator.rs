//! The denominator function `h(z) = z - omega_V - C(z)`, where
//! `C(z) = int rho(lambda) / (z - lambda) dlambda`, together with its boundary
//! values on the real axis, its continuation through the cut and the search
//! for its second-sheet zeros (the resonance poles).

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, SpectralDensity};
use crate::quad::{self, Estimate};

const I: Complex64 = Complex64::new(0.0, 1.0);

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Limits of `h` on the real axis from above and below.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryValue {
    pub sigma: f64,
    pub h_plus: Complex64,
    pub h_minus: Complex64,
    /// `PV int rho(lambda) / (sigma - lambda) dlambda`.
    pub pv_part: f64,
    pub rho: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sheet {
    Physical,
    Second,
}

/// A zero of the continued denominator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonancePole {
    pub mu: Complex64,
    /// `1 / h'(mu)` on the continued function.
    pub residue: Complex64,
    pub iterations: usize,
    pub final_step: f64,
    pub sheet: Sheet,
}

impl ResonancePole {
    /// Decay rate `-Im mu`.
    pub fn width(&self) -> f64 {
        -self.mu.im
    }
}

/// Stopping rules for the Newton iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoleSearch {
    pub max_iterations: usize,
    pub residual_tol: f64,
    pub step_tol: f64,
    /// Newton steps without progress before switching to Muller's method.
    pub stagnation_limit: usize,
    /// Radius within which two roots are considered the same.
    pub dedup_radius: f64,
}

impl Default for PoleSearch {
    fn default() -> Self {
        PoleSearch {
            max_iterations: 100,
            residual_tol: 1e-12,
            step_tol: 1e-12,
            stagnation_limit: 20,
            dedup_radius: 1e-8,
        }
    }
}

/// Axis-aligned rectangle of the complex plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Rectangle {
    pub fn new(re: (f64, f64), im: (f64, f64)) -> Self {
        Rectangle {
            re_min: re.0,
            re_max: re.1,
            im_min: im.0,
            im_max: im.1,
        }
    }

    pub fn contains(&self, z: Complex64, slack: f64) -> bool {
        z.re >= self.re_min - slack
            && z.re <= self.re_max + slack
            && z.im >= self.im_min - slack
            && z.im <= self.im_max + slack
    }

    /// `nx * ny` seeds on a uniform grid including the edges.
    pub fn seeds(&self, nx: usize, ny: usize) -> Vec<Complex64> {
        let lin = |lo: f64, hi: f64, n: usize, i: usize| {
            if n <= 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        };
        let mut out = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                out.push(Complex64::new(
                    lin(self.re_min, self.re_max, nx, i),
                    lin(self.im_min, self.im_max, ny, j),
                ));
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// numeric dispersion integrals

/// A real weight on the line described well enough to integrate against the
/// Cauchy kernel.
struct Weight<'a> {
    eval: Box<dyn Fn(f64) -> Result<f64> + 'a>,
    asymptote: f64,
    support: (f64, f64),
    features: Vec<f64>,
    center: f64,
    half_width: f64,
}

fn density_weight(model: &Model) -> Weight<'_> {
    let d = &model.density;
    let p = &model.params;
    let (center, half_width) = core_window(d);
    let support = d.support();
    let eval: Box<dyn Fn(f64) -> Result<f64>> = match d {
        SpectralDensity::Tabulated { .. } => Box::new(move |x| {
            if x < support.0 || x > support.1 {
                Ok(0.0)
            } else {
                d.value(p, x)
            }
        }),
        _ => Box::new(move |x| d.value(p, x)),
    };
    Weight {
        eval,
        asymptote: d.asymptote(p),
        support,
        features: d.features(),
        center,
        half_width,
    }
}

fn derivative_weight(model: &Model) -> Weight<'_> {
    let d = &model.density;
    let p = &model.params;
    let (center, half_width) = core_window(d);
    Weight {
        eval: Box::new(move |x| Ok(d.derivative(p, x).unwrap_or(0.0))),
        asymptote: 0.0,
        support: d.support(),
        features: d.features(),
        center,
        half_width,
    }
}

fn core_window(d: &SpectralDensity) -> (f64, f64) {
    match d {
        SpectralDensity::Flat { .. } => (0.0, 50.0),
        SpectralDensity::Lorentzian { center, width } => (*center, (50.0 * width).max(5.0)),
        _ => {
            let (a, b) = d.support();
            (0.5 * (a + b), 0.5 * (b - a))
        }
    }
}

struct Dispersion<'m> {
    model: &'m Model,
    weight: Weight<'m>,
}

impl<'m> Dispersion<'m> {
    /// Core interval, always containing `x` when the support is unbounded.
    fn core(&self, x: f64) -> (f64, f64, bool) {
        let (lo, hi) = self.weight.support;
        if lo.is_finite() && hi.is_finite() {
            (lo, hi, false)
        } else {
            let a = (self.weight.center - self.weight.half_width).min(x - 1.0);
            let b = (self.weight.center + self.weight.half_width).max(x + 1.0);
            (a, b, true)
        }
    }

    fn breakpoints(&self, a: f64, b: f64, x0: Option<f64>, eps: f64) -> Vec<f64> {
        let mut pts = vec![a, b];
        pts.extend(self.weight.features.iter().copied());
        if let Some(x) = x0 {
            pts.push(x);
            if eps > 0.0 {
                for k in [1.0, 10.0, 100.0] {
                    pts.push(x - k * eps);
                    pts.push(x + k * eps);
                }
            }
        }
        pts.retain(|p| *p >= a && *p <= b && p.is_finite());
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// `int w(lambda) / (z - lambda)` for `Im z != 0`, or its principal value
    /// on the real axis when `z.im == 0`.
    fn transform(&self, z: Complex64) -> Result<Estimate> {
        let tol = self.model.options.tolerance;
        let failure: RefCell<Option<Error>> = RefCell::new(None);
        let w = |x: f64| match (self.weight.eval)(x) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        };
        let x = z.re;
        let on_axis = z.im == 0.0;
        let (a, b, unbounded) = self.core(x);
        let inside = a < x && x < b;
        let w0 = if inside { w(x) } else { 0.0 };
        let kernel = |lam: f64| -> Complex64 {
            if on_axis {
                c(1.0 / (x - lam))
            } else {
                1.0 / (z - lam)
            }
        };
        let pts = self.breakpoints(a, b, inside.then_some(x), z.im.abs());
        let mut total = quad::adapt(|lam| (w(lam) - w0) * kernel(lam), &pts, tol);
        if w0 != 0.0 {
            let logs = if on_axis {
                c(((x - a) / (b - x)).ln())
            } else {
                (z - a).ln() - (z - b).ln()
            };
            total.value += w0 * logs;
        }
        if unbounded {
            let inf = self.weight.asymptote;
            let tail = |lam: f64| (w(lam) - inf) * kernel(lam);
            total = total + quad::adapt_tail(tail, b, true, tol);
            total = total + quad::adapt_tail(tail, a, false, tol);
            if inf != 0.0 {
                let full = if on_axis {
                    c(0.0)
                } else if z.im > 0.0 {
                    -I * PI
                } else {
                    I * PI
                };
                let core = if on_axis {
                    c(((x - a) / (b - x)).abs().ln())
                } else {
                    (z - a).ln() - (z - b).ln()
                };
                total.value += inf * (full - core);
            }
        }
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        if !(total.error <= self.model.options.accept) || !total.value.is_finite() {
            return Err(Error::Quadrature {
                achieved: total.error,
                requested: self.model.options.accept,
            });
        }
        Ok(total)
    }
}

fn numeric_cauchy(model: &Model, z: Complex64) -> Result<Estimate> {
    Dispersion {
        model,
        weight: density_weight(model),
    }
    .transform(z)
}

fn numeric_cauchy_of_derivative(model: &Model, z: Complex64) -> Result<Complex64> {
    Ok(Dispersion {
        model,
        weight: derivative_weight(model),
    }
    .transform(z)?
    .value)
}

// ---------------------------------------------------------------------------
// public operations

/// `C(z) = int rho(lambda) / (z - lambda) dlambda` off the real axis, together
/// with the absolute error estimate of the quadrature (zero for closed forms).
pub fn cauchy_transform_estimate(model: &Model, z: Complex64) -> Result<Estimate> {
    if z.im == 0.0 || !z.is_finite() {
        return Err(Error::OnRealAxis(z));
    }
    if !model.options.force_quadrature {
        if let Some(v) = model.density.cauchy_closed(&model.params, z) {
            return Ok(Estimate { value: v, error: 0.0 });
        }
    }
    if model.params.is_free() {
        return Ok(Estimate::zero());
    }
    numeric_cauchy(model, z)
}

pub fn cauchy_transform(model: &Model, z: Complex64) -> Result<Complex64> {
    Ok(cauchy_transform_estimate(model, z)?.value)
}

/// `PV int rho(lambda) / (sigma - lambda) dlambda`.
pub fn principal_value(model: &Model, sigma: f64) -> Result<f64> {
    if !sigma.is_finite() {
        return Err(Error::Invalid(format!("sigma = {sigma} is not finite")));
    }
    if let SpectralDensity::Tabulated { .. } = model.density {
        model.rho(sigma)?;
    }
    if !model.options.force_quadrature {
        if let Some(v) = model.density.pv_closed(&model.params, sigma) {
            return Ok(v);
        }
    }
    if model.params.is_free() {
        return Ok(0.0);
    }
    Ok(numeric_cauchy(model, c(sigma))?.value.re)
}

/// `h` on the physical sheet, either half-plane.
pub fn h_direct(model: &Model, z: Complex64) -> Result<Complex64> {
    Ok(z - model.params.omega_v - cauchy_transform(model, z)?)
}

/// `h(z)` for `Im z > 0`.
pub fn h_upper(model: &Model, z: Complex64) -> Result<Complex64> {
    if !(z.im > 0.0) {
        return Err(Error::Invalid(format!("h_upper needs Im z > 0, got {z}")));
    }
    h_direct(model, z)
}

/// Boundary values `h(sigma +/- i0)`.
pub fn h_boundary(model: &Model, sigma: f64) -> Result<BoundaryValue> {
    let rho = model.rho(sigma)?;
    let pv = principal_value(model, sigma)?;
    let re = sigma - model.params.omega_v - pv;
    let h_plus = Complex64::new(re, PI * rho);
    Ok(BoundaryValue {
        sigma,
        h_plus,
        h_minus: h_plus.conj(),
        pv_part: pv,
        rho,
    })
}

/// Jump `C(sigma - i eps) - C(sigma + i eps)` of the dispersion integral; it
/// equals the jump of `h` minus the trivial `2 i eps` and tends to
/// `2 pi i rho(sigma)`.
pub fn plemelj_jump(model: &Model, sigma: f64, eps: f64) -> Result<Complex64> {
    let up = cauchy_transform(model, Complex64::new(sigma, eps))?;
    let down = cauchy_transform(model, Complex64::new(sigma, -eps))?;
    Ok(down - up)
}

/// `|J(0) / 2 pi i - rho(sigma)|`, where `J(0)` is the polynomial
/// (Richardson) extrapolation of the jumps measured at `eps`.
pub fn plemelj_residual(model: &Model, sigma: f64, eps: &[f64]) -> Result<f64> {
    if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0)) || eps.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Invalid(
            "epsilon sequence must be positive and decreasing".into(),
        ));
    }
    let rho = model.rho(sigma)?;
    if model.params.is_free() {
        return Ok(rho.abs());
    }
    let jumps = eps
        .iter()
        .map(|&e| plemelj_jump(model, sigma, e))
        .collect::<Result<Vec<_>>>()?;
    let j0 = neville_at_zero(eps, &jumps);
    Ok((j0 / (2.0 * PI * I) - rho).norm())
}

/// Value at 0 of the interpolating polynomial through `(x_i, y_i)`.
pub(crate) fn neville_at_zero(x: &[f64], y: &[Complex64]) -> Complex64 {
    let mut p = y.to_vec();
    let n = p.len();
    for k in 1..n {
        for i in 0..n - k {
            p[i] = (x[i + k] * p[i] - x[i] * p[i + 1]) / (x[i + k] - x[i]);
        }
    }
    p[0]
}

fn require_continuation(model: &Model) -> Result<()> {
    if model.params.is_free() || model.density.continuation_available() {
        Ok(())
    } else {
        Err(Error::ContinuationUnavailable(model.density.name()))
    }
}

/// Continuation of `h` from the upper half-plane into `Im z < 0`:
/// `h_direct(z) + 2 pi i rho~(z)`.
pub fn h_second_sheet(model: &Model, z: Complex64) -> Result<Complex64> {
    if !(z.im < 0.0) {
        return Err(Error::Invalid(format!("h_second_sheet needs Im z < 0, got {z}")));
    }
    require_continuation(model)?;
    let rho = model.density.continued(&model.params, z)?;
    Ok(h_direct(model, z)? + 2.0 * PI * I * rho)
}

/// The single analytic function equal to `h` above the axis and to its
/// continuation below; boundary value `h_plus` on the axis.
pub fn h_continued(model: &Model, z: Complex64) -> Result<Complex64> {
    if z.im > 0.0 {
        h_direct(model, z)
    } else if z.im < 0.0 {
        h_second_sheet(model, z)
    } else {
        Ok(h_boundary(model, z.re)?.h_plus)
    }
}

/// `1 + int rho / (z - lambda)^2` on the physical sheet, i.e. `1 - C[rho'](z)`.
fn h_derivative_direct(model: &Model, z: Complex64) -> Result<Complex64> {
    let p = &model.params;
    if p.is_free() {
        return Ok(c(1.0));
    }
    if !model.options.force_quadrature {
        match &model.density {
            SpectralDensity::Flat { .. } => return Ok(c(1.0)),
            SpectralDensity::Lorentzian { center, width } => {
                let shift = if z.im >= 0.0 { *width } else { -width };
                let d = z - center + I * shift;
                return Ok(1.0 + p.coupling_sq() / (d * d));
            }
            _ => {}
        }
    }
    match &model.density {
        SpectralDensity::FromFormFactor(_) => {
            if z.im == 0.0 {
                return Err(Error::OnRealAxis(z));
            }
            let delta = 1e-3 * z.im.abs();
            let f = |k: f64| cauchy_transform(model, z + k * delta);
            let dc = (-f(2.0)? + 8.0 * f(1.0)? - 8.0 * f(-1.0)? + f(-2.0)?) / (12.0 * delta);
            Ok(1.0 - dc)
        }
        SpectralDensity::Tabulated { grid, values } => {
            let (a, b) = (grid[0], grid[grid.len() - 1]);
            let (ra, rb) = (values[0], values[values.len() - 1]);
            let edge = rb / (z - b) - ra / (z - a);
            Ok(1.0 + edge - numeric_cauchy_of_derivative(model, z)?)
        }
        _ => Ok(1.0 - numeric_cauchy_of_derivative(model, z)?),
    }
}

/// Derivative of [`h_continued`].
pub fn h_derivative(model: &Model, z: Complex64) -> Result<Complex64> {
    if z.im > 0.0 || model.params.is_free() {
        return h_derivative_direct(model, z);
    }
    require_continuation(model)?;
    let p = &model.params;
    if !model.options.force_quadrature {
        if let SpectralDensity::Lorentzian { center, width } = &model.density {
            let d = z - center + I * *width;
            return Ok(1.0 + p.coupling_sq() / (d * d));
        }
    }
    let jump = 2.0 * PI * I * model.density.continued_derivative(p, z)?;
    if z.im < 0.0 {
        Ok(h_derivative_direct(model, z)? + jump)
    } else {
        // boundary value of 1 - C[rho'] from above is 1 - PV[rho'] + i pi rho'
        let pv = match &model.density {
            SpectralDensity::Flat { .. } => c(0.0),
            _ => {
                Dispersion {
                    model,
                    weight: derivative_weight(model),
                }
                .transform(z)?
                .value
            }
        };
        Ok(1.0 - pv + 0.5 * jump)
    }
}

fn muller_step(z: [Complex64; 3], fz: [Complex64; 3]) -> Complex64 {
    let [x0, x1, x2] = z;
    let [f0, f1, f2] = fz;
    let h1 = x1 - x0;
    let h2 = x2 - x1;
    let d1 = (f1 - f0) / h1;
    let d2 = (f2 - f1) / h2;
    let a = (d2 - d1) / (h2 + h1);
    let b = a * h2 + d2;
    let disc = (b * b - 4.0 * f2 * a).sqrt();
    let den = if (b + disc).norm() > (b - disc).norm() {
        b + disc
    } else {
        b - disc
    };
    if den.norm() == 0.0 {
        return x2 + 1e-3 * (1.0 + x2.norm());
    }
    x2 - 2.0 * f2 / den
}

/// Newton iteration on the continued denominator starting at `seed`.
pub fn find_pole(model: &Model, seed: Complex64) -> Result<ResonancePole> {
    find_pole_with(model, seed, PoleSearch::default())
}

pub fn find_pole_with(model: &Model, seed: Complex64, opts: PoleSearch) -> Result<ResonancePole> {
    if model.params.is_free() {
        return Ok(ResonancePole {
            mu: c(model.params.omega_v),
            residue: c(1.0),
            iterations: 0,
            final_step: 0.0,
            sheet: Sheet::Physical,
        });
    }
    require_continuation(model)?;
    if seed.im > 0.0 || !seed.is_finite() {
        return Err(Error::Invalid(format!("seed {seed} must lie in the closed lower half-plane")));
    }
    let h = |z: Complex64| h_continued(model, z);
    // Newton runs on h times the continuation poles below the axis, which
    // removes them from the iteration
    let deflate: Vec<Complex64> = model
        .density
        .continuation_poles(&model.params)
        .into_iter()
        .filter(|p| p.im < 0.0)
        .collect();
    let mut z = seed;
    let mut hz = h(z)?;
    let mut best = hz.norm();
    let mut stagnant = 0;
    let mut muller: Option<[Complex64; 3]> = None;
    let mut step = f64::INFINITY;
    for it in 1..=opts.max_iterations {
        let next = match muller {
            None => {
                let d = h_derivative(model, z)? + hz * deflate.iter().map(|p| 1.0 / (z - p)).sum::<Complex64>();
                if d.norm() == 0.0 || !d.is_finite() {
                    stagnant = opts.stagnation_limit;
                    z + 1e-3 * (1.0 + z.norm())
                } else {
                    z - hz / d
                }
            }
            Some(pts) => {
                let fz = [h(pts[0])?, h(pts[1])?, hz];
                muller_step(pts, fz)
            }
        };
        if !next.is_finite() {
            return Err(Error::NoConvergence {
                iterations: it,
                residual: hz.norm(),
            });
        }
        step = (next - z).norm();
        if let Some(pts) = muller.as_mut() {
            *pts = [pts[1], z, next];
        }
        z = next;
        hz = h(z)?;
        let r = hz.norm();
        if r < opts.residual_tol && step < opts.step_tol * (1.0 + z.norm()) {
            if z.im > opts.step_tol * (1.0 + z.norm()) {
                return Err(Error::UpperHalfPlaneRoot(z));
            }
            return Ok(ResonancePole {
                mu: z,
                residue: 1.0 / h_derivative(model, z)?,
                iterations: it,
                final_step: step,
                sheet: if z.im < 0.0 { Sheet::Second } else { Sheet::Physical },
            });
        }
        if r < 0.5 * best {
            best = r;
            stagnant = 0;
        } else {
            stagnant += 1;
        }
        if muller.is_none() && stagnant >= opts.stagnation_limit {
            let d = 1e-3 * (1.0 + z.norm());
            muller = Some([z - d, z + d, z]);
            stagnant = 0;
        }
    }
    log::debug!("pole search from {seed} stopped at {z} (step {step:.3e})");
    Err(Error::NoConvergence {
        iterations: opts.max_iterations,
        residual: hz.norm(),
    })
}

/// Runs [`find_pole`] from every seed of an `nx * ny` grid over `rect` and
/// keeps the distinct zeros lying in the rectangle, sorted by real part.
pub fn find_all_poles(
    model: &Model,
    rect: Rectangle,
    nx: usize,
    ny: usize,
) -> Vec<ResonancePole> {
    find_all_poles_with(model, rect, nx, ny, PoleSearch::default())
}

pub fn find_all_poles_with(
    model: &Model,
    rect: Rectangle,
    nx: usize,
    ny: usize,
    opts: PoleSearch,
) -> Vec<ResonancePole> {
    if model.params.is_free() {
        return vec![find_pole_with(model, c(model.params.omega_v), opts).expect("free pole")];
    }
    let found: Vec<ResonancePole> = rect
        .seeds(nx, ny)
        .par_iter()
        .filter_map(|&s| find_pole_with(model, s, opts).ok())
        .collect();
    let mut out: Vec<ResonancePole> = Vec::new();
    for p in found {
        if !rect.contains(p.mu, opts.dedup_radius) {
            continue;
        }
        if out.iter().all(|q| (q.mu - p.mu).norm() > opts.dedup_radius) {
            out.push(p);
        }
    }
    out.sort_by(|a, b| a.mu.re.total_cmp(&b.mu.re).then(a.mu.im.total_cmp(&b.mu.im)));
    out
}

/// Second-order pole estimate `omega_V + PV(omega_V) - i pi rho(omega_V)`,
/// accurate to `O(g^4)`.
pub fn weak_coupling_estimate(model: &Model) -> Result<Complex64> {
    let w = model.params.omega_v;
    let rho = model.rho(w)?;
    let pv = principal_value(model, w)?;
    Ok(Complex64::new(w + pv, -PI * rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParameters;

    fn flat() -> Model {
        Model::flat(0.2)
    }

    fn lorentz() -> Model {
        Model::lorentzian(1.0, 0.1, 0.2)
    }

    fn gauss() -> Model {
        Model::gaussian(1.0, 1.0, 0.2)
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    /// Dense trapezoid with the same subtraction the quadrature avoids: used
    /// only off the axis where the integrand is smooth.
    fn trapezoid_cauchy(model: &Model, z: Complex64) -> Complex64 {
        let (lo, hi) = (-15.0, 17.0);
        let n = 400_000;
        let h = (hi - lo) / n as f64;
        let mut s = c(0.0);
        for i in 0..=n {
            let x = lo + h * i as f64;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            s += w * model.rho(x).unwrap() / (z - x);
        }
        s * h
    }

    #[test]
    fn cauchy_closed_forms() {
        let v = cauchy_transform(&flat(), I).unwrap();
        assert!(close(v, -0.1 * I, 1e-15));
        let v = cauchy_transform(&lorentz(), Complex64::new(1.0, 1.0)).unwrap();
        assert!(close(v, -0.036_363_636_363_636_36 * I, 1e-12));
        assert!(matches!(
            cauchy_transform(&flat(), c(1.0)),
            Err(Error::OnRealAxis(_))
        ));
    }

    #[test]
    fn gaussian_cauchy_against_trapezoid() {
        let z = Complex64::new(0.0, 2.0);
        let est = cauchy_transform_estimate(&gauss(), z).unwrap();
        assert!(est.error <= 1e-9);
        let oracle = trapezoid_cauchy(&gauss(), z);
        assert!(close(est.value, oracle, 1e-8), "{} vs {}", est.value, oracle);
    }

    #[test]
    fn numeric_path_reproduces_closed_forms() {
        for m in [flat(), lorentz()] {
            let q = m.clone().with_quadrature();
            for z in [
                Complex64::new(1.0, 1.0),
                Complex64::new(-3.0, 0.01),
                Complex64::new(1.05, -0.2),
                Complex64::new(8.0, -1e-3),
            ] {
                let a = cauchy_transform(&m, z).unwrap();
                let b = cauchy_transform(&q, z).unwrap();
                assert!(close(a, b, 1e-10), "{z}: {a} vs {b}");
            }
            for s in [-7.0, 0.3, 1.0, 1.1, 9.5] {
                let a = h_boundary(&m, s).unwrap();
                let b = h_boundary(&q, s).unwrap();
                assert!(close(a.h_plus, b.h_plus, 1e-10), "sigma {s}");
            }
        }
    }

    #[test]
    fn h_upper_examples() {
        let z = Complex64::new(1.0, 1.0);
        assert!(close(h_upper(&flat(), z).unwrap(), 1.1 * I, 1e-15));
        assert!(close(h_upper(&lorentz(), z).unwrap(), 1.036_363_636_363_636_4 * I, 1e-12));
        let free = lorentz().with_coupling(0.0);
        let z = Complex64::new(-2.5, 0.3);
        assert_eq!(h_upper(&free, z).unwrap(), z - 1.0);
    }

    #[test]
    fn boundary_values() {
        let b = h_boundary(&flat(), 1.0).unwrap();
        assert!(close(b.h_plus, 0.1 * I, 1e-15));
        assert_eq!(b.h_minus, b.h_plus.conj());
        let b = h_boundary(&flat(), 2.0).unwrap();
        assert!(close(b.h_plus, Complex64::new(1.0, 0.1), 1e-15));
        let b = h_boundary(&lorentz(), 2.0).unwrap();
        let oracle = 1.0 - 0.04 / Complex64::new(1.0, 0.1);
        assert!(close(b.h_plus, oracle, 1e-14));
        assert!((b.h_plus.re - 0.960396).abs() < 1e-6);
        assert!((b.h_plus.im - 0.0039604).abs() < 1e-7);
    }

    #[test]
    fn plemelj() {
        let r = plemelj_residual(&flat(), 0.0, &[1e-2, 1e-3, 1e-4]).unwrap();
        assert!(r < 1e-10);
        let r = plemelj_residual(&lorentz(), 1.0, &[1e-2, 1e-3, 1e-4]).unwrap();
        assert!(r < 1e-6, "{r}");
        let free = lorentz().with_coupling(0.0);
        assert_eq!(plemelj_residual(&free, 1.0, &[1e-2, 1e-3]).unwrap(), 0.0);
        let r = plemelj_residual(&gauss(), 0.4, &[1e-2, 1e-3, 1e-4]).unwrap();
        assert!(r < 1e-6, "{r}");
    }

    #[test]
    fn plemelj_unextrapolated_order() {
        let m = lorentz();
        let rho = m.rho(1.2).unwrap();
        let res = |e: f64| (plemelj_jump(&m, 1.2, e).unwrap() / (2.0 * PI * I) - rho).norm();
        let (r1, r2) = (res(1e-3), res(1e-4));
        let order = (r1 / r2).log10();
        assert!(order >= 0.99, "order {order}");
    }

    #[test]
    fn second_sheet_closed_forms() {
        let z = Complex64::new(1.0, -0.05);
        assert!(close(h_second_sheet(&flat(), z).unwrap(), 0.05 * I, 1e-15));
        let m = lorentz();
        for z in [
            Complex64::new(0.3, -0.01),
            Complex64::new(1.2, -0.05),
            Complex64::new(2.0, -0.5),
            Complex64::new(-1.0, -0.09),
        ] {
            let direct = z - 1.0 - 0.04 / (z - 1.0 + 0.1 * I);
            assert!(close(h_second_sheet(&m, z).unwrap(), direct, 1e-12));
        }
    }

    #[test]
    fn second_sheet_continuity() {
        for m in [lorentz(), gauss(), lorentz().with_quadrature()] {
            let above = h_boundary(&m, 2.0).unwrap().h_plus;
            let below = h_second_sheet(&m, Complex64::new(2.0, -1e-10)).unwrap();
            assert!(close(above, below, 1e-8), "{} vs {}", above, below);
        }
    }

    #[test]
    fn second_sheet_unavailable_for_tables() {
        let m = Model::new(
            ModelParameters::new(1.0, 0.2),
            SpectralDensity::Tabulated {
                grid: vec![-1.0, 0.0, 2.0],
                values: vec![0.0, 0.1, 0.0],
            },
        )
        .unwrap();
        assert!(matches!(
            h_second_sheet(&m, Complex64::new(0.0, -0.1)),
            Err(Error::ContinuationUnavailable("tabulated"))
        ));
        assert!(matches!(
            find_pole(&m, Complex64::new(0.0, -0.1)),
            Err(Error::ContinuationUnavailable(_))
        ));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        assert_eq!(h_derivative(&flat(), Complex64::new(0.2, 3.0)).unwrap(), c(1.0));
        let free = lorentz().with_coupling(0.0);
        assert_eq!(h_derivative(&free, Complex64::new(0.2, -3.0)).unwrap(), c(1.0));
        for m in [lorentz(), gauss(), lorentz().with_quadrature()] {
            for z in [
                Complex64::new(1.1, -0.05),
                Complex64::new(0.4, 0.3),
                Complex64::new(2.0, -0.2),
            ] {
                let d = 1e-5;
                let fd = (h_continued(&m, z + d).unwrap() - h_continued(&m, z - d).unwrap()) / (2.0 * d);
                let an = h_derivative(&m, z).unwrap();
                assert!(close(fd, an, 1e-6), "{z}: {fd} vs {an}");
            }
        }
        let z = Complex64::new(1.3, -0.07);
        let want = 1.0 + 0.04 / (z - 1.0 + 0.1 * I).powi(2);
        assert!(close(h_derivative(&lorentz(), z).unwrap(), want, 1e-14));
    }

    #[test]
    fn poles_closed_forms() {
        let p = find_pole(&flat(), Complex64::new(1.0, -0.05)).unwrap();
        assert!(close(p.mu, Complex64::new(1.0, -0.1), 1e-15));
        assert!(close(p.residue, c(1.0), 1e-15));
        assert!(p.iterations <= 3);
        let disc = (Complex64::new(0.16 - 0.01, 0.0)).sqrt();
        let plus = 1.0 + 0.5 * (-0.1 * I + disc);
        let minus = 1.0 + 0.5 * (-0.1 * I - disc);
        let a = find_pole(&lorentz(), Complex64::new(1.2, -0.05)).unwrap();
        let b = find_pole(&lorentz(), Complex64::new(0.8, -0.05)).unwrap();
        assert!(close(a.mu, plus, 1e-12));
        assert!(close(b.mu, minus, 1e-12));
        assert!((a.mu.re - 1.193649).abs() < 1e-6);
        let free = flat().with_coupling(0.0);
        let p = find_pole(&free, Complex64::new(3.0, -1.0)).unwrap();
        assert_eq!(p.mu, c(1.0));
        assert_eq!(p.residue, c(1.0));
    }

    #[test]
    fn rejects_upper_seed() {
        assert!(matches!(
            find_pole(&lorentz(), Complex64::new(1.0, 0.5)),
            Err(Error::Invalid(_))
        ));
    }

    #[test]
    fn all_poles() {
        let rect = Rectangle::new((0.0, 2.0), (-0.3, 0.0));
        let poles = find_all_poles(&lorentz(), rect, 5, 5);
        assert_eq!(poles.len(), 2);
        assert!((poles[0].mu - Complex64::new(0.806_351, -0.05)).norm() < 1e-6);
        assert!((poles[1].mu - Complex64::new(1.193_649, -0.05)).norm() < 1e-6);
        let poles = find_all_poles(&flat(), rect, 5, 5);
        assert_eq!(poles.len(), 1);
        assert!(close(poles[0].mu, Complex64::new(1.0, -0.1), 1e-12));
        let poles = find_all_poles(&flat().with_coupling(0.0), rect, 5, 5);
        assert_eq!(poles.len(), 1);
        assert_eq!(poles[0].mu, c(1.0));
        for p in find_all_poles(&gauss(), Rectangle::new((0.0, 2.0), (-0.5, 0.0)), 4, 4) {
            assert!(h_continued(&gauss(), p.mu).unwrap().norm() < 1e-10);
            assert!(p.mu.im <= 0.0);
        }
    }

    #[test]
    fn weak_coupling() {
        let m = Model::lorentzian(1.0, 0.1, 0.01);
        let est = weak_coupling_estimate(&m).unwrap();
        assert!((est.im + 1.000e-3).abs() < 1e-15);
        let pole = find_pole(&m, est).unwrap();
        // exact root of x^2 + 0.1 i x - g^2 = 0 nearest the origin
        let exact_im = -(0.1 - (0.01f64 - 4e-4).sqrt()) / 2.0;
        assert!((pole.mu.im - exact_im).abs() < 1e-14);
        // the gap to the estimate is fourth order in g
        let gap = (pole.mu - est).norm();
        assert!((gap - (est.im - exact_im).abs()).abs() < 1e-12);
        assert!(gap < 2.0 * 1e-8 / 1e-3);
        let est = weak_coupling_estimate(&flat()).unwrap();
        assert!(close(est, Complex64::new(1.0, -0.1), 1e-16));
        assert_eq!(weak_coupling_estimate(&flat().with_coupling(0.0)).unwrap(), c(1.0));
    }

    #[test]
    fn tabulated_boundary_values() {
        // triangle density: PV integral in closed form
        let m = Model::new(
            ModelParameters::new(0.0, 1.0),
            SpectralDensity::Tabulated {
                grid: vec![-1.0, 0.0, 1.0],
                values: vec![0.0, 1.0, 0.0],
            },
        )
        .unwrap();
        let s: f64 = 0.3;
        let pv_exact = {
            // PV int (1 - |x|) / (s - x) over [-1, 1]
            let f = |a: f64, b: f64, slope: f64, icpt: f64| {
                // int (icpt + slope x)/(s - x) = -(icpt + slope s) ln|s - x| - slope x
                let g = |x: f64| -(icpt + slope * s) * (s - x).abs().ln() - slope * x;
                g(b) - g(a)
            };
            f(-1.0, 0.0, 1.0, 1.0) + f(0.0, 1.0, -1.0, 1.0)
        };
        let b = h_boundary(&m, s).unwrap();
        assert!((b.pv_part - pv_exact).abs() < 1e-10, "{} vs {}", b.pv_part, pv_exact);
        assert!((b.h_plus.im - PI * 0.7).abs() < 1e-14);
        assert!(matches!(h_boundary(&m, 1.5), Err(Error::OutOfRange { .. })));
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn models() -> [Model; 4] {
        [
            Model::flat(0.2),
            Model::lorentzian(1.0, 0.1, 0.2),
            Model::gaussian(1.0, 1.0, 0.2),
            Model::lorentzian(-0.5, 0.4, 0.7).with_omega(0.3),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn nevanlinna_upper_half_plane(x in -10.0..10.0f64, y in 1e-3..10.0f64, idx in 0usize..4) {
            let z = Complex64::new(x, y);
            let h = h_direct(&models()[idx], z).unwrap();
            prop_assert!(h.im >= y * (1.0 - 1e-12));
        }

        #[test]
        fn schwarz_reflection(x in -10.0..10.0f64, y in 1e-3..10.0f64, idx in 0usize..4) {
            let m = &models()[idx];
            let z = Complex64::new(x, y);
            let a = h_direct(m, z).unwrap();
            let b = h_direct(m, z.conj()).unwrap();
            prop_assert!((a.conj() - b).norm() <= 1e-12 * (1.0 + a.norm()));
        }
    }
}
