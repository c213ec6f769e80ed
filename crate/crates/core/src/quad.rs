//! Adaptive Gauss-Kronrod integration of complex-valued integrands and a
//! Gauss-Legendre rule generator.
//!
//! The adaptive driver is a globally adaptive bisection scheme in the style
//! of QUADPACK's `qag`: the interval with the largest error estimate is split
//! until the summed estimate drops below the requested tolerance.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// Value of an integral together with its estimated absolute error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: Complex64,
    pub error: f64,
}

impl Estimate {
    pub fn zero() -> Self {
        Estimate {
            value: Complex64::new(0.0, 0.0),
            error: 0.0,
        }
    }
}

impl std::ops::Add for Estimate {
    type Output = Estimate;
    fn add(self, rhs: Estimate) -> Estimate {
        Estimate {
            value: self.value + rhs.value,
            error: self.error + rhs.error,
        }
    }
}

/// Tolerances for the adaptive driver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs: 1e-12,
            rel: 1e-12,
            max_intervals: 4000,
        }
    }
}

/// One 21-point Kronrod evaluation on `[a, b]`.
fn gk21<F>(f: &F, a: f64, b: f64) -> Estimate
where
    F: Fn(f64) -> Complex64,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[10];
    let mut res_g = Complex64::new(0.0, 0.0);
    let mut res_abs = fc.norm() * WGK[10];
    let mut fv1 = [Complex64::new(0.0, 0.0); 10];
    let mut fv2 = [Complex64::new(0.0, 0.0); 10];
    for j in 0..10 {
        let x = half * XGK[j];
        let f1 = f(center - x);
        let f2 = f(center + x);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += (f1 + f2) * WGK[j];
        res_abs += (f1.norm() + f2.norm()) * WGK[j];
        if j % 2 == 1 {
            res_g += (f1 + f2) * WG[j / 2];
        }
    }
    let mean = res_k * 0.5;
    let mut res_asc = WGK[10] * (fc - mean).norm();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).norm() + (fv2[j] - mean).norm());
    }
    let scale = half.abs();
    res_abs *= scale;
    res_asc *= scale;
    let mut err = ((res_k - res_g) * half).norm();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    let floor = 50.0 * f64::EPSILON * res_abs;
    if floor > err {
        err = floor;
    }
    Estimate {
        value: res_k * half,
        error: err,
    }
}

#[derive(Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    est: Estimate,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.est.error == other.est.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.est.error.total_cmp(&other.est.error)
    }
}

impl Tolerance {
    fn target(&self, value: Complex64) -> f64 {
        self.abs.max(self.rel * value.norm())
    }

    pub fn met_by(&self, est: &Estimate) -> bool {
        est.error <= self.target(est.value)
    }
}

/// Best-effort adaptive integration of `f` over the finite interval spanned
/// by consecutive entries of `points` (sorted; interior points act as forced
/// breakpoints). The returned error field tells whether the tolerance was met.
pub fn adapt<F>(f: F, points: &[f64], tol: Tolerance) -> Estimate
where
    F: Fn(f64) -> Complex64,
{
    let mut heap = BinaryHeap::new();
    let mut done = Estimate::zero();
    let mut sum = Estimate::zero();
    for w in points.windows(2) {
        if w[1] > w[0] {
            let est = gk21(&f, w[0], w[1]);
            sum = sum + est;
            heap.push(Piece {
                a: w[0],
                b: w[1],
                est,
            });
        }
    }
    let mut n = heap.len();
    let mut since_resum = 0;
    loop {
        if tol.met_by(&sum) {
            return sum;
        }
        let Some(worst) = heap.pop() else {
            return sum;
        };
        let mid = 0.5 * (worst.a + worst.b);
        let tiny = (worst.b - worst.a) <= 1e3 * f64::EPSILON * mid.abs().max(1e-300);
        if tiny || n >= tol.max_intervals {
            done = done + worst.est;
            if n >= tol.max_intervals {
                return heap.iter().fold(done, |acc, p| acc + p.est);
            }
            continue;
        }
        let left = gk21(&f, worst.a, mid);
        let right = gk21(&f, mid, worst.b);
        sum.value += left.value + right.value - worst.est.value;
        sum.error += left.error + right.error - worst.est.error;
        heap.push(Piece {
            a: worst.a,
            b: mid,
            est: left,
        });
        heap.push(Piece {
            a: mid,
            b: worst.b,
            est: right,
        });
        n += 1;
        since_resum += 1;
        if since_resum == 64 {
            since_resum = 0;
            sum = heap.iter().fold(done, |acc, p| acc + p.est);
        }
    }
}

fn checked(est: Estimate, tol: &Tolerance) -> Result<Estimate> {
    if tol.met_by(&est) {
        Ok(est)
    } else {
        Err(Error::Quadrature {
            achieved: est.error,
            requested: tol.target(est.value),
        })
    }
}

/// Like [`adapt`], but fails when the tolerance is not met.
pub fn integrate<F>(f: F, points: &[f64], tol: Tolerance) -> Result<Estimate>
where
    F: Fn(f64) -> Complex64,
{
    checked(adapt(f, points, tol), &tol)
}

/// Best-effort integral of `f` over `[a, +inf)` (`upward = true`) or
/// `(-inf, a]` through the substitution `x = a +/- t / (1 - t)`.
pub fn adapt_tail<F>(f: F, a: f64, upward: bool, tol: Tolerance) -> Estimate
where
    F: Fn(f64) -> Complex64,
{
    let sign = if upward { 1.0 } else { -1.0 };
    let g = |t: f64| {
        let u = 1.0 - t;
        let x = a + sign * t / u;
        f(x) / (u * u)
    };
    adapt(g, &[0.0, 0.25, 0.5, 0.75, 1.0], tol)
}

pub fn integrate_tail<F>(f: F, a: f64, upward: bool, tol: Tolerance) -> Result<Estimate>
where
    F: Fn(f64) -> Complex64,
{
    checked(adapt_tail(f, a, upward, tol), &tol)
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}
