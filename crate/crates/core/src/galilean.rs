//! Nonrelativistic limit of the decay kinematics: conservation of mass and of
//! mass fluctuations, the decay inequality at finite `c` and its `c -> inf`
//! limit, and the identification of the evolution parameter with Newtonian
//! time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kinematics of one `V -> N + theta` configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KinematicConfig {
    pub p_vec: [f64; 3],
    pub k_vec: [f64; 3],
    pub m_v: f64,
    pub m_n: f64,
    pub m_theta: f64,
    pub eps_v: f64,
    pub eps_n: f64,
    pub eps_theta: f64,
    pub c: f64,
}

impl Default for KinematicConfig {
    fn default() -> Self {
        KinematicConfig {
            p_vec: [0.0; 3],
            k_vec: [1.0, 0.0, 0.0],
            m_v: 2.0,
            m_n: 1.0,
            m_theta: 1.0,
            eps_v: 0.3,
            eps_n: 0.1,
            eps_theta: 0.2,
            c: 10.0,
        }
    }
}

impl KinematicConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.m_v > 0.0 && self.m_n > 0.0 && self.m_theta > 0.0) {
            return Err(Error::Invalid("nonpositive mass".into()));
        }
        if !(self.c > 0.0) {
            return Err(Error::Invalid("speed of light must be positive".into()));
        }
        Ok(())
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }
}

/// Which mass divides the `(p - k)^2` term of the limiting inequality.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KineticForm {
    /// `M_N`, the limit of the finite-`c` inequality.
    #[default]
    Corrected,
    /// `M_V`, the printed form.
    AsPrinted,
}

fn norm_sq(v: [f64; 3]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn diff(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// `M_V - M_N - M_theta`.
pub fn mass_defect(cfg: &KinematicConfig) -> f64 {
    cfg.m_v - cfg.m_n - cfg.m_theta
}

/// `eps_V - eps_N - eps_theta`.
pub fn epsilon_defect(cfg: &KinematicConfig) -> f64 {
    cfg.eps_v - cfg.eps_n - cfg.eps_theta
}

/// Left side minus right side of the decay inequality at finite `c`.
///
/// Each `(eps + M c^2)^2 / 2 M c^2` is expanded as
/// `M c^2 / 2 + eps + eps^2 / 2 M c^2` and like powers of `c` are collected,
/// which keeps the result accurate when `c` is large.
pub fn relativistic_inequality_gap(cfg: &KinematicConfig) -> f64 {
    let c2 = cfg.c * cfg.c;
    let quad = cfg.eps_v * cfg.eps_v / cfg.m_v
        - cfg.eps_n * cfg.eps_n / cfg.m_n
        - cfg.eps_theta * cfg.eps_theta / cfg.m_theta;
    galilean_kinetic_gap(cfg) + 0.5 * c2 * mass_defect(cfg) + epsilon_defect(cfg) + quad / (2.0 * c2)
}

/// Kinetic energy of the products minus that of the decaying particle.
pub fn galilean_kinetic_gap(cfg: &KinematicConfig) -> f64 {
    galilean_kinetic_gap_with(cfg, KineticForm::Corrected)
}

pub fn galilean_kinetic_gap_with(cfg: &KinematicConfig, form: KineticForm) -> f64 {
    let pk = norm_sq(diff(cfg.p_vec, cfg.k_vec));
    let m = match form {
        KineticForm::Corrected => cfg.m_n,
        KineticForm::AsPrinted => cfg.m_v,
    };
    pk / (2.0 * m) + norm_sq(cfg.k_vec) / (2.0 * cfg.m_theta) - norm_sq(cfg.p_vec) / (2.0 * cfg.m_v)
}

/// Residual of the finite-`c` gap over its limit, tabulated against `c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitScan {
    pub rows: Vec<(f64, f64)>,
    /// Least-squares slope of `log |residual|` against `log c`.
    pub slope: Option<f64>,
    /// Every residual is below `1e-14`, so no slope is fitted.
    pub converged: bool,
}

pub fn limit_scan(cfg: &KinematicConfig, cs: &[f64]) -> Result<LimitScan> {
    limit_scan_with(cfg, cs, KineticForm::Corrected)
}

/// [`limit_scan`] against the chosen form of the limiting inequality.
pub fn limit_scan_with(cfg: &KinematicConfig, cs: &[f64], form: KineticForm) -> Result<LimitScan> {
    cfg.validate()?;
    if cs.iter().any(|c| !(*c > 0.0)) {
        return Err(Error::Invalid("speed of light must be positive".into()));
    }
    let lo = cs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = cs.iter().cloned().fold(0.0, f64::max);
    if cs.len() < 2 || hi / lo < 100.0 * (1.0 - 1e-12) {
        return Err(Error::Invalid("c list must span at least two decades".into()));
    }
    let rows: Vec<(f64, f64)> = cs
        .iter()
        .map(|&c| {
            let at = cfg.with_c(c);
            (c, relativistic_inequality_gap(&at) - galilean_kinetic_gap_with(&at, form))
        })
        .collect();
    if rows.iter().all(|r| r.1.abs() < 1e-14) {
        return Ok(LimitScan {
            rows,
            slope: None,
            converged: true,
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.1 != 0.0)
        .map(|r| (r.0.ln(), r.1.abs().ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = (pts.len() >= 2 && sxx > 0.0).then(|| sxy / sxx);
    Ok(LimitScan {
        rows,
        slope,
        converged: false,
    })
}

/// `|dK/d eps|` for a single particle, by a central difference of
/// `K(eps) = -eps - eps^2 / 2 M c^2` (the `eps`-independent part of the
/// free Hamiltonian dropped).
pub fn time_rate_single(eps: f64, mass: f64, c: f64) -> f64 {
    let mc2 = mass * c * c;
    let k = |e: f64| -e - e * e / (2.0 * mc2);
    let h = (2f64).powi(-20) * eps.abs().max(1.0);
    let h = (2f64).powi(h.log2().floor() as i32);
    ((k(eps + h) - k(eps - h)) / (2.0 * h)).abs()
}

/// Time rate of the decaying particle.
pub fn time_rate(cfg: &KinematicConfig) -> f64 {
    time_rate_single(cfg.eps_v, cfg.m_v, cfg.c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(p: [f64; 3], k: [f64; 3], m: (f64, f64, f64), e: (f64, f64, f64), c: f64) -> KinematicConfig {
        KinematicConfig {
            p_vec: p,
            k_vec: k,
            m_v: m.0,
            m_n: m.1,
            m_theta: m.2,
            eps_v: e.0,
            eps_n: e.1,
            eps_theta: e.2,
            c,
        }
    }

    #[test]
    fn defects() {
        let z = [0.0; 3];
        assert_eq!(mass_defect(&cfg(z, z, (2.0, 1.0, 1.0), (0.0, 0.0, 0.0), 1.0)), 0.0);
        assert!((mass_defect(&cfg(z, z, (2.1, 1.0, 1.0), (0.0, 0.0, 0.0), 1.0)) - 0.1).abs() < 1e-15);
        assert_eq!(mass_defect(&cfg(z, z, (2.0, 1.5, 0.5), (0.0, 0.0, 0.0), 1.0)), 0.0);
        assert!(epsilon_defect(&cfg(z, z, (2.0, 1.0, 1.0), (0.3, 0.1, 0.2), 1.0)).abs() < 1e-16);
        assert!((epsilon_defect(&cfg(z, z, (2.0, 1.0, 1.0), (0.3, 0.1, 0.1), 1.0)) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn kinetic_gap_values() {
        let c = cfg([0.0; 3], [1.0, 0.0, 0.0], (2.0, 1.0, 1.0), (0.0, 0.0, 0.0), 10.0);
        assert_eq!(galilean_kinetic_gap(&c), 1.0);
        let c = cfg([1.0, 0.0, 0.0], [0.0; 3], (2.0, 1.0, 1.0), (0.0, 0.0, 0.0), 10.0);
        assert_eq!(galilean_kinetic_gap(&c), 0.25);
        assert_eq!(galilean_kinetic_gap_with(&c, KineticForm::AsPrinted), 0.0);
    }

    #[test]
    fn kinetic_gap_minimum() {
        let p = [0.7, -1.3, 0.4];
        let (mv, mn, mt) = (3.0, 1.8, 1.2);
        let kstar = p.map(|x| mt / mv * x);
        let at = |k| galilean_kinetic_gap(&cfg(p, k, (mv, mn, mt), (0.0, 0.0, 0.0), 1.0));
        assert!(at(kstar).abs() < 1e-15);
        for d in [[1e-3, 0.0, 0.0], [0.0, -0.2, 0.1]] {
            let k = [kstar[0] + d[0], kstar[1] + d[1], kstar[2] + d[2]];
            assert!(at(k) > 0.0);
        }
    }

    #[test]
    fn gap_matches_direct_evaluation() {
        let c = cfg([0.0; 3], [1.0, 0.0, 0.0], (2.0, 1.0, 1.0), (0.0, 0.0, 0.0), 10.0);
        let term = |p2: f64, m: f64, e: f64| -p2 / (2.0 * m) + (e + m * 100.0).powi(2) / (200.0 * m);
        let direct = term(0.0, 2.0, 0.0) - term(1.0, 1.0, 0.0) - term(1.0, 1.0, 0.0);
        assert!((relativistic_inequality_gap(&c) - direct).abs() < 1e-12);
        assert!((relativistic_inequality_gap(&c) - 1.0).abs() < 1e-15);
        let c = cfg([0.2, 0.0, 0.1], [1.0, 0.5, 0.0], (2.0, 1.0, 1.0), (0.3, 0.1, 0.2), 10.0);
        let direct = -0.05 / 4.0 + (0.3f64 + 200.0).powi(2) / 400.0
            - (-(0.64 + 0.25 + 0.01) / 2.0 + (0.1f64 + 100.0).powi(2) / 200.0)
            - (-(1.25) / 2.0 + (0.2f64 + 100.0).powi(2) / 200.0);
        assert!((relativistic_inequality_gap(&c) - direct).abs() < 1e-11);
    }

    #[test]
    fn residual_scales_as_inverse_square() {
        let base = KinematicConfig::default();
        let r = |c: f64| {
            let x = base.with_c(c);
            relativistic_inequality_gap(&x) - galilean_kinetic_gap(&x)
        };
        assert!((r(1e3) / r(1e4) - 100.0).abs() < 1.0);
        assert!((r(10.0) + 0.0025 / 100.0).abs() < 1e-15);
        let scan = limit_scan(&base, &[10.0, 1e2, 1e3, 1e4]).unwrap();
        assert!((scan.slope.unwrap() + 2.0).abs() < 0.1);
        let doubled = KinematicConfig {
            eps_v: 0.6,
            eps_n: 0.2,
            eps_theta: 0.4,
            ..base
        };
        let x = doubled.with_c(30.0);
        let r2 = relativistic_inequality_gap(&x) - galilean_kinetic_gap(&x);
        assert!((r2 / r(30.0) - 4.0).abs() < 1e-9);
    }

    #[test]
    fn zero_fluctuations_converge() {
        let c = KinematicConfig {
            eps_v: 0.0,
            eps_n: 0.0,
            eps_theta: 0.0,
            ..Default::default()
        };
        let scan = limit_scan(&c, &[10.0, 1e2, 1e3, 1e4]).unwrap();
        assert!(scan.converged && scan.slope.is_none());
        assert!(limit_scan(&c, &[10.0, 50.0]).is_err());
    }

    #[test]
    fn time_rates() {
        for c in [1.0, 10.0, 1e3, 1e8] {
            assert_eq!(time_rate_single(0.0, 2.0, c), 1.0);
        }
        assert!((time_rate_single(1.0, 1.0, 10.0) - 1.01).abs() < 1e-9);
        assert!((time_rate_single(1.0, 1.0, 1e6) - 1.0).abs() < 1e-10);
    }
}
