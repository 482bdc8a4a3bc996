//! Marchenko–Pastur law for `Z̃'Z̃/N` with i.i.d. entries of variance `τ` and
//! aspect ratio `κ = p/N`.
//!
//! Support edges are `τ(1 ± √κ)²`; the absolutely continuous part has density
//! `√((Λ⁺ - x)(x - Λ⁻)) / (2π τ κ x)` and, for `κ > 1`, the law carries an
//! atom of mass `1 - 1/κ` at zero.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::quad;

const CDF_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpLaw {
    tau: f64,
    kappa: f64,
}

impl MpLaw {
    pub fn new(tau: f64, kappa: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(invalid("tau", format!("must be positive, got {tau}")));
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(invalid("kappa", format!("must be positive, got {kappa}")));
        }
        Ok(Self { tau, kappa })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Lower support edge `Λ⁻`.
    pub fn lower(&self) -> f64 {
        self.tau * (1.0 - self.kappa.sqrt()).powi(2)
    }

    /// Upper support edge `Λ⁺`.
    pub fn upper(&self) -> f64 {
        self.tau * (1.0 + self.kappa.sqrt()).powi(2)
    }

    /// Mass of the atom at zero.
    pub fn atom(&self) -> f64 {
        (1.0 - 1.0 / self.kappa).max(0.0)
    }

    /// Density of the continuous part.
    pub fn density(&self, x: f64) -> f64 {
        let (lo, hi) = (self.lower(), self.upper());
        if x <= lo || x >= hi || x <= 0.0 {
            return 0.0;
        }
        ((hi - x) * (x - lo)).sqrt() / (2.0 * PI * self.tau * self.kappa * x)
    }

    /// Integrates `g(x) · density(x)` over `[Λ⁻, t]`.
    ///
    /// Uses `x = c - h cos φ`, which turns the square-root edges into a smooth
    /// `sin² φ` factor.
    pub(crate) fn integrate_continuous<G: Fn(f64) -> f64>(&self, g: G, t: f64) -> f64 {
        let (lo, hi) = (self.lower(), self.upper());
        let t = t.clamp(lo, hi);
        if t <= lo {
            return 0.0;
        }
        let c = 0.5 * (lo + hi);
        let h = 0.5 * (hi - lo);
        let phi_end = ((c - t) / h).clamp(-1.0, 1.0).acos();
        let norm = 2.0 * PI * self.tau * self.kappa;
        quad::integrate(
            |phi| {
                let x = c - h * phi.cos();
                let s = phi.sin();
                g(x) * h * h * s * s / (norm * x)
            },
            0.0,
            phi_end,
            CDF_TOLERANCE,
        )
    }

    /// Cumulative distribution function, including the atom at zero.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        if x >= self.upper() {
            return 1.0;
        }
        let value = self.atom() + self.integrate_continuous(|_| 1.0, x);
        value.clamp(0.0, 1.0)
    }

    /// `∫ x^k dμ` by quadrature (the atom contributes nothing for `k >= 1`).
    pub fn moment_by_quadrature(&self, k: u32) -> f64 {
        self.integrate_continuous(|x| x.powi(k as i32), self.upper())
    }
}

fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `k`-th moment `τᵏ Σ_{r<k} C(k,r) C(k-1,r) κʳ / (r+1)`.
pub fn mp_moment(k: u32, tau: f64, kappa: f64) -> Result<f64> {
    if k == 0 {
        return Err(invalid("k", "moment order must be at least 1"));
    }
    if !(tau > 0.0) {
        return Err(invalid("tau", format!("must be positive, got {tau}")));
    }
    if !(kappa > 0.0) {
        return Err(invalid("kappa", format!("must be positive, got {kappa}")));
    }
    let k = u64::from(k);
    let sum: f64 = (0..k)
        .map(|r| binomial(k, r) * binomial(k - 1, r) * kappa.powi(r as i32) / (r + 1) as f64)
        .sum();
    Ok(tau.powi(k as i32) * sum)
}

/// Kolmogorov–Smirnov distance between the empirical law of `sorted` (ascending)
/// and `law`.
pub fn ks_statistic(sorted: &[f64], law: &MpLaw) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = law.cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}
