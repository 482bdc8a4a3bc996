//! Error-corrected Gram pair `(Σ̃, ρ̃)`.

use faer::{Mat, MatRef};

use super::admm::{psd_project_warm, AdmmConfig, AdmmState, ProjectionStatus};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone)]
pub struct CorrectedGram {
    /// PSD projection of `Z'Z/N - τ I`.
    pub sigma_tilde: Mat<f64>,
    /// `Z' target / N`.
    pub rho: Vec<f64>,
    /// `max_j |ρ̃_j|`, the smallest λ with an all-zero solution.
    pub lambda_max: f64,
    /// `‖Σ̂ - Σ̃‖_max`.
    pub projection_gap: f64,
    pub status: ProjectionStatus,
}

impl CorrectedGram {
    pub fn p(&self) -> usize {
        self.rho.len()
    }

    /// Same `Σ̃` with a different linear term.
    pub fn with_rho(&self, rho: Vec<f64>) -> Self {
        Self {
            lambda_max: lambda_max(&rho),
            rho,
            sigma_tilde: self.sigma_tilde.clone(),
            projection_gap: self.projection_gap,
            status: self.status,
        }
    }
}

/// Projected `Σ̃` shared by several targets regressed on the same design.
#[derive(Debug, Clone)]
pub struct ProjectedGram {
    pub sigma_tilde: Mat<f64>,
    pub projection_gap: f64,
    pub status: ProjectionStatus,
    pub iterations: usize,
}

impl ProjectedGram {
    pub fn pair(&self, rho: Vec<f64>) -> CorrectedGram {
        CorrectedGram {
            lambda_max: lambda_max(&rho),
            rho,
            sigma_tilde: self.sigma_tilde.clone(),
            projection_gap: self.projection_gap,
            status: self.status,
        }
    }
}

pub(crate) fn lambda_max(rho: &[f64]) -> f64 {
    rho.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

fn check_design(z: MatRef<'_, f64>) -> Result<()> {
    if z.nrows() < 2 {
        return Err(invalid("Z", format!("need at least 2 rows, got {}", z.nrows())));
    }
    if z.ncols() == 0 {
        return Err(invalid("Z", "need at least one column"));
    }
    for j in 0..z.ncols() {
        for i in 0..z.nrows() {
            if !z[(i, j)].is_finite() {
                return Err(Error::NonFinite { what: "design matrix" });
            }
        }
    }
    Ok(())
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(invalid("tau", format!("must be finite and >= 0, got {tau}")));
    }
    Ok(())
}

/// `Z'Z/N - τ I` without projection.
pub fn corrected_covariance(z: MatRef<'_, f64>, tau: f64) -> Result<Mat<f64>> {
    check_design(z)?;
    check_tau(tau)?;
    let n = z.nrows() as f64;
    let p = z.ncols();
    let g = z.transpose() * z;
    Ok(Mat::from_fn(p, p, |i, j| {
        // average both triangles so the result is exactly symmetric
        let v = 0.5 * (g[(i, j)] + g[(j, i)]) / n;
        if i == j {
            v - tau
        } else {
            v
        }
    }))
}

/// `Z' v / N`.
pub fn cross_moment(z: MatRef<'_, f64>, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != z.nrows() {
        return Err(invalid("target", format!("expected {} entries, got {}", z.nrows(), v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { what: "target" });
    }
    let n = z.nrows() as f64;
    Ok((0..z.ncols())
        .map(|j| (0..z.nrows()).map(|i| z[(i, j)] * v[i]).sum::<f64>() / n)
        .collect())
}

/// Projects `Z'Z/N - τ I` once, optionally warm-started.
pub fn project_design(
    z: MatRef<'_, f64>,
    tau: f64,
    config: &AdmmConfig,
    warm: Option<&AdmmState>,
) -> Result<(ProjectedGram, Option<AdmmState>)> {
    let sigma_hat = corrected_covariance(z, tau)?;
    let (proj, state) = psd_project_warm(sigma_hat.as_ref(), config, warm)?;
    Ok((
        ProjectedGram {
            sigma_tilde: proj.matrix,
            projection_gap: proj.gap,
            status: proj.status,
            iterations: proj.iterations,
        },
        state,
    ))
}

/// `(Σ̃, ρ̃)` for regressing `target` on `Z` with error variance `τ`.
pub fn corrected_gram(
    z: MatRef<'_, f64>,
    target: &[f64],
    tau: f64,
    config: &AdmmConfig,
) -> Result<CorrectedGram> {
    let (proj, _) = project_design(z, tau, config, None)?;
    let rho = cross_moment(z, target)?;
    Ok(proj.pair(rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{asymmetry, max_abs_diff, min_eigenvalue};

    fn identity_design() -> Mat<f64> {
        // Z'Z/N = I for N = 4, p = 2
        let s = 2f64.sqrt();
        Mat::from_fn(4, 2, |i, j| match (i, j) {
            (0, 0) | (1, 0) => s,
            (2, 1) | (3, 1) => s,
            _ => 0.0,
        })
    }

    #[test]
    fn zero_tau_keeps_gram() {
        let z = Mat::from_fn(6, 3, |i, j| ((i * 3 + j) as f64).sin());
        let g = corrected_gram(z.as_ref(), &[1.0, 0.0, -1.0, 2.0, 0.5, 0.0], 0.0, &AdmmConfig::default()).unwrap();
        let raw = corrected_covariance(z.as_ref(), 0.0).unwrap();
        assert!(g.projection_gap <= 1e-8);
        assert!(max_abs_diff(g.sigma_tilde.as_ref(), raw.as_ref()) <= 1e-8);
    }

    #[test]
    fn half_identity_is_already_psd() {
        let z = identity_design();
        let g = corrected_gram(z.as_ref(), &[1.0; 4], 0.5, &AdmmConfig::default()).unwrap();
        assert_eq!(g.projection_gap, 0.0);
        assert!((g.sigma_tilde[(0, 0)] - 0.5).abs() < 1e-14);
        assert!(g.sigma_tilde[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn negative_identity_projects_with_half_gap() {
        let z = identity_design();
        let g = corrected_gram(z.as_ref(), &[1.0; 4], 1.5, &AdmmConfig::default()).unwrap();
        assert!((g.projection_gap - 0.5).abs() <= 1e-6);
        assert!(min_eigenvalue(g.sigma_tilde.as_ref()).unwrap() >= -1e-8);
        assert!(asymmetry(g.sigma_tilde.as_ref()) <= 1e-10);
    }

    #[test]
    fn rho_and_lambda_max() {
        let z = identity_design();
        let g = corrected_gram(z.as_ref(), &[1.0, 1.0, -2.0, 0.0], 0.0, &AdmmConfig::default()).unwrap();
        let s = 2f64.sqrt();
        assert!((g.rho[0] - 2.0 * s / 4.0).abs() < 1e-14);
        assert!((g.rho[1] + 2.0 * s / 4.0).abs() < 1e-14);
        assert!((g.lambda_max - 2.0 * s / 4.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        let z = Mat::<f64>::zeros(1, 2);
        assert!(corrected_gram(z.as_ref(), &[1.0], 0.0, &AdmmConfig::default()).is_err());
        let mut z = Mat::<f64>::zeros(3, 2);
        z[(1, 1)] = f64::NAN;
        assert!(matches!(
            corrected_gram(z.as_ref(), &[1.0; 3], 0.0, &AdmmConfig::default()),
            Err(Error::NonFinite { .. })
        ));
    }
}
