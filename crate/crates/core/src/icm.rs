//! ICM layer mathematics: marginal likelihoods with the coregionalization
//! matrix integrated out under a Jeffreys prior, the GLS plug-in estimator,
//! and the Gamma lengthscale prior.
//!
//! Normalizing constants are dropped everywhere. Only differences of these
//! log densities are meaningful.

use crate::error::{Error, Result};
use crate::linalg::{spd_factorize, Matrix, SpdFactor};

/// Lengthscale and width of one ICM layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcmLayerParams {
    pub theta: f64,
    pub width: usize,
}

impl IcmLayerParams {
    pub fn new(theta: f64, width: usize) -> Result<Self> {
        if !(theta > 0.0) || width == 0 {
            return Err(Error::Domain(format!(
                "layer needs theta > 0 and width >= 1 (got {theta}, {width})"
            )));
        }
        Ok(Self { theta, width })
    }
}

/// Plug-in coregionalization matrix `M^T K^{-1} M / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoregEstimate {
    pub b_hat: Matrix,
    pub sample_size: usize,
}

impl CoregEstimate {
    pub fn width(&self) -> usize {
        self.b_hat.nrows()
    }

    /// Returns a copy with every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            b_hat: &self.b_hat * factor,
            sample_size: self.sample_size,
        }
    }
}

/// Gamma(shape, rate) priors on the two lengthscales.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    pub shape: f64,
    pub rate_theta_y: f64,
    pub rate_theta_w: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            shape: 1.5,
            rate_theta_y: 3.9 / 6.0,
            rate_theta_w: 3.9 / 4.0,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.shape > 0.0 && self.rate_theta_y > 0.0 && self.rate_theta_w > 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!("prior parameters must be positive: {self:?}")))
        }
    }

    pub fn log_theta_y(&self, theta: f64) -> f64 {
        log_gamma_prior(theta, self.shape, self.rate_theta_y)
    }

    pub fn log_theta_w(&self, theta: f64) -> f64 {
        log_gamma_prior(theta, self.shape, self.rate_theta_w)
    }

    pub fn mean_theta_y(&self) -> f64 {
        self.shape / self.rate_theta_y
    }

    pub fn mean_theta_w(&self) -> f64 {
        self.shape / self.rate_theta_w
    }
}

/// Unnormalized Gamma log density; `-inf` outside the support.
pub fn log_gamma_prior(theta: f64, shape: f64, rate: f64) -> f64 {
    if theta > 0.0 {
        (shape - 1.0) * theta.ln() - rate * theta
    } else {
        f64::NEG_INFINITY
    }
}

/// GLS estimator `M^T K^{-1} M / n` given the factor of `K`.
pub fn gls_coreg(m: &Matrix, k_factor: &SpdFactor) -> Result<CoregEstimate> {
    let n = m.nrows();
    if n == 0 {
        return Err(Error::Shape("GLS estimate of an empty response".into()));
    }
    if k_factor.dim() != n {
        return Err(Error::Shape(format!(
            "response has {n} rows but kernel factor is {0}x{0}",
            k_factor.dim()
        )));
    }
    let b_hat = k_factor.inv_quad_form(m)? / n as f64;
    Ok(CoregEstimate {
        b_hat,
        sample_size: n,
    })
}

/// A layer's log marginal likelihood together with the plug-in it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerFit {
    pub log_marginal: f64,
    pub coreg: CoregEstimate,
}

/// `-(S/2) log|K| - (n/2) log|n B_hat|` with `S = m.ncols()`.
pub fn layer_fit(m: &Matrix, k_factor: &SpdFactor) -> Result<LayerFit> {
    let (n, s) = (m.nrows(), m.ncols());
    if n <= s {
        return Err(Error::DegenerateLikelihood(format!(
            "need more rows than columns (n = {n}, S = {s})"
        )));
    }
    let coreg = gls_coreg(m, k_factor)?;
    let scatter = &coreg.b_hat * n as f64;
    let scatter_factor = spd_factorize(&scatter).map_err(|e| match e {
        Error::NotPositiveDefinite { pivot } => {
            Error::DegenerateLikelihood(format!("n * B_hat is singular (pivot {pivot})"))
        }
        other => other,
    })?;
    let log_marginal =
        -0.5 * s as f64 * k_factor.log_det() - 0.5 * n as f64 * scatter_factor.log_det();
    Ok(LayerFit {
        log_marginal,
        coreg,
    })
}

/// Log marginal likelihood of `m` (n×S) under `K`, coregionalization integrated out.
pub fn log_marginal(m: &Matrix, k_factor: &SpdFactor) -> Result<f64> {
    layer_fit(m, k_factor).map(|f| f.log_marginal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{kernel_matrix, spd_factorize};
    use nalgebra::SymmetricEigen;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gls_examples() {
        let k = spd_factorize(&Matrix::identity(2, 2)).unwrap();
        let m = Matrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let est = gls_coreg(&m, &k).unwrap();
        assert_eq!(est.b_hat[(0, 0)], 1.0);

        let k = spd_factorize(&(Matrix::identity(2, 2) * 2.0)).unwrap();
        let est = gls_coreg(&Matrix::identity(2, 2), &k).unwrap();
        let expected = Matrix::identity(2, 2) * 0.25;
        assert!((est.b_hat - expected).abs().max() < 1e-15);
    }

    #[test]
    fn gls_is_psd_on_random_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let n = rng.random_range(2..9);
            let s = rng.random_range(1..5);
            let x = Matrix::from_fn(n, 2, |_, _| rng.random::<f64>());
            let k = spd_factorize(&kernel_matrix(&x, 0.3, 1e-6).unwrap()).unwrap();
            let m = Matrix::from_fn(n, s, |_, _| rng.random_range(-2.0..2.0));
            let est = gls_coreg(&m, &k).unwrap();
            let eig = SymmetricEigen::new(est.b_hat.clone());
            assert!(eig.eigenvalues.min() >= -1e-10);
            assert_eq!(est.b_hat, est.b_hat.transpose());
        }
    }

    #[test]
    fn gls_shape_mismatch() {
        let k = spd_factorize(&Matrix::identity(3, 3)).unwrap();
        assert!(matches!(
            gls_coreg(&Matrix::zeros(2, 1), &k),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn log_marginal_hand_case() {
        let k = spd_factorize(&Matrix::identity(2, 2)).unwrap();
        let m = Matrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let v = log_marginal(&m, &k).unwrap();
        assert!((v + 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_marginal_scaling_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Matrix::from_fn(7, 1, |_, _| rng.random::<f64>());
        let k = spd_factorize(&kernel_matrix(&x, 0.5, 1e-8).unwrap()).unwrap();
        let m = Matrix::from_fn(7, 2, |_, _| rng.random_range(-1.0..1.0));
        let c: f64 = -2.5;
        let base = log_marginal(&m, &k).unwrap();
        let scaled = log_marginal(&(&m * c), &k).unwrap();
        let expected = -(7.0 * 2.0) * c.abs().ln();
        assert!((scaled - base - expected).abs() < 1e-9);
    }

    #[test]
    fn log_marginal_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Matrix::from_fn(6, 1, |_, _| rng.random::<f64>());
        let k = spd_factorize(&kernel_matrix(&x, 0.8, 1e-8).unwrap()).unwrap();
        let m = Matrix::from_fn(6, 2, |_, _| rng.random_range(-1.0..1.0));
        let a: f64 = 0.7;
        let r = Matrix::from_row_slice(2, 2, &[a.cos(), -a.sin(), a.sin(), a.cos()]);
        let v0 = log_marginal(&m, &k).unwrap();
        let v1 = log_marginal(&(&m * r), &k).unwrap();
        assert!((v0 - v1).abs() < 1e-10);
    }

    #[test]
    fn degenerate_cases_rejected() {
        let k = spd_factorize(&Matrix::identity(2, 2)).unwrap();
        assert!(matches!(
            log_marginal(&Matrix::identity(2, 2), &k),
            Err(Error::DegenerateLikelihood(_))
        ));
        let k = spd_factorize(&Matrix::identity(3, 3)).unwrap();
        let collinear = Matrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        assert!(matches!(
            log_marginal(&collinear, &k),
            Err(Error::DegenerateLikelihood(_))
        ));
    }

    #[test]
    fn gamma_prior_values() {
        assert_eq!(log_gamma_prior(0.0, 1.5, 0.65), f64::NEG_INFINITY);
        assert_eq!(log_gamma_prior(-1.0, 1.5, 0.65), f64::NEG_INFINITY);
        assert!((log_gamma_prior(1.0, 1.5, 3.9 / 6.0) + 0.65).abs() < 1e-12);
        let v = log_gamma_prior(2.0, 1.5, 3.9 / 4.0);
        assert!((v - (0.5 * 2f64.ln() - 1.95)).abs() < 1e-12);
        assert!((v + 1.6034).abs() < 1e-4);
    }

    #[test]
    fn prior_defaults() {
        let p = PriorSpec::default();
        assert_eq!(p.shape, 1.5);
        assert!((p.rate_theta_y - 0.65).abs() < 1e-15);
        assert!((p.rate_theta_w - 0.975).abs() < 1e-15);
        assert!(IcmLayerParams::new(0.0, 1).is_err());
        assert!(IcmLayerParams::new(1.0, 0).is_err());
    }
}
