//! Independent single-output GPs: the comparator for ALC experiments.
//!
//! Each output gets its own lengthscale, sampled by sliding-window MH against
//! the single-output marginal likelihood; the posterior mean is kept as a
//! plug-in.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::acquisition::{residual_table, select_with, AcquisitionConfig, AcquisitionResult, ConditioningState};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::icm::{gls_coreg, log_marginal, PriorSpec};
use crate::linalg::{kernel_factor, Matrix};
use crate::predict::{GpConditioner, Prediction};
use crate::sampler::{mh_step, SamplerConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct IndepGpModel {
    thetas: Vec<f64>,
    data: Dataset,
    jitter: f64,
    acceptance: Vec<f64>,
}

impl IndepGpModel {
    /// Model with fixed lengthscales, one per output.
    pub fn new(data: Dataset, thetas: Vec<f64>, jitter: f64) -> Result<Self> {
        if thetas.len() != data.q() {
            return Err(Error::Shape(format!(
                "{} lengthscales for {} outputs",
                thetas.len(),
                data.q()
            )));
        }
        if let Some(t) = thetas.iter().find(|t| !(**t > 0.0)) {
            return Err(Error::Domain(format!("lengthscale must be positive, got {t}")));
        }
        let acceptance = vec![f64::NAN; thetas.len()];
        Ok(Self {
            thetas,
            data,
            jitter,
            acceptance,
        })
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// MH acceptance rate per output (`NaN` for models built with fixed lengthscales).
    pub fn acceptance(&self) -> &[f64] {
        &self.acceptance
    }

    /// Predictive means and diagonal covariances in standardized units at unit-scaled inputs.
    pub fn predict_standardized(&self, x_unit: &Matrix) -> Result<Prediction> {
        let (m, q) = (x_unit.nrows(), self.data.q());
        let mut mean = Matrix::zeros(m, q);
        let mut var = Matrix::zeros(m, q);
        for (k, &theta) in self.thetas.iter().enumerate() {
            let cond = GpConditioner::new(self.data.scaled_x(), theta, self.jitter)?;
            let y = self.data.scaled_y().columns(k, 1).into_owned();
            let (mu, cond_var) = cond.condition(&y, x_unit)?;
            // Plug-in scale: the GLS estimate for this output.
            let sigma2 = gls_coreg(&y, cond.factor())?.b_hat[(0, 0)];
            for i in 0..m {
                mean[(i, k)] = mu[(i, 0)];
                var[(i, k)] = sigma2 * cond_var[i];
            }
        }
        let cov = (0..m)
            .map(|i| Matrix::from_diagonal(&var.row(i).transpose()))
            .collect();
        Ok(Prediction {
            mean,
            cov,
            sample_count: 1,
        })
    }

    /// Predictions in natural units at natural-unit inputs.
    pub fn predict(&self, x_star: &Matrix) -> Result<Prediction> {
        let scaled = self.predict_standardized(&self.data.scale_x(x_star)?)?;
        Ok(Prediction {
            mean: self.data.unscale_y(&scaled.mean),
            cov: scaled.cov.iter().map(|c| self.data.unscale_cov(c)).collect(),
            sample_count: 1,
        })
    }
}

/// Per-output MH over the lengthscale; every output uses the same seed.
pub fn fit_indep(data: &Dataset, config: &SamplerConfig, priors: &PriorSpec) -> Result<IndepGpModel> {
    config.validate()?;
    priors.validate()?;
    if data.n() < 2 {
        return Err(Error::DegenerateLikelihood(format!("need at least 2 points, got {}", data.n())));
    }
    let x = data.scaled_x();
    let target = |theta: f64, y: &Matrix| -> Result<f64> {
        let factor = kernel_factor(x, theta, config.jitter)?;
        Ok(log_marginal(y, &factor)? + priors.log_theta_y(theta))
    };
    let mut thetas = Vec::with_capacity(data.q());
    let mut acceptance = Vec::with_capacity(data.q());
    for k in 0..data.q() {
        let y = Matrix::from_column_slice(data.n(), 1, data.scaled_y().column(k).as_slice());
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut theta = priors.mean_theta_y();
        let mut current = target(theta, &y)?;
        let (mut sum, mut kept, mut accepted) = (0.0, 0usize, 0usize);
        for t in 1..=config.iterations {
            let outcome = mh_step(theta, current, config.proposal_l, config.proposal_u, &mut rng, |th| {
                target(th, &y)
            });
            theta = outcome.theta;
            current = outcome.log_target;
            accepted += usize::from(outcome.accepted);
            if t > config.burn_in && (t - config.burn_in) % config.thinning == 0 {
                sum += theta;
                kept += 1;
            }
        }
        thetas.push(sum / kept as f64);
        acceptance.push(accepted as f64 / config.iterations as f64);
    }
    let mut model = IndepGpModel::new(data.clone(), thetas, config.jitter)?;
    model.acceptance = acceptance;
    Ok(model)
}

/// ALC under independence: the reference-averaged product over outputs of
/// augmented residual variances (the determinant of a diagonal covariance).
pub fn alc_indep(model: &IndepGpModel, config: &AcquisitionConfig) -> Result<AcquisitionResult> {
    let data = &model.data;
    let ref_unit = data.scale_x(&config.reference)?;
    select_with(config, data, |cand| {
        let (c, r) = (cand.nrows(), ref_unit.nrows());
        let mut product = Matrix::from_element(r, c, 1.0);
        let mut ok = vec![true; c];
        for &theta in &model.thetas {
            let base = ConditioningState::new(data.scaled_x(), theta, model.jitter)?;
            let (table, good) = residual_table(&base, cand, &ref_unit, config.use_fast_update)?;
            product.component_mul_assign(&table);
            for (o, g) in ok.iter_mut().zip(good) {
                *o &= g;
            }
        }
        let scores = (0..c)
            .map(|j| {
                if ok[j] {
                    product.column(j).iter().sum::<f64>() / r as f64
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        Ok((scores, ok))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DEFAULT_JITTER;

    fn forrester_like(n: usize) -> Dataset {
        let x = Matrix::from_fn(n, 1, |i, _| i as f64 / (n - 1) as f64);
        let y = Matrix::from_fn(n, 2, |i, j| {
            let t = i as f64 / (n - 1) as f64;
            let f1 = (6.0 * t - 2.0).powi(2) * (12.0 * t - 4.0).sin();
            if j == 0 {
                f1
            } else {
                0.5 * f1 + 10.0 * (t - 0.5) + 5.0
            }
        });
        Dataset::new(x, y).unwrap()
    }

    fn short_config() -> SamplerConfig {
        SamplerConfig {
            iterations: 300,
            burn_in: 100,
            thinning: 2,
            seed: 4,
            ..SamplerConfig::default()
        }
    }

    #[test]
    fn duplicated_column_gets_identical_theta() {
        let base = forrester_like(9);
        let col = base.y().column(0).into_owned();
        let y = Matrix::from_fn(9, 2, |i, _| col[i]);
        let data = Dataset::new(base.x().clone(), y).unwrap();
        let model = fit_indep(&data, &short_config(), &PriorSpec::default()).unwrap();
        assert_eq!(model.thetas()[0], model.thetas()[1]);
    }

    #[test]
    fn columns_fit_independently() {
        let data = forrester_like(9);
        let both = fit_indep(&data, &short_config(), &PriorSpec::default()).unwrap();
        let only = Dataset::new(data.x().clone(), data.y().columns(1, 1).into_owned()).unwrap();
        let single = fit_indep(&only, &short_config(), &PriorSpec::default()).unwrap();
        assert_eq!(both.thetas()[1], single.thetas()[0]);
    }

    #[test]
    fn interpolates_training_points() {
        let data = forrester_like(9);
        let model = fit_indep(&data, &short_config(), &PriorSpec::default()).unwrap();
        let pred = model.predict_standardized(data.scaled_x()).unwrap();
        let err = (&pred.mean - data.scaled_y()).norm() / (18f64).sqrt();
        assert!(err < 1e-2, "standardized rmse {err}");
    }

    #[test]
    fn equal_thetas_select_like_single_output() {
        let data = forrester_like(7);
        let theta = 0.3;
        let both = IndepGpModel::new(data.clone(), vec![theta, theta], DEFAULT_JITTER).unwrap();
        let one = Dataset::new(data.x().clone(), data.y().columns(0, 1).into_owned()).unwrap();
        let single = IndepGpModel::new(one, vec![theta], DEFAULT_JITTER).unwrap();
        // With one reference point the Q-th power is a monotone transform of the residual.
        let grid = Matrix::from_fn(41, 1, |i, _| i as f64 / 40.0);
        let config = AcquisitionConfig::new(grid, Matrix::from_row_slice(1, 1, &[0.37]));
        let a = alc_indep(&both, &config).unwrap();
        let b = alc_indep(&single, &config).unwrap();
        assert_eq!(a.selected_index, b.selected_index);
        assert_eq!(a, alc_indep(&both, &config).unwrap());
    }

    #[test]
    fn rejects_bad_thetas() {
        let data = forrester_like(5);
        assert!(IndepGpModel::new(data.clone(), vec![1.0], DEFAULT_JITTER).is_err());
        assert!(IndepGpModel::new(data, vec![1.0, 0.0], DEFAULT_JITTER).is_err());
    }
}
