//! Layered posterior prediction.
//!
//! For every retained sample the test inputs are pushed through the latent
//! layer (one marginal normal draw per point), conditioned through the output
//! layer, and the per-sample moments are combined with the law of total
//! covariance.

use std::collections::HashMap;

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::icm::CoregEstimate;
use crate::linalg::{cross_kernel, kernel_factor, spd_factorize_jittered, Matrix, SpdFactor};
use crate::sampler::{Chain, ChainSample, Layers};

/// How test inputs are mapped through the latent layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LatentMapping {
    /// One draw from the per-point predictive of the latent layer.
    #[default]
    Sample,
    /// Propagate the latent predictive mean only.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PredictConfig {
    pub seed: u64,
    pub latent_mapping: LatentMapping,
    /// Draw latent values from the Student-t scale mixture with `n` degrees of freedom.
    pub student_t: bool,
}

/// Per-point conditional of one ICM layer: mean rows, a shared-shape variance
/// factor, and the layer's coregionalization matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerPredictive {
    pub mean: Matrix,
    pub cond_var: Vec<f64>,
    pub coreg: CoregEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: Matrix,
    pub cov: Vec<Matrix>,
    pub sample_count: usize,
}

impl Prediction {
    pub fn len(&self) -> usize {
        self.mean.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.nrows() == 0
    }

    /// Diagonal of each covariance, as an m×Q matrix.
    pub fn variances(&self) -> Matrix {
        let q = self.mean.ncols();
        Matrix::from_fn(self.len(), q, |i, j| self.cov[i][(j, j)])
    }
}

/// Zero-mean GP conditional with unit prior variance at the test points.
///
/// The jitter is treated as part of the covariance at zero distance, so a test
/// point that coincides exactly with a design row reproduces that row's value
/// with zero variance (the exact conditional of the jittered process). This
/// keeps interpolation exact even when the kernel matrix is ill-conditioned.
#[derive(Debug, Clone)]
pub struct GpConditioner {
    design: Matrix,
    theta: f64,
    factor: SpdFactor,
    jitter: f64,
    rows: HashMap<Vec<u64>, usize>,
}

fn row_key(m: &Matrix, i: usize) -> Vec<u64> {
    m.row(i).iter().map(|v| v.to_bits()).collect()
}

impl GpConditioner {
    pub fn new(design: &Matrix, theta: f64, jitter: f64) -> Result<Self> {
        let mut rows = HashMap::new();
        for i in 0..design.nrows() {
            rows.entry(row_key(design, i)).or_insert(i);
        }
        Ok(Self {
            design: design.clone(),
            theta,
            factor: kernel_factor(design, theta, jitter)?,
            jitter,
            rows,
        })
    }

    pub fn factor(&self) -> &SpdFactor {
        &self.factor
    }

    /// Conditional means (m×S) of `values` (n×S) and unit-scale conditional variances.
    pub fn condition(&self, values: &Matrix, test: &Matrix) -> Result<(Matrix, Vec<f64>)> {
        if test.ncols() != self.design.ncols() {
            return Err(Error::Shape(format!(
                "test points have {} columns, design has {}",
                test.ncols(),
                self.design.ncols()
            )));
        }
        let cross = cross_kernel(&self.design, test, self.theta)?;
        let alpha = self.factor.solve(values)?;
        let mut mean = cross.transpose() * alpha;
        let half = self.factor.half_solve(&cross)?;
        let mut cond_var: Vec<f64> = half
            .column_iter()
            .map(|c| (1.0 - c.norm_squared()).clamp(0.0, 1.0 + self.jitter))
            .collect();
        for j in 0..test.nrows() {
            if let Some(&i) = self.rows.get(&row_key(test, j)) {
                mean.row_mut(j).copy_from(&values.row(i));
                cond_var[j] = 0.0;
            }
        }
        Ok((mean, cond_var))
    }
}

/// Latent-layer conditional at unit-scaled test inputs `x_star`.
pub fn latent_conditional(
    x_star: &Matrix,
    sample: &ChainSample,
    train: &Dataset,
    jitter: f64,
) -> Result<LayerPredictive> {
    let (Some(theta_w), Some(coreg)) = (sample.theta_w, sample.b_hat_w.as_ref()) else {
        return Err(Error::Config("latent conditional needs a two-layer sample".into()));
    };
    let cond = GpConditioner::new(train.scaled_x(), theta_w, jitter)?;
    let (mean, cond_var) = cond.condition(&sample.w, x_star)?;
    Ok(LayerPredictive {
        mean,
        cond_var,
        coreg: coreg.clone(),
    })
}

/// Output-layer conditional at latent locations `w_star`.
pub fn output_conditional(
    w_star: &Matrix,
    sample: &ChainSample,
    train: &Dataset,
    jitter: f64,
) -> Result<LayerPredictive> {
    let cond = GpConditioner::new(&sample.w, sample.theta_y, jitter)?;
    let (mean, cond_var) = cond.condition(train.scaled_y(), w_star)?;
    Ok(LayerPredictive {
        mean,
        cond_var,
        coreg: sample.b_hat_y.clone(),
    })
}

/// Row-wise draw `mean_i + sqrt(cond_var_i) L_B z_i`.
pub fn sample_latent<R: Rng + ?Sized>(
    pred: &LayerPredictive,
    jitter: f64,
    rng: &mut R,
) -> Result<Matrix> {
    sample_layer(pred, jitter, None, rng)
}

fn sample_layer<R: Rng + ?Sized>(
    pred: &LayerPredictive,
    jitter: f64,
    student_dof: Option<f64>,
    rng: &mut R,
) -> Result<Matrix> {
    let (b_factor, _) = spd_factorize_jittered(&pred.coreg.b_hat, jitter)?;
    let lower = b_factor.lower();
    let s = pred.mean.ncols();
    let chi = student_dof.map(ChiSquared::new).transpose().map_err(|e| {
        Error::Domain(format!("invalid Student-t degrees of freedom: {e}"))
    })?;
    let mut out = pred.mean.clone();
    let mut z = vec![0.0; s];
    for (i, &cv) in pred.cond_var.iter().enumerate() {
        for zj in z.iter_mut() {
            *zj = rng.sample(StandardNormal);
        }
        let mut scale = cv.sqrt();
        if let (Some(chi), Some(dof)) = (chi.as_ref(), student_dof) {
            let g: f64 = chi.sample(rng);
            scale *= (dof / g).sqrt();
        }
        if scale == 0.0 {
            continue;
        }
        for a in 0..s {
            let mut acc = 0.0;
            for b in 0..=a {
                acc += lower[(a, b)] * z[b];
            }
            out[(i, a)] += scale * acc;
        }
    }
    Ok(out)
}

/// Latent images of unit-scaled inputs under one chain sample.
pub fn map_to_latent<R: Rng + ?Sized>(
    x_star: &Matrix,
    sample: &ChainSample,
    train: &Dataset,
    jitter: f64,
    mapping: LatentMapping,
    student_t: bool,
    rng: &mut R,
) -> Result<Matrix> {
    if sample.theta_w.is_none() {
        return Ok(x_star.clone());
    }
    let latent = latent_conditional(x_star, sample, train, jitter)?;
    match mapping {
        LatentMapping::Mean => Ok(latent.mean),
        LatentMapping::Sample => {
            let dof = student_t.then_some(train.n() as f64);
            sample_layer(&latent, jitter, dof, rng)
        }
    }
}

/// Per-sample RNG stream, independent of evaluation order.
pub fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ index as u64)
}

/// Posterior mean and covariance in standardized output units at unit-scaled inputs.
pub fn predict_standardized(
    chain: &Chain,
    x_unit: &Matrix,
    train: &Dataset,
    config: &PredictConfig,
) -> Result<Prediction> {
    if chain.is_empty() {
        return Err(Error::Config("cannot predict from an empty chain".into()));
    }
    if x_unit.ncols() != train.d() {
        return Err(Error::Shape(format!(
            "test inputs have {} columns, training data has {}",
            x_unit.ncols(),
            train.d()
        )));
    }
    let (m, q) = (x_unit.nrows(), train.q());
    let jitter = chain.config.jitter;
    if m == 0 {
        return Ok(Prediction {
            mean: Matrix::zeros(0, q),
            cov: Vec::new(),
            sample_count: chain.len(),
        });
    }

    let mut mean = Matrix::zeros(m, q);
    let mut spread = vec![Matrix::zeros(q, q); m];
    let mut within = vec![Matrix::zeros(q, q); m];
    let mut delta = vec![0.0; q];
    for (t, sample) in chain.samples.iter().enumerate() {
        let mut rng = sample_rng(config.seed, t);
        let w_star = match chain.meta.layers {
            Layers::Shallow => x_unit.clone(),
            Layers::Deep => map_to_latent(
                x_unit,
                sample,
                train,
                jitter,
                config.latent_mapping,
                config.student_t,
                &mut rng,
            )?,
        };
        let out = output_conditional(&w_star, sample, train, jitter)?;
        let count = (t + 1) as f64;
        for i in 0..m {
            for a in 0..q {
                delta[a] = out.mean[(i, a)] - mean[(i, a)];
                mean[(i, a)] += delta[a] / count;
            }
            let cv = out.cond_var[i];
            for a in 0..q {
                let after = out.mean[(i, a)] - mean[(i, a)];
                for b in 0..q {
                    spread[i][(b, a)] += delta[b] * after;
                    within[i][(b, a)] += cv * out.coreg.b_hat[(b, a)];
                }
            }
        }
    }

    let total = chain.len() as f64;
    let cov = within
        .into_iter()
        .zip(spread)
        .map(|(w, s)| clip_psd((w + s) / total))
        .collect();
    Ok(Prediction {
        mean,
        cov,
        sample_count: chain.len(),
    })
}

/// Posterior mean and covariance in natural output units at natural-unit inputs.
pub fn predict(
    chain: &Chain,
    x_star: &Matrix,
    train: &Dataset,
    config: &PredictConfig,
) -> Result<Prediction> {
    let x_unit = train.scale_x(x_star)?;
    let scaled = predict_standardized(chain, &x_unit, train, config)?;
    Ok(Prediction {
        mean: train.unscale_y(&scaled.mean),
        cov: scaled.cov.iter().map(|c| train.unscale_cov(c)).collect(),
        sample_count: scaled.sample_count,
    })
}

/// Symmetrizes and, when needed, clips negative eigenvalues to zero.
pub fn clip_psd(mut m: Matrix) -> Matrix {
    crate::linalg::symmetrize_in_place(&mut m);
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.min() >= 0.0 {
        return m;
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let mut out =
        &eig.eigenvectors * nalgebra::DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    crate::linalg::symmetrize_in_place(&mut out);
    out
}
