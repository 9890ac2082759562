//! Gibbs sweep over `(theta_w, theta_y, W)`: sliding-window Metropolis–Hastings
//! on both lengthscales followed by one elliptical slice update of the whole
//! latent matrix.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::icm::{gls_coreg, layer_fit, CoregEstimate, LayerFit, PriorSpec};
use crate::linalg::{kernel_factor, spd_factorize_jittered, Matrix, SpdFactor, DEFAULT_JITTER};

/// Number of ICM layers in the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layers {
    /// A single ICM layer on the scaled inputs; only `theta_y` is sampled.
    Shallow,
    /// Latent ICM layer feeding the output ICM layer.
    Deep,
}

impl Layers {
    pub fn count(self) -> usize {
        match self {
            Layers::Shallow => 1,
            Layers::Deep => 2,
        }
    }

    pub fn from_count(count: usize) -> Result<Self> {
        match count {
            1 => Ok(Layers::Shallow),
            2 => Ok(Layers::Deep),
            other => Err(Error::Config(format!(
                "only 1 or 2 layers are supported, got {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub layers: Layers,
    /// Latent width; `None` means `max(d, Q)`.
    pub latent_dim: Option<usize>,
    pub priors: PriorSpec,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            layers: Layers::Deep,
            latent_dim: None,
            priors: PriorSpec::default(),
        }
    }
}

impl ModelSpec {
    pub fn shallow() -> Self {
        Self {
            layers: Layers::Shallow,
            ..Self::default()
        }
    }

    /// Width of the latent layer for data of input dimension `d` and `q` outputs.
    pub fn resolved_latent_dim(&self, d: usize, q: usize) -> usize {
        match self.layers {
            Layers::Shallow => d,
            Layers::Deep => self.latent_dim.unwrap_or(d.max(q)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub proposal_l: f64,
    pub proposal_u: f64,
    pub seed: u64,
    pub jitter: f64,
    pub ess_max_shrinks: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            burn_in: 1000,
            thinning: 2,
            proposal_l: 1.0,
            proposal_u: 2.0,
            seed: 0,
            jitter: DEFAULT_JITTER,
            ess_max_shrinks: 100,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn-in ({}) must be below the iteration count ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thinning == 0 {
            return Err(Error::Config("thinning must be at least 1".into()));
        }
        if !(self.proposal_l > 0.0 && self.proposal_l <= self.proposal_u) {
            return Err(Error::Config(format!(
                "proposal bounds must satisfy 0 < l <= u (got {}, {})",
                self.proposal_l, self.proposal_u
            )));
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::Config(format!("jitter must be non-negative, got {}", self.jitter)));
        }
        Ok(())
    }

    /// `floor((iterations - burn_in) / thinning)`.
    pub fn retained_samples(&self) -> usize {
        (self.iterations - self.burn_in) / self.thinning
    }
}

/// One retained posterior draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSample {
    /// `None` for shallow chains.
    pub theta_w: Option<f64>,
    pub theta_y: f64,
    /// Latent matrix (n×D); the scaled inputs for shallow chains.
    pub w: Matrix,
    pub b_hat_w: Option<CoregEstimate>,
    pub b_hat_y: CoregEstimate,
}

impl ChainSample {
    /// Recomputes the plug-in estimates from `(theta_w, theta_y, w)`.
    pub fn from_state(
        theta_w: Option<f64>,
        theta_y: f64,
        w: Matrix,
        data: &Dataset,
        jitter: f64,
    ) -> Result<Self> {
        let b_hat_w = match theta_w {
            Some(tw) => {
                let kw = kernel_factor(data.scaled_x(), tw, jitter)?;
                Some(gls_coreg(&w, &kw)?)
            }
            None => None,
        };
        let ky = kernel_factor(&w, theta_y, jitter)?;
        let b_hat_y = gls_coreg(data.scaled_y(), &ky)?;
        Ok(Self {
            theta_w,
            theta_y,
            w,
            b_hat_w,
            b_hat_y,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub n: usize,
    pub d: usize,
    pub q: usize,
    pub latent_dim: usize,
    pub layers: Layers,
    pub x_bounds: Vec<(f64, f64)>,
    pub y_center: Vec<f64>,
    pub y_scale: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcceptanceRates {
    pub theta_w: Option<f64>,
    pub theta_y: f64,
    /// Mean number of bracket shrinks per elliptical slice step.
    pub mean_ess_shrinks: Option<f64>,
    /// Proposals whose likelihood could not be evaluated (counted as rejections).
    pub failed_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub samples: Vec<ChainSample>,
    pub config: SamplerConfig,
    pub model: ModelSpec,
    pub meta: ModelMeta,
    pub acceptance: AcceptanceRates,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Uniform draw on `[l θ / u, u θ / l]`.
pub fn propose_lengthscale<R: Rng + ?Sized>(theta_prev: f64, l: f64, u: f64, rng: &mut R) -> f64 {
    let draw = rng.random::<f64>();
    if l == u {
        return theta_prev;
    }
    let lo = l * theta_prev / u;
    let hi = u * theta_prev / l;
    lo + (hi - lo) * draw
}

/// Log acceptance probability of the sliding-window move, including the
/// `theta_prev / theta_new` proposal correction. Always `<= 0`.
pub fn mh_log_acceptance(
    log_target_new: f64,
    log_target_prev: f64,
    theta_new: f64,
    theta_prev: f64,
) -> f64 {
    let log_ratio = log_target_new - log_target_prev + (theta_prev / theta_new).ln();
    if log_ratio.is_nan() {
        f64::NEG_INFINITY
    } else {
        log_ratio.min(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MhOutcome {
    pub theta: f64,
    pub log_target: f64,
    pub accepted: bool,
    /// The target could not be evaluated at the proposal.
    pub failed: bool,
}

/// One sliding-window MH update of a positive scalar.
///
/// `log_target` returns the unnormalized log posterior; an error counts as a rejection.
pub fn mh_step<R, F>(
    theta_prev: f64,
    log_target_prev: f64,
    l: f64,
    u: f64,
    rng: &mut R,
    mut log_target: F,
) -> MhOutcome
where
    R: Rng + ?Sized,
    F: FnMut(f64) -> Result<f64>,
{
    let proposal = propose_lengthscale(theta_prev, l, u, rng);
    let draw: f64 = rng.random();
    let rejected = MhOutcome {
        theta: theta_prev,
        log_target: log_target_prev,
        accepted: false,
        failed: false,
    };
    match log_target(proposal) {
        Ok(value) => {
            let log_alpha = mh_log_acceptance(value, log_target_prev, proposal, theta_prev);
            if log_alpha == 0.0 || draw.ln() < log_alpha {
                MhOutcome {
                    theta: proposal,
                    log_target: value,
                    accepted: true,
                    failed: false,
                }
            } else {
                rejected
            }
        }
        Err(_) => MhOutcome {
            failed: true,
            ..rejected
        },
    }
}

/// Draw from the matrix normal `N(0, B ⊗ K)`: `L_K Z L_B^T`.
pub fn draw_matrix_normal_prior<R: Rng + ?Sized>(
    k_factor: &SpdFactor,
    b_factor: &SpdFactor,
    rng: &mut R,
) -> Matrix {
    let (n, s) = (k_factor.dim(), b_factor.dim());
    let mut z = Matrix::zeros(n, s);
    for i in 0..n {
        for j in 0..s {
            z[(i, j)] = rng.sample(StandardNormal);
        }
    }
    k_factor.lower() * z * b_factor.lower().transpose()
}

/// `W cos γ + P sin γ`.
pub fn ellipse_point(current: &Matrix, prior_draw: &Matrix, gamma: f64) -> Matrix {
    current * gamma.cos() + prior_draw * gamma.sin()
}

/// The angle interval of an elliptical slice step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleBracket {
    pub min: f64,
    pub max: f64,
}

impl AngleBracket {
    /// `(γ - 2π, γ)` around the first angle.
    pub fn around(gamma: f64) -> Self {
        Self {
            min: gamma - 2.0 * PI,
            max: gamma,
        }
    }

    /// Shrinks toward zero on the side of the rejected angle.
    pub fn shrink(&mut self, rejected: f64) {
        if rejected < 0.0 {
            self.min = rejected;
        } else {
            self.max = rejected;
        }
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.min + (self.max - self.min) * rng.random::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EssOutcome {
    pub w: Matrix,
    pub log_lik: f64,
    pub shrinks: usize,
    pub accepted: bool,
}

/// One elliptical slice step against a fixed prior draw.
///
/// `log_lik` returns `None` where the likelihood cannot be evaluated, which
/// is treated as falling below the slice. After `max_shrinks` shrinks the
/// current state is returned unchanged.
pub fn elliptical_slice<R, F>(
    current: &Matrix,
    current_log_lik: f64,
    prior_draw: &Matrix,
    max_shrinks: usize,
    rng: &mut R,
    mut log_lik: F,
) -> EssOutcome
where
    R: Rng + ?Sized,
    F: FnMut(&Matrix) -> Option<f64>,
{
    let threshold = current_log_lik + (1.0 - rng.random::<f64>()).ln();
    let mut gamma = 2.0 * PI * rng.random::<f64>();
    let mut bracket = AngleBracket::around(gamma);
    let mut shrinks = 0;
    loop {
        let proposal = ellipse_point(current, prior_draw, gamma);
        if let Some(value) = log_lik(&proposal) {
            if value > threshold {
                return EssOutcome {
                    w: proposal,
                    log_lik: value,
                    shrinks,
                    accepted: true,
                };
            }
        }
        if shrinks >= max_shrinks {
            return EssOutcome {
                w: current.clone(),
                log_lik: current_log_lik,
                shrinks,
                accepted: false,
            };
        }
        bracket.shrink(gamma);
        gamma = bracket.sample(rng);
        shrinks += 1;
    }
}

/// Mutable state of the Gibbs sweep with its cached factorizations.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub theta_w: Option<f64>,
    pub theta_y: f64,
    pub w: Matrix,
    latent: Option<LatentCache>,
    output: LayerFit,
}

#[derive(Debug, Clone)]
struct LatentCache {
    k_factor: SpdFactor,
    fit: LayerFit,
}

impl ChainState {
    pub fn log_lik_y(&self) -> f64 {
        self.output.log_marginal
    }

    pub fn log_lik_w(&self) -> Option<f64> {
        self.latent.as_ref().map(|c| c.fit.log_marginal)
    }

    pub fn b_hat_w(&self) -> Option<&CoregEstimate> {
        self.latent.as_ref().map(|c| &c.fit.coreg)
    }
}

/// Likelihood evaluations for one dataset, model and jitter level.
pub struct GibbsSampler<'a> {
    data: &'a Dataset,
    model: &'a ModelSpec,
    config: &'a SamplerConfig,
    latent_dim: usize,
}

impl<'a> GibbsSampler<'a> {
    pub fn new(data: &'a Dataset, model: &'a ModelSpec, config: &'a SamplerConfig) -> Result<Self> {
        config.validate()?;
        model.priors.validate()?;
        let latent_dim = model.resolved_latent_dim(data.d(), data.q());
        if latent_dim == 0 {
            return Err(Error::Config("latent dimension must be at least 1".into()));
        }
        let widest = data.d().max(data.q()).max(latent_dim);
        if data.n() <= widest {
            return Err(Error::DegenerateLikelihood(format!(
                "need n > max(d, D, Q); n = {}, max = {widest}",
                data.n()
            )));
        }
        Ok(Self {
            data,
            model,
            config,
            latent_dim,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn latent_cache(&self, theta_w: f64, w: &Matrix) -> Result<LatentCache> {
        let k_factor = kernel_factor(self.data.scaled_x(), theta_w, self.config.jitter)?;
        let fit = layer_fit(w, &k_factor)?;
        Ok(LatentCache { k_factor, fit })
    }

    fn latent_refit(&self, k_factor: &SpdFactor, w: &Matrix) -> Result<LayerFit> {
        layer_fit(w, k_factor)
    }

    /// `L(Y | W, theta_y)` with its plug-in `B_hat_y`.
    pub fn output_fit(&self, theta_y: f64, w: &Matrix) -> Result<LayerFit> {
        let ky = kernel_factor(w, theta_y, self.config.jitter)?;
        layer_fit(self.data.scaled_y(), &ky)
    }

    /// Prior-mean lengthscales and a warp built from the scaled inputs.
    ///
    /// Latent column `j` starts as input column `j mod d`, standardized. Columns
    /// that repeat an input column get a small seeded perturbation so that the
    /// initial `B_hat_w` is nonsingular.
    pub fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ChainState> {
        let priors = &self.model.priors;
        let x = self.data.scaled_x();
        let theta_y = priors.mean_theta_y();
        let (theta_w, w, latent) = match self.model.layers {
            Layers::Shallow => (None, x.clone(), None),
            Layers::Deep => {
                let (n, d) = (x.nrows(), x.ncols());
                let mut w = Matrix::zeros(n, self.latent_dim);
                for j in 0..self.latent_dim {
                    let src = x.column(j % d);
                    let mean = src.mean();
                    let sd = (src.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64)
                        .sqrt()
                        .max(f64::MIN_POSITIVE);
                    for i in 0..n {
                        w[(i, j)] = (src[i] - mean) / sd;
                    }
                    if j >= d {
                        for i in 0..n {
                            let z: f64 = rng.sample(StandardNormal);
                            w[(i, j)] += 0.1 * z;
                        }
                    }
                }
                let theta_w = priors.mean_theta_w();
                let cache = self.latent_cache(theta_w, &w)?;
                (Some(theta_w), w, Some(cache))
            }
        };
        let output = self.output_fit(theta_y, &w)?;
        Ok(ChainState {
            theta_w,
            theta_y,
            w,
            latent,
            output,
        })
    }

    /// MH update of `theta_w`; returns `(accepted, failed)`. No-op for shallow models.
    pub fn mh_step_theta_w<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> (bool, bool) {
        let (Some(theta_prev), Some(cache)) = (state.theta_w, state.latent.as_ref()) else {
            return (false, false);
        };
        let priors = &self.model.priors;
        let prev_target = cache.fit.log_marginal + priors.log_theta_w(theta_prev);
        let mut candidate = None;
        let outcome = mh_step(
            theta_prev,
            prev_target,
            self.config.proposal_l,
            self.config.proposal_u,
            rng,
            |theta| {
                let c = self.latent_cache(theta, &state.w)?;
                let value = c.fit.log_marginal + priors.log_theta_w(theta);
                candidate = Some(c);
                Ok(value)
            },
        );
        if outcome.accepted {
            state.theta_w = Some(outcome.theta);
            state.latent = candidate;
        }
        (outcome.accepted, outcome.failed)
    }

    /// MH update of `theta_y`; returns `(accepted, failed)`.
    pub fn mh_step_theta_y<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> (bool, bool) {
        let priors = &self.model.priors;
        let theta_prev = state.theta_y;
        let prev_target = state.output.log_marginal + priors.log_theta_y(theta_prev);
        let mut candidate = None;
        let outcome = mh_step(
            theta_prev,
            prev_target,
            self.config.proposal_l,
            self.config.proposal_u,
            rng,
            |theta| {
                let fit = self.output_fit(theta, &state.w)?;
                let value = fit.log_marginal + priors.log_theta_y(theta);
                candidate = Some(fit);
                Ok(value)
            },
        );
        if outcome.accepted {
            state.theta_y = outcome.theta;
            if let Some(fit) = candidate {
                state.output = fit;
            }
        }
        (outcome.accepted, outcome.failed)
    }

    /// Elliptical slice update of the whole latent matrix under the plug-in
    /// prior `N(0, B_hat_w ⊗ K_{theta_w}(X))`. `None` for shallow models.
    pub fn ess_step_w<R: Rng + ?Sized>(
        &self,
        state: &mut ChainState,
        rng: &mut R,
    ) -> Result<Option<EssOutcome>> {
        let Some(cache) = state.latent.as_ref() else {
            return Ok(None);
        };
        let (b_factor, _) = spd_factorize_jittered(&cache.fit.coreg.b_hat, self.config.jitter)?;
        let prior_draw = draw_matrix_normal_prior(&cache.k_factor, &b_factor, rng);
        let theta_y = state.theta_y;
        let mut accepted_fit = None;
        let outcome = elliptical_slice(
            &state.w,
            state.output.log_marginal,
            &prior_draw,
            self.config.ess_max_shrinks,
            rng,
            |w| {
                let fit = self.output_fit(theta_y, w).ok()?;
                let value = fit.log_marginal;
                accepted_fit = Some(fit);
                Some(value)
            },
        );
        if outcome.accepted {
            // The closure's last evaluation is the accepted proposal.
            let refit = self.latent_refit(&cache.k_factor, &outcome.w);
            match (accepted_fit.take(), refit) {
                (Some(output), Ok(fit)) => {
                    let k_factor = cache.k_factor.clone();
                    state.w = outcome.w.clone();
                    state.output = output;
                    state.latent = Some(LatentCache { k_factor, fit });
                }
                _ => {
                    return Ok(Some(EssOutcome {
                        w: state.w.clone(),
                        log_lik: state.output.log_marginal,
                        shrinks: outcome.shrinks,
                        accepted: false,
                    }))
                }
            }
        }
        Ok(Some(outcome))
    }

    pub fn snapshot(&self, state: &ChainState) -> ChainSample {
        ChainSample {
            theta_w: state.theta_w,
            theta_y: state.theta_y,
            w: state.w.clone(),
            b_hat_w: state.latent.as_ref().map(|c| c.fit.coreg.clone()),
            b_hat_y: state.output.coreg.clone(),
        }
    }

    pub fn meta(&self) -> ModelMeta {
        ModelMeta {
            n: self.data.n(),
            d: self.data.d(),
            q: self.data.q(),
            latent_dim: self.latent_dim,
            layers: self.model.layers,
            x_bounds: self.data.x_bounds().to_vec(),
            y_center: self.data.y_center().to_vec(),
            y_scale: self.data.y_scale().to_vec(),
        }
    }
}

/// Runs the full Gibbs–MH–ESS chain and keeps thinned post-burn-in samples.
pub fn run_chain(data: &Dataset, config: &SamplerConfig, model: &ModelSpec) -> Result<Chain> {
    let sampler = GibbsSampler::new(data, model, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = sampler.initial_state(&mut rng).map_err(|e| Error::Sampler {
        iteration: 0,
        source: Box::new(e),
    })?;

    let mut samples = Vec::with_capacity(config.retained_samples());
    let (mut acc_w, mut acc_y, mut shrinks, mut failed) = (0usize, 0usize, 0usize, 0usize);
    for t in 1..=config.iterations {
        let (a, f) = sampler.mh_step_theta_w(&mut state, &mut rng);
        acc_w += a as usize;
        failed += f as usize;
        let (a, f) = sampler.mh_step_theta_y(&mut state, &mut rng);
        acc_y += a as usize;
        failed += f as usize;
        let ess = sampler
            .ess_step_w(&mut state, &mut rng)
            .map_err(|e| Error::Sampler {
                iteration: t,
                source: Box::new(e),
            })?;
        if let Some(outcome) = ess {
            shrinks += outcome.shrinks;
        }
        if t > config.burn_in && (t - config.burn_in) % config.thinning == 0 {
            samples.push(sampler.snapshot(&state));
        }
    }

    let iters = config.iterations as f64;
    let deep = model.layers == Layers::Deep;
    Ok(Chain {
        samples,
        config: config.clone(),
        model: model.clone(),
        meta: sampler.meta(),
        acceptance: AcceptanceRates {
            theta_w: deep.then(|| acc_w as f64 / iters),
            theta_y: acc_y as f64 / iters,
            mean_ess_shrinks: deep.then(|| shrinks as f64 / iters),
            failed_evaluations: failed,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{kernel_matrix, spd_factorize};

    fn toy_data(n: usize, q: usize) -> Dataset {
        let x = Matrix::from_fn(n, 1, |i, _| i as f64 / (n - 1) as f64);
        let y = Matrix::from_fn(n, q, |i, j| {
            let t = i as f64 / (n - 1) as f64;
            (6.0 * t + j as f64).sin() + 0.3 * t * j as f64
        });
        Dataset::new(x, y).unwrap()
    }

    fn short_config(seed: u64) -> SamplerConfig {
        SamplerConfig {
            iterations: 60,
            burn_in: 20,
            thinning: 2,
            seed,
            ..SamplerConfig::default()
        }
    }

    #[test]
    fn proposal_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let t = propose_lengthscale(1.0, 1.0, 2.0, &mut rng);
            assert!((0.5..=2.0).contains(&t));
        }
        assert_eq!(propose_lengthscale(0.7, 1.5, 1.5, &mut rng), 0.7);
    }

    #[test]
    fn proposal_mean_matches_midpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| propose_lengthscale(1.0, 1.0, 2.0, &mut rng))
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1.25).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn degenerate_window_always_accepts() {
        assert_eq!(mh_log_acceptance(-3.0, -3.0, 1.2, 1.2), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let out = mh_step(1.2, -3.0, 1.0, 1.0, &mut rng, |_| Ok(-3.0));
            assert!(out.accepted);
            assert_eq!(out.theta, 1.2);
        }
    }

    #[test]
    fn failed_target_is_rejection() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let out = mh_step(1.0, 0.0, 1.0, 2.0, &mut rng, |_| {
            Err(Error::DegenerateLikelihood("test".into()))
        });
        assert!(!out.accepted && out.failed);
        assert_eq!(out.theta, 1.0);
    }

    #[test]
    fn bracket_width_strictly_decreases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut bracket = AngleBracket::around(2.0);
        let mut width = bracket.width();
        for _ in 0..50 {
            let gamma = bracket.sample(&mut rng);
            bracket.shrink(gamma);
            assert!(bracket.width() < width);
            assert!(bracket.min <= 0.0 && bracket.max >= 0.0);
            width = bracket.width();
        }
    }

    #[test]
    fn zero_angle_is_identity() {
        let w = Matrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 3.0]);
        let p = Matrix::from_row_slice(2, 2, &[9.0, 9.0, 9.0, 9.0]);
        assert_eq!(ellipse_point(&w, &p, 0.0), w);
    }

    #[test]
    fn ess_gives_up_after_max_shrinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w = Matrix::from_element(3, 1, 1.0);
        let p = Matrix::from_element(3, 1, -1.0);
        let out = elliptical_slice(&w, 0.0, &p, 7, &mut rng, |_| None);
        assert!(!out.accepted);
        assert_eq!(out.shrinks, 7);
        assert_eq!(out.w, w);
    }

    #[test]
    fn matrix_normal_identity_is_standard() {
        let k = spd_factorize(&Matrix::identity(4, 4)).unwrap();
        let b = spd_factorize(&Matrix::identity(2, 2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut values = Vec::new();
        for _ in 0..1250 {
            values.extend(draw_matrix_normal_prior(&k, &b, &mut rng).iter().copied());
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.03);
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn matrix_normal_is_seed_deterministic() {
        let x = Matrix::from_fn(5, 1, |i, _| i as f64 / 4.0);
        let k = spd_factorize(&kernel_matrix(&x, 0.5, 1e-6).unwrap()).unwrap();
        let b = spd_factorize(&Matrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0])).unwrap();
        let a = draw_matrix_normal_prior(&k, &b, &mut ChaCha8Rng::seed_from_u64(9));
        let c = draw_matrix_normal_prior(&k, &b, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, c);
    }

    #[test]
    fn config_validation() {
        let mut c = SamplerConfig::default();
        assert_eq!(c.retained_samples(), 2000);
        c.burn_in = c.iterations;
        assert!(c.validate().is_err());
        let c = SamplerConfig {
            thinning: 0,
            ..SamplerConfig::default()
        };
        assert!(c.validate().is_err());
        let c = SamplerConfig {
            proposal_l: 3.0,
            ..SamplerConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn boundary_schedule_keeps_one_sample() {
        let data = toy_data(8, 2);
        let config = SamplerConfig {
            iterations: 6,
            burn_in: 5,
            thinning: 1,
            ..SamplerConfig::default()
        };
        let chain = run_chain(&data, &config, &ModelSpec::default()).unwrap();
        assert_eq!(chain.len(), 1);
    }

    #[test]
    fn chain_length_and_positivity() {
        let data = toy_data(8, 2);
        let config = short_config(11);
        let chain = run_chain(&data, &config, &ModelSpec::default()).unwrap();
        assert_eq!(chain.len(), 20);
        assert_eq!(chain.meta.latent_dim, 2);
        for s in &chain.samples {
            assert!(s.theta_y > 0.0 && s.theta_w.unwrap() > 0.0);
            assert!(s.w.iter().all(|v| v.is_finite()));
            assert_eq!(s.w.shape(), (8, 2));
        }
    }

    #[test]
    fn consecutive_thetas_stay_in_window() {
        let data = toy_data(8, 2);
        let config = SamplerConfig {
            iterations: 80,
            burn_in: 0,
            thinning: 1,
            seed: 12,
            ..SamplerConfig::default()
        };
        let chain = run_chain(&data, &config, &ModelSpec::default()).unwrap();
        for pair in chain.samples.windows(2) {
            let (a, b) = (pair[0].theta_y, pair[1].theta_y);
            assert!(b >= a / 2.0 && b <= 2.0 * a);
            let (a, b) = (pair[0].theta_w.unwrap(), pair[1].theta_w.unwrap());
            assert!(b >= a / 2.0 && b <= 2.0 * a);
        }
    }

    #[test]
    fn run_chain_is_deterministic() {
        let data = toy_data(8, 2);
        let a = run_chain(&data, &short_config(5), &ModelSpec::default()).unwrap();
        let b = run_chain(&data, &short_config(5), &ModelSpec::default()).unwrap();
        assert_eq!(a, b);
        let c = run_chain(&data, &short_config(6), &ModelSpec::default()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn shallow_chain_fixes_latent_layer() {
        let data = toy_data(8, 2);
        let chain = run_chain(&data, &short_config(1), &ModelSpec::shallow()).unwrap();
        for s in &chain.samples {
            assert!(s.theta_w.is_none() && s.b_hat_w.is_none());
            assert_eq!(&s.w, data.scaled_x());
        }
        assert!(chain.acceptance.theta_w.is_none());
    }

    #[test]
    fn snapshot_matches_recomputation() {
        let data = toy_data(8, 2);
        let chain = run_chain(&data, &short_config(3), &ModelSpec::default()).unwrap();
        for s in &chain.samples {
            let again =
                ChainSample::from_state(s.theta_w, s.theta_y, s.w.clone(), &data, chain.config.jitter)
                    .unwrap();
            assert_eq!(&again, s);
        }
    }

    #[test]
    fn too_few_points_rejected() {
        let data = toy_data(3, 3);
        assert!(run_chain(&data, &short_config(0), &ModelSpec::default()).is_err());
    }
}
