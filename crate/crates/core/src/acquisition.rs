//! Multi-output ALC: candidates are scored by the reference-averaged residual
//! variance of the output layer after augmenting the latent design with the
//! candidate's latent image, raised to the number of outputs (the
//! determinant of the predictive covariance up to the constant `|B_y|`).

use std::collections::HashMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baseline::{alc_indep, fit_indep, IndepGpModel};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{cross_kernel, kernel_factor, Matrix, SpdFactor};
use crate::metrics::{self, MetricReport};
use crate::predict::{map_to_latent, predict, sample_rng, LatentMapping, PredictConfig};
use crate::sampler::{run_chain, Chain, ModelSpec, SamplerConfig};

/// Candidates closer than this (in unit-scaled inputs) to a design row are skipped.
pub const DUPLICATE_TOL: f64 = 1e-10;

/// Multiple of the jitter below which the rank-one update is abandoned.
pub const FAST_UPDATE_GUARD: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionConfig {
    /// Candidate inputs (c×d, natural units).
    pub candidates: Matrix,
    /// Reference inputs (r×d, natural units).
    pub reference: Matrix,
    pub use_fast_update: bool,
    pub latent_mapping: LatentMapping,
    pub seed: u64,
}

impl AcquisitionConfig {
    pub fn new(candidates: Matrix, reference: Matrix) -> Self {
        Self {
            candidates,
            reference,
            use_fast_update: true,
            latent_mapping: LatentMapping::Sample,
            seed: 0,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.candidates.nrows() == 0 || self.reference.nrows() == 0 {
            return Err(Error::Config("need at least one candidate and one reference point".into()));
        }
        if self.candidates.ncols() != d || self.reference.ncols() != d {
            return Err(Error::Shape(format!(
                "candidates ({}) and reference ({}) must have {d} columns",
                self.candidates.ncols(),
                self.reference.ncols()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionResult {
    /// One score per candidate; `+inf` for excluded or unscorable candidates.
    pub scores: Vec<f64>,
    pub selected_index: usize,
    /// Selected candidate in natural units.
    pub selected_point: Vec<f64>,
    /// Candidates skipped because they duplicate a design row.
    pub excluded: usize,
    /// Candidates whose augmented factorization failed.
    pub failed: usize,
}

/// Factorized output-layer kernel over one latent design.
#[derive(Debug, Clone)]
pub struct ConditioningState {
    design: Matrix,
    theta: f64,
    jitter: f64,
    factor: SpdFactor,
}

impl ConditioningState {
    pub fn new(design: &Matrix, theta: f64, jitter: f64) -> Result<Self> {
        Ok(Self {
            design: design.clone(),
            theta,
            jitter,
            factor: kernel_factor(design, theta, jitter)?,
        })
    }

    pub fn design(&self) -> &Matrix {
        &self.design
    }

    /// Prior variance on the kernel diagonal, jitter included.
    fn self_variance(&self) -> f64 {
        self.factor.source()[(0, 0)]
    }

    fn cross(&self, points: &Matrix) -> Result<Matrix> {
        cross_kernel(&self.design, points, self.theta)
    }

    /// `k(w, W) K^{-1} k(W, w)`.
    pub fn quad_form(&self, w: &[f64]) -> Result<f64> {
        let point = Matrix::from_row_slice(1, w.len(), w);
        Ok(self.factor.inv_quad_form(&self.cross(&point)?)?[(0, 0)])
    }

    /// Unit-variance residual `1 - k K^{-1} k`, clamped to `[0, 1 + jitter]`.
    pub fn residual(&self, w: &[f64]) -> Result<f64> {
        Ok(clamp_residual(1.0 - self.quad_form(w)?, self.jitter))
    }
}

fn clamp_residual(v: f64, jitter: f64) -> f64 {
    v.clamp(0.0, 1.0 + jitter)
}

/// Augmented quadratic form for `w_ref` once `w_new` joins the design, by the
/// Sherman–Morrison update. `None` when the new point is numerically
/// redundant (`v <= 10 jitter`) and the direct path should be used.
pub fn fast_variance_update(w_ref: &[f64], w_new: &[f64], base: &ConditioningState) -> Result<Option<f64>> {
    let r = Matrix::from_row_slice(1, w_ref.len(), w_ref);
    let c = Matrix::from_row_slice(1, w_new.len(), w_new);
    let kr = base.cross(&r)?;
    let kc = base.cross(&c)?;
    let g = base.factor.solve(&kc)?;
    let v = base.self_variance() - kc.dot(&g);
    if v <= FAST_UPDATE_GUARD * base.jitter {
        return Ok(None);
    }
    let unaugmented = base.factor.inv_quad_form(&kr)?[(0, 0)];
    let h = g / -v;
    let rh = kr.dot(&h);
    let z = cross_kernel(&r, &c, base.theta)?[(0, 0)];
    Ok(Some(unaugmented + v * rh * rh + 2.0 * z * rh + z * z / v))
}

/// Augmented quadratic form by refactorizing the augmented kernel matrix.
pub fn direct_augmented_quad_form(w_ref: &[f64], w_new: &[f64], base: &ConditioningState) -> Result<f64> {
    let aug = augment(&base.design, w_new);
    let state = ConditioningState::new(&aug, base.theta, base.jitter)?;
    state.quad_form(w_ref)
}

fn augment(design: &Matrix, row: &[f64]) -> Matrix {
    let n = design.nrows();
    let mut aug = design.clone().insert_row(n, 0.0);
    for (j, &v) in row.iter().enumerate() {
        aug[(n, j)] = v;
    }
    aug
}

/// Residual variances (r×c) of every reference point after augmenting the
/// design with each candidate, and a mask that is `false` for candidates whose
/// augmented system cannot be factorized.
pub fn residual_table(
    base: &ConditioningState,
    candidates: &Matrix,
    reference: &Matrix,
    use_fast_update: bool,
) -> Result<(Matrix, Vec<bool>)> {
    let (c, r) = (candidates.nrows(), reference.nrows());
    let jitter = base.jitter;
    let kr = base.cross(reference)?;
    let a = base.factor.solve(&kr)?;
    let base_form: Vec<f64> = (0..r).map(|i| kr.column(i).dot(&a.column(i))).collect();

    let mut table = Matrix::zeros(r, c);
    let mut ok = vec![true; c];
    let mut direct = Vec::new();
    if use_fast_update {
        let kc = base.cross(candidates)?;
        let g = base.factor.solve(&kc)?;
        let s = a.transpose() * &kc;
        let z = cross_kernel(reference, candidates, base.theta)?;
        let self_var = base.self_variance();
        for j in 0..c {
            let v = self_var - kc.column(j).dot(&g.column(j));
            if v <= FAST_UPDATE_GUARD * jitter {
                direct.push(j);
                continue;
            }
            for i in 0..r {
                let diff = s[(i, j)] - z[(i, j)];
                let aug = base_form[i] + diff * diff / v;
                table[(i, j)] = clamp_residual(1.0 - aug, jitter);
            }
        }
    } else {
        direct.extend(0..c);
    }

    for j in direct {
        let row: Vec<f64> = candidates.row(j).iter().copied().collect();
        let aug = augment(&base.design, &row);
        match ConditioningState::new(&aug, base.theta, jitter) {
            Ok(state) => {
                let kr_aug = state.cross(reference)?;
                let half = state.factor.half_solve(&kr_aug)?;
                for i in 0..r {
                    table[(i, j)] = clamp_residual(1.0 - half.column(i).norm_squared(), jitter);
                }
            }
            Err(Error::NotPositiveDefinite { .. }) => ok[j] = false,
            Err(e) => return Err(e),
        }
    }
    Ok((table, ok))
}

/// Unaugmented residual variances of the reference points.
pub fn base_residuals(base: &ConditioningState, reference: &Matrix) -> Result<Vec<f64>> {
    let kr = base.cross(reference)?;
    let half = base.factor.half_solve(&kr)?;
    Ok((0..reference.nrows())
        .map(|i| clamp_residual(1.0 - half.column(i).norm_squared(), base.jitter))
        .collect())
}

/// RNG streams for one chain sample: reference images use stream 0 and
/// candidate images stream 1, so candidate lists never perturb reference draws.
fn stream_rngs(seed: u64, t: usize) -> (ChaCha8Rng, ChaCha8Rng) {
    let reference = sample_rng(seed, t);
    let mut candidates = sample_rng(seed, t);
    candidates.set_stream(1);
    (reference, candidates)
}

/// ALC scores of unit-scaled candidates against unit-scaled references.
/// Returns the per-candidate score and a flag for unscorable candidates.
pub fn score_unit_candidates(
    chain: &Chain,
    train: &Dataset,
    cand_unit: &Matrix,
    ref_unit: &Matrix,
    use_fast_update: bool,
    mapping: LatentMapping,
    seed: u64,
) -> Result<(Vec<f64>, Vec<bool>)> {
    if chain.is_empty() {
        return Err(Error::Config("cannot score candidates with an empty chain".into()));
    }
    let (c, r) = (cand_unit.nrows(), ref_unit.nrows());
    let q = train.q() as i32;
    let jitter = chain.config.jitter;
    let mut totals = vec![0.0; c];
    let mut ok = vec![true; c];
    for (t, sample) in chain.samples.iter().enumerate() {
        let (mut ref_rng, mut cand_rng) = stream_rngs(seed, t);
        let w_ref = map_to_latent(ref_unit, sample, train, jitter, mapping, false, &mut ref_rng)?;
        let w_cand = map_to_latent(cand_unit, sample, train, jitter, mapping, false, &mut cand_rng)?;
        let base = ConditioningState::new(&sample.w, sample.theta_y, jitter)?;
        let (table, good) = residual_table(&base, &w_cand, &w_ref, use_fast_update)?;
        for j in 0..c {
            ok[j] &= good[j];
            totals[j] += table.column(j).iter().map(|v| v.powi(q)).sum::<f64>();
        }
    }
    let (t_count, r_count) = (chain.len() as f64, r as f64);
    let scores = totals
        .iter()
        .zip(&ok)
        .map(|(&s, &good)| if good { s / t_count / r_count } else { f64::INFINITY })
        .collect();
    Ok((scores, ok))
}

/// ALC score of a single candidate (natural units).
pub fn alc_score(candidate: &[f64], chain: &Chain, config: &AcquisitionConfig, train: &Dataset) -> Result<f64> {
    let cand = Matrix::from_row_slice(1, candidate.len(), candidate);
    let cand_unit = train.scale_x(&cand)?;
    let ref_unit = train.scale_x(&config.reference)?;
    let (scores, _) = score_unit_candidates(
        chain,
        train,
        &cand_unit,
        &ref_unit,
        config.use_fast_update,
        config.latent_mapping,
        config.seed,
    )?;
    Ok(scores[0])
}

/// Reference-averaged residual variance of the current design, `(1/T)(1/r) Σ (1 - k K^{-1} k)^Q`.
pub fn reference_residual_variance(
    chain: &Chain,
    train: &Dataset,
    reference: &Matrix,
    mapping: LatentMapping,
    seed: u64,
) -> Result<f64> {
    if chain.is_empty() {
        return Err(Error::Config("cannot score with an empty chain".into()));
    }
    let ref_unit = train.scale_x(reference)?;
    let q = train.q() as i32;
    let jitter = chain.config.jitter;
    let mut total = 0.0;
    for (t, sample) in chain.samples.iter().enumerate() {
        let (mut ref_rng, _) = stream_rngs(seed, t);
        let w_ref = map_to_latent(&ref_unit, sample, train, jitter, mapping, false, &mut ref_rng)?;
        let base = ConditioningState::new(&sample.w, sample.theta_y, jitter)?;
        total += base_residuals(&base, &w_ref)?.iter().map(|v| v.powi(q)).sum::<f64>();
    }
    Ok(total / chain.len() as f64 / reference.nrows() as f64)
}

/// Marks candidates within [`DUPLICATE_TOL`] of a design row (unit-scaled).
pub fn near_design(cand_unit: &Matrix, design_unit: &Matrix) -> Vec<bool> {
    (0..cand_unit.nrows())
        .map(|j| {
            (0..design_unit.nrows()).any(|i| {
                let d2: f64 = (0..cand_unit.ncols())
                    .map(|c| (cand_unit[(j, c)] - design_unit[(i, c)]).powi(2))
                    .sum();
                d2.sqrt() < DUPLICATE_TOL
            })
        })
        .collect()
}

/// Indices of the first occurrence of each distinct row, and each row's slot in that list.
pub(crate) fn distinct_rows(m: &Matrix) -> (Vec<usize>, Vec<usize>) {
    let mut first: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut unique = Vec::new();
    let mut slot = Vec::with_capacity(m.nrows());
    for j in 0..m.nrows() {
        let key: Vec<u64> = m.row(j).iter().map(|v| v.to_bits()).collect();
        let next = unique.len();
        let s = *first.entry(key).or_insert_with(|| {
            unique.push(j);
            next
        });
        slot.push(s);
    }
    (unique, slot)
}

fn select_rows(m: &Matrix, rows: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), m.ncols(), |i, c| m[(rows[i], c)])
}

/// Argmin with ties to the lowest index; `None` if every score is infinite or NaN.
pub fn argmin(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (j, &s) in scores.iter().enumerate() {
        if s.is_finite() && best.is_none_or(|b| s < scores[b]) {
            best = Some(j);
        }
    }
    best
}

/// Scores deduplicated, admissible candidates with `score` and assembles the result.
pub(crate) fn select_with<F>(config: &AcquisitionConfig, train: &Dataset, score: F) -> Result<AcquisitionResult>
where
    F: FnOnce(&Matrix) -> Result<(Vec<f64>, Vec<bool>)>,
{
    config.validate(train.d())?;
    let cand_unit = train.scale_x(&config.candidates)?;
    let excluded_mask = near_design(&cand_unit, train.scaled_x());
    let (unique, slot) = distinct_rows(&cand_unit);
    let admissible: Vec<usize> = unique.iter().copied().filter(|&j| !excluded_mask[j]).collect();
    let excluded = excluded_mask.iter().filter(|&&e| e).count();
    if admissible.is_empty() {
        return Err(Error::NoCandidates);
    }

    let (unique_scores, good) = score(&select_rows(&cand_unit, &admissible))?;
    let mut by_unique = vec![f64::INFINITY; unique.len()];
    let position: HashMap<usize, usize> = admissible.iter().enumerate().map(|(k, &j)| (j, k)).collect();
    for (u, &j) in unique.iter().enumerate() {
        if let Some(&k) = position.get(&j) {
            by_unique[u] = if good[k] { unique_scores[k] } else { f64::INFINITY };
        }
    }
    let scores: Vec<f64> = slot
        .iter()
        .zip(&excluded_mask)
        .map(|(&u, &ex)| if ex { f64::INFINITY } else { by_unique[u] })
        .collect();
    let failed = slot
        .iter()
        .zip(&excluded_mask)
        .filter(|(&u, &ex)| !ex && !by_unique[u].is_finite())
        .count();
    let selected_index = argmin(&scores).ok_or(Error::NoCandidates)?;
    Ok(AcquisitionResult {
        selected_point: config.candidates.row(selected_index).iter().copied().collect(),
        scores,
        selected_index,
        excluded,
        failed,
    })
}

/// Scores every candidate and returns the ALC minimizer.
pub fn select_next(chain: &Chain, config: &AcquisitionConfig, train: &Dataset) -> Result<AcquisitionResult> {
    let ref_unit = train.scale_x(&config.reference)?;
    select_with(config, train, |cand| {
        score_unit_candidates(
            chain,
            train,
            cand,
            &ref_unit,
            config.use_fast_update,
            config.latent_mapping,
            config.seed,
        )
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    #[default]
    Alc,
    /// Uniform choice among admissible candidates (baseline).
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SurrogateKind {
    #[default]
    Deep,
    Shallow,
    Indep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignLoopConfig {
    pub steps: usize,
    pub sampler: SamplerConfig,
    pub model: SurrogateKind,
    /// Latent width override for the deep surrogate.
    pub latent_dim: Option<usize>,
    pub strategy: Strategy,
    pub acquisition: AcquisitionConfig,
    /// Per-step chain and acquisition seeds are derived from this.
    pub seed: u64,
}

/// One acquisition step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub point: Vec<f64>,
    pub output: Vec<f64>,
    /// ALC score of the chosen point (for random steps too).
    pub score: f64,
    pub seconds: f64,
    /// Metrics of the surrogate fitted at this step, before the new point is added.
    pub metrics: Option<MetricReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignOutcome {
    pub data: Dataset,
    pub steps: Vec<StepRecord>,
}

/// Seed for step `k` derived from a base seed.
pub fn step_seed(base: u64, k: usize) -> u64 {
    base.wrapping_add((k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

enum Fitted {
    Chain(Chain),
    Indep(IndepGpModel),
}

fn fit_surrogate(data: &Dataset, sampler: &SamplerConfig, config: &DesignLoopConfig) -> Result<Fitted> {
    Ok(match config.model {
        SurrogateKind::Deep => {
            let model = ModelSpec {
                latent_dim: config.latent_dim,
                ..ModelSpec::default()
            };
            Fitted::Chain(run_chain(data, sampler, &model)?)
        }
        SurrogateKind::Shallow => Fitted::Chain(run_chain(data, sampler, &ModelSpec::shallow())?),
        SurrogateKind::Indep => Fitted::Indep(fit_indep(data, sampler, &ModelSpec::default().priors)?),
    })
}

/// Picks the next point (and its ALC score) under the configured strategy.
fn choose(fitted: &Fitted, data: &Dataset, config: &DesignLoopConfig, seed: u64) -> Result<(Vec<f64>, f64)> {
    let acq = AcquisitionConfig {
        seed,
        ..config.acquisition.clone()
    };
    let score_with = |acq: &AcquisitionConfig| match fitted {
        Fitted::Chain(chain) => select_next(chain, acq, data),
        Fitted::Indep(model) => alc_indep(model, acq),
    };
    match config.strategy {
        Strategy::Alc => {
            let res = score_with(&acq)?;
            let score = res.scores[res.selected_index];
            Ok((res.selected_point, score))
        }
        Strategy::Random => {
            let point = random_admissible(&acq, data, seed)?;
            let single = AcquisitionConfig {
                candidates: Matrix::from_row_slice(1, point.len(), &point),
                ..acq
            };
            let score = score_with(&single)?.scores[0];
            Ok((point, score))
        }
    }
}

/// The point the first step of `design_loop` would acquire, without running the simulator.
pub fn suggest_next(train: &Dataset, config: &DesignLoopConfig) -> Result<(Vec<f64>, f64)> {
    let seed = step_seed(config.seed, 1);
    let sampler = SamplerConfig {
        seed,
        ..config.sampler.clone()
    };
    let fitted = fit_surrogate(train, &sampler, config)?;
    choose(&fitted, train, config, seed)
}

/// Sequential design: fit, select, evaluate the simulator, append; `steps` times.
/// `on_step` sees the augmented data after every step (e.g. to persist it),
/// so a simulator failure leaves the partial design with the caller.
pub fn design_loop<S, F>(
    mut simulator: S,
    train: &Dataset,
    config: &DesignLoopConfig,
    test: Option<(&Matrix, &Matrix)>,
    mut on_step: F,
) -> Result<DesignOutcome>
where
    S: FnMut(&[f64]) -> Result<Vec<f64>>,
    F: FnMut(&Dataset, &StepRecord) -> Result<()>,
{
    let mut data = train.clone();
    let mut records = Vec::with_capacity(config.steps);
    for step in 1..=config.steps {
        let started = Instant::now();
        let seed = step_seed(config.seed, step);
        let sampler = SamplerConfig {
            seed,
            ..config.sampler.clone()
        };
        let fitted = fit_surrogate(&data, &sampler, config)?;
        let (point, score) = choose(&fitted, &data, config, seed)?;
        let metrics = match test {
            Some((x_test, y_test)) => {
                let pred = match &fitted {
                    Fitted::Chain(chain) => predict(
                        chain,
                        x_test,
                        &data,
                        &PredictConfig {
                            seed,
                            ..PredictConfig::default()
                        },
                    )?,
                    Fitted::Indep(model) => model.predict(x_test)?,
                };
                Some(metrics::evaluate(&pred, y_test, 0.0)?)
            }
            None => None,
        };
        let output = simulator(&point).map_err(|e| match e {
            Error::Simulator(msg) => Error::Simulator(format!("step {step}: {msg}")),
            other => Error::Simulator(format!("step {step}: {other}")),
        })?;
        data = data.append(&point, &output)?;
        let record = StepRecord {
            step,
            point,
            output,
            score,
            seconds: started.elapsed().as_secs_f64(),
            metrics,
        };
        on_step(&data, &record)?;
        records.push(record);
    }
    Ok(DesignOutcome { data, steps: records })
}

/// Uniform draw among candidates that do not duplicate a design row.
pub fn random_admissible(config: &AcquisitionConfig, train: &Dataset, seed: u64) -> Result<Vec<f64>> {
    config.validate(train.d())?;
    let cand_unit = train.scale_x(&config.candidates)?;
    let mask = near_design(&cand_unit, train.scaled_x());
    let admissible: Vec<usize> = (0..mask.len()).filter(|&j| !mask[j]).collect();
    if admissible.is_empty() {
        return Err(Error::NoCandidates);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let j = admissible[rng.random_range(0..admissible.len())];
    Ok(config.candidates.row(j).iter().copied().collect())
}
