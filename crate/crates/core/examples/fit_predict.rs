// Fit the deep model to the two-output Forrester function and predict on a
// dense grid, reporting the predictive mean, a 95% band and test metrics.
//
// cargo run --release --example fit_predict

use deepicm::bench::evaluate;
use deepicm::data::Dataset;
use deepicm::doe::{maximin_lhd, DEFAULT_LHD_ITERS};
use deepicm::linalg::Matrix;
use deepicm::metrics;
use deepicm::predict::{predict, PredictConfig};
use deepicm::sampler::{run_chain, ModelSpec, SamplerConfig};

pub fn run() -> deepicm::Result<()> {
    // Nine training points from a maximin Latin hypercube on [0, 1].
    let x = maximin_lhd(9, 1, DEFAULT_LHD_ITERS, 1)?.points;
    let y = evaluate("forrester", &x)?;
    let data = Dataset::with_bounds(x, y, vec![(0.0, 1.0)])?;

    let config = SamplerConfig {
        iterations: 2000,
        burn_in: 500,
        thinning: 2,
        seed: 1,
        ..SamplerConfig::default()
    };
    let chain = run_chain(&data, &config, &ModelSpec::default())?;
    println!(
        "{} posterior samples; acceptance theta_w {:.2}, theta_y {:.2}",
        chain.len(),
        chain.acceptance.theta_w.unwrap_or(f64::NAN),
        chain.acceptance.theta_y
    );

    let x_test = Matrix::from_fn(101, 1, |i, _| i as f64 / 100.0);
    let truth = evaluate("forrester", &x_test)?;
    let pred = predict(&chain, &x_test, &data, &PredictConfig::default())?;

    println!("{:>6} {:>10} {:>22} {:>10}", "x", "f1", "mean +/- 1.96 sd", "f2 mean");
    for i in (0..101).step_by(10) {
        let sd = pred.cov[i][(0, 0)].sqrt();
        println!(
            "{:>6.2} {:>10.4} {:>10.4} +/- {:<8.4} {:>10.4}",
            x_test[(i, 0)],
            truth[(i, 0)],
            pred.mean[(i, 0)],
            1.96 * sd,
            pred.mean[(i, 1)]
        );
    }

    let report = metrics::evaluate(&pred, &truth, 0.0)?;
    println!("RMSE {:?}", report.rmse);
    println!("CRPS {:?}", report.crps);
    println!("median multivariate log score {:.3}", report.mv_score);
    Ok(())
}

#[allow(dead_code)]
fn main() -> deepicm::Result<()> {
    run()
}
