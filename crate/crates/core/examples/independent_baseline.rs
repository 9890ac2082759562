// The independent-GP comparator: one lengthscale per output. Its predictive
// mean matches the shallow ICM at equal lengthscales, while its ALC
// criterion multiplies per-output residual variances.
//
// cargo run --release --example independent_baseline

use deepicm::acquisition::{select_next, AcquisitionConfig};
use deepicm::baseline::{alc_indep, fit_indep, IndepGpModel};
use deepicm::bench::evaluate;
use deepicm::data::Dataset;
use deepicm::doe::{maximin_lhd, DEFAULT_LHD_ITERS};
use deepicm::icm::PriorSpec;
use deepicm::linalg::Matrix;
use deepicm::predict::{predict, PredictConfig};
use deepicm::sampler::{run_chain, ModelSpec, SamplerConfig};

pub fn run() -> deepicm::Result<()> {
    let x = maximin_lhd(9, 1, DEFAULT_LHD_ITERS, 2)?.points;
    let y = evaluate("forrester", &x)?;
    let data = Dataset::with_bounds(x, y, vec![(0.0, 1.0)])?;
    let config = SamplerConfig {
        iterations: 1500,
        burn_in: 500,
        thinning: 2,
        seed: 2,
        ..SamplerConfig::default()
    };

    let indep = fit_indep(&data, &config, &PriorSpec::default())?;
    println!("per-output lengthscales {:?}", indep.thetas());

    // One posterior sample of the shallow ICM, and the independent GP at its lengthscale.
    let mut shallow = run_chain(&data, &config, &ModelSpec::shallow())?;
    shallow.samples.truncate(1);
    let theta = shallow.samples[0].theta_y;
    let same_theta = IndepGpModel::new(data.clone(), vec![theta; data.q()], config.jitter)?;
    let x_test = Matrix::from_fn(50, 1, |i, _| (i as f64 + 0.5) / 50.0);
    let a = predict(&shallow, &x_test, &data, &PredictConfig::default())?;
    let b = same_theta.predict(&x_test)?;
    println!(
        "shallow ICM vs independent GP at theta = {theta:.4}: max mean difference {:.2e}",
        (&a.mean - &b.mean).amax()
    );

    let grid = Matrix::from_fn(41, 1, |i, _| i as f64 / 40.0);
    let acq = AcquisitionConfig::new(grid.clone(), grid);
    let by_indep = alc_indep(&indep, &acq)?;
    let deep = run_chain(&data, &config, &ModelSpec::default())?;
    let by_deep = select_next(&deep, &acq, &data)?;
    println!(
        "next point: independent ALC x = {:.3}, deep ICM ALC x = {:.3}",
        by_indep.selected_point[0], by_deep.selected_point[0]
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> deepicm::Result<()> {
    run()
}
