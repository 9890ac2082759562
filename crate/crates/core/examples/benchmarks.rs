// The eight synthetic multi-output test functions: their table sizes and a
// shallow-versus-deep comparison on one of them.
//
// cargo run --release --example benchmarks [name]

use deepicm::bench::{evaluate_benchmark, Benchmark};
use deepicm::data::Dataset;
use deepicm::doe::{maximin_lhd, rescale, DEFAULT_LHD_ITERS};
use deepicm::metrics;
use deepicm::predict::{predict, PredictConfig};
use deepicm::sampler::{run_chain, ModelSpec, SamplerConfig};

pub fn run(name: &str) -> deepicm::Result<()> {
    println!("{:<12} {:>2} {:>2} {:>7} {:>6}", "function", "d", "Q", "n_train", "n_test");
    for b in Benchmark::ALL {
        let s = b.spec();
        println!("{:<12} {:>2} {:>2} {:>7} {:>6}", b.name(), s.d, s.q, s.default_n_train, s.default_n_test);
    }

    let bench: Benchmark = name.parse()?;
    let spec = bench.spec();
    let (lower, upper) = (spec.lower(), spec.upper());
    let x = rescale(&maximin_lhd(spec.default_n_train, spec.d, DEFAULT_LHD_ITERS, 10)?, &lower, &upper)?;
    let y = evaluate_benchmark(bench, &x)?;
    let data = Dataset::with_bounds(x, y, spec.domain.clone())?;
    let x_test = rescale(&maximin_lhd(100, spec.d, DEFAULT_LHD_ITERS, 11)?, &lower, &upper)?;
    let y_test = evaluate_benchmark(bench, &x_test)?;

    let config = SamplerConfig {
        iterations: 1500,
        burn_in: 500,
        thinning: 2,
        seed: 10,
        ..SamplerConfig::default()
    };
    println!("\n{} with {} training points:", bench.name(), data.n());
    for (label, model) in [("shallow ICM", ModelSpec::shallow()), ("deep ICM", ModelSpec::default())] {
        let chain = run_chain(&data, &config, &model)?;
        let pred = predict(&chain, &x_test, &data, &PredictConfig::default())?;
        let report = metrics::evaluate(&pred, &y_test, 0.0)?;
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
        println!(
            "  {label:<12} RMSE [{}]  CRPS [{}]  log score {:.3}",
            fmt(&report.rmse),
            fmt(&report.crps),
            report.mv_score
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> deepicm::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "perdikaris".to_string());
    run(&name)
}
