// Closed-loop sequential design on the three-output Branin function:
// each step refits the deep model and acquires the grid point with the
// smallest expected reference-averaged residual variance (ALC).
//
// cargo run --release --example sequential_design

use deepicm::acquisition::{design_loop, AcquisitionConfig, DesignLoopConfig, Strategy, SurrogateKind};
use deepicm::bench::{evaluate_benchmark, Benchmark};
use deepicm::data::Dataset;
use deepicm::doe::{grid, maximin_lhd, rescale, DEFAULT_LHD_ITERS};
use deepicm::linalg::Matrix;
use deepicm::sampler::SamplerConfig;

pub fn run() -> deepicm::Result<()> {
    let spec = Benchmark::Branin.spec();
    let (lower, upper) = (spec.lower(), spec.upper());

    let start = rescale(&maximin_lhd(20, 2, DEFAULT_LHD_ITERS, 3)?, &lower, &upper)?;
    let y = evaluate_benchmark(Benchmark::Branin, &start)?;
    let data = Dataset::with_bounds(start, y, spec.domain.clone())?;

    // Candidates and reference points share one 12 x 12 grid over the domain.
    let candidates = rescale(&grid(12, 2)?, &lower, &upper)?;
    let config = DesignLoopConfig {
        steps: 4,
        sampler: SamplerConfig {
            iterations: 1000,
            burn_in: 400,
            thinning: 4,
            ..SamplerConfig::default()
        },
        model: SurrogateKind::Deep,
        latent_dim: None,
        strategy: Strategy::Alc,
        acquisition: AcquisitionConfig::new(candidates.clone(), candidates),
        seed: 3,
    };

    let simulator = |x: &[f64]| -> deepicm::Result<Vec<f64>> {
        let y = evaluate_benchmark(Benchmark::Branin, &Matrix::from_row_slice(1, 2, x))?;
        Ok(y.row(0).iter().copied().collect())
    };
    let outcome = design_loop(simulator, &data, &config, None, |current, step| {
        println!(
            "step {}: x = ({:>7.3}, {:>7.3})  ALC score {:.3e}  n = {}",
            step.step,
            step.point[0],
            step.point[1],
            step.score,
            current.n()
        );
        Ok(())
    })?;
    println!("final design has {} points", outcome.data.n());
    Ok(())
}

#[allow(dead_code)]
fn main() -> deepicm::Result<()> {
    run()
}
