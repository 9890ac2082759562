// Driving an external simulator: ask for one point at a time with
// `suggest_next`, run the simulator yourself, append, repeat.
//
// cargo run --release --example suggest_point

use deepicm::acquisition::{suggest_next, AcquisitionConfig, DesignLoopConfig, Strategy, SurrogateKind};
use deepicm::data::Dataset;
use deepicm::linalg::Matrix;
use deepicm::sampler::SamplerConfig;

/// Stand-in for an expensive code with two correlated outputs.
fn simulator(x: f64) -> Vec<f64> {
    let a = (5.0 * x).sin() + x;
    vec![a, a * a - 0.5 * x]
}

pub fn run() -> deepicm::Result<()> {
    let xs = [0.0, 0.3, 0.7, 1.0];
    let x = Matrix::from_fn(xs.len(), 1, |i, _| xs[i]);
    let y = Matrix::from_fn(xs.len(), 2, |i, q| simulator(xs[i])[q]);
    let mut data = Dataset::with_bounds(x, y, vec![(0.0, 1.0)])?;

    let candidates = Matrix::from_fn(51, 1, |i, _| i as f64 / 50.0);
    for round in 1..=3u64 {
        let config = DesignLoopConfig {
            steps: 1,
            sampler: SamplerConfig {
                iterations: 800,
                burn_in: 300,
                thinning: 5,
                ..SamplerConfig::default()
            },
            model: SurrogateKind::Shallow,
            latent_dim: None,
            strategy: Strategy::Alc,
            acquisition: AcquisitionConfig::new(candidates.clone(), candidates.clone()),
            seed: round,
        };
        let (point, score) = suggest_next(&data, &config)?;
        let output = simulator(point[0]);
        println!("round {round}: run the simulator at x = {:.2} (ALC {score:.3e}) -> {output:.3?}", point[0]);
        data = data.append(&point, &output)?;
    }
    println!("design now has {} runs", data.n());
    Ok(())
}

#[allow(dead_code)]
fn main() -> deepicm::Result<()> {
    run()
}
