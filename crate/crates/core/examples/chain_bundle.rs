// Save a fitted chain as a plain-text bundle directory, load it back and
// check that predictions from the loaded chain are bit-identical.
//
// cargo run --release --example chain_bundle

use deepicm::bench::evaluate;
use deepicm::bundle;
use deepicm::data::Dataset;
use deepicm::linalg::Matrix;
use deepicm::predict::{predict, PredictConfig};
use deepicm::sampler::{run_chain, ModelSpec, SamplerConfig};

pub fn run() -> deepicm::Result<()> {
    let x = Matrix::from_fn(8, 1, |i, _| i as f64 / 7.0);
    let y = evaluate("perdikaris", &x)?;
    let data = Dataset::with_bounds(x, y, vec![(0.0, 1.0)])?;
    let config = SamplerConfig {
        iterations: 600,
        burn_in: 200,
        thinning: 4,
        seed: 8,
        ..SamplerConfig::default()
    };
    let chain = run_chain(&data, &config, &ModelSpec::default())?;

    let dir = std::env::temp_dir().join(format!("deepicm-bundle-{}", std::process::id()));
    bundle::save(&chain, &data, &dir)?;
    let files = std::fs::read_dir(&dir)?.count();
    println!("wrote {} files to {}", files, dir.display());

    let loaded = bundle::load(&dir)?;
    let x_test = Matrix::from_fn(20, 1, |i, _| i as f64 / 19.0);
    let before = predict(&chain, &x_test, &data, &PredictConfig::default())?;
    let after = predict(&loaded.chain, &x_test, &loaded.data, &PredictConfig::default())?;
    println!("loaded {} samples; predictions identical: {}", loaded.chain.len(), before == after);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> deepicm::Result<()> {
    run()
}
