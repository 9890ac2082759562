// Space-filling designs: a maximin Latin hypercube (and how much the
// hill climb improves on a random one), a full grid, and uniform draws.
//
// cargo run --example designs

use deepicm::doe::{grid, maximin_lhd, min_sq_distance, rescale, uniform_random};

pub fn run() -> deepicm::Result<()> {
    let unoptimized = maximin_lhd(10, 2, 0, 4)?;
    let optimized = maximin_lhd(10, 2, 2000, 4)?;
    println!(
        "10-point LHD in 2-d: min distance {:.4} before, {:.4} after 2000 swap proposals",
        min_sq_distance(&unoptimized.points).sqrt(),
        min_sq_distance(&optimized.points).sqrt()
    );
    for row in optimized.points.row_iter() {
        println!("  ({:.3}, {:.3})", row[0], row[1]);
    }

    let g = grid(3, 2)?;
    println!("3 x 3 grid on the Branin domain (first coordinate fastest):");
    for row in rescale(&g, &[-5.0, 0.0], &[10.0, 15.0])?.row_iter() {
        println!("  ({:>5.1}, {:>5.1})", row[0], row[1]);
    }

    let u = uniform_random(5, 3, 4);
    println!("5 uniform points in [0, 1]^3, min distance {:.4}", min_sq_distance(&u.points).sqrt());
    Ok(())
}

#[allow(dead_code)]
fn main() -> deepicm::Result<()> {
    run()
}
