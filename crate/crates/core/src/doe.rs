//! Design-of-experiments generators on the unit hypercube.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Largest full-factorial grid `grid` will build.
pub const MAX_GRID_POINTS: usize = 1_000_000;

/// Default number of swap proposals for maximin optimization.
pub const DEFAULT_LHD_ITERS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignKind {
    MaximinLhd,
    Grid,
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub points: Matrix,
    pub kind: DesignKind,
    pub seed: u64,
}

impl Design {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }
}

fn sq_dist(points: &Matrix, a: usize, b: usize) -> f64 {
    (0..points.ncols())
        .map(|c| (points[(a, c)] - points[(b, c)]).powi(2))
        .sum()
}

/// Smallest squared distance between two distinct rows (`inf` for fewer than two rows).
pub fn min_sq_distance(points: &Matrix) -> f64 {
    let n = points.nrows();
    let mut best = f64::INFINITY;
    for a in 0..n {
        for b in a + 1..n {
            best = best.min(sq_dist(points, a, b));
        }
    }
    best
}

/// Random Latin hypercube with stratum midpoints `(k + 0.5) / n`.
pub fn random_lhd<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Matrix {
    let mut points = Matrix::zeros(n, d);
    let mut perm: Vec<usize> = (0..n).collect();
    for c in 0..d {
        perm.shuffle(rng);
        for (r, &k) in perm.iter().enumerate() {
            points[(r, c)] = (k as f64 + 0.5) / n as f64;
        }
    }
    points
}

/// Pairwise squared distances with per-row minima, updated incrementally under swaps.
struct DistanceBook {
    dist: Vec<f64>,
    row_min: Vec<f64>,
    n: usize,
}

impl DistanceBook {
    fn new(points: &Matrix) -> Self {
        let n = points.nrows();
        let mut dist = vec![0.0; n * n];
        for a in 0..n {
            for b in a + 1..n {
                let v = sq_dist(points, a, b);
                dist[a * n + b] = v;
                dist[b * n + a] = v;
            }
        }
        let mut book = Self {
            dist,
            row_min: vec![f64::INFINITY; n],
            n,
        };
        for a in 0..n {
            book.refresh_row(a);
        }
        book
    }

    fn refresh_row(&mut self, a: usize) {
        let n = self.n;
        self.row_min[a] = (0..n)
            .filter(|&b| b != a)
            .map(|b| self.dist[a * n + b])
            .fold(f64::INFINITY, f64::min);
    }

    fn global_min(&self) -> f64 {
        self.row_min.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Commits new distances from rows `i` and `j` to every other row.
    fn commit(&mut self, i: usize, j: usize, from_i: &[f64], from_j: &[f64]) {
        let n = self.n;
        for k in 0..n {
            if k == i || k == j {
                continue;
            }
            let (old_i, old_j) = (self.dist[k * n + i], self.dist[k * n + j]);
            self.dist[k * n + i] = from_i[k];
            self.dist[i * n + k] = from_i[k];
            self.dist[k * n + j] = from_j[k];
            self.dist[j * n + k] = from_j[k];
            if self.row_min[k] == old_i || self.row_min[k] == old_j {
                self.refresh_row(k);
            } else {
                self.row_min[k] = self.row_min[k].min(from_i[k]).min(from_j[k]);
            }
        }
        self.refresh_row(i);
        self.refresh_row(j);
    }
}

/// Maximin Latin hypercube: a random LHD improved by single-dimension
/// coordinate swaps that never decrease the minimum pairwise distance.
pub fn maximin_lhd(n: usize, d: usize, optimize_iters: usize, seed: u64) -> Result<Design> {
    if n == 0 || d == 0 {
        return Err(Error::Domain(format!("design needs n >= 1 and d >= 1 (got {n}, {d})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = random_lhd(n, d, &mut rng);
    if n >= 3 {
        optimize_maximin(&mut points, optimize_iters, &mut rng);
    }
    Ok(Design {
        points,
        kind: DesignKind::MaximinLhd,
        seed,
    })
}

fn optimize_maximin<R: Rng + ?Sized>(points: &mut Matrix, iters: usize, rng: &mut R) {
    let (n, d) = (points.nrows(), points.ncols());
    let mut book = DistanceBook::new(points);
    let mut current = book.global_min();
    let mut from_i = vec![0.0; n];
    let mut from_j = vec![0.0; n];
    for _ in 0..iters {
        let c = rng.random_range(0..d);
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        points.swap((i, c), (j, c));
        // Pairs that avoid rows i and j are unchanged and already >= current,
        // so the swap keeps the minimum iff every new distance does.
        let mut keeps = true;
        for k in 0..n {
            if k == i || k == j {
                continue;
            }
            from_i[k] = sq_dist(points, i, k);
            from_j[k] = sq_dist(points, j, k);
            if from_i[k] < current || from_j[k] < current {
                keeps = false;
                break;
            }
        }
        if keeps {
            book.commit(i, j, &from_i, &from_j);
            current = book.global_min();
        } else {
            points.swap((i, c), (j, c));
        }
    }
}

/// Full factorial grid with endpoints; the first coordinate varies fastest.
pub fn grid(points_per_dim: usize, d: usize) -> Result<Design> {
    if points_per_dim < 2 || d == 0 {
        return Err(Error::Domain(format!(
            "grid needs at least 2 points per dimension and d >= 1 (got {points_per_dim}, {d})"
        )));
    }
    let total = u32::try_from(d)
        .ok()
        .and_then(|d| points_per_dim.checked_pow(d))
        .filter(|&t| t <= MAX_GRID_POINTS)
        .ok_or_else(|| {
            Error::Domain(format!(
                "grid of {points_per_dim}^{d} points exceeds {MAX_GRID_POINTS}"
            ))
        })?;
    let step = 1.0 / (points_per_dim - 1) as f64;
    let mut points = Matrix::zeros(total, d);
    for r in 0..total {
        let mut rest = r;
        for c in 0..d {
            let k = rest % points_per_dim;
            rest /= points_per_dim;
            points[(r, c)] = if k == points_per_dim - 1 { 1.0 } else { k as f64 * step };
        }
    }
    Ok(Design {
        points,
        kind: DesignKind::Grid,
        seed: 0,
    })
}

/// Independent uniform points in the unit hypercube.
pub fn uniform_random(n: usize, d: usize, seed: u64) -> Design {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = Matrix::from_fn(n, d, |_, _| rng.random::<f64>());
    Design {
        points,
        kind: DesignKind::UniformRandom,
        seed,
    }
}

/// Affine map of unit coordinates onto `[lower, upper]` per dimension.
pub fn rescale(design: &Design, lower: &[f64], upper: &[f64]) -> Result<Matrix> {
    let d = design.dim();
    if lower.len() != d || upper.len() != d {
        return Err(Error::Shape(format!(
            "bounds have {} and {} entries for a {d}-dimensional design",
            lower.len(),
            upper.len()
        )));
    }
    if let Some(c) = (0..d).find(|&c| !(lower[c] < upper[c])) {
        return Err(Error::Domain(format!(
            "dimension {c}: lower bound {} is not below upper bound {}",
            lower[c], upper[c]
        )));
    }
    Ok(Matrix::from_fn(design.len(), d, |r, c| {
        let u = design.points[(r, c)];
        if u == 1.0 {
            upper[c]
        } else {
            lower[c] + u * (upper[c] - lower[c])
        }
    }))
}
