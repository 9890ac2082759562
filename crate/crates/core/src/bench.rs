//! Synthetic multi-output test functions.
//!
//! All functions are evaluated in their natural (unscaled) domains.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Benchmark {
    Forrester,
    Convolved,
    DampedWave,
    Perdikaris,
    Branin,
    Mop2,
    Currin,
    Park,
}

impl Benchmark {
    pub const ALL: [Benchmark; 8] = [
        Benchmark::Forrester,
        Benchmark::Convolved,
        Benchmark::DampedWave,
        Benchmark::Perdikaris,
        Benchmark::Branin,
        Benchmark::Mop2,
        Benchmark::Currin,
        Benchmark::Park,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Forrester => "forrester",
            Benchmark::Convolved => "convolved",
            Benchmark::DampedWave => "dampedwave",
            Benchmark::Perdikaris => "perdikaris",
            Benchmark::Branin => "branin",
            Benchmark::Mop2 => "mop2",
            Benchmark::Currin => "currin",
            Benchmark::Park => "park",
        }
    }

    pub fn spec(self) -> BenchSpec {
        let (d, q, n_train, n_test) = match self {
            Benchmark::Forrester => (1, 2, 9, 100),
            Benchmark::Convolved => (1, 3, 10, 100),
            Benchmark::DampedWave => (1, 3, 15, 100),
            Benchmark::Perdikaris => (1, 2, 12, 100),
            Benchmark::Branin => (2, 3, 30, 500),
            Benchmark::Mop2 => (2, 2, 30, 500),
            Benchmark::Currin => (2, 2, 30, 500),
            Benchmark::Park => (4, 2, 60, 1000),
        };
        let domain = match self {
            Benchmark::Convolved => vec![(0.0, 10.0)],
            Benchmark::Branin => vec![(-5.0, 10.0), (0.0, 15.0)],
            Benchmark::Mop2 => vec![(-2.0, 2.0); 2],
            _ => vec![(0.0, 1.0); d],
        };
        BenchSpec {
            benchmark: self,
            d,
            q,
            domain,
            default_n_train: n_train,
            default_n_test: n_test,
        }
    }

    /// Outputs at one input point, written to `out` (length Q).
    fn eval_point(self, x: &[f64], out: &mut [f64]) {
        match self {
            Benchmark::Forrester => {
                let x = x[0];
                let f1 = forrester_f1(x);
                out[0] = f1;
                out[1] = 0.5 * f1 + 10.0 * (x - 0.5) + 5.0;
            }
            Benchmark::Convolved => {
                let x = x[0];
                out[0] = 5.0 * (1.5 * x).sin();
                out[1] = 5.0 * x.sin() - 3.0;
                out[2] = x * x / 10.0 - 5.0;
            }
            Benchmark::DampedWave => {
                let x = x[0];
                let a = 10.0 * PI * x - 1.0;
                out[0] = 5.0 * (-10.0 * x).exp() * (a.cos() + a.sin()) - 0.2;
                out[1] = 6.0 * (-5.0 * x).exp() * (a.cos() + (5.0 * PI * x - 1.0).sin()) - 0.1;
                out[2] = 4.0 * (-15.0 * x).exp()
                    * ((5.0 * PI * x - 1.0).cos() + (15.0 * PI * x - 1.0).sin())
                    - 0.3;
            }
            Benchmark::Perdikaris => {
                let x = x[0];
                let f1 = (8.0 * PI * x).sin();
                out[0] = f1;
                out[1] = (x - 2f64.sqrt()) * f1 * f1;
            }
            Benchmark::Branin => {
                let (x1, x2) = (x[0], x[1]);
                out[0] = branin_f2(1.2 * (x1 + 2.0), 1.2 * (x2 + 2.0)) - 3.0 * x2 + 1.0;
                out[1] = branin_f2(x1, x2);
                out[2] = branin_f3(x1, x2);
            }
            Benchmark::Mop2 => {
                let plus: f64 = x.iter().map(|v| (v - FRAC_1_SQRT_2).powi(2)).sum();
                let minus: f64 = x.iter().map(|v| (v + FRAC_1_SQRT_2).powi(2)).sum();
                out[0] = 1.0 - (-plus).exp();
                out[1] = 1.0 - (-minus).exp();
            }
            Benchmark::Currin => {
                let (x1, x2) = (x[0], x[1]);
                let h = 1.0 / 20.0;
                let lo = (x2 - h).max(0.0);
                out[0] = currin_f1(x1, x2);
                out[1] = 0.25 * (currin_f1(x1 + h, x2 + h) + currin_f1(x1 + h, lo))
                    + 0.25 * (currin_f1(x1 - h, x2 + h) + currin_f1(x1 - h, lo));
            }
            Benchmark::Park => {
                let x1 = x[0].max(PARK_X1_FLOOR);
                let (x2, x3, x4) = (x[1], x[2], x[3]);
                let f1 = x1 / 2.0 * (((1.0 + (x2 + x3 * x3) * x4) / (x1 * x1)).sqrt() - 1.0)
                    + (x1 + 3.0 * x4) * (1.0 + x3.sin()).exp();
                out[0] = f1;
                out[1] = (1.0 + x1.sin()) / 10.0 * f1 - 2.0 * x1 + x2 * x2 + x3 * x3 + 0.5;
            }
        }
    }
}

/// Lower clamp on Park's first input, which appears as `x1^-2`.
pub const PARK_X1_FLOOR: f64 = 1e-6;

fn forrester_f1(x: f64) -> f64 {
    (6.0 * x - 2.0).powi(2) * (12.0 * x - 4.0).sin()
}

fn branin_f3(x1: f64, x2: f64) -> f64 {
    let inner = -1.275 * x1 * x1 / (PI * PI) + 5.0 * x1 / PI + x2 - 6.0;
    inner * inner + (10.0 - 5.0 / (4.0 * PI)) * x1.cos() + 10.0
}

fn branin_f2(x1: f64, x2: f64) -> f64 {
    10.0 * branin_f3(x1, x2).sqrt() + 2.0 * (x1 - 0.5) - 3.0 * (3.0 * x2 - 1.0) - 1.0
}

fn currin_f1(x1: f64, x2: f64) -> f64 {
    // The x2 -> 0 limit of the damping factor is 1.
    let damping = if x2 == 0.0 { 1.0 } else { 1.0 - (-1.0 / (2.0 * x2)).exp() };
    let num = ((2300.0 * x1 + 1900.0) * x1 + 2092.0) * x1 + 60.0;
    let den = ((100.0 * x1 + 500.0) * x1 + 4.0) * x1 + 20.0;
    damping * num / den
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace(['_', '-', ' '], "");
        Benchmark::ALL
            .into_iter()
            .find(|b| b.name() == key)
            .ok_or_else(|| Error::UnknownBenchmark(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSpec {
    pub benchmark: Benchmark,
    pub d: usize,
    pub q: usize,
    pub domain: Vec<(f64, f64)>,
    pub default_n_train: usize,
    pub default_n_test: usize,
}

impl BenchSpec {
    pub fn lower(&self) -> Vec<f64> {
        self.domain.iter().map(|b| b.0).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.domain.iter().map(|b| b.1).collect()
    }
}

/// Table row for a benchmark given by name.
pub fn spec(name: &str) -> Result<BenchSpec> {
    Ok(name.parse::<Benchmark>()?.spec())
}

/// Evaluates a benchmark given by name at the rows of `x` (m×d, natural domain).
pub fn evaluate(name: &str, x: &Matrix) -> Result<Matrix> {
    evaluate_benchmark(name.parse()?, x)
}

pub fn evaluate_benchmark(bench: Benchmark, x: &Matrix) -> Result<Matrix> {
    let spec = bench.spec();
    if x.ncols() != spec.d {
        return Err(Error::Shape(format!(
            "{bench} takes {} inputs, got {}",
            spec.d,
            x.ncols()
        )));
    }
    let mut out = Matrix::zeros(x.nrows(), spec.q);
    let mut point = vec![0.0; spec.d];
    let mut values = vec![0.0; spec.q];
    for r in 0..x.nrows() {
        for (c, &(lo, hi)) in spec.domain.iter().enumerate() {
            let v = x[(r, c)];
            let slack = 1e-12 * (hi - lo);
            if !(v >= lo - slack && v <= hi + slack) {
                return Err(Error::Domain(format!(
                    "{bench}: row {r} input {c} = {v} outside [{lo}, {hi}]"
                )));
            }
            point[c] = v;
        }
        bench.eval_point(&point, &mut values);
        for (q, &v) in values.iter().enumerate() {
            out[(r, q)] = v;
        }
    }
    Ok(out)
}
