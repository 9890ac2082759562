//! Training data, its scaling metadata, and the CSV dialect used on disk.
//!
//! Models never see natural units: inputs are mapped affinely onto the unit
//! hypercube using `x_bounds` and each output is standardized to zero mean
//! and unit variance.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Matrix,
    y: Matrix,
    x_bounds: Vec<(f64, f64)>,
    y_center: Vec<f64>,
    y_scale: Vec<f64>,
    scaled_x: Matrix,
    scaled_y: Matrix,
}

impl Dataset {
    /// Input bounds are taken from the per-column data range.
    pub fn new(x: Matrix, y: Matrix) -> Result<Self> {
        let bounds = (0..x.ncols())
            .map(|j| {
                let col = x.column(j);
                (col.min(), col.max())
            })
            .collect();
        Self::with_bounds(x, y, bounds)
    }

    pub fn with_bounds(x: Matrix, y: Matrix, x_bounds: Vec<(f64, f64)>) -> Result<Self> {
        let (center, scale) = standardization(&y)?;
        Self::from_parts(x, y, x_bounds, center, scale)
    }

    /// Rebuilds a dataset with explicit scaling metadata (used when loading a chain).
    pub fn from_parts(
        x: Matrix,
        y: Matrix,
        x_bounds: Vec<(f64, f64)>,
        y_center: Vec<f64>,
        y_scale: Vec<f64>,
    ) -> Result<Self> {
        ensure_finite(&x, "input matrix")?;
        ensure_finite(&y, "output matrix")?;
        if x.nrows() != y.nrows() {
            return Err(Error::Shape(format!(
                "{} input rows but {} output rows",
                x.nrows(),
                y.nrows()
            )));
        }
        if x.nrows() == 0 || x.ncols() == 0 || y.ncols() == 0 {
            return Err(Error::Data("dataset must be non-empty".into()));
        }
        if x_bounds.len() != x.ncols() {
            return Err(Error::Shape(format!(
                "{} bounds for {} input columns",
                x_bounds.len(),
                x.ncols()
            )));
        }
        for (j, &(lo, hi)) in x_bounds.iter().enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Domain(format!(
                    "input column {j} has degenerate bounds [{lo}, {hi}]"
                )));
            }
            let tol = 1e-12 * (hi - lo).max(1.0);
            if x.column(j).iter().any(|&v| v < lo - tol || v > hi + tol) {
                return Err(Error::Domain(format!(
                    "input column {j} leaves its bounds [{lo}, {hi}]"
                )));
            }
        }
        if y_center.len() != y.ncols() || y_scale.len() != y.ncols() {
            return Err(Error::Shape("scaling metadata does not match outputs".into()));
        }
        if y_scale.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Domain("output scales must be positive".into()));
        }
        let scaled_x = scale_inputs(&x, &x_bounds);
        let scaled_y = Matrix::from_fn(y.nrows(), y.ncols(), |i, q| {
            (y[(i, q)] - y_center[q]) / y_scale[q]
        });
        Ok(Self {
            x,
            y,
            x_bounds,
            y_center,
            y_scale,
            scaled_x,
            scaled_y,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.y.ncols()
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &Matrix {
        &self.y
    }

    pub fn x_bounds(&self) -> &[(f64, f64)] {
        &self.x_bounds
    }

    pub fn y_center(&self) -> &[f64] {
        &self.y_center
    }

    pub fn y_scale(&self) -> &[f64] {
        &self.y_scale
    }

    /// Inputs on the unit hypercube.
    pub fn scaled_x(&self) -> &Matrix {
        &self.scaled_x
    }

    /// Standardized outputs.
    pub fn scaled_y(&self) -> &Matrix {
        &self.scaled_y
    }

    /// Maps natural-unit inputs onto the unit scale of this dataset.
    pub fn scale_x(&self, x: &Matrix) -> Result<Matrix> {
        if x.ncols() != self.d() {
            return Err(Error::Shape(format!(
                "expected {} input columns, got {}",
                self.d(),
                x.ncols()
            )));
        }
        Ok(scale_inputs(x, &self.x_bounds))
    }

    pub fn unscale_x(&self, unit: &Matrix) -> Matrix {
        Matrix::from_fn(unit.nrows(), unit.ncols(), |i, j| {
            let (lo, hi) = self.x_bounds[j];
            lo + unit[(i, j)] * (hi - lo)
        })
    }

    pub fn scale_y(&self, y: &Matrix) -> Matrix {
        Matrix::from_fn(y.nrows(), y.ncols(), |i, q| {
            (y[(i, q)] - self.y_center[q]) / self.y_scale[q]
        })
    }

    pub fn unscale_y(&self, y: &Matrix) -> Matrix {
        Matrix::from_fn(y.nrows(), y.ncols(), |i, q| {
            y[(i, q)] * self.y_scale[q] + self.y_center[q]
        })
    }

    /// Converts a standardized output covariance to natural units.
    pub fn unscale_cov(&self, cov: &Matrix) -> Matrix {
        Matrix::from_fn(cov.nrows(), cov.ncols(), |a, b| {
            cov[(a, b)] * self.y_scale[a] * self.y_scale[b]
        })
    }

    /// Appends one observation; input bounds are kept and output scaling is refreshed.
    pub fn append(&self, x_row: &[f64], y_row: &[f64]) -> Result<Self> {
        if x_row.len() != self.d() || y_row.len() != self.q() {
            return Err(Error::Shape("appended row has the wrong width".into()));
        }
        let n = self.n();
        let mut x = self.x.clone().insert_row(n, 0.0);
        let mut y = self.y.clone().insert_row(n, 0.0);
        for (j, &v) in x_row.iter().enumerate() {
            x[(n, j)] = v;
        }
        for (q, &v) in y_row.iter().enumerate() {
            y[(n, q)] = v;
        }
        Self::with_bounds(x, y, self.x_bounds.clone())
    }
}

fn scale_inputs(x: &Matrix, bounds: &[(f64, f64)]) -> Matrix {
    Matrix::from_fn(x.nrows(), x.ncols(), |i, j| {
        let (lo, hi) = bounds[j];
        (x[(i, j)] - lo) / (hi - lo)
    })
}

/// Column means and sample standard deviations; a constant column gets scale 1.
fn standardization(y: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
    ensure_finite(y, "output matrix")?;
    let n = y.nrows();
    if n == 0 {
        return Err(Error::Data("no observations".into()));
    }
    let mut center = Vec::with_capacity(y.ncols());
    let mut scale = Vec::with_capacity(y.ncols());
    for col in y.column_iter() {
        let mean = col.mean();
        let var = if n > 1 {
            col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        center.push(mean);
        scale.push(if var > 0.0 { var.sqrt() } else { 1.0 });
    }
    Ok((center, scale))
}

/// Formats a float with 17 significant digits (exact `f64` round trip).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// A header plus numeric rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub data: Matrix,
}

pub fn read_csv(path: &Path) -> Result<Table> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    parse_csv(file)
}

/// Comma separated, header row required, no NaN or infinities.
pub fn parse_csv<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Parse {
            line: 1,
            message: "missing header row".into(),
        });
    }
    let width = header.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(Error::Parse {
                line,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("`{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!("non-finite value `{field}` on line {line}")));
            }
            values.push(v);
        }
        rows += 1;
    }
    Ok(Table {
        header,
        data: Matrix::from_row_slice(rows, width, &values),
    })
}

pub fn write_csv(path: &Path, header: &[String], data: &Matrix) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    render_csv(&mut file, header, data)?;
    file.flush()?;
    Ok(())
}

pub fn render_csv<W: Write>(out: &mut W, header: &[String], data: &Matrix) -> Result<()> {
    writeln!(out, "{}", header.join(","))?;
    for i in 0..data.nrows() {
        let row: Vec<String> = (0..data.ncols()).map(|j| fmt_f64(data[(i, j)])).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// `prefix1, prefix2, ...`
pub fn numbered_header(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("{prefix}{i}")).collect()
}
