//! Small statistical helpers shared by the estimators, analysis and trainer.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// A measured quantity with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    /// Sample mean of `xs` with its standard error.
    pub fn of_mean(xs: &[f64]) -> Self {
        let (value, se) = mean_se(xs);
        Self { value, se }
    }
}

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn sum(xs: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for &x in xs {
        acc.add(x);
    }
    acc.value()
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    sum(xs) / xs.len() as f64
}

/// Unbiased sample variance (n - 1 denominator).
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let mut acc = CompensatedSum::new();
    for &x in xs {
        acc.add((x - m) * (x - m));
    }
    acc.value() / (n - 1) as f64
}

/// Standard error of the sample mean.
pub fn standard_error(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    (sample_variance(xs) / xs.len() as f64).sqrt()
}

/// Mean and standard error in one pass over the data.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    (mean(xs), standard_error(xs))
}

/// Componentwise mean and standard error of a set of equal-length vectors.
pub fn vector_mean_se(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let dim = rows.first().map_or(0, Vec::len);
    let mut means = Vec::with_capacity(dim);
    let mut ses = Vec::with_capacity(dim);
    let mut column = vec![0.0; rows.len()];
    for j in 0..dim {
        for (c, row) in column.iter_mut().zip(rows) {
            *c = row[j];
        }
        means.push(mean(&column));
        ses.push(standard_error(&column));
    }
    (means, ses)
}

/// Upper quantile `t_{p, df}` of Student's t distribution.
pub fn student_t_quantile(p: f64, df: f64) -> Result<f64> {
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::argument(format!("student t with df = {df}: {e}")))?;
    Ok(dist.inverse_cdf(p))
}

/// Ordinary least squares `y ≈ c0 + c1 x`; returns `(c0, c1, r_squared)`.
///
/// Fails when the design is rank deficient (all `x` equal). A perfectly flat
/// response has zero total variance; its R² is reported as 1.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::argument("linear fit needs ≥ 2 paired points"));
    }
    let mx = mean(x);
    let my = mean(y);
    let mut sxx = CompensatedSum::new();
    let mut sxy = CompensatedSum::new();
    for (&xi, &yi) in x.iter().zip(y) {
        sxx.add((xi - mx) * (xi - mx));
        sxy.add((xi - mx) * (yi - my));
    }
    let sxx = sxx.value();
    if sxx <= f64::EPSILON * mx.abs().max(1.0) * x.len() as f64 {
        return Err(Error::argument("rank-deficient design: all abscissae equal"));
    }
    let c1 = sxy.value() / sxx;
    let c0 = my - c1 * mx;
    let mut ss_res = CompensatedSum::new();
    let mut ss_tot = CompensatedSum::new();
    for (&xi, &yi) in x.iter().zip(y) {
        let r = yi - (c0 + c1 * xi);
        ss_res.add(r * r);
        ss_tot.add((yi - my) * (yi - my));
    }
    let ss_tot = ss_tot.value();
    let r2 = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res.value() / ss_tot
    };
    Ok((c0, c1, r2))
}

/// Slope of `ln y` against `ln x` by least squares.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.iter().chain(y).any(|&v| v <= 0.0) {
        return Err(Error::argument("log-log slope needs positive data"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly).map(|(_, slope, _)| slope)
}

/// Squared Euclidean distance.
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn sq_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
