//! Challenge scoring: Pearson correlation per emotion and its six-way mean.
//!
//! Covariance and variances use population (1/N) normalization; the factor
//! cancels in the ratio. A column whose predictions or labels are constant
//! has no defined correlation. [`pearson`] reports that as
//! [`Error::DegenerateVariance`]; [`rho_val`] scores such a column 0.0 and
//! raises its flag.

use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{EMOTIONS, EMOTION_KEYS, NUM_EMOTIONS};

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape("pearson", x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "pearson input".into(),
        });
    }
    if is_constant(x) || is_constant(y) {
        return Err(Error::DegenerateVariance);
    }

    let inv_n = 1.0 / n as f64;
    let mx = x.iter().sum::<f64>() * inv_n;
    let my = y.iter().sum::<f64>() * inv_n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let cov = sxy * inv_n;
    let var_x = sxx * inv_n;
    let var_y = syy * inv_n;
    if negligible(var_x, x) || negligible(var_y, y) {
        return Err(Error::DegenerateVariance);
    }
    Ok((cov / (var_x.sqrt() * var_y.sqrt())).clamp(-1.0, 1.0))
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&a| a == v[0])
}

/// Variance indistinguishable from rounding noise of the mean.
fn negligible(var: f64, v: &[f64]) -> bool {
    let scale = v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let noise = 4.0 * f64::EPSILON * scale;
    var <= noise * noise
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub rho_per_emotion: [f64; NUM_EMOTIONS],
    pub rho_val: f64,
    /// Columns with zero variance in predictions or labels; they score 0.0.
    pub degenerate: [bool; NUM_EMOTIONS],
}

impl MetricsReport {
    pub fn any_degenerate(&self) -> bool {
        self.degenerate.iter().any(|&d| d)
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for k in 0..NUM_EMOTIONS {
            write!(f, "{:<14} {:>8.4}", EMOTIONS[k], self.rho_per_emotion[k])?;
            if self.degenerate[k] {
                write!(f, "  (degenerate: zero variance)")?;
            }
            writeln!(f)?;
        }
        write!(f, "{:<14} {:>8.4}", "rho_val", self.rho_val)
    }
}

/// Scores an `N × 6` prediction matrix against labels of the same shape.
pub fn rho_val(preds: &Matrix, labels: &Matrix) -> Result<MetricsReport> {
    if preds.shape() != labels.shape() || preds.cols() != NUM_EMOTIONS {
        return Err(Error::shape(
            "rho_val",
            format!("{}x{}", preds.rows(), preds.cols()),
            format!("{}x{}", labels.rows(), labels.cols()),
        ));
    }
    let n = preds.rows();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let mut rho = [0.0; NUM_EMOTIONS];
    let mut degenerate = [false; NUM_EMOTIONS];
    let mut px = vec![0.0; n];
    let mut ly = vec![0.0; n];
    for k in 0..NUM_EMOTIONS {
        for i in 0..n {
            px[i] = preds.get(i, k);
            ly[i] = labels.get(i, k);
        }
        match pearson(&px, &ly) {
            Ok(r) => rho[k] = r,
            Err(Error::DegenerateVariance) => degenerate[k] = true,
            Err(e) => {
                return Err(Error::InvalidArgument(format!(
                    "column {}: {e}",
                    EMOTION_KEYS[k]
                )))
            }
        }
    }
    Ok(MetricsReport {
        rho_per_emotion: rho,
        rho_val: rho.iter().sum::<f64>() / NUM_EMOTIONS as f64,
        degenerate,
    })
}
