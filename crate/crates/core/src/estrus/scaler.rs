use serde::{Deserialize, Serialize};

use super::EstrusError;

/// Per-feature affine map onto `[0, 1]` over the fit range. Values outside
/// the fit range map outside `[0, 1]`; nothing is clipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn n_features(&self) -> usize {
        self.min.len()
    }

    fn span(&self, j: usize) -> Option<f64> {
        let s = self.max[j] - self.min[j];
        (s > 0.0).then_some(s)
    }

    /// Scales one value of feature `j`; constant features map to 0.
    pub fn scale(&self, j: usize, x: f64) -> f64 {
        match self.span(j) {
            Some(s) => (x - self.min[j]) / s,
            None => 0.0,
        }
    }

    pub fn unscale(&self, j: usize, y: f64) -> f64 {
        match self.span(j) {
            Some(s) => y * s + self.min[j],
            None => self.min[j],
        }
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter().enumerate().map(|(j, &x)| self.scale(j, x)).collect()
    }

    pub fn invert_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter().enumerate().map(|(j, &y)| self.unscale(j, y)).collect()
    }
}

pub fn minmax_fit<R: AsRef<[f64]>>(rows: &[R]) -> Result<MinMaxScaler, EstrusError> {
    let first = rows.first().ok_or(EstrusError::EmptyFit)?.as_ref();
    let mut min = first.to_vec();
    let mut max = first.to_vec();
    for row in rows {
        for (j, &x) in row.as_ref().iter().enumerate() {
            min[j] = min[j].min(x);
            max[j] = max[j].max(x);
        }
    }
    Ok(MinMaxScaler { min, max })
}

pub fn minmax_apply<R: AsRef<[f64]>>(scaler: &MinMaxScaler, rows: &[R]) -> Vec<Vec<f64>> {
    rows.iter().map(|r| scaler.apply_row(r.as_ref())).collect()
}

pub fn minmax_invert<R: AsRef<[f64]>>(scaler: &MinMaxScaler, rows: &[R]) -> Vec<Vec<f64>> {
    rows.iter().map(|r| scaler.invert_row(r.as_ref())).collect()
}
