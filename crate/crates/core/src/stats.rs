//! Small numeric helpers shared by every stage.

use serde::{Deserialize, Serialize};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population (divide-by-n) standard deviation.
pub fn population_std(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / xs.len() as f64).sqrt()
}

/// Ordinary least-squares line `y = intercept + slope * x`.
///
/// The fit is kept in centered form so predictions far from the data (e.g.
/// calendar years) do not lose precision through a huge intercept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n: usize,
    pub x_mean: f64,
    pub y_mean: f64,
}

impl LineFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.y_mean + self.slope * (x - self.x_mean)
    }
}

/// Closed-form OLS: `slope = Σ(x−x̄)(y−ȳ) / Σ(x−x̄)²`.
///
/// Returns `None` with fewer than two points or when all `x` coincide.
pub fn ols(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    assert_eq!(xs.len(), ys.len(), "ols: x and y lengths differ");
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let x_mean = mean(xs);
    let y_mean = mean(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - x_mean;
        let dy = y - y_mean;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    // a constant response is fit perfectly by a flat line
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        ((sxy * sxy) / (sxx * syy)).clamp(0.0, 1.0)
    };
    Some(LineFit {
        slope,
        intercept: y_mean - slope * x_mean,
        r_squared,
        n,
        x_mean,
        y_mean,
    })
}

/// Quantile by linear interpolation between order statistics
/// (`h = (n − 1)·p`). `sorted` must be ascending and non-empty.
pub fn quantile_linear(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let p = p.clamp(0.0, 1.0);
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_linear(&sorted, 0.5)
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ols_three_points() {
        let fit = ols(&[2020.0, 2021.0, 2022.0], &[4.0, 1.0, 1.0]).unwrap();
        assert!((fit.slope + 1.5).abs() < 1e-12);
    }

    #[test]
    fn ols_needs_spread_in_x() {
        assert!(ols(&[1.0], &[1.0]).is_none());
        assert!(ols(&[3.0, 3.0], &[1.0, 2.0]).is_none());
    }

    #[test]
    fn quantile_of_one_to_hundred() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((quantile_linear(&xs, 0.01) - 1.99).abs() < 1e-12);
        assert!((quantile_linear(&xs, 0.99) - 99.01).abs() < 1e-12);
        assert_eq!(quantile_linear(&xs, 0.0), 1.0);
        assert_eq!(quantile_linear(&xs, 1.0), 100.0);
    }

    #[test]
    fn median_even_count() {
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
    }
}
