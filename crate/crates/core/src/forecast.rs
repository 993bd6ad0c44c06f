//! Unit-price trend extrapolation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{HsCode, ProductSeries};
use crate::stats;

/// Forecasting method. Only straight-line extrapolation exists today.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastMethod {
    #[default]
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricePoint {
    pub year: i32,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceForecast {
    pub hs_code: HsCode,
    pub method: ForecastMethod,
    /// USD/kg per year.
    pub slope: f64,
    /// USD/kg at calendar year 0.
    pub intercept: f64,
    pub last_observed_year: i32,
    pub horizon_year: i32,
    /// One point per year after the last observation through the horizon.
    pub path: Vec<PricePoint>,
    pub negative_cross_year: Option<i32>,
}

/// Fits an OLS line to (year, unit price) and walks it annually to the
/// horizon. Negative predictions are kept as they are.
pub fn forecast_price(series: &ProductSeries, horizon_year: i32) -> Result<PriceForecast> {
    let (years, prices): (Vec<f64>, Vec<f64>) = series.priced().map(|(y, p)| (f64::from(y), p)).unzip();
    if prices.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{}: forecast needs >= 2 priced years, got {}",
            series.hs_code,
            prices.len()
        )));
    }
    let last = series.last_year().expect("priced years exist");
    if horizon_year <= last {
        return Err(Error::InvalidInput(format!(
            "horizon {horizon_year} must be after the last observed year {last}"
        )));
    }
    let fit = stats::ols(&years, &prices).expect("distinct years");
    let path: Vec<PricePoint> = (last + 1..=horizon_year)
        .map(|year| PricePoint {
            year,
            price: fit.predict(f64::from(year)),
        })
        .collect();
    let negative_cross_year = path.iter().find(|p| p.price < 0.0).map(|p| p.year);
    Ok(PriceForecast {
        hs_code: series.hs_code.clone(),
        method: ForecastMethod::Linear,
        slope: fit.slope,
        intercept: fit.intercept,
        last_observed_year: last,
        horizon_year,
        path,
        negative_cross_year,
    })
}

/// Most negative slope first; equal slopes by hs code.
pub fn rank_downtrends(forecasts: &[PriceForecast], top_n: usize) -> Vec<PriceForecast> {
    let mut sorted = forecasts.to_vec();
    sorted.sort_by(|a, b| a.slope.total_cmp(&b.slope).then_with(|| a.hs_code.cmp(&b.hs_code)));
    sorted.truncate(top_n);
    sorted
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Flow, SeriesPoint};
    use std::collections::BTreeSet;

    fn series(hs: &str, prices: &[(i32, f64)]) -> ProductSeries {
        ProductSeries {
            hs_code: hs.parse().unwrap(),
            flow: Flow::Export,
            points: prices.iter().map(|&(y, p)| SeriesPoint::new(y, p, 1.0)).collect(),
            missing_fraction: 0.0,
            interpolated_years: BTreeSet::new(),
        }
    }

    fn with_slope(hs: &str, slope: f64) -> PriceForecast {
        forecast_price(&series(hs, &[(2020, 100.0), (2021, 100.0 + slope)]), 2030).unwrap()
    }

    #[test]
    fn falling_line_crosses_zero() {
        let f = forecast_price(&series("840400", &[(2020, 10.0), (2024, 2.0)]), 2030).unwrap();
        assert_eq!(f.slope, -2.0);
        assert_eq!(f.path.first().unwrap().year, 2025);
        assert_eq!(f.path.last().unwrap().year, 2030);
        assert_eq!(f.path[0].price, 0.0);
        let p2029 = f.path.iter().find(|p| p.year == 2029).unwrap();
        assert_eq!(p2029.price, -8.0);
        assert_eq!(f.negative_cross_year, Some(2026));
    }

    #[test]
    fn flat_and_rising_do_not_cross() {
        let flat = forecast_price(&series("840400", &[(2020, 5.0), (2021, 5.0), (2022, 5.0)]), 2030).unwrap();
        assert!(flat.path.iter().all(|p| p.price == 5.0));
        assert_eq!(flat.negative_cross_year, None);
        let up = forecast_price(&series("840400", &[(2020, 1.0), (2022, 3.0)]), 2030).unwrap();
        assert!(up.slope > 0.0);
        assert_eq!(up.negative_cross_year, None);
    }

    #[test]
    fn forecast_preconditions() {
        assert!(forecast_price(&series("840400", &[(2020, 5.0)]), 2030).is_err());
        assert!(forecast_price(&series("840400", &[(2020, 5.0), (2024, 1.0)]), 2024).is_err());
    }

    #[test]
    fn ranking() {
        let fs = [with_slope("100001", -5.0), with_slope("100002", -1.0), with_slope("100003", 2.0)];
        let top: Vec<String> = rank_downtrends(&fs, 2).iter().map(|f| f.hs_code.to_string()).collect();
        assert_eq!(top, vec!["100001", "100002"]);
        assert_eq!(rank_downtrends(&fs, 10).len(), 3);
    }

    #[test]
    fn ranking_ties_by_code() {
        let fs = [with_slope("844000", -3.0), with_slope("840400", -3.0)];
        let top = rank_downtrends(&fs, 2);
        assert_eq!(top[0].hs_code.as_str(), "840400");
    }
}
