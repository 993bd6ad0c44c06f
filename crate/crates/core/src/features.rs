//! Per-product feature engineering and z-score standardization.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{HsCode, ProductSeries};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureName {
    AvgKg,
    AvgPrice,
    PriceVolatility,
    KgTrend,
    PriceTrend,
    LogAvgKg,
    LogAvgPrice,
    IxLogkgLogprice,
    IxTrends,
}

impl FeatureName {
    pub const ALL: [FeatureName; 9] = [
        FeatureName::AvgKg,
        FeatureName::AvgPrice,
        FeatureName::PriceVolatility,
        FeatureName::KgTrend,
        FeatureName::PriceTrend,
        FeatureName::LogAvgKg,
        FeatureName::LogAvgPrice,
        FeatureName::IxLogkgLogprice,
        FeatureName::IxTrends,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureName::AvgKg => "avg_kg",
            FeatureName::AvgPrice => "avg_price",
            FeatureName::PriceVolatility => "price_volatility",
            FeatureName::KgTrend => "kg_trend",
            FeatureName::PriceTrend => "price_trend",
            FeatureName::LogAvgKg => "log_avg_kg",
            FeatureName::LogAvgPrice => "log_avg_price",
            FeatureName::IxLogkgLogprice => "ix_logkg_logprice",
            FeatureName::IxTrends => "ix_trends",
        }
    }

    /// Whether the feature measures traded volume (raw or log scale).
    pub fn is_volume(self) -> bool {
        matches!(self, FeatureName::AvgKg | FeatureName::LogAvgKg)
    }

    /// Whether the feature measures unit price level (raw or log scale).
    pub fn is_price(self) -> bool {
        matches!(self, FeatureName::AvgPrice | FeatureName::LogAvgPrice)
    }
}

impl fmt::Display for FeatureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        FeatureName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| format!("unknown feature `{s}`"))
    }
}

/// Which columns feed the models.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    /// The five trade-behaviour features.
    #[default]
    Core,
    /// Core plus the log transforms and interaction terms.
    Extended,
}

impl FeatureSet {
    pub fn names(self) -> &'static [FeatureName] {
        match self {
            FeatureSet::Core => &FeatureName::ALL[..5],
            FeatureSet::Extended => &FeatureName::ALL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub hs_code: HsCode,
    /// Mean annual mass, kg/year.
    pub avg_kg: f64,
    /// Mean annual unit price, USD/kg.
    pub avg_price: f64,
    /// Population standard deviation of annual unit price.
    pub price_volatility: f64,
    /// OLS slope of kg on calendar year.
    pub kg_trend: f64,
    /// OLS slope of unit price on calendar year.
    pub price_trend: f64,
    pub log_avg_kg: f64,
    pub log_avg_price: f64,
    pub ix_logkg_logprice: f64,
    pub ix_trends: f64,
    pub priced_years: usize,
    /// Trends rest on exactly two priced years.
    pub low_confidence: bool,
}

impl FeatureVector {
    pub fn get(&self, name: FeatureName) -> f64 {
        match name {
            FeatureName::AvgKg => self.avg_kg,
            FeatureName::AvgPrice => self.avg_price,
            FeatureName::PriceVolatility => self.price_volatility,
            FeatureName::KgTrend => self.kg_trend,
            FeatureName::PriceTrend => self.price_trend,
            FeatureName::LogAvgKg => self.log_avg_kg,
            FeatureName::LogAvgPrice => self.log_avg_price,
            FeatureName::IxLogkgLogprice => self.ix_logkg_logprice,
            FeatureName::IxTrends => self.ix_trends,
        }
    }
}

pub fn compute_features(series: &ProductSeries) -> Result<FeatureVector> {
    let (price_years, prices): (Vec<f64>, Vec<f64>) =
        series.priced().map(|(y, p)| (f64::from(y), p)).unzip();
    if prices.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{}: insufficient history ({} priced years)",
            series.hs_code,
            prices.len()
        )));
    }
    let (kg_years, kgs): (Vec<f64>, Vec<f64>) =
        series.points.iter().map(|p| (f64::from(p.year), p.kg)).unzip();

    let avg_kg = stats::mean(&kgs);
    let avg_price = stats::mean(&prices);
    let kg_trend = stats::ols(&kg_years, &kgs).map_or(0.0, |f| f.slope);
    let price_trend = stats::ols(&price_years, &prices).map_or(0.0, |f| f.slope);
    let log_avg_kg = avg_kg.ln_1p();
    let log_avg_price = avg_price.ln_1p();

    Ok(FeatureVector {
        hs_code: series.hs_code.clone(),
        avg_kg,
        avg_price,
        price_volatility: stats::population_std(&prices),
        kg_trend,
        price_trend,
        log_avg_kg,
        log_avg_price,
        ix_logkg_logprice: log_avg_kg * log_avg_price,
        ix_trends: kg_trend * price_trend,
        priced_years: prices.len(),
        low_confidence: prices.len() == 2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub hs_code: HsCode,
    pub reason: String,
}

/// Features for every series; products lacking history are listed apart.
pub fn compute_all(series: &[ProductSeries]) -> (Vec<FeatureVector>, Vec<Exclusion>) {
    let mut vectors = Vec::with_capacity(series.len());
    let mut excluded = Vec::new();
    for s in series {
        match compute_features(s) {
            Ok(v) => vectors.push(v),
            Err(e) => excluded.push(Exclusion {
                hs_code: s.hs_code.clone(),
                reason: e.to_string(),
            }),
        }
    }
    (vectors, excluded)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizedMatrix {
    pub rows: Vec<HsCode>,
    pub columns: Vec<FeatureName>,
    /// Row-major z-scores.
    pub values: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    /// Population standard deviations.
    pub stds: Vec<f64>,
    pub constant: Vec<bool>,
}

impl StandardizedMatrix {
    pub fn column_index(&self, name: FeatureName) -> Option<usize> {
        self.columns.iter().position(|&c| c == name)
    }

    pub fn row_index(&self, hs: &HsCode) -> Option<usize> {
        self.rows.iter().position(|r| r == hs)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[j]).collect()
    }

    /// z-scores a product with the stored column statistics.
    pub fn transform(&self, v: &FeatureVector) -> Vec<f64> {
        self.columns
            .iter()
            .enumerate()
            .map(|(j, &name)| self.z(j, v.get(name)))
            .collect()
    }

    pub fn z(&self, j: usize, x: f64) -> f64 {
        if self.constant[j] {
            0.0
        } else {
            (x - self.means[j]) / self.stds[j]
        }
    }

    pub fn inverse(&self, j: usize, z: f64) -> f64 {
        z * self.stds[j] + self.means[j]
    }

    /// Keeps only the listed rows, in the given order. Column statistics are
    /// carried over unchanged.
    pub fn select_rows(&self, idx: &[usize]) -> StandardizedMatrix {
        StandardizedMatrix {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            values: idx.iter().map(|&i| self.values[i].clone()).collect(),
            ..self.clone()
        }
    }
}

pub fn standardize(vectors: &[FeatureVector], feature_set: &[FeatureName]) -> Result<StandardizedMatrix> {
    if vectors.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "standardize needs at least 2 products, got {}",
            vectors.len()
        )));
    }
    let mut means = Vec::with_capacity(feature_set.len());
    let mut stds = Vec::with_capacity(feature_set.len());
    let mut constant = Vec::with_capacity(feature_set.len());
    for &name in feature_set {
        let col: Vec<f64> = vectors.iter().map(|v| v.get(name)).collect();
        if let Some(bad) = col.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite {name} value {bad}")));
        }
        let m = stats::mean(&col);
        let sd = stats::population_std(&col);
        // exact zero only happens for truly constant columns; tiny values
        // are rounding residue of equal entries
        let is_constant = sd <= f64::EPSILON * m.abs().max(1.0) * 4.0;
        if is_constant {
            log::info!("feature {name} is constant across products");
        }
        means.push(m);
        stds.push(if is_constant { 0.0 } else { sd });
        constant.push(is_constant);
    }
    let mut out = StandardizedMatrix {
        rows: vectors.iter().map(|v| v.hs_code.clone()).collect(),
        columns: feature_set.to_vec(),
        values: Vec::new(),
        means,
        stds,
        constant,
    };
    out.values = vectors.iter().map(|v| out.transform(v)).collect();
    Ok(out)
}
