//! Waste Score model and the per-product risk profile.
//!
//! The Waste Score is an L2-penalized logistic regression trained to tell
//! known scrap headings apart from known finished goods, fitted by
//! iteratively reweighted least squares (Newton's method with step halving).
//! Attributions are exact Shapley values for the linear predictor.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureName, FeatureVector, StandardizedMatrix};
use crate::ingest::HsCode;
use crate::stats::{self, sigmoid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelConfig {
    /// HS prefixes of known scrap (label 1).
    pub scrap_codes: BTreeSet<String>,
    /// HS prefixes of known finished goods (label 0).
    pub finished_codes: BTreeSet<String>,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig {
            scrap_codes: BTreeSet::from(["7204".to_string()]),
            finished_codes: BTreeSet::from(["8542".to_string()]),
        }
    }
}

impl LabelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scrap_codes.is_empty() || self.finished_codes.is_empty() {
            return Err(Error::Config("both scrap and finished label lists must be non-empty".into()));
        }
        for s in &self.scrap_codes {
            for f in &self.finished_codes {
                if s.starts_with(f.as_str()) || f.starts_with(s.as_str()) {
                    return Err(Error::Config(format!("label prefixes `{s}` and `{f}` overlap")));
                }
            }
        }
        Ok(())
    }

    /// `Some(1.0)` for scrap, `Some(0.0)` for finished, `None` if unlabeled.
    pub fn label(&self, hs: &HsCode) -> Result<Option<f64>> {
        let scrap = self.scrap_codes.iter().any(|p| hs.has_prefix(p));
        let finished = self.finished_codes.iter().any(|p| hs.has_prefix(p));
        match (scrap, finished) {
            (true, true) => Err(Error::LabelConflict(hs.to_string())),
            (true, false) => Ok(Some(1.0)),
            (false, true) => Ok(Some(0.0)),
            (false, false) => Ok(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub feature_names: Vec<FeatureName>,
    pub hs_codes: Vec<HsCode>,
    /// Row indices into the source matrix.
    pub rows: Vec<usize>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

pub fn build_training_set(features: &StandardizedMatrix, labels: &LabelConfig) -> Result<TrainingSet> {
    let mut set = TrainingSet {
        feature_names: features.columns.clone(),
        hs_codes: Vec::new(),
        rows: Vec::new(),
        x: Vec::new(),
        y: Vec::new(),
    };
    for (i, hs) in features.rows.iter().enumerate() {
        if let Some(y) = labels.label(hs)? {
            set.hs_codes.push(hs.clone());
            set.rows.push(i);
            set.x.push(features.values[i].clone());
            set.y.push(y);
        }
    }
    let positives = set.y.iter().filter(|&&y| y == 1.0).count();
    if positives == 0 {
        return Err(Error::InsufficientData("no product matches a scrap label prefix".into()));
    }
    if positives == set.y.len() {
        return Err(Error::InsufficientData("no product matches a finished label prefix".into()));
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticParams {
    pub l2_lambda: f64,
    pub max_iter: usize,
    /// Gradient max-norm that counts as converged.
    pub tol: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            l2_lambda: 1e-3,
            max_iter: 100,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WasteModel {
    pub feature_names: Vec<FeatureName>,
    /// Log-odds per z-unit.
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Training-set column means in standardized space (SHAP baseline).
    pub baseline_means: Vec<f64>,
    pub l2_lambda: f64,
    pub converged: bool,
    pub n_iter: usize,
    pub gradient_norm: f64,
    /// Penalized log-likelihood at the start and after every iteration.
    pub objective_trace: Vec<f64>,
}

/// `ℓ(β) = Σ [y log p + (1 − y) log(1 − p)] − λ/2 · ‖w‖²` with
/// `β = [intercept, w…]`; the intercept is not penalized.
pub fn penalized_log_likelihood(x: &[Vec<f64>], y: &[f64], beta: &[f64], l2: f64) -> f64 {
    let ll: f64 = x
        .iter()
        .zip(y)
        .map(|(row, &yi)| {
            let eta = linear(beta, row);
            // y·η − log(1 + e^η), evaluated without overflow
            yi * eta - log1p_exp(eta)
        })
        .sum();
    let penalty: f64 = beta[1..].iter().map(|w| w * w).sum();
    ll - 0.5 * l2 * penalty
}

/// Gradient of [`penalized_log_likelihood`] with respect to `β`.
pub fn gradient(x: &[Vec<f64>], y: &[f64], beta: &[f64], l2: f64) -> Vec<f64> {
    let mut g = vec![0.0; beta.len()];
    for (row, &yi) in x.iter().zip(y) {
        let r = yi - sigmoid(linear(beta, row));
        g[0] += r;
        for (gj, xj) in g[1..].iter_mut().zip(row) {
            *gj += r * xj;
        }
    }
    for (gj, wj) in g[1..].iter_mut().zip(&beta[1..]) {
        *gj -= l2 * wj;
    }
    g
}

fn linear(beta: &[f64], row: &[f64]) -> f64 {
    beta[0] + beta[1..].iter().zip(row).map(|(w, x)| w * x).sum::<f64>()
}

fn log1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn newton_direction(x: &[Vec<f64>], beta: &[f64], grad: &[f64], l2: f64) -> Vec<f64> {
    let p = beta.len();
    let mut h = DMatrix::<f64>::zeros(p, p);
    for row in x {
        let mu = sigmoid(linear(beta, row));
        let w = (mu * (1.0 - mu)).max(1e-300);
        let xa: Vec<f64> = std::iter::once(1.0).chain(row.iter().copied()).collect();
        for a in 0..p {
            let wa = w * xa[a];
            for b in 0..=a {
                h[(a, b)] += wa * xa[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            h[(b, a)] = h[(a, b)];
        }
        if a > 0 {
            h[(a, a)] += l2;
        }
    }
    let g = DVector::from_column_slice(grad);
    let mut jitter = 0.0;
    for _ in 0..8 {
        let mut hj = h.clone();
        for a in 0..p {
            hj[(a, a)] += jitter;
        }
        if let Some(chol) = hj.cholesky() {
            return chol.solve(&g).iter().copied().collect();
        }
        jitter = if jitter == 0.0 { 1e-10 } else { jitter * 100.0 };
    }
    // plain gradient ascent as a last resort
    grad.to_vec()
}

/// Fits the penalized logistic model by IRLS.
///
/// Each Newton step is halved until the objective does not decrease, so the
/// recorded objective is monotone. With `l2_lambda == 0` and separable
/// classes no finite optimum exists and [`Error::NotConverged`] is returned.
pub fn fit_logistic(set: &TrainingSet, params: &LogisticParams) -> Result<WasteModel> {
    let (x, y) = (&set.x, &set.y);
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::InsufficientData(format!("logistic fit needs >= 2 labeled rows, got {n}")));
    }
    let d = set.feature_names.len();
    if let Some(row) = x.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: row.len() });
    }
    let pos = y.iter().filter(|&&v| v == 1.0).count();
    if pos == 0 || pos == n {
        return Err(Error::InsufficientData("logistic fit needs both classes".into()));
    }
    if params.l2_lambda.is_nan() || params.l2_lambda < 0.0 {
        return Err(Error::Config("l2_lambda must be non-negative".into()));
    }
    let l2 = params.l2_lambda;

    let rate = pos as f64 / n as f64;
    let mut beta = vec![0.0; d + 1];
    beta[0] = (rate / (1.0 - rate)).ln();
    let mut obj = penalized_log_likelihood(x, y, &beta, l2);
    let mut trace = vec![obj];
    let mut grad = gradient(x, y, &beta, l2);
    let mut n_iter = 0;
    let mut converged = max_abs(&grad) < params.tol;

    while !converged && n_iter < params.max_iter {
        n_iter += 1;
        let dir = newton_direction(x, &beta, &grad, l2);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = beta.iter().zip(&dir).map(|(b, s)| b + step * s).collect();
            let cand_obj = penalized_log_likelihood(x, y, &cand, l2);
            if cand_obj >= obj {
                accepted = Some((cand, cand_obj));
                break;
            }
            step *= 0.5;
        }
        let Some((next, next_obj)) = accepted else {
            // no ascent possible at machine precision
            break;
        };
        beta = next;
        obj = next_obj;
        trace.push(obj);
        grad = gradient(x, y, &beta, l2);
        converged = max_abs(&grad) < params.tol;
        if max_abs(&beta) > 1e8 {
            break;
        }
    }
    let gradient_norm = max_abs(&grad);

    if l2 == 0.0 {
        let separated = x
            .iter()
            .zip(y)
            .all(|(row, &yi)| (linear(&beta, row) > 0.0) == (yi == 1.0));
        if separated || !converged {
            return Err(Error::NotConverged {
                iterations: n_iter,
                grad_norm: gradient_norm,
            });
        }
    }
    if !converged {
        log::warn!("logistic fit stopped after {n_iter} iterations, gradient max-norm {gradient_norm:e}");
    }

    let baseline_means = (0..d)
        .map(|j| stats::mean(&x.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .collect();
    Ok(WasteModel {
        feature_names: set.feature_names.clone(),
        weights: beta[1..].to_vec(),
        intercept: beta[0],
        baseline_means,
        l2_lambda: l2,
        converged,
        n_iter,
        gradient_norm,
        objective_trace: trace,
    })
}

impl WasteModel {
    fn check_dim(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                got: z.len(),
            });
        }
        Ok(())
    }

    pub fn logit(&self, z: &[f64]) -> Result<f64> {
        self.check_dim(z)?;
        Ok(self.intercept + self.weights.iter().zip(z).map(|(w, x)| w * x).sum::<f64>())
    }

    pub fn baseline_logit(&self) -> f64 {
        self.intercept
            + self
                .weights
                .iter()
                .zip(&self.baseline_means)
                .map(|(w, m)| w * m)
                .sum::<f64>()
    }

    pub fn weight(&self, name: FeatureName) -> Option<f64> {
        let j = self.feature_names.iter().position(|&n| n == name)?;
        Some(self.weights[j])
    }
}

pub fn waste_score(model: &WasteModel, z: &[f64]) -> Result<f64> {
    Ok(sigmoid(model.logit(z)?))
}

/// Exact Shapley values of the linear predictor under feature independence:
/// `wᵢ · (zᵢ − baselineᵢ)`.
pub fn linear_shap(model: &WasteModel, z: &[f64]) -> Result<Vec<f64>> {
    model.check_dim(z)?;
    Ok(model
        .weights
        .iter()
        .zip(z)
        .zip(&model.baseline_means)
        .map(|((w, x), m)| w * (x - m))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendlineFit {
    /// d ln(price) / d ln(volume).
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n: usize,
}

impl TrendlineFit {
    /// Residual of ln(avg_price) from the line; `None` if either average
    /// is not positive.
    pub fn residual(&self, f: &FeatureVector) -> Option<f64> {
        (f.avg_kg > 0.0 && f.avg_price > 0.0)
            .then(|| f.avg_price.ln() - (self.intercept + self.slope * f.avg_kg.ln()))
    }
}

/// OLS of ln(avg_price) on ln(avg_kg) across products.
pub fn fit_trendline(features: &[FeatureVector]) -> Result<TrendlineFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = features
        .iter()
        .filter(|f| f.avg_kg > 0.0 && f.avg_price > 0.0)
        .map(|f| (f.avg_kg.ln(), f.avg_price.ln()))
        .unzip();
    if xs.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "trendline needs >= 3 products with positive volume and price, got {}",
            xs.len()
        )));
    }
    let fit = stats::ols(&xs, &ys)
        .ok_or_else(|| Error::InsufficientData("trendline: all products share one volume".into()))?;
    Ok(TrendlineFit {
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        n: fit.n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quadrant {
    HighVolLowPrice,
    HighVolHighPrice,
    LowVolLowPrice,
    LowVolHighPrice,
}

impl Quadrant {
    pub fn name(self) -> &'static str {
        match self {
            Quadrant::HighVolLowPrice => "HighVolLowPrice",
            Quadrant::HighVolHighPrice => "HighVolHighPrice",
            Quadrant::LowVolLowPrice => "LowVolLowPrice",
            Quadrant::LowVolHighPrice => "LowVolHighPrice",
        }
    }
}

/// Medians of ln(1 + avg_kg) and ln(1 + avg_price).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadrantThresholds {
    pub log_volume: f64,
    pub log_price: f64,
}

impl QuadrantThresholds {
    pub fn from_population(features: &[FeatureVector]) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InsufficientData("quadrant thresholds need products".into()));
        }
        let vols: Vec<f64> = features.iter().map(|f| f.log_avg_kg).collect();
        let prices: Vec<f64> = features.iter().map(|f| f.log_avg_price).collect();
        Ok(QuadrantThresholds {
            log_volume: stats::median(&vols),
            log_price: stats::median(&prices),
        })
    }
}

/// Points on a median count as "high".
pub fn classify_quadrant(f: &FeatureVector, t: &QuadrantThresholds) -> Quadrant {
    let high_vol = f.avg_kg.ln_1p() >= t.log_volume;
    let high_price = f.avg_price.ln_1p() >= t.log_price;
    match (high_vol, high_price) {
        (true, false) => Quadrant::HighVolLowPrice,
        (true, true) => Quadrant::HighVolHighPrice,
        (false, false) => Quadrant::LowVolLowPrice,
        (false, true) => Quadrant::LowVolHighPrice,
    }
}

/// `waste · sigmoid(−price_trend_z)`: waste-likeness discounted unless
/// prices are falling.
pub fn scrutiny_score(waste: f64, price_trend_z: f64) -> f64 {
    waste * sigmoid(-price_trend_z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub feature: FeatureName,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskProfile {
    pub hs_code: HsCode,
    pub waste_score: f64,
    pub logit: f64,
    pub shap: Vec<Attribution>,
    pub quadrant: Quadrant,
    pub price_trend_z: f64,
    pub scrutiny_score: f64,
    pub trendline_residual: Option<f64>,
}

impl RiskProfile {
    /// Attributions ordered by magnitude, largest first; ties keep feature
    /// order.
    pub fn top_shap(&self, n: usize) -> Vec<Attribution> {
        let mut sorted = self.shap.clone();
        sorted.sort_by(|a, b| b.value.abs().total_cmp(&a.value.abs()));
        sorted.truncate(n);
        sorted
    }
}

/// z-scores of `price_trend` over the modeled population (population std).
pub fn price_trend_z(features: &[FeatureVector]) -> Vec<f64> {
    let trends: Vec<f64> = features.iter().map(|f| f.price_trend).collect();
    let m = stats::mean(&trends);
    let sd = stats::population_std(&trends);
    trends
        .iter()
        .map(|t| if sd > 0.0 { (t - m) / sd } else { 0.0 })
        .collect()
}

/// Risk profiles for every row of `matrix`; `features` must be row-aligned.
pub fn score_population(
    model: &WasteModel,
    matrix: &StandardizedMatrix,
    features: &[FeatureVector],
    trendline: Option<&TrendlineFit>,
) -> Result<Vec<RiskProfile>> {
    if features.len() != matrix.rows.len() {
        return Err(Error::InvalidInput("features are not row-aligned with the matrix".into()));
    }
    let thresholds = QuadrantThresholds::from_population(features)?;
    let trend_z = price_trend_z(features);
    matrix
        .values
        .iter()
        .zip(features)
        .zip(trend_z)
        .map(|((z, f), tz)| {
            let waste = waste_score(model, z)?;
            let shap = linear_shap(model, z)?
                .into_iter()
                .zip(&model.feature_names)
                .map(|(value, &feature)| Attribution { feature, value })
                .collect();
            Ok(RiskProfile {
                hs_code: f.hs_code.clone(),
                waste_score: waste,
                logit: model.logit(z)?,
                shap,
                quadrant: classify_quadrant(f, &thresholds),
                price_trend_z: tz,
                scrutiny_score: scrutiny_score(waste, tz),
                trendline_residual: trendline.and_then(|t| t.residual(f)),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hs(s: &str) -> HsCode {
        s.parse().unwrap()
    }

    fn model(weights: Vec<f64>, intercept: f64, baseline: Vec<f64>) -> WasteModel {
        WasteModel {
            feature_names: FeatureName::ALL[..weights.len()].to_vec(),
            weights,
            intercept,
            baseline_means: baseline,
            l2_lambda: 0.0,
            converged: true,
            n_iter: 0,
            gradient_norm: 0.0,
            objective_trace: vec![],
        }
    }

    fn fv(avg_kg: f64, avg_price: f64) -> FeatureVector {
        FeatureVector {
            hs_code: hs("100000"),
            avg_kg,
            avg_price,
            price_volatility: 0.0,
            kg_trend: 0.0,
            price_trend: 0.0,
            log_avg_kg: avg_kg.ln_1p(),
            log_avg_price: avg_price.ln_1p(),
            ix_logkg_logprice: avg_kg.ln_1p() * avg_price.ln_1p(),
            ix_trends: 0.0,
            priced_years: 5,
            low_confidence: false,
        }
    }

    fn matrix(codes: &[&str]) -> StandardizedMatrix {
        StandardizedMatrix {
            rows: codes.iter().map(|c| hs(c)).collect(),
            columns: vec![FeatureName::AvgKg],
            values: codes.iter().enumerate().map(|(i, _)| vec![i as f64]).collect(),
            means: vec![0.0],
            stds: vec![1.0],
            constant: vec![false],
        }
    }

    #[test]
    fn training_labels_by_prefix() {
        let m = matrix(&["720410", "854231", "850213"]);
        let set = build_training_set(&m, &LabelConfig::default()).unwrap();
        assert_eq!(set.hs_codes, vec![hs("720410"), hs("854231")]);
        assert_eq!(set.y, vec![1.0, 0.0]);
        assert_eq!(set.rows, vec![0, 1]);
    }

    #[test]
    fn training_set_errors() {
        let m = matrix(&["720410", "720420"]);
        assert!(build_training_set(&m, &LabelConfig::default()).is_err());
        let both = LabelConfig {
            scrap_codes: BTreeSet::from(["72".to_string()]),
            finished_codes: BTreeSet::from(["7204".to_string()]),
        };
        assert!(both.validate().is_err());
        let m = matrix(&["720410", "854231"]);
        assert!(matches!(build_training_set(&m, &both), Err(Error::LabelConflict(_))));
    }

    #[test]
    fn neutral_model_scores_half() {
        let m = model(vec![0.0, 0.0], 0.0, vec![0.3, -0.2]);
        assert_eq!(waste_score(&m, &[0.3, -0.2]).unwrap(), 0.5);
        assert!(waste_score(&m, &[0.3]).is_err());
    }

    #[test]
    fn shap_closed_form() {
        let m = model(vec![2.0, 0.0, 0.0], 0.4, vec![0.0, 0.0, 0.0]);
        assert_eq!(linear_shap(&m, &[0.5, 3.0, -1.0]).unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(linear_shap(&m, &[0.0, 0.0, 0.0]).unwrap(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn score_monotone_in_positive_weight() {
        let m = model(vec![1.5, -0.5], 0.0, vec![0.0, 0.0]);
        let a = waste_score(&m, &[0.0, 0.0]).unwrap();
        let b = waste_score(&m, &[0.1, 0.0]).unwrap();
        assert!(b > a);
    }

    #[test]
    fn separable_data_without_penalty_fails() {
        let set = TrainingSet {
            feature_names: vec![FeatureName::AvgKg],
            hs_codes: vec![],
            rows: vec![],
            x: vec![vec![-1.0], vec![-0.5], vec![0.5], vec![1.0]],
            y: vec![0.0, 0.0, 1.0, 1.0],
        };
        let strict = LogisticParams { l2_lambda: 0.0, ..Default::default() };
        assert!(matches!(fit_logistic(&set, &strict), Err(Error::NotConverged { .. })));
        let m = fit_logistic(&set, &LogisticParams::default()).unwrap();
        assert!(m.converged);
        assert!(m.weights[0] > 0.0);
        assert!(waste_score(&m, &[1.0]).unwrap() > 0.5);
    }

    #[test]
    fn unpenalized_fit_on_overlapping_classes() {
        let set = TrainingSet {
            feature_names: vec![FeatureName::AvgKg],
            hs_codes: vec![],
            rows: vec![],
            x: vec![vec![-1.0], vec![0.2], vec![-0.3], vec![1.0], vec![0.4], vec![-0.1]],
            y: vec![0.0, 0.0, 1.0, 1.0, 1.0, 0.0],
        };
        let m = fit_logistic(&set, &LogisticParams { l2_lambda: 0.0, ..Default::default() }).unwrap();
        assert!(m.converged);
        assert!(m.gradient_norm < 1e-8);
        let g = gradient(&set.x, &set.y, &[m.intercept, m.weights[0]], 0.0);
        assert!(g.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn trendline_exact_power_law() {
        let fs: Vec<_> = [1.0, 10.0, 100.0, 1000.0].iter().map(|&v| fv(v, 50.0 / v)).collect();
        let t = fit_trendline(&fs).unwrap();
        assert!((t.slope + 1.0).abs() < 1e-12);
        assert!((t.r_squared - 1.0).abs() < 1e-12);
        assert!(t.residual(&fs[0]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn trendline_flat_and_too_small() {
        let fs: Vec<_> = [1.0, 10.0, 100.0].iter().map(|&v| fv(v, 3.0)).collect();
        assert!(fit_trendline(&fs).unwrap().slope.abs() < 1e-12);
        assert!(fit_trendline(&fs[..2]).is_err());
        let zero = vec![fv(0.0, 1.0), fv(1.0, 0.0), fv(2.0, 2.0), fv(3.0, 3.0)];
        assert!(fit_trendline(&zero).is_err());
    }

    #[test]
    fn quadrants() {
        let t = QuadrantThresholds {
            log_volume: 10f64.ln_1p(),
            log_price: 10f64.ln_1p(),
        };
        assert_eq!(classify_quadrant(&fv(100.0, 1.0), &t), Quadrant::HighVolLowPrice);
        assert_eq!(classify_quadrant(&fv(100.0, 100.0), &t), Quadrant::HighVolHighPrice);
        assert_eq!(classify_quadrant(&fv(1.0, 1.0), &t), Quadrant::LowVolLowPrice);
        assert_eq!(classify_quadrant(&fv(1.0, 100.0), &t), Quadrant::LowVolHighPrice);
        assert_eq!(classify_quadrant(&fv(10.0, 10.0), &t), Quadrant::HighVolHighPrice);
    }

    #[test]
    fn scrutiny_rules() {
        assert_eq!(scrutiny_score(0.8, 0.0), 0.4);
        assert_eq!(scrutiny_score(0.0, -5.0), 0.0);
        assert!(scrutiny_score(0.6, -1.0) > scrutiny_score(0.6, 0.5));
        assert!(scrutiny_score(0.6, -40.0) <= 0.6);
    }

    #[test]
    fn top_shap_orders_by_magnitude() {
        let p = RiskProfile {
            hs_code: hs("100000"),
            waste_score: 0.5,
            logit: 0.0,
            shap: vec![
                Attribution { feature: FeatureName::AvgKg, value: 0.1 },
                Attribution { feature: FeatureName::AvgPrice, value: -2.0 },
                Attribution { feature: FeatureName::PriceVolatility, value: 0.1 },
                Attribution { feature: FeatureName::KgTrend, value: 1.0 },
            ],
            quadrant: Quadrant::HighVolLowPrice,
            price_trend_z: 0.0,
            scrutiny_score: 0.25,
            trendline_residual: None,
        };
        let top: Vec<FeatureName> = p.top_shap(3).iter().map(|a| a.feature).collect();
        assert_eq!(top, vec![FeatureName::AvgPrice, FeatureName::KgTrend, FeatureName::AvgKg]);
    }
}
