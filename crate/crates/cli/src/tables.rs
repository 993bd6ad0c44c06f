//! Flat table views of pipeline artifacts for delimiter-separated output.

use wastesig_core::features::{FeatureName, FeatureVector};
use wastesig_core::forecast::PriceForecast;
use wastesig_core::ingest::{ProductSeries, Rejection};
use wastesig_core::pipeline::ValidationSummary;
use wastesig_core::report::{CountryHotspot, TreemapDatum};
use wastesig_core::risk::RiskProfile;
use wastesig_core::segmentation::{Pass, SegmentAssignment};

pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Table {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn series(series: &[ProductSeries]) -> Table {
    let mut t = Table::new(&["hs_code", "flow", "year", "value_usd", "kg", "unit_price", "interpolated", "missing_fraction"]);
    for s in series {
        for p in &s.points {
            t.rows.push(vec![
                s.hs_code.to_string(),
                s.flow.to_string(),
                p.year.to_string(),
                p.value_usd.to_string(),
                p.kg.to_string(),
                opt(p.unit_price),
                s.interpolated_years.contains(&p.year).to_string(),
                s.missing_fraction.to_string(),
            ]);
        }
    }
    t
}

pub fn rejections(rejected: &[Rejection]) -> Table {
    let mut t = Table::new(&["line", "reason"]);
    t.rows = rejected.iter().map(|r| vec![r.line.to_string(), r.reason.clone()]).collect();
    t
}

pub fn features(vectors: &[FeatureVector]) -> Table {
    let mut header = vec!["hs_code"];
    header.extend(FeatureName::ALL.iter().map(|f| f.as_str()));
    header.extend(["priced_years", "low_confidence"]);
    let mut t = Table::new(&header);
    for v in vectors {
        let mut row = vec![v.hs_code.to_string()];
        row.extend(FeatureName::ALL.iter().map(|&f| v.get(f).to_string()));
        row.push(v.priced_years.to_string());
        row.push(v.low_confidence.to_string());
        t.rows.push(row);
    }
    t
}

pub fn segments(assignments: &[SegmentAssignment]) -> Table {
    let mut t = Table::new(&["hs_code", "tier", "pass", "kmeans_cluster", "dbscan_label", "dual_confirmed_outlier"]);
    for a in assignments {
        t.rows.push(vec![
            a.hs_code.to_string(),
            a.tier.to_string(),
            match a.pass {
                Pass::IsolatedPass1 => "isolated_pass1",
                Pass::CorePass2 => "core_pass2",
            }
            .to_string(),
            a.kmeans_cluster.to_string(),
            a.dbscan_label.to_string(),
            a.dual_confirmed_outlier.to_string(),
        ]);
    }
    t
}

pub fn risk(profiles: &[RiskProfile]) -> Table {
    let mut header = vec![
        "hs_code",
        "waste_score",
        "scrutiny_score",
        "quadrant",
        "logit",
        "price_trend_z",
        "trendline_residual",
    ];
    header.extend(["shap1_feature", "shap1_value", "shap2_feature", "shap2_value", "shap3_feature", "shap3_value"]);
    let mut t = Table::new(&header);
    for p in profiles {
        let mut row = vec![
            p.hs_code.to_string(),
            p.waste_score.to_string(),
            p.scrutiny_score.to_string(),
            p.quadrant.name().to_string(),
            p.logit.to_string(),
            p.price_trend_z.to_string(),
            opt(p.trendline_residual),
        ];
        let top = p.top_shap(3);
        for i in 0..3 {
            match top.get(i) {
                Some(a) => row.extend([a.feature.as_str().to_string(), a.value.to_string()]),
                None => row.extend([String::new(), String::new()]),
            }
        }
        t.rows.push(row);
    }
    t
}

pub fn forecasts(forecasts: &[PriceForecast]) -> Table {
    let mut t = Table::new(&[
        "hs_code",
        "method",
        "slope",
        "intercept",
        "last_observed_year",
        "horizon_year",
        "horizon_price",
        "negative_cross_year",
    ]);
    for f in forecasts {
        t.rows.push(vec![
            f.hs_code.to_string(),
            "linear".to_string(),
            f.slope.to_string(),
            f.intercept.to_string(),
            f.last_observed_year.to_string(),
            f.horizon_year.to_string(),
            opt(f.path.last().map(|p| p.price)),
            opt(f.negative_cross_year),
        ]);
    }
    t
}

pub fn forecast_paths(forecasts: &[PriceForecast]) -> Table {
    let mut t = Table::new(&["hs_code", "year", "price"]);
    for f in forecasts {
        for p in &f.path {
            t.rows.push(vec![f.hs_code.to_string(), p.year.to_string(), p.price.to_string()]);
        }
    }
    t
}

pub fn downtrends(ranked: &[&PriceForecast]) -> Table {
    let mut t = Table::new(&["rank", "hs_code", "slope", "negative_cross_year"]);
    for (i, f) in ranked.iter().enumerate() {
        t.rows.push(vec![
            (i + 1).to_string(),
            f.hs_code.to_string(),
            f.slope.to_string(),
            opt(f.negative_cross_year),
        ]);
    }
    t
}

pub fn confusion(v: &ValidationSummary) -> Table {
    let mut header = vec!["true\\predicted".to_string()];
    header.extend(v.training.labels.iter().map(|l| l.to_string()));
    let mut t = Table { header, rows: Vec::new() };
    for (label, row) in v.training.labels.iter().zip(&v.training.confusion) {
        let mut r = vec![label.to_string()];
        r.extend(row.iter().map(|c| c.to_string()));
        t.rows.push(r);
    }
    t
}

pub fn hotspots(h: &[CountryHotspot]) -> Table {
    let mut t = Table::new(&["partner", "mean_waste_score", "n_products"]);
    t.rows = h
        .iter()
        .map(|x| vec![x.partner.clone(), x.mean_waste_score.to_string(), x.n_products.to_string()])
        .collect();
    t
}

pub fn treemap(data: &[TreemapDatum]) -> Table {
    let mut t = Table::new(&["tier", "count", "share"]);
    t.rows = data
        .iter()
        .map(|d| vec![d.tier.to_string(), d.count.to_string(), d.share.to_string()])
        .collect();
    t
}
