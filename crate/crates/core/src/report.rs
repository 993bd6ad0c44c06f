//! Dashboards, country hotspots and tier proportions.
//!
//! Nothing here recomputes a score or forecast: values are copied from the
//! risk and forecast stages as-is.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::forecast::{PriceForecast, PricePoint};
use crate::ingest::{HsCode, ProductSeries, TradeRecord};
use crate::risk::{Attribution, Quadrant, QuadrantThresholds, RiskProfile};
use crate::segmentation::{SegmentAssignment, Tier};

/// Tariff rates keyed by HS prefix; the longest matching prefix wins.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TariffTable(pub BTreeMap<String, f64>);

impl TariffTable {
    pub fn lookup(&self, hs: &HsCode) -> Option<f64> {
        self.0
            .iter()
            .filter(|(prefix, _)| hs.has_prefix(prefix))
            .max_by_key(|(prefix, _)| prefix.len())
            .map(|(_, &rate)| rate)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartnerRanking {
    /// Number of trade records.
    #[default]
    Count,
    /// Total traded value.
    Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartnerShare {
    pub partner: String,
    pub records: usize,
    pub value_usd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketView {
    pub thresholds: QuadrantThresholds,
    /// (ln(1 + avg_kg), ln(1 + avg_price)) of this product.
    pub product: (f64, f64),
    /// The same coordinates for every modeled product, in row order.
    pub population: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dashboard {
    pub hs_code: HsCode,
    pub tier: Tier,
    pub quadrant: Quadrant,
    pub waste_score: f64,
    pub scrutiny_score: f64,
    pub forecast: PriceForecast,
    pub price_history: Vec<PricePoint>,
    pub top_partners: Vec<PartnerShare>,
    pub tariff_rate: Option<f64>,
    pub shap_top: Vec<Attribution>,
    pub market: MarketView,
}

/// Everything the report stage reads from upstream stages.
#[derive(Debug, Clone, Copy)]
pub struct ReportInputs<'a> {
    pub series: &'a [ProductSeries],
    pub features: &'a [FeatureVector],
    pub assignments: &'a [SegmentAssignment],
    pub profiles: &'a [RiskProfile],
    pub forecasts: &'a [PriceForecast],
    pub records: &'a [TradeRecord],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DashboardOptions {
    pub top_partners: usize,
    pub ranking: PartnerRanking,
}

impl Default for DashboardOptions {
    fn default() -> Self {
        DashboardOptions {
            top_partners: 5,
            ranking: PartnerRanking::Count,
        }
    }
}

/// Partners of one product, ranked descending by count (or value) with ties
/// broken by ISO3 code.
pub fn rank_partners(records: &[TradeRecord], hs: &HsCode, ranking: PartnerRanking, top_n: usize) -> Vec<PartnerShare> {
    let mut by_partner: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for r in records.iter().filter(|r| &r.hs_code == hs) {
        let e = by_partner.entry(r.partner.as_str()).or_default();
        e.0 += 1;
        e.1 += r.value_usd;
    }
    let mut shares: Vec<PartnerShare> = by_partner
        .into_iter()
        .map(|(p, (records, value_usd))| PartnerShare {
            partner: p.to_string(),
            records,
            value_usd,
        })
        .collect();
    shares.sort_by(|a, b| {
        let primary = match ranking {
            PartnerRanking::Count => b.records.cmp(&a.records),
            PartnerRanking::Value => b.value_usd.total_cmp(&a.value_usd),
        };
        primary.then_with(|| a.partner.cmp(&b.partner))
    });
    shares.truncate(top_n);
    shares
}

pub fn build_dashboard(
    hs: &HsCode,
    inputs: &ReportInputs<'_>,
    tariffs: &TariffTable,
    opts: &DashboardOptions,
) -> Result<Dashboard> {
    let not_modeled = || Error::NotModeled(hs.to_string());
    let profile = inputs.profiles.iter().find(|p| &p.hs_code == hs).ok_or_else(not_modeled)?;
    let assignment = inputs.assignments.iter().find(|a| &a.hs_code == hs).ok_or_else(not_modeled)?;
    let forecast = inputs.forecasts.iter().find(|f| &f.hs_code == hs).ok_or_else(not_modeled)?;
    let feature = inputs.features.iter().find(|f| &f.hs_code == hs).ok_or_else(not_modeled)?;
    let price_history = inputs
        .series
        .iter()
        .find(|s| &s.hs_code == hs)
        .map(|s| s.priced().map(|(year, price)| PricePoint { year, price }).collect())
        .unwrap_or_default();

    Ok(Dashboard {
        hs_code: hs.clone(),
        tier: assignment.tier,
        quadrant: profile.quadrant,
        waste_score: profile.waste_score,
        scrutiny_score: profile.scrutiny_score,
        forecast: forecast.clone(),
        price_history,
        top_partners: rank_partners(inputs.records, hs, opts.ranking, opts.top_partners),
        tariff_rate: tariffs.lookup(hs),
        shap_top: profile.top_shap(3),
        market: MarketView {
            thresholds: QuadrantThresholds::from_population(inputs.features)?,
            product: (feature.log_avg_kg, feature.log_avg_price),
            population: inputs.features.iter().map(|f| (f.log_avg_kg, f.log_avg_price)).collect(),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryHotspot {
    pub partner: String,
    pub mean_waste_score: f64,
    pub n_products: usize,
}

/// Unweighted mean Waste Score over the distinct modeled products traded
/// with each partner, highest first.
pub fn country_hotspots(profiles: &[RiskProfile], records: &[TradeRecord]) -> Vec<CountryHotspot> {
    let scores: BTreeMap<&HsCode, f64> = profiles.iter().map(|p| (&p.hs_code, p.waste_score)).collect();
    let mut products: BTreeMap<&str, BTreeSet<&HsCode>> = BTreeMap::new();
    for r in records.iter().filter(|r| scores.contains_key(&r.hs_code)) {
        products.entry(r.partner.as_str()).or_default().insert(&r.hs_code);
    }
    let mut out: Vec<CountryHotspot> = products
        .into_iter()
        .map(|(partner, codes)| CountryHotspot {
            partner: partner.to_string(),
            mean_waste_score: codes.iter().map(|c| scores[c]).sum::<f64>() / codes.len() as f64,
            n_products: codes.len(),
        })
        .collect();
    out.sort_by(|a, b| {
        b.mean_waste_score
            .total_cmp(&a.mean_waste_score)
            .then_with(|| a.partner.cmp(&b.partner))
    });
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreemapDatum {
    pub tier: Tier,
    pub count: usize,
    pub share: f64,
}

/// Count and share per tier, all four tiers included.
pub fn treemap(assignments: &[SegmentAssignment]) -> Result<Vec<TreemapDatum>> {
    if assignments.is_empty() {
        return Err(Error::NothingToReport);
    }
    let total = assignments.len() as f64;
    Ok(Tier::ALL
        .iter()
        .map(|&tier| {
            let count = assignments.iter().filter(|a| a.tier == tier).count();
            TreemapDatum {
                tier,
                count,
                share: count as f64 / total,
            }
        })
        .collect())
}

pub const SVG_WIDTH: u32 = 960;
pub const SVG_HEIGHT: u32 = 720;

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Fixed-precision number for SVG output.
fn n(x: f64) -> String {
    let s = format!("{x:.4}");
    // avoid "-0.0000"
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        "0.0000".to_string()
    } else {
        s
    }
}

pub fn format_percent(rate: f64) -> String {
    let pct = rate * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{}%", pct.round() as i64)
    } else {
        format!("{pct:.2}%")
    }
}

/// Linear map of `[lo, hi]` onto `[a, b]`; a degenerate domain maps to the
/// midpoint.
fn scale(v: f64, lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    if hi > lo {
        a + (v - lo) / (hi - lo) * (b - a)
    } else {
        (a + b) / 2.0
    }
}

struct Panel {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl Panel {
    fn frame(&self, svg: &mut String, id: &str, title: &str) {
        let _ = writeln!(
            svg,
            r##"<g id="{id}"><rect x="{}" y="{}" width="{}" height="{}" fill="#fafafa" stroke="#999999"/><text x="{}" y="{}" font-size="14" font-weight="bold">{}</text></g>"##,
            n(self.x),
            n(self.y),
            n(self.w),
            n(self.h),
            n(self.x + 8.0),
            n(self.y + 18.0),
            esc(title)
        );
    }
}

fn quadrant_panel(svg: &mut String, d: &Dashboard) {
    let p = Panel { x: 20.0, y: 70.0, w: 450.0, h: 330.0 };
    p.frame(svg, "quadrant", "Market quadrant (log volume vs log price)");
    let m = &d.market;
    let xs = m.population.iter().map(|q| q.0).chain([m.product.0]);
    let ys = m.population.iter().map(|q| q.1).chain([m.product.1]);
    let (x_lo, x_hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (y_lo, y_hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (l, r, t, b) = (p.x + 40.0, p.x + p.w - 20.0, p.y + 35.0, p.y + p.h - 30.0);
    let px = |v: f64| scale(v, x_lo, x_hi, l, r);
    let py = |v: f64| scale(v, y_lo, y_hi, b, t);
    let mx = px(m.thresholds.log_volume);
    let my = py(m.thresholds.log_price);
    let _ = writeln!(
        svg,
        r##"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="#555555" stroke-dasharray="4 3"/><line x1="{3}" y1="{4}" x2="{5}" y2="{4}" stroke="#555555" stroke-dasharray="4 3"/>"##,
        n(mx),
        n(t),
        n(b),
        n(l),
        n(my),
        n(r)
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="#d62728" fill-opacity="0.06"/>"##,
        n(mx),
        n(my),
        n((r - mx).max(0.0)),
        n((b - my).max(0.0))
    );
    svg.push_str("<g id=\"population\">\n");
    for &(vx, vy) in &m.population {
        let _ = writeln!(svg, r##"<circle cx="{}" cy="{}" r="2.0000" fill="#7f7f7f"/>"##, n(px(vx)), n(py(vy)));
    }
    svg.push_str("</g>\n");
    let _ = writeln!(
        svg,
        r##"<circle id="product" cx="{}" cy="{}" r="6.0000" fill="#d62728" stroke="#000000"/>"##,
        n(px(m.product.0)),
        n(py(m.product.1))
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="12">quadrant: {}</text>"#,
        n(l),
        n(p.y + p.h - 8.0),
        d.quadrant.name()
    );
}

fn gauge(svg: &mut String, id: &str, label: &str, value: f64, x: f64, y: f64) {
    let w = 300.0;
    let _ = writeln!(
        svg,
        r##"<g id="{id}"><text x="{}" y="{}" font-size="13">{}</text><rect x="{}" y="{}" width="{}" height="16.0000" fill="#eeeeee" stroke="#999999"/><rect x="{}" y="{}" width="{}" height="16.0000" fill="#d62728"/><text class="gauge-value" x="{}" y="{}" font-size="13">{}</text></g>"##,
        n(x),
        n(y),
        esc(label),
        n(x),
        n(y + 6.0),
        n(w),
        n(x),
        n(y + 6.0),
        n(w * value.clamp(0.0, 1.0)),
        n(x + w + 10.0),
        n(y + 19.0),
        n(value)
    );
}

fn scores_panel(svg: &mut String, d: &Dashboard) {
    let p = Panel { x: 490.0, y: 70.0, w: 450.0, h: 330.0 };
    p.frame(svg, "scores", "Risk scores");
    gauge(svg, "waste-gauge", "Waste Score", d.waste_score, p.x + 16.0, p.y + 45.0);
    gauge(svg, "scrutiny-gauge", "Scrutiny Score", d.scrutiny_score, p.x + 16.0, p.y + 95.0);
    let tariff_text = d.tariff_rate.map_or_else(|| "n/a".to_string(), format_percent);
    let tariff_attr = d.tariff_rate.map_or_else(String::new, |r| format!(r#" data-rate="{}""#, n(r)));
    let _ = writeln!(
        svg,
        r#"<text id="tariff" x="{}" y="{}" font-size="13"{tariff_attr}>Tariff rate: {}</text>"#,
        n(p.x + 16.0),
        n(p.y + 160.0),
        esc(&tariff_text)
    );
    let _ = writeln!(
        svg,
        r#"<text id="tier" x="{}" y="{}" font-size="13">Segment: {}</text>"#,
        n(p.x + 16.0),
        n(p.y + 182.0),
        d.tier.name()
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="13" font-weight="bold">Top drivers (log-odds)</text>"#,
        n(p.x + 16.0),
        n(p.y + 215.0)
    );
    svg.push_str("<g id=\"shap\">\n");
    for (i, a) in d.shap_top.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="12">{}: {}</text>"#,
            n(p.x + 24.0),
            n(p.y + 237.0 + 20.0 * i as f64),
            a.feature.as_str(),
            n(a.value)
        );
    }
    svg.push_str("</g>\n");
}

fn forecast_panel(svg: &mut String, d: &Dashboard) {
    let p = Panel { x: 20.0, y: 420.0, w: 600.0, h: 280.0 };
    p.frame(svg, "forecast", "Unit price history and linear forecast (USD/kg)");
    let f = &d.forecast;
    let first_year = d.price_history.first().map_or(f.last_observed_year, |q| q.year);
    let prices = d.price_history.iter().chain(&f.path).map(|q| q.price).chain([0.0]);
    let (y_lo, y_hi) = prices.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (l, r, t, b) = (p.x + 50.0, p.x + p.w - 20.0, p.y + 35.0, p.y + p.h - 30.0);
    let px = |year: i32| scale(f64::from(year), f64::from(first_year), f64::from(f.horizon_year), l, r);
    let py = |v: f64| scale(v, y_lo, y_hi, b, t);
    if let Some(cross) = f.negative_cross_year {
        let x0 = px(cross);
        let _ = writeln!(
            svg,
            r##"<rect id="negative-region" data-from-year="{cross}" x="{}" y="{}" width="{}" height="{}" fill="#d62728" fill-opacity="0.15"/>"##,
            n(x0),
            n(py(0.0)),
            n(r - x0),
            n(b - py(0.0))
        );
    }
    let _ = writeln!(
        svg,
        r##"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="#333333"/>"##,
        n(l),
        n(py(0.0)),
        n(r)
    );
    let observed: Vec<String> = d
        .price_history
        .iter()
        .map(|q| format!("{},{}", n(px(q.year)), n(py(q.price))))
        .collect();
    let _ = writeln!(
        svg,
        r##"<polyline id="observed" points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
        observed.join(" ")
    );
    let projected: Vec<String> = d
        .price_history
        .last()
        .into_iter()
        .chain(&f.path)
        .map(|q| format!("{},{}", n(px(q.year)), n(py(q.price))))
        .collect();
    let _ = writeln!(
        svg,
        r##"<polyline id="projected" points="{}" fill="none" stroke="#d62728" stroke-width="2" stroke-dasharray="6 4"/>"##,
        projected.join(" ")
    );
    for year in [first_year, f.last_observed_year, f.horizon_year] {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">{year}</text>"#,
            n(px(year)),
            n(b + 16.0)
        );
    }
    let cross_text = f
        .negative_cross_year
        .map_or_else(|| "no negative crossing".to_string(), |y| format!("negative from {y}"));
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="12">slope {} per year; {}</text>"#,
        n(l),
        n(t + 4.0),
        n(f.slope),
        cross_text
    );
}

fn partner_panel(svg: &mut String, d: &Dashboard) {
    let p = Panel { x: 640.0, y: 420.0, w: 300.0, h: 280.0 };
    p.frame(svg, "partners", "Top trading partners (records)");
    let max = d.top_partners.iter().map(|s| s.records).max().unwrap_or(1).max(1) as f64;
    for (i, s) in d.top_partners.iter().enumerate() {
        let y = p.y + 40.0 + 30.0 * i as f64;
        let w = 180.0 * s.records as f64 / max;
        let _ = writeln!(
            svg,
            r##"<g class="partner"><text x="{}" y="{}" font-size="12">{}</text><rect x="{}" y="{}" width="{}" height="14.0000" fill="#2ca02c"/><text x="{}" y="{}" font-size="11">{}</text></g>"##,
            n(p.x + 12.0),
            n(y + 11.0),
            esc(&s.partner),
            n(p.x + 56.0),
            n(y),
            n(w),
            n(p.x + 62.0 + w),
            n(y + 11.0),
            s.records
        );
    }
}

/// One self-contained 960×720 SVG page for a dashboard. Output is a pure
/// function of the dashboard.
pub fn render_svg(d: &Dashboard) -> String {
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, r##"<rect width="{SVG_WIDTH}" height="{SVG_HEIGHT}" fill="#ffffff"/>"##);
    let _ = writeln!(
        svg,
        r#"<text id="title" x="20" y="40" font-size="22" font-weight="bold">Risk dashboard: HS {}</text>"#,
        esc(d.hs_code.as_str())
    );
    quadrant_panel(&mut svg, d);
    scores_panel(&mut svg, d);
    forecast_panel(&mut svg, d);
    partner_panel(&mut svg, d);
    svg.push_str("</svg>\n");
    svg
}
