//! Parsing and cleaning of raw trade records.
//!
//! The cleaning sequence is: [`harmonize`] masses to kilograms,
//! [`aggregate_series`] into annual per-product series, [`interpolate_gaps`],
//! [`exclude_sparse`], [`deflate`] monetary values, then [`winsorize`] the
//! pooled annual observations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Six-digit Harmonized System code.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct HsCode(String);

impl HsCode {
    /// Parses a 6-digit code, or a 4-digit heading which is right-padded
    /// with `"00"`. The returned flag is `true` when padding was applied.
    pub fn parse(raw: &str) -> std::result::Result<(HsCode, bool), String> {
        let raw = raw.trim();
        if !raw.bytes().all(|b| b.is_ascii_digit()) {
            return Err(format!("hs code `{raw}` is not numeric"));
        }
        match raw.len() {
            6 => Ok((HsCode(raw.to_string()), false)),
            4 => Ok((HsCode(format!("{raw}00")), true)),
            n => Err(format!("hs code `{raw}` has {n} digits, expected 6 (or 4)")),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn heading(&self) -> &str {
        &self.0[..4]
    }

    pub fn has_prefix(&self, prefix: &str) -> bool {
        self.0.starts_with(prefix)
    }
}

impl fmt::Display for HsCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for HsCode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (code, padded) = HsCode::parse(s)?;
        if padded {
            return Err(format!("hs code `{s}` is not 6 digits"));
        }
        Ok(code)
    }
}

impl TryFrom<String> for HsCode {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<HsCode> for String {
    fn from(code: HsCode) -> String {
        code.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flow {
    Export,
    Import,
}

impl FromStr for Flow {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "export" | "exports" | "x" => Ok(Flow::Export),
            "import" | "imports" | "m" => Ok(Flow::Import),
            other => Err(format!("unknown flow `{other}`")),
        }
    }
}

impl fmt::Display for Flow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flow::Export => "export",
            Flow::Import => "import",
        })
    }
}

/// Unit of a reported mass. Unrecognised units survive parsing so that
/// [`harmonize`] can reject them with a reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MassUnit {
    Kg,
    Tonne,
    Gram,
    Other(String),
}

impl MassUnit {
    fn from_cell(s: &str) -> MassUnit {
        match s.trim().to_ascii_lowercase().as_str() {
            "" | "kg" | "kgs" | "kilogram" | "kilograms" => MassUnit::Kg,
            "t" | "tonne" | "tonnes" | "ton" | "tons" => MassUnit::Tonne,
            "g" | "gram" | "grams" => MassUnit::Gram,
            other => MassUnit::Other(other.to_string()),
        }
    }

    pub fn kg_factor(&self) -> Option<f64> {
        match self {
            MassUnit::Kg => Some(1.0),
            MassUnit::Tonne => Some(1000.0),
            MassUnit::Gram => Some(0.001),
            MassUnit::Other(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub hs_code: HsCode,
    /// The code arrived as a 4-digit heading and was padded with "00".
    pub hs_padded: bool,
    pub year: i32,
    pub partner: String,
    pub flow: Flow,
    pub value_usd: f64,
    pub mass: f64,
    pub mass_unit: MassUnit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based line in the source file (0 when not tied to a line).
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParseReport {
    pub records: Vec<TradeRecord>,
    pub rejected: Vec<Rejection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearWindow {
    pub start: i32,
    pub end: i32,
}

impl YearWindow {
    pub fn new(start: i32, end: i32) -> Self {
        YearWindow { start, end }
    }

    pub fn len(&self) -> usize {
        (self.end - self.start + 1).max(0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, year: i32) -> bool {
        (self.start..=self.end).contains(&year)
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        self.start..=self.end
    }
}

impl Default for YearWindow {
    fn default() -> Self {
        YearWindow::new(2020, 2024)
    }
}

/// Canonical column names a trade file must (or may) provide.
pub const REQUIRED_COLUMNS: [&str; 6] = ["hs_code", "year", "partner", "flow", "value", "mass"];
pub const OPTIONAL_COLUMNS: [&str; 1] = ["mass_unit"];

/// Extra header names accepted for each canonical column. Matching is
/// case-insensitive; the canonical name itself always matches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ColumnAliases(pub BTreeMap<String, Vec<String>>);

impl Default for ColumnAliases {
    fn default() -> Self {
        let pairs: [(&str, &[&str]); 7] = [
            ("hs_code", &["hs", "cmdcode", "commodity_code"]),
            ("year", &["period", "refyear"]),
            ("partner", &["partneriso", "partner_iso3", "partner_iso"]),
            ("flow", &["flowdesc", "trade_flow"]),
            ("value", &["value_usd", "primaryvalue", "trade_value"]),
            ("mass", &["netwgt", "net_weight", "kg"]),
            ("mass_unit", &["unit", "qtyunit"]),
        ];
        ColumnAliases(
            pairs
                .iter()
                .map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect()))
                .collect(),
        )
    }
}

impl ColumnAliases {
    fn matches(&self, canonical: &str, header: &str) -> bool {
        let header = header.trim().to_ascii_lowercase();
        header == canonical
            || self
                .0
                .get(canonical)
                .is_some_and(|names| names.iter().any(|n| n.trim().to_ascii_lowercase() == header))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseOptions {
    pub delimiter: u8,
    pub aliases: ColumnAliases,
    /// Rows outside this window are rejected. `None` accepts every year.
    pub window: Option<YearWindow>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            delimiter: b',',
            aliases: ColumnAliases::default(),
            window: None,
        }
    }
}

struct ColumnMap {
    hs_code: usize,
    year: usize,
    partner: usize,
    flow: usize,
    value: usize,
    mass: usize,
    mass_unit: Option<usize>,
}

impl ColumnMap {
    fn resolve(headers: &csv::StringRecord, aliases: &ColumnAliases) -> Result<ColumnMap> {
        let find = |name: &str| headers.iter().position(|h| aliases.matches(name, h));
        let need = |name: &str| find(name).ok_or_else(|| Error::MissingColumn(name.to_string()));
        Ok(ColumnMap {
            hs_code: need("hs_code")?,
            year: need("year")?,
            partner: need("partner")?,
            flow: need("flow")?,
            value: need("value")?,
            mass: need("mass")?,
            mass_unit: find("mass_unit"),
        })
    }

    fn width(&self) -> usize {
        [self.hs_code, self.year, self.partner, self.flow, self.value, self.mass]
            .into_iter()
            .chain(self.mass_unit)
            .max()
            .unwrap_or(0)
            + 1
    }
}

fn parse_amount(cell: &str, what: &str) -> std::result::Result<f64, String> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Err(format!("missing {what}"));
    }
    let v: f64 = cell.parse().map_err(|_| format!("malformed {what} `{cell}`"))?;
    if !v.is_finite() {
        return Err(format!("non-finite {what}"));
    }
    if v < 0.0 {
        return Err(format!("negative {what}"));
    }
    Ok(v)
}

fn parse_row(
    row: &csv::StringRecord,
    cols: &ColumnMap,
    opts: &ParseOptions,
) -> std::result::Result<TradeRecord, String> {
    if row.len() < cols.width() {
        return Err(format!("row has {} fields, expected at least {}", row.len(), cols.width()));
    }
    let (hs_code, hs_padded) = HsCode::parse(&row[cols.hs_code])?;
    let year_cell = row[cols.year].trim();
    let year: i32 = year_cell
        .parse()
        .map_err(|_| format!("malformed year `{year_cell}`"))?;
    if let Some(w) = opts.window {
        if !w.contains(year) {
            return Err(format!("year {year} outside analysis window {}-{}", w.start, w.end));
        }
    }
    let partner = row[cols.partner].trim().to_ascii_uppercase();
    if partner.len() != 3 || !partner.bytes().all(|b| b.is_ascii_alphanumeric()) {
        return Err(format!("invalid partner code `{partner}`"));
    }
    let flow: Flow = row[cols.flow].parse()?;
    let value_usd = parse_amount(&row[cols.value], "value")?;
    let mass = parse_amount(&row[cols.mass], "mass")?;
    let mass_unit = cols
        .mass_unit
        .map(|i| MassUnit::from_cell(&row[i]))
        .unwrap_or(MassUnit::Kg);
    Ok(TradeRecord {
        hs_code,
        hs_padded,
        year,
        partner,
        flow,
        value_usd,
        mass,
        mass_unit,
    })
}

/// Parses delimiter-separated trade records.
///
/// A missing required column is fatal; malformed rows are skipped and listed
/// in the report with a reason. Row order is preserved.
pub fn parse_records(bytes: &[u8], opts: &ParseOptions) -> Result<ParseReport> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = reader.headers()?.clone();
    let cols = ColumnMap::resolve(&headers, &opts.aliases)?;

    let mut report = ParseReport::default();
    for row in reader.records() {
        let row = match row {
            Ok(row) => row,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                log::warn!("line {line}: unreadable row: {e}");
                report.rejected.push(Rejection {
                    line,
                    reason: format!("unreadable row: {e}"),
                });
                continue;
            }
        };
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        match parse_row(&row, &cols, opts) {
            Ok(rec) => report.records.push(rec),
            Err(reason) => {
                log::warn!("line {line}: {reason}");
                report.rejected.push(Rejection { line, reason });
            }
        }
    }
    Ok(report)
}

/// Converts every mass to kilograms. Records with an unknown unit are
/// returned separately with a reason.
pub fn harmonize(records: Vec<TradeRecord>) -> (Vec<TradeRecord>, Vec<Rejection>) {
    let mut kept = Vec::with_capacity(records.len());
    let mut rejected = Vec::new();
    for mut rec in records {
        match rec.mass_unit.kg_factor() {
            Some(factor) => {
                rec.mass *= factor;
                rec.mass_unit = MassUnit::Kg;
                kept.push(rec);
            }
            None => {
                let MassUnit::Other(unit) = &rec.mass_unit else {
                    unreachable!()
                };
                rejected.push(Rejection {
                    line: 0,
                    reason: format!("unknown mass unit `{unit}` for {} {}", rec.hs_code, rec.year),
                });
            }
        }
    }
    (kept, rejected)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleaningConfig {
    pub window: YearWindow,
    pub max_gap_interp: usize,
    pub max_missing_fraction: f64,
    pub deflators: BTreeMap<i32, f64>,
    pub cap_low_pct: f64,
    pub cap_high_pct: f64,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        let window = YearWindow::default();
        CleaningConfig {
            window,
            max_gap_interp: 2,
            max_missing_fraction: 0.20,
            deflators: window.years().map(|y| (y, 1.0)).collect(),
            cap_low_pct: 0.01,
            cap_high_pct: 0.99,
        }
    }
}

impl CleaningConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window.start > self.window.end {
            return Err(Error::Config(format!(
                "window start {} is after end {}",
                self.window.start, self.window.end
            )));
        }
        if !(0.0 <= self.cap_low_pct && self.cap_low_pct < self.cap_high_pct && self.cap_high_pct <= 1.0) {
            return Err(Error::Config(format!(
                "caps must satisfy 0 <= low < high <= 1, got {} / {}",
                self.cap_low_pct, self.cap_high_pct
            )));
        }
        if !(0.0..=1.0).contains(&self.max_missing_fraction) {
            return Err(Error::Config("max_missing_fraction must lie in [0, 1]".into()));
        }
        if let Some((y, d)) = self.deflators.iter().find(|(_, d)| !(d.is_finite() && **d > 0.0)) {
            return Err(Error::Config(format!("deflator for {y} must be positive, got {d}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub year: i32,
    pub value_usd: f64,
    pub kg: f64,
    /// `value_usd / kg` when `kg > 0`.
    pub unit_price: Option<f64>,
}

impl SeriesPoint {
    pub fn new(year: i32, value_usd: f64, kg: f64) -> Self {
        let mut p = SeriesPoint {
            year,
            value_usd,
            kg,
            unit_price: None,
        };
        p.recompute_price();
        p
    }

    fn recompute_price(&mut self) {
        self.unit_price = (self.kg > 0.0).then(|| self.value_usd / self.kg);
    }
}

/// Annual aggregates for one HS code and flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductSeries {
    pub hs_code: HsCode,
    pub flow: Flow,
    /// Strictly ascending by year.
    pub points: Vec<SeriesPoint>,
    pub missing_fraction: f64,
    pub interpolated_years: BTreeSet<i32>,
}

impl ProductSeries {
    pub fn priced(&self) -> impl Iterator<Item = (i32, f64)> + '_ {
        self.points.iter().filter_map(|p| p.unit_price.map(|u| (p.year, u)))
    }

    pub fn last_year(&self) -> Option<i32> {
        self.points.last().map(|p| p.year)
    }
}

/// Sums value and mass per (hs_code, flow, year) inside the window.
/// `missing_fraction` is measured here, before any interpolation.
pub fn aggregate_series(records: &[TradeRecord], cfg: &CleaningConfig) -> Vec<ProductSeries> {
    let mut sums: BTreeMap<(HsCode, Flow), BTreeMap<i32, (f64, f64)>> = BTreeMap::new();
    for rec in records.iter().filter(|r| cfg.window.contains(r.year)) {
        let factor = rec.mass_unit.kg_factor().unwrap_or(1.0);
        let slot = sums
            .entry((rec.hs_code.clone(), rec.flow))
            .or_default()
            .entry(rec.year)
            .or_insert((0.0, 0.0));
        slot.0 += rec.value_usd;
        slot.1 += rec.mass * factor;
    }
    let window_len = cfg.window.len() as f64;
    sums.into_iter()
        .map(|((hs_code, flow), years)| {
            let observed = years.len() as f64;
            ProductSeries {
                hs_code,
                flow,
                points: years
                    .into_iter()
                    .map(|(year, (v, kg))| SeriesPoint::new(year, v, kg))
                    .collect(),
                missing_fraction: (window_len - observed) / window_len,
                interpolated_years: BTreeSet::new(),
            }
        })
        .collect()
}

/// Fills interior gaps of at most `max_gap_interp` consecutive years by
/// linear interpolation of value and mass. Window edges are never filled.
pub fn interpolate_gaps(series: &ProductSeries, cfg: &CleaningConfig) -> ProductSeries {
    let mut out = series.clone();
    let mut points = Vec::with_capacity(cfg.window.len());
    for pair in series.points.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        points.push(a.clone());
        let gap = (b.year - a.year - 1) as usize;
        if gap == 0 || gap > cfg.max_gap_interp {
            continue;
        }
        let span = f64::from(b.year - a.year);
        for year in a.year + 1..b.year {
            let t = f64::from(year - a.year) / span;
            let value = a.value_usd + t * (b.value_usd - a.value_usd);
            let kg = a.kg + t * (b.kg - a.kg);
            points.push(SeriesPoint::new(year, value, kg));
            out.interpolated_years.insert(year);
        }
    }
    if let Some(last) = series.points.last() {
        points.push(last.clone());
    }
    out.points = points;
    out
}

/// Splits series into (kept, dropped); a series is dropped when its
/// missing fraction is strictly greater than the threshold.
pub fn exclude_sparse(
    all_series: Vec<ProductSeries>,
    cfg: &CleaningConfig,
) -> (Vec<ProductSeries>, Vec<ProductSeries>) {
    all_series
        .into_iter()
        .partition(|s| s.missing_fraction <= cfg.max_missing_fraction)
}

/// Multiplies monetary values by the per-year deflator. Every window year
/// must have a deflator.
pub fn deflate(series: &ProductSeries, cfg: &CleaningConfig) -> Result<ProductSeries> {
    if let Some(year) = cfg.window.years().find(|y| !cfg.deflators.contains_key(y)) {
        return Err(Error::MissingDeflator(year));
    }
    let mut out = series.clone();
    for p in &mut out.points {
        let factor = *cfg
            .deflators
            .get(&p.year)
            .ok_or(Error::MissingDeflator(p.year))?;
        p.value_usd *= factor;
        p.recompute_price();
    }
    Ok(out)
}

/// Capping bounds for one pooled column.
///
/// Bounds are the order statistics nearest the linear-interpolation
/// quantiles on the inward side: `x[ceil(h_lo)]` and `x[floor(h_hi)]` with
/// `h = (n − 1)·p`. This is the fixed point of repeatedly capping at the
/// interpolated quantiles, which makes capping idempotent. Returns `None`
/// when the bounds would cross (too few observations).
pub fn cap_bounds(values: &[f64], low_pct: f64, high_pct: f64) -> Option<(f64, f64)> {
    if values.len() < 2 {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let last = (sorted.len() - 1) as f64;
    let lo = (last * low_pct).ceil() as usize;
    let hi = (last * high_pct).floor() as usize;
    (lo <= hi).then(|| (sorted[lo], sorted[hi]))
}

#[derive(Clone, Copy)]
enum Column {
    Value,
    Kg,
    UnitPrice,
}

impl Column {
    fn get(self, p: &SeriesPoint) -> Option<f64> {
        match self {
            Column::Value => Some(p.value_usd),
            Column::Kg => Some(p.kg),
            Column::UnitPrice => p.unit_price,
        }
    }

    fn set(self, p: &mut SeriesPoint, v: f64) {
        match self {
            Column::Value => p.value_usd = v,
            Column::Kg => p.kg = v,
            Column::UnitPrice => p.unit_price = Some(v),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Column::Value => "value_usd",
            Column::Kg => "kg",
            Column::UnitPrice => "unit_price",
        }
    }
}

/// Caps value, mass and unit price independently over the pooled annual
/// observations of all series. Unit price is capped directly rather than
/// recomputed from the capped value and mass.
pub fn winsorize(all_series: &[ProductSeries], cfg: &CleaningConfig) -> Vec<ProductSeries> {
    let mut out = all_series.to_vec();
    for col in [Column::Value, Column::Kg, Column::UnitPrice] {
        let pooled: Vec<f64> = all_series
            .iter()
            .flat_map(|s| s.points.iter().filter_map(|p| col.get(p)))
            .collect();
        let Some((lo, hi)) = cap_bounds(&pooled, cfg.cap_low_pct, cfg.cap_high_pct) else {
            log::warn!(
                "winsorize: {} pooled {} observations, column left uncapped",
                pooled.len(),
                col.name()
            );
            continue;
        };
        for p in out.iter_mut().flat_map(|s| s.points.iter_mut()) {
            if let Some(v) = col.get(p) {
                col.set(p, v.clamp(lo, hi));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub series: Vec<ProductSeries>,
    pub dropped: Vec<ProductSeries>,
    pub rejected: Vec<Rejection>,
}

/// Runs the full cleaning sequence on parsed records.
pub fn clean(records: Vec<TradeRecord>, cfg: &CleaningConfig) -> Result<CleaningReport> {
    cfg.validate()?;
    let (records, rejected) = harmonize(records);
    let series = aggregate_series(&records, cfg);
    let series: Vec<_> = series.iter().map(|s| interpolate_gaps(s, cfg)).collect();
    let (kept, dropped) = exclude_sparse(series, cfg);
    let deflated = kept.iter().map(|s| deflate(s, cfg)).collect::<Result<Vec<_>>>()?;
    Ok(CleaningReport {
        series: winsorize(&deflated, cfg),
        dropped,
        rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "hs_code,year,partner,flow,value,mass,mass_unit\n";

    fn parse(body: &str) -> ParseReport {
        parse_records(format!("{HEADER}{body}").as_bytes(), &ParseOptions::default()).unwrap()
    }

    fn rec(hs: &str, year: i32, value: f64, mass: f64) -> TradeRecord {
        TradeRecord {
            hs_code: hs.parse().unwrap(),
            hs_padded: false,
            year,
            partner: "JPN".into(),
            flow: Flow::Export,
            value_usd: value,
            mass,
            mass_unit: MassUnit::Kg,
        }
    }

    fn series(points: &[(i32, f64, f64)], missing_fraction: f64) -> ProductSeries {
        ProductSeries {
            hs_code: "392010".parse().unwrap(),
            flow: Flow::Export,
            points: points.iter().map(|&(y, v, kg)| SeriesPoint::new(y, v, kg)).collect(),
            missing_fraction,
            interpolated_years: BTreeSet::new(),
        }
    }

    #[test]
    fn parses_a_plain_row() {
        let report = parse("392010,2021,JPN,export,1000,500,kg\n");
        assert!(report.rejected.is_empty());
        let r = &report.records[0];
        assert_eq!(r.hs_code.as_str(), "392010");
        assert_eq!(r.year, 2021);
        assert_eq!(r.value_usd, 1000.0);
        assert_eq!(r.mass, 500.0);
        assert_eq!(r.mass_unit, MassUnit::Kg);
        assert_eq!(r.flow, Flow::Export);
    }

    #[test]
    fn tonne_rows_harmonize_to_kg() {
        let report = parse("392010,2021,JPN,export,1000,0.5,tonne\n");
        assert_eq!(report.records[0].mass_unit, MassUnit::Tonne);
        let (kept, _) = harmonize(report.records);
        assert_eq!(kept[0].mass, 500.0);
        assert_eq!(kept[0].mass_unit, MassUnit::Kg);
    }

    #[test]
    fn negative_value_is_rejected() {
        let report = parse("392010,2021,JPN,export,-5,500,kg\n392010,2022,JPN,export,5,5,kg\n");
        assert_eq!(report.records.len(), 1);
        assert_eq!(report.rejected.len(), 1);
        assert_eq!(report.rejected[0].reason, "negative value");
        assert_eq!(report.rejected[0].line, 2);
    }

    #[test]
    fn missing_required_column_is_fatal() {
        let err = parse_records(b"hs_code,year,partner,flow,value\n", &ParseOptions::default());
        assert!(matches!(err, Err(Error::MissingColumn(c)) if c == "mass"));
    }

    #[test]
    fn aliases_and_four_digit_codes() {
        let text = "cmdCode,Period,PartnerISO,flowDesc,primaryValue,netWgt\n7204,2020,kor,Export,10,20\n";
        let report = parse_records(text.as_bytes(), &ParseOptions::default()).unwrap();
        let r = &report.records[0];
        assert_eq!(r.hs_code.as_str(), "720400");
        assert!(r.hs_padded);
        assert_eq!(r.partner, "KOR");
    }

    #[test]
    fn tab_delimited_input() {
        let text = "hs_code\tyear\tpartner\tflow\tvalue\tmass\n392010\t2021\tJPN\texport\t1\t2\n";
        let opts = ParseOptions {
            delimiter: b'\t',
            ..ParseOptions::default()
        };
        assert_eq!(parse_records(text.as_bytes(), &opts).unwrap().records.len(), 1);
    }

    #[test]
    fn malformed_rows_are_skipped_in_order() {
        let report = parse(
            "392010,2021,JPN,export,1,1,kg\n39201,2021,JPN,export,1,1,kg\n392010,x,JPN,export,1,1,kg\n392010,2022,USA,import,2,2,kg\n392010,2023\n",
        );
        assert_eq!(report.records.len(), 2);
        assert_eq!(report.records[1].partner, "USA");
        assert_eq!(report.rejected.len(), 3);
    }

    #[test]
    fn window_rejects_out_of_range_years() {
        let opts = ParseOptions {
            window: Some(YearWindow::default()),
            ..ParseOptions::default()
        };
        let text = format!("{HEADER}392010,2019,JPN,export,1,1,kg\n");
        let report = parse_records(text.as_bytes(), &opts).unwrap();
        assert!(report.records.is_empty());
        assert!(report.rejected[0].reason.contains("outside analysis window"));
    }

    #[test]
    fn harmonize_unit_table() {
        let mut a = rec("392010", 2020, 1.0, 2.5);
        a.mass_unit = MassUnit::Tonne;
        let mut b = rec("392010", 2020, 1.0, 500.0);
        b.mass_unit = MassUnit::Gram;
        let c = rec("392010", 2020, 1.0, 7.0);
        let mut d = rec("392010", 2020, 1.0, 7.0);
        d.mass_unit = MassUnit::Other("lb".into());
        let (kept, rejected) = harmonize(vec![a, b, c, d]);
        let masses: Vec<f64> = kept.iter().map(|r| r.mass).collect();
        assert_eq!(masses, vec![2500.0, 0.5, 7.0]);
        assert_eq!(rejected.len(), 1);
        assert!(rejected[0].reason.contains("unknown mass unit"));
    }

    #[test]
    fn harmonize_is_idempotent() {
        let mut a = rec("392010", 2020, 1.0, 2.5);
        a.mass_unit = MassUnit::Tonne;
        let (once, _) = harmonize(vec![a]);
        let (twice, _) = harmonize(once.clone());
        assert_eq!(once, twice);
    }

    #[test]
    fn aggregation_sums_within_year() {
        let cfg = CleaningConfig::default();
        let out = aggregate_series(
            &[rec("392010", 2021, 100.0, 10.0), rec("392010", 2021, 50.0, 10.0)],
            &cfg,
        );
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].points, vec![SeriesPoint::new(2021, 150.0, 20.0)]);
        assert_eq!(out[0].points[0].unit_price, Some(7.5));
    }

    #[test]
    fn aggregation_missing_fraction() {
        let cfg = CleaningConfig::default();
        let full: Vec<_> = (2020..=2024).map(|y| rec("392010", y, 1.0, 1.0)).collect();
        assert_eq!(aggregate_series(&full, &cfg)[0].missing_fraction, 0.0);
        let ends = [rec("392010", 2020, 1.0, 1.0), rec("392010", 2024, 1.0, 1.0)];
        // three of five window years have no record
        assert!((aggregate_series(&ends, &cfg)[0].missing_fraction - 0.6).abs() < 1e-12);
    }

    #[test]
    fn aggregation_separates_flows_and_skips_zero_mass_price() {
        let cfg = CleaningConfig::default();
        let mut imp = rec("392010", 2021, 5.0, 0.0);
        imp.flow = Flow::Import;
        let out = aggregate_series(&[rec("392010", 2021, 1.0, 1.0), imp], &cfg);
        assert_eq!(out.len(), 2);
        assert_eq!(out[1].flow, Flow::Import);
        assert_eq!(out[1].points[0].unit_price, None);
    }

    #[test]
    fn interpolation_fills_short_interior_gap() {
        let cfg = CleaningConfig::default();
        let s = series(&[(2020, 10.0, 100.0), (2022, 30.0, 300.0)], 0.6);
        let out = interpolate_gaps(&s, &cfg);
        assert_eq!(out.points.len(), 3);
        assert_eq!(out.points[1].year, 2021);
        assert_eq!(out.points[1].kg, 200.0);
        assert_eq!(out.interpolated_years, BTreeSet::from([2021]));
        assert_eq!(out.missing_fraction, 0.6);
    }

    #[test]
    fn interpolation_leaves_long_gap() {
        let cfg = CleaningConfig::default();
        let s = series(&[(2020, 1.0, 1.0), (2024, 1.0, 1.0)], 0.6);
        let out = interpolate_gaps(&s, &cfg);
        assert_eq!(out.points.len(), 2);
        assert!(out.interpolated_years.is_empty());
    }

    #[test]
    fn interpolation_never_extrapolates() {
        let cfg = CleaningConfig::default();
        let s = series(&[(2021, 1.0, 1.0), (2022, 1.0, 1.0)], 0.6);
        let out = interpolate_gaps(&s, &cfg);
        assert_eq!(out.points.first().unwrap().year, 2021);
        assert_eq!(out.points.last().unwrap().year, 2022);
    }

    #[test]
    fn sparse_boundary_is_kept() {
        let cfg = CleaningConfig::default();
        let (kept, dropped) = exclude_sparse(vec![series(&[], 0.2), series(&[], 0.4)], &cfg);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].missing_fraction, 0.2);
        assert_eq!(dropped[0].missing_fraction, 0.4);
        let (_, none) = exclude_sparse(vec![series(&[], 0.0)], &cfg);
        assert!(none.is_empty());
    }

    #[test]
    fn deflate_scales_value_only() {
        let mut cfg = CleaningConfig::default();
        let s = series(&[(2021, 100.0, 10.0)], 0.0);
        assert_eq!(deflate(&s, &cfg).unwrap(), s);
        cfg.deflators.insert(2021, 1.10);
        let out = deflate(&s, &cfg).unwrap();
        assert!((out.points[0].value_usd - 110.0).abs() < 1e-12);
        assert_eq!(out.points[0].kg, 10.0);
        assert!((out.points[0].unit_price.unwrap() - 11.0).abs() < 1e-12);
    }

    #[test]
    fn deflate_missing_year_is_fatal() {
        let mut cfg = CleaningConfig::default();
        cfg.deflators.remove(&2023);
        let s = series(&[(2021, 100.0, 10.0)], 0.0);
        assert!(matches!(deflate(&s, &cfg), Err(Error::MissingDeflator(2023))));
    }

    #[test]
    fn config_validation() {
        let mut cfg = CleaningConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.cap_low_pct = 0.99;
        assert!(cfg.validate().is_err());
        let mut cfg = CleaningConfig::default();
        cfg.deflators.insert(2020, 0.0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn winsorize_one_to_hundred() {
        let cfg = CleaningConfig::default();
        let all: Vec<_> = (1..=100)
            .map(|i| series(&[(2020, 1.0, f64::from(i))], 0.0))
            .collect();
        let out = winsorize(&all, &cfg);
        let kg: Vec<f64> = out.iter().map(|s| s.points[0].kg).collect();
        // interpolated quantiles are 1.99 and 99.01; the inward order
        // statistics are the 2nd and 99th values
        assert_eq!(kg[0], 2.0);
        assert_eq!(kg[99], 99.0);
        assert_eq!(&kg[1..99], &(2..=99).map(f64::from).collect::<Vec<_>>()[..]);
    }

    #[test]
    fn cap_bounds_are_the_limit_of_repeated_interpolated_capping() {
        // cap at the interpolated quantiles over and over; the bounds
        // converge to the inward order statistics
        let mut xs: Vec<f64> = (1..=100).map(f64::from).collect();
        for _ in 0..2000 {
            let mut sorted = xs.clone();
            sorted.sort_by(f64::total_cmp);
            let lo = crate::stats::quantile_linear(&sorted, 0.01);
            let hi = crate::stats::quantile_linear(&sorted, 0.99);
            xs.iter_mut().for_each(|x| *x = x.clamp(lo, hi));
        }
        let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = cap_bounds(&(1..=100).map(f64::from).collect::<Vec<_>>(), 0.01, 0.99).unwrap();
        assert!((min - lo).abs() < 1e-9);
        assert!((max - hi).abs() < 1e-9);
    }

    #[test]
    fn winsorize_constant_is_noop() {
        let cfg = CleaningConfig::default();
        let all: Vec<_> = (0..10).map(|_| series(&[(2020, 3.0, 3.0)], 0.0)).collect();
        assert_eq!(winsorize(&all, &cfg), all);
    }

    #[test]
    fn winsorize_single_observation_is_noop() {
        let cfg = CleaningConfig::default();
        let all = vec![series(&[(2020, 3.0, 3.0)], 0.0)];
        assert_eq!(winsorize(&all, &cfg), all);
    }

    #[test]
    fn winsorize_caps_unit_price_directly() {
        let cfg = CleaningConfig {
            cap_low_pct: 0.25,
            cap_high_pct: 0.75,
            ..CleaningConfig::default()
        };
        let all: Vec<_> = [(1.0, 1.0), (2.0, 1.0), (3.0, 1.0), (4.0, 1.0), (50.0, 1.0)]
            .iter()
            .map(|&(v, kg)| series(&[(2020, v, kg)], 0.0))
            .collect();
        let out = winsorize(&all, &cfg);
        let prices: Vec<f64> = out.iter().map(|s| s.points[0].unit_price.unwrap()).collect();
        assert_eq!(prices, vec![2.0, 2.0, 3.0, 4.0, 4.0]);
    }
}
