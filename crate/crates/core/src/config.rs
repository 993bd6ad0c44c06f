//! Run configuration, read from one TOML file. Every section is optional and
//! falls back to its defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::ingest::{CleaningConfig, ColumnAliases, Flow, ParseOptions};
use crate::report::{DashboardOptions, PartnerRanking, TariffTable};
use crate::risk::{LabelConfig, LogisticParams};
use crate::segmentation::SegmentConfig;
use crate::validation::ForestParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputConfig {
    /// Single character, or `"tab"`.
    pub delimiter: String,
    pub aliases: ColumnAliases,
}

impl Default for InputConfig {
    fn default() -> Self {
        InputConfig {
            delimiter: ",".into(),
            aliases: ColumnAliases::default(),
        }
    }
}

impl InputConfig {
    pub fn delimiter_byte(&self) -> Result<u8> {
        match self.delimiter.as_str() {
            "tab" | "\\t" | "\t" => Ok(b'\t'),
            d if d.len() == 1 => Ok(d.as_bytes()[0]),
            d => Err(Error::Config(format!("delimiter must be one ASCII character or `tab`, got `{d}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeaturesConfig {
    pub set: FeatureSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastConfig {
    pub horizon: i32,
    /// Sizes of the downtrend rankings to emit.
    pub top: Vec<usize>,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        ForecastConfig {
            horizon: 2030,
            top: vec![6, 15],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportConfig {
    pub tariffs: TariffTable,
    pub top_partners: usize,
    pub partner_ranking: PartnerRanking,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            tariffs: TariffTable::default(),
            top_partners: 5,
            partner_ranking: PartnerRanking::Count,
        }
    }
}

impl ReportConfig {
    pub fn dashboard_options(&self) -> DashboardOptions {
        DashboardOptions {
            top_partners: self.top_partners,
            ranking: self.partner_ranking,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    /// When set, replaces the K-Means and forest seeds.
    pub seed: Option<u64>,
    /// Trade direction that is analysed.
    pub flow: Option<Flow>,
    pub input: InputConfig,
    pub cleaning: CleaningConfig,
    pub features: FeaturesConfig,
    pub segmentation: SegmentConfig,
    pub labels: LabelConfig,
    pub risk: LogisticParams,
    pub forecast: ForecastConfig,
    pub validation: ForestParams,
    pub report: ReportConfig,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Config> {
        let mut cfg: Config = toml::from_str(text)?;
        if let Some(seed) = cfg.seed {
            cfg.set_seed(seed);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Config::from_toml_str(&text)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.segmentation.kmeans.seed = seed;
        self.validation.seed = seed;
    }

    pub fn analysed_flow(&self) -> Flow {
        self.flow.unwrap_or(Flow::Export)
    }

    pub fn parse_options(&self) -> Result<ParseOptions> {
        Ok(ParseOptions {
            delimiter: self.input.delimiter_byte()?,
            aliases: self.input.aliases.clone(),
            window: Some(self.cleaning.window),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.input.delimiter_byte()?;
        self.cleaning.validate()?;
        self.labels.validate()?;
        let seg = &self.segmentation;
        if seg.k_max < 2 || seg.min_pts == 0 || seg.kmeans.n_restarts == 0 || seg.kmeans.max_iter == 0 {
            return Err(Error::Config(
                "segmentation needs k_max >= 2 and positive min_pts, n_restarts, max_iter".into(),
            ));
        }
        if seg.eps.is_some_and(|e| e.is_nan() || e <= 0.0) {
            return Err(Error::Config("eps must be positive".into()));
        }
        if self.risk.l2_lambda.is_nan() || self.risk.l2_lambda < 0.0 {
            return Err(Error::Config("l2_lambda must be non-negative".into()));
        }
        if self.validation.n_trees == 0 || self.validation.min_leaf == 0 {
            return Err(Error::Config("validation needs n_trees >= 1 and min_leaf >= 1".into()));
        }
        if self.forecast.horizon <= self.cleaning.window.end {
            return Err(Error::Config(format!(
                "forecast horizon {} must be after the analysis window end {}",
                self.forecast.horizon, self.cleaning.window.end
            )));
        }
        if let Some((code, rate)) = self.report.tariffs.0.iter().find(|(_, r)| !(r.is_finite() && **r >= 0.0)) {
            return Err(Error::Config(format!("tariff for {code} must be a non-negative ratio, got {rate}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = Config::from_toml_str("").unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.forecast.top, vec![6, 15]);
        assert_eq!(cfg.analysed_flow(), Flow::Export);
    }

    #[test]
    fn partial_sections_and_seed() {
        let cfg = Config::from_toml_str(
            r#"
seed = 7
flow = "import"

[input]
delimiter = "tab"

[segmentation]
k_max = 8

[report.tariffs]
"7204" = 0.05
"8502" = 0.0
"#,
        )
        .unwrap();
        assert_eq!(cfg.segmentation.k_max, 8);
        assert_eq!(cfg.segmentation.min_pts, 5);
        assert_eq!(cfg.segmentation.kmeans.seed, 7);
        assert_eq!(cfg.validation.seed, 7);
        assert_eq!(cfg.parse_options().unwrap().delimiter, b'\t');
        assert_eq!(cfg.report.tariffs.0["7204"], 0.05);
        assert_eq!(cfg.analysed_flow(), Flow::Import);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(Config::from_toml_str("[input]\ndelimiter = \";;\"").is_err());
        assert!(Config::from_toml_str("[cleaning]\ncap_low_pct = 0.9\ncap_high_pct = 0.1").is_err());
        assert!(Config::from_toml_str("[labels]\nscrap_codes = [\"85\"]\nfinished_codes = [\"8542\"]").is_err());
        assert!(Config::from_toml_str("[forecast]\nhorizon = 2024").is_err());
        assert!(Config::from_toml_str("[report.tariffs]\n\"7204\" = -1.0").is_err());
        assert!(Config::from_toml_str("unknown_key = 1").is_ok());
    }
}
