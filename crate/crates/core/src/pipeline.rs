//! Stage wiring. Each stage function takes the previous stage's output and
//! the run [`Config`]; [`run_all`] chains them.

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::features::{self, Exclusion, FeatureVector, StandardizedMatrix};
use crate::forecast::{self, PriceForecast};
use crate::ingest::{self, CleaningReport, HsCode, Rejection, TradeRecord};
use crate::report::{self, CountryHotspot, Dashboard, ReportInputs, TreemapDatum};
use crate::risk::{self, RiskProfile, TrendlineFit, WasteModel};
use crate::segmentation::{self, Segmentation, Tier};
use crate::validation::{self, Evaluation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ingested {
    /// Records of the analysed flow, masses in kg.
    pub records: Vec<TradeRecord>,
    pub parse_rejections: Vec<Rejection>,
    pub cleaning: CleaningReport,
}

pub fn ingest(bytes: &[u8], cfg: &Config) -> Result<Ingested> {
    let parsed = ingest::parse_records(bytes, &cfg.parse_options()?)?;
    let flow = cfg.analysed_flow();
    let selected: Vec<TradeRecord> = parsed.records.into_iter().filter(|r| r.flow == flow).collect();
    let (records, _) = ingest::harmonize(selected.clone());
    let cleaning = ingest::clean(selected, &cfg.cleaning)?;
    log::info!(
        "ingest: {} records, {} rejected rows, {} series kept, {} dropped",
        records.len(),
        parsed.rejected.len() + cleaning.rejected.len(),
        cleaning.series.len(),
        cleaning.dropped.len()
    );
    Ok(Ingested {
        records,
        parse_rejections: parsed.rejected,
        cleaning,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Features {
    pub vectors: Vec<FeatureVector>,
    pub excluded: Vec<Exclusion>,
    pub matrix: StandardizedMatrix,
}

pub fn build_features(ingested: &Ingested, cfg: &Config) -> Result<Features> {
    let (vectors, excluded) = features::compute_all(&ingested.cleaning.series);
    let matrix = features::standardize(&vectors, cfg.features.set.names())?;
    Ok(Features {
        vectors,
        excluded,
        matrix,
    })
}

pub fn segment(f: &Features, cfg: &Config) -> Result<Segmentation> {
    let seg = segmentation::iterative_segment(&f.matrix, &f.vectors, &cfg.segmentation)?;
    log::info!(
        "segment: k = {} then {:?}, eps = {:.4}, tiers {:?}",
        seg.initial.chosen_k,
        seg.core.as_ref().map(|c| c.chosen_k),
        seg.eps,
        seg.tier_counts()
    );
    Ok(seg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub model: WasteModel,
    pub trendline: Option<TrendlineFit>,
    pub profiles: Vec<RiskProfile>,
}

pub fn score(f: &Features, cfg: &Config) -> Result<Scores> {
    cfg.labels.validate()?;
    let set = risk::build_training_set(&f.matrix, &cfg.labels)?;
    let model = risk::fit_logistic(&set, &cfg.risk)?;
    let trendline = match risk::fit_trendline(&f.vectors) {
        Ok(t) => Some(t),
        Err(e) => {
            log::warn!("trendline skipped: {e}");
            None
        }
    };
    let profiles = risk::score_population(&model, &f.matrix, &f.vectors, trendline.as_ref())?;
    Ok(Scores {
        model,
        trendline,
        profiles,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecasts {
    pub forecasts: Vec<PriceForecast>,
    /// One ranking per configured list size.
    pub rankings: Vec<Vec<HsCode>>,
}

/// Forecasts every product that has features.
pub fn forecast_all(ingested: &Ingested, f: &Features, cfg: &Config) -> Result<Forecasts> {
    let forecasts = ingested
        .cleaning
        .series
        .iter()
        .filter(|s| f.matrix.row_index(&s.hs_code).is_some())
        .map(|s| forecast::forecast_price(s, cfg.forecast.horizon))
        .collect::<Result<Vec<_>>>()?;
    let rankings = cfg
        .forecast
        .top
        .iter()
        .map(|&n| {
            forecast::rank_downtrends(&forecasts, n)
                .into_iter()
                .map(|f| f.hs_code)
                .collect()
        })
        .collect();
    Ok(Forecasts { forecasts, rankings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub training: Evaluation,
    pub oob_accuracy: Option<f64>,
    pub majority_baseline: f64,
    pub n_trees: usize,
}

pub fn validate(f: &Features, seg: &Segmentation, cfg: &Config) -> Result<ValidationSummary> {
    let tiers: Vec<Tier> = seg.assignments.iter().map(|a| a.tier).collect();
    let forest = validation::fit_forest(&f.matrix.values, &f.matrix.rows, &tiers, &cfg.validation)?;
    let summary = ValidationSummary {
        training: validation::evaluate(&forest, &f.matrix.values, &tiers),
        oob_accuracy: forest.oob_accuracy(&f.matrix.values, &tiers),
        majority_baseline: validation::majority_baseline(&tiers),
        n_trees: forest.trees.len(),
    };
    log::info!(
        "validate: training accuracy {:.4}, out-of-bag {:?}",
        summary.training.accuracy,
        summary.oob_accuracy
    );
    Ok(summary)
}

/// Every artifact of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub ingested: Ingested,
    pub features: Features,
    pub segmentation: Segmentation,
    pub scores: Scores,
    pub forecasts: Forecasts,
    pub validation: ValidationSummary,
    pub treemap: Vec<TreemapDatum>,
    pub hotspots: Vec<CountryHotspot>,
}

impl RunOutput {
    pub fn report_inputs(&self) -> ReportInputs<'_> {
        ReportInputs {
            series: &self.ingested.cleaning.series,
            features: &self.features.vectors,
            assignments: &self.segmentation.assignments,
            profiles: &self.scores.profiles,
            forecasts: &self.forecasts.forecasts,
            records: &self.ingested.records,
        }
    }

    pub fn dashboard(&self, hs: &HsCode, cfg: &Config) -> Result<Dashboard> {
        report::build_dashboard(hs, &self.report_inputs(), &cfg.report.tariffs, &cfg.report.dashboard_options())
    }

    pub fn dashboards(&self, cfg: &Config) -> Result<Vec<Dashboard>> {
        self.features.matrix.rows.iter().map(|hs| self.dashboard(hs, cfg)).collect()
    }
}

pub fn run_all(bytes: &[u8], cfg: &Config) -> Result<RunOutput> {
    cfg.validate()?;
    let ingested = ingest(bytes, cfg)?;
    if ingested.cleaning.series.is_empty() {
        return Err(Error::InsufficientData("no product series survived cleaning".into()));
    }
    let features = build_features(&ingested, cfg)?;
    let segmentation = segment(&features, cfg)?;
    let scores = score(&features, cfg)?;
    let forecasts = forecast_all(&ingested, &features, cfg)?;
    let validation = validate(&features, &segmentation, cfg)?;
    let treemap = report::treemap(&segmentation.assignments)?;
    let hotspots = report::country_hotspots(&scores.profiles, &ingested.records);
    Ok(RunOutput {
        ingested,
        features,
        segmentation,
        scores,
        forecasts,
        validation,
        treemap,
        hotspots,
    })
}
