//! Trade-record analytics for spotting products whose trade signature looks
//! like scrap: low unit price, high volume, falling prices.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! 1. [`ingest`] parses delimiter-separated trade records and cleans them into
//!    annual [`ingest::ProductSeries`].
//! 2. [`features`] turns each series into a [`features::FeatureVector`] and
//!    z-scores the population.
//! 3. [`segmentation`] runs K-Means / DBSCAN and the two-pass outlier-aware
//!    segmentation into four market tiers.
//! 4. [`risk`] fits the logistic Waste Score model, explains it with linear
//!    SHAP, and derives quadrants, trendline residuals and Scrutiny Scores.
//! 5. [`forecast`] extrapolates price trends and flags negative-price years.
//! 6. [`validation`] checks that the tiers are learnable with a bagged CART
//!    forest.
//! 7. [`report`] assembles dashboards, country hotspots and treemap data.
//!
//! [`pipeline`] wires the stages together from a single [`config::Config`].

pub mod config;
pub mod error;
pub mod features;
pub mod forecast;
pub mod ingest;
pub mod pipeline;
pub mod report;
pub mod risk;
pub mod segmentation;
pub mod stats;
pub mod synth;
pub mod validation;

pub use error::{Error, Result};
