//! `wastesig`: trade-record risk pipeline on the command line.

mod tables;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use wastesig_core::config::Config;
use wastesig_core::forecast::rank_downtrends;
use wastesig_core::ingest::HsCode;
use wastesig_core::pipeline::{self, Features, Ingested};
use wastesig_core::report::{render_svg, Dashboard};
use wastesig_core::risk::LabelConfig;
use wastesig_core::synth;

use tables::Table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Svg,
    Both,
}

#[derive(Debug, Parser)]
#[command(name = "wastesig", version, about = "Scrap-like trade signature detection on trade records")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every randomized step (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Tables: csv, json or both. Dashboards: json, svg or both.
    #[arg(long, global = true, value_enum, default_value = "both")]
    format: Format,
    /// Input field delimiter: one character or `tab` (overrides the config).
    #[arg(long, global = true)]
    delimiter: Option<String>,
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Input {
    /// Delimiter-separated trade records with a header row.
    input: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse, harmonize and clean trade records into annual series.
    Ingest(Input),
    /// Per-product feature table.
    Features {
        #[command(subcommand)]
        action: FeaturesAction,
    },
    /// Two-pass segmentation into market tiers.
    Segment {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        k_max: Option<usize>,
        /// Fixes K for the outlier-isolating first pass.
        #[arg(long)]
        k: Option<usize>,
        /// Fixes K for the second pass.
        #[arg(long)]
        k_core: Option<usize>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        min_pts: Option<usize>,
    },
    /// Waste Score, SHAP attributions, quadrants and Scrutiny Score.
    Score {
        #[command(flatten)]
        input: Input,
        /// TOML file with `scrap_codes` and `finished_codes` prefix lists.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        l2: Option<f64>,
    },
    /// Linear unit-price forecasts and downtrend rankings.
    Forecast {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        horizon: Option<i32>,
        /// Ranking sizes; repeat for several lists.
        #[arg(long)]
        top: Vec<usize>,
    },
    /// Bagged-tree check that the tiers are learnable from features.
    Validate {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        trees: Option<usize>,
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Dashboards, country hotspots and tier treemap data.
    Report {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        hs: Option<String>,
        #[arg(long)]
        all: bool,
        #[arg(long)]
        hotspots: bool,
        #[arg(long)]
        treemap: bool,
    },
    /// Every stage, every artifact.
    RunAll(Input),
    /// Write the seeded synthetic corpus and its ground truth.
    Synth {
        /// Only the 200-product segmentation block.
        #[arg(long)]
        segmentation_only: bool,
    },
}

#[derive(Debug, Subcommand)]
enum FeaturesAction {
    /// Write the feature table.
    Export(Input),
}

struct Out {
    dir: PathBuf,
    format: Format,
    delimiter: u8,
}

impl Out {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn table_formats(&self) -> (bool, bool) {
        match self.format {
            Format::Csv => (true, false),
            Format::Json => (false, true),
            Format::Svg | Format::Both => (true, true),
        }
    }

    fn write_table(&self, name: &str, table: &Table) -> Result<()> {
        let ext = if self.delimiter == b'\t' { "tsv" } else { "csv" };
        let path = self.path(&format!("{name}.{ext}"));
        let mut w = csv::WriterBuilder::new()
            .delimiter(self.delimiter)
            .from_path(&path)
            .with_context(|| format!("cannot write {}", path.display()))?;
        w.write_record(&table.header)?;
        for row in &table.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<()> {
        let path = self.path(&format!("{name}.json"));
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
    }

    /// Writes `table` and/or `json` according to the chosen format.
    fn emit<T: Serialize + ?Sized>(&self, name: &str, table: &Table, json: &T) -> Result<()> {
        let (csv, js) = self.table_formats();
        if csv {
            self.write_table(name, table)?;
        }
        if js {
            self.write_json(name, json)?;
        }
        Ok(())
    }

    fn dashboard(&self, d: &Dashboard) -> Result<()> {
        let dir = self.path("dashboards");
        fs::create_dir_all(&dir)?;
        let stem = dir.join(d.hs_code.as_str());
        if matches!(self.format, Format::Json | Format::Both | Format::Csv) {
            let mut text = serde_json::to_string_pretty(d)?;
            text.push('\n');
            fs::write(stem.with_extension("json"), text)?;
        }
        if matches!(self.format, Format::Svg | Format::Both) {
            fs::write(stem.with_extension("svg"), render_svg(d))?;
        }
        Ok(())
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(path) => Config::from_path(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(d) = &cli.delimiter {
        cfg.input.delimiter = d.clone();
    }
    Ok(cfg)
}

fn read_input(input: &Input) -> Result<Vec<u8>> {
    fs::read(&input.input).with_context(|| format!("cannot read {}", input.input.display()))
}

fn stage_features(input: &Input, cfg: &Config) -> Result<(Ingested, Features)> {
    let ingested = pipeline::ingest(&read_input(input)?, cfg)?;
    let features = pipeline::build_features(&ingested, cfg)?;
    Ok((ingested, features))
}

fn write_ingest(out: &Out, ingested: &Ingested) -> Result<()> {
    out.emit("series", &tables::series(&ingested.cleaning.series), &ingested.cleaning.series)?;
    let mut rejected = ingested.parse_rejections.clone();
    rejected.extend(ingested.cleaning.rejected.iter().cloned());
    out.emit("rejections", &tables::rejections(&rejected), &rejected)?;
    let dropped: Vec<&HsCode> = ingested.cleaning.dropped.iter().map(|s| &s.hs_code).collect();
    out.write_json("dropped", &dropped)
}

fn write_forecasts(out: &Out, f: &pipeline::Forecasts, cfg: &Config) -> Result<()> {
    out.emit("forecasts", &tables::forecasts(&f.forecasts), &f.forecasts)?;
    let (csv, _) = out.table_formats();
    if csv {
        out.write_table("forecast_paths", &tables::forecast_paths(&f.forecasts))?;
    }
    for &n in &cfg.forecast.top {
        let ranked = rank_downtrends(&f.forecasts, n);
        let refs: Vec<_> = ranked.iter().collect();
        out.emit(&format!("downtrends_top{n}"), &tables::downtrends(&refs), &ranked)?;
    }
    Ok(())
}

fn print_validation(v: &pipeline::ValidationSummary) {
    println!("training accuracy: {:.4}", v.training.accuracy);
    match v.oob_accuracy {
        Some(a) => println!("out-of-bag accuracy: {a:.4}"),
        None => println!("out-of-bag accuracy: n/a (every row in every bag)"),
    }
    println!("majority baseline: {:.4}", v.majority_baseline);
    let t = tables::confusion(v);
    println!("{}", t.header.join("\t"));
    for row in &t.rows {
        println!("{}", row.join("\t"));
    }
}

fn run(cli: &Cli) -> Result<()> {
    let mut cfg = load_config(cli)?;
    fs::create_dir_all(&cli.out_dir).with_context(|| format!("cannot create {}", cli.out_dir.display()))?;
    let out = Out {
        dir: cli.out_dir.clone(),
        format: cli.format,
        delimiter: cfg.input.delimiter_byte()?,
    };

    match &cli.command {
        Command::Ingest(input) => {
            let ingested = pipeline::ingest(&read_input(input)?, &cfg)?;
            write_ingest(&out, &ingested)?;
            println!(
                "{} series kept, {} dropped, {} rows rejected",
                ingested.cleaning.series.len(),
                ingested.cleaning.dropped.len(),
                ingested.parse_rejections.len() + ingested.cleaning.rejected.len()
            );
        }
        Command::Features {
            action: FeaturesAction::Export(input),
        } => {
            let (_, f) = stage_features(input, &cfg)?;
            out.emit("features", &tables::features(&f.vectors), &f.vectors)?;
            if !f.excluded.is_empty() {
                out.write_json("feature_exclusions", &f.excluded)?;
            }
            println!("{} products, {} excluded", f.vectors.len(), f.excluded.len());
        }
        Command::Segment {
            input,
            k_max,
            k,
            k_core,
            eps,
            min_pts,
        } => {
            let seg_cfg = &mut cfg.segmentation;
            seg_cfg.k_max = k_max.unwrap_or(seg_cfg.k_max);
            seg_cfg.k_initial = k.or(seg_cfg.k_initial);
            seg_cfg.k_core = k_core.or(seg_cfg.k_core);
            seg_cfg.eps = eps.or(seg_cfg.eps);
            seg_cfg.min_pts = min_pts.unwrap_or(seg_cfg.min_pts);
            cfg.validate()?;
            let (_, f) = stage_features(input, &cfg)?;
            let seg = pipeline::segment(&f, &cfg)?;
            out.emit("segments", &tables::segments(&seg.assignments), &seg.assignments)?;
            out.write_json("segmentation", &seg)?;
            for (tier, count) in seg.tier_counts() {
                println!("{tier}: {count}");
            }
        }
        Command::Score { input, labels, l2 } => {
            if let Some(path) = labels {
                let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
                cfg.labels = toml::from_str::<LabelConfig>(&text).context("invalid label file")?;
            }
            if let Some(l2) = l2 {
                cfg.risk.l2_lambda = *l2;
            }
            cfg.validate()?;
            let (_, f) = stage_features(input, &cfg)?;
            let scores = pipeline::score(&f, &cfg)?;
            out.emit("risk", &tables::risk(&scores.profiles), &scores.profiles)?;
            out.write_json("model", &scores.model)?;
            if let Some(t) = &scores.trendline {
                out.write_json("trendline", t)?;
            }
            println!("{} products scored, model converged: {}", scores.profiles.len(), scores.model.converged);
        }
        Command::Forecast { input, horizon, top } => {
            if let Some(h) = horizon {
                cfg.forecast.horizon = *h;
            }
            if !top.is_empty() {
                cfg.forecast.top = top.clone();
            }
            cfg.validate()?;
            let (ingested, f) = stage_features(input, &cfg)?;
            let fc = pipeline::forecast_all(&ingested, &f, &cfg)?;
            write_forecasts(&out, &fc, &cfg)?;
            let negative = fc.forecasts.iter().filter(|f| f.negative_cross_year.is_some()).count();
            println!("{} forecasts, {negative} cross below zero by {}", fc.forecasts.len(), cfg.forecast.horizon);
        }
        Command::Validate { input, trees, depth } => {
            cfg.validation.n_trees = trees.unwrap_or(cfg.validation.n_trees);
            cfg.validation.max_depth = depth.unwrap_or(cfg.validation.max_depth);
            cfg.validate()?;
            let (_, f) = stage_features(input, &cfg)?;
            let seg = pipeline::segment(&f, &cfg)?;
            let v = pipeline::validate(&f, &seg, &cfg)?;
            out.write_json("validation", &v)?;
            print_validation(&v);
        }
        Command::Report {
            input,
            hs,
            all,
            hotspots,
            treemap,
        } => {
            if hs.is_none() && !all && !hotspots && !treemap {
                bail!("choose at least one of --hs, --all, --hotspots, --treemap");
            }
            let run = pipeline::run_all(&read_input(input)?, &cfg)?;
            if let Some(code) = hs {
                let code: HsCode = code.parse().map_err(anyhow::Error::msg)?;
                out.dashboard(&run.dashboard(&code, &cfg)?)?;
            }
            if *all {
                for d in run.dashboards(&cfg)? {
                    out.dashboard(&d)?;
                }
            }
            if *hotspots {
                out.emit("hotspots", &tables::hotspots(&run.hotspots), &run.hotspots)?;
            }
            if *treemap {
                out.emit("treemap", &tables::treemap(&run.treemap), &run.treemap)?;
            }
        }
        Command::RunAll(input) => {
            let run = pipeline::run_all(&read_input(input)?, &cfg)?;
            write_ingest(&out, &run.ingested)?;
            out.emit("features", &tables::features(&run.features.vectors), &run.features.vectors)?;
            out.emit("segments", &tables::segments(&run.segmentation.assignments), &run.segmentation.assignments)?;
            out.write_json("segmentation", &run.segmentation)?;
            out.emit("risk", &tables::risk(&run.scores.profiles), &run.scores.profiles)?;
            out.write_json("model", &run.scores.model)?;
            write_forecasts(&out, &run.forecasts, &cfg)?;
            out.write_json("validation", &run.validation)?;
            out.emit("hotspots", &tables::hotspots(&run.hotspots), &run.hotspots)?;
            out.emit("treemap", &tables::treemap(&run.treemap), &run.treemap)?;
            let dashboards = run.dashboards(&cfg)?;
            let dash_out = Out {
                format: match cli.format {
                    Format::Csv => Format::Json,
                    f => f,
                },
                ..out
            };
            for d in &dashboards {
                dash_out.dashboard(d)?;
            }
            println!(
                "{} products modeled; tiers {:?}; {} dashboards written to {}",
                run.features.vectors.len(),
                run.segmentation
                    .tier_counts()
                    .iter()
                    .map(|(t, c)| format!("{t}={c}"))
                    .collect::<Vec<_>>(),
                dashboards.len(),
                cli.out_dir.display()
            );
            print_validation(&run.validation);
        }
        Command::Synth { segmentation_only } => {
            let corpus = synth::generate(cli.seed.unwrap_or(synth::DEFAULT_SEED));
            let csv = if *segmentation_only {
                corpus.segmentation_csv()
            } else {
                corpus.to_csv()
            };
            write_text(&out.path("corpus.csv"), &csv)?;
            let mut truth = String::from("hs_code,role\n");
            for (code, role) in &corpus.roles {
                let role = serde_json::to_value(role)?;
                let role = match &role {
                    serde_json::Value::String(s) => s.clone(),
                    serde_json::Value::Object(m) => m
                        .iter()
                        .map(|(k, v)| format!("{k}:{}", v.as_str().unwrap_or_default()))
                        .collect(),
                    other => other.to_string(),
                };
                truth.push_str(&format!("{code},{role}\n"));
            }
            write_text(&out.path("truth.csv"), &truth)?;
            println!("{} records written to {}", corpus.records.len(), out.path("corpus.csv").display());
        }
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
