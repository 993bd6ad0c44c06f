//! Seeded synthetic trade corpus with known ground truth.
//!
//! The segmentation block holds 200 products: 142 super-core, 40 core,
//! 15 high-value niche and 3 extreme outliers. A labeled block adds
//! scrap-like (HS 7204) and finished-like (HS 8542) exemplars plus one
//! finished good (HS 8502) whose trade looks like scrap. Filler rows
//! exercise cleaning: sparse products, one-year gaps, tonne/gram units,
//! import rows and a few malformed lines.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::features::FeatureVector;
use crate::ingest::{Flow, HsCode, MassUnit, TradeRecord, YearWindow};
use crate::segmentation::Tier;

pub const DEFAULT_SEED: u64 = 42;

const PARTNERS: [&str; 8] = ["CHN", "DEU", "DNK", "JPN", "KOR", "SGP", "THA", "USA"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Segment(Tier),
    Scrap,
    Finished,
    /// Finished good whose volume and price look like scrap.
    Disguised,
    /// Too many missing years; cleaning drops it.
    Sparse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCorpus {
    pub seed: u64,
    pub records: Vec<TradeRecord>,
    pub roles: BTreeMap<HsCode, Role>,
    /// Lines appended to the CSV that the parser must reject.
    pub malformed_lines: Vec<String>,
}

pub const CSV_HEADER: &str = "hs_code,year,partner,flow,value,mass,mass_unit";

fn unit_name(u: &MassUnit) -> &str {
    match u {
        MassUnit::Kg => "kg",
        MassUnit::Tonne => "t",
        MassUnit::Gram => "g",
        MassUnit::Other(s) => s,
    }
}

fn write_csv<'a>(records: impl Iterator<Item = &'a TradeRecord>, extra: &[String]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.hs_code,
            r.year,
            r.partner,
            r.flow,
            r.value_usd,
            r.mass,
            unit_name(&r.mass_unit)
        ));
    }
    for line in extra {
        out.push_str(line);
        out.push('\n');
    }
    out
}

impl SynthCorpus {
    pub fn to_csv(&self) -> String {
        write_csv(self.records.iter(), &self.malformed_lines)
    }

    /// Only the 200-product segmentation block, without filler lines.
    pub fn segmentation_csv(&self) -> String {
        let codes = self.codes_where(|r| matches!(r, Role::Segment(_)));
        write_csv(self.records.iter().filter(|r| codes.contains(&r.hs_code)), &[])
    }

    pub fn codes_where(&self, pred: impl Fn(Role) -> bool) -> Vec<HsCode> {
        self.roles
            .iter()
            .filter(|(_, &r)| pred(r))
            .map(|(c, _)| c.clone())
            .collect()
    }

    pub fn tier_of(&self, hs: &HsCode) -> Option<Tier> {
        match self.roles.get(hs) {
            Some(Role::Segment(t)) => Some(*t),
            _ => None,
        }
    }
}

/// Annual (kg, unit price) path of one product.
type Path = Vec<(i32, f64, f64)>;

struct Gen {
    rng: ChaCha8Rng,
    std_normal: Normal<f64>,
    window: YearWindow,
}

impl Gen {
    fn n(&mut self) -> f64 {
        self.std_normal.sample(&mut self.rng)
    }

    fn u(&mut self, lo: f64, hi: f64) -> f64 {
        if hi > lo {
            self.rng.random_range(lo..hi)
        } else {
            lo
        }
    }

    /// Flat blob member: per-product level jitter, small per-year noise.
    fn blob(&mut self, kg: f64, price: f64, level_jitter: f64) -> Path {
        let kg0 = kg * self.u(1.0 - level_jitter, 1.0 + level_jitter);
        let p0 = price * self.u(1.0 - level_jitter, 1.0 + level_jitter);
        let years: Vec<i32> = self.window.years().collect();
        years
            .into_iter()
            .map(|y| {
                let k = kg0 * (1.0 + 0.01 * self.n());
                let p = p0 * (1.0 + 0.005 * self.n());
                (y, k, p)
            })
            .collect()
    }

    fn explicit(&self, kgs: &[f64], prices: &[f64]) -> Path {
        self.window
            .years()
            .zip(kgs.iter().zip(prices))
            .map(|(y, (&k, &p))| (y, k, p))
            .collect()
    }

    /// Splits one product-year across partners and mass units.
    fn emit(&mut self, hs: &HsCode, flow: Flow, path: &Path, out: &mut Vec<TradeRecord>) {
        for &(year, kg, price) in path {
            let parts = self.rng.random_range(2..=3usize);
            let mut partners: Vec<&str> = Vec::with_capacity(parts);
            while partners.len() < parts {
                let p = PARTNERS[self.rng.random_range(0..PARTNERS.len())];
                if !partners.contains(&p) {
                    partners.push(p);
                }
            }
            let weights: Vec<f64> = (0..parts).map(|_| self.u(0.5, 1.5)).collect();
            let total: f64 = weights.iter().sum();
            for (partner, w) in partners.into_iter().zip(weights) {
                let share_kg = kg * w / total;
                let roll = self.u(0.0, 1.0);
                let (mass, unit) = if roll < 0.15 {
                    (share_kg / 1000.0, MassUnit::Tonne)
                } else if roll < 0.20 {
                    (share_kg * 1000.0, MassUnit::Gram)
                } else {
                    (share_kg, MassUnit::Kg)
                };
                out.push(TradeRecord {
                    hs_code: hs.clone(),
                    hs_padded: false,
                    year,
                    partner: partner.to_string(),
                    flow,
                    value_usd: share_kg * price,
                    mass,
                    mass_unit: unit,
                });
            }
        }
    }
}

fn code(n: u32) -> HsCode {
    format!("{n:06}").parse().expect("six digits")
}

/// Generates the full corpus over the default 2020–2024 window.
pub fn generate(seed: u64) -> SynthCorpus {
    let window = YearWindow::default();
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        std_normal: Normal::new(0.0, 1.0).expect("unit normal"),
        window,
    };
    let mut records = Vec::new();
    let mut roles = BTreeMap::new();
    let mut add = |g: &mut Gen, hs: HsCode, role: Role, path: Path, records: &mut Vec<TradeRecord>| {
        g.emit(&hs, Flow::Export, &path, records);
        roles.insert(hs, role);
    };

    for i in 0..142 {
        let mut path = g.blob(1.0e5, 5.0, 0.10);
        // one interior gap every 20 products; cleaning interpolates it
        if i % 20 == 7 {
            path.remove(2);
        }
        add(&mut g, code(840_100 + i), Role::Segment(Tier::SuperCore), path, &mut records);
    }
    for i in 0..40 {
        let path = g.blob(4.0e5, 15.0, 0.10);
        add(&mut g, code(390_100 + i), Role::Segment(Tier::Core), path, &mut records);
    }
    for i in 0..15 {
        let path = g.blob(3.5e4, 60.0, 0.10);
        add(&mut g, code(900_100 + i), Role::Segment(Tier::HighValueNiche), path, &mut records);
    }
    // each outlier is extreme on a different axis, and all are volatile
    let flat = [2.0e5; 5];
    let outliers = [
        (711_200, g.explicit(&flat, &[5.0, 35.0, 5.0, 35.0, 5.0])),
        (740_400, g.explicit(&[1.0e5, 1.5e5, 2.0e5, 2.5e5, 3.0e5], &[20.0, 28.0, 20.0, 28.0, 20.0])),
        (760_200, g.explicit(&flat, &[22.0, 19.0, 16.0, 13.0, 10.0])),
    ];
    for (hs, path) in outliers {
        add(&mut g, code(hs), Role::Segment(Tier::Outlier), path, &mut records);
    }

    let scrap_codes = [
        720_410, 720_411, 720_412, 720_413, 720_414, 720_415, 720_421, 720_429, 720_430, 720_441, 720_449, 720_450,
    ];
    for hs in scrap_codes {
        let kg = g.u(4.5e5, 8.0e5);
        let price = g.u(0.4, 1.0);
        let path = g.blob(kg, price, 0.0);
        add(&mut g, code(hs), Role::Scrap, path, &mut records);
    }
    for i in 0..12 {
        let kg = g.u(1.0e4, 2.5e4);
        let price = g.u(35.0, 70.0);
        let path = g.blob(kg, price, 0.0);
        add(&mut g, code(854_210 + i), Role::Finished, path, &mut records);
    }
    let disguised = g.blob(6.0e5, 0.7, 0.0);
    add(&mut g, code(850_213), Role::Disguised, disguised, &mut records);

    for i in 0..3 {
        let mut path = g.blob(5.0e4, 8.0, 0.1);
        path.retain(|(y, _, _)| y % 2 == 0);
        add(&mut g, code(999_901 + i), Role::Sparse, path, &mut records);
    }

    // import rows are ignored when exports are analysed
    for i in (0..142).step_by(10) {
        let path = g.blob(2.0e4, 9.0, 0.1);
        g.emit(&code(840_100 + i), Flow::Import, &path, &mut records);
    }

    let malformed_lines = vec![
        "840100,2021,JPN,export,-5.0,100.0,kg".to_string(),
        "840101,2021,KOR,export,10.0,100.0,lb".to_string(),
        "840102,1999,USA,export,10.0,100.0,kg".to_string(),
        "84x102,2021,USA,export,10.0,100.0,kg".to_string(),
    ];

    SynthCorpus {
        seed,
        records,
        roles,
        malformed_lines,
    }
}

/// Products whose price follows `scale · volume^exponent · lognormal noise`,
/// as feature vectors with only the averages filled in.
pub fn power_law_products(n: usize, scale: f64, exponent: f64, noise_sd: f64, seed: u64) -> Vec<FeatureVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sd).expect("finite sd");
    (0..n)
        .map(|i| {
            let avg_kg = rng.random_range(1.0e3f64.ln()..1.0e7f64.ln()).exp();
            let avg_price = scale * avg_kg.powf(exponent) * noise.sample(&mut rng).exp();
            FeatureVector {
                hs_code: code(100_000 + i as u32),
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
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_sizes() {
        let c = generate(DEFAULT_SEED);
        let count = |t: Tier| c.roles.values().filter(|&&r| r == Role::Segment(t)).count();
        assert_eq!(count(Tier::SuperCore), 142);
        assert_eq!(count(Tier::Core), 40);
        assert_eq!(count(Tier::HighValueNiche), 15);
        assert_eq!(count(Tier::Outlier), 3);
        assert_eq!(c.codes_where(|r| r == Role::Scrap).len(), 12);
        assert_eq!(c.codes_where(|r| r == Role::Finished).len(), 12);
    }

    #[test]
    fn seeded() {
        assert_eq!(generate(7).to_csv(), generate(7).to_csv());
        assert_ne!(generate(7).to_csv(), generate(8).to_csv());
    }

    #[test]
    fn power_law_is_exact_without_noise() {
        let p = power_law_products(10, 100.0, -0.7, 1e-300, 1);
        for f in p {
            let implied = (f.avg_price / 100.0).ln() / f.avg_kg.ln();
            assert!((implied + 0.7).abs() < 1e-9);
        }
    }
}
