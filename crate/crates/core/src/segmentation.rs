//! Clustering and the two-pass outlier-aware market segmentation.
//!
//! Everything works on row-major points in standardized feature space with
//! Euclidean distance. Pass 1 clusters all products and peels off tiny
//! clusters as outliers; DBSCAN runs independently so outliers it also marks
//! as noise are "dual confirmed"; pass 2 re-clusters what remains and maps
//! clusters onto market tiers.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::hash::Hash;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, StandardizedMatrix};
use crate::ingest::HsCode;
use crate::stats::{distance, squared_distance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansParams {
    pub k: usize,
    pub n_restarts: usize,
    pub max_iter: usize,
    /// Largest centroid move (Euclidean) that still counts as converged.
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams {
            k: 2,
            n_restarts: 10,
            max_iter: 300,
            tol: 1e-6,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub wcss: f64,
    pub iterations: usize,
}

impl KMeansResult {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.len()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let d = points.first().map_or(0, Vec::len);
    for (i, p) in points.iter().enumerate() {
        if p.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: p.len() });
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("point {i} has a non-finite coordinate")));
        }
    }
    Ok(d)
}

/// Sum of squared distances from each point to its assigned centroid.
pub fn wcss(points: &[Vec<f64>], assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| squared_distance(p, &centroids[a]))
        .sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(p, c);
        // strict: ties stay with the lowest cluster id
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

fn cluster_means(points: &[Vec<f64>], assignments: &[usize], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|x| *x /= c as f64);
        }
    }
    sums
}

/// Gives every empty cluster the point lying farthest from its current
/// centroid, taken from a cluster that can spare it.
fn repair_empty(points: &[Vec<f64>], assignments: &mut [usize], centroids: &[Vec<f64>]) {
    let k = centroids.len();
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a] += 1;
    }
    for j in 0..k {
        if sizes[j] > 0 {
            continue;
        }
        let mut donor = None;
        let mut far = f64::NEG_INFINITY;
        for (i, p) in points.iter().enumerate() {
            let a = assignments[i];
            if sizes[a] < 2 {
                continue;
            }
            let d = squared_distance(p, &centroids[a]);
            if d > far {
                far = d;
                donor = Some(i);
            }
        }
        let Some(i) = donor else { break };
        sizes[assignments[i]] -= 1;
        assignments[i] = j;
        sizes[j] += 1;
    }
}

/// k-means++ seeding: first centre uniform, then proportional to squared
/// distance from the nearest chosen centre.
fn kmeans_pp(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..n)].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| squared_distance(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.push(points[pick].clone());
        let c = centroids.last().unwrap();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, c));
        }
    }
    centroids
}

/// One seeded Lloyd run. `trace` receives the objective after every
/// centroid update.
fn lloyd(
    points: &[Vec<f64>],
    k: usize,
    max_iter: usize,
    tol: f64,
    rng: &mut ChaCha8Rng,
    mut trace: Option<&mut Vec<f64>>,
) -> KMeansResult {
    let dim = points[0].len();
    let mut centroids = kmeans_pp(points, k, rng);
    let mut assignments: Vec<usize> = Vec::new();
    let mut iterations = 0;
    for it in 0..max_iter.max(1) {
        iterations = it + 1;
        let mut next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        repair_empty(points, &mut next, &centroids);
        let next_centroids = cluster_means(points, &next, k, dim);
        let shift = centroids
            .iter()
            .zip(&next_centroids)
            .map(|(a, b)| distance(a, b))
            .fold(0.0, f64::max);
        let stable = next == assignments;
        assignments = next;
        centroids = next_centroids;
        if let Some(t) = trace.as_deref_mut() {
            t.push(wcss(points, &assignments, &centroids));
        }
        if stable || shift <= tol {
            break;
        }
    }
    KMeansResult {
        wcss: wcss(points, &assignments, &centroids),
        assignments,
        centroids,
        iterations,
    }
}

/// Best-of-restarts Lloyd's algorithm with k-means++ seeding. Restart `r`
/// seeds its generator with `seed + r`; the lowest-WCSS run wins, earlier
/// restarts winning ties.
pub fn kmeans(points: &[Vec<f64>], params: &KMeansParams) -> Result<KMeansResult> {
    check_points(points)?;
    let n = points.len();
    if params.k == 0 || params.k > n {
        return Err(Error::InvalidInput(format!("k = {} must lie in 1..={n}", params.k)));
    }
    if params.tol.is_nan() || params.tol < 0.0 {
        return Err(Error::InvalidInput("kmeans tol must be non-negative".into()));
    }
    let mut best: Option<KMeansResult> = None;
    for r in 0..params.n_restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(r as u64));
        let run = lloyd(points, params.k, params.max_iter, params.tol, &mut rng, None);
        if best.as_ref().is_none_or(|b| run.wcss < b.wcss) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Objective after every Lloyd iteration of restart `restart`.
pub fn lloyd_trace(points: &[Vec<f64>], params: &KMeansParams, restart: u64) -> Result<Vec<f64>> {
    check_points(points)?;
    if params.k == 0 || params.k > points.len() {
        return Err(Error::InvalidInput(format!("k = {} out of range", params.k)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(restart));
    let mut trace = Vec::new();
    lloyd(points, params.k, params.max_iter, params.tol, &mut rng, Some(&mut trace));
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowResult {
    pub chosen_k: usize,
    pub wcss_curve: Vec<(usize, f64)>,
    /// WCSS never increased with k.
    pub monotone: bool,
    pub overridden: bool,
    #[serde(skip)]
    pub fits: Vec<KMeansResult>,
}

impl ElbowResult {
    pub fn fit_for(&self, k: usize) -> Option<&KMeansResult> {
        self.fits.get(k.checked_sub(1)?)
    }
}

/// Picks the k in `[2, k_max − 1]` with the largest second difference
/// `wcss(k−1) − 2·wcss(k) + wcss(k+1)`; ties go to the smallest k.
/// `curve` must list k = 1, 2, … in order.
pub fn elbow_from_curve(curve: &[(usize, f64)]) -> usize {
    let mut best_k = 2;
    let mut best = f64::NEG_INFINITY;
    for w in curve.windows(3) {
        let second = w[0].1 - 2.0 * w[1].1 + w[2].1;
        if second > best {
            best = second;
            best_k = w[1].0;
        }
    }
    best_k
}

pub fn elbow_select(
    points: &[Vec<f64>],
    k_max: usize,
    params: &KMeansParams,
    k_override: Option<usize>,
) -> Result<ElbowResult> {
    if k_max < 3 {
        return Err(Error::InvalidInput(format!("k_max must be at least 3, got {k_max}")));
    }
    if points.len() < k_max {
        return Err(Error::InvalidInput(format!(
            "elbow needs n >= k_max ({} < {k_max})",
            points.len()
        )));
    }
    let upper = k_override.map_or(k_max, |k| k.max(k_max));
    let mut fits = Vec::with_capacity(upper);
    for k in 1..=upper {
        fits.push(kmeans(points, &KMeansParams { k, ..params.clone() })?);
    }
    let wcss_curve: Vec<(usize, f64)> = fits.iter().enumerate().map(|(i, f)| (i + 1, f.wcss)).collect();
    let monotone = wcss_curve
        .windows(2)
        .all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-12) + 1e-12);
    if !monotone {
        log::warn!("WCSS curve is not monotone in k; elbow chosen on the curve as computed");
    }
    let chosen_k = match k_override {
        Some(k) => k,
        None => elbow_from_curve(&wcss_curve[..k_max]),
    };
    Ok(ElbowResult {
        chosen_k,
        wcss_curve,
        monotone,
        overridden: k_override.is_some(),
        fits,
    })
}

pub const NOISE: i32 = -1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_pts: usize,
}

impl Default for DbscanParams {
    fn default() -> Self {
        DbscanParams { eps: 0.5, min_pts: 5 }
    }
}

fn neighborhoods(points: &[Vec<f64>], eps: f64) -> Vec<Vec<usize>> {
    points
        .iter()
        .map(|p| {
            points
                .iter()
                .enumerate()
                .filter(|(_, q)| distance(p, q) <= eps)
                .map(|(j, _)| j)
                .collect()
        })
        .collect()
}

/// DBSCAN with an inclusive radius; a point counts as its own neighbour.
/// Clusters are numbered in discovery order scanning points by index; noise
/// is [`NOISE`].
pub fn dbscan(points: &[Vec<f64>], params: &DbscanParams) -> Result<Vec<i32>> {
    check_points(points)?;
    if params.eps.is_nan() || params.eps <= 0.0 || params.min_pts == 0 {
        return Err(Error::InvalidInput(format!(
            "dbscan needs eps > 0 and min_pts >= 1 (eps {}, min_pts {})",
            params.eps, params.min_pts
        )));
    }
    let hoods = neighborhoods(points, params.eps);
    let mut labels: Vec<Option<i32>> = vec![None; points.len()];
    let mut next_cluster = 0;
    for i in 0..points.len() {
        if labels[i].is_some() {
            continue;
        }
        if hoods[i].len() < params.min_pts {
            labels[i] = Some(NOISE);
            continue;
        }
        let c = next_cluster;
        next_cluster += 1;
        labels[i] = Some(c);
        let mut queue: VecDeque<usize> = hoods[i].iter().copied().collect();
        while let Some(q) = queue.pop_front() {
            match labels[q] {
                Some(NOISE) => labels[q] = Some(c),
                Some(_) => continue,
                None => {
                    labels[q] = Some(c);
                    if hoods[q].len() >= params.min_pts {
                        queue.extend(hoods[q].iter().copied());
                    }
                }
            }
        }
    }
    Ok(labels.into_iter().map(|l| l.unwrap_or(NOISE)).collect())
}

/// Suggests a DBSCAN radius from the knee of the sorted k-distance curve.
///
/// Each point's distance to its k-th nearest other point is sorted
/// descending and the value at the maximal second difference is returned.
/// If the knee lands on a zero distance the smallest positive k-distance is
/// used instead.
pub fn kdist_eps(points: &[Vec<f64>], k: usize) -> Result<f64> {
    check_points(points)?;
    let n = points.len();
    if k == 0 || n <= k {
        return Err(Error::InvalidInput(format!("k-distance needs n > k >= 1 (n = {n}, k = {k})")));
    }
    let mut kd: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut ds: Vec<f64> = points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| distance(p, q))
                .collect();
            ds.sort_by(f64::total_cmp);
            ds[k - 1]
        })
        .collect();
    kd.sort_by(|a, b| b.total_cmp(a));
    if kd[0] <= 0.0 {
        return Err(Error::DegenerateDistances);
    }
    let mut pick = kd[0];
    let mut best = f64::NEG_INFINITY;
    for i in 1..n.saturating_sub(1) {
        let second = kd[i - 1] - 2.0 * kd[i] + kd[i + 1];
        if second > best {
            best = second;
            pick = kd[i];
        }
    }
    if pick <= 0.0 {
        pick = kd.iter().copied().filter(|&d| d > 0.0).fold(f64::INFINITY, f64::min);
    }
    Ok(pick)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    Outlier,
    HighValueNiche,
    Core,
    SuperCore,
}

impl Tier {
    pub const ALL: [Tier; 4] = [Tier::Outlier, Tier::HighValueNiche, Tier::Core, Tier::SuperCore];

    pub fn name(self) -> &'static str {
        match self {
            Tier::Outlier => "Outlier",
            Tier::HighValueNiche => "HighValueNiche",
            Tier::Core => "Core",
            Tier::SuperCore => "SuperCore",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pass {
    IsolatedPass1,
    CorePass2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentAssignment {
    pub hs_code: HsCode,
    /// Pass-1 cluster for outliers, pass-2 cluster otherwise.
    pub kmeans_cluster: usize,
    pub dbscan_label: i32,
    pub dual_confirmed_outlier: bool,
    pub tier: Tier,
    pub pass: Pass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentConfig {
    pub k_max: usize,
    /// Fixes K for the first (outlier-isolating) pass.
    pub k_initial: Option<usize>,
    /// Fixes K for the second pass (still raised to at least 3).
    pub k_core: Option<usize>,
    /// DBSCAN radius; derived from the k-distance knee when absent.
    pub eps: Option<f64>,
    pub min_pts: usize,
    pub kmeans: KMeansParams,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig {
            k_max: 10,
            k_initial: None,
            k_core: None,
            eps: None,
            min_pts: 5,
            kmeans: KMeansParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub assignments: Vec<SegmentAssignment>,
    pub initial: ElbowResult,
    pub core: Option<ElbowResult>,
    pub outlier_size_threshold: usize,
    pub eps: f64,
    pub warnings: Vec<String>,
}

impl Segmentation {
    pub fn tier_counts(&self) -> BTreeMap<Tier, usize> {
        let mut counts: BTreeMap<Tier, usize> = Tier::ALL.iter().map(|&t| (t, 0)).collect();
        for a in &self.assignments {
            *counts.entry(a.tier).or_default() += 1;
        }
        counts
    }
}

/// Clusters no larger than this are treated as outlier clusters.
pub fn outlier_size_threshold(n: usize) -> usize {
    let one_percent = (n as f64 * 0.01).ceil() as usize;
    one_percent.max(2)
}

/// Two-pass segmentation into the four market tiers.
///
/// `features` must be row-aligned with `matrix`; its `avg_price` ranks the
/// pass-2 clusters (the mean z-score ordering equals the raw-mean ordering).
pub fn iterative_segment(
    matrix: &StandardizedMatrix,
    features: &[FeatureVector],
    cfg: &SegmentConfig,
) -> Result<Segmentation> {
    let points = &matrix.values;
    let n = points.len();
    if n < 8 {
        return Err(Error::InsufficientData(format!("segmentation needs at least 8 products, got {n}")));
    }
    if features.len() != n || features.iter().zip(&matrix.rows).any(|(f, r)| &f.hs_code != r) {
        return Err(Error::InvalidInput("features are not row-aligned with the matrix".into()));
    }
    let mut warnings = Vec::new();

    // pass 1: isolate small clusters
    let initial = elbow_select(points, cfg.k_max.min(n), &cfg.kmeans, cfg.k_initial)?;
    let first = match initial.fit_for(initial.chosen_k) {
        Some(fit) => fit.clone(),
        None => kmeans(points, &KMeansParams { k: initial.chosen_k, ..cfg.kmeans.clone() })?,
    };
    let threshold = outlier_size_threshold(n);
    let sizes = first.cluster_sizes();
    let isolated: Vec<bool> = first.assignments.iter().map(|&a| sizes[a] <= threshold).collect();

    // independent density check
    let eps = match cfg.eps {
        Some(e) => e,
        None => kdist_eps(points, cfg.min_pts.saturating_sub(1).max(1))?,
    };
    let labels = dbscan(points, &DbscanParams { eps, min_pts: cfg.min_pts })?;

    // pass 2: re-cluster the remainder
    let remaining: Vec<usize> = (0..n).filter(|&i| !isolated[i]).collect();
    let mut tiers = vec![Tier::Core; n];
    let mut clusters = first.assignments.clone();
    for i in (0..n).filter(|&i| isolated[i]) {
        tiers[i] = Tier::Outlier;
    }
    let mut core = None;
    if remaining.len() < 3 {
        let msg = format!("only {} products left for pass 2; all labeled Core", remaining.len());
        log::warn!("{msg}");
        warnings.push(msg);
    } else {
        let sub: Vec<Vec<f64>> = remaining.iter().map(|&i| points[i].clone()).collect();
        let k_max = cfg.k_max.min(sub.len()).max(3);
        let elbow = elbow_select(&sub, k_max, &cfg.kmeans, cfg.k_core)?;
        let k = elbow.chosen_k.max(3);
        let fit = match elbow.fit_for(k) {
            Some(f) => f.clone(),
            None => kmeans(&sub, &KMeansParams { k, ..cfg.kmeans.clone() })?,
        };
        let sizes = fit.cluster_sizes();
        let non_empty = sizes.iter().filter(|&&s| s > 0).count();
        if non_empty < 3 {
            let msg = format!("pass 2 produced {non_empty} clusters; all non-outliers labeled Core");
            log::warn!("{msg}");
            warnings.push(msg);
        } else {
            let cluster_tiers = rank_clusters(&fit.assignments, &sizes, remaining.iter().map(|&i| features[i].avg_price));
            for (pos, &i) in remaining.iter().enumerate() {
                clusters[i] = fit.assignments[pos];
                tiers[i] = cluster_tiers[fit.assignments[pos]];
            }
        }
        core = Some(elbow);
    }

    let assignments = (0..n)
        .map(|i| SegmentAssignment {
            hs_code: matrix.rows[i].clone(),
            kmeans_cluster: clusters[i],
            dbscan_label: labels[i],
            dual_confirmed_outlier: isolated[i] && labels[i] == NOISE,
            tier: tiers[i],
            pass: if isolated[i] { Pass::IsolatedPass1 } else { Pass::CorePass2 },
        })
        .collect();
    Ok(Segmentation {
        assignments,
        initial,
        core,
        outlier_size_threshold: threshold,
        eps,
        warnings,
    })
}

/// Largest cluster → SuperCore; of the rest, highest mean price →
/// HighValueNiche; everything else → Core. Ties go to the lower cluster id.
fn rank_clusters(assignments: &[usize], sizes: &[usize], prices: impl Iterator<Item = f64>) -> Vec<Tier> {
    let k = sizes.len();
    let mut price_sum = vec![0.0; k];
    for (&a, p) in assignments.iter().zip(prices) {
        price_sum[a] += p;
    }
    let mut tiers = vec![Tier::Core; k];
    let largest = (0..k).fold(0, |best, j| if sizes[j] > sizes[best] { j } else { best });
    tiers[largest] = Tier::SuperCore;
    let niche = (0..k)
        .filter(|&j| j != largest && sizes[j] > 0)
        .map(|j| (j, price_sum[j] / sizes[j] as f64))
        .fold(None::<(usize, f64)>, |best, (j, m)| match best {
            Some((_, bm)) if m <= bm => best,
            _ => Some((j, m)),
        });
    if let Some((j, _)) = niche {
        tiers[j] = Tier::HighValueNiche;
    }
    tiers
}

/// Adjusted Rand Index between two labelings of the same items.
pub fn adjusted_rand_index<A: Eq + Hash, B: Eq + Hash>(a: &[A], b: &[B]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let n = a.len();
    let choose2 = |x: usize| (x * x.saturating_sub(1)) as f64 / 2.0;
    let mut table: HashMap<(&A, &B), usize> = HashMap::new();
    let mut rows: HashMap<&A, usize> = HashMap::new();
    let mut cols: HashMap<&B, usize> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let expected = sum_a * sum_b / choose2(n);
    let max_index = (sum_a + sum_b) / 2.0;
    if (max_index - expected).abs() < f64::EPSILON {
        return 1.0;
    }
    (index - expected) / (max_index - expected)
}
