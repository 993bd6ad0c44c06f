//! Supervised check that the market tiers can be recovered from features,
//! using a bagged ensemble of CART trees.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::HsCode;
use crate::segmentation::Tier;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` tries all of them.
    pub max_features: Option<usize>,
    pub seed: u64,
    /// Worker threads for tree fitting; the result does not depend on it.
    pub threads: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 25,
            max_depth: 8,
            min_leaf: 1,
            max_features: None,
            seed: 42,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        class: usize,
        /// Training samples per class reaching this leaf.
        counts: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    /// `nodes[0]` is the root.
    pub nodes: Vec<Node>,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl TreeModel {
    pub fn predict(&self, row: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { class, .. } => return *class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn split_features(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect()
    }
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

fn majority(counts: &[usize]) -> usize {
    // ties go to the lowest class index
    (0..counts.len()).fold(0, |best, c| if counts[c] > counts[best] { c } else { best })
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_classes: usize,
    params: &'a ForestParams,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn counts(&self, samples: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &s in samples {
            c[self.y[s]] += 1;
        }
        c
    }

    fn best_split(&self, samples: &[usize], features: &[usize]) -> Option<(usize, f64, f64)> {
        let n = samples.len();
        let parent = gini(&self.counts(samples), n);
        let mut best: Option<(usize, f64, f64)> = None;
        for &f in features {
            let mut order: Vec<usize> = samples.to_vec();
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            let mut left = vec![0usize; self.n_classes];
            let mut right = self.counts(samples);
            for i in 0..n - 1 {
                let c = self.y[order[i]];
                left[c] += 1;
                right[c] -= 1;
                let (lo, hi) = (self.x[order[i]][f], self.x[order[i + 1]][f]);
                if lo == hi {
                    continue;
                }
                let (nl, nr) = (i + 1, n - i - 1);
                if nl < self.params.min_leaf || nr < self.params.min_leaf {
                    continue;
                }
                let impurity = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / n as f64;
                if impurity < parent - 1e-12 && best.is_none_or(|(_, _, b)| impurity < b) {
                    best = Some((f, lo + (hi - lo) / 2.0, impurity));
                }
            }
        }
        best
    }

    fn grow(&mut self, samples: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let counts = self.counts(&samples);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            class: majority(&counts),
            counts: counts.clone(),
        });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.params.max_depth || samples.len() < 2 * self.params.min_leaf.max(1) {
            return id;
        }
        let d = self.x[0].len();
        let mut features: Vec<usize> = (0..d).collect();
        if let Some(m) = self.params.max_features.filter(|&m| m > 0 && m < d) {
            features.shuffle(rng);
            features.truncate(m);
            features.sort_unstable();
        }
        let Some((feature, threshold, _)) = self.best_split(&samples, &features) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = samples.iter().partition(|&&s| self.x[s][feature] <= threshold);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

/// Fits one CART tree on the given sample indices (duplicates allowed).
pub fn fit_tree(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    samples: Vec<usize>,
    params: &ForestParams,
    rng: &mut ChaCha8Rng,
) -> TreeModel {
    let mut b = Builder {
        x,
        y,
        n_classes,
        params,
        nodes: Vec::new(),
    };
    b.grow(samples, 0, rng);
    TreeModel {
        nodes: b.nodes,
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    /// Class labels, sorted by tier name so index order is name order.
    pub classes: Vec<Tier>,
    pub trees: Vec<TreeModel>,
    /// Per tree, how many times each training row was drawn.
    pub in_bag: Vec<Vec<u32>>,
    pub params: ForestParams,
}

fn vote(counts: &[usize]) -> Option<usize> {
    counts.iter().any(|&c| c > 0).then(|| majority(counts))
}

impl Forest {
    pub fn predict(&self, row: &[f64]) -> Tier {
        let mut counts = vec![0usize; self.classes.len()];
        for t in &self.trees {
            counts[t.predict(row)] += 1;
        }
        self.classes[majority(&counts)]
    }

    /// Out-of-bag predictions for the training rows; `None` where a row
    /// was drawn by every tree.
    pub fn oob_predictions(&self, x: &[Vec<f64>]) -> Vec<Option<Tier>> {
        x.iter()
            .enumerate()
            .map(|(i, row)| {
                let mut counts = vec![0usize; self.classes.len()];
                for (t, bag) in self.trees.iter().zip(&self.in_bag) {
                    if bag[i] == 0 {
                        counts[t.predict(row)] += 1;
                    }
                }
                vote(&counts).map(|c| self.classes[c])
            })
            .collect()
    }

    pub fn oob_accuracy(&self, x: &[Vec<f64>], tiers: &[Tier]) -> Option<f64> {
        let preds = self.oob_predictions(x);
        let scored: Vec<bool> = preds
            .iter()
            .zip(tiers)
            .filter_map(|(p, t)| p.map(|p| p == *t))
            .collect();
        (!scored.is_empty()).then(|| scored.iter().filter(|&&ok| ok).count() as f64 / scored.len() as f64)
    }
}

/// Bagged CART ensemble predicting tiers from standardized features.
///
/// Bootstrap draws index positions of the rows sorted by hs code, so the
/// fitted forest does not depend on input row order.
pub fn fit_forest(x: &[Vec<f64>], hs_codes: &[HsCode], tiers: &[Tier], params: &ForestParams) -> Result<Forest> {
    let n = x.len();
    if n < 4 {
        return Err(Error::InsufficientData(format!("forest needs at least 4 rows, got {n}")));
    }
    if hs_codes.len() != n || tiers.len() != n {
        return Err(Error::InvalidInput("x, hs codes and tiers differ in length".into()));
    }
    if params.n_trees == 0 {
        return Err(Error::Config("n_trees must be positive".into()));
    }
    let mut classes: Vec<Tier> = tiers.to_vec();
    classes.sort_by_key(|t| t.name());
    classes.dedup();
    let y: Vec<usize> = tiers
        .iter()
        .map(|t| classes.iter().position(|c| c == t).unwrap())
        .collect();

    if classes.len() < 2 {
        log::warn!("validation forest: a single tier present, model is constant");
        let leaf = TreeModel {
            nodes: vec![Node::Leaf { class: 0, counts: vec![n] }],
            max_depth: params.max_depth,
            min_leaf: params.min_leaf,
        };
        return Ok(Forest {
            classes,
            trees: vec![leaf],
            in_bag: vec![vec![1; n]],
            params: params.clone(),
        });
    }

    let mut canonical: Vec<usize> = (0..n).collect();
    canonical.sort_by(|&a, &b| hs_codes[a].cmp(&hs_codes[b]).then(a.cmp(&b)));

    let fit_one = |t: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(t as u64));
        let samples: Vec<usize> = (0..n).map(|_| canonical[rng.random_range(0..n)]).collect();
        let mut bag = vec![0u32; n];
        for &s in &samples {
            bag[s] += 1;
        }
        (fit_tree(x, &y, classes.len(), samples, params, &mut rng), bag)
    };
    let threads = params.threads.clamp(1, params.n_trees);
    let fitted: Vec<(TreeModel, Vec<u32>)> = if threads == 1 {
        (0..params.n_trees).map(fit_one).collect()
    } else {
        // tree t goes to worker t % threads; results are re-interleaved by t
        let per_worker: Vec<Vec<(TreeModel, Vec<u32>)>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..threads)
                .map(|w| {
                    let fit_one = &fit_one;
                    scope.spawn(move || (w..params.n_trees).step_by(threads).map(fit_one).collect())
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("tree worker panicked")).collect()
        });
        let mut iters: Vec<_> = per_worker.into_iter().map(|v| v.into_iter()).collect();
        (0..params.n_trees).map(|t| iters[t % threads].next().expect("tree fitted")).collect()
    };
    let (trees, in_bag): (Vec<_>, Vec<_>) = fitted.into_iter().unzip();
    Ok(Forest {
        classes,
        trees,
        in_bag,
        params: params.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// Row and column order of `confusion`.
    pub labels: Vec<Tier>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn evaluate_predictions(truth: &[Tier], predicted: &[Tier]) -> Evaluation {
    let labels = Tier::ALL.to_vec();
    let idx = |t: &Tier| labels.iter().position(|l| l == t).unwrap();
    let mut confusion = vec![vec![0usize; labels.len()]; labels.len()];
    for (t, p) in truth.iter().zip(predicted) {
        confusion[idx(t)][idx(p)] += 1;
    }
    let correct = truth.iter().zip(predicted).filter(|(t, p)| t == p).count();
    Evaluation {
        accuracy: if truth.is_empty() { 0.0 } else { correct as f64 / truth.len() as f64 },
        labels,
        confusion,
    }
}

pub fn evaluate(forest: &Forest, x: &[Vec<f64>], tiers: &[Tier]) -> Evaluation {
    let predicted: Vec<Tier> = x.iter().map(|row| forest.predict(row)).collect();
    evaluate_predictions(tiers, &predicted)
}

/// Accuracy of always predicting the most common tier.
pub fn majority_baseline(tiers: &[Tier]) -> f64 {
    if tiers.is_empty() {
        return 0.0;
    }
    let best = Tier::ALL
        .iter()
        .map(|t| tiers.iter().filter(|x| *x == t).count())
        .max()
        .unwrap_or(0);
    best as f64 / tiers.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn codes(n: usize) -> Vec<HsCode> {
        (0..n).map(|i| format!("{:06}", 100000 + i).parse().unwrap()).collect()
    }

    #[test]
    fn separable_two_tiers() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![f64::from(i), 0.0]).collect();
        let tiers: Vec<Tier> = (0..20).map(|i| if i < 10 { Tier::Core } else { Tier::SuperCore }).collect();
        let f = fit_forest(&x, &codes(20), &tiers, &ForestParams::default()).unwrap();
        assert_eq!(evaluate(&f, &x, &tiers).accuracy, 1.0);
    }

    #[test]
    fn stump_picks_informative_feature() {
        // feature 0 is noise-free binary, feature 1 is constant, feature 2 alternates
        let x: Vec<Vec<f64>> = (0..12)
            .map(|i| vec![if i < 6 { 0.0 } else { 1.0 }, 3.0, f64::from(i % 2)])
            .collect();
        let y: Vec<usize> = (0..12).map(|i| usize::from(i >= 6)).collect();
        let params = ForestParams { max_depth: 1, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tree = fit_tree(&x, &y, 2, (0..12).collect(), &params, &mut rng);
        match &tree.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 0.5);
            }
            other => panic!("expected a split, got {other:?}"),
        }
        assert_eq!(tree.depth(), 1);
    }

    #[test]
    fn constant_feature_never_splits() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![7.0, f64::from(i * 7 % 11)]).collect();
        let tiers: Vec<Tier> = (0..30).map(|i| if i * 7 % 11 < 5 { Tier::Core } else { Tier::Outlier }).collect();
        let f = fit_forest(&x, &codes(30), &tiers, &ForestParams::default()).unwrap();
        assert!(f.trees.iter().all(|t| !t.split_features().contains(&0)));
    }

    #[test]
    fn single_class_is_constant() {
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![f64::from(i)]).collect();
        let tiers = vec![Tier::Core; 5];
        let f = fit_forest(&x, &codes(5), &tiers, &ForestParams::default()).unwrap();
        assert_eq!(f.predict(&[100.0]), Tier::Core);
    }

    #[test]
    fn depth_is_capped() {
        let x: Vec<Vec<f64>> = (0..64).map(|i| vec![f64::from(i)]).collect();
        let tiers: Vec<Tier> = (0..64).map(|i| if i % 2 == 0 { Tier::Core } else { Tier::SuperCore }).collect();
        let params = ForestParams { max_depth: 3, ..Default::default() };
        let f = fit_forest(&x, &codes(64), &tiers, &params).unwrap();
        assert!(f.trees.iter().all(|t| t.depth() <= 3));
    }

    #[test]
    fn vote_ties_go_to_smallest_name() {
        assert_eq!(majority(&[2, 2, 1]), 0);
        let classes = {
            let mut c = vec![Tier::SuperCore, Tier::Outlier, Tier::Core];
            c.sort_by_key(|t| t.name());
            c
        };
        assert_eq!(classes[0], Tier::Core);
    }

    #[test]
    fn evaluation_arithmetic() {
        let truth = [
            Tier::SuperCore,
            Tier::SuperCore,
            Tier::SuperCore,
            Tier::SuperCore,
            Tier::Core,
            Tier::Core,
            Tier::Core,
            Tier::Outlier,
            Tier::HighValueNiche,
            Tier::HighValueNiche,
        ];
        let all_super = [Tier::SuperCore; 10];
        let e = evaluate_predictions(&truth, &all_super);
        assert!((e.accuracy - 0.4).abs() < 1e-12);
        let row_sums: Vec<usize> = e.confusion.iter().map(|r| r.iter().sum()).collect();
        // label order: Outlier, HighValueNiche, Core, SuperCore
        assert_eq!(row_sums, vec![1, 2, 3, 4]);
        let perfect = evaluate_predictions(&truth, &truth);
        assert_eq!(perfect.accuracy, 1.0);
        for (i, row) in perfect.confusion.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if i != j {
                    assert_eq!(c, 0);
                }
            }
        }
        assert!((majority_baseline(&truth) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn parallel_matches_sequential() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![f64::from(i % 7), f64::from(i * 3 % 5)]).collect();
        let tiers: Vec<Tier> = (0..40).map(|i| if i % 7 < 3 { Tier::Core } else { Tier::SuperCore }).collect();
        let seq = fit_forest(&x, &codes(40), &tiers, &ForestParams::default()).unwrap();
        let par = fit_forest(&x, &codes(40), &tiers, &ForestParams { threads: 4, ..Default::default() }).unwrap();
        assert_eq!(seq.trees, par.trees);
        assert_eq!(seq.in_bag, par.in_bag);
    }

    #[test]
    fn too_few_rows() {
        let x = vec![vec![0.0]; 3];
        assert!(fit_forest(&x, &codes(3), &[Tier::Core; 3], &ForestParams::default()).is_err());
    }
}
