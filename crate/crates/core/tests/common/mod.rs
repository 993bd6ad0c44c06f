//! Independent reference implementations used by the integration tests.
//! They favour obviousness over speed.

#![allow(dead_code)]

use std::collections::BTreeMap;

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn group_sse(points: &[Vec<f64>], members: &[usize]) -> f64 {
    let d = points[0].len();
    let mut mean = vec![0.0; d];
    for &i in members {
        for (m, x) in mean.iter_mut().zip(&points[i]) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= members.len() as f64;
    }
    members.iter().map(|&i| sq(&points[i], &mean)).sum()
}

/// Minimum WCSS over every split into two non-empty groups.
pub fn exhaustive_two_means(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    assert!((2..=20).contains(&n));
    let mut best = f64::INFINITY;
    // point 0 always sits in group A, which removes mirrored duplicates
    for mask in 0u32..(1 << (n - 1)) {
        let (mut a, mut b) = (vec![0], Vec::new());
        for i in 1..n {
            if mask >> (i - 1) & 1 == 1 {
                a.push(i);
            } else {
                b.push(i);
            }
        }
        if b.is_empty() {
            continue;
        }
        best = best.min(group_sse(points, &a) + group_sse(points, &b));
    }
    best
}

/// DBSCAN by definition: components of the core-point graph, each border
/// point attached to the adjacent component whose smallest core index is
/// lowest, everything else noise (-1). Components are numbered by their
/// smallest core index.
pub fn naive_dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<i32> {
    let n = points.len();
    let near = |i: usize, j: usize| sq(&points[i], &points[j]).sqrt() <= eps;
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts).collect();

    // union-find over core points
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        p[i] = r;
        r
    }
    for i in 0..n {
        for j in 0..i {
            if core[i] && core[j] && near(i, j) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut min_core: BTreeMap<usize, usize> = BTreeMap::new();
    for i in (0..n).filter(|&i| core[i]) {
        let r = find(&mut parent, i);
        let e = min_core.entry(r).or_insert(i);
        *e = (*e).min(i);
    }
    let mut order: Vec<usize> = min_core.values().copied().collect();
    order.sort();
    let id_of_root = |root: usize| order.iter().position(|&m| m == min_core[&root]).unwrap() as i32;

    (0..n)
        .map(|i| {
            if core[i] {
                id_of_root(find(&mut parent.clone(), i))
            } else {
                (0..n)
                    .filter(|&j| core[j] && near(i, j))
                    .map(|j| id_of_root(find(&mut parent.clone(), j)))
                    .min()
                    .unwrap_or(-1)
            }
        })
        .collect()
}

/// Labels equal up to renaming of cluster ids, with -1 fixed.
pub fn same_partition(a: &[i32], b: &[i32]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut fwd = BTreeMap::new();
    let mut back = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        if (x == -1) != (y == -1) {
            return false;
        }
        if *fwd.entry(x).or_insert(y) != y || *back.entry(y).or_insert(x) != x {
            return false;
        }
    }
    true
}

/// Central-difference gradient of `f` at `x`.
pub fn finite_difference(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let h = 1e-5 * x[j].abs().max(1.0);
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[j] += h;
            down[j] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-12);
    diff / scale
}
