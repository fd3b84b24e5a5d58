//! Dense brute-force oracles and random instance generators shared by the
//! integration tests. Nothing here calls the sparse code paths under test.

#![allow(dead_code)]

use std::collections::BTreeMap;

use coarse_lab::cover::Cover;
use coarse_lab::space::FiniteMetricSpace;
use coarse_lab::witness::{IndexEntry, Witness};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Dense = Vec<BTreeMap<IndexEntry, f64>>;

pub fn dense(w: &Witness) -> Dense {
    (0..w.len())
        .map(|x| {
            let mut m = BTreeMap::new();
            for &(e, c) in w.vector(x) {
                *m.entry(e).or_insert(0.0) += c;
            }
            m
        })
        .collect()
}

pub fn dense_norm(v: &BTreeMap<IndexEntry, f64>) -> f64 {
    v.values().map(|c| c * c).sum::<f64>().sqrt()
}

pub fn dense_diff(a: &BTreeMap<IndexEntry, f64>, b: &BTreeMap<IndexEntry, f64>) -> f64 {
    let keys: std::collections::BTreeSet<_> = a.keys().chain(b.keys()).collect();
    keys.into_iter()
        .map(|k| {
            let d = a.get(k).copied().unwrap_or(0.0) - b.get(k).copied().unwrap_or(0.0);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// `max {‖ξ_x − ξ_y‖ : d(x,y) <= r}` by a plain double loop (0 with no pair).
pub fn dense_variation(space: &FiniteMetricSpace, w: &Dense, r: f64) -> f64 {
    let mut best: f64 = 0.0;
    for x in 0..space.len() {
        for y in 0..space.len() {
            if x != y && space.dist(x, y) <= r {
                best = best.max(dense_diff(&w[x], &w[y]));
            }
        }
    }
    best
}

/// `max_x Σ_{entries e, d(x, e.at) > s} |ξ_x(e)|²`.
pub fn dense_tail(space: &FiniteMetricSpace, w: &Dense, s: f64) -> f64 {
    (0..space.len())
        .map(|x| w[x].iter().filter(|(e, _)| space.dist(x, e.at) > s).map(|(_, c)| c * c).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn nearest(space: &FiniteMetricSpace, set: &[usize], x: usize) -> usize {
    let mut best = set[0];
    for &y in set {
        if space.dist(x, y) < space.dist(x, best) || (space.dist(x, y) == space.dist(x, best) && y < best) {
            best = y;
        }
    }
    best
}

pub fn ball(space: &FiniteMetricSpace, x: usize, r: f64) -> Vec<usize> {
    (0..space.len()).filter(|&y| space.dist(x, y) <= r).collect()
}

pub fn distances(space: &FiniteMetricSpace) -> Vec<f64> {
    let mut d: Vec<f64> = (0..space.len())
        .flat_map(|x| (0..space.len()).map(move |y| (x, y)))
        .map(|(x, y)| space.dist(x, y))
        .collect();
    d.sort_by(f64::total_cmp);
    d.dedup();
    d
}

pub fn multiplicity(space: &FiniteMetricSpace, pieces: &[Vec<usize>]) -> usize {
    (0..space.len()).map(|x| pieces.iter().filter(|p| p.contains(&x)).count()).max().unwrap_or(0)
}

/// Number of pieces meeting `B(x, r)`, maximized over `x`.
pub fn r_multiplicity(space: &FiniteMetricSpace, pieces: &[Vec<usize>], r: f64) -> usize {
    (0..space.len())
        .map(|x| {
            let b = ball(space, x, r);
            pieces.iter().filter(|p| p.iter().any(|u| b.contains(u))).count()
        })
        .max()
        .unwrap_or(0)
}

fn membership(n: usize, pieces: &[Vec<usize>]) -> Vec<Vec<bool>> {
    pieces
        .iter()
        .map(|p| {
            let mut m = vec![false; n];
            for &x in p {
                m[x] = true;
            }
            m
        })
        .collect()
}

/// Every ball `B(x, r)` lies inside a single piece.
pub fn balls_fit(space: &FiniteMetricSpace, pieces: &[Vec<usize>], r: f64) -> bool {
    let m = membership(space.len(), pieces);
    (0..space.len()).all(|x| {
        let b = ball(space, x, r);
        m.iter().any(|p| b.iter().all(|&u| p[u]))
    })
}

/// Largest realized distance whose balls all fit in one piece (linear scan).
pub fn lebesgue(space: &FiniteMetricSpace, pieces: &[Vec<usize>]) -> f64 {
    let mut best = 0.0;
    for r in distances(space) {
        if balls_fit(space, pieces, r) {
            best = r;
        } else {
            break;
        }
    }
    best
}

/// Nearest-center cells (smallest center on ties), each enlarged by `e`.
pub fn voronoi(space: &FiniteMetricSpace, centers: &[usize], e: f64) -> Vec<Vec<usize>> {
    let mut cells = vec![Vec::new(); centers.len()];
    for x in 0..space.len() {
        let c = nearest(space, centers, x);
        cells[centers.iter().position(|&k| k == c).unwrap()].push(x);
    }
    cells.retain(|c| !c.is_empty());
    cells.iter().map(|c| neighborhood(space, c, e)).collect()
}

pub fn set_distance(space: &FiniteMetricSpace, a: &[usize], b: &[usize]) -> f64 {
    a.iter().flat_map(|&x| b.iter().map(move |&y| (x, y))).map(|(x, y)| space.dist(x, y)).fold(f64::INFINITY, f64::min)
}

pub fn neighborhood(space: &FiniteMetricSpace, set: &[usize], l: f64) -> Vec<usize> {
    (0..space.len()).filter(|&x| set.iter().any(|&y| space.dist(x, y) <= l)).collect()
}

/// `φ_i(x) = d(x, X∖U_i) / Σ_j d(x, X∖U_j)` with `d(x, ∅) = diam + 1`.
pub fn bell(space: &FiniteMetricSpace, pieces: &[Vec<usize>]) -> Vec<Vec<f64>> {
    let n = space.len();
    let diam = (0..n).flat_map(|x| (0..n).map(move |y| (x, y))).map(|(x, y)| space.dist(x, y)).fold(0.0, f64::max);
    let raw: Vec<Vec<f64>> = pieces
        .iter()
        .map(|p| {
            let comp: Vec<usize> = (0..n).filter(|x| !p.contains(x)).collect();
            (0..n)
                .map(|x| if comp.is_empty() { diam + 1.0 } else { comp.iter().map(|&y| space.dist(x, y)).fold(f64::INFINITY, f64::min) })
                .collect()
        })
        .collect();
    let totals: Vec<f64> = (0..n).map(|x| raw.iter().map(|r| r[x]).sum()).collect();
    raw.iter().map(|r| (0..n).map(|x| r[x] / totals[x]).collect()).collect()
}

pub fn l1_diff(phi: &[Vec<f64>], x: usize, y: usize) -> f64 {
    phi.iter().map(|p| (p[x] - p[y]).abs()).sum()
}

// ---------------------------------------------------------------------------
// generators

/// Random connected graph: a random spanning tree plus extra edges.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, extra: usize) -> FiniteMetricSpace {
    let ids = (0..n).map(|i| format!("v{i}")).collect();
    let mut edges = Vec::new();
    for i in 1..n {
        edges.push((rng.gen_range(0..i), i));
    }
    for _ in 0..extra {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b {
            edges.push((a, b));
        }
    }
    FiniteMetricSpace::from_graph(ids, &edges).unwrap()
}

/// One of: interval, cycle, grid or random graph, with at most `max_n` points.
pub fn random_space(rng: &mut ChaCha8Rng, max_n: usize) -> FiniteMetricSpace {
    let n = rng.gen_range(2..=max_n);
    match rng.gen_range(0..4) {
        0 => FiniteMetricSpace::z_interval(0, n as i64 - 1).unwrap(),
        1 => FiniteMetricSpace::cycle(n.max(3)).unwrap(),
        2 => {
            let a = rng.gen_range(1..=(n as f64).sqrt() as usize + 1);
            FiniteMetricSpace::grid(&[a, (n / a).max(1)]).unwrap()
        }
        _ => {
            let extra = rng.gen_range(0..n);
            random_graph(rng, n, extra)
        }
    }
}

/// Random bare unit witness supported in balls of a random radius.
pub fn random_witness(rng: &mut ChaCha8Rng, space: &FiniteMetricSpace) -> Witness {
    let r = rng.gen_range(0..4) as f64;
    let vectors = (0..space.len())
        .map(|x| {
            let mut b = ball(space, x, r);
            b.shuffle(rng);
            b.truncate(rng.gen_range(1..=b.len()));
            b.sort_unstable();
            let coef: Vec<f64> = b.iter().map(|_| rng.gen_range(-1.0..1.0f64) + 0.01).collect();
            let norm = coef.iter().map(|c| c * c).sum::<f64>().sqrt();
            b.iter().zip(coef).map(|(&u, c)| (IndexEntry::bare(u), c / norm)).collect()
        })
        .collect();
    Witness::new(space.len(), vectors).unwrap()
}

/// Random nonempty subset.
pub fn random_subset(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (0..n).collect();
    all.shuffle(rng);
    all.truncate(rng.gen_range(1..=n));
    all.sort_unstable();
    all
}

/// Pieces of a cover, as plain vectors.
pub fn pieces(cover: &Cover) -> Vec<Vec<usize>> {
    cover.pieces().to_vec()
}
