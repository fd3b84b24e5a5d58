//! Finite witnesses of strong embeddability: per-point unit vectors in a
//! sparse sequence space, their variation and tail profiles, the norm
//! collapse over tagged indices, and transport along isometries.
//!
//! An index entry is either a bare point `at` of the domain or a tagged pair
//! `(tag, at)`. Tails are always measured through the projection to `at`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::space::{FiniteMetricSpace, TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IndexEntry {
    pub tag: Option<usize>,
    pub at: usize,
}

impl IndexEntry {
    pub fn bare(at: usize) -> Self {
        Self { tag: None, at }
    }

    pub fn tagged(tag: usize, at: usize) -> Self {
        Self { tag: Some(tag), at }
    }
}

/// Sparse coefficient list, sorted by entry, zeros dropped.
pub type SparseVector = Vec<(IndexEntry, f64)>;

/// A map `x -> ξ_x` into the unit sphere of `l²(index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    vectors: Vec<SparseVector>,
}

impl Witness {
    /// Validates unit norms (to `1e-9`) and that every projected point lies in `0..n_points`.
    pub fn new(n_points: usize, vectors: Vec<SparseVector>) -> Result<Self> {
        if vectors.len() != n_points {
            return Err(Error::InvalidWitness(format!(
                "{} vectors for {n_points} points",
                vectors.len()
            )));
        }
        let mut out = Vec::with_capacity(n_points);
        for (x, mut v) in vectors.into_iter().enumerate() {
            v.sort_by_key(|&(e, _)| e);
            if v.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidWitness(format!("repeated index entry at point {x}")));
            }
            if let Some(&(e, _)) = v.iter().find(|(e, _)| e.at >= n_points) {
                return Err(Error::InvalidWitness(format!(
                    "entry of point {x} projects to {} outside the domain",
                    e.at
                )));
            }
            if v.iter().any(|(_, c)| !c.is_finite()) {
                return Err(Error::InvalidWitness(format!("non-finite coefficient at point {x}")));
            }
            v.retain(|&(_, c)| c != 0.0);
            let norm = norm_sq(&v).sqrt();
            if (norm - 1.0).abs() > TOL {
                return Err(Error::InvalidWitness(format!("point {x} has norm {norm}, not 1")));
            }
            out.push(v);
        }
        Ok(Self { vectors: out })
    }

    /// Unit mass at the point itself.
    pub fn dirac(n_points: usize) -> Self {
        Self { vectors: (0..n_points).map(|x| vec![(IndexEntry::bare(x), 1.0)]).collect() }
    }

    /// `ξ_x = |B(x, r)|^{-1/2} · 1_{B(x, r)}`.
    pub fn uniform_ball(space: &FiniteMetricSpace, r: f64) -> Self {
        let vectors = (0..space.len())
            .map(|x| {
                let ball = space.ball_unchecked(x, r);
                let c = 1.0 / (ball.len() as f64).sqrt();
                ball.into_iter().map(|w| (IndexEntry::bare(w), c)).collect()
            })
            .collect();
        Self { vectors }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vector(&self, x: usize) -> &[(IndexEntry, f64)] {
        &self.vectors[x]
    }

    pub fn vectors(&self) -> &[SparseVector] {
        &self.vectors
    }

    pub fn norm(&self, x: usize) -> f64 {
        norm_sq(&self.vectors[x]).sqrt()
    }

    /// `‖ξ_x - ξ_y‖`.
    pub fn distance(&self, x: usize, y: usize) -> f64 {
        diff_norm_sq(&self.vectors[x], &self.vectors[y]).sqrt()
    }

    /// True when every entry carries a tag.
    pub fn is_tagged(&self) -> bool {
        self.vectors.iter().flatten().all(|(e, _)| e.tag.is_some())
    }

    /// Mass of `ξ_x` on entries projecting outside the closed ball `B(x, s)`.
    pub fn out_of_ball_mass(&self, space: &FiniteMetricSpace, x: usize, s: f64) -> f64 {
        self.vectors[x]
            .iter()
            .filter(|(e, _)| space.dist(x, e.at) > s)
            .map(|(_, c)| c * c)
            .sum()
    }
}

pub(crate) fn norm_sq(v: &[(IndexEntry, f64)]) -> f64 {
    v.iter().map(|(_, c)| c * c).sum()
}

pub(crate) fn diff_norm_sq(a: &[(IndexEntry, f64)], b: &[(IndexEntry, f64)]) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        let (ea, ca) = a[i];
        let (eb, cb) = b[j];
        match ea.cmp(&eb) {
            std::cmp::Ordering::Equal => {
                acc += (ca - cb) * (ca - cb);
                i += 1;
                j += 1;
            }
            std::cmp::Ordering::Less => {
                acc += ca * ca;
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                acc += cb * cb;
                j += 1;
            }
        }
    }
    acc + norm_sq(&a[i..]) + norm_sq(&b[j..])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationSample {
    pub r: f64,
    pub value: f64,
    pub pair: Option<(usize, usize)>,
}

/// Exact `max {‖ξ_x - ξ_y‖ : d(x, y) <= r}` for each requested `r`.
pub fn variation_profile(space: &FiniteMetricSpace, witness: &Witness, radii: &[f64]) -> Vec<VariationSample> {
    let mut order: Vec<usize> = (0..radii.len()).collect();
    order.sort_by(|&a, &b| radii[a].total_cmp(&radii[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| radii[i]).collect();
    let mut best: Vec<(f64, Option<(usize, usize)>)> = vec![(0.0, None); radii.len()];
    let max_r = sorted.last().copied().unwrap_or(-1.0);
    for x in 0..space.len() {
        for y in (x + 1)..space.len() {
            let d = space.dist(x, y);
            if d > max_r {
                continue;
            }
            let v = witness.distance(x, y);
            for b in &mut best[sorted.partition_point(|&r| r < d)..] {
                if b.1.is_none() || v > b.0 {
                    *b = (v, Some((x, y)));
                }
            }
        }
    }
    let mut out = vec![VariationSample { r: 0.0, value: 0.0, pair: None }; radii.len()];
    for (slot, &orig) in order.iter().enumerate() {
        out[orig] = VariationSample { r: radii[orig], value: best[slot].0, pair: best[slot].1 };
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailSample {
    pub s: f64,
    pub value: f64,
    /// Point attaining the maximum.
    pub point: usize,
}

/// Finite replacement for the `S -> ∞` decay condition.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayProfile {
    pub samples: Vec<TailSample>,
}

impl DecayProfile {
    pub fn value_at(&self, s: f64) -> Option<f64> {
        self.samples.iter().find(|t| t.s == s).map(|t| t.value)
    }

    /// Non-increasing in `S`, values in `[0, 1]`, zero once `S >= diameter`.
    pub fn is_well_formed(&self, diameter: f64) -> bool {
        let mut sorted = self.samples.clone();
        sorted.sort_by(|a, b| a.s.total_cmp(&b.s));
        sorted.windows(2).all(|w| w[1].value <= w[0].value + 1e-15)
            && sorted.iter().all(|t| (-1e-15..=1.0 + TOL).contains(&t.value))
            && sorted.iter().filter(|t| t.s >= diameter).all(|t| t.value == 0.0)
    }
}

/// `S -> max_x Σ_{w ∉ B(x, S)} |ξ_x(w)|²`.
pub fn tail_profile(space: &FiniteMetricSpace, witness: &Witness, s_list: &[f64]) -> DecayProfile {
    let samples = s_list
        .iter()
        .map(|&s| {
            let mut best = TailSample { s, value: 0.0, point: 0 };
            for x in 0..space.len() {
                let m = witness.out_of_ball_mass(space, x, s);
                if m > best.value {
                    best = TailSample { s, value: m, point: x };
                }
            }
            best
        })
        .collect();
    DecayProfile { samples }
}

/// A witness together with the space it lives on.
#[derive(Debug, Clone)]
pub struct WitnessMember {
    pub space: FiniteMetricSpace,
    pub witness: Witness,
}

impl WitnessMember {
    pub fn new(space: FiniteMetricSpace, witness: Witness) -> Result<Self> {
        if space.len() != witness.len() {
            return Err(Error::InvalidWitness(format!(
                "witness has {} points, space has {}",
                witness.len(),
                space.len()
            )));
        }
        Ok(Self { space, witness })
    }
}

#[derive(Debug, Clone, Default)]
pub struct WitnessFamily {
    pub members: Vec<WitnessMember>,
}

/// Pointwise supremum over the family of each member's profiles.
pub fn equi_profiles(
    family: &WitnessFamily,
    radii: &[f64],
    s_list: &[f64],
) -> Result<(Vec<VariationSample>, DecayProfile)> {
    let mut members = family.members.iter();
    let first = members.next().ok_or_else(|| Error::EmptySet("witness family".into()))?;
    let mut variation = variation_profile(&first.space, &first.witness, radii);
    let mut tail = tail_profile(&first.space, &first.witness, s_list);
    for m in members {
        for (acc, v) in variation.iter_mut().zip(variation_profile(&m.space, &m.witness, radii)) {
            if v.value > acc.value {
                *acc = v;
            }
        }
        for (acc, t) in tail.samples.iter_mut().zip(tail_profile(&m.space, &m.witness, s_list).samples) {
            if t.value > acc.value {
                *acc = t;
            }
        }
    }
    Ok((variation, tail))
}

/// `η_x(t) = sqrt(Σ_{entries e with e.at = t} |ξ_x(e)|²)` with a bare index.
pub fn collapse(witness: &Witness) -> Result<Witness> {
    if !witness.is_tagged() {
        return Err(Error::InvalidWitness("collapse needs a tagged index".into()));
    }
    let vectors = witness
        .vectors
        .iter()
        .map(|v| {
            let mut groups: BTreeMap<usize, f64> = BTreeMap::new();
            for (e, c) in v {
                *groups.entry(e.at).or_default() += c * c;
            }
            groups.into_iter().map(|(t, m)| (IndexEntry::bare(t), m.sqrt())).collect()
        })
        .collect();
    Ok(Witness { vectors })
}

/// `ξ'_{g(x)}(g(w)) = ξ_x(w)` along a bijective isometry `g : X -> X'`.
pub fn transport(
    source: &FiniteMetricSpace,
    witness: &Witness,
    target: &FiniteMetricSpace,
    g: &[usize],
) -> Result<Witness> {
    check_isometry(source, target, g)?;
    let mut vectors = vec![Vec::new(); target.len()];
    for (x, v) in witness.vectors.iter().enumerate() {
        let mut moved: SparseVector =
            v.iter().map(|&(e, c)| (IndexEntry { tag: e.tag, at: g[e.at] }, c)).collect();
        moved.sort_by_key(|&(e, _)| e);
        vectors[g[x]] = moved;
    }
    Ok(Witness { vectors })
}

/// Exhaustive check that `g` is a distance-preserving bijection.
pub fn check_isometry(source: &FiniteMetricSpace, target: &FiniteMetricSpace, g: &[usize]) -> Result<()> {
    if g.len() != source.len() || source.len() != target.len() {
        return Err(Error::Precondition(format!(
            "map of {} entries between spaces of {} and {} points is not a bijection",
            g.len(),
            source.len(),
            target.len()
        )));
    }
    let mut hit = vec![false; target.len()];
    for &y in g {
        target.check_point(y)?;
        if std::mem::replace(&mut hit[y], true) {
            return Err(Error::Precondition(format!("map is not injective at {}", target.id(y))));
        }
    }
    for x in 0..source.len() {
        for y in (x + 1)..source.len() {
            let (d, e) = (source.dist(x, y), target.dist(g[x], g[y]));
            if (d - e).abs() > TOL {
                return Err(Error::NotIsometry(source.id(x).into(), source.id(y).into(), d, e));
            }
        }
    }
    Ok(())
}
