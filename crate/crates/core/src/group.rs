//! Finitely generated groups (finite groups and truncated balls), word
//! metrics, coarse quasi-actions and the orbit-map pipeline.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::certificate::Check;
use crate::construct::{glue, subspace_witness, GlueInput, GlueOutput, WitnessProvider};
use crate::cover::Cover;
use crate::error::{Error, Result};
use crate::partition::{bell_constant, bell_partition, partition_variation, BellPartition, PartitionOfUnity};
use crate::space::{check_coarse_map, map_modulus, CoarseMapCert, FiniteMetricSpace, Modulus, SpaceKind, SubspaceRef};
use crate::witness::{transport, variation_profile, Witness};

/// How the element list was produced.
#[derive(Debug, Clone, PartialEq)]
pub enum GroupKind {
    Cyclic { n: usize },
    Product { factors: Vec<GroupKind> },
    /// Ball of radius `radius` in the free group (or free abelian group) on
    /// the given letters.
    Ball { letters: Vec<char>, radius: usize, abelian: bool },
}

/// A finite group or a truncated ball of a finitely generated group.
#[derive(Debug, Clone)]
pub struct GroupModel {
    kind: GroupKind,
    names: Vec<String>,
    identity: usize,
    inverse: Vec<usize>,
    generators: Vec<usize>,
    /// Row-major partial multiplication table.
    mult: Vec<Option<usize>>,
    /// Integer coordinates when the group is abelian with a coordinate model.
    coords: Option<Vec<Vec<i64>>>,
    truncation: Option<usize>,
    space: FiniteMetricSpace,
}

impl GroupModel {
    /// `Z_n` with generators `±1`.
    pub fn cyclic(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGroup("cyclic group of order 0".into()));
        }
        let names = (0..n).map(|g| g.to_string()).collect();
        let mult = (0..n * n).map(|k| Some((k / n + k % n) % n)).collect();
        let inverse = (0..n).map(|g| (n - g) % n).collect();
        let mut generators = vec![1 % n, (n - 1) % n];
        generators.retain(|&s| s != 0);
        generators.dedup();
        let coords = Some((0..n).map(|g| vec![g as i64]).collect());
        Self::assemble(GroupKind::Cyclic { n }, names, 0, inverse, generators, mult, coords, None)
    }

    /// Direct product of finite groups; generators are `(s, e)` and `(e, s)`.
    pub fn product(factors: &[GroupModel]) -> Result<Self> {
        let (first, rest) = factors
            .split_first()
            .ok_or_else(|| Error::InvalidGroup("product of no factors".into()))?;
        let mut acc = first.clone();
        for f in rest {
            acc = acc.product_with(f)?;
        }
        Ok(acc)
    }

    fn product_with(&self, other: &GroupModel) -> Result<Self> {
        if self.truncation.is_some() || other.truncation.is_some() {
            return Err(Error::InvalidGroup("products are supported for finite groups only".into()));
        }
        let (n, m) = (self.len(), other.len());
        let pair = |a: usize, b: usize| a * m + b;
        let names = (0..n * m)
            .map(|k| format!("{},{}", self.names[k / m], other.names[k % m]))
            .collect();
        let mut mult = vec![None; n * m * n * m];
        for x in 0..n * m {
            for y in 0..n * m {
                let a = self.mul(x / m, y / m);
                let b = other.mul(x % m, y % m);
                mult[x * n * m + y] = a.zip(b).map(|(a, b)| pair(a, b));
            }
        }
        let inverse = (0..n * m).map(|k| pair(self.inverse[k / m], other.inverse[k % m])).collect();
        let mut generators: Vec<usize> = self
            .generators
            .iter()
            .map(|&s| pair(s, other.identity))
            .chain(other.generators.iter().map(|&s| pair(self.identity, s)))
            .collect();
        generators.sort_unstable();
        generators.dedup();
        let coords = self.coords.as_ref().zip(other.coords.as_ref()).map(|(c, d)| {
            (0..n * m).map(|k| [c[k / m].clone(), d[k % m].clone()].concat()).collect()
        });
        let mut factors = match &self.kind {
            GroupKind::Product { factors } => factors.clone(),
            k => vec![k.clone()],
        };
        factors.push(other.kind.clone());
        let identity = pair(self.identity, other.identity);
        Self::assemble(GroupKind::Product { factors }, names, identity, inverse, generators, mult, coords, None)
    }

    /// The ball `B(e, radius)` in the free group on `letters` (lowercase; the
    /// uppercase letter is the inverse), or in `Z^letters` when `abelian`.
    pub fn ball(letters: &[char], radius: usize, abelian: bool) -> Result<Self> {
        if letters.is_empty() {
            return Err(Error::InvalidGroup("ball needs at least one generator".into()));
        }
        let mut seen = letters.to_vec();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != letters.len() || letters.iter().any(|c| !c.is_ascii_lowercase()) {
            return Err(Error::InvalidGroup("generators must be distinct lowercase letters".into()));
        }
        let kind = GroupKind::Ball { letters: letters.to_vec(), radius, abelian };
        if abelian {
            Self::abelian_ball(kind, letters, radius)
        } else {
            Self::free_ball(kind, letters, radius)
        }
    }

    fn free_ball(kind: GroupKind, letters: &[char], radius: usize) -> Result<Self> {
        // letter codes: +(j+1) for letters[j], -(j+1) for its inverse
        let codes: Vec<i32> = (1..=letters.len() as i32).flat_map(|j| [j, -j]).collect();
        let mut words: Vec<Vec<i32>> = vec![Vec::new()];
        let mut frontier = vec![Vec::new()];
        for _ in 0..radius {
            let mut next = Vec::new();
            for w in &frontier {
                for &c in &codes {
                    if w.last() != Some(&-c) {
                        let mut v: Vec<i32> = w.clone();
                        v.push(c);
                        next.push(v);
                    }
                }
            }
            words.extend(next.iter().cloned());
            frontier = next;
        }
        let index: HashMap<Vec<i32>, usize> = words.iter().cloned().enumerate().map(|(i, w)| (w, i)).collect();
        let reduce = |a: &[i32], b: &[i32]| -> Vec<i32> {
            let mut out = a.to_vec();
            for &c in b {
                if out.last() == Some(&-c) {
                    out.pop();
                } else {
                    out.push(c);
                }
            }
            out
        };
        let n = words.len();
        let mut mult = vec![None; n * n];
        for (x, a) in words.iter().enumerate() {
            for (y, b) in words.iter().enumerate() {
                mult[x * n + y] = index.get(&reduce(a, b)).copied();
            }
        }
        let inverse = words
            .iter()
            .map(|w| index[&w.iter().rev().map(|c| -c).collect::<Vec<_>>()])
            .collect();
        let name = |w: &[i32]| -> String {
            if w.is_empty() {
                return "e".into();
            }
            w.iter()
                .map(|&c| {
                    let l = letters[(c.unsigned_abs() - 1) as usize];
                    if c > 0 { l } else { l.to_ascii_uppercase() }
                })
                .collect()
        };
        let names = words.iter().map(|w| name(w)).collect();
        let mut generators: Vec<usize> = codes.iter().filter_map(|&c| index.get(&vec![c]).copied()).collect();
        generators.sort_unstable();
        let coords = (letters.len() == 1).then(|| words.iter().map(|w| vec![w.iter().map(|&c| c.signum() as i64).sum()]).collect());
        Self::assemble(kind, names, 0, inverse, generators, mult, coords, Some(radius))
    }

    fn abelian_ball(kind: GroupKind, letters: &[char], radius: usize) -> Result<Self> {
        let rank = letters.len();
        let r = radius as i64;
        let mut points: Vec<Vec<i64>> = vec![Vec::new()];
        for _ in 0..rank {
            points = points
                .into_iter()
                .flat_map(|p| (-r..=r).map(move |v| [p.clone(), vec![v]].concat()))
                .collect();
        }
        points.retain(|p| p.iter().map(|v| v.abs()).sum::<i64>() <= r);
        // identity first, then by word length, then lexicographically
        points.sort_by_key(|p| (p.iter().map(|v| v.abs()).sum::<i64>(), p.clone()));
        let index: HashMap<Vec<i64>, usize> = points.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
        let n = points.len();
        let mut mult = vec![None; n * n];
        for (x, a) in points.iter().enumerate() {
            for (y, b) in points.iter().enumerate() {
                let s: Vec<i64> = a.iter().zip(b).map(|(u, v)| u + v).collect();
                mult[x * n + y] = index.get(&s).copied();
            }
        }
        let inverse = points.iter().map(|p| index[&p.iter().map(|v| -v).collect::<Vec<_>>()]).collect();
        let names = points
            .iter()
            .map(|p| p.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
            .collect();
        let mut generators: Vec<usize> = (0..rank)
            .flat_map(|j| [1, -1].map(|s| {
                let mut e = vec![0; rank];
                e[j] = s;
                e
            }))
            .filter_map(|e| index.get(&e).copied())
            .collect();
        generators.sort_unstable();
        Self::assemble(kind, names, 0, inverse, generators, mult, Some(points), Some(radius))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        kind: GroupKind,
        names: Vec<String>,
        identity: usize,
        inverse: Vec<usize>,
        generators: Vec<usize>,
        mult: Vec<Option<usize>>,
        coords: Option<Vec<Vec<i64>>>,
        truncation: Option<usize>,
    ) -> Result<Self> {
        let n = names.len();
        for &s in &generators {
            if !generators.contains(&inverse[s]) {
                return Err(Error::InvalidGroup(format!("generating set is not symmetric at {}", names[s])));
            }
        }
        let mut edges = Vec::new();
        for g in 0..n {
            for &s in &generators {
                if let Some(h) = mult[g * n + s] {
                    if g < h {
                        edges.push((g, h));
                    }
                }
            }
        }
        let space = FiniteMetricSpace::from_graph(names.clone(), &edges).map_err(|e| match e {
            Error::Disconnected(a, b) => Error::InvalidGroup(format!(
                "Cayley graph is disconnected: {b} unreachable from {a}; generators do not generate"
            )),
            other => other,
        })?;
        Ok(Self { kind, names, identity, inverse, generators, mult, coords, truncation, space })
    }

    pub fn kind(&self) -> &GroupKind {
        &self.kind
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, g: usize) -> &str {
        &self.names[g]
    }

    pub fn identity(&self) -> usize {
        self.identity
    }

    pub fn inverse(&self, g: usize) -> usize {
        self.inverse[g]
    }

    pub fn generators(&self) -> &[usize] {
        &self.generators
    }

    /// `g·h` when it is stored.
    pub fn mul(&self, g: usize, h: usize) -> Option<usize> {
        self.mult[g * self.len() + h]
    }

    pub fn coords(&self, g: usize) -> Option<&[i64]> {
        self.coords.as_ref().map(|c| c[g].as_slice())
    }

    /// Truncation radius `N` of a ball model.
    pub fn truncation(&self) -> Option<usize> {
        self.truncation
    }

    pub fn is_finite_group(&self) -> bool {
        self.truncation.is_none()
    }

    pub fn word_length(&self, g: usize) -> f64 {
        self.space.dist(self.identity, g)
    }

    /// Elements where the stored word metric is exact: all of a finite group,
    /// `B(e, N/2)` for a ball of radius `N`.
    pub fn exact_region(&self) -> Vec<usize> {
        match self.truncation {
            None => (0..self.len()).collect(),
            Some(n) => (0..self.len()).filter(|&g| self.word_length(g) <= n as f64 / 2.0).collect(),
        }
    }

    /// `h ↦ g·h`, `None` where the product leaves the model.
    pub fn left_translation(&self, g: usize) -> Vec<Option<usize>> {
        (0..self.len()).map(|h| self.mul(g, h)).collect()
    }

    /// Exhaustive `d(gh, gh') = d(h, h')` over a finite group.
    pub fn check_left_invariance(&self) -> Result<()> {
        if !self.is_finite_group() {
            return Err(Error::InvalidGroup("left invariance is only claimed for finite groups".into()));
        }
        let n = self.len();
        let bad = (0..n).into_par_iter().find_map_first(|g| {
            for h in 0..n {
                for k in (h + 1)..n {
                    let (a, b) = (self.mul(g, h)?, self.mul(g, k)?);
                    if self.space.dist(a, b) != self.space.dist(h, k) {
                        return Some((g, h, k));
                    }
                }
            }
            None
        });
        match bad {
            None => Ok(()),
            Some((g, h, k)) => Err(Error::InvalidGroup(format!(
                "word metric not left-invariant: g={}, h={}, h'={}",
                self.names[g], self.names[h], self.names[k]
            ))),
        }
    }
}

/// BFS word metric on the stored elements.
pub fn word_metric_space(group: &GroupModel) -> &FiniteMetricSpace {
    &group.space
}

// ---------------------------------------------------------------------------
// actions

/// Self-maps `f_g` of a finite space, one per group element.
pub type ActionMaps = Vec<Vec<usize>>;

fn integer_position(space: &FiniteMetricSpace, x: usize) -> Result<i64> {
    match space.kind() {
        SpaceKind::Cycle { .. } => Ok(x as i64),
        SpaceKind::ZInterval { lo, .. } => Ok(lo + x as i64),
        _ => Err(Error::Precondition("translation needs a cycle or Z-interval space".into())),
    }
}

fn integer_point(space: &FiniteMetricSpace, v: i64) -> Result<usize> {
    match *space.kind() {
        SpaceKind::Cycle { n } => Ok(v.rem_euclid(n as i64) as usize),
        SpaceKind::ZInterval { lo, hi } => Ok((v.clamp(lo, hi) - lo) as usize),
        _ => Err(Error::Precondition("translation needs a cycle or Z-interval space".into())),
    }
}

fn integer_value(group: &GroupModel, g: usize) -> Result<i64> {
    match group.coords(g) {
        Some([v]) => Ok(*v),
        _ => Err(Error::Precondition("translation needs a group with one integer coordinate".into())),
    }
}

/// `f_g(x) = x + g`, modulo `n` on a cycle and clamped on a Z-interval.
pub fn translation_maps(group: &GroupModel, space: &FiniteMetricSpace) -> Result<ActionMaps> {
    (0..group.len())
        .map(|g| {
            let shift = integer_value(group, g)?;
            (0..space.len())
                .map(|x| integer_point(space, integer_position(space, x)? + shift))
                .collect()
        })
        .collect()
}

/// `f_g(x) + p(g, x)` with the same wrap/clamp rule as [`translation_maps`].
pub fn perturb_maps(space: &FiniteMetricSpace, maps: &ActionMaps, table: &[Vec<i64>]) -> Result<ActionMaps> {
    if table.len() != maps.len() || table.iter().any(|row| row.len() != space.len()) {
        return Err(Error::Precondition(format!(
            "perturbation table must be {} x {}",
            maps.len(),
            space.len()
        )));
    }
    maps.iter()
        .zip(table)
        .map(|(f, p)| {
            f.iter()
                .zip(p)
                .map(|(&y, &bump)| integer_point(space, integer_position(space, y)? + bump))
                .collect()
        })
        .collect()
}

/// Deterministic perturbation table with entries in `[-amplitude, amplitude]`.
pub fn seeded_perturbation(group_len: usize, space_len: usize, amplitude: i64, seed: u64) -> Vec<Vec<i64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..group_len)
        .map(|_| (0..space_len).map(|_| rng.gen_range(-amplitude..=amplitude)).collect())
        .collect()
}

/// Optional upper limits enforced by [`certify_quasi_action`].
#[derive(Debug, Clone, Copy, Default)]
pub struct Ceilings {
    pub a: Option<f64>,
    pub b: Option<f64>,
}

/// Certified constants of a coarse quasi-action on a finite space.
#[derive(Debug, Clone)]
pub struct CoarseQuasiAction {
    pub group: GroupModel,
    pub space: FiniteMetricSpace,
    pub maps: ActionMaps,
    /// Smallest uniform modulus on the sampled radii.
    pub modulus: Modulus,
    /// `sup_x d(f_e(x), x)` and the point attaining it.
    pub a: f64,
    pub a_witness: usize,
    /// `sup d(f_g(f_h(x)), f_gh(x))` over composable `g, h` and the triple attaining it.
    pub b: f64,
    pub b_witness: (usize, usize, usize),
    /// `sup d(f_g(f_{g⁻¹}(x)), x)` and the pair `(g, x)` attaining it.
    pub inverse_defect: f64,
    pub inverse_witness: (usize, usize),
}

impl CoarseQuasiAction {
    pub fn apply(&self, g: usize, x: usize) -> usize {
        self.maps[g][x]
    }

    /// Monotone modulus and the derived inverse defect `<= A + B`.
    pub fn checks(&self) -> Vec<Check> {
        let (g, x) = self.inverse_witness;
        vec![
            Check::holds("quasi-action: ℓ non-decreasing", self.modulus.is_non_decreasing()),
            Check::le(
                format!("quasi-action: d(f_g∘f_g⁻¹, id) ≤ A + B (g={})", self.group.name(g)),
                self.inverse_defect,
                self.a + self.b,
            )
            .with_point(&self.space, x),
        ]
    }
}

/// Computes the tight `ℓ`, `A` and `B` by exhaustive maxima.
pub fn certify_quasi_action(
    group: &GroupModel,
    space: &FiniteMetricSpace,
    maps: ActionMaps,
    radii: &[f64],
    ceilings: Ceilings,
) -> Result<CoarseQuasiAction> {
    if maps.len() != group.len() {
        return Err(Error::Precondition(format!("{} maps for {} group elements", maps.len(), group.len())));
    }
    for (g, f) in maps.iter().enumerate() {
        if f.len() != space.len() {
            return Err(Error::Precondition(format!("map f_{} is not total", group.name(g))));
        }
        for &y in f {
            space.check_point(y)?;
        }
    }
    let moduli: Vec<Modulus> = maps.par_iter().map(|f| map_modulus(space, space, f, radii).0).collect();
    let mut modulus = moduli[0].clone();
    for m in &moduli[1..] {
        for (v, o) in modulus.values.iter_mut().zip(&m.values) {
            *v = v.max(*o);
        }
        modulus.global = modulus.global.max(m.global);
    }
    let n = space.len();
    let e = group.identity();
    let (a, a_witness) = (0..n).map(|x| (space.dist(maps[e][x], x), x)).fold((0.0, 0), max_by_value);
    let (b, b_witness) = (0..group.len())
        .into_par_iter()
        .map(|g| {
            let mut best = (0.0, (g, e, 0));
            for h in 0..group.len() {
                let Some(gh) = group.mul(g, h) else { continue };
                for x in 0..n {
                    let d = space.dist(maps[g][maps[h][x]], maps[gh][x]);
                    if d > best.0 {
                        best = (d, (g, h, x));
                    }
                }
            }
            best
        })
        .reduce(|| (0.0, (e, e, 0)), |p, q| if q.0 > p.0 || (q.0 == p.0 && q.1 < p.1) { q } else { p });
    let (inverse_defect, inverse_witness) = (0..group.len())
        .flat_map(|g| (0..n).map(move |x| (g, x)))
        .map(|(g, x)| (space.dist(maps[g][maps[group.inverse(g)][x]], x), (g, x)))
        .fold((0.0, (e, 0)), max_by_value);
    if let Some(ceiling) = ceilings.a {
        if a > ceiling {
            return Err(Error::CeilingExceeded {
                name: "A".into(),
                value: a,
                ceiling,
                witness: format!("x={}", space.id(a_witness)),
            });
        }
    }
    if let Some(ceiling) = ceilings.b {
        if b > ceiling {
            let (g, h, x) = b_witness;
            return Err(Error::CeilingExceeded {
                name: "B".into(),
                value: b,
                ceiling,
                witness: format!("g={}, h={}, x={}", group.name(g), group.name(h), space.id(x)),
            });
        }
    }
    Ok(CoarseQuasiAction {
        group: group.clone(),
        space: space.clone(),
        maps,
        modulus,
        a,
        a_witness,
        b,
        b_witness,
        inverse_defect,
        inverse_witness,
    })
}

fn max_by_value<T>(acc: (f64, T), next: (f64, T)) -> (f64, T) {
    if next.0 > acc.0 { next } else { acc }
}

/// `W_T(x₀) = {g : d(f_g(x₀), x₀) <= T}`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiStabilizer {
    pub base_point: usize,
    pub threshold: f64,
    pub members: Vec<usize>,
}

impl QuasiStabilizer {
    pub fn subspace(&self, group: &GroupModel) -> Result<SubspaceRef> {
        SubspaceRef::new(word_metric_space(group), self.members.clone())
    }
}

pub fn quasi_stabilizer(action: &CoarseQuasiAction, x0: usize, t: f64) -> Result<QuasiStabilizer> {
    action.space.check_point(x0)?;
    let members = (0..action.group.len())
        .filter(|&g| action.space.dist(action.apply(g, x0), x0) <= t)
        .collect();
    Ok(QuasiStabilizer { base_point: x0, threshold: t, members })
}

/// `π(g) = f_g(x₀)` with its certified Lipschitz constant `ℓ(λ) + B`.
#[derive(Debug, Clone)]
pub struct OrbitMap {
    pub cert: CoarseMapCert,
    /// `max_s d(f_s(x₀), x₀)`.
    pub lambda: f64,
    pub constant: f64,
    /// Largest `d(π(g), π(gs))` and the pair `(g, gs)` attaining it.
    pub observed: f64,
    pub observed_pair: Option<(usize, usize)>,
}

impl OrbitMap {
    pub fn check(&self, group: &GroupModel) -> Check {
        Check::le("orbit map: d(π(g), π(gs)) ≤ ℓ(λ) + B", self.observed, self.constant)
            .with_pair(word_metric_space(group), self.observed_pair)
    }
}

pub fn orbit_map(action: &CoarseQuasiAction, x0: usize) -> Result<OrbitMap> {
    action.space.check_point(x0)?;
    let group = &action.group;
    let assignment: Vec<usize> = (0..group.len()).map(|g| action.apply(g, x0)).collect();
    let words = word_metric_space(group);
    let cert = check_coarse_map(words, &action.space, &assignment, words.realized_distances())?;
    let lambda = group
        .generators()
        .iter()
        .map(|&s| action.space.dist(assignment[s], x0))
        .fold(0.0, f64::max);
    let constant = action.modulus.at(lambda) + action.b;
    let mut observed = 0.0;
    let mut observed_pair = None;
    for g in 0..group.len() {
        for &s in group.generators() {
            if let Some(gs) = group.mul(g, s) {
                let d = action.space.dist(assignment[g], assignment[gs]);
                if observed_pair.is_none() || d > observed {
                    observed = d;
                    observed_pair = Some((g, gs));
                }
            }
        }
    }
    Ok(OrbitMap { cert, lambda, constant, observed, observed_pair })
}

// ---------------------------------------------------------------------------
// pipeline

#[derive(Debug, Clone, Copy)]
pub struct GroupPipelineParams {
    pub x0: usize,
    pub r: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct GroupPipelineOutput {
    pub orbit: OrbitMap,
    /// `k` with every cover in play of multiplicity at most `k + 1`.
    pub k: usize,
    /// `2 c R (2k+2)(2k+3) / ε` with `c = ℓ(λ) + B`.
    pub l_required: f64,
    pub lebesgue: f64,
    pub enlarged: Cover,
    pub representatives: Vec<usize>,
    /// `max_i max_{v ∈ V_i} d(v, f_{g_i}(x₀))`.
    pub t: f64,
    /// `A + 2B + ℓ(T)`.
    pub t_prime: f64,
    pub stabilizer: QuasiStabilizer,
    pub bell: BellPartition,
    /// `φ_i ∘ π` over the nonempty preimages `π⁻¹(V_i)`.
    pub partition: PartitionOfUnity,
    /// `piece_source[j]` is the cover index of glue piece `j`.
    pub piece_source: Vec<usize>,
    pub glue: GlueOutput,
    pub checks: Vec<Check>,
    pub informational: Vec<Check>,
    pub truncation_flags: Vec<String>,
}

/// Lebesgue number for admissibility purposes: when even the balls of radius
/// `diam X` (that is, `X` itself) fit, every radius fits.
fn effective_lebesgue(cover: &Cover, space: &FiniteMetricSpace) -> f64 {
    let report = cover.lebesgue_number(space);
    if report.first_failing.is_none() { f64::INFINITY } else { report.value }
}

/// Smallest ε the admissibility condition allows for this cover, and its `k`.
pub fn admissible_epsilon(action: &CoarseQuasiAction, x0: usize, cover: &Cover, r: f64) -> Result<(f64, usize)> {
    let orbit = orbit_map(action, x0)?;
    let (lebesgue, _, k) = cover_scale(cover, &action.space);
    if lebesgue <= 0.0 {
        return Err(Error::Precondition("Lebesgue number 0: no ε is admissible".into()));
    }
    Ok((2.0 * orbit.constant * r * bell_constant(k, 1.0) / lebesgue, k))
}

/// `L`, the enlargement `V = N_L(U)` and `k = max(mult U, mult V) − 1`.
fn cover_scale(cover: &Cover, space: &FiniteMetricSpace) -> (f64, Cover, usize) {
    let l = effective_lebesgue(cover, space);
    let enlarged = cover.enlarge(space, l.min(space.diameter()));
    let k = cover.multiplicity().max(enlarged.multiplicity()) - 1;
    (l, enlarged, k)
}

/// Builds a witness on `G` from a witness on one quasi-stabilizer, an
/// orbit map and a cover of the space.
///
/// `provider` is asked for piece 0 on the stabilizer `W_{A+2B+ℓ(T)}(x₀)`.
pub fn group_pipeline(
    action: &CoarseQuasiAction,
    cover: &Cover,
    params: GroupPipelineParams,
    provider: &dyn WitnessProvider,
    radii: &[f64],
    s_list: &[f64],
) -> Result<GroupPipelineOutput> {
    let GroupPipelineParams { x0, r, epsilon } = params;
    let group = &action.group;
    let space = &action.space;
    let words = word_metric_space(group);
    if !(r > 0.0 && epsilon > 0.0) {
        return Err(Error::Precondition("R and ε must be positive".into()));
    }
    if cover.n_points() != space.len() {
        return Err(Error::InvalidCover("cover does not live on the acted-on space".into()));
    }
    let orbit = orbit_map(action, x0)?;
    let c = orbit.constant;
    let lebesgue = cover.lebesgue_number(space).value;

    let (admissible, enlarged, k) = cover_scale(cover, space);
    let l_required = 2.0 * c * r * bell_constant(k, 1.0) / epsilon;
    if admissible < l_required * (1.0 - 1e-12) {
        return Err(Error::Precondition(format!(
            "Lebesgue number {lebesgue} < required {l_required} (2·{c}·{r}·(2k+2)(2k+3)/{epsilon}, k={k})"
        )));
    }

    // representatives g_i and the radius T
    let orbit_points = &orbit.cert.assignment;
    let mut representatives = Vec::with_capacity(enlarged.len());
    let mut t: f64 = 0.0;
    for v in enlarged.pieces() {
        let reach = |g: usize| v.iter().map(|&p| space.dist(p, orbit_points[g])).fold(0.0, f64::max);
        let (best, g) = (0..group.len()).map(|g| (reach(g), g)).fold((f64::INFINITY, 0), |acc, n| if n.0 < acc.0 { n } else { acc });
        representatives.push(g);
        t = t.max(best);
    }
    let t_prime = action.a + 2.0 * action.b + action.modulus.at(t);
    let stabilizer = quasi_stabilizer(action, x0, t_prime)?;
    let w_ref = stabilizer.subspace(group)?;
    let w_space = w_ref.materialize(words);
    let beta = provider.witness_for(0, &w_space)?;
    if beta.len() != w_space.len() {
        return Err(Error::InvalidWitness("stabilizer witness is on the wrong domain".into()));
    }

    let bell = bell_partition(space, cover)?;
    let mut checks = orbit_checks(action, &orbit, group);
    checks.push(
        Check::le(
            format!("Lipschitz bound (2k+2)(2k+3)/L with k={k}"),
            bell.observed.value,
            bell_constant(k, lebesgue),
        )
        .with_pair(space, bell.observed.pair),
    );
    checks.push(Check::le("enlarged multiplicity ≤ k+1", enlarged.multiplicity() as f64, (k + 1) as f64));
    checks.push(Check::le("Lebesgue number ≥ required L", l_required, admissible * (1.0 + 1e-12)));

    // pieces π⁻¹(V_i) of G, dropping empty ones
    let preimage = |piece: &[usize]| -> Vec<usize> {
        (0..group.len()).filter(|&g| piece.binary_search(&orbit_points[g]).is_ok()).collect()
    };
    let mut piece_source = Vec::new();
    let mut pieces = Vec::new();
    for (i, v) in enlarged.pieces().iter().enumerate() {
        let pre = preimage(v);
        if !pre.is_empty() {
            piece_source.push(i);
            pieces.push(pre);
        }
    }
    let g_cover = Cover::new(words, pieces.clone(), None)?;
    let rows = (0..group.len())
        .map(|g| {
            piece_source
                .iter()
                .enumerate()
                .filter_map(|(j, &i)| {
                    let v = bell.partition.value(i, orbit_points[g]);
                    (v > 0.0).then_some((j, v))
                })
                .collect()
        })
        .collect();
    let partition = PartitionOfUnity::new(g_cover, rows)?;

    // piece witnesses: transport along g_i, then restrict to π⁻¹(V_i)
    let mut piece_witnesses = Vec::with_capacity(pieces.len());
    let mut all_contained = true;
    for (j, pre) in pieces.iter().enumerate() {
        let gi = representatives[piece_source[j]];
        let gi_inv = group.inverse(gi);
        let contained = pre
            .iter()
            .all(|&h| group.mul(gi_inv, h).is_some_and(|w| w_ref.local_index(w).is_some()));
        checks.push(Check::holds(
            format!("g_i⁻¹·π⁻¹(V_i) ⊆ W_{{A+2B+ℓ(T)}}(x₀) for i={} (g_i={})", piece_source[j], group.name(gi)),
            contained,
        ));
        all_contained &= contained;
        let translated: Option<Vec<usize>> = w_ref.members().iter().map(|&w| group.mul(gi, w)).collect();
        let witness = match (contained, translated) {
            (true, Some(image)) => {
                let image_ref = SubspaceRef::new(words, image.clone())?;
                let image_space = image_ref.materialize(words);
                let map: Vec<usize> = image.iter().map(|&g| image_ref.local_index(g).expect("member")).collect();
                let moved = transport(&w_space, &beta, &image_space, &map)?;
                let locals: Vec<usize> = pre.iter().map(|&h| image_ref.local_index(h).expect("contained")).collect();
                subspace_witness(&image_space, &moved, &locals)?.collapsed
            }
            // containment failed: keep going with a placeholder so the failure is reported
            _ => Witness::dirac(pre.len()),
        };
        piece_witnesses.push(witness);
    }

    // verification pairs
    let region = group.exact_region();
    let mut truncation_flags = Vec::new();
    if let Some(n) = group.truncation() {
        truncation_flags.push(format!(
            "truncated ball of radius {n}: pairs verified only within word length {} of the identity ({} of {} elements)",
            n as f64 / 2.0,
            region.len(),
            group.len()
        ));
    }
    let pairs: Vec<(usize, usize)> = region
        .iter()
        .flat_map(|&g| region.iter().map(move |&h| (g, h)))
        .filter(|&(g, h)| g < h && words.dist(g, h) <= r)
        .collect();

    let total_gap = (0..group.len())
        .map(|g| (partition.at(g).iter().map(|&(_, v)| v).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    checks.push(Check::le_tol("Σ_i φ_i(g) = 1 on G", total_gap, 0.0, 1e-12));

    let (worst, worst_pair) = pairs
        .iter()
        .map(|&(g, h)| (partition.l1_difference(g, h), Some((g, h))))
        .fold((0.0, None), |acc, n| if n.0 > acc.0 { n } else { acc });
    checks.push(Check::le(format!("ε-chain: Σ|φ_i(g) − φ_i(g')| ≤ ε for d(g,g') ≤ {r}"), worst, epsilon).with_pair(words, worst_pair));
    checks.push(
        Check::le(
            "ε-chain: Σ|Δφ| ≤ (2k+2)(2k+3)/L · (ℓ(λ)+B)·R",
            worst,
            bell_constant(k, lebesgue) * c * r,
        )
        .with_pair(words, worst_pair),
    );

    // g ∈ π⁻¹(U_i), d(g,g') ≤ R  ⇒  g' ∈ π⁻¹(V_i)
    let mut escape = None;
    'outer: for &(g, h) in &pairs {
        for (a, b) in [(g, h), (h, g)] {
            for (i, u) in cover.pieces().iter().enumerate() {
                if u.binary_search(&orbit_points[a]).is_ok() && enlarged.piece(i).binary_search(&orbit_points[b]).is_err() {
                    escape = Some((a, b));
                    break 'outer;
                }
            }
        }
    }

    // the weighted formula Σ_h φ_U(π g)|β^i_g(h)|² reproduces φ ∘ π
    let formula_gap = (0..group.len())
        .flat_map(|g| (0..piece_source.len()).map(move |j| (g, j)))
        .map(|(g, j)| {
            let local = pieces[j].binary_search(&g);
            let mass = local.map_or(0.0, |l| piece_witnesses[j].norm(l).powi(2));
            let weighted = bell.partition.value(piece_source[j], orbit_points[g]) * mass;
            (weighted - partition.value(j, g)).abs()
        })
        .fold(0.0, f64::max);
    checks.push(Check::le_tol("φ_i(g) = Σ_h φ_{U_i}(π g)|β^i_g(h)|² equals φ_i ∘ π", formula_gap, 0.0, 1e-9));

    let mut informational = vec![
        Check::holds(format!("R-neighbours of π⁻¹(U_i) stay in π⁻¹(V_i) (R={r})"), escape.is_none())
            .with_pair(words, escape),
    ];
    if all_contained {
        let piece_var = pieces
            .iter()
            .zip(&piece_witnesses)
            .map(|(p, w)| {
                let s = SubspaceRef::new(words, p.clone()).map(|s| s.materialize(words));
                s.map(|s| variation_profile(&s, w, &[r])[0].value)
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        informational.push(Check::le(format!("piece witnesses have (R, ε/4) variation at R={r}"), piece_var, epsilon / 4.0));
    }
    let overall = partition_variation(words, &partition, r);
    informational.push(Check::le(format!("partition variation over all stored pairs at R={r}"), overall.value, epsilon).with_pair(words, overall.pair));

    let glue = glue(words, &GlueInput::new(partition.clone(), piece_witnesses)?, radii, s_list)?;
    checks.extend(glue.checks.iter().cloned());
    Ok(GroupPipelineOutput {
        orbit,
        k,
        l_required,
        lebesgue,
        enlarged,
        representatives,
        t,
        t_prime,
        stabilizer,
        bell,
        partition,
        piece_source,
        glue,
        checks,
        informational,
        truncation_flags,
    })
}

fn orbit_checks(action: &CoarseQuasiAction, orbit: &OrbitMap, group: &GroupModel) -> Vec<Check> {
    let mut out = action.checks();
    out.push(orbit.check(group));
    out
}
