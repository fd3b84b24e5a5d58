//! Finite metric spaces, balls, nets, subspaces and coarse maps.
//!
//! Points are addressed by their position in the space's stored order. Every
//! tie-break in the crate ("smallest point") refers to that order.

use std::collections::{HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Absolute tolerance used for metric-axiom checks and unit-norm checks.
pub const TOL: f64 = 1e-9;

/// Spaces above this size get a sampled (not exhaustive) triangle check.
pub const EXHAUSTIVE_TRIANGLE_LIMIT: usize = 300;
const SAMPLED_TRIANGLES: usize = 200_000;

/// How a space was produced. Structured kinds unlock the block constructions
/// used by the asymptotic-dimension cover search and coordinate-based rules.
#[derive(Debug, Clone, PartialEq)]
pub enum SpaceKind {
    Matrix,
    Graph,
    ZInterval { lo: i64, hi: i64 },
    Cycle { n: usize },
    Grid { dims: Vec<usize> },
    Subspace,
}

#[derive(Debug, Clone)]
pub struct FiniteMetricSpace {
    ids: Vec<String>,
    lookup: HashMap<String, usize>,
    dist: Vec<f64>,
    realized: Vec<f64>,
    kind: SpaceKind,
}

impl FiniteMetricSpace {
    /// Builds a space from a full distance table and validates the metric axioms.
    pub fn from_matrix(ids: Vec<String>, table: &[Vec<f64>]) -> Result<Self> {
        let n = ids.len();
        if table.len() != n || table.iter().any(|row| row.len() != n) {
            return Err(Error::MetricAxiom(format!(
                "distance table must be {n}x{n}"
            )));
        }
        let dist: Vec<f64> = table.iter().flatten().copied().collect();
        Self::assemble(ids, dist, SpaceKind::Matrix)
    }

    /// Shortest-path metric of an unweighted graph on `ids`.
    pub fn from_graph(ids: Vec<String>, edges: &[(usize, usize)]) -> Result<Self> {
        let n = ids.len();
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::PointIndex(a.max(b), n));
            }
            if a != b {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        let mut dist = vec![f64::INFINITY; n * n];
        for s in 0..n {
            for (t, d) in bfs(&adj, s).into_iter().enumerate() {
                match d {
                    Some(d) => dist[s * n + t] = d as f64,
                    None => return Err(Error::Disconnected(ids[t].clone(), ids[s].clone())),
                }
            }
        }
        Self::assemble(ids, dist, SpaceKind::Graph)
    }

    /// The integer interval `[lo, hi]` with `|a - b|`; ids are the integers.
    pub fn z_interval(lo: i64, hi: i64) -> Result<Self> {
        if hi < lo {
            return Err(Error::EmptySet(format!("z_interval [{lo}, {hi}]")));
        }
        let ids: Vec<String> = (lo..=hi).map(|v| v.to_string()).collect();
        let n = ids.len();
        let mut dist = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                dist[a * n + b] = (a as f64 - b as f64).abs();
            }
        }
        Self::assemble(ids, dist, SpaceKind::ZInterval { lo, hi })
    }

    /// The cycle graph on `0..n`.
    pub fn cycle(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptySet("cycle of length 0".into()));
        }
        let ids: Vec<String> = (0..n).map(|v| v.to_string()).collect();
        let mut dist = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                let d = a.abs_diff(b);
                dist[a * n + b] = d.min(n - d) as f64;
            }
        }
        Self::assemble(ids, dist, SpaceKind::Cycle { n })
    }

    /// Integer grid `[0,n1) x [0,n2) x ...` with the l1 metric. Ids look like `"a,b"`.
    pub fn grid(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::EmptySet(format!("grid with dims {dims:?}")));
        }
        let coords = grid_coordinates(dims);
        let ids: Vec<String> = coords
            .iter()
            .map(|c| c.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
            .collect();
        let n = coords.len();
        let mut dist = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                dist[a * n + b] = coords[a]
                    .iter()
                    .zip(&coords[b])
                    .map(|(x, y)| x.abs_diff(*y))
                    .sum::<usize>() as f64;
            }
        }
        Self::assemble(ids, dist, SpaceKind::Grid { dims: dims.to_vec() })
    }

    fn assemble(ids: Vec<String>, dist: Vec<f64>, kind: SpaceKind) -> Result<Self> {
        let n = ids.len();
        if n == 0 {
            return Err(Error::EmptySet("space has no points".into()));
        }
        let mut lookup = HashMap::with_capacity(n);
        for (i, id) in ids.iter().enumerate() {
            if lookup.insert(id.clone(), i).is_some() {
                return Err(Error::MetricAxiom(format!("duplicate point id {id:?}")));
            }
        }
        let space = Self { ids, lookup, dist, realized: Vec::new(), kind };
        space.validate()?;
        let mut realized = space.dist.clone();
        realized.sort_by(f64::total_cmp);
        realized.dedup();
        Ok(Self { realized, ..space })
    }

    fn validate(&self) -> Result<()> {
        let n = self.len();
        for x in 0..n {
            for y in 0..n {
                let d = self.dist(x, y);
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::MetricAxiom(format!(
                        "d({}, {}) = {d} is not a finite nonnegative number",
                        self.ids[x], self.ids[y]
                    )));
                }
                if x == y && d != 0.0 {
                    return Err(Error::MetricAxiom(format!(
                        "d({0}, {0}) = {d} is nonzero",
                        self.ids[x]
                    )));
                }
                if x != y && d == 0.0 {
                    return Err(Error::MetricAxiom(format!(
                        "d({}, {}) = 0 for distinct points",
                        self.ids[x], self.ids[y]
                    )));
                }
                if (d - self.dist(y, x)).abs() > TOL {
                    return Err(Error::MetricAxiom(format!(
                        "asymmetric pair ({}, {}): {d} vs {}",
                        self.ids[x],
                        self.ids[y],
                        self.dist(y, x)
                    )));
                }
            }
        }
        let check = |x: usize, y: usize, z: usize| -> Result<()> {
            let lhs = self.dist(x, z);
            let rhs = self.dist(x, y) + self.dist(y, z);
            if lhs > rhs + TOL * rhs.max(1.0) {
                return Err(Error::MetricAxiom(format!(
                    "triangle ({}, {}, {}): d(x,z) = {lhs} > {rhs}",
                    self.ids[x], self.ids[y], self.ids[z]
                )));
            }
            Ok(())
        };
        if n <= EXHAUSTIVE_TRIANGLE_LIMIT {
            for x in 0..n {
                for y in 0..n {
                    for z in 0..n {
                        check(x, y, z)?;
                    }
                }
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
            for _ in 0..SAMPLED_TRIANGLES {
                check(rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n))?;
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn kind(&self) -> &SpaceKind {
        &self.kind
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, x: usize) -> &str {
        &self.ids[x]
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.lookup
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownPoint(id.to_string()))
    }

    #[inline]
    pub fn dist(&self, x: usize, y: usize) -> f64 {
        self.dist[x * self.len() + y]
    }

    pub fn check_point(&self, x: usize) -> Result<()> {
        if x < self.len() {
            Ok(())
        } else {
            Err(Error::PointIndex(x, self.len()))
        }
    }

    pub fn diameter(&self) -> f64 {
        *self.realized.last().unwrap_or(&0.0)
    }

    /// Sorted distinct distance values, starting with 0.
    pub fn realized_distances(&self) -> &[f64] {
        &self.realized
    }

    /// Smallest distance between distinct points; `+inf` for a one-point space.
    pub fn uniform_discreteness(&self) -> f64 {
        self.realized.get(1).copied().unwrap_or(f64::INFINITY)
    }

    /// `max_x |B(x, r)|`.
    pub fn bounded_geometry(&self, r: f64) -> usize {
        (0..self.len())
            .map(|x| (0..self.len()).filter(|&w| self.dist(x, w) <= r).count())
            .max()
            .unwrap_or(0)
    }

    /// Closed ball `{w : d(center, w) <= radius}` in stored order.
    pub fn ball(&self, center: usize, radius: f64) -> Result<Vec<usize>> {
        self.check_point(center)?;
        Ok(self.ball_unchecked(center, radius))
    }

    pub(crate) fn ball_unchecked(&self, center: usize, radius: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&w| self.dist(center, w) <= radius)
            .collect()
    }

    pub fn dist_to_set(&self, x: usize, set: &[usize]) -> Result<f64> {
        self.nearest_point(x, set).map(|y| self.dist(x, y))
    }

    /// Nearest member of `set`; ties go to the smallest stored index.
    pub fn nearest_point(&self, x: usize, set: &[usize]) -> Result<usize> {
        self.check_point(x)?;
        let mut best: Option<usize> = None;
        for &y in set {
            self.check_point(y)?;
            best = match best {
                None => Some(y),
                Some(b) => {
                    let (db, dy) = (self.dist(x, b), self.dist(x, y));
                    if dy < db || (dy == db && y < b) {
                        Some(y)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        best.ok_or_else(|| Error::EmptySet("nearest_point target set".into()))
    }

    pub fn is_c_net(&self, set: &[usize], c: f64) -> Result<bool> {
        for x in 0..self.len() {
            if self.dist_to_set(x, set)? > c {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Points within distance `l` of `set` (the enlargement `U(l)`), stored order.
    pub fn neighborhood(&self, set: &[usize], l: f64) -> Vec<usize> {
        if set.is_empty() {
            return Vec::new();
        }
        (0..self.len())
            .filter(|&x| set.iter().any(|&u| self.dist(x, u) <= l))
            .collect()
    }

    /// `d(A, B) = min` over pairs; `+inf` when either set is empty.
    pub fn set_distance(&self, a: &[usize], b: &[usize]) -> f64 {
        let mut best = f64::INFINITY;
        for &x in a {
            for &y in b {
                best = best.min(self.dist(x, y));
            }
        }
        best
    }

    pub fn subspace(&self, members: &[usize]) -> Result<(SubspaceRef, FiniteMetricSpace)> {
        let sub = SubspaceRef::new(self, members.to_vec())?;
        let space = sub.materialize(self);
        Ok((sub, space))
    }

    /// Looks up a list of ids, failing on the first unknown one.
    pub fn indices_of<S: AsRef<str>>(&self, ids: &[S]) -> Result<Vec<usize>> {
        ids.iter().map(|id| self.index_of(id.as_ref())).collect()
    }
}

fn bfs(adj: &[Vec<usize>], source: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].unwrap_or(0);
        for &v in &adj[u] {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Row-major enumeration of grid points (last coordinate fastest).
pub(crate) fn grid_coordinates(dims: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &d in dims {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..d).map(move |v| {
                    let mut c = prefix.clone();
                    c.push(v);
                    c
                })
            })
            .collect();
    }
    out
}

/// A subset of a parent space carrying the restricted metric.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubspaceRef {
    members: Vec<usize>,
}

impl SubspaceRef {
    /// Members are sorted into the parent's stored order and deduplicated.
    pub fn new(parent: &FiniteMetricSpace, mut members: Vec<usize>) -> Result<Self> {
        members.sort_unstable();
        members.dedup();
        if members.is_empty() {
            return Err(Error::EmptySet("subspace".into()));
        }
        for &m in &members {
            parent.check_point(m)?;
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Position of a parent index inside the subspace.
    pub fn local_index(&self, parent_index: usize) -> Option<usize> {
        self.members.binary_search(&parent_index).ok()
    }

    pub fn materialize(&self, parent: &FiniteMetricSpace) -> FiniteMetricSpace {
        let n = self.members.len();
        let ids: Vec<String> = self.members.iter().map(|&m| parent.ids[m].clone()).collect();
        let mut dist = vec![0.0; n * n];
        for (a, &x) in self.members.iter().enumerate() {
            for (b, &y) in self.members.iter().enumerate() {
                dist[a * n + b] = parent.dist(x, y);
            }
        }
        let lookup = ids.iter().cloned().enumerate().map(|(i, id)| (id, i)).collect();
        let mut realized = dist.clone();
        realized.sort_by(f64::total_cmp);
        realized.dedup();
        // restriction of a validated metric needs no re-validation
        FiniteMetricSpace { ids, lookup, dist, realized, kind: SpaceKind::Subspace }
    }
}

/// Non-decreasing step function sampled on a radius grid, extended to the
/// right of each sample by the next sample's value.
#[derive(Debug, Clone, PartialEq)]
pub struct Modulus {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// Value used beyond the last sample: the maximum over every pair.
    pub global: f64,
}

impl Modulus {
    pub fn at(&self, r: f64) -> f64 {
        match self.radii.iter().position(|&s| s >= r) {
            Some(i) => self.values[i],
            None => self.global,
        }
    }

    pub fn is_non_decreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[0] <= w[1])
    }
}

/// Certificate that `assignment` is bornologous with the recorded modulus.
#[derive(Debug, Clone)]
pub struct CoarseMapCert {
    pub assignment: Vec<usize>,
    pub modulus: Modulus,
    /// Pair attaining each sampled modulus value (`None` when only `x = y` pairs qualify).
    pub attained_by: Vec<Option<(usize, usize)>>,
    pub properness_note: String,
}

impl CoarseMapCert {
    pub fn image(&self, x: usize) -> usize {
        self.assignment[x]
    }
}

/// Computes the tight modulus `l(r) = max {d(f x, f x') : d(x, x') <= r}` on `radii`.
pub fn check_coarse_map(
    source: &FiniteMetricSpace,
    target: &FiniteMetricSpace,
    assignment: &[usize],
    radii: &[f64],
) -> Result<CoarseMapCert> {
    if assignment.len() != source.len() {
        return Err(Error::Precondition(format!(
            "assignment has {} entries for a source of {} points",
            assignment.len(),
            source.len()
        )));
    }
    for &y in assignment {
        target.check_point(y)?;
    }
    let (modulus, attained_by) = map_modulus(source, target, assignment, radii);
    Ok(CoarseMapCert {
        assignment: assignment.to_vec(),
        modulus,
        attained_by,
        properness_note: "finite source: preimages of bounded sets are finite, hence bounded".into(),
    })
}

pub(crate) fn map_modulus(
    source: &FiniteMetricSpace,
    target: &FiniteMetricSpace,
    assignment: &[usize],
    radii: &[f64],
) -> (Modulus, Vec<Option<(usize, usize)>>) {
    let mut radii = radii.to_vec();
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    let mut values = vec![0.0; radii.len()];
    let mut attained = vec![None; radii.len()];
    let mut global: f64 = 0.0;
    let n = source.len();
    for x in 0..n {
        for y in (x + 1)..n {
            let d = source.dist(x, y);
            let img = target.dist(assignment[x], assignment[y]);
            global = global.max(img);
            let first = radii.partition_point(|&r| r < d);
            for i in first..radii.len() {
                if attained[i].is_none() || img > values[i] {
                    values[i] = img;
                    attained[i] = Some((x, y));
                }
            }
        }
    }
    (Modulus { radii, values, global }, attained)
}
