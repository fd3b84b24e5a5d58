//! Witness constructions: restriction to a subspace, extension from a net,
//! gluing along a partition of unity, and the fibering and separated-cover
//! pipelines built on top of gluing.

use crate::certificate::Check;
use crate::cover::Cover;
use crate::error::{Error, Result};
use crate::partition::{
    bell_constant, bell_partition, partition_variation, pullback_partition, BellPartition,
    PartitionOfUnity, PullbackPartition,
};
use crate::space::{check_coarse_map, CoarseMapCert, FiniteMetricSpace, SubspaceRef, TOL};
use crate::witness::{
    collapse, diff_norm_sq, tail_profile, variation_profile, DecayProfile, IndexEntry,
    VariationSample, Witness, WitnessFamily,
};

/// Supplies the witness for piece `piece`, whose space is `space`.
pub trait WitnessProvider {
    fn witness_for(&self, piece: usize, space: &FiniteMetricSpace) -> Result<Witness>;
}

/// Dirac witnesses on every piece.
#[derive(Debug, Clone, Copy, Default)]
pub struct DiracProvider;

impl WitnessProvider for DiracProvider {
    fn witness_for(&self, _piece: usize, space: &FiniteMetricSpace) -> Result<Witness> {
        Ok(Witness::dirac(space.len()))
    }
}

/// Uniform unit vectors on balls of a fixed radius.
#[derive(Debug, Clone, Copy)]
pub struct UniformBallProvider(pub f64);

impl WitnessProvider for UniformBallProvider {
    fn witness_for(&self, _piece: usize, space: &FiniteMetricSpace) -> Result<Witness> {
        Ok(Witness::uniform_ball(space, self.0))
    }
}

/// Precomputed witnesses, one per piece.
#[derive(Debug, Clone)]
pub struct ExplicitProvider(pub Vec<Witness>);

impl WitnessProvider for ExplicitProvider {
    fn witness_for(&self, piece: usize, space: &FiniteMetricSpace) -> Result<Witness> {
        let w = self
            .0
            .get(piece)
            .ok_or_else(|| Error::InvalidWitness(format!("no witness supplied for piece {piece}")))?;
        if w.len() != space.len() {
            return Err(Error::InvalidWitness(format!(
                "witness for piece {piece} has {} points, piece has {}",
                w.len(),
                space.len()
            )));
        }
        Ok(w.clone())
    }
}

fn require_bare(w: &Witness, what: &str) -> Result<()> {
    if w.vectors().iter().flatten().any(|(e, _)| e.tag.is_some()) {
        return Err(Error::InvalidWitness(format!("{what} must have a bare index")));
    }
    Ok(())
}

/// Largest `f(a, b)` over unordered pairs, with the pair.
fn worst_pair(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> (f64, Option<(usize, usize)>) {
    let mut best = (f64::NEG_INFINITY, None);
    for a in 0..n {
        for b in (a + 1)..n {
            let v = f(a, b);
            if v > best.0 {
                best = (v, Some((a, b)));
            }
        }
    }
    if best.1.is_none() {
        best.0 = 0.0;
    }
    best
}

// ---------------------------------------------------------------------------
// subspaces

/// Restriction of a witness on `X` to a subspace `Y` through the nearest-point
/// retraction `p : X -> Y`.
#[derive(Debug, Clone)]
pub struct SubspaceWitness {
    pub subspace: SubspaceRef,
    pub space: FiniteMetricSpace,
    /// `retraction[x]` is the local index in `Y` of `p(x)`.
    pub retraction: Vec<usize>,
    /// `ξ_y(t, s) = β_y(s)` if `t = p(s)`: entries tagged by `s`, projected to `t`.
    pub intermediate: Witness,
    /// `η_y(t) = ‖ξ_y(t, ·)‖`.
    pub collapsed: Witness,
}

pub fn subspace_witness(space: &FiniteMetricSpace, beta: &Witness, members: &[usize]) -> Result<SubspaceWitness> {
    if beta.len() != space.len() {
        return Err(Error::InvalidWitness("witness does not live on the ambient space".into()));
    }
    require_bare(beta, "ambient witness")?;
    let subspace = SubspaceRef::new(space, members.to_vec())?;
    let sub_space = subspace.materialize(space);
    let retraction = (0..space.len())
        .map(|x| {
            let p = space.nearest_point(x, subspace.members())?;
            Ok(subspace.local_index(p).expect("nearest point is a member"))
        })
        .collect::<Result<Vec<_>>>()?;
    let intermediate = subspace
        .members()
        .iter()
        .map(|&y| {
            beta.vector(y)
                .iter()
                .map(|&(e, c)| (IndexEntry::tagged(e.at, retraction[e.at]), c))
                .collect()
        })
        .collect();
    let intermediate = Witness::new(sub_space.len(), intermediate)?;
    let collapsed = collapse(&intermediate)?;
    Ok(SubspaceWitness { subspace, space: sub_space, retraction, intermediate, collapsed })
}

impl SubspaceWitness {
    /// Unit norms, `‖ξ_y − ξ_y'‖ = ‖β_y − β_y'‖` (to `1e-9`) and
    /// `‖η_y − η_y'‖ <= ‖ξ_y − ξ_y'‖` (to `1e-12`) over all pairs of `Y`.
    pub fn identity_checks(&self, beta: &Witness) -> Vec<Check> {
        let m = self.subspace.members();
        let n = m.len();
        let norm_gap = (0..n)
            .map(|y| (self.intermediate.norm(y) - 1.0).abs().max((self.collapsed.norm(y) - 1.0).abs()))
            .fold(0.0, f64::max);
        let (iso_gap, iso_pair) = worst_pair(n, |a, b| {
            (self.intermediate.distance(a, b) - beta.distance(m[a], m[b])).abs()
        });
        let (excess, excess_pair) = worst_pair(n, |a, b| {
            self.collapsed.distance(a, b) - self.intermediate.distance(a, b)
        });
        vec![
            Check::le_tol("subspace: unit norm of ξ and η", norm_gap, 0.0, TOL),
            Check::le_tol("subspace: ‖ξ_y − ξ_y'‖ = ‖β_y − β_y'‖", iso_gap, 0.0, TOL)
                .with_pair(&self.space, iso_pair),
            Check::le("subspace: ‖η_y − η_y'‖ ≤ ‖ξ_y − ξ_y'‖", excess.max(0.0), 0.0)
                .with_pair(&self.space, excess_pair),
        ]
    }

    /// Empirical tail control `tail_η(S) <= tail_β(⌊S/3⌋) + tail_β(S)`, and
    /// equality of the tails of `η` and `ξ` (collapse keeps projected mass).
    pub fn tail_checks(&self, parent: &FiniteMetricSpace, beta: &Witness, s_list: &[f64]) -> Vec<Check> {
        let eta = tail_profile(&self.space, &self.collapsed, s_list);
        let xi = tail_profile(&self.space, &self.intermediate, s_list);
        let mut out = Vec::new();
        for (k, &s) in s_list.iter().enumerate() {
            let third = (s / 3.0).floor();
            let b = tail_profile(parent, beta, &[third, s]);
            out.push(Check::le(
                format!("subspace tail at S={s}: tail_η(S) ≤ tail_β(⌊S/3⌋) + tail_β(S)"),
                eta.samples[k].value,
                b.samples[0].value + b.samples[1].value,
            ));
            out.push(Check::eq_tol(
                format!("collapse keeps tail at S={s}"),
                eta.samples[k].value,
                xi.samples[k].value,
                CHECK_EXACT,
            ));
        }
        out
    }
}

const CHECK_EXACT: f64 = 1e-12;

/// Applies [`subspace_witness`] member by member.
pub fn subspace_witness_family(family: &WitnessFamily, subspaces: &[Vec<usize>]) -> Result<Vec<SubspaceWitness>> {
    if family.members.len() != subspaces.len() {
        return Err(Error::Precondition("one subspace per family member expected".into()));
    }
    family
        .members
        .iter()
        .zip(subspaces)
        .map(|(m, y)| subspace_witness(&m.space, &m.witness, y))
        .collect()
}

// ---------------------------------------------------------------------------
// nets

/// Extension of a witness on a `c`-net `Y ⊆ X` to all of `X`: `ξ_x = β_{q(x)}`.
#[derive(Debug, Clone)]
pub struct NetWitness {
    pub net: SubspaceRef,
    pub net_space: FiniteMetricSpace,
    /// `nearest[x]` is the local index in `Y` of `q(x)`.
    pub nearest: Vec<usize>,
    pub witness: Witness,
}

pub fn net_witness(space: &FiniteMetricSpace, members: &[usize], beta: &Witness, c: f64) -> Result<NetWitness> {
    let net = SubspaceRef::new(space, members.to_vec())?;
    if !space.is_c_net(net.members(), c)? {
        return Err(Error::Precondition(format!("the given subset is not a {c}-net")));
    }
    if beta.len() != net.len() {
        return Err(Error::InvalidWitness(format!(
            "net witness has {} points, net has {}",
            beta.len(),
            net.len()
        )));
    }
    let net_space = net.materialize(space);
    let nearest = (0..space.len())
        .map(|x| {
            let q = space.nearest_point(x, net.members())?;
            Ok(net.local_index(q).expect("nearest point is a member"))
        })
        .collect::<Result<Vec<_>>>()?;
    let vectors = nearest
        .iter()
        .map(|&q| {
            let mut v: Vec<_> = beta
                .vector(q)
                .iter()
                .map(|&(e, coef)| (IndexEntry { tag: e.tag, at: net.members()[e.at] }, coef))
                .collect();
            v.sort_by_key(|&(e, _)| e);
            v
        })
        .collect();
    let witness = Witness::new(space.len(), vectors)?;
    Ok(NetWitness { net, net_space, nearest, witness })
}

impl NetWitness {
    /// `variation_ξ(R) <= variation_β(R + 2c)` and `tail_ξ(S) <= tail_β(S − c)` for `S > c`.
    pub fn checks(&self, space: &FiniteMetricSpace, beta: &Witness, c: f64, radii: &[f64], s_list: &[f64]) -> Vec<Check> {
        let mut out = Vec::new();
        let xi_var = variation_profile(space, &self.witness, radii);
        let widened: Vec<f64> = radii.iter().map(|r| r + 2.0 * c).collect();
        let beta_var = variation_profile(&self.net_space, beta, &widened);
        for (a, b) in xi_var.iter().zip(&beta_var) {
            out.push(
                Check::le(format!("net variation at R={}: ≤ variation_β(R+2c)", a.r), a.value, b.value)
                    .with_pair(space, a.pair),
            );
        }
        let xi_tail = tail_profile(space, &self.witness, s_list);
        for t in xi_tail.samples.iter().filter(|t| t.s > c) {
            let b = tail_profile(&self.net_space, beta, &[t.s - c]);
            out.push(
                Check::le(format!("net tail at S={}: ≤ tail_β(S−c)", t.s), t.value, b.samples[0].value)
                    .with_point(space, t.point),
            );
        }
        out
    }
}

// ---------------------------------------------------------------------------
// gluing

/// Partition of unity plus one witness per piece, each on the piece's own
/// restricted metric (local order = ascending point index).
#[derive(Debug, Clone)]
pub struct GlueInput {
    pub partition: PartitionOfUnity,
    pub pieces: Vec<Witness>,
}

impl GlueInput {
    pub fn new(partition: PartitionOfUnity, pieces: Vec<Witness>) -> Result<Self> {
        let cover = partition.cover();
        if pieces.len() != cover.len() {
            return Err(Error::InvalidWitness(format!(
                "{} piece witnesses for {} pieces",
                pieces.len(),
                cover.len()
            )));
        }
        for (i, w) in pieces.iter().enumerate() {
            if w.len() != cover.piece(i).len() {
                return Err(Error::InvalidWitness(format!(
                    "piece {i} witness has {} points, piece has {}",
                    w.len(),
                    cover.piece(i).len()
                )));
            }
            require_bare(w, "piece witness")?;
        }
        Ok(Self { partition, pieces })
    }

    pub fn cover(&self) -> &Cover {
        self.partition.cover()
    }
}

#[derive(Debug, Clone)]
pub struct GlueOutput {
    /// Tagged witness on `X`: entry `(i, u)` carries `sqrt(φ_i(x)) β^i_x(u)`.
    pub witness: Witness,
    pub piece_spaces: Vec<FiniteMetricSpace>,
    pub variation: Vec<VariationSample>,
    pub tail: DecayProfile,
    pub checks: Vec<Check>,
    /// The partition and piece witnesses that were glued.
    pub input: GlueInput,
}

/// `ξ_x(i, u) = sqrt(φ_i(x)) · β^i_x(u)`.
pub fn glue_witness(input: &GlueInput) -> Result<Witness> {
    let cover = input.cover();
    let n = cover.n_points();
    let vectors = (0..n)
        .map(|x| {
            let mut v = Vec::new();
            for &(i, phi) in input.partition.at(x) {
                let piece = cover.piece(i);
                let local = piece.binary_search(&x).expect("partition is subordinated");
                let scale = phi.sqrt();
                for &(e, c) in input.pieces[i].vector(local) {
                    v.push((IndexEntry::tagged(i, piece[e.at]), scale * c));
                }
            }
            v.sort_by_key(|&(e, _)| e);
            v
        })
        .collect();
    Witness::new(n, vectors)
}

pub fn glue(space: &FiniteMetricSpace, input: &GlueInput, radii: &[f64], s_list: &[f64]) -> Result<GlueOutput> {
    if input.cover().n_points() != space.len() {
        return Err(Error::InvalidCover("cover does not live on this space".into()));
    }
    let witness = glue_witness(input)?;
    let piece_spaces: Vec<_> = input
        .cover()
        .pieces()
        .iter()
        .map(|p| SubspaceRef::new(space, p.clone()).map(|s| s.materialize(space)))
        .collect::<Result<_>>()?;
    let variation = variation_profile(space, &witness, radii);
    let tail = tail_profile(space, &witness, s_list);
    let checks = glue_checks(space, input, &piece_spaces, &witness, radii, s_list);
    Ok(GlueOutput { witness, piece_spaces, variation, tail, checks, input: input.clone() })
}

/// The gluing inequalities:
/// `‖ξ_x − ξ_y‖² <= 2 Σ|Δφ| + 2 max_i ‖β^i_x − β^i_y‖²` on every pair, its
/// profile form at each radius, and `tail_ξ(S) <= sup_i tail_{β^i}(S)`.
pub fn glue_checks(
    space: &FiniteMetricSpace,
    input: &GlueInput,
    piece_spaces: &[FiniteMetricSpace],
    glued: &Witness,
    radii: &[f64],
    s_list: &[f64],
) -> Vec<Check> {
    let cover = input.cover();
    let memberships = cover.memberships();
    let n = space.len();
    let norm_gap = (0..n).map(|x| (glued.norm(x) - 1.0).abs()).fold(0.0, f64::max);
    let mut out = vec![Check::le_tol("glue: unit norm", norm_gap, 0.0, TOL)];

    let bound = |x: usize, y: usize| -> (f64, f64) {
        let lhs = diff_norm_sq(glued.vector(x), glued.vector(y));
        let mut piece_max: f64 = 0.0;
        for &i in &memberships[x] {
            let piece = cover.piece(i);
            if let (Ok(a), Ok(b)) = (piece.binary_search(&x), piece.binary_search(&y)) {
                piece_max = piece_max.max(diff_norm_sq(
                    input.pieces[i].vector(a),
                    input.pieces[i].vector(b),
                ));
            }
        }
        (lhs, 2.0 * input.partition.l1_difference(x, y) + 2.0 * piece_max)
    };
    let (_, pair) = worst_pair(n, |x, y| {
        let (l, r) = bound(x, y);
        l - r
    });
    let (lhs, rhs) = pair.map_or((0.0, 0.0), |(x, y)| bound(x, y));
    out.push(
        Check::le("glue: ‖ξ_x−ξ_y‖² ≤ 2Σ|Δφ| + 2·max_i ‖β^i_x−β^i_y‖² (all pairs)", lhs, rhs)
            .with_pair(space, pair),
    );

    let glued_var = variation_profile(space, glued, radii);
    let piece_var: Vec<Vec<VariationSample>> = piece_spaces
        .iter()
        .zip(&input.pieces)
        .map(|(s, w)| variation_profile(s, w, radii))
        .collect();
    for (k, g) in glued_var.iter().enumerate() {
        let equi = piece_var.iter().map(|v| v[k].value).fold(0.0, f64::max);
        let phi = partition_variation(space, &input.partition, g.r).value;
        out.push(
            Check::le(
                format!("glue variation at R={}: var² ≤ 2·Σ|Δφ|(R) + 2·equi_var(R)²", g.r),
                g.value * g.value,
                2.0 * phi + 2.0 * equi * equi,
            )
            .with_pair(space, g.pair),
        );
    }

    let glued_tail = tail_profile(space, glued, s_list);
    let piece_tail: Vec<DecayProfile> = piece_spaces
        .iter()
        .zip(&input.pieces)
        .map(|(s, w)| tail_profile(s, w, s_list))
        .collect();
    for (k, t) in glued_tail.samples.iter().enumerate() {
        let equi = piece_tail.iter().map(|p| p.samples[k].value).fold(0.0, f64::max);
        out.push(
            Check::le(format!("glue tail at S={}: ≤ equi-tail", t.s), t.value, equi)
                .with_point(space, t.point),
        );
    }
    out
}

/// Builds piece witnesses from a provider and glues them.
pub fn glue_with_provider(
    space: &FiniteMetricSpace,
    partition: PartitionOfUnity,
    provider: &dyn WitnessProvider,
    radii: &[f64],
    s_list: &[f64],
) -> Result<GlueOutput> {
    let pieces = partition
        .cover()
        .pieces()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let sub = SubspaceRef::new(space, p.clone())?.materialize(space);
            provider.witness_for(i, &sub)
        })
        .collect::<Result<Vec<_>>>()?;
    glue(space, &GlueInput::new(partition, pieces)?, radii, s_list)
}

// ---------------------------------------------------------------------------
// fibering

#[derive(Debug, Clone)]
pub struct FiberingOutput {
    pub cert: CoarseMapCert,
    /// `S = ℓ(R)`.
    pub expansion: f64,
    pub pullback: PullbackPartition,
    pub glue: GlueOutput,
    pub checks: Vec<Check>,
}

/// Pulls a partition on `Y` back along `f : X -> Y` and glues witnesses on the
/// preimage pieces (`provider` is indexed by pullback piece).
#[allow(clippy::too_many_arguments)]
pub fn fibering_pipeline(
    x_space: &FiniteMetricSpace,
    y_space: &FiniteMetricSpace,
    assignment: &[usize],
    partition: &PartitionOfUnity,
    provider: &dyn WitnessProvider,
    r: f64,
    radii: &[f64],
    s_list: &[f64],
) -> Result<FiberingOutput> {
    if partition.n_points() != y_space.len() {
        return Err(Error::InvalidPartition("partition does not live on the target".into()));
    }
    let mut grid = x_space.realized_distances().to_vec();
    grid.push(r);
    let cert = check_coarse_map(x_space, y_space, assignment, &grid)?;
    let expansion = cert.modulus.at(r);
    let pullback = pullback_partition(&cert, partition)?;
    let target_var = partition_variation(y_space, partition, expansion);
    let source_var = partition_variation(x_space, &pullback.partition, r);
    let mut checks = vec![
        Check::le(
            format!("fibering: Σ|Δφ∘f| at R={r} ≤ Σ|Δφ| at S=ℓ(R)={expansion}"),
            source_var.value,
            target_var.value,
        )
        .with_pair(x_space, source_var.pair),
    ];
    let (worst, pair) = worst_pair(x_space.len(), |a, b| {
        if x_space.dist(a, b) <= r {
            y_space.dist(assignment[a], assignment[b])
        } else {
            0.0
        }
    });
    checks.push(
        Check::le(format!("fibering: d(fx, fy) ≤ S whenever d(x,y) ≤ {r}"), worst, expansion)
            .with_pair(x_space, pair),
    );
    let glue = glue_with_provider(x_space, pullback.partition.clone(), provider, radii, s_list)?;
    Ok(FiberingOutput { cert, expansion, pullback, glue, checks })
}

// ---------------------------------------------------------------------------
// separated covers

#[derive(Debug, Clone, Copy)]
pub struct SeparatedParams {
    pub k: usize,
    pub l: f64,
    pub sigma: f64,
    pub r: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct SeparatedOutput {
    pub enlarged: Cover,
    pub bell: BellPartition,
    pub glue: GlueOutput,
    pub checks: Vec<Check>,
    /// Intermediate constraints of the textbook argument, recorded only.
    pub informational: Vec<Check>,
}

/// `(k, 2L)`-separated cover → `L`-enlargement → Lipschitz partition → glue.
///
/// `provider` supplies witnesses on the enlarged pieces.
pub fn separated_cover_pipeline(
    space: &FiniteMetricSpace,
    cover: &Cover,
    params: SeparatedParams,
    provider: &dyn WitnessProvider,
    radii: &[f64],
    s_list: &[f64],
) -> Result<SeparatedOutput> {
    let SeparatedParams { k, l, sigma, r, epsilon } = params;
    if !(l > 0.0 && sigma > 0.0 && r > 0.0 && epsilon > 0.0) {
        return Err(Error::Precondition("L, σ, R and ε must be positive".into()));
    }
    if !cover.check_kl_separated(space, k, 2.0 * l)? {
        return Err(Error::Precondition(format!("cover is not ({k}, {})-separated", 2.0 * l)));
    }
    let kk = (k * k + 1) as f64;
    if kk > l * sigma {
        return Err(Error::Precondition(format!(
            "hypothesis k²+1 ≤ Lσ fails: {kk} > {}",
            l * sigma
        )));
    }
    let mut checks = vec![
        Check::le("hypothesis: k²+1 ≤ Lσ", kk, l * sigma),
        Check::le(
            format!("cover fact: L-multiplicity ≤ k+1 at L={l}"),
            cover.r_multiplicity(space, l) as f64,
            (k + 1) as f64,
        ),
    ];
    let enlarged = cover.enlarge(space, l);
    let leb = enlarged.lebesgue_number(space).value;
    checks.push(Check::le("enlarged multiplicity ≤ k+1", enlarged.multiplicity() as f64, (k + 1) as f64));
    checks.push(Check::le("enlarged Lebesgue number ≥ L", l, leb));
    let bell = bell_partition(space, &enlarged)?;
    checks.push(
        Check::le("Lipschitz bound (2m+2)(2m+3)/L_U, m = multiplicity", bell.observed.value, bell.lipschitz_bound)
            .with_pair(space, bell.observed.pair),
    );
    let var = partition_variation(space, &bell.partition, r);
    checks.push(Check::le(format!("partition variation at R={r} ≤ ε"), var.value, epsilon).with_pair(space, var.pair));
    checks.push(
        Check::le(
            format!("partition variation at R={r} ≤ (2k+2)(2k+3)R/L"),
            var.value,
            bell_constant(k, l) * r,
        )
        .with_pair(space, var.pair),
    );
    let informational = vec![
        Check::le("intermediate: σ < 1/(20R)", sigma, 1.0 / (20.0 * r)),
        Check::le(
            "intermediate: 2(2k+2)(2k+3)Rσ ≤ k²+1",
            2.0 * bell_constant(k, 1.0) * r * sigma,
            kk,
        ),
        Check::le("intermediate: k²+1 ≤ 2Lσε", kk, 2.0 * l * sigma * epsilon),
    ];
    let glue = glue_with_provider(space, bell.partition.clone(), provider, radii, s_list)?;
    Ok(SeparatedOutput { enlarged, bell, glue, checks, informational })
}
