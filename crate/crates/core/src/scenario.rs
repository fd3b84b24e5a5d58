//! Scenario documents: JSON input formats, pipeline dispatch, certificate
//! assembly, profile export and the suite runner.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

use crate::certificate::{Certificate, Check, Profiles};
use crate::construct::{
    fibering_pipeline, glue, net_witness, separated_cover_pipeline, subspace_witness, GlueInput,
    SeparatedParams, WitnessProvider,
};
use crate::cover::{asdim_cover_search, direct_limit_cover, direct_limit_disjointness, ChainOfSubspaces, Cover};
use crate::error::{Error, Result};
use crate::group::{
    admissible_epsilon, certify_quasi_action, group_pipeline, perturb_maps, seeded_perturbation, translation_maps,
    ActionMaps, Ceilings, GroupModel, GroupPipelineParams,
};
use crate::partition::{bell_partition, partition_variation, PartitionOfUnity};
use crate::space::FiniteMetricSpace;
use crate::witness::{tail_profile, variation_profile, IndexEntry, Witness};

/// A point named by its id; JSON integers are accepted and read as decimal ids.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum PointId {
    Text(String),
    Int(i64),
}

impl fmt::Display for PointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointId::Text(s) => f.write_str(s),
            PointId::Int(i) => write!(f, "{i}"),
        }
    }
}

fn point(space: &FiniteMetricSpace, id: &PointId) -> Result<usize> {
    space.index_of(&id.to_string())
}

fn points(space: &FiniteMetricSpace, ids: &[PointId]) -> Result<Vec<usize>> {
    ids.iter().map(|id| point(space, id)).collect()
}

// ---------------------------------------------------------------------------
// input formats

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceSpec {
    Matrix { ids: Vec<PointId>, distances: Vec<Vec<f64>> },
    Graph { ids: Vec<PointId>, edges: Vec<(PointId, PointId)> },
    ZInterval { lo: i64, hi: i64 },
    Cycle { n: usize },
    Grid { dims: Vec<usize> },
    /// `{v ∈ Z^dim : |v|_1 <= radius}` with the l¹ metric; ids are signed coordinates.
    L1Ball { dim: usize, radius: i64 },
}

impl SpaceSpec {
    pub fn build(&self) -> Result<FiniteMetricSpace> {
        match self {
            SpaceSpec::Matrix { ids, distances } => {
                FiniteMetricSpace::from_matrix(ids.iter().map(|i| i.to_string()).collect(), distances)
            }
            SpaceSpec::Graph { ids, edges } => {
                let names: Vec<String> = ids.iter().map(|i| i.to_string()).collect();
                let lookup: BTreeMap<&str, usize> = names.iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect();
                let find = |p: &PointId| {
                    let s = p.to_string();
                    lookup.get(s.as_str()).copied().ok_or(Error::UnknownPoint(s))
                };
                let edges = edges.iter().map(|(a, b)| Ok((find(a)?, find(b)?))).collect::<Result<Vec<_>>>()?;
                FiniteMetricSpace::from_graph(names, &edges)
            }
            SpaceSpec::ZInterval { lo, hi } => FiniteMetricSpace::z_interval(*lo, *hi),
            SpaceSpec::Cycle { n } => FiniteMetricSpace::cycle(*n),
            SpaceSpec::Grid { dims } => FiniteMetricSpace::grid(dims),
            SpaceSpec::L1Ball { dim, radius } => l1_ball(*dim, *radius),
        }
    }
}

fn l1_ball(dim: usize, radius: i64) -> Result<FiniteMetricSpace> {
    if dim == 0 || radius < 0 {
        return Err(Error::Precondition("l1 ball needs dim >= 1 and radius >= 0".into()));
    }
    let mut pts: Vec<Vec<i64>> = vec![Vec::new()];
    for _ in 0..dim {
        pts = pts
            .into_iter()
            .flat_map(|p| (-radius..=radius).map(move |v| [p.clone(), vec![v]].concat()))
            .collect();
    }
    pts.retain(|p| p.iter().map(|v| v.abs()).sum::<i64>() <= radius);
    let ids = pts
        .iter()
        .map(|p| p.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
        .collect();
    let table: Vec<Vec<f64>> = pts
        .iter()
        .map(|a| pts.iter().map(|b| a.iter().zip(b).map(|(u, v)| (u - v).abs()).sum::<i64>() as f64).collect())
        .collect();
    FiniteMetricSpace::from_matrix(ids, &table)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoverSpec {
    Pieces {
        pieces: Vec<Vec<PointId>>,
        #[serde(default)]
        coloring: Option<Vec<usize>>,
    },
    Whole,
    Singletons,
    /// Consecutive runs of `size` points in stored order, colored `i mod colors`.
    Blocks {
        size: usize,
        #[serde(default)]
        colors: Option<usize>,
    },
    /// Runs of `length` consecutive points (cyclically) starting at each index.
    Arcs { length: usize, starts: Vec<usize> },
    Asdim {
        #[serde(rename = "L")]
        l: f64,
        k_max: usize,
    },
}

impl CoverSpec {
    pub fn build(&self, space: &FiniteMetricSpace) -> Result<Cover> {
        let n = space.len();
        match self {
            CoverSpec::Pieces { pieces, coloring } => {
                let pieces = pieces.iter().map(|p| points(space, p)).collect::<Result<Vec<_>>>()?;
                Cover::new(space, pieces, coloring.clone())
            }
            CoverSpec::Whole => Ok(Cover::whole(space)),
            CoverSpec::Singletons => Ok(Cover::singletons(space)),
            CoverSpec::Blocks { size, colors } => {
                if *size == 0 {
                    return Err(Error::InvalidCover("block size 0".into()));
                }
                let pieces: Vec<Vec<usize>> = (0..n).step_by(*size).map(|s| (s..(s + size).min(n)).collect()).collect();
                let coloring = colors.map(|c| (0..pieces.len()).map(|i| i % c.max(1)).collect());
                Cover::new(space, pieces, coloring)
            }
            CoverSpec::Arcs { length, starts } => {
                let pieces = starts
                    .iter()
                    .map(|&s| (s..s + length).map(|v| v % n.max(1)).collect())
                    .collect();
                Cover::new(space, pieces, None)
            }
            CoverSpec::Asdim { l, k_max } => Ok(asdim_cover_search(space, *l, *k_max)?.cover),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionEntry {
    pub point: PointId,
    pub piece: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionSpec {
    Bell,
    /// One row per piece, one value per point in stored order.
    Dense { values: Vec<Vec<f64>> },
    Sparse { entries: Vec<PartitionEntry> },
}

impl PartitionSpec {
    pub fn build(&self, space: &FiniteMetricSpace, cover: &Cover) -> Result<PartitionOfUnity> {
        match self {
            PartitionSpec::Bell => Ok(bell_partition(space, cover)?.partition),
            PartitionSpec::Dense { values } => PartitionOfUnity::from_dense(cover.clone(), values),
            PartitionSpec::Sparse { entries } => {
                let mut rows = vec![Vec::new(); space.len()];
                for e in entries {
                    rows[point(space, &e.point)?].push((e.piece, e.value));
                }
                for r in &mut rows {
                    r.sort_by_key(|&(i, _)| i);
                }
                PartitionOfUnity::new(cover.clone(), rows)
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntrySpec {
    pub at: PointId,
    #[serde(default)]
    pub tag: Option<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum WitnessSpec {
    Dirac,
    UniformBall { radius: f64 },
    /// Sparse vectors keyed by point id.
    Explicit { vectors: BTreeMap<String, Vec<EntrySpec>> },
}

impl WitnessSpec {
    pub fn build(&self, space: &FiniteMetricSpace) -> Result<Witness> {
        self.build_piece(space, None)
    }

    fn build_piece(&self, space: &FiniteMetricSpace, piece: Option<usize>) -> Result<Witness> {
        match self {
            WitnessSpec::Dirac => Ok(Witness::dirac(space.len())),
            WitnessSpec::UniformBall { radius } => Ok(Witness::uniform_ball(space, *radius)),
            WitnessSpec::Explicit { vectors } => {
                let mut rows = Vec::with_capacity(space.len());
                for id in space.ids() {
                    let entries = vectors.get(id).ok_or_else(|| match piece {
                        Some(piece) => Error::MissingPiecePoint { piece, point: id.clone() },
                        None => Error::InvalidWitness(format!("no vector for point {id:?}")),
                    })?;
                    let mut row = entries
                        .iter()
                        .map(|e| Ok((IndexEntry { tag: e.tag, at: point(space, &e.at)? }, e.value)))
                        .collect::<Result<Vec<_>>>()?;
                    row.sort_by_key(|&(e, _)| e);
                    rows.push(row);
                }
                if let Some(extra) = vectors.keys().find(|k| space.index_of(k).is_err()) {
                    return Err(Error::InvalidWitness(format!(
                        "vector given for {extra:?}, which is not a point of {}",
                        piece.map_or("the space".to_string(), |p| format!("piece {p}"))
                    )));
                }
                Witness::new(space.len(), rows)
            }
        }
    }
}

/// One spec shared by every piece, or one spec per piece.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PieceWitnesses {
    Each(Vec<WitnessSpec>),
    Shared(WitnessSpec),
}

struct SpecProvider<'a>(&'a PieceWitnesses);

impl WitnessProvider for SpecProvider<'_> {
    fn witness_for(&self, piece: usize, space: &FiniteMetricSpace) -> Result<Witness> {
        let spec = match self.0 {
            PieceWitnesses::Shared(s) => s,
            PieceWitnesses::Each(v) => v
                .get(piece)
                .ok_or_else(|| Error::InvalidWitness(format!("no witness given for piece {piece}")))?,
        };
        spec.build_piece(space, Some(piece))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GroupSpec {
    Cyclic { n: usize },
    Product { factors: Vec<GroupSpec> },
    Ball {
        generators: Vec<String>,
        radius: usize,
        #[serde(default)]
        abelian: bool,
    },
}

impl GroupSpec {
    pub fn build(&self) -> Result<GroupModel> {
        match self {
            GroupSpec::Cyclic { n } => GroupModel::cyclic(*n),
            GroupSpec::Product { factors } => {
                GroupModel::product(&factors.iter().map(|f| f.build()).collect::<Result<Vec<_>>>()?)
            }
            GroupSpec::Ball { generators, radius, abelian } => {
                let letters = generators
                    .iter()
                    .map(|g| {
                        let mut c = g.chars();
                        match (c.next(), c.next()) {
                            (Some(l), None) => Ok(l),
                            _ => Err(Error::InvalidGroup(format!("generator {g:?} is not a single letter"))),
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                GroupModel::ball(&letters, *radius, *abelian)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionRule {
    Translate,
    Identity,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ActionSpec {
    IsometricHom { rule: ActionRule },
    /// `maps[g]` lists the images of the points in stored order.
    Table { maps: Vec<Vec<PointId>> },
    Perturbed {
        base: Box<ActionSpec>,
        #[serde(default)]
        perturbation_table: Option<Vec<Vec<i64>>>,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        amplitude: Option<i64>,
    },
}

impl ActionSpec {
    pub fn build(&self, group: &GroupModel, space: &FiniteMetricSpace) -> Result<ActionMaps> {
        match self {
            ActionSpec::IsometricHom { rule: ActionRule::Translate } => translation_maps(group, space),
            ActionSpec::IsometricHom { rule: ActionRule::Identity } => Ok(vec![(0..space.len()).collect(); group.len()]),
            ActionSpec::Table { maps } => maps.iter().map(|row| points(space, row)).collect(),
            ActionSpec::Perturbed { base, perturbation_table, seed, amplitude } => {
                let maps = base.build(group, space)?;
                let table = match (perturbation_table, seed) {
                    (Some(t), None) => t.clone(),
                    (None, Some(seed)) => seeded_perturbation(group.len(), space.len(), amplitude.unwrap_or(1), *seed),
                    _ => {
                        return Err(Error::Parse(
                            "perturbed action needs exactly one of perturbation_table or seed".into(),
                        ))
                    }
                };
                perturb_maps(space, &maps, &table)
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    /// Image id for every source id.
    Table { images: BTreeMap<String, PointId> },
    /// Source ids are comma-separated coordinates; the image is coordinate `index`.
    Coordinate { index: usize },
}

impl MapSpec {
    pub fn build(&self, source: &FiniteMetricSpace, target: &FiniteMetricSpace) -> Result<Vec<usize>> {
        source
            .ids()
            .iter()
            .map(|id| match self {
                MapSpec::Table { images } => {
                    let img = images
                        .get(id)
                        .ok_or_else(|| Error::Precondition(format!("map has no image for {id:?}")))?;
                    point(target, img)
                }
                MapSpec::Coordinate { index } => {
                    let c = id.split(',').nth(*index).ok_or_else(|| {
                        Error::Precondition(format!("source id {id:?} has no coordinate {index}"))
                    })?;
                    target.index_of(c)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChainSpec {
    /// Levels given as point-id lists.
    Levels { levels: Vec<Vec<PointId>> },
    /// `X_m = [-m, m]` for `m = 0..=n` inside a Z-interval containing `[-n, n]`.
    Intervals { n: i64 },
}

impl ChainSpec {
    pub fn build(&self, space: &FiniteMetricSpace) -> Result<ChainOfSubspaces> {
        let levels = match self {
            ChainSpec::Levels { levels } => levels.iter().map(|l| points(space, l)).collect::<Result<Vec<_>>>()?,
            ChainSpec::Intervals { n } => (0..=*n)
                .map(|m| (-m..=m).map(|v| space.index_of(&v.to_string())).collect())
                .collect::<Result<Vec<_>>>()?,
        };
        ChainOfSubspaces::new(space, levels)
    }
}

// ---------------------------------------------------------------------------
// scenario document

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    VerifyCover,
    Bell,
    Glue,
    Subspace,
    Net,
    DirectLimit,
    Fibering,
    Separated,
    GroupPipeline,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::VerifyCover => "verify-cover",
            Pipeline::Bell => "bell",
            Pipeline::Glue => "glue",
            Pipeline::Subspace => "subspace",
            Pipeline::Net => "net",
            Pipeline::DirectLimit => "direct-limit",
            Pipeline::Fibering => "fibering",
            Pipeline::Separated => "separated",
            Pipeline::GroupPipeline => "group-pipeline",
        }
    }
}

/// Each input is either an inline object or a path relative to the scenario file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub space: Option<Value>,
    pub target_space: Option<Value>,
    pub cover: Option<Value>,
    pub partition: Option<Value>,
    pub witness: Option<Value>,
    pub pieces: Option<Value>,
    pub subspace: Option<Value>,
    pub net: Option<Value>,
    pub chain: Option<Value>,
    pub map: Option<Value>,
    pub group: Option<Value>,
    pub action: Option<Value>,
    pub stabilizer_witness: Option<Value>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum EpsilonSpec {
    Value(f64),
    /// `"admissible"`: the smallest ε allowed by the cover's Lebesgue number.
    Named(String),
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CeilingSpec {
    #[serde(rename = "A", default)]
    pub a: Option<f64>,
    #[serde(rename = "B", default)]
    pub b: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    #[serde(rename = "R", default)]
    pub r: Option<f64>,
    #[serde(default)]
    pub epsilon: Option<EpsilonSpec>,
    /// Tail sample radii; defaults to the realized distances.
    #[serde(rename = "S", default)]
    pub s: Option<Vec<f64>>,
    /// Variation sample radii; defaults to `[R]`.
    #[serde(default)]
    pub radii: Option<Vec<f64>>,
    #[serde(rename = "L", default)]
    pub l: Option<f64>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub x0: Option<PointId>,
    #[serde(rename = "S0", default)]
    pub s0: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub ceilings: Option<CeilingSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub pipeline: Pipeline,
    #[serde(default)]
    pub inputs: Inputs,
    #[serde(default)]
    pub parameters: Parameters,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

struct Ctx<'a> {
    base: &'a Path,
    scenario: &'a Scenario,
}

impl Ctx<'_> {
    fn load<T: DeserializeOwned>(&self, field: &str, value: Option<&Value>) -> Result<T> {
        let value = value.ok_or_else(|| Error::Parse(format!("inputs.{field} is required")))?;
        match value {
            Value::String(rel) => {
                let path = self.base.join(rel);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Error::Io(format!("inputs.{field}: {}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Parse(format!("inputs.{field} ({}): line {} column {}: {e}", path.display(), e.line(), e.column())))
            }
            v => serde_json::from_value(v.clone()).map_err(|e| Error::Parse(format!("inputs.{field}: {e}"))),
        }
    }

    fn space(&self) -> Result<FiniteMetricSpace> {
        self.load::<SpaceSpec>("space", self.scenario.inputs.space.as_ref())?.build()
    }

    fn cover(&self, space: &FiniteMetricSpace) -> Result<Cover> {
        self.load::<CoverSpec>("cover", self.scenario.inputs.cover.as_ref())?.build(space)
    }

    fn ids(&self, field: &str, value: Option<&Value>, space: &FiniteMetricSpace) -> Result<Vec<usize>> {
        points(space, &self.load::<Vec<PointId>>(field, value)?)
    }

    fn param(&self, name: &str, v: Option<f64>) -> Result<f64> {
        v.ok_or_else(|| Error::Parse(format!("parameters.{name} is required for pipeline {}", self.scenario.pipeline.name())))
    }

    fn epsilon(&self) -> Result<Option<f64>> {
        match &self.scenario.parameters.epsilon {
            None => Ok(None),
            Some(EpsilonSpec::Value(v)) => Ok(Some(*v)),
            Some(EpsilonSpec::Named(s)) => Err(Error::Parse(format!(
                "parameters.epsilon: {s:?} is only meaningful for group-pipeline"
            ))),
        }
    }

    fn radii(&self) -> Vec<f64> {
        let p = &self.scenario.parameters;
        p.radii.clone().unwrap_or_else(|| vec![p.r.unwrap_or(1.0)])
    }

    fn s_list(&self, space: &FiniteMetricSpace) -> Vec<f64> {
        self.scenario.parameters.s.clone().unwrap_or_else(|| space.realized_distances().to_vec())
    }
}

/// Witness-level targets: variation at `R` against ε, tail at `S0` against δ.
fn witness_targets(cert: &mut Certificate, ctx: &Ctx, space: &FiniteMetricSpace, w: &Witness) -> Result<()> {
    let p = &ctx.scenario.parameters;
    if let Some(r) = p.r {
        let v = variation_profile(space, w, &[r])[0];
        cert.r = Some(r);
        cert.bounds.insert("witness_variation_at_R".into(), v.value);
        match ctx.epsilon()? {
            Some(eps) => {
                cert.epsilon = Some(eps);
                cert.extend([Check::le(format!("witness variation at R={r} ≤ ε"), v.value, eps).with_pair(space, v.pair)]);
            }
            None => cert.epsilon = Some(v.value),
        }
    }
    if let Some(s0) = p.s0 {
        let t = tail_profile(space, w, &[s0]).samples[0];
        cert.s0 = Some(s0);
        cert.bounds.insert("tail_at_S0".into(), t.value);
        match p.delta {
            Some(delta) => {
                cert.delta = Some(delta);
                cert.extend([Check::le(format!("tail at S0={s0} ≤ δ"), t.value, delta).with_point(space, t.point)]);
            }
            None => cert.delta = Some(t.value),
        }
    }
    Ok(())
}

fn witness_profiles(cert: &mut Certificate, space: &FiniteMetricSpace, w: &Witness, radii: &[f64], s_list: &[f64]) {
    cert.profiles = Profiles::from_samples(&variation_profile(space, w, radii), &tail_profile(space, w, s_list));
}

fn partition_profile(space: &FiniteMetricSpace, p: &PartitionOfUnity, radii: &[f64]) -> Vec<(f64, f64)> {
    radii.iter().map(|&r| (r, partition_variation(space, p, r).value)).collect()
}

/// Runs a scenario file; relative input paths resolve against its directory.
pub fn run_scenario(path: &Path) -> Result<Certificate> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    run_scenario_str(&text, &base)
}

pub fn run_scenario_str(text: &str, base: &Path) -> Result<Certificate> {
    let scenario = Scenario::from_json(text)?;
    run(&scenario, base)
}

pub fn run(scenario: &Scenario, base: &Path) -> Result<Certificate> {
    let ctx = Ctx { base, scenario };
    let mut cert = Certificate::new(&scenario.name, scenario.pipeline.name());
    match scenario.pipeline {
        Pipeline::VerifyCover => verify_cover(&ctx, &mut cert)?,
        Pipeline::Bell => bell(&ctx, &mut cert)?,
        Pipeline::Glue => glue_scenario(&ctx, &mut cert)?,
        Pipeline::Subspace => subspace(&ctx, &mut cert)?,
        Pipeline::Net => net(&ctx, &mut cert)?,
        Pipeline::DirectLimit => direct_limit(&ctx, &mut cert)?,
        Pipeline::Fibering => fibering(&ctx, &mut cert)?,
        Pipeline::Separated => separated(&ctx, &mut cert)?,
        Pipeline::GroupPipeline => group_scenario(&ctx, &mut cert)?,
    }
    Ok(cert.finalize())
}

fn verify_cover(ctx: &Ctx, cert: &mut Certificate) -> Result<()> {
    let space = ctx.space()?;
    let cover = ctx.cover(&space)?;
    let p = &ctx.scenario.parameters;
    let lebesgue = cover.lebesgue_number(&space);
    cert.bounds.insert("multiplicity".into(), cover.multiplicity() as f64);
    cert.bounds.insert("lebesgue_number".into(), lebesgue.value);
    if let Some(f) = lebesgue.first_failing {
        cert.bounds.insert("lebesgue_first_failing".into(), f);
    }
    cert.bounds.insert("diameter_bound".into(), cover.diameter_bound(&space));
    if let Some(k) = p.k {
        cert.extend([Check::le("multiplicity ≤ k+1", cover.multiplicity() as f64, (k + 1) as f64)]);
    }
    if let Some(l) = p.l {
        cert.extend([Check::le("Lebesgue number ≥ L", l, lebesgue.value)]);
        if let (Some(k), Some(_)) = (p.k, cover.coloring()) {
            let separated = cover.check_kl_separated(&space, k, 2.0 * l)?;
            cert.extend([Check::holds(format!("({k}, {})-separated", 2.0 * l), separated)]);
            if separated {
                let enlarged = cover.enlarge(&space, l);
                cert.extend([
                    Check::le(format!("{l}-multiplicity ≤ k+1"), cover.r_multiplicity(&space, l) as f64, (k + 1) as f64),
                    Check::le("enlarged multiplicity ≤ k+1", enlarged.multiplicity() as f64, (k + 1) as f64),
                    Check::le("enlarged Lebesgue number ≥ L", l, enlarged.lebesgue_number(&space).value),
                ]);
            }
        }
    }
    if let Some(c) = p.c {
        cert.extend([Check::le("pieces uniformly bounded by c", cover.diameter_bound(&space), c)]);
    }
    Ok(())
}

fn bell(ctx: &Ctx, cert: &mut Certificate) -> Result<()> {
    let space = ctx.space()?;
    let cover = ctx.cover(&space)?;
    let b = bell_partition(&space, &cover)?;
    cert.bounds.insert("multiplicity".into(), b.multiplicity as f64);
    cert.bounds.insert("lebesgue_number".into(), b.lebesgue);
    cert.bounds.insert("lipschitz_bound".into(), b.lipschitz_bound);
    cert.bounds.insert("lipschitz_observed".into(), b.observed.value);
    cert.extend([Check::le("Σ|φ(x)−φ(y)| / d(x,y) ≤ (2k+2)(2k+3)/L (all pairs)", b.observed.value, b.lipschitz_bound)
        .with_pair(&space, b.observed.pair)]);
    let radii = ctx.radii();
    cert.profiles.variation = partition_profile(&space, &b.partition, &radii);
    if let Some(r) = ctx.scenario.parameters.r {
        cert.r = Some(r);
        let v = partition_variation(&space, &b.partition, r);
        if let Some(eps) = ctx.epsilon()? {
            cert.epsilon = Some(eps);
            cert.extend([Check::le(format!("partition variation at R={r} ≤ ε"), v.value, eps).with_pair(&space, v.pair)]);
        }
    }
    Ok(())
}

fn glue_scenario(ctx: &Ctx, cert: &mut Certificate) -> Result<()> {
    let inputs = &ctx.scenario.inputs;
    let space = ctx.space()?;
    let cover = ctx.cover(&space)?;
    let partition = match inputs.partition.as_ref() {
        None => PartitionSpec::Bell,
        v => ctx.load::<PartitionSpec>("partition", v)?,
    }
    .build(&space, &cover)?;
    let specs: PieceWitnesses = ctx.load("pieces", inputs.pieces.as_ref())?;
    let provider = SpecProvider(&specs);
    let pieces = cover
        .pieces()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (_, sub) = space.subspace(p)?;
            provider.witness_for(i, &sub)
        })
        .collect::<Result<Vec<_>>>()?;
    let (radii, s_list) = (ctx.radii(), ctx.s_list(&space));
    let out = glue(&space, &GlueInput::new(partition, pieces)?, &radii, &s_list)?;
    cert.extend(out.checks);
    cert.profiles = Profiles::from_samples(&out.variation, &out.tail);
    witness_targets(cert, ctx, &space, &out.witness)
}

fn subspace(ctx: &Ctx, cert: &mut Certificate) -> Result<()> {
    let inputs = &ctx.scenario.inputs;
    let space = ctx.space()?;
    let beta = ctx.load::<WitnessSpec>("witness", inputs.witness.as_ref())?.build(&space)?;
    let members = ctx.ids("subspace", inputs.subspace.as_ref(), &space)?;
    let sw = subspace_witness(&space, &beta, &members)?;
    let s_list = ctx.s_list(&space);
    cert.extend(sw.identity_checks(&beta));
    cert.extend(sw.tail_checks(&space, &beta, &s_list));
    witness_profiles(cert, &sw.space, &sw.collapsed, &ctx.radii(), &s_list);
    witness_targets(cert, ctx, &sw.space, &sw.collapsed)
}

fn net(ctx: &Ctx, cert: &mut Certificate) -> Result<()> {
    let inputs = &ctx.scenario.inputs;
    let space = ctx.space()?;
    let members = ctx.ids("net", inputs.net.as_ref(), &space)?;
    let c = ctx.param("c", ctx.scenario.parameters.c)?;
    let (_, net_space) = space.subspace(&members)?;
    let beta = ctx.load::<WitnessSpec>("witness", inputs.witness.as_ref())?.build(&net_space)?;
    let nw = net_witness(&space, &members, &beta, c)?;
    let (radii, s_list) = (ctx.radii(), ctx.s_list(&space));
    cert.bounds.insert("c".into(), c);
    cert.extend(nw.checks(&space, &beta, c, &radii, &s_list));
    witness_profiles(cert, &space, &nw.witness, &radii, &s_list);
    witness_targets(cert, ctx, &space, &nw.witness)
}

fn direct_limit(ctx: &Ctx, cert: &mut Certificate) -> Result<()> {
    let space = ctx.space()?;
    let chain = ctx.load::<ChainSpec>("chain", ctx.scenario.inputs.chain.as_ref())?.build(&space)?;
    let l = ctx.param("L", ctx.scenario.parameters.l)?;
    let out = direct_limit_cover(&space, &chain, l)?;
    let lebesgue = out.cover.lebesgue_number(&space).value;
    cert.bounds.insert("L".into(), l);
    cert.bounds.insert("multiplicity".into(), out.cover.multiplicity() as f64);
    cert.bounds.insert("lebesgue_number".into(), lebesgue);
    cert.extend([
        Check::le("multiplicity ≤ 2", out.cover.multiplicity() as f64, 2.0),
        Check::le("Lebesgue number ≥ L", l, lebesgue),
        Check::holds(
            "N_L(X_{n_k}) ∩ N_L(X_{n_{k+2}} ∖ X_{n_{k+1}}) = ∅",
            direct_limit_disjointness(&space, &chain, &out.subsequence, l),
        ),
    ]);
    let subsequence: Vec<String> = out.subsequence.iter().map(|n| n.to_string()).collect();
    cert.truncation_flags.push(format!("subsequence (0-based levels): {}", subsequence.join(",")));
    for (i, affected) in out.truncation_affected.iter().enumerate() {
        if *affected {
            cert.truncation_flags.push(format!("piece {i} meets the outermost shell of the truncated chain"));
        }
    }
    Ok(())
}

fn fibering(ctx: &Ctx, cert: &mut Certificate) -> Result<()> {
    let inputs = &ctx.scenario.inputs;
    let p = &ctx.scenario.parameters;
    let x = ctx.space()?;
    let y = ctx.load::<SpaceSpec>("target_space", inputs.target_space.as_ref())?.build()?;
    let assignment = ctx.load::<MapSpec>("map", inputs.map.as_ref())?.build(&x, &y)?;
    let cover = ctx.cover(&y)?;
    let partition = match inputs.partition.as_ref() {
        None => PartitionSpec::Bell,
        v => ctx.load::<PartitionSpec>("partition", v)?,
    }
    .build(&y, &cover)?;
    let specs: PieceWitnesses = ctx.load("pieces", inputs.pieces.as_ref())?;
    let r = ctx.param("R", p.r)?;
    let (radii, s_list) = (ctx.radii(), ctx.s_list(&x));
    let out = fibering_pipeline(&x, &y, &assignment, &partition, &SpecProvider(&specs), r, &radii, &s_list)?;
    cert.bounds.insert("S".into(), out.expansion);
    cert.bounds.insert("pullback_pieces".into(), out.pullback.partition.n_pieces() as f64);
    cert.extend(out.checks);
    cert.extend(out.glue.checks);
    cert.profiles = Profiles::from_samples(&out.glue.variation, &out.glue.tail);
    witness_targets(cert, ctx, &x, &out.glue.witness)
}

fn separated(ctx: &Ctx, cert: &mut Certificate) -> Result<()> {
    let inputs = &ctx.scenario.inputs;
    let p = &ctx.scenario.parameters;
    let space = ctx.space()?;
    let cover = ctx.cover(&space)?;
    let params = SeparatedParams {
        k: p.k.ok_or_else(|| Error::Parse("parameters.k is required for pipeline separated".into()))?,
        l: ctx.param("L", p.l)?,
        sigma: ctx.param("sigma", p.sigma)?,
        r: ctx.param("R", p.r)?,
        epsilon: ctx.param("epsilon", ctx.epsilon()?)?,
    };
    let specs: PieceWitnesses = ctx.load("pieces", inputs.pieces.as_ref())?;
    let (radii, s_list) = (ctx.radii(), ctx.s_list(&space));
    let out = separated_cover_pipeline(&space, &cover, params, &SpecProvider(&specs), &radii, &s_list)?;
    cert.r = Some(params.r);
    cert.epsilon = Some(params.epsilon);
    cert.bounds.insert("k".into(), params.k as f64);
    cert.bounds.insert("L".into(), params.l);
    cert.bounds.insert("sigma".into(), params.sigma);
    cert.bounds.insert("lipschitz_observed".into(), out.bell.observed.value);
    cert.bounds.insert("partition_variation_at_R".into(), partition_variation(&space, &out.bell.partition, params.r).value);
    cert.extend(out.checks);
    cert.extend(out.glue.checks);
    cert.informational = out.informational;
    cert.profiles = Profiles::from_samples(&out.glue.variation, &out.glue.tail);
    Ok(())
}

fn group_scenario(ctx: &Ctx, cert: &mut Certificate) -> Result<()> {
    let inputs = &ctx.scenario.inputs;
    let p = &ctx.scenario.parameters;
    let space = ctx.space()?;
    let group = ctx.load::<GroupSpec>("group", inputs.group.as_ref())?.build()?;
    let maps = ctx.load::<ActionSpec>("action", inputs.action.as_ref())?.build(&group, &space)?;
    let ceilings = p.ceilings.unwrap_or_default();
    let action = certify_quasi_action(
        &group,
        &space,
        maps,
        space.realized_distances(),
        Ceilings { a: ceilings.a, b: ceilings.b },
    )?;
    let cover = ctx.cover(&space)?;
    let x0 = match &p.x0 {
        Some(id) => point(&space, id)?,
        None => 0,
    };
    let r = ctx.param("R", p.r)?;
    let epsilon = match &p.epsilon {
        Some(EpsilonSpec::Value(v)) => *v,
        Some(EpsilonSpec::Named(s)) if s == "admissible" => admissible_epsilon(&action, x0, &cover, r)?.0,
        Some(EpsilonSpec::Named(s)) => {
            return Err(Error::Parse(format!("parameters.epsilon: expected a number or \"admissible\", got {s:?}")))
        }
        None => return Err(Error::Parse("parameters.epsilon is required for pipeline group-pipeline".into())),
    };
    let stabilizer = match inputs.stabilizer_witness.as_ref() {
        None => PieceWitnesses::Shared(WitnessSpec::Dirac),
        v => PieceWitnesses::Shared(ctx.load::<WitnessSpec>("stabilizer_witness", v)?),
    };
    let (radii, s_list) = (ctx.radii(), ctx.s_list(crate::group::word_metric_space(&group)));
    let out = group_pipeline(
        &action,
        &cover,
        GroupPipelineParams { x0, r, epsilon },
        &SpecProvider(&stabilizer),
        &radii,
        &s_list,
    )?;
    cert.r = Some(r);
    cert.epsilon = Some(epsilon);
    for (k, v) in [
        ("A", action.a),
        ("B", action.b),
        ("lambda", out.orbit.lambda),
        ("orbit_constant", out.orbit.constant),
        ("k", out.k as f64),
        ("L_required", out.l_required),
        ("lebesgue_number", out.lebesgue),
        ("T", out.t),
        ("T_prime", out.t_prime),
        ("stabilizer_size", out.stabilizer.members.len() as f64),
        ("group_order", group.len() as f64),
    ] {
        cert.bounds.insert(k.into(), v);
    }
    cert.extend(out.checks);
    cert.informational = out.informational;
    cert.truncation_flags = out.truncation_flags;
    cert.profiles = Profiles::from_samples(&out.glue.variation, &out.glue.tail);
    Ok(())
}

// ---------------------------------------------------------------------------
// export and suite

/// Writes `<stem>.variation.csv` (`R,variation`) and `<stem>.tail.csv` (`S,tail`).
pub fn export_profiles(cert: &Certificate, dir: &Path, stem: &str, format: &str) -> Result<Vec<PathBuf>> {
    if format != "csv" {
        return Err(Error::Precondition(format!("unsupported profile format {format:?} (only csv)")));
    }
    let mut written = Vec::new();
    for (suffix, header, rows) in [
        ("variation", ["R", "variation"], &cert.profiles.variation),
        ("tail", ["S", "tail"], &cert.profiles.tail),
    ] {
        let path = dir.join(format!("{stem}.{suffix}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Io(e.to_string()))?;
        w.write_record(header).map_err(|e| Error::Io(e.to_string()))?;
        for (a, b) in rows {
            w.write_record([format!("{a:?}"), format!("{b:?}")]).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}

/// Process exit status for a scenario outcome.
pub fn exit_code(outcome: &Result<Certificate>) -> i32 {
    match outcome {
        Ok(c) if c.pass => 0,
        Ok(_) => 1,
        Err(_) => 2,
    }
}

#[derive(Debug)]
pub struct SuiteEntry {
    pub file: PathBuf,
    pub outcome: Result<Certificate>,
}

impl SuiteEntry {
    pub fn status(&self) -> &'static str {
        match exit_code(&self.outcome) {
            0 => "pass",
            1 => "fail",
            _ => "error",
        }
    }
}

#[derive(Debug)]
pub struct SuiteSummary {
    pub entries: Vec<SuiteEntry>,
}

impl SuiteSummary {
    pub fn passed(&self) -> usize {
        self.entries.iter().filter(|e| e.status() == "pass").count()
    }

    /// Worst exit status over all scenarios (0 for an empty suite).
    pub fn exit_code(&self) -> i32 {
        self.entries.iter().map(|e| exit_code(&e.outcome)).max().unwrap_or(0)
    }
}

/// Runs every `*.json` file of `dir` in filename order (in parallel).
pub fn suite(dir: &Path) -> Result<SuiteSummary> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let entries = files
        .into_par_iter()
        .map(|file| {
            let outcome = run_scenario(&file);
            SuiteEntry { file, outcome }
        })
        .collect();
    Ok(SuiteSummary { entries })
}
