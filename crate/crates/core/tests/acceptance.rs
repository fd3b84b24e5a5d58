//! Acceptance criteria 1-9. Runs without the libtest harness so every
//! criterion prints exactly one PASS/FAIL line; exits nonzero on any FAIL.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use coarse_lab::construct::{
    glue, separated_cover_pipeline, subspace_witness, DiracProvider, GlueInput, GlueOutput, SeparatedParams,
};
use coarse_lab::cover::{direct_limit_cover, direct_limit_disjointness, ChainOfSubspaces, Cover};
use coarse_lab::group::{
    admissible_epsilon, certify_quasi_action, group_pipeline, perturb_maps, seeded_perturbation, translation_maps,
    Ceilings, GroupModel, GroupPipelineParams,
};
use coarse_lab::partition::{bell_constant, bell_formula, bell_partition, PartitionOfUnity};
use coarse_lab::scenario::run_scenario;
use coarse_lab::space::FiniteMetricSpace;
use coarse_lab::witness::{tail_profile, variation_profile, Witness};
use coarse_lab::Error;
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL_IDENTITY: f64 = 1e-9;
const TOL_EXACT: f64 = 1e-12;
const TIME_LIMIT: Duration = Duration::from_secs(10);

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("subspace identities", criterion_1),
        ("partition Lipschitz bound", criterion_2),
        ("cover facts", criterion_3),
        ("glue bound", criterion_4),
        ("oracle equivalence", criterion_5),
        ("direct-limit cover", criterion_6),
        ("group pipeline Z_60 on C_12", criterion_7),
        ("separated cover pipeline", criterion_8),
        ("determinism", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panic: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} ({name}): PASS [{detail}; {secs:.2}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL [{detail}; {secs:.2}s]", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = rng(1);
    let instances = 150;
    let mut worst_iso: f64 = 0.0;
    let mut worst_collapse = f64::NEG_INFINITY;
    for inst in 0..instances {
        let space = random_space(&mut rng, 40);
        let beta = random_witness(&mut rng, &space);
        let members = random_subset(&mut rng, space.len());
        let sw = subspace_witness(&space, &beta, &members).map_err(|e| format!("instance {inst}: {e}"))?;
        let beta_d = dense(&beta);
        // ξ_y(t, s) = β_y(s) with t the nearest member to s; η_y(t) = ‖ξ_y(t, ·)‖
        let xi: Vec<Vec<(usize, usize, f64)>> = members
            .iter()
            .map(|&y| beta_d[y].iter().map(|(e, &c)| (nearest(&space, &members, e.at), e.at, c)).collect())
            .collect();
        let eta: Vec<Vec<(usize, f64)>> = xi
            .iter()
            .map(|v| {
                let mut by_t = std::collections::BTreeMap::<usize, f64>::new();
                for &(t, _, c) in v {
                    *by_t.entry(t).or_default() += c * c;
                }
                by_t.into_iter().map(|(t, m)| (t, m.sqrt())).collect()
            })
            .collect();
        let norm = |v: &[(usize, usize, f64)]| v.iter().map(|t| t.2 * t.2).sum::<f64>().sqrt();
        let diff = |a: &[(usize, usize, f64)], b: &[(usize, usize, f64)]| {
            let ma: std::collections::BTreeMap<_, _> = a.iter().map(|&(t, s, c)| ((t, s), c)).collect();
            let mb: std::collections::BTreeMap<_, _> = b.iter().map(|&(t, s, c)| ((t, s), c)).collect();
            let keys: std::collections::BTreeSet<_> = ma.keys().chain(mb.keys()).collect();
            keys.iter()
                .map(|k| (ma.get(k).copied().unwrap_or(0.0) - mb.get(k).copied().unwrap_or(0.0)).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let ediff = |a: &[(usize, f64)], b: &[(usize, f64)]| {
            let ma: std::collections::BTreeMap<_, _> = a.iter().copied().collect();
            let mb: std::collections::BTreeMap<_, _> = b.iter().copied().collect();
            let keys: std::collections::BTreeSet<_> = ma.keys().chain(mb.keys()).collect();
            keys.iter()
                .map(|k| (ma.get(k).copied().unwrap_or(0.0) - mb.get(k).copied().unwrap_or(0.0)).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        for (a, &ya) in members.iter().enumerate() {
            ensure!((norm(&xi[a]) - 1.0).abs() <= TOL_IDENTITY, "instance {inst}: ‖ξ_{ya}‖ = {}", norm(&xi[a]));
            for (b, &yb) in members.iter().enumerate() {
                let d_xi = diff(&xi[a], &xi[b]);
                let d_beta = dense_diff(&beta_d[ya], &beta_d[yb]);
                let d_eta = ediff(&eta[a], &eta[b]);
                worst_iso = worst_iso.max((d_xi - d_beta).abs());
                worst_collapse = worst_collapse.max(d_eta - d_xi);
                ensure!((d_xi - d_beta).abs() <= TOL_IDENTITY, "instance {inst}: isometry gap at ({ya},{yb})");
                ensure!(d_eta <= d_xi + TOL_EXACT, "instance {inst}: collapse grows at ({ya},{yb})");
                // the library's witnesses agree with the oracle
                ensure!(
                    (sw.intermediate.distance(a, b) - d_xi).abs() <= TOL_EXACT
                        && (sw.collapsed.distance(a, b) - d_eta).abs() <= TOL_EXACT,
                    "instance {inst}: library disagrees with oracle at ({ya},{yb})"
                );
            }
        }
        if let Some(c) = sw.identity_checks(&beta).into_iter().find(|c| !c.pass) {
            return Err(format!("instance {inst}: library check failed: {}", c.name));
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < TIME_LIMIT, "runtime {elapsed:?} over {TIME_LIMIT:?}");
    Ok(format!(
        "{instances} instances, max isometry gap {worst_iso:.1e}, max collapse excess {worst_collapse:.1e}"
    ))
}

// ---------------------------------------------------------------------------

/// Covers with multiplicity 1..=4 and Lebesgue number 1..=20 on intervals, cycles and grids.
fn generated_covers(seed: u64, wanted: usize) -> Vec<(FiniteMetricSpace, Vec<Vec<usize>>)> {
    let mut rng = rng(seed);
    let mut out = Vec::new();
    let mut attempts = 0;
    while out.len() < wanted && attempts < 50 * wanted {
        attempts += 1;
        let space = match attempts % 3 {
            0 => FiniteMetricSpace::z_interval(0, rng.gen_range(10..120)).unwrap(),
            1 => FiniteMetricSpace::cycle(rng.gen_range(8..120)).unwrap(),
            _ => FiniteMetricSpace::grid(&[rng.gen_range(2..13), rng.gen_range(2..13)]).unwrap(),
        };
        let pieces = if attempts % 17 == 0 {
            vec![(0..space.len()).collect()]
        } else {
            let n_centers = rng.gen_range(2..8.min(space.len()));
            let mut centers = random_subset(&mut rng, space.len());
            centers.truncate(n_centers);
            voronoi(&space, &centers, rng.gen_range(1..=20) as f64)
        };
        let m = multiplicity(&space, &pieces);
        let l = lebesgue(&space, &pieces);
        if (1..=4).contains(&m) && (1.0..=20.0).contains(&l) {
            out.push((space, pieces));
        }
    }
    out
}

fn criterion_2() -> Outcome {
    let covers = generated_covers(2, 60);
    ensure!(covers.len() >= 50, "only {} covers generated", covers.len());
    let mut seen_mult = [0usize; 5];
    let mut pairs = 0usize;
    let mut worst_ratio: f64 = 0.0;
    for (idx, (space, pieces)) in covers.iter().enumerate() {
        let m = multiplicity(space, pieces);
        let l = lebesgue(space, pieces);
        seen_mult[m] += 1;
        let cover = Cover::new(space, pieces.clone(), None).map_err(|e| e.to_string())?;
        let bell = bell_partition(space, &cover).map_err(|e| format!("cover {idx}: {e}"))?;
        ensure!(bell.lebesgue == l && bell.multiplicity == m, "cover {idx}: library L/multiplicity disagree");
        let phi = common::bell(space, pieces);
        for (i, row) in phi.iter().enumerate() {
            for (x, &v) in row.iter().enumerate() {
                ensure!(
                    (bell.partition.value(i, x) - v).abs() <= TOL_EXACT,
                    "cover {idx}: φ_{i}({x}) differs from oracle"
                );
            }
        }
        // k with multiplicity k+1
        let constant = bell_constant(m - 1, l);
        for x in 0..space.len() {
            for y in (x + 1)..space.len() {
                pairs += 1;
                let lhs = l1_diff(&phi, x, y);
                let rhs = constant * space.dist(x, y);
                worst_ratio = worst_ratio.max(lhs / rhs);
                ensure!(lhs <= rhs + TOL_EXACT, "cover {idx}: violation at ({x},{y}): {lhs} > {rhs}");
            }
        }
    }
    ensure!(seen_mult[1..].iter().all(|&c| c > 0), "multiplicities not all exercised: {seen_mult:?}");
    Ok(format!(
        "{} covers (multiplicity counts 1..4: {:?}), {pairs} pairs, 0 violations, max lhs/rhs {worst_ratio:.3}",
        covers.len(),
        &seen_mult[1..]
    ))
}

// ---------------------------------------------------------------------------

/// Colored test covers on spaces with at most 100 points.
fn colored_covers() -> Vec<(FiniteMetricSpace, Vec<Vec<usize>>, Vec<usize>, usize)> {
    let mut out = Vec::new();
    for n in [12usize, 30, 57, 100] {
        for b in [1usize, 2, 3, 5, 8, 12] {
            for k in 0..=3usize {
                let interval = FiniteMetricSpace::z_interval(0, n as i64 - 1).unwrap();
                let blocks: Vec<Vec<usize>> = (0..n).step_by(b).map(|s| (s..(s + b).min(n)).collect()).collect();
                let colors = (0..blocks.len()).map(|i| i % (k + 1)).collect();
                out.push((interval, blocks.clone(), colors, k));
                let cycle = FiniteMetricSpace::cycle(n).unwrap();
                let colors = (0..blocks.len()).map(|i| i % (k + 1)).collect();
                out.push((cycle, blocks, colors, k));
            }
        }
    }
    for b in [1usize, 2, 3, 4] {
        let grid = FiniteMetricSpace::grid(&[10, 10]).unwrap();
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        let mut colors = Vec::new();
        for bx in (0..10).step_by(b) {
            for by in (0..10).step_by(b) {
                let piece = (bx..(bx + b).min(10))
                    .flat_map(|i| (by..(by + b).min(10)).map(move |j| i * 10 + j))
                    .collect();
                blocks.push(piece);
                colors.push(2 * ((bx / b) % 2) + (by / b) % 2);
            }
        }
        out.push((grid, blocks, colors, 3));
    }
    let mut rng = rng(3);
    for _ in 0..40 {
        let space = random_space(&mut rng, 100);
        let mut centers = random_subset(&mut rng, space.len());
        centers.truncate(rng.gen_range(1..=8));
        let pieces = voronoi(&space, &centers, rng.gen_range(0..3) as f64);
        let k = rng.gen_range(0..=3);
        let colors = (0..pieces.len()).map(|_| rng.gen_range(0..=k)).collect();
        out.push((space, pieces, colors, k));
    }
    out
}

fn criterion_3() -> Outcome {
    let covers = colored_covers();
    let radii = [0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 9.0];
    let (mut separated, mut enlarged) = (0usize, 0usize);
    for (idx, (space, pieces, colors, k)) in covers.iter().enumerate() {
        ensure!(space.len() <= 100, "cover {idx}: space too large");
        let cover = Cover::new(space, pieces.clone(), Some(colors.clone())).map_err(|e| e.to_string())?;
        for &l in &radii {
            let sep = (0..=*k).all(|c| {
                let fam: Vec<&Vec<usize>> = pieces.iter().zip(colors).filter(|(_, &col)| col == c).map(|(p, _)| p).collect();
                (0..fam.len()).all(|i| (i + 1..fam.len()).all(|j| set_distance(space, fam[i], fam[j]) > 2.0 * l))
            });
            let lib_sep = cover.check_kl_separated(space, *k, 2.0 * l).map_err(|e| e.to_string())?;
            ensure!(sep == lib_sep, "cover {idx}, L={l}: separation oracle {sep} vs library {lib_sep}");
            let rm = r_multiplicity(space, pieces, l);
            ensure!(rm == cover.r_multiplicity(space, l), "cover {idx}, L={l}: L-multiplicity disagrees");
            if sep {
                separated += 1;
                ensure!(rm <= k + 1, "cover {idx}, L={l}: separated but L-multiplicity {rm} > {}", k + 1);
            }
            // every cover has L-multiplicity <= k' + 1 for k' = rm - 1
            let big = cover.enlarge(space, l);
            let expected: Vec<Vec<usize>> = pieces.iter().map(|p| neighborhood(space, p, l)).collect();
            ensure!(big.pieces() == expected.as_slice(), "cover {idx}, L={l}: enlargement differs from oracle");
            enlarged += 1;
            let m = multiplicity(space, &expected);
            ensure!(m <= rm, "cover {idx}, L={l}: enlarged multiplicity {m} > {rm}");
            ensure!(balls_fit(space, &expected, l), "cover {idx}, L={l}: enlarged Lebesgue number < {l}");
        }
    }
    ensure!(separated > 0, "no separated instance exercised");
    Ok(format!(
        "{} covers x {} scales: {separated} separated instances, {enlarged} enlargements, 0 violations",
        covers.len(),
        radii.len()
    ))
}

// ---------------------------------------------------------------------------

/// Dense re-evaluation of one glue call: glued vectors, the pairwise bound
/// and tail domination at every sampled `S`.
pub fn check_glue(space: &FiniteMetricSpace, out: &GlueOutput, s_list: &[f64]) -> Result<(usize, f64), String> {
    let input = &out.input;
    let cover = input.cover();
    let n = space.len();
    let beta: Vec<Dense> = input.pieces.iter().map(dense).collect();
    // entry (i, global u) -> sqrt(φ_i(x)) β^i_x(u)
    let glued: Vec<std::collections::BTreeMap<(usize, usize), f64>> = (0..n)
        .map(|x| {
            let mut v = std::collections::BTreeMap::new();
            for i in 0..cover.len() {
                let piece = cover.piece(i);
                let phi = input.partition.value(i, x);
                if let Some(a) = piece.iter().position(|&p| p == x) {
                    for (e, &c) in &beta[i][a] {
                        if phi > 0.0 {
                            *v.entry((i, piece[e.at])).or_insert(0.0) += phi.sqrt() * c;
                        }
                    }
                }
            }
            v
        })
        .collect();
    let gdiff = |x: usize, y: usize| {
        let keys: std::collections::BTreeSet<_> = glued[x].keys().chain(glued[y].keys()).collect();
        keys.iter()
            .map(|k| (glued[x].get(k).copied().unwrap_or(0.0) - glued[y].get(k).copied().unwrap_or(0.0)).powi(2))
            .sum::<f64>()
    };
    let mut worst_slack = f64::INFINITY;
    for x in 0..n {
        let norm: f64 = glued[x].values().map(|c| c * c).sum();
        ensure!((norm.sqrt() - 1.0).abs() <= TOL_IDENTITY, "glued vector at {x} has norm {}", norm.sqrt());
        for y in (x + 1)..n {
            let lhs = gdiff(x, y);
            ensure!(
                (lhs.sqrt() - out.witness.distance(x, y)).abs() <= TOL_EXACT,
                "library glued distance differs from oracle at ({x},{y})"
            );
            let dphi: f64 = (0..cover.len()).map(|i| (input.partition.value(i, x) - input.partition.value(i, y)).abs()).sum();
            let mut piece_max: f64 = 0.0;
            for i in 0..cover.len() {
                let piece = cover.piece(i);
                if let (Some(a), Some(b)) = (piece.iter().position(|&p| p == x), piece.iter().position(|&p| p == y)) {
                    piece_max = piece_max.max(dense_diff(&beta[i][a], &beta[i][b]).powi(2));
                }
            }
            let rhs = 2.0 * dphi + 2.0 * piece_max;
            worst_slack = worst_slack.min(rhs - lhs);
            ensure!(lhs <= rhs + TOL_EXACT, "glue bound fails at ({x},{y}): {lhs} > {rhs}");
        }
    }
    for &s in s_list {
        let glued_tail = (0..n)
            .map(|x| glued[x].iter().filter(|((_, u), _)| space.dist(x, *u) > s).map(|(_, c)| c * c).sum::<f64>())
            .fold(0.0, f64::max);
        let equi = (0..cover.len())
            .map(|i| {
                let piece = cover.piece(i);
                (0..piece.len())
                    .map(|a| {
                        beta[i][a]
                            .iter()
                            .filter(|(e, _)| space.dist(piece[a], piece[e.at]) > s)
                            .map(|(_, c)| c * c)
                            .sum::<f64>()
                    })
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        ensure!(glued_tail <= equi + TOL_EXACT, "tail at S={s}: {glued_tail} > equi-tail {equi}");
    }
    if let Some(c) = out.checks.iter().find(|c| !c.pass) {
        return Err(format!("library glue check failed: {}", c.name));
    }
    Ok((n * (n - 1) / 2, worst_slack))
}

fn random_glue(rng: &mut ChaCha8Rng) -> (FiniteMetricSpace, GlueOutput, Vec<f64>) {
    let space = random_space(rng, 30);
    let mut centers = random_subset(rng, space.len());
    centers.truncate(rng.gen_range(1..=5));
    let pieces = voronoi(&space, &centers, rng.gen_range(1..=3) as f64);
    let cover = Cover::new(&space, pieces, None).unwrap();
    let partition = if rng.gen_bool(0.5) {
        bell_formula(&space, &cover).unwrap().0
    } else {
        // random weights on memberships
        let values = cover
            .memberships()
            .iter()
            .map(|m| {
                let w: Vec<f64> = m.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
                let t: f64 = w.iter().sum();
                m.iter().zip(w).map(|(&i, w)| (i, w / t)).collect()
            })
            .collect();
        PartitionOfUnity::new(cover.clone(), values).unwrap()
    };
    let piece_witnesses = cover
        .pieces()
        .iter()
        .map(|p| {
            let sub = coarse_lab::space::SubspaceRef::new(&space, p.clone()).unwrap().materialize(&space);
            random_witness(rng, &sub)
        })
        .collect();
    let s_list = space.realized_distances().to_vec();
    let out = glue(&space, &GlueInput::new(partition, piece_witnesses).unwrap(), &[1.0, 2.0], &s_list).unwrap();
    (space, out, s_list)
}

fn criterion_4() -> Outcome {
    let mut calls = 0;
    let mut pairs = 0;
    let mut min_slack = f64::INFINITY;
    let mut record = |r: Result<(usize, f64), String>, what: &str| -> Result<(), String> {
        let (p, s) = r.map_err(|e| format!("{what}: {e}"))?;
        calls += 1;
        pairs += p;
        min_slack = min_slack.min(s);
        Ok(())
    };
    let mut rng = rng(4);
    for i in 0..60 {
        let (space, out, s_list) = random_glue(&mut rng);
        record(check_glue(&space, &out, &s_list), &format!("random glue {i}"))?;
    }
    // the P5 example
    let p5 = FiniteMetricSpace::from_graph((0..5).map(|i| i.to_string()).collect(), &[(0, 1), (1, 2), (2, 3), (3, 4)])
        .unwrap();
    let cover = Cover::new(&p5, vec![vec![0, 1, 2], vec![2, 3, 4]], None).unwrap();
    let partition = bell_formula(&p5, &cover).unwrap().0;
    let out = glue(&p5, &GlueInput::new(partition, vec![Witness::dirac(3), Witness::dirac(3)]).unwrap(), &[1.0], &[0.0, 1.0])
        .unwrap();
    record(check_glue(&p5, &out, &[0.0, 1.0, 2.0]), "P5 example")?;
    for (name, space, out) in group_runs().map_err(|e| e.to_string())? {
        record(check_glue(&space, &out.glue, &space.realized_distances().to_vec()), &name)?;
    }
    let (space, out) = separated_run().map_err(|e| e.to_string())?;
    record(check_glue(&space, &out.glue, &[0.0, 1.0, 5.0, 20.0, 40.0]), "separated pipeline")?;
    Ok(format!("{calls} glue calls, {pairs} pairs, 0 violations, min slack {min_slack:.3e}"))
}

// ---------------------------------------------------------------------------

fn criterion_5() -> Outcome {
    let mut rng = rng(5);
    let mut compared = 0usize;
    let mut worst: f64 = 0.0;
    for inst in 0..80 {
        let (space, w) = if inst % 4 == 3 {
            // tagged witnesses come from glue
            let (space, out, _) = random_glue(&mut rng);
            (space, out.witness)
        } else {
            let space = random_space(&mut rng, 60);
            let w = random_witness(&mut rng, &space);
            (space, w)
        };
        ensure!(space.len() <= 60, "space too large");
        let d = dense(&w);
        let mut grid = vec![0.0];
        grid.extend_from_slice(space.realized_distances());
        grid.push(0.5);
        let var = variation_profile(&space, &w, &grid);
        let tail = tail_profile(&space, &w, &grid);
        for (k, &r) in grid.iter().enumerate() {
            let dv = dense_variation(&space, &d, r);
            let dt = dense_tail(&space, &d, r);
            worst = worst.max((var[k].value - dv).abs()).max((tail.samples[k].value - dt).abs());
            ensure!((var[k].value - dv).abs() <= TOL_EXACT, "instance {inst}: variation at {r}: {} vs {dv}", var[k].value);
            ensure!((tail.samples[k].value - dt).abs() <= TOL_EXACT, "instance {inst}: tail at {r}: {} vs {dt}", tail.samples[k].value);
            compared += 2;
        }
        for x in 0..space.len() {
            ensure!(
                (w.norm(x) - dense_norm(&d[x])).abs() <= TOL_EXACT,
                "instance {inst}: norm at {x} differs"
            );
        }
    }
    Ok(format!("80 instances, {compared} profile values, max deviation {worst:.1e}"))
}

// ---------------------------------------------------------------------------

fn criterion_6() -> Outcome {
    let ambient = FiniteMetricSpace::z_interval(-20, 20).unwrap();
    let levels: Vec<Vec<usize>> = (0..=20).map(|n| (20 - n..=20 + n).collect()).collect();
    let chain = ChainOfSubspaces::new(&ambient, levels.clone()).map_err(|e| e.to_string())?;
    let mut summary = Vec::new();
    for l in [1.0, 2.0, 3.0] {
        let out = direct_limit_cover(&ambient, &chain, l).map_err(|e| format!("L={l}: {e}"))?;
        let sub = &out.subsequence;
        for w in sub.windows(2) {
            let reach = neighborhood(&ambient, &levels[w[0]], 3.0 * l);
            ensure!(reach.iter().all(|x| levels[w[1]].contains(x)), "L={l}: N_3L(X_{}) ⊄ X_{}", w[0], w[1]);
        }
        let shell = |a: usize, b: usize| -> Vec<usize> { levels[b].iter().copied().filter(|x| !levels[a].contains(x)).collect() };
        let mut expected = vec![neighborhood(&ambient, &levels[sub[0]], l)];
        for w in sub.windows(2) {
            expected.push(neighborhood(&ambient, &shell(w[0], w[1]), l));
        }
        ensure!(out.cover.pieces() == expected.as_slice(), "L={l}: pieces differ from oracle");
        let m = multiplicity(&ambient, &expected);
        ensure!(m <= 2, "L={l}: multiplicity {m}");
        ensure!(balls_fit(&ambient, &expected, l), "L={l}: Lebesgue number < {l}");
        for w in sub.windows(3) {
            let inner = neighborhood(&ambient, &levels[w[0]], l);
            let outer = neighborhood(&ambient, &shell(w[1], w[2]), l);
            ensure!(inner.iter().all(|x| !outer.contains(x)), "L={l}: disjointness fails at {w:?}");
        }
        ensure!(direct_limit_disjointness(&ambient, &chain, sub, l), "L={l}: library disjointness disagrees");
        summary.push(format!("L={l}: {} pieces, mult {m}, Lebesgue {}", expected.len(), lebesgue(&ambient, &expected)));
    }
    Ok(summary.join(", "))
}

// ---------------------------------------------------------------------------

const SEED_PERTURBED: u64 = 7;

fn arcs(c12: &FiniteMetricSpace) -> Cover {
    let arc = |start: usize| (start..start + 5).map(|v| v % 12).collect::<Vec<_>>();
    Cover::new(c12, vec![arc(0), arc(3), arc(6), arc(9)], None).unwrap()
}

fn group_runs() -> coarse_lab::Result<Vec<(String, FiniteMetricSpace, coarse_lab::group::GroupPipelineOutput)>> {
    let g = GroupModel::cyclic(60)?;
    let c12 = FiniteMetricSpace::cycle(12)?;
    let cover = arcs(&c12);
    let words = coarse_lab::group::word_metric_space(&g).clone();
    let mut out = Vec::new();
    for perturbed in [false, true] {
        let mut maps = translation_maps(&g, &c12)?;
        if perturbed {
            maps = perturb_maps(&c12, &maps, &seeded_perturbation(60, 12, 1, SEED_PERTURBED))?;
        }
        let act = certify_quasi_action(&g, &c12, maps, c12.realized_distances(), Ceilings::default())?;
        let (eps, _) = admissible_epsilon(&act, 0, &cover, 1.0)?;
        let params = GroupPipelineParams { x0: 0, r: 1.0, epsilon: eps };
        let run = group_pipeline(&act, &cover, params, &DiracProvider, &[1.0, 2.0], &[0.0, 1.0, 2.0])?;
        out.push((if perturbed { "perturbed" } else { "isometric" }.to_string(), words.clone(), run));
    }
    Ok(out)
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let g = GroupModel::cyclic(60).map_err(|e| e.to_string())?;
    let c12 = FiniteMetricSpace::cycle(12).map_err(|e| e.to_string())?;
    let cover = arcs(&c12);
    let u = cover.pieces().to_vec();
    for s in 0..60 {
        for t in 0..60 {
            ensure!(g.mul(s, t) == Some((s + t) % 60), "group law of Z_60 differs at ({s},{t})");
        }
    }
    let d_g = |a: usize, b: usize| {
        let d = a.abs_diff(b);
        d.min(60 - d) as f64
    };
    let mut lines = Vec::new();
    for perturbed in [false, true] {
        let label = if perturbed { "perturbed" } else { "isometric" };
        let mut maps = translation_maps(&g, &c12).map_err(|e| e.to_string())?;
        let table = seeded_perturbation(60, 12, 1, SEED_PERTURBED);
        if perturbed {
            ensure!(table.iter().flatten().all(|p| p.abs() <= 1), "perturbation exceeds 1");
            maps = perturb_maps(&c12, &maps, &table).map_err(|e| e.to_string())?;
        }
        // f_g(x) = x + g (+ p) mod 12, recomputed
        let f = |g: usize, x: usize| -> usize {
            let p = if perturbed { table[g][x] } else { 0 };
            (x as i64 + g as i64 + p).rem_euclid(12) as usize
        };
        for gg in 0..60 {
            for x in 0..12 {
                ensure!(maps[gg][x] == f(gg, x), "{label}: action map differs at ({gg},{x})");
            }
        }
        let act = certify_quasi_action(&g, &c12, maps, c12.realized_distances(), Ceilings::default())
            .map_err(|e| e.to_string())?;
        let a = (0..12).map(|x| c12.dist(f(0, x), x)).fold(0.0, f64::max);
        let mut b: f64 = 0.0;
        for s in 0..60 {
            for t in 0..60 {
                for x in 0..12 {
                    b = b.max(c12.dist(f(s, f(t, x)), f((s + t) % 60, x)));
                }
            }
        }
        ensure!(act.a == a && act.b == b, "{label}: certified A,B = {},{} but oracle {a},{b}", act.a, act.b);
        let ell = |r: f64| -> f64 {
            let mut m: f64 = 0.0;
            for gg in 0..60 {
                for x in 0..12 {
                    for y in 0..12 {
                        if c12.dist(x, y) <= r {
                            m = m.max(c12.dist(f(gg, x), f(gg, y)));
                        }
                    }
                }
            }
            m
        };
        let x0 = 0;
        let lambda = [1usize, 59].iter().map(|&s| c12.dist(f(s, x0), x0)).fold(0.0, f64::max);
        let c = ell(lambda) + b;
        let l = lebesgue(&c12, &u);
        let v: Vec<Vec<usize>> = u.iter().map(|p| neighborhood(&c12, p, l)).collect();
        let k = multiplicity(&c12, &u).max(multiplicity(&c12, &v)) - 1;
        let r = 1.0;
        let eps_oracle = 2.0 * c * r * ((2 * k + 2) * (2 * k + 3)) as f64 / l;
        let (eps, k_lib) = admissible_epsilon(&act, x0, &cover, r).map_err(|e| e.to_string())?;
        ensure!(k_lib == k && (eps - eps_oracle).abs() <= TOL_EXACT * eps_oracle, "{label}: ε {eps} vs oracle {eps_oracle}");
        let params = GroupPipelineParams { x0, r, epsilon: eps };
        let run = group_pipeline(&act, &cover, params, &DiracProvider, &[1.0, 2.0], &[0.0, 1.0, 2.0])
            .map_err(|e| format!("{label}: {e}"))?;
        if let Some(chk) = run.checks.iter().find(|chk| !chk.pass) {
            return Err(format!("{label}: gating check failed: {}", chk.name));
        }
        // ε-chain on φ_i ∘ π, with φ the partition of the original cover
        ensure!(run.enlarged.pieces() == v.as_slice(), "{label}: enlarged cover differs from oracle");
        let phi = common::bell(&c12, &u);
        let pi = |gg: usize| f(gg, x0);
        let mut worst: f64 = 0.0;
        for g1 in 0..60 {
            for g2 in 0..60 {
                if d_g(g1, g2) <= r {
                    let s = l1_diff(&phi, pi(g1), pi(g2));
                    worst = worst.max(s);
                    ensure!(s <= eps + TOL_EXACT, "{label}: Σ|Δφ| = {s} > ε at ({g1},{g2})");
                }
            }
            for (j, &i) in run.piece_source.iter().enumerate() {
                ensure!(
                    (run.partition.value(j, g1) - phi[i][pi(g1)]).abs() <= TOL_EXACT,
                    "{label}: partition on G differs from φ∘π at {g1}"
                );
            }
        }
        // g_i⁻¹ π⁻¹(V_i) ⊆ W_{A+2B+ℓ(T)}(x₀)
        let t = (0..v.len())
            .map(|i| (0..60).map(|gg| v[i].iter().map(|&y| c12.dist(y, f(gg, x0))).fold(0.0, f64::max)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max);
        ensure!(run.t == t, "{label}: T = {} but oracle {t}", run.t);
        let t_prime = a + 2.0 * b + ell(t);
        ensure!(run.t_prime >= t_prime, "{label}: T' = {} below oracle {t_prime}", run.t_prime);
        let w: Vec<usize> = (0..60).filter(|&gg| c12.dist(f(gg, x0), x0) <= run.t_prime).collect();
        ensure!(run.stabilizer.members == w, "{label}: quasi-stabilizer differs from oracle");
        for (i, &gi) in run.representatives.iter().enumerate() {
            for h in (0..60).filter(|&h| v[i].contains(&pi(h))) {
                let moved = (h + 60 - gi) % 60;
                ensure!(w.contains(&moved), "{label}: g_{i}⁻¹·{h} = {moved} outside W");
            }
        }
        check_glue(&g_space(&g), &run.glue, &[0.0, 1.0, 2.0, 5.0, 30.0]).map_err(|e| format!("{label}: {e}"))?;
        let halved = GroupPipelineParams { epsilon: eps / 2.0, ..params };
        match group_pipeline(&act, &cover, halved, &DiracProvider, &[1.0], &[0.0]) {
            Err(Error::Precondition(_)) => {}
            other => return Err(format!("{label}: halved ε should be a precondition error, got {:?}", other.map(|_| ()))),
        }
        lines.push(format!(
            "{label}: A={a} B={b} k={k} ε={eps} max Σ|Δφ|={worst:.3} T={t} T'={} |W|={}",
            run.t_prime,
            w.len()
        ));
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < TIME_LIMIT, "runtime {elapsed:?} over {TIME_LIMIT:?}");
    Ok(lines.join("; "))
}

fn g_space(g: &GroupModel) -> FiniteMetricSpace {
    coarse_lab::group::word_metric_space(g).clone()
}

// ---------------------------------------------------------------------------

const THEOREM_THRESHOLD: f64 = 0.6;

fn separated_run() -> coarse_lab::Result<(FiniteMetricSpace, coarse_lab::construct::SeparatedOutput)> {
    let space = FiniteMetricSpace::z_interval(0, 99)?;
    // blocks of 40, alternating colors: same-color blocks are 41 apart
    let cover = Cover::new(&space, vec![(0..40).collect(), (40..80).collect(), (80..100).collect()], Some(vec![0, 1, 0]))?;
    let params = SeparatedParams { k: 1, l: 20.0, sigma: 0.1, r: 1.0, epsilon: THEOREM_THRESHOLD };
    let out = separated_cover_pipeline(&space, &cover, params, &DiracProvider, &[1.0], &[0.0, 1.0])?;
    Ok((space, out))
}

fn criterion_8() -> Outcome {
    let (k, l, sigma) = (1usize, 20.0, 0.1);
    ensure!(((k * k + 1) as f64) <= l * sigma, "hypothesis k²+1 ≤ Lσ fails: {} > {}", k * k + 1, l * sigma);
    let (space, out) = separated_run().map_err(|e| e.to_string())?;
    let blocks = vec![(0..40).collect::<Vec<usize>>(), (40..80).collect(), (80..100).collect()];
    ensure!(set_distance(&space, &blocks[0], &blocks[2]) > 2.0 * l, "cover is not (1, 2L)-separated");
    let v: Vec<Vec<usize>> = blocks.iter().map(|p| neighborhood(&space, p, l)).collect();
    let phi = common::bell(&space, &v);
    let mut worst: f64 = 0.0;
    for x in 0..space.len() {
        for y in 0..space.len() {
            if space.dist(x, y) <= 1.0 {
                worst = worst.max(l1_diff(&phi, x, y));
            }
        }
    }
    let formula = bell_constant(k, l);
    ensure!(worst <= THEOREM_THRESHOLD + TOL_EXACT, "variation {worst} > {THEOREM_THRESHOLD}");
    ensure!(worst <= formula + TOL_EXACT, "variation {worst} > (2k+2)(2k+3)/L = {formula}");
    if let Some(c) = out.checks.iter().find(|c| !c.pass) {
        return Err(format!("gating check failed: {}", c.name));
    }
    Ok(format!(
        "k²+1 = 2 ≤ Lσ = {}, variation at R=1 {worst:.5} ≤ 0.6 (formula value {formula})",
        l * sigma
    ))
}

// ---------------------------------------------------------------------------

fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn criterion_9() -> Outcome {
    let mut files: Vec<PathBuf> = std::fs::read_dir(scenario_dir())
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    ensure!(!files.is_empty(), "no scenarios found");
    let render = |threads: usize, path: &PathBuf| -> Result<String, String> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
        pool.install(|| run_scenario(path).map(|c| c.to_json()).map_err(|e| e.to_string()))
    };
    for f in &files {
        let first = render(1, f)?;
        let second = render(4, f)?;
        let third = render(1, f)?;
        ensure!(first == second && first == third, "{} differs between runs", f.display());
    }
    Ok(format!("{} scenarios, 3 runs each (1 and 4 threads), byte-identical", files.len()))
}
