//! Partitions of unity subordinated to covers: the Lipschitz construction from
//! distances to complements, pullbacks along coarse maps, and the variation
//! functional `max_{d(x,y) <= R} sum_i |phi_i(x) - phi_i(y)|`.

use crate::cover::Cover;
use crate::error::{Error, Result};
use crate::space::{CoarseMapCert, FiniteMetricSpace, TOL};

/// Functions `phi_i : X -> [0,1]` summing to one, each vanishing off its piece.
///
/// Values are stored sparsely per point as `(piece, value)` with `value > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionOfUnity {
    cover: Cover,
    values: Vec<Vec<(usize, f64)>>,
}

impl PartitionOfUnity {
    pub fn new(cover: Cover, values: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if values.len() != cover.n_points() {
            return Err(Error::InvalidPartition(format!(
                "{} value rows for {} points",
                values.len(),
                cover.n_points()
            )));
        }
        let mut cleaned = Vec::with_capacity(values.len());
        for (x, mut row) in values.into_iter().enumerate() {
            row.sort_by_key(|&(i, _)| i);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidPartition(format!("duplicate piece at point {x}")));
            }
            let mut sum = 0.0;
            for &(i, v) in &row {
                if i >= cover.len() {
                    return Err(Error::InvalidPartition(format!("piece index {i} out of range")));
                }
                if !(-TOL..=1.0 + TOL).contains(&v) {
                    return Err(Error::InvalidPartition(format!(
                        "phi_{i}(x{x}) = {v} outside [0, 1]"
                    )));
                }
                if v > 0.0 && !cover.contains(i, x) {
                    return Err(Error::InvalidPartition(format!(
                        "phi_{i} is positive at point index {x} outside its piece"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > TOL {
                return Err(Error::InvalidPartition(format!(
                    "values at point index {x} sum to {sum}"
                )));
            }
            row.retain(|&(_, v)| v > 0.0);
            cleaned.push(row);
        }
        Ok(Self { cover, values: cleaned })
    }

    /// Builds from a dense `[piece][point]` table.
    pub fn from_dense(cover: Cover, dense: &[Vec<f64>]) -> Result<Self> {
        if dense.len() != cover.len() {
            return Err(Error::InvalidPartition("one row per piece expected".into()));
        }
        let mut rows = vec![Vec::new(); cover.n_points()];
        for (i, row) in dense.iter().enumerate() {
            if row.len() != cover.n_points() {
                return Err(Error::InvalidPartition(format!("row {i} has wrong length")));
            }
            for (x, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    rows[x].push((i, v));
                }
            }
        }
        Self::new(cover, rows)
    }

    pub fn cover(&self) -> &Cover {
        &self.cover
    }

    pub fn n_points(&self) -> usize {
        self.values.len()
    }

    pub fn n_pieces(&self) -> usize {
        self.cover.len()
    }

    /// Nonzero `(piece, value)` pairs at `x`, ascending by piece.
    pub fn at(&self, x: usize) -> &[(usize, f64)] {
        &self.values[x]
    }

    pub fn value(&self, piece: usize, x: usize) -> f64 {
        self.values[x]
            .binary_search_by_key(&piece, |&(i, _)| i)
            .map(|k| self.values[x][k].1)
            .unwrap_or(0.0)
    }

    /// `sum_i |phi_i(x) - phi_i(y)|`.
    pub fn l1_difference(&self, x: usize, y: usize) -> f64 {
        sparse_l1(&self.values[x], &self.values[y])
    }

    /// `(piece, point, value)` triples with positive value, ordered by point then piece.
    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .flat_map(|(x, row)| row.iter().map(move |&(i, v)| (i, x, v)))
    }
}

pub(crate) fn sparse_l1(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(&(pa, va)), Some(&(pb, vb))) if pa == pb => {
                acc += (va - vb).abs();
                i += 1;
                j += 1;
            }
            (Some(&(pa, va)), Some(&(pb, _))) if pa < pb => {
                acc += va.abs();
                i += 1;
            }
            (Some(_), Some(&(_, vb))) => {
                acc += vb.abs();
                j += 1;
            }
            (Some(&(_, va)), None) => {
                acc += va.abs();
                i += 1;
            }
            (None, Some(&(_, vb))) => {
                acc += vb.abs();
                j += 1;
            }
            (None, None) => break,
        }
    }
    acc
}

/// Maximum of a pairwise quantity over `d(x, y) <= radius`, with the pair attaining it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMax {
    pub value: f64,
    pub pair: Option<(usize, usize)>,
}

pub fn partition_variation(space: &FiniteMetricSpace, partition: &PartitionOfUnity, r: f64) -> PairMax {
    let mut best = PairMax { value: 0.0, pair: None };
    for x in 0..space.len() {
        for y in (x + 1)..space.len() {
            if space.dist(x, y) <= r {
                let v = partition.l1_difference(x, y);
                if best.pair.is_none() || v > best.value {
                    best = PairMax { value: v, pair: Some((x, y)) };
                }
            }
        }
    }
    best
}

/// Lipschitz partition of unity built from distances to piece complements.
#[derive(Debug, Clone)]
pub struct BellPartition {
    pub partition: PartitionOfUnity,
    /// Multiplicity of the cover.
    pub multiplicity: usize,
    pub lebesgue: f64,
    /// `(2k+2)(2k+3)/L` with `k` the multiplicity.
    pub lipschitz_bound: f64,
    /// Largest observed `sum_i |phi_i(x) - phi_i(y)| / d(x, y)` and its pair.
    pub observed: PairMax,
    /// Smallest denominator `sum_j d(x, X \ U_j)` over all points.
    pub min_denominator: f64,
}

impl BellPartition {
    pub fn bound_holds(&self) -> bool {
        self.observed.value <= self.lipschitz_bound * (1.0 + 1e-12) + 1e-12
    }
}

/// `(2k+2)(2k+3)/L`.
pub fn bell_constant(k: usize, l: f64) -> f64 {
    let k = k as f64;
    (2.0 * k + 2.0) * (2.0 * k + 3.0) / l
}

/// `phi_i(x) = d(x, X \ U_i) / sum_j d(x, X \ U_j)`, with `d(x, ∅) = diam + 1`.
///
/// Always well defined: a point lies in some piece, so its denominator is at
/// least the uniform discreteness constant. Returns the smallest denominator too.
pub fn bell_formula(space: &FiniteMetricSpace, cover: &Cover) -> Result<(PartitionOfUnity, f64)> {
    let n = space.len();
    let far = space.diameter() + 1.0;
    let complements: Vec<Vec<usize>> = cover
        .pieces()
        .iter()
        .map(|piece| (0..n).filter(|x| piece.binary_search(x).is_err()).collect())
        .collect();
    let mut rows = Vec::with_capacity(n);
    let mut min_denominator = f64::INFINITY;
    for (x, member_of) in cover.memberships().iter().enumerate() {
        let raw: Vec<(usize, f64)> = member_of
            .iter()
            .map(|&i| {
                let d = if complements[i].is_empty() {
                    far
                } else {
                    space.set_distance(&[x], &complements[i])
                };
                (i, d)
            })
            .collect();
        let total: f64 = raw.iter().map(|&(_, d)| d).sum();
        min_denominator = min_denominator.min(total);
        rows.push(raw.into_iter().map(|(i, d)| (i, d / total)).collect());
    }
    Ok((PartitionOfUnity::new(cover.clone(), rows)?, min_denominator))
}

/// [`bell_formula`] plus the Lebesgue precondition and an all-pairs check of
/// the Lipschitz bound `(2k+2)(2k+3)/L`.
pub fn bell_partition(space: &FiniteMetricSpace, cover: &Cover) -> Result<BellPartition> {
    let lebesgue = cover.lebesgue_number(space).value;
    if lebesgue <= 0.0 {
        return Err(Error::Precondition(
            "Lebesgue number 0: the Lipschitz bound is vacuous".into(),
        ));
    }
    let multiplicity = cover.multiplicity();
    let (partition, min_denominator) = bell_formula(space, cover)?;
    if min_denominator < lebesgue {
        return Err(Error::Precondition(format!(
            "denominator {min_denominator} is below the Lebesgue number {lebesgue}"
        )));
    }
    let n = space.len();
    let mut observed = PairMax { value: 0.0, pair: None };
    for x in 0..n {
        for y in (x + 1)..n {
            let ratio = partition.l1_difference(x, y) / space.dist(x, y);
            if observed.pair.is_none() || ratio > observed.value {
                observed = PairMax { value: ratio, pair: Some((x, y)) };
            }
        }
    }
    Ok(BellPartition {
        partition,
        multiplicity,
        lebesgue,
        lipschitz_bound: bell_constant(multiplicity, lebesgue),
        observed,
        min_denominator,
    })
}

/// `phi_i ∘ f` on the source, subordinated to the nonempty preimages `f^{-1}(U_i)`.
#[derive(Debug, Clone)]
pub struct PullbackPartition {
    pub partition: PartitionOfUnity,
    /// `source_index[j]` is the target piece whose preimage is piece `j`.
    pub source_index: Vec<usize>,
}

pub fn pullback_partition(cert: &CoarseMapCert, target: &PartitionOfUnity) -> Result<PullbackPartition> {
    let n = cert.assignment.len();
    let mut preimages = vec![Vec::new(); target.n_pieces()];
    for x in 0..n {
        let y = cert.image(x);
        if y >= target.n_points() {
            return Err(Error::PointIndex(y, target.n_points()));
        }
        for (i, piece) in target.cover().pieces().iter().enumerate() {
            if piece.binary_search(&y).is_ok() {
                preimages[i].push(x);
            }
        }
    }
    let mut renumber = vec![None; target.n_pieces()];
    let mut source_index = Vec::new();
    let mut pieces = Vec::new();
    for (i, pre) in preimages.into_iter().enumerate() {
        if !pre.is_empty() {
            renumber[i] = Some(source_index.len());
            source_index.push(i);
            pieces.push(pre);
        }
    }
    let rows = (0..n)
        .map(|x| {
            target
                .at(cert.image(x))
                .iter()
                .filter_map(|&(i, v)| renumber[i].map(|j| (j, v)))
                .collect()
        })
        .collect();
    let cover = Cover::with_len(n, pieces, None)?;
    Ok(PullbackPartition { partition: PartitionOfUnity::new(cover, rows)?, source_index })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::check_coarse_map;

    fn p5_bell() -> (FiniteMetricSpace, BellPartition) {
        let s = FiniteMetricSpace::z_interval(0, 4).unwrap();
        // {0,1,2},{2,3,4} has Lebesgue number 0, so use the realized-grid
        // formula directly through a cover that passes the precondition
        let c = Cover::new(&s, vec![vec![0, 1, 2], vec![2, 3, 4]], None).unwrap();
        assert!(bell_partition(&s, &c).is_err());
        let c = Cover::new(&s, vec![vec![0, 1, 2, 3], vec![1, 2, 3, 4]], None).unwrap();
        let b = bell_partition(&s, &c).unwrap();
        (s, b)
    }

    #[test]
    fn whole_space_partition_is_constant() {
        let s = FiniteMetricSpace::cycle(7).unwrap();
        let b = bell_partition(&s, &Cover::whole(&s)).unwrap();
        for x in 0..7 {
            assert_eq!(b.partition.value(0, x), 1.0);
        }
        assert_eq!(partition_variation(&s, &b.partition, 3.0).value, 0.0);
    }

    #[test]
    fn p5_formula_values() {
        // phi_1 = d(x,{3,4}) / (d(x,{3,4}) + d(x,{0,1})), evaluated from the formula
        let s = FiniteMetricSpace::z_interval(0, 4).unwrap();
        let c = Cover::new(&s, vec![vec![0, 1, 2], vec![2, 3, 4]], None).unwrap();
        let (p, _) = bell_formula(&s, &c).unwrap();
        for x in 0..5 {
            let d_out1 = s.set_distance(&[x], &[3, 4]);
            let d_out2 = s.set_distance(&[x], &[0, 1]);
            assert!((p.value(0, x) - d_out1 / (d_out1 + d_out2)).abs() < 1e-15, "x = {x}");
        }
        assert_eq!(p.value(0, 0), 1.0);
        assert_eq!(p.value(0, 2), 0.5);
        assert_eq!(p.value(0, 4), 0.0);
        // Σ|Δφ| on adjacent pairs: (0,1)=0, (1,2)=1, (2,3)=1, (3,4)=0
        let v = partition_variation(&s, &p, 1.0);
        assert_eq!(v.value, 1.0);
        assert_eq!(v.pair, Some((1, 2)));
        assert_eq!(partition_variation(&s, &p, 0.5).value, 0.0);
    }

    #[test]
    fn bell_bound_and_denominator() {
        let (_, b) = p5_bell();
        assert_eq!(b.multiplicity, 2);
        assert_eq!(b.lebesgue, 1.0);
        assert!(b.min_denominator >= b.lebesgue);
        assert!(b.bound_holds());
    }

    #[test]
    fn bell_constant_value() {
        assert!((bell_constant(1, 100.0) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn partition_validation() {
        let s = FiniteMetricSpace::z_interval(0, 2).unwrap();
        let c = Cover::new(&s, vec![vec![0, 1], vec![1, 2]], None).unwrap();
        // not summing to one
        assert!(PartitionOfUnity::from_dense(c.clone(), &[vec![1.0, 0.4, 0.0], vec![0.0, 0.4, 1.0]]).is_err());
        // positive outside the piece
        assert!(PartitionOfUnity::from_dense(c.clone(), &[vec![1.0, 0.5, 0.5], vec![0.0, 0.5, 0.5]]).is_err());
        // out of range
        assert!(PartitionOfUnity::from_dense(c, &[vec![1.0, 1.5, 0.0], vec![0.0, -0.5, 1.0]]).is_err());
    }

    #[test]
    fn pullback_identity_and_constant() {
        let y = FiniteMetricSpace::z_interval(0, 9).unwrap();
        let c = Cover::new(&y, vec![(0..7).collect(), (3..10).collect()], None).unwrap();
        let b = bell_partition(&y, &c).unwrap();
        let id: Vec<usize> = (0..10).collect();
        let cert = check_coarse_map(&y, &y, &id, &[1.0]).unwrap();
        let pb = pullback_partition(&cert, &b.partition).unwrap();
        assert_eq!(pb.partition, b.partition);
        assert_eq!(pb.source_index, vec![0, 1]);

        let x = FiniteMetricSpace::cycle(5).unwrap();
        let cert = check_coarse_map(&x, &y, &[8; 5], &[1.0]).unwrap();
        let pb = pullback_partition(&cert, &b.partition).unwrap();
        // the preimage of piece 0 is empty and is dropped
        assert_eq!(pb.source_index, vec![1]);
        for p in 0..5 {
            assert_eq!(pb.partition.value(0, p), b.partition.value(1, 8));
        }
    }

    #[test]
    fn variation_below_discreteness_is_zero() {
        let s = FiniteMetricSpace::z_interval(0, 30).unwrap();
        let c = Cover::new(&s, vec![(0..20).collect(), (10..31).collect()], None).unwrap();
        let b = bell_partition(&s, &c).unwrap();
        assert_eq!(partition_variation(&s, &b.partition, 0.99).value, 0.0);
        assert!(partition_variation(&s, &b.partition, 1.0).value > 0.0);
    }
}
