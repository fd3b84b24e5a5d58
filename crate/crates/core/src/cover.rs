//! Cover calculus: multiplicity, Lebesgue number, separation, enlargement,
//! a finite-scale asymptotic-dimension cover search and the direct-limit cover
//! of an increasing chain of subspaces.

use crate::error::{Error, Result};
use crate::space::{FiniteMetricSpace, SpaceKind};

/// An indexed family of nonempty point sets whose union is the whole space.
#[derive(Debug, Clone, PartialEq)]
pub struct Cover {
    n_points: usize,
    pieces: Vec<Vec<usize>>,
    coloring: Option<Vec<usize>>,
}

impl Cover {
    pub fn new(
        space: &FiniteMetricSpace,
        pieces: Vec<Vec<usize>>,
        coloring: Option<Vec<usize>>,
    ) -> Result<Self> {
        Self::with_len(space.len(), pieces, coloring)
    }

    pub(crate) fn with_len(
        n_points: usize,
        pieces: Vec<Vec<usize>>,
        coloring: Option<Vec<usize>>,
    ) -> Result<Self> {
        let mut covered = vec![false; n_points];
        let mut normalized = Vec::with_capacity(pieces.len());
        for (i, mut piece) in pieces.into_iter().enumerate() {
            if piece.is_empty() {
                return Err(Error::InvalidCover(format!("piece {i} is empty")));
            }
            piece.sort_unstable();
            piece.dedup();
            for &x in &piece {
                if x >= n_points {
                    return Err(Error::PointIndex(x, n_points));
                }
                covered[x] = true;
            }
            normalized.push(piece);
        }
        if let Some(x) = covered.iter().position(|c| !c) {
            return Err(Error::InvalidCover(format!(
                "union of pieces misses point index {x}"
            )));
        }
        if let Some(colors) = &coloring {
            if colors.len() != normalized.len() {
                return Err(Error::InvalidCover(format!(
                    "coloring has {} entries for {} pieces",
                    colors.len(),
                    normalized.len()
                )));
            }
        }
        Ok(Self { n_points, pieces: normalized, coloring })
    }

    pub fn whole(space: &FiniteMetricSpace) -> Self {
        Self { n_points: space.len(), pieces: vec![(0..space.len()).collect()], coloring: None }
    }

    pub fn singletons(space: &FiniteMetricSpace) -> Self {
        Self {
            n_points: space.len(),
            pieces: (0..space.len()).map(|x| vec![x]).collect(),
            coloring: None,
        }
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn pieces(&self) -> &[Vec<usize>] {
        &self.pieces
    }

    pub fn piece(&self, i: usize) -> &[usize] {
        &self.pieces[i]
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn coloring(&self) -> Option<&[usize]> {
        self.coloring.as_deref()
    }

    pub fn contains(&self, piece: usize, x: usize) -> bool {
        self.pieces[piece].binary_search(&x).is_ok()
    }

    /// For every point, the pieces containing it (ascending).
    pub fn memberships(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_points];
        for (i, piece) in self.pieces.iter().enumerate() {
            for &x in piece {
                out[x].push(i);
            }
        }
        out
    }

    /// Maximum number of pieces through a single point.
    pub fn multiplicity(&self) -> usize {
        self.memberships().iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Maximum number of pieces meeting a common closed ball of radius `r`.
    pub fn r_multiplicity(&self, space: &FiniteMetricSpace, r: f64) -> usize {
        (0..space.len())
            .map(|x| {
                self.pieces
                    .iter()
                    .filter(|piece| piece.iter().any(|&u| space.dist(x, u) <= r))
                    .count()
            })
            .max()
            .unwrap_or(0)
    }

    fn balls_fit(&self, space: &FiniteMetricSpace, r: f64) -> bool {
        (0..space.len()).all(|x| {
            let ball = space.ball_unchecked(x, r);
            self.pieces
                .iter()
                .any(|piece| ball.iter().all(|w| piece.binary_search(w).is_ok()))
        })
    }

    /// Largest realized distance `L` such that every `B(x, L)` sits in one piece.
    pub fn lebesgue_number(&self, space: &FiniteMetricSpace) -> LebesgueReport {
        let grid = space.realized_distances();
        // ball containment is monotone in the radius, and radius 0 always fits
        let (mut lo, mut hi) = (0usize, grid.len());
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.balls_fit(space, grid[mid]) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        LebesgueReport { value: grid[lo], first_failing: grid.get(lo + 1).copied() }
    }

    /// True iff every color class is `l`-separated and colors lie in `0..=k`.
    pub fn check_kl_separated(&self, space: &FiniteMetricSpace, k: usize, l: f64) -> Result<bool> {
        let colors = self.coloring.as_ref().ok_or(Error::MissingColoring)?;
        if colors.iter().any(|&c| c > k) {
            return Ok(false);
        }
        for color in 0..=k {
            let family: Vec<&[usize]> = self
                .pieces
                .iter()
                .zip(colors)
                .filter(|(_, &c)| c == color)
                .map(|(p, _)| p.as_slice())
                .collect();
            if !is_l_separated(space, &family, l) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Replaces each piece by its closed `l`-neighborhood; coloring carried over.
    pub fn enlarge(&self, space: &FiniteMetricSpace, l: f64) -> Cover {
        Cover {
            n_points: self.n_points,
            pieces: self.pieces.iter().map(|p| space.neighborhood(p, l)).collect(),
            coloring: self.coloring.clone(),
        }
    }

    /// Largest piece diameter (the uniform bound of the cover).
    pub fn diameter_bound(&self, space: &FiniteMetricSpace) -> f64 {
        self.pieces
            .iter()
            .map(|p| {
                let mut d: f64 = 0.0;
                for &a in p {
                    for &b in p {
                        d = d.max(space.dist(a, b));
                    }
                }
                d
            })
            .fold(0.0, f64::max)
    }

    pub fn with_coloring(mut self, coloring: Option<Vec<usize>>) -> Result<Self> {
        if let Some(c) = &coloring {
            if c.len() != self.pieces.len() {
                return Err(Error::InvalidCover("coloring length mismatch".into()));
            }
        }
        self.coloring = coloring;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LebesgueReport {
    pub value: f64,
    /// Smallest realized radius whose balls do not all fit (diagnostic).
    pub first_failing: Option<f64>,
}

/// Pairwise set distances strictly exceed `l`.
pub fn is_l_separated<P: AsRef<[usize]>>(space: &FiniteMetricSpace, family: &[P], l: f64) -> bool {
    for (i, a) in family.iter().enumerate() {
        for b in &family[i + 1..] {
            if space.set_distance(a.as_ref(), b.as_ref()) <= l {
                return false;
            }
        }
    }
    true
}

/// Search limits for [`asdim_cover_search_with`].
#[derive(Debug, Clone, Copy)]
pub struct SearchBudget {
    /// Number of net spacings tried by the generic strategy.
    pub max_attempts: usize,
    /// Reject candidates whose largest piece is wider than this.
    pub max_piece_diameter: Option<f64>,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self { max_attempts: 24, max_piece_diameter: None }
    }
}

#[derive(Debug, Clone)]
pub struct AsdimCover {
    pub cover: Cover,
    pub lebesgue: f64,
    pub multiplicity: usize,
    pub diameter_bound: f64,
    pub strategy: &'static str,
}

pub fn asdim_cover_search(space: &FiniteMetricSpace, l: f64, k_max: usize) -> Result<AsdimCover> {
    asdim_cover_search_with(space, l, k_max, SearchBudget::default())
}

/// Looks for a cover with Lebesgue number `>= l` and multiplicity `<= k_max + 1`.
///
/// Failure means the budget ran out; it says nothing about the asymptotic
/// dimension of the space.
pub fn asdim_cover_search_with(
    space: &FiniteMetricSpace,
    l: f64,
    k_max: usize,
    budget: SearchBudget,
) -> Result<AsdimCover> {
    if !(l >= 0.0) {
        return Err(Error::Precondition(format!("scale L = {l} must be >= 0")));
    }
    let accept = |cover: Cover, strategy: &'static str| -> Option<AsdimCover> {
        let lebesgue = cover.lebesgue_number(space).value;
        let multiplicity = cover.multiplicity();
        let diameter_bound = cover.diameter_bound(space);
        let ok = lebesgue >= l
            && multiplicity <= k_max + 1
            && budget.max_piece_diameter.is_none_or(|m| diameter_bound <= m);
        ok.then_some(AsdimCover { cover, lebesgue, multiplicity, diameter_bound, strategy })
    };
    if l == 0.0 {
        if let Some(found) = accept(Cover::singletons(space), "singletons") {
            return Ok(found);
        }
    }
    if l >= space.diameter() {
        if let Some(found) = accept(Cover::whole(space), "whole space") {
            return Ok(found);
        }
    }
    let structured = match space.kind() {
        SpaceKind::ZInterval { .. } if k_max >= 1 => Some(line_blocks(space.len(), l, false)),
        SpaceKind::Cycle { n } if k_max >= 1 => Some(line_blocks(*n, l, true)),
        SpaceKind::Grid { dims } if dims.len() == 1 && k_max >= 1 => {
            Some(line_blocks(dims[0], l, false))
        }
        SpaceKind::Grid { dims } if dims.len() == 2 && k_max >= 2 => {
            Some(brick_blocks(dims[0], dims[1], l))
        }
        _ => None,
    };
    if let Some(cores) = structured {
        let cover = Cover::with_len(space.len(), cores, None)?.enlarge(space, l);
        if let Some(found) = accept(cover, "shifted blocks") {
            return Ok(found);
        }
    }
    let floor = (2.0 * l).max(space.uniform_discreteness().min(space.diameter()));
    let mut spacing = floor.max(f64::MIN_POSITIVE);
    for _ in 0..budget.max_attempts {
        let cover = voronoi_cells(space, spacing).enlarge(space, l);
        let single = cover.len() == 1;
        if let Some(found) = accept(cover, "net voronoi") {
            return Ok(found);
        }
        if single {
            break;
        }
        spacing *= 1.5;
    }
    Err(Error::SearchBudget { attempts: budget.max_attempts })
}

/// Near-equal blocks of length at least `4L` along a line or a cycle of `n` points.
fn line_blocks(n: usize, l: f64, cyclic: bool) -> Vec<Vec<usize>> {
    let period = ((4.0 * l).ceil() as usize).max(1);
    let m = (n / period).max(1);
    if cyclic && m == 1 {
        return vec![(0..n).collect()];
    }
    (0..m).map(|j| (j * n / m..(j + 1) * n / m).collect()).collect()
}

/// Brick tiling of a `w x h` grid (row-major ids): odd rows shifted by half a brick.
fn brick_blocks(w: usize, h: usize, l: f64) -> Vec<Vec<usize>> {
    let half = (2.0 * l).floor() as usize + 1;
    let period = 2 * half;
    let clamp = |len: usize, shift: usize| -> usize {
        let mut last = (len - 1 + shift) / period;
        if last >= 1 && (len + shift) - last * period < half {
            last -= 1;
        }
        last
    };
    let last_row = clamp(h, 0);
    let mut cells: std::collections::BTreeMap<(usize, usize), Vec<usize>> = Default::default();
    for a in 0..w {
        for b in 0..h {
            // coordinates: a = first (slow) index, b = second (fast) index
            let row = (b / period).min(last_row);
            let shift = if row % 2 == 1 { half } else { 0 };
            let col = ((a + shift) / period).min(clamp(w, shift));
            cells.entry((row, col)).or_default().push(a * h + b);
        }
    }
    cells.into_values().collect()
}

/// Cells of a greedy `spacing`-net; each point joins its nearest net point.
fn voronoi_cells(space: &FiniteMetricSpace, spacing: f64) -> Cover {
    let mut net: Vec<usize> = Vec::new();
    for x in 0..space.len() {
        if net.iter().all(|&c| space.dist(x, c) > spacing) {
            net.push(x);
        }
    }
    let mut cells = vec![Vec::new(); net.len()];
    for x in 0..space.len() {
        let mut best = 0;
        for (j, &c) in net.iter().enumerate() {
            if space.dist(x, c) < space.dist(x, net[best]) {
                best = j;
            }
        }
        cells[best].push(x);
    }
    Cover { n_points: space.len(), pieces: cells, coloring: None }
}

/// Increasing chain `X_1 ⊆ X_2 ⊆ ... ⊆ X_N = ambient` of subsets of one space.
#[derive(Debug, Clone)]
pub struct ChainOfSubspaces {
    levels: Vec<Vec<usize>>,
}

impl ChainOfSubspaces {
    pub fn new(ambient: &FiniteMetricSpace, levels: Vec<Vec<usize>>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Precondition(
                "chain too short: no levels to select a subsequence from".into(),
            ));
        }
        let mut normalized: Vec<Vec<usize>> = Vec::with_capacity(levels.len());
        for (n, mut level) in levels.into_iter().enumerate() {
            level.sort_unstable();
            level.dedup();
            if level.is_empty() {
                return Err(Error::EmptySet(format!("chain level {n}")));
            }
            for &x in &level {
                ambient.check_point(x)?;
            }
            if let Some(prev) = normalized.last() {
                if let Some(&x) = prev.iter().find(|x| level.binary_search(x).is_err()) {
                    return Err(Error::Precondition(format!(
                        "chain not increasing: point {} of level {} missing from level {n}",
                        ambient.id(x),
                        n - 1
                    )));
                }
            }
            normalized.push(level);
        }
        if normalized.last().map_or(0, Vec::len) != ambient.len() {
            return Err(Error::Precondition(
                "last chain level must be the whole ambient space (truncation)".into(),
            ));
        }
        Ok(Self { levels: normalized })
    }

    pub fn levels(&self) -> &[Vec<usize>] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct DirectLimitCover {
    /// Selected 0-based level indices `n_1 < n_2 < ...`.
    pub subsequence: Vec<usize>,
    /// Piece 0 is the `L`-neighborhood of the first selected level, piece `k`
    /// the `L`-neighborhood of the `k`-th shell.
    pub cover: Cover,
    /// Pieces meeting the outermost shell of the truncated chain.
    pub truncation_affected: Vec<bool>,
}

/// Greedy subsequence with `N_{3L}(X_{n_k}) ⊆ X_{n_{k+1}}` and the shell cover.
pub fn direct_limit_cover(
    ambient: &FiniteMetricSpace,
    chain: &ChainOfSubspaces,
    l: f64,
) -> Result<DirectLimitCover> {
    if !(l > 0.0) {
        return Err(Error::Precondition(format!("L = {l} must be > 0")));
    }
    let levels = chain.levels();
    let mut subsequence = vec![0];
    loop {
        let cur = subsequence[subsequence.len() - 1];
        if levels[cur].len() == ambient.len() {
            break;
        }
        let reach = ambient.neighborhood(&levels[cur], 3.0 * l);
        let next = (cur + 1..levels.len()).find(|&n| {
            levels[n].len() > levels[cur].len()
                && reach.iter().all(|x| levels[n].binary_search(x).is_ok())
        });
        match next {
            Some(n) => subsequence.push(n),
            None => {
                return Err(Error::Precondition(format!(
                    "chain too short: no level after {cur} contains the {}-neighborhood",
                    3.0 * l
                )))
            }
        }
    }
    let mut pieces = vec![ambient.neighborhood(&levels[subsequence[0]], l)];
    for w in subsequence.windows(2) {
        let shell = set_difference(&levels[w[1]], &levels[w[0]]);
        pieces.push(ambient.neighborhood(&shell, l));
    }
    let outer = if levels.len() >= 2 {
        set_difference(&levels[levels.len() - 1], &levels[levels.len() - 2])
    } else {
        Vec::new()
    };
    let truncation_affected = pieces
        .iter()
        .map(|p| p.iter().any(|x| outer.binary_search(x).is_ok()))
        .collect();
    let cover = Cover::with_len(ambient.len(), pieces, None)?;
    Ok(DirectLimitCover { subsequence, cover, truncation_affected })
}

/// `N_L(X_{n_k}) ∩ N_L(X_{n_{k+2}} \ X_{n_{k+1}}) = ∅` for every admissible `k`.
pub fn direct_limit_disjointness(
    ambient: &FiniteMetricSpace,
    chain: &ChainOfSubspaces,
    subsequence: &[usize],
    l: f64,
) -> bool {
    let levels = chain.levels();
    subsequence.windows(3).all(|w| {
        let inner = ambient.neighborhood(&levels[w[0]], l);
        let shell = set_difference(&levels[w[2]], &levels[w[1]]);
        let outer = ambient.neighborhood(&shell, l);
        inner.iter().all(|x| outer.binary_search(x).is_err())
    })
}

fn set_difference(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().copied().filter(|x| b.binary_search(x).is_err()).collect()
}
