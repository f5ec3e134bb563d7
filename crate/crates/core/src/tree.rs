//! Data-adaptive tree plans.
//!
//! A [`TreePlan`] holds, for every analysis level (finest first), the
//! permutation applied to the approximation coefficients before filtering.
//! For the Haar filter with pairing permutations this is a complete binary
//! tree; for longer filters each coarse point mixes more than two finer
//! points and the structure is a layered graph, still called a tree here.

use std::collections::hash_map::DefaultHasher;
use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, RngCore};
use rayon::prelude::*;

use crate::dwt::{lowpass_into, Workspace};
use crate::error::{Error, Result};
use crate::filters::{filter_set, WaveletFilterSet};
use crate::ordering::{
    greedy_path_with, pair_points_with, path_smoothness, randomized_path_with, FeatureMatrix, Metric, PathOrder,
    SearchStrategy,
};

const PLAN_MAGIC: &str = "gtbwt-plan";
const PLAN_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TreePlan {
    filter_name: String,
    leaf_count: usize,
    levels: Vec<PathOrder>,
    coarsest_len: usize,
    id: u64,
    points: Option<Vec<FeatureMatrix>>,
}

/// How each level's path is chosen.
pub enum PathPolicy<'a> {
    /// Greedy nearest-neighbour path starting at `start % len` on every level.
    Greedy { start: usize },
    /// Randomized two-candidate path; the generator advances across levels.
    Randomized { epsilon: f64, rng: &'a mut dyn RngCore },
}

/// Construction knobs for [`build_generalized_tree`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TreeConfig {
    /// Upper bound on the number of analysis levels.
    pub max_depth: Option<usize>,
    /// A level is analyzed only while its length is at least this many
    /// samples. Defaults to the filter length; smaller values have no
    /// effect because shorter levels would not shrink.
    pub min_length: Option<usize>,
    pub search: SearchStrategy,
    /// Retain the feature points of every level in the plan.
    pub keep_points: bool,
}

impl TreeConfig {
    fn analyzes(&self, len: usize, fs: &WaveletFilterSet, depth: usize) -> bool {
        let min_len = self.min_length.unwrap_or(0).max(fs.len()).max(2);
        len >= min_len && self.max_depth.map_or(true, |d| depth < d)
    }
}

impl TreePlan {
    /// Assembles a plan from finest-first permutations, checking the length
    /// law `next = floor((len + fl - 1) / 2)` at every level.
    pub fn from_levels(fs: &WaveletFilterSet, leaf_count: usize, levels: Vec<PathOrder>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::PlanMismatch("a plan needs at least one level".into()));
        }
        let mut expected = leaf_count;
        for (i, perm) in levels.iter().enumerate() {
            if perm.len() != expected {
                return Err(Error::PlanMismatch(format!(
                    "level {i} has {} entries, the length law gives {expected}",
                    perm.len()
                )));
            }
            if expected < 2 {
                return Err(Error::PlanMismatch(format!("level {i} is too short to analyze")));
            }
            expected = fs.output_len(expected);
        }
        let mut h = DefaultHasher::new();
        fs.name().hash(&mut h);
        leaf_count.hash(&mut h);
        levels.hash(&mut h);
        Ok(Self {
            filter_name: fs.name().to_string(),
            leaf_count,
            levels,
            coarsest_len: expected,
            id: h.finish(),
            points: None,
        })
    }

    /// The plan of the ordinary (non-adaptive) 1D transform: identity
    /// permutations, same stop rule as the adaptive builders.
    pub fn identity(leaf_count: usize, fs: &WaveletFilterSet, cfg: &TreeConfig) -> Result<Self> {
        let mut levels = Vec::new();
        let mut len = leaf_count;
        while cfg.analyzes(len, fs, levels.len()) {
            levels.push(PathOrder::identity(len));
            len = fs.output_len(len);
        }
        if levels.is_empty() {
            return Err(Error::Shape(format!("{leaf_count} samples are too few for one {} level", fs.name())));
        }
        Self::from_levels(fs, leaf_count, levels)
    }

    pub fn filter_name(&self) -> &str {
        &self.filter_name
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    /// Number of analysis levels (detail bands).
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Permutations, finest level first.
    pub fn levels(&self) -> &[PathOrder] {
        &self.levels
    }

    /// Length of the final approximation band.
    pub fn coarsest_len(&self) -> usize {
        self.coarsest_len
    }

    /// Lengths of every tree level, finest first, ending with the
    /// approximation band.
    pub fn level_lengths(&self) -> Vec<usize> {
        self.levels.iter().map(PathOrder::len).chain([self.coarsest_len]).collect()
    }

    /// Feature points of every level (finest first, coarsest last) when the
    /// builder was asked to keep them.
    pub fn points(&self) -> Option<&[FeatureMatrix]> {
        self.points.as_deref()
    }

    pub fn drop_points(&mut self) {
        self.points = None;
    }

    /// Identifier derived from the filter, size and permutations; used to
    /// bind coefficients to the plan that produced them.
    pub fn fingerprint(&self) -> u64 {
        self.id
    }

    /// Path smoothness of every analyzed level under `metric`, when node
    /// points were retained.
    pub fn smoothness<M: Metric>(&self, metric: &M) -> Option<Result<Vec<f64>>> {
        let points = self.points.as_ref()?;
        Some(self.levels.iter().zip(points).map(|(perm, pts)| path_smoothness(pts, perm, metric)).collect())
    }

    /// For plans where every level halves exactly (Haar on a power of two),
    /// the order in which each level's points appear when the tree is read
    /// left to right. Entry 0 is the leaf order.
    pub fn composite_orders(&self) -> Result<Vec<Vec<usize>>> {
        let lengths = self.level_lengths();
        if lengths.windows(2).any(|w| w[0] != 2 * w[1]) {
            return Err(Error::Shape(format!("composite order needs exactly halving levels, lengths are {lengths:?}")));
        }
        let mut orders = vec![Vec::new(); self.levels.len()];
        let mut coarse: Vec<usize> = (0..self.coarsest_len).collect();
        for (i, perm) in self.levels.iter().enumerate().rev() {
            let p = perm.as_slice();
            let fine: Vec<usize> = coarse.iter().flat_map(|&c| [p[2 * c], p[2 * c + 1]]).collect();
            orders[i] = fine.clone();
            coarse = fine;
        }
        Ok(orders)
    }

    /// Leaf order of a binary plan; see [`composite_orders`](Self::composite_orders).
    pub fn leaf_order(&self) -> Result<PathOrder> {
        let orders = self.composite_orders()?;
        PathOrder::new(orders.into_iter().next().unwrap_or_default())
    }

    /// Writes the versioned text form: a header, then each level's length
    /// and its 1-based permutation.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{PLAN_MAGIC} {PLAN_VERSION}")?;
        writeln!(w, "filter {}", self.filter_name)?;
        writeln!(w, "leaves {}", self.leaf_count)?;
        writeln!(w, "depth {}", self.levels.len())?;
        let mut line = String::new();
        for perm in &self.levels {
            writeln!(w, "level {}", perm.len())?;
            line.clear();
            for (k, i) in perm.as_slice().iter().enumerate() {
                if k > 0 {
                    line.push(' ');
                }
                write!(line, "{}", i + 1).expect("writing to a String");
            }
            writeln!(w, "{line}")?;
        }
        writeln!(w, "end")?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = |what: &str| -> Result<String> {
            match lines.next() {
                Some(line) => Ok(line?),
                None => Err(Error::PlanFormat(format!("unexpected end of file, expected {what}"))),
            }
        };
        let header = next("header")?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(PLAN_MAGIC) {
            return Err(Error::PlanFormat("missing plan header".into()));
        }
        let version: u32 = parse_field(parts.next(), "version")?;
        if version != PLAN_VERSION {
            return Err(Error::PlanFormat(format!("unsupported plan version {version}")));
        }
        let filter = keyed(&next("filter")?, "filter")?.to_string();
        let leaves: usize = parse_field(Some(keyed(&next("leaves")?, "leaves")?), "leaves")?;
        let depth: usize = parse_field(Some(keyed(&next("depth")?, "depth")?), "depth")?;
        let mut levels = Vec::with_capacity(depth);
        for i in 0..depth {
            let len: usize = parse_field(Some(keyed(&next("level")?, "level")?), "level length")?;
            let body = next("permutation")?;
            let idx: Vec<usize> =
                body.split_whitespace().map(|t| parse_field(Some(t), "permutation index")).collect::<Result<_>>()?;
            if idx.len() != len {
                return Err(Error::PlanFormat(format!("level {i} declares {len} entries but lists {}", idx.len())));
            }
            levels.push(PathOrder::from_one_based(&idx).map_err(|e| Error::PlanFormat(format!("level {i}: {e}")))?);
        }
        if next("end marker")?.trim() != "end" {
            return Err(Error::PlanFormat("missing end marker".into()));
        }
        let fs = filter_set(&filter)?;
        Self::from_levels(&fs, leaves, levels).map_err(|e| Error::PlanFormat(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

fn keyed<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    let mut parts = line.splitn(2, char::is_whitespace);
    match (parts.next(), parts.next()) {
        (Some(k), Some(v)) if k == key => Ok(v.trim()),
        _ => Err(Error::PlanFormat(format!("expected `{key} <value>`, found `{line}`"))),
    }
}

fn parse_field<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> Result<T> {
    tok.and_then(|t| t.trim().parse().ok()).ok_or_else(|| Error::PlanFormat(format!("bad or missing {what}")))
}

/// Applies the lowpass branch to each feature row of the permuted points.
fn coarsen(points: &FeatureMatrix, perm: &PathOrder, fs: &WaveletFilterSet) -> Result<FeatureMatrix> {
    let dim = points.dim();
    let out_len = fs.output_len(points.count());
    let rows: Vec<Vec<f64>> = (0..dim)
        .into_par_iter()
        .map_init(Workspace::new, |ws, r| {
            let row: Vec<f64> = perm.as_slice().iter().map(|&j| points.point(j)[r]).collect();
            let mut out = vec![0.0; out_len];
            lowpass_into(&row, fs, &mut out, ws).map(|_| out)
        })
        .collect::<Result<_>>()?;
    let mut data = vec![0.0; out_len * dim];
    for (r, row) in rows.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            data[k * dim + r] = v;
        }
    }
    FeatureMatrix::new(dim, data)
}

/// Builds a generalized tree: on every level the points are ordered along a
/// short path, then filtered with the analysis lowpass and decimated to give
/// the next level's points. Analysis continues while a level has at least
/// `cfg.min_length` (default: filter length) points.
pub fn build_generalized_tree<M: Metric>(
    points: &FeatureMatrix,
    fs: &WaveletFilterSet,
    metric: &M,
    mut policy: PathPolicy<'_>,
    cfg: &TreeConfig,
) -> Result<TreePlan> {
    if points.count() < 2 {
        return Err(Error::Shape(format!("need at least 2 points, got {}", points.count())));
    }
    let mut levels = Vec::new();
    let mut kept = Vec::new();
    let mut current = points.clone();
    while cfg.analyzes(current.count(), fs, levels.len()) {
        let perm = match &mut policy {
            PathPolicy::Greedy { start } => greedy_path_with(&current, *start % current.count(), metric, cfg.search)?,
            PathPolicy::Randomized { epsilon, rng } => {
                randomized_path_with(&current, metric, *epsilon, &mut **rng, cfg.search)?
            }
        };
        let coarse = coarsen(&current, &perm, fs)?;
        levels.push(perm);
        if cfg.keep_points {
            kept.push(std::mem::replace(&mut current, coarse));
        } else {
            current = coarse;
        }
    }
    if levels.is_empty() {
        return Err(Error::Shape(format!("{} points are too few for one {} level", points.count(), fs.name())));
    }
    let mut plan = TreePlan::from_levels(fs, points.count(), levels)?;
    if cfg.keep_points {
        kept.push(current);
        plan.points = Some(kept);
    }
    Ok(plan)
}

/// Complete binary tree by repeated random pairing (Haar only).
///
/// Each pair `(c_i, c_j)` is replaced by `(c_i + c_j) / sqrt 2`. The point
/// count must be a power of two; node points are always retained.
pub fn build_binary_tree<M: Metric, R: Rng + ?Sized>(
    points: &FeatureMatrix,
    metric: &M,
    rng: &mut R,
) -> Result<TreePlan> {
    build_binary_tree_with(points, metric, |unclaimed| rng.random_range(0..unclaimed.len()))
}

/// [`build_binary_tree`] with the first member of every pair chosen by
/// `pick` (see [`pair_points_with`]).
pub fn build_binary_tree_with<M: Metric>(
    points: &FeatureMatrix,
    metric: &M,
    mut pick: impl FnMut(&[usize]) -> usize,
) -> Result<TreePlan> {
    let n = points.count();
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::Shape(format!("binary trees need a power-of-two point count >= 2, got {n}")));
    }
    let fs = filter_set("db1")?;
    let mut levels = Vec::new();
    let mut kept = Vec::new();
    let mut current = points.clone();
    while current.count() >= 2 {
        let perm = pair_points_with(&current, metric, &mut pick)?;
        let dim = current.dim();
        let mut data = Vec::with_capacity(current.count() / 2 * dim);
        for pair in perm.as_slice().chunks_exact(2) {
            let (a, b) = (current.point(pair[0]), current.point(pair[1]));
            data.extend(a.iter().zip(b).map(|(x, y)| (x + y) * FRAC_1_SQRT_2));
        }
        let coarse = FeatureMatrix::new(dim, data)?;
        levels.push(perm);
        kept.push(std::mem::replace(&mut current, coarse));
    }
    kept.push(current);
    let mut plan = TreePlan::from_levels(&fs, n, levels)?;
    plan.points = Some(kept);
    Ok(plan)
}
