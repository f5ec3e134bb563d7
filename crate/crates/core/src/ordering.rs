//! Point sets, distances and the path orderings that drive the transform.
//!
//! All orderings here are 0-based permutations. Ties in distance are broken
//! by the lowest point index, which makes every path reproducible.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Pool sizes above this are scanned in parallel chunks.
const PARALLEL_SCAN_MIN: usize = 1 << 14;
const PARALLEL_CHUNK: usize = 1 << 12;

/// Default limit above which a materialized distance matrix is never built.
pub const DEFAULT_MATRIX_CAP: usize = 4096;

/// `m` points of dimension `n`, stored point-major (each point contiguous).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    dim: usize,
    count: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    /// Wraps point-major data: point `j` is `data[j * dim .. (j + 1) * dim]`.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("feature dimension must be positive".into()));
        }
        if data.is_empty() || data.len() % dim != 0 {
            return Err(Error::Shape(format!(
                "{} values do not form a whole, non-empty set of {dim}-dimensional points",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite feature value at {bad}")));
        }
        Ok(Self { dim, count: data.len() / dim, data })
    }

    /// One point per entry; all entries must share a length.
    pub fn from_points<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let dim = points.first().map(|p| p.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(dim * points.len());
        for (j, p) in points.iter().enumerate() {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(Error::Dimension(format!("point {j} has dimension {}, expected {dim}", p.len())));
            }
            data.extend_from_slice(p);
        }
        Self::new(dim, data)
    }

    /// Scalar points, one per value.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(1, values.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Feature `r` of every point, in point order.
    pub fn row(&self, r: usize) -> Vec<f64> {
        self.points().map(|p| p[r]).collect()
    }
}

/// A visiting order: `indices[k]` is the point placed at position `k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PathOrder(Vec<usize>);

impl PathOrder {
    /// Validates that `indices` is a permutation of `0..indices.len()`.
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; indices.len()];
        for (pos, &i) in indices.iter().enumerate() {
            if i >= indices.len() {
                return Err(Error::InvalidPermutation(format!(
                    "index {i} at position {pos} is out of range for length {}",
                    indices.len()
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidPermutation(format!("index {i} appears twice")));
            }
        }
        Ok(Self(indices))
    }

    /// Builds from 1-based indices, as used in plan files.
    pub fn from_one_based(indices: &[usize]) -> Result<Self> {
        let zero: Option<Vec<usize>> = indices.iter().map(|&i| i.checked_sub(1)).collect();
        let zero = zero.ok_or_else(|| Error::InvalidPermutation("index 0 in 1-based order".into()))?;
        Self::new(zero)
    }

    pub fn identity(len: usize) -> Self {
        Self((0..len).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.0.iter().map(|i| i + 1).collect()
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (pos, &i) in self.0.iter().enumerate() {
            inv[i] = pos;
        }
        Self(inv)
    }

    /// `out[k] = values[self[k]]`.
    pub fn apply<T: Copy>(&self, values: &[T]) -> Vec<T> {
        self.0.iter().map(|&i| values[i]).collect()
    }

    /// Undoes [`apply`](Self::apply): `out[self[k]] = values[k]`.
    pub fn scatter<T: Copy + Default>(&self, values: &[T]) -> Vec<T> {
        let mut out = vec![T::default(); values.len()];
        for (&i, &v) in self.0.iter().zip(values) {
            out[i] = v;
        }
        out
    }
}

/// A dissimilarity between feature points.
pub trait Metric: Sync {
    fn distance(&self, u: &[f64], v: &[f64]) -> f64;

    /// Either the exact distance, or some value greater than `bound` once
    /// the distance is known to exceed it. Used to cut scans short.
    #[inline]
    fn distance_bounded(&self, u: &[f64], v: &[f64], bound: f64) -> f64 {
        let _ = bound;
        self.distance(u, v)
    }

    /// True for squared Euclidean distance, where the squared distance
    /// between orthogonal projections of two points is a lower bound on
    /// their distance. Searches use this to prune.
    fn bounded_by_projections(&self) -> bool {
        false
    }
}

/// `w(u, v) = |u - v|^2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SquaredEuclidean;

impl Metric for SquaredEuclidean {
    #[inline]
    fn distance(&self, u: &[f64], v: &[f64]) -> f64 {
        sq_dist(u, v)
    }

    #[inline]
    fn distance_bounded(&self, u: &[f64], v: &[f64], bound: f64) -> f64 {
        sq_dist_bounded(u, v, bound)
    }

    fn bounded_by_projections(&self) -> bool {
        true
    }
}

/// Four independent accumulators; summation order is fixed, so results are
/// identical whether or not the loop is vectorized.
#[inline]
fn sq_dist(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let mut acc = [0.0f64; 4];
    let uc = u.chunks_exact(4);
    let vc = v.chunks_exact(4);
    let (ur, vr) = (uc.remainder(), vc.remainder());
    for (a, b) in uc.zip(vc) {
        for l in 0..4 {
            let t = a[l] - b[l];
            acc[l] += t * t;
        }
    }
    let mut tail = 0.0;
    for (a, b) in ur.iter().zip(vr) {
        let t = a - b;
        tail += t * t;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// [`sq_dist`] with an early exit. Accumulators only grow and rounding is
/// monotone, so a partial sum above `bound` proves the full one is too; a
/// completed sum is bit-identical to [`sq_dist`].
#[inline]
fn sq_dist_bounded(u: &[f64], v: &[f64], bound: f64) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let mut acc = [0.0f64; 4];
    let uc = u.chunks_exact(4);
    let vc = v.chunks_exact(4);
    let (ur, vr) = (uc.remainder(), vc.remainder());
    for (k, (a, b)) in uc.zip(vc).enumerate() {
        for l in 0..4 {
            let t = a[l] - b[l];
            acc[l] += t * t;
        }
        if k % 4 == 3 {
            let partial = (acc[0] + acc[1]) + (acc[2] + acc[3]);
            if partial > bound {
                return partial;
            }
        }
    }
    let mut tail = 0.0;
    for (a, b) in ur.iter().zip(vr) {
        let t = a - b;
        tail += t * t;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Sum of squared coordinate differences.
pub fn squared_euclidean(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dimension(format!("vectors of length {} and {}", u.len(), v.len())));
    }
    Ok(sq_dist(u, v))
}

/// How nearest-neighbour queries are answered while building a path.
/// Every strategy returns the same paths bit for bit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum SearchStrategy {
    /// Scan all unvisited points on demand, in parallel for large pools.
    /// Memory is linear in the point count.
    Streaming,
    /// Visit unvisited points outward from the query along their leading
    /// principal axis and stop once that gap alone rules out the rest;
    /// candidates are screened in single precision with rigorous error
    /// bounds before the exact distance is taken. Falls back to
    /// `Streaming` for metrics without projection bounds. Linear memory,
    /// sequential.
    #[default]
    Projected,
    /// Precompute the full distance matrix when the point count is at most
    /// `cap`; fall back to streaming otherwise. Both give identical paths.
    Materialized { cap: usize },
}

/// Total order used for every nearest-neighbour decision.
#[inline]
fn closer(d: f64, idx: usize, best: (f64, usize)) -> bool {
    d < best.0 || (d == best.0 && idx < best.1)
}

#[derive(Debug, Clone, Copy)]
struct TopTwo {
    first: (f64, usize),
    second: (f64, usize),
}

impl TopTwo {
    const EMPTY: Self = Self { first: (f64::INFINITY, usize::MAX), second: (f64::INFINITY, usize::MAX) };

    #[inline]
    fn offer(&mut self, d: f64, idx: usize) {
        if closer(d, idx, self.first) {
            self.second = self.first;
            self.first = (d, idx);
        } else if closer(d, idx, self.second) {
            self.second = (d, idx);
        }
    }

    fn merge(mut self, other: Self) -> Self {
        for c in [other.first, other.second] {
            if c.1 != usize::MAX {
                self.offer(c.0, c.1);
            }
        }
        self
    }

    fn nearest(&self) -> Option<(f64, usize)> {
        (self.first.1 != usize::MAX).then_some(self.first)
    }

    fn runner_up(&self) -> Option<(f64, usize)> {
        (self.second.1 != usize::MAX).then_some(self.second)
    }
}

/// The not-yet-visited points, queried for the closest one(s) to a point.
trait Candidates {
    fn remaining(&self) -> usize;
    fn top_two(&self, from: usize) -> TopTwo;
    fn nearest(&self, from: usize) -> Option<(f64, usize)>;
    fn remove(&mut self, idx: usize);
}

/// Keeps a compact copy of the unvisited points so the scan is one linear
/// pass over contiguous memory.
struct StreamingPool<'a, M: Metric> {
    points: &'a FeatureMatrix,
    metric: &'a M,
    ids: Vec<usize>,
    slot_of: Vec<usize>,
    data: Vec<f64>,
}

impl<'a, M: Metric> StreamingPool<'a, M> {
    fn new(points: &'a FeatureMatrix, metric: &'a M) -> Self {
        Self {
            points,
            metric,
            ids: (0..points.count()).collect(),
            slot_of: (0..points.count()).collect(),
            data: points.as_slice().to_vec(),
        }
    }

    fn scan(&self, from: usize) -> TopTwo {
        let dim = self.points.dim();
        let q = self.points.point(from);
        let scan_chunk = |ids: &[usize], data: &[f64]| {
            let mut top = TopTwo::EMPTY;
            for (&id, p) in ids.iter().zip(data.chunks_exact(dim)) {
                top.offer(self.metric.distance_bounded(q, p, top.second.0), id);
            }
            top
        };
        if self.ids.len() < PARALLEL_SCAN_MIN {
            return scan_chunk(&self.ids, &self.data);
        }
        self.ids
            .par_chunks(PARALLEL_CHUNK)
            .zip(self.data.par_chunks(PARALLEL_CHUNK * dim))
            .map(|(ids, data)| scan_chunk(ids, data))
            .reduce(|| TopTwo::EMPTY, TopTwo::merge)
    }
}

impl<M: Metric> Candidates for StreamingPool<'_, M> {
    fn remaining(&self) -> usize {
        self.ids.len()
    }

    fn top_two(&self, from: usize) -> TopTwo {
        self.scan(from)
    }

    fn nearest(&self, from: usize) -> Option<(f64, usize)> {
        self.scan(from).nearest()
    }

    fn remove(&mut self, idx: usize) {
        let dim = self.points.dim();
        let slot = self.slot_of[idx];
        let last = self.ids.len() - 1;
        if slot != last {
            let moved = self.ids[last];
            self.ids[slot] = moved;
            self.slot_of[moved] = slot;
            self.data.copy_within(last * dim..(last + 1) * dim, slot * dim);
        }
        self.ids.pop();
        self.data.truncate(last * dim);
    }
}

const NIL: usize = usize::MAX;

/// Single-precision screening is skipped for coordinates this large.
const SCREEN_MAX_ABS: f64 = 1e6;
/// Points used to estimate the principal axes.
const PCA_SAMPLES: usize = 4096;

/// Leading coordinates kept in their own cache line per point.
const HEAD: usize = 16;
/// Live slots visited on one side before the nearer side is re-chosen.
const SCAN_RUN: usize = 8;

struct ScanState {
    top: TopTwo,
    bound: f64,
    reach: f64,
    bound32: Option<f32>,
}

#[derive(Debug, Clone, Copy)]
#[repr(C, align(64))]
struct Head([f32; HEAD]);

#[inline]
fn fold8(acc: &[f32; 8]) -> f32 {
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))
}

#[inline]
fn add_sq8(acc: &mut [f32; 8], a: &[f32], b: &[f32]) {
    let a: &[f32; 8] = a.try_into().expect("chunk of 8");
    let b: &[f32; 8] = b.try_into().expect("chunk of 8");
    for l in 0..8 {
        let t = a[l] - b[l];
        acc[l] += t * t;
    }
}

/// Whether the single-precision squared distance exceeds `bound`, checked
/// after 8 and 16 coordinates and then every 16. Fixed summation order.
#[inline]
fn exceeds_f32(qh: &Head, ph: &Head, qt: &[f32], pt: &[f32], bound: f32) -> bool {
    let mut acc = [0.0f32; 8];
    add_sq8(&mut acc, &qh.0[..8], &ph.0[..8]);
    if fold8(&acc) > bound {
        return true;
    }
    add_sq8(&mut acc, &qh.0[8..], &ph.0[8..]);
    if fold8(&acc) > bound {
        return true;
    }
    let qc = qt.chunks_exact(8);
    let pc = pt.chunks_exact(8);
    let (qr, pr) = (qc.remainder(), pc.remainder());
    for (k, (a, b)) in qc.zip(pc).enumerate() {
        add_sq8(&mut acc, a, b);
        if k % 2 == 1 && fold8(&acc) > bound {
            return true;
        }
    }
    let mut tail = 0.0f32;
    for (a, b) in qr.iter().zip(pr) {
        let t = a - b;
        tail += t * t;
    }
    fold8(&acc) + tail > bound
}

/// Mean and principal axes (columns, by decreasing variance) of a strided
/// sample of the points.
fn principal_axes(points: &FeatureMatrix) -> (Vec<f64>, nalgebra::DMatrix<f64>) {
    let (m, dim) = (points.count(), points.dim());
    let step = m.div_ceil(PCA_SAMPLES).max(1);
    let sample: Vec<&[f64]> = (0..m).step_by(step).map(|j| points.point(j)).collect();
    let mut mean = vec![0.0; dim];
    for p in &sample {
        for (acc, v) in mean.iter_mut().zip(*p) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= sample.len() as f64);
    let mut cov = nalgebra::DMatrix::<f64>::zeros(dim, dim);
    for p in &sample {
        let c = nalgebra::DVector::from_iterator(dim, p.iter().zip(&mean).map(|(v, mu)| v - mu));
        cov.syger(1.0, &c, &c, 1.0);
    }
    cov.fill_upper_triangle_with_lower_triangle();
    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let axes = nalgebra::DMatrix::from_fn(dim, dim, |r, c| eig.eigenvectors[(r, order[c])]);
    (mean, axes)
}

/// Unvisited points in principal coordinates, sorted by the first one.
/// The rotation preserves squared Euclidean distance, so the squared gap
/// in the first coordinate is a lower bound and a scan outward from the
/// query stops once the gap rules out everything further away. Adding the
/// squared gap between the norms of the remaining coordinates gives a
/// sharper per-candidate bound. Candidates passing it are screened with a
/// single-precision partial distance, which exits early because the
/// leading coordinates carry most of the spread. Every bound carries an
/// allowance for rounding and for the rotation being orthogonal only to
/// working precision, and survivors get the exact distance on the original
/// coordinates, so results match the full scan bit for bit. Removed points
/// stay in place as tombstones until half the slots are dead, then the
/// arrays are compacted.
struct ProjectedPool<'a, M: Metric> {
    metric: &'a M,
    points: &'a FeatureMatrix,
    dim: usize,
    /// Per slot, in key order.
    ids: Vec<usize>,
    keys: Vec<f64>,
    resid: Vec<f64>,
    /// First `HEAD` coordinates (zero padded) and the rest, in f32.
    head: Vec<Head>,
    tail: Vec<f32>,
    alive: Vec<bool>,
    slot_of: Vec<usize>,
    /// Allowance for rotation and rounding error, in norm units.
    tol: f64,
    /// Bound on the single-precision distance error in norm units; `None`
    /// disables screening.
    screen_slack: Option<f64>,
    remaining: usize,
}

impl<'a, M: Metric> ProjectedPool<'a, M> {
    /// `None` when the rotated coordinates or error bounds are not finite.
    fn new(points: &'a FeatureMatrix, metric: &'a M) -> Option<Self> {
        let (m, dim) = (points.count(), points.dim());
        let (mean, axes) = principal_axes(points);
        // axis k is column k, stored contiguously
        let axes_flat = axes.as_slice();
        let rotated: Vec<Vec<f64>> = (0..m)
            .into_par_iter()
            .map(|j| {
                let c: Vec<f64> = points.point(j).iter().zip(&mean).map(|(v, mu)| v - mu).collect();
                axes_flat.chunks_exact(dim).map(|axis| axis.iter().zip(&c).map(|(a, b)| a * b).sum()).collect()
            })
            .collect();
        let mut ids: Vec<usize> = (0..m).collect();
        ids.sort_by(|&a, &b| rotated[a][0].total_cmp(&rotated[b][0]).then(a.cmp(&b)));
        let mut slot_of = vec![NIL; m];
        let mut keys = Vec::with_capacity(m);
        let mut resid = Vec::with_capacity(m);
        let tail_dim = dim.saturating_sub(HEAD);
        let mut head = Vec::with_capacity(m);
        let mut tail = Vec::with_capacity(m * tail_dim);
        for (slot, &id) in ids.iter().enumerate() {
            slot_of[id] = slot;
            let y = &rotated[id];
            keys.push(y[0]);
            resid.push(y[1..].iter().map(|v| v * v).sum::<f64>().sqrt());
            let mut h = Head([0.0; HEAD]);
            for (x, &v) in h.0.iter_mut().zip(y) {
                *x = v as f32;
            }
            head.push(h);
            tail.extend(y.iter().skip(HEAD).map(|&v| v as f32));
        }

        let d = dim as f64;
        let max_norm = points
            .points()
            .map(|p| p.iter().zip(&mean).map(|(v, mu)| (v - mu) * (v - mu)).sum::<f64>().sqrt())
            .fold(0.0f64, f64::max);
        let max_abs = rotated.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        // |A^T A - I| bounded entrywise by `defect` stretches lengths by at
        // most a factor sqrt(1 + d * defect); each rotated coordinate is
        // within d * eps * sqrt(d) * |x - mean| of the exact product.
        let gram = axes.transpose() * &axes;
        let defect = (0..dim)
            .flat_map(|r| (0..dim).map(move |c| (r, c)))
            .map(|(r, c)| (gram[(r, c)] - if r == c { 1.0 } else { 0.0 }).abs())
            .fold(0.0f64, f64::max);
        let stretch = d * defect + 4.0 * d * d * f64::EPSILON;
        let tol = 4.0 * (stretch + 1e-12) * max_norm + f64::MIN_POSITIVE;
        // Each rounded coordinate is within u * |y| of the f64 one
        // (u = 2^-24); the f32 differences and squares add similar terms.
        let finite = tol.is_finite() && rotated.iter().flatten().chain(&resid).all(|v| v.is_finite());
        if !finite {
            return None;
        }
        let screen_slack = (max_abs <= SCREEN_MAX_ABS)
            .then(|| 3.0 * f64::from(f32::EPSILON) * max_abs.max(f64::MIN_POSITIVE) * d.sqrt() + tol);
        Some(Self {
            metric,
            points,
            dim,
            ids,
            keys,
            resid,
            head,
            tail,
            alive: vec![true; m],
            slot_of,
            tol,
            screen_slack,
            remaining: m,
        })
    }

    /// Single-precision threshold equivalent to "exact distance > bound":
    /// the f32 sum has relative error below `rel` and the f32 difference
    /// vector is within `slack` of the exact one, so an f32 value above
    /// `(sqrt(bound) + slack)^2 / (1 - rel)` proves the exact one is above
    /// `bound`.
    fn screen_bound(&self, bound: f64) -> Option<f32> {
        let slack = self.screen_slack?;
        if bound == f64::INFINITY {
            return Some(f32::INFINITY);
        }
        let rel = 2.0 * (self.dim as f64 + 16.0) * f64::from(f32::EPSILON);
        let t = (bound.sqrt() + slack).powi(2) / (1.0 - rel) * (1.0 + 1e-6) + 1e-30;
        Some(t as f32 * (1.0 + 4.0 * f32::EPSILON))
    }

    /// The query must be alive or the most recently removed point, which
    /// is how paths use the pool.
    fn scan(&self, from: usize) -> TopTwo {
        let slot = self.slot_of[from];
        let dim = self.dim;
        let q = self.points.point(from);
        let td = dim.saturating_sub(HEAD);
        let (qh, qt) = (&self.head[slot], &self.tail[slot * td..(slot + 1) * td]);
        let (kq, rq) = (self.keys[slot], self.resid[slot]);
        let mut top = TopTwo::EMPTY;
        if self.alive[slot] {
            top.offer(self.metric.distance(q, q), from);
        }
        let slots = self.ids.len();
        let mut st =
            ScanState { top, bound: f64::INFINITY, reach: f64::INFINITY, bound32: self.screen_bound(f64::INFINITY) };
        let visit = |st: &mut ScanState, p: usize, gap: f64| {
            let dr = self.resid[p] - rq;
            if (gap * gap + dr * dr).sqrt() > st.reach {
                return;
            }
            if let Some(b32) = st.bound32 {
                if exceeds_f32(qh, &self.head[p], qt, &self.tail[p * td..(p + 1) * td], b32) {
                    return;
                }
            }
            let id = self.ids[p];
            st.top.offer(self.metric.distance_bounded(q, self.points.point(id), st.bound), id);
            if st.top.second.0 != st.bound {
                st.bound = st.top.second.0;
                st.reach = st.bound.sqrt() + self.tol;
                st.bound32 = self.screen_bound(st.bound);
            }
        };
        // Each side advances in runs of up to SCAN_RUN live slots, taking
        // the side whose next slot is nearer in key. `lo` is one past the
        // next slot below (0 when exhausted).
        let (mut lo, mut hi) = (slot, slot + 1);
        loop {
            while lo > 0 && !self.alive[lo - 1] {
                lo -= 1;
            }
            while hi < slots && !self.alive[hi] {
                hi += 1;
            }
            let gap_lo = if lo > 0 { kq - self.keys[lo - 1] } else { f64::INFINITY };
            let gap_hi = if hi < slots { self.keys[hi] - kq } else { f64::INFINITY };
            if gap_lo.min(gap_hi) > st.reach || (lo == 0 && hi == slots) {
                break;
            }
            let mut run = 0;
            if gap_lo <= gap_hi {
                while lo > 0 && run < SCAN_RUN {
                    lo -= 1;
                    if !self.alive[lo] {
                        continue;
                    }
                    let gap = kq - self.keys[lo];
                    if gap > st.reach {
                        lo = 0;
                        break;
                    }
                    visit(&mut st, lo, gap);
                    run += 1;
                }
            } else {
                while hi < slots && run < SCAN_RUN {
                    let p = hi;
                    hi += 1;
                    if !self.alive[p] {
                        continue;
                    }
                    let gap = self.keys[p] - kq;
                    if gap > st.reach {
                        hi = slots;
                        break;
                    }
                    visit(&mut st, p, gap);
                    run += 1;
                }
            }
        }
        st.top
    }

    /// Drops dead slots except `keep`.
    fn compact(&mut self, keep: usize) {
        let td = self.dim.saturating_sub(HEAD);
        let mut w = 0;
        for r in 0..self.ids.len() {
            let id = self.ids[r];
            if !self.alive[r] && id != keep {
                self.slot_of[id] = NIL;
                continue;
            }
            self.ids[w] = id;
            self.keys[w] = self.keys[r];
            self.resid[w] = self.resid[r];
            self.alive[w] = self.alive[r];
            self.head[w] = self.head[r];
            self.tail.copy_within(r * td..(r + 1) * td, w * td);
            self.slot_of[id] = w;
            w += 1;
        }
        self.ids.truncate(w);
        self.keys.truncate(w);
        self.resid.truncate(w);
        self.alive.truncate(w);
        self.head.truncate(w);
        self.tail.truncate(w * td);
    }
}

impl<M: Metric> Candidates for ProjectedPool<'_, M> {
    fn remaining(&self) -> usize {
        self.remaining
    }

    fn top_two(&self, from: usize) -> TopTwo {
        self.scan(from)
    }

    fn nearest(&self, from: usize) -> Option<(f64, usize)> {
        self.scan(from).nearest()
    }

    fn remove(&mut self, idx: usize) {
        let slot = self.slot_of[idx];
        if slot == NIL || !std::mem::replace(&mut self.alive[slot], false) {
            return;
        }
        self.remaining -= 1;
        if self.ids.len() >= 64 && self.remaining * 2 < self.ids.len() {
            self.compact(idx);
        }
    }
}

/// Full `m x m` matrix, row `i` holding `w(c_i, c_j)`.
struct MatrixPool {
    count: usize,
    dist: Vec<f64>,
    ids: Vec<usize>,
}

impl MatrixPool {
    fn new<M: Metric>(points: &FeatureMatrix, metric: &M) -> Self {
        let m = points.count();
        let mut dist = vec![0.0; m * m];
        dist.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
            let pi = points.point(i);
            for (j, w) in row.iter_mut().enumerate() {
                *w = metric.distance(pi, points.point(j));
            }
        });
        Self { count: m, dist, ids: (0..m).collect() }
    }
}

impl Candidates for MatrixPool {
    fn remaining(&self) -> usize {
        self.ids.len()
    }

    fn top_two(&self, from: usize) -> TopTwo {
        let row = &self.dist[from * self.count..(from + 1) * self.count];
        let mut top = TopTwo::EMPTY;
        for &j in &self.ids {
            top.offer(row[j], j);
        }
        top
    }

    fn nearest(&self, from: usize) -> Option<(f64, usize)> {
        self.top_two(from).nearest()
    }

    fn remove(&mut self, idx: usize) {
        if let Some(pos) = self.ids.iter().position(|&j| j == idx) {
            self.ids.swap_remove(pos);
        }
    }
}

fn with_candidates<M: Metric, T>(
    points: &FeatureMatrix,
    metric: &M,
    strategy: SearchStrategy,
    f: impl FnOnce(&mut dyn Candidates) -> T,
) -> T {
    match strategy {
        SearchStrategy::Materialized { cap } if points.count() <= cap => f(&mut MatrixPool::new(points, metric)),
        SearchStrategy::Projected if metric.bounded_by_projections() => match ProjectedPool::new(points, metric) {
            Some(mut pool) => f(&mut pool),
            None => f(&mut StreamingPool::new(points, metric)),
        },
        _ => f(&mut StreamingPool::new(points, metric)),
    }
}

fn walk(pool: &mut dyn Candidates, start: usize, mut step: impl FnMut(&dyn Candidates, usize) -> usize) -> PathOrder {
    let mut order = Vec::with_capacity(pool.remaining());
    order.push(start);
    pool.remove(start);
    let mut current = start;
    while pool.remaining() > 0 {
        let next = step(&*pool, current);
        pool.remove(next);
        order.push(next);
        current = next;
    }
    PathOrder(order)
}

/// Nearest-neighbour path from `start`: each step moves to the closest
/// unvisited point (lowest index on ties).
pub fn greedy_path<M: Metric>(points: &FeatureMatrix, start: usize, metric: &M) -> Result<PathOrder> {
    greedy_path_with(points, start, metric, SearchStrategy::default())
}

pub fn greedy_path_with<M: Metric>(
    points: &FeatureMatrix,
    start: usize,
    metric: &M,
    strategy: SearchStrategy,
) -> Result<PathOrder> {
    if start >= points.count() {
        return Err(Error::Index(format!("start point {start} out of range for {} points", points.count())));
    }
    Ok(with_candidates(points, metric, strategy, |pool| {
        walk(pool, start, |pool, cur| pool.nearest(cur).expect("pool is non-empty").1)
    }))
}

/// Probability of stepping to the nearest rather than the second-nearest
/// candidate, with weights `exp(-w / epsilon)` over those two only.
pub fn nearest_choice_probability(d_nearest: f64, d_second: f64, epsilon: f64) -> f64 {
    1.0 / (1.0 + (-(d_second - d_nearest) / epsilon).exp())
}

/// Randomized nearest-neighbour path.
///
/// The first point is uniform. Each step picks the nearest or the
/// second-nearest unvisited point with probabilities proportional to
/// `exp(-w / epsilon)`; the last remaining point is taken directly.
pub fn randomized_path<M: Metric, R: Rng + ?Sized>(
    points: &FeatureMatrix,
    metric: &M,
    epsilon: f64,
    rng: &mut R,
) -> Result<PathOrder> {
    randomized_path_with(points, metric, epsilon, rng, SearchStrategy::default())
}

pub fn randomized_path_with<M: Metric, R: Rng + ?Sized>(
    points: &FeatureMatrix,
    metric: &M,
    epsilon: f64,
    rng: &mut R,
    strategy: SearchStrategy,
) -> Result<PathOrder> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    let start = rng.random_range(0..points.count());
    Ok(with_candidates(points, metric, strategy, |pool| {
        walk(pool, start, |pool, cur| {
            let top = pool.top_two(cur);
            let (d1, j1) = top.nearest().expect("pool is non-empty");
            match top.runner_up() {
                None => j1,
                Some((d2, j2)) => {
                    let p1 = nearest_choice_probability(d1, d2, epsilon);
                    if rng.random::<f64>() < p1 {
                        j1
                    } else {
                        j2
                    }
                }
            }
        })
    }))
}

/// Groups the points into consecutive pairs: a random unclaimed point is
/// paired with its nearest unclaimed neighbour, until none are left.
pub fn pair_points<M: Metric, R: Rng + ?Sized>(points: &FeatureMatrix, metric: &M, rng: &mut R) -> Result<PathOrder> {
    pair_points_with(points, metric, |unclaimed| rng.random_range(0..unclaimed.len()))
}

/// [`pair_points`] with the first member of each pair chosen by `pick`,
/// which receives the unclaimed indices in increasing order and returns a
/// position in that slice.
pub fn pair_points_with<M: Metric>(
    points: &FeatureMatrix,
    metric: &M,
    mut pick: impl FnMut(&[usize]) -> usize,
) -> Result<PathOrder> {
    let m = points.count();
    if m % 2 != 0 {
        return Err(Error::Parity(m));
    }
    let mut unclaimed: Vec<usize> = (0..m).collect();
    let mut order = Vec::with_capacity(m);
    while !unclaimed.is_empty() {
        let pos = pick(&unclaimed);
        if pos >= unclaimed.len() {
            return Err(Error::Index(format!("pick returned position {pos} of {} unclaimed points", unclaimed.len())));
        }
        let first = unclaimed.remove(pos);
        let q = points.point(first);
        // unclaimed is sorted, so a strict comparison keeps the lowest index on ties
        let mut best = (f64::INFINITY, 0);
        for (slot, &j) in unclaimed.iter().enumerate() {
            let d = metric.distance(q, points.point(j));
            if d < best.0 {
                best = (d, slot);
            }
        }
        let second = unclaimed.remove(best.1);
        order.push(first);
        order.push(second);
    }
    Ok(PathOrder(order))
}

/// `sum_j |y[j] - y[j-1]|`.
pub fn total_variation(y: &[f64]) -> f64 {
    y.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Metric analogue of total variation: the summed distance between
/// consecutive points along `order`.
pub fn path_smoothness<M: Metric>(points: &FeatureMatrix, order: &PathOrder, metric: &M) -> Result<f64> {
    if order.len() != points.count() {
        return Err(Error::InvalidPermutation(format!(
            "order of length {} for {} points",
            order.len(),
            points.count()
        )));
    }
    PathOrder::new(order.as_slice().to_vec())?;
    Ok(order.as_slice().windows(2).map(|w| metric.distance(points.point(w[1]), points.point(w[0]))).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line(xs: &[f64]) -> FeatureMatrix {
        FeatureMatrix::from_scalars(xs).unwrap()
    }

    fn random_points(rng: &mut ChaCha8Rng, m: usize, dim: usize) -> FeatureMatrix {
        let data = (0..m * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        FeatureMatrix::new(dim, data).unwrap()
    }

    /// Independent re-statement of the greedy rule over an explicit matrix.
    fn brute_greedy(points: &FeatureMatrix, start: usize) -> Vec<usize> {
        let m = points.count();
        let w: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| points.point(i).iter().zip(points.point(j)).map(|(a, b)| (a - b) * (a - b)).sum())
                    .collect()
            })
            .collect();
        let mut visited = vec![false; m];
        let mut order = vec![start];
        visited[start] = true;
        for _ in 1..m {
            let cur = *order.last().unwrap();
            let next = (0..m)
                .filter(|&j| !visited[j])
                .min_by(|&a, &b| w[cur][a].partial_cmp(&w[cur][b]).unwrap().then(a.cmp(&b)))
                .unwrap();
            visited[next] = true;
            order.push(next);
        }
        order
    }

    #[test]
    fn squared_euclidean_examples() {
        assert_eq!(squared_euclidean(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(squared_euclidean(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 25.0);
        assert!(matches!(squared_euclidean(&[0.0], &[1.0, 2.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn squared_euclidean_matches_naive_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        for _ in 0..20 {
            let u: Vec<f64> = (0..81).map(|_| rng.random_range(0.0..1.0)).collect();
            let v: Vec<f64> = (0..81).map(|_| rng.random_range(0.0..1.0)).collect();
            let mut naive = 0.0;
            for i in 0..81 {
                naive += (u[i] - v[i]) * (u[i] - v[i]);
            }
            assert!((squared_euclidean(&u, &v).unwrap() - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn bounded_distance_is_exact_or_above_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(82);
        for dim in [1, 3, 16, 81, 169] {
            for _ in 0..50 {
                let u: Vec<f64> = (0..dim).map(|_| rng.random_range(0.0..1.0)).collect();
                let v: Vec<f64> = (0..dim).map(|_| rng.random_range(0.0..1.0)).collect();
                let exact = sq_dist(&u, &v);
                let bound = rng.random_range(0.0..exact * 2.0 + 1e-9);
                let b = sq_dist_bounded(&u, &v, bound);
                assert!(b == exact || (b > bound && b <= exact));
                assert_eq!(sq_dist_bounded(&u, &v, f64::INFINITY), exact);
            }
        }
    }

    #[test]
    fn greedy_single_point() {
        let p = greedy_path(&line(&[4.0]), 0, &SquaredEuclidean).unwrap();
        assert_eq!(p.as_slice(), &[0]);
    }

    #[test]
    fn greedy_line_example() {
        let pts = line(&[0.0, 10.0, 1.0, 11.0]);
        let p = greedy_path(&pts, 0, &SquaredEuclidean).unwrap();
        assert_eq!(p.to_one_based(), vec![1, 3, 2, 4]);
        assert_eq!(path_smoothness(&pts, &p, &SquaredEuclidean).unwrap(), 83.0);
        let id = PathOrder::identity(4);
        assert_eq!(path_smoothness(&pts, &id, &SquaredEuclidean).unwrap(), 281.0);
    }

    #[test]
    fn greedy_ties_take_lowest_index() {
        let pts = line(&[0.0, 1.0, -1.0, 1.0]);
        let p = greedy_path(&pts, 0, &SquaredEuclidean).unwrap();
        assert_eq!(p.as_slice(), &[0, 1, 3, 2]);
    }

    #[test]
    fn greedy_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in 1..=10 {
            for _ in 0..20 {
                let pts = random_points(&mut rng, m, 3);
                let start = rng.random_range(0..m);
                let p = greedy_path(&pts, start, &SquaredEuclidean).unwrap();
                assert_eq!(p.as_slice(), brute_greedy(&pts, start).as_slice());
            }
        }
    }

    #[test]
    fn greedy_bad_start() {
        assert!(matches!(greedy_path(&line(&[0.0, 1.0]), 2, &SquaredEuclidean), Err(Error::Index(_))));
    }

    #[test]
    fn materialized_and_streaming_agree_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // duplicated points force ties
        let base = random_points(&mut rng, 150, 5);
        let mut data = base.as_slice().to_vec();
        data.extend_from_slice(&base.as_slice()[..50 * 5]);
        let pts = FeatureMatrix::new(5, data).unwrap();
        let mat = SearchStrategy::Materialized { cap: DEFAULT_MATRIX_CAP };
        let a = greedy_path_with(&pts, 17, &SquaredEuclidean, SearchStrategy::Streaming).unwrap();
        let b = greedy_path_with(&pts, 17, &SquaredEuclidean, mat).unwrap();
        assert_eq!(a, b);
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        let a = randomized_path_with(&pts, &SquaredEuclidean, 0.1, &mut r1, SearchStrategy::Streaming).unwrap();
        let b = randomized_path_with(&pts, &SquaredEuclidean, 0.1, &mut r2, mat).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn projected_search_agrees_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for (m, dim) in [(1, 3), (2, 1), (180, 5), (300, 81)] {
            let base = random_points(&mut rng, m, dim);
            let mut data = base.as_slice().to_vec();
            // duplicates and a shifted copy make projection ties and exact distance ties
            data.extend_from_slice(&base.as_slice()[..(m / 3) * dim]);
            data.extend(base.as_slice()[..(m / 4) * dim].iter().map(|v| v + 0.25));
            let pts = FeatureMatrix::new(dim, data).unwrap();
            let n = pts.count();
            for start in [0, n / 2, n - 1] {
                let a = greedy_path_with(&pts, start, &SquaredEuclidean, SearchStrategy::Streaming).unwrap();
                let b = greedy_path_with(&pts, start, &SquaredEuclidean, SearchStrategy::Projected).unwrap();
                assert_eq!(a, b);
            }
            for seed in 0..3 {
                let mut r1 = ChaCha8Rng::seed_from_u64(seed);
                let mut r2 = ChaCha8Rng::seed_from_u64(seed);
                let a = randomized_path_with(&pts, &SquaredEuclidean, 0.1, &mut r1, SearchStrategy::Streaming).unwrap();
                let b = randomized_path_with(&pts, &SquaredEuclidean, 0.1, &mut r2, SearchStrategy::Projected).unwrap();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn projected_search_agrees_across_scales() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let base = random_points(&mut rng, 150, 20);
        for (scale, offset) in [(1e-150, 0.0), (1e-3, 1e6), (1e8, 0.0), (1e150, 0.0), (1.0, -3e5)] {
            let data = base.as_slice().iter().map(|v| v * scale + offset).collect();
            let pts = FeatureMatrix::new(20, data).unwrap();
            let a = greedy_path_with(&pts, 7, &SquaredEuclidean, SearchStrategy::Streaming).unwrap();
            let b = greedy_path_with(&pts, 7, &SquaredEuclidean, SearchStrategy::Projected).unwrap();
            assert_eq!(a, b, "scale {scale} offset {offset}");
        }
    }

    #[test]
    fn projected_scan_matches_brute_force_on_integer_grid() {
        // many exactly equal distances and projections
        let pts: Vec<[f64; 2]> = (0..12).flat_map(|x| (0..9).map(move |y| [x as f64, y as f64])).collect();
        let pts = FeatureMatrix::from_points(&pts).unwrap();
        let pool = ProjectedPool::new(&pts, &SquaredEuclidean).unwrap();
        for q in 0..pts.count() {
            let top = pool.top_two(q);
            let mut all: Vec<(f64, usize)> =
                (0..pts.count()).map(|j| (sq_dist(pts.point(q), pts.point(j)), j)).collect();
            all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            assert_eq!(top.nearest(), Some(all[0]));
            assert_eq!(top.runner_up(), Some(all[1]));
        }
    }

    #[test]
    fn large_pool_parallel_scan_matches_brute_force_step() {
        // exercises the chunked parallel reduction
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = PARALLEL_SCAN_MIN + 123;
        let pts = random_points(&mut rng, m, 2);
        let pool = StreamingPool::new(&pts, &SquaredEuclidean);
        let top = pool.top_two(0);
        let mut all: Vec<(f64, usize)> = (0..m).map(|j| (sq_dist(pts.point(0), pts.point(j)), j)).collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        assert_eq!(top.nearest(), Some(all[0]));
        assert_eq!(top.runner_up(), Some(all[1]));
    }

    #[test]
    fn randomized_single_and_pair() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = randomized_path(&line(&[2.0]), &SquaredEuclidean, 0.1, &mut rng).unwrap();
            assert_eq!(p.as_slice(), &[0]);
        }
        let mut firsts = [0usize; 2];
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = randomized_path(&line(&[0.0, 1.0]), &SquaredEuclidean, 0.1, &mut rng).unwrap();
            firsts[p.as_slice()[0]] += 1;
        }
        assert!(firsts[0] > 60 && firsts[1] > 60, "{firsts:?}");
    }

    #[test]
    fn randomized_is_seed_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = random_points(&mut rng, 60, 4);
        let a = randomized_path(&pts, &SquaredEuclidean, 0.1, &mut ChaCha8Rng::seed_from_u64(44)).unwrap();
        let b = randomized_path(&pts, &SquaredEuclidean, 0.1, &mut ChaCha8Rng::seed_from_u64(44)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn randomized_two_candidate_frequency() {
        // From point 0 the nearest unvisited point is at w = 0 and the
        // second at w = 1; further points are far away.
        let pts = line(&[0.0, 0.0, 1.0, 50.0]);
        let p_nearest = 1.0 / (1.0 + (-10.0f64).exp());
        assert!((nearest_choice_probability(0.0, 1.0, 0.1) - p_nearest).abs() < 1e-15);
        let trials = 100_000u64;
        let mut hits = 0u64;
        let mut starts = 0u64;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        while starts < trials {
            let p = randomized_path(&pts, &SquaredEuclidean, 0.1, &mut rng).unwrap();
            if p.as_slice()[0] != 0 {
                continue;
            }
            starts += 1;
            if p.as_slice()[1] == 1 {
                hits += 1;
            }
        }
        let n = trials as f64;
        let sd = (p_nearest * (1.0 - p_nearest) / n).sqrt();
        let freq = hits as f64 / n;
        // 3 sigma, with a floor of one miss in 1e5 for the nearly-certain case
        assert!((freq - p_nearest).abs() <= 3.0 * sd + 1.0 / n, "freq {freq}, p {p_nearest}");
    }

    #[test]
    fn pairing_examples() {
        let pts = line(&[0.0, 5.0, 0.1, 5.1]);
        let p = pair_points_with(&pts, &SquaredEuclidean, |_| 0).unwrap();
        assert_eq!(p.to_one_based(), vec![1, 3, 2, 4]);
        let p = pair_points_with(&pts, &SquaredEuclidean, |u| if u.len() == 4 { 0 } else { 1 }).unwrap();
        assert_eq!(p.to_one_based(), vec![1, 3, 4, 2]);
        let two = line(&[1.0, 2.0]);
        for seed in 0..5 {
            let p = pair_points(&two, &SquaredEuclidean, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert!(p.as_slice() == [0, 1] || p.as_slice() == [1, 0]);
        }
        assert!(matches!(
            pair_points(&line(&[1.0, 2.0, 3.0]), &SquaredEuclidean, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::Parity(3))
        ));
    }

    #[test]
    fn pairing_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for m in (2..=8).step_by(2) {
            for _ in 0..30 {
                let pts = random_points(&mut rng, m, 2);
                let picks: Vec<usize> = (0..m / 2).map(|k| rng.random_range(0..m - 2 * k)).collect();
                let mut it = picks.iter();
                let got = pair_points_with(&pts, &SquaredEuclidean, |_| *it.next().unwrap()).unwrap();
                // oracle: claimed flags, explicit scan
                let mut claimed = vec![false; m];
                let mut want = Vec::new();
                for &pk in &picks {
                    let free: Vec<usize> = (0..m).filter(|&j| !claimed[j]).collect();
                    let a = free[pk];
                    claimed[a] = true;
                    let mut best: Option<(f64, usize)> = None;
                    for j in (0..m).filter(|&j| !claimed[j]) {
                        let d = squared_euclidean(pts.point(a), pts.point(j)).unwrap();
                        if best.map_or(true, |(bd, _)| d < bd) {
                            best = Some((d, j));
                        }
                    }
                    let b = best.unwrap().1;
                    claimed[b] = true;
                    want.push(a);
                    want.push(b);
                }
                assert_eq!(got.as_slice(), want.as_slice());
            }
        }
    }

    #[test]
    fn total_variation_examples() {
        assert_eq!(total_variation(&[2.0, 2.0, 2.0]), 0.0);
        assert_eq!(total_variation(&[1.0, 3.0, 2.0]), 3.0);
        assert_eq!(total_variation(&[5.0]), 0.0);
    }

    #[test]
    fn path_smoothness_collinear_and_errors() {
        let pts = line(&[0.0, 2.0, 4.0, 6.0, 8.0]);
        let s = path_smoothness(&pts, &PathOrder::identity(5), &SquaredEuclidean).unwrap();
        assert_eq!(s, 4.0 * 4.0);
        assert_eq!(path_smoothness(&line(&[3.0]), &PathOrder::identity(1), &SquaredEuclidean).unwrap(), 0.0);
        assert!(path_smoothness(&pts, &PathOrder::identity(4), &SquaredEuclidean).is_err());
    }

    #[test]
    fn permutation_validation() {
        assert!(PathOrder::new(vec![0, 2, 1]).is_ok());
        assert!(PathOrder::new(vec![0, 0, 1]).is_err());
        assert!(PathOrder::new(vec![0, 3, 1]).is_err());
        assert!(PathOrder::from_one_based(&[0, 1]).is_err());
        let p = PathOrder::new(vec![2, 0, 1]).unwrap();
        let v = [10, 20, 30];
        assert_eq!(p.apply(&v), vec![30, 10, 20]);
        assert_eq!(p.scatter(&p.apply(&v)), v.to_vec());
        assert_eq!(p.inverse().apply(&p.apply(&v)), v.to_vec());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #[test]
            fn sorted_minimizes_tv(mut v in proptest::collection::vec(-100.0f64..100.0, 1..9), seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut shuffled = v.clone();
                for i in (1..shuffled.len()).rev() {
                    shuffled.swap(i, rng.random_range(0..=i));
                }
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let tv_sorted = total_variation(&v);
                let range = v[v.len() - 1] - v[0];
                prop_assert!((tv_sorted - range).abs() < 1e-9);
                prop_assert!(tv_sorted <= total_variation(&shuffled) + 1e-9);
            }

            #[test]
            fn greedy_steps_replay(vals in proptest::collection::vec(-10.0f64..10.0, 2..40), start_frac in 0.0f64..1.0) {
                let pts = FeatureMatrix::new(2, vals[..vals.len() / 2 * 2].to_vec()).unwrap();
                let start = ((pts.count() as f64 - 1.0) * start_frac) as usize;
                let p = greedy_path(&pts, start, &SquaredEuclidean).unwrap();
                prop_assert!(PathOrder::new(p.as_slice().to_vec()).is_ok());
                let mut visited = vec![false; pts.count()];
                for w in p.as_slice().windows(2) {
                    visited[w[0]] = true;
                    let chosen = sq_dist(pts.point(w[0]), pts.point(w[1]));
                    for j in (0..pts.count()).filter(|&j| !visited[j]) {
                        prop_assert!(sq_dist(pts.point(w[0]), pts.point(j)) >= chosen);
                    }
                }
            }

            #[test]
            fn randomized_is_permutation(vals in proptest::collection::vec(0.0f64..1.0, 1..60), seed in any::<u64>()) {
                let pts = FeatureMatrix::from_scalars(&vals).unwrap();
                let p = randomized_path(&pts, &SquaredEuclidean, 0.1, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                prop_assert!(PathOrder::new(p.into_vec()).is_ok());
            }
        }
    }
}
