//! The permuted filter-bank cascade: decomposition, reconstruction, basis
//! elements and m-term approximation.

use std::fmt;
use std::io::Write;

use crate::dwt::{analyze_into, synthesize_into, Workspace};
use crate::error::{Error, Result};
use crate::filters::WaveletFilterSet;
use crate::tree::TreePlan;

/// A coefficient band. Details are numbered from the coarsest (`Detail(1)`,
/// same length as the approximation) to the finest (`Detail(depth)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Band {
    Approx,
    Detail(usize),
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Band::Approx => write!(f, "a1"),
            Band::Detail(l) => write!(f, "d{l}"),
        }
    }
}

/// Address of one coefficient (0-based position within its band).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CoeffIndex {
    pub band: Band,
    pub position: usize,
}

/// Output of [`decompose`]: the coarsest approximation and the detail bands,
/// coarsest first.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    approx: Vec<f64>,
    details: Vec<Vec<f64>>,
    plan_id: u64,
}

impl Coefficients {
    /// All-zero coefficients shaped for `plan`.
    pub fn zeros(plan: &TreePlan) -> Self {
        let lengths = plan.level_lengths();
        Self {
            approx: vec![0.0; plan.coarsest_len()],
            details: lengths[1..].iter().rev().map(|&n| vec![0.0; n]).collect(),
            plan_id: plan.fingerprint(),
        }
    }

    /// Wraps raw bands after checking them against `plan`.
    pub fn from_parts(plan: &TreePlan, approx: Vec<f64>, details: Vec<Vec<f64>>) -> Result<Self> {
        let mut c = Self::zeros(plan);
        let shape_ok = approx.len() == c.approx.len()
            && details.len() == c.details.len()
            && details.iter().zip(&c.details).all(|(a, b)| a.len() == b.len());
        if !shape_ok {
            return Err(Error::PlanMismatch("coefficient bands do not match the plan's level lengths".into()));
        }
        c.approx = approx;
        c.details = details;
        Ok(c)
    }

    pub fn approx(&self) -> &[f64] {
        &self.approx
    }

    /// Detail bands, coarsest first.
    pub fn details(&self) -> &[Vec<f64>] {
        &self.details
    }

    pub fn details_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.details
    }

    pub fn approx_mut(&mut self) -> &mut [f64] {
        &mut self.approx
    }

    pub fn depth(&self) -> usize {
        self.details.len()
    }

    pub fn plan_id(&self) -> u64 {
        self.plan_id
    }

    pub fn band(&self, band: Band) -> Option<&[f64]> {
        match band {
            Band::Approx => Some(&self.approx),
            Band::Detail(l) if l >= 1 => self.details.get(l - 1).map(Vec::as_slice),
            Band::Detail(_) => None,
        }
    }

    fn band_mut(&mut self, band: Band) -> Option<&mut Vec<f64>> {
        match band {
            Band::Approx => Some(&mut self.approx),
            Band::Detail(l) if l >= 1 => self.details.get_mut(l - 1),
            Band::Detail(_) => None,
        }
    }

    pub fn get(&self, idx: CoeffIndex) -> Option<f64> {
        self.band(idx.band)?.get(idx.position).copied()
    }

    pub fn set(&mut self, idx: CoeffIndex, value: f64) -> Result<()> {
        let slot = self
            .band_mut(idx.band)
            .and_then(|b| b.get_mut(idx.position))
            .ok_or_else(|| Error::Index(format!("no coefficient at {}[{}]", idx.band, idx.position)))?;
        *slot = value;
        Ok(())
    }

    /// Total number of coefficients, approximation included.
    pub fn count(&self) -> usize {
        self.approx.len() + self.details.iter().map(Vec::len).sum::<usize>()
    }

    /// Number of nonzero coefficients, approximation included.
    pub fn nonzeros(&self) -> usize {
        self.values().filter(|v| *v != 0.0).count()
    }

    pub fn energy(&self) -> f64 {
        self.values().map(|v| v * v).sum()
    }

    /// Values in pooled order: approximation, then details coarsest first.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.approx.iter().chain(self.details.iter().flatten()).copied()
    }

    /// Addresses in the same order as [`values`](Self::values).
    pub fn indices(&self) -> impl Iterator<Item = CoeffIndex> + '_ {
        let approx = (0..self.approx.len()).map(|position| CoeffIndex { band: Band::Approx, position });
        let details =
            self.details.iter().enumerate().flat_map(|(l, d)| {
                (0..d.len()).map(move |position| CoeffIndex { band: Band::Detail(l + 1), position })
            });
        approx.chain(details)
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.approx.iter_mut().chain(self.details.iter_mut().flatten())
    }

    /// Keeps the `m` largest-magnitude coefficients and zeroes the rest.
    /// Equal magnitudes are resolved in pooled order (coarser band first,
    /// then lower position). Returns how many were kept.
    pub fn keep_largest(&mut self, m: usize) -> usize {
        let total = self.count();
        if m >= total {
            return total;
        }
        let mags: Vec<f64> = self.values().map(f64::abs).collect();
        let mut order: Vec<usize> = (0..total).collect();
        order.sort_by(|&i, &j| mags[j].total_cmp(&mags[i]).then(i.cmp(&j)));
        let mut keep = vec![false; total];
        for &i in &order[..m] {
            keep[i] = true;
        }
        for (v, k) in self.values_mut().zip(keep) {
            if !k {
                *v = 0.0;
            }
        }
        m
    }

    /// Writes `level,band,index,value` rows; level 0 is the approximation,
    /// level `l` the detail band `d_l`.
    pub fn write_columns<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "level,band,index,value")?;
        for (idx, v) in self.indices().zip(self.values()) {
            let level = match idx.band {
                Band::Approx => 0,
                Band::Detail(l) => l,
            };
            writeln!(w, "{level},{},{},{v:e}", idx.band, idx.position)?;
        }
        Ok(())
    }
}

fn check_plan(plan: &TreePlan, fs: &WaveletFilterSet) -> Result<()> {
    if plan.filter_name() != fs.name() {
        return Err(Error::PlanMismatch(format!(
            "plan was built for {}, transform uses {}",
            plan.filter_name(),
            fs.name()
        )));
    }
    Ok(())
}

/// Multilevel analysis: on each level (finest first) permute the current
/// approximation, then filter and decimate.
pub fn decompose(f: &[f64], plan: &TreePlan, fs: &WaveletFilterSet) -> Result<Coefficients> {
    check_plan(plan, fs)?;
    if f.len() != plan.leaf_count() {
        return Err(Error::PlanMismatch(format!("signal has {} samples, plan expects {}", f.len(), plan.leaf_count())));
    }
    let mut ws = Workspace::new();
    let mut details = Vec::with_capacity(plan.depth());
    let mut current = f.to_vec();
    for perm in plan.levels() {
        let permuted = perm.apply(&current);
        let n = fs.output_len(permuted.len());
        let mut a = vec![0.0; n];
        let mut d = vec![0.0; n];
        analyze_into(&permuted, fs, &mut a, &mut d, &mut ws)?;
        details.push(d);
        current = a;
    }
    details.reverse();
    Ok(Coefficients { approx: current, details, plan_id: plan.fingerprint() })
}

/// Inverse of [`decompose`].
pub fn reconstruct(c: &Coefficients, plan: &TreePlan, fs: &WaveletFilterSet) -> Result<Vec<f64>> {
    check_plan(plan, fs)?;
    if c.plan_id != plan.fingerprint() {
        return Err(Error::PlanMismatch("coefficients were produced with a different plan".into()));
    }
    let mut current = c.approx.clone();
    for (perm, d) in plan.levels().iter().rev().zip(&c.details) {
        let mut y = vec![0.0; perm.len()];
        synthesize_into(&current, d, fs, &mut y)?;
        current = perm.scatter(&y);
    }
    Ok(current)
}

/// The signal whose only nonzero coefficient is a 1 at `idx`.
pub fn basis_element(plan: &TreePlan, fs: &WaveletFilterSet, idx: CoeffIndex) -> Result<Vec<f64>> {
    let mut c = Coefficients::zeros(plan);
    c.set(idx, 1.0)?;
    reconstruct(&c, plan, fs)
}

/// Reconstruction from the `m` largest-magnitude coefficients, the
/// approximation band included in the pool. Returns the signal and the
/// number of coefficients kept.
pub fn m_term_approx(f: &[f64], plan: &TreePlan, fs: &WaveletFilterSet, m: usize) -> Result<(Vec<f64>, usize)> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    let mut c = decompose(f, plan, fs)?;
    let kept = c.keep_largest(m);
    Ok((reconstruct(&c, plan, fs)?, kept))
}
