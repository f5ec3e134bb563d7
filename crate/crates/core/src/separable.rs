//! Ordinary 2D separable wavelet transform, used as a comparison baseline
//! for m-term approximation.

use crate::dwt::{analyze_into, synthesize_into, Workspace};
use crate::error::{Error, Result};
use crate::filters::WaveletFilterSet;

#[derive(Debug, Clone, PartialEq)]
struct Level {
    width: usize,
    height: usize,
    /// lowpass rows / highpass columns, highpass rows / lowpass columns,
    /// highpass both; each `out_w * out_h`, row-major.
    bands: [Vec<f64>; 3],
}

/// Multilevel separable coefficients of a row-major image.
#[derive(Debug, Clone, PartialEq)]
pub struct Separable2d {
    approx: Vec<f64>,
    approx_width: usize,
    approx_height: usize,
    /// finest first
    levels: Vec<Level>,
}

impl Separable2d {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn approx_shape(&self) -> (usize, usize) {
        (self.approx_width, self.approx_height)
    }

    pub fn count(&self) -> usize {
        self.approx.len() + self.levels.iter().map(|l| 3 * l.bands[0].len()).sum::<usize>()
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        let details = self.levels.iter_mut().rev().flat_map(|l| l.bands.iter_mut().flatten());
        self.approx.iter_mut().chain(details)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        let details = self.levels.iter().rev().flat_map(|l| l.bands.iter().flatten());
        self.approx.iter().chain(details).copied()
    }

    /// Same pooling and tie rule as the 1D transform: approximation first,
    /// then coarser levels first.
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
}

fn column(data: &[f64], width: usize, x: usize) -> impl Iterator<Item = f64> + '_ {
    data.iter().skip(x).step_by(width).copied()
}

/// Decomposes a `width x height` row-major image, continuing while both
/// sides are at least the filter length.
pub fn decompose_2d(image: &[f64], width: usize, height: usize, fs: &WaveletFilterSet) -> Result<Separable2d> {
    if image.len() != width * height {
        return Err(Error::Dimension(format!("{} pixels for a {width}x{height} image", image.len())));
    }
    let min = fs.len().max(2);
    let mut ws = Workspace::new();
    let mut current = image.to_vec();
    let (mut w, mut h) = (width, height);
    let mut levels = Vec::new();
    while w >= min && h >= min {
        let (ow, oh) = (fs.output_len(w), fs.output_len(h));
        let mut lo = vec![0.0; ow * h];
        let mut hi = vec![0.0; ow * h];
        for y in 0..h {
            analyze_into(
                &current[y * w..(y + 1) * w],
                fs,
                &mut lo[y * ow..(y + 1) * ow],
                &mut hi[y * ow..(y + 1) * ow],
                &mut ws,
            )?;
        }
        let mut ll = vec![0.0; ow * oh];
        let mut bands = [vec![0.0; ow * oh], vec![0.0; ow * oh], vec![0.0; ow * oh]];
        let (mut ca, mut cd) = (vec![0.0; oh], vec![0.0; oh]);
        for x in 0..ow {
            let col: Vec<f64> = column(&lo, ow, x).collect();
            analyze_into(&col, fs, &mut ca, &mut cd, &mut ws)?;
            for y in 0..oh {
                ll[y * ow + x] = ca[y];
                bands[0][y * ow + x] = cd[y];
            }
            let col: Vec<f64> = column(&hi, ow, x).collect();
            analyze_into(&col, fs, &mut ca, &mut cd, &mut ws)?;
            for y in 0..oh {
                bands[1][y * ow + x] = ca[y];
                bands[2][y * ow + x] = cd[y];
            }
        }
        levels.push(Level { width: w, height: h, bands });
        current = ll;
        w = ow;
        h = oh;
    }
    if levels.is_empty() {
        return Err(Error::Shape(format!("{width}x{height} is too small for one {} level", fs.name())));
    }
    Ok(Separable2d { approx: current, approx_width: w, approx_height: h, levels })
}

pub fn reconstruct_2d(c: &Separable2d, fs: &WaveletFilterSet) -> Result<Vec<f64>> {
    let mut current = c.approx.clone();
    let mut buf_a = Vec::new();
    let mut buf_d = Vec::new();
    for level in c.levels.iter().rev() {
        let (w, h) = (level.width, level.height);
        let (ow, oh) = (fs.output_len(w), fs.output_len(h));
        if current.len() != ow * oh {
            return Err(Error::Dimension("inconsistent separable coefficients".into()));
        }
        let mut lo = vec![0.0; ow * h];
        let mut hi = vec![0.0; ow * h];
        let mut col = vec![0.0; h];
        for x in 0..ow {
            buf_a.clear();
            buf_a.extend(column(&current, ow, x));
            buf_d.clear();
            buf_d.extend(column(&level.bands[0], ow, x));
            synthesize_into(&buf_a, &buf_d, fs, &mut col)?;
            for (y, v) in col.iter().enumerate() {
                lo[y * ow + x] = *v;
            }
            buf_a.clear();
            buf_a.extend(column(&level.bands[1], ow, x));
            buf_d.clear();
            buf_d.extend(column(&level.bands[2], ow, x));
            synthesize_into(&buf_a, &buf_d, fs, &mut col)?;
            for (y, v) in col.iter().enumerate() {
                hi[y * ow + x] = *v;
            }
        }
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            synthesize_into(&lo[y * ow..(y + 1) * ow], &hi[y * ow..(y + 1) * ow], fs, &mut out[y * w..(y + 1) * w])?;
        }
        current = out;
    }
    Ok(current)
}

/// Reconstruction from the `m` largest separable coefficients.
pub fn m_term_approx_2d(
    image: &[f64],
    width: usize,
    height: usize,
    fs: &WaveletFilterSet,
    m: usize,
) -> Result<(Vec<f64>, usize)> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    let mut c = decompose_2d(image, width, height, fs)?;
    let kept = c.keep_largest(m);
    Ok((reconstruct_2d(&c, fs)?, kept))
}
