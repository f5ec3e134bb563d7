//! Single-level analysis and synthesis with half-sample symmetric extension.
//!
//! Analysis correlates the extended signal with the analysis taps and keeps
//! every second output:
//!
//! ```text
//! a[k] = sum_j h[j] * x[ext(2k + j + 2 - fl)],   k = 0 .. floor((len + fl - 1) / 2)
//! ```
//!
//! where `ext` mirrors indices about the half-sample points `-1/2` and
//! `len - 1/2` (`... x2 x1 | x1 x2 ...`). These are exactly the outputs whose
//! filter support touches the signal, so synthesis (the adjoint of the
//! infinite orthogonal filter bank) recovers the interior exactly for any
//! length, including odd ones. For `db1` on even lengths no extension is
//! read and the step reduces to `a[k] = (x[2k] + x[2k+1]) / sqrt 2`,
//! `d[k] = (x[2k+1] - x[2k]) / sqrt 2`.

use crate::error::{Error, Result};
use crate::filters::WaveletFilterSet;

/// Half-sample symmetric index map, valid for any offset (repeats with
/// period `2 * len` when the extension is longer than the signal).
#[inline]
pub(crate) fn reflect(i: isize, len: usize) -> usize {
    let n = len as isize;
    let r = i.rem_euclid(2 * n);
    if r < n {
        r as usize
    } else {
        (2 * n - 1 - r) as usize
    }
}

/// Writes the extended samples `x[ext(t)]` for `t = 2 - fl ..= 2 * out_len - 1`
/// into `buf`, so that output `k` reads `buf[2k .. 2k + fl]`.
fn extend_into(x: &[f64], fl: usize, out_len: usize, buf: &mut Vec<f64>) {
    let first = 2 - fl as isize;
    let count = 2 * out_len + fl - 2;
    buf.clear();
    buf.reserve(count);
    let n = x.len() as isize;
    for t in first..first + count as isize {
        let v = if (0..n).contains(&t) { x[t as usize] } else { x[reflect(t, x.len())] };
        buf.push(v);
    }
}

#[inline]
fn correlate_decimate(ext: &[f64], taps: &[f64], out: &mut [f64]) {
    for (k, o) in out.iter_mut().enumerate() {
        let window = &ext[2 * k..2 * k + taps.len()];
        *o = window.iter().zip(taps).map(|(x, h)| x * h).sum();
    }
}

/// Reusable scratch space for repeated single-level steps.
#[derive(Debug, Default)]
pub struct Workspace {
    ext: Vec<f64>,
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }
}

fn check_input(x: &[f64]) -> Result<()> {
    if x.len() < 2 {
        return Err(Error::TooShort { len: x.len(), min: 2 });
    }
    Ok(())
}

/// One analysis step: returns the approximation and detail coefficients.
///
/// Both outputs have `floor((len + fl - 1) / 2)` samples.
pub fn analyze_level(x: &[f64], fs: &WaveletFilterSet) -> Result<(Vec<f64>, Vec<f64>)> {
    check_input(x)?;
    let out_len = fs.output_len(x.len());
    let mut a = vec![0.0; out_len];
    let mut d = vec![0.0; out_len];
    analyze_into(x, fs, &mut a, &mut d, &mut Workspace::new())?;
    Ok((a, d))
}

/// [`analyze_level`] into caller-provided buffers.
pub fn analyze_into(x: &[f64], fs: &WaveletFilterSet, a: &mut [f64], d: &mut [f64], ws: &mut Workspace) -> Result<()> {
    check_input(x)?;
    let out_len = fs.output_len(x.len());
    if a.len() != out_len || d.len() != out_len {
        return Err(Error::Dimension(format!(
            "output buffers must hold {out_len} samples, got {} and {}",
            a.len(),
            d.len()
        )));
    }
    extend_into(x, fs.len(), out_len, &mut ws.ext);
    correlate_decimate(&ws.ext, fs.analysis_lowpass(), a);
    correlate_decimate(&ws.ext, fs.analysis_highpass(), d);
    Ok(())
}

/// Lowpass branch of [`analyze_level`] only. Tree construction uses this to
/// form coarse feature points, so it must share padding and phase with the
/// full step.
pub fn lowpass_into(x: &[f64], fs: &WaveletFilterSet, a: &mut [f64], ws: &mut Workspace) -> Result<()> {
    check_input(x)?;
    let out_len = fs.output_len(x.len());
    if a.len() != out_len {
        return Err(Error::Dimension(format!("output buffer must hold {out_len} samples, got {}", a.len())));
    }
    extend_into(x, fs.len(), out_len, &mut ws.ext);
    correlate_decimate(&ws.ext, fs.analysis_lowpass(), a);
    Ok(())
}

/// Inverse of [`analyze_level`] for a signal of `target_len` samples.
pub fn synthesize_level(a: &[f64], d: &[f64], fs: &WaveletFilterSet, target_len: usize) -> Result<Vec<f64>> {
    let mut y = vec![0.0; target_len];
    synthesize_into(a, d, fs, &mut y)?;
    Ok(y)
}

/// [`synthesize_level`] into a caller-provided buffer whose length is the
/// target length.
pub fn synthesize_into(a: &[f64], d: &[f64], fs: &WaveletFilterSet, y: &mut [f64]) -> Result<()> {
    let target_len = y.len();
    if target_len < 2 {
        return Err(Error::TooShort { len: target_len, min: 2 });
    }
    let expected = fs.output_len(target_len);
    if a.len() != d.len() || a.len() != expected {
        return Err(Error::Dimension(format!(
            "a signal of length {target_len} needs {expected} approximation and detail \
             coefficients, got {} and {}",
            a.len(),
            d.len()
        )));
    }
    y.fill(0.0);
    let h = fs.synthesis_lowpass();
    let g = fs.synthesis_highpass();
    let fl = fs.len() as isize;
    let n = target_len as isize;
    // Coefficient k sits at position 2k + 1 of the upsampled sequence and is
    // spread over y[2k + 1 - t], t = 0 .. fl.
    for (k, (&ak, &dk)) in a.iter().zip(d).enumerate() {
        let top = 2 * k as isize + 1;
        let t_lo = (top - n + 1).max(0);
        let t_hi = (top + 1).min(fl);
        for t in t_lo..t_hi {
            let tu = t as usize;
            y[(top - t) as usize] += h[tu] * ak + g[tu] * dk;
        }
    }
    Ok(())
}
