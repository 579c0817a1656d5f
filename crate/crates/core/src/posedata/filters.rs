use std::collections::HashMap;

use super::layout::{LandmarkLayout, COORDS, FEATURES};
use super::sequence::PoseSequence;
use crate::error::{Error, Result};

/// Fills NaN gaps channel by channel.
///
/// Interior runs are interpolated linearly between the nearest valid
/// neighbors; leading and trailing runs copy the nearest valid value; a
/// channel without any valid value becomes all zeros.
pub fn interpolate_missing(seq: &PoseSequence) -> PoseSequence {
    let mut out = seq.clone();
    for f in 0..FEATURES {
        let mut ch = seq.channel(f);
        fill_channel(&mut ch);
        out.set_channel(f, &ch);
    }
    out
}

fn fill_channel(ch: &mut [f64]) {
    let valid: Vec<usize> = (0..ch.len()).filter(|&i| ch[i].is_finite()).collect();
    let (Some(&first), Some(&last)) = (valid.first(), valid.last()) else {
        ch.iter_mut().for_each(|v| *v = 0.0);
        return;
    };
    for i in 0..first {
        ch[i] = ch[first];
    }
    for i in last + 1..ch.len() {
        ch[i] = ch[last];
    }
    for w in valid.windows(2) {
        let (a, b) = (w[0], w[1]);
        for i in a + 1..b {
            let frac = (i - a) as f64 / (b - a) as f64;
            ch[i] = ch[a] + (ch[b] - ch[a]) * frac;
        }
    }
}

/// Weights of the least-squares polynomial of degree `order` fitted to the
/// points at offsets `-left ..= right`, evaluated at offset 0.
///
/// Computed from a QR factorization of the (scaled) Vandermonde matrix: the
/// fitted value at 0 is the constant coefficient, so the weights are
/// `Q · R⁻ᵀ · e₀`.
fn fit_weights(left: usize, right: usize, order: usize) -> Vec<f64> {
    let count = left + right + 1;
    let degree = order.min(count - 1);
    let cols = degree + 1;
    let scale = left.max(right).max(1) as f64;
    let xs: Vec<f64> = (0..count).map(|i| (i as f64 - left as f64) / scale).collect();
    // modified Gram-Schmidt; q holds columns
    let mut q: Vec<Vec<f64>> = (0..cols).map(|j| xs.iter().map(|x| x.powi(j as i32)).collect()).collect();
    let mut r = vec![vec![0.0; cols]; cols];
    for j in 0..cols {
        for i in 0..j {
            let dot: f64 = q[i].iter().zip(&q[j]).map(|(a, b)| a * b).sum();
            r[i][j] = dot;
            let qi = q[i].clone();
            q[j].iter_mut().zip(&qi).for_each(|(v, u)| *v -= dot * u);
        }
        let norm = q[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        r[j][j] = norm;
        q[j].iter_mut().for_each(|v| *v /= norm);
    }
    // Rᵀ z = e₀ by forward substitution
    let mut z = vec![0.0; cols];
    for j in 0..cols {
        let rhs = if j == 0 { 1.0 } else { 0.0 };
        let acc: f64 = (0..j).map(|i| r[i][j] * z[i]).sum();
        z[j] = (rhs - acc) / r[j][j];
    }
    (0..count).map(|k| (0..cols).map(|j| q[j][k] * z[j]).sum()).collect()
}

fn check_savgol(window: usize, polyorder: usize) -> Result<()> {
    if window % 2 == 0 {
        return Err(Error::Config(format!("Savitzky-Golay window {window} must be odd")));
    }
    if polyorder >= window {
        return Err(Error::Config(format!("polynomial order {polyorder} must be below window {window}")));
    }
    Ok(())
}

/// Central smoothing weights for an odd `window`.
pub fn savgol_coefficients(window: usize, polyorder: usize) -> Result<Vec<f64>> {
    check_savgol(window, polyorder)?;
    let h = window / 2;
    Ok(fit_weights(h, h, polyorder))
}

/// Savitzky-Golay smoothing of every channel.
///
/// Near the sequence ends the window is truncated to the available frames
/// and the polynomial fitted on that one-sided window is evaluated at the
/// frame itself. The degree drops when fewer than `polyorder + 1` frames are
/// available.
pub fn savgol_smooth(seq: &PoseSequence, window: usize, polyorder: usize) -> Result<PoseSequence> {
    check_savgol(window, polyorder)?;
    if !seq.is_clean() {
        return Err(Error::Config("Savitzky-Golay input contains missing values".into()));
    }
    let n = seq.frames();
    let h = window / 2;
    let mut cache: HashMap<(usize, usize), Vec<f64>> = HashMap::new();
    let mut out = PoseSequence::zeros(n);
    for t in 0..n {
        let left = h.min(t);
        let right = h.min(n - 1 - t);
        let w = cache.entry((left, right)).or_insert_with(|| fit_weights(left, right, polyorder));
        let dst = out.frame_mut(t);
        for (k, &wk) in w.iter().enumerate() {
            let src = seq.frame(t - left + k);
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += wk * s;
            }
        }
    }
    Ok(out)
}

/// Sets the depth coordinate of every hand landmark to exactly zero.
pub fn zero_hand_depth(seq: &PoseSequence, layout: &LandmarkLayout) -> PoseSequence {
    let mut out = seq.clone();
    for t in 0..out.frames() {
        let frame = out.frame_mut(t);
        for l in layout.hand_landmarks() {
            frame[l * COORDS + 2] = 0.0;
        }
    }
    out
}

/// Translates the sequence so the body landmarks of the first frame are
/// centered at the origin. Only `x`/`y` move for hands, so their depth
/// stays zero.
pub fn center_on_body(seq: &PoseSequence, layout: &LandmarkLayout) -> PoseSequence {
    let body = layout.body_landmarks();
    let nb = body.len() as f64;
    let mut c = [0.0; 3];
    for l in body {
        let p = seq.point(0, l);
        (0..3).for_each(|i| c[i] += p[i] / nb);
    }
    let mut out = seq.clone();
    for t in 0..out.frames() {
        let frame = out.frame_mut(t);
        for l in 0..layout.total() {
            let o = l * COORDS;
            frame[o] -= c[0];
            frame[o + 1] -= c[1];
            if !layout.is_hand(l) {
                frame[o + 2] -= c[2];
            }
        }
    }
    out
}
