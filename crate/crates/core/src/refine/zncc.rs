//! Zero-mean normalized cross-correlation and its windowed energy.

use crate::image::Image;

/// Sums of squared deviations below this count as a flat window.
const FLAT_WINDOW: f64 = 1e-10;

/// `1 - ZNCC(a, b)`, in `[0, 2]`. Flat windows and windows with fewer than
/// two samples give the neutral value 1.
pub fn zncc_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "ZNCC windows differ in size");
    match zncc(a, b) {
        Some(rho) => 1.0 - rho,
        None => 1.0,
    }
}

fn zncc(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len();
    if n < 2 {
        return None;
    }
    let mean_a = a.iter().sum::<f64>() / n as f64;
    let mean_b = b.iter().sum::<f64>() / n as f64;
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (da, db) = (x - mean_a, y - mean_b);
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    if saa < FLAT_WINDOW || sbb < FLAT_WINDOW {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// `1 - ZNCC` and its derivative with respect to every sample of `b`.
/// The derivative is `None` for neutral windows.
pub fn zncc_error_with_gradient(a: &[f64], b: &[f64]) -> (f64, Option<Vec<f64>>) {
    let n = a.len();
    if n < 2 {
        return (1.0, None);
    }
    let mean_a = a.iter().sum::<f64>() / n as f64;
    let mean_b = b.iter().sum::<f64>() / n as f64;
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (da, db) = (x - mean_a, y - mean_b);
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    if saa < FLAT_WINDOW || sbb < FLAT_WINDOW {
        return (1.0, None);
    }
    let (sa, sb) = (saa.sqrt(), sbb.sqrt());
    let rho = sab / (sa * sb);
    let grad = a
        .iter()
        .zip(b)
        .map(|(x, y)| -((x - mean_a) / (sa * sb) - rho * (y - mean_b) / sbb))
        .collect();
    (1.0 - rho, Some(grad))
}

/// Energy of one reference image against per-pixel samples of another:
/// the sum over valid pixels of `1 - ZNCC` on the square window of valid
/// pixels around it.
pub struct WindowedResult {
    pub energy: f64,
    /// Derivative of the energy with respect to each sample; zero where
    /// the sample does not influence any non-neutral window.
    pub gradient: Vec<f64>,
}

pub fn windowed_zncc(
    reference: &Image<f64>,
    samples: &[f64],
    valid: &[bool],
    radius: usize,
    with_gradient: bool,
) -> WindowedResult {
    let (w, h) = (reference.width, reference.height);
    let mut energy = 0.0;
    let mut gradient = if with_gradient {
        vec![0.0; w * h]
    } else {
        Vec::new()
    };
    let mut idx = Vec::with_capacity((2 * radius + 1).pow(2));
    let mut a = Vec::with_capacity(idx.capacity());
    let mut b = Vec::with_capacity(idx.capacity());
    for y in 0..h {
        for x in 0..w {
            if !valid[y * w + x] {
                continue;
            }
            idx.clear();
            a.clear();
            b.clear();
            for wy in y.saturating_sub(radius)..(y + radius + 1).min(h) {
                for wx in x.saturating_sub(radius)..(x + radius + 1).min(w) {
                    let k = wy * w + wx;
                    if valid[k] {
                        idx.push(k);
                        a.push(reference.data[k]);
                        b.push(samples[k]);
                    }
                }
            }
            if idx.len() < 2 {
                continue;
            }
            if with_gradient {
                let (err, grad) = zncc_error_with_gradient(&a, &b);
                energy += err;
                if let Some(grad) = grad {
                    for (&k, g) in idx.iter().zip(grad) {
                        gradient[k] += g;
                    }
                }
            } else {
                energy += zncc_error(&a, &b);
            }
        }
    }
    WindowedResult { energy, gradient }
}
