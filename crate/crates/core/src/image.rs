//! Single-channel raster images and the sampling/filtering used on them.
//!
//! Pixel centers sit at integer coordinates: pixel `(x, y)` covers
//! `[x - 0.5, x + 0.5) x [y - 0.5, y + 0.5)`.

#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Clone> Image<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Image {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Image<T> {
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Image {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        let i = self.index(x, y);
        self.data[i] = value;
    }

    pub fn same_size<U>(&self, other: &Image<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Image<U> {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// Nearest pixel to a continuous coordinate, if inside the image.
    pub fn nearest(&self, u: f64, v: f64) -> Option<(usize, usize)> {
        let x = u.round();
        let y = v.round();
        if x < 0.0 || y < 0.0 || x >= self.width as f64 || y >= self.height as f64 {
            return None;
        }
        Some((x as usize, y as usize))
    }
}

impl Image<u8> {
    pub fn to_f64(&self) -> Image<f64> {
        self.map(|&v| v as f64)
    }
}

impl Image<f64> {
    /// Round and clamp to 8-bit.
    pub fn to_u8(&self) -> Image<u8> {
        self.map(|&v| v.round().clamp(0.0, 255.0) as u8)
    }

    /// True if `(u, v)` lies inside the bilinear support `[0, w-1] x [0, h-1]`
    /// up to `slack`.
    pub fn in_support(&self, u: f64, v: f64, slack: f64) -> bool {
        u >= -slack
            && v >= -slack
            && u <= (self.width - 1) as f64 + slack
            && v <= (self.height - 1) as f64 + slack
    }

    /// Bilinear sample with coordinates clamped to the support.
    pub fn bilinear(&self, u: f64, v: f64) -> f64 {
        self.bilinear_with_gradient(u, v).0
    }

    /// Bilinear sample and its exact derivative within the containing cell.
    /// Coordinates are clamped to the support first; the derivative along a
    /// clamped axis is zero.
    pub fn bilinear_with_gradient(&self, u: f64, v: f64) -> (f64, [f64; 2]) {
        let max_u = (self.width - 1) as f64;
        let max_v = (self.height - 1) as f64;
        let (uc, du_live) = clamp_axis(u, max_u);
        let (vc, dv_live) = clamp_axis(v, max_v);
        let x0 = (uc.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (vc.floor() as usize).min(self.height.saturating_sub(2));
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = uc - x0 as f64;
        let fy = vc - y0 as f64;
        let i00 = *self.get(x0, y0);
        let i10 = *self.get(x1, y0);
        let i01 = *self.get(x0, y1);
        let i11 = *self.get(x1, y1);
        let top = i00 + fx * (i10 - i00);
        let bottom = i01 + fx * (i11 - i01);
        let value = top + fy * (bottom - top);
        let gx = if du_live {
            (1.0 - fy) * (i10 - i00) + fy * (i11 - i01)
        } else {
            0.0
        };
        let gy = if dv_live { bottom - top } else { 0.0 };
        (value, [gx, gy])
    }
}

fn clamp_axis(u: f64, max: f64) -> (f64, bool) {
    if u < 0.0 {
        (0.0, false)
    } else if u > max {
        (max, false)
    } else {
        (u, max > 0.0)
    }
}

/// Truncated, normalized 1-D Gaussian. The 2-D kernel is the outer product.
#[derive(Debug, Clone)]
pub struct GaussianKernel {
    pub sigma: f64,
    pub radius: usize,
    norm: f64,
    weights: Vec<f64>,
}

impl GaussianKernel {
    pub fn new(sigma: f64) -> Self {
        let radius = (3.0 * sigma).ceil().max(1.0) as usize;
        let raw: Vec<f64> = (-(radius as i64)..=radius as i64)
            .map(|s| (-(s * s) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let norm: f64 = raw.iter().sum();
        let weights = raw.iter().map(|w| w / norm).collect();
        GaussianKernel {
            sigma,
            radius,
            norm,
            weights,
        }
    }

    /// Weight at integer offset `-radius..=radius`.
    #[inline]
    pub fn weight(&self, offset: i64) -> f64 {
        self.weights[(offset + self.radius as i64) as usize]
    }

    /// Continuous kernel value, same normalization as the discrete weights.
    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        (-s * s / (2.0 * self.sigma * self.sigma)).exp() / self.norm
    }

    #[inline]
    pub fn eval_derivative(&self, s: f64) -> f64 {
        -s / (self.sigma * self.sigma) * self.eval(s)
    }
}

#[inline]
fn clamp_index(i: i64, n: usize) -> usize {
    i.clamp(0, n as i64 - 1) as usize
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur(image: &Image<f64>, kernel: &GaussianKernel) -> Image<f64> {
    let (w, h) = (image.width, image.height);
    let r = kernel.radius as i64;
    let mut tmp = Image::filled(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for d in -r..=r {
                acc += kernel.weight(d) * image.get(clamp_index(x as i64 + d, w), y);
            }
            tmp.set(x, y, acc);
        }
    }
    let mut out = Image::filled(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for d in -r..=r {
                acc += kernel.weight(d) * tmp.get(x, clamp_index(y as i64 + d, h));
            }
            out.set(x, y, acc);
        }
    }
    out
}

/// Blurred value of `mask` at a continuous position `p`, summing the kernel
/// over the fixed integer window centered on `anchor`. Returns the value and
/// its gradient with respect to `p`.
pub fn blurred_mask_at(
    mask: &Image<u8>,
    kernel: &GaussianKernel,
    anchor: (usize, usize),
    p: [f64; 2],
) -> (f64, [f64; 2]) {
    let r = kernel.radius as i64;
    let (ax, ay) = (anchor.0 as i64, anchor.1 as i64);
    let mut value = 0.0;
    let mut grad = [0.0; 2];
    for dy in -r..=r {
        let qy = ay + dy;
        let sy = p[1] - qy as f64;
        let ky = kernel.eval(sy);
        let dky = kernel.eval_derivative(sy);
        let row = clamp_index(qy, mask.height);
        for dx in -r..=r {
            let qx = ax + dx;
            if *mask.get(clamp_index(qx, mask.width), row) == 0 {
                continue;
            }
            let sx = p[0] - qx as f64;
            let kx = kernel.eval(sx);
            value += kx * ky;
            grad[0] += kernel.eval_derivative(sx) * ky;
            grad[1] += kx * dky;
        }
    }
    (value, grad)
}

/// True if every pixel of `mask` in the clamped square window of the given
/// radius around `(x, y)` has the same value.
pub fn window_is_homogeneous(mask: &Image<u8>, x: usize, y: usize, radius: usize) -> bool {
    let r = radius as i64;
    let first = *mask.get(
        clamp_index(x as i64 - r, mask.width),
        clamp_index(y as i64 - r, mask.height),
    );
    for dy in -r..=r {
        let row = clamp_index(y as i64 + dy, mask.height);
        for dx in -r..=r {
            if *mask.get(clamp_index(x as i64 + dx, mask.width), row) != first {
                return false;
            }
        }
    }
    true
}

/// Sum of `values` over the square window of the given radius around each
/// pixel, restricted to pixels inside the image.
pub fn box_sum(values: &Image<f64>, radius: usize) -> Image<f64> {
    let (w, h) = (values.width, values.height);
    // summed-area table with a zero border row/column
    let mut sat = vec![0.0; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += values.get(x, y);
            sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
        }
    }
    Image::from_fn(w, h, |x, y| {
        let x0 = x.saturating_sub(radius);
        let y0 = y.saturating_sub(radius);
        let x1 = (x + radius + 1).min(w);
        let y1 = (y + radius + 1).min(h);
        sat[y1 * (w + 1) + x1] - sat[y0 * (w + 1) + x1] - sat[y1 * (w + 1) + x0]
            + sat[y0 * (w + 1) + x0]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_reproduces_pixels_and_midpoints() {
        let img = Image::from_fn(3, 2, |x, y| (x + 10 * y) as f64);
        assert_eq!(img.bilinear(2.0, 1.0), 12.0);
        assert_eq!(img.bilinear(0.5, 0.5), 5.5);
        let (_, g) = img.bilinear_with_gradient(0.25, 0.75);
        assert_eq!(g, [1.0, 10.0]);
        // clamped outside the support
        assert_eq!(img.bilinear(-3.0, 7.0), 10.0);
    }

    #[test]
    fn bilinear_gradient_matches_finite_difference() {
        let img = Image::from_fn(5, 5, |x, y| ((x * x + 3 * y) % 7) as f64);
        let (u, v, h) = (1.3, 2.6, 1e-6);
        let (_, g) = img.bilinear_with_gradient(u, v);
        let gx = (img.bilinear(u + h, v) - img.bilinear(u - h, v)) / (2.0 * h);
        let gy = (img.bilinear(u, v + h) - img.bilinear(u, v - h)) / (2.0 * h);
        assert!((g[0] - gx).abs() < 1e-8 && (g[1] - gy).abs() < 1e-8);
    }

    #[test]
    fn blur_preserves_constants_and_mass() {
        let k = GaussianKernel::new(1.5);
        assert_eq!(k.radius, 5);
        let flat = Image::filled(12, 9, 3.0);
        let blurred = gaussian_blur(&flat, &k);
        assert!(blurred.data.iter().all(|v| (v - 3.0).abs() < 1e-12));
    }

    #[test]
    fn continuous_blur_matches_discrete_at_centers() {
        let k = GaussianKernel::new(1.5);
        let mask = Image::from_fn(16, 16, |x, y| u8::from(x + y > 14));
        let blurred = gaussian_blur(&mask.to_f64(), &k);
        for &(x, y) in &[(3, 4), (8, 7), (0, 15), (15, 0)] {
            let (v, _) = blurred_mask_at(&mask, &k, (x, y), [x as f64, y as f64]);
            assert!((v - blurred.get(x, y)).abs() < 1e-12);
        }
    }

    #[test]
    fn continuous_blur_gradient_matches_finite_difference() {
        let k = GaussianKernel::new(1.5);
        let mask = Image::from_fn(16, 16, |x, y| u8::from(2 * x + y > 20));
        let (p, h) = ([7.2, 6.9], 1e-6);
        let (_, g) = blurred_mask_at(&mask, &k, (7, 7), p);
        let f = |q: [f64; 2]| blurred_mask_at(&mask, &k, (7, 7), q).0;
        let gx = (f([p[0] + h, p[1]]) - f([p[0] - h, p[1]])) / (2.0 * h);
        let gy = (f([p[0], p[1] + h]) - f([p[0], p[1] - h])) / (2.0 * h);
        assert!((g[0] - gx).abs() < 1e-8 && (g[1] - gy).abs() < 1e-8);
    }

    #[test]
    fn box_sum_counts_window() {
        let ones = Image::filled(5, 4, 1.0);
        let s = box_sum(&ones, 1);
        assert_eq!(*s.get(0, 0), 4.0);
        assert_eq!(*s.get(2, 2), 9.0);
        assert_eq!(*s.get(4, 3), 4.0);
    }

    #[test]
    fn homogeneous_window_detection() {
        let mask = Image::from_fn(10, 10, |x, _| u8::from(x >= 5));
        assert!(window_is_homogeneous(&mask, 1, 5, 2));
        assert!(!window_is_homogeneous(&mask, 4, 5, 1));
        assert!(window_is_homogeneous(&mask, 7, 5, 2));
    }
}
