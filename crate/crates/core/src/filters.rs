//! Separable Gaussian filtering of single frames (replicated borders).

/// Normalised Gaussian taps and first-derivative taps for `sigma`, radius `ceil(3 sigma)`.
pub fn gaussian_taps(sigma: f64) -> (Vec<f64>, Vec<f64>) {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let g: Vec<f64> = (-radius..=radius)
        .map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp())
        .collect();
    let sum: f64 = g.iter().sum();
    let g: Vec<f64> = g.iter().map(|v| v / sum).collect();
    // derivative of the normalised Gaussian, scaled so a unit ramp gives slope 1
    let d: Vec<f64> = (-radius..=radius)
        .zip(&g)
        .map(|(k, &gv)| -(k as f64) / (sigma * sigma) * gv)
        .collect();
    let ramp: f64 = (-radius..=radius).zip(&d).map(|(k, &dv)| -(k as f64) * dv).sum();
    let d = d.iter().map(|v| -v / ramp).collect();
    (g, d)
}

fn convolve_rows(src: &[f64], height: usize, width: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                let xx = (x as isize + k as isize - r).clamp(0, width as isize - 1) as usize;
                acc += t * row[xx];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

fn convolve_cols(src: &[f64], height: usize, width: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        for (k, &t) in taps.iter().enumerate() {
            let yy = (y as isize + k as isize - r).clamp(0, height as isize - 1) as usize;
            let src_row = &src[yy * width..(yy + 1) * width];
            let dst = &mut out[y * width..(y + 1) * width];
            for (d, s) in dst.iter_mut().zip(src_row) {
                *d += t * s;
            }
        }
    }
    out
}

/// Gaussian-smoothed image.
pub fn smooth(img: &[f64], height: usize, width: usize, sigma: f64) -> Vec<f64> {
    let (g, _) = gaussian_taps(sigma);
    convolve_cols(&convolve_rows(img, height, width, &g), height, width, &g)
}

/// Gaussian derivatives `(d/dx, d/dy)` with `x` along columns and `y` down the rows.
pub fn gradients(img: &[f64], height: usize, width: usize, sigma: f64) -> (Vec<f64>, Vec<f64>) {
    let (g, d) = gaussian_taps(sigma);
    let gx = convolve_cols(&convolve_rows(img, height, width, &d), height, width, &g);
    let gy = convolve_cols(&convolve_rows(img, height, width, &g), height, width, &d);
    (gx, gy)
}

/// Number of in-frame orientations.
pub const ORIENTATIONS: usize = 8;

/// Angle of orientation channel `o`: `pi * o / 8`, measured from the `x` axis.
pub fn orientation_angle(o: usize) -> f64 {
    std::f64::consts::PI * o as f64 / ORIENTATIONS as f64
}
