//! Fixed multi-channel feature stack plus a learned linear projection.
//!
//! A hand-crafted 13-channel stack stands in for a CNN backbone: RGB, CIELAB,
//! smoothed gradient magnitudes, oriented derivative energies and local
//! intensity deviation, each standardized per image. The projection is the
//! learned part; because mean pooling commutes with per-pixel linear maps, it
//! is applied to pooled feature vectors rather than to the dense map, which
//! is mathematically identical and much cheaper.

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pooling::FeatureTable;
use crate::raster::{gaussian_blur_plane, rgb_to_lab, RgbRaster};

/// Number of channels produced by [`raw_feature_stack`].
pub const RAW_CHANNELS: usize = 13;

/// Dense per-pixel feature planes, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub width: u32,
    pub height: u32,
    /// Layout: `data[(c * height + y) * width + x]`.
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, width: u32, height: u32) -> FeatureMap {
        FeatureMap {
            channels,
            width,
            height,
            data: vec![0.0; channels * width as usize * height as usize],
        }
    }

    #[inline]
    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.width as usize * self.height as usize;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.width as usize * self.height as usize;
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn at(&self, c: usize, x: u32, y: u32) -> f64 {
        self.data[(c * self.height as usize + y as usize) * self.width as usize + x as usize]
    }
}

/// Configuration of the fixed stack; recorded in model files so that a model
/// is only ever applied to the features it was trained on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureStackConfig {
    /// Stack recipe version; bumped if the channel set ever changes.
    pub version: u32,
    /// Standardize each channel to mean 0 / std 1 per image.
    pub standardize: bool,
}

impl Default for FeatureStackConfig {
    fn default() -> Self {
        FeatureStackConfig { version: 1, standardize: true }
    }
}

/// Compute the 13-channel stack for an image:
/// RGB (3), CIELAB (3), smoothed gradient magnitude at sigma 1 and 2 (2),
/// oriented derivative energy at sigma 1 for 0/45/90/135 degrees (4), and
/// 5x5 local intensity standard deviation (1).
pub fn raw_feature_stack(image: &RgbRaster, cfg: &FeatureStackConfig) -> FeatureMap {
    let (w, h) = (image.width as usize, image.height as usize);
    let mut map = FeatureMap::new(RAW_CHANNELS, image.width, image.height);

    for c in 0..3 {
        let plane = map.plane_mut(c);
        for (i, p) in image.pixels.iter().enumerate() {
            plane[i] = p[c];
        }
    }
    {
        let labs: Vec<[f64; 3]> = image.pixels.iter().map(|&p| rgb_to_lab(p)).collect();
        for c in 0..3 {
            let plane = map.plane_mut(3 + c);
            for (i, lab) in labs.iter().enumerate() {
                plane[i] = lab[c];
            }
        }
    }

    let luma = image.luminance_plane();
    for (slot, sigma) in [(6usize, 1.0), (7, 2.0)] {
        let smooth = gaussian_blur_plane(&luma, w, h, sigma);
        let (gx, gy) = central_gradients(&smooth, w, h);
        let plane = map.plane_mut(slot);
        for i in 0..w * h {
            plane[i] = (gx[i] * gx[i] + gy[i] * gy[i]).sqrt();
        }
    }

    {
        let smooth = gaussian_blur_plane(&luma, w, h, 1.0);
        let (gx, gy) = central_gradients(&smooth, w, h);
        for (slot, theta_deg) in [(8usize, 0.0), (9, 45.0), (10, 90.0), (11, 135.0)] {
            let theta = theta_deg * std::f64::consts::PI / 180.0;
            let (ct, st) = (theta.cos(), theta.sin());
            let plane = map.plane_mut(slot);
            for i in 0..w * h {
                let d = ct * gx[i] + st * gy[i];
                plane[i] = d * d;
            }
        }
    }

    {
        let plane = map.plane_mut(12);
        local_std_5x5(&luma, w, h, plane);
    }

    if cfg.standardize {
        standardize_channels(&mut map);
    }
    map
}

/// Feature map for one scale: the stack of the `factor`-times downsampled
/// image, resampled (nearest) back to the full image grid so it can be
/// pooled over the full-resolution segmentation.
pub fn scale_feature_map(
    image: &RgbRaster,
    factor: u32,
    cfg: &FeatureStackConfig,
) -> Result<FeatureMap> {
    if factor <= 1 {
        return Ok(raw_feature_stack(image, cfg));
    }
    let small_img = image.downsample(factor)?;
    let small = raw_feature_stack(&small_img, cfg);
    let mut out = FeatureMap::new(small.channels, image.width, image.height);
    let (w, h) = (image.width as usize, image.height as usize);
    let (sw, sh) = (small.width as usize, small.height as usize);
    for c in 0..small.channels {
        let src = small.plane(c);
        let n = w * h;
        let dst = &mut out.data[c * n..(c + 1) * n];
        for y in 0..h {
            let sy = (y * sh) / h;
            for x in 0..w {
                let sx = (x * sw) / w;
                dst[y * w + x] = src[sy * sw + sx];
            }
        }
    }
    Ok(out)
}

fn central_gradients(plane: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            let ym = y.saturating_sub(1);
            let yp = (y + 1).min(h - 1);
            gx[y * w + x] = (plane[y * w + xp] - plane[y * w + xm]) / 2.0;
            gy[y * w + x] = (plane[yp * w + x] - plane[ym * w + x]) / 2.0;
        }
    }
    (gx, gy)
}

fn local_std_5x5(plane: &[f64], w: usize, h: usize, out: &mut [f64]) {
    let mut window = [0.0f64; 25];
    for y in 0..h {
        for x in 0..w {
            // deviations from the window center: keeps constant windows at
            // exactly zero variance
            let center = plane[y * w + x];
            let mut i = 0;
            for dy in -2i64..=2 {
                for dx in -2i64..=2 {
                    let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                    let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                    window[i] = plane[sy * w + sx] - center;
                    i += 1;
                }
            }
            let mean = window.iter().sum::<f64>() / 25.0;
            let var = window.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 25.0;
            out[y * w + x] = var.sqrt();
        }
    }
}

fn standardize_channels(map: &mut FeatureMap) {
    let n = map.width as usize * map.height as usize;
    for c in 0..map.channels {
        let plane = map.plane_mut(c);
        let mean = plane.iter().sum::<f64>() / n as f64;
        let var = plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        if std < 1e-12 {
            plane.fill(0.0);
        } else {
            for v in plane.iter_mut() {
                *v = (*v - mean) / std;
            }
        }
    }
}

/// Learned linear map applied to pooled feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProjection {
    pub d_in: usize,
    pub d_out: usize,
    /// Row-major `d_out x d_in`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearProjection {
    /// He-scaled random weights, zero bias; deterministic per seed.
    pub fn init(d_in: usize, d_out: usize, seed: u64) -> Result<LinearProjection> {
        if d_in == 0 || d_out == 0 {
            return Err(Error::invalid_input("projection dimensions must be nonzero"));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, (2.0 / d_in as f64).sqrt()).expect("valid std");
        let weight = (0..d_out * d_in).map(|_| normal.sample(&mut rng)).collect();
        Ok(LinearProjection {
            d_in,
            d_out,
            weight,
            bias: vec![0.0; d_out],
        })
    }

    pub fn identity(d: usize) -> LinearProjection {
        let mut weight = vec![0.0; d * d];
        for i in 0..d {
            weight[i * d + i] = 1.0;
        }
        LinearProjection { d_in: d, d_out: d, weight, bias: vec![0.0; d] }
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Row-wise `out = features * weight^T + bias`.
pub fn project_forward(features: &FeatureTable, proj: &LinearProjection) -> Result<FeatureTable> {
    if features.cols != proj.d_in {
        return Err(Error::dimension_mismatch(format!(
            "feature table has {} columns, projection expects {}",
            features.cols, proj.d_in
        )));
    }
    let mut out = FeatureTable::zeros(features.rows, proj.d_out, features.seg_ref);
    for r in 0..features.rows {
        let row = features.row(r);
        let out_row = out.row_mut(r);
        for (o, out_v) in out_row.iter_mut().enumerate() {
            let wrow = &proj.weight[o * proj.d_in..(o + 1) * proj.d_in];
            let mut acc = proj.bias[o];
            for (a, b) in row.iter().zip(wrow) {
                acc += a * b;
            }
            *out_v = acc;
        }
    }
    Ok(out)
}

/// Parameter gradients of [`project_forward`] accumulated over a batch.
#[derive(Debug, Clone)]
pub struct ProjectionGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ProjectionGrad {
    pub fn zeros(proj: &LinearProjection) -> ProjectionGrad {
        ProjectionGrad {
            weight: vec![0.0; proj.weight.len()],
            bias: vec![0.0; proj.bias.len()],
        }
    }
}

/// Backward pass: given upstream gradients per output row and the forward
/// inputs, produce parameter gradients and the gradient w.r.t. the inputs.
pub fn project_backward(
    grad_out: &FeatureTable,
    input: &FeatureTable,
    proj: &LinearProjection,
) -> Result<(ProjectionGrad, FeatureTable)> {
    if grad_out.rows != input.rows || grad_out.cols != proj.d_out || input.cols != proj.d_in {
        return Err(Error::dimension_mismatch(
            "projection backward shapes inconsistent",
        ));
    }
    let mut grad = ProjectionGrad::zeros(proj);
    let mut grad_in = FeatureTable::zeros(input.rows, proj.d_in, input.seg_ref);
    for r in 0..input.rows {
        let g = grad_out.row(r);
        let x = input.row(r);
        let gi = grad_in.row_mut(r);
        for (o, &go) in g.iter().enumerate() {
            grad.bias[o] += go;
            let wrow = &proj.weight[o * proj.d_in..(o + 1) * proj.d_in];
            let grow = &mut grad.weight[o * proj.d_in..(o + 1) * proj.d_in];
            for i in 0..proj.d_in {
                grow[i] += go * x[i];
                gi[i] += go * wrow[i];
            }
        }
    }
    Ok((grad, grad_in))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn raw_cfg() -> FeatureStackConfig {
        FeatureStackConfig { version: 1, standardize: false }
    }

    #[test]
    fn uniform_image_zero_texture_channels() {
        let img = RgbRaster::filled(12, 12, [0.3, 0.6, 0.9]).unwrap();
        let map = raw_feature_stack(&img, &raw_cfg());
        for c in 6..13 {
            for &v in map.plane(c) {
                assert_eq!(v, 0.0, "channel {c} not exactly zero");
            }
        }
        // standardization maps constant channels to zero
        let std_map = raw_feature_stack(&img, &FeatureStackConfig::default());
        for c in 0..13 {
            for &v in std_map.plane(c) {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn vertical_edge_oriented_energy() {
        let mut img = RgbRaster::new(16, 16).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                let v = if x < 8 { 0.0 } else { 1.0 };
                img.set(x, y, [v, v, v]);
            }
        }
        let map = raw_feature_stack(&img, &raw_cfg());
        // 90 degree energy is zero everywhere (no vertical variation)
        for &v in map.plane(10) {
            assert!(v.abs() < 1e-15);
        }
        // 0 degree energy peaks on the edge columns
        let e0 = map.plane(8);
        let row = 8usize;
        let peak = (0..16).map(|x| e0[row * 16 + x]).fold(0.0f64, f64::max);
        let edge_val = e0[row * 16 + 7].max(e0[row * 16 + 8]);
        assert!(edge_val > 0.0);
        assert_relative_eq!(edge_val, peak);
    }

    #[test]
    fn checkerboard_local_std_constant_interior() {
        let mut img = RgbRaster::new(16, 16).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                let v = ((x + y) % 2) as f64;
                img.set(x, y, [v, v, v]);
            }
        }
        let map = raw_feature_stack(&img, &raw_cfg());
        let plane = map.plane(12);
        // brute-force 5x5 oracle
        let luma = img.luminance_plane();
        let oracle = |cx: i64, cy: i64| -> f64 {
            let mut vals = Vec::new();
            for dy in -2..=2i64 {
                for dx in -2..=2i64 {
                    let x = (cx + dx).clamp(0, 15) as usize;
                    let y = (cy + dy).clamp(0, 15) as usize;
                    vals.push(luma[y * 16 + x]);
                }
            }
            let mean = vals.iter().sum::<f64>() / 25.0;
            (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 25.0).sqrt()
        };
        let reference = plane[5 * 16 + 5];
        for y in 2..14 {
            for x in 2..14 {
                assert_relative_eq!(plane[y * 16 + x], reference, epsilon = 1e-12);
                assert_relative_eq!(
                    plane[y * 16 + x],
                    oracle(x as i64, y as i64),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn stack_deterministic_and_translation_covariant() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let mut img = RgbRaster::new(20, 20).unwrap();
        for p in img.pixels.iter_mut() {
            *p = [rng.random(), rng.random(), rng.random()];
        }
        let a = raw_feature_stack(&img, &raw_cfg());
        let b = raw_feature_stack(&img, &raw_cfg());
        assert_eq!(a, b);

        // shift image one pixel left; gradient channels shift on the interior
        let mut shifted = RgbRaster::new(20, 20).unwrap();
        for y in 0..20 {
            for x in 0..19 {
                shifted.set(x, y, img.get(x + 1, y));
            }
            shifted.set(19, y, img.get(19, y));
        }
        let s = raw_feature_stack(&shifted, &raw_cfg());
        for c in 6..12 {
            for y in 8..12u32 {
                for x in 8..12u32 {
                    assert_relative_eq!(s.at(c, x, y), a.at(c, x + 1, y), epsilon = 1e-9);
                }
            }
        }
    }

    fn random_table(rows: usize, cols: usize, seed: u64) -> FeatureTable {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut t = FeatureTable::zeros(rows, cols, 0);
        for v in t.data.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        t
    }

    #[test]
    fn identity_projection_passthrough() {
        let t = random_table(5, 4, 1);
        let out = project_forward(&t, &LinearProjection::identity(4)).unwrap();
        assert_eq!(out.data, t.data);
    }

    #[test]
    fn zero_weight_gives_bias_rows() {
        let t = random_table(3, 4, 2);
        let proj = LinearProjection {
            d_in: 4,
            d_out: 2,
            weight: vec![0.0; 8],
            bias: vec![0.5, -1.5],
        };
        let out = project_forward(&t, &proj).unwrap();
        for r in 0..3 {
            assert_eq!(out.row(r), &[0.5, -1.5]);
        }
    }

    #[test]
    fn forward_matches_triple_loop_oracle() {
        let t = random_table(3, 4, 3);
        let proj = LinearProjection::init(4, 2, 99).unwrap();
        let out = project_forward(&t, &proj).unwrap();
        for r in 0..3 {
            for o in 0..2 {
                let mut acc = proj.bias[o];
                for i in 0..4 {
                    acc += t.row(r)[i] * proj.weight[o * 4 + i];
                }
                assert_relative_eq!(out.row(r)[o], acc, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn forward_linearity_with_zero_bias() {
        let a = random_table(4, 5, 10);
        let b = random_table(4, 5, 11);
        let mut proj = LinearProjection::init(5, 3, 7).unwrap();
        proj.bias.fill(0.0);
        let (alpha, beta) = (0.7, -2.3);
        let mut combo = FeatureTable::zeros(4, 5, 0);
        for i in 0..combo.data.len() {
            combo.data[i] = alpha * a.data[i] + beta * b.data[i];
        }
        let lhs = project_forward(&combo, &proj).unwrap();
        let fa = project_forward(&a, &proj).unwrap();
        let fb = project_forward(&b, &proj).unwrap();
        for i in 0..lhs.data.len() {
            assert_relative_eq!(
                lhs.data[i],
                alpha * fa.data[i] + beta * fb.data[i],
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn backward_zero_grad() {
        let t = random_table(3, 4, 4);
        let proj = LinearProjection::init(4, 2, 5).unwrap();
        let gz = FeatureTable::zeros(3, 2, 0);
        let (grad, gi) = project_backward(&gz, &t, &proj).unwrap();
        assert!(grad.weight.iter().all(|&v| v == 0.0));
        assert!(grad.bias.iter().all(|&v| v == 0.0));
        assert!(gi.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_scalar_chain_rule() {
        let mut t = FeatureTable::zeros(1, 1, 0);
        t.data[0] = 3.0;
        let proj = LinearProjection { d_in: 1, d_out: 1, weight: vec![2.0], bias: vec![0.1] };
        let mut g = FeatureTable::zeros(1, 1, 0);
        g.data[0] = 0.5;
        let (grad, gi) = project_backward(&g, &t, &proj).unwrap();
        assert_relative_eq!(grad.weight[0], 0.5 * 3.0);
        assert_relative_eq!(grad.bias[0], 0.5);
        assert_relative_eq!(gi.data[0], 0.5 * 2.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for trial in 0..20 {
            let rows = rng.random_range(1..5);
            let d_in = rng.random_range(1..6);
            let d_out = rng.random_range(1..5);
            let input = random_table(rows, d_in, 100 + trial);
            let mut proj = LinearProjection::init(d_in, d_out, 200 + trial).unwrap();
            for b in proj.bias.iter_mut() {
                *b = rng.random_range(-0.5..0.5);
            }
            // loss = sum of w_ro * out_ro for fixed random w
            let w: Vec<f64> = (0..rows * d_out).map(|_| rng.random_range(-1.0..1.0)).collect();
            let loss = |proj: &LinearProjection| -> f64 {
                let out = project_forward(&input, proj).unwrap();
                out.data.iter().zip(&w).map(|(a, b)| a * b).sum()
            };
            let mut grad_out = FeatureTable::zeros(rows, d_out, 0);
            grad_out.data.copy_from_slice(&w);
            let (grad, _) = project_backward(&grad_out, &input, &proj).unwrap();

            let h = 1e-4;
            for i in 0..proj.weight.len() {
                let orig = proj.weight[i];
                proj.weight[i] = orig + h;
                let up = loss(&proj);
                proj.weight[i] = orig - h;
                let dn = loss(&proj);
                proj.weight[i] = orig;
                let fd = (up - dn) / (2.0 * h);
                let denom = grad.weight[i].abs().max(fd.abs()).max(1e-8);
                assert!(
                    (grad.weight[i] - fd).abs() / denom < 1e-4,
                    "weight grad mismatch: {} vs {}",
                    grad.weight[i],
                    fd
                );
            }
            for o in 0..proj.bias.len() {
                let orig = proj.bias[o];
                proj.bias[o] = orig + h;
                let up = loss(&proj);
                proj.bias[o] = orig - h;
                let dn = loss(&proj);
                proj.bias[o] = orig;
                let fd = (up - dn) / (2.0 * h);
                let denom = grad.bias[o].abs().max(fd.abs()).max(1e-8);
                assert!((grad.bias[o] - fd).abs() / denom < 1e-4);
            }
        }
    }

    #[test]
    fn he_init_statistics() {
        let proj = LinearProjection::init(512, 512, 42).unwrap();
        let n = proj.weight.len() as f64;
        let mean = proj.weight.iter().sum::<f64>() / n;
        let var = proj.weight.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let expected = 2.0 / 512.0;
        assert!((var - expected).abs() / expected < 0.2, "var {var} vs {expected}");
        assert!(proj.bias.iter().all(|&b| b == 0.0));
        let again = LinearProjection::init(512, 512, 42).unwrap();
        assert_eq!(proj, again);
    }

    #[test]
    fn scale_map_downsamples_then_matches_dims() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let mut img = RgbRaster::new(17, 13).unwrap();
        for p in img.pixels.iter_mut() {
            *p = [rng.random(), rng.random(), rng.random()];
        }
        let map = scale_feature_map(&img, 2, &FeatureStackConfig::default()).unwrap();
        assert_eq!(map.width, 17);
        assert_eq!(map.height, 13);
        assert_eq!(map.channels, RAW_CHANNELS);
        assert!(map.data.iter().all(|v| v.is_finite()));
    }
}
