//! Random affine augmentation applied identically to image and mask.
//!
//! Pixel centers sit at integer coordinates; a matrix maps source
//! coordinates to destination coordinates.

use rand::Rng;

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentConfig {
    pub scale_range: (f64, f64),
    pub max_rotation_deg: f64,
    pub max_shear_deg: f64,
    pub max_translate_px: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { scale_range: (0.9, 1.1), max_rotation_deg: 10.0, max_shear_deg: 5.0, max_translate_px: 20.0 }
    }
}

impl AugmentConfig {
    /// Every range collapsed: augmentation is the identity.
    pub fn none() -> Self {
        AugmentConfig { scale_range: (1.0, 1.0), max_rotation_deg: 0.0, max_shear_deg: 0.0, max_translate_px: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && lo <= 1.0 && hi >= 1.0 && hi.is_finite()) {
            return Err(Error::Config(format!("scale range ({lo}, {hi}) must be positive and contain 1")));
        }
        for (name, v) in [
            ("max_rotation_deg", self.max_rotation_deg),
            ("max_shear_deg", self.max_shear_deg),
            ("max_translate_px", self.max_translate_px),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.max_shear_deg >= 90.0 {
            return Err(Error::Config("max_shear_deg must be below 90".into()));
        }
        Ok(())
    }
}

/// `[[a, b, tx], [c, d, ty]]`: `dst = A·src + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine(pub [[f64; 3]; 2]);

impl Affine {
    pub const IDENTITY: Affine = Affine([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);

    pub fn translation(tx: f64, ty: f64) -> Affine {
        Affine([[1.0, 0.0, tx], [0.0, 1.0, ty]])
    }

    pub fn det(&self) -> f64 {
        let [[a, b, _], [c, d, _]] = self.0;
        a * d - b * c
    }

    pub fn apply(&self, (x, y): (f64, f64)) -> (f64, f64) {
        let [[a, b, tx], [c, d, ty]] = self.0;
        (a * x + b * y + tx, c * x + d * y + ty)
    }

    pub fn inverse(&self) -> Result<Affine> {
        let det = self.det();
        if !(det.abs() >= 1e-12) {
            return Err(Error::invalid(format!("affine matrix is singular (det = {det:e})")));
        }
        let [[a, b, tx], [c, d, ty]] = self.0;
        let (ia, ib, ic, id) = (d / det, -b / det, -c / det, a / det);
        Ok(Affine([[ia, ib, -(ia * tx + ib * ty)], [ic, id, -(ic * tx + id * ty)]]))
    }
}

fn symmetric(rng: &mut impl Rng, max: f64) -> f64 {
    if max == 0.0 {
        0.0
    } else {
        rng.gen_range(-max..=max)
    }
}

/// Scale, rotation and shear about the center of a `width`×`height` image,
/// followed by a translation; each parameter uniform in its range. Draw
/// order: scale, rotation, shear, tx, ty.
pub fn sample_affine(rng: &mut impl Rng, cfg: &AugmentConfig, width: usize, height: usize) -> Affine {
    let (lo, hi) = cfg.scale_range;
    let s = if lo == hi { lo } else { rng.gen_range(lo..=hi) };
    let theta = symmetric(rng, cfg.max_rotation_deg).to_radians();
    let shear = symmetric(rng, cfg.max_shear_deg).to_radians().tan();
    let tx = symmetric(rng, cfg.max_translate_px);
    let ty = symmetric(rng, cfg.max_translate_px);

    // L = R · Sh · S
    let (sin, cos) = theta.sin_cos();
    let (a, b) = (cos * s, (cos * shear - sin) * s);
    let (c, d) = (sin * s, (sin * shear + cos) * s);
    let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
    // dst = L·(src − center) + center + t
    let ox = (cx - (a * cx + b * cy)) + tx;
    let oy = (cy - (c * cx + d * cy)) + ty;
    Affine([[a, b, ox], [c, d, oy]])
}

fn warp_bilinear(src: &Tensor<f32>, inv: &Affine) -> Tensor<f32> {
    let (h, w) = (src.height(), src.width());
    let mut out = Tensor::zeros(src.shape());
    for y in 0..h {
        for x in 0..w {
            let (u, v) = inv.apply((x as f64, y as f64));
            let u = u.clamp(0.0, (w - 1) as f64);
            let v = v.clamp(0.0, (h - 1) as f64);
            let (x0, y0) = (u.floor() as usize, v.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = ((u - x0 as f64) as f32, (v - y0 as f64) as f32);
            for c in 0..src.channels() {
                let top = src.get(c, y0, x0) * (1.0 - fx) + src.get(c, y0, x1) * fx;
                let bottom = src.get(c, y1, x0) * (1.0 - fx) + src.get(c, y1, x1) * fx;
                out.set(c, y, x, top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    out
}

fn warp_nearest(src: &Tensor<f32>, inv: &Affine) -> Tensor<f32> {
    let (h, w) = (src.height(), src.width());
    Tensor::from_fn(src.shape(), |c, y, x| {
        let (u, v) = inv.apply((x as f64, y as f64));
        let sx = (u + 0.5).floor().clamp(0.0, (w - 1) as f64) as usize;
        let sy = (v + 0.5).floor().clamp(0.0, (h - 1) as f64) as usize;
        if src.get(c, sy, sx) >= 0.5 {
            1.0
        } else {
            0.0
        }
    })
}

/// Image: bilinear sampling with edge clamp. Mask: nearest neighbor with
/// the same matrix, re-binarized.
pub fn warp_sample(sample: &Sample, matrix: &Affine) -> Result<Sample> {
    let inv = matrix.inverse()?;
    Sample::new(warp_bilinear(&sample.image, &inv), warp_nearest(&sample.mask, &inv), sample.id.clone())
}

/// Agreement between the nearest-neighbor mask warp and a bilinear warp of
/// the same mask treated as an image, thresholded at 0.5. Two empty masks
/// agree perfectly.
pub fn alignment_iou(mask: &Tensor<f32>, matrix: &Affine) -> Result<f64> {
    let inv = matrix.inverse()?;
    let nearest = warp_nearest(mask, &inv);
    let smooth = warp_bilinear(mask, &inv);
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in nearest.data().iter().zip(smooth.data()) {
        let (a, b) = (a >= 0.5, b >= 0.5);
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Sample {
        let s = Shape::new(1, 20, 30).unwrap();
        let mask = Tensor::from_fn(s, |_, y, x| if (8..14).contains(&y) && (5..17).contains(&x) { 1.0 } else { 0.0 });
        let image = Tensor::from_fn(Shape::new(3, 20, 30).unwrap(), |c, y, x| ((c + 2 * y + 3 * x) % 17) as f32 / 16.0);
        Sample::new(image, mask, "t").unwrap()
    }

    #[test]
    fn collapsed_ranges_give_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_affine(&mut rng, &AugmentConfig::none(), 188, 120), Affine::IDENTITY);
    }

    #[test]
    fn pure_translation() {
        let cfg = AugmentConfig { max_translate_px: 20.0, ..AugmentConfig::none() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = sample_affine(&mut rng, &cfg, 188, 120);
        let [[a, b, tx], [c, d, ty]] = m.0;
        assert_eq!((a, b, c, d), (1.0, 0.0, 0.0, 1.0));
        assert!(tx.abs() <= 20.0 && ty.abs() <= 20.0 && (tx, ty) != (0.0, 0.0));
        assert_eq!(m, Affine::translation(tx, ty));
    }

    #[test]
    fn seeded_sequence_repeats() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..5).map(|_| sample_affine(&mut rng, &AugmentConfig::default(), 188, 120)).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9), draw(10));
    }

    #[test]
    fn center_is_fixed_without_translation() {
        let cfg = AugmentConfig { max_translate_px: 0.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let (x, y) = sample_affine(&mut rng, &cfg, 31, 21).apply((15.0, 10.0));
            assert!((x - 15.0).abs() < 1e-12 && (y - 10.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_warp_is_exact() {
        let s = sample();
        assert_eq!(warp_sample(&s, &Affine::IDENTITY).unwrap(), s);
    }

    #[test]
    fn shift_moves_mask() {
        let s = sample();
        let out = warp_sample(&s, &Affine::translation(5.0, 0.0)).unwrap();
        for y in 0..20 {
            for x in 5..30 {
                assert_eq!(out.mask.get(0, y, x), s.mask.get(0, y, x - 5), "({x},{y})");
            }
        }
    }

    #[test]
    fn singular_matrix_rejected() {
        let m = Affine([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0]]);
        assert!(warp_sample(&sample(), &m).is_err());
    }

    #[test]
    fn inverse_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = sample_affine(&mut rng, &AugmentConfig::default(), 50, 40);
        let inv = m.inverse().unwrap();
        let (x, y) = inv.apply(m.apply((3.5, -7.25)));
        assert!((x - 3.5).abs() < 1e-12 && (y + 7.25).abs() < 1e-12);
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(AugmentConfig { scale_range: (1.1, 0.9), ..Default::default() }.validate().is_err());
        assert!(AugmentConfig { max_rotation_deg: -1.0, ..Default::default() }.validate().is_err());
    }
}
