//! Synthetic egocentric scenes: textured background, skin-toned hands
//! entering from the frame edge, and skin-toned distractor blobs that are
//! not hands.
//!
//! Every length is expressed relative to the shorter image side so the same
//! configuration works at any resolution.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{resize_bilinear, Shape, Tensor};

use super::{stream_rng, Sample};

/// Skin colors are `shade · base` with `base = (r, r·g_ratio, r·b_ratio)`.
/// Shading preserves the chromatic ratios, which makes membership easy to
/// test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SkinModel {
    pub red: (f64, f64),
    pub green_ratio: (f64, f64),
    pub blue_ratio: (f64, f64),
    pub shade: (f64, f64),
}

impl Default for SkinModel {
    fn default() -> Self {
        SkinModel { red: (0.5, 0.92), green_ratio: (0.62, 0.82), blue_ratio: (0.45, 0.72), shade: (0.72, 1.08) }
    }
}

impl SkinModel {
    fn sample_base(&self, rng: &mut impl Rng) -> [f64; 3] {
        let r = uniform(rng, self.red);
        [r, r * uniform(rng, self.green_ratio), r * uniform(rng, self.blue_ratio)]
    }

    /// Whether `rgb` is `shade · base` for some admissible shade and base.
    pub fn contains(&self, rgb: [f64; 3], tol: f64) -> bool {
        let [r, g, b] = rgb;
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo - tol && v <= hi + tol;
        r > 0.0
            && inside(r, (self.red.0 * self.shade.0, self.red.1 * self.shade.1))
            && inside(g / r, self.green_ratio)
            && inside(b / r, self.blue_ratio)
    }

    fn validate(&self) -> Result<()> {
        for (name, r) in [("red", self.red), ("green_ratio", self.green_ratio), ("blue_ratio", self.blue_ratio)] {
            check_range(name, r)?;
            if r.0 <= 0.0 || r.1 > 1.0 {
                return Err(Error::Config(format!("skin {name} must lie in (0, 1]")));
            }
        }
        check_range("shade", self.shade)?;
        if self.shade.0 <= 0.0 || self.red.1 * self.shade.1 > 1.0 {
            return Err(Error::Config("skin shade must keep colors within (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub count: usize,
    pub width: usize,
    pub height: usize,
    pub hands: (usize, usize),
    /// Palm radius as a fraction of the shorter image side.
    pub palm_radius: (f64, f64),
    pub fingers: (usize, usize),
    /// Finger length and radius as fractions of the palm radius.
    pub finger_length: (f64, f64),
    pub finger_radius: (f64, f64),
    /// Hand layouts covering a fraction of the frame outside this range are
    /// redrawn.
    pub hand_fraction: (f64, f64),
    pub skin: SkinModel,
    pub patches: (usize, usize),
    /// Chance that a background patch is a skin-toned, wood-grained board.
    pub wood_probability: f64,
    /// Amplitude of the smooth background color variation.
    pub background_variation: f64,
    /// Amplitude of the per-pixel background grain.
    pub background_grain: f64,
    /// Uniform per-pixel sensor noise applied to the whole image.
    pub pixel_noise: f64,
    pub distractor_probability: f64,
    pub max_distractors: usize,
    /// Distractor radius as a fraction of the shorter image side.
    pub distractor_radius: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            count: 200,
            width: 188,
            height: 120,
            hands: (1, 2),
            palm_radius: (0.12, 0.18),
            fingers: (3, 5),
            finger_length: (0.9, 1.5),
            finger_radius: (0.17, 0.24),
            hand_fraction: (0.03, 0.5),
            skin: SkinModel::default(),
            patches: (2, 6),
            wood_probability: 0.2,
            background_variation: 0.12,
            background_grain: 0.02,
            pixel_noise: 0.015,
            distractor_probability: 0.6,
            max_distractors: 2,
            distractor_radius: (0.08, 0.16),
        }
    }
}

/// Smallest image side accepted; the coarsest pyramid level divides by 16.
pub const MIN_SIDE: usize = 16;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < MIN_SIDE || self.height < MIN_SIDE {
            return Err(Error::Config(format!(
                "resolution {}x{} is below the {MIN_SIDE}-pixel minimum",
                self.width, self.height
            )));
        }
        if self.hands.0 > self.hands.1 || self.fingers.0 > self.fingers.1 || self.patches.0 > self.patches.1 {
            return Err(Error::Config("count ranges must satisfy min <= max".into()));
        }
        if self.fingers.0 == 0 {
            return Err(Error::Config("hands need at least one finger".into()));
        }
        for (name, r) in [
            ("palm_radius", self.palm_radius),
            ("finger_length", self.finger_length),
            ("finger_radius", self.finger_radius),
            ("hand_fraction", self.hand_fraction),
            ("distractor_radius", self.distractor_radius),
        ] {
            check_range(name, r)?;
            if r.0 <= 0.0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.hand_fraction.1 > 1.0 {
            return Err(Error::Config("hand_fraction must not exceed 1".into()));
        }
        for (name, p) in [("distractor_probability", self.distractor_probability), ("wood_probability", self.wood_probability)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        for (name, v) in [
            ("background_variation", self.background_variation),
            ("background_grain", self.background_grain),
            ("pixel_noise", self.pixel_noise),
        ] {
            if !(0.0..=0.5).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 0.5]")));
            }
        }
        self.skin.validate()
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::Config(format!("{name} range ({lo}, {hi}) is empty")));
    }
    Ok(())
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

fn uniform_count(rng: &mut impl Rng, (lo, hi): (usize, usize)) -> usize {
    rng.gen_range(lo..=hi)
}

type Point = (f64, f64);

#[derive(Clone, Copy, Debug)]
enum Blob {
    Capsule { a: Point, b: Point, r: f64 },
    /// `u` is the unit major direction; `ru` along it, `rv` across.
    Ellipse { c: Point, u: Point, ru: f64, rv: f64 },
}

impl Blob {
    fn contains(&self, (x, y): Point) -> bool {
        match *self {
            Blob::Capsule { a, b, r } => {
                let (dx, dy) = (b.0 - a.0, b.1 - a.1);
                let len2 = dx * dx + dy * dy;
                let t = if len2 > 0.0 { (((x - a.0) * dx + (y - a.1) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
                let (px, py) = (a.0 + t * dx - x, a.1 + t * dy - y);
                px * px + py * py <= r * r
            }
            Blob::Ellipse { c, u, ru, rv } => {
                let (dx, dy) = (x - c.0, y - c.1);
                let along = dx * u.0 + dy * u.1;
                let across = -dx * u.1 + dy * u.0;
                (along / ru).powi(2) + (across / rv).powi(2) <= 1.0
            }
        }
    }
}

fn rotate((x, y): Point, angle: f64) -> Point {
    let (s, c) = angle.sin_cos();
    (c * x - s * y, s * x + c * y)
}

fn offset(p: Point, d: Point, t: f64) -> Point {
    (p.0 + t * d.0, p.1 + t * d.1)
}

struct Hand {
    blobs: Vec<Blob>,
    base: [f64; 3],
    /// shade = level + tilt · (normalized position)
    level: f64,
    tilt: Point,
}

impl Hand {
    fn contains(&self, p: Point) -> bool {
        self.blobs.iter().any(|b| b.contains(p))
    }
}

fn sample_hand(rng: &mut impl Rng, cfg: &SynthConfig) -> Hand {
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let side = w.min(h);
    // egocentric entry: mostly from below, sometimes from the sides
    let edge = rng.gen_range(0.0..1.0);
    let along = rng.gen_range(0.15..0.85);
    let (entry, inward) = if edge < 0.5 {
        ((along * w, h), (0.0, -1.0))
    } else if edge < 0.75 {
        ((0.0, along * h), (1.0, 0.0))
    } else {
        ((w, along * h), (-1.0, 0.0))
    };
    let dir = rotate(inward, rng.gen_range(-0.5..0.5));
    let palm_r = uniform(rng, cfg.palm_radius) * side;
    let palm_c = offset(entry, dir, rng.gen_range(0.4..0.75) * side);
    let ru = palm_r * rng.gen_range(1.0..1.2);
    let rv = palm_r * rng.gen_range(0.8..1.0);
    let mut blobs = vec![
        Blob::Ellipse { c: palm_c, u: dir, ru, rv },
        // forearm, starting well outside the frame
        Blob::Capsule { a: offset(entry, dir, -2.0 * palm_r), b: palm_c, r: palm_r * rng.gen_range(0.5..0.7) },
    ];
    let n = uniform_count(rng, cfg.fingers);
    let spread = rng.gen_range(0.45..0.8);
    let thumb = n >= 3 && rng.gen_bool(0.5);
    let thumb_side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    for i in 0..n {
        let (angle, reach, length) = if thumb && i == 0 {
            (thumb_side * rng.gen_range(1.05..1.45), 0.4, uniform(rng, cfg.finger_length) * 0.75)
        } else {
            let k = if thumb { n - 1 } else { n };
            let j = if thumb { i - 1 } else { i };
            let t = if k == 1 { 0.0 } else { j as f64 / (k - 1) as f64 * 2.0 - 1.0 };
            (t * spread + rng.gen_range(-0.1..0.1), 0.7, uniform(rng, cfg.finger_length))
        };
        let fdir = rotate(dir, angle);
        let base = offset(palm_c, rotate(dir, angle), reach * ru);
        let fdir = rotate(fdir, rng.gen_range(-0.15..0.15));
        blobs.push(Blob::Capsule {
            a: base,
            b: offset(base, fdir, length * palm_r),
            r: uniform(rng, cfg.finger_radius) * palm_r,
        });
    }
    let level = rng.gen_range(0.84..0.96);
    let tilt = (rng.gen_range(-0.12..0.12), rng.gen_range(-0.12..0.12));
    Hand { blobs, base: cfg.skin.sample_base(rng), level, tilt }
}

/// Smooth random field: a coarse random grid upsampled bilinearly.
fn smooth_field(rng: &mut impl Rng, channels: usize, h: usize, w: usize, amplitude: f64) -> Tensor<f32> {
    let grid = Shape::new(channels, 4, 6).expect("nonzero grid");
    let coarse = Tensor::from_fn(grid, |_, _, _| (amplitude * rng.gen_range(-1.0..1.0)) as f32);
    resize_bilinear(&coarse, h, w).expect("valid resize")
}

fn random_background_color(rng: &mut impl Rng, skin: &SkinModel) -> [f64; 3] {
    loop {
        let c = [rng.gen_range(0.08..0.92), rng.gen_range(0.08..0.92), rng.gen_range(0.08..0.92)];
        if !skin.contains(c, 0.06) {
            return c;
        }
    }
}

fn paint_background(rng: &mut impl Rng, cfg: &SynthConfig, image: &mut Tensor<f32>) {
    let (h, w) = (cfg.height, cfg.width);
    let base = random_background_color(rng, &cfg.skin);
    let field = smooth_field(rng, 3, h, w, cfg.background_variation);
    for c in 0..3 {
        for (v, f) in image.channel_mut(c).iter_mut().zip(field.channel(c)) {
            *v = (base[c] + *f as f64) as f32;
        }
    }
    let side = (w.min(h)) as f64;
    for _ in 0..uniform_count(rng, cfg.patches) {
        let color = random_background_color(rng, &cfg.skin);
        let c = (rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64));
        let half = (rng.gen_range(0.1..0.45) * side, rng.gen_range(0.1..0.45) * side);
        if rng.gen_bool(cfg.wood_probability) {
            paint_wood(rng, cfg, c, half, image);
            continue;
        }
        let round = rng.gen_bool(0.4);
        let blob = Blob::Ellipse { c, u: rotate((1.0, 0.0), rng.gen_range(0.0..PI)), ru: half.0, rv: half.1 };
        let gradient = (rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
        for y in 0..h {
            for x in 0..w {
                let p = (x as f64 + 0.5, y as f64 + 0.5);
                let inside = if round {
                    blob.contains(p)
                } else {
                    (p.0 - c.0).abs() <= half.0 && (p.1 - c.1).abs() <= half.1
                };
                if inside {
                    let g = gradient.0 * (p.0 - c.0) / side + gradient.1 * (p.1 - c.1) / side;
                    for (ch, &col) in color.iter().enumerate() {
                        image.set(ch, y, x, (col + g) as f32);
                    }
                }
            }
        }
    }
    if cfg.background_grain > 0.0 {
        for v in image.data_mut() {
            *v += (cfg.background_grain * rng.gen_range(-1.0..1.0)) as f32;
        }
    }
}

/// Skin-toned rectangle with fine grain stripes along one axis.
fn paint_wood(rng: &mut impl Rng, cfg: &SynthConfig, c: Point, half: Point, image: &mut Tensor<f32>) {
    let (h, w) = (cfg.height, cfg.width);
    let side = w.min(h) as f64;
    let base = cfg.skin.sample_base(rng);
    let period = rng.gen_range(0.06..0.1) * side;
    let phase = rng.gen_range(0.0..2.0 * PI);
    let along_x = rng.gen_bool(0.5);
    let (lo, hi) = cfg.skin.shade;
    for y in 0..h {
        for x in 0..w {
            let p = (x as f64 + 0.5, y as f64 + 0.5);
            if (p.0 - c.0).abs() > half.0 || (p.1 - c.1).abs() > half.1 {
                continue;
            }
            let t = if along_x { p.1 } else { p.0 };
            let shade = (0.88 + 0.12 * (2.0 * PI * t / period + phase).sin()).clamp(lo, hi);
            for (ch, &b) in base.iter().enumerate() {
                image.set(ch, y, x, (shade * b) as f32);
            }
        }
    }
}

/// Skin-toned, roughly round blobs fully inside the frame and away from the
/// hands, shaded exactly like hands: locally they look like skin, and only
/// their shape and placement give them away.
fn paint_distractors(rng: &mut impl Rng, cfg: &SynthConfig, mask: &Tensor<f32>, image: &mut Tensor<f32>) {
    if cfg.max_distractors == 0 || !rng.gen_bool(cfg.distractor_probability) {
        return;
    }
    let (h, w) = (cfg.height, cfg.width);
    let side = w.min(h) as f64;
    for _ in 0..rng.gen_range(1..=cfg.max_distractors) {
        let r = uniform(rng, cfg.distractor_radius) * side;
        let ru = r * rng.gen_range(0.8..1.25);
        let rv = r * rng.gen_range(0.7..1.0);
        let margin = ru + 2.0;
        if 2.0 * margin >= w.min(h) as f64 {
            continue;
        }
        let c = (rng.gen_range(margin..w as f64 - margin), rng.gen_range(margin..h as f64 - margin));
        let blob = Blob::Ellipse { c, u: rotate((1.0, 0.0), rng.gen_range(0.0..PI)), ru, rv };
        let base = cfg.skin.sample_base(rng);
        let level = rng.gen_range(0.84..0.96);
        let tilt = (rng.gen_range(-0.12..0.12), rng.gen_range(-0.12..0.12));
        let field = smooth_field(rng, 1, h, w, 0.05);
        let (lo, hi) = cfg.skin.shade;
        let ring = Blob::Ellipse { c, u: rotate((1.0, 0.0), 0.0), ru: margin + 1.0, rv: margin + 1.0 };
        let clear = (0..h).all(|y| {
            (0..w).all(|x| mask.get(0, y, x) == 0.0 || !ring.contains((x as f64 + 0.5, y as f64 + 0.5)))
        });
        if !clear {
            continue;
        }
        for y in 0..h {
            for x in 0..w {
                let p = (x as f64 + 0.5, y as f64 + 0.5);
                if !blob.contains(p) {
                    continue;
                }
                let rel = (p.0 / w as f64 - 0.5, p.1 / h as f64 - 0.5);
                let shade = (level + tilt.0 * rel.0 + tilt.1 * rel.1 + field.get(0, y, x) as f64).clamp(lo, hi);
                for (ch, &b) in base.iter().enumerate() {
                    image.set(ch, y, x, (shade * b) as f32);
                }
            }
        }
    }
}

fn rasterize(hands: &[Hand], h: usize, w: usize) -> Tensor<f32> {
    Tensor::from_fn(Shape::new(1, h, w).expect("nonzero dims"), |_, y, x| {
        let p = (x as f64 + 0.5, y as f64 + 0.5);
        if hands.iter().any(|hand| hand.contains(p)) {
            1.0
        } else {
            0.0
        }
    })
}

/// Renders one scene. Every random decision is drawn from `rng`.
pub fn generate_sample(rng: &mut impl Rng, cfg: &SynthConfig, id: &str) -> Result<Sample> {
    cfg.validate()?;
    let (h, w) = (cfg.height, cfg.width);
    let n_hands = uniform_count(rng, cfg.hands);
    let mut hands = Vec::new();
    let mut mask = rasterize(&hands, h, w);
    if n_hands > 0 {
        for _ in 0..32 {
            hands = (0..n_hands).map(|_| sample_hand(rng, cfg)).collect();
            mask = rasterize(&hands, h, w);
            let fraction = mask.sum() as f64 / (h * w) as f64;
            if fraction >= cfg.hand_fraction.0 && fraction <= cfg.hand_fraction.1 {
                break;
            }
        }
    }

    let mut image = Tensor::zeros(Shape::new(3, h, w)?);
    paint_background(rng, cfg, &mut image);
    paint_distractors(rng, cfg, &mask, &mut image);

    let (lo, hi) = cfg.skin.shade;
    let shade_field = smooth_field(rng, 1, h, w, 0.05);
    for y in 0..h {
        for x in 0..w {
            if mask.get(0, y, x) == 0.0 {
                continue;
            }
            let p = (x as f64 + 0.5, y as f64 + 0.5);
            // later hands are drawn on top
            let hand = hands.iter().rev().find(|hand| hand.contains(p)).expect("mask pixel belongs to a hand");
            let rel = (p.0 / w as f64 - 0.5, p.1 / h as f64 - 0.5);
            let shade = (hand.level + hand.tilt.0 * rel.0 + hand.tilt.1 * rel.1 + shade_field.get(0, y, x) as f64)
                .clamp(lo, hi);
            for (ch, &b) in hand.base.iter().enumerate() {
                image.set(ch, y, x, (shade * b) as f32);
            }
        }
    }

    if cfg.pixel_noise > 0.0 {
        for v in image.data_mut() {
            *v += (cfg.pixel_noise * rng.gen_range(-1.0..1.0)) as f32;
        }
    }
    for v in image.data_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Sample::new(image, mask, id)
}

/// `cfg.count` samples; sample `i` uses stream `i` of `seed`.
pub fn generate_dataset(cfg: &SynthConfig, seed: u64) -> Result<Vec<Sample>> {
    cfg.validate()?;
    (0..cfg.count)
        .map(|i| generate_sample(&mut stream_rng(seed, i as u64), cfg, &format!("synth_{i:04}")))
        .collect()
}
