//! Run configuration: `key = value` lines with `#` comments, overridable
//! from the environment (`CSEG_` + key upper-cased, dots as underscores)
//! and from `--set key=value` flags, in that order of precedence.

use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use cseg::bench::AblationConfig;
use cseg::data::SynthConfig;
use cseg::eval::DEFAULT_BINS;
use cseg::network::ArchConfig;
use cseg::training::{Stage, TrainConfig};

pub const ENV_PREFIX: &str = "CSEG_";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    /// 188×120 images.
    Desk,
    /// 752×480 images, the full sensor resolution.
    Paper,
}

impl Profile {
    pub fn resolution(self) -> (usize, usize) {
        match self {
            Profile::Desk => (120, 188),
            Profile::Paper => (480, 752),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub profile: Profile,
    pub seed: u64,
    pub synth: SynthConfig,
    pub train_fraction: f64,
    pub stage1: TrainConfig,
    pub stage2: TrainConfig,
    pub color_bins: usize,
    pub bench_reps: usize,
    /// Flat color shown behind mask-negative pixels in composites.
    pub composite_color: [f64; 3],
    /// Dataset directory holding the manifest.
    pub data: PathBuf,
    pub model: PathBuf,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            profile: Profile::Desk,
            seed: 0,
            synth: SynthConfig::default(),
            train_fraction: 0.9,
            stage1: TrainConfig::desk(Stage::One),
            stage2: TrainConfig::desk(Stage::Two),
            color_bins: DEFAULT_BINS,
            bench_reps: 50,
            composite_color: [0.2, 0.6, 0.25],
            data: PathBuf::from("data"),
            model: PathBuf::from("model.cseg"),
            out: PathBuf::from("out"),
        }
    }
}

type Getter = fn(&RunConfig) -> String;
type Setter = fn(&mut RunConfig, &str) -> Result<(), String>;

pub struct Key {
    pub name: &'static str,
    pub help: &'static str,
    get: Getter,
    set: Setter,
}

fn parse<T: FromStr>(v: &str) -> Result<T, String>
where
    T::Err: Display,
{
    v.trim().parse().map_err(|e: T::Err| format!("{v:?}: {e}"))
}

fn parse_pair<T: FromStr>(v: &str) -> Result<(T, T), String>
where
    T::Err: Display,
{
    let (a, b) = v.split_once(',').ok_or_else(|| format!("{v:?}: expected two comma-separated values"))?;
    Ok((parse(a)?, parse(b)?))
}

fn pair<T: Display>(p: (T, T)) -> String {
    format!("{},{}", p.0, p.1)
}

macro_rules! key {
    ($name:literal, $help:literal, |$c:ident| $get:expr, |$m:ident, $v:ident| $set:expr) => {
        Key {
            name: $name,
            help: $help,
            get: |$c: &RunConfig| $get.to_string(),
            set: |$m: &mut RunConfig, $v: &str| {
                $set;
                Ok(())
            },
        }
    };
}

/// Every accepted key, in documentation order.
pub fn keys() -> Vec<Key> {
    vec![
        key!("profile", "image resolution profile: desk (188x120) or paper (752x480)",
            |c| match c.profile { Profile::Desk => "desk", Profile::Paper => "paper" },
            |m, v| m.set_profile(match v.trim() {
                "desk" => Profile::Desk,
                "paper" => Profile::Paper,
                other => return Err(format!("{other:?}: expected desk or paper")),
            })),
        key!("seed", "seed for data generation, splitting, initialization and training", |c| c.seed,
            |m, v| m.seed = parse(v)?),
        key!("synth.count", "number of synthetic images", |c| c.synth.count, |m, v| m.synth.count = parse(v)?),
        key!("synth.hands", "min,max hands per image", |c| pair(c.synth.hands), |m, v| m.synth.hands = parse_pair(v)?),
        key!("synth.palm_radius", "min,max palm radius (fraction of the shorter side)", |c| pair(c.synth.palm_radius),
            |m, v| m.synth.palm_radius = parse_pair(v)?),
        key!("synth.fingers", "min,max fingers per hand", |c| pair(c.synth.fingers), |m, v| m.synth.fingers = parse_pair(v)?),
        key!("synth.finger_length", "min,max finger length (fraction of palm radius)", |c| pair(c.synth.finger_length),
            |m, v| m.synth.finger_length = parse_pair(v)?),
        key!("synth.finger_radius", "min,max finger radius (fraction of palm radius)", |c| pair(c.synth.finger_radius),
            |m, v| m.synth.finger_radius = parse_pair(v)?),
        key!("synth.hand_fraction", "min,max fraction of the frame covered by hands", |c| pair(c.synth.hand_fraction),
            |m, v| m.synth.hand_fraction = parse_pair(v)?),
        key!("synth.skin_red", "min,max red level of skin", |c| pair(c.synth.skin.red), |m, v| m.synth.skin.red = parse_pair(v)?),
        key!("synth.skin_green_ratio", "min,max green/red ratio of skin", |c| pair(c.synth.skin.green_ratio),
            |m, v| m.synth.skin.green_ratio = parse_pair(v)?),
        key!("synth.skin_blue_ratio", "min,max blue/red ratio of skin", |c| pair(c.synth.skin.blue_ratio),
            |m, v| m.synth.skin.blue_ratio = parse_pair(v)?),
        key!("synth.skin_shade", "min,max shading factor on skin", |c| pair(c.synth.skin.shade),
            |m, v| m.synth.skin.shade = parse_pair(v)?),
        key!("synth.patches", "min,max background patches", |c| pair(c.synth.patches), |m, v| m.synth.patches = parse_pair(v)?),
        key!("synth.wood_probability", "chance a patch is a skin-toned wood board", |c| c.synth.wood_probability,
            |m, v| m.synth.wood_probability = parse(v)?),
        key!("synth.background_variation", "amplitude of smooth background color variation", |c| c.synth.background_variation,
            |m, v| m.synth.background_variation = parse(v)?),
        key!("synth.background_grain", "amplitude of per-pixel background grain", |c| c.synth.background_grain,
            |m, v| m.synth.background_grain = parse(v)?),
        key!("synth.pixel_noise", "amplitude of per-pixel sensor noise", |c| c.synth.pixel_noise,
            |m, v| m.synth.pixel_noise = parse(v)?),
        key!("synth.distractor_probability", "chance an image has skin-toned distractor blobs",
            |c| c.synth.distractor_probability, |m, v| m.synth.distractor_probability = parse(v)?),
        key!("synth.max_distractors", "most distractor blobs per image", |c| c.synth.max_distractors,
            |m, v| m.synth.max_distractors = parse(v)?),
        key!("synth.distractor_radius", "min,max distractor radius (fraction of the shorter side)",
            |c| pair(c.synth.distractor_radius), |m, v| m.synth.distractor_radius = parse_pair(v)?),
        key!("split.train_fraction", "fraction of images tagged train", |c| c.train_fraction,
            |m, v| m.train_fraction = parse(v)?),
        key!("train.stage1.epochs", "stage-1 epochs", |c| c.stage1.epochs, |m, v| m.stage1.epochs = parse(v)?),
        key!("train.stage1.batch_size", "stage-1 batch size", |c| c.stage1.batch_size, |m, v| m.stage1.batch_size = parse(v)?),
        key!("train.stage1.learning_rate", "stage-1 RMSprop learning rate", |c| c.stage1.optimizer.learning_rate,
            |m, v| m.stage1.optimizer.learning_rate = parse(v)?),
        key!("train.stage2.epochs", "stage-2 epochs (also the ablation variants)", |c| c.stage2.epochs,
            |m, v| m.stage2.epochs = parse(v)?),
        key!("train.stage2.batch_size", "stage-2 batch size", |c| c.stage2.batch_size, |m, v| m.stage2.batch_size = parse(v)?),
        key!("train.stage2.learning_rate", "stage-2 RMSprop learning rate", |c| c.stage2.optimizer.learning_rate,
            |m, v| m.stage2.optimizer.learning_rate = parse(v)?),
        key!("train.rmsprop_decay", "RMSprop squared-gradient decay", |c| c.stage1.optimizer.decay,
            |m, v| { let d = parse(v)?; m.stage1.optimizer.decay = d; m.stage2.optimizer.decay = d; }),
        key!("train.rmsprop_eps", "RMSprop epsilon", |c| c.stage1.optimizer.eps,
            |m, v| { let e = parse(v)?; m.stage1.optimizer.eps = e; m.stage2.optimizer.eps = e; }),
        key!("train.alpha", "boosted cross-entropy exponent", |c| c.stage1.loss.alpha,
            |m, v| { let a = parse(v)?; m.stage1.loss.alpha = a; m.stage2.loss.alpha = a; }),
        key!("augment.scale", "min,max random scale factor", |c| pair(c.stage1.augment.scale_range),
            |m, v| { let s = parse_pair(v)?; m.stage1.augment.scale_range = s; m.stage2.augment.scale_range = s; }),
        key!("augment.rotation_deg", "largest random rotation in degrees", |c| c.stage1.augment.max_rotation_deg,
            |m, v| { let r = parse(v)?; m.stage1.augment.max_rotation_deg = r; m.stage2.augment.max_rotation_deg = r; }),
        key!("augment.shear_deg", "largest random shear in degrees", |c| c.stage1.augment.max_shear_deg,
            |m, v| { let s = parse(v)?; m.stage1.augment.max_shear_deg = s; m.stage2.augment.max_shear_deg = s; }),
        key!("augment.translate_px", "largest random translation per axis in pixels", |c| c.stage1.augment.max_translate_px,
            |m, v| { let t = parse(v)?; m.stage1.augment.max_translate_px = t; m.stage2.augment.max_translate_px = t; }),
        key!("eval.color_bins", "histogram bins per channel of the color baseline", |c| c.color_bins,
            |m, v| m.color_bins = parse(v)?),
        key!("bench.reps", "timed inferences per variant", |c| c.bench_reps, |m, v| m.bench_reps = parse(v)?),
        key!("infer.composite_color", "r,g,b in [0,1] behind non-hand pixels of the composite",
            |c| c.composite_color.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
            |m, v| m.composite_color = parse_rgb(v)?),
        key!("paths.data", "dataset directory (synth writes it, the rest read its manifest)", |c| c.data.display(),
            |m, v| m.data = PathBuf::from(v.trim())),
        key!("paths.model", "model file", |c| c.model.display(), |m, v| m.model = PathBuf::from(v.trim())),
        key!("paths.out", "output directory", |c| c.out.display(), |m, v| m.out = PathBuf::from(v.trim())),
    ]
}

fn parse_rgb(v: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = v.split(',').map(parse).collect::<Result<_, _>>()?;
    match parts[..] {
        [r, g, b] if parts.iter().all(|c| (0.0..=1.0).contains(c)) => Ok([r, g, b]),
        _ => Err(format!("{v:?}: expected three values in [0, 1]")),
    }
}

pub fn env_name(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.to_uppercase().replace('.', "_"))
}

impl RunConfig {
    fn set_profile(&mut self, p: Profile) {
        self.profile = p;
        (self.synth.height, self.synth.width) = p.resolution();
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let k = keys().into_iter().find(|k| k.name == key).ok_or_else(|| format!("unknown config key {key:?}"))?;
        (k.set)(self, value).map_err(|e| format!("{key}: {e}"))
    }

    /// Parses config text on top of `self`. The profile is applied first
    /// wherever it appears.
    pub fn apply_text(&mut self, text: &str) -> Result<(), String> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| format!("config line {}: expected key = value", i + 1))?;
            pairs.push((i + 1, k.trim().to_string(), v.trim().to_string()));
        }
        pairs.sort_by_key(|(_, k, _)| k != "profile");
        for (line, k, v) in pairs {
            self.set(&k, &v).map_err(|e| format!("config line {line}: {e}"))?;
        }
        Ok(())
    }

    /// Applies `CSEG_*` variables from `vars`; unknown `CSEG_` names are
    /// rejected like unknown keys.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), String> {
        let table = keys();
        let mut found: Vec<(&'static str, String)> = Vec::new();
        for (name, value) in vars {
            if !name.starts_with(ENV_PREFIX) {
                continue;
            }
            let key = table
                .iter()
                .find(|k| env_name(k.name) == name)
                .ok_or_else(|| format!("unknown config variable {name}"))?;
            found.push((key.name, value));
        }
        found.sort_by_key(|(k, _)| *k != "profile");
        for (k, v) in found {
            self.set(k, &v)?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        keys().iter().map(|k| format!("{} = {}\n", k.name, (k.get)(self))).collect()
    }

    pub fn validate(&self) -> Result<(), String> {
        self.synth.validate().map_err(|e| e.to_string())?;
        for t in [&self.stage1, &self.stage2] {
            t.validate().map_err(|e| e.to_string())?;
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(format!("split.train_fraction must lie in (0, 1), got {}", self.train_fraction));
        }
        if self.color_bins == 0 {
            return Err("eval.color_bins must be positive".into());
        }
        Ok(())
    }

    pub fn stage_configs(&self) -> (TrainConfig, TrainConfig) {
        (TrainConfig { seed: self.seed, ..self.stage1 }, TrainConfig { seed: self.seed, ..self.stage2 })
    }

    pub fn ablation(&self) -> AblationConfig {
        let (stage1, stage2) = self.stage_configs();
        AblationConfig {
            arch: ArchConfig::default(),
            stage1,
            stage2,
            color_bins: self.color_bins,
            reps: self.bench_reps,
            seed: self.seed,
        }
    }
}

/// `--help` text listing every key with its default.
pub fn keys_help() -> String {
    let defaults = RunConfig::default();
    let mut s = format!(
        "Configuration keys (config file `key = value`, environment {ENV_PREFIX}KEY_NAME, or --set key=value):\n"
    );
    for k in keys() {
        s.push_str(&format!("  {:<30} {} [default: {}]\n", k.name, k.help, (k.get)(&defaults)));
    }
    s
}
