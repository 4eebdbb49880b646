use crate::error::{Error, Result};

/// One convolution layer: square kernel size and output feature maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub kernel: usize,
    pub channels: usize,
}

impl LayerSpec {
    pub const fn new(kernel: usize, channels: usize) -> Self {
        LayerSpec { kernel, channels }
    }
}

/// Which inputs the refinement stage sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefineInput {
    /// RGB image plus the upscaled coarse probability map (the cascade).
    ImageAndCoarse,
    /// RGB image only (full-resolution monolith ablation).
    ImageOnly,
    /// Upscaled coarse map only (no-image ablation).
    CoarseOnly,
}

impl RefineInput {
    pub fn channels(self) -> usize {
        match self {
            RefineInput::ImageAndCoarse => 4,
            RefineInput::ImageOnly => 3,
            RefineInput::CoarseOnly => 1,
        }
    }

    pub fn uses_image(self) -> bool {
        !matches!(self, RefineInput::CoarseOnly)
    }

    pub fn uses_coarse(self) -> bool {
        !matches!(self, RefineInput::ImageOnly)
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            RefineInput::ImageAndCoarse => 0,
            RefineInput::ImageOnly => 1,
            RefineInput::CoarseOnly => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(RefineInput::ImageAndCoarse),
            1 => Some(RefineInput::ImageOnly),
            2 => Some(RefineInput::CoarseOnly),
            _ => None,
        }
    }
}

pub const DEFAULT_CHAIN: [LayerSpec; 3] = [LayerSpec::new(3, 32), LayerSpec::new(5, 32), LayerSpec::new(7, 16)];
pub const DEFAULT_REFINE: [LayerSpec; 3] = [LayerSpec::new(3, 8), LayerSpec::new(3, 4), LayerSpec::new(3, 1)];
pub const DEFAULT_PYRAMID: [usize; 3] = [4, 8, 16];
pub const FULLRES_REFINE: [LayerSpec; 3] = [LayerSpec::new(5, 16), LayerSpec::new(5, 16), LayerSpec::new(5, 1)];
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;
/// Subtracted from every network input value (image channels and coarse
/// probabilities, both in `[0, 1]`) so the first layer sees zero-centered data.
pub const INPUT_CENTER: f64 = 0.5;

/// Layers per chain and per refinement stage.
pub const STACK_DEPTH: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct ArchConfig {
    /// Layer stack shared by every stage-1 chain.
    pub chain: Vec<LayerSpec>,
    /// Downscale factor of the input image for each chain, strictly
    /// increasing; the largest is the stage-1 output factor.
    pub pyramid_factors: Vec<usize>,
    pub refine: Vec<LayerSpec>,
    pub refine_input: RefineInput,
    pub leaky_slope: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            chain: DEFAULT_CHAIN.to_vec(),
            pyramid_factors: DEFAULT_PYRAMID.to_vec(),
            refine: DEFAULT_REFINE.to_vec(),
            refine_input: RefineInput::ImageAndCoarse,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        check_layers(&self.chain, "chain")?;
        check_layers(&self.refine, "refine")?;
        if self.refine.last().map(|l| l.channels) != Some(1) {
            return Err(Error::Config("the last refinement layer must output 1 channel".into()));
        }
        check_factors(&self.pyramid_factors)?;
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::Config(format!("leaky slope must lie in (0, 1), got {}", self.leaky_slope)));
        }
        Ok(())
    }

    pub fn coarse_factor(&self) -> usize {
        self.pyramid_factors.last().copied().unwrap_or(1)
    }
}

fn check_layers(layers: &[LayerSpec], what: &str) -> Result<()> {
    if layers.len() != STACK_DEPTH {
        return Err(Error::Config(format!("{what} needs exactly {STACK_DEPTH} layers, got {}", layers.len())));
    }
    for l in layers {
        if l.kernel % 2 == 0 || l.channels == 0 {
            return Err(Error::Config(format!(
                "{what} layer needs an odd kernel and at least one channel, got {}x{} / {}",
                l.kernel, l.kernel, l.channels
            )));
        }
    }
    Ok(())
}

pub(crate) fn check_factors(factors: &[usize]) -> Result<()> {
    if factors.is_empty() || factors[0] == 0 || factors.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!(
            "pyramid factors must be positive and strictly increasing, got {factors:?}"
        )));
    }
    Ok(())
}

/// Ceiling division used for every downscaled resolution.
pub fn scaled_dim(full: usize, factor: usize) -> usize {
    full.div_ceil(factor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_validates() {
        ArchConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_inconsistent_configs() {
        let mut c = ArchConfig::default();
        c.pyramid_factors = vec![4, 4, 16];
        assert!(c.validate().is_err());
        let mut c = ArchConfig::default();
        c.refine[2].channels = 2;
        assert!(c.validate().is_err());
        let mut c = ArchConfig::default();
        c.chain[1].kernel = 4;
        assert!(c.validate().is_err());
        let mut c = ArchConfig::default();
        c.chain.pop();
        assert!(c.validate().is_err());
    }

    #[test]
    fn ceiling_division() {
        assert_eq!(scaled_dim(120, 16), 8);
        assert_eq!(scaled_dim(188, 16), 12);
        assert_eq!(scaled_dim(752, 4), 188);
        assert_eq!(scaled_dim(121, 8), 16);
    }
}
