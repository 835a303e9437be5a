use std::fmt;

use crate::error::{Error, Result};

/// Position of a stack of blocks in the U.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Level {
    /// Encoder level 1..=5 (1 is full resolution).
    Encoder(u8),
    Bridge,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::Encoder(l) => write!(f, "level {l}"),
            Level::Bridge => f.write_str("bridge"),
        }
    }
}

/// One row of the architecture table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LevelSpec {
    pub level: Level,
    pub encoder_block_count: usize,
    /// `(reduce, spatial, expand)` channel counts of each bottleneck block.
    pub bottleneck_channels: (usize, usize, usize),
    /// Width of the decoder residual block at this level; `None` for the bridge.
    pub decoder_channels: Option<usize>,
    /// Whether the first block strides by 2.
    pub downsamples: bool,
}

impl LevelSpec {
    const fn new(
        level: Level,
        blocks: usize,
        reduce: usize,
        decoder: Option<usize>,
        downsamples: bool,
    ) -> Self {
        Self {
            level,
            encoder_block_count: blocks,
            bottleneck_channels: (reduce, reduce, 4 * reduce),
            decoder_channels: decoder,
            downsamples,
        }
    }

    pub fn expand_channels(&self) -> usize {
        self.bottleneck_channels.2
    }

    /// Stride of block `index` within this level's stack.
    pub fn stride_for(&self, index: usize) -> usize {
        if self.downsamples && index == 0 {
            2
        } else {
            1
        }
    }

    /// Channel counts divided by `divisor` (a reduced-width clone).
    pub fn scaled(&self, divisor: usize) -> Self {
        let (r, s, e) = self.bottleneck_channels;
        Self {
            bottleneck_channels: (r / divisor, s / divisor, e / divisor),
            decoder_channels: self.decoder_channels.map(|d| d / divisor),
            ..*self
        }
    }
}

/// The full-width table: encoder levels 1-5 followed by the bridge.
pub const LEVELS: [LevelSpec; 6] = [
    LevelSpec::new(Level::Encoder(1), 2, 16, Some(32), false),
    LevelSpec::new(Level::Encoder(2), 3, 32, Some(64), true),
    LevelSpec::new(Level::Encoder(3), 3, 64, Some(128), true),
    LevelSpec::new(Level::Encoder(4), 5, 128, Some(256), true),
    LevelSpec::new(Level::Encoder(5), 14, 256, Some(512), true),
    LevelSpec::new(Level::Bridge, 4, 512, None, true),
];

/// Smallest accepted input height/width.
pub const MIN_INPUT_EXTENT: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub n_class: usize,
    pub dropout_rate: f64,
    /// 1 for the published widths; larger values divide every channel count.
    pub width_divisor: usize,
    /// Seed for weight initialization.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            in_channels: 4,
            n_class: 4,
            dropout_rate: 0.2,
            width_divisor: 1,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 {
            return Err(Error::Config("in_channels must be positive".into()));
        }
        if self.n_class < 2 {
            return Err(Error::Config(format!(
                "n_class must be at least 2, got {}",
                self.n_class
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        // The narrowest layer has 16 channels.
        if self.width_divisor == 0 || 16 % self.width_divisor != 0 {
            return Err(Error::Config(format!(
                "width divisor {} must divide 16",
                self.width_divisor
            )));
        }
        Ok(())
    }

    pub fn levels(&self) -> [LevelSpec; 6] {
        LEVELS.map(|l| l.scaled(self.width_divisor))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_matches_the_published_ledger() {
        let counts: Vec<_> = LEVELS.iter().map(|l| l.encoder_block_count).collect();
        assert_eq!(counts, [2, 3, 3, 5, 14, 4]);
        let expand: Vec<_> = LEVELS.iter().map(LevelSpec::expand_channels).collect();
        assert_eq!(expand, [64, 128, 256, 512, 1024, 2048]);
        for l in LEVELS {
            let (r, s, e) = l.bottleneck_channels;
            assert_eq!(e, 4 * r);
            assert_eq!(r, s);
        }
        assert!(!LEVELS[0].downsamples);
        assert!(LEVELS[1..].iter().all(|l| l.downsamples));
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        let bad = [
            ModelConfig {
                n_class: 1,
                ..Default::default()
            },
            ModelConfig {
                dropout_rate: 1.0,
                ..Default::default()
            },
            ModelConfig {
                width_divisor: 3,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::Config(_))));
        }
    }
}
