//! Non-causal dilated residual convolutional classifier.
//!
//! Each residual block computes `relu(conv2(relu(conv1(x)))) + shortcut(x)`,
//! where both convolutions share the block's dilation and `shortcut` is a 1x1
//! convolution present in every block. The last block's output is averaged
//! over time and passed through a ReLU hidden layer and a softmax output
//! layer.

mod layers;
mod loss;
mod network;

pub use layers::{conv1d_same, global_avg_pool, relu_in_place, Conv1d, Dense, FeatureMap};
pub use loss::{cross_entropy, softmax};
pub use network::{
    residual_block_forward, ForwardPass, Gradients, Network, ParamTensor, ResidualBlock,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub kernel_size: usize,
    pub n_filters: usize,
    pub n_blocks: usize,
    pub dilations: Vec<usize>,
    pub in_channels: usize,
    pub hidden_width: usize,
    pub n_classes: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self::standard(5, 64, 8, 2, 256, 9)
    }
}

impl NetworkConfig {
    /// Config with the doubling dilation schedule 2, 4, ..., 2^n_blocks.
    pub fn standard(
        kernel_size: usize,
        n_filters: usize,
        n_blocks: usize,
        in_channels: usize,
        hidden_width: usize,
        n_classes: usize,
    ) -> Self {
        Self {
            kernel_size,
            n_filters,
            n_blocks,
            dilations: (1..=n_blocks as u32).map(|i| 1usize << i).collect(),
            in_channels,
            hidden_width,
            n_classes,
        }
    }

    pub fn has_standard_dilations(&self) -> bool {
        self.dilations.len() == self.n_blocks
            && self
                .dilations
                .iter()
                .enumerate()
                .all(|(i, &d)| d == 1usize << (i + 1))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(format!("network config: {m}")));
        if self.kernel_size == 0 || self.kernel_size % 2 == 0 {
            return fail(format!("kernel_size {} must be odd", self.kernel_size));
        }
        if self.n_blocks == 0 {
            return fail("n_blocks must be at least 1".into());
        }
        if self.dilations.len() != self.n_blocks {
            return fail(format!(
                "{} dilations given for {} blocks",
                self.dilations.len(),
                self.n_blocks
            ));
        }
        if self.dilations.contains(&0) {
            return fail("dilations must be positive".into());
        }
        for (name, v) in [
            ("n_filters", self.n_filters),
            ("in_channels", self.in_channels),
            ("hidden_width", self.hidden_width),
            ("n_classes", self.n_classes),
        ] {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        Ok(())
    }
}

/// Scalars stored by the residual trunk (all blocks, no head).
pub fn trunk_parameter_count(cfg: &NetworkConfig) -> usize {
    let (n, k) = (cfg.n_filters, cfg.kernel_size);
    (0..cfg.n_blocks)
        .map(|b| {
            let cin = if b == 0 { cfg.in_channels } else { n };
            (cin * n * k + n) + (n * n * k + n) + (cin * n + n)
        })
        .sum()
}

/// Closed-form trainable parameter count.
pub fn parameter_count(cfg: &NetworkConfig) -> usize {
    let (n, h, c) = (cfg.n_filters, cfg.hidden_width, cfg.n_classes);
    trunk_parameter_count(cfg) + (n * h + h) + (h * c + c)
}

/// Input span seen by one output position: two convolutions per block, each
/// reaching `(k - 1) * d` samples.
pub fn receptive_field(cfg: &NetworkConfig) -> usize {
    1 + 2 * (cfg.kernel_size - 1) * cfg.dilations.iter().sum::<usize>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_ends_at_256() {
        let cfg = NetworkConfig::default();
        assert_eq!(cfg.dilations, vec![2, 4, 8, 16, 32, 64, 128, 256]);
        assert!(cfg.has_standard_dilations());
        cfg.validate().unwrap();
    }

    #[test]
    fn default_counts() {
        let cfg = NetworkConfig::default();
        assert_eq!(parameter_count(&cfg), 357_129);
        assert_eq!(trunk_parameter_count(&cfg), 338_176);
    }

    #[test]
    fn unit_config_count() {
        let cfg = NetworkConfig {
            dilations: vec![1],
            ..NetworkConfig::standard(1, 1, 1, 1, 1, 1)
        };
        // conv1 2, conv2 2, shortcut 2, hidden 2, output 2
        assert_eq!(parameter_count(&cfg), 10);
    }

    #[test]
    fn receptive_fields() {
        assert_eq!(receptive_field(&NetworkConfig::default()), 4081);
        let single = NetworkConfig {
            dilations: vec![1],
            ..NetworkConfig::standard(5, 4, 1, 2, 8, 2)
        };
        assert_eq!(receptive_field(&single), 9);
        let pointwise = NetworkConfig::standard(1, 4, 6, 2, 8, 2);
        assert_eq!(receptive_field(&pointwise), 1);
    }

    #[test]
    fn validation_catches_bad_configs() {
        let mut cfg = NetworkConfig::default();
        cfg.kernel_size = 4;
        assert!(cfg.validate().is_err());
        let mut cfg = NetworkConfig::default();
        cfg.dilations.pop();
        assert!(cfg.validate().is_err());
        let mut cfg = NetworkConfig::default();
        cfg.n_classes = 0;
        assert!(cfg.validate().is_err());
    }
}
