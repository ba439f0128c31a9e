//! Network configurations at paper scale and desk scale.

use crate::error::{Error, Result};
use crate::signal::{RhythmClass, WINDOW_LEN};

/// Channel multiplier schedule: the multiplier steps up by one every fourth
/// residual unit, so 15 units sweep 1,1,1,1,2,2,2,2,3,3,3,3,4,4,4.
pub fn channel_multiplier(unit_index: usize) -> usize {
    1 + unit_index / 4
}

/// Configuration of the dual-branch classification network.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    /// Kernel sizes of the four parallel inception branches.
    pub inception_kernels: [usize; 4],
    /// Output channels of each inception branch.
    pub branch_channels: usize,
    /// Channel unit of the residual stack; unit `i` has
    /// `base_channels * channel_multiplier(i)` channels.
    pub base_channels: usize,
    pub residual_units: usize,
    pub residual_kernel: usize,
    /// Per-unit max-pool stride applied at unit entry (1 = no pooling).
    pub pool_strides: Vec<usize>,
    /// Samples consumed per LSTM step.
    pub lstm_step: usize,
    pub lstm_hidden: usize,
    /// Hidden widths of the fully connected head (the output layer is
    /// appended automatically).
    pub fc_widths: Vec<usize>,
    pub classes: usize,
    pub input_len: usize,
}

impl ClassifierConfig {
    /// Full-size configuration matching the published interface:
    /// CNN features of length 640, LSTM features of length 40.
    pub fn paper_scale() -> Self {
        ClassifierConfig {
            inception_kernels: [15, 17, 19, 21],
            branch_channels: 64,
            base_channels: 64,
            residual_units: 15,
            residual_kernel: 16,
            pool_strides: vec![3, 1, 2, 1, 2, 1, 2, 1, 3, 1, 1, 1, 1, 1, 1],
            lstm_step: 72,
            lstm_hidden: 40,
            fc_widths: vec![128, 32],
            classes: RhythmClass::COUNT,
            input_len: WINDOW_LEN,
        }
    }

    /// Reduced configuration for CPU-scale training; same interface shapes
    /// scaled down.
    pub fn desk_scale() -> Self {
        ClassifierConfig {
            inception_kernels: [15, 17, 19, 21],
            branch_channels: 8,
            base_channels: 16,
            residual_units: 8,
            residual_kernel: 16,
            pool_strides: vec![3, 2, 2, 2, 3, 1, 1, 1],
            lstm_step: 72,
            lstm_hidden: 40,
            fc_widths: vec![128, 32],
            classes: RhythmClass::COUNT,
            input_len: WINDOW_LEN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_len % self.lstm_step != 0 {
            return Err(Error::Config(format!(
                "input length {} is not divisible by the LSTM step {}",
                self.input_len, self.lstm_step
            )));
        }
        if self.pool_strides.len() != self.residual_units {
            return Err(Error::Config(format!(
                "{} pool strides for {} residual units",
                self.pool_strides.len(),
                self.residual_units
            )));
        }
        self.final_spatial()?;
        if self.fc_widths.is_empty() {
            return Err(Error::Config("the FC head needs at least one hidden layer".into()));
        }
        Ok(())
    }

    /// Spatial length after the residual stack; every pool must divide the
    /// current length exactly.
    pub fn final_spatial(&self) -> Result<usize> {
        let mut len = self.input_len;
        for (i, stride) in self.pool_strides.iter().enumerate() {
            if *stride == 0 {
                return Err(Error::Config(format!("pool stride 0 at unit {i}")));
            }
            if len % stride != 0 {
                return Err(Error::Config(format!(
                    "pool stride {} at unit {} does not divide length {}",
                    stride, i, len
                )));
            }
            len /= stride;
        }
        Ok(len)
    }

    /// Output channels of residual unit `i`.
    pub fn unit_channels(&self, unit_index: usize) -> usize {
        self.base_channels * channel_multiplier(unit_index)
    }

    /// Length of the flattened CNN feature vector (after the stack's output
    /// is reduced back to `base_channels` by a width-1 convolution).
    pub fn cnn_feature_len(&self) -> Result<usize> {
        Ok(self.base_channels * self.final_spatial()?)
    }

    pub fn concat_len(&self) -> Result<usize> {
        Ok(self.cnn_feature_len()? + self.lstm_hidden)
    }

    pub fn lstm_steps(&self) -> usize {
        self.input_len / self.lstm_step
    }
}

/// Configuration of the CAM visualization network: a short residual stack
/// whose feature map feeds global average pooling and a single linear map.
#[derive(Debug, Clone, PartialEq)]
pub struct CamNetConfig {
    pub base_channels: usize,
    pub residual_units: usize,
    pub residual_kernel: usize,
    pub pool_strides: Vec<usize>,
    pub classes: usize,
    pub input_len: usize,
    /// Required spatial length of the final feature map.
    pub feature_len: usize,
}

impl CamNetConfig {
    pub fn paper_scale() -> Self {
        CamNetConfig {
            base_channels: 64,
            ..Self::desk_scale()
        }
    }

    pub fn desk_scale() -> Self {
        CamNetConfig {
            base_channels: 16,
            residual_units: 4,
            residual_kernel: 16,
            pool_strides: vec![3, 1, 5, 1],
            classes: RhythmClass::COUNT,
            input_len: WINDOW_LEN,
            feature_len: 48,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pool_strides.len() != self.residual_units {
            return Err(Error::Config(format!(
                "{} pool strides for {} residual units",
                self.pool_strides.len(),
                self.residual_units
            )));
        }
        let mut len = self.input_len;
        for (i, stride) in self.pool_strides.iter().enumerate() {
            if *stride == 0 || len % stride != 0 {
                return Err(Error::Config(format!(
                    "pool stride {} at unit {} does not divide length {}",
                    stride, i, len
                )));
            }
            len /= stride;
        }
        if len != self.feature_len {
            return Err(Error::Config(format!(
                "pooling schedule yields a feature map of length {}, expected {}",
                len, self.feature_len
            )));
        }
        Ok(())
    }

    pub fn unit_channels(&self, unit_index: usize) -> usize {
        self.base_channels * channel_multiplier(unit_index)
    }

    /// Channels of the final feature map.
    pub fn feature_channels(&self) -> usize {
        self.unit_channels(self.residual_units - 1)
    }
}

/// Configuration of the mask visualization network: the LSTM branch followed
/// by its own fully connected head.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmVisConfig {
    pub lstm_step: usize,
    pub lstm_hidden: usize,
    pub fc_widths: Vec<usize>,
    pub classes: usize,
    pub input_len: usize,
}

impl LstmVisConfig {
    pub fn desk_scale() -> Self {
        LstmVisConfig {
            lstm_step: 72,
            lstm_hidden: 40,
            fc_widths: vec![32, 16],
            classes: RhythmClass::COUNT,
            input_len: WINDOW_LEN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_len % self.lstm_step != 0 {
            return Err(Error::Config(format!(
                "input length {} is not divisible by the LSTM step {}",
                self.input_len, self.lstm_step
            )));
        }
        Ok(())
    }

    pub fn lstm_steps(&self) -> usize {
        self.input_len / self.lstm_step
    }
}
