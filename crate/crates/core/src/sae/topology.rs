use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Encoder-decoder family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Kind {
    /// Convolution + max-pooling encoder, convolution + up-sampling decoder.
    Cae,
    /// Max-pooling switches ("where") are handed to the matching decoder
    /// stage, which unpools and then applies a transposed convolution.
    Swwae,
    /// Strided convolutions down, strided transposed convolutions up, with
    /// residual additions from each encoder stage to its decoder mirror.
    RedNet,
}

impl Kind {
    pub const ALL: [Kind; 3] = [Kind::Cae, Kind::Swwae, Kind::RedNet];

    pub fn code(self) -> u8 {
        match self {
            Kind::Cae => 0,
            Kind::Swwae => 1,
            Kind::RedNet => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Kind::Cae),
            1 => Some(Kind::Swwae),
            2 => Some(Kind::RedNet),
            _ => None,
        }
    }

    /// Whether decoder stages use transposed convolutions.
    pub(crate) fn deconv_decoder(self) -> bool {
        !matches!(self, Kind::Cae)
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Cae => "cae",
            Kind::Swwae => "swwae",
            Kind::RedNet => "rednet",
        })
    }
}

impl FromStr for Kind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cae" => Ok(Kind::Cae),
            "swwae" => Ok(Kind::Swwae),
            "rednet" | "red-net" => Ok(Kind::RedNet),
            other => Err(Error::invalid(format!("unknown topology '{other}'"))),
        }
    }
}

/// Architecture of a selectional auto-encoder. Every hidden convolution has
/// `filters` output channels and a `kernel`×`kernel` kernel; the decoder
/// mirrors the `depth` encoder stages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TopologySpec {
    pub kind: Kind,
    pub window_side: usize,
    pub filters: usize,
    pub kernel: usize,
    pub depth: usize,
}

impl TopologySpec {
    /// Spec with the default depth for `window_side`.
    pub fn new(kind: Kind, window_side: usize, filters: usize, kernel: usize) -> Result<Self> {
        Self::with_depth(kind, window_side, filters, kernel, Self::default_depth(window_side))
    }

    pub fn with_depth(kind: Kind, window_side: usize, filters: usize, kernel: usize, depth: usize) -> Result<Self> {
        let spec = TopologySpec {
            kind,
            window_side,
            filters,
            kernel,
            depth,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Three stages for 64-pixel windows and below, five above.
    pub fn default_depth(window_side: usize) -> usize {
        if window_side <= 64 {
            3
        } else {
            5
        }
    }

    /// RED-Net, 256 window, 64 filters, 5×5 kernels.
    pub fn reference() -> Self {
        Self::new(Kind::RedNet, 256, 64, 5).expect("valid")
    }

    /// RED-Net, 64 window, 16 filters, 5×5 kernels: trainable on a CPU.
    pub fn small() -> Self {
        Self::new(Kind::RedNet, 64, 16, 5).expect("valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.depth > 15 {
            return Err(Error::invalid(format!("depth {} out of range", self.depth)));
        }
        let factor = 1usize << self.depth;
        if self.window_side == 0 || !self.window_side.is_multiple_of(factor) {
            return Err(Error::invalid(format!(
                "window side {} is not divisible by 2^{} = {factor}",
                self.window_side, self.depth
            )));
        }
        if self.window_side > u16::MAX as usize {
            return Err(Error::invalid("window side exceeds 65535"));
        }
        if self.kernel == 0 || self.kernel.is_multiple_of(2) || self.kernel > u8::MAX as usize {
            return Err(Error::invalid(format!("kernel side must be odd, got {}", self.kernel)));
        }
        if self.filters == 0 || self.filters > u16::MAX as usize {
            return Err(Error::invalid(format!("filter count {} out of range", self.filters)));
        }
        Ok(())
    }

    /// Names and shapes of the parameters in build order: encoder stages,
    /// decoder stages in execution order, then the 1-channel output layer.
    pub fn parameter_layout(&self) -> Vec<(String, Vec<usize>)> {
        let (f, k) = (self.filters, self.kernel);
        let mut layout = Vec::with_capacity(4 * self.depth + 2);
        for i in 0..self.depth {
            let cin = if i == 0 { 1 } else { f };
            layout.push((format!("enc{i}.weight"), vec![f, cin, k, k]));
            layout.push((format!("enc{i}.bias"), vec![f]));
        }
        for i in 0..self.depth {
            layout.push((format!("dec{i}.weight"), vec![f, f, k, k]));
            layout.push((format!("dec{i}.bias"), vec![f]));
        }
        layout.push(("out.weight".into(), vec![1, f, k, k]));
        layout.push(("out.bias".into(), vec![1]));
        layout
    }

    /// `(F·k² + F) + (2d − 1)·(F²·k² + F) + (F·k² + 1)`.
    pub fn parameter_count(&self) -> usize {
        let (f, k2, d) = (self.filters, self.kernel * self.kernel, self.depth);
        (f * k2 + f) + (2 * d - 1) * (f * f * k2 + f) + (f * k2 + 1)
    }
}
