use crate::error::{DreError, Result};

/// Name of the pseudo-tap that returns the network input unchanged.
pub const INPUT_TAP: &str = "input";

/// A named hidden layer whose post-normalization output can be read back.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tap {
    pub name: String,
    /// Index into `NetworkSpec::hidden_dims`.
    pub layer: usize,
}

impl Tap {
    pub fn new(name: impl Into<String>, layer: usize) -> Self {
        Self {
            name: name.into(),
            layer,
        }
    }
}

/// Layer layout of a fully connected embedding network.
///
/// Every hidden layer is `Dense -> ReLU -> BatchNorm`; the output layer is a
/// plain linear `Dense` so embeddings can take either sign.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub taps: Vec<Tap>,
    pub output_dim: usize,
    /// Weight of the previous running statistic in the momentum update.
    pub bn_momentum: f64,
    /// Added to the batch variance before the square root.
    pub bn_epsilon: f64,
}

pub const DEFAULT_BN_MOMENTUM: f64 = 0.9;
pub const DEFAULT_BN_EPSILON: f64 = 1e-5;

/// Feature-extractor widths of the default vector model.
pub const MODEL_A_EXTRACTOR: [usize; 5] = [500; 5];

impl NetworkSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, taps: Vec<Tap>, output_dim: usize) -> Result<Self> {
        let spec = Self {
            input_dim,
            hidden_dims,
            taps,
            output_dim,
            bn_momentum: DEFAULT_BN_MOMENTUM,
            bn_epsilon: DEFAULT_BN_EPSILON,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Five-layer feature extractor, then 2000 -> 500 -> 100 -> 2 with taps
    /// `dense2000`, `dense500` and `dense100`.
    pub fn model_a(input_dim: usize) -> Result<Self> {
        let (hidden, taps) = model_a_layout();
        Self::new(input_dim, hidden, taps, 2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(DreError::InvalidSpec("input_dim must be at least 1".into()));
        }
        if self.output_dim == 0 {
            return Err(DreError::InvalidSpec("output_dim must be at least 1".into()));
        }
        if let Some(i) = self.hidden_dims.iter().position(|&w| w == 0) {
            return Err(DreError::InvalidSpec(format!("hidden layer {i} has zero width")));
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) {
            return Err(DreError::InvalidSpec(format!("bn_momentum {} outside (0, 1]", self.bn_momentum)));
        }
        if !(self.bn_epsilon > 0.0 && self.bn_epsilon.is_finite()) {
            return Err(DreError::InvalidSpec(format!("bn_epsilon {} must be positive", self.bn_epsilon)));
        }
        for (i, tap) in self.taps.iter().enumerate() {
            if tap.name.is_empty() || tap.name == INPUT_TAP {
                return Err(DreError::InvalidSpec(format!("tap name `{}` is reserved or empty", tap.name)));
            }
            if tap.layer >= self.hidden_dims.len() {
                return Err(DreError::InvalidSpec(format!(
                    "tap `{}` names hidden layer {} but the network has {}",
                    tap.name,
                    tap.layer,
                    self.hidden_dims.len()
                )));
            }
            if self.taps[..i].iter().any(|t| t.name == tap.name) {
                return Err(DreError::InvalidSpec(format!("duplicate tap `{}`", tap.name)));
            }
        }
        Ok(())
    }

    /// Hidden-layer index for `name`, or `None` for the input pseudo-tap.
    pub fn tap_layer(&self, name: &str) -> Result<Option<usize>> {
        if name == INPUT_TAP {
            return Ok(None);
        }
        self.taps
            .iter()
            .find(|t| t.name == name)
            .map(|t| Some(t.layer))
            .ok_or_else(|| DreError::UnknownTap(name.to_string()))
    }

    /// Width of the features returned by `name`.
    pub fn tap_width(&self, name: &str) -> Result<usize> {
        Ok(match self.tap_layer(name)? {
            None => self.input_dim,
            Some(l) => self.hidden_dims[l],
        })
    }

    /// `(fan_in, fan_out)` of every dense layer, output layer last.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &w in self.hidden_dims.iter().chain(std::iter::once(&self.output_dim)) {
            dims.push((prev, w));
            prev = w;
        }
        dims
    }

    pub fn n_layers(&self) -> usize {
        self.hidden_dims.len() + 1
    }
}

/// Hidden widths and taps of the default model, independent of input width.
pub fn model_a_layout() -> (Vec<usize>, Vec<Tap>) {
    let mut hidden = MODEL_A_EXTRACTOR.to_vec();
    let first = hidden.len();
    hidden.extend([2000, 500, 100]);
    let taps = vec![
        Tap::new("dense2000", first),
        Tap::new("dense500", first + 1),
        Tap::new("dense100", first + 2),
    ];
    (hidden, taps)
}
