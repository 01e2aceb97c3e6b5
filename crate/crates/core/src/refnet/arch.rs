//! Network architecture description with construction-time shape
//! validation.

use crate::aggregate::NUM_CLASSES;
use crate::error::{Error, Result};

/// One layer of the network. Convolutions are stride-1 valid; pooling is
/// non-overlapping max pooling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    Conv { kernel: usize, out_channels: usize },
    Relu,
    MaxPool { size: usize, stride: usize },
    FullyConnected { units: usize },
}

/// (height, width, channels) of an activation tensor. Fully connected
/// outputs are (1, 1, units).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape3 {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Shape3 {
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.h * self.w * self.c
    }
}

/// A validated layer stack. Output shapes for every layer are computed at
/// construction; a stack that does not fit its input is rejected here,
/// never at forward time.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CnnArchitecture {
    input_side: usize,
    layers: Vec<LayerSpec>,
    /// shapes[0] is the input; shapes[i+1] the output of layers[i].
    shapes: Vec<Shape3>,
}

impl CnnArchitecture {
    pub fn new(input_side: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        if input_side == 0 {
            return Err(Error::ShapeMismatch {
                context: "input side must be at least 1".into(),
            });
        }
        if layers.is_empty() {
            return Err(Error::ShapeMismatch {
                context: "architecture needs at least one layer".into(),
            });
        }
        let mut shapes = vec![Shape3 {
            h: input_side,
            w: input_side,
            c: 3,
        }];
        for (i, layer) in layers.iter().enumerate() {
            let cur = *shapes.last().unwrap();
            let next = match *layer {
                LayerSpec::Conv {
                    kernel,
                    out_channels,
                } => {
                    if kernel == 0 || out_channels == 0 {
                        return Err(Error::ShapeMismatch {
                            context: format!("layer {i}: conv kernel/channels must be positive"),
                        });
                    }
                    if cur.h < kernel || cur.w < kernel {
                        return Err(Error::ShapeMismatch {
                            context: format!(
                                "layer {i}: {kernel}x{kernel} conv does not fit {}x{} input",
                                cur.h, cur.w
                            ),
                        });
                    }
                    Shape3 {
                        h: cur.h - kernel + 1,
                        w: cur.w - kernel + 1,
                        c: out_channels,
                    }
                }
                LayerSpec::Relu => cur,
                LayerSpec::MaxPool { size, stride } => {
                    if size == 0 || stride == 0 {
                        return Err(Error::ShapeMismatch {
                            context: format!("layer {i}: pool size/stride must be positive"),
                        });
                    }
                    if cur.h < size || cur.w < size {
                        return Err(Error::ShapeMismatch {
                            context: format!(
                                "layer {i}: {size}x{size} pool does not fit {}x{} input",
                                cur.h, cur.w
                            ),
                        });
                    }
                    Shape3 {
                        h: (cur.h - size) / stride + 1,
                        w: (cur.w - size) / stride + 1,
                        c: cur.c,
                    }
                }
                LayerSpec::FullyConnected { units } => {
                    if units == 0 {
                        return Err(Error::ShapeMismatch {
                            context: format!("layer {i}: fully connected units must be positive"),
                        });
                    }
                    Shape3 {
                        h: 1,
                        w: 1,
                        c: units,
                    }
                }
            };
            shapes.push(next);
        }
        if !matches!(layers.last(), Some(LayerSpec::FullyConnected { .. })) {
            return Err(Error::ShapeMismatch {
                context: "final layer must be fully connected (the logits)".into(),
            });
        }
        Ok(CnnArchitecture {
            input_side,
            layers,
            shapes,
        })
    }

    /// The baseline stack: 2x2 conv -> 2x2 max pool -> 2x2 conv -> 4x4
    /// conv -> 4x4 max pool -> FC(fc_units) -> FC(4 classes), with ReLU
    /// after every conv and the first FC. Needs input_side >= 17 to fit.
    pub fn baseline(
        input_side: usize,
        c1: usize,
        c2: usize,
        c3: usize,
        fc_units: usize,
    ) -> Result<Self> {
        CnnArchitecture::new(
            input_side,
            vec![
                LayerSpec::Conv {
                    kernel: 2,
                    out_channels: c1,
                },
                LayerSpec::Relu,
                LayerSpec::MaxPool { size: 2, stride: 2 },
                LayerSpec::Conv {
                    kernel: 2,
                    out_channels: c2,
                },
                LayerSpec::Relu,
                LayerSpec::Conv {
                    kernel: 4,
                    out_channels: c3,
                },
                LayerSpec::Relu,
                LayerSpec::MaxPool { size: 4, stride: 4 },
                LayerSpec::FullyConnected { units: fc_units },
                LayerSpec::Relu,
                LayerSpec::FullyConnected {
                    units: NUM_CLASSES,
                },
            ],
        )
    }

    /// Baseline with the default widths (16, 32, 64) and 512 FC units.
    pub fn baseline_default(input_side: usize) -> Result<Self> {
        Self::baseline(input_side, 16, 32, 64, 512)
    }

    pub fn input_side(&self) -> usize {
        self.input_side
    }

    pub fn input_len(&self) -> usize {
        self.shapes[0].len()
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn shapes(&self) -> &[Shape3] {
        &self.shapes
    }

    pub fn input_shape_of(&self, layer: usize) -> Shape3 {
        self.shapes[layer]
    }

    pub fn output_shape_of(&self, layer: usize) -> Shape3 {
        self.shapes[layer + 1]
    }

    pub fn num_classes(&self) -> usize {
        self.shapes.last().unwrap().c
    }

    /// (weights, biases) lengths for a layer; (0, 0) when non-parametric.
    pub fn param_lens(&self, layer: usize) -> (usize, usize) {
        let input = self.shapes[layer];
        match self.layers[layer] {
            LayerSpec::Conv {
                kernel,
                out_channels,
            } => (out_channels * kernel * kernel * input.c, out_channels),
            LayerSpec::FullyConnected { units } => (units * input.len(), units),
            LayerSpec::Relu | LayerSpec::MaxPool { .. } => (0, 0),
        }
    }
}
