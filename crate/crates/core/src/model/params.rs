//! Named parameter tensors and their initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::tensor::{Scalar, Tensor};

/// One gated graph-multiplication block: `(A h W1 + b1) * sigmoid(A h W2 + b2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GluParams<T> {
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
}

/// Two-branch dilated convolution, kernel 2. `theta*` are `[2, C, C]`,
/// tap 0 reads step `t`, tap 1 reads step `t + dilation`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    pub theta1: Tensor<T>,
    pub a: Tensor<T>,
    pub theta2: Tensor<T>,
    pub b: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    /// One block stack per window position, or a single shared stack.
    pub windows: Vec<Vec<GluParams<T>>>,
    pub conv: Option<ConvParams<T>>,
}

impl<T> LayerParams<T> {
    /// Block stack used by window position `w`.
    pub fn window(&self, w: usize) -> &[GluParams<T>] {
        if self.windows.len() == 1 {
            &self.windows[0]
        } else {
            &self.windows[w]
        }
    }

    pub(crate) fn window_mut(&mut self, w: usize) -> &mut [GluParams<T>] {
        if self.windows.len() == 1 {
            &mut self.windows[0]
        } else {
            &mut self.windows[w]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    /// `[d, C]`
    pub input_w: Tensor<T>,
    pub input_b: Tensor<T>,
    pub layers: Vec<LayerParams<T>>,
    /// `[final_len * C, out_hidden]`
    pub out_w1: Tensor<T>,
    pub out_b1: Tensor<T>,
    /// `[out_hidden, horizon * d]`
    pub out_w2: Tensor<T>,
    pub out_b2: Tensor<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// All-zero parameters with the shapes `config` implies.
    pub fn zeros(config: &ModelConfig) -> Self {
        let c = config.channels;
        let glu = || GluParams {
            w1: Tensor::zeros(&[c, c]),
            b1: Tensor::zeros(&[c]),
            w2: Tensor::zeros(&[c, c]),
            b2: Tensor::zeros(&[c]),
        };
        let layers = (0..config.layers)
            .map(|l| {
                let slots = if config.share_window_weights {
                    1
                } else {
                    config.windows_in_layer(l)
                };
                LayerParams {
                    windows: (0..slots)
                        .map(|_| (0..config.blocks).map(|_| glu()).collect())
                        .collect(),
                    conv: config.gated_conv.then(|| ConvParams {
                        theta1: Tensor::zeros(&[2, c, c]),
                        a: Tensor::zeros(&[c]),
                        theta2: Tensor::zeros(&[2, c, c]),
                        b: Tensor::zeros(&[c]),
                    }),
                }
            })
            .collect();
        let flat = config.final_len() * c;
        let out = config.horizon * config.features;
        Self {
            input_w: Tensor::zeros(&[config.features, c]),
            input_b: Tensor::zeros(&[c]),
            layers,
            out_w1: Tensor::zeros(&[flat, config.out_hidden]),
            out_b1: Tensor::zeros(&[config.out_hidden]),
            out_w2: Tensor::zeros(&[config.out_hidden, out]),
            out_b2: Tensor::zeros(&[out]),
        }
    }

    /// Glorot-uniform weights, zero biases, fully determined by `seed`.
    pub fn glorot(config: &ModelConfig, seed: u64) -> Self {
        let mut params = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (_, t) in params.named_mut() {
            let dims = t.dims().to_vec();
            let (fan_in, fan_out) = match dims.as_slice() {
                [_] => continue,
                [i, o] => (*i, *o),
                [k, i, o] => (k * i, k * o),
                _ => unreachable!("parameters are rank 1 to 3"),
            };
            let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in t.data_mut() {
                *v = T::of(rng.random_range(-s..s));
            }
        }
        params
    }

    /// Tensors in a fixed order with their names.
    pub fn named(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = vec![
            ("input.weight".to_string(), &self.input_w),
            ("input.bias".to_string(), &self.input_b),
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            let shared = layer.windows.len() == 1;
            for (w, blocks) in layer.windows.iter().enumerate() {
                let slot = if shared {
                    "shared".to_string()
                } else {
                    format!("window{w}")
                };
                for (b, g) in blocks.iter().enumerate() {
                    let p = format!("layer{l}.{slot}.block{b}");
                    out.push((format!("{p}.w1"), &g.w1));
                    out.push((format!("{p}.b1"), &g.b1));
                    out.push((format!("{p}.w2"), &g.w2));
                    out.push((format!("{p}.b2"), &g.b2));
                }
            }
            if let Some(conv) = &layer.conv {
                out.push((format!("layer{l}.conv.theta1"), &conv.theta1));
                out.push((format!("layer{l}.conv.a"), &conv.a));
                out.push((format!("layer{l}.conv.theta2"), &conv.theta2));
                out.push((format!("layer{l}.conv.b"), &conv.b));
            }
        }
        out.push(("output.fc1.weight".to_string(), &self.out_w1));
        out.push(("output.fc1.bias".to_string(), &self.out_b1));
        out.push(("output.fc2.weight".to_string(), &self.out_w2));
        out.push(("output.fc2.bias".to_string(), &self.out_b2));
        out
    }

    /// Mutable counterpart of [`named`](Self::named), same order.
    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = vec![
            ("input.weight".to_string(), &mut self.input_w),
            ("input.bias".to_string(), &mut self.input_b),
        ];
        for (l, layer) in self.layers.iter_mut().enumerate() {
            let shared = layer.windows.len() == 1;
            for (w, blocks) in layer.windows.iter_mut().enumerate() {
                let slot = if shared {
                    "shared".to_string()
                } else {
                    format!("window{w}")
                };
                for (b, g) in blocks.iter_mut().enumerate() {
                    let p = format!("layer{l}.{slot}.block{b}");
                    out.push((format!("{p}.w1"), &mut g.w1));
                    out.push((format!("{p}.b1"), &mut g.b1));
                    out.push((format!("{p}.w2"), &mut g.w2));
                    out.push((format!("{p}.b2"), &mut g.b2));
                }
            }
            if let Some(conv) = &mut layer.conv {
                out.push((format!("layer{l}.conv.theta1"), &mut conv.theta1));
                out.push((format!("layer{l}.conv.a"), &mut conv.a));
                out.push((format!("layer{l}.conv.theta2"), &mut conv.theta2));
                out.push((format!("layer{l}.conv.b"), &mut conv.b));
            }
        }
        out.push(("output.fc1.weight".to_string(), &mut self.out_w1));
        out.push(("output.fc1.bias".to_string(), &mut self.out_b1));
        out.push(("output.fc2.weight".to_string(), &mut self.out_w2));
        out.push(("output.fc2.bias".to_string(), &mut self.out_b2));
        out
    }

    /// Tensors only, in [`named`](Self::named) order.
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = vec![&self.input_w, &self.input_b];
        for layer in &self.layers {
            for g in layer.windows.iter().flatten() {
                out.extend([&g.w1, &g.b1, &g.w2, &g.b2]);
            }
            if let Some(c) = &layer.conv {
                out.extend([&c.theta1, &c.a, &c.theta2, &c.b]);
            }
        }
        out.extend([&self.out_w1, &self.out_b1, &self.out_w2, &self.out_b2]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = vec![&mut self.input_w, &mut self.input_b];
        for layer in &mut self.layers {
            for g in layer.windows.iter_mut().flatten() {
                out.extend([&mut g.w1, &mut g.b1, &mut g.w2, &mut g.b2]);
            }
            if let Some(c) = &mut layer.conv {
                out.extend([&mut c.theta1, &mut c.a, &mut c.theta2, &mut c.b]);
            }
        }
        out.extend([
            &mut self.out_w1,
            &mut self.out_b1,
            &mut self.out_w2,
            &mut self.out_b2,
        ]);
        out
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.named().into_iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let glu = |g: &GluParams<T>| GluParams {
            w1: g.w1.cast(),
            b1: g.b1.cast(),
            w2: g.w2.cast(),
            b2: g.b2.cast(),
        };
        ModelParams {
            input_w: self.input_w.cast(),
            input_b: self.input_b.cast(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    windows: l.windows.iter().map(|bs| bs.iter().map(glu).collect()).collect(),
                    conv: l.conv.as_ref().map(|c| ConvParams {
                        theta1: c.theta1.cast(),
                        a: c.a.cast(),
                        theta2: c.theta2.cast(),
                        b: c.b.cast(),
                    }),
                })
                .collect(),
            out_w1: self.out_w1.cast(),
            out_b1: self.out_b1.cast(),
            out_w2: self.out_w2.cast(),
            out_b2: self.out_b2.cast(),
        }
    }

    /// Adds `other` tensor-by-tensor. Both must come from one config.
    pub fn add_assign(&mut self, other: &ModelParams<T>) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, factor: T) {
        for t in self.tensors_mut() {
            t.scale(factor);
        }
    }

    /// Name of the first tensor holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<String> {
        self.named()
            .into_iter()
            .find(|(_, t)| !t.is_finite())
            .map(|(n, _)| n)
    }
}
