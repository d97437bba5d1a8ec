//! Network containers: a plain layer stack and a U-shaped encoder-decoder
//! with skip connections.

use serde::{Deserialize, Serialize};

use super::layers::{Layer, LayerKind};
use super::tensor::{Param, Tensor};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// A differentiable network with cached activations for one backward pass.
pub trait Model {
    /// Training forward pass; caches what `backward` needs.
    fn forward(&mut self, x: &Tensor) -> Result<Tensor>;

    /// Accumulates parameter gradients for the last `forward` and returns the
    /// gradient with respect to its input.
    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor>;

    /// Cache-free forward pass.
    fn infer(&self, x: &Tensor) -> Result<Tensor>;

    fn params(&self) -> Vec<&Param>;

    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }
}

#[derive(Debug, Clone)]
pub struct Sequential {
    layers: Vec<Layer>,
    cache: Vec<Tensor>,
}

/// Compares layers and parameters; cached activations are ignored.
impl PartialEq for Sequential {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self {
            layers,
            cache: Vec::new(),
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mut shape = input.to_vec();
        for layer in &self.layers {
            shape = layer.output_shape(&shape)?;
        }
        Ok(shape)
    }
}

impl Model for Sequential {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        self.cache.clear();
        let mut cur = x.clone();
        for layer in &self.layers {
            let next = layer.forward(&cur)?;
            self.cache.push(cur);
            cur = next;
        }
        Ok(cur)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        if self.cache.len() != self.layers.len() {
            return Err(Error::InvalidArgument(
                "backward called without a matching forward".into(),
            ));
        }
        let mut grad = grad_out.clone();
        for (layer, input) in self.layers.iter_mut().zip(&self.cache).rev() {
            let (dx, grads) = layer.backward(input, &grad)?;
            for (p, g) in layer.params_mut().iter_mut().zip(&grads) {
                p.grad.add_assign(g);
            }
            grad = dx;
        }
        Ok(grad)
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.forward(&cur)?;
        }
        Ok(cur)
    }

    fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UNetConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Channels at full resolution; doubled at each of the two lower levels.
    pub base_channels: usize,
}

/// Three-level encoder-decoder (full, 1/2 and 1/4 resolution) with skip
/// connections at the two upper levels and a sigmoid head.
#[derive(Debug, Clone, PartialEq)]
pub struct UNet {
    config: UNetConfig,
    enc0: Sequential,
    enc1: Sequential,
    mid: Sequential,
    dec1: Sequential,
    dec0: Sequential,
    skip_channels: (usize, usize),
}

const LEAK: LayerKind = LayerKind::LeakyRelu { slope: 0.2 };

impl UNet {
    pub fn new(config: UNetConfig, rng: &mut SeededRng) -> Self {
        let UNetConfig {
            in_channels: cin,
            out_channels: cout,
            base_channels: c,
        } = config;
        let act = || Layer::activation(LEAK);
        let enc0 = Sequential::new(vec![
            Layer::conv(cin, c, 3, 1, 1, rng),
            act(),
            Layer::conv(c, c, 3, 1, 1, rng),
            act(),
        ]);
        let enc1 = Sequential::new(vec![
            Layer::conv(c, 2 * c, 4, 2, 1, rng),
            act(),
            Layer::conv(2 * c, 2 * c, 3, 1, 1, rng),
            act(),
        ]);
        let mid = Sequential::new(vec![
            Layer::conv(2 * c, 4 * c, 4, 2, 1, rng),
            act(),
            Layer::conv(4 * c, 4 * c, 3, 1, 1, rng),
            act(),
            Layer::tconv(4 * c, 2 * c, 4, 2, 1, rng),
            act(),
        ]);
        let dec1 = Sequential::new(vec![
            Layer::conv(4 * c, 2 * c, 3, 1, 1, rng),
            act(),
            Layer::tconv(2 * c, c, 4, 2, 1, rng),
            act(),
        ]);
        let dec0 = Sequential::new(vec![
            Layer::conv(2 * c, c, 3, 1, 1, rng),
            act(),
            Layer::conv(c, cout, 1, 1, 0, rng),
            Layer::activation(LayerKind::Sigmoid),
        ]);
        Self {
            config,
            enc0,
            enc1,
            mid,
            dec1,
            dec0,
            skip_channels: (c, 2 * c),
        }
    }

    pub fn config(&self) -> UNetConfig {
        self.config
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let s = x.shape();
        if s.len() != 4
            || s[1] != self.config.in_channels
            || !s[2].is_multiple_of(4)
            || !s[3].is_multiple_of(4)
            || s[2] == 0
            || s[3] == 0
        {
            return Err(Error::shape(
                "UNet input (spatial size divisible by 4)",
                &[s.first().copied().unwrap_or(0), self.config.in_channels, 4, 4],
                s,
            ));
        }
        Ok(())
    }

    fn blocks_mut(&mut self) -> [&mut Sequential; 5] {
        [
            &mut self.enc0,
            &mut self.enc1,
            &mut self.mid,
            &mut self.dec1,
            &mut self.dec0,
        ]
    }
}

impl Model for UNet {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let s0 = self.enc0.forward(x)?;
        let s1 = self.enc1.forward(&s0)?;
        let u1 = self.mid.forward(&s1)?;
        let u0 = self.dec1.forward(&Tensor::concat_channels(&u1, &s1)?)?;
        self.dec0.forward(&Tensor::concat_channels(&u0, &s0)?)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let (c0, c1) = self.skip_channels;
        let g = self.dec0.backward(grad_out)?;
        let (g_u0, g_s0_skip) = g.split_channels(c0);
        let g = self.dec1.backward(&g_u0)?;
        let (g_u1, g_s1_skip) = g.split_channels(c1);
        let mut g_s1 = self.mid.backward(&g_u1)?;
        g_s1.add_assign(&g_s1_skip);
        let mut g_s0 = self.enc1.backward(&g_s1)?;
        g_s0.add_assign(&g_s0_skip);
        self.enc0.backward(&g_s0)
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let s0 = self.enc0.infer(x)?;
        let s1 = self.enc1.infer(&s0)?;
        let u1 = self.mid.infer(&s1)?;
        let u0 = self.dec1.infer(&Tensor::concat_channels(&u1, &s1)?)?;
        self.dec0.infer(&Tensor::concat_channels(&u0, &s0)?)
    }

    fn params(&self) -> Vec<&Param> {
        [&self.enc0, &self.enc1, &self.mid, &self.dec1, &self.dec0]
            .into_iter()
            .flat_map(|b| b.params())
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.blocks_mut().into_iter().flat_map(|b| b.params_mut()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unet_preserves_spatial_size() {
        let mut rng = SeededRng::new(2);
        let net = UNet::new(
            UNetConfig {
                in_channels: 1,
                out_channels: 1,
                base_channels: 2,
            },
            &mut rng,
        );
        let x = Tensor::randn(&[2, 1, 12, 8], &mut rng);
        let y = net.infer(&x).unwrap();
        assert_eq!(y.shape(), &[2, 1, 12, 8]);
        assert!(y.data().iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(net.infer(&Tensor::zeros(&[1, 1, 10, 8])).is_err());
    }

    #[test]
    fn training_forward_matches_inference() {
        let mut rng = SeededRng::new(3);
        let mut net = UNet::new(
            UNetConfig {
                in_channels: 2,
                out_channels: 1,
                base_channels: 2,
            },
            &mut rng,
        );
        let x = Tensor::randn(&[1, 2, 8, 8], &mut rng);
        assert_eq!(net.forward(&x).unwrap(), net.infer(&x).unwrap());
    }

    #[test]
    fn backward_without_forward_is_an_error() {
        let mut rng = SeededRng::new(1);
        let mut seq = Sequential::new(vec![Layer::dense(2, 2, &mut rng)]);
        assert!(seq.backward(&Tensor::zeros(&[1, 2])).is_err());
    }
}
