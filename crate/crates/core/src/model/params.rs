use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ModelConfig, Tensor};

pub(crate) const EMBED: usize = 0;
pub(crate) const POSITION: usize = 1;
pub(crate) const EMBED_LN_G: usize = 2;
pub(crate) const EMBED_LN_B: usize = 3;
const HEADER: usize = 4;

pub(crate) const WQ: usize = 0;
pub(crate) const BQ: usize = 1;
pub(crate) const WK: usize = 2;
pub(crate) const BK: usize = 3;
pub(crate) const WV: usize = 4;
pub(crate) const BV: usize = 5;
pub(crate) const WO: usize = 6;
pub(crate) const BO: usize = 7;
pub(crate) const LN1_G: usize = 8;
pub(crate) const LN1_B: usize = 9;
pub(crate) const W1: usize = 10;
pub(crate) const B1: usize = 11;
pub(crate) const W2: usize = 12;
pub(crate) const B2: usize = 13;
pub(crate) const LN2_G: usize = 14;
pub(crate) const LN2_B: usize = 15;
const PER_LAYER: usize = 16;

const LAYER_NAMES: [&str; PER_LAYER] = [
    "attn.q.weight",
    "attn.q.bias",
    "attn.k.weight",
    "attn.k.bias",
    "attn.v.weight",
    "attn.v.bias",
    "attn.out.weight",
    "attn.out.bias",
    "attn.norm.gamma",
    "attn.norm.beta",
    "ffn.in.weight",
    "ffn.in.bias",
    "ffn.out.weight",
    "ffn.out.bias",
    "ffn.norm.gamma",
    "ffn.norm.beta",
];

pub(crate) const MLM_DENSE_W: usize = 0;
pub(crate) const MLM_DENSE_B: usize = 1;
pub(crate) const MLM_LN_G: usize = 2;
pub(crate) const MLM_LN_B: usize = 3;
pub(crate) const MLM_DECODER_W: usize = 4;
pub(crate) const MLM_DECODER_B: usize = 5;
const MLM_NAMES: [&str; 6] = [
    "mlm.dense.weight",
    "mlm.dense.bias",
    "mlm.norm.gamma",
    "mlm.norm.beta",
    "mlm.decoder.weight",
    "mlm.decoder.bias",
];

pub(crate) const CLS_W: usize = 0;
pub(crate) const CLS_B: usize = 1;

/// All trainable tensors of the encoder and both heads, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    n_layers: usize,
}

impl Params {
    /// Zero-filled tensors with the shapes `cfg` implies. Layer-norm gains
    /// are zero too; use [`Params::init`] for a usable model.
    pub fn zeros(cfg: &ModelConfig) -> Params {
        let (d, f, v, p) = (cfg.d_model, cfg.d_ff, cfg.vocab_size, cfg.max_positions);
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        let mut push = |name: String, shape: &[usize]| {
            names.push(name);
            tensors.push(Tensor::zeros(shape));
        };
        push("embed.token".into(), &[v, d]);
        push("embed.position".into(), &[p, d]);
        push("embed.norm.gamma".into(), &[d]);
        push("embed.norm.beta".into(), &[d]);
        for l in 0..cfg.n_layers {
            let shapes: [&[usize]; PER_LAYER] = [
                &[d, d],
                &[d],
                &[d, d],
                &[d],
                &[d, d],
                &[d],
                &[d, d],
                &[d],
                &[d],
                &[d],
                &[d, f],
                &[f],
                &[f, d],
                &[d],
                &[d],
                &[d],
            ];
            for (name, shape) in LAYER_NAMES.iter().zip(shapes) {
                push(format!("layer{l}.{name}"), shape);
            }
        }
        let mlm_shapes: [&[usize]; 6] = [&[d, d], &[d], &[d], &[d], &[d, v], &[v]];
        for (name, shape) in MLM_NAMES.iter().zip(mlm_shapes) {
            push((*name).into(), shape);
        }
        push("classifier.weight".into(), &[d, 2]);
        push("classifier.bias".into(), &[2]);
        Params {
            names,
            tensors,
            n_layers: cfg.n_layers,
        }
    }

    /// Weights from a normal distribution truncated at two standard
    /// deviations (`cfg.init_std`), biases zero, layer-norm gains one.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Params {
        let mut p = Params::zeros(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, cfg.init_std).expect("positive std");
        let bound = 2.0 * cfg.init_std;
        for (name, t) in p.names.iter().zip(p.tensors.iter_mut()) {
            if name.ends_with(".gamma") {
                t.data.fill(1.0);
            } else if name.ends_with(".weight") || name.starts_with("embed.token") || name.starts_with("embed.position") {
                for x in t.data.iter_mut() {
                    *x = truncated(&normal, bound, &mut rng);
                }
            }
        }
        p
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &mut self.tensors[i])
    }

    /// Total scalar count.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub(crate) fn layer_index(&self, layer: usize, which: usize) -> usize {
        HEADER + layer * PER_LAYER + which
    }

    pub(crate) fn layer(&self, layer: usize, which: usize) -> &Tensor {
        &self.tensors[self.layer_index(layer, which)]
    }

    pub(crate) fn mlm_index(&self, which: usize) -> usize {
        HEADER + self.n_layers * PER_LAYER + which
    }

    pub(crate) fn mlm(&self, which: usize) -> &Tensor {
        &self.tensors[self.mlm_index(which)]
    }

    pub(crate) fn cls_index(&self, which: usize) -> usize {
        HEADER + self.n_layers * PER_LAYER + MLM_NAMES.len() + which
    }

    pub(crate) fn cls(&self, which: usize) -> &Tensor {
        &self.tensors[self.cls_index(which)]
    }

    pub(crate) fn at(&self, index: usize) -> &Tensor {
        &self.tensors[index]
    }

    #[cfg(test)]
    pub(crate) fn at_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.tensors[index]
    }

    /// Tensors `index` and `index + 1`, both mutable.
    pub(crate) fn pair_mut(&mut self, index: usize) -> (&mut Tensor, &mut Tensor) {
        let (a, b) = self.tensors[index..].split_at_mut(1);
        (&mut a[0], &mut b[0])
    }

    /// Name of the first tensor holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.names
            .iter()
            .zip(&self.tensors)
            .find(|(_, t)| !t.is_finite())
            .map(|(n, _)| n.as_str())
    }

    pub(crate) fn from_parts(names: Vec<String>, tensors: Vec<Tensor>, n_layers: usize) -> Params {
        Params {
            names,
            tensors,
            n_layers,
        }
    }
}

fn truncated<R: Rng>(normal: &Normal<f64>, bound: f64, rng: &mut R) -> f64 {
    loop {
        let x = normal.sample(rng);
        if x.abs() <= bound {
            return x;
        }
    }
}
