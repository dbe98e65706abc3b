//! Flat parameter store: every tensor is a row-major matrix inside one `Vec<f64>`, so
//! optimizers, gradient checks and checkpoints can treat parameters uniformly.

use ndarray::{ArrayView2, ArrayViewMut2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// How a tensor is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    Normal,
    /// Embedding tables: std 1/sqrt(d), so scaled lookups have unit variance.
    Embedding,
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    specs: Vec<TensorSpec>,
    values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerParams {
    pub wq: TensorId,
    pub bq: TensorId,
    pub wk: TensorId,
    pub bk: TensorId,
    pub wv: TensorId,
    pub bv: TensorId,
    pub wo: TensorId,
    pub bo: TensorId,
    pub ln1_g: TensorId,
    pub ln1_b: TensorId,
    pub w1: TensorId,
    pub b1: TensorId,
    pub w2: TensorId,
    pub b2: TensorId,
    pub ln2_g: TensorId,
    pub ln2_b: TensorId,
}

/// Tensor handles for a config. Registration order is fixed, so the index can be
/// rebuilt from the config alone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamIndex {
    pub word: TensorId,
    pub source: TensorId,
    pub global: TensorId,
    pub layers: Vec<LayerParams>,
    pub out_w: TensorId,
    pub out_b: TensorId,
}

struct Builder {
    specs: Vec<TensorSpec>,
    inits: Vec<Init>,
    offset: usize,
}

impl Builder {
    fn add(&mut self, name: String, rows: usize, cols: usize, init: Init) -> TensorId {
        self.specs.push(TensorSpec { name, rows, cols, offset: self.offset });
        self.inits.push(init);
        self.offset += rows * cols;
        TensorId(self.specs.len() - 1)
    }
}

fn layout(config: &ModelConfig) -> (ParamIndex, Vec<TensorSpec>, Vec<Init>) {
    let mut b = Builder { specs: Vec::new(), inits: Vec::new(), offset: 0 };
    let (d, f) = (config.d, config.d_ff);
    let word = b.add("embeddings.word".into(), config.vocab_size, config.d_word(), Init::Embedding);
    let source = b.add("embeddings.source".into(), config.max_global, config.d_source, Init::Embedding);
    let global = b.add("embeddings.global".into(), config.max_global, d, Init::Embedding);
    let layers = (0..config.n_layers)
        .map(|l| {
            let mut add = |n: &str, rows, cols, init| b.add(format!("layer{l}.{n}"), rows, cols, init);
            LayerParams {
                wq: add("attn.wq", d, d, Init::Normal),
                bq: add("attn.bq", 1, d, Init::Zeros),
                wk: add("attn.wk", d, d, Init::Normal),
                bk: add("attn.bk", 1, d, Init::Zeros),
                wv: add("attn.wv", d, d, Init::Normal),
                bv: add("attn.bv", 1, d, Init::Zeros),
                wo: add("attn.wo", d, d, Init::Normal),
                bo: add("attn.bo", 1, d, Init::Zeros),
                ln1_g: add("ln1.gain", 1, d, Init::Ones),
                ln1_b: add("ln1.bias", 1, d, Init::Zeros),
                w1: add("ff.w1", d, f, Init::Normal),
                b1: add("ff.b1", 1, f, Init::Zeros),
                w2: add("ff.w2", f, d, Init::Normal),
                b2: add("ff.b2", 1, d, Init::Zeros),
                ln2_g: add("ln2.gain", 1, d, Init::Ones),
                ln2_b: add("ln2.bias", 1, d, Init::Zeros),
            }
        })
        .collect();
    let out_w = b.add("output.w".into(), d, 1, Init::Normal);
    let out_b = b.add("output.b".into(), 1, 1, Init::Zeros);
    (ParamIndex { word, source, global, layers, out_w, out_b }, b.specs, b.inits)
}

impl ParamIndex {
    pub fn new(config: &ModelConfig) -> Self {
        layout(config).0
    }
}

/// Truncated normal: resample draws beyond two standard deviations.
fn truncated_normal(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= 2.0 {
            return z * std;
        }
    }
}

/// Seeded initialization: weights truncated normal with `config.init_std`, biases 0,
/// layer-norm gains 1.
pub fn init_params(config: &ModelConfig, seed: u64) -> Parameters {
    let (_, specs, inits) = layout(config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(specs.last().map_or(0, |s| s.offset + s.len()));
    for (spec, init) in specs.iter().zip(&inits) {
        for _ in 0..spec.len() {
            values.push(match init {
                Init::Normal => truncated_normal(&mut rng, config.init_std),
                Init::Embedding => truncated_normal(&mut rng, 1.0 / (config.d as f64).sqrt()),
                Init::Zeros => 0.0,
                Init::Ones => 1.0,
            });
        }
    }
    Parameters { specs, values }
}

impl Parameters {
    /// All-zero tensors with the layout of `config`.
    pub fn zeros(config: &ModelConfig) -> Self {
        let (_, specs, _) = layout(config);
        let n = specs.last().map_or(0, |s| s.offset + s.len());
        Parameters { specs, values: vec![0.0; n] }
    }

    pub fn zeros_like(&self) -> Self {
        Parameters { specs: self.specs.clone(), values: vec![0.0; self.values.len()] }
    }

    /// Rebuilds a store from a tensor table and values, checking both against `config`.
    pub fn from_parts(config: &ModelConfig, specs: Vec<TensorSpec>, values: Vec<f64>) -> Result<Self, String> {
        let (_, expected, _) = layout(config);
        if specs != expected {
            return Err("tensor table does not match the model config".into());
        }
        let n = expected.last().map_or(0, |s| s.offset + s.len());
        if values.len() != n {
            return Err(format!("expected {n} values, found {}", values.len()));
        }
        Ok(Parameters { specs, values })
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spec(&self, id: TensorId) -> &TensorSpec {
        &self.specs[id.0]
    }

    pub fn find(&self, name: &str) -> Option<TensorId> {
        self.specs.iter().position(|s| s.name == name).map(TensorId)
    }

    pub fn view(&self, id: TensorId) -> ArrayView2<'_, f64> {
        let s = &self.specs[id.0];
        ArrayView2::from_shape((s.rows, s.cols), &self.values[s.range()]).expect("spec matches storage")
    }

    pub fn view_mut(&mut self, id: TensorId) -> ArrayViewMut2<'_, f64> {
        let s = &self.specs[id.0];
        ArrayViewMut2::from_shape((s.rows, s.cols), &mut self.values[s.range()]).expect("spec matches storage")
    }

    /// Name of the tensor containing flat index `i`.
    pub fn name_of(&self, i: usize) -> &str {
        let k = self.specs.partition_point(|s| s.offset + s.len() <= i);
        &self.specs[k.min(self.specs.len() - 1)].name
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig { d: 8, n_layers: 1, n_heads: 2, d_source: 2, d_ff: 32, vocab_size: 20, max_global: 4, ..ModelConfig::desk() }
    }

    #[test]
    fn init_is_deterministic_and_seeded() {
        let a = init_params(&tiny(), 1);
        let b = init_params(&tiny(), 1);
        assert_eq!(a.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_ne!(a, init_params(&tiny(), 2));
    }

    #[test]
    fn init_recipe() {
        let cfg = tiny();
        let p = init_params(&cfg, 3);
        let idx = ParamIndex::new(&cfg);
        let l = idx.layers[0];
        assert!(p.view(l.bq).iter().all(|&v| v == 0.0));
        assert!(p.view(l.ln1_g).iter().all(|&v| v == 1.0));
        assert!(p.view(l.wq).iter().all(|&v| v.abs() <= 2.0 * cfg.init_std));
        let big = init_params(&ModelConfig { vocab_size: 2000, ..tiny() }, 3);
        let w = big.view(ParamIndex::new(&ModelConfig { vocab_size: 2000, ..tiny() }).word);
        let n = w.len() as f64;
        let var = w.iter().map(|v| v * v).sum::<f64>() / n;
        // Embedding tables use 1/sqrt(d); truncation at 2 sigma shrinks the variance by about 0.774.
        let want = 1.0 / (cfg.d as f64).sqrt();
        assert!((var.sqrt() / want - 0.774f64.sqrt()).abs() < 0.03, "std {}", var.sqrt());
    }

    #[test]
    fn layout_is_contiguous_and_named() {
        let cfg = tiny();
        let p = Parameters::zeros(&cfg);
        let mut offset = 0;
        for s in p.specs() {
            assert_eq!(s.offset, offset);
            offset += s.len();
        }
        assert_eq!(offset, p.len());
        assert_eq!(p.name_of(0), "embeddings.word");
        assert_eq!(p.name_of(p.len() - 1), "output.b");
        assert!(p.find("layer0.ff.w1").is_some());
        assert!(Parameters::from_parts(&cfg, p.specs().to_vec(), vec![0.0; 3]).is_err());
    }
}
