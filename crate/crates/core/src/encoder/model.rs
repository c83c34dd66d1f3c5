use rand::Rng as _;

use super::{ConformerConfig, Embedding, EncoderError};
use crate::autodiff::{Graph, Mode, ParamStore, Real, Tensor, Var};
use crate::dsp::MelSpectrogram;
use crate::par::{self, Execution};
use crate::rng::{derive_seed, rng_from_seed};

const LN_EPS: f64 = 1e-5;
const POS_INIT_RANGE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
struct Linear {
    weight: usize,
    bias: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Norm {
    gamma: usize,
    beta: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct FeedForward {
    norm: Norm,
    up: Linear,
    down: Linear,
}

#[derive(Debug, Clone, PartialEq)]
struct SelfAttention {
    norm: Norm,
    query: Linear,
    key: Linear,
    value: Linear,
    out: Linear,
}

#[derive(Debug, Clone, PartialEq)]
struct ConvModule {
    norm: Norm,
    pointwise_in: Linear,
    depthwise: Linear,
    pointwise_out: Linear,
}

#[derive(Debug, Clone, PartialEq)]
struct Block {
    ffn1: FeedForward,
    attn: SelfAttention,
    conv: ConvModule,
    ffn2: FeedForward,
    final_norm: Norm,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    input: Linear,
    positional: Option<usize>,
    blocks: Vec<Block>,
    output: Linear,
}

/// Parameter initialization rule.
#[derive(Clone, Copy)]
enum Init {
    /// uniform(−1/√fan_in, 1/√fan_in)
    FanIn(usize),
    Uniform(f64),
    Ones,
    Zeros,
}

/// Canonical (name, shape, init) list. Names and shapes depend only on the
/// config, which is what checkpoint loading validates against.
fn param_specs(cfg: &ConformerConfig) -> Vec<(String, Vec<usize>, Init)> {
    let d = cfg.encoder_dim;
    let mut specs = Vec::new();
    let linear = |specs: &mut Vec<_>, name: &str, fan_in: usize, fan_out: usize| {
        specs.push((format!("{name}.weight"), vec![fan_in, fan_out], Init::FanIn(fan_in)));
        specs.push((format!("{name}.bias"), vec![fan_out], Init::FanIn(fan_in)));
    };
    let norm = |specs: &mut Vec<_>, name: &str| {
        specs.push((format!("{name}.gamma"), vec![d], Init::Ones));
        specs.push((format!("{name}.beta"), vec![d], Init::Zeros));
    };
    linear(&mut specs, "input", cfg.n_mels, d);
    if cfg.positional_embedding {
        specs.push(("positional".to_string(), vec![cfg.max_frames, d], Init::Uniform(POS_INIT_RANGE)));
    }
    for l in 0..cfg.n_layers {
        let p = format!("blocks.{l}");
        norm(&mut specs, &format!("{p}.ffn1.norm"));
        linear(&mut specs, &format!("{p}.ffn1.up"), d, cfg.ffn_dim());
        linear(&mut specs, &format!("{p}.ffn1.down"), cfg.ffn_dim(), d);
        norm(&mut specs, &format!("{p}.attn.norm"));
        for proj in ["query", "key", "value", "out"] {
            linear(&mut specs, &format!("{p}.attn.{proj}"), d, d);
        }
        norm(&mut specs, &format!("{p}.conv.norm"));
        linear(&mut specs, &format!("{p}.conv.pointwise_in"), d, 2 * d);
        let k = cfg.conv_kernel_size;
        specs.push((format!("{p}.conv.depthwise.weight"), vec![k, d], Init::FanIn(k)));
        specs.push((format!("{p}.conv.depthwise.bias"), vec![d], Init::FanIn(k)));
        linear(&mut specs, &format!("{p}.conv.pointwise_out"), d, d);
        norm(&mut specs, &format!("{p}.ffn2.norm"));
        linear(&mut specs, &format!("{p}.ffn2.up"), d, cfg.ffn_dim());
        linear(&mut specs, &format!("{p}.ffn2.down"), cfg.ffn_dim(), d);
        norm(&mut specs, &format!("{p}.final_norm"));
    }
    linear(&mut specs, "output", d, cfg.embedding_dim);
    specs
}

fn layout(cfg: &ConformerConfig, store_slot: impl Fn(&str) -> usize) -> Layout {
    let lin = |n: &str| Linear {
        weight: store_slot(&format!("{n}.weight")),
        bias: store_slot(&format!("{n}.bias")),
    };
    let norm = |n: &str| Norm {
        gamma: store_slot(&format!("{n}.gamma")),
        beta: store_slot(&format!("{n}.beta")),
    };
    let ffn = |p: &str| FeedForward {
        norm: norm(&format!("{p}.norm")),
        up: lin(&format!("{p}.up")),
        down: lin(&format!("{p}.down")),
    };
    Layout {
        input: lin("input"),
        positional: cfg.positional_embedding.then(|| store_slot("positional")),
        blocks: (0..cfg.n_layers)
            .map(|l| {
                let p = format!("blocks.{l}");
                Block {
                    ffn1: ffn(&format!("{p}.ffn1")),
                    attn: SelfAttention {
                        norm: norm(&format!("{p}.attn.norm")),
                        query: lin(&format!("{p}.attn.query")),
                        key: lin(&format!("{p}.attn.key")),
                        value: lin(&format!("{p}.attn.value")),
                        out: lin(&format!("{p}.attn.out")),
                    },
                    conv: ConvModule {
                        norm: norm(&format!("{p}.conv.norm")),
                        pointwise_in: lin(&format!("{p}.conv.pointwise_in")),
                        depthwise: lin(&format!("{p}.conv.depthwise")),
                        pointwise_out: lin(&format!("{p}.conv.pointwise_out")),
                    },
                    ffn2: ffn(&format!("{p}.ffn2")),
                    final_norm: norm(&format!("{p}.final_norm")),
                }
            })
            .collect(),
        output: lin("output"),
    }
}

/// Mean over the frame axis (axis 0) of a `[frames × dim]` activation.
pub fn mean_pool<T: Real>(g: &mut Graph<T>, x: Var) -> Result<Var, EncoderError> {
    Ok(g.mean(x, 0)?)
}

/// A conformer encoder with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T: Real> {
    cfg: ConformerConfig,
    params: ParamStore<T>,
    layout: Layout,
}

impl<T: Real> Model<T> {
    /// Builds a model with deterministic initialization: each tensor draws
    /// from its own stream derived from `seed` and the parameter name.
    pub fn build(cfg: ConformerConfig, seed: u64) -> Result<Self, EncoderError> {
        cfg.validate()?;
        let mut params = ParamStore::new();
        for (name, shape, init) in param_specs(&cfg) {
            let mut rng = rng_from_seed(derive_seed(seed, &name));
            let t = match init {
                Init::FanIn(fan_in) => {
                    let a = 1.0 / (fan_in as f64).sqrt();
                    Tensor::from_fn(&shape, |_| T::c(rng.random_range(-a..a)))
                }
                Init::Uniform(a) => Tensor::from_fn(&shape, |_| T::c(rng.random_range(-a..a))),
                Init::Ones => Tensor::full(&shape, T::one()),
                Init::Zeros => Tensor::zeros(&shape),
            };
            params.insert(name, t)?;
        }
        Self::from_params(cfg, params)
    }

    /// Wraps an existing parameter set after checking names and shapes
    /// against the config.
    pub fn from_params(cfg: ConformerConfig, params: ParamStore<T>) -> Result<Self, EncoderError> {
        cfg.validate()?;
        let specs = param_specs(&cfg);
        if specs.len() != params.len() {
            return Err(EncoderError::CheckpointMismatch(format!(
                "expected {} tensors, found {}",
                specs.len(),
                params.len()
            )));
        }
        for (slot, (name, shape, _)) in specs.iter().enumerate() {
            let (found_name, found) = (params.name(slot), params.get(slot));
            if found_name != name || found.shape() != shape.as_slice() {
                return Err(EncoderError::CheckpointMismatch(format!(
                    "slot {slot}: expected {name} {shape:?}, found {found_name} {:?}",
                    found.shape()
                )));
            }
        }
        let layout = layout(&cfg, |n| params.slot(n).expect("validated name"));
        Ok(Self { cfg, params, layout })
    }

    pub fn config(&self) -> &ConformerConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.numel()
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            cfg: self.cfg,
            params: self.params.cast(),
            layout: self.layout.clone(),
        }
    }

    fn linear(&self, g: &mut Graph<T>, p: &[Var], lin: &Linear, x: Var) -> Result<Var, EncoderError> {
        let h = g.matmul(x, p[lin.weight])?;
        Ok(g.add_row(h, p[lin.bias])?)
    }

    fn norm(&self, g: &mut Graph<T>, p: &[Var], n: &Norm, x: Var) -> Result<Var, EncoderError> {
        Ok(g.layer_norm(x, p[n.gamma], p[n.beta], 1, LN_EPS)?)
    }

    fn feed_forward(&self, g: &mut Graph<T>, p: &[Var], f: &FeedForward, x: Var) -> Result<Var, EncoderError> {
        let h = self.norm(g, p, &f.norm, x)?;
        let h = self.linear(g, p, &f.up, h)?;
        let h = g.swish(h)?;
        let h = g.dropout(h, self.cfg.dropout_rate)?;
        let h = self.linear(g, p, &f.down, h)?;
        Ok(g.dropout(h, self.cfg.dropout_rate)?)
    }

    fn self_attention(&self, g: &mut Graph<T>, p: &[Var], a: &SelfAttention, x: Var) -> Result<Var, EncoderError> {
        let h = self.norm(g, p, &a.norm, x)?;
        let q = self.linear(g, p, &a.query, h)?;
        let k = self.linear(g, p, &a.key, h)?;
        let v = self.linear(g, p, &a.value, h)?;
        let att = g.attention(q, k, v, self.cfg.n_heads)?;
        let o = self.linear(g, p, &a.out, att)?;
        Ok(g.dropout(o, self.cfg.dropout_rate)?)
    }

    /// pointwise → GLU → depthwise → swish → pointwise
    fn conv_module(&self, g: &mut Graph<T>, p: &[Var], c: &ConvModule, x: Var) -> Result<Var, EncoderError> {
        let h = self.norm(g, p, &c.norm, x)?;
        let h = self.linear(g, p, &c.pointwise_in, h)?;
        let h = g.glu(h, 1)?;
        let pad = (self.cfg.conv_kernel_size - 1) / 2;
        let h = g.depthwise_conv1d(h, p[c.depthwise.weight], Some(p[c.depthwise.bias]), pad)?;
        let h = g.swish(h)?;
        let h = self.linear(g, p, &c.pointwise_out, h)?;
        Ok(g.dropout(h, self.cfg.dropout_rate)?)
    }

    /// One conformer block over `[frames × encoder_dim]`: half-step FFN,
    /// self-attention, convolution module, half-step FFN (each residual),
    /// then a final layer norm.
    pub fn block_forward(&self, g: &mut Graph<T>, p: &[Var], layer: usize, x: Var) -> Result<Var, EncoderError> {
        let width = g.shape(x).get(1).copied().unwrap_or(0);
        if width != self.cfg.encoder_dim {
            return Err(EncoderError::InvalidConfig(format!(
                "block input width {width}, encoder_dim {}",
                self.cfg.encoder_dim
            )));
        }
        let b = &self.layout.blocks[layout_index(layer, self.layout.blocks.len())?];
        let half = T::c(0.5);
        let f = self.feed_forward(g, p, &b.ffn1, x)?;
        let f = g.scale(f, half)?;
        let x = g.add(x, f)?;
        let a = self.self_attention(g, p, &b.attn, x)?;
        let x = g.add(x, a)?;
        let c = self.conv_module(g, p, &b.conv, x)?;
        let x = g.add(x, c)?;
        let f = self.feed_forward(g, p, &b.ffn2, x)?;
        let f = g.scale(f, half)?;
        let x = g.add(x, f)?;
        self.norm(g, p, &b.final_norm, x)
    }

    /// Full forward pass from a `[frames × n_mels]` input node to a
    /// `[1 × embedding_dim]` unit-norm output node. `p` comes from
    /// `self.params().bind(g, ..)`.
    pub fn forward(&self, g: &mut Graph<T>, p: &[Var], input: Var) -> Result<Var, EncoderError> {
        let shape = g.shape(input).to_vec();
        let (frames, mels) = match shape.as_slice() {
            [f, m] => (*f, *m),
            _ => return Err(EncoderError::InvalidConfig(format!("input shape {shape:?} is not 2-D"))),
        };
        if mels != self.cfg.n_mels {
            return Err(EncoderError::MelMismatch {
                expected: self.cfg.n_mels,
                found: mels,
            });
        }
        if self.cfg.positional_embedding && frames > self.cfg.max_frames {
            return Err(EncoderError::TooManyFrames {
                max: self.cfg.max_frames,
                found: frames,
            });
        }
        let mut h = self.linear(g, p, &self.layout.input, input)?;
        if let Some(pos) = self.layout.positional {
            let rows = g.slice(p[pos], 0, 0, frames)?;
            h = g.add(h, rows)?;
        }
        for layer in 0..self.layout.blocks.len() {
            h = self.block_forward(g, p, layer, h)?;
        }
        let pooled = mean_pool(g, h)?;
        let out = self.linear(g, p, &self.layout.output, pooled)?;
        Ok(g.l2_normalize(out, 1)?)
    }

    /// Adds a spectrogram to `g` as a constant `[frames × n_mels]` input.
    pub fn input_node(&self, g: &mut Graph<T>, spec: &MelSpectrogram) -> Result<Var, EncoderError> {
        if spec.n_mels() != self.cfg.n_mels {
            return Err(EncoderError::MelMismatch {
                expected: self.cfg.n_mels,
                found: spec.n_mels(),
            });
        }
        let data = spec.values().iter().map(|&v| T::c(f64::from(v))).collect();
        Ok(g.constant(Tensor::new(vec![spec.n_frames(), spec.n_mels()], data)?))
    }

    /// Embeds one spectrogram. `Mode::Eval` is deterministic; in
    /// `Mode::Train` `dropout_seed` drives the dropout masks.
    pub fn embed_with(&self, spec: &MelSpectrogram, mode: Mode, dropout_seed: u64) -> Result<Embedding, EncoderError> {
        let mut g = Graph::new(mode, dropout_seed).with_execution(Execution::Sequential);
        let p = self.params.bind(&mut g, false);
        let x = self.input_node(&mut g, spec)?;
        let out = self.forward(&mut g, &p, x)?;
        let values = g.value(out).data().iter().map(|v| v.f64() as f32).collect();
        Embedding::normalized(values)
    }

    /// Eval-mode embedding.
    pub fn embed(&self, spec: &MelSpectrogram) -> Result<Embedding, EncoderError> {
        self.embed_with(spec, Mode::Eval, 0)
    }

    /// Eval-mode embeddings for a batch; identical to calling [`Model::embed`]
    /// on each item.
    pub fn embed_batch(&self, specs: &[MelSpectrogram]) -> Result<Vec<Embedding>, EncoderError> {
        self.embed_batch_with(specs, Execution::Parallel)
    }

    pub fn embed_batch_with(&self, specs: &[MelSpectrogram], exec: Execution) -> Result<Vec<Embedding>, EncoderError> {
        if let Some(first) = specs.first() {
            let dims = (first.n_frames(), first.n_mels());
            if let Some((i, s)) = specs
                .iter()
                .enumerate()
                .find(|(_, s)| (s.n_frames(), s.n_mels()) != dims)
            {
                return Err(EncoderError::HeterogeneousBatch(format!(
                    "item 0 is {}×{}, item {i} is {}×{}",
                    dims.0,
                    dims.1,
                    s.n_frames(),
                    s.n_mels()
                )));
            }
        }
        par::try_map(exec, specs, |s| self.embed(s))
    }
}

fn layout_index(layer: usize, n: usize) -> Result<usize, EncoderError> {
    if layer < n {
        Ok(layer)
    } else {
        Err(EncoderError::InvalidConfig(format!("layer {layer} out of range ({n} layers)")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::SpectralConfig;
    use rand::SeedableRng;

    fn random_spec(n_frames: usize, n_mels: usize, seed: u64) -> MelSpectrogram {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let values = (0..n_frames * n_mels).map(|_| rng.random_range(-10.0f32..2.0)).collect();
        MelSpectrogram::new(n_frames, n_mels, values, SpectralConfig::default().with_n_mels(n_mels)).unwrap()
    }

    #[test]
    fn parameter_counts() {
        let count = |cfg: ConformerConfig| param_specs(&cfg).iter().map(|(_, s, _)| s.iter().product::<usize>()).sum::<usize>();
        let small = count(ConformerConfig::small());
        // 1,509,248 block/projection weights + 368×256 positional table
        assert_eq!(small, 1_603_456);
        assert!((small as f64 - 1.5e6).abs() <= 0.15 * 1.5e6);
        let no_pos = |cfg: ConformerConfig| ConformerConfig {
            positional_embedding: false,
            ..cfg
        };
        assert_eq!(count(no_pos(ConformerConfig::small())), 1_509_248);
        assert!((count(no_pos(ConformerConfig::medium())) as f64 / 8.8e6 - 1.0).abs() < 0.01);
        assert!((count(no_pos(ConformerConfig::large())) as f64 / 26.2e6 - 1.0).abs() < 0.01);
        let built = Model::<f32>::build(ConformerConfig::small(), 1).unwrap();
        assert_eq!(built.num_params(), small);
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = Model::<f32>::build(ConformerConfig::tiny(), 42).unwrap();
        let b = Model::<f32>::build(ConformerConfig::tiny(), 42).unwrap();
        let c = Model::<f32>::build(ConformerConfig::tiny(), 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = ConformerConfig {
            n_heads: 5,
            ..ConformerConfig::tiny()
        };
        assert!(matches!(Model::<f32>::build(cfg, 0), Err(EncoderError::InvalidConfig(_))));
    }

    #[test]
    fn zeroed_sub_block_outputs_reduce_block_to_final_norm() {
        let mut model = Model::<f64>::build(ConformerConfig::tiny(), 7).unwrap();
        for name in [
            "blocks.0.ffn1.down",
            "blocks.0.attn.out",
            "blocks.0.conv.pointwise_out",
            "blocks.0.ffn2.down",
        ] {
            for suffix in ["weight", "bias"] {
                let slot = model.params().slot(&format!("{name}.{suffix}")).unwrap();
                let shape = model.params().get(slot).shape().to_vec();
                model.params_mut().set(slot, Tensor::zeros(&shape)).unwrap();
            }
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let xt = Tensor::from_fn(&[12, 16], |_| rng.random_range(-1.0..1.0));
        let mut g = Graph::new(Mode::Eval, 0);
        let p = model.params().bind(&mut g, false);
        let x = g.constant(xt.clone());
        let y = model.block_forward(&mut g, &p, 0, x).unwrap();
        let gamma = p[model.params().slot("blocks.0.final_norm.gamma").unwrap()];
        let beta = p[model.params().slot("blocks.0.final_norm.beta").unwrap()];
        let expected = g.layer_norm(x, gamma, beta, 1, LN_EPS).unwrap();
        assert_eq!(g.value(y), g.value(expected));
    }

    #[test]
    fn block_preserves_shape() {
        let model = Model::<f32>::build(ConformerConfig::tiny(), 3).unwrap();
        for frames in [5, 17, 64, 100] {
            let mut g = Graph::new(Mode::Train, 9);
            let p = model.params().bind(&mut g, false);
            let x = g.constant(Tensor::full(&[frames, 16], 0.1));
            let y = model.block_forward(&mut g, &p, 0, x).unwrap();
            assert_eq!(g.shape(y), &[frames, 16]);
        }
        let mut g = Graph::new(Mode::Eval, 0);
        let p = model.params().bind(&mut g, false);
        let x = g.constant(Tensor::zeros(&[4, 8]));
        assert!(model.block_forward(&mut g, &p, 0, x).is_err());
    }

    #[test]
    fn embeddings_are_unit_norm_and_deterministic() {
        let model = Model::<f32>::build(ConformerConfig::tiny(), 11).unwrap();
        let spec = random_spec(40, 8, 1);
        let a = model.embed(&spec).unwrap();
        let b = model.embed(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), 128);
        assert!((a.dot(&a) - 1.0).abs() < 1e-5);
        let t = model.embed_with(&spec, Mode::Train, 5).unwrap();
        assert!((t.dot(&t) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn cosine_equals_dot_product() {
        let model = Model::<f32>::build(ConformerConfig::tiny(), 11).unwrap();
        let a = model.embed(&random_spec(30, 8, 2)).unwrap();
        let b = model.embed(&random_spec(30, 8, 3)).unwrap();
        let na = a.values().iter().map(|v| f64::from(*v).powi(2)).sum::<f64>().sqrt();
        let nb = b.values().iter().map(|v| f64::from(*v).powi(2)).sum::<f64>().sqrt();
        let cosine = a.dot(&b) / (na * nb);
        assert!((cosine - a.dot(&b)).abs() < 1e-6);
    }

    #[test]
    fn mel_mismatch_is_rejected() {
        let model = Model::<f32>::build(ConformerConfig::tiny(), 0).unwrap();
        assert!(matches!(
            model.embed(&random_spec(10, 9, 0)),
            Err(EncoderError::MelMismatch { expected: 8, found: 9 })
        ));
    }

    #[test]
    fn batch_matches_single_calls() {
        let model = Model::<f32>::build(ConformerConfig::tiny(), 4).unwrap();
        let specs: Vec<_> = (0..8).map(|i| random_spec(25, 8, i)).collect();
        let batch = model.embed_batch(&specs).unwrap();
        let seq = model.embed_batch_with(&specs, Execution::Sequential).unwrap();
        assert_eq!(batch, seq);
        for (s, e) in specs.iter().zip(&batch) {
            assert_eq!(&model.embed(s).unwrap(), e);
        }
        assert_eq!(model.embed_batch(&specs[..1]).unwrap()[0], model.embed(&specs[0]).unwrap());
        assert!(model.embed_batch(&[]).unwrap().is_empty());
        let mixed = [random_spec(25, 8, 0), random_spec(26, 8, 1)];
        assert!(matches!(model.embed_batch(&mixed), Err(EncoderError::HeterogeneousBatch(_))));
    }

    #[test]
    fn mean_pool_matches_direct_mean_and_ignores_order() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> = (0..7).map(|_| (0..5).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let mut g = Graph::<f64>::new(Mode::Eval, 0);
        let x = g.constant(Tensor::from_rows(&rows).unwrap());
        let pooled = mean_pool(&mut g, x).unwrap();
        for c in 0..5 {
            let oracle = rows.iter().map(|r| r[c]).sum::<f64>() / 7.0;
            assert!((g.value(pooled).data()[c] - oracle).abs() < 1e-6);
        }
        let mut reversed = rows.clone();
        reversed.reverse();
        let xr = g.constant(Tensor::from_rows(&reversed).unwrap());
        let pr = mean_pool(&mut g, xr).unwrap();
        for c in 0..5 {
            assert!((g.value(pr).data()[c] - g.value(pooled).data()[c]).abs() < 1e-12);
        }
        let one = g.constant(Tensor::from_rows(&rows[..1]).unwrap());
        let p1 = mean_pool(&mut g, one).unwrap();
        assert_eq!(g.value(p1).data(), rows[0].as_slice());
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let cfg = ConformerConfig {
            encoder_dim: 8,
            n_heads: 2,
            conv_kernel_size: 3,
            embedding_dim: 6,
            n_mels: 4,
            dropout_rate: 0.0,
            max_frames: 16,
            ..ConformerConfig::tiny()
        };
        let model = Model::<f64>::build(cfg, 21).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let input = Tensor::from_fn(&[7, 4], |_| rng.random_range(-2.0..2.0));
        let probe = Tensor::from_fn(&[1, 6], |_| rng.random_range(-1.0..1.0));
        let loss = |m: &Model<f64>, grads: bool| {
            let mut g = Graph::new(Mode::Eval, 0);
            let p = m.params().bind(&mut g, grads);
            let x = g.constant(input.clone());
            let w = g.constant(probe.clone());
            let e = m.forward(&mut g, &p, x).unwrap();
            let prod = g.mul(e, w).unwrap();
            let l = g.sum(prod).unwrap();
            let value = g.value(l).item();
            let gr = grads.then(|| {
                let back = g.backward(l).unwrap();
                p.iter().map(|v| back.get(*v).cloned()).collect::<Vec<_>>()
            });
            (value, gr)
        };
        let (_, analytic) = loss(&model, true);
        let analytic = analytic.unwrap();
        let h = 1e-5;
        for slot in 0..model.params().len() {
            let grad = analytic[slot].as_ref().expect("every parameter receives a gradient");
            let n = model.params().get(slot).numel();
            for idx in [0, n / 2, n - 1] {
                let mut plus = model.clone();
                plus.params_mut().get_mut(slot).data_mut()[idx] += h;
                let mut minus = model.clone();
                minus.params_mut().get_mut(slot).data_mut()[idx] -= h;
                let fd = (loss(&plus, false).0 - loss(&minus, false).0) / (2.0 * h);
                let a = grad.data()[idx];
                assert!(
                    (fd - a).abs() <= 1e-6 + 1e-4 * fd.abs().max(a.abs()),
                    "{}[{idx}]: analytic {a}, numeric {fd}",
                    model.params().name(slot)
                );
            }
        }
    }
}
