use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::{Forecaster, Gradients};
use crate::diffmath::ops::{self, LinearGrads};
use crate::diffmath::{ParamSet, Parameter, Tensor};
use crate::error::{Error, Result};

pub const INPUT_WEIGHT: &str = "input.weight";
pub const INPUT_BIAS: &str = "input.bias";
pub const ADAPTIVE_EMBEDDING: &str = "adaptive_embedding";
pub const ATTN_QUERY: &str = "temporal.query";
pub const ATTN_KEY: &str = "temporal.key";
pub const ATTN_VALUE: &str = "temporal.value";
pub const MIX_WEIGHT1: &str = "spatial.weight1";
pub const MIX_BIAS1: &str = "spatial.bias1";
pub const MIX_WEIGHT2: &str = "spatial.weight2";
pub const MIX_BIAS2: &str = "spatial.bias2";
pub const HEAD_WEIGHT: &str = "head.weight";
pub const HEAD_BIAS: &str = "head.bias";

/// Glorot/Xavier uniform bound.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    libm::sqrt(6.0 / (fan_in + fan_out) as f64)
}

fn xavier(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Result<Tensor> {
    let bound = xavier_bound(fan_in, fan_out);
    Tensor::from_fn(shape, |_| rng.random_range(-bound..=bound))
}

/// Draws every parameter from `config.seed`: Xavier-uniform weights (and
/// adaptive embedding over its last two axes), zero biases.
pub fn init_params(config: &ModelConfig) -> Result<ParamSet> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (e, f, h, p) = (
        config.entities(),
        config.feature_dim(),
        config.history,
        config.horizon,
    );
    let dh = config.hidden_dim();
    let (di, da, d_o, hid) = (
        config.input_dim,
        config.adaptive_dim,
        config.output_dim,
        config.spatial_hidden,
    );
    let mut set = ParamSet::new();
    if config.use_input_embedding {
        set.push(Parameter::new(
            INPUT_WEIGHT,
            xavier(&mut rng, &[f, di], f, di)?,
        ))?;
        set.push(Parameter::new(INPUT_BIAS, Tensor::zeros(&[di])?))?;
    }
    if config.use_adaptive_embedding {
        set.push(Parameter::new(
            ADAPTIVE_EMBEDDING,
            xavier(&mut rng, &[h, e, da], e, da)?,
        ))?;
    }
    for id in [ATTN_QUERY, ATTN_KEY, ATTN_VALUE] {
        set.push(Parameter::new(id, xavier(&mut rng, &[dh, dh], dh, dh)?))?;
    }
    set.push(Parameter::new(
        MIX_WEIGHT1,
        xavier(&mut rng, &[e, hid], e, hid)?,
    ))?;
    set.push(Parameter::new(MIX_BIAS1, Tensor::zeros(&[hid])?))?;
    set.push(Parameter::new(
        MIX_WEIGHT2,
        xavier(&mut rng, &[hid, e], hid, e)?,
    ))?;
    set.push(Parameter::new(MIX_BIAS2, Tensor::zeros(&[e])?))?;
    set.push(Parameter::new(
        HEAD_WEIGHT,
        xavier(&mut rng, &[h * dh, p * d_o], h * dh, p * d_o)?,
    ))?;
    set.push(Parameter::new(HEAD_BIAS, Tensor::zeros(&[p * d_o])?))?;
    Ok(set)
}

/// Intermediate tensors of one forward pass, in the model's named stages.
#[derive(Debug, Clone)]
pub struct ForwardActivations {
    /// `[B, H, E, d_i]` when the input embedding is enabled.
    pub input_embedding: Option<Tensor>,
    /// `[B, H, E, d_a]` batch-broadcast adaptive embedding.
    pub adaptive_embedding: Option<Tensor>,
    /// `[B, H, E, d_h]`.
    pub hidden: Tensor,
    /// `[B, E, H, H]` attention weights.
    pub attention: Tensor,
    /// `[B, H, E, d_h]` temporal module output.
    pub temporal: Tensor,
    /// `[B, P, E, d_o]`.
    pub output: Tensor,
}

/// Everything the backward pass needs.
#[derive(Debug, Clone)]
pub struct UmodCache {
    pub activations: ForwardActivations,
    x: Tensor,
    // [B·E, H, d_h] entity-major view of `hidden`
    seq: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    attn_flat: Tensor,
    // [B, H, d_h, E] entity axis last, for the mixing MLP
    mix_in: Tensor,
    mix_pre: Tensor,
    mix_act: Tensor,
    // [B, E, H·d_h]
    head_in: Tensor,
}

/// The forecaster: embedding, per-entity temporal attention, entity-mixing
/// MLP with residual, and a per-entity regression head.
#[derive(Debug, Clone, PartialEq)]
pub struct Umod {
    config: ModelConfig,
    params: ParamSet,
}

impl Umod {
    pub fn new(config: ModelConfig) -> Result<Self> {
        let params = init_params(&config)?;
        Ok(Self { config, params })
    }

    /// Wraps existing parameters after checking names and shapes.
    pub fn from_params(config: ModelConfig, params: ParamSet) -> Result<Self> {
        let reference = init_params(&ModelConfig { seed: 0, ..config })?;
        if reference.ids() != params.ids() {
            return Err(Error::config(alloc::format!(
                "parameter ids {:?} do not match the configuration, expected {:?}",
                params.ids(),
                reference.ids()
            )));
        }
        for (a, b) in reference.iter().zip(params.iter()) {
            if a.value.shape() != b.value.shape() {
                return Err(Error::dim(
                    "Umod::from_params",
                    a.value.shape(),
                    b.value.shape(),
                ));
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn p(&self, id: &str) -> &Tensor {
        // ids are validated at construction
        self.params.value(id).expect("parameter present for config")
    }

    fn check_input(&self, x: &Tensor) -> Result<usize> {
        let c = &self.config;
        let s = x.shape();
        if s.len() != 4 || s[1] != c.history || s[2] != c.entities() || s[3] != c.feature_dim() {
            return Err(Error::dim(
                "forward input",
                s,
                &[0, c.history, c.entities(), c.feature_dim()],
            ));
        }
        Ok(s[0])
    }

    /// Input and adaptive embeddings joined on the last axis.
    pub fn embed(&self, x: &Tensor) -> Result<(Option<Tensor>, Option<Tensor>, Tensor)> {
        let b = self.check_input(x)?;
        let ei = if self.config.use_input_embedding {
            Some(ops::linear(x, self.p(INPUT_WEIGHT), self.p(INPUT_BIAS))?)
        } else {
            None
        };
        let ea = if self.config.use_adaptive_embedding {
            Some(ops::expand_leading(self.p(ADAPTIVE_EMBEDDING), &[b])?)
        } else {
            None
        };
        let hidden = match (&ei, &ea) {
            (Some(a), Some(c)) => ops::concat_last(a, c)?,
            (Some(a), None) => a.clone(),
            (None, Some(c)) => c.clone(),
            (None, None) => unreachable!("config validation forbids disabling both"),
        };
        Ok((ei, ea, hidden))
    }

    /// Self-attention along time, independently for every (batch, entity).
    /// Returns `(output [B,H,E,d_h], attention [B,E,H,H], intermediates)`.
    #[allow(clippy::type_complexity)]
    fn temporal(&self, hidden: &Tensor) -> Result<(Tensor, Tensor, [Tensor; 5])> {
        let s = hidden.shape();
        let (b, h, e, dh) = (s[0], s[1], s[2], s[3]);
        let seq = ops::reshape(&ops::swap_axes(hidden, 1, 2)?, &[b * e, h, dh])?;
        let q = ops::matmul_last(&seq, self.p(ATTN_QUERY))?;
        let k = ops::matmul_last(&seq, self.p(ATTN_KEY))?;
        let v = ops::matmul_last(&seq, self.p(ATTN_VALUE))?;
        let (o, a) = ops::scaled_dot_attention(&q, &k, &v)?;
        let out = ops::swap_axes(&ops::reshape(&o, &[b, e, h, dh])?, 1, 2)?;
        let attention = ops::reshape(&a, &[b, e, h, h])?;
        Ok((out, attention, [seq, q, k, v, a]))
    }

    /// Public view of the temporal module on an arbitrary embedding.
    pub fn temporal_attention(&self, hidden: &Tensor) -> Result<Tensor> {
        let c = &self.config;
        let s = hidden.shape();
        if s.len() != 4 || s[1] != c.history || s[2] != c.entities() || s[3] != c.hidden_dim() {
            return Err(Error::dim(
                "temporal_attention",
                s,
                &[0, c.history, c.entities(), c.hidden_dim()],
            ));
        }
        Ok(self.temporal(hidden)?.0)
    }

    /// Entity mixing with residual, then the per-entity forecasting head.
    fn spatial(&self, temporal: &Tensor) -> Result<(Tensor, [Tensor; 4])> {
        let c = &self.config;
        let s = temporal.shape();
        let (b, h, e, dh) = (s[0], s[1], s[2], s[3]);
        let mix_in = ops::swap_axes(temporal, 2, 3)?;
        let mix_pre = ops::linear(&mix_in, self.p(MIX_WEIGHT1), self.p(MIX_BIAS1))?;
        let mix_act = ops::relu(&mix_pre);
        let mixed = ops::linear(&mix_act, self.p(MIX_WEIGHT2), self.p(MIX_BIAS2))?;
        let stage1 = ops::add(&ops::swap_axes(&mixed, 2, 3)?, temporal)?;
        let head_in = ops::reshape(&ops::swap_axes(&stage1, 1, 2)?, &[b, e, h * dh])?;
        let y = ops::linear(&head_in, self.p(HEAD_WEIGHT), self.p(HEAD_BIAS))?;
        let y = ops::reshape(&y, &[b, e, c.horizon, c.output_dim])?;
        Ok((
            ops::swap_axes(&y, 1, 2)?,
            [mix_in, mix_pre, mix_act, head_in],
        ))
    }

    pub fn spatial_head(&self, temporal: &Tensor) -> Result<Tensor> {
        let c = &self.config;
        let s = temporal.shape();
        if s.len() != 4 || s[1] != c.history || s[2] != c.entities() || s[3] != c.hidden_dim() {
            return Err(Error::dim(
                "spatial_head",
                s,
                &[0, c.history, c.entities(), c.hidden_dim()],
            ));
        }
        Ok(self.spatial(temporal)?.0)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn activations(&self, x: &Tensor) -> Result<ForwardActivations> {
        Ok(self.forward_cached(x)?.1.activations)
    }

    /// Full backward pass; also returns the gradient with respect to `x`.
    pub fn backward_with_input(&self, cache: &UmodCache, d_out: &Tensor) -> Result<Gradients> {
        let c = &self.config;
        let act = &cache.activations;
        if !d_out.same_shape(&act.output) {
            return Err(Error::dim(
                "Umod::backward",
                act.output.shape(),
                d_out.shape(),
            ));
        }
        let s = act.hidden.shape();
        let (b, h, e, dh) = (s[0], s[1], s[2], s[3]);

        // head
        let dy = ops::swap_axes(d_out, 1, 2)?;
        let dy = ops::reshape(&dy, &[b, e, c.horizon * c.output_dim])?;
        let head = ops::linear_backward(&cache.head_in, self.p(HEAD_WEIGHT), &dy)?;
        let d_stage1 = ops::swap_axes(&ops::reshape(&head.dx, &[b, e, h, dh])?, 1, 2)?;

        // residual mixing
        let (mut d_temporal, d_mixed_t) = ops::add_backward(d_stage1.shape(), &d_stage1)?;
        let d_mixed = ops::swap_axes(&d_mixed_t, 2, 3)?;
        let mix2 = ops::linear_backward(&cache.mix_act, self.p(MIX_WEIGHT2), &d_mixed)?;
        let d_pre = ops::relu_backward(&cache.mix_pre, &mix2.dx)?;
        let mix1 = ops::linear_backward(&cache.mix_in, self.p(MIX_WEIGHT1), &d_pre)?;
        let d_temporal_mix = ops::swap_axes(&mix1.dx, 2, 3)?;
        for (a, g) in d_temporal.data_mut().iter_mut().zip(d_temporal_mix.data()) {
            *a += g;
        }

        // temporal attention
        let d_o = ops::reshape(&ops::swap_axes(&d_temporal, 1, 2)?, &[b * e, h, dh])?;
        let attn = ops::scaled_dot_attention_backward(
            &cache.q,
            &cache.k,
            &cache.v,
            &cache.attn_flat,
            &d_o,
        )?;
        let (mut d_seq, dwq) = ops::matmul_last_backward(&cache.seq, self.p(ATTN_QUERY), &attn.dq)?;
        let (d_seq_k, dwk) = ops::matmul_last_backward(&cache.seq, self.p(ATTN_KEY), &attn.dk)?;
        let (d_seq_v, dwv) = ops::matmul_last_backward(&cache.seq, self.p(ATTN_VALUE), &attn.dv)?;
        for ((a, k), v) in d_seq
            .data_mut()
            .iter_mut()
            .zip(d_seq_k.data())
            .zip(d_seq_v.data())
        {
            *a += k + v;
        }
        let d_hidden = ops::swap_axes(&ops::reshape(&d_seq, &[b, e, h, dh])?, 1, 2)?;

        // embeddings
        let (d_ei, d_ea) = match (c.use_input_embedding, c.use_adaptive_embedding) {
            (true, true) => {
                let (a, bb) = ops::concat_last_backward(&d_hidden, c.input_dim)?;
                (Some(a), Some(bb))
            }
            (true, false) => (Some(d_hidden), None),
            (false, true) => (None, Some(d_hidden)),
            (false, false) => unreachable!("config validation forbids disabling both"),
        };

        let mut grads = Vec::with_capacity(self.params.len());
        let d_input = match d_ei {
            Some(d) => {
                let LinearGrads { dx, dw, db } =
                    ops::linear_backward(&cache.x, self.p(INPUT_WEIGHT), &d)?;
                grads.push(dw);
                grads.push(db);
                dx
            }
            None => Tensor::zeros(cache.x.shape())?,
        };
        if let Some(d) = d_ea {
            grads.push(ops::reduce_leading(&d, &[h, e, c.adaptive_dim])?);
        }
        grads.extend([
            dwq, dwk, dwv, mix1.dw, mix1.db, mix2.dw, mix2.db, head.dw, head.db,
        ]);
        debug_assert_eq!(grads.len(), self.params.len());
        Ok(Gradients {
            params: grads,
            input: d_input,
        })
    }
}

impl Forecaster for Umod {
    type Cache = UmodCache;

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, UmodCache)> {
        let (ei, ea, hidden) = self.embed(x)?;
        let (temporal, attention, [seq, q, k, v, attn_flat]) = self.temporal(&hidden)?;
        let (output, [mix_in, mix_pre, mix_act, head_in]) = self.spatial(&temporal)?;
        let cache = UmodCache {
            activations: ForwardActivations {
                input_embedding: ei,
                adaptive_embedding: ea,
                hidden,
                attention,
                temporal,
                output: output.clone(),
            },
            x: x.clone(),
            seq,
            q,
            k,
            v,
            attn_flat,
            mix_in,
            mix_pre,
            mix_act,
            head_in,
        };
        Ok((output, cache))
    }

    fn backward(&self, cache: &UmodCache, d_out: &Tensor) -> Result<Gradients> {
        self.backward_with_input(cache, d_out)
    }

    fn output_shape(&self, batch: usize) -> [usize; 4] {
        let c = &self.config;
        [batch, c.horizon, c.entities(), c.output_dim]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn tiny() -> ModelConfig {
        ModelConfig {
            input_dim: 3,
            adaptive_dim: 5,
            seed: 42,
            ..ModelConfig::new(4, 2, 2)
        }
    }

    #[test]
    fn init_is_deterministic_and_biases_zero() {
        let a = init_params(&tiny()).unwrap();
        let b = init_params(&tiny()).unwrap();
        assert_eq!(a, b);
        for id in [INPUT_BIAS, MIX_BIAS1, MIX_BIAS2, HEAD_BIAS] {
            assert!(a.value(id).unwrap().data().iter().all(|v| *v == 0.0));
        }
        let c = init_params(&ModelConfig { seed: 43, ..tiny() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn xavier_bound_for_full_network_input_layer() {
        let bound = xavier_bound(172, 24);
        assert!((bound - 0.174_963_553_055_941_7).abs() < 1e-12, "{bound}");
        let cfg = ModelConfig::new(172, 2, 2);
        let params = init_params(&ModelConfig {
            adaptive_dim: 1,
            spatial_hidden: 1,
            output_dim: 1,
            ..cfg
        })
        .unwrap();
        let w = params.value(INPUT_WEIGHT).unwrap();
        assert_eq!(w.shape(), &[172, 24]);
        assert!(w.data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn parameter_count_matches_closed_form() {
        for cfg in [
            tiny(),
            ModelConfig {
                use_input_embedding: false,
                ..tiny()
            },
            ModelConfig {
                use_adaptive_embedding: false,
                ..tiny()
            },
            ModelConfig::top_k_pairs(4, 6, 3, 2),
        ] {
            let p = init_params(&cfg).unwrap();
            assert_eq!(p.scalar_count(), cfg.parameter_count(), "{cfg:?}");
        }
    }

    #[test]
    fn hidden_width_follows_enabled_embeddings() {
        let x = Tensor::from_fn(&[2, 2, 4, 4], |i| (i as f64 * 0.37).sin()).unwrap();
        let full = Umod::new(ModelConfig::new(4, 2, 2)).unwrap();
        assert_eq!(full.embed(&x).unwrap().2.shape(), &[2, 2, 4, 104]);

        let no_input = Umod::new(ModelConfig {
            use_input_embedding: false,
            ..tiny()
        })
        .unwrap();
        let (_, ea, hid) = no_input.embed(&x).unwrap();
        assert_eq!(hid, ea.unwrap());
        let table = no_input.params().value(ADAPTIVE_EMBEDDING).unwrap();
        assert_eq!(&hid.data()[..table.len()], table.data());

        let no_adaptive = Umod::new(ModelConfig {
            use_adaptive_embedding: false,
            ..tiny()
        })
        .unwrap();
        let (ei, _, hid) = no_adaptive.embed(&x).unwrap();
        assert_eq!(hid.shape()[3], 3);
        assert_eq!(hid, ei.unwrap());
        assert!(no_adaptive.params().get(ADAPTIVE_EMBEDDING).is_none());
    }

    #[test]
    fn both_embeddings_disabled_is_a_config_error() {
        let cfg = ModelConfig {
            use_input_embedding: false,
            use_adaptive_embedding: false,
            ..tiny()
        };
        assert!(matches!(Umod::new(cfg), Err(Error::Config(_))));
    }

    #[test]
    fn zero_mixing_weights_leave_residual_identity() {
        let mut m = Umod::new(tiny()).unwrap();
        for id in [MIX_WEIGHT1, MIX_WEIGHT2, MIX_BIAS1, MIX_BIAS2] {
            m.params_mut()
                .get_mut(id)
                .unwrap()
                .value
                .data_mut()
                .fill(0.0);
        }
        let o = Tensor::from_fn(&[1, 2, 4, 8], |i| (i as f64).cos()).unwrap();
        let (_, [mix_in, ..]) = m.spatial(&o).unwrap();
        let (y, _) = m.spatial(&o).unwrap();
        assert_eq!(ops::swap_axes(&mix_in, 2, 3).unwrap(), o);
        // head applied directly to O_t
        let flat = ops::reshape(&ops::swap_axes(&o, 1, 2).unwrap(), &[1, 4, 16]).unwrap();
        let direct = ops::linear(&flat, m.p(HEAD_WEIGHT), m.p(HEAD_BIAS)).unwrap();
        let direct = ops::swap_axes(&ops::reshape(&direct, &[1, 4, 2, 4]).unwrap(), 1, 2).unwrap();
        assert_eq!(y, direct);
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let m = Umod::new(tiny()).unwrap();
        let x = Tensor::zeros(&[1, 3, 4, 4]).unwrap();
        assert!(matches!(m.forward(&x), Err(Error::Dimension { .. })));
    }

    #[test]
    fn from_params_checks_layout() {
        let m = Umod::new(tiny()).unwrap();
        let other = ModelConfig {
            input_dim: 4,
            ..tiny()
        };
        assert!(Umod::from_params(other, m.params().clone()).is_err());
        assert!(Umod::from_params(tiny(), m.params().clone()).is_ok());
    }
}
