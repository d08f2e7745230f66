//! Structural properties of the forecasting network.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use umod_core::diffmath::Tensor;
use umod_core::model::{Forecaster, ModelConfig, Umod, ADAPTIVE_EMBEDDING, INPUT_WEIGHT};

fn small(seed: u64) -> ModelConfig {
    ModelConfig {
        input_dim: 4,
        adaptive_dim: 6,
        seed,
        ..ModelConfig::new(5, 3, 2)
    }
}

fn window(rng: &mut ChaCha8Rng, cfg: &ModelConfig, batch: usize, scale: f64) -> Tensor {
    Tensor::from_fn(
        &[batch, cfg.history, cfg.entities(), cfg.feature_dim()],
        |_| rng.random_range(-scale..scale),
    )
    .unwrap()
}

#[test]
fn without_input_embedding_ignores_the_window() {
    let cfg = ModelConfig {
        use_input_embedding: false,
        ..small(3)
    };
    let model = Umod::new(cfg).unwrap();
    assert!(model.params().get(INPUT_WEIGHT).is_none());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let x = window(&mut rng, &cfg, 3, 5.0);
        let (y, cache) = model.forward_cached(&x).unwrap();
        let d_out = Tensor::from_fn(y.shape(), |_| rng.random_range(-1.0..1.0)).unwrap();
        let g = model.backward(&cache, &d_out).unwrap();
        assert!(g.input.data().iter().all(|&v| v == 0.0));
        assert_eq!(g.input.shape(), x.shape());
    }
}

#[test]
fn without_adaptive_embedding_has_no_table() {
    let cfg = ModelConfig {
        use_adaptive_embedding: false,
        ..small(4)
    };
    let model = Umod::new(cfg).unwrap();
    assert!(model.params().get(ADAPTIVE_EMBEDDING).is_none());
    assert_eq!(cfg.hidden_dim(), cfg.input_dim);
    assert_eq!(model.params().scalar_count(), cfg.parameter_count());
}

#[test]
fn full_model_hidden_width_and_count() {
    let cfg = small(5);
    let model = Umod::new(cfg).unwrap();
    assert_eq!(cfg.hidden_dim(), cfg.input_dim + cfg.adaptive_dim);
    assert_eq!(model.params().scalar_count(), cfg.parameter_count());
    let x = window(&mut ChaCha8Rng::seed_from_u64(0), &cfg, 2, 1.0);
    let act = model.activations(&x).unwrap();
    assert_eq!(act.hidden.shape(), &[2, 3, 5, 10]);
    assert_eq!(act.attention.shape(), &[2, 5, 3, 3]);
    assert_eq!(act.output.shape(), &[2, 2, 5, 5]);
}

#[test]
fn same_seed_same_model_different_seed_different_model() {
    let a = Umod::new(small(9)).unwrap();
    let b = Umod::new(small(9)).unwrap();
    let c = Umod::new(small(10)).unwrap();
    assert_eq!(a.params(), b.params());
    assert_ne!(a.params(), c.params());
    let x = window(&mut ChaCha8Rng::seed_from_u64(2), &small(9), 4, 1.0);
    let ya = a.forward(&x).unwrap();
    assert_eq!(ya.data(), b.forward(&x).unwrap().data());
}

#[test]
fn extreme_inputs_stay_finite() {
    let cfg = small(6);
    let model = Umod::new(cfg).unwrap();
    for scale in [1e-12, 1e3, 1e6] {
        let x = window(&mut ChaCha8Rng::seed_from_u64(3), &cfg, 2, scale);
        let (y, cache) = model.forward_cached(&x).unwrap();
        assert!(y.is_finite(), "forward at scale {scale}");
        let g = model
            .backward(&cache, &Tensor::full(y.shape(), 1.0).unwrap())
            .unwrap();
        assert!(
            g.params.iter().all(Tensor::is_finite),
            "backward at scale {scale}"
        );
        assert!(g.input.is_finite());
    }
}

#[test]
fn wrong_window_shape_is_rejected() {
    let model = Umod::new(small(7)).unwrap();
    let x = Tensor::zeros(&[2, 4, 5, 5]).unwrap();
    assert!(model.forward(&x).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// A sample's forecast does not depend on what else shares its batch.
    #[test]
    fn batch_independence(seed in any::<u64>(), batch in 2usize..6) {
        let cfg = small(seed);
        let model = Umod::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = window(&mut rng, &cfg, batch, 2.0);
        let y = model.forward(&x).unwrap();
        for (i, xi) in x.unstack().iter().enumerate() {
            let single = Tensor::stack(&[xi]).unwrap();
            let yi = model.forward(&single).unwrap();
            let row = &y.unstack()[i];
            prop_assert!(row.max_abs_diff(&yi.unstack()[0]).unwrap() < 1e-12);
        }
    }
}
