//! Attention invariants and a scalar-loop reference implementation.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use umod_core::diffmath::{ops, Tensor};
use umod_core::model::{ModelConfig, Umod};

fn random(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-scale..scale)).unwrap()
}

/// Direct triple loop over `(n, i, j)` with a max-shifted softmax.
fn reference(q: &Tensor, k: &Tensor, v: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let [n, t, d] = [q.shape()[0], q.shape()[1], q.shape()[2]];
    let mut out = vec![0.0; n * t * d];
    let mut weights = vec![0.0; n * t * t];
    for b in 0..n {
        for i in 0..t {
            let scores: Vec<f64> = (0..t)
                .map(|j| {
                    let dot: f64 = (0..d).map(|c| q.get(&[b, i, c]) * k.get(&[b, j, c])).sum();
                    dot / (d as f64).sqrt()
                })
                .collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = exps.iter().sum();
            for j in 0..t {
                let a = exps[j] / z;
                weights[(b * t + i) * t + j] = a;
                for c in 0..d {
                    out[(b * t + i) * d + c] += a * v.get(&[b, j, c]);
                }
            }
        }
    }
    (out, weights)
}

#[test]
fn matches_scalar_loop_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..120 {
        let n = rng.random_range(1..4);
        let t = rng.random_range(1..6);
        let d = rng.random_range(1..6);
        let q = random(&mut rng, &[n, t, d], 3.0);
        let k = random(&mut rng, &[n, t, d], 3.0);
        let v = random(&mut rng, &[n, t, d], 3.0);
        let (o, a) = ops::scaled_dot_attention(&q, &k, &v).unwrap();
        let (o_ref, a_ref) = reference(&q, &k, &v);
        for (x, y) in o.data().iter().zip(&o_ref) {
            assert!((x - y).abs() < 1e-10, "output {x} vs {y}");
        }
        for (x, y) in a.data().iter().zip(&a_ref) {
            assert!((x - y).abs() < 1e-12, "weight {x} vs {y}");
        }
    }
}

#[test]
fn weight_rows_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for trial in 0..150 {
        let n = rng.random_range(1..4);
        let t = rng.random_range(1..8);
        let d = rng.random_range(1..5);
        // Large magnitudes on some trials push the softmax into saturation.
        let scale = if trial % 3 == 0 { 50.0 } else { 1.0 };
        let q = random(&mut rng, &[n, t, d], scale);
        let k = random(&mut rng, &[n, t, d], scale);
        let v = random(&mut rng, &[n, t, d], 1.0);
        let (_, a) = ops::scaled_dot_attention(&q, &k, &v).unwrap();
        for row in a.data().chunks(t) {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "row sum {s}");
            assert!(row.iter().all(|&w| (0.0..=1.0).contains(&w)));
        }
    }
}

#[test]
fn single_step_returns_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let n = rng.random_range(1..5);
        let d = rng.random_range(1..6);
        let q = random(&mut rng, &[n, 1, d], 10.0);
        let k = random(&mut rng, &[n, 1, d], 10.0);
        let v = random(&mut rng, &[n, 1, d], 10.0);
        let (o, a) = ops::scaled_dot_attention(&q, &k, &v).unwrap();
        assert_eq!(o, v);
        assert!(a.data().iter().all(|&w| w == 1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// Permuting the independent sequences permutes the outputs.
    #[test]
    fn sequence_axis_equivariance(seed in any::<u64>(), n in 2usize..5, t in 1usize..5, d in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random(&mut rng, &[n, t, d], 2.0);
        let k = random(&mut rng, &[n, t, d], 2.0);
        let v = random(&mut rng, &[n, t, d], 2.0);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left(1 + (seed as usize) % (n - 1));
        let permute = |x: &Tensor| {
            let rows = x.unstack();
            Tensor::stack(&perm.iter().map(|&p| &rows[p]).collect::<Vec<_>>()).unwrap()
        };
        let (o, _) = ops::scaled_dot_attention(&q, &k, &v).unwrap();
        let (o_p, _) = ops::scaled_dot_attention(&permute(&q), &permute(&k), &permute(&v)).unwrap();
        prop_assert!(permute(&o).max_abs_diff(&o_p).unwrap() < 1e-12);
    }

    /// The temporal stage of the model treats each entity independently.
    #[test]
    fn temporal_stage_entity_equivariance(seed in any::<u64>()) {
        let cfg = ModelConfig { input_dim: 3, adaptive_dim: 2, seed, ..ModelConfig::new(4, 3, 2) };
        let model = Umod::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (b, h, e, dh) = (2, 3, 4, cfg.hidden_dim());
        let hidden = random(&mut rng, &[b, h, e, dh], 1.0);
        let perm = [2usize, 0, 3, 1];
        let permute = |x: &Tensor| {
            Tensor::from_fn(x.shape(), |idx| {
                let c = idx % dh;
                let rest = idx / dh;
                let (ent, bh) = (rest % e, rest / e);
                x.data()[(bh * e + perm[ent]) * dh + c]
            })
            .unwrap()
        };
        let out = model.temporal_attention(&hidden).unwrap();
        let out_p = model.temporal_attention(&permute(&hidden)).unwrap();
        prop_assert!(permute(&out).max_abs_diff(&out_p).unwrap() < 1e-12);
    }
}
