use gridsoccer::gradcheck::{relative_error, run_suite, TOLERANCE};
use gridsoccer::nn::{backward, forward, softmax, LayerSpec};
use gridsoccer::{NetworkParams, NetworkSpec, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// y = W2 relu(W1 x + b1) + b2, written out with plain loops.
fn two_layer_oracle(w1: &[f64], b1: &[f64], w2: &[f64], b2: &[f64], x: &[f64]) -> Vec<f64> {
    let hidden: Vec<f64> = (0..b1.len())
        .map(|i| {
            let mut acc = b1[i];
            for j in 0..x.len() {
                acc += w1[i * x.len() + j] * x[j];
            }
            acc.max(0.0)
        })
        .collect();
    (0..b2.len())
        .map(|i| {
            let mut acc = b2[i];
            for j in 0..hidden.len() {
                acc += w2[i * hidden.len() + j] * hidden[j];
            }
            acc
        })
        .collect()
}

#[test]
fn dense_forward_matches_matmul_oracle() {
    let spec = NetworkSpec::new(
        vec![1, 1, 3],
        vec![LayerSpec::Flatten, LayerSpec::dense(5), LayerSpec::Relu, LayerSpec::dense(2)],
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..100 {
        let mut params = NetworkParams::he_uniform(&spec, &mut rng);
        for t in params.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.2..0.2));
        }
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let t = params.tensors();
        let expected = two_layer_oracle(t[0].data(), t[1].data(), t[2].data(), t[3].data(), &x);
        let got = params.predict(&Tensor::new(vec![1, 1, 3], x).unwrap(), None).unwrap();
        for (a, b) in got.data().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn softmax_is_a_distribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let x: Vec<f64> = (0..11).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let p = softmax(&x);
        assert!(p.iter().all(|v| *v >= 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn forward_and_backward_are_deterministic() {
    let spec = gridsoccer::dqn::q_network_spec(gridsoccer::dqn::QArch::Compact, [4, 6, 9], 10).unwrap();
    let make = || NetworkParams::he_uniform(&spec, &mut ChaCha8Rng::seed_from_u64(4));
    let (a, b) = (make(), make());
    assert_eq!(a, b);
    let x = Tensor::new(vec![4, 6, 9], (0..216).map(|i| (i % 7 == 0) as u8 as f64).collect()).unwrap();
    let (ya, ca) = forward(&a, &x, None).unwrap();
    let (yb, cb) = forward(&b, &x, None).unwrap();
    assert_eq!(ya, yb);
    let g = vec![1.0; 10];
    assert_eq!(backward(&a, &ca, &g).unwrap().0, backward(&b, &cb, &g).unwrap().0);
}

#[test]
fn finite_difference_suite_passes() {
    let outcomes = run_suite(2024).unwrap();
    for o in &outcomes {
        println!("{:<12} configs={:<3} checked={:<6} skipped={:<3} max_rel_error={:.3e}", o.label, o.configs, o.checked, o.skipped, o.max_rel_error);
    }
    assert!(outcomes.iter().all(|o| o.passed()), "{outcomes:#?}");
    assert!(outcomes.iter().filter(|o| o.configs >= 20).count() == outcomes.len());
    assert!(relative_error(1.0, 1.0 + 0.5 * TOLERANCE) < TOLERANCE);
}
