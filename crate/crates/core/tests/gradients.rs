//! Analytic gradients against central finite differences, per parameter tensor.

use chatemg::model::{ChatEmg, ModelConfig};
use chatemg::TokenMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny() -> ModelConfig {
    ModelConfig {
        vocab_size: 11,
        n_embed: 8,
        n_blocks_per_branch: 1,
        n_heads: 2,
        context_len: 6,
        fc_layers: 3,
        dropout: 0.0,
    }
}

/// Relative error `‖a − b‖ / max(‖a‖, ‖b‖)` per named tensor.
fn check_model(seed: u64) -> Vec<(String, f64)> {
    let mut model = ChatEmg::<f64>::init(tiny(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    // Move away from the near-linear initial regime so every path carries signal.
    for v in model.params_mut() {
        *v += rng.gen_range(-0.4..0.4);
    }
    let input = TokenMatrix::from_flat((0..6 * 8).map(|_| rng.gen_range(0..11u16)).collect()).unwrap();
    let targets: Vec<u16> = (0..6).map(|_| rng.gen_range(0..11)).collect();

    let mut grads = vec![0.0; model.num_params()];
    model
        .loss_and_grad::<ChaCha8Rng>(&input, &targets, &mut grads, None)
        .unwrap();

    let h = 1e-5;
    let tensors = model.layout().tensors().to_vec();
    let mut out = Vec::new();
    for t in tensors {
        let (mut num, mut den_a, mut den_b) = (0.0f64, 0.0f64, 0.0f64);
        for i in t.slot.offset..t.slot.offset + t.slot.len {
            let orig = model.params()[i];
            model.params_mut()[i] = orig + h;
            let lp = model.eval_loss(&input, &targets).unwrap();
            model.params_mut()[i] = orig - h;
            let lm = model.eval_loss(&input, &targets).unwrap();
            model.params_mut()[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            num += (fd - grads[i]).powi(2);
            den_a += grads[i].powi(2);
            den_b += fd.powi(2);
        }
        let den = den_a.sqrt().max(den_b.sqrt());
        assert!(den > 0.0, "{} has an identically zero gradient", t.name);
        out.push((t.name.clone(), num.sqrt() / den));
    }
    out
}

#[test]
fn generative_model_gradients_match_finite_differences() {
    for seed in [1, 2] {
        for (name, rel) in check_model(seed) {
            assert!(rel < 1e-4, "seed {seed}: {name} relative error {rel:e}");
        }
    }
}
