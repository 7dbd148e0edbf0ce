//! Finite-difference check of the tape gradients for a small conv block.

use seizure_forge::nn::{finite_diff_gradcheck, Mode, Tensor};
use seizure_forge::rng::SplitMix64;

fn random(shape: &[usize], r: &mut SplitMix64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.unit() * 2.0 - 1.0).collect()).expect("shape matches data")
}

fn main() -> seizure_forge::Result<()> {
    let mut r = SplitMix64::new(11);
    let x = random(&[2, 3, 6, 6], &mut r);
    let w = random(&[4, 3, 3, 3], &mut r);
    let gamma = Tensor::new(vec![4], vec![1.0, 0.5, 1.5, 0.8])?;
    let beta = Tensor::new(vec![4], vec![0.0, 0.1, -0.2, 0.3])?;
    let fc = random(&[7, 4], &mut r);
    let bias = random(&[7], &mut r);
    let labels = [2, 5];
    for mode in [Mode::Train, Mode::Eval] {
        let report = finite_diff_gradcheck(mode, &[x.clone(), w.clone(), gamma.clone(), beta.clone(), fc.clone(), bias.clone()], 1e-5, |t, v| {
            let y = t.conv2d(v[0], v[1], 1, 1)?;
            let (y, _) = t.batch_norm2d(y, v[2], v[3], (&[0.0; 4], &[1.0; 4]))?;
            let y = t.relu(y);
            let y = t.global_avg_pool(y)?;
            let logits = t.linear(y, v[4], v[5])?;
            t.softmax_cross_entropy(logits, &labels)
        })?;
        println!("{mode:?}: max relative error {:.2e}", report.max_rel_error);
    }
    Ok(())
}
