//! Tape-based reverse-mode differentiation on 3D tensors.
//!
//! Builds a small conv → ReLU → pool → sigmoid graph, runs one backward
//! pass, and verifies an analytic weight gradient against central finite
//! differences.

use anisoseg::tensor::gradcheck::{central_difference_grad, max_rel_err};
use anisoseg::tensor::{Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> anisoseg::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    // A delta kernel reproduces its input exactly: conv3d is cross-correlation
    // with zero padding 1, so the center tap is the identity.
    let mut tape = Tape::new();
    let x = Tensor::new(vec![1, 1, 2, 2, 2], (0..8).map(f64::from).collect())?;
    let mut delta = Tensor::zeros(vec![1, 1, 3, 3, 3]);
    delta.data_mut()[13] = 1.0;
    let xi = tape.leaf(x.clone(), false);
    let wi = tape.leaf(delta, true);
    let bi = tape.leaf(Tensor::zeros(vec![1]), true);
    let y = tape.conv3d(xi, wi, bi)?;
    assert_eq!(tape.value(y).data(), x.data());
    println!("delta-kernel convolution is the identity on {:?}", x.shape());

    // Composed graph: conv -> relu -> maxpool -> sigmoid -> mean loss.
    let input = Tensor::new(
        vec![1, 2, 4, 4, 4],
        (0..128).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )?;
    let weights = Tensor::new(
        vec![3, 2, 3, 3, 3],
        (0..162).map(|_| rng.gen_range(-0.5..0.5)).collect(),
    )?;
    let bias = Tensor::new(vec![3], vec![0.1, -0.2, 0.05])?;

    let loss_of = |w_data: &[f64]| -> f64 {
        let mut t = Tape::new();
        let xi = t.leaf(input.clone(), false);
        let wi = t.leaf(Tensor::new(vec![3, 2, 3, 3, 3], w_data.to_vec()).unwrap(), true);
        let bi = t.leaf(bias.clone(), true);
        let c = t.conv3d(xi, wi, bi).unwrap();
        let r = t.relu(c);
        let p = t.maxpool3d(r, [2, 2, 2]).unwrap();
        let s = t.sigmoid(p);
        let l = t.mean(s);
        t.value(l).item()
    };

    // Analytic gradient from one backward pass.
    let mut tape = Tape::new();
    let xi = tape.leaf(input.clone(), false);
    let wi = tape.leaf(weights.clone(), true);
    let bi = tape.leaf(bias.clone(), true);
    let c = tape.conv3d(xi, wi, bi)?;
    let r = tape.relu(c);
    let p = tape.maxpool3d(r, [2, 2, 2])?;
    let s = tape.sigmoid(p);
    let l = tape.mean(s);
    println!("loss = {:.6} over a {}-op tape", tape.value(l).item(), tape.len());

    let grads = tape.backward(l)?;
    let analytic = grads.get(wi).expect("weights require grad").data().to_vec();

    // Central differences on the same closure; h balances truncation against
    // round-off at 64-bit.
    let mut f = |w: &[f64]| loss_of(w);
    let numeric = central_difference_grad(&mut f, weights.data(), 1e-5);
    let err = max_rel_err(&analytic, &numeric, 1e-8);
    println!("max relative gradient error vs finite differences: {err:.3e}");
    assert!(err < 1e-4);
    Ok(())
}
