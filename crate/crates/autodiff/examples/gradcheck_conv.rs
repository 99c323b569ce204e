//! Compares reverse-mode gradients of a small conv → pool → linear network
//! with central finite differences in 64-bit.
//!
//! cargo run --release -p tapegrad --example gradcheck_conv

use tapegrad::gradcheck::{check, SplitMix};
use tapegrad::{ParamStore, Result, Tape, Tensor};

fn main() -> Result<()> {
    let mut rng = SplitMix::new(7);
    let mut init = |shape: &[usize]| {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.uniform(-0.5, 0.5)).collect())
    };
    let x = init(&[2, 3, 4, 4])?;
    let mut store = ParamStore::<f64>::new();
    let w = store.register("conv.weight", init(&[5, 3, 3, 3])?);
    let b = store.register("conv.bias", init(&[5])?);
    let fc = store.register("fc.weight", init(&[20, 3])?);

    let report = check(&store, None, 1e-5, |tape: &mut Tape<f64>, s: &ParamStore<f64>| {
        let input = tape.constant(x.clone());
        let (w, b, fc) = (tape.param(s, w), tape.param(s, b), tape.param(s, fc));
        let h = tape.conv2d(input, w, b)?;
        let h = tape.leaky_relu(h, 0.01)?;
        let h = tape.maxpool2d(h)?;
        let h = tape.reshape(h, &[2, 20])?;
        let logits = tape.matmul(h, fc)?;
        tape.softmax_cross_entropy(logits, &[0, 2])
    })?;
    let kinked = report.kinked.iter().filter(|&&k| k).count();
    println!("{} coordinates, {kinked} straddling a kink", report.analytic.len());
    println!("relative error (all):          {:.3e}", report.relative_error());
    println!("relative error (kink-free):    {:.3e}", report.smooth().relative_error());
    Ok(())
}
