//! Fits XOR with a two-layer leaky-relu MLP and Adam.
//!
//! cargo run --release -p tapegrad --example xor_mlp

use tapegrad::gradcheck::SplitMix;
use tapegrad::{AdamConfig, AdamState, ParamStore, Result, Tape, Tensor};

fn main() -> Result<()> {
    let mut rng = SplitMix::new(1);
    let mut init = |shape: &[usize], bound: f64| {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.uniform(-bound, bound)).collect())
    };
    let mut store = ParamStore::<f32>::new();
    let w1 = store.register("w1", init(&[2, 16], 1.0)?.cast());
    let b1 = store.register("b1", init(&[16], 0.1)?.cast());
    let w2 = store.register("w2", init(&[16, 2], 0.5)?.cast());
    let b2 = store.register("b2", init(&[2], 0.1)?.cast());

    let x = Tensor::new(&[4, 2], vec![0.0f32, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0])?;
    let y = [0, 1, 1, 0];
    let mut adam = AdamState::new(&store, AdamConfig { lr: 1e-2, ..AdamConfig::default() });
    for step in 0..=500 {
        let mut tape = Tape::new();
        let input = tape.constant(x.clone());
        let (w1, b1, w2, b2) = (tape.param(&store, w1), tape.param(&store, b1), tape.param(&store, w2), tape.param(&store, b2));
        let h = tape.matmul(input, w1)?;
        let h = tape.add(h, b1)?;
        let h = tape.leaky_relu(h, 0.01)?;
        let logits = tape.matmul(h, w2)?;
        let logits = tape.add(logits, b2)?;
        let loss = tape.softmax_cross_entropy(logits, &y)?;
        if step % 100 == 0 {
            let l = tape.value(logits).data();
            let pred: Vec<usize> = (0..4).map(|i| usize::from(l[2 * i + 1] > l[2 * i])).collect();
            println!("step {step:3}  loss {:.4}  predictions {pred:?}", tape.value(loss).item());
        }
        let grads = tape.backward(loss)?.dense(&store);
        adam.step(&mut store, &grads);
    }
    Ok(())
}
