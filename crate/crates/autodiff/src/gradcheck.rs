//! Central finite-difference checks against [`Tape::backward`].
//!
//! The numeric side only ever evaluates the loss forward, so it is
//! independent of every backward rule it is used to verify.

use crate::error::Result;
use crate::params::{ParamId, ParamStore};
use crate::tape::{Primitive, Tape, Var};
use crate::tensor::Tensor;

/// Outcome of comparing analytic and numeric gradients over a set of
/// coordinates.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// Per coordinate: the `±h` evaluations took different branches of a
    /// leaky-relu or max-pool, so the central difference straddles a kink
    /// and is not an estimate of the derivative.
    pub kinked: Vec<bool>,
}

impl GradCheck {
    /// `‖a − n‖₂ / max(‖a‖₂, ‖n‖₂, 1e-8)`.
    pub fn relative_error(&self) -> f64 {
        let diff = norm(self.analytic.iter().zip(&self.numeric).map(|(a, n)| a - n));
        let scale = norm(self.analytic.iter().copied())
            .max(norm(self.numeric.iter().copied()))
            .max(1e-8);
        diff / scale
    }

    /// The coordinates whose difference window stayed on one linear piece.
    pub fn smooth(&self) -> GradCheck {
        let keep = |v: &[f64]| -> Vec<f64> {
            v.iter().zip(&self.kinked).filter(|(_, &k)| !k).map(|(&x, _)| x).collect()
        };
        GradCheck {
            analytic: keep(&self.analytic),
            numeric: keep(&self.numeric),
            kinked: vec![false; self.kinked.iter().filter(|&&k| !k).count()],
        }
    }
}

fn norm(it: impl Iterator<Item = f64>) -> f64 {
    it.map(|v| v * v).sum::<f64>().sqrt()
}

/// Compares gradients of `loss` at `coords` (all coordinates when `None`)
/// using step `h`.
pub fn check<F>(
    store: &ParamStore<f64>,
    coords: Option<&[(ParamId, usize)]>,
    h: f64,
    loss: F,
) -> Result<GradCheck>
where
    F: Fn(&mut Tape<f64>, &ParamStore<f64>) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = loss(&mut tape, store)?;
    let grads = tape.backward(out)?;

    let all: Vec<(ParamId, usize)>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = store
                .ids()
                .flat_map(|id| (0..store.get(id).len()).map(move |i| (id, i)))
                .collect();
            &all
        }
    };

    let eval = |s: &ParamStore<f64>| -> Result<(f64, Vec<usize>)> {
        let mut t = Tape::inference();
        let v = loss(&mut t, s)?;
        Ok((t.value(v).item(), t.branch_pattern()))
    };

    let mut work = store.clone();
    let mut analytic = Vec::with_capacity(coords.len());
    let mut numeric = Vec::with_capacity(coords.len());
    let mut kinked = Vec::with_capacity(coords.len());
    for &(id, i) in coords {
        analytic.push(grads.get(id).map_or(0.0, |g| g.data()[i]));
        let orig = store.get(id).data()[i];
        work.get_mut(id).data_mut()[i] = orig + h;
        let up = eval(&work)?;
        work.get_mut(id).data_mut()[i] = orig - h;
        let down = eval(&work)?;
        work.get_mut(id).data_mut()[i] = orig;
        numeric.push((up.0 - down.0) / (2.0 * h));
        kinked.push(up.1 != down.1);
    }
    Ok(GradCheck {
        analytic,
        numeric,
        kinked,
    })
}

/// SplitMix64; enough randomness for test-case generation without pulling a
/// RNG crate into the library.
#[derive(Clone, Debug)]
pub struct SplitMix(u64);

impl SplitMix {
    pub fn new(seed: u64) -> Self {
        SplitMix(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        lo + (hi - lo) * u
    }

    /// Uniform in `lo..=hi`.
    pub fn range(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.next_u64() % (hi - lo + 1) as u64) as usize
    }

    fn tensor(&mut self, shape: &[usize], f: impl Fn(&mut Self) -> f64) -> Tensor<f64> {
        let n = shape.iter().product();
        let data = (0..n).map(|_| f(self)).collect();
        Tensor::new(shape, data).expect("shape and data agree")
    }

    fn normal_ish(&mut self) -> f64 {
        self.uniform(-1.5, 1.5)
    }

    /// Values bounded away from zero, for kinks at the origin.
    fn away_from_zero(&mut self) -> f64 {
        let v = self.uniform(0.05, 1.5);
        if self.next_u64() & 1 == 0 {
            v
        } else {
            -v
        }
    }
}

/// A primitive applied to concrete inputs, all treated as parameters.
#[derive(Clone, Debug)]
pub struct PrimitiveCase {
    pub primitive: Primitive,
    pub inputs: Vec<Tensor<f64>>,
}

/// Number of distinct primitive kinds produced by [`PrimitiveCase::random`].
pub const PRIMITIVE_KINDS: usize = 19;

impl PrimitiveCase {
    /// Random inputs for primitive kind `kind % PRIMITIVE_KINDS`, drawn to
    /// avoid non-differentiable points (zero norms, ReLU kinks, pool ties).
    pub fn random(kind: usize, rng: &mut SplitMix) -> Self {
        let r = |rng: &mut SplitMix, lo, hi| rng.range(lo, hi);
        let (primitive, inputs) = match kind % PRIMITIVE_KINDS {
            0 => {
                let (m, k, n) = (r(rng, 1, 4), r(rng, 1, 4), r(rng, 1, 4));
                (
                    Primitive::MatMul,
                    vec![
                        rng.tensor(&[m, k], SplitMix::normal_ish),
                        rng.tensor(&[k, n], SplitMix::normal_ish),
                    ],
                )
            }
            1 => {
                let (n, c, o) = (r(rng, 1, 2), r(rng, 1, 3), r(rng, 1, 3));
                let (h, w) = (2 * r(rng, 1, 3), 2 * r(rng, 1, 3));
                (
                    Primitive::Conv2d,
                    vec![
                        rng.tensor(&[n, c, h, w], SplitMix::normal_ish),
                        rng.tensor(&[o, c, 3, 3], SplitMix::normal_ish),
                        rng.tensor(&[o], SplitMix::normal_ish),
                    ],
                )
            }
            2 => {
                let shape = [r(rng, 1, 2), r(rng, 1, 2), 2 * r(rng, 1, 3), 2 * r(rng, 1, 3)];
                // Distinct values spaced well beyond the difference step.
                let count: usize = shape.iter().product();
                let mut vals: Vec<f64> = (0..count).map(|i| i as f64 * 0.1).collect();
                for i in (1..count).rev() {
                    vals.swap(i, rng.range(0, i));
                }
                (Primitive::MaxPool2d, vec![Tensor::new(&shape, vals).unwrap()])
            }
            3 => {
                let shape = [r(rng, 1, 4), r(rng, 1, 4)];
                (
                    Primitive::LeakyRelu(rng.uniform(0.0, 0.3)),
                    vec![rng.tensor(&shape, SplitMix::away_from_zero)],
                )
            }
            k @ 4..=6 => {
                let shape = [r(rng, 1, 3), r(rng, 1, 4)];
                let rhs: &[usize] = if rng.next_u64() & 1 == 0 { &shape } else { &shape[1..] };
                let prim = [Primitive::Add, Primitive::Sub, Primitive::Mul][k - 4].clone();
                (
                    prim,
                    vec![
                        rng.tensor(&shape, SplitMix::normal_ish),
                        rng.tensor(rhs, SplitMix::normal_ish),
                    ],
                )
            }
            7 => {
                let shape = [r(rng, 1, 3), r(rng, 1, 3)];
                (
                    Primitive::Scale(rng.uniform(-2.0, 2.0)),
                    vec![rng.tensor(&shape, SplitMix::normal_ish)],
                )
            }
            8 => {
                let shape = [r(rng, 1, 3), r(rng, 1, 3)];
                (
                    Primitive::AddScalar(rng.uniform(-2.0, 2.0)),
                    vec![rng.tensor(&shape, SplitMix::normal_ish)],
                )
            }
            9 => {
                let axis = r(rng, 0, 1);
                let parts = r(rng, 2, 3);
                let other = r(rng, 1, 3);
                let inputs = (0..parts)
                    .map(|_| {
                        let mut s = [other, other];
                        s[axis] = r(rng, 1, 3);
                        rng.tensor(&s, SplitMix::normal_ish)
                    })
                    .collect();
                (Primitive::Concat(axis), inputs)
            }
            10 => {
                let (a, b) = (r(rng, 1, 3), r(rng, 1, 4));
                (
                    Primitive::Reshape(vec![b, a]),
                    vec![rng.tensor(&[a, b], SplitMix::normal_ish)],
                )
            }
            k @ 11..=13 => {
                let shape = [r(rng, 1, 3), r(rng, 1, 3), r(rng, 1, 3)];
                let axis = match rng.range(0, 3) {
                    3 => None,
                    a => Some(a),
                };
                let prim = match k {
                    11 => Primitive::Sum(axis),
                    12 => Primitive::Mean(axis),
                    _ => Primitive::L2Norm(axis),
                };
                (prim, vec![rng.tensor(&shape, SplitMix::away_from_zero)])
            }
            14 => {
                let (b, c) = (r(rng, 1, 4), r(rng, 2, 5));
                let targets = (0..b).map(|_| rng.range(0, c - 1)).collect();
                (
                    Primitive::SoftmaxCrossEntropy(targets),
                    vec![rng.tensor(&[b, c], |g| g.uniform(-3.0, 3.0))],
                )
            }
            15 => {
                let shape = [r(rng, 1, 3), r(rng, 1, 3)];
                (Primitive::Exp, vec![rng.tensor(&shape, |g| g.uniform(-2.0, 2.0))])
            }
            16 => {
                let shape = [r(rng, 1, 3), r(rng, 1, 3)];
                (Primitive::Log, vec![rng.tensor(&shape, |g| g.uniform(0.3, 3.0))])
            }
            17 => {
                let (n, w) = (r(rng, 1, 4), r(rng, 1, 3));
                let rows = (0..r(rng, 1, 6)).map(|_| rng.range(0, n - 1)).collect();
                (
                    Primitive::Gather(rows),
                    vec![rng.tensor(&[n, w], SplitMix::normal_ish)],
                )
            }
            _ => {
                let shape = [r(rng, 1, 3), r(rng, 2, 5)];
                let axis = r(rng, 0, 1);
                let start = rng.range(0, shape[axis] - 1);
                let len = rng.range(1, shape[axis] - start);
                (
                    Primitive::Narrow { axis, start, len },
                    vec![rng.tensor(&shape, SplitMix::normal_ish)],
                )
            }
        };
        PrimitiveCase { primitive, inputs }
    }

    /// Finite-difference check of `sum(primitive(inputs) ⊙ weights)` for a
    /// random weighting of the output.
    pub fn check(&self, rng: &mut SplitMix, h: f64) -> Result<GradCheck> {
        let mut store = ParamStore::new();
        let ids: Vec<ParamId> = self
            .inputs
            .iter()
            .enumerate()
            .map(|(i, t)| store.register(format!("in{i}"), t.clone()))
            .collect();
        let probe = {
            let mut t = Tape::inference();
            let vars: Vec<Var> = ids.iter().map(|&id| t.param(&store, id)).collect();
            let out = t.apply(self.primitive.clone(), &vars)?;
            t.value(out).shape().to_vec()
        };
        let weights = rng.tensor(&probe, |g| g.uniform(-1.0, 1.0));
        check(&store, None, h, |t, s| {
            let vars: Vec<Var> = ids.iter().map(|&id| t.param(s, id)).collect();
            let out = t.apply(self.primitive.clone(), &vars)?;
            let w = t.constant(weights.clone());
            let prod = t.mul(out, w)?;
            t.sum(prod, None)
        })
    }
}
