//! The concept-relation graph network: a CNN object encoder, a symmetric MLP
//! relation encoder over object pairs, and a GIN over the line graph of
//! pairs with a sum readout.
//!
//! The graph embedding sees objects only through their pairwise relation
//! embeddings; there is no path from object features to the GIN that
//! bypasses the relation encoder.

mod line_graph;

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use tapegrad::{CheckpointEntry, ParamId, ParamStore, Scalar, Tape, Tensor, TensorError, Var};
use thiserror::Error;

use crate::scene::{write_slab, Grid, Mask, GRID, NUM_COLORS, SLAB_LEN};

pub use line_graph::{build_line_graph, object_pairs, LineGraph};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("scene {scene} has no objects")]
    EmptyScene { scene: usize },
    #[error("scene {scene} has one object, so its line graph is empty")]
    EmptyGraph { scene: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("model has no classification head")]
    NoClassifyHead,
    #[error("checkpoint does not describe a model: {0}")]
    Layout(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub conv_channels: [usize; 4],
    pub object_dim: usize,
    pub relation_hidden: [usize; 2],
    pub relation_dim: usize,
    pub gin_hidden: [usize; 2],
    pub gin_layers: usize,
    /// Relation encoder also emits a log-variance and training samples from it.
    pub ib: bool,
    /// Size of the task classification head, if any.
    pub num_tasks: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            conv_channels: [32, 32, 64, 64],
            object_dim: 100,
            relation_hidden: [128, 64],
            relation_dim: 20,
            gin_hidden: [64, 64],
            gin_layers: 2,
            ib: false,
            num_tasks: None,
        }
    }
}

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Clone, Copy, Debug)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

#[derive(Clone, Debug)]
struct Layout {
    conv: [Dense; 4],
    object_fc: Dense,
    relation: [Dense; 3],
    gin: Vec<[Dense; 3]>,
    head: Option<Dense>,
}

/// Objects of several scenes, rendered and indexed for one forward pass.
#[derive(Clone, Debug)]
pub struct SceneBatch<T> {
    /// `[objects, 9, 16, 16]`, one color-channel slab per object.
    pub slabs: Tensor<T>,
    /// Scene `s` owns object rows `object_offsets[s]..object_offsets[s+1]`.
    pub object_offsets: Vec<usize>,
    /// Scene `s` owns relation nodes `pair_offsets[s]..pair_offsets[s+1]`.
    pub pair_offsets: Vec<usize>,
    /// Global object rows of every relation node, scene-major, each scene's
    /// pairs in [`object_pairs`] order.
    pub pairs: Vec<(usize, usize)>,
}

impl<T: Scalar> SceneBatch<T> {
    pub fn new<'a, I>(scenes: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a Grid, &'a [Mask])>,
    {
        let mut data = Vec::new();
        let mut object_offsets = vec![0];
        let mut pair_offsets = vec![0];
        let mut pairs = Vec::new();
        for (s, (grid, masks)) in scenes.into_iter().enumerate() {
            if masks.is_empty() {
                return Err(ModelError::EmptyScene { scene: s });
            }
            let base = *object_offsets.last().unwrap();
            for mask in masks {
                let start = data.len();
                data.resize(start + SLAB_LEN, T::zero());
                write_slab(grid, mask, &mut data[start..]);
            }
            pairs.extend(object_pairs(masks.len()).into_iter().map(|(k, l)| (base + k, base + l)));
            object_offsets.push(base + masks.len());
            pair_offsets.push(pairs.len());
        }
        let n = *object_offsets.last().unwrap();
        if n == 0 {
            return Err(ModelError::EmptyBatch);
        }
        Ok(SceneBatch {
            slabs: Tensor::new(&[n, NUM_COLORS, GRID, GRID], data)?,
            object_offsets,
            pair_offsets,
            pairs,
        })
    }

    pub fn num_scenes(&self) -> usize {
        self.object_offsets.len() - 1
    }

    pub fn num_objects(&self) -> usize {
        *self.object_offsets.last().unwrap()
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn objects_in(&self, scene: usize) -> usize {
        self.object_offsets[scene + 1] - self.object_offsets[scene]
    }

    /// Block-diagonal `I + A` over all scenes' line graphs: one GIN
    /// aggregation with ε = 0 is a product with this matrix.
    pub fn propagation(&self) -> Result<Tensor<T>> {
        let p = self.num_pairs();
        let mut m = vec![T::zero(); p * p];
        for s in 0..self.num_scenes() {
            let n = self.objects_in(s);
            if n < 2 {
                return Err(ModelError::EmptyGraph { scene: s });
            }
            let g = build_line_graph(n);
            let off = self.pair_offsets[s];
            let q = g.num_nodes();
            for i in 0..q {
                m[(off + i) * p + off + i] = T::one();
                for j in 0..q {
                    if g.is_adjacent(i, j) {
                        m[(off + i) * p + off + j] = T::one();
                    }
                }
            }
        }
        Ok(Tensor::new(&[p, p], m)?)
    }

    /// `[scenes, pairs]` 0/1 matrix summing each scene's nodes.
    pub fn readout(&self) -> Result<Tensor<T>> {
        let (b, p) = (self.num_scenes(), self.num_pairs());
        let mut m = vec![T::zero(); b * p];
        for s in 0..b {
            for j in self.pair_offsets[s]..self.pair_offsets[s + 1] {
                m[s * p + j] = T::one();
            }
        }
        Ok(Tensor::new(&[b, p], m)?)
    }
}

/// Relation-encoder outputs for a set of pairs.
#[derive(Clone, Copy, Debug)]
pub struct RelationVars {
    /// `[pairs, relation_dim]`.
    pub mean: Var,
    /// `[pairs, relation_dim]`, bottleneck mode only.
    pub logvar: Option<Var>,
}

#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    /// `[objects, object_dim]`.
    pub objects: Var,
    pub relations: RelationVars,
    /// Node features fed to the GIN: the mean, or a sample in bottleneck training.
    pub nodes: Var,
    /// `[scenes, relation_dim]`.
    pub graph: Var,
}

#[derive(Clone, Debug)]
pub struct CrGnn<T> {
    config: ModelConfig,
    store: ParamStore<T>,
    layout: Layout,
}

fn uniform<T: Scalar, R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| T::from_f64(rng.random_range(-bound..bound)))
        .collect();
    Tensor::new(shape, data).expect("shape matches data")
}

impl<T: Scalar> CrGnn<T> {
    /// Fresh model. Weights are He-uniform (±√(6/fan_in)) so activation
    /// variance survives the leaky stack and scene embeddings do not collapse
    /// onto the bias path; biases are uniform in ±1/√fan_in, nonzero so blank
    /// slab regions do not sit exactly on an activation kink.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Self {
        let mut store = ParamStore::new();
        let mut dense = |store: &mut ParamStore<T>, name: &str, fan_in: usize, w_shape: &[usize], out: usize| Dense {
            w: store.register(format!("{name}.weight"), uniform(w_shape, (6.0 / fan_in as f64).sqrt(), rng)),
            b: store.register(format!("{name}.bias"), uniform(&[out], 1.0 / (fan_in as f64).sqrt(), rng)),
        };

        let ch = config.conv_channels;
        let ins = [NUM_COLORS, ch[0], ch[1], ch[2]];
        let conv: [Dense; 4] = std::array::from_fn(|i| {
            dense(&mut store, &format!("object.conv{}", i + 1), ins[i] * 9, &[ch[i], ins[i], 3, 3], ch[i])
        });
        let flat = ch[3] * (GRID / 4) * (GRID / 4);
        let object_fc = dense(&mut store, "object.fc", flat, &[flat, config.object_dim], config.object_dim);

        let rel_dims = [
            2 * config.object_dim,
            config.relation_hidden[0],
            config.relation_hidden[1],
            config.relation_dim * if config.ib { 2 } else { 1 },
        ];
        let relation: [Dense; 3] = std::array::from_fn(|i| {
            let (a, b) = (rel_dims[i], rel_dims[i + 1]);
            dense(&mut store, &format!("relation.fc{}", i + 1), a, &[a, b], b)
        });

        let gin_dims = [config.relation_dim, config.gin_hidden[0], config.gin_hidden[1], config.relation_dim];
        let gin = (0..config.gin_layers)
            .map(|layer| {
                std::array::from_fn(|i| {
                    let (a, b) = (gin_dims[i], gin_dims[i + 1]);
                    dense(&mut store, &format!("gin.{layer}.fc{}", i + 1), a, &[a, b], b)
                })
            })
            .collect();

        let head = config.num_tasks.map(|t| {
            let d = config.relation_dim;
            dense(&mut store, "head", d, &[d, t], t)
        });

        CrGnn {
            config,
            store,
            layout: Layout {
                conv,
                object_fc,
                relation,
                gin,
                head,
            },
        }
    }

    /// Rebuilds a model from checkpoint entries, inferring its configuration
    /// from parameter names and shapes.
    pub fn from_entries(entries: &[CheckpointEntry]) -> Result<Self> {
        let config = infer_config(entries)?;
        let mut model = CrGnn::new(config, &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0));
        model.store.load_entries(entries)?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_entries(&tapegrad::read_checkpoint(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(tapegrad::write_checkpoint(path, &self.store)?)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    /// The same model in another precision.
    pub fn cast<U: Scalar>(&self) -> CrGnn<U> {
        CrGnn {
            config: self.config.clone(),
            store: self.store.cast(),
            layout: self.layout.clone(),
        }
    }

    fn dense(&self, tape: &mut Tape<T>, x: Var, d: Dense) -> Result<Var> {
        let w = tape.param(&self.store, d.w);
        let b = tape.param(&self.store, d.b);
        Ok(tape.linear(x, w, b)?)
    }

    fn mlp(&self, tape: &mut Tape<T>, mut x: Var, layers: &[Dense]) -> Result<Var> {
        for (i, &d) in layers.iter().enumerate() {
            x = self.dense(tape, x, d)?;
            if i + 1 < layers.len() {
                x = tape.leaky_relu(x, LEAKY_SLOPE)?;
            }
        }
        Ok(x)
    }

    /// `[objects, object_dim]` embeddings of the batch's object slabs.
    pub fn encode_objects(&self, tape: &mut Tape<T>, batch: &SceneBatch<T>) -> Result<Var> {
        let mut x = tape.constant(batch.slabs.clone());
        for (i, &d) in self.layout.conv.iter().enumerate() {
            let w = tape.param(&self.store, d.w);
            let b = tape.param(&self.store, d.b);
            x = tape.conv2d(x, w, b)?;
            x = tape.leaky_relu(x, LEAKY_SLOPE)?;
            if i % 2 == 1 {
                x = tape.maxpool2d(x)?;
            }
        }
        let n = batch.num_objects();
        let flat = self.config.conv_channels[3] * (GRID / 4) * (GRID / 4);
        let x = tape.reshape(x, &[n, flat])?;
        self.dense(tape, x, self.layout.object_fc)
    }

    /// Symmetric relation embeddings of the given `(row, row)` pairs of
    /// `objects`: the encoder runs on both concatenation orders and the
    /// outputs are averaged.
    pub fn encode_relations(
        &self,
        tape: &mut Tape<T>,
        objects: Var,
        pairs: &[(usize, usize)],
    ) -> Result<RelationVars> {
        let p = pairs.len();
        let firsts: Vec<usize> = pairs.iter().map(|&(a, _)| a).collect();
        let seconds: Vec<usize> = pairs.iter().map(|&(_, b)| b).collect();
        let a = tape.gather(objects, &firsts)?;
        let b = tape.gather(objects, &seconds)?;
        let ab = tape.concat(&[a, b], 1)?;
        let ba = tape.concat(&[b, a], 1)?;
        let both = tape.concat(&[ab, ba], 0)?;
        let out = self.mlp(tape, both, &self.layout.relation)?;
        let width = tape.shape(out)[1];
        let fwd = tape.narrow(out, 0, 0, p)?;
        let rev = tape.narrow(out, 0, p, p)?;
        let sum = tape.add(fwd, rev)?;
        let avg = tape.scale(sum, 0.5)?;
        if !self.config.ib {
            return Ok(RelationVars {
                mean: avg,
                logvar: None,
            });
        }
        let d = width / 2;
        Ok(RelationVars {
            mean: tape.narrow(avg, 1, 0, d)?,
            logvar: Some(tape.narrow(avg, 1, d, d)?),
        })
    }

    /// Two GIN layers (`h ← MLP((I + A)·h)`) followed by the per-scene sum.
    pub fn gin_embed(&self, tape: &mut Tape<T>, nodes: Var, propagation: Var, readout: Var) -> Result<Var> {
        let mut h = nodes;
        for layer in &self.layout.gin {
            let agg = tape.matmul(propagation, h)?;
            h = self.mlp(tape, agg, layer)?;
        }
        Ok(tape.matmul(readout, h)?)
    }

    /// Standard-normal noise for bottleneck sampling, one row per relation node.
    pub fn sample_noise<R: Rng + ?Sized>(&self, batch: &SceneBatch<T>, rng: &mut R) -> Tensor<T> {
        let shape = [batch.num_pairs(), self.config.relation_dim];
        let data = (0..shape[0] * shape[1])
            .map(|_| T::from_f64(rng.sample::<f64, _>(StandardNormal)))
            .collect();
        Tensor::new(&shape, data).expect("shape matches data")
    }

    /// Full forward pass. With `noise` in bottleneck mode the GIN sees
    /// `μ + exp(logvar/2)·noise`; otherwise it sees `μ`.
    pub fn forward(&self, tape: &mut Tape<T>, batch: &SceneBatch<T>, noise: Option<Tensor<T>>) -> Result<ForwardVars> {
        let propagation = tape.constant(batch.propagation()?);
        let readout = tape.constant(batch.readout()?);
        let objects = self.encode_objects(tape, batch)?;
        let relations = self.encode_relations(tape, objects, &batch.pairs)?;
        let nodes = match (relations.logvar, noise) {
            (Some(lv), Some(noise)) => {
                let half = tape.scale(lv, 0.5)?;
                let std = tape.exp(half)?;
                let eps = tape.constant(noise);
                let jitter = tape.mul(std, eps)?;
                tape.add(relations.mean, jitter)?
            }
            _ => relations.mean,
        };
        let graph = self.gin_embed(tape, nodes, propagation, readout)?;
        Ok(ForwardVars {
            objects,
            relations,
            nodes,
            graph,
        })
    }

    /// Task logits `[scenes, num_tasks]` from graph embeddings.
    pub fn classify_logits(&self, tape: &mut Tape<T>, graph: Var) -> Result<Var> {
        let head = self.layout.head.ok_or(ModelError::NoClassifyHead)?;
        self.dense(tape, graph, head)
    }

    /// Relation means for every object pair of every scene, without
    /// recording gradients. Element `s` is `[pairs_s, relation_dim]`.
    pub fn relation_embeddings(&self, batch: &SceneBatch<T>) -> Result<Vec<Tensor<T>>> {
        let mut tape = Tape::inference();
        let objects = self.encode_objects(&mut tape, batch)?;
        let rel = self.encode_relations(&mut tape, objects, &batch.pairs)?;
        let mean = tape.value(rel.mean);
        let d = self.config.relation_dim;
        (0..batch.num_scenes())
            .map(|s| {
                let (a, b) = (batch.pair_offsets[s], batch.pair_offsets[s + 1]);
                Ok(Tensor::new(&[b - a, d], mean.data()[a * d..b * d].to_vec())?)
            })
            .collect()
    }

    /// Graph embeddings `[scenes, relation_dim]` from relation means.
    pub fn graph_embeddings(&self, batch: &SceneBatch<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::inference();
        let out = self.forward(&mut tape, batch, None)?;
        Ok(tape.value(out.graph).clone())
    }

    /// Symmetric relation embedding of two object embeddings; returns the
    /// mean and, in bottleneck mode, the log-variance.
    pub fn encode_relation(&self, a: &[T], b: &[T]) -> Result<(Vec<T>, Option<Vec<T>>)> {
        let d = self.config.object_dim;
        let mut data = a.to_vec();
        data.extend_from_slice(b);
        let mut tape = Tape::inference();
        let objects = tape.constant(Tensor::new(&[2, d], data)?);
        let rel = self.encode_relations(&mut tape, objects, &[(0, 1)])?;
        Ok((
            tape.value(rel.mean).data().to_vec(),
            rel.logvar.map(|v| tape.value(v).data().to_vec()),
        ))
    }
}

fn infer_config(entries: &[CheckpointEntry]) -> Result<ModelConfig> {
    let shape = |name: &str| -> Result<&[usize]> {
        entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| e.shape.as_slice())
            .ok_or_else(|| ModelError::Layout(format!("missing parameter {name}")))
    };
    let conv_channels = [
        shape("object.conv1.weight")?[0],
        shape("object.conv2.weight")?[0],
        shape("object.conv3.weight")?[0],
        shape("object.conv4.weight")?[0],
    ];
    let object_dim = shape("object.fc.weight")?[1];
    let relation_hidden = [shape("relation.fc1.weight")?[1], shape("relation.fc2.weight")?[1]];
    let relation_out = shape("relation.fc3.weight")?[1];
    let gin_first = shape("gin.0.fc1.weight")?;
    let relation_dim = gin_first[0];
    let gin_hidden = [gin_first[1], shape("gin.0.fc2.weight")?[1]];
    let gin_layers = (0..)
        .take_while(|i| entries.iter().any(|e| e.name == format!("gin.{i}.fc1.weight")))
        .count();
    let ib = match relation_out {
        x if x == relation_dim => false,
        x if x == 2 * relation_dim => true,
        x => return Err(ModelError::Layout(format!("relation output width {x}"))),
    };
    let num_tasks = shape("head.weight").ok().map(|s| s[1]);
    Ok(ModelConfig {
        conv_channels,
        object_dim,
        relation_hidden,
        relation_dim,
        gin_hidden,
        gin_layers,
        ib,
        num_tasks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(ib: bool, tasks: Option<usize>) -> CrGnn<f32> {
        let config = ModelConfig {
            ib,
            num_tasks: tasks,
            ..ModelConfig::default()
        };
        CrGnn::new(config, &mut ChaCha8Rng::seed_from_u64(0))
    }

    fn square(row: usize, col: usize) -> Mask {
        let mut m = Mask::default();
        for r in row..row + 3 {
            for c in col..col + 3 {
                m.set(r, c);
            }
        }
        m
    }

    #[test]
    fn parameter_count_stays_under_a_million() {
        let m = model(true, Some(13));
        assert!(m.store().num_scalars() < 1_000_000, "{}", m.store().num_scalars());
    }

    #[test]
    fn registration_order_is_encoder_then_relation_then_gin_then_head() {
        let m = model(false, Some(6));
        let names: Vec<&str> = m.store().ids().map(|id| m.store().name(id)).collect();
        assert_eq!(names[0], "object.conv1.weight");
        assert_eq!(names[9], "object.fc.bias");
        assert_eq!(names[10], "relation.fc1.weight");
        assert_eq!(names[16], "gin.0.fc1.weight");
        assert_eq!(names.last(), Some(&"head.bias"));
    }

    #[test]
    fn shapes_for_several_object_counts() {
        let m = model(true, None);
        let mut grid = [[0u8; GRID]; GRID];
        let masks: Vec<Mask> = (0..6).map(|i| square((i / 3) * 5, (i % 3) * 5)).collect();
        for (i, mask) in masks.iter().enumerate() {
            for (r, c) in mask.cells() {
                grid[r][c] = i as u8 + 1;
            }
        }
        for n in 2..=6 {
            let batch = SceneBatch::<f32>::new([(&grid, &masks[..n])]).unwrap();
            let mut tape = Tape::new();
            let out = m.forward(&mut tape, &batch, Some(m.sample_noise(&batch, &mut ChaCha8Rng::seed_from_u64(1)))).unwrap();
            assert_eq!(tape.shape(out.objects), &[n, 100]);
            assert_eq!(tape.shape(out.relations.mean), &[n * (n - 1) / 2, 20]);
            assert_eq!(tape.shape(out.relations.logvar.unwrap()), &[n * (n - 1) / 2, 20]);
            assert_eq!(tape.shape(out.graph), &[1, 20]);
        }
    }

    #[test]
    fn empty_inputs_are_rejected() {
        let grid = [[0u8; GRID]; GRID];
        assert!(matches!(
            SceneBatch::<f32>::new([(&grid, &[][..])]),
            Err(ModelError::EmptyScene { scene: 0 })
        ));
        let one = [square(0, 0)];
        let grid = [[3u8; GRID]; GRID];
        let batch = SceneBatch::<f32>::new([(&grid, &one[..])]).unwrap();
        assert!(matches!(batch.propagation(), Err(ModelError::EmptyGraph { scene: 0 })));
    }

    #[test]
    fn relation_encoding_is_symmetric() {
        let m = model(true, None);
        let a: Vec<f32> = (0..100).map(|i| (i as f32 * 0.37).sin()).collect();
        let b: Vec<f32> = (0..100).map(|i| (i as f32 * 0.11).cos()).collect();
        let (m1, v1) = m.encode_relation(&a, &b).unwrap();
        let (m2, v2) = m.encode_relation(&b, &a).unwrap();
        assert_eq!(m1.len(), 20);
        assert_eq!(m1, m2);
        assert_eq!(v1, v2);
    }

    #[test]
    fn zero_relation_weights_give_zero_embedding() {
        let mut m = model(false, None);
        let ids: Vec<ParamId> = m.store().ids().filter(|&id| m.store().name(id).starts_with("relation")).collect();
        for id in ids {
            m.store_mut().get_mut(id).data_mut().fill(0.0);
        }
        let (mean, _) = m.encode_relation(&[1.0; 100], &[-2.0; 100]).unwrap();
        assert!(mean.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn checkpoint_round_trip_restores_config_and_outputs() {
        let m = model(true, Some(13));
        let mut buf = Vec::new();
        tapegrad::write_checkpoint_to(&mut buf, &m.store().to_entries()).unwrap();
        let back = CrGnn::<f32>::from_entries(&tapegrad::read_checkpoint_from(buf.as_slice()).unwrap()).unwrap();
        assert_eq!(back.config(), m.config());
        let grid = [[1u8; GRID]; GRID];
        let masks = [square(0, 0), square(8, 8)];
        let batch = SceneBatch::<f32>::new([(&grid, &masks[..])]).unwrap();
        assert_eq!(
            back.graph_embeddings(&batch).unwrap(),
            m.graph_embeddings(&batch).unwrap()
        );
    }
}
