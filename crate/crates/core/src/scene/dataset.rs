//! Dataset generation and the JSON Lines dataset format.
//!
//! One record per line:
//! `{"schema_version":1,"task_id":..,"obs_id":..,"grid":[[..16]..16],
//!   "masks":[[[0|1..16]..16]..n],"objects":[{"shape":..,"color":..,"is_core":..}],
//!   "edges":[[k,l,"same-color"],..]}`

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::generate::generate_observation;
use super::task::TaskFamily;
use super::types::{Edge, Grid, Mask, Observation, RelationType, SceneObject, ShapeKind};
use super::SceneError;

pub const SCHEMA_VERSION: u32 = 1;

/// How many distractor objects each generated scene gets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistractorPolicy {
    #[serde(rename = "0")]
    None,
    #[serde(rename = "1")]
    One,
    /// Uniformly 0, 1 or 2.
    #[serde(rename = "0-2")]
    ZeroToTwo,
}

impl DistractorPolicy {
    pub fn max(self) -> usize {
        match self {
            DistractorPolicy::None => 0,
            DistractorPolicy::One => 1,
            DistractorPolicy::ZeroToTwo => 2,
        }
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> usize {
        match self {
            DistractorPolicy::None => 0,
            DistractorPolicy::One => 1,
            DistractorPolicy::ZeroToTwo => rng.random_range(0..=2),
        }
    }
}

impl FromStr for DistractorPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "0" => Ok(DistractorPolicy::None),
            "1" => Ok(DistractorPolicy::One),
            "0-2" => Ok(DistractorPolicy::ZeroToTwo),
            _ => Err(format!("distractor policy must be 0, 1 or 0-2, got {s:?}")),
        }
    }
}

impl fmt::Display for DistractorPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistractorPolicy::None => "0",
            DistractorPolicy::One => "1",
            DistractorPolicy::ZeroToTwo => "0-2",
        })
    }
}

/// Independent stream per (seed, task, example) so output does not depend
/// on generation order or thread count.
pub fn scene_rng(seed: u64, task_id: usize, index: usize) -> ChaCha8Rng {
    let mut z = seed ^ 0x243F_6A88_85A3_08D3;
    for v in [task_id as u64, index as u64] {
        z = (z ^ v).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z ^= z >> 29;
    }
    ChaCha8Rng::seed_from_u64(z)
}

/// `examples_per_task` scenes for every task, task-major, with
/// `obs_id` numbering records in file order.
pub fn generate_dataset(
    family: &TaskFamily,
    examples_per_task: usize,
    distractors: DistractorPolicy,
    seed: u64,
    threads: usize,
) -> Result<Vec<Observation>, SceneError> {
    let jobs: Vec<(usize, usize)> = family
        .tasks
        .iter()
        .enumerate()
        .flat_map(|(t, _)| (0..examples_per_task).map(move |i| (t, i)))
        .collect();
    let make = |&(t, i): &(usize, usize)| -> Result<Observation, SceneError> {
        let spec = &family.tasks[t];
        let mut rng = scene_rng(seed, spec.task_id, i);
        let n = distractors.sample(&mut rng);
        let mut obs = generate_observation(spec, n, &mut rng)?;
        obs.obs_id = t * examples_per_task + i;
        Ok(obs)
    };
    let threads = threads.max(1);
    if threads == 1 || jobs.len() < 2 {
        return jobs.iter().map(make).collect();
    }
    let chunk = jobs.len().div_ceil(threads);
    let parts: Vec<Result<Vec<Observation>, SceneError>> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(make).collect()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("generator thread panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(jobs.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct ObjectRecord {
    shape: ShapeKind,
    color: u8,
    is_core: bool,
}

#[derive(Serialize, Deserialize)]
struct Record {
    schema_version: u32,
    task_id: usize,
    obs_id: usize,
    grid: Grid,
    masks: Vec<Grid>,
    objects: Vec<ObjectRecord>,
    edges: Vec<(usize, usize, RelationType)>,
}

/// What the trainer sees of a record: no objects, no edges.
#[derive(Deserialize)]
struct StrippedRecord {
    schema_version: u32,
    task_id: usize,
    obs_id: usize,
    grid: Grid,
    masks: Vec<Grid>,
}

/// A scene as consumed by training: pixels, masks and task id only.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingRecord {
    pub task_id: usize,
    pub obs_id: usize,
    pub grid: Grid,
    pub masks: Vec<Mask>,
}

impl From<&Observation> for TrainingRecord {
    fn from(o: &Observation) -> Self {
        TrainingRecord {
            task_id: o.task_id,
            obs_id: o.obs_id,
            grid: o.grid,
            masks: o.masks(),
        }
    }
}

fn to_record(o: &Observation) -> Record {
    Record {
        schema_version: SCHEMA_VERSION,
        task_id: o.task_id,
        obs_id: o.obs_id,
        grid: o.grid,
        masks: o.objects.iter().map(|x| x.mask.to_rows()).collect(),
        objects: o
            .objects
            .iter()
            .map(|x| ObjectRecord {
                shape: x.shape,
                color: x.color,
                is_core: x.is_core,
            })
            .collect(),
        edges: o.edges.iter().map(|e| (e.k, e.l, e.relation)).collect(),
    }
}

fn from_record(r: Record, line: usize) -> Result<Observation, SceneError> {
    let bad = |message: String| SceneError::Data { line, message };
    if r.masks.len() != r.objects.len() {
        return Err(bad(format!(
            "{} masks for {} objects",
            r.masks.len(),
            r.objects.len()
        )));
    }
    let objects = r
        .masks
        .iter()
        .zip(r.objects)
        .map(|(m, o)| {
            let mask = Mask::from_rows(m);
            let bbox = mask.bbox().ok_or_else(|| bad("empty object mask".into()))?;
            Ok(SceneObject {
                shape: o.shape,
                color: o.color,
                mask,
                bbox,
                is_core: o.is_core,
            })
        })
        .collect::<Result<Vec<_>, SceneError>>()?;
    let edges = r
        .edges
        .into_iter()
        .map(|(k, l, relation)| {
            if k >= l || l >= objects.len() || relation == RelationType::None {
                Err(bad(format!("invalid edge ({k}, {l}, {relation})")))
            } else {
                Ok(Edge { k, l, relation })
            }
        })
        .collect::<Result<Vec<_>, SceneError>>()?;
    Ok(Observation {
        grid: r.grid,
        objects,
        task_id: r.task_id,
        obs_id: r.obs_id,
        edges,
    })
}

pub fn write_dataset_to(mut w: impl Write, observations: &[Observation]) -> Result<(), SceneError> {
    for o in observations {
        serde_json::to_writer(&mut w, &to_record(o)).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn for_each_line<R: Read, T>(
    r: R,
    mut f: impl FnMut(&str, usize) -> Result<T, SceneError>,
) -> Result<Vec<T>, SceneError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(f(&line, i + 1)?);
    }
    Ok(out)
}

fn check_version(version: u32, line: usize) -> Result<(), SceneError> {
    if version != SCHEMA_VERSION {
        return Err(SceneError::SchemaVersion { line, version });
    }
    Ok(())
}

pub fn read_dataset_from(r: impl Read) -> Result<Vec<Observation>, SceneError> {
    for_each_line(r, |text, line| {
        let rec: Record = serde_json::from_str(text).map_err(|e| SceneError::Data {
            line,
            message: e.to_string(),
        })?;
        check_version(rec.schema_version, line)?;
        from_record(rec, line)
    })
}

/// Reads only the training-visible fields; `objects` and `edges` are skipped
/// without being interpreted.
pub fn read_training_records_from(r: impl Read) -> Result<Vec<TrainingRecord>, SceneError> {
    for_each_line(r, |text, line| {
        let rec: StrippedRecord = serde_json::from_str(text).map_err(|e| SceneError::Data {
            line,
            message: e.to_string(),
        })?;
        check_version(rec.schema_version, line)?;
        let masks: Vec<Mask> = rec.masks.iter().map(Mask::from_rows).collect();
        if masks.iter().any(Mask::is_empty) {
            return Err(SceneError::Data {
                line,
                message: "empty object mask".into(),
            });
        }
        Ok(TrainingRecord {
            task_id: rec.task_id,
            obs_id: rec.obs_id,
            grid: rec.grid,
            masks,
        })
    })
}

pub fn write_dataset(observations: &[Observation], path: impl AsRef<Path>) -> Result<(), SceneError> {
    write_dataset_to(BufWriter::new(File::create(path)?), observations)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<Observation>, SceneError> {
    read_dataset_from(File::open(path)?)
}

pub fn read_training_records(path: impl AsRef<Path>) -> Result<Vec<TrainingRecord>, SceneError> {
    read_training_records_from(File::open(path)?)
}
