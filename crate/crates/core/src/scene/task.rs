use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::RelationType;
use super::SceneError;

/// A task's relational subgraph over its core objects.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: usize,
    pub n_core: usize,
    pub relations: Vec<((usize, usize), RelationType)>,
}

impl TaskSpec {
    pub fn new(task_id: usize, n_core: usize, relations: &[((usize, usize), RelationType)]) -> Self {
        TaskSpec {
            task_id,
            n_core,
            relations: relations.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |reason: String| SceneError::InvalidTask {
            task_id: self.task_id,
            reason,
        };
        if self.n_core < 2 {
            return Err(bad(format!("needs at least 2 core objects, got {}", self.n_core)));
        }
        let mut seen = BTreeSet::new();
        for &((k, l), r) in &self.relations {
            if k >= self.n_core || l >= self.n_core || k == l {
                return Err(bad(format!("pair ({k}, {l}) invalid for {} objects", self.n_core)));
            }
            if r == RelationType::None {
                return Err(bad(format!("pair ({k}, {l}) is labeled none")));
            }
            if !seen.insert((k.min(l), k.max(l))) {
                return Err(bad(format!("pair ({k}, {l}) listed twice")));
            }
        }
        // Mentioned objects must form one connected component.
        let mentioned: BTreeSet<usize> = seen.iter().flat_map(|&(k, l)| [k, l]).collect();
        if let Some(&start) = mentioned.iter().next() {
            let mut reached = BTreeSet::from([start]);
            let mut frontier = vec![start];
            while let Some(v) = frontier.pop() {
                for &(k, l) in &seen {
                    for (a, b) in [(k, l), (l, k)] {
                        if a == v && reached.insert(b) {
                            frontier.push(b);
                        }
                    }
                }
            }
            if reached != mentioned {
                return Err(bad("relation graph is not connected".into()));
            }
        }
        Ok(())
    }
}

/// A family of tasks, as stored in the task-family JSON config.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskFamily {
    pub tasks: Vec<TaskSpec>,
}

impl TaskFamily {
    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        let family: TaskFamily = serde_json::from_str(text).map_err(|e| SceneError::Config {
            line: e.line(),
            message: e.to_string(),
        })?;
        family.validate()?;
        Ok(family)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SceneError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.tasks.is_empty() {
            return Err(SceneError::Config {
                line: 0,
                message: "task family has no tasks".into(),
            });
        }
        let mut ids = BTreeSet::new();
        for t in &self.tasks {
            t.validate()?;
            if !ids.insert(t.task_id) {
                return Err(SceneError::InvalidTask {
                    task_id: t.task_id,
                    reason: "duplicate task_id".into(),
                });
            }
        }
        Ok(())
    }

    pub fn get(&self, task_id: usize) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }

    pub fn max_core(&self) -> usize {
        self.tasks.iter().map(|t| t.n_core).max().unwrap_or(0)
    }

    /// Six tasks over 2–3 core objects.
    pub fn two_to_three_core() -> Self {
        Self::from_json(include_str!("../../tasks/core_2_3.json")).expect("bundled family is valid")
    }

    /// Thirteen tasks over 2–4 core objects.
    pub fn two_to_four_core() -> Self {
        Self::from_json(include_str!("../../tasks/core_2_4.json")).expect("bundled family is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use RelationType::*;

    #[test]
    fn bundled_families_parse() {
        let small = TaskFamily::two_to_three_core();
        assert_eq!(small.tasks.len(), 6);
        assert_eq!(small.tasks[2].relations, vec![((0, 1), Inside)]);
        let large = TaskFamily::two_to_four_core();
        assert_eq!(large.tasks.len(), 13);
        assert_eq!(large.max_core(), 4);
        assert_eq!(
            large.tasks[12].relations,
            vec![((0, 2), SameColor), ((1, 2), SameColor), ((2, 3), SameColor)]
        );
    }

    #[test]
    fn rejects_malformed_specs() {
        assert!(TaskSpec::new(0, 2, &[((0, 2), SameColor)]).validate().is_err());
        assert!(TaskSpec::new(0, 2, &[((0, 1), None)]).validate().is_err());
        assert!(TaskSpec::new(0, 3, &[((0, 1), SameColor), ((1, 0), Inside)])
            .validate()
            .is_err());
        assert!(TaskSpec::new(0, 4, &[((0, 1), SameColor), ((2, 3), SameShape)])
            .validate()
            .is_err());
        assert!(TaskSpec::new(0, 3, &[]).validate().is_ok());
    }

    #[test]
    fn config_error_reports_line() {
        let text = "{\n  \"tasks\": [\n    {\"task_id\": 0, \"n_core\": 2, \"relations\": [[[0, 1], \"nope\"]]}\n  ]\n}";
        match TaskFamily::from_json(text) {
            Err(SceneError::Config { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected config error, got {other:?}"),
        }
    }
}
