//! Task-graph retrieval: MCS over groups of same-task graphs, tallied.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::graph::{Canonical, RelGraph};
use super::mcs::mcs_of_all;
use super::DiscoveryError;
use crate::scene::RelationType;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TallyEntry {
    pub count: usize,
    pub canonical: Canonical,
    pub graph: RelGraph,
}

/// Consecutive groups of `group_size`; a shorter final group is kept when it
/// has at least two graphs.
pub fn groups(len: usize, group_size: usize) -> Vec<std::ops::Range<usize>> {
    (0..len)
        .step_by(group_size.max(1))
        .map(|s| s..(s + group_size).min(len))
        .filter(|r| r.len() == group_size || r.len() >= 2)
        .collect()
}

/// MCS of every group of `graphs` (already in fold order), tallied by
/// canonical form. Returns all distinct results, most frequent first, ties
/// by canonical form; the caller truncates to its top-k.
pub fn tally_groups(graphs: &[RelGraph], group_size: usize) -> Result<Vec<TallyEntry>, DiscoveryError> {
    if group_size < 2 {
        return Err(DiscoveryError::InvalidArgument(format!("group size must be ≥ 2, got {group_size}")));
    }
    if graphs.len() < group_size {
        return Err(DiscoveryError::TooFewGraphs {
            have: graphs.len(),
            need: group_size,
        });
    }
    let mut counts: HashMap<Canonical, usize> = HashMap::new();
    for range in groups(graphs.len(), group_size) {
        let mcs = mcs_of_all(&graphs[range])?;
        *counts.entry(mcs.canonical()?).or_default() += 1;
    }
    let mut entries: Vec<TallyEntry> = counts
        .into_iter()
        .map(|(canonical, count)| TallyEntry {
            count,
            graph: canonical.to_graph(),
            canonical,
        })
        .collect();
    entries.sort_by(|x, y| y.count.cmp(&x.count).then_with(|| x.canonical.cmp(&y.canonical)));
    Ok(entries)
}

pub fn task_mcs_retrieval(
    graphs: &[RelGraph],
    group_size: usize,
    top_k: usize,
) -> Result<Vec<TallyEntry>, DiscoveryError> {
    let mut all = tally_groups(graphs, group_size)?;
    all.truncate(top_k);
    Ok(all)
}

/// One reported MCS: `{"count": n, "edges": [[[k, l], "label"], ...]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub count: usize,
    pub edges: Vec<((usize, usize), RelationType)>,
}

impl From<&TallyEntry> for ReportEntry {
    fn from(e: &TallyEntry) -> Self {
        ReportEntry {
            count: e.count,
            edges: e.graph.to_pairs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRetrieval {
    pub task_id: usize,
    pub groups: usize,
    pub top: Vec<ReportEntry>,
    /// The task's ground-truth graph, in the same notation.
    pub ground_truth: Vec<((usize, usize), RelationType)>,
    /// Rank (1-based) of the ground truth among the reported entries.
    pub ground_truth_rank: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub group_size: usize,
    pub top_k: usize,
    pub tasks: Vec<TaskRetrieval>,
}

impl RetrievalReport {
    /// Tasks whose ground truth appears among their reported entries.
    pub fn hits(&self) -> usize {
        self.tasks.iter().filter(|t| t.ground_truth_rank.is_some()).count()
    }

    pub fn task(&self, task_id: usize) -> Option<&TaskRetrieval> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }
}
