//! How often each node and edge survives pooling within a subject group.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TOP_M: usize = 15;

/// Pooling outcome of one subject in the original node numbering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub subject_id: String,
    pub selected: Vec<usize>,
    /// Directed pooled edges `(from, to)`.
    #[serde(default)]
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeFrequency {
    pub node: usize,
    pub count: usize,
    /// `count / group size`.
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeFrequency {
    pub from: usize,
    pub to: usize,
    pub count: usize,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionFrequencyTable {
    pub group: String,
    pub group_size: usize,
    /// Top nodes by count, ties broken by lower node id.
    pub nodes: Vec<NodeFrequency>,
    pub edges: Vec<EdgeFrequency>,
}

/// Counts selections over `records` and keeps the `top_m` nodes and edges.
pub fn selection_frequencies(
    group: &str,
    records: &[&SelectionRecord],
    n_nodes: usize,
    top_m: usize,
) -> Result<SelectionFrequencyTable> {
    if records.is_empty() {
        return Err(Error::Invalid(format!("group `{group}` has no subjects")));
    }
    let mut nodes = vec![0usize; n_nodes];
    let mut edges: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for r in records {
        for &v in &r.selected {
            if v >= n_nodes {
                return Err(Error::Invalid(format!(
                    "subject {}: node {v} outside 0..{n_nodes}",
                    r.subject_id
                )));
            }
            nodes[v] += 1;
        }
        for &e in &r.edges {
            *edges.entry(e).or_insert(0) += 1;
        }
    }
    let size = records.len() as f64;
    let mut node_rows: Vec<NodeFrequency> = nodes
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(node, &count)| NodeFrequency {
            node,
            count,
            frequency: count as f64 / size,
        })
        .collect();
    node_rows.sort_by(|a, b| b.count.cmp(&a.count).then(a.node.cmp(&b.node)));
    node_rows.truncate(top_m);
    let mut edge_rows: Vec<EdgeFrequency> = edges
        .into_iter()
        .map(|((from, to), count)| EdgeFrequency {
            from,
            to,
            count,
            frequency: count as f64 / size,
        })
        .collect();
    edge_rows.sort_by(|a, b| b.count.cmp(&a.count).then((a.from, a.to).cmp(&(b.from, b.to))));
    edge_rows.truncate(top_m);
    Ok(SelectionFrequencyTable {
        group: group.into(),
        group_size: records.len(),
        nodes: node_rows,
        edges: edge_rows,
    })
}

impl SelectionFrequencyTable {
    /// `# schema_version=1,group=..,group_size=..` then
    /// `rank,node,count,frequency`.
    pub fn write_nodes_csv(&self, path: &Path) -> Result<()> {
        let mut out = format!(
            "# schema_version=1,group={},group_size={}\nrank,node,count,frequency\n",
            self.group, self.group_size
        );
        for (k, r) in self.nodes.iter().enumerate() {
            out += &format!("{},{},{},{}\n", k + 1, r.node, r.count, r.frequency);
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Same header, then `rank,from,to,count,frequency`.
    pub fn write_edges_csv(&self, path: &Path) -> Result<()> {
        let mut out = format!(
            "# schema_version=1,group={},group_size={}\nrank,from,to,count,frequency\n",
            self.group, self.group_size
        );
        for (k, r) in self.edges.iter().enumerate() {
            out += &format!("{},{},{},{},{}\n", k + 1, r.from, r.to, r.count, r.frequency);
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}
