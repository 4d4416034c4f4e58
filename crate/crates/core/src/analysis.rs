//! Intent trajectories across revision depths.
//!
//! An edit made at depth `t-1` is paired with a depth-`t` edit whose source
//! range overlaps the text it produced. Pairing is greedy: prior edits are
//! taken left to right and each claims the leftmost unclaimed overlapping
//! edit. Unclaimed prior edits flow to END, unclaimed new edits come from
//! START, depth-1 edits all come from START, and the edits of the final depth
//! flow to END one depth later.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::editops::{Edit, RevisionTrace};
use crate::model::Intent;

/// Describes the pairing convention; included in exported metadata.
pub const PAIRING_RULE: &str = "greedy leftmost overlap between depth t-1 edits (mapped into their output text) \
and depth t edit source ranges; empty ranges overlap when touching; unpaired prior edits flow to END, unpaired new edits come from START";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    Start,
    Intent(Intent),
    End,
}

impl Node {
    pub fn name(self) -> &'static str {
        match self {
            Node::Start => "START",
            Node::Intent(i) => i.as_str(),
            Node::End => "END",
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `flows[t][(i, j)]` counts transitions from depth `t-1` to depth `t`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlowMatrix {
    pub flows: BTreeMap<usize, BTreeMap<(Node, Node), u64>>,
}

impl FlowMatrix {
    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }

    pub fn add(&mut self, depth: usize, from: Node, to: Node, count: u64) {
        if count > 0 {
            *self.flows.entry(depth).or_default().entry((from, to)).or_insert(0) += count;
        }
    }

    pub fn get(&self, depth: usize, from: Node, to: Node) -> u64 {
        self.flows
            .get(&depth)
            .and_then(|m| m.get(&(from, to)))
            .copied()
            .unwrap_or(0)
    }

    pub fn merge(&mut self, other: &FlowMatrix) {
        for (&depth, cells) in &other.flows {
            for (&(from, to), &n) in cells {
                self.add(depth, from, to, n);
            }
        }
    }

    /// Sum of `flows[depth][(from, *)]`.
    pub fn outflow(&self, depth: usize, from: Node) -> u64 {
        self.flows
            .get(&depth)
            .map_or(0, |m| m.iter().filter(|((f, _), _)| *f == from).map(|(_, n)| n).sum())
    }

    /// Sum of `flows[depth][(*, to)]`.
    pub fn inflow(&self, depth: usize, to: Node) -> u64 {
        self.flows
            .get(&depth)
            .map_or(0, |m| m.iter().filter(|((_, t), _)| *t == to).map(|(_, n)| n).sum())
    }

    pub fn total(&self) -> u64 {
        self.flows.values().flat_map(|m| m.values()).sum()
    }

    /// `depth,from,to,count` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("depth,from,to,count\n");
        for (depth, cells) in &self.flows {
            for ((from, to), n) in cells {
                out.push_str(&format!("{depth},{from},{to},{n}\n"));
            }
        }
        out
    }
}

/// `[start, end)` overlap where an empty range overlaps anything it touches.
fn overlaps(a: (usize, usize), b: (usize, usize)) -> bool {
    if a.0 == a.1 || b.0 == b.1 {
        a.0 <= b.1 && b.0 <= a.1
    } else {
        a.0 < b.1 && b.0 < a.1
    }
}

/// Char ranges that `edits` occupy in the text they produce.
fn output_ranges(edits: &[Edit]) -> Vec<(usize, usize)> {
    let mut shift: isize = 0;
    edits
        .iter()
        .map(|e| {
            let start = (e.src_start as isize + shift) as usize;
            let len = e.replacement.chars().count();
            shift += len as isize - (e.src_end - e.src_start) as isize;
            (start, start + len)
        })
        .collect()
}

fn sorted_edits(edits: &[Edit]) -> Vec<Edit> {
    let mut v = edits.to_vec();
    v.sort_by_key(|e| (e.src_start, e.src_end));
    v
}

/// Adds the flows of one trace to `m`.
pub fn add_trace(m: &mut FlowMatrix, trace: &RevisionTrace) {
    let Some(last) = trace.steps.last() else {
        return;
    };
    let mut prev: Option<Vec<Edit>> = None;
    for (k, step) in trace.steps.iter().enumerate() {
        let depth = k + 1;
        let cur = sorted_edits(&step.edits);
        match &prev {
            None => {
                for e in &cur {
                    m.add(depth, Node::Start, Node::Intent(e.intent), 1);
                }
            }
            Some(prior) => {
                let mut claimed = vec![false; cur.len()];
                for (p, range) in prior.iter().zip(output_ranges(prior)) {
                    let hit = (0..cur.len()).find(|&j| !claimed[j] && overlaps(range, (cur[j].src_start, cur[j].src_end)));
                    match hit {
                        Some(j) => {
                            claimed[j] = true;
                            m.add(depth, Node::Intent(p.intent), Node::Intent(cur[j].intent), 1);
                        }
                        None => m.add(depth, Node::Intent(p.intent), Node::End, 1),
                    }
                }
                for (e, _) in cur.iter().zip(&claimed).filter(|(_, c)| !**c) {
                    m.add(depth, Node::Start, Node::Intent(e.intent), 1);
                }
            }
        }
        prev = Some(cur);
    }
    let end_depth = trace.steps.len() + 1;
    for e in &last.edits {
        m.add(end_depth, Node::Intent(e.intent), Node::End, 1);
    }
}

pub fn transitions<'a>(traces: impl IntoIterator<Item = &'a RevisionTrace>) -> FlowMatrix {
    let mut m = FlowMatrix::default();
    for t in traces {
        add_trace(&mut m, t);
    }
    m
}

/// One matrix per trace group; traces without a group go under `""`.
pub fn transitions_by_group<'a>(traces: impl IntoIterator<Item = &'a RevisionTrace>) -> BTreeMap<String, FlowMatrix> {
    let mut out: BTreeMap<String, FlowMatrix> = BTreeMap::new();
    for t in traces {
        add_trace(out.entry(t.group.clone().unwrap_or_default()).or_default(), t);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SankeyNode {
    /// `intent@depth`, `START` or `END`.
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SankeyLink {
    pub source: String,
    pub target: String,
    pub value: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SankeyMetadata {
    pub pairing: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sankey {
    pub nodes: Vec<SankeyNode>,
    pub links: Vec<SankeyLink>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<SankeyMetadata>,
}

fn node_at(node: Node, depth: usize) -> (usize, Node) {
    // START and END are single nodes, ordered first and last
    match node {
        Node::Start => (0, Node::Start),
        Node::End => (usize::MAX, Node::End),
        n => (depth, n),
    }
}

fn node_id((depth, node): (usize, Node)) -> String {
    match node {
        Node::Intent(i) => format!("{}@{depth}", i.as_str()),
        other => other.name().to_string(),
    }
}

/// Flow-diagram document: nodes referenced by at least one link, and links
/// ordered by depth, then source, then target.
pub fn export_sankey(m: &FlowMatrix) -> Sankey {
    let mut nodes = std::collections::BTreeSet::new();
    let mut links = Vec::new();
    for (&depth, cells) in &m.flows {
        for (&(from, to), &value) in cells {
            let src = node_at(from, depth - 1);
            let dst = node_at(to, depth);
            nodes.insert(src);
            nodes.insert(dst);
            links.push(SankeyLink {
                source: node_id(src),
                target: node_id(dst),
                value,
            });
        }
    }
    let metadata = (!links.is_empty()).then(|| SankeyMetadata {
        pairing: PAIRING_RULE.to_string(),
    });
    Sankey {
        nodes: nodes
            .into_iter()
            .map(|n| SankeyNode {
                id: node_id(n),
                depth: matches!(n.1, Node::Intent(_)).then_some(n.0),
            })
            .collect(),
        links,
        metadata,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::editops::{RevisionStep, StopReason};
    use Intent::*;

    fn step(depth: usize, edits: Vec<Edit>) -> RevisionStep {
        RevisionStep {
            depth,
            before: String::new(),
            after: String::new(),
            edits,
            detector_labels: vec![],
            spans: vec![],
        }
    }

    fn trace(steps: Vec<RevisionStep>) -> RevisionTrace {
        RevisionTrace {
            doc_id: "d".into(),
            group: Option::None,
            steps,
            stop_reason: StopReason::NoEdit,
        }
    }

    #[test]
    fn empty_inputs() {
        let m = transitions(&[]);
        assert!(m.is_empty());
        let s = export_sankey(&m);
        assert_eq!(serde_json::to_string(&s).unwrap(), r#"{"nodes":[],"links":[]}"#);
    }

    #[test]
    fn overlapping_edits_pair_up() {
        let t = trace(vec![
            step(1, vec![Edit::new(4, 9, "quick", Clarity)]),
            step(2, vec![Edit::new(6, 8, "ui", Fluency)]),
        ]);
        let m = transitions([&t]);
        assert_eq!(m.get(1, Node::Start, Node::Intent(Clarity)), 1);
        assert_eq!(m.get(2, Node::Intent(Clarity), Node::Intent(Fluency)), 1);
        assert_eq!(m.get(3, Node::Intent(Fluency), Node::End), 1);
        assert_eq!(m.total(), 3);
    }

    #[test]
    fn lone_edit_flows_to_end() {
        let t = trace(vec![step(1, vec![Edit::new(0, 1, "x", Clarity)])]);
        let m = transitions([&t]);
        assert_eq!(m.get(2, Node::Intent(Clarity), Node::End), 1);
    }

    #[test]
    fn prior_ranges_are_shifted() {
        // depth 1 inserts 3 chars at 0, so its second edit sits at 10..11 afterwards
        let t = trace(vec![
            step(1, vec![Edit::new(0, 0, "ab ", Style), Edit::new(7, 8, "z", Coherence)]),
            step(2, vec![Edit::new(10, 11, "y", Fluency), Edit::new(20, 21, "w", Clarity)]),
        ]);
        let m = transitions([&t]);
        assert_eq!(m.get(2, Node::Intent(Coherence), Node::Intent(Fluency)), 1);
        assert_eq!(m.get(2, Node::Intent(Style), Node::End), 1);
        assert_eq!(m.get(2, Node::Start, Node::Intent(Clarity)), 1);
    }

    #[test]
    fn greedy_pairing_is_one_to_one() {
        let t = trace(vec![
            step(1, vec![Edit::new(0, 10, "0123456789", Clarity)]),
            step(2, vec![Edit::new(1, 2, "a", Fluency), Edit::new(5, 6, "b", Style)]),
        ]);
        let m = transitions([&t]);
        assert_eq!(m.get(2, Node::Intent(Clarity), Node::Intent(Fluency)), 1);
        assert_eq!(m.get(2, Node::Start, Node::Intent(Style)), 1);
    }

    #[test]
    fn sankey_single_transition() {
        let mut m = FlowMatrix::default();
        m.add(2, Node::Intent(Clarity), Node::Intent(Fluency), 1);
        let s = export_sankey(&m);
        assert_eq!(s.nodes.len(), 2);
        assert_eq!(s.nodes[0].id, "clarity@1");
        assert_eq!(s.nodes[1].id, "fluency@2");
        assert_eq!(
            s.links,
            vec![SankeyLink {
                source: "clarity@1".into(),
                target: "fluency@2".into(),
                value: 1
            }]
        );
        assert!(s.metadata.is_some());
        assert_eq!(m.to_csv(), "depth,from,to,count\n2,clarity,fluency,1\n");
    }

    #[test]
    fn groups_get_their_own_matrix() {
        let mut a = trace(vec![step(1, vec![Edit::new(0, 1, "x", Clarity)])]);
        a.group = Some("native".into());
        let mut b = trace(vec![step(1, vec![Edit::new(0, 1, "x", Style)])]);
        b.group = Some("learner".into());
        let by = transitions_by_group([&a, &b]);
        assert_eq!(by.len(), 2);
        assert_eq!(by["native"].get(1, Node::Start, Node::Intent(Clarity)), 1);
        let mut merged = by["native"].clone();
        merged.merge(&by["learner"]);
        assert_eq!(merged, transitions([&a, &b]));
    }

    #[test]
    fn overlap_rule() {
        assert!(overlaps((2, 2), (2, 5)));
        assert!(overlaps((2, 5), (5, 5)));
        assert!(!overlaps((2, 5), (5, 7)));
        assert!(overlaps((2, 5), (4, 7)));
        assert!(!overlaps((0, 0), (1, 1)));
    }
}
