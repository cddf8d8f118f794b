//! Operation-level DAG and call-stack views of a trajectory.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::trace_model::Trajectory;

/// Parent-op to child-op edges weighted by how often the pair occurs.
///
/// Nodes are operation names, not spans, so repeated invocations of the same
/// relation accumulate weight. Self-edges are kept.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OpGraph {
    pub nodes: BTreeSet<String>,
    pub edges: BTreeMap<(String, String), u64>,
}

impl OpGraph {
    pub fn weights(&self) -> Vec<u64> {
        self.edges.values().copied().collect()
    }

    pub fn total_weight(&self) -> u64 {
        self.edges.values().sum()
    }

    /// Graphviz rendering; edges are labeled with their weight.
    pub fn to_dot(&self, name: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "digraph {} {{", dot_quote(name));
        for node in &self.nodes {
            let _ = writeln!(out, "  {};", dot_quote(node));
        }
        for ((from, to), w) in &self.edges {
            let _ = writeln!(
                out,
                "  {} -> {} [label=\"{}\"];",
                dot_quote(from),
                dot_quote(to),
                w
            );
        }
        out.push_str("}\n");
        out
    }
}

fn dot_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Operation names in creation order, with the span id behind each entry.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OpSequence {
    pub ops: Vec<String>,
    pub span_refs: Vec<String>,
}

impl OpSequence {
    pub fn from_ops<S: Into<String>>(ops: impl IntoIterator<Item = S>) -> Self {
        let ops: Vec<String> = ops.into_iter().map(Into::into).collect();
        let span_refs = (0..ops.len()).map(|i| format!("s{i}")).collect();
        OpSequence { ops, span_refs }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

pub fn build_dag(t: &Trajectory) -> OpGraph {
    let op_of: HashMap<&str, &str> = t
        .spans()
        .iter()
        .map(|s| (s.span_id.as_str(), s.op.as_str()))
        .collect();
    let mut graph = OpGraph::default();
    for span in t.spans() {
        graph.nodes.insert(span.op.clone());
        if let Some(parent_op) = span.parent_span_id.as_deref().and_then(|p| op_of.get(p)) {
            *graph
                .edges
                .entry((parent_op.to_string(), span.op.clone()))
                .or_insert(0) += 1;
        }
    }
    graph
}

/// Sorts spans by `(start_time, span_id)`.
pub fn build_call_stack(t: &Trajectory) -> OpSequence {
    let mut spans: Vec<_> = t.spans().iter().collect();
    spans.sort_by(|a, b| {
        a.start_time
            .cmp(&b.start_time)
            .then_with(|| a.span_id.cmp(&b.span_id))
    });
    OpSequence {
        ops: spans.iter().map(|s| s.op.clone()).collect(),
        span_refs: spans.iter().map(|s| s.span_id.clone()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace_model::{Span, SpanStatus};

    fn span(id: &str, parent: Option<&str>, op: &str, start: i64) -> Span {
        Span {
            trace_id: "t".into(),
            span_id: id.into(),
            parent_span_id: parent.map(Into::into),
            op: op.into(),
            input: String::new(),
            output: String::new(),
            start_time: start,
            end_time: None,
            status: SpanStatus::Ok,
            error_type: None,
        }
    }

    fn traj(spans: Vec<Span>) -> Trajectory {
        Trajectory::new("t", spans).unwrap()
    }

    #[test]
    fn single_parent_child_edge() {
        let g = build_dag(&traj(vec![
            span("r", None, "supervisor", 0),
            span("a", Some("r"), "agent", 1),
        ]));
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[&("supervisor".into(), "agent".into())], 1);
    }

    #[test]
    fn repeated_tool_accumulates_weight() {
        let mut spans = vec![span("r", None, "supervisor", 0)];
        for i in 0..4 {
            spans.push(span(&format!("c{i}"), Some("r"), "tool_A", i + 1));
        }
        let t = traj(spans);
        let g = build_dag(&t);
        // direct scan oracle
        let expected = t
            .spans()
            .iter()
            .filter(|s| s.op == "tool_A" && s.parent_span_id.is_some())
            .count();
        assert_eq!(
            g.edges[&("supervisor".into(), "tool_A".into())],
            expected as u64
        );
        assert_eq!(expected, 4);
    }

    #[test]
    fn lone_root_has_no_edges() {
        let g = build_dag(&traj(vec![span("r", None, "supervisor", 0)]));
        assert!(g.edges.is_empty());
        assert_eq!(g.nodes.len(), 1);
    }

    #[test]
    fn call_stack_sorts_by_start_then_id() {
        let t = traj(vec![
            span("x3", None, "c", 3),
            span("x1", None, "a", 1),
            span("x2", None, "b", 2),
        ]);
        assert_eq!(build_call_stack(&t).ops, ["a", "b", "c"]);

        let t = traj(vec![
            span("b", None, "second", 5),
            span("a", None, "first", 5),
        ]);
        assert_eq!(build_call_stack(&t).span_refs, ["a", "b"]);
    }

    #[test]
    fn dot_export_labels_weights() {
        let g = build_dag(&traj(vec![
            span("r", None, "supervisor", 0),
            span("a", Some("r"), "agent", 1),
            span("b", Some("r"), "agent", 2),
        ]));
        let dot = g.to_dot("t");
        assert!(
            dot.contains("\"supervisor\" -> \"agent\" [label=\"2\"];"),
            "{dot}"
        );
    }
}
