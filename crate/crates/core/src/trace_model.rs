//! Span and trajectory data model.
//!
//! Spans arrive as newline-delimited JSON records. [`parse_span_record`] turns one
//! line into a [`Span`], and [`assemble_trajectories`] groups spans by trace id and
//! validates each group's parent links. A [`Trajectory`] is immutable once built.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpanStatus {
    #[default]
    Ok,
    Error,
}

/// One traced operation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Span {
    pub trace_id: String,
    pub span_id: String,
    pub parent_span_id: Option<String>,
    pub op: String,
    pub input: String,
    pub output: String,
    #[serde(rename = "start_time_ns")]
    pub start_time: i64,
    #[serde(rename = "end_time_ns", skip_serializing_if = "Option::is_none")]
    pub end_time: Option<i64>,
    pub status: SpanStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_type: Option<String>,
}

impl Span {
    pub fn is_root(&self) -> bool {
        self.parent_span_id.is_none()
    }

    pub fn is_error(&self) -> bool {
        self.status == SpanStatus::Error
    }

    /// Checks the per-span invariants.
    pub fn check(&self) -> Result<()> {
        if self.span_id.is_empty() {
            return Err(Error::Schema("span_id must be non-empty".into()));
        }
        if let Some(end) = self.end_time {
            if end < self.start_time {
                return Err(Error::Schema(format!(
                    "span `{}`: end_time_ns {} precedes start_time_ns {}",
                    self.span_id, end, self.start_time
                )));
            }
        }
        if self.parent_span_id.as_deref() == Some(self.span_id.as_str()) {
            return Err(Error::Schema(format!(
                "span `{}` lists itself as parent",
                self.span_id
            )));
        }
        Ok(())
    }

    /// Serializes to one interchange record (no trailing newline).
    pub fn to_record(&self) -> String {
        serde_json::to_string(self).expect("span serialization is infallible")
    }
}

fn required<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| Error::Schema(format!("missing required field `{key}`")))
}

fn required_str(obj: &Map<String, Value>, key: &str) -> Result<String> {
    match required(obj, key)? {
        Value::String(s) => Ok(s.clone()),
        other => Err(Error::parse(key, format!("expected string, found {other}"))),
    }
}

fn optional_str(obj: &Map<String, Value>, key: &str) -> Result<Option<String>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(other) => Err(Error::parse(
            key,
            format!("expected string or null, found {other}"),
        )),
    }
}

fn as_i64(key: &str, v: &Value) -> Result<i64> {
    v.as_i64()
        .ok_or_else(|| Error::parse(key, format!("expected integer nanoseconds, found {v}")))
}

/// Parses one newline-delimited span record. Unknown keys are ignored.
pub fn parse_span_record(line: &str) -> Result<Span> {
    let value: Value =
        serde_json::from_str(line.trim()).map_err(|e| Error::parse("<record>", e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(Error::parse("<record>", "expected a JSON object"));
    };

    // parent_span_id is required but may be null
    let parent_span_id = match required(&obj, "parent_span_id")? {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        other => {
            return Err(Error::parse(
                "parent_span_id",
                format!("expected string or null, found {other}"),
            ))
        }
    };
    let start_time = as_i64("start_time_ns", required(&obj, "start_time_ns")?)?;
    let end_time = match obj.get("end_time_ns") {
        None | Some(Value::Null) => None,
        Some(v) => Some(as_i64("end_time_ns", v)?),
    };
    let status = match optional_str(&obj, "status")?.as_deref() {
        None | Some("ok") => SpanStatus::Ok,
        Some("error") => SpanStatus::Error,
        Some(other) => {
            return Err(Error::parse(
                "status",
                format!("expected \"ok\" or \"error\", found {other:?}"),
            ))
        }
    };

    let span = Span {
        trace_id: required_str(&obj, "trace_id")?,
        span_id: required_str(&obj, "span_id")?,
        parent_span_id,
        op: required_str(&obj, "op")?,
        input: required_str(&obj, "input")?,
        output: required_str(&obj, "output")?,
        start_time,
        end_time,
        status,
        error_type: optional_str(&obj, "error_type")?,
    };
    span.check()?;
    Ok(span)
}

/// Reads every non-blank line of `reader` as a span record. Errors carry the
/// 1-based line number.
pub fn read_spans<R: BufRead>(reader: R) -> Result<Vec<Span>> {
    let mut spans = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let span = parse_span_record(&line).map_err(|e| Error::Trace {
            trace_id: format!("<line {}>", idx + 1),
            source: Box::new(e),
        })?;
        spans.push(span);
    }
    Ok(spans)
}

/// Ground-truth taxonomy for labeled trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundTruthClass {
    Productive,
    Error,
    IntermediateError,
    RedundantStep,
    SilentCycle,
    ErrorCycle,
}

impl GroundTruthClass {
    pub const ALL: [GroundTruthClass; 6] = [
        GroundTruthClass::Productive,
        GroundTruthClass::Error,
        GroundTruthClass::IntermediateError,
        GroundTruthClass::RedundantStep,
        GroundTruthClass::SilentCycle,
        GroundTruthClass::ErrorCycle,
    ];

    /// Binary label: only silent and error cycles are bad cycles.
    pub fn is_bad_cycle(self) -> bool {
        matches!(
            self,
            GroundTruthClass::SilentCycle | GroundTruthClass::ErrorCycle
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GroundTruthClass::Productive => "productive",
            GroundTruthClass::Error => "error",
            GroundTruthClass::IntermediateError => "intermediate_error",
            GroundTruthClass::RedundantStep => "redundant_step",
            GroundTruthClass::SilentCycle => "silent_cycle",
            GroundTruthClass::ErrorCycle => "error_cycle",
        }
    }
}

impl fmt::Display for GroundTruthClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GroundTruthClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GroundTruthClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown class `{s}`")))
    }
}

/// A validated set of spans sharing one trace id.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    trace_id: String,
    spans: Vec<Span>,
    label: Option<GroundTruthClass>,
}

impl Trajectory {
    /// Validates `spans` as one trajectory: shared trace id, unique span ids,
    /// resolvable and acyclic parent links.
    pub fn new(trace_id: impl Into<String>, spans: Vec<Span>) -> Result<Self> {
        let trace_id = trace_id.into();
        validate(&trace_id, &spans)?;
        Ok(Trajectory {
            trace_id,
            spans,
            label: None,
        })
    }

    pub fn with_label(mut self, label: GroundTruthClass) -> Self {
        self.label = Some(label);
        self
    }

    pub fn trace_id(&self) -> &str {
        &self.trace_id
    }

    /// Spans in ingestion order.
    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn label(&self) -> Option<GroundTruthClass> {
        self.label
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn span(&self, span_id: &str) -> Option<&Span> {
        self.spans.iter().find(|s| s.span_id == span_id)
    }

    pub fn roots(&self) -> impl Iterator<Item = &Span> {
        self.spans.iter().filter(|s| s.is_root())
    }

    /// Children grouped by parent span id; `None` is the virtual super-root
    /// whose children are the trajectory's roots. Children are sorted by span id.
    pub fn children_by_parent(&self) -> BTreeMap<Option<&str>, Vec<&Span>> {
        let mut map: BTreeMap<Option<&str>, Vec<&Span>> = BTreeMap::new();
        for span in &self.spans {
            map.entry(span.parent_span_id.as_deref())
                .or_default()
                .push(span);
        }
        for children in map.values_mut() {
            children.sort_by(|a, b| a.span_id.cmp(&b.span_id));
        }
        map
    }
}

fn validate(trace_id: &str, spans: &[Span]) -> Result<()> {
    if spans.is_empty() {
        return Err(Error::validation(trace_id, "trajectory has no spans"));
    }
    let mut ids: HashSet<&str> = HashSet::with_capacity(spans.len());
    for span in spans {
        if span.trace_id != trace_id {
            return Err(Error::validation(
                trace_id,
                format!(
                    "span `{}` belongs to trace `{}`",
                    span.span_id, span.trace_id
                ),
            ));
        }
        span.check()
            .map_err(|e| Error::validation(trace_id, e.to_string()))?;
        if !ids.insert(span.span_id.as_str()) {
            return Err(Error::validation(
                trace_id,
                format!("duplicate span_id `{}`", span.span_id),
            ));
        }
    }

    let mut orphans: Vec<&str> = spans
        .iter()
        .filter(|s| matches!(&s.parent_span_id, Some(p) if !ids.contains(p.as_str())))
        .map(|s| s.span_id.as_str())
        .collect();
    if !orphans.is_empty() {
        orphans.sort_unstable();
        return Err(Error::validation(
            trace_id,
            format!("dangling parent_span_id on spans [{}]", orphans.join(", ")),
        ));
    }

    if let Some(cycle) = find_parent_cycle(spans) {
        return Err(Error::validation(
            trace_id,
            format!("parent-link cycle [{}]", cycle.join(" -> ")),
        ));
    }
    Ok(())
}

/// Walks parent links from every span; returns the first cycle found, listed
/// starting from its smallest span id.
fn find_parent_cycle(spans: &[Span]) -> Option<Vec<String>> {
    let parent: HashMap<&str, Option<&str>> = spans
        .iter()
        .map(|s| (s.span_id.as_str(), s.parent_span_id.as_deref()))
        .collect();
    // 0 = unvisited, 1 = on current path, 2 = known to reach a root
    let mut state: HashMap<&str, u8> = HashMap::with_capacity(spans.len());

    for span in spans {
        let mut path: Vec<&str> = Vec::new();
        let mut cur = Some(span.span_id.as_str());
        while let Some(id) = cur {
            match state.get(id).copied().unwrap_or(0) {
                2 => break,
                1 => {
                    let start = path.iter().position(|p| *p == id).unwrap_or(0);
                    let mut cycle: Vec<String> =
                        path[start..].iter().map(|s| s.to_string()).collect();
                    let min = (0..cycle.len()).min_by_key(|&i| &cycle[i]).unwrap_or(0);
                    cycle.rotate_left(min);
                    return Some(cycle);
                }
                _ => {
                    state.insert(id, 1);
                    path.push(id);
                    cur = parent.get(id).copied().flatten();
                }
            }
        }
        for id in path {
            state.insert(id, 2);
        }
    }
    None
}

/// Groups spans by trace id in first-seen order and validates each group.
/// Each element is either a valid trajectory or the validation error for
/// that trace id.
pub fn assemble_trajectories(spans: Vec<Span>) -> Vec<Result<Trajectory>> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<Span>> = HashMap::new();
    for span in spans {
        if !groups.contains_key(&span.trace_id) {
            order.push(span.trace_id.clone());
        }
        groups.entry(span.trace_id.clone()).or_default().push(span);
    }
    order
        .into_iter()
        .map(|id| {
            let group = groups.remove(&id).unwrap_or_default();
            Trajectory::new(id, group)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span(trace: &str, id: &str, parent: Option<&str>, op: &str, start: i64) -> Span {
        Span {
            trace_id: trace.into(),
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

    #[test]
    fn minimal_root_record() {
        let line = r#"{"trace_id":"t1","span_id":"s1","parent_span_id":null,"op":"supervisor","input":"","output":"","start_time_ns":10}"#;
        let s = parse_span_record(line).unwrap();
        assert!(s.is_root());
        assert_eq!(s.op, "supervisor");
        assert_eq!(s.status, SpanStatus::Ok);
    }

    #[test]
    fn end_before_start_is_schema_error() {
        let line = r#"{"trace_id":"t1","span_id":"s1","parent_span_id":null,"op":"a","input":"","output":"","start_time_ns":10,"end_time_ns":5}"#;
        assert!(matches!(parse_span_record(line), Err(Error::Schema(_))));
    }

    #[test]
    fn error_span_round_trips() {
        let mut s = span("t", "s2", Some("s1"), "internet_search", 7);
        s.status = SpanStatus::Error;
        s.error_type = Some("recursion_limit".into());
        s.end_time = Some(9);
        let back = parse_span_record(&s.to_record()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.error_type.as_deref(), Some("recursion_limit"));
    }

    #[test]
    fn errors_name_the_field() {
        let missing = r#"{"trace_id":"t","span_id":"s","parent_span_id":null,"input":"","output":"","start_time_ns":1}"#;
        match parse_span_record(missing) {
            Err(Error::Schema(msg)) => assert!(msg.contains("`op`")),
            other => panic!("unexpected {other:?}"),
        }
        let bad_type = r#"{"trace_id":"t","span_id":"s","parent_span_id":null,"op":"a","input":"","output":"","start_time_ns":"x"}"#;
        match parse_span_record(bad_type) {
            Err(Error::Parse { field, .. }) => assert_eq!(field, "start_time_ns"),
            other => panic!("unexpected {other:?}"),
        }
        let bad_status = r#"{"trace_id":"t","span_id":"s","parent_span_id":null,"op":"a","input":"","output":"","start_time_ns":1,"status":"meh"}"#;
        assert!(
            matches!(parse_span_record(bad_status), Err(Error::Parse { field, .. }) if field == "status")
        );
        assert!(matches!(
            parse_span_record("[1,2]"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn extra_keys_are_ignored() {
        let line = r#"{"zzz":1,"op":"a","trace_id":"t","span_id":"s","parent_span_id":null,"input":"i","output":"o","start_time_ns":1,"attributes":{"k":"v"}}"#;
        assert_eq!(parse_span_record(line).unwrap().output, "o");
    }

    #[test]
    fn groups_in_first_seen_order() {
        let spans = vec![
            span("b", "s1", None, "x", 1),
            span("a", "s1", None, "x", 1),
            span("b", "s2", Some("s1"), "y", 2),
        ];
        let out: Vec<_> = assemble_trajectories(spans)
            .into_iter()
            .map(|r| r.unwrap())
            .collect();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].trace_id(), "b");
        assert_eq!(out[0].len(), 2);
        assert_eq!(out[1].len(), 1);
    }

    #[test]
    fn dangling_parent_rejected() {
        let spans = vec![
            span("t", "s1", None, "x", 1),
            span("t", "s2", Some("nope"), "y", 2),
        ];
        let err = assemble_trajectories(spans).remove(0).unwrap_err();
        assert!(err.to_string().contains("s2"), "{err}");
    }

    #[test]
    fn two_cycle_rejected() {
        let spans = vec![
            span("t", "r", None, "x", 1),
            span("t", "a", Some("b"), "y", 2),
            span("t", "b", Some("a"), "y", 3),
        ];
        let err = assemble_trajectories(spans).remove(0).unwrap_err();
        assert!(err.to_string().contains("a -> b"), "{err}");
    }

    #[test]
    fn duplicate_span_id_rejected() {
        let spans = vec![span("t", "s1", None, "x", 1), span("t", "s1", None, "y", 2)];
        let err = assemble_trajectories(spans).remove(0).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn multiple_roots_allowed() {
        let t = Trajectory::new(
            "t",
            vec![span("t", "r1", None, "x", 1), span("t", "r2", None, "x", 1)],
        )
        .unwrap();
        assert_eq!(t.roots().count(), 2);
        assert_eq!(t.children_by_parent()[&None].len(), 2);
    }

    #[test]
    fn class_binary_rule() {
        let bad: Vec<_> = GroundTruthClass::ALL
            .into_iter()
            .filter(|c| c.is_bad_cycle())
            .collect();
        assert_eq!(
            bad,
            [GroundTruthClass::SilentCycle, GroundTruthClass::ErrorCycle]
        );
        for c in GroundTruthClass::ALL {
            assert_eq!(c.as_str().parse::<GroundTruthClass>().unwrap(), c);
        }
    }
}
