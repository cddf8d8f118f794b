//! Seeded generator for labeled agent trajectories.
//!
//! Each ground-truth class has a template family. Templates are filled with
//! random tickers and words, then checked against the class contract; a
//! candidate that misses its contract is discarded and redrawn from the same
//! RNG stream, so output stays deterministic for a given seed.
//!
//! Class contracts (cosines are measured with the built-in embedder):
//!
//! * `productive`: depth within bounds, no op more than twice under one parent,
//!   no repeated op window of length 3, every pair of outputs below 0.6.
//! * `error`: at least one error span, empty root output.
//! * `intermediate_error`: an error span and a later successful sibling retry
//!   with a different output, non-empty root output.
//! * `redundant_step`: one extra tool call whose output is related to its
//!   sibling (cosine in [0.3, 0.68]), no repeated op window of length 3. The
//!   `hard_timeseries` variant instead issues two time-series calls whose JSON
//!   outputs look alike even though the numbers differ.
//! * `silent_cycle`: one parent with `r` same-op children whose outputs are
//!   perturbed copies (cosine > 0.9 when noise <= 0.02), repeating a template of
//!   at least three ops `r` times.
//! * `error_cycle`: `r` repetitions of a multi-span template, then an error span
//!   with error type `recursion_limit`.

mod content;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::semantic::{builtin_embed, cosine, EmbeddingVector, DEFAULT_DIMENSION};
use crate::trace_model::{GroundTruthClass, Span, SpanStatus, Trajectory};

use content::*;

pub type GeneratorRng = Xoshiro256PlusPlus;

pub const PRODUCTIVE_MAX_COSINE: f64 = 0.6;
pub const REDUNDANT_BAND: (f64, f64) = (0.3, 0.68);
pub const NEAR_DUPLICATE_MIN_COSINE: f64 = 0.9;
/// Noise level up to which near-duplicate cosine is enforced.
pub const NEAR_DUPLICATE_MAX_NOISE: f64 = 0.02;

const MAX_ATTEMPTS: usize = 10_000;
const EPOCH_2024_NS: i64 = 1_704_067_200_000_000_000;
const MS: i64 = 1_000_000;

pub fn default_vocab() -> Vec<String> {
    [
        "supervisor",
        "search_agent",
        "stock_agent",
        "internet_search",
        "yf_price",
        "yf_timeseries",
        "llm_call",
    ]
    .map(String::from)
    .to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub counts: BTreeMap<GroundTruthClass, usize>,
    /// Root, search agent, stock agent, search tool, price tool, time-series
    /// tool, LLM call, in that order.
    pub agent_vocab: Vec<String>,
    pub noise: f64,
    pub depth: usize,
    pub repeat_range: (usize, usize),
    /// Share of redundant_step trajectories using the time-series variant.
    pub hard_timeseries_percent: u32,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec::per_class(42, 100)
    }
}

impl GeneratorSpec {
    pub fn per_class(seed: u64, n: usize) -> Self {
        GeneratorSpec {
            seed,
            counts: GroundTruthClass::ALL.into_iter().map(|c| (c, n)).collect(),
            agent_vocab: default_vocab(),
            noise: 0.02,
            depth: 4,
            repeat_range: (3, 6),
            hard_timeseries_percent: 50,
        }
    }

    pub fn only(seed: u64, class: GroundTruthClass, n: usize) -> Self {
        let mut spec = GeneratorSpec::per_class(seed, 0);
        spec.counts.insert(class, n);
        spec
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.total() == 0 {
            return Err(Error::Config("generator counts sum to zero".into()));
        }
        let (lo, hi) = self.repeat_range;
        if lo < 3 || hi < lo {
            return Err(Error::Config(format!(
                "repeat_range must satisfy 3 <= min <= max, got {lo}..{hi}"
            )));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return Err(Error::Config(format!(
                "noise must be in [0, 1), got {}",
                self.noise
            )));
        }
        if self.depth < 3 {
            return Err(Error::Config(format!(
                "depth must be >= 3, got {}",
                self.depth
            )));
        }
        if self.hard_timeseries_percent > 100 {
            return Err(Error::Config(
                "hard_timeseries_percent must be <= 100".into(),
            ));
        }
        let mut vocab = self.agent_vocab.clone();
        vocab.sort();
        vocab.dedup();
        if self.agent_vocab.len() != 7 || vocab.len() != 7 || vocab.iter().any(String::is_empty) {
            return Err(Error::Config(
                "agent_vocab needs 7 distinct non-empty op names".into(),
            ));
        }
        Ok(())
    }
}

/// A generated trajectory and the template variant that produced it.
#[derive(Debug, Clone)]
pub struct Generated {
    pub trajectory: Trajectory,
    pub variant: &'static str,
}

/// Op names by role.
struct Roles<'a> {
    root: &'a str,
    search_agent: &'a str,
    stock_agent: &'a str,
    search_tool: &'a str,
    price_tool: &'a str,
    ts_tool: &'a str,
    llm: &'a str,
}

impl<'a> Roles<'a> {
    fn new(vocab: &'a [String]) -> Self {
        Roles {
            root: &vocab[0],
            search_agent: &vocab[1],
            stock_agent: &vocab[2],
            search_tool: &vocab[3],
            price_tool: &vocab[4],
            ts_tool: &vocab[5],
            llm: &vocab[6],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: String,
    input: String,
    output: String,
    error: Option<&'static str>,
    children: Vec<Node>,
}

impl Node {
    fn new(op: &str, input: String, output: String) -> Self {
        Node {
            op: op.to_string(),
            input,
            output,
            error: None,
            children: Vec::new(),
        }
    }

    fn failed(mut self, error_type: &'static str) -> Self {
        self.error = Some(error_type);
        self.output.clear();
        self
    }

    fn with(mut self, children: Vec<Node>) -> Self {
        self.children = children;
        self
    }

    fn depth(&self) -> usize {
        1 + self.children.iter().map(Node::depth).max().unwrap_or(0)
    }

    fn preorder<'n>(&'n self, out: &mut Vec<&'n Node>) {
        out.push(self);
        for c in &self.children {
            c.preorder(out);
        }
    }

    fn ops(&self) -> Vec<&str> {
        let mut nodes = Vec::new();
        self.preorder(&mut nodes);
        nodes.iter().map(|n| n.op.as_str()).collect()
    }

    fn outputs(&self) -> Vec<&str> {
        let mut nodes = Vec::new();
        self.preorder(&mut nodes);
        nodes
            .iter()
            .map(|n| n.output.as_str())
            .filter(|o| !o.is_empty())
            .collect()
    }

    fn max_same_op_children(&self) -> usize {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for c in &self.children {
            *counts.entry(c.op.as_str()).or_default() += 1;
        }
        counts
            .into_values()
            .chain(self.children.iter().map(Node::max_same_op_children))
            .max()
            .unwrap_or(0)
    }
}

/// True when some window of `len` consecutive ops occurs more than once.
pub fn has_repeated_window<S: AsRef<str>>(ops: &[S], len: usize) -> bool {
    let mut seen = std::collections::HashSet::new();
    ops.windows(len)
        .any(|w| !seen.insert(w.iter().map(AsRef::as_ref).collect::<Vec<&str>>()))
}

fn embed(text: &str) -> EmbeddingVector {
    builtin_embed(text, DEFAULT_DIMENSION)
}

fn sim(a: &str, b: &str) -> f64 {
    cosine(&embed(a), &embed(b)).unwrap_or(0.0)
}

/// Largest pairwise cosine among non-empty texts (0 for fewer than two).
pub fn max_pairwise_cosine(texts: &[&str]) -> f64 {
    let vecs: Vec<_> = texts
        .iter()
        .map(|t| embed(t))
        .filter(|v| !v.is_zero())
        .collect();
    let mut best = 0.0f64;
    for (i, u) in vecs.iter().enumerate() {
        for v in &vecs[i + 1..] {
            best = best.max(cosine(u, v).unwrap_or(0.0));
        }
    }
    best
}

/// Smallest pairwise cosine among texts (1 for fewer than two).
fn min_pairwise_cosine(texts: &[&str]) -> f64 {
    let vecs: Vec<_> = texts.iter().map(|t| embed(t)).collect();
    let mut worst = 1.0f64;
    for (i, u) in vecs.iter().enumerate() {
        for v in &vecs[i + 1..] {
            worst = worst.min(cosine(u, v).unwrap_or(0.0));
        }
    }
    worst
}

struct Builder<'a, R> {
    rng: &'a mut R,
    spec: &'a GeneratorSpec,
    roles: Roles<'a>,
}

impl<'a, R: Rng> Builder<'a, R> {
    fn coin(&mut self, percent: u32) -> bool {
        self.rng.gen_range(0..100) < percent
    }

    fn repeats(&mut self) -> usize {
        let (lo, hi) = self.spec.repeat_range;
        self.rng.gen_range(lo..=hi)
    }

    fn search_tool(&mut self, ticker: &str, company: &str, allow_child: bool) -> Node {
        let q = search_query(self.rng, company);
        let out = news_snippet(self.rng, ticker, company);
        let mut node = Node::new(self.roles.search_tool, q, out);
        if allow_child && self.spec.depth >= 4 && self.coin(30) {
            let s = summary(self.rng, ticker);
            node.children
                .push(Node::new(self.roles.llm, "summarize results".into(), s));
        }
        node
    }

    fn price_tool(&mut self, ticker: &str) -> Node {
        let out = price_quote(self.rng, ticker);
        Node::new(self.roles.price_tool, ticker.to_string(), out)
    }

    fn ts_tool(&mut self, ticker: &str, month: u32) -> Node {
        let days = self.rng.gen_range(12..=20);
        let out = timeseries_json(self.rng, ticker, month, days);
        Node::new(self.roles.ts_tool, format!("{ticker} daily"), out)
    }

    fn llm(&mut self, ticker: &str) -> Node {
        let out = summary(self.rng, ticker);
        Node::new(self.roles.llm, format!("analyze {ticker}"), out)
    }

    /// A healthy agent subtree with 2..=5 calls, each op at most twice.
    fn agent(&mut self, stock: bool, ticker: &str, company: &str, allow_ts: &mut bool) -> Node {
        let mut children = Vec::new();
        loop {
            if stock {
                for _ in 0..self.rng.gen_range(0..=2) {
                    children.push(self.price_tool(ticker));
                }
                if *allow_ts && self.coin(30) {
                    *allow_ts = false;
                    let month = self.rng.gen_range(1..=12);
                    children.push(self.ts_tool(ticker, month));
                }
            } else {
                for _ in 0..self.rng.gen_range(0..=2) {
                    children.push(self.search_tool(ticker, company, true));
                }
            }
            for _ in 0..self.rng.gen_range(0..=1) {
                children.push(self.llm(ticker));
            }
            if children.len() >= 2 {
                break;
            }
        }
        children.shuffle(self.rng);
        let op = if stock {
            self.roles.stock_agent
        } else {
            self.roles.search_agent
        };
        let task = agent_task(self.rng, op, ticker);
        let report = agent_report(self.rng, op, ticker);
        Node::new(op, task, report).with(children)
    }

    fn root(&mut self, ticker: &str, output: String, children: Vec<Node>) -> Node {
        let prompt = user_prompt(self.rng, ticker);
        Node::new(self.roles.root, prompt, output).with(children)
    }

    fn productive(&mut self) -> (Node, &'static str) {
        let (ticker, company) = pick_ticker(self.rng);
        let mut pool = [false, false, true, true];
        pool.shuffle(self.rng);
        let n_agents = self.rng.gen_range(2..=4);
        let mut allow_ts = true;
        let agents = pool[..n_agents]
            .iter()
            .map(|&stock| self.agent(stock, ticker, company, &mut allow_ts))
            .collect();
        let answer = final_answer(self.rng, ticker);
        (self.root(ticker, answer, agents), "standard")
    }

    fn error(&mut self) -> (Node, &'static str) {
        let (ticker, company) = pick_ticker(self.rng);
        let mut children = Vec::new();
        let mut allow_ts = true;
        for _ in 0..self.rng.gen_range(1..=2) {
            let stock = self.coin(50);
            children.push(self.agent(stock, ticker, company, &mut allow_ts));
        }
        let error_type = *["tool_timeout", "rate_limited", "http_500", "invalid_ticker"]
            .choose(self.rng)
            .expect("non-empty");
        let failing = if self.coin(50) {
            let tool = self.price_tool(ticker).failed(error_type);
            let task = agent_task(self.rng, self.roles.stock_agent, ticker);
            Node::new(self.roles.stock_agent, task, String::new())
                .failed(error_type)
                .with(vec![tool])
        } else {
            let tool = self.search_tool(ticker, company, false).failed(error_type);
            let task = agent_task(self.rng, self.roles.search_agent, ticker);
            Node::new(self.roles.search_agent, task, String::new())
                .failed(error_type)
                .with(vec![tool])
        };
        children.push(failing);
        (
            self.root(ticker, String::new(), children)
                .failed(error_type),
            "standard",
        )
    }

    fn intermediate_error(&mut self) -> (Node, &'static str) {
        let (ticker, company) = pick_ticker(self.rng);
        let mut allow_ts = true;
        let mut children = Vec::new();
        let variant;
        if self.coin(40) {
            // whole agent subtree fails, then is rerun successfully
            variant = "agent_retry";
            let search = |b: &mut Self| {
                let tool = b.search_tool(ticker, company, false);
                let llm = b.llm(ticker);
                let task = agent_task(b.rng, b.roles.search_agent, ticker);
                let report = agent_report(b.rng, b.roles.search_agent, ticker);
                Node::new(b.roles.search_agent, task, report).with(vec![tool, llm])
            };
            let mut first = search(self);
            first.children[1] = first.children[1].clone().failed("output_parse_error");
            let first = first.failed("output_parse_error");
            let retry = search(self);
            children.push(first);
            children.push(retry);
            if self.coin(50) {
                children.push(self.agent(true, ticker, company, &mut allow_ts));
            }
        } else {
            // a single tool call fails and is retried in place
            variant = "tool_retry";
            let (failed, retry, op) = if self.coin(50) {
                (
                    self.price_tool(ticker),
                    self.price_tool(ticker),
                    self.roles.stock_agent,
                )
            } else {
                (
                    self.search_tool(ticker, company, false),
                    self.search_tool(ticker, company, false),
                    self.roles.search_agent,
                )
            };
            let error_type = *["tool_timeout", "rate_limited", "http_500"]
                .choose(self.rng)
                .expect("non-empty");
            let mut tools = vec![failed.failed(error_type), retry];
            if self.coin(50) {
                tools.push(self.llm(ticker));
            }
            let task = agent_task(self.rng, op, ticker);
            let report = agent_report(self.rng, op, ticker);
            let agent = Node::new(op, task, report).with(tools);
            let stock_other = op == self.roles.search_agent;
            let other = self.agent(stock_other, ticker, company, &mut allow_ts);
            children.push(agent);
            children.push(other);
            children.shuffle(self.rng);
        }
        let answer = final_answer(self.rng, ticker);
        (self.root(ticker, answer, children), variant)
    }

    fn redundant_step(&mut self) -> (Node, &'static str) {
        let (ticker, company) = pick_ticker(self.rng);
        let hard = self.coin(self.spec.hard_timeseries_percent);
        let mut allow_ts = false;
        let (extra_agent, variant) = if hard {
            let month = self.rng.gen_range(1..=12);
            let (other, _) = other_ticker(self.rng, ticker);
            let mut tools = vec![self.ts_tool(ticker, month), self.ts_tool(other, month)];
            if self.coin(50) {
                tools.push(self.llm(ticker));
            }
            let task = agent_task(self.rng, self.roles.stock_agent, ticker);
            let report = agent_report(self.rng, self.roles.stock_agent, ticker);
            (
                Node::new(self.roles.stock_agent, task, report).with(tools),
                "hard_timeseries",
            )
        } else {
            let first = self.search_tool(ticker, company, false);
            let mut second = String::new();
            for _ in 0..200 {
                second = self.related_snippet(&first.output, ticker, company);
                if in_band(sim(&first.output, &second)) {
                    break;
                }
            }
            let q = search_query(self.rng, company);
            let mut tools = vec![first, Node::new(self.roles.search_tool, q, second)];
            if self.coin(50) {
                tools.push(self.llm(ticker));
            }
            let task = agent_task(self.rng, self.roles.search_agent, ticker);
            let report = agent_report(self.rng, self.roles.search_agent, ticker);
            (
                Node::new(self.roles.search_agent, task, report).with(tools),
                "standard",
            )
        };
        let other = self.agent(hard, ticker, company, &mut allow_ts);
        let mut children = vec![extra_agent, other];
        children.shuffle(self.rng);
        let answer = final_answer(self.rng, ticker);
        (self.root(ticker, answer, children), variant)
    }

    /// Same company and lead words as `base`, fresh body.
    fn related_snippet(&mut self, base: &str, ticker: &str, company: &str) -> String {
        let lead: Vec<&str> = base.split(". ").next().unwrap_or(base).split(' ').collect();
        let keep = self.rng.gen_range(2..=lead.len().max(2));
        let mut out = lead[..keep.min(lead.len())].join(" ");
        if !out.contains(ticker) {
            out = format!("{company} ({ticker}) {out}");
        }
        format!("{out} {}. {}.", words(self.rng, 3), words(self.rng, 6))
    }

    /// `r` near-duplicate agent subtrees under the root. Returns the loop nodes
    /// and the variant name.
    fn loop_body(&mut self, ticker: &str, company: &str, r: usize) -> (Vec<Node>, &'static str) {
        let noise = self.spec.noise;
        if self.coin(20) {
            // one agent re-invoking the same tool triple
            let mut tools = Vec::new();
            let price = self.price_tool(ticker);
            let month = self.rng.gen_range(1..=12);
            let series = self.ts_tool(ticker, month);
            let llm = self.llm(ticker);
            for _ in 0..r {
                for base in [&price, &series, &llm] {
                    let out = perturb(self.rng, &base.output, noise);
                    tools.push(Node::new(&base.op, base.input.clone(), out));
                }
            }
            let task = agent_task(self.rng, self.roles.stock_agent, ticker);
            let report = agent_report(self.rng, self.roles.stock_agent, ticker);
            let agent = Node::new(self.roles.stock_agent, task, report).with(tools);
            return (vec![agent], "tool_loop");
        }
        let stock = self.coin(50);
        let (op, tool) = if stock {
            (self.roles.stock_agent, self.price_tool(ticker))
        } else {
            (
                self.roles.search_agent,
                self.search_tool(ticker, company, false),
            )
        };
        let llm = self.llm(ticker);
        let task = agent_task(self.rng, op, ticker);
        let report = agent_report(self.rng, op, ticker);
        // each iteration re-runs the agent: same tool call, same LLM read of its result
        let body = (0..r)
            .map(|_| {
                let read = Node::new(
                    &llm.op,
                    llm.input.clone(),
                    perturb(self.rng, &llm.output, noise),
                );
                let call = Node::new(
                    &tool.op,
                    tool.input.clone(),
                    perturb(self.rng, &tool.output, noise),
                )
                .with(vec![read]);
                Node::new(op, task.clone(), perturb(self.rng, &report, noise)).with(vec![call])
            })
            .collect();
        (body, "agent_loop")
    }

    fn cyclic(&mut self, terminated: bool) -> (Node, &'static str) {
        let (ticker, company) = pick_ticker(self.rng);
        let r = self.repeats();
        let mut children = Vec::new();
        let mut allow_ts = true;
        if self.coin(50) {
            let stock = self.coin(50);
            children.push(self.agent(stock, ticker, company, &mut allow_ts));
        }
        let (body, variant) = self.loop_body(ticker, company, r);
        let loop_op = body[0].op.clone();
        children.extend(body);
        if terminated {
            let task = agent_task(self.rng, &loop_op, ticker);
            children.push(Node::new(&loop_op, task, String::new()).failed("recursion_limit"));
            (
                self.root(ticker, String::new(), children)
                    .failed("recursion_limit"),
                variant,
            )
        } else {
            let answer = final_answer(self.rng, ticker);
            (self.root(ticker, answer, children), variant)
        }
    }
}

fn in_band(similarity: f64) -> bool {
    (REDUNDANT_BAND.0..=REDUNDANT_BAND.1).contains(&similarity)
}

/// The duplicated search-tool call and its sibling are related but distinct.
fn redundant_pair_in_band(root: &Node, search_tool: &str) -> bool {
    root.children.iter().any(|agent| {
        let outs: Vec<&str> = agent
            .children
            .iter()
            .filter(|c| c.op == search_tool)
            .map(|c| c.output.as_str())
            .collect();
        outs.len() == 2 && in_band(sim(outs[0], outs[1]))
    })
}

/// Outputs of the repeated loop siblings (same parent, same op, at least three).
fn loop_sibling_outputs(root: &Node) -> Vec<Vec<&str>> {
    let mut nodes = Vec::new();
    root.preorder(&mut nodes);
    let mut groups = Vec::new();
    for n in nodes {
        let mut by_op: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for c in &n.children {
            if !c.output.is_empty() {
                by_op
                    .entry(c.op.as_str())
                    .or_default()
                    .push(c.output.as_str());
            }
        }
        groups.extend(by_op.into_values().filter(|g| g.len() >= 3));
    }
    groups
}

fn satisfies_contract(
    class: GroundTruthClass,
    root: &Node,
    spec: &GeneratorSpec,
    variant: &str,
) -> bool {
    let ops = root.ops();
    match class {
        GroundTruthClass::Productive => {
            root.depth() <= spec.depth
                && root.max_same_op_children() <= 2
                && !has_repeated_window(&ops, 3)
                && max_pairwise_cosine(&root.outputs()) < PRODUCTIVE_MAX_COSINE
        }
        GroundTruthClass::Error => !has_repeated_window(&ops, 3),
        GroundTruthClass::IntermediateError => {
            variant == "agent_retry" || !has_repeated_window(&ops, 3)
        }
        GroundTruthClass::RedundantStep => {
            root.depth() <= spec.depth
                && !has_repeated_window(&ops, 3)
                && (variant != "standard" || redundant_pair_in_band(root, &spec.agent_vocab[3]))
        }
        GroundTruthClass::SilentCycle | GroundTruthClass::ErrorCycle => {
            spec.noise > NEAR_DUPLICATE_MAX_NOISE
                || loop_sibling_outputs(root)
                    .iter()
                    .all(|g| min_pairwise_cosine(g) > NEAR_DUPLICATE_MIN_COSINE)
        }
    }
}

/// Flattens the tree in preorder, assigning span ids and strictly increasing
/// start times.
fn flatten<R: Rng>(root: &Node, trace_id: &str, rng: &mut R) -> Vec<Span> {
    fn walk<R: Rng>(
        node: &Node,
        parent: Option<&str>,
        trace_id: &str,
        clock: &mut i64,
        rng: &mut R,
        out: &mut Vec<Span>,
    ) -> i64 {
        let idx = out.len();
        let span_id = format!("s{idx:03}");
        let start = *clock;
        *clock += rng.gen_range(1..=40) * MS;
        out.push(Span {
            trace_id: trace_id.to_string(),
            span_id: span_id.clone(),
            parent_span_id: parent.map(str::to_string),
            op: node.op.clone(),
            input: node.input.clone(),
            output: node.output.clone(),
            start_time: start,
            end_time: None,
            status: if node.error.is_some() {
                SpanStatus::Error
            } else {
                SpanStatus::Ok
            },
            error_type: node.error.map(str::to_string),
        });
        let mut end = start + rng.gen_range(5..=400) * MS;
        for child in &node.children {
            let child_end = walk(child, Some(&span_id), trace_id, clock, rng, out);
            end = end.max(child_end + rng.gen_range(1..=20) * MS);
            *clock = (*clock).max(child_end + MS);
        }
        out[idx].end_time = Some(end);
        end
    }

    let mut clock = EPOCH_2024_NS + rng.gen_range(0..30 * 86_400) * 1_000_000_000;
    let mut spans = Vec::new();
    walk(root, None, trace_id, &mut clock, rng, &mut spans);
    spans
}

/// Draws one trajectory of `class` from `rng`.
pub fn generate_trajectory<R: Rng>(
    class: GroundTruthClass,
    rng: &mut R,
    spec: &GeneratorSpec,
    trace_id: &str,
) -> Result<Generated> {
    spec.validate()?;
    let mut builder = Builder {
        rng,
        spec,
        roles: Roles::new(&spec.agent_vocab),
    };
    for _ in 0..MAX_ATTEMPTS {
        let (root, variant) = match class {
            GroundTruthClass::Productive => builder.productive(),
            GroundTruthClass::Error => builder.error(),
            GroundTruthClass::IntermediateError => builder.intermediate_error(),
            GroundTruthClass::RedundantStep => builder.redundant_step(),
            GroundTruthClass::SilentCycle => builder.cyclic(false),
            GroundTruthClass::ErrorCycle => builder.cyclic(true),
        };
        if satisfies_contract(class, &root, spec, variant) {
            let spans = flatten(&root, trace_id, builder.rng);
            let trajectory = Trajectory::new(trace_id, spans)?.with_label(class);
            return Ok(Generated {
                trajectory,
                variant,
            });
        }
    }
    Err(Error::Domain(format!(
        "could not satisfy the {class} contract after {MAX_ATTEMPTS} attempts"
    )))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: GeneratorSpec,
    pub counts: BTreeMap<GroundTruthClass, usize>,
    pub labels: BTreeMap<String, GroundTruthClass>,
    #[serde(default)]
    pub variants: BTreeMap<String, String>,
    #[serde(default)]
    pub cosine_bands: BTreeMap<String, Vec<f64>>,
}

impl Manifest {
    /// trace id -> 1 for bad cycles, 0 otherwise.
    pub fn binary_truth(&self) -> BTreeMap<String, u8> {
        self.labels
            .iter()
            .map(|(id, c)| (id.clone(), u8::from(c.is_bad_cycle())))
            .collect()
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub trajectories: Vec<Trajectory>,
    pub manifest: Manifest,
}

/// Generates the full corpus described by `spec`. Classes are interleaved in a
/// seeded shuffle; trace ids are `tr00000`, `tr00001`, ...
pub fn generate_corpus(spec: &GeneratorSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = GeneratorRng::seed_from_u64(spec.seed);
    let mut jobs: Vec<GroundTruthClass> = spec
        .counts
        .iter()
        .flat_map(|(&c, &n)| std::iter::repeat_n(c, n))
        .collect();
    jobs.shuffle(&mut rng);

    let mut trajectories = Vec::with_capacity(jobs.len());
    let mut labels = BTreeMap::new();
    let mut variants = BTreeMap::new();
    for (i, class) in jobs.into_iter().enumerate() {
        let trace_id = format!("tr{i:05}");
        let g = generate_trajectory(class, &mut rng, spec, &trace_id)?;
        labels.insert(trace_id.clone(), class);
        variants.insert(trace_id, g.variant.to_string());
        trajectories.push(g.trajectory);
    }
    let cosine_bands = BTreeMap::from([
        ("productive_max".to_string(), vec![PRODUCTIVE_MAX_COSINE]),
        (
            "redundant_step".to_string(),
            vec![REDUNDANT_BAND.0, REDUNDANT_BAND.1],
        ),
        (
            "silent_cycle_min".to_string(),
            vec![NEAR_DUPLICATE_MIN_COSINE],
        ),
    ]);
    let counts = GroundTruthClass::ALL
        .into_iter()
        .map(|c| (c, spec.counts.get(&c).copied().unwrap_or(0)))
        .collect();
    Ok(Corpus {
        trajectories,
        manifest: Manifest {
            spec: spec.clone(),
            counts,
            labels,
            variants,
            cosine_bands,
        },
    })
}

/// Writes spans as newline-delimited records.
pub fn write_corpus<W: Write>(trajectories: &[Trajectory], mut w: W) -> Result<()> {
    for t in trajectories {
        for s in t.spans() {
            writeln!(w, "{}", s.to_record())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_corpus_files(corpus: &Corpus, corpus_path: &Path, manifest_path: &Path) -> Result<()> {
    write_corpus(
        &corpus.trajectories,
        BufWriter::new(File::create(corpus_path)?),
    )?;
    let mut json =
        serde_json::to_string_pretty(&corpus.manifest).map_err(|e| Error::Domain(e.to_string()))?;
    json.push('\n');
    std::fs::write(manifest_path, json)?;
    Ok(())
}
