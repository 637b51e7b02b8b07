//! Composite-task synthesis from a pool of single-answer numeric questions.
//!
//! A random DAG skeleton is filled with pool items. Every non-root subtask
//! has one numeric constant replaced by a placeholder, and an edge from its
//! parameter-parent says how to recover that constant from the parent's
//! answer. A final node combines all subtask answers. All arithmetic on
//! constants and answers is exact decimal arithmetic.

use std::collections::BTreeMap;
use std::ops::Range;
use std::sync::OnceLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::seq::index;
use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::keyed::{derive_seed, keyed_rng};
use crate::task_graph::{DependencyEdge, GraphError, NodeId, SubtaskNode, TaskGraph};

/// Domain label of the final combining node.
pub const AGGREGATION_DOMAIN: &str = "aggregation";
/// Probability of an extra ordering edge between two eligible subtasks.
pub const ORDERING_EDGE_PROBABILITY: f64 = 0.2;
/// Significant-digit budget for multiplicative edge factors.
pub const MAX_FACTOR_DIGITS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("a task needs at least one subtask")]
    InvalidSize,
    #[error("pool has {available} usable items but {needed} are required")]
    PoolTooSmall { needed: usize, available: usize },
    #[error("span {start}..{end} does not cover a numeric literal")]
    SpanMismatch { start: usize, end: usize },
    #[error("value {0} is not a finite decimal")]
    NotDecimal(String),
    #[error("pool line {line}: {message}")]
    PoolParse { line: usize, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// One line of a pool file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolItem {
    pub text: String,
    pub answer: f64,
    pub domain: String,
    pub source_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedConstant {
    pub value: f64,
    /// The literal exactly as written.
    pub literal: String,
    pub start: usize,
    pub end: usize,
}

impl ExtractedConstant {
    pub fn span(&self) -> Range<usize> {
        self.start..self.end
    }
}

/// A pool item that passed constant extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSubtask {
    pub text: String,
    pub answer: f64,
    pub constant: ExtractedConstant,
    pub domain: String,
    pub source_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    pub fn subtasks(self) -> usize {
        match self {
            Difficulty::Easy => 3,
            Difficulty::Medium => 5,
            Difficulty::Hard => 7,
        }
    }

    pub fn from_subtasks(n: usize) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.subtasks() == n)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

/// How the final node combines subtask answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Product,
    Sum,
}

impl std::str::FromStr for Aggregation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "product" => Ok(Self::Product),
            "sum" => Ok(Self::Sum),
            other => Err(format!("unknown aggregation {other:?} (expected product or sum)")),
        }
    }
}

/// One dataset line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub question_text: String,
    pub graph: TaskGraph,
    pub node_truths: BTreeMap<NodeId, f64>,
    pub final_answer: f64,
    #[serde(default)]
    pub difficulty: Option<Difficulty>,
    pub seed: u64,
}

/// Expert description used as the target profile of subtasks in `domain`.
pub fn domain_profile(domain: &str) -> String {
    format!("{domain} expert")
}

// ---------------------------------------------------------------------------
// exact decimals

/// A parsed decimal literal: exact value plus the number of fractional
/// digits needed to write it without an exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct Decimal {
    pub value: BigRational,
    pub scale: u32,
}

fn pow10(e: u32) -> BigInt {
    num_traits::pow(BigInt::from(10u8), e as usize)
}

/// Parses `[-+]digits[.digits][e[-+]digits]` exactly.
pub fn parse_decimal(s: &str) -> Option<Decimal> {
    let s = s.trim();
    let (neg, body) = match s.as_bytes().first()? {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let (mantissa, exp) = match body.find(['e', 'E']) {
        Some(i) => (&body[..i], body[i + 1..].parse::<i64>().ok()?),
        None => (body, 0),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty()
        || !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit())
    {
        return None;
    }
    let digits: BigInt = format!("0{int_part}{frac_part}").parse().ok()?;
    let shift = exp - frac_part.len() as i64;
    if shift.unsigned_abs() > 400 {
        return None;
    }
    let mut value = if shift >= 0 {
        BigRational::from_integer(digits * pow10(shift as u32))
    } else {
        BigRational::new(digits, pow10((-shift) as u32))
    };
    if neg {
        value = -value;
    }
    Some(Decimal { value, scale: (-shift).max(0) as u32 })
}

/// Decimal form of an `f64` as its shortest round-tripping literal.
pub fn decimal_of(x: f64) -> Result<Decimal, SynthError> {
    if !x.is_finite() {
        return Err(SynthError::NotDecimal(x.to_string()));
    }
    parse_decimal(&format!("{x}")).ok_or_else(|| SynthError::NotDecimal(x.to_string()))
}

/// Writes `value` with exactly `scale` fractional digits. `None` if the value
/// needs more digits than that.
pub fn render_decimal(value: &BigRational, scale: u32) -> Option<String> {
    let scaled = value * BigRational::from_integer(pow10(scale));
    if !scaled.is_integer() {
        return None;
    }
    let n = scaled.to_integer();
    let digits = n.abs().to_string();
    let sign = if n.is_negative() { "-" } else { "" };
    if scale == 0 {
        return Some(format!("{sign}{digits}"));
    }
    let padded = format!("{digits:0>width$}", width = scale as usize + 1);
    let (i, f) = padded.split_at(padded.len() - scale as usize);
    Some(format!("{sign}{i}.{f}"))
}

/// Smallest scale at which `value` terminates, if it does at all.
pub fn terminating_scale(value: &BigRational) -> Option<u32> {
    let mut d = value.denom().clone();
    let (two, five) = (BigInt::from(2u8), BigInt::from(5u8));
    let (mut twos, mut fives) = (0u32, 0u32);
    while (&d % &two).is_zero() {
        d /= &two;
        twos += 1;
    }
    while (&d % &five).is_zero() {
        d /= &five;
        fives += 1;
    }
    d.is_one().then_some(twos.max(fives))
}

fn significant_digits(rendered: &str) -> usize {
    rendered.bytes().filter(u8::is_ascii_digit).skip_while(|&b| b == b'0').count()
}

/// Nearest `f64` to an exact terminating decimal.
pub fn to_f64(value: &BigRational) -> f64 {
    match terminating_scale(value).and_then(|s| render_decimal(value, s)) {
        Some(s) => s.parse().unwrap_or(f64::NAN),
        None => value.to_f64().unwrap_or(f64::NAN),
    }
}

// ---------------------------------------------------------------------------
// constant extraction

fn literal_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[-+]?(?:\d+(?:\.\d+)?|\.\d+)(?:[eE][-+]?\d+)?").unwrap())
}

fn prev_char(text: &str, at: usize) -> Option<char> {
    text[..at].chars().next_back()
}

fn next_char(text: &str, at: usize) -> Option<char> {
    text[at..].chars().next()
}

/// Finds the first usable numeric constant in `text`. Literals inside
/// identifiers, exponents and power bases, list markers, thousands groups,
/// years 1900..=2100 and magnitudes outside `[1e-3, 1e6]` are skipped.
pub fn extract_constant(text: &str) -> Option<ExtractedConstant> {
    for m in literal_re().find_iter(text) {
        let (mut start, end) = (m.start(), m.end());
        let before = prev_char(text, start);
        let signed = matches!(text.as_bytes()[start], b'-' | b'+');
        if signed && before.is_some_and(|c| !(c.is_whitespace() || c == '(' || c == '=')) {
            start += 1;
        }
        let lit = &text[start..end];
        let before = prev_char(text, start);
        let after = next_char(text, end);

        if before.is_some_and(|c| c.is_alphanumeric() || c == '_' || c == '^' || c == '.') {
            continue;
        }
        if text[..start].ends_with("^{") || text[..start].ends_with("**") {
            continue;
        }
        if after.is_some_and(|c| c == '^') || text[end..].starts_with("**") {
            continue;
        }
        let is_int = lit.trim_start_matches(['-', '+']).bytes().all(|b| b.is_ascii_digit());
        if before == Some(',') && text[..start].trim_end_matches(',').ends_with(|c: char| c.is_ascii_digit()) {
            continue;
        }
        if after == Some(',') && text[end + 1..].bytes().take(3).filter(u8::is_ascii_digit).count() == 3 {
            continue;
        }
        if is_int && before == Some('[') && after == Some(']') {
            continue;
        }
        let line_start = text[..start].rfind('\n').map_or(0, |i| i + 1);
        let at_line_start = text[line_start..start].trim().is_empty() || text[line_start..start].trim() == "(";
        if is_int && at_line_start && matches!(after, Some('.' | ')')) {
            continue;
        }
        if is_int && lit.len() == 4 && (1900..=2100).contains(&lit.parse::<u32>().unwrap_or(0)) {
            continue;
        }
        let Ok(value) = lit.parse::<f64>() else { continue };
        if !(1e-3..=1e6).contains(&value.abs()) {
            continue;
        }
        return Some(ExtractedConstant { value, literal: lit.to_string(), start, end });
    }
    None
}

/// Keeps pool items that have a usable constant and a finite answer.
pub fn prepare_pool(items: &[PoolItem]) -> Vec<CandidateSubtask> {
    items
        .iter()
        .filter(|it| it.answer.is_finite())
        .filter_map(|it| {
            Some(CandidateSubtask {
                constant: extract_constant(&it.text)?,
                text: it.text.clone(),
                answer: it.answer,
                domain: it.domain.clone(),
                source_id: it.source_id.clone(),
            })
        })
        .collect()
}

pub fn parse_pool(jsonl: &str) -> Result<Vec<PoolItem>, SynthError> {
    jsonl
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| SynthError::PoolParse { line: i + 1, message: e.to_string() })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// DAG skeleton, edges, redaction

/// Graph structure before texts are filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct DagSkeleton {
    pub graph: TaskGraph,
    /// Node -> the node whose answer parameterizes it (absent for node 1).
    pub parameter_parent: BTreeMap<NodeId, NodeId>,
}

/// Nodes `1..=n` plus sink `n + 1`. Node `j >= 2` gets one parameter-parent
/// drawn uniformly from `1..j`; other pairs `i < j` get an ordering edge with
/// probability [`ORDERING_EDGE_PROBABILITY`]; every subtask feeds the sink.
pub fn generate_random_dag(n_subtasks: usize, seed: u64) -> Result<DagSkeleton, SynthError> {
    if n_subtasks == 0 {
        return Err(SynthError::InvalidSize);
    }
    let n = n_subtasks as NodeId;
    let sink = n + 1;
    let mut rng = keyed_rng(seed, "dag", &[&n_subtasks.to_string()]);
    let mut parameter_parent = BTreeMap::new();
    let mut edges = Vec::new();
    for j in 2..=n {
        let p = rng.random_range(1..j);
        parameter_parent.insert(j, p);
        for i in 1..j {
            if i == p || rng.random_bool(ORDERING_EDGE_PROBABILITY) {
                edges.push(DependencyEdge { from: i, to: j, relation_text: String::new() });
            }
        }
    }
    for i in 1..=n {
        edges.push(DependencyEdge { from: i, to: sink, relation_text: String::new() });
    }
    let nodes = (1..=sink)
        .map(|id| SubtaskNode {
            id,
            text: format!("subtask {id}"),
            target_profile: String::new(),
            unknowns: Vec::new(),
            domain: None,
        })
        .collect();
    let graph = TaskGraph { nodes, edges, final_node: sink };
    graph.validate()?;
    Ok(DagSkeleton { graph, parameter_parent })
}

/// Placeholder name of non-root node `id` (node 2 gets `UNK_0`).
pub fn placeholder_for(id: NodeId) -> String {
    format!("UNK_{}", id.saturating_sub(2))
}

/// Relation text recovering constant `c_k` from the upstream answer `a_j`.
/// The additive offset is written at full precision; a multiplicative factor
/// is used only when it terminates within [`MAX_FACTOR_DIGITS`] significant
/// digits and `a_j` is not near zero, otherwise an additive form is drawn.
pub fn build_edge_text(a_j: f64, c_k: &str, unk: &str, upstream: NodeId, seed: u64) -> Result<String, SynthError> {
    let a = decimal_of(a_j)?;
    let c = parse_decimal(c_k).ok_or_else(|| SynthError::NotDecimal(c_k.to_string()))?;
    let mut rng = keyed_rng(seed, "edge", &[unk, &upstream.to_string()]);
    let template: u8 = rng.random_range(0..3);
    let prefix = format!("in this question, {unk} = Answer[{upstream}]");

    if template == 2 && a_j.abs() > 1e-9 {
        let rho = &c.value / &a.value;
        if let Some(s) = terminating_scale(&rho).and_then(|sc| render_decimal(&rho, sc)) {
            if significant_digits(&s) <= MAX_FACTOR_DIGITS {
                return Ok(format!("{prefix} × {s}"));
            }
        }
    }
    let scale = a.scale.max(c.scale);
    let delta = &c.value - &a.value;
    let subtract = if template == 1 { !delta.is_positive() } else { delta.is_negative() };
    let shown = if subtract { -delta } else { delta };
    let rendered = render_decimal(&shown, scale).expect("difference of decimals terminates at the larger scale");
    let rendered = rendered.trim_start_matches('-');
    Ok(format!("{prefix} {} {rendered}", if subtract { '-' } else { '+' }))
}

/// Replaces the literal at `span` with `unk`.
pub fn redact_constants(text: &str, span: Range<usize>, unk: &str) -> Result<String, SynthError> {
    let bad = || SynthError::SpanMismatch { start: span.start, end: span.end };
    let lit = text.get(span.clone()).ok_or_else(bad)?;
    if parse_decimal(lit).is_none() || text.contains(unk) {
        return Err(bad());
    }
    Ok(format!("{}{unk}{}", &text[..span.start], &text[span.end..]))
}

fn exact_aggregate(values: &[f64], agg: Aggregation) -> Result<BigRational, SynthError> {
    let mut acc = match agg {
        Aggregation::Product => BigRational::one(),
        Aggregation::Sum => BigRational::zero(),
    };
    for v in values {
        let d = decimal_of(*v)?.value;
        acc = match agg {
            Aggregation::Product => acc * d,
            Aggregation::Sum => acc + d,
        };
    }
    Ok(acc)
}

fn sink_text(n: NodeId, agg: Aggregation) -> String {
    let (op, word) = match agg {
        Aggregation::Product => (" × ", "product"),
        Aggregation::Sum => (" + ", "sum"),
    };
    let terms: Vec<String> = (1..=n).map(|i| format!("Answer[{i}]")).collect();
    format!("Compute the {word} {} of the answers above and give the final result in \\boxed{{}}.", terms.join(op))
}

/// Builds one composite task from `n_subtasks` distinct pool items.
pub fn synthesize_task(
    pool: &[CandidateSubtask],
    n_subtasks: usize,
    seed: u64,
    aggregation: Aggregation,
) -> Result<SyntheticTask, SynthError> {
    if n_subtasks == 0 {
        return Err(SynthError::InvalidSize);
    }
    if pool.len() < n_subtasks {
        return Err(SynthError::PoolTooSmall { needed: n_subtasks, available: pool.len() });
    }
    let skeleton = generate_random_dag(n_subtasks, seed)?;
    let mut rng = keyed_rng(seed, "sample", &[&n_subtasks.to_string()]);
    let picks: Vec<&CandidateSubtask> =
        index::sample(&mut rng, pool.len(), n_subtasks).into_iter().map(|i| &pool[i]).collect();

    let mut graph = skeleton.graph;
    let sink = graph.final_node;
    let mut node_truths = BTreeMap::new();
    for (node, item) in graph.nodes.iter_mut().zip(&picks) {
        node.domain = Some(item.domain.clone());
        node.target_profile = domain_profile(&item.domain);
        node_truths.insert(node.id, item.answer);
        if let Some(&parent) = skeleton.parameter_parent.get(&node.id) {
            let unk = placeholder_for(node.id);
            node.text = redact_constants(&item.text, item.constant.span(), &unk)?;
            node.unknowns = vec![unk.clone()];
            let relation =
                build_edge_text(picks[parent as usize - 1].answer, &item.constant.literal, &unk, parent, seed)?;
            let edge = graph
                .edges
                .iter_mut()
                .find(|e| e.from == parent && e.to == node.id)
                .expect("skeleton has the parameter edge");
            edge.relation_text = relation;
        } else {
            node.text = item.text.clone();
        }
    }
    let subtask_truths: Vec<f64> = picks.iter().map(|p| p.answer).collect();
    let final_answer = to_f64(&exact_aggregate(&subtask_truths, aggregation)?);
    let sink_node = graph.nodes.iter_mut().find(|n| n.id == sink).expect("sink exists");
    sink_node.text = sink_text(n_subtasks as NodeId, aggregation);
    sink_node.domain = Some(AGGREGATION_DOMAIN.to_string());
    sink_node.target_profile = domain_profile(AGGREGATION_DOMAIN);
    node_truths.insert(sink, final_answer);
    graph.validate()?;

    let question_text = render_question(&graph)?;
    Ok(SyntheticTask {
        question_text,
        graph,
        node_truths,
        final_answer,
        difficulty: Difficulty::from_subtasks(n_subtasks),
        seed,
    })
}

/// The whole graph as one natural-language question, in topological order.
pub fn render_question(graph: &TaskGraph) -> Result<String, SynthError> {
    let mut out =
        String::from("Solve the following connected problems in order. Answer[i] denotes the answer to problem i.\n");
    for id in graph.topological_order()? {
        let node = graph.node(id).expect("ordered ids exist");
        out.push_str(&format!("\nProblem {id}: {}", node.text));
        let relations: Vec<&str> =
            graph.incoming(id).into_iter().map(|e| e.relation_text.as_str()).filter(|r| !r.is_empty()).collect();
        if !relations.is_empty() {
            out.push_str(&format!("\nWhere: {}", relations.join("; ")));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Requested number of tasks per difficulty.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifficultyCounts {
    pub easy: usize,
    pub medium: usize,
    pub hard: usize,
}

impl DifficultyCounts {
    pub fn total(&self) -> usize {
        self.easy + self.medium + self.hard
    }

    fn plan(&self) -> impl Iterator<Item = Difficulty> + '_ {
        std::iter::repeat_n(Difficulty::Easy, self.easy)
            .chain(std::iter::repeat_n(Difficulty::Medium, self.medium))
            .chain(std::iter::repeat_n(Difficulty::Hard, self.hard))
    }
}

/// Tasks in order easy, medium, hard; line `i` uses a seed derived from
/// `(seed, i)` so lines are independent of each other.
pub fn synthesize_tasks(
    pool: &[CandidateSubtask],
    counts: DifficultyCounts,
    seed: u64,
    aggregation: Aggregation,
) -> Result<Vec<SyntheticTask>, SynthError> {
    if let Some(needed) = counts.plan().map(Difficulty::subtasks).max() {
        if pool.len() < needed {
            return Err(SynthError::PoolTooSmall { needed, available: pool.len() });
        }
    }
    counts
        .plan()
        .enumerate()
        .map(|(i, d)| synthesize_task(pool, d.subtasks(), derive_seed(seed, "dataset-line", i as u64), aggregation))
        .collect()
}

/// JSON-lines dataset text.
pub fn synthesize_dataset(
    pool: &[CandidateSubtask],
    counts: DifficultyCounts,
    seed: u64,
    aggregation: Aggregation,
) -> Result<String, SynthError> {
    let tasks = synthesize_tasks(pool, counts, seed, aggregation)?;
    Ok(to_jsonl(&tasks))
}

pub fn to_jsonl(tasks: &[SyntheticTask]) -> String {
    tasks.iter().map(|t| serde_json::to_string(t).expect("tasks serialize") + "\n").collect()
}

pub fn parse_dataset(jsonl: &str) -> Result<Vec<SyntheticTask>, SynthError> {
    jsonl
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let task: SyntheticTask =
                serde_json::from_str(l).map_err(|e| SynthError::PoolParse { line: i + 1, message: e.to_string() })?;
            task.graph.validate()?;
            Ok(task)
        })
        .collect()
}
