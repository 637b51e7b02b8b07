//! Training and inference pipelines, plus grading of results files.
//!
//! A task is solved frontier by frontier. Every node of a frontier is
//! matched against the database as it stood when the frontier started, the
//! nodes run concurrently, and training updates are applied afterwards in
//! ascending node id (then candidate order). Results therefore do not depend
//! on how many nodes run at once.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent_db::{AgentDb, DbError, SelectionParams};
use crate::backends::decompose::Decomposer;
use crate::backends::embed::Embedder;
use crate::backends::{AgentBackend, BackendError, SimReference};
use crate::keyed::derive_seed;
use crate::reward::{within_tolerance, RewardModel, DEFAULT_REL_TOLERANCE};
use crate::selection::{
    coarse_select, execute_in_order, fine_select_inference, fine_select_training, random_candidates, CandidateSet,
    NodeJob, SelectionError, SelectionOutcome, SelectionStrategy,
};
use crate::synthesis::{Difficulty, SyntheticTask};
use crate::task_graph::{NodeAnswer, NodeId, SubtaskNode, TaskGraph};

/// Window of the rolling accuracy column of the training curve.
pub const CURVE_WINDOW: usize = 50;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Db(#[from] DbError),
    #[error("embedding failed: {0}")]
    Embedding(BackendError),
    #[error("result for task {task_id} does not match the dataset")]
    IdMismatch { task_id: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Train,
    Infer,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CrmKind {
    Rule,
    Model,
    #[default]
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Llm,
    #[default]
    Simulated,
}

/// Which text of a subtask is embedded for matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TaskText {
    /// The subtask's target profile, falling back to its text when empty.
    #[default]
    TargetProfile,
    SubtaskText,
}

macro_rules! from_str_via_serde {
    ($($t:ty),*) => {$(
        impl std::str::FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                serde_json::from_value(serde_json::Value::String(s.to_string()))
                    .map_err(|_| format!("invalid value {s:?}"))
            }
        }
    )*};
}
from_str_via_serde!(Mode, CrmKind, BackendKind, TaskText);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub params: SelectionParams,
    pub crm: CrmKind,
    pub backend: BackendKind,
    pub seed: u64,
    pub max_parallel_nodes: usize,
    pub strategy: SelectionStrategy,
    /// Use the dataset's own graph instead of calling the decomposer.
    pub stored_graphs: bool,
    pub task_text: TaskText,
    /// Relative tolerance for grading the final answer.
    pub rel_tolerance: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Train,
            params: SelectionParams::default(),
            crm: CrmKind::Oracle,
            backend: BackendKind::Simulated,
            seed: 0,
            max_parallel_nodes: 1,
            strategy: SelectionStrategy::Ucb,
            stored_graphs: true,
            task_text: TaskText::TargetProfile,
            rel_tolerance: DEFAULT_REL_TOLERANCE,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), OrchestratorError> {
        self.params.validate()?;
        if self.max_parallel_nodes == 0 {
            return Err(OrchestratorError::InvalidConfig("max_parallel_nodes must be at least 1".into()));
        }
        if self.backend == BackendKind::Simulated && self.crm == CrmKind::Model {
            return Err(OrchestratorError::InvalidConfig(
                "the simulated backend needs the rule or oracle reward model".into(),
            ));
        }
        if self.backend == BackendKind::Simulated && !self.stored_graphs {
            return Err(OrchestratorError::InvalidConfig(
                "the simulated backend needs the dataset's stored graphs".into(),
            ));
        }
        if !(self.rel_tolerance > 0.0) {
            return Err(OrchestratorError::InvalidConfig("rel_tolerance must be positive".into()));
        }
        Ok(())
    }

    /// Selection parameters used by coarse search. Exploration only happens
    /// while training with the UCB strategy.
    fn coarse_params(&self, training: bool) -> SelectionParams {
        match (self.strategy, training) {
            (SelectionStrategy::Ucb, true) => self.params,
            _ => SelectionParams { c_explore: 0.0, ..self.params },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub node_id: NodeId,
    pub agent_id: String,
}

/// Everything that happened while solving one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutcome {
    pub task_id: u64,
    pub final_answer: Option<f64>,
    pub correct: bool,
    pub tokens: u64,
    pub executions: usize,
    pub node_count: usize,
    pub assignments: Vec<Assignment>,
    pub candidate_sets: Vec<CandidateSet>,
    pub outcomes: Vec<SelectionOutcome>,
    /// Per-node correctness, when ground truth is known.
    pub node_correct: BTreeMap<NodeId, bool>,
    /// Why the task stopped early, if it did.
    pub failure: Option<String>,
}

impl TaskOutcome {
    fn failed(task_id: u64, reason: String) -> Self {
        Self {
            task_id,
            final_answer: None,
            correct: false,
            tokens: 0,
            executions: 0,
            node_count: 0,
            assignments: Vec::new(),
            candidate_sets: Vec::new(),
            outcomes: Vec::new(),
            node_correct: BTreeMap::new(),
            failure: Some(reason),
        }
    }

    pub fn result_line(&self) -> ResultLine {
        ResultLine {
            task_id: self.task_id,
            final_answer: self.final_answer,
            correct: self.correct,
            tokens: self.tokens,
            assignments: self.assignments.clone(),
        }
    }
}

/// One line of the results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultLine {
    pub task_id: u64,
    pub final_answer: Option<f64>,
    pub correct: bool,
    pub tokens: u64,
    pub assignments: Vec<Assignment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub task_index: usize,
    pub rolling_accuracy: f64,
    pub cumulative_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunStats {
    pub tasks_seen: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub total_tokens: u64,
    pub executions: usize,
    pub selections_n: u64,
    pub failed_tasks: usize,
    pub curve: Vec<CurvePoint>,
}

impl RunStats {
    fn push(&mut self, o: &TaskOutcome, window: &mut Vec<bool>) {
        self.tasks_seen += 1;
        self.correct += usize::from(o.correct);
        self.accuracy = self.correct as f64 / self.tasks_seen as f64;
        self.total_tokens += o.tokens;
        self.executions += o.executions;
        self.failed_tasks += usize::from(o.failure.is_some());
        window.push(o.correct);
        let recent = &window[window.len().saturating_sub(CURVE_WINDOW)..];
        self.curve.push(CurvePoint {
            task_index: self.tasks_seen - 1,
            rolling_accuracy: recent.iter().filter(|c| **c).count() as f64 / recent.len() as f64,
            cumulative_accuracy: self.accuracy,
        });
    }

    /// Training curve as CSV.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("task_index,rolling_accuracy_window_50,cumulative_accuracy\n");
        for p in &self.curve {
            out.push_str(&format!("{},{:.6},{:.6}\n", p.task_index, p.rolling_accuracy, p.cumulative_accuracy));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub stats: RunStats,
    pub tasks: Vec<TaskOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceReport {
    pub stats: RunStats,
    pub tasks: Vec<TaskOutcome>,
}

impl InferenceReport {
    pub fn results(&self) -> Vec<ResultLine> {
        self.tasks.iter().map(TaskOutcome::result_line).collect()
    }

    pub fn results_jsonl(&self) -> String {
        results_to_jsonl(&self.results())
    }
}

pub fn results_to_jsonl(lines: &[ResultLine]) -> String {
    lines.iter().map(|l| serde_json::to_string(l).expect("results serialize") + "\n").collect()
}

pub fn parse_results(jsonl: &str) -> Result<Vec<ResultLine>, serde_json::Error> {
    jsonl.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

enum DbAccess<'a> {
    Read(&'a AgentDb),
    Write(&'a mut AgentDb),
}

impl DbAccess<'_> {
    fn get(&self) -> &AgentDb {
        match self {
            DbAccess::Read(db) => db,
            DbAccess::Write(db) => db,
        }
    }
}

/// Runs `f` over `items`, at most `max_parallel` at a time, keeping order.
fn parallel_map<T: Sync, R: Send>(items: &[T], max_parallel: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if max_parallel <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let f = &f;
    let mut out = Vec::with_capacity(items.len());
    for chunk in items.chunks(max_parallel) {
        std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|it| s.spawn(move || f(it))).collect();
            out.extend(handles.into_iter().map(|h| h.join().expect("node worker panicked")));
        });
    }
    out
}

struct PreparedNode<'t> {
    node: &'t SubtaskNode,
    candidates: CandidateSet,
    embedding: Vec<f64>,
    reference: Option<SimReference>,
}

/// The collaborators of a run.
pub struct Pipeline<'a> {
    pub config: RunConfig,
    pub backend: &'a dyn AgentBackend,
    pub crm: &'a dyn RewardModel,
    pub embedder: &'a dyn Embedder,
    pub decomposer: &'a dyn Decomposer,
    cache: Mutex<BTreeMap<String, Vec<f64>>>,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        config: RunConfig,
        backend: &'a dyn AgentBackend,
        crm: &'a dyn RewardModel,
        embedder: &'a dyn Embedder,
        decomposer: &'a dyn Decomposer,
    ) -> Result<Self, OrchestratorError> {
        config.validate()?;
        Ok(Self { config, backend, crm, embedder, decomposer, cache: Mutex::new(BTreeMap::new()) })
    }

    fn embed_node(&self, node: &SubtaskNode) -> Result<Vec<f64>, OrchestratorError> {
        let text = match self.config.task_text {
            TaskText::TargetProfile if !node.target_profile.trim().is_empty() => &node.target_profile,
            _ => &node.text,
        };
        if let Some(v) = self.cache.lock().expect("cache lock").get(text) {
            return Ok(v.clone());
        }
        let v = self.embedder.embed(text).map_err(OrchestratorError::Embedding)?;
        self.cache.lock().expect("cache lock").insert(text.clone(), v.clone());
        Ok(v)
    }

    fn check_db(&self, db: &AgentDb) -> Result<(), OrchestratorError> {
        if db.dimension() != self.embedder.dimension() {
            return Err(DbError::DimensionMismatch { expected: db.dimension(), got: self.embedder.dimension() }.into());
        }
        if db.is_empty() {
            return Err(DbError::EmptyDatabase.into());
        }
        Ok(())
    }

    fn candidates(
        &self,
        db: &AgentDb,
        node: &SubtaskNode,
        embedding: &[f64],
        task_id: u64,
        training: bool,
    ) -> Result<CandidateSet, SelectionError> {
        match self.config.strategy {
            SelectionStrategy::Random => {
                let seed = derive_seed(self.config.seed, if training { "train" } else { "infer" }, 0);
                Ok(random_candidates(db, node, self.config.params.top_k, seed, task_id))
            }
            _ => coarse_select(db, node, embedding, &self.config.coarse_params(training)),
        }
    }

    fn fine(
        &self,
        db: &AgentDb,
        job: &NodeJob<'_>,
        prepared: &PreparedNode<'_>,
        training: bool,
    ) -> Result<SelectionOutcome, SelectionError> {
        let params = &self.config.params;
        if training {
            return fine_select_training(db, &prepared.candidates, job, self.backend, self.crm, params);
        }
        match self.config.strategy {
            SelectionStrategy::Random => {
                let order: Vec<&str> = prepared.candidates.ids().collect();
                execute_in_order(db, &order, job, self.backend, params)
            }
            _ => fine_select_inference(db, &prepared.candidates, job, &prepared.embedding, self.backend, params),
        }
    }

    fn run_task(
        &self,
        mut db: DbAccess<'_>,
        task: &SyntheticTask,
        task_id: u64,
    ) -> Result<TaskOutcome, OrchestratorError> {
        let training = matches!(db, DbAccess::Write(_));
        let stored = self.config.stored_graphs.then_some(&task.graph);
        let graph: TaskGraph = match self.decomposer.decompose(&task.question_text, stored) {
            Ok(g) => g,
            Err(e) => {
                log::warn!("task {task_id}: decomposition failed: {e}");
                return Ok(TaskOutcome::failed(task_id, format!("decomposition failed: {e}")));
            }
        };
        let truths = self.config.stored_graphs.then_some(&task.node_truths);
        let tol = self.config.rel_tolerance;
        let is_correct = |id: NodeId, a: &NodeAnswer| -> Option<bool> {
            let truth = truths?.get(&id)?;
            Some(a.value.is_some_and(|v| within_tolerance(v, *truth, tol)))
        };

        let mut out = TaskOutcome::failed(task_id, String::new());
        out.failure = None;
        out.node_count = graph.nodes.len();
        let mut answers: BTreeMap<NodeId, NodeAnswer> = BTreeMap::new();
        let mut completed = BTreeSet::new();

        loop {
            let frontier = graph.ready_frontier(&completed);
            if frontier.is_empty() {
                break;
            }
            let mut prepared = Vec::with_capacity(frontier.len());
            for id in &frontier {
                let node = graph.node(*id).expect("frontier ids exist");
                let embedding = self.embed_node(node)?;
                let candidates = match self.candidates(db.get(), node, &embedding, task_id, training) {
                    Ok(c) => c,
                    Err(SelectionError::Db(e)) => return Err(e.into()),
                    Err(e) => return Err(OrchestratorError::InvalidConfig(e.to_string())),
                };
                let reference = match (self.backend.needs_reference(), truths.and_then(|t| t.get(id))) {
                    (true, Some(&truth)) => Some(SimReference {
                        truth,
                        inputs_consistent: graph
                            .predecessors(*id)
                            .iter()
                            .all(|p| out.node_correct.get(p).copied().unwrap_or(false)),
                    }),
                    _ => None,
                };
                prepared.push(PreparedNode { node, candidates, embedding, reference });
            }

            let results = {
                let db_view = db.get();
                let answers = &answers;
                let graph = &graph;
                parallel_map(&prepared, self.config.max_parallel_nodes, |p| {
                    let job = NodeJob { task_id, graph, node: p.node, answers, truths, reference: p.reference };
                    self.fine(db_view, &job, p, training)
                })
            };

            let mut stop = None;
            for (p, result) in prepared.iter().zip(results) {
                out.candidate_sets.push(p.candidates.clone());
                let per_candidate = match &result {
                    Ok(o) => &o.per_candidate,
                    Err(SelectionError::AllCandidatesFailed { per_candidate, .. }) => per_candidate,
                    Err(SelectionError::Db(e)) => return Err(e.clone().into()),
                    Err(e) => {
                        stop.get_or_insert_with(|| format!("node {}: {e}", p.node.id));
                        continue;
                    }
                };
                out.executions += per_candidate.len();
                out.tokens += per_candidate.iter().map(|c| c.tokens).sum::<u64>();
                if let DbAccess::Write(db) = &mut db {
                    for c in per_candidate {
                        db.record(&c.agent_id, c.reward.unwrap_or(0.0), c.cost, p.node.domain.as_deref())?;
                    }
                }
                match result {
                    Ok(o) => {
                        if let Some(ok) = is_correct(p.node.id, &o.chosen_answer) {
                            out.node_correct.insert(p.node.id, ok);
                        }
                        out.assignments.push(Assignment { node_id: p.node.id, agent_id: o.chosen_agent.clone() });
                        answers.insert(p.node.id, o.chosen_answer.clone());
                        completed.insert(p.node.id);
                        out.outcomes.push(o);
                    }
                    Err(e) => {
                        stop.get_or_insert_with(|| format!("node {}: {e}", p.node.id));
                    }
                }
            }
            if let Some(reason) = stop {
                log::warn!("task {task_id} failed: {reason}");
                out.failure = Some(reason);
                return Ok(out);
            }
        }

        out.final_answer = answers.get(&graph.final_node).and_then(|a| a.value);
        out.correct = out.final_answer.is_some_and(|v| within_tolerance(v, task.final_answer, tol));
        Ok(out)
    }

    /// Solves one task without touching the database.
    pub fn solve_task(
        &self,
        db: &AgentDb,
        task: &SyntheticTask,
        task_id: u64,
    ) -> Result<TaskOutcome, OrchestratorError> {
        self.check_db(db)?;
        self.run_task(DbAccess::Read(db), task, task_id)
    }

    /// Solves one task in training mode, updating `db` with every
    /// candidate's reward and cost.
    pub fn train_task(
        &self,
        db: &mut AgentDb,
        task: &SyntheticTask,
        task_id: u64,
    ) -> Result<TaskOutcome, OrchestratorError> {
        self.check_db(db)?;
        self.run_task(DbAccess::Write(db), task, task_id)
    }

    /// Trains on `tasks` in order.
    pub fn run_training(&self, tasks: &[SyntheticTask], db: &mut AgentDb) -> Result<TrainingReport, OrchestratorError> {
        let mut stats = RunStats::default();
        let mut window = Vec::new();
        let mut outcomes = Vec::with_capacity(tasks.len());
        for (i, task) in tasks.iter().enumerate() {
            let o = self.train_task(db, task, i as u64)?;
            stats.push(&o, &mut window);
            outcomes.push(o);
        }
        stats.selections_n = db.total_selections();
        Ok(TrainingReport { stats, tasks: outcomes })
    }

    pub fn run_inference(&self, tasks: &[SyntheticTask], db: &AgentDb) -> Result<InferenceReport, OrchestratorError> {
        let mut stats = RunStats::default();
        let mut window = Vec::new();
        let mut outcomes = Vec::with_capacity(tasks.len());
        for (i, task) in tasks.iter().enumerate() {
            let o = self.solve_task(db, task, i as u64)?;
            stats.push(&o, &mut window);
            outcomes.push(o);
        }
        stats.selections_n = db.total_selections();
        Ok(InferenceReport { stats, tasks: outcomes })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub tasks: usize,
    pub correct: usize,
    /// `None` when the bucket is empty.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub buckets: BTreeMap<String, Bucket>,
    pub overall: Bucket,
    pub total_tokens: u64,
    pub mean_tokens: Option<f64>,
    /// Agent id -> number of nodes it was assigned.
    pub selection_distribution: BTreeMap<String, usize>,
}

fn bucket(tasks: usize, correct: usize) -> Bucket {
    Bucket { tasks, correct, accuracy: (tasks > 0).then(|| correct as f64 / tasks as f64) }
}

/// Grades a results file against its dataset. Task ids are dataset line indices.
pub fn evaluate(results: &[ResultLine], dataset: &[SyntheticTask]) -> Result<EvalReport, OrchestratorError> {
    let mut seen = BTreeSet::new();
    for r in results {
        if r.task_id as usize >= dataset.len() || !seen.insert(r.task_id) {
            return Err(OrchestratorError::IdMismatch { task_id: r.task_id });
        }
    }
    if let Some(missing) = (0..dataset.len() as u64).find(|id| !seen.contains(id)) {
        return Err(OrchestratorError::IdMismatch { task_id: missing });
    }
    let mut counts: BTreeMap<String, (usize, usize)> =
        Difficulty::ALL.iter().map(|d| (d.as_str().to_string(), (0, 0))).collect();
    let mut distribution = BTreeMap::new();
    let mut total_tokens = 0;
    for r in results {
        let task = &dataset[r.task_id as usize];
        let name = task.difficulty.map_or("other", Difficulty::as_str);
        let entry = counts.entry(name.to_string()).or_default();
        entry.0 += 1;
        entry.1 += usize::from(r.correct);
        total_tokens += r.tokens;
        for a in &r.assignments {
            *distribution.entry(a.agent_id.clone()).or_default() += 1;
        }
    }
    let correct = results.iter().filter(|r| r.correct).count();
    Ok(EvalReport {
        buckets: counts.into_iter().map(|(k, (t, c))| (k, bucket(t, c))).collect(),
        overall: bucket(results.len(), correct),
        total_tokens,
        mean_tokens: (!results.is_empty()).then(|| total_tokens as f64 / results.len() as f64),
        selection_distribution: distribution,
    })
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let acc = |b: &Bucket| b.accuracy.map_or("n/a".to_string(), |a| format!("{:.1}%", a * 100.0));
        writeln!(f, "{:<10} {:>6} {:>8} {:>9}", "bucket", "tasks", "correct", "accuracy")?;
        for (name, b) in &self.buckets {
            writeln!(f, "{name:<10} {:>6} {:>8} {:>9}", b.tasks, b.correct, acc(b))?;
        }
        writeln!(
            f,
            "{:<10} {:>6} {:>8} {:>9}",
            "overall",
            self.overall.tasks,
            self.overall.correct,
            acc(&self.overall)
        )?;
        match self.mean_tokens {
            Some(m) => writeln!(f, "\nmean tokens per task: {m:.1}")?,
            None => writeln!(f, "\nmean tokens per task: n/a")?,
        }
        writeln!(f, "\nselection distribution:")?;
        let mut dist: Vec<_> = self.selection_distribution.iter().collect();
        dist.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        for (agent, n) in dist {
            writeln!(f, "  {agent:<24} {n}")?;
        }
        Ok(())
    }
}
