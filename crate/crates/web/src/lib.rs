//! Browser bindings for the demo page in `www/`.
//!
//! Each export returns a JSON string. The plain functions behind them are
//! public so they can be tested natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use agentgraph::agent_db::{ExplorationScope, SelectionParams};
use agentgraph::backends::decompose::StoredGraphDecomposer;
use agentgraph::backends::embed::LocalHashEmbedder;
use agentgraph::keyed::derive_seed;
use agentgraph::orchestrator::{Pipeline, RunConfig};
use agentgraph::reward::OracleCrm;
use agentgraph::selection::{ucb_value, SelectionStrategy};
use agentgraph::simenv::{demo_pool, SkewedPool, DEMO_DOMAINS};
use agentgraph::synthesis::{
    prepare_pool, synthesize_task, synthesize_tasks, Aggregation, Difficulty, DifficultyCounts,
};

/// Problems per domain in the built-in pool.
pub const POOL_PER_DOMAIN: usize = 100;
/// Held-out tasks graded after a simulated training run.
pub const TEST_TASKS: usize = 100;
/// Upper bound on training tasks per request.
pub const MAX_TRAIN_TASKS: usize = 1000;

#[derive(Debug, Serialize, PartialEq)]
pub struct UcbPoint {
    pub n: u64,
    pub ucb: f64,
    pub bonus: f64,
}

/// UCB score of an agent with quality `q` as its own count grows from 0 to `max_n`.
pub fn ucb_curve(q: f64, c_explore: f64, total: u64, epsilon: f64, max_n: u64) -> Vec<UcbPoint> {
    (0..=max_n)
        .map(|n| {
            let ucb = ucb_value(q, c_explore, total, n, epsilon);
            UcbPoint { n, ucb, bonus: ucb - q }
        })
        .collect()
}

/// One composite task from the built-in pool, as dataset JSON.
pub fn synthesize_json(difficulty: &str, seed: u32, aggregation: &str) -> Result<String, String> {
    let subtasks = Difficulty::ALL
        .iter()
        .find(|d| d.as_str() == difficulty)
        .ok_or_else(|| format!("unknown difficulty {difficulty:?}"))?
        .subtasks();
    let aggregation: Aggregation = aggregation.parse()?;
    let pool = prepare_pool(&demo_pool(&DEMO_DOMAINS, POOL_PER_DOMAIN, u64::from(seed)));
    let task = synthesize_task(&pool, subtasks, u64::from(seed), aggregation).map_err(|e| e.to_string())?;
    serde_json::to_string(&task).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct AgentRow {
    pub agent_id: String,
    pub domain: String,
    pub expert: bool,
    pub avg_reward: f64,
    pub count: u64,
}

#[derive(Debug, Serialize)]
pub struct TrainingRun {
    pub rolling_accuracy: Vec<f64>,
    pub cumulative_accuracy: Vec<f64>,
    pub test_accuracy: f64,
    pub agents: Vec<AgentRow>,
}

/// Trains on `tasks` easy tasks in the skewed simulated pool and grades
/// 100 held-out tasks.
pub fn simulate_training(
    seed: u32,
    tasks: usize,
    strategy: &str,
    c_explore: f64,
    per_domain_scope: bool,
) -> Result<TrainingRun, String> {
    if tasks == 0 || tasks > MAX_TRAIN_TASKS {
        return Err(format!("tasks must be between 1 and {MAX_TRAIN_TASKS}"));
    }
    let seed = u64::from(seed);
    let strategy: SelectionStrategy = strategy.parse()?;
    let pool = prepare_pool(&demo_pool(&DEMO_DOMAINS, POOL_PER_DOMAIN, seed));
    let easy = |n, label| {
        synthesize_tasks(
            &pool,
            DifficultyCounts { easy: n, ..Default::default() },
            derive_seed(seed, label, 0),
            Aggregation::Product,
        )
        .map_err(|e| e.to_string())
    };
    let (train, test) = (easy(tasks, "train-set")?, easy(TEST_TASKS, "test-set")?);

    let env = SkewedPool::default().build(seed);
    let embedder = LocalHashEmbedder::default();
    let crm = OracleCrm::default();
    let config = RunConfig {
        seed,
        strategy,
        params: SelectionParams {
            c_explore,
            exploration_scope: if per_domain_scope { ExplorationScope::PerDomain } else { ExplorationScope::Global },
            ..SelectionParams::default()
        },
        ..RunConfig::default()
    };
    let mut db = env.db(&embedder).map_err(|e| e.to_string())?;
    let backend = env.backend(seed).map_err(|e| e.to_string())?;
    let pipeline =
        Pipeline::new(config.clone(), &backend, &crm, &embedder, &StoredGraphDecomposer).map_err(|e| e.to_string())?;
    let training = pipeline.run_training(&train, &mut db).map_err(|e| e.to_string())?;
    let test_backend = env.backend(derive_seed(seed, "test-backend", 0)).map_err(|e| e.to_string())?;
    let pipeline =
        Pipeline::new(config, &test_backend, &crm, &embedder, &StoredGraphDecomposer).map_err(|e| e.to_string())?;
    let inference = pipeline.run_inference(&test, &db).map_err(|e| e.to_string())?;

    let agents = db
        .agents()
        .iter()
        .map(|a| {
            let domain = a.id().rsplit_once('-').map_or("", |(d, _)| d).to_string();
            AgentRow {
                agent_id: a.id().to_string(),
                expert: env.experts.get(&domain).is_some_and(|e| e == a.id()),
                domain,
                avg_reward: a.dynamic.avg_reward,
                count: a.dynamic.count,
            }
        })
        .collect();
    Ok(TrainingRun {
        rolling_accuracy: training.stats.curve.iter().map(|p| p.rolling_accuracy).collect(),
        cumulative_accuracy: training.stats.curve.iter().map(|p| p.cumulative_accuracy).collect(),
        test_accuracy: inference.stats.accuracy,
        agents,
    })
}

#[wasm_bindgen(js_name = ucbCurve)]
pub fn ucb_curve_js(q: f64, c_explore: f64, total: u32, epsilon: f64, max_n: u32) -> String {
    serde_json::to_string(&ucb_curve(q, c_explore, u64::from(total), epsilon, u64::from(max_n))).unwrap_or_default()
}

#[wasm_bindgen(js_name = synthesizeTask)]
pub fn synthesize_task_js(difficulty: &str, seed: u32, aggregation: &str) -> Result<String, JsValue> {
    synthesize_json(difficulty, seed, aggregation).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = simulateTraining)]
pub fn simulate_training_js(
    seed: u32,
    tasks: u32,
    strategy: &str,
    c_explore: f64,
    per_domain_scope: bool,
) -> Result<String, JsValue> {
    simulate_training(seed, tasks as usize, strategy, c_explore, per_domain_scope)
        .and_then(|run| serde_json::to_string(&run).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}
