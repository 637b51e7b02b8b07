//! Built-in simulated environment: a templated question pool and a pool of
//! simulated agents with one strong agent per domain.

use std::collections::BTreeMap;

use rand::Rng;

use crate::agent_db::{db_from_entries, AgentDb, AgentEntry, DbError, SimulationKeys};
use crate::backends::embed::Embedder;
use crate::backends::sim::{SimulatedBackend, WILDCARD_DOMAIN};
use crate::backends::BackendError;
use crate::keyed::keyed_rng;
use crate::synthesis::{PoolItem, AGGREGATION_DOMAIN};

pub const DEMO_DOMAINS: [&str; 3] = ["mechanics", "electromagnetism", "chemistry"];

/// `n / 10^places` written without trailing zeros.
fn fixed(n: i64, places: u32) -> String {
    let scale = 10i64.pow(places);
    let (int, frac) = (n / scale, n % scale);
    if frac == 0 {
        return int.to_string();
    }
    let frac = format!("{frac:0width$}", width = places as usize);
    format!("{int}.{}", frac.trim_end_matches('0'))
}

fn demo_item(domain: &str, rng: &mut impl Rng) -> (String, f64) {
    let variant: u8 = rng.random_range(0..2);
    match (domain, variant) {
        ("mechanics", 0) => {
            let (v, t) = (rng.random_range(2..=30i64), rng.random_range(2..=12i64));
            (format!("A cart travels {} m in {t} s at constant speed. What is its speed in m/s?", v * t), v as f64)
        }
        ("mechanics", _) => {
            let (m, a_half) = (rng.random_range(2..=20i64), rng.random_range(1..=12i64));
            (
                format!(
                    "A net force of {} N gives a block an acceleration of {} m/s². What is the block's mass in kg?",
                    fixed(m * a_half * 5, 1),
                    fixed(a_half * 5, 1)
                ),
                m as f64,
            )
        }
        ("electromagnetism", 0) => {
            let (i_half, r) = (rng.random_range(1..=10i64), rng.random_range(2..=50i64));
            (
                format!(
                    "A resistor carries a current of {} A when {} V is applied across it. What is its resistance in ohms?",
                    fixed(i_half * 5, 1),
                    fixed(i_half * 5 * r, 1)
                ),
                r as f64,
            )
        }
        ("electromagnetism", _) => {
            let c_milli = [2i64, 5, 10, 20, 50][rng.random_range(0..5)];
            let v = rng.random_range(2..=40i64);
            (
                format!(
                    "A capacitor of {} F stores a charge of {} C. What is the voltage across it in V?",
                    fixed(c_milli, 3),
                    fixed(c_milli * v, 3)
                ),
                v as f64,
            )
        }
        ("chemistry", 0) => {
            // molarity 1 would make the amount equal the volume
            let m_tenths = match rng.random_range(1..=19i64) {
                m if m >= 10 => m + 1,
                m => m,
            };
            let l = rng.random_range(2..=10i64);
            (
                format!(
                    "A solution contains {} mol of solute dissolved in {l} L of water. What is its molarity in mol/L?",
                    fixed(m_tenths * l, 1)
                ),
                fixed(m_tenths, 1).parse().unwrap(),
            )
        }
        ("chemistry", _) => {
            let (moles, molar_mass) = (rng.random_range(2..=12i64), [18i64, 28, 32, 44, 58][rng.random_range(0..5)]);
            (
                format!(
                    "A sample of {} g of a compound has a molar mass of {molar_mass} g/mol. How many moles does it contain?",
                    moles * molar_mass
                ),
                moles as f64,
            )
        }
        (other, _) => {
            let (a, b) = (rng.random_range(2..=40i64), rng.random_range(2..=9i64));
            (
                format!(
                    "In {other}, a quantity of {} units is split into {b} equal shares. How large is each share?",
                    a * b
                ),
                a as f64,
            )
        }
    }
}

/// `per_domain` templated questions for each domain, with exact answers.
pub fn demo_pool(domains: &[&str], per_domain: usize, seed: u64) -> Vec<PoolItem> {
    let mut out = Vec::with_capacity(domains.len() * per_domain);
    for domain in domains {
        let mut rng = keyed_rng(seed, "demo-pool", &[domain]);
        for i in 0..per_domain {
            let (text, answer) = demo_item(domain, &mut rng);
            out.push(PoolItem { text, answer, domain: domain.to_string(), source_id: format!("{domain}-{i}") });
        }
    }
    out
}

/// Role text of an agent specialised in `domain`.
pub fn agent_role(domain: &str) -> String {
    format!("{domain} expert")
}

/// Pool shape: `agents_per_domain` agents per domain, one of which (chosen
/// per seed) has `expert_skill` at home; every other skill is `base_skill`.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewedPool {
    pub domains: Vec<String>,
    pub agents_per_domain: usize,
    pub expert_skill: f64,
    pub base_skill: f64,
    /// Success probability on the final combining node.
    pub aggregation_skill: f64,
    pub cost_tokens: f64,
    pub noise_scale: f64,
}

impl Default for SkewedPool {
    fn default() -> Self {
        Self {
            domains: DEMO_DOMAINS.iter().map(|d| d.to_string()).collect(),
            agents_per_domain: 10,
            expert_skill: 0.9,
            base_skill: 0.5,
            aggregation_skill: 1.0,
            cost_tokens: 1000.0,
            noise_scale: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEnvironment {
    pub entries: Vec<AgentEntry>,
    /// Domain -> id of its strong agent.
    pub experts: BTreeMap<String, String>,
}

impl SkewedPool {
    pub fn build(&self, seed: u64) -> SimEnvironment {
        let mut entries = Vec::new();
        let mut experts = BTreeMap::new();
        for domain in &self.domains {
            let expert = keyed_rng(seed, "expert", &[domain]).random_range(0..self.agents_per_domain);
            for i in 0..self.agents_per_domain {
                let id = format!("{domain}-{i:02}");
                let home = if i == expert {
                    experts.insert(domain.clone(), id.clone());
                    self.expert_skill
                } else {
                    self.base_skill
                };
                let skill = BTreeMap::from([
                    (domain.clone(), home),
                    (AGGREGATION_DOMAIN.to_string(), self.aggregation_skill),
                    (WILDCARD_DOMAIN.to_string(), self.base_skill),
                ]);
                entries.push(AgentEntry {
                    agent_id: id,
                    base_model: "simulated".into(),
                    role: agent_role(domain),
                    prompt: format!("You are a {domain} expert."),
                    tools: Vec::new(),
                    profile_embedding: None,
                    provider: None,
                    simulation: Some(SimulationKeys {
                        skill,
                        cost_tokens: self.cost_tokens,
                        noise_scale: self.noise_scale,
                    }),
                });
            }
        }
        SimEnvironment { entries, experts }
    }
}

impl SimEnvironment {
    pub fn db(&self, embedder: &dyn Embedder) -> Result<AgentDb, DbError> {
        db_from_entries(&self.entries, embedder)
    }

    pub fn backend(&self, seed: u64) -> Result<SimulatedBackend, BackendError> {
        SimulatedBackend::new(self.entries.iter().filter_map(AgentEntry::simulated_spec), seed)
    }

    /// The agents as an INI pool file.
    pub fn to_ini(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "[{}]\nmodel = {}\nrole = {}\nprompt = {}\n",
                e.agent_id, e.base_model, e.role, e.prompt
            ));
            if let Some(sim) = &e.simulation {
                let skills: Vec<String> = sim.skill.iter().map(|(d, p)| format!("{d}:{p}")).collect();
                out.push_str(&format!(
                    "skills = {}\ncost_tokens = {}\nnoise_scale = {}\n",
                    skills.join(", "),
                    sim.cost_tokens,
                    sim.noise_scale
                ));
            }
            out.push('\n');
        }
        out
    }
}
