use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_agentgraph"));
    for (k, _) in std::env::vars() {
        if k.starts_with("AGENTGRAPH_") {
            cmd.env_remove(k);
        }
    }
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let ws = Self { dir: tempfile::tempdir().unwrap() };
        let out = run(&["demo", "--out", p(ws.dir.path()), "--seed", "3", "--per-domain", "40"]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn synth(&self, name: &str, easy: &str, seed: &str) -> PathBuf {
        let out_path = self.path(name);
        let out = run(&[
            "synth",
            "--pool",
            p(&self.path("pool.jsonl")),
            "--easy",
            easy,
            "--seed",
            seed,
            "--out",
            p(&out_path),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        out_path
    }

    fn train(&self, data: &Path, db: &str, extra: &[&str]) -> Output {
        let agents = self.path("agents.ini");
        let mut args = vec![
            "train",
            "--data",
            p(data),
            "--agents",
            p(&agents),
            "--crm",
            "oracle",
            "--backend",
            "simulated",
            "--seed",
            "7",
            "--db",
        ];
        let db = self.path(db);
        args.push(p(&db));
        args.extend_from_slice(extra);
        run(&args)
    }
}

#[test]
fn synth_writes_requested_lines() {
    let ws = Workspace::new();
    let data = ws.synth("d.jsonl", "10", "7");
    assert_eq!(fs::read_to_string(&data).unwrap().lines().count(), 10);
    let again = ws.synth("d2.jsonl", "10", "7");
    assert_eq!(fs::read(&data).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn usage_errors_exit_one() {
    let out = run(&["synth", "--easy", "10", "--seed", "7", "--out", "d.jsonl"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--pool"), "{}", stderr(&out));
    assert!(stderr(&out).contains("Usage"), "{}", stderr(&out));

    assert_eq!(code(&run(&["agents", "--db", "x.json", "--bogus"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);

    let ws = Workspace::new();
    let data = ws.synth("d.jsonl", "2", "1");
    let out = ws.train(&data, "db.json", &["--strategy", "best"]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    let out = ws.train(&data, "db.json", &["--set", "no_such_setting=1"]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    let out = ws.train(&ws.path("missing.jsonl"), "db.json", &[]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
}

#[test]
fn train_infer_eval_round_trip() {
    let ws = Workspace::new();
    let data = ws.synth("d.jsonl", "30", "7");
    let test = ws.synth("t.jsonl", "10", "8");
    let inputs: Vec<Vec<u8>> =
        [&data, &ws.path("agents.ini"), &ws.path("pool.jsonl")].iter().map(|f| fs::read(f).unwrap()).collect();

    let curve = ws.path("curve.csv");
    let out = ws.train(&data, "db.json", &["--curve", p(&curve)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let snapshot = fs::read_to_string(ws.path("db.json")).unwrap();
    assert!(snapshot.contains("agent-db/1"));
    let csv = fs::read_to_string(&curve).unwrap();
    assert!(csv.starts_with("task_index,rolling_accuracy_window_50"));
    assert_eq!(csv.lines().count(), 31);

    // identical seed, identical snapshot; parallel frontier gives the same bytes
    let out = ws.train(&data, "db2.json", &["--max-parallel", "8"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(snapshot, fs::read_to_string(ws.path("db2.json")).unwrap());

    let results = ws.path("r.jsonl");
    let infer = |results: &Path| {
        run(&[
            "infer",
            "--data",
            p(&test),
            "--db",
            p(&ws.path("db.json")),
            "--agents",
            p(&ws.path("agents.ini")),
            "--seed",
            "7",
            "--results",
            p(results),
        ])
    };
    let out = infer(&results);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(fs::read_to_string(&results).unwrap().lines().count(), 10);
    assert_eq!(snapshot, fs::read_to_string(ws.path("db.json")).unwrap(), "inference never writes the database");
    let again = ws.path("r2.jsonl");
    assert_eq!(code(&infer(&again)), 0);
    assert_eq!(fs::read(&results).unwrap(), fs::read(&again).unwrap());

    let out = run(&["eval", "--results", p(&results), "--data", p(&test)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = String::from_utf8(out.stdout).unwrap();
    assert!(report.contains("overall"), "{report}");
    assert!(report.contains("n/a"), "medium and hard buckets are empty: {report}");

    let out = run(&["eval", "--results", p(&results), "--data", p(&data)]);
    assert_eq!(code(&out), 2, "results do not match a 30-task dataset");

    let after: Vec<Vec<u8>> =
        [&data, &ws.path("agents.ini"), &ws.path("pool.jsonl")].iter().map(|f| fs::read(f).unwrap()).collect();
    assert_eq!(inputs, after);
}

#[test]
fn outputs_never_overwrite_inputs() {
    let ws = Workspace::new();
    let data = ws.synth("d.jsonl", "2", "1");
    let before = fs::read(&data).unwrap();
    let out = ws.train(&data, "d.jsonl", &[]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    assert_eq!(before, fs::read(&data).unwrap());
}

#[test]
fn agents_table() {
    let ws = Workspace::new();
    let empty = ws.path("empty.jsonl");
    fs::write(&empty, "").unwrap();
    assert_eq!(code(&ws.train(&empty, "fresh.json", &[])), 0);
    let out = run(&["agents", "--db", p(&ws.path("fresh.json"))]);
    assert_eq!(code(&out), 0);
    let table = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 30);
    for row in rows {
        let cols: Vec<&str> = row.split_whitespace().collect();
        assert_eq!(cols[cols.len() - 3], "0.5000", "{row}");
        assert_eq!(cols[cols.len() - 1], "0", "{row}");
    }

    let corrupt = ws.path("corrupt.json");
    fs::write(&corrupt, "{\"version\": \"agent-db/1\", \"static\": [").unwrap();
    assert_eq!(code(&run(&["agents", "--db", p(&corrupt)])), 2);
}

#[test]
fn trained_expert_tops_its_domain() {
    let ws = Workspace::new();
    let demo = run(&["demo", "--out", p(ws.dir.path()), "--seed", "3", "--per-domain", "40"]);
    let experts: Vec<String> = stderr(&demo)
        .lines()
        .filter_map(|l| l.rsplit_once("strongest agent is ").map(|(_, id)| id.trim().to_string()))
        .collect();
    assert_eq!(experts.len(), 3);

    let data = ws.synth("d.jsonl", "200", "11");
    let out = ws.train(&data, "db.json", &["--set", "exploration_scope=per-domain"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = run(&["agents", "--db", p(&ws.path("db.json"))]);
    let table = String::from_utf8(out.stdout).unwrap();
    for expert in &experts {
        let domain = expert.rsplit_once('-').unwrap().0;
        let first = table.lines().skip(1).find(|row| row.starts_with(&format!("{domain}-"))).unwrap();
        assert!(first.starts_with(expert.as_str()), "{expert} should lead {domain}:\n{table}");
    }
}

#[test]
fn settings_precedence_through_the_binary() {
    let ws = Workspace::new();
    let data = ws.synth("d.jsonl", "2", "1");
    let train = |envs: &[(&str, &str)], extra: &[&str]| {
        let mut cmd = bin();
        cmd.args(["train", "--data", p(&data), "--agents", p(&ws.path("agents.ini")), "--db", p(&ws.path("db.json"))]);
        cmd.args(extra);
        cmd.envs(envs.iter().copied());
        code(&cmd.output().unwrap())
    };
    assert_eq!(train(&[("AGENTGRAPH_TOP_K", "0")], &[]), 1, "env value is used");
    assert_eq!(train(&[("AGENTGRAPH_TOP_K", "0")], &["--set", "top_k=2"]), 0, "flag beats env");

    let config = ws.path("run.ini");
    fs::write(&config, "[run]\ntop_k = 0\n").unwrap();
    assert_eq!(train(&[("AGENTGRAPH_TOP_K", "3")], &["--config", p(&config)]), 1, "config beats env");
    assert_eq!(train(&[], &["--config", p(&config), "--set", "top_k=3"]), 0, "flag beats config");
}
