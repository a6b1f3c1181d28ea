//! Scenario files: a self-contained JSON description of one simulation
//! (graph, program, adversary, horizon, checks). Fully deterministic given
//! the file contents.

use crate::adversary::{build, AdversarySpec};
use crate::engine::{run, ExecutionTrace, Round, WorldState};
use crate::generators::{
    build_bh_lowerbound_graph, build_lowerbound_family, build_path, build_random_bounded,
    build_ring, build_tree, ExtKind,
};
use crate::graph::{decompose, GraphError, GraphFile, Instance, NodeId};
use crate::protocols::programs::{Program, ProgramError, ProgramSpec};
use crate::verify::{
    casualty_report, check_anchor_coverage, check_coverage, check_lg_safety,
    check_survivor_knowledge, CasualtyReport, CoverageSpec, Verdict,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Path { n: usize, home: NodeId, bbh: Option<NodeId> },
    Ring { n: usize, home: NodeId, bbh: Option<NodeId> },
    Tree { n: usize, edges: Vec<(NodeId, NodeId)>, home: NodeId, bbh: Option<NodeId> },
    RandomBounded { n: usize, max_degree: usize, seed: u64, home: NodeId, bbh: Option<NodeId> },
    LowerboundFamily { delta: usize, lengths: Vec<usize>, via_w: Vec<bool> },
    BhLowerbound { delta: usize },
}

impl GeneratorSpec {
    pub fn build(&self, k: usize) -> Result<Instance, GraphError> {
        match self {
            GeneratorSpec::Path { n, home, bbh } => build_path(*n, *home, *bbh, k),
            GeneratorSpec::Ring { n, home, bbh } => build_ring(*n, *home, *bbh, k),
            GeneratorSpec::Tree { n, edges, home, bbh } => build_tree(*n, edges, *home, *bbh, k),
            GeneratorSpec::RandomBounded { n, max_degree, seed, home, bbh } => {
                build_random_bounded(*n, *max_degree, *seed, *home, *bbh, k)
            }
            GeneratorSpec::LowerboundFamily { delta, lengths, via_w } => {
                let membership: Vec<ExtKind> = via_w
                    .iter()
                    .map(|w| if *w { ExtKind::ViaW } else { ExtKind::Direct })
                    .collect();
                build_lowerbound_family(*delta, lengths, &membership, k).map(|f| f.instance)
            }
            GeneratorSpec::BhLowerbound { delta } => build_bh_lowerbound_graph(*delta, k),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(untagged)]
pub enum GraphSource {
    File { file: String },
    Generator { generator: GeneratorSpec },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "property", rename_all = "snake_case")]
pub enum CheckSpec {
    Coverage(CoverageSpec),
    SurvivorKnowledge,
    AnchorCoverage,
    LgSafety,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Scenario {
    pub graph: GraphSource,
    pub program: ProgramSpec,
    pub adversary: AdversarySpec,
    pub horizon: Round,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub checks: Vec<CheckSpec>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("program: {0}")]
    Program(#[from] ProgramError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("engine: {0}")]
    Engine(#[from] crate::engine::EngineError),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckResult {
    pub property: String,
    #[serde(flatten)]
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunReport {
    pub horizon: Round,
    pub destruction_time: Option<Round>,
    pub alive: usize,
    pub checks: Vec<CheckResult>,
    pub casualties: CasualtyReport,
    pub all_passed: bool,
}

impl Scenario {
    pub fn from_str(text: &str) -> Result<Scenario, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        let mut sc = Scenario::from_str(&text)?;
        // Resolve a relative graph file against the scenario's directory.
        if let GraphSource::File { file } = &sc.graph {
            let p = std::path::Path::new(file);
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    sc.graph = GraphSource::File { file: dir.join(p).to_string_lossy().into_owned() };
                }
            }
        }
        Ok(sc)
    }

    pub fn instance(&self) -> Result<Instance, ScenarioError> {
        let (mut instance, file_k) = match &self.graph {
            GraphSource::File { file } => {
                let text = std::fs::read_to_string(file)?;
                let gf: GraphFile = serde_json::from_str(&text)?;
                let k = gf.k;
                (gf.to_instance(None)?, k)
            }
            GraphSource::Generator { generator } => (generator.build(1)?, None),
        };
        let delta = instance.graph.max_degree();
        let k = self
            .program
            .k
            .or(file_k)
            .unwrap_or_else(|| self.program.algorithm.default_k(delta));
        instance.k = k;
        Ok(instance)
    }

    /// Runs the scenario and evaluates its checks.
    pub fn execute(&self) -> Result<(Instance, ExecutionTrace, WorldState, RunReport), ScenarioError> {
        let instance = self.instance()?;
        let program = Program::new(&self.program, &instance)?;
        let mut adversary = build(&self.adversary);
        let (trace, world) = run(&instance, &program, &mut adversary, self.horizon)?;
        let schedule: BTreeSet<Round> = trace.activation_rounds().into_iter().collect();
        let decomp = decompose(&instance);
        let mut checks = Vec::new();
        for c in &self.checks {
            let (name, verdict) = match c {
                CheckSpec::Coverage(spec) => (
                    "coverage".to_string(),
                    check_coverage(&world.ledger, self.horizon, &decomp, instance.bbh, spec),
                ),
                CheckSpec::SurvivorKnowledge => (
                    "survivor_knowledge".to_string(),
                    check_survivor_knowledge(&instance, &program, &schedule, self.horizon),
                ),
                CheckSpec::AnchorCoverage => {
                    ("anchor_coverage".to_string(), check_anchor_coverage(&instance, &world))
                }
                CheckSpec::LgSafety => (
                    "lg_safety".to_string(),
                    check_lg_safety(&instance, &program, &schedule, self.horizon),
                ),
            };
            checks.push(CheckResult { property: name, verdict });
        }
        let all_passed = checks.iter().all(|c| c.verdict.passed());
        let report = RunReport {
            horizon: self.horizon,
            destruction_time: world.destruction_time,
            alive: world.alive_count(),
            checks,
            casualties: casualty_report(&trace, &world),
            all_passed,
        };
        Ok((instance, trace, world, report))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_round_trip_and_execute() {
        let text = r#"{
            "graph": {"generator": {"kind": "path", "n": 6, "home": 0, "bbh": 3}},
            "program": {"algorithm": "path6"},
            "adversary": {"kind": "budgeted", "max": 1, "pred": "relevant"},
            "horizon": 900,
            "checks": [
                {"property": "coverage", "target": "home_component", "warmup": 700, "window": 90},
                {"property": "survivor_knowledge"}
            ]
        }"#;
        let sc = Scenario::from_str(text).unwrap();
        let (inst, trace, _, report) = sc.execute().unwrap();
        assert_eq!(inst.k, 6);
        assert!(report.all_passed, "{report:?}");
        assert!(!trace.rounds.is_empty());
        // byte-stable serialization
        let b1 = serde_json::to_string(&sc).unwrap();
        let sc2 = Scenario::from_str(&b1).unwrap();
        assert_eq!(sc, sc2);
    }
}
