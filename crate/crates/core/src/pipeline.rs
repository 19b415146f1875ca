//! String-list pipelines of registered operations, and undoable sessions
//! built on top of them.
//!
//! Every stage reads the previous stage's output as a list of lines and
//! writes a list of lines. Circuits travel as canonical gate lists,
//! documents (layouts, reports, estimates) as pretty-printed JSON.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{self, AnalysisError, FactoryConfig};
use crate::gatelang::{parse_circuit, Circuit, ParseError};
use crate::genio::{self, GenError, ParamKind, ParamSpec};
use crate::layout::{self, BoxSpec, GeometryConfig, LayoutError};
use crate::rewrite::{self, Objective, RewriteError, RuleSet, TemplateSet};
use crate::schedule::{self, ScheduleError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageKind {
    Transformation,
    Analysis,
    VisualisationExport,
}

#[derive(Clone, Debug, Serialize)]
pub struct OpSpec {
    pub op: &'static str,
    pub kind: StageKind,
    pub description: &'static str,
    pub params: Vec<ParamSpec>,
}

const EMIT: ParamSpec = ParamSpec::choice("emit", "auto", &["auto", "report", "circuit"]);

fn factory_params() -> [ParamSpec; 3] {
    [
        ParamSpec::int("duration", "5"),
        ParamSpec::int("concurrent", "1"),
        ParamSpec::flag("warmup", "true"),
    ]
}

fn box_params() -> Vec<ParamSpec> {
    vec![
        ParamSpec::int("dx", "4"),
        ParamSpec::int("dy", "4"),
        ParamSpec::int("dz", "5"),
        ParamSpec::int("concurrent", "1"),
        ParamSpec::int("pitch", "2"),
        ParamSpec::int("qubit_depth", "2"),
        ParamSpec::int("pieces_per_step", "1"),
    ]
}

/// Every operation a stage can name, with its parameters.
pub fn operations() -> Vec<OpSpec> {
    use StageKind::*;
    let mut ops: Vec<OpSpec> = genio::generator_specs()
        .into_iter()
        .map(|g| OpSpec {
            op: match g.name {
                "cnot-ladder" => "generate.cnot-ladder",
                "adder" => "generate.adder",
                _ => "generate.random",
            },
            kind: Transformation,
            description: g.description,
            params: g.params,
        })
        .collect();
    let [duration, concurrent, warmup] = factory_params();
    ops.extend([
        OpSpec {
            op: "import.real",
            kind: Transformation,
            description: "read RevKit .real text (t1/t2/t3 gates)",
            params: vec![],
        },
        OpSpec {
            op: "rewrite",
            kind: Transformation,
            description: "exhaustive breadth-first template optimisation",
            params: vec![
                ParamSpec::text("rules", "default"),
                ParamSpec::choice(
                    "objective",
                    "rules",
                    &["rules", "gate_count", "t_count", "cnot_count", "weighted"],
                ),
                ParamSpec::int("budget", "1000"),
            ],
        },
        OpSpec {
            op: "icm",
            kind: Transformation,
            description: "decompose into init/cx/mz/mx by template expansion",
            params: vec![ParamSpec::text("templates", "default")],
        },
        OpSpec {
            op: "schedule.asap",
            kind: Transformation,
            description: "assign each gate the earliest time after its wires, plus its offset",
            params: vec![],
        },
        OpSpec {
            op: "schedule.reorder-first-use",
            kind: Transformation,
            description: "renumber wires by first use",
            params: vec![],
        },
        OpSpec {
            op: "schedule.swap",
            kind: Transformation,
            description: "exchange two wires",
            params: vec![ParamSpec::int("i", "0"), ParamSpec::int("j", "1")],
        },
        OpSpec {
            op: "schedule.recycle",
            kind: Transformation,
            description: "pack wire lifetimes onto shared tracks",
            params: vec![],
        },
        OpSpec {
            op: "schedule.delay",
            kind: Transformation,
            description: "delay one gate and push its dependents",
            params: vec![ParamSpec::int("index", "0"), ParamSpec::int("delta", "1")],
        },
        OpSpec {
            op: "analyze.t-dist",
            kind: Analysis,
            description: "T consumers per aligned time window",
            params: vec![ParamSpec::int("window", "5"), EMIT],
        },
        OpSpec {
            op: "analyze.availability",
            kind: Analysis,
            description: "simulate distilled T-state supply and delay starved consumers",
            params: vec![duration.clone(), concurrent.clone(), warmup.clone(), EMIT],
        },
        OpSpec {
            op: "analyze.enforce",
            kind: Analysis,
            description: "delay T consumers so no window exceeds the capacity",
            params: vec![
                ParamSpec::int("window", "5"),
                ParamSpec::int("capacity", "1"),
                EMIT,
            ],
        },
        OpSpec {
            op: "analyze.report",
            kind: Analysis,
            description:
                "metrics, histogram and availability in one document (window 0 = duration)",
            params: vec![
                ParamSpec::int("window", "0"),
                duration,
                concurrent,
                warmup,
                EMIT,
            ],
        },
        OpSpec {
            op: "layout.build",
            kind: VisualisationExport,
            description: "place boxes and emit the plumbing layout document",
            params: [box_params(), vec![ParamSpec::flag("cells", "true")]].concat(),
        },
        OpSpec {
            op: "layout.estimate",
            kind: VisualisationExport,
            description: "resource estimate from a layout document or a scheduled ICM circuit",
            params: box_params(),
        },
    ]);
    ops
}

pub fn operation(op: &str) -> Option<OpSpec> {
    operations().into_iter().find(|o| o.op == op)
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("unknown operation `{0}`")]
    UnknownOp(String),
    #[error("bad stage `{stage}`: {msg}")]
    BadStage { stage: String, msg: String },
    #[error("parameter `{name}`: {msg}")]
    BadParam { name: String, msg: String },
    #[error("expected {expected} input, got {got}")]
    WrongInput {
        expected: &'static str,
        got: &'static str,
    },
    #[error("reading {path}: {msg}")]
    Io { path: String, msg: String },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Generate(#[from] GenError),
    #[error(transparent)]
    Rewrite(#[from] RewriteError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

impl PipelineError {
    /// Stable machine-readable name of the error class.
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::UnknownOp(_) => "unknown_op",
            PipelineError::BadStage { .. } => "bad_stage",
            PipelineError::BadParam { .. } => "bad_param",
            PipelineError::WrongInput { .. } => "wrong_input",
            PipelineError::Io { .. } => "io",
            PipelineError::Parse(_) => "parse",
            PipelineError::Generate(_) => "generate",
            PipelineError::Rewrite(_) => "rewrite",
            PipelineError::Schedule(_) => "schedule",
            PipelineError::Analysis(_) => "analysis",
            PipelineError::Layout(_) => "layout",
        }
    }
}

#[derive(Debug, Error)]
#[error("stage {index} (`{stage}`): {source}")]
pub struct StageError {
    pub index: usize,
    pub stage: String,
    #[source]
    pub source: PipelineError,
}

/// Operations that take a sub-operation word: `schedule asap`.
const GROUPS: &[&str] = &["generate", "import", "schedule", "analyze", "layout"];

/// A resolved operation with every parameter filled in.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PipelineStage {
    pub op: String,
    pub kind: StageKind,
    pub params: BTreeMap<String, String>,
}

fn check_value(p: &ParamSpec, value: &str) -> Result<(), String> {
    let ok = match p.kind {
        ParamKind::Int | ParamKind::Seed => value.parse::<u64>().is_ok(),
        ParamKind::Bool => matches!(value, "true" | "false"),
        ParamKind::Enum => p.choices.unwrap_or_default().contains(&value),
        ParamKind::Text => !value.is_empty(),
    };
    if ok {
        Ok(())
    } else {
        Err(match p.choices {
            Some(choices) => format!("`{value}` is not one of {}", choices.join(", ")),
            None => format!("`{value}` is not a valid {:?}", p.kind).to_lowercase(),
        })
    }
}

impl PipelineStage {
    pub fn new<I, K, V>(op: &str, params: I) -> Result<Self, PipelineError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let op = match op {
            "decompose.icm" => "icm",
            other => other,
        };
        let spec = operation(op).ok_or_else(|| PipelineError::UnknownOp(op.to_string()))?;
        let mut given: BTreeMap<String, String> = BTreeMap::new();
        for (k, v) in params {
            let (k, v) = (k.into(), v.into());
            if given.insert(k.clone(), v).is_some() {
                return Err(PipelineError::BadParam {
                    name: k,
                    msg: "given twice".into(),
                });
            }
        }
        let mut filled = BTreeMap::new();
        for p in &spec.params {
            let value = given
                .remove(p.name)
                .unwrap_or_else(|| p.default.to_string());
            check_value(p, &value).map_err(|msg| PipelineError::BadParam {
                name: p.name.to_string(),
                msg,
            })?;
            filled.insert(p.name.to_string(), value);
        }
        if let Some(name) = given.into_keys().next() {
            return Err(PipelineError::BadParam {
                name,
                msg: format!("not a parameter of {op}"),
            });
        }
        Ok(PipelineStage {
            op: spec.op.to_string(),
            kind: spec.kind,
            params: filled,
        })
    }

    /// Parses `name [sub] key=value ...`.
    pub fn parse(line: &str) -> Result<Self, PipelineError> {
        let bad = |msg: &str| PipelineError::BadStage {
            stage: line.to_string(),
            msg: msg.to_string(),
        };
        let mut tokens = line.split_whitespace().peekable();
        let head = tokens.next().ok_or_else(|| bad("empty stage"))?;
        let op = if GROUPS.contains(&head) || head == "decompose" {
            match tokens.peek() {
                Some(sub) if !sub.contains('=') => format!("{head}.{}", tokens.next().unwrap()),
                _ => return Err(bad("missing sub-operation")),
            }
        } else {
            head.to_string()
        };
        let mut params = Vec::new();
        for t in tokens {
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| bad(&format!("expected key=value, got `{t}`")))?;
            params.push((k.to_string(), v.to_string()));
        }
        PipelineStage::new(&op, params)
    }

    fn int(&self, name: &str) -> u64 {
        self.params[name].parse().expect("validated")
    }

    fn flag(&self, name: &str) -> bool {
        self.params[name] == "true"
    }

    fn text(&self, name: &str) -> &str {
        &self.params[name]
    }

    fn positive(&self, name: &str) -> Result<u64, PipelineError> {
        match self.int(name) {
            0 => Err(PipelineError::BadParam {
                name: name.to_string(),
                msg: "must be at least 1".into(),
            }),
            v => Ok(v),
        }
    }
}

/// Canonical plan-line form, sub-operation spelled with a space.
impl fmt::Display for PipelineStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.op.replacen('.', " ", 1))?;
        for (k, v) in &self.params {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

/// Stages as sent over the wire: a plan line or an object.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum StageRequest {
    Line(String),
    Object {
        op: String,
        #[serde(default)]
        params: BTreeMap<String, serde_json::Value>,
    },
}

impl StageRequest {
    pub fn resolve(&self) -> Result<PipelineStage, PipelineError> {
        match self {
            StageRequest::Line(line) => PipelineStage::parse(line),
            StageRequest::Object { op, params } => PipelineStage::new(
                op,
                params.iter().map(|(k, v)| {
                    let v = match v {
                        serde_json::Value::String(s) => s.clone(),
                        other => other.to_string(),
                    };
                    (k.clone(), v)
                }),
            ),
        }
    }
}

/// Reads a plan: one stage per line, `#` comments.
pub fn parse_plan(text: &str) -> Result<Vec<PipelineStage>, StageError> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or_default().trim())
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(index, l)| {
            PipelineStage::parse(l).map_err(|source| StageError {
                index,
                stage: l.to_string(),
                source,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArtifactKind {
    Circuit,
    Layout,
    Report,
    Estimate,
    Rules,
}

impl ArtifactKind {
    pub fn name(self) -> &'static str {
        match self {
            ArtifactKind::Circuit => "circuit",
            ArtifactKind::Layout => "layout",
            ArtifactKind::Report => "report",
            ArtifactKind::Estimate => "estimate",
            ArtifactKind::Rules => "rules",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        [
            ArtifactKind::Circuit,
            ArtifactKind::Layout,
            ArtifactKind::Report,
            ArtifactKind::Estimate,
            ArtifactKind::Rules,
        ]
        .into_iter()
        .find(|k| k.name() == name)
    }

    pub fn file_name(self) -> &'static str {
        match self {
            ArtifactKind::Circuit => "circuit.qlist",
            ArtifactKind::Layout => "layout.json",
            ArtifactKind::Report => "report.json",
            ArtifactKind::Estimate => "estimate.json",
            ArtifactKind::Rules => "rules.qrules",
        }
    }
}

/// Guesses what a list of lines holds.
pub fn classify(lines: &[String]) -> ArtifactKind {
    let first = lines
        .iter()
        .map(|l| l.trim())
        .find(|l| !l.is_empty() && !l.starts_with('#'));
    match first {
        Some(l) if l.starts_with('{') => {
            let doc = lines.join("\n");
            match serde_json::from_str::<serde_json::Value>(&doc) {
                Ok(v) if v.get("tracks").is_some() => ArtifactKind::Layout,
                Ok(v) if v.get("bounding_volume").is_some() => ArtifactKind::Estimate,
                _ => ArtifactKind::Report,
            }
        }
        Some(l) if l.starts_with("rule ") || l.starts_with("objective ") => ArtifactKind::Rules,
        _ => ArtifactKind::Circuit,
    }
}

fn json_lines<T: Serialize>(value: &T) -> Vec<String> {
    serde_json::to_string_pretty(value)
        .expect("documents serialise")
        .lines()
        .map(str::to_string)
        .collect()
}

fn read_circuit(input: &[String]) -> Result<Circuit, PipelineError> {
    match classify(input) {
        ArtifactKind::Circuit => Ok(schedule::settle(&parse_circuit(input)?)?),
        other => Err(PipelineError::WrongInput {
            expected: "circuit",
            got: other.name(),
        }),
    }
}

fn load_text(path: &str) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|e| PipelineError::Io {
        path: path.to_string(),
        msg: e.to_string(),
    })
}

fn load_rules(source: &str, default: &str) -> Result<RuleSet, PipelineError> {
    let text = match source {
        "default" => default.to_string(),
        path => load_text(path)?,
    };
    Ok(RuleSet::parse(&text)?)
}

fn factory(stage: &PipelineStage) -> Result<FactoryConfig, PipelineError> {
    Ok(FactoryConfig {
        duration: stage.positive("duration")?,
        concurrent: stage.positive("concurrent")?,
        warmup: stage.flag("warmup"),
    })
}

fn boxes(stage: &PipelineStage) -> Result<(BoxSpec, u64, GeometryConfig), PipelineError> {
    let spec = BoxSpec {
        dx: stage.positive("dx")?,
        dy: stage.positive("dy")?,
        dz: stage.positive("dz")?,
    };
    let geometry = GeometryConfig {
        pitch: stage.int("pitch"),
        qubit_depth: stage.positive("qubit_depth")?,
        pieces_per_step: stage.positive("pieces_per_step")?,
    };
    geometry.validate()?;
    Ok((spec, stage.positive("concurrent")?, geometry))
}

/// What one stage produced. Analyses yield both a document and the
/// circuit with their delays pending.
#[derive(Clone, Debug)]
pub struct StageOutput {
    pub kind: ArtifactKind,
    pub lines: Vec<String>,
    pub circuit: Option<Vec<String>>,
}

impl StageOutput {
    fn circuit(c: &Circuit) -> Self {
        StageOutput {
            kind: ArtifactKind::Circuit,
            lines: c.to_lines(),
            circuit: None,
        }
    }

    fn document<T: Serialize>(kind: ArtifactKind, value: &T) -> Self {
        StageOutput {
            kind,
            lines: json_lines(value),
            circuit: None,
        }
    }

    fn analysis<T: Serialize>(value: &T, pending: Circuit) -> Self {
        StageOutput {
            kind: ArtifactKind::Report,
            lines: json_lines(value),
            circuit: Some(pending.to_lines()),
        }
    }

    /// The lines handed to the next stage, or returned if `terminal`.
    pub fn emitted(self, stage: &PipelineStage, terminal: bool) -> Vec<String> {
        let Some(circuit) = self.circuit else {
            return self.lines;
        };
        match stage.params.get("emit").map(String::as_str) {
            Some("report") => self.lines,
            Some("circuit") => circuit,
            _ if terminal => self.lines,
            _ => circuit,
        }
    }
}

#[derive(Serialize)]
struct EnforceDoc<'a> {
    window: u64,
    capacity: u64,
    histogram: analysis::TDistribution,
    delays_applied: &'a [schedule::DelayRecord],
}

#[derive(Serialize)]
struct AvailabilityDoc<'a> {
    availability: analysis::AvailabilityTrace,
    delays_applied: &'a [schedule::DelayRecord],
}

/// Runs one stage on `input`.
pub fn run_stage(stage: &PipelineStage, input: &[String]) -> Result<StageOutput, PipelineError> {
    let out = match stage.op.as_str() {
        "generate.cnot-ladder" => {
            StageOutput::circuit(&genio::gen_cnot_ladder(stage.int("n") as usize)?)
        }
        "generate.adder" => StageOutput::circuit(&genio::gen_adder(stage.int("n") as usize)?),
        "generate.random" => StageOutput::circuit(&genio::gen_random_cliffordt(
            stage.int("n") as usize,
            stage.int("m") as usize,
            stage.int("seed"),
        )?),
        "import.real" => StageOutput::circuit(&genio::import_real(&input.join("\n"))?),
        "rewrite" => {
            let mut rules = load_rules(stage.text("rules"), rewrite::OPT_DEFAULT_RULES)?;
            match stage.text("objective") {
                "rules" => {}
                name => rules.objective = Objective::parse(name).expect("validated choice"),
            }
            let budget = stage.int("budget") as usize;
            let (c, _) = rewrite::exhaustive_optimize(&read_circuit(input)?, &rules, budget)?;
            StageOutput::circuit(&c)
        }
        "icm" => {
            let rules = load_rules(stage.text("templates"), rewrite::ICM_DEFAULT_RULES)?;
            let templates = TemplateSet::new(rules)?;
            StageOutput::circuit(&rewrite::decompose_to_icm(
                &read_circuit(input)?,
                &templates,
            )?)
        }
        "schedule.asap" => StageOutput::circuit(&schedule::schedule_asap(&read_circuit(input)?)?),
        "schedule.reorder-first-use" => {
            let (c, p) = schedule::reorder_first_use(&read_circuit(input)?);
            let mut c = c;
            if !p.is_identity() {
                let map: Vec<String> = p.map.iter().map(usize::to_string).collect();
                c.metadata.insert("reorder.map".into(), map.join(" "));
            }
            StageOutput::circuit(&c)
        }
        "schedule.swap" => StageOutput::circuit(&schedule::swap_wires(
            &read_circuit(input)?,
            stage.int("i") as usize,
            stage.int("j") as usize,
        )?),
        "schedule.recycle" => {
            StageOutput::circuit(&schedule::recycle_wires(&read_circuit(input)?)?.0)
        }
        "schedule.delay" => StageOutput::circuit(&schedule::delay_gate(
            &read_circuit(input)?,
            stage.int("index") as usize,
            stage.int("delta"),
        )?),
        "analyze.t-dist" => {
            let c = read_circuit(input)?;
            let h = analysis::t_histogram(&c, stage.positive("window")?)?;
            StageOutput::analysis(&h, c)
        }
        "analyze.enforce" => {
            let c = read_circuit(input)?;
            let (window, capacity) = (stage.positive("window")?, stage.positive("capacity")?);
            let r = analysis::enforce_t_capacity(&c, window, capacity)?;
            let doc = EnforceDoc {
                window,
                capacity,
                histogram: analysis::t_histogram(&r.circuit, window)?,
                delays_applied: &r.delays,
            };
            StageOutput::analysis(&doc, r.as_pending(&c))
        }
        "analyze.availability" => {
            let c = read_circuit(input)?;
            let a = analysis::simulate_availability(&c, factory(stage)?)?;
            let doc = AvailabilityDoc {
                availability: a.trace,
                delays_applied: &a.retimed.delays,
            };
            StageOutput::analysis(&doc, a.retimed.as_pending(&c))
        }
        "analyze.report" => {
            let c = read_circuit(input)?;
            let window = Some(stage.int("window")).filter(|&w| w > 0);
            let (report, retimed) = analysis::analysis_report(&c, window, factory(stage)?)?;
            StageOutput::analysis(&report, retimed.as_pending(&c))
        }
        "layout.build" => {
            let (spec, concurrent, geometry) = boxes(stage)?;
            let c = read_circuit(input)?;
            let (l, _) =
                layout::layout_circuit(&c, spec, concurrent, &geometry, stage.flag("cells"))?;
            StageOutput {
                kind: ArtifactKind::Layout,
                lines: layout::export_layout(&l)
                    .lines()
                    .map(str::to_string)
                    .collect(),
                circuit: None,
            }
        }
        "layout.estimate" => {
            let estimate = match classify(input) {
                ArtifactKind::Layout => layout::import_layout(&input.join("\n"))?.estimate,
                _ => {
                    let (spec, concurrent, geometry) = boxes(stage)?;
                    let c = read_circuit(input)?;
                    layout::layout_circuit(&c, spec, concurrent, &geometry, false)?
                        .0
                        .estimate
                }
            };
            StageOutput::document(ArtifactKind::Estimate, &estimate)
        }
        other => return Err(PipelineError::UnknownOp(other.to_string())),
    };
    Ok(out)
}

/// Feeds `input` through `stages` in order and returns the last output.
pub fn run_pipeline(
    stages: &[PipelineStage],
    input: Vec<String>,
) -> Result<Vec<String>, StageError> {
    let mut current = input;
    for (index, stage) in stages.iter().enumerate() {
        let out = run_stage(stage, &current).map_err(|source| StageError {
            index,
            stage: stage.to_string(),
            source,
        })?;
        current = out.emitted(stage, index + 1 == stages.len());
    }
    Ok(current)
}

/// Lines as file bytes: newline-terminated.
pub fn to_bytes(lines: &[String]) -> String {
    let mut text = lines.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    text
}

pub fn digest(bytes: &str) -> String {
    hex::encode(Sha256::digest(bytes.as_bytes()))
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("no session `{0}`")]
    NoSession(String),
    #[error("session has no {0}")]
    NotFound(&'static str),
    #[error("unknown artifact `{0}`")]
    UnknownArtifact(String),
    #[error("nothing to undo")]
    NothingToUndo,
    #[error("nothing to redo")]
    NothingToRedo,
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Stage(#[from] StageError),
}

/// Artifact digests current at one point in a session.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Snapshot {
    pub handles: BTreeMap<ArtifactKind, String>,
    /// Kind of the most recent output.
    pub head: Option<ArtifactKind>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HistoryEntry {
    pub action: String,
    pub stage: Option<String>,
    pub input: Option<String>,
    pub output: Option<String>,
}

#[derive(Debug, Default)]
pub struct Session {
    pub id: String,
    snapshots: Vec<Snapshot>,
    cursor: usize,
    history: Vec<HistoryEntry>,
    artifacts: HashMap<String, Arc<String>>,
    persist: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SessionView {
    pub id: String,
    pub state: String,
    pub snapshot: Snapshot,
    pub position: usize,
    pub snapshots: usize,
    pub history: Vec<HistoryEntry>,
}

impl Session {
    fn new(id: String, persist: Option<PathBuf>) -> Self {
        Session {
            id,
            snapshots: vec![Snapshot::default()],
            persist,
            ..Default::default()
        }
    }

    pub fn current(&self) -> &Snapshot {
        &self.snapshots[self.cursor]
    }

    /// Digest identifying the current state.
    pub fn state_digest(&self) -> String {
        digest(&serde_json::to_string(self.current()).expect("snapshot serialises"))
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            id: self.id.clone(),
            state: self.state_digest(),
            snapshot: self.current().clone(),
            position: self.cursor,
            snapshots: self.snapshots.len(),
            history: self.history.clone(),
        }
    }

    fn store(&mut self, bytes: String) -> String {
        let key = digest(&bytes);
        if let Some(dir) = &self.persist {
            // best effort; the in-memory copy is authoritative
            let _ =
                std::fs::create_dir_all(dir).and_then(|_| std::fs::write(dir.join(&key), &bytes));
        }
        self.artifacts
            .entry(key.clone())
            .or_insert_with(|| Arc::new(bytes));
        key
    }

    pub fn artifact(&self, kind: ArtifactKind) -> Result<Arc<String>, SessionError> {
        let key = self
            .current()
            .handles
            .get(&kind)
            .ok_or(SessionError::NotFound(kind.name()))?;
        Ok(self.artifacts[key].clone())
    }

    fn lines(&self, kind: ArtifactKind) -> Option<Vec<String>> {
        self.artifact(kind)
            .ok()
            .map(|text| text.lines().map(str::to_string).collect())
    }

    fn push(&mut self, next: Snapshot, entry: HistoryEntry) {
        self.snapshots.truncate(self.cursor + 1);
        self.snapshots.push(next);
        self.cursor += 1;
        self.history.push(entry);
    }

    /// Runs one stage against the session's current artifacts.
    pub fn apply(&mut self, stage: &PipelineStage) -> Result<SessionView, SessionError> {
        let accepts_layout = stage.op == "layout.estimate";
        let input_kind = match self.current().head {
            Some(ArtifactKind::Layout) if accepts_layout => Some(ArtifactKind::Layout),
            _ if self.current().handles.contains_key(&ArtifactKind::Circuit) => {
                Some(ArtifactKind::Circuit)
            }
            _ => None,
        };
        let input = input_kind.and_then(|k| self.lines(k)).unwrap_or_default();
        let input_digest = input_kind.and_then(|k| self.current().handles.get(&k).cloned());
        let out = run_stage(stage, &input).map_err(|source| StageError {
            index: 0,
            stage: stage.to_string(),
            source,
        })?;
        let mut next = self.current().clone();
        if let Some(circuit) = &out.circuit {
            let key = self.store(to_bytes(circuit));
            next.handles.insert(ArtifactKind::Circuit, key);
        }
        let key = self.store(to_bytes(&out.lines));
        next.handles.insert(out.kind, key.clone());
        next.head = Some(out.kind);
        self.push(
            next,
            HistoryEntry {
                action: "apply".into(),
                stage: Some(stage.to_string()),
                input: input_digest,
                output: Some(key),
            },
        );
        Ok(self.view())
    }

    /// Replaces an artifact with uploaded text, stored in canonical form.
    pub fn upload(&mut self, kind: ArtifactKind, text: &str) -> Result<SessionView, SessionError> {
        let canonical = match kind {
            ArtifactKind::Circuit => {
                let lines: Vec<&str> = text.lines().collect();
                parse_circuit(&lines)
                    .map_err(PipelineError::from)?
                    .to_text()
            }
            ArtifactKind::Layout => {
                let l = layout::import_layout(text).map_err(PipelineError::from)?;
                to_bytes(
                    &layout::export_layout(&l)
                        .lines()
                        .map(str::to_string)
                        .collect::<Vec<_>>(),
                )
            }
            ArtifactKind::Rules => RuleSet::parse(text)
                .map_err(PipelineError::from)?
                .to_string(),
            ArtifactKind::Report | ArtifactKind::Estimate => {
                let v: serde_json::Value =
                    serde_json::from_str(text).map_err(|e| PipelineError::BadStage {
                        stage: "upload".into(),
                        msg: e.to_string(),
                    })?;
                to_bytes(&json_lines(&v))
            }
        };
        let key = self.store(canonical);
        let mut next = self.current().clone();
        next.handles.insert(kind, key.clone());
        next.head = Some(kind);
        self.push(
            next,
            HistoryEntry {
                action: "upload".into(),
                stage: None,
                input: None,
                output: Some(key),
            },
        );
        Ok(self.view())
    }

    pub fn undo(&mut self) -> Result<SessionView, SessionError> {
        if self.cursor == 0 {
            return Err(SessionError::NothingToUndo);
        }
        self.cursor -= 1;
        self.record("undo");
        Ok(self.view())
    }

    pub fn redo(&mut self) -> Result<SessionView, SessionError> {
        if self.cursor + 1 >= self.snapshots.len() {
            return Err(SessionError::NothingToRedo);
        }
        self.cursor += 1;
        self.record("redo");
        Ok(self.view())
    }

    fn record(&mut self, action: &str) {
        self.history.push(HistoryEntry {
            action: action.into(),
            stage: None,
            input: None,
            output: Some(self.state_digest()),
        });
    }
}

/// In-memory sessions, each behind its own lock so mutations within a
/// session are ordered while sessions proceed independently.
#[derive(Debug, Default)]
pub struct SessionStore {
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    next: Mutex<u64>,
    persist: Option<PathBuf>,
}

impl SessionStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Also writes every artifact to `dir/<digest>`.
    pub fn with_dir(dir: impl Into<PathBuf>) -> Self {
        SessionStore {
            persist: Some(dir.into()),
            ..Default::default()
        }
    }

    pub fn create(&self) -> String {
        let id = {
            let mut next = self.next.lock().expect("session counter");
            *next += 1;
            format!("s{}", *next)
        };
        let session = Session::new(id.clone(), self.persist.clone());
        self.sessions
            .write()
            .expect("session table")
            .insert(id.clone(), Arc::new(Mutex::new(session)));
        id
    }

    pub fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>, SessionError> {
        self.sessions
            .read()
            .expect("session table")
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::NoSession(id.to_string()))
    }

    /// Runs `f` with the session locked.
    pub fn with<T>(
        &self,
        id: &str,
        f: impl FnOnce(&mut Session) -> Result<T, SessionError>,
    ) -> Result<T, SessionError> {
        let session = self.get(id)?;
        let mut guard = session.lock().unwrap_or_else(|e| e.into_inner());
        f(&mut guard)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stages(lines: &[&str]) -> Vec<PipelineStage> {
        lines
            .iter()
            .map(|l| PipelineStage::parse(l).unwrap())
            .collect()
    }

    #[test]
    fn empty_pipeline_is_identity() {
        let input = vec!["cx 0 1|0".to_string()];
        assert_eq!(run_pipeline(&[], input.clone()).unwrap(), input);
    }

    #[test]
    fn ladder_stage() {
        let out = run_pipeline(&stages(&["generate cnot-ladder n=2"]), vec![]).unwrap();
        assert!(out.contains(&"cx 0 1|0".to_string()));
    }

    #[test]
    fn stage_parsing() {
        let s = PipelineStage::parse("schedule swap i=2 j=3").unwrap();
        assert_eq!(s.op, "schedule.swap");
        assert_eq!(s.to_string(), "schedule swap i=2 j=3");
        assert_eq!(PipelineStage::parse("decompose icm").unwrap().op, "icm");
        assert_eq!(
            PipelineStage::parse("schedule.asap").unwrap().op,
            "schedule.asap"
        );
        for bad in [
            "",
            "schedule",
            "schedule fly",
            "generate adder n=x",
            "icm colour=red",
            "rewrite budget",
        ] {
            assert!(PipelineStage::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn stage_errors_carry_index() {
        let err =
            run_pipeline(&stages(&["generate adder n=2", "analyze t-dist"]), vec![]).unwrap_err();
        assert_eq!(err.index, 1);
        assert!(matches!(
            err.source,
            PipelineError::Analysis(AnalysisError::Unscheduled)
        ));
    }

    #[test]
    fn composed_equals_staged() {
        let plan = [
            "generate adder n=4",
            "decompose icm",
            "schedule asap",
            "analyze availability",
            "layout build",
            "layout estimate",
        ];
        let composed = run_pipeline(&stages(&plan), vec![]).unwrap();
        // run alone, an analysis stage is terminal and must be told to pass the circuit on
        let mut staged = vec![];
        for line in plan {
            let line = match line {
                "analyze availability" => "analyze availability emit=circuit",
                other => other,
            };
            staged = run_pipeline(&stages(&[line]), staged).unwrap();
        }
        assert_eq!(composed, staged);
        assert_eq!(classify(&composed), ArtifactKind::Estimate);
    }

    #[test]
    fn analysis_mid_pipeline_passes_delays() {
        let out = run_pipeline(
            &stages(&[
                "generate random n=3 m=30 seed=2",
                "schedule asap",
                "analyze enforce window=3",
            ]),
            vec![],
        )
        .unwrap();
        assert_eq!(classify(&out), ArtifactKind::Report);
        let out = run_pipeline(
            &stages(&[
                "generate random n=3 m=30 seed=2",
                "schedule asap",
                "analyze enforce window=3",
                "analyze t-dist window=3 emit=report",
            ]),
            vec![],
        )
        .unwrap();
        let h: analysis::TDistribution = serde_json::from_str(&out.join("\n")).unwrap();
        assert!(h.bins.iter().all(|b| b.1 <= 1));
    }

    #[test]
    fn session_undo_redo() {
        let store = SessionStore::new();
        let id = store.create();
        let before = store.with(&id, |s| Ok(s.state_digest())).unwrap();
        let gen = PipelineStage::parse("generate adder n=2").unwrap();
        store.with(&id, |s| s.apply(&gen)).unwrap();
        let after = store.with(&id, |s| Ok(s.state_digest())).unwrap();
        assert_ne!(before, after);
        assert_eq!(store.with(&id, |s| s.undo()).unwrap().state, before);
        assert_eq!(store.with(&id, |s| s.redo()).unwrap().state, after);
        assert!(matches!(
            store.with(&id, |s| s.redo()),
            Err(SessionError::NothingToRedo)
        ));
        assert!(matches!(store.get("nope"), Err(SessionError::NoSession(_))));
    }

    #[test]
    fn upload_round_trip() {
        let store = SessionStore::new();
        let id = store.create();
        let gen = PipelineStage::parse("generate random n=3 m=10 seed=4").unwrap();
        store.with(&id, |s| s.apply(&gen)).unwrap();
        let saved = store
            .with(&id, |s| s.artifact(ArtifactKind::Circuit))
            .unwrap();
        store
            .with(&id, |s| s.upload(ArtifactKind::Circuit, &saved))
            .unwrap();
        let again = store
            .with(&id, |s| s.artifact(ArtifactKind::Circuit))
            .unwrap();
        assert_eq!(saved, again);
    }

    #[test]
    fn ops_have_defaults_that_validate() {
        for op in operations() {
            PipelineStage::new(op.op, std::iter::empty::<(String, String)>()).unwrap();
        }
    }
}
