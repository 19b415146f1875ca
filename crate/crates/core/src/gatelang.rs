//! The textual gate-list language and the in-memory circuit model.
//!
//! A circuit travels between pipeline stages as a list of strings, one gate
//! per line. Gates are either *unscheduled* (`cx 4 0|0`, placed relative to
//! their predecessors with a signed offset) or *scheduled* (`1@cx 4 0`,
//! pinned to an absolute time coordinate starting at 1).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a quantum wire.
pub type WireId = usize;
/// Time coordinate along the circuit's time axis. The first slot is 1.
pub type Time = u64;

/// Kinds the toolkit knows the arity of. Anything else is accepted with the
/// arity inferred from the operand count unless strict parsing is requested.
const KNOWN_KINDS: &[(&str, usize)] = &[
    ("cx", 2),
    ("ccx", 3),
    ("h", 1),
    ("s", 1),
    ("sdg", 1),
    ("t", 1),
    ("tdg", 1),
    ("x", 1),
    ("y", 1),
    ("z", 1),
    ("init", 1),
    ("mz", 1),
    ("mx", 1),
];

/// Gate kinds that make up the initialisation/CNOT/measurement form.
pub const ICM_KINDS: &[&str] = &["init", "cx", "mz", "mx"];

/// State label carried by the `init` gate that consumes a distilled T state.
pub const MAGIC_STATE_LABEL: &str = "A";

pub fn known_arity(name: &str) -> Option<usize> {
    KNOWN_KINDS
        .iter()
        .find(|(kind, _)| *kind == name)
        .map(|(_, arity)| *arity)
}

pub fn is_icm_kind(name: &str) -> bool {
    ICM_KINDS.contains(&name)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GateError {
    #[error("malformed line: {0}")]
    MalformedLine(String),
    #[error("wire {0} appears more than once in one gate")]
    DuplicateOperand(WireId),
    #[error("time coordinate {0} is below 1")]
    NegativeTime(i64),
    #[error("unknown gate kind `{0}`")]
    UnknownKind(String),
}

/// A [`GateError`] tagged with the 1-based line it came from.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {source}")]
pub struct ParseError {
    pub line: usize,
    #[source]
    pub source: GateError,
}

/// Operation name plus the optional state label (`init` only).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GateKind {
    pub name: String,
    pub payload: Option<String>,
}

impl GateKind {
    pub fn new(name: impl Into<String>) -> Self {
        GateKind {
            name: name.into(),
            payload: None,
        }
    }

    pub fn with_payload(name: impl Into<String>, payload: impl Into<String>) -> Self {
        GateKind {
            name: name.into(),
            payload: Some(payload.into()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Schedule {
    Unscheduled { offset: i64 },
    Scheduled { time: Time },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Gate {
    pub kind: GateKind,
    pub operands: Vec<WireId>,
    pub schedule: Schedule,
}

impl Gate {
    pub fn unscheduled(kind: GateKind, operands: Vec<WireId>, offset: i64) -> Self {
        Gate {
            kind,
            operands,
            schedule: Schedule::Unscheduled { offset },
        }
    }

    pub fn scheduled(kind: GateKind, operands: Vec<WireId>, time: Time) -> Self {
        Gate {
            kind,
            operands,
            schedule: Schedule::Scheduled { time },
        }
    }

    pub fn name(&self) -> &str {
        &self.kind.name
    }

    pub fn time(&self) -> Option<Time> {
        match self.schedule {
            Schedule::Scheduled { time } => Some(time),
            Schedule::Unscheduled { .. } => None,
        }
    }

    pub fn is_scheduled(&self) -> bool {
        matches!(self.schedule, Schedule::Scheduled { .. })
    }

    pub fn is_t(&self) -> bool {
        matches!(self.name(), "t" | "tdg")
    }

    pub fn is_cnot(&self) -> bool {
        self.name() == "cx"
    }

    /// `init` of a distilled magic state, i.e. the ICM image of a T gate.
    pub fn is_magic_init(&self) -> bool {
        self.name() == "init" && self.kind.payload.as_deref() == Some(MAGIC_STATE_LABEL)
    }

    /// Gates that consume one distilled T state when executed.
    pub fn is_t_consumer(&self) -> bool {
        self.is_t() || self.is_magic_init()
    }

    pub fn is_measurement(&self) -> bool {
        matches!(self.name(), "mz" | "mx")
    }

    pub fn touches(&self, wire: WireId) -> bool {
        self.operands.contains(&wire)
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Schedule::Scheduled { time } = self.schedule {
            write!(f, "{time}@")?;
        }
        f.write_str(&self.kind.name)?;
        for (i, w) in self.operands.iter().enumerate() {
            write!(f, " {w}")?;
            if i == 0 {
                if let Some(label) = &self.kind.payload {
                    write!(f, " {label}")?;
                }
            }
        }
        if let Schedule::Unscheduled { offset } = self.schedule {
            write!(f, "|{offset}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Reject kinds outside the built-in table.
    pub strict_kinds: bool,
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(at) => &line[..at],
        None => line,
    }
    .trim()
}

fn malformed(msg: impl Into<String>) -> GateError {
    GateError::MalformedLine(msg.into())
}

fn valid_kind_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

fn valid_label(label: &str) -> bool {
    !label.is_empty()
        && !label.starts_with(|c: char| c.is_ascii_digit() || c == '-')
        && label
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '+' || c == '-')
}

/// Parses one gate line with default (non-strict) options.
pub fn parse_gate(line: &str) -> Result<Gate, GateError> {
    parse_gate_with(line, ParseOptions::default())
}

pub fn parse_gate_with(line: &str, opts: ParseOptions) -> Result<Gate, GateError> {
    let line = strip_comment(line);
    if line.is_empty() {
        return Err(malformed("empty gate line"));
    }

    let (time, rest) = match line.split_once('@') {
        Some((time, rest)) => {
            let time: i64 = time
                .trim()
                .parse()
                .map_err(|_| malformed(format!("bad time coordinate `{}`", time.trim())))?;
            if time < 1 {
                return Err(GateError::NegativeTime(time));
            }
            (Some(time as Time), rest)
        }
        None => (None, line),
    };

    let (body, offset) = match rest.split_once('|') {
        Some((body, offset)) => {
            if time.is_some() {
                return Err(malformed("a scheduled gate cannot carry an offset"));
            }
            let offset: i64 = offset
                .trim()
                .parse()
                .map_err(|_| malformed(format!("bad offset `{}`", offset.trim())))?;
            (body, offset)
        }
        None => (rest, 0),
    };

    let mut tokens = body.split_whitespace();
    let name = tokens
        .next()
        .ok_or_else(|| malformed("missing gate kind"))?;
    if !valid_kind_name(name) {
        return Err(malformed(format!("invalid gate kind `{name}`")));
    }
    let arity = known_arity(name);
    if arity.is_none() && opts.strict_kinds {
        return Err(GateError::UnknownKind(name.to_string()));
    }

    let mut operands = Vec::new();
    let mut payload = None;
    for (pos, token) in tokens.enumerate() {
        match token.parse::<WireId>() {
            Ok(w) => operands.push(w),
            Err(_) if name == "init" && pos == 1 && valid_label(token) => {
                payload = Some(token.to_string());
            }
            Err(_) => return Err(malformed(format!("bad operand `{token}`"))),
        }
    }
    if operands.is_empty() {
        return Err(malformed(format!("`{name}` has no operands")));
    }
    if let Some(arity) = arity {
        if operands.len() != arity {
            return Err(malformed(format!(
                "`{name}` takes {arity} operand(s), got {}",
                operands.len()
            )));
        }
    }
    for (i, w) in operands.iter().enumerate() {
        if operands[..i].contains(w) {
            return Err(GateError::DuplicateOperand(*w));
        }
    }

    let kind = GateKind {
        name: name.to_string(),
        payload,
    };
    Ok(match time {
        Some(time) => Gate::scheduled(kind, operands, time),
        None => Gate::unscheduled(kind, operands, offset),
    })
}

pub fn serialize_gate(g: &Gate) -> String {
    g.to_string()
}

/// A pending `delay_gate` request emitted by an analysis stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct DelayDirective {
    pub index: usize,
    pub delta: Time,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Circuit {
    pub gates: Vec<Gate>,
    pub wire_count: usize,
    pub wire_names: Option<Vec<String>>,
    pub metadata: BTreeMap<String, String>,
    /// Delays requested by an upstream analysis, not yet applied.
    pub pending_delays: Vec<DelayDirective>,
}

impl Circuit {
    pub fn new(wire_count: usize) -> Self {
        Circuit {
            wire_count,
            ..Default::default()
        }
    }

    /// Builds a circuit whose wire count is inferred from the operands.
    pub fn from_gates(gates: Vec<Gate>) -> Self {
        let wire_count = gates
            .iter()
            .flat_map(|g| g.operands.iter())
            .max()
            .map_or(0, |w| w + 1);
        Circuit {
            gates,
            wire_count,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// True when every gate carries a time coordinate (vacuously for empty).
    pub fn is_scheduled(&self) -> bool {
        self.gates.iter().all(Gate::is_scheduled)
    }

    /// True when no gate carries a time coordinate (vacuously for empty).
    pub fn is_unscheduled(&self) -> bool {
        !self.gates.iter().any(Gate::is_scheduled)
    }

    pub fn depth(&self) -> Option<Time> {
        if !self.is_scheduled() {
            return None;
        }
        Some(self.gates.iter().filter_map(Gate::time).max().unwrap_or(0))
    }

    /// Adds a fresh wire and returns its id.
    pub fn add_wire(&mut self, name: Option<&str>) -> WireId {
        let id = self.wire_count;
        self.wire_count += 1;
        if let Some(names) = &mut self.wire_names {
            names.push(name.map_or_else(|| format!("w{id}"), str::to_string));
        }
        id
    }

    /// Checks operand bounds and distinctness.
    pub fn validate(&self) -> Result<(), GateError> {
        for g in &self.gates {
            for (i, &w) in g.operands.iter().enumerate() {
                if w >= self.wire_count {
                    return Err(malformed(format!(
                        "operand {w} out of range for {} wires",
                        self.wire_count
                    )));
                }
                if g.operands[..i].contains(&w) {
                    return Err(GateError::DuplicateOperand(w));
                }
            }
        }
        if let Some(names) = &self.wire_names {
            if names.len() != self.wire_count {
                return Err(malformed("wire name count differs from wire count"));
            }
        }
        Ok(())
    }

    /// Canonical text form, one entry per line.
    pub fn to_lines(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.gates.len() + 4);
        out.push(format!(".wires {}", self.wire_count));
        if let Some(name) = self.metadata.get("name") {
            out.push(format!(".name {name}"));
        }
        if let Some(names) = &self.wire_names {
            out.push(format!(".wirenames {}", names.join(" ")));
        }
        for (key, value) in &self.metadata {
            if key != "name" {
                out.push(format!(".meta {key} {value}"));
            }
        }
        out.extend(self.gates.iter().map(Gate::to_string));
        out.extend(
            self.pending_delays
                .iter()
                .map(|d| format!(".delay {} {}", d.index, d.delta)),
        );
        out
    }

    pub fn to_text(&self) -> String {
        let mut text = self.to_lines().join("\n");
        text.push('\n');
        text
    }

    /// Gate lines plus wire count; used to deduplicate search states.
    pub fn canonical_key(&self) -> String {
        let mut key = format!("{}\n", self.wire_count);
        for g in &self.gates {
            key.push_str(&g.to_string());
            key.push('\n');
        }
        key
    }
}

fn parse_directive(
    line: &str,
    header_wires: &mut Option<usize>,
    c: &mut Circuit,
) -> Result<(), GateError> {
    let mut parts = line.splitn(2, char::is_whitespace);
    let directive = parts.next().unwrap_or_default();
    let arg = parts.next().map(str::trim).unwrap_or_default();
    match directive {
        ".wires" => {
            if header_wires.is_some() {
                return Err(malformed("duplicate .wires directive"));
            }
            let n = arg
                .parse()
                .map_err(|_| malformed(format!("bad wire count `{arg}`")))?;
            *header_wires = Some(n);
        }
        ".name" => {
            if arg.is_empty() || arg.contains(char::is_whitespace) {
                return Err(malformed(".name takes one token"));
            }
            c.metadata.insert("name".into(), arg.to_string());
        }
        ".wirenames" => {
            c.wire_names = Some(arg.split_whitespace().map(str::to_string).collect());
        }
        ".meta" => {
            let (key, value) = arg.split_once(char::is_whitespace).unwrap_or((arg, ""));
            if key.is_empty() {
                return Err(malformed(".meta needs a key"));
            }
            c.metadata.insert(key.to_string(), value.trim().to_string());
        }
        ".delay" => {
            let mut nums = arg.split_whitespace().map(str::parse::<u64>);
            match (nums.next(), nums.next(), nums.next()) {
                (Some(Ok(index)), Some(Ok(delta)), None) if delta >= 1 => {
                    c.pending_delays.push(DelayDirective {
                        index: index as usize,
                        delta,
                    })
                }
                _ => return Err(malformed(format!("bad .delay directive `{arg}`"))),
            }
        }
        other => return Err(malformed(format!("unknown directive `{other}`"))),
    }
    Ok(())
}

pub fn parse_circuit<S: AsRef<str>>(lines: &[S]) -> Result<Circuit, ParseError> {
    parse_circuit_with(lines, ParseOptions::default())
}

pub fn parse_circuit_with<S: AsRef<str>>(
    lines: &[S],
    opts: ParseOptions,
) -> Result<Circuit, ParseError> {
    let mut c = Circuit::default();
    let mut header_wires = None;
    for (i, raw) in lines.iter().enumerate() {
        let at = |source| ParseError {
            line: i + 1,
            source,
        };
        let line = strip_comment(raw.as_ref());
        if line.is_empty() {
            continue;
        }
        if line.starts_with('.') {
            parse_directive(line, &mut header_wires, &mut c).map_err(at)?;
        } else {
            c.gates.push(parse_gate_with(line, opts).map_err(at)?);
        }
    }
    let inferred = c
        .gates
        .iter()
        .flat_map(|g| g.operands.iter())
        .max()
        .map_or(0, |w| w + 1);
    c.wire_count = header_wires.unwrap_or(0).max(inferred);
    if let Some(names) = &c.wire_names {
        if names.len() != c.wire_count {
            return Err(ParseError {
                line: 0,
                source: malformed(format!(
                    "{} wire names for {} wires",
                    names.len(),
                    c.wire_count
                )),
            });
        }
    }
    Ok(c)
}

/// Convenience wrapper splitting `text` into lines.
pub fn parse_circuit_text(text: &str) -> Result<Circuit, ParseError> {
    let lines: Vec<&str> = text.lines().collect();
    parse_circuit(&lines)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub gate_count: usize,
    pub t_count: usize,
    /// `init … A` gates: T states consumed by an ICM circuit.
    pub t_states: usize,
    pub cnot_count: usize,
    pub wire_count: usize,
    pub depth: Option<Time>,
}

pub fn metrics(c: &Circuit) -> MetricsReport {
    let mut m = MetricsReport {
        gate_count: c.gates.len(),
        wire_count: c.wire_count,
        depth: c.depth(),
        ..Default::default()
    };
    for g in &c.gates {
        if g.is_t() {
            m.t_count += 1;
        } else if g.is_magic_init() {
            m.t_states += 1;
        } else if g.is_cnot() {
            m.cnot_count += 1;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(line: &str) -> Gate {
        parse_gate(line).unwrap()
    }

    #[test]
    fn parses_unscheduled_cnot() {
        let gate = g("cx 4 0|0");
        assert_eq!(gate.kind, GateKind::new("cx"));
        assert_eq!(gate.operands, vec![4, 0]);
        assert_eq!(gate.schedule, Schedule::Unscheduled { offset: 0 });
    }

    #[test]
    fn parses_scheduled_cnot() {
        let gate = g("1@cx 4 0");
        assert_eq!(gate.operands, vec![4, 0]);
        assert_eq!(gate.schedule, Schedule::Scheduled { time: 1 });
    }

    #[test]
    fn missing_offset_defaults_to_zero() {
        assert_eq!(g("t 3").schedule, Schedule::Unscheduled { offset: 0 });
        assert_eq!(g("  t 3   # trailing").operands, vec![3]);
    }

    #[test]
    fn rejects_duplicate_operand() {
        assert_eq!(parse_gate("cx 4 4"), Err(GateError::DuplicateOperand(4)));
    }

    #[test]
    fn rejects_time_below_one() {
        assert_eq!(parse_gate("0@t 1"), Err(GateError::NegativeTime(0)));
        assert_eq!(parse_gate("-2@t 1"), Err(GateError::NegativeTime(-2)));
    }

    #[test]
    fn rejects_scheduled_gate_with_offset() {
        assert!(matches!(
            parse_gate("4@cx 4 0|1"),
            Err(GateError::MalformedLine(_))
        ));
    }

    #[test]
    fn malformed_lines() {
        for line in [
            "",
            "# only comment",
            "cx",
            "cx 1",
            "cx a b",
            "CX 0 1",
            "t 0|x",
            "x@t 0",
            "4 0",
        ] {
            assert!(
                matches!(parse_gate(line), Err(GateError::MalformedLine(_))),
                "{line:?}"
            );
        }
    }

    #[test]
    fn unknown_kinds_follow_strictness() {
        let gate = g("foo 1 2 3|0");
        assert_eq!(gate.operands.len(), 3);
        let strict = ParseOptions { strict_kinds: true };
        assert_eq!(
            parse_gate_with("foo 1 2 3", strict),
            Err(GateError::UnknownKind("foo".into()))
        );
        assert!(parse_gate_with("cx 1 2", strict).is_ok());
    }

    #[test]
    fn init_carries_label() {
        let gate = g("init 7 A|0");
        assert_eq!(gate.kind, GateKind::with_payload("init", "A"));
        assert_eq!(gate.operands, vec![7]);
        assert!(gate.is_magic_init());
        assert_eq!(gate.to_string(), "init 7 A|0");
        assert_eq!(g("init 2|0").kind.payload, None);
        assert!(parse_gate("cx 0 A").is_err());
    }

    #[test]
    fn serializes_canonically() {
        let cx = GateKind::new("cx");
        assert_eq!(
            serialize_gate(&Gate::unscheduled(cx.clone(), vec![4, 0], 0)),
            "cx 4 0|0"
        );
        assert_eq!(
            serialize_gate(&Gate::scheduled(cx, vec![4, 0], 4)),
            "4@cx 4 0"
        );
        assert_eq!(
            serialize_gate(&Gate::unscheduled(GateKind::new("t"), vec![3], -2)),
            "t 3|-2"
        );
    }

    #[test]
    fn circuit_wire_count_rules() {
        let c = parse_circuit(&[".wires 2", "cx 0 1|0"]).unwrap();
        assert_eq!((c.len(), c.wire_count), (1, 2));
        let c = parse_circuit(&["cx 4 0|0"]).unwrap();
        assert_eq!(c.wire_count, 5);
        let c = parse_circuit::<&str>(&[]).unwrap();
        assert_eq!((c.len(), c.wire_count), (0, 0));
        let c = parse_circuit(&[".wires 9", "t 1"]).unwrap();
        assert_eq!(c.wire_count, 9);
    }

    #[test]
    fn circuit_errors_carry_line_numbers() {
        let err = parse_circuit(&[".wires 2", "", "cx 0 0|0"]).unwrap_err();
        assert_eq!(err.line, 3);
        assert_eq!(err.source, GateError::DuplicateOperand(0));
        assert!(parse_circuit(&[".bogus 1"]).is_err());
        assert!(parse_circuit(&[".wires 1", ".wires 2"]).is_err());
    }

    #[test]
    fn circuit_text_round_trip_keeps_directives() {
        let text = ".wires 3\n.name demo\n.wirenames a b c\n.meta origin test run\ncx 0 1|0\nt 2|-1\n.delay 1 3\n";
        let c = parse_circuit_text(text).unwrap();
        assert_eq!(c.metadata["origin"], "test run");
        assert_eq!(
            c.pending_delays,
            vec![DelayDirective { index: 1, delta: 3 }]
        );
        assert_eq!(c.to_text(), text);
    }

    #[test]
    fn metrics_counts() {
        let m = metrics(&Circuit::default());
        assert_eq!(m.gate_count + m.t_count + m.cnot_count + m.wire_count, 0);
        assert_eq!(m.depth, Some(0));

        let c = parse_circuit(&["t 0|0", "t 1|0", "cx 0 1|0"]).unwrap();
        let m = metrics(&c);
        assert_eq!((m.t_count, m.cnot_count, m.gate_count), (2, 1, 3));
        assert_eq!(m.depth, None);

        let c = parse_circuit(&["1@t 0", "3@cx 0 1", "2@init 2 A"]).unwrap();
        let m = metrics(&c);
        assert_eq!((m.depth, m.t_states), (Some(3), 1));
    }
}
