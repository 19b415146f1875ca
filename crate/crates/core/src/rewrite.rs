//! Pattern-to-replacement rewriting over gate lists.
//!
//! The same engine drives exhaustive template optimisation and the
//! decomposition of Clifford+T circuits into ICM form. Rules are data,
//! loaded from `.qrules` text.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::gatelang::{is_icm_kind, known_arity, Circuit, Gate, GateKind, WireId};

pub const ICM_DEFAULT_RULES: &str = include_str!("../rules/icm_default.qrules");
pub const OPT_DEFAULT_RULES: &str = include_str!("../rules/opt_default.qrules");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RewriteError {
    #[error("rules line {line}: {msg}")]
    RuleSyntax { line: usize, msg: String },
    #[error("invalid rule `{rule}`: {msg}")]
    InvalidRule { rule: String, msg: String },
    #[error("duplicate rule name `{0}`")]
    DuplicateRule(String),
    #[error("match site for rule `{0}` is no longer valid")]
    StaleSite(String),
    #[error("no template for gate kind `{0}`")]
    MissingTemplate(String),
    #[error("template set may not terminate: {0}")]
    NonTerminating(String),
    #[error("rewriting works on unscheduled circuits")]
    ScheduledInput,
}

/// A rule variable: `w<i>` binds a circuit wire, `a<j>` is a fresh ancilla.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    Wire(usize),
    Ancilla(usize),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Wire(i) => write!(f, "w{i}"),
            Var::Ancilla(j) => write!(f, "a{j}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleGate {
    pub kind: GateKind,
    pub vars: Vec<Var>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RewriteRule {
    pub name: String,
    pub pattern: Vec<RuleGate>,
    pub replacement: Vec<RuleGate>,
    /// Init-state label of each fresh ancilla `a<j>`.
    pub ancillae: Vec<String>,
    /// Entry `i` is the variable carrying pattern wire `w<i>` afterwards.
    pub output_map: Vec<Var>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    GateCount,
    TCount,
    CnotCount,
    Weighted { t: u64, cnot: u64, other: u64 },
}

impl Objective {
    pub const DEFAULT_WEIGHTED: Objective = Objective::Weighted {
        t: 10,
        cnot: 2,
        other: 1,
    };

    pub fn evaluate(&self, c: &Circuit) -> u64 {
        match *self {
            Objective::GateCount => c.gates.len() as u64,
            Objective::TCount => c.gates.iter().filter(|g| g.is_t()).count() as u64,
            Objective::CnotCount => c.gates.iter().filter(|g| g.is_cnot()).count() as u64,
            Objective::Weighted { t, cnot, other } => c
                .gates
                .iter()
                .map(|g| {
                    if g.is_t() {
                        t
                    } else if g.is_cnot() {
                        cnot
                    } else {
                        other
                    }
                })
                .sum(),
        }
    }

    pub fn parse(s: &str) -> Option<Objective> {
        let mut tokens = s.split_whitespace();
        let objective = match tokens.next()? {
            "gate_count" => Objective::GateCount,
            "t_count" => Objective::TCount,
            "cnot_count" => Objective::CnotCount,
            "weighted" => {
                let Objective::Weighted {
                    mut t,
                    mut cnot,
                    mut other,
                } = Objective::DEFAULT_WEIGHTED
                else {
                    unreachable!()
                };
                for kv in tokens.by_ref() {
                    let (k, v) = kv.split_once('=')?;
                    let v: u64 = v.parse().ok()?;
                    match k {
                        "t" => t = v,
                        "cx" | "cnot" => cnot = v,
                        "other" => other = v,
                        _ => return None,
                    }
                }
                Objective::Weighted { t, cnot, other }
            }
            _ => return None,
        };
        tokens.next().is_none().then_some(objective)
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Objective::GateCount => f.write_str("gate_count"),
            Objective::TCount => f.write_str("t_count"),
            Objective::CnotCount => f.write_str("cnot_count"),
            Objective::Weighted { t, cnot, other } => {
                write!(f, "weighted t={t} cx={cnot} other={other}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleSet {
    pub rules: Vec<RewriteRule>,
    pub objective: Objective,
}

impl Default for RuleSet {
    fn default() -> Self {
        RuleSet {
            rules: Vec::new(),
            objective: Objective::GateCount,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MatchSite {
    pub rule: String,
    /// Concrete wire bound to each pattern variable `w<i>`.
    pub binding: Vec<WireId>,
    /// Matched gate indices, one per pattern gate, ascending.
    pub gates: Vec<usize>,
}

fn parse_var(token: &str) -> Option<(Var, Option<&str>)> {
    let (var, label) = match token.split_once(':') {
        Some((v, l)) => (v, Some(l)),
        None => (token, None),
    };
    let index = |s: &str| s.parse::<usize>().ok();
    let var = if let Some(i) = var.strip_prefix('w').and_then(index) {
        if label.is_some() {
            return None;
        }
        Var::Wire(i)
    } else {
        Var::Ancilla(var.strip_prefix('a').and_then(index)?)
    };
    match label {
        Some(l) if l.is_empty() || l.contains(char::is_whitespace) => None,
        _ => Some((var, label)),
    }
}

impl RewriteRule {
    fn invalid(&self, msg: impl Into<String>) -> RewriteError {
        RewriteError::InvalidRule {
            rule: self.name.clone(),
            msg: msg.into(),
        }
    }

    pub fn pattern_vars(&self) -> usize {
        self.output_map.len()
    }

    /// Fresh ancillae this rule allocates per application.
    pub fn ancilla_count(&self) -> usize {
        self.ancillae.len()
    }

    fn validate(&self) -> Result<(), RewriteError> {
        if self.pattern.is_empty() {
            return Err(self.invalid("empty pattern"));
        }
        let mut seen = Vec::new();
        for g in self.pattern.iter().chain(&self.replacement) {
            if let Some(arity) = known_arity(&g.kind.name) {
                if arity != g.vars.len() {
                    return Err(self.invalid(format!("`{}` takes {arity} operand(s)", g.kind.name)));
                }
            }
            if g.vars.is_empty() {
                return Err(self.invalid(format!("`{}` has no operands", g.kind.name)));
            }
            for (i, v) in g.vars.iter().enumerate() {
                if g.vars[..i].contains(v) {
                    return Err(self.invalid(format!("{v} repeated in one gate")));
                }
            }
        }
        for g in &self.pattern {
            for v in &g.vars {
                match v {
                    Var::Wire(i) => seen.push(*i),
                    Var::Ancilla(_) => return Err(self.invalid("ancilla in pattern")),
                }
            }
        }
        seen.sort_unstable();
        seen.dedup();
        if seen.iter().enumerate().any(|(k, &i)| k != i) {
            return Err(self.invalid("pattern variables must be w0..wN without gaps"));
        }
        let n = seen.len();
        let mut used_ancillae = vec![false; self.ancillae.len()];
        for g in &self.replacement {
            for v in &g.vars {
                match *v {
                    Var::Wire(i) if i >= n => {
                        return Err(self.invalid(format!("{v} is not a pattern variable")))
                    }
                    Var::Ancilla(j) if j >= self.ancillae.len() => {
                        return Err(self.invalid(format!("{v} is not declared")))
                    }
                    Var::Ancilla(j) => used_ancillae[j] = true,
                    Var::Wire(_) => {}
                }
            }
        }
        if used_ancillae.iter().any(|u| !u) {
            return Err(self.invalid("every ancilla a0..aN must appear in the replacement"));
        }
        if self.output_map.len() != n {
            return Err(self.invalid("output map must cover every pattern variable"));
        }
        let mut targets = HashSet::new();
        for v in &self.output_map {
            let in_range = match *v {
                Var::Wire(i) => i < n,
                Var::Ancilla(j) => j < self.ancillae.len(),
            };
            if !in_range || !targets.insert(*v) {
                return Err(self.invalid("output map must be injective over declared variables"));
            }
        }
        Ok(())
    }

    fn concrete(&self, v: Var, binding: &[WireId], ancilla_base: WireId) -> WireId {
        match v {
            Var::Wire(i) => binding[i],
            Var::Ancilla(j) => ancilla_base + j,
        }
    }
}

impl fmt::Display for RewriteRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rule {}", self.name)?;
        writeln!(f, "pattern:")?;
        for g in &self.pattern {
            write_rule_gate(f, g, None)?;
        }
        writeln!(f, "replace:")?;
        let mut labelled = vec![false; self.ancillae.len()];
        for g in &self.replacement {
            write_rule_gate(f, g, Some((&self.ancillae, &mut labelled)))?;
        }
        let moved: Vec<String> = self
            .output_map
            .iter()
            .enumerate()
            .filter(|(i, v)| **v != Var::Wire(*i))
            .map(|(i, v)| format!("w{i}->{v}"))
            .collect();
        if !moved.is_empty() {
            writeln!(f, "out: {}", moved.join(" "))?;
        }
        writeln!(f, "end")
    }
}

fn write_rule_gate(
    f: &mut fmt::Formatter<'_>,
    g: &RuleGate,
    mut ancillae: Option<(&Vec<String>, &mut Vec<bool>)>,
) -> fmt::Result {
    f.write_str(&g.kind.name)?;
    for (i, v) in g.vars.iter().enumerate() {
        write!(f, " {v}")?;
        if let (Var::Ancilla(j), Some((labels, done))) = (v, ancillae.as_mut()) {
            if !done[*j] {
                done[*j] = true;
                write!(f, ":{}", labels[*j])?;
            }
        }
        if i == 0 {
            if let Some(label) = &g.kind.payload {
                write!(f, " {label}")?;
            }
        }
    }
    writeln!(f)
}

impl RuleSet {
    pub fn new(rules: Vec<RewriteRule>, objective: Objective) -> Result<Self, RewriteError> {
        let mut names = HashSet::new();
        for r in &rules {
            r.validate()?;
            if !names.insert(r.name.clone()) {
                return Err(RewriteError::DuplicateRule(r.name.clone()));
            }
        }
        Ok(RuleSet { rules, objective })
    }

    /// Parses `.qrules` text.
    pub fn parse(text: &str) -> Result<Self, RewriteError> {
        #[derive(PartialEq)]
        enum Section {
            Outside,
            Header,
            Pattern,
            Replace,
            Out,
        }
        let syntax = |line: usize, msg: String| RewriteError::RuleSyntax { line, msg };

        let mut rules = Vec::new();
        let mut objective = Objective::GateCount;
        let mut section = Section::Outside;
        let mut name = String::new();
        let mut pattern = Vec::new();
        let mut replacement = Vec::new();
        let mut labels: BTreeMap<usize, String> = BTreeMap::new();
        let mut outputs: Vec<(usize, Var)> = Vec::new();

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let mut tokens = line.split_whitespace();
            let head = tokens.next().unwrap_or_default();
            match (head, &section) {
                ("objective", Section::Outside) => {
                    let rest = line["objective".len()..].trim();
                    objective = Objective::parse(rest)
                        .ok_or_else(|| syntax(line_no, format!("bad objective `{rest}`")))?;
                }
                ("rule", Section::Outside) => {
                    name = tokens
                        .next()
                        .filter(|n| !n.contains(['@', '|', '#']))
                        .ok_or_else(|| syntax(line_no, "rule needs a name".into()))?
                        .to_string();
                    if tokens.next().is_some() {
                        return Err(syntax(line_no, "rule name must be one token".into()));
                    }
                    section = Section::Header;
                }
                ("pattern:", Section::Header) => section = Section::Pattern,
                ("replace:", Section::Pattern) => section = Section::Replace,
                ("out:", Section::Replace) => {
                    for pair in tokens {
                        let (from, to) = pair
                            .split_once("->")
                            .ok_or_else(|| syntax(line_no, format!("bad mapping `{pair}`")))?;
                        let (from, to) = match (parse_var(from), parse_var(to)) {
                            (Some((Var::Wire(i), None)), Some((to, None))) => (i, to),
                            _ => return Err(syntax(line_no, format!("bad mapping `{pair}`"))),
                        };
                        if outputs.iter().any(|(f, _)| *f == from) {
                            return Err(syntax(line_no, format!("w{from} mapped twice")));
                        }
                        outputs.push((from, to));
                    }
                    section = Section::Out;
                }
                ("end", Section::Replace | Section::Out) => {
                    let ancilla_count = labels.keys().next_back().map_or(0, |j| j + 1);
                    let mut ancillae = Vec::with_capacity(ancilla_count);
                    for j in 0..ancilla_count {
                        ancillae.push(labels.remove(&j).ok_or_else(|| {
                            syntax(line_no, format!("ancilla a{j} has no state label"))
                        })?);
                    }
                    let vars = pattern
                        .iter()
                        .flat_map(|g: &RuleGate| g.vars.iter())
                        .filter_map(|v| match v {
                            Var::Wire(i) => Some(i + 1),
                            Var::Ancilla(_) => None,
                        })
                        .max()
                        .unwrap_or(0);
                    let mut output_map: Vec<Var> = (0..vars).map(Var::Wire).collect();
                    for (from, to) in outputs.drain(..) {
                        if from >= vars {
                            return Err(syntax(line_no, format!("w{from} is not in the pattern")));
                        }
                        output_map[from] = to;
                    }
                    rules.push(RewriteRule {
                        name: std::mem::take(&mut name),
                        pattern: std::mem::take(&mut pattern),
                        replacement: std::mem::take(&mut replacement),
                        ancillae,
                        output_map,
                    });
                    labels.clear();
                    section = Section::Outside;
                }
                (_, Section::Pattern | Section::Replace) => {
                    let in_pattern = section == Section::Pattern;
                    let mut vars = Vec::new();
                    let mut payload = None;
                    for (pos, token) in tokens.enumerate() {
                        match parse_var(token) {
                            Some((var, label)) => {
                                if let (Var::Ancilla(j), Some(label)) = (var, label) {
                                    if in_pattern {
                                        return Err(syntax(line_no, "ancilla in pattern".into()));
                                    }
                                    match labels.get(&j) {
                                        Some(prev) if prev != label => {
                                            return Err(syntax(
                                                line_no,
                                                format!("a{j} labelled twice"),
                                            ))
                                        }
                                        _ => {
                                            labels.insert(j, label.to_string());
                                        }
                                    }
                                }
                                vars.push(var);
                            }
                            None if head == "init" && pos == 1 => payload = Some(token.to_string()),
                            None => return Err(syntax(line_no, format!("bad variable `{token}`"))),
                        }
                    }
                    let kind = GateKind {
                        name: head.to_string(),
                        payload,
                    };
                    let target = if in_pattern {
                        &mut pattern
                    } else {
                        &mut replacement
                    };
                    target.push(RuleGate { kind, vars });
                }
                _ => return Err(syntax(line_no, format!("unexpected `{line}`"))),
            }
        }
        if section != Section::Outside {
            return Err(syntax(text.lines().count(), "unterminated rule".into()));
        }
        RuleSet::new(rules, objective)
    }

    pub fn rule(&self, name: &str) -> Option<&RewriteRule> {
        self.rules.iter().find(|r| r.name == name)
    }
}

impl fmt::Display for RuleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "objective {}", self.objective)?;
        for r in &self.rules {
            writeln!(f)?;
            write!(f, "{r}")?;
        }
        Ok(())
    }
}

/// Per-wire ascending gate indices.
fn wire_index(c: &Circuit) -> Vec<Vec<usize>> {
    let mut by_wire = vec![Vec::new(); c.wire_count];
    for (i, g) in c.gates.iter().enumerate() {
        for &w in &g.operands {
            by_wire[w].push(i);
        }
    }
    by_wire
}

fn next_on_wire(by_wire: &[Vec<usize>], wire: WireId, after: usize) -> Option<usize> {
    let list = &by_wire[wire];
    let at = list.partition_point(|&i| i <= after);
    list.get(at).copied()
}

/// Binds `pg` onto `g`, extending `binding`; returns the newly bound vars.
fn bind_gate(
    pg: &RuleGate,
    g: &Gate,
    binding: &mut [Option<WireId>],
    bound_wires: &mut HashSet<WireId>,
) -> Option<Vec<usize>> {
    if pg.kind != g.kind || pg.vars.len() != g.operands.len() {
        return None;
    }
    let mut fresh = Vec::new();
    for (v, &w) in pg.vars.iter().zip(&g.operands) {
        let Var::Wire(i) = *v else { return None };
        match binding[i] {
            Some(b) if b == w => {}
            Some(_) => {
                undo_binding(&fresh, binding, bound_wires);
                return None;
            }
            None => {
                if bound_wires.contains(&w) {
                    undo_binding(&fresh, binding, bound_wires);
                    return None;
                }
                binding[i] = Some(w);
                bound_wires.insert(w);
                fresh.push(i);
            }
        }
    }
    Some(fresh)
}

fn undo_binding(fresh: &[usize], binding: &mut [Option<WireId>], bound: &mut HashSet<WireId>) {
    for &i in fresh {
        if let Some(w) = binding[i].take() {
            bound.remove(&w);
        }
    }
}

/// Matched gates must be consecutive among the gates touching bound wires.
fn contiguous(by_wire: &[Vec<usize>], binding: &[WireId], matched: &[usize]) -> bool {
    let (first, last) = (matched[0], matched[matched.len() - 1]);
    binding.iter().all(|&w| {
        let list = &by_wire[w];
        let lo = list.partition_point(|&i| i <= first);
        list[lo..]
            .iter()
            .take_while(|&&i| i < last)
            .all(|i| matched.binary_search(i).is_ok())
    })
}

struct Matcher<'a> {
    c: &'a Circuit,
    rule: &'a RewriteRule,
    by_wire: &'a [Vec<usize>],
    binding: Vec<Option<WireId>>,
    bound: HashSet<WireId>,
    matched: Vec<usize>,
    out: Vec<MatchSite>,
}

impl Matcher<'_> {
    fn try_candidate(&mut self, j: usize, idx: usize) {
        let pg = &self.rule.pattern[j];
        if let Some(fresh) = bind_gate(pg, &self.c.gates[idx], &mut self.binding, &mut self.bound) {
            self.matched.push(idx);
            self.extend(j + 1);
            self.matched.pop();
            undo_binding(&fresh, &mut self.binding, &mut self.bound);
        }
    }

    fn extend(&mut self, j: usize) {
        if j == self.rule.pattern.len() {
            let binding: Vec<WireId> = self.binding.iter().map(|b| b.unwrap()).collect();
            if contiguous(self.by_wire, &binding, &self.matched) {
                self.out.push(MatchSite {
                    rule: self.rule.name.clone(),
                    binding,
                    gates: self.matched.clone(),
                });
            }
            return;
        }
        let prev = *self.matched.last().unwrap();
        let pg = &self.rule.pattern[j];
        let bound_var = pg.vars.iter().find_map(|v| match *v {
            Var::Wire(i) => self.binding[i],
            Var::Ancilla(_) => None,
        });
        // the next gate touching any bound wire caps the search window
        let limit = self
            .bound
            .iter()
            .filter_map(|&w| next_on_wire(self.by_wire, w, prev))
            .min();
        match bound_var {
            Some(w) => {
                if let Some(idx) = next_on_wire(self.by_wire, w, prev) {
                    if Some(idx) == limit {
                        self.try_candidate(j, idx);
                    }
                }
            }
            None => {
                let end = limit.unwrap_or(self.c.gates.len());
                for idx in prev + 1..end {
                    self.try_candidate(j, idx);
                }
            }
        }
    }
}

pub fn find_matches(c: &Circuit, r: &RewriteRule) -> Vec<MatchSite> {
    let by_wire = wire_index(c);
    find_matches_indexed(c, r, &by_wire)
}

fn find_matches_indexed(c: &Circuit, r: &RewriteRule, by_wire: &[Vec<usize>]) -> Vec<MatchSite> {
    if r.pattern.is_empty() || !c.is_unscheduled() {
        return Vec::new();
    }
    let mut m = Matcher {
        c,
        rule: r,
        by_wire,
        binding: vec![None; r.pattern_vars()],
        bound: HashSet::new(),
        matched: Vec::with_capacity(r.pattern.len()),
        out: Vec::new(),
    };
    for idx in 0..c.gates.len() {
        if c.gates[idx].kind == r.pattern[0].kind {
            m.try_candidate(0, idx);
        }
    }
    m.out
}

fn site_is_valid(c: &Circuit, r: &RewriteRule, s: &MatchSite) -> bool {
    if s.rule != r.name
        || s.gates.len() != r.pattern.len()
        || s.binding.len() != r.pattern_vars()
        || s.gates.windows(2).any(|w| w[0] >= w[1])
        || s.gates.last().is_some_and(|&i| i >= c.gates.len())
        || s.binding.iter().any(|&w| w >= c.wire_count)
    {
        return false;
    }
    let mut distinct = HashSet::new();
    if !s.binding.iter().all(|w| distinct.insert(*w)) {
        return false;
    }
    let shapes_match = r.pattern.iter().zip(&s.gates).all(|(pg, &idx)| {
        let g = &c.gates[idx];
        pg.kind == g.kind
            && pg.vars.len() == g.operands.len()
            && pg.vars.iter().zip(&g.operands).all(|(v, &w)| match *v {
                Var::Wire(i) => s.binding[i] == w,
                Var::Ancilla(_) => false,
            })
    });
    shapes_match && contiguous(&wire_index(c), &s.binding, &s.gates)
}

fn replacement_gates(r: &RewriteRule, binding: &[WireId], ancilla_base: WireId) -> Vec<Gate> {
    let mut out = Vec::with_capacity(r.replacement.len() + r.ancillae.len());
    let mut initialised = vec![false; r.ancillae.len()];
    for rg in &r.replacement {
        for v in &rg.vars {
            if let Var::Ancilla(j) = *v {
                if !initialised[j] {
                    initialised[j] = true;
                    out.push(Gate::unscheduled(
                        GateKind::with_payload("init", r.ancillae[j].clone()),
                        vec![ancilla_base + j],
                        0,
                    ));
                }
            }
        }
        let operands = rg
            .vars
            .iter()
            .map(|&v| r.concrete(v, binding, ancilla_base))
            .collect();
        out.push(Gate::unscheduled(rg.kind.clone(), operands, 0));
    }
    out
}

pub fn apply_rule(c: &Circuit, r: &RewriteRule, s: &MatchSite) -> Result<Circuit, RewriteError> {
    if !c.is_unscheduled() {
        return Err(RewriteError::ScheduledInput);
    }
    if !site_is_valid(c, r, s) {
        return Err(RewriteError::StaleSite(r.name.clone()));
    }
    let mut out = Circuit {
        gates: Vec::with_capacity(c.gates.len() + r.replacement.len() + r.ancillae.len()),
        ..c.clone()
    };
    out.gates.clear();
    let ancilla_base = c.wire_count;
    for _ in 0..r.ancillae.len() {
        out.add_wire(None);
    }

    let remap: HashMap<WireId, WireId> = r
        .output_map
        .iter()
        .enumerate()
        .map(|(i, &v)| (s.binding[i], r.concrete(v, &s.binding, ancilla_base)))
        .filter(|(from, to)| from != to)
        .collect();

    let first = s.gates[0];
    out.gates.extend_from_slice(&c.gates[..first]);
    out.gates
        .extend(replacement_gates(r, &s.binding, ancilla_base));
    let mut matched = s.gates.iter().peekable();
    for (idx, g) in c.gates.iter().enumerate().skip(first) {
        if matched.peek() == Some(&&idx) {
            matched.next();
            continue;
        }
        let mut g = g.clone();
        if !remap.is_empty() {
            for w in &mut g.operands {
                if let Some(&to) = remap.get(w) {
                    *w = to;
                }
            }
        }
        out.gates.push(g);
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SearchReport {
    pub nodes_expanded: usize,
    pub nodes_discovered: usize,
    pub budget_exhausted: bool,
    pub objective_before: u64,
    pub objective_after: u64,
    /// Rule names applied on the path to the returned circuit.
    pub path: Vec<String>,
}

struct SearchNode {
    circuit: Circuit,
    parent: Option<usize>,
    rule: Option<usize>,
}

/// Breadth-first search over rule applications, deduplicated by canonical
/// gate list. Expands at most `budget` nodes.
pub fn exhaustive_optimize(
    c: &Circuit,
    rs: &RuleSet,
    budget: usize,
) -> Result<(Circuit, SearchReport), RewriteError> {
    if !c.is_unscheduled() {
        return Err(RewriteError::ScheduledInput);
    }
    let start_value = rs.objective.evaluate(c);
    let mut nodes = vec![SearchNode {
        circuit: c.clone(),
        parent: None,
        rule: None,
    }];
    let mut seen: HashSet<String> = HashSet::from([c.canonical_key()]);
    let mut queue = VecDeque::from([0usize]);
    let mut best = (start_value, 0usize);
    let mut expanded = 0;

    while expanded < budget {
        let Some(node) = queue.pop_front() else { break };
        expanded += 1;
        let current = nodes[node].circuit.clone();
        let by_wire = wire_index(&current);
        for (ri, rule) in rs.rules.iter().enumerate() {
            for site in find_matches_indexed(&current, rule, &by_wire) {
                let child = apply_rule(&current, rule, &site)?;
                if !seen.insert(child.canonical_key()) {
                    continue;
                }
                let value = rs.objective.evaluate(&child);
                let id = nodes.len();
                if value < best.0 {
                    best = (value, id);
                }
                nodes.push(SearchNode {
                    circuit: child,
                    parent: Some(node),
                    rule: Some(ri),
                });
                queue.push_back(id);
            }
        }
    }

    let mut path = Vec::new();
    let mut at = best.1;
    while let Some(parent) = nodes[at].parent {
        path.push(rs.rules[nodes[at].rule.unwrap()].name.clone());
        at = parent;
    }
    path.reverse();
    let report = SearchReport {
        nodes_expanded: expanded,
        nodes_discovered: nodes.len(),
        budget_exhausted: !queue.is_empty(),
        objective_before: start_value,
        objective_after: best.0,
        path,
    };
    let mut winner = nodes.swap_remove(best.1).circuit;
    winner
        .metadata
        .insert("rewrite.path".into(), report.path.join(","));
    Ok((winner, report))
}

/// Single-gate templates keyed by gate kind, checked for termination.
#[derive(Clone, Debug)]
pub struct TemplateSet {
    rules: RuleSet,
    by_kind: HashMap<String, usize>,
}

impl TemplateSet {
    pub fn new(rules: RuleSet) -> Result<Self, RewriteError> {
        let mut by_kind = HashMap::new();
        for (i, r) in rules.rules.iter().enumerate() {
            let invalid = |msg: &str| RewriteError::InvalidRule {
                rule: r.name.clone(),
                msg: msg.to_string(),
            };
            let [pattern] = r.pattern.as_slice() else {
                return Err(invalid("templates must match a single gate"));
            };
            if pattern.kind.payload.is_some() || is_icm_kind(&pattern.kind.name) {
                return Err(invalid("templates rewrite non-ICM kinds only"));
            }
            for (k, v) in r.output_map.iter().enumerate() {
                if !matches!(v, Var::Ancilla(_)) && *v != Var::Wire(k) {
                    return Err(invalid("templates may only move wires onto fresh ancillae"));
                }
            }
            if by_kind.insert(pattern.kind.name.clone(), i).is_some() {
                return Err(invalid("second template for the same kind"));
            }
        }
        let set = TemplateSet { rules, by_kind };
        set.check_termination()?;
        Ok(set)
    }

    pub fn default_icm() -> Self {
        let rules = RuleSet::parse(ICM_DEFAULT_RULES).expect("shipped templates parse");
        TemplateSet::new(rules).expect("shipped templates are well formed")
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    pub fn template(&self, kind: &str) -> Option<&RewriteRule> {
        self.by_kind.get(kind).map(|&i| &self.rules.rules[i])
    }

    fn dependencies(&self, kind: &str) -> Vec<&str> {
        self.template(kind)
            .map(|r| {
                r.replacement
                    .iter()
                    .map(|g| g.kind.name.as_str())
                    .filter(|k| !is_icm_kind(k))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Expansion terminates iff the kind dependency graph is acyclic.
    fn check_termination(&self) -> Result<(), RewriteError> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Active,
            Done,
        }
        fn visit<'a>(
            set: &'a TemplateSet,
            kind: &'a str,
            marks: &mut HashMap<&'a str, Mark>,
        ) -> Result<(), RewriteError> {
            match marks.get(kind) {
                Some(Mark::Done) => return Ok(()),
                Some(Mark::Active) => {
                    return Err(RewriteError::NonTerminating(format!(
                        "`{kind}` expands back into itself"
                    )))
                }
                None => {}
            }
            marks.insert(kind, Mark::Active);
            for dep in set.dependencies(kind) {
                visit(set, dep, marks)?;
            }
            marks.insert(kind, Mark::Done);
            Ok(())
        }
        let mut marks = HashMap::new();
        let mut kinds: Vec<&str> = self.by_kind.keys().map(String::as_str).collect();
        kinds.sort_unstable();
        for kind in kinds {
            visit(self, kind, &mut marks)?;
        }
        Ok(())
    }

    /// Ancillae added when one gate of `kind` is fully decomposed.
    pub fn ancilla_cost(&self, kind: &str) -> Option<usize> {
        if is_icm_kind(kind) {
            return Some(0);
        }
        let r = self.template(kind)?;
        let mut total = r.ancilla_count();
        for g in &r.replacement {
            total += self.ancilla_cost(&g.kind.name)?;
        }
        Some(total)
    }

    fn first_uncovered<'a>(&self, kinds: impl Iterator<Item = &'a str>) -> Option<String> {
        let mut checked = HashSet::new();
        let mut stack: Vec<&str> = kinds.collect();
        while let Some(kind) = stack.pop() {
            if is_icm_kind(kind) || !checked.insert(kind.to_string()) {
                continue;
            }
            if self.template(kind).is_none() {
                return Some(kind.to_string());
            }
            stack.extend(self.dependencies(kind));
        }
        None
    }
}

/// Rewrites `c` into the init/cx/mz/mx alphabet by repeatedly expanding the
/// leftmost non-ICM gate with its template.
///
/// Runs in a single streaming pass: remaps introduced by an expansion are
/// recorded per wire with an epoch so that they only apply to gates that
/// come after the expanded block.
pub fn decompose_to_icm(c: &Circuit, templates: &TemplateSet) -> Result<Circuit, RewriteError> {
    if !c.is_unscheduled() {
        return Err(RewriteError::ScheduledInput);
    }
    if let Some(kind) = templates.first_uncovered(c.gates.iter().map(|g| g.name())) {
        return Err(RewriteError::MissingTemplate(kind));
    }

    let mut out = Circuit {
        gates: Vec::with_capacity(c.gates.len() * 4),
        pending_delays: Vec::new(),
        ..c.clone()
    };
    out.gates.clear();
    // remaps[w]: (epoch, new wire), epochs ascending
    let mut remaps: Vec<Vec<(u64, WireId)>> = vec![Vec::new(); c.wire_count];
    let mut epoch = 0u64;
    let mut ancillae = 0usize;

    fn resolve(remaps: &[Vec<(u64, WireId)>], mut w: WireId, mut since: u64) -> WireId {
        loop {
            let list = &remaps[w];
            let at = list.partition_point(|&(e, _)| e <= since);
            match list.get(at) {
                Some(&(e, to)) => {
                    w = to;
                    since = e;
                }
                None => return w,
            }
        }
    }

    let mut stack: Vec<(Gate, u64)> = Vec::new();
    let mut input = c.gates.iter();
    loop {
        let (mut g, born) = match stack.pop() {
            Some(item) => item,
            None => match input.next() {
                Some(g) => (g.clone(), 0),
                None => break,
            },
        };
        for w in &mut g.operands {
            *w = resolve(&remaps, *w, born);
        }
        if is_icm_kind(g.name()) {
            out.gates.push(g);
            continue;
        }
        let rule = templates
            .template(g.name())
            .ok_or_else(|| RewriteError::MissingTemplate(g.name().to_string()))?;
        epoch += 1;
        let base = out.wire_count;
        for _ in 0..rule.ancilla_count() {
            out.add_wire(None);
            remaps.push(Vec::new());
        }
        ancillae += rule.ancilla_count();
        for (i, &v) in rule.output_map.iter().enumerate() {
            let to = rule.concrete(v, &g.operands, base);
            if to != g.operands[i] {
                remaps[g.operands[i]].push((epoch, to));
            }
        }
        let block = replacement_gates(rule, &g.operands, base);
        stack.extend(block.into_iter().rev().map(|g| (g, epoch)));
    }

    let wire_map: Vec<String> = (0..c.wire_count)
        .map(|w| format!("{w}:{}", resolve(&remaps, w, 0)))
        .collect();
    out.metadata
        .insert("icm.ancillae".into(), ancillae.to_string());
    out.metadata
        .insert("icm.wire_map".into(), wire_map.join(" "));
    Ok(out)
}
