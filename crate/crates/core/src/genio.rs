//! Generators (parametric gate-list producers) and the RevKit `.real` importer.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::gatelang::{Circuit, Gate, GateKind, WireId};

/// PRNG used by [`gen_random_cliffordt`], recorded in circuit metadata.
pub const RNG_ALGORITHM: &str = "chacha8";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenError {
    #[error("bad parameter: {0}")]
    BadParam(String),
    #[error("line {line}: unsupported .real gate `{gate}`")]
    UnsupportedGate { line: usize, gate: String },
    #[error("line {line}: malformed .real header: {msg}")]
    MalformedHeader { line: usize, msg: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Int,
    Seed,
    Enum,
    Bool,
    Text,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: ParamKind,
    pub default: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub choices: Option<&'static [&'static str]>,
}

impl ParamSpec {
    pub const fn int(name: &'static str, default: &'static str) -> Self {
        ParamSpec {
            name,
            kind: ParamKind::Int,
            default,
            choices: None,
        }
    }

    pub const fn seed(name: &'static str, default: &'static str) -> Self {
        ParamSpec {
            name,
            kind: ParamKind::Seed,
            default,
            choices: None,
        }
    }

    pub const fn flag(name: &'static str, default: &'static str) -> Self {
        ParamSpec {
            name,
            kind: ParamKind::Bool,
            default,
            choices: None,
        }
    }

    pub const fn text(name: &'static str, default: &'static str) -> Self {
        ParamSpec {
            name,
            kind: ParamKind::Text,
            default,
            choices: None,
        }
    }

    pub const fn choice(
        name: &'static str,
        default: &'static str,
        choices: &'static [&'static str],
    ) -> Self {
        ParamSpec {
            name,
            kind: ParamKind::Enum,
            default,
            choices: Some(choices),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GeneratorSpec {
    pub name: &'static str,
    pub params: Vec<ParamSpec>,
    pub description: &'static str,
}

pub fn generator_specs() -> Vec<GeneratorSpec> {
    vec![
        GeneratorSpec {
            name: "cnot-ladder",
            params: vec![ParamSpec::int("n", "4")],
            description: "CNOT chain cx(i, i+1) over n wires",
        },
        GeneratorSpec {
            name: "adder",
            params: vec![ParamSpec::int("n", "4")],
            description: "ripple-carry adder of two n-bit operands on 2n+2 wires",
        },
        GeneratorSpec {
            name: "random",
            params: vec![
                ParamSpec::int("n", "4"),
                ParamSpec::int("m", "20"),
                ParamSpec::seed("seed", "0"),
            ],
            description: "m gates drawn uniformly from {h, s, t, cx}",
        },
    ]
}

fn gate(name: &str, operands: &[WireId]) -> Gate {
    Gate::unscheduled(GateKind::new(name), operands.to_vec(), 0)
}

fn tag(mut c: Circuit, generator: &str, params: String) -> Circuit {
    c.metadata
        .insert("generator".into(), format!("{generator} {params}"));
    c
}

pub fn gen_cnot_ladder(n: usize) -> Result<Circuit, GenError> {
    if n < 2 {
        return Err(GenError::BadParam(format!(
            "cnot-ladder needs n >= 2, got {n}"
        )));
    }
    let mut c = Circuit::new(n);
    c.gates = (0..n - 1).map(|i| gate("cx", &[i, i + 1])).collect();
    Ok(tag(c, "cnot-ladder", format!("n={n}")))
}

/// Wire holding the incoming carry.
pub fn adder_carry_in() -> WireId {
    0
}

/// Wire of bit `i` of operand `b` (which receives the sum).
pub fn adder_b(i: usize) -> WireId {
    1 + 2 * i
}

/// Wire of bit `i` of operand `a`.
pub fn adder_a(i: usize) -> WireId {
    2 + 2 * i
}

/// Wire receiving the outgoing carry.
pub fn adder_carry_out(n: usize) -> WireId {
    2 * n + 1
}

/// Gate count of [`gen_adder`]: `6n` (`2n - 1` Toffolis, `4n + 1` CNOTs).
pub fn adder_gate_count(n: usize) -> usize {
    6 * n
}

/// In-place ripple-carry adder `b <- a + b + c_in`, carry out xored into the
/// last wire.
///
/// Majority cells ripple the carry up through the `a` wires, the top bit
/// computes the carry out directly, and unmajority cells walk back down
/// restoring `a` and writing the sum bits into `b`.
pub fn gen_adder(n: usize) -> Result<Circuit, GenError> {
    if n == 0 {
        return Err(GenError::BadParam("adder needs n >= 1".into()));
    }
    let carry_into = |i: usize| {
        if i == 0 {
            adder_carry_in()
        } else {
            adder_a(i - 1)
        }
    };
    let mut gates = Vec::with_capacity(adder_gate_count(n));

    for i in 0..n - 1 {
        let (c, b, a) = (carry_into(i), adder_b(i), adder_a(i));
        gates.push(gate("cx", &[a, b]));
        gates.push(gate("cx", &[a, c]));
        gates.push(gate("ccx", &[c, b, a]));
    }

    let top = n - 1;
    let (c, b, a, z) = (
        carry_into(top),
        adder_b(top),
        adder_a(top),
        adder_carry_out(n),
    );
    gates.push(gate("cx", &[a, b]));
    gates.push(gate("cx", &[a, c]));
    gates.push(gate("ccx", &[c, b, z]));
    gates.push(gate("cx", &[a, z]));
    gates.push(gate("cx", &[a, c]));
    gates.push(gate("cx", &[c, b]));

    for i in (0..n - 1).rev() {
        let (c, b, a) = (carry_into(i), adder_b(i), adder_a(i));
        gates.push(gate("ccx", &[c, b, a]));
        gates.push(gate("cx", &[a, c]));
        gates.push(gate("cx", &[c, b]));
    }

    let mut c = Circuit::new(2 * n + 2);
    c.gates = gates;
    Ok(tag(c, "adder", format!("n={n}")))
}

pub fn gen_random_cliffordt(n: usize, m: usize, seed: u64) -> Result<Circuit, GenError> {
    if n == 0 {
        return Err(GenError::BadParam("random needs n >= 1".into()));
    }
    // cx needs two distinct wires
    let kinds: &[&str] = if n >= 2 {
        &["h", "s", "t", "cx"]
    } else {
        &["h", "s", "t"]
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = Circuit::new(n);
    c.gates.reserve(m);
    for _ in 0..m {
        let kind = kinds[rng.gen_range(0..kinds.len())];
        let arity = if kind == "cx" { 2 } else { 1 };
        let operands = sample(&mut rng, n, arity).into_vec();
        c.gates.push(gate(kind, &operands));
    }
    c.metadata.insert("rng".into(), RNG_ALGORITHM.into());
    Ok(tag(c, "random", format!("n={n} m={m} seed={seed}")))
}

/// Imports the Toffoli-family subset of RevKit's `.real` format.
pub fn import_real(text: &str) -> Result<Circuit, GenError> {
    let header = |line: usize, msg: &str| GenError::MalformedHeader {
        line,
        msg: msg.to_string(),
    };

    let mut numvars: Option<usize> = None;
    let mut variables: Option<Vec<String>> = None;
    let mut index: HashMap<String, WireId> = HashMap::new();
    let mut gates = Vec::new();
    let mut began = false;
    let mut ended = false;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        if ended {
            return Err(header(line_no, "content after .end"));
        }
        let mut tokens = line.split_whitespace();
        let head = tokens.next().unwrap_or_default();
        if let Some(directive) = head.strip_prefix('.') {
            match directive {
                "numvars" => {
                    let n = tokens
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| header(line_no, ".numvars needs a count"))?;
                    numvars = Some(n);
                }
                "variables" => {
                    let names: Vec<String> = tokens.map(str::to_string).collect();
                    for (w, name) in names.iter().enumerate() {
                        if index.insert(name.clone(), w).is_some() {
                            return Err(header(line_no, &format!("duplicate variable `{name}`")));
                        }
                    }
                    variables = Some(names);
                }
                "begin" => {
                    let vars = variables
                        .as_ref()
                        .ok_or_else(|| header(line_no, ".begin before .variables"))?;
                    if let Some(n) = numvars {
                        if n != vars.len() {
                            return Err(header(line_no, ".numvars disagrees with .variables"));
                        }
                    }
                    began = true;
                }
                "end" => {
                    if !began {
                        return Err(header(line_no, ".end without .begin"));
                    }
                    ended = true;
                }
                // informational headers that do not affect the gate list
                "version" | "inputs" | "outputs" | "constants" | "garbage" | "mode" => {}
                _ => return Err(header(line_no, &format!("unknown directive `{head}`"))),
            }
            continue;
        }
        if !began {
            return Err(header(line_no, "gate before .begin"));
        }
        let operands = tokens
            .map(|name| {
                index
                    .get(name)
                    .copied()
                    .ok_or_else(|| header(line_no, &format!("undeclared variable `{name}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let kind = match (head, operands.len()) {
            ("t1", 1) => "x",
            ("t2", 2) => "cx",
            ("t3", 3) => "ccx",
            _ => {
                return Err(GenError::UnsupportedGate {
                    line: line_no,
                    gate: line.to_string(),
                })
            }
        };
        for (j, w) in operands.iter().enumerate() {
            if operands[..j].contains(w) {
                return Err(header(line_no, "repeated variable in one gate"));
            }
        }
        gates.push(gate(kind, &operands));
    }

    let variables = variables.ok_or_else(|| header(0, "missing .variables"))?;
    if !began {
        return Err(header(0, "missing .begin"));
    }
    let mut c = Circuit::new(variables.len());
    c.wire_names = Some(variables);
    c.gates = gates;
    c.metadata.insert("generator".into(), "import-real".into());
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gatelang::metrics;

    #[test]
    fn ladder() {
        assert_eq!(gen_cnot_ladder(2).unwrap().to_lines()[2..], ["cx 0 1|0"]);
        let c = gen_cnot_ladder(4).unwrap();
        assert_eq!((c.len(), c.wire_count), (3, 4));
        assert!(matches!(gen_cnot_ladder(1), Err(GenError::BadParam(_))));
    }

    #[test]
    fn ladder_2000_is_fast() {
        let start = std::time::Instant::now();
        let c = gen_cnot_ladder(2000).unwrap();
        assert_eq!(c.len(), 1999);
        assert!(start.elapsed().as_millis() < 100);
    }

    #[test]
    fn adder_shape() {
        assert!(matches!(gen_adder(0), Err(GenError::BadParam(_))));
        let c = gen_adder(64).unwrap();
        assert_eq!(c.wire_count, 130);
        assert_eq!(c.len(), adder_gate_count(64));
        let m = metrics(&c);
        assert_eq!(m.cnot_count, 4 * 64 + 1);
        c.validate().unwrap();
        assert_eq!(gen_adder(5).unwrap(), gen_adder(5).unwrap());
    }

    #[test]
    fn random_is_deterministic() {
        assert_eq!(
            gen_random_cliffordt(1, 5, 7).unwrap(),
            gen_random_cliffordt(1, 5, 7).unwrap()
        );
        assert!(gen_random_cliffordt(5, 0, 0).unwrap().is_empty());
        assert!(gen_random_cliffordt(0, 5, 0).is_err());
        let c = gen_random_cliffordt(16, 500, 1).unwrap();
        c.validate().unwrap();
        assert_eq!(c.metadata["rng"], RNG_ALGORITHM);
    }

    #[test]
    fn real_import() {
        let c = import_real(".numvars 2\n.variables a b\n.begin\nt2 a b\n.end\n").unwrap();
        assert_eq!(c.to_lines().last().unwrap(), "cx 0 1|0");
        assert_eq!(
            c.wire_names.as_deref(),
            Some(&["a".to_string(), "b".to_string()][..])
        );

        let c = import_real(".variables a\n.begin\nt1 a\n.end").unwrap();
        assert_eq!(c.gates[0].to_string(), "x 0|0");

        let c = import_real(".variables a b c\n.begin\nt3 c a b\n.end").unwrap();
        assert_eq!(c.gates[0].to_string(), "ccx 2 0 1|0");
    }

    #[test]
    fn real_import_errors() {
        assert!(matches!(
            import_real(".variables a b\n.begin\nf2 a b\n.end"),
            Err(GenError::UnsupportedGate { line: 3, .. })
        ));
        assert!(matches!(
            import_real(".variables a b c d\n.begin\nt4 a b c d\n.end"),
            Err(GenError::UnsupportedGate { .. })
        ));
        assert!(matches!(
            import_real(".variables a\n.begin\nt2 a q\n.end"),
            Err(GenError::MalformedHeader { .. })
        ));
        assert!(matches!(
            import_real(".numvars 3\n.variables a b\n.begin\n.end"),
            Err(GenError::MalformedHeader { .. })
        ));
        assert!(matches!(
            import_real("t1 a"),
            Err(GenError::MalformedHeader { .. })
        ));
        assert!(matches!(
            import_real(""),
            Err(GenError::MalformedHeader { .. })
        ));
    }
}
