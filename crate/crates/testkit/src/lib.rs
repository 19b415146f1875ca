//! Slow, obvious reference implementations used to check the real ones.
//!
//! Nothing here shares code with the library beyond the data types and
//! `delay_gate`, whose own behaviour is pinned by unit tests.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use braidflow::analysis::FactoryConfig;
use braidflow::gatelang::{Schedule, Time};
use braidflow::layout::PlumbingLayout;
use braidflow::schedule::delay_gate;
use braidflow::{Circuit, Gate, GateKind};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn distinct(rng: &mut impl Rng, n: usize, k: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (0..n).collect();
    all.shuffle(rng);
    all.truncate(k);
    all
}

/// Unscheduled circuit over `kinds`, arity from the kind name.
pub fn random_circuit(rng: &mut impl Rng, n: usize, m: usize, kinds: &[&str]) -> Circuit {
    let mut c = Circuit::new(n);
    for _ in 0..m {
        let kind = kinds[rng.gen_range(0..kinds.len())];
        let arity = match kind {
            "cx" | "cz" | "swap" => 2,
            "ccx" => 3,
            _ => 1,
        };
        if arity > n {
            continue;
        }
        c.gates.push(Gate::unscheduled(
            GateKind::new(kind),
            distinct(rng, n, arity),
            0,
        ));
    }
    c
}

/// Anything the gate grammar can express: odd kinds, payloads, negative
/// offsets, or a schedule.
pub fn fuzz_circuit(rng: &mut impl Rng, scheduled: bool) -> Circuit {
    const KINDS: &[&str] = &[
        "cx", "t", "tdg", "h", "s", "mz", "mx", "ccx", "rz", "foo_gate", "init",
    ];
    let n = rng.gen_range(1..12);
    let mut c = Circuit::new(n);
    let mut last = vec![0 as Time; n];
    for _ in 0..rng.gen_range(0..40) {
        let name = KINDS[rng.gen_range(0..KINDS.len())];
        let kind = match name {
            "init" => {
                GateKind::with_payload("init", ["zero", "plus", "A", "Y"][rng.gen_range(0..4)])
            }
            _ => GateKind::new(name),
        };
        let arity = match name {
            "cx" => 2,
            "ccx" => 3,
            "foo_gate" => rng.gen_range(1..4),
            _ => 1,
        };
        if arity > n {
            continue;
        }
        let ops = distinct(rng, n, arity);
        let g = if scheduled {
            let floor = ops.iter().map(|&w| last[w]).max().unwrap_or(0) + 1;
            let t = floor + rng.gen_range(0..3);
            for &w in &ops {
                last[w] = t;
            }
            Gate::scheduled(kind, ops, t)
        } else {
            Gate::unscheduled(kind, ops, rng.gen_range(-3..4))
        };
        c.gates.push(g);
    }
    if rng.gen_bool(0.3) {
        c.metadata
            .insert("note".into(), format!("fuzz {}", rng.gen::<u32>()));
    }
    c
}

/// Dependency DAG: every earlier gate sharing a wire is a predecessor.
pub fn longest_path_times(c: &Circuit) -> Vec<Time> {
    let mut times: Vec<Time> = Vec::with_capacity(c.len());
    for (i, g) in c.gates.iter().enumerate() {
        let before = (0..i)
            .filter(|&j| c.gates[j].operands.iter().any(|w| g.operands.contains(w)))
            .map(|j| times[j])
            .max()
            .unwrap_or(0);
        times.push(before + 1);
    }
    times
}

pub fn times(c: &Circuit) -> Vec<Time> {
    c.gates
        .iter()
        .map(|g| g.time().expect("scheduled"))
        .collect()
}

/// Number of T consumers in every aligned window `[1 + kW, 1 + (k+1)W)`,
/// counted gate by gate.
pub fn window_counts(c: &Circuit, window: Time) -> BTreeMap<Time, u64> {
    let mut counts = BTreeMap::new();
    for g in c.gates.iter().filter(|g| is_consumer(g)) {
        let t = g.time().expect("scheduled");
        let mut start = 1;
        while start + window <= t {
            start += window;
        }
        *counts.entry(start).or_insert(0) += 1;
    }
    counts
}

pub fn is_consumer(g: &Gate) -> bool {
    match g.kind.name.as_str() {
        "t" | "tdg" => true,
        "init" => g.kind.payload.as_deref() == Some("A"),
        _ => false,
    }
}

/// Gates on each wire, in time order, by program index.
pub fn wire_sequences(c: &Circuit) -> Vec<Vec<usize>> {
    let mut seq = vec![Vec::new(); c.wire_count];
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by_key(|&i| (c.gates[i].time().expect("scheduled"), i));
    for i in order {
        for &w in &c.gates[i].operands {
            seq[w].push(i);
        }
    }
    seq
}

/// True when `after` keeps every gate's kind and operands and each wire
/// sees its gates in the same order, with strictly increasing times.
pub fn order_preserved(before: &Circuit, after: &Circuit) -> bool {
    before.len() == after.len()
        && before
            .gates
            .iter()
            .zip(&after.gates)
            .all(|(a, b)| a.kind == b.kind && a.operands == b.operands)
        && wire_sequences(before) == wire_sequences(after)
        && wire_sequences(after).iter().all(|seq| {
            seq.windows(2)
                .all(|p| after.gates[p[0]].time() < after.gates[p[1]].time())
        })
}

fn earliest_undecided(c: &Circuit, decided: &[bool]) -> Option<usize> {
    (0..c.len())
        .filter(|&i| !decided[i] && is_consumer(&c.gates[i]))
        .min_by_key(|&i| {
            let g = &c.gates[i];
            (g.time().unwrap(), g.operands.first().copied(), i)
        })
}

/// Window capacity by repeated single delays: the earliest consumer still
/// to be placed either fits its window or moves to the next window start.
pub fn enforce_by_delays(c: &Circuit, window: Time, capacity: u64) -> Circuit {
    let mut c = c.clone();
    let mut decided = vec![false; c.len()];
    let mut used: HashMap<Time, u64> = HashMap::new();
    while let Some(i) = earliest_undecided(&c, &decided) {
        let t = c.gates[i].time().unwrap();
        let w = (t - 1) / window;
        let n = used.entry(w).or_insert(0);
        if *n < capacity {
            *n += 1;
            decided[i] = true;
        } else {
            let next = 1 + (w + 1) * window;
            c = delay_gate(&c, i, next - t).expect("delay");
        }
    }
    c
}

/// States produced by the end of step `t`, counted batch by batch.
pub fn produced_by(f: FactoryConfig, t: Time) -> u64 {
    let mut batches = 0;
    let mut finish = if f.warmup { 1 } else { 1 + f.duration };
    while finish <= t {
        batches += 1;
        finish += f.duration;
    }
    batches * f.concurrent
}

/// Factory feeding by repeated single delays: consumers take states in
/// (time, wire) order; one that finds none waits for the next unclaimed
/// state.
pub fn availability_by_delays(c: &Circuit, f: FactoryConfig) -> Circuit {
    let mut c = c.clone();
    let mut decided = vec![false; c.len()];
    let mut claimed = 0;
    while let Some(i) = earliest_undecided(&c, &decided) {
        let t = c.gates[i].time().unwrap();
        decided[i] = true;
        if produced_by(f, t) <= claimed {
            let mut ready = t;
            while produced_by(f, ready) <= claimed {
                ready += 1;
            }
            c = delay_gate(&c, i, ready - t).expect("delay");
        }
        claimed += 1;
    }
    c
}

/// Problems with a factory trace read straight off the circuit: a step
/// with more consumed than produced so far, or a wrong total.
pub fn availability_violations(c: &Circuit, f: FactoryConfig) -> Vec<String> {
    let mut problems = Vec::new();
    let consumers: Vec<Time> = c
        .gates
        .iter()
        .filter(|g| is_consumer(g))
        .map(|g| g.time().unwrap())
        .collect();
    let depth = c.gates.iter().filter_map(Gate::time).max().unwrap_or(0);
    for t in 1..=depth {
        let used = consumers.iter().filter(|&&s| s <= t).count() as u64;
        if used > produced_by(f, t) {
            problems.push(format!(
                "step {t}: {used} consumed, {} produced",
                produced_by(f, t)
            ));
        }
    }
    problems
}

/// Plain bit-level simulation of a reversible circuit.
pub fn simulate_bits(c: &Circuit, mut bits: Vec<bool>) -> Vec<bool> {
    for g in &c.gates {
        let o = &g.operands;
        match g.name() {
            "x" => bits[o[0]] ^= true,
            "cx" => bits[o[1]] ^= bits[o[0]],
            "ccx" => bits[o[2]] ^= bits[o[0]] && bits[o[1]],
            other => panic!("not reversible: {other}"),
        }
    }
    bits
}

fn touches(g: &Gate, w: usize) -> bool {
    g.operands.contains(&w)
}

/// Every state reachable with two hard-coded rules: delete an adjacent
/// `cx a b; cx a b` pair, and expand a `ccx` into the 15-gate Clifford+T
/// network. Returns the fewest gates seen and the number of states.
pub fn min_gates_reachable(start: &Circuit) -> (usize, usize) {
    type Ops = Vec<(String, Vec<usize>)>;
    let as_ops = |c: &Circuit| -> Ops {
        c.gates
            .iter()
            .map(|g| (g.kind.name.clone(), g.operands.clone()))
            .collect()
    };
    let expand = |a: usize, b: usize, t: usize| -> Ops {
        let g = |k: &str, w: &[usize]| (k.to_string(), w.to_vec());
        vec![
            g("h", &[t]),
            g("cx", &[b, t]),
            g("tdg", &[t]),
            g("cx", &[a, t]),
            g("t", &[t]),
            g("cx", &[b, t]),
            g("tdg", &[t]),
            g("cx", &[a, t]),
            g("t", &[b]),
            g("t", &[t]),
            g("h", &[t]),
            g("cx", &[a, b]),
            g("t", &[a]),
            g("tdg", &[b]),
            g("cx", &[a, b]),
        ]
    };
    let wires = start.wire_count;
    let rebuild = |ops: &Ops| {
        let mut c = Circuit::new(wires);
        c.gates = ops
            .iter()
            .map(|(k, o)| Gate::unscheduled(GateKind::new(k.clone()), o.clone(), 0))
            .collect();
        c
    };
    let first = as_ops(start);
    let mut seen: HashSet<Ops> = HashSet::from([first.clone()]);
    let mut queue = VecDeque::from([first]);
    let mut best = usize::MAX;
    while let Some(ops) = queue.pop_front() {
        best = best.min(ops.len());
        let c = rebuild(&ops);
        let mut next = Vec::new();
        for i in 0..ops.len() {
            let (kind, o) = &ops[i];
            if kind == "ccx" {
                let mut n = ops[..i].to_vec();
                n.extend(expand(o[0], o[1], o[2]));
                n.extend_from_slice(&ops[i + 1..]);
                next.push(n);
            }
            if kind != "cx" {
                continue;
            }
            for j in i + 1..ops.len() {
                if ops[j] != ops[i] {
                    continue;
                }
                let blocked = (i + 1..j).any(|k| o.iter().any(|&w| touches(&c.gates[k], w)));
                if !blocked {
                    let mut n = ops.clone();
                    n.remove(j);
                    n.remove(i);
                    next.push(n);
                }
            }
        }
        for n in next {
            if seen.insert(n.clone()) {
                queue.push_back(n);
            }
        }
    }
    (best, seen.len())
}

/// Occupied plumbing cells drawn from the document: rails, braid outlines
/// and boxes, each cell counted once.
pub fn occupied_cells(l: &PlumbingLayout) -> HashSet<[u64; 3]> {
    let g = &l.geometry;
    let mut cells = HashSet::new();
    let rail_rows = g.qubit_depth.min(2);
    for t in &l.tracks {
        for z in t.t0..t.t1 {
            for y in 0..rail_rows {
                cells.insert([t.x, y, z]);
            }
        }
    }
    for b in &l.braids {
        let lo = b.from_track.min(b.to_track) as u64 * g.pitch;
        let hi = b.from_track.max(b.to_track) as u64 * g.pitch + 1;
        let z = (b.time - 1) * g.pieces_per_step;
        for x in lo..=hi {
            for y in 0..g.qubit_depth {
                let edge = x == lo || x == hi || y == 0 || y == g.qubit_depth - 1;
                if edge {
                    cells.insert([x, y, z]);
                }
            }
        }
    }
    for b in &l.boxes {
        for x in b.x..b.x + b.dims[0] {
            for y in g.qubit_depth..g.qubit_depth + b.dims[1] {
                for z in b.start..b.start + b.dims[2] {
                    cells.insert([x, y, z]);
                }
            }
        }
    }
    cells
}

/// Wire lifetimes `(birth, death)` of a scheduled ICM circuit. A wire is
/// live from its `init` (or step 1 without one) to its measurement (or the
/// last step without one).
pub fn lifetimes(c: &Circuit) -> Vec<Option<(Time, Time)>> {
    let depth = c.gates.iter().filter_map(Gate::time).max().unwrap_or(0);
    let mut gates_on: Vec<Vec<&Gate>> = vec![Vec::new(); c.wire_count];
    for g in &c.gates {
        for &w in &g.operands {
            gates_on[w].push(g);
        }
    }
    gates_on
        .iter()
        .map(|gs| {
            let first = gs.iter().min_by_key(|g| g.time())?;
            let last = gs.iter().max_by_key(|g| g.time())?;
            let birth = if first.name() == "init" {
                first.time().unwrap()
            } else {
                1
            };
            let death = if matches!(last.name(), "mz" | "mx") {
                last.time().unwrap()
            } else {
                depth
            };
            Some((birth, death))
        })
        .collect()
}

/// Builds a gate-by-gate scheduled copy of `c` at the given times.
pub fn with_times(c: &Circuit, times: &[Time]) -> Circuit {
    let mut out = c.clone();
    for (g, &t) in out.gates.iter_mut().zip(times) {
        g.schedule = Schedule::Scheduled { time: t };
    }
    out
}
