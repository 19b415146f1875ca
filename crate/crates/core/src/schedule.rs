//! Time assignment, wire reordering and recycling, and gate delays.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gatelang::{Circuit, DelayDirective, Gate, Schedule, Time, WireId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("circuit mixes scheduled and unscheduled gates")]
    MixedInput,
    #[error("expected an unscheduled circuit")]
    AlreadyScheduled,
    #[error("expected a fully scheduled circuit")]
    NotScheduled,
    #[error("gate {index}: offset places it at {time}, wire {wire} is busy until {last}")]
    OffsetConflict {
        index: usize,
        wire: WireId,
        time: i64,
        last: Time,
    },
    #[error("wire {0} out of range")]
    BadWire(WireId),
    #[error("wire {wire} does not have a single lifetime: {msg}")]
    NonLinearLifetime { wire: WireId, msg: String },
    #[error("gate index {0} out of range")]
    BadIndex(usize),
    #[error("delay must be at least 1")]
    BadDelta,
    #[error("gate {index} is not later than its predecessor on wire {wire}")]
    UnorderedWire { index: usize, wire: WireId },
}

fn require_scheduled(c: &Circuit) -> Result<(), ScheduleError> {
    if c.is_scheduled() {
        Ok(())
    } else if c.is_unscheduled() {
        Err(ScheduleError::NotScheduled)
    } else {
        Err(ScheduleError::MixedInput)
    }
}

fn time_of(g: &Gate) -> Time {
    g.time().expect("scheduled gate")
}

fn set_time(g: &mut Gate, t: Time) {
    g.schedule = Schedule::Scheduled { time: t };
}

/// Assigns every gate the earliest time after its operand wires are free,
/// shifted by its offset.
pub fn schedule_asap(c: &Circuit) -> Result<Circuit, ScheduleError> {
    if !c.is_unscheduled() {
        return Err(if c.is_scheduled() {
            ScheduleError::AlreadyScheduled
        } else {
            ScheduleError::MixedInput
        });
    }
    let mut frontier: Vec<Time> = vec![0; c.wire_count];
    let mut out = c.clone();
    for (index, g) in out.gates.iter_mut().enumerate() {
        let Schedule::Unscheduled { offset } = g.schedule else {
            unreachable!()
        };
        let last = g.operands.iter().map(|&w| frontier[w]).max().unwrap_or(0);
        let time = 1 + last as i64 + offset;
        if let Some(&wire) = g.operands.iter().find(|&&w| time <= frontier[w] as i64) {
            return Err(ScheduleError::OffsetConflict {
                index,
                wire,
                time,
                last: frontier[wire],
            });
        }
        // a gate with no operands still needs a valid coordinate
        let time = time.max(1) as Time;
        for &w in &g.operands {
            frontier[w] = time;
        }
        set_time(g, time);
    }
    Ok(out)
}

/// Drops all time coordinates, leaving offset-0 unscheduled gates.
pub fn strip_schedule(c: &Circuit) -> Circuit {
    let mut out = c.clone();
    for g in &mut out.gates {
        g.schedule = Schedule::Unscheduled { offset: 0 };
    }
    out.pending_delays.clear();
    out
}

/// `map[old] = new`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Permutation {
    pub map: Vec<WireId>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation {
            map: (0..n).collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &w)| i == w)
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.map.len()];
        for (old, &new) in self.map.iter().enumerate() {
            inv[new] = old;
        }
        Permutation { map: inv }
    }
}

fn relabel(c: &Circuit, p: &Permutation) -> Circuit {
    let mut out = c.clone();
    for g in &mut out.gates {
        for w in &mut g.operands {
            *w = p.map[*w];
        }
    }
    if let Some(names) = &c.wire_names {
        let mut permuted = names.clone();
        for (old, &new) in p.map.iter().enumerate() {
            permuted[new] = names[old].clone();
        }
        out.wire_names = Some(permuted);
    }
    out
}

/// Renumbers wires by the index of the first gate that touches them.
pub fn reorder_first_use(c: &Circuit) -> (Circuit, Permutation) {
    let mut map = vec![usize::MAX; c.wire_count];
    let mut next = 0;
    for g in &c.gates {
        for &w in &g.operands {
            if map[w] == usize::MAX {
                map[w] = next;
                next += 1;
            }
        }
    }
    for slot in map.iter_mut().filter(|m| **m == usize::MAX) {
        *slot = next;
        next += 1;
    }
    let p = Permutation { map };
    (relabel(c, &p), p)
}

pub fn swap_wires(c: &Circuit, i: WireId, j: WireId) -> Result<Circuit, ScheduleError> {
    for w in [i, j] {
        if w >= c.wire_count {
            return Err(ScheduleError::BadWire(w));
        }
    }
    let mut p = Permutation::identity(c.wire_count);
    p.map.swap(i, j);
    Ok(relabel(c, &p))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct WireLifetime {
    pub wire: WireId,
    pub birth: Time,
    pub death: Time,
}

impl WireLifetime {
    pub fn overlaps(&self, other: &WireLifetime) -> bool {
        !(self.death < other.birth || other.death < self.birth)
    }
}

/// Lifetime of every used wire; unused wires map to `None`.
pub fn wire_lifetimes(c: &Circuit) -> Result<Vec<Option<WireLifetime>>, ScheduleError> {
    require_scheduled(c)?;
    let depth = c.depth().unwrap_or(0);
    let mut seen = vec![0usize; c.wire_count];
    let mut first: Vec<Option<&Gate>> = vec![None; c.wire_count];
    let mut last: Vec<Option<&Gate>> = vec![None; c.wire_count];
    for g in &c.gates {
        for &w in &g.operands {
            if let Some(prev) = last[w] {
                if prev.is_measurement() {
                    return Err(ScheduleError::NonLinearLifetime {
                        wire: w,
                        msg: format!("used after measurement at {}", time_of(prev)),
                    });
                }
            }
            if g.name() == "init" && seen[w] > 0 {
                return Err(ScheduleError::NonLinearLifetime {
                    wire: w,
                    msg: format!("initialised at {} after first use", time_of(g)),
                });
            }
            seen[w] += 1;
            first[w].get_or_insert(g);
            last[w] = Some(g);
        }
    }
    Ok((0..c.wire_count)
        .map(|w| {
            let (first, last) = (first[w]?, last[w]?);
            let birth = if first.name() == "init" {
                time_of(first)
            } else {
                1
            };
            let death = if last.is_measurement() {
                time_of(last)
            } else {
                depth
            };
            Some(WireLifetime {
                wire: w,
                birth,
                death,
            })
        })
        .collect())
}

/// Packs wire lifetimes onto as few tracks as possible. Returns the circuit
/// rewritten onto tracks and the wire to track map (`None` for unused wires).
pub fn recycle_wires(c: &Circuit) -> Result<(Circuit, Vec<Option<usize>>), ScheduleError> {
    let lifetimes = wire_lifetimes(c)?;
    let mut order: Vec<WireLifetime> = lifetimes.iter().flatten().copied().collect();
    order.sort_by_key(|l| (l.birth, l.wire));

    // tracks ordered by index; free tracks kept in a min-heap so first fit is O(log n)
    let mut busy: BinaryHeap<Reverse<(Time, usize)>> = BinaryHeap::new();
    let mut free: BinaryHeap<Reverse<usize>> = BinaryHeap::new();
    let mut track_count = 0;
    let mut track_of = vec![None; c.wire_count];
    for l in &order {
        while let Some(&Reverse((death, track))) = busy.peek() {
            if death < l.birth {
                busy.pop();
                free.push(Reverse(track));
            } else {
                break;
            }
        }
        let track = match free.pop() {
            Some(Reverse(t)) => t,
            None => {
                track_count += 1;
                track_count - 1
            }
        };
        track_of[l.wire] = Some(track);
        busy.push(Reverse((l.death, track)));
    }

    let mut out = c.clone();
    for g in &mut out.gates {
        for w in &mut g.operands {
            *w = track_of[*w].expect("used wire has a track");
        }
    }
    out.wire_count = track_count;
    out.wire_names = None;
    let map: Vec<String> = track_of
        .iter()
        .enumerate()
        .filter_map(|(w, t)| t.map(|t| format!("{w}:{t}")))
        .collect();
    out.metadata
        .insert("recycle.track_map".into(), map.join(" "));
    Ok((out, track_of))
}

fn check_wire_order(c: &Circuit) -> Result<(), ScheduleError> {
    let mut frontier: Vec<Time> = vec![0; c.wire_count];
    for (index, g) in c.gates.iter().enumerate() {
        let t = time_of(g);
        for &wire in &g.operands {
            if t <= frontier[wire] {
                return Err(ScheduleError::UnorderedWire { index, wire });
            }
            frontier[wire] = t;
        }
    }
    Ok(())
}

/// Moves gate `index` later by `delta` and pushes anything that now
/// collides with it on a shared wire.
pub fn delay_gate(c: &Circuit, index: usize, delta: Time) -> Result<Circuit, ScheduleError> {
    require_scheduled(c)?;
    if index >= c.gates.len() {
        return Err(ScheduleError::BadIndex(index));
    }
    if delta == 0 {
        return Err(ScheduleError::BadDelta);
    }
    check_wire_order(c)?;
    let mut out = c.clone();
    let mut frontier: Vec<Time> = vec![0; c.wire_count];
    for g in &out.gates[..index] {
        for &w in &g.operands {
            frontier[w] = time_of(g);
        }
    }
    for (i, g) in out.gates.iter_mut().enumerate().skip(index) {
        let mut t = time_of(g);
        if i == index {
            t += delta;
        }
        let floor = g
            .operands
            .iter()
            .map(|&w| frontier[w] + 1)
            .max()
            .unwrap_or(1);
        t = t.max(floor);
        for &w in &g.operands {
            frontier[w] = t;
        }
        set_time(g, t);
    }
    Ok(out)
}

/// Decision for a gate offered to a [`retime`] hook.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Offer {
    Accept,
    /// Re-offer the gate at this later time.
    DelayTo(Time),
}

/// One delay decision: gate `index` moved from `from` to `to`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayRecord {
    pub index: usize,
    pub from: Time,
    pub to: Time,
}

#[derive(Clone, Debug)]
pub struct Retimed {
    pub circuit: Circuit,
    /// Delays in the order they were decided; replaying them with
    /// [`delay_gate`] reproduces `circuit`.
    pub delays: Vec<DelayRecord>,
}

impl Retimed {
    pub fn directives(&self) -> Vec<DelayDirective> {
        self.delays
            .iter()
            .map(|d| DelayDirective {
                index: d.index,
                delta: d.to - d.from,
            })
            .collect()
    }

    /// The retimed circuit carrying its delays as pending directives on the
    /// input instead of applied.
    pub fn as_pending(&self, input: &Circuit) -> Circuit {
        let mut out = input.clone();
        out.pending_delays = self.directives();
        out
    }
}

/// Walks a scheduled circuit in time order, offering each gate to `hook`
/// once its wire predecessors are settled. A gate's tentative time is its
/// own time or one past its latest predecessor, whichever is later.
///
/// Ties are broken by first operand then program index.
pub fn retime<F>(c: &Circuit, mut hook: F) -> Result<Retimed, ScheduleError>
where
    F: FnMut(usize, &Gate, Time) -> Offer,
{
    require_scheduled(c)?;
    check_wire_order(c)?;
    let n = c.gates.len();
    // successors on each operand wire, and count of distinct predecessors
    let mut next_on: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut waiting = vec![0u32; n];
    let mut last: Vec<Option<usize>> = vec![None; c.wire_count];
    for (i, g) in c.gates.iter().enumerate() {
        let mut preds: Vec<usize> = g.operands.iter().filter_map(|&w| last[w]).collect();
        preds.sort_unstable();
        preds.dedup();
        waiting[i] = preds.len() as u32;
        for p in preds {
            next_on[p].push(i);
        }
        for &w in &g.operands {
            last[w] = Some(i);
        }
    }

    let mut floor: Vec<Time> = vec![0; n];
    let mut out = c.clone();
    let mut delays: Vec<DelayRecord> = Vec::new();
    let mut last_delay: Vec<Option<usize>> = vec![None; n];
    let key = |g: &Gate, i: usize, t: Time| Reverse((t, g.operands.first().copied(), i));
    let mut heap: BinaryHeap<Reverse<(Time, Option<WireId>, usize)>> = c
        .gates
        .iter()
        .enumerate()
        .filter(|(i, _)| waiting[*i] == 0)
        .map(|(i, g)| key(g, i, time_of(g)))
        .collect();

    while let Some(Reverse((t, _, i))) = heap.pop() {
        let g = &c.gates[i];
        match hook(i, g, t) {
            Offer::DelayTo(later) if later > t => {
                // a gate bounced again from where it was just sent keeps one record
                match last_delay[i] {
                    Some(k) if delays[k].to == t => delays[k].to = later,
                    _ => {
                        last_delay[i] = Some(delays.len());
                        delays.push(DelayRecord {
                            index: i,
                            from: t,
                            to: later,
                        });
                    }
                }
                heap.push(key(g, i, later));
            }
            Offer::DelayTo(_) | Offer::Accept => {
                set_time(&mut out.gates[i], t);
                for &s in &next_on[i] {
                    floor[s] = floor[s].max(t + 1);
                    waiting[s] -= 1;
                    if waiting[s] == 0 {
                        let gs = &c.gates[s];
                        heap.push(key(gs, s, time_of(gs).max(floor[s])));
                    }
                }
            }
        }
    }
    out.pending_delays.clear();
    Ok(Retimed {
        circuit: out,
        delays,
    })
}

/// Applies delay directives in order, as successive [`delay_gate`] calls.
pub fn apply_delays(c: &Circuit, delays: &[DelayDirective]) -> Result<Circuit, ScheduleError> {
    if delays.is_empty() {
        let mut out = c.clone();
        out.pending_delays.clear();
        return Ok(out);
    }
    require_scheduled(c)?;
    for d in delays {
        if d.index >= c.gates.len() {
            return Err(ScheduleError::BadIndex(d.index));
        }
        if d.delta == 0 {
            return Err(ScheduleError::BadDelta);
        }
    }
    // Directives produced by `retime` are consumed in exactly the order the
    // sweep reaches them, in which case the sweep reproduces the sequential
    // result in one pass.
    let mut queued: Vec<std::collections::VecDeque<(usize, Time)>> =
        vec![Default::default(); c.gates.len()];
    for (k, d) in delays.iter().enumerate() {
        queued[d.index].push_back((k, d.delta));
    }
    let mut consumed = 0usize;
    let mut in_order = true;
    let fast = retime(c, |i, _, t| match queued[i].pop_front() {
        Some((k, delta)) => {
            in_order &= k == consumed;
            consumed += 1;
            Offer::DelayTo(t + delta)
        }
        None => Offer::Accept,
    })?;
    if in_order {
        return Ok(fast.circuit);
    }
    let mut out = c.clone();
    out.pending_delays.clear();
    for d in delays {
        out = delay_gate(&out, d.index, d.delta)?;
    }
    Ok(out)
}

/// Applies and clears any delays carried by the circuit.
pub fn settle(c: &Circuit) -> Result<Circuit, ScheduleError> {
    if c.pending_delays.is_empty() {
        return Ok(c.clone());
    }
    apply_delays(c, &c.pending_delays)
}
