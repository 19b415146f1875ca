//! Distillation box placement, simplified braided-defect geometry and
//! plumbing-piece resource estimates.
//!
//! Coordinates are in plumbing pieces: `x` across tracks, `y` from the
//! qubit row up into the box row, `z` along time. Time step `t` occupies
//! pieces `[(t-1)*pps, t*pps)` where `pps` is pieces per step.
//!
//! A track is a column at `x = track * pitch` whose defect pair fills
//! `y < min(2, qubit_depth)` for the span of each wire lifetime. A CNOT is
//! the perimeter of the rectangle `[x_lo, x_hi + 1] x [0, qubit_depth)`
//! one piece thick at the first piece of its step. Boxes sit at
//! `y >= qubit_depth`, one row of `concurrent` slots, each slot reused over
//! time.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gatelang::{is_icm_kind, Circuit, Time};
use crate::schedule::{retime, Offer, Retimed, ScheduleError};

pub const SCHEMA: &str = include_str!("../schema/layout.schema.json");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LayoutError {
    #[error("gate kind `{0}` is not in ICM form")]
    NotIcm(String),
    #[error("layout needs a fully scheduled circuit")]
    NotScheduled,
    #[error("bad parameter: {0}")]
    BadParam(String),
    #[error("box schedule does not fit the circuit: {0}")]
    InconsistentSchedule(String),
    #[error("layout document: {0}")]
    Document(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub dx: u64,
    pub dy: u64,
    pub dz: u64,
}

impl Default for BoxSpec {
    fn default() -> Self {
        BoxSpec {
            dx: 4,
            dy: 4,
            dz: 5,
        }
    }
}

impl BoxSpec {
    pub fn validate(&self) -> Result<(), LayoutError> {
        if self.dx == 0 || self.dy == 0 || self.dz == 0 {
            return Err(LayoutError::BadParam(
                "box dimensions must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn dims(&self) -> [u64; 3] {
        [self.dx, self.dy, self.dz]
    }

    /// Whole time steps a box spans.
    pub fn steps(&self, pieces_per_step: u64) -> Time {
        self.dz.div_ceil(pieces_per_step)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub pitch: u64,
    pub qubit_depth: u64,
    pub pieces_per_step: u64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            pitch: 2,
            qubit_depth: 2,
            pieces_per_step: 1,
        }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<(), LayoutError> {
        if self.pitch < 2 {
            return Err(LayoutError::BadParam("pitch must be at least 2".into()));
        }
        if self.qubit_depth == 0 || self.pieces_per_step == 0 {
            return Err(LayoutError::BadParam(
                "qubit_depth and pieces_per_step must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn rail_height(&self) -> u64 {
        self.qubit_depth.min(2)
    }

    /// First piece of time step `t`.
    pub fn piece(&self, t: Time) -> u64 {
        (t - 1) * self.pieces_per_step
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxPlacement {
    /// Gate index of the `init … A` this box supplies, if any.
    pub consumer: Option<usize>,
    /// Time step the box starts.
    pub start: Time,
    pub slot: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxSchedule {
    pub spec: BoxSpec,
    pub concurrent: u64,
    pub boxes: Vec<BoxPlacement>,
}

impl BoxSchedule {
    pub fn x(&self, b: &BoxPlacement) -> u64 {
        b.slot * self.spec.dx
    }

    /// Boxes side by side in the row.
    pub fn row_width(&self) -> u64 {
        self.concurrent.min(self.boxes.len() as u64)
    }

    /// Largest number of boxes running at once, by sweep.
    pub fn peak_concurrency(&self, pieces_per_step: u64) -> u64 {
        let steps = self.spec.steps(pieces_per_step);
        let mut events: Vec<(Time, i64)> = Vec::with_capacity(self.boxes.len() * 2);
        for b in &self.boxes {
            events.push((b.start, 1));
            events.push((b.start + steps, -1));
        }
        events.sort_unstable();
        let (mut now, mut peak) = (0i64, 0i64);
        for (_, d) in events {
            now += d;
            peak = peak.max(now);
        }
        peak as u64
    }
}

fn require_icm(c: &Circuit) -> Result<(), LayoutError> {
    if !c.is_scheduled() {
        return Err(LayoutError::NotScheduled);
    }
    match c.gates.iter().find(|g| !is_icm_kind(g.name())) {
        Some(g) => Err(LayoutError::NotIcm(g.name().to_string())),
        None => Ok(()),
    }
}

#[derive(Clone, Debug)]
pub struct PlacedBoxes {
    pub schedule: BoxSchedule,
    /// The circuit with consumers delayed until their box has finished.
    pub retimed: Retimed,
}

/// One box per magic-state init, started as late as possible for its
/// consumer under the concurrency cap. A consumer whose box cannot finish
/// in time keeps the earliest box it can get and is delayed until the box
/// finishes.
pub fn schedule_boxes(
    c: &Circuit,
    spec: BoxSpec,
    concurrent: u64,
    geometry: &GeometryConfig,
) -> Result<PlacedBoxes, LayoutError> {
    require_icm(c)?;
    spec.validate()?;
    geometry.validate()?;
    if concurrent == 0 {
        return Err(LayoutError::BadParam(
            "concurrent must be at least 1".into(),
        ));
    }
    let steps = spec.steps(geometry.pieces_per_step);
    // slot k is free from time slot_end[k]
    let mut slot_end: Vec<Time> = vec![1; concurrent.min(c.len() as u64) as usize];
    let mut boxes = Vec::new();
    let mut waiting = vec![false; c.len()];
    let retimed = retime(c, |i, g, t| {
        if !g.is_magic_init() || waiting[i] {
            return Offer::Accept;
        }
        let desired = t.saturating_sub(steps).max(1);
        let (slot, free) = slot_end
            .iter()
            .enumerate()
            .min_by_key(|(k, &end)| (end.max(desired), *k))
            .map(|(k, &end)| (k, end))
            .expect("at least one slot");
        let start = desired.max(free);
        slot_end[slot] = start + steps;
        boxes.push(BoxPlacement {
            consumer: Some(i),
            start,
            slot: slot as u64,
        });
        // the box is booked; the consumer waits for it if it is late
        if start + steps > t {
            waiting[i] = true;
            Offer::DelayTo(start + steps)
        } else {
            Offer::Accept
        }
    })?;
    Ok(PlacedBoxes {
        schedule: BoxSchedule {
            spec,
            concurrent,
            boxes,
        },
        retimed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Track {
    pub id: usize,
    pub x: u64,
    /// Half-open piece range `[t0, t1)`.
    pub t0: u64,
    pub t1: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Braid {
    /// Time step of the CNOT.
    pub time: Time,
    pub from_track: usize,
    pub to_track: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<[u64; 3]>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacedBox {
    /// First piece along the time axis.
    pub start: u64,
    pub x: u64,
    pub dims: [u64; 3],
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceEstimate {
    pub bounding_box: [u64; 3],
    pub bounding_volume: u64,
    pub occupied_volume: u64,
    pub box_count: u64,
    pub track_count: u64,
    pub duration: u64,
    pub footprint: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlumbingLayout {
    pub geometry: GeometryConfig,
    pub track_count: usize,
    /// Circuit depth in time steps.
    pub duration_steps: Time,
    /// Boxes side by side in the box row.
    pub box_row: u64,
    pub bounding_box: [u64; 3],
    pub tracks: Vec<Track>,
    pub braids: Vec<Braid>,
    pub boxes: Vec<PlacedBox>,
    pub estimate: ResourceEstimate,
}

/// Splits each wire's gates into lifetimes: a new lifetime starts at an
/// `init` that follows other use, and one ends at every measurement.
fn lifetimes(c: &Circuit, g: &GeometryConfig) -> Vec<Track> {
    let depth = c.depth().unwrap_or(0);
    // per wire: (birth, last use, measured)
    let mut open: Vec<Option<(Time, Time, bool)>> = vec![None; c.wire_count];
    let mut first_segment = vec![true; c.wire_count];
    let mut spans: Vec<(usize, Time, Time)> = Vec::new();
    let close = |w: usize, seg: (Time, Time, bool), end: Option<Time>, spans: &mut Vec<_>| {
        let death = if seg.2 { seg.1 } else { end.unwrap_or(depth) };
        spans.push((w, seg.0, death));
    };
    for gate in &c.gates {
        let t = gate.time().expect("scheduled");
        for &w in &gate.operands {
            let restart = gate.name() == "init" || open[w].is_some_and(|(_, _, measured)| measured);
            if restart {
                if let Some(seg) = open[w].take() {
                    close(w, seg, Some(seg.1), &mut spans);
                }
            }
            let seg = open[w].get_or_insert_with(|| {
                let birth = if gate.name() == "init" || !first_segment[w] {
                    t
                } else {
                    1
                };
                (birth, t, false)
            });
            first_segment[w] = false;
            seg.1 = t;
            seg.2 = gate.is_measurement();
        }
    }
    for (w, seg) in open.into_iter().enumerate() {
        if let Some(seg) = seg {
            close(w, seg, None, &mut spans);
        }
    }
    spans.sort_unstable_by_key(|&(w, birth, _)| (w, birth));
    spans
        .into_iter()
        .map(|(w, birth, death)| Track {
            id: w,
            x: w as u64 * g.pitch,
            t0: g.piece(birth),
            t1: death * g.pieces_per_step,
        })
        .collect()
}

fn braid_cells(b: &Braid, g: &GeometryConfig) -> Vec<[u64; 3]> {
    let (lo, hi) = braid_span(b, g);
    let z = g.piece(b.time);
    let top = g.qubit_depth - 1;
    let mut cells = Vec::new();
    for y in 0..=top {
        if y == 0 || y == top {
            cells.extend((lo..=hi).map(|x| [x, y, z]));
        } else {
            cells.push([lo, y, z]);
            cells.push([hi, y, z]);
        }
    }
    cells
}

fn braid_span(b: &Braid, g: &GeometryConfig) -> (u64, u64) {
    let lo = b.from_track.min(b.to_track) as u64 * g.pitch;
    let hi = b.from_track.max(b.to_track) as u64 * g.pitch + 1;
    (lo, hi)
}

/// Lays out a scheduled ICM circuit with the given boxes.
pub fn build_layout(
    c: &Circuit,
    bs: &BoxSchedule,
    geometry: &GeometryConfig,
    with_cells: bool,
) -> Result<PlumbingLayout, LayoutError> {
    require_icm(c)?;
    geometry.validate()?;
    bs.spec.validate()?;
    check_boxes(c, bs, geometry)?;

    let tracks = lifetimes(c, geometry);
    let mut braids: Vec<Braid> = c
        .gates
        .iter()
        .filter(|g| g.is_cnot())
        .map(|g| Braid {
            time: g.time().expect("scheduled"),
            from_track: g.operands[0],
            to_track: g.operands[1],
            cells: None,
        })
        .collect();
    if with_cells {
        for b in &mut braids {
            b.cells = Some(braid_cells(b, geometry));
        }
    }
    let mut placed: Vec<(Time, u64)> = bs.boxes.iter().map(|b| (b.start, bs.x(b))).collect();
    placed.sort_unstable();
    let boxes = placed
        .into_iter()
        .map(|(start, x)| PlacedBox {
            start: geometry.piece(start),
            x,
            dims: bs.spec.dims(),
        })
        .collect();
    let mut layout = PlumbingLayout {
        geometry: *geometry,
        track_count: c.wire_count,
        duration_steps: c.depth().unwrap_or(0),
        box_row: bs.row_width(),
        bounding_box: [0; 3],
        tracks,
        braids,
        boxes,
        estimate: ResourceEstimate::default(),
    };
    layout.estimate = estimate_resources(&layout);
    layout.bounding_box = layout.estimate.bounding_box;
    Ok(layout)
}

fn check_boxes(c: &Circuit, bs: &BoxSchedule, g: &GeometryConfig) -> Result<(), LayoutError> {
    let bad = |msg: String| Err(LayoutError::InconsistentSchedule(msg));
    let steps = bs.spec.steps(g.pieces_per_step);
    let mut by_slot: BTreeMap<u64, Vec<Time>> = BTreeMap::new();
    let mut supplied = HashSet::new();
    for b in &bs.boxes {
        if b.start == 0 {
            return bad("box starts before time 1".into());
        }
        if b.slot >= bs.concurrent {
            return bad(format!(
                "slot {} beyond concurrency {}",
                b.slot, bs.concurrent
            ));
        }
        by_slot.entry(b.slot).or_default().push(b.start);
        if let Some(i) = b.consumer {
            let Some(gate) = c.gates.get(i).filter(|gate| gate.is_magic_init()) else {
                return bad(format!("gate {i} is not a magic-state init"));
            };
            let t = gate.time().expect("scheduled");
            if t < b.start + steps {
                return bad(format!("gate {i} at {t} runs before its box finishes"));
            }
            if !supplied.insert(i) {
                return bad(format!("gate {i} supplied twice"));
            }
        }
    }
    for (slot, mut starts) in by_slot {
        starts.sort_unstable();
        if starts.windows(2).any(|w| w[0] + steps > w[1]) {
            return bad(format!("boxes overlap in slot {slot}"));
        }
    }
    Ok(())
}

/// Fenwick tree over track indices counting live rails.
struct LiveRails(Vec<i64>);

impl LiveRails {
    fn add(&mut self, track: usize, d: i64) {
        let mut i = track + 1;
        while i < self.0.len() {
            self.0[i] += d;
            i += i & i.wrapping_neg();
        }
    }

    fn prefix(&self, end: usize) -> i64 {
        let mut i = end.min(self.0.len() - 1);
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }

    /// Live rails among tracks whose column lies in `[lo, hi]`.
    fn in_columns(&self, lo: u64, hi: u64, pitch: u64) -> u64 {
        let first = lo.div_ceil(pitch) as usize;
        let last = (hi / pitch) as usize + 1;
        if first >= last {
            return 0;
        }
        (self.prefix(last) - self.prefix(first)) as u64
    }
}

/// Union of sorted inclusive spans, touching spans merged.
fn merge_spans(sorted: &[(u64, u64)]) -> Vec<(u64, u64)> {
    let mut out: Vec<(u64, u64)> = Vec::with_capacity(sorted.len());
    for &(lo, hi) in sorted {
        match out.last_mut() {
            Some((_, b)) if lo <= *b + 1 => *b = (*b).max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

/// Counts the occupied pieces without materialising cells: rails, then the
/// braid pieces not already on a live rail, then boxes (disjoint from both).
fn occupied_volume(l: &PlumbingLayout) -> u64 {
    let g = &l.geometry;
    let rail_h = g.rail_height();
    let rails: u64 = l.tracks.iter().map(|t| (t.t1 - t.t0) * rail_h).sum();
    let boxes: u64 = l.boxes.iter().map(|b| b.dims.iter().product::<u64>()).sum();

    let mut by_slab: BTreeMap<u64, Vec<(u64, u64)>> = BTreeMap::new();
    for b in &l.braids {
        by_slab
            .entry(g.piece(b.time))
            .or_default()
            .push(braid_span(b, g));
    }
    let mut events: Vec<(u64, i64, usize)> = Vec::with_capacity(l.tracks.len() * 2);
    for t in &l.tracks {
        events.push((t.t0, 1, t.id));
        events.push((t.t1, -1, t.id));
    }
    events.sort_unstable_by_key(|e| (e.0, e.1));
    let mut live = LiveRails(vec![0; l.track_count + 1]);
    let mut next = 0;
    let top = g.qubit_depth - 1;
    let mut extra = 0u64;
    for (z, mut spans) in by_slab {
        while next < events.len() && events[next].0 <= z {
            live.add(events[next].2, events[next].1);
            next += 1;
        }
        spans.sort_unstable();
        let union = merge_spans(&spans);
        let row: u64 = union.iter().map(|&(a, b)| b - a + 1).sum();
        let row_rails: u64 = union
            .iter()
            .map(|&(a, b)| live.in_columns(a, b, g.pitch))
            .sum();
        let mut ends: Vec<u64> = spans.iter().flat_map(|&(lo, hi)| [lo, hi]).collect();
        ends.sort_unstable();
        ends.dedup();
        let ends_on_rails: u64 = ends.iter().map(|&x| live.in_columns(x, x, g.pitch)).sum();
        for y in 0..=top {
            let on_rail_row = y < rail_h;
            extra += if y == 0 || y == top {
                row - if on_rail_row { row_rails } else { 0 }
            } else {
                ends.len() as u64 - if on_rail_row { ends_on_rails } else { 0 }
            };
        }
    }
    rails + extra + boxes
}

pub fn estimate_resources(l: &PlumbingLayout) -> ResourceEstimate {
    let g = &l.geometry;
    let has_boxes = !l.boxes.is_empty();
    let (dx, dy) = l.boxes.first().map_or((0, 0), |b| (b.dims[0], b.dims[1]));
    let x = (l.track_count as u64 * g.pitch).max(l.box_row * dx);
    let y = if l.track_count > 0 || has_boxes {
        g.qubit_depth
    } else {
        0
    } + if has_boxes { dy } else { 0 };
    let last_box = l
        .boxes
        .iter()
        .map(|b| b.start + b.dims[2])
        .max()
        .unwrap_or(0);
    let t = (l.duration_steps * g.pieces_per_step).max(last_box);
    ResourceEstimate {
        bounding_box: [x, y, t],
        bounding_volume: x * y * t,
        occupied_volume: occupied_volume(l),
        box_count: l.boxes.len() as u64,
        track_count: l.track_count as u64,
        duration: t,
        footprint: x * y,
    }
}

/// Every occupied cell, rails and braids and boxes, one entry per piece
/// and element (overlaps included).
pub fn layout_cells(l: &PlumbingLayout) -> Vec<[u64; 3]> {
    let g = &l.geometry;
    let mut cells = Vec::new();
    for t in &l.tracks {
        for z in t.t0..t.t1 {
            for y in 0..g.rail_height() {
                cells.push([t.x, y, z]);
            }
        }
    }
    for b in &l.braids {
        match &b.cells {
            Some(c) => cells.extend_from_slice(c),
            None => cells.extend(braid_cells(b, g)),
        }
    }
    for b in &l.boxes {
        let [dx, dy, dz] = b.dims;
        for x in b.x..b.x + dx {
            for y in g.qubit_depth..g.qubit_depth + dy {
                for z in b.start..b.start + dz {
                    cells.push([x, y, z]);
                }
            }
        }
    }
    cells
}

/// Schedules boxes, lays the circuit out and returns the estimate with the
/// layout and the delayed circuit.
pub fn layout_circuit(
    c: &Circuit,
    spec: BoxSpec,
    concurrent: u64,
    geometry: &GeometryConfig,
    with_cells: bool,
) -> Result<(PlumbingLayout, PlacedBoxes), LayoutError> {
    let placed = schedule_boxes(c, spec, concurrent, geometry)?;
    let layout = build_layout(
        &placed.retimed.circuit,
        &placed.schedule,
        geometry,
        with_cells,
    )?;
    Ok((layout, placed))
}

pub fn export_layout(l: &PlumbingLayout) -> String {
    serde_json::to_string_pretty(l).expect("layout serialises")
}

/// Parses a layout document and checks it is self-consistent.
pub fn import_layout(doc: &str) -> Result<PlumbingLayout, LayoutError> {
    let l: PlumbingLayout =
        serde_json::from_str(doc).map_err(|e| LayoutError::Document(e.to_string()))?;
    l.geometry.validate()?;
    let bad = |msg: &str| Err(LayoutError::Document(msg.to_string()));
    for t in &l.tracks {
        if t.id >= l.track_count || t.x != t.id as u64 * l.geometry.pitch || t.t0 > t.t1 {
            return bad("track out of place");
        }
    }
    for b in &l.braids {
        if b.from_track >= l.track_count || b.to_track >= l.track_count || b.time == 0 {
            return bad("braid references a missing track");
        }
        if let Some(cells) = &b.cells {
            if *cells != braid_cells(b, &l.geometry) {
                return bad("braid cells do not match its tracks");
            }
        }
    }
    if l.boxes.iter().any(|b| b.dims.contains(&0)) {
        return bad("box with an empty dimension");
    }
    if estimate_resources(&l) != l.estimate || l.bounding_box != l.estimate.bounding_box {
        return bad("estimate does not match the layout");
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gatelang::parse_circuit;

    fn circuit(lines: &[&str]) -> Circuit {
        parse_circuit(lines).unwrap()
    }

    fn starts(p: &PlacedBoxes) -> Vec<Time> {
        p.schedule.boxes.iter().map(|b| b.start).collect()
    }

    fn geometry() -> GeometryConfig {
        GeometryConfig::default()
    }

    #[test]
    fn no_magic_states_no_boxes() {
        let c = circuit(&["1@cx 0 1"]);
        let p = schedule_boxes(&c, BoxSpec::default(), 1, &geometry()).unwrap();
        assert!(p.schedule.boxes.is_empty());
    }

    #[test]
    fn just_in_time_boxes() {
        let c = circuit(&["10@init 0 A", "30@init 1 A"]);
        let p = schedule_boxes(&c, BoxSpec::default(), 1, &geometry()).unwrap();
        assert_eq!(starts(&p), vec![5, 25]);
        assert_eq!(p.retimed.circuit, c);
    }

    #[test]
    fn capped_boxes_delay_the_second_consumer() {
        let c = circuit(&["6@init 0 A", "6@init 1 A"]);
        let p = schedule_boxes(&c, BoxSpec::default(), 1, &geometry()).unwrap();
        assert_eq!(starts(&p), vec![1, 6]);
        let times: Vec<Time> = p
            .retimed
            .circuit
            .gates
            .iter()
            .map(|g| g.time().unwrap())
            .collect();
        assert_eq!(times, vec![6, 11]);
        let p = schedule_boxes(&c, BoxSpec::default(), 2, &geometry()).unwrap();
        assert_eq!(starts(&p), vec![1, 1]);
        assert_eq!(p.schedule.peak_concurrency(1), 2);
    }

    #[test]
    fn rejects_non_icm() {
        let c = circuit(&["1@t 0"]);
        assert_eq!(
            schedule_boxes(&c, BoxSpec::default(), 1, &geometry()).unwrap_err(),
            LayoutError::NotIcm("t".into())
        );
    }

    #[test]
    fn empty_layout() {
        let (l, _) = layout_circuit(
            &Circuit::default(),
            BoxSpec::default(),
            1,
            &geometry(),
            true,
        )
        .unwrap();
        assert_eq!(l.bounding_box, [0, 0, 0]);
        assert_eq!(l.estimate, ResourceEstimate::default());
    }

    #[test]
    fn two_tracks_one_cnot() {
        let (l, _) = layout_circuit(
            &circuit(&["1@cx 0 1"]),
            BoxSpec::default(),
            1,
            &geometry(),
            true,
        )
        .unwrap();
        assert_eq!(l.bounding_box, [4, 2, 1]);
        assert_eq!(l.tracks.len(), 2);
        assert!(l.tracks.iter().all(|t| t.t1 - t.t0 == 1));
        assert_eq!(l.braids.len(), 1);
        assert_eq!(l.estimate.occupied_volume, 8);
    }

    #[test]
    fn one_box_fixture() {
        let c = circuit(&["1@cx 0 1"]);
        let bs = BoxSchedule {
            spec: BoxSpec::default(),
            concurrent: 1,
            boxes: vec![BoxPlacement {
                consumer: None,
                start: 1,
                slot: 0,
            }],
        };
        let l = build_layout(&c, &bs, &geometry(), true).unwrap();
        assert_eq!(l.bounding_box, [4, 6, 5]);
        assert_eq!(l.estimate.bounding_volume, 120);
        assert_eq!(l.estimate.occupied_volume, 88);
    }

    #[test]
    fn analytic_count_matches_cells() {
        let c = circuit(&[
            "1@init 0 ZERO",
            "1@init 3 A",
            "2@cx 0 3",
            "2@cx 1 2",
            "3@mz 3",
            "3@cx 0 1",
            "4@init 3 PLUS",
            "5@cx 2 3",
            "6@mx 0",
        ]);
        for qubit_depth in 1..4 {
            let g = GeometryConfig {
                qubit_depth,
                pieces_per_step: 2,
                pitch: 3,
            };
            let (l, _) = layout_circuit(&c, BoxSpec::default(), 1, &g, false).unwrap();
            let cells: HashSet<[u64; 3]> = layout_cells(&l).into_iter().collect();
            assert_eq!(
                l.estimate.occupied_volume,
                cells.len() as u64,
                "{qubit_depth}"
            );
        }
    }

    #[test]
    fn recycled_track_has_two_segments() {
        let c = circuit(&["1@init 0 ZERO", "2@mz 0", "4@init 0 ZERO", "5@mx 0"]);
        let tracks = lifetimes(&c, &geometry());
        assert_eq!(
            tracks.iter().map(|t| (t.t0, t.t1)).collect::<Vec<_>>(),
            vec![(0, 2), (3, 5)]
        );
    }

    #[test]
    fn document_round_trip() {
        let c = circuit(&["1@init 1 A", "6@cx 0 1", "7@mz 1"]);
        let (l, _) = layout_circuit(&c, BoxSpec::default(), 1, &geometry(), true).unwrap();
        assert_eq!(import_layout(&export_layout(&l)).unwrap(), l);
        let mut tampered = l.clone();
        tampered.estimate.occupied_volume += 1;
        assert!(import_layout(&export_layout(&tampered)).is_err());
    }

    #[test]
    fn inconsistent_schedules_rejected() {
        let c = circuit(&["3@init 0 A"]);
        let early = BoxSchedule {
            spec: BoxSpec::default(),
            concurrent: 1,
            boxes: vec![BoxPlacement {
                consumer: Some(0),
                start: 1,
                slot: 0,
            }],
        };
        assert!(matches!(
            build_layout(&c, &early, &geometry(), false),
            Err(LayoutError::InconsistentSchedule(_))
        ));
    }
}
