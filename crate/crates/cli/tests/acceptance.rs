//! Release criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fail.

mod support;

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use braidflow::analysis::{enforce_t_capacity, simulate_availability, FactoryConfig};
use braidflow::gatelang::{is_icm_kind, parse_circuit_text, serialize_gate};
use braidflow::genio::gen_random_cliffordt;
use braidflow::layout::{
    build_layout, export_layout, import_layout, layout_circuit, BoxPlacement, BoxSchedule, BoxSpec,
    GeometryConfig,
};
use braidflow::pipeline::{parse_plan, run_pipeline, to_bytes};
use braidflow::rewrite::{
    decompose_to_icm, exhaustive_optimize, RuleSet, TemplateSet, OPT_DEFAULT_RULES,
};
use braidflow::schedule::{recycle_wires, schedule_asap};
use braidflow::{metrics, parse_circuit, Circuit};
use braidflow_testkit::{
    availability_violations, fuzz_circuit, lifetimes, min_gates_reachable, order_preserved,
    random_circuit, rng, window_counts,
};
use rand::Rng;
use serde_json::json;
use support::{cli, post, Server};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn peak_rss_kib() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

fn offset_arithmetic() -> Outcome {
    let c = parse_circuit_text("cx 0 1|3\n").map_err(|e| e.to_string())?;
    let s = schedule_asap(&c).map_err(|e| e.to_string())?;
    let line = serialize_gate(&s.gates[0]);
    ensure(line == "4@cx 0 1", || format!("got `{line}`"))?;
    Ok(line)
}

fn scale() -> Outcome {
    const LIMIT: Duration = Duration::from_secs(60);
    const MEMORY_KIB: u64 = 2 * 1024 * 1024;
    let plan = parse_plan(
        "generate random n=2000 m=100000 seed=1\nicm\nschedule asap\nanalyze availability\nlayout estimate\n",
    )
    .map_err(|e| e.to_string())?;
    let started = Instant::now();
    let out = run_pipeline(&plan, Vec::new()).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let peak = peak_rss_kib().ok_or("VmHWM unavailable")?;
    let estimate: serde_json::Value =
        serde_json::from_str(&out.join("\n")).map_err(|e| e.to_string())?;
    ensure(estimate["box_count"].as_u64() > Some(0), || {
        "no boxes placed".into()
    })?;
    let summary = format!("{:.2} s, peak {} MiB", elapsed.as_secs_f64(), peak / 1024);
    ensure(elapsed < LIMIT && peak < MEMORY_KIB, || summary.clone())?;
    Ok(summary)
}

fn count(c: &Circuit, kinds: &[&str]) -> usize {
    c.gates.iter().filter(|g| kinds.contains(&g.name())).count()
}

fn icm_closure() -> Outcome {
    let templates = TemplateSet::default_icm();
    let mut r = rng(101);
    for case in 0..100u64 {
        let (n, m) = (r.gen_range(1..=16), r.gen_range(0..=500));
        let c = gen_random_cliffordt(n, m, case).map_err(|e| e.to_string())?;
        let icm = decompose_to_icm(&c, &templates).map_err(|e| e.to_string())?;
        if let Some(g) = icm.gates.iter().find(|g| !is_icm_kind(g.name())) {
            return Err(format!("case {case}: `{}` left over", g.name()));
        }
        let want = 2 * count(&c, &["t", "tdg"]) + count(&c, &["s", "sdg"]) + 3 * count(&c, &["h"]);
        let got = icm.wire_count - c.wire_count;
        ensure(got == want, || {
            format!("case {case}: {got} ancillae, expected {want}")
        })?;
    }
    Ok("100 circuits".into())
}

/// Scheduled circuits with T consumers: plain Clifford+T and ICM.
fn scheduled_corpus() -> Vec<Circuit> {
    let mut r = rng(202);
    (0..100u64)
        .map(|case| {
            let c = gen_random_cliffordt(r.gen_range(1..=16), r.gen_range(0..=500), case).unwrap();
            let c = if case % 2 == 0 {
                decompose_to_icm(&c, &TemplateSet::default_icm()).unwrap()
            } else {
                c
            };
            schedule_asap(&c).unwrap()
        })
        .collect()
}

fn capacity_oracle() -> Outcome {
    let mut r = rng(303);
    for (case, c) in scheduled_corpus().iter().enumerate() {
        let (w, cap) = (r.gen_range(1..=10), r.gen_range(1..=3));
        let out = enforce_t_capacity(c, w, cap)
            .map_err(|e| e.to_string())?
            .circuit;
        if let Some((start, n)) = window_counts(&out, w).into_iter().find(|&(_, n)| n > cap) {
            return Err(format!("case {case}: window at {start} holds {n} > {cap}"));
        }
        ensure(order_preserved(c, &out), || {
            format!("case {case}: wire order changed")
        })?;
    }
    Ok("100 circuits".into())
}

fn availability_soundness() -> Outcome {
    let mut r = rng(404);
    for (case, c) in scheduled_corpus().iter().enumerate() {
        let f = FactoryConfig {
            concurrent: r.gen_range(1..=3),
            duration: r.gen_range(1..=10),
            warmup: r.gen_bool(0.5),
        };
        let a = simulate_availability(c, f).map_err(|e| e.to_string())?;
        ensure(a.trace.available.iter().all(|&v| v >= 0), || {
            format!("case {case}: negative stock")
        })?;
        let m = metrics(c);
        let consumers = (m.t_count + m.t_states) as u64;
        ensure(a.trace.total_consumed() == consumers, || {
            format!(
                "case {case}: consumed {} of {consumers}",
                a.trace.total_consumed()
            )
        })?;
        let problems = availability_violations(&a.retimed.circuit, f);
        ensure(problems.is_empty(), || {
            format!("case {case}: {}", problems[0])
        })?;
    }
    Ok("100 circuits".into())
}

fn search_oracle() -> Outcome {
    let rules = RuleSet::parse(OPT_DEFAULT_RULES).map_err(|e| e.to_string())?;
    let mut r = rng(505);
    let mut states = 0;
    for case in 0..20 {
        let c = random_circuit(&mut r, 3, 10, &["cx", "cx", "cx", "ccx", "h", "t"]);
        let (best, seen) = min_gates_reachable(&c);
        states += seen;
        let (_, report) = exhaustive_optimize(&c, &rules, 100_000).map_err(|e| e.to_string())?;
        ensure(report.objective_after as usize == best, || {
            format!(
                "case {case}: search {} vs enumeration {best}",
                report.objective_after
            )
        })?;
    }
    Ok(format!("20 circuits, {states} states enumerated"))
}

fn estimation_fixture() -> Outcome {
    let c = parse_circuit_text("1@cx 0 1\n").map_err(|e| e.to_string())?;
    let bs = BoxSchedule {
        spec: BoxSpec {
            dx: 4,
            dy: 4,
            dz: 5,
        },
        concurrent: 1,
        boxes: vec![BoxPlacement {
            consumer: None,
            start: 1,
            slot: 0,
        }],
    };
    let g = GeometryConfig {
        pitch: 2,
        qubit_depth: 2,
        pieces_per_step: 1,
    };
    let l = build_layout(&c, &bs, &g, false).map_err(|e| e.to_string())?;
    let v = l.estimate.bounding_volume;
    ensure(v == 120, || format!("bounding volume {v}"))?;
    Ok(format!("bounding volume {v}"))
}

fn round_trips() -> Outcome {
    let mut r = rng(606);
    for case in 0..1000 {
        let c = fuzz_circuit(&mut r, case % 2 == 0);
        let lines = c.to_lines();
        let back = parse_circuit(&lines).map_err(|e| format!("case {case}: {e}"))?;
        ensure(back == c && back.to_lines() == lines, || {
            format!("qlist case {case}")
        })?;
    }
    let templates = TemplateSet::default_icm();
    for case in 0..1000u64 {
        let c = gen_random_cliffordt(r.gen_range(1..=6), r.gen_range(0..=30), case).unwrap();
        let c = schedule_asap(&decompose_to_icm(&c, &templates).unwrap()).unwrap();
        let spec = BoxSpec {
            dx: r.gen_range(1..=5),
            dy: r.gen_range(1..=5),
            dz: r.gen_range(1..=6),
        };
        let g = GeometryConfig {
            pitch: r.gen_range(2..=3),
            qubit_depth: r.gen_range(1..=3),
            pieces_per_step: r.gen_range(1..=2),
        };
        let (l, _) = layout_circuit(&c, spec, r.gen_range(1..=3), &g, case % 2 == 0)
            .map_err(|e| e.to_string())?;
        let doc = export_layout(&l);
        let back = import_layout(&doc).map_err(|e| format!("layout case {case}: {e}"))?;
        ensure(back == l && export_layout(&back) == doc, || {
            format!("layout case {case}")
        })?;
    }
    Ok("1000 gate lists, 1000 layouts".into())
}

fn recycling_validity() -> Outcome {
    let templates = TemplateSet::default_icm();
    let mut r = rng(707);
    let mut saved = 0;
    for case in 0..100u64 {
        let c = gen_random_cliffordt(r.gen_range(1..=16), r.gen_range(0..=300), case).unwrap();
        let c = schedule_asap(&decompose_to_icm(&c, &templates).unwrap()).unwrap();
        let (out, map) = recycle_wires(&c).map_err(|e| e.to_string())?;
        ensure(out.wire_count <= c.wire_count, || {
            format!("case {case}: more tracks than wires")
        })?;
        saved += c.wire_count - out.wire_count;
        let spans = lifetimes(&c);
        let mut by_track: Vec<Vec<(u64, u64)>> = vec![Vec::new(); out.wire_count];
        for (w, t) in map.iter().enumerate() {
            if let Some(t) = t {
                by_track[*t].push(spans[w].ok_or("mapped wire without gates")?);
            }
        }
        for (t, spans) in by_track.iter_mut().enumerate() {
            spans.sort_unstable();
            let clash = spans.windows(2).any(|p| p[1].0 <= p[0].1);
            ensure(!clash, || {
                format!("case {case}: track {t} has overlapping lifetimes")
            })?;
        }
    }
    Ok(format!("100 circuits, {saved} wires saved"))
}

const PLANS: &[&str] = &[
    "generate cnot-ladder n=2",
    "generate adder n=4\nicm\nschedule asap\nanalyze availability\nlayout build\nlayout estimate",
    "generate adder n=3\nrewrite budget=50",
    "generate random n=6 m=80 seed=9\nicm\nschedule asap\nschedule recycle",
    "generate random n=5 m=60 seed=4\nschedule asap\nanalyze t-dist window=4",
    "generate random n=5 m=60 seed=5\nschedule asap\nanalyze enforce window=3 capacity=1",
    "generate adder n=2\nschedule reorder-first-use\nschedule swap i=0 j=3\nicm\nschedule asap\nanalyze report duration=3",
    "generate random n=4 m=40 seed=2\nicm\nschedule asap\nlayout build dz=3 concurrent=2 cells=false",
    "generate adder n=2\nicm\nschedule asap\nschedule delay index=3 delta=2\nanalyze availability duration=7 concurrent=2 emit=circuit",
    "generate random n=8 m=120 seed=3\nicm\nschedule asap\nanalyze enforce window=5 capacity=2\nlayout estimate dx=2 dy=3",
];

fn cli_api_parity() -> Outcome {
    let server = Server::start();
    let dir = std::env::temp_dir().join(format!("braidflow-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let mut bytes = 0;
    for (i, plan) in PLANS.iter().enumerate() {
        let path = dir.join(format!("plan{i}.txt"));
        std::fs::write(&path, plan).map_err(|e| e.to_string())?;
        let via_cli = cli(&["pipeline", "--file", path.to_str().unwrap()], None);
        let stages: Vec<&str> = plan.lines().collect();
        let resp = post(server.port, "/v1/pipeline", json!({ "stages": stages }));
        ensure(resp.status == 200, || {
            format!("plan {i}: HTTP {} {}", resp.status, resp.text())
        })?;
        let lines: Vec<String> =
            serde_json::from_value(resp.json()["lines"].clone()).map_err(|e| e.to_string())?;
        let via_api = to_bytes(&lines);
        ensure(via_cli == via_api, || format!("plan {i} differs"))?;
        bytes += via_cli.len();
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(format!("{} plans, {bytes} bytes compared", PLANS.len()))
}

fn main() {
    // the scale run goes first so the memory high-water mark is its own
    let criteria: &[Criterion] = &[
        ("scale target", scale),
        ("offset arithmetic", offset_arithmetic),
        ("ICM closure", icm_closure),
        ("capacity oracle", capacity_oracle),
        ("availability soundness", availability_soundness),
        ("search oracle", search_oracle),
        ("estimation fixture", estimation_fixture),
        ("round trips", round_trips),
        ("recycling validity", recycling_validity),
        ("CLI/API parity", cli_api_parity),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
