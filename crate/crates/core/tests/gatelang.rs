use braidflow::gatelang::{parse_circuit_text, serialize_gate};
use braidflow::schedule::schedule_asap;
use braidflow::{metrics, parse_circuit, parse_gate};
use braidflow_testkit::{fuzz_circuit, rng};
use proptest::prelude::*;

#[test]
fn offset_moves_gate_past_its_base() {
    let c = parse_circuit_text("cx 0 1|3\n").unwrap();
    let s = schedule_asap(&c).unwrap();
    assert_eq!(serialize_gate(&s.gates[0]), "4@cx 0 1");
}

#[test]
fn offset_adds_to_dependency_base() {
    // second gate's base is 2, offset 2 puts it at 4
    let c = parse_circuit_text("h 0|0\ncx 0 1|2\n").unwrap();
    let s = schedule_asap(&c).unwrap();
    assert_eq!(s.to_lines()[1..], ["1@h 0", "4@cx 0 1"]);
}

#[test]
fn golden_adder_file_is_canonical() {
    let text = include_str!("golden/adder_n1.qlist");
    let c = parse_circuit_text(text).unwrap();
    assert_eq!(c.to_text(), text);
    assert_eq!(c.len(), 6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn circuits_round_trip(seed in any::<u64>(), scheduled in any::<bool>()) {
        let c = fuzz_circuit(&mut rng(seed), scheduled);
        let lines = c.to_lines();
        let back = parse_circuit(&lines).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.to_lines(), lines);
        prop_assert_eq!(metrics(&back), metrics(&c));
    }

    #[test]
    fn gates_round_trip(seed in any::<u64>(), scheduled in any::<bool>()) {
        for g in fuzz_circuit(&mut rng(seed), scheduled).gates {
            let line = serialize_gate(&g);
            let back = parse_gate(&line).unwrap();
            prop_assert_eq!(serialize_gate(&back), line);
            prop_assert_eq!(back, g);
        }
    }

    #[test]
    fn parsing_never_panics(line in "\\PC{0,40}") {
        let _ = parse_gate(&line);
        let _ = parse_circuit(&[line.as_str()]);
    }

    #[test]
    fn token_soup_never_panics(parts in prop::collection::vec(
        prop::sample::select(vec!["cx", "t", "init", "A", "0", "1", "-3", "|", "@", "3@", "|2", ".wires", ".delay", "99999999999999999999", " ", "#"]),
        0..12,
    )) {
        let line = parts.concat();
        let _ = parse_gate(&line);
        let _ = parse_circuit(&[".wires 2", line.as_str()]);
    }
}
