use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cpp_mechanism::io::{parse_instance, to_canonical_json};
use cpp_mechanism::mechanism::{run_midr, solve_allocation};
use cpp_mechanism::verify::{brute_force_opt, random_instance, GeneratorConfig};
use cpp_mechanism::{MechanismConfig, Rounding};

const EX: &str = r#"{"n": 2, "m": 3, "k": 2, "players": [
  {"type": "coverage", "universe": [{"id": "a", "weight": 2.0}, {"id": "b", "weight": 1.0}],
   "sets": {"1": ["a"], "2": ["a", "b"], "3": ["b"]}},
  {"type": "mrs", "terms": [{"weight": 1.0, "matroid": {"kind": "uniform", "rank": 1}}]}
]}"#;

#[test]
fn file_to_outcome() {
    let inst = parse_instance(EX).unwrap();
    let out = run_midr(&inst, &MechanismConfig::default(), 5).unwrap();
    assert!(out.chosen.len() <= 2);
    let (_, opt) = brute_force_opt(&inst, 24).unwrap();
    assert!(out.expected_welfare >= (1.0 - 1.0 / std::f64::consts::E) * opt);
    assert!(out.expected_welfare <= opt + 1e-12);
    let json = serde_json::to_string(&out).unwrap();
    // the iterate trace is not serialized
    let back: cpp_mechanism::MechanismOutcome = serde_json::from_str(&json).unwrap();
    assert_eq!(serde_json::to_string(&back).unwrap(), json);
    assert!(back.solve_report.trace.is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn canonical_json_round_trips(seed in any::<u64>()) {
        let inst = random_instance(&mut ChaCha8Rng::seed_from_u64(seed), &GeneratorConfig::default());
        let text = to_canonical_json(&inst);
        let back = parse_instance(&text).unwrap();
        prop_assert_eq!(to_canonical_json(&back), text);
        prop_assert_eq!(back, inst);
    }

    #[test]
    fn mechanism_properties(seed in any::<u64>(), plus in any::<bool>()) {
        let inst = random_instance(&mut ChaCha8Rng::seed_from_u64(seed), &GeneratorConfig::default());
        let rounding = if plus { Rounding::RkPlus } else { Rounding::Rk };
        let cfg = MechanismConfig::new(rounding, 1e-8);
        let out = run_midr(&inst, &cfg, seed).unwrap();
        let f_upper = inst.grand_welfare();
        prop_assert!(out.chosen.len() <= inst.k());
        prop_assert!(out.solve_report.duality_gap <= 1e-8 * f_upper + 1e-15);
        for i in 0..inst.n() {
            prop_assert!(out.expected_payments[i] >= -1e-6 * f_upper);
            prop_assert!(out.expected_values[i] - out.expected_payments[i] >= -1e-6 * f_upper);
        }
        let total: f64 = out.expected_values.iter().sum();
        prop_assert!((total - out.expected_welfare).abs() <= 1e-9 * f_upper.max(1.0));
    }

    #[test]
    fn relabeling_projects_keeps_the_optimum(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gen = GeneratorConfig { max_m: 5, ..GeneratorConfig::default() };
        let inst = random_instance(&mut rng, &gen);
        // reversing every coverage set list through the canonical form relabels j -> m+1-j
        let m = inst.m();
        let mut doc: serde_json::Value = serde_json::from_str(&to_canonical_json(&inst)).unwrap();
        let mut any_mrs = false;
        for player in doc["players"].as_array_mut().unwrap() {
            if player["type"] == "coverage" {
                let sets = player["sets"].as_object().unwrap().clone();
                let flipped: serde_json::Map<String, serde_json::Value> = sets
                    .into_iter()
                    .map(|(j, ids)| ((m + 1 - j.parse::<usize>().unwrap()).to_string(), ids))
                    .collect();
                player["sets"] = serde_json::Value::Object(flipped);
            } else {
                any_mrs = true;
            }
        }
        prop_assume!(!any_mrs);
        let flipped = parse_instance(&doc.to_string()).unwrap();
        let cfg = MechanismConfig::new(Rounding::Rk, 1e-9);
        let a = solve_allocation(&inst, &cfg).unwrap().objective_value;
        let b = solve_allocation(&flipped, &cfg).unwrap().objective_value;
        prop_assert!((a - b).abs() <= 2e-9 * inst.grand_welfare().max(1.0));
        let (oa, ob) = (brute_force_opt(&inst, 24).unwrap().1, brute_force_opt(&flipped, 24).unwrap().1);
        prop_assert!((oa - ob).abs() <= 1e-12 * oa.max(1.0));
    }
}
