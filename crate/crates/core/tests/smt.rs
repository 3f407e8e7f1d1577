use std::time::Duration;

use qnnv_core::bundled::guarded;
use qnnv_core::domain::{ActivationTables, Domain};
use qnnv_core::ir::{lower, run, LowerOptions, SsaProgram, Value};
use qnnv_core::property::parse_assertion;
use qnnv_core::smt::emit::{bv_literal, fixed_mul};
use qnnv_core::smt::sexp::parse_all;
use qnnv_core::smt::{decode_model, emit_smtlib, run_solver, Model, SolverConfig, SolverOutcome};
use qnnv_core::{FxpFormat, HyperRect, RoundingMode, SafetyProperty};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn solver() -> SolverConfig {
    SolverConfig::default().with_timeout(Duration::from_secs(30))
}

fn q(int: u32, frac: u32) -> Domain {
    Domain::fixed(FxpFormat::new(int, frac).unwrap(), RoundingMode::TruncateTowardNegInf)
}

fn guarded_program(assert: &str, domain: Domain) -> SsaProgram {
    let prop = SafetyProperty::new(HyperRect::new(vec![(0.0, 1.0); 2]).unwrap(), parse_assertion(assert).unwrap());
    lower(&guarded(), &prop, domain, &ActivationTables::default(), None, None, &LowerOptions::default()).unwrap()
}

#[test]
fn guarded_bound_holds_on_boolean_inputs() {
    let p = guarded_program("y0 <= 2 && y1 <= 5 && y2 <= 4", q(8, 0));
    let script = emit_smtlib(&p).unwrap();
    assert!(script.contains("(set-logic QF_BV)"));
    assert!(script.contains("(declare-const x0_1 (_ BitVec 8))"));
    assert_eq!(run_solver(&script, &solver()).outcome, SolverOutcome::Unsat);
}

#[test]
fn guarded_tighter_bound_yields_a_replayable_model() {
    for domain in [q(8, 0), Domain::Real, Domain::Float32] {
        let p = guarded_program("y0 <= 2 && y1 <= 4.5 && y2 <= 4", domain);
        let out = run_solver(&emit_smtlib(&p).unwrap(), &solver());
        let SolverOutcome::Sat(model) = out.outcome else { panic!("{domain}: {:?}", out.outcome) };
        let x = decode_model(&p, &model).unwrap();
        let v = run(&p, &x).unwrap();
        assert!(v.assumes_hold());
        assert!(!v.property_holds(), "{domain}: {x:?}");
    }
}

#[test]
fn empty_assert_list_is_trivially_unsat() {
    let mut p = guarded_program("y0 <= 2", q(8, 0));
    p.asserts.clear();
    let script = emit_smtlib(&p).unwrap();
    assert!(script.contains("(assert (not true))"));
    assert_eq!(run_solver(&script, &solver()).outcome, SolverOutcome::Unsat);
}

#[test]
fn emission_is_deterministic() {
    let a = emit_smtlib(&guarded_program("y0 <= 2 || y2 > 1", q(4, 4))).unwrap();
    let p = guarded_program("y0 <= 2 || y2 > 1", q(4, 4));
    assert_eq!(a, emit_smtlib(&p).unwrap());
    assert_eq!(a, emit_smtlib(&p.compacted()).unwrap());
}

#[test]
fn bare_check_sat_gives_an_empty_model() {
    let out = run_solver("(set-logic QF_BV)(check-sat)", &solver());
    assert_eq!(out.outcome, SolverOutcome::Sat(Model::default()));
}

#[test]
fn contradictory_assumes_are_unsat() {
    let script = "(set-logic QF_BV)(declare-const x (_ BitVec 8))(assert (bvslt x #x00))(assert (bvsgt x #x00))(check-sat)(get-model)";
    assert_eq!(run_solver(script, &solver()).outcome, SolverOutcome::Unsat);
}

#[test]
fn missing_solver_is_an_error() {
    let cfg = SolverConfig { program: "/nonexistent/solver".into(), ..SolverConfig::default() };
    let out = run_solver("(check-sat)", &cfg);
    assert!(matches!(out.outcome, SolverOutcome::Error(ref m) if m.contains("cannot start")), "{:?}", out.outcome);
}

#[test]
fn garbage_output_is_an_error() {
    let script = "(set-logic QF_BV)(assert (bvslt x #x00))(check-sat)";
    assert!(matches!(run_solver(script, &solver()).outcome, SolverOutcome::Error(_)));
}

#[test]
fn hard_instance_times_out_near_the_limit() {
    // factor a 62-bit semiprime
    let n: u128 = 2_147_483_629 * 2_147_483_587;
    let script = format!(
        "(set-logic QF_BV)(declare-const a (_ BitVec 64))(declare-const b (_ BitVec 64))
         (assert (bvult a #x0000000100000000))(assert (bvult b #x0000000100000000))
         (assert (bvugt a #x0000000000000001))(assert (bvugt b #x0000000000000001))
         (assert (= (bvmul a b) (_ bv{n} 64)))(check-sat)"
    );
    let cfg = SolverConfig::default().with_timeout(Duration::from_secs(1));
    let out = run_solver(&script, &cfg);
    assert_eq!(out.outcome, SolverOutcome::Timeout);
    assert!(out.wall >= Duration::from_secs(1) && out.wall < Duration::from_millis(2500), "{:?}", out.wall);
}

fn program_with_input(domain: Domain, lo: f64, hi: f64) -> SsaProgram {
    let net = qnnv_core::Network::new(
        "id",
        1,
        vec![qnnv_core::Layer::new(vec![vec![1.0]], vec![0.0], qnnv_core::ActivationKind::Identity)],
    )
    .unwrap();
    let prop = SafetyProperty::new(HyperRect::new(vec![(lo, hi)]).unwrap(), parse_assertion("y0 <= 0").unwrap());
    lower(&net, &prop, domain, &ActivationTables::default(), None, None, &LowerOptions::default()).unwrap()
}

fn model(text: &str) -> Model {
    Model::from_sexp(&parse_all(text).unwrap()[0]).unwrap()
}

#[test]
fn decoding_bit_vector_models() {
    let p = program_with_input(q(4, 4), -8.0, 7.9375);
    let x = decode_model(&p, &model("((define-fun x0_1 () (_ BitVec 8) #b00101111))")).unwrap();
    assert_eq!(x, vec![Value::Fixed(47)]);
    let Domain::Fixed { format, .. } = p.domain else { unreachable!() };
    assert_eq!(format.to_f64(47), 2.9375);
    let zero = decode_model(&p, &model("((define-fun x0_1 () (_ BitVec 8) #x00))")).unwrap();
    assert_eq!(zero, vec![Value::Fixed(0)]);
    let wide = program_with_input(q(8, 4), -8.0, 7.9375);
    assert!(decode_model(&wide, &model("((define-fun x0_1 () (_ BitVec 8) #b00101111))")).is_err());
    assert!(decode_model(&p, &model("((define-fun y () (_ BitVec 8) #x00))")).is_err());
}

#[test]
fn decoding_rejects_values_outside_the_region() {
    let p = program_with_input(q(4, 4), 0.0, 1.0);
    let err = decode_model(&p, &model("((define-fun x0_1 () (_ BitVec 8) #b00101111))")).unwrap_err();
    assert!(err.to_string().contains("outside"), "{err}");
}

/// Solver-checked agreement of the bit-vector product with the executor.
fn check_mul(format: FxpFormat, rounding: RoundingMode, pairs: &[(i64, i64)]) {
    let w = format.width();
    let eqs: Vec<String> = pairs
        .iter()
        .map(|&(a, b)| {
            let e = format.mul_raw(a, b, rounding).0;
            format!("(= {} {})", fixed_mul(format, rounding, &bv_literal(a.into(), w), &bv_literal(b.into(), w)), bv_literal(e.into(), w))
        })
        .collect();
    let script = format!("(set-logic QF_BV)(assert (not (and true {})))(check-sat)", eqs.join(" "));
    assert_eq!(run_solver(&script, &solver()).outcome, SolverOutcome::Unsat, "{format} {rounding}");
}

#[test]
fn bit_vector_products_match_the_executor() {
    for rounding in [RoundingMode::TruncateTowardNegInf, RoundingMode::NearestTiesTowardZero] {
        let f = FxpFormat::new(3, 3).unwrap();
        let all: Vec<(i64, i64)> =
            (f.min_raw()..=f.max_raw()).flat_map(|a| (f.min_raw()..=f.max_raw()).map(move |b| (a, b))).collect();
        check_mul(f, rounding, &all);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (i, l) in [(8, 8), (16, 16), (1, 7), (32, 32)] {
            let f = FxpFormat::new(i, l).unwrap();
            let pairs: Vec<(i64, i64)> = (0..300)
                .map(|_| (rng.gen_range(f.min_raw()..=f.max_raw()), rng.gen_range(f.min_raw()..=f.max_raw())))
                .collect();
            check_mul(f, rounding, &pairs);
        }
    }
}
