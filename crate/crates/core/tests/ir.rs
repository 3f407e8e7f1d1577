use std::collections::HashMap;

use num_rational::BigRational;
use proptest::prelude::*;
use qnnv_core::bundled::{guarded, random_dyadic};
use qnnv_core::domain::{ActivationTables, Domain, FixedArith, TableConfig};
use qnnv_core::exec::compile_fixed;
use qnnv_core::interval::{propagate, GuardStatus};
use qnnv_core::ir::balance::collect_leaves;
use qnnv_core::ir::{
    balance, lower, render, render_assignments, run, simplify, slice, CmpOp, ExprDag, LowerOptions,
    NameMap, Node, NodeId, Rhs, SsaProgram, Value, VarInfo, VarRole,
};
use qnnv_core::property::parse_assertion;
use qnnv_core::{
    ActivationKind, FxpFormat, HyperRect, Layer, Network, RoundingMode, SafetyProperty,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn q(int: u32, frac: u32) -> Domain {
    Domain::fixed(
        FxpFormat::new(int, frac).unwrap(),
        RoundingMode::TruncateTowardNegInf,
    )
}

fn guarded_names() -> LowerOptions {
    LowerOptions {
        both_bounds: false,
        names: Some(NameMap {
            inputs: vec!["x".into(), "y".into()],
            neurons: vec![vec!["a".into(), "b".into(), "f".into()]],
        }),
    }
}

fn guarded_property(assert: &str) -> SafetyProperty {
    SafetyProperty::new(
        HyperRect::new(vec![(0.0, 1.0); 2]).unwrap(),
        parse_assertion(assert).unwrap(),
    )
}

fn guarded_program(assert: &str, with_intervals: bool) -> SsaProgram {
    let net = guarded();
    let prop = guarded_property(assert);
    let tables = ActivationTables::default();
    let domain = q(8, 0);
    let bx = propagate(&net, &prop.input_region, domain, &tables).unwrap();
    let guards = bx.guards(&net);
    let (b, g) = if with_intervals {
        (Some(&bx), Some(guards.as_slice()))
    } else {
        (None, None)
    };
    lower(&net, &prop, domain, &tables, b, g, &guarded_names()).unwrap()
}

fn names(p: &SsaProgram) -> Vec<&str> {
    p.assignments.iter().map(|a| p.name(a.var)).collect()
}

#[test]
fn guarded_lowers_to_eight_assignments_and_three_asserts() {
    let p = guarded_program("y0 <= 2 && y1 <= 5 && y2 <= 4", false);
    assert_eq!(names(&p), ["x1", "y1", "a1", "a2", "b1", "b2", "f1", "f2"]);
    assert_eq!(p.asserts.len(), 3);
    assert_eq!(p.stats().ites, 3);
    p.validate().unwrap();
    let text = render(&p, false);
    assert!(
        text.starts_with("x1 == nondet_symbol(nondet0)\ny1 == nondet_symbol(nondet1)\n"),
        "{text}"
    );
    assert!(text.contains("a1 == 2 * x1 + -3 * y1\n"), "{text}");
    assert!(text.contains("a2 == (a1 < 0 ? 0 : a1)\n"), "{text}");
    assert!(text.contains("(assert) f2 <= 4\n"), "{text}");
}

#[test]
fn guarded_guards_leave_only_the_a_chain_branching() {
    let p = guarded_program("y0 <= 2 && y1 <= 5 && y2 <= 4", true);
    assert_eq!(p.stats().ites, 1);
    let core = p.branching_core();
    let text = render_assignments(&p, &core);
    assert_eq!(text.lines().count(), 4, "{text}");
    assert_eq!(
        text,
        "x1 == nondet_symbol(nondet0)\ny1 == nondet_symbol(nondet1)\na1 == 2 * x1 + -3 * y1\na2 == (a1 < 0 ? 0 : a1)\n"
    );
    let b2 = p
        .assignments
        .iter()
        .find(|a| p.name(a.var) == "b2")
        .unwrap();
    let Rhs::Expr(e) = b2.rhs else { panic!() };
    assert!(matches!(p.dag.node(e), Node::Var(_)));
}

#[test]
fn guarded_property_is_discharged_by_intervals() {
    let p = simplify(&guarded_program("y0 <= 2 && y1 <= 5 && y2 <= 4", true));
    assert!(p.asserts_trivially_true(), "{}", render(&p, true));
    let tight = simplify(&guarded_program("y0 <= 1 && y1 <= 5 && y2 <= 4", true));
    assert!(!tight.asserts_trivially_true());
}

#[test]
fn slicing_to_one_assert_keeps_its_cone() {
    let p = slice(&guarded_program("y2 <= 4", false));
    assert_eq!(names(&p), ["x1", "y1", "f1", "f2"]);
    assert_eq!(p.stats().ites, 1);
    p.validate().unwrap();
}

#[test]
fn slicing_is_identity_when_every_output_is_asserted() {
    let p = guarded_program("y0 <= 2 && y1 <= 5 && y2 <= 4", false);
    assert_eq!(render(&slice(&p), true), render(&p, true));
}

fn add_depth(dag: &ExprDag, id: NodeId) -> usize {
    match dag.node(id) {
        Node::Add(a, b) => 1 + add_depth(dag, *a).max(add_depth(dag, *b)),
        _ => 0,
    }
}

fn count_adds(dag: &ExprDag, id: NodeId) -> usize {
    dag.reachable([id])
        .iter()
        .filter(|&&n| matches!(dag.node(n), Node::Add(..)))
        .count()
}

fn sum_net(n: usize, bias: f64) -> Network {
    let w = (0..n).map(|i| (i as f64 + 1.0) / 4.0).collect();
    Network::new(
        "sum",
        n,
        vec![Layer::new(vec![w], vec![bias], ActivationKind::Identity)],
    )
    .unwrap()
}

fn first_pre(p: &SsaProgram) -> NodeId {
    let a = p
        .assignments
        .iter()
        .find(|a| matches!(p.var(a.var).role, VarRole::Pre { .. }))
        .unwrap();
    match a.rhs {
        Rhs::Expr(e) => e,
        Rhs::Nondet(_) => unreachable!(),
    }
}

#[test]
fn eight_term_chain_balances_to_depth_three() {
    let net = sum_net(8, 0.0);
    let prop = SafetyProperty::new(
        HyperRect::new(vec![(0.0, 1.0); 8]).unwrap(),
        parse_assertion("y0 <= 100").unwrap(),
    );
    let p = lower(
        &net,
        &prop,
        q(8, 4),
        &ActivationTables::default(),
        None,
        None,
        &LowerOptions::default(),
    )
    .unwrap();
    let before = first_pre(&p);
    assert_eq!(add_depth(&p.dag, before), 7);
    let b = balance(&p, false);
    let after = first_pre(&b);
    assert_eq!(add_depth(&b.dag, after), 3);
    assert_eq!(count_adds(&b.dag, after), 7);
    let leaves = |d: &ExprDag, id| {
        let mut v = Vec::new();
        collect_leaves(d, id, &mut v);
        let mut t: Vec<String> = v.iter().map(|&l| format!("{:?}", d.node(l))).collect();
        t.sort();
        t
    };
    let show = |p: &SsaProgram, id: NodeId| {
        let mut v = Vec::new();
        collect_leaves(&p.dag, id, &mut v);
        let mut t: Vec<String> = v
            .iter()
            .map(|&l| match p.dag.node(l) {
                Node::Mul(w, x) => format!("{:?}*{:?}", p.dag.node(*w), p.dag.node(*x)),
                other => format!("{other:?}"),
            })
            .collect();
        t.sort();
        t
    };
    assert_eq!(leaves(&p.dag, before).len(), 8);
    assert_eq!(show(&p, before), show(&b, after));
}

#[test]
fn one_term_chain_is_unchanged() {
    let net = sum_net(1, 0.0);
    let prop = SafetyProperty::new(
        HyperRect::new(vec![(0.0, 1.0)]).unwrap(),
        parse_assertion("y0 <= 1").unwrap(),
    );
    let p = lower(
        &net,
        &prop,
        q(8, 4),
        &ActivationTables::default(),
        None,
        None,
        &LowerOptions::default(),
    )
    .unwrap();
    assert_eq!(render(&balance(&p, false), true), render(&p, true));
}

#[test]
fn float_chains_are_not_reassociated_by_default() {
    let net = sum_net(8, 0.5);
    let prop = SafetyProperty::new(
        HyperRect::new(vec![(0.0, 1.0); 8]).unwrap(),
        parse_assertion("y0 <= 100").unwrap(),
    );
    let p = lower(
        &net,
        &prop,
        Domain::Float32,
        &ActivationTables::default(),
        None,
        None,
        &LowerOptions::default(),
    )
    .unwrap();
    assert_eq!(render(&balance(&p, false), true), render(&p, true));
    let forced = balance(&p, true);
    assert_eq!(add_depth(&forced.dag, first_pre(&forced)), 4);
}

/// Program with inputs `x`, `y` and one assignment `z == rhs(x, y)`.
fn hand_program(
    domain: Domain,
    build: impl FnOnce(&mut ExprDag, NodeId, NodeId) -> NodeId,
) -> SsaProgram {
    let mut dag = ExprDag::new();
    let vars = ["x", "y", "z"]
        .iter()
        .enumerate()
        .map(|(i, n)| VarInfo {
            name: n.to_string(),
            role: if i < 2 {
                VarRole::Input(i)
            } else {
                VarRole::Post {
                    layer: 0,
                    neuron: 0,
                }
            },
        })
        .collect::<Vec<_>>();
    let ids: Vec<_> = (0..3).map(qnnv_core::ir::VarId).collect();
    let x = dag.var(ids[0]);
    let y = dag.var(ids[1]);
    let z = build(&mut dag, x, y);
    let zv = dag.var(ids[2]);
    let zero = dag.konst(match domain {
        Domain::Real => Value::Real(BigRational::from_integer(0.into())),
        Domain::Float32 => Value::f32(0.0),
        Domain::Fixed { .. } => Value::Fixed(0),
    });
    let assert = dag.cmp(CmpOp::Le, zero, zv);
    SsaProgram {
        domain,
        dag,
        vars,
        assignments: vec![
            qnnv_core::ir::Assignment {
                var: ids[0],
                rhs: Rhs::Nondet(0),
            },
            qnnv_core::ir::Assignment {
                var: ids[1],
                rhs: Rhs::Nondet(1),
            },
            qnnv_core::ir::Assignment {
                var: ids[2],
                rhs: Rhs::Expr(z),
            },
        ],
        assumes: vec![],
        facts: vec![],
        asserts: vec![assert],
        inputs: ids[..2].to_vec(),
        outputs: vec![ids[2]],
    }
}

fn z_line(p: &SsaProgram) -> String {
    render(p, false).lines().nth(2).unwrap().to_string()
}

#[test]
fn simplifier_rules() {
    let d = q(8, 0);
    let t = |f: fn(&mut ExprDag, NodeId, NodeId) -> NodeId| z_line(&simplify(&hand_program(d, f)));
    assert_eq!(
        t(|d, x, y| {
            let g = d.bool(true);
            d.ite(g, x, y)
        }),
        "z == x"
    );
    assert_eq!(
        t(|d, x, y| {
            let g = d.bool(false);
            d.ite(g, x, y)
        }),
        "z == y"
    );
    assert_eq!(
        t(|d, x, y| {
            let g = d.cmp(CmpOp::Lt, x, y);
            d.ite(g, x, x)
        }),
        "z == x"
    );
    assert_eq!(
        t(|d, x, _| {
            let a = d.konst(Value::Fixed(2));
            let b = d.konst(Value::Fixed(3));
            let m = d.mul(a, b);
            d.add(m, x)
        }),
        "z == 6 + x"
    );
    // boolean rules, observed through a guard
    let g = |f: fn(&mut ExprDag, NodeId, NodeId, NodeId) -> NodeId| {
        z_line(&simplify(&hand_program(d, |dag, x, y| {
            let c = dag.cmp(CmpOp::Lt, x, y);
            let guard = f(dag, c, x, y);
            dag.ite(guard, x, y)
        })))
    };
    assert_eq!(
        g(|d, c, _, _| {
            let t = d.bool(true);
            d.and(vec![c, t])
        }),
        "z == (x < y ? x : y)"
    );
    assert_eq!(
        g(|d, c, _, _| {
            let f = d.bool(false);
            d.and(vec![c, f])
        }),
        "z == y"
    );
    assert_eq!(
        g(|d, c, _, _| {
            let f = d.bool(false);
            d.or(vec![c, f])
        }),
        "z == (x < y ? x : y)"
    );
    assert_eq!(
        g(|d, c, _, _| {
            let t = d.bool(true);
            d.or(vec![c, t])
        }),
        "z == x"
    );
    assert_eq!(
        g(|d, c, _, _| {
            let f = d.bool(false);
            d.xor(c, f)
        }),
        "z == (x < y ? x : y)"
    );
    assert_eq!(
        g(|d, c, _, _| {
            let t = d.bool(true);
            d.xor(c, t)
        }),
        "z == (!(x < y) ? x : y)"
    );
}

#[test]
fn ite_with_guard_conjunction_drops_the_guard() {
    let p = hand_program(q(8, 0), |d, x, y| {
        let f = d.cmp(CmpOp::Lt, x, y);
        let a = d.cmp(CmpOp::Eq, x, y);
        let b = d.cmp(CmpOp::Le, y, x);
        let fa = d.and(vec![f, a]);
        let g = d.ite(f, fa, b);
        d.ite(g, x, y)
    });
    assert_eq!(
        z_line(&simplify(&p)),
        "z == ((x < y ? x == y : y <= x) ? x : y)"
    );
}

#[test]
fn float_identities_are_not_applied() {
    let float = z_line(&simplify(&hand_program(Domain::Float32, |dag, x, _| {
        let zero = dag.konst(Value::f32(0.0));
        dag.add(x, zero)
    })));
    assert_eq!(float, "z == x + 0");
    let fixed = z_line(&simplify(&hand_program(q(8, 0), |dag, x, _| {
        let zero = dag.konst(Value::Fixed(0));
        dag.add(x, zero)
    })));
    assert_eq!(fixed, "z == x");
}

#[test]
fn identity_net_with_true_assert() {
    let net = Network::new(
        "id",
        2,
        vec![Layer::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.0; 2],
            ActivationKind::Identity,
        )],
    )
    .unwrap();
    let prop = SafetyProperty::new(
        HyperRect::new(vec![(0.0, 1.0); 2]).unwrap(),
        parse_assertion("true").unwrap(),
    );
    let p = lower(
        &net,
        &prop,
        q(4, 4),
        &ActivationTables::default(),
        None,
        None,
        &LowerOptions::default(),
    )
    .unwrap();
    assert_eq!(p.assumes.len(), 2);
    assert_eq!(p.asserts.len(), 1);
    assert!(p.asserts_trivially_true());
}

// Random programs for the semantic invariants.

fn random_case(seed: u64) -> (Network, SafetyProperty, Domain) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.gen_range(1..=3);
    let mut sizes = vec![rng.gen_range(1..=4)];
    for _ in 0..depth {
        sizes.push(rng.gen_range(1..=4));
    }
    let act = match seed % 3 {
        0 => ActivationKind::Sigmoid,
        1 => "pwl(-1:-0.5;0:0;1:2)".parse().unwrap(),
        _ => ActivationKind::Relu,
    };
    let net = random_dyadic(seed, &sizes, act);
    let bounds = (0..sizes[0])
        .map(|_| {
            let lo = rng.gen_range(-8i32..=4) as f64 / 8.0;
            (lo, lo + rng.gen_range(1i32..=8) as f64 / 8.0)
        })
        .collect();
    let c = rng.gen_range(-16i32..=16) as f64 / 4.0;
    let assert = format!("y0 <= {c} || y{} > {}", sizes[depth] - 1, -c);
    let prop = SafetyProperty::new(
        HyperRect::new(bounds).unwrap(),
        parse_assertion(&assert).unwrap(),
    );
    let rounding = if seed.is_multiple_of(2) {
        RoundingMode::TruncateTowardNegInf
    } else {
        RoundingMode::NearestTiesTowardZero
    };
    let domain = Domain::fixed(FxpFormat::new(6, rng.gen_range(3..=6)).unwrap(), rounding);
    (net, prop, domain)
}

fn tables(net: &Network) -> ActivationTables {
    ActivationTables::for_network(net, &TableConfig::default()).unwrap()
}

fn inputs(domain: Domain, prop: &SafetyProperty, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<Value>) {
    let Domain::Fixed { format, rounding } = domain else {
        unreachable!()
    };
    let x: Vec<f64> = prop
        .input_region
        .bounds()
        .iter()
        .map(|&(lo, hi)| rng.gen_range(lo..=hi))
        .collect();
    let v = x
        .iter()
        .map(|&xi| Value::Fixed(format.quantize(xi, rounding).0))
        .collect();
    (x, v)
}

/// Values of the named variables that exist in both programs.
fn shared_values(
    a: &SsaProgram,
    b: &SsaProgram,
    inputs: &[Value],
) -> (HashMap<String, Value>, HashMap<String, Value>, bool, bool) {
    let va = run(a, inputs).unwrap();
    let vb = run(b, inputs).unwrap();
    let collect = |p: &SsaProgram, v: &qnnv_core::ir::Valuation, other: &SsaProgram| {
        p.assignments
            .iter()
            .filter(|x| other.assignments.iter().any(|y| y.var == x.var))
            .map(|x| (p.name(x.var).to_string(), v.get(x.var).unwrap().clone()))
            .collect::<HashMap<_, _>>()
    };
    (
        collect(a, &va, b),
        collect(b, &vb, a),
        va.property_holds(),
        vb.property_holds(),
    )
}

#[test]
fn lowering_is_bit_exact_with_the_executor() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut checked = 0;
    for seed in 0..20 {
        let (net, prop, domain) = random_case(seed);
        let t = tables(&net);
        let p = lower(
            &net,
            &prop,
            domain,
            &t,
            None,
            None,
            &LowerOptions::default(),
        )
        .unwrap();
        let Domain::Fixed { format, rounding } = domain else {
            unreachable!()
        };
        let c = compile_fixed(&net, FixedArith { format, rounding }, &t).unwrap();
        for _ in 0..500 {
            let (_, v) = inputs(domain, &prop, &mut rng);
            let raw: Vec<i64> = v.iter().map(|x| x.as_fixed().unwrap()).collect();
            let trace = c.trace(&raw).unwrap();
            let val = run(&p, &v).unwrap();
            for (i, &o) in p.outputs.iter().enumerate() {
                assert_eq!(
                    val.get(o),
                    Some(&Value::Fixed(trace.outputs()[i])),
                    "seed {seed}"
                );
            }
            assert_eq!(
                val.property_holds(),
                c.holds(&prop.output_condition, trace.outputs()),
                "seed {seed}"
            );
            checked += 1;
        }
    }
    assert_eq!(checked, 10_000);
}

#[test]
fn optimizations_preserve_replay() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..20 {
        let (net, prop, domain) = random_case(seed);
        let t = tables(&net);
        let bx = propagate(&net, &prop.input_region, domain, &t).unwrap();
        let guards = bx.guards(&net);
        let p = lower(
            &net,
            &prop,
            domain,
            &t,
            Some(&bx),
            Some(&guards),
            &LowerOptions::default(),
        )
        .unwrap();
        let variants = [
            simplify(&p),
            slice(&p),
            balance(&p, false),
            balance(&slice(&simplify(&p)), false),
        ];
        for q in &variants {
            q.validate().unwrap();
            assert!(q.assignments.len() <= p.assignments.len());
        }
        for _ in 0..200 {
            let (_, v) = inputs(domain, &prop, &mut rng);
            assert!(run(&p, &v).unwrap().assumes_hold());
            for q in &variants {
                let (a, b, ha, hb) = shared_values(&p, q, &v);
                assert_eq!(a, b, "seed {seed}");
                assert_eq!(ha, hb, "seed {seed}");
            }
        }
    }
}

#[test]
fn pruned_relus_never_take_the_deleted_branch() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut pruned = 0;
    for seed in 0..30 {
        let (net, prop, domain) = random_case(seed * 3 + 2);
        let t = tables(&net);
        let bx = propagate(&net, &prop.input_region, domain, &t).unwrap();
        if bx.any_wrap_risk() {
            continue;
        }
        let guards = bx.guards(&net);
        let Domain::Fixed { format, rounding } = domain else {
            unreachable!()
        };
        let c = compile_fixed(&net, FixedArith { format, rounding }, &t).unwrap();
        pruned += guards
            .iter()
            .flatten()
            .filter(|g| {
                matches!(
                    g,
                    Some(GuardStatus::AlwaysActive | GuardStatus::AlwaysInactive)
                )
            })
            .count();
        for _ in 0..10_000 / 30 {
            let (_, v) = inputs(domain, &prop, &mut rng);
            let raw: Vec<i64> = v.iter().map(|x| x.as_fixed().unwrap()).collect();
            let trace = c.trace(&raw).unwrap();
            for (l, layer) in guards.iter().enumerate() {
                for (j, g) in layer.iter().enumerate() {
                    let u = trace.pre[l][j];
                    match g {
                        Some(GuardStatus::AlwaysActive) => assert!(u >= 0, "seed {seed}"),
                        Some(GuardStatus::AlwaysInactive) => assert!(u < 0, "seed {seed}"),
                        _ => {}
                    }
                }
            }
        }
    }
    assert!(pruned > 0);
}

#[test]
fn balanced_fixed_programs_replay_identically() {
    let net = random_dyadic(3, &[8, 6, 2], ActivationKind::Relu);
    let prop = SafetyProperty::new(
        HyperRect::new(vec![(-1.0, 1.0); 8]).unwrap(),
        parse_assertion("y0 <= y1").unwrap(),
    );
    // a narrow format so that sums wrap on the way
    let domain = q(3, 3);
    let p = lower(
        &net,
        &prop,
        domain,
        &ActivationTables::default(),
        None,
        None,
        &LowerOptions::default(),
    )
    .unwrap();
    let b = balance(&p, false);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let (_, v) = inputs(domain, &prop, &mut rng);
        let (x, y, hx, hy) = shared_values(&p, &b, &v);
        assert_eq!(x, y);
        assert_eq!(hx, hy);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn simplify_is_idempotent(seed in 0u64..1000) {
        let (net, prop, domain) = random_case(seed);
        let t = tables(&net);
        let bx = propagate(&net, &prop.input_region, domain, &t).unwrap();
        let guards = bx.guards(&net);
        let p = lower(&net, &prop, domain, &t, Some(&bx), Some(&guards), &LowerOptions::default()).unwrap();
        let once = simplify(&p);
        prop_assert_eq!(render(&simplify(&once), true), render(&once, true));
    }

    #[test]
    fn slice_never_grows(seed in 0u64..1000) {
        let (net, prop, domain) = random_case(seed);
        let p = lower(&net, &prop, domain, &tables(&net), None, None, &LowerOptions::default()).unwrap();
        let s = slice(&p);
        prop_assert!(s.assignments.len() <= p.assignments.len());
        prop_assert!(s.stats().nodes <= p.stats().nodes);
    }
}
