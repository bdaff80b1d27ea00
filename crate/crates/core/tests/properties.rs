use std::f64::consts::{FRAC_1_SQRT_2, PI};

use cqed_nonlocal::gates::{ideal_gate, native_gate, GateKind};
use cqed_nonlocal::protocol::*;
use cqed_nonlocal::qstate::*;
use cqed_nonlocal::C64;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn complex_vec(n: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n)
        .prop_filter("non-zero", |v| {
            v.iter().map(|(a, b)| a * a + b * b).sum::<f64>() > 1e-3
        })
        .prop_map(|v| v.into_iter().map(|(a, b)| C64::new(a, b)).collect())
}

fn state_on(space: &CompositeSpace, amps: Vec<C64>) -> StateVector {
    StateVector::normalized(space.clone(), DVector::from_vec(amps)).unwrap()
}

fn random_unitary(entries: Vec<C64>, n: usize) -> DMatrix<C64> {
    DMatrix::from_vec(n, n, entries).qr().q()
}

fn qubit() -> impl Strategy<Value = (C64, C64)> {
    (0.0..PI, 0.0..2.0 * PI, 0.0..2.0 * PI).prop_map(|(t, p1, p2)| {
        (
            C64::from_polar((t / 2.0).cos(), p1),
            C64::from_polar((t / 2.0).sin(), p2),
        )
    })
}

fn two_spaces() -> (CompositeSpace, CompositeSpace) {
    let a = CompositeSpace::new(vec![
        FactorLabel::atom("x", 2).unwrap(),
        FactorLabel::cavity("c", 2).unwrap(),
    ])
    .unwrap();
    let b = CompositeSpace::single(FactorLabel::atom("y", 3).unwrap());
    (a, b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tensor_preserves_norm(x in complex_vec(6), y in complex_vec(3)) {
        let (sa, sb) = two_spaces();
        let t = tensor(&[state_on(&sa, x), state_on(&sb, y)]).unwrap();
        prop_assert!((t.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn embed_is_a_homomorphism(u in complex_vec(9), v in complex_vec(9)) {
        let (sa, sb) = two_spaces();
        let full = sa.product(&sb).unwrap();
        let (u, v) = (random_unitary(u, 3), random_unitary(v, 3));
        let ou = Operator::unitary(sb.clone(), u.clone()).unwrap();
        let ov = Operator::unitary(sb.clone(), v.clone()).unwrap();
        let ouv = Operator::unitary(sb.clone(), &u * &v).unwrap();
        let lhs = embed(&ouv, &["y"], &full).unwrap();
        let rhs = embed(&ou, &["y"], &full).unwrap().compose(&embed(&ov, &["y"], &full).unwrap()).unwrap();
        prop_assert!((lhs.matrix() - rhs.matrix()).norm() < 1e-12);
    }

    #[test]
    fn born_rule_is_complete_and_repeatable(x in complex_vec(6), y in complex_vec(3), seed in any::<u64>()) {
        let (sa, sb) = two_spaces();
        let s = tensor(&[state_on(&sa, x), state_on(&sb, y)]).unwrap();
        let basis = MeasurementBasis::computational(&["g", "e", "i"]);
        let branches = enumerate_branches(&s, "y", &basis).unwrap();
        let total: f64 = branches.iter().map(|b| b.probability).sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
        let first = measure_factor(&s, "y", &basis, Some(seed)).unwrap();
        let again = measure_factor(first.state.as_ref().unwrap(), "y", &basis, Some(seed ^ 1)).unwrap();
        prop_assert_eq!(first.outcome, again.outcome);
        prop_assert!((again.probability - 1.0).abs() < 1e-12);
    }
}

fn check_trace(t: &ProtocolTrace) -> Result<(), TestCaseError> {
    let cfg = ideal_config();
    let (alice, bob) = (Node::alice(cfg.alice), Node::bob(cfg.bob));
    prop_assert_eq!(t.branches.len(), 4);
    prop_assert!((t.total_probability() - 1.0).abs() < 1e-10);
    for b in &t.branches {
        prop_assert_eq!(b.channel.bits_sent(), 2);
        prop_assert!(
            b.fidelity_vs_ideal >= 1.0 - 1e-10,
            "{} {}: {}",
            b.alpha,
            b.beta,
            b.fidelity_vs_ideal
        );
        for op in b.operations.iter().filter(|o| o.node != NodeName::Source) {
            let node = if op.node == NodeName::Alice {
                &alice
            } else {
                &bob
            };
            let sup: Vec<&str> = op.support.iter().map(String::as_str).collect();
            prop_assert!(
                node.check_support(&sup).is_ok(),
                "non-local operation {:?}",
                op
            );
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ideal_protocol_invariants((a, b) in qubit(), (c, d) in qubit()) {
        let cfg = ideal_config();
        let inputs = Inputs::product(a, b, c, d).unwrap();
        check_trace(&run_nonlocal_cnot(&inputs, Level::Ideal, BranchMode::Enumerate, &cfg).unwrap())?;
        check_trace(&run_nonlocal_cqpg(&inputs, Level::Ideal, BranchMode::Enumerate, &cfg).unwrap())?;
    }

    #[test]
    fn entangled_inputs_keep_the_ancilla(amps in complex_vec(8)) {
        let space = CompositeSpace::new(vec![
            FactorLabel::cavity("A", 1).unwrap(),
            FactorLabel::cavity("anc", 1).unwrap(),
            FactorLabel::cavity("B", 1).unwrap(),
        ]).unwrap();
        let inputs = Inputs::joint(state_on(&space, amps)).unwrap();
        check_trace(&run_nonlocal_cnot(&inputs, Level::Ideal, BranchMode::Enumerate, &ideal_config()).unwrap())?;
    }

    #[test]
    fn cqpg_flips_exactly_one_amplitude((a, b) in qubit(), (c, d) in qubit()) {
        prop_assume!(a.norm() > 1e-3 && b.norm() > 1e-3 && c.norm() > 1e-3 && d.norm() > 1e-3);
        let inputs = Inputs::product(a, b, c, d).unwrap();
        let t = target_state(NonlocalGate::Cqpg, &inputs).unwrap();
        let expansion = [([1, 1], a * c), ([1, 0], a * d), ([0, 1], b * c), ([0, 0], b * d)];
        let flipped = expansion.iter().filter(|(lv, x)| (t.amplitude(lv).unwrap() + x).norm() < 1e-12).count();
        let kept = expansion.iter().filter(|(lv, x)| (t.amplitude(lv).unwrap() - x).norm() < 1e-12).count();
        prop_assert_eq!((flipped, kept), (1, 3));
    }

    #[test]
    fn sampled_branch_is_one_of_the_enumerated((a, b) in qubit(), (c, d) in qubit(), seed in any::<u64>()) {
        let cfg = ideal_config();
        let inputs = Inputs::product(a, b, c, d).unwrap();
        let s = run_nonlocal_cnot(&inputs, Level::Ideal, BranchMode::Sample(seed), &cfg).unwrap();
        let e = run_nonlocal_cnot(&inputs, Level::Ideal, BranchMode::Enumerate, &cfg).unwrap();
        prop_assert_eq!(s.branches.len(), 1);
        let hit = &s.branches[0];
        let twin = e.branches.iter().find(|b| b.alpha == hit.alpha && b.beta == hit.beta).unwrap();
        prop_assert!((twin.probability - hit.probability).abs() < 1e-12);
        prop_assert!(hit.fidelity_vs_ideal >= 1.0 - 1e-10);
    }
}

fn node_factors() -> Vec<FactorLabel> {
    vec![
        FactorLabel::atom("atom", 2).unwrap(),
        FactorLabel::cavity("cavity", 1).unwrap(),
    ]
}

#[test]
fn swap_cnot_swap_reverses_control() {
    let f = node_factors();
    let space = CompositeSpace::new(f.clone()).unwrap();
    let seq = |g: fn(GateKind, &[FactorLabel]) -> cqed_nonlocal::Result<Operator>| {
        let swap = g(GateKind::SwapAtomCavity, &f).unwrap();
        let cnot = g(GateKind::CnotCavityToAtom, &f).unwrap();
        (
            swap.matrix() * cnot.matrix() * swap.matrix(),
            g(GateKind::CnotAtomToCavity, &f).unwrap().into_matrix(),
        )
    };
    let (m, target) = seq(ideal_gate);
    assert!((m - target).norm() < 1e-12);
    // With pulse phases the composition also flips the sign of |e1⟩, a local
    // phase that the native table leaves out.
    let (mut m, target) = seq(native_gate);
    let e1 = space.index_of(&[1, 1]).unwrap();
    m.row_mut(e1).neg_mut();
    assert!((m - target).norm() < 1e-12);
}

#[test]
fn phase_gate_between_hadamards_is_cnot_up_to_local_phases() {
    // Cavity controls, atom is the target.
    let f = node_factors();
    let h = ideal_gate(GateKind::HadamardAtom, &f[..1]).unwrap();
    let h = embed(&h, &["atom"], &CompositeSpace::new(f.clone()).unwrap()).unwrap();
    let q = ideal_gate(GateKind::CqpgLocal { phi: PI }, &f).unwrap();
    let m = h.adjoint().matrix() * q.matrix() * h.matrix();
    let cnot = ideal_gate(GateKind::CnotCavityToAtom, &f).unwrap();
    // The Hadamard-like rotation turns σz into σy; an S gate on the atom maps that back to σx.
    let best = [PI / 2.0, -PI / 2.0]
        .into_iter()
        .map(|phi| {
            let mut s = DMatrix::<C64>::identity(4, 4);
            for n in 0..2 {
                let k = CompositeSpace::new(f.clone())
                    .unwrap()
                    .index_of(&[1, n])
                    .unwrap();
                s[(k, k)] = C64::from_polar(1.0, phi);
            }
            (s.adjoint() * &m * &s - cnot.matrix()).norm()
        })
        .fold(f64::INFINITY, f64::min);
    assert!(best < 1e-12, "residual {best}");
}

#[test]
fn photon_gun_fidelity_does_not_increase_with_bad_events() {
    let cfg = ideal_config();
    let h = C64::from(FRAC_1_SQRT_2);
    let inputs = Inputs::product(h, h, C64::from(1.0), C64::from(0.0)).unwrap();
    let mut last = f64::INFINITY;
    for k in 0..=5 {
        let bad = 0.1 * k as f64;
        let model = PhotonGunModel::new(bad / 2.0, 1.0 - bad, bad / 2.0).unwrap();
        let s = ebit_noise_study(NonlocalGate::Cnot, &model, &inputs, &cfg, 10_000, 2024).unwrap();
        assert!(
            s.mean_fidelity <= last + 1e-12,
            "p_bad = {bad}: {} after {last}",
            s.mean_fidelity
        );
        last = s.mean_fidelity;
    }
    assert!(last < 0.99);
}
