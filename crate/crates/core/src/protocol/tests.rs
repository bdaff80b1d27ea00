use super::*;
use std::f64::consts::FRAC_1_SQRT_2;

fn cfg() -> ProtocolConfig {
    ideal_config()
}

fn c(x: f64) -> C64 {
    C64::from(x)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn beam_splitter_vacuum_and_single_photon() {
    let modes = CompositeSpace::new(vec![
        FactorLabel::cavity("a", 2).unwrap(),
        FactorLabel::cavity("b", 2).unwrap(),
    ])
    .unwrap();
    let vac = StateVector::basis(modes.clone(), &[0, 0]).unwrap();
    assert!((state_fidelity_of(&beam_splitter_mix(&vac).unwrap(), &vac) - 1.0).abs() < 1e-14);

    let out = beam_splitter_mix(&StateVector::basis(modes.clone(), &[1, 0]).unwrap()).unwrap();
    let a10 = out.amplitude(&[1, 0]).unwrap();
    let a01 = out.amplitude(&[0, 1]).unwrap();
    assert!((a10 - c(FRAC_1_SQRT_2)).norm() < 1e-12);
    assert!((a01 - c(FRAC_1_SQRT_2)).norm() < 1e-12);
}

fn state_fidelity_of(x: &StateVector, y: &StateVector) -> f64 {
    x.inner(y).unwrap().norm_sqr()
}

#[test]
fn beam_splitter_is_unitary_and_mixes_two_photons() {
    let modes = CompositeSpace::new(vec![
        FactorLabel::cavity("a", 2).unwrap(),
        FactorLabel::cavity("b", 2).unwrap(),
    ])
    .unwrap();
    let u = beam_splitter(&modes, PI).unwrap();
    assert!(crate::qstate::unitarity_deviation(u.matrix()) < 1e-12);
    // Two photons, one per port, leave together (no |11⟩ component).
    let out = StateVector::basis(modes, &[1, 1])
        .unwrap()
        .apply(&u)
        .unwrap();
    assert!(out.amplitude(&[1, 1]).unwrap().norm() < 1e-12);
    assert!((out.amplitude(&[2, 0]).unwrap().norm_sqr() - 0.5).abs() < 1e-12);
}

#[test]
fn ideal_ebit_is_maximally_entangled() {
    let e = prepare_ebit(&EbitMode::Ideal, 2, &mut rng(0))
        .unwrap()
        .unwrap();
    assert!(e.heralded && e.event.is_none());
    let eg = e.state.amplitude(&[EXCITED, GROUND]).unwrap();
    let ge = e.state.amplitude(&[GROUND, EXCITED]).unwrap();
    assert!((eg - c(FRAC_1_SQRT_2)).norm() < 1e-12 && (ge - c(FRAC_1_SQRT_2)).norm() < 1e-12);
}

#[test]
fn photon_gun_events() {
    let single = PhotonGunModel::new(0.0, 1.0, 0.0).unwrap();
    let e = prepare_ebit(&EbitMode::PhotonGun(single), 2, &mut rng(3))
        .unwrap()
        .unwrap();
    let ideal = ebit_for_event(None, 2).unwrap();
    assert_eq!(e.state, ideal.state);

    let empty = ebit_for_event(Some(PhotonEvent::Empty), 2).unwrap();
    assert!(!empty.heralded);
    assert_eq!(empty.state.amplitude(&[GROUND, GROUND]).unwrap(), ONE);
    let double = ebit_for_event(Some(PhotonEvent::Double), 3).unwrap();
    assert!(!double.heralded);
    assert_eq!(double.state.amplitude(&[EXCITED, EXCITED]).unwrap(), ONE);

    assert!(PhotonGunModel::new(0.6, 0.6, 0.0).is_err());
    assert!(PhotonGunModel::new(-0.1, 0.6, 0.0).is_err());
    let none = PhotonGunModel::new(0.0, 0.0, 0.0).unwrap();
    assert!(prepare_ebit(&EbitMode::PhotonGun(none), 2, &mut rng(1))
        .unwrap()
        .is_none());
}

#[test]
fn register_loading() {
    let inputs = Inputs::product(ONE, ZERO, ONE, ZERO).unwrap();
    let (reg, ops) = prepare_register(&inputs, Level::Ideal, &cfg(), NonlocalGate::Cnot).unwrap();
    assert!((reg.amplitude(&[1, GROUND, 1, GROUND]).unwrap().norm() - 1.0).abs() < 1e-12);
    assert_eq!(ops.len(), 4);

    let (a, b) = (C64::new(0.6, 0.0), C64::new(0.0, 0.8));
    let (cc, d) = (
        C64::from_polar(FRAC_1_SQRT_2, 0.3),
        C64::from_polar(FRAC_1_SQRT_2, -1.1),
    );
    let inputs = Inputs::product(a, b, cc, d).unwrap();
    let (reg, _) = prepare_register(&inputs, Level::Ideal, &cfg(), NonlocalGate::Cnot).unwrap();
    for (na, nb, amp) in [(1, 1, a * cc), (1, 0, a * d), (0, 1, b * cc), (0, 0, b * d)] {
        assert!((reg.amplitude(&[na, GROUND, nb, GROUND]).unwrap() - amp).norm() < 1e-12);
    }
}

#[test]
fn physical_register_loading() {
    let h = c(FRAC_1_SQRT_2);
    let inputs = Inputs::product(h, h, h, h).unwrap();
    let cfg = cfg();
    let (phys, _) = prepare_register(&inputs, Level::Physical, &cfg, NonlocalGate::Cnot).unwrap();
    let (ideal, _) = prepare_register(&inputs, Level::Ideal, &cfg, NonlocalGate::Cnot).unwrap();
    assert!(state_fidelity_of(&phys, &ideal) >= 0.999);
}

#[test]
fn rejects_unnormalized_inputs() {
    assert!(matches!(
        Inputs::product(ONE, ONE, ONE, ZERO),
        Err(Error::NotNormalized { .. })
    ));
}

#[test]
fn cnot_basis_input_flips_target_in_every_branch() {
    let inputs = Inputs::product(ONE, ZERO, ZERO, ONE).unwrap();
    let t = run_nonlocal_cnot(&inputs, Level::Ideal, BranchMode::Enumerate, &cfg()).unwrap();
    assert_eq!(t.branches.len(), 4);
    let target = pad_factors(
        &target_state(NonlocalGate::Cnot, &inputs).unwrap(),
        &[CAVITY_A, CAVITY_B],
        4,
    )
    .unwrap();
    assert!((target.amplitude(&[1, 1]).unwrap().norm() - 1.0).abs() < 1e-14);
    for b in &t.branches {
        assert!((b.probability - 0.25).abs() < 1e-12);
        assert!(
            b.fidelity_vs_ideal > 1.0 - 1e-12,
            "{} {}: {}",
            b.alpha,
            b.beta,
            b.fidelity_vs_ideal
        );
    }
}

#[test]
fn ideal_protocols_are_exact_for_random_inputs() {
    let mut r = rng(11);
    let cfg = cfg();
    for _ in 0..10 {
        let inputs = random_product_inputs(&mut r);
        for t in [
            run_nonlocal_cnot(&inputs, Level::Ideal, BranchMode::Enumerate, &cfg).unwrap(),
            run_nonlocal_cqpg(&inputs, Level::Ideal, BranchMode::Enumerate, &cfg).unwrap(),
        ] {
            assert!((t.total_probability() - 1.0).abs() < 1e-10);
            assert_eq!(t.branches.len(), 4);
            for b in &t.branches {
                assert!(b.fidelity_vs_ideal > 1.0 - 1e-10);
                assert_eq!(b.channel.bits_sent(), 2);
            }
        }
    }
}

#[test]
fn entangled_input_with_ancilla() {
    let mut r = rng(5);
    let inputs = random_entangled_inputs(&mut r).unwrap();
    let t = run_nonlocal_cnot(&inputs, Level::Ideal, BranchMode::Enumerate, &cfg()).unwrap();
    assert!(t.branches.iter().all(|b| b.fidelity_vs_ideal > 1.0 - 1e-10));
    assert!(t.inputs.is_none());
}

#[test]
fn corrections_follow_measurement_outcomes() {
    let mut r = rng(2);
    let inputs = random_product_inputs(&mut r);
    let t = run_nonlocal_cnot(&inputs, Level::Ideal, BranchMode::Enumerate, &cfg()).unwrap();
    for b in &t.branches {
        let has = |name: &str| b.operations.iter().any(|o| o.name == name);
        assert_eq!(has("NOT_atom"), b.alpha == "e");
        assert_eq!(has("reset_NOT_atom"), b.alpha == "e");
        assert_eq!(has("two_pi_rabi"), b.beta == "g");
        assert_eq!(b.channel.messages[0].sender, NodeName::Alice);
        assert_eq!(b.channel.messages[1].sender, NodeName::Bob);
        // Alice's atom is back in |g⟩ at the end.
        let (_, pg) = b
            .state
            .condition(ATOM_ALPHA, &basis_vec(2, GROUND))
            .unwrap();
        assert!((pg - 1.0).abs() < 1e-12);
    }
}

#[test]
fn every_operation_is_local() {
    let mut r = rng(8);
    let inputs = random_product_inputs(&mut r);
    let cfg = cfg();
    let (alice, bob) = (Node::alice(cfg.alice), Node::bob(cfg.bob));
    let t = run_nonlocal_cqpg(&inputs, Level::Ideal, BranchMode::Enumerate, &cfg).unwrap();
    for b in &t.branches {
        assert!(b
            .operations
            .iter()
            .any(|o| o.node == NodeName::Source && o.name == "share_ebit"));
        for op in b.operations.iter().filter(|o| o.node != NodeName::Source) {
            let node = if op.node == NodeName::Alice {
                &alice
            } else {
                &bob
            };
            let sup: Vec<&str> = op.support.iter().map(String::as_str).collect();
            assert!(node.check_support(&sup).is_ok(), "{op:?}");
        }
    }
}

#[test]
fn node_refuses_foreign_factors() {
    let cfg = cfg();
    let (reg, _) = prepare_register(
        &Inputs::product(ONE, ZERO, ONE, ZERO).unwrap(),
        Level::Ideal,
        &cfg,
        NonlocalGate::Cnot,
    )
    .unwrap();
    let alice = Node::alice(cfg.alice);
    let m = DMatrix::<C64>::identity(8, 8);
    assert!(matches!(
        alice.apply(&reg, &m, &[ATOM_ALPHA, CAVITY_B]),
        Err(Error::Locality(_))
    ));
}

#[test]
fn cqpg_fixed_point_and_sign() {
    let inputs = Inputs::product(ONE, ZERO, ONE, ZERO).unwrap();
    let t = run_nonlocal_cqpg(&inputs, Level::Ideal, BranchMode::Enumerate, &cfg()).unwrap();
    assert!(t.branches.iter().all(|b| b.fidelity_vs_ideal > 1.0 - 1e-12));

    let h = c(0.5);
    let inputs = Inputs::product(
        c(FRAC_1_SQRT_2),
        c(FRAC_1_SQRT_2),
        c(FRAC_1_SQRT_2),
        c(FRAC_1_SQRT_2),
    )
    .unwrap();
    let target = target_state(NonlocalGate::Cqpg, &inputs).unwrap();
    let flipped: Vec<_> = [[1, 1], [1, 0], [0, 1], [0, 0]]
        .iter()
        .filter(|lv| (target.amplitude(*lv).unwrap() + h).norm() < 1e-12)
        .collect();
    assert_eq!(flipped, vec![&[0, 0]]);
}

#[test]
fn sampling_is_reproducible() {
    let mut r = rng(4);
    let inputs = random_product_inputs(&mut r);
    let a = run_nonlocal_cnot(&inputs, Level::Ideal, BranchMode::Sample(9), &cfg()).unwrap();
    let b = run_nonlocal_cnot(&inputs, Level::Ideal, BranchMode::Sample(9), &cfg()).unwrap();
    assert_eq!(a.branches.len(), 1);
    assert_eq!(a, b);
    assert!((a.branches[0].probability - 0.25).abs() < 1e-12);
}

#[test]
fn bad_ebits_degrade_the_gate() {
    let inputs = Inputs::product(c(FRAC_1_SQRT_2), c(FRAC_1_SQRT_2), ONE, ZERO).unwrap();
    let cfg = cfg();
    let good = PhotonGunModel::new(0.0, 1.0, 0.0).unwrap();
    let s = ebit_noise_study(NonlocalGate::Cnot, &good, &inputs, &cfg, 50, 1).unwrap();
    assert!((s.mean_fidelity - 1.0).abs() < 1e-10 && s.single == 50);

    let half = PhotonGunModel::new(0.5, 0.5, 0.0).unwrap();
    let s = ebit_noise_study(NonlocalGate::Cnot, &half, &inputs, &cfg, 200, 1).unwrap();
    assert!(s.empty > 0 && s.mean_fidelity < 1.0 - 1e-3);
    assert!((s.mean_fidelity_heralded - 1.0).abs() < 1e-10);
}

#[test]
fn reduced_fidelity_ignores_atoms_but_not_cavities() {
    let space = CompositeSpace::new(vec![
        FactorLabel::cavity("A", 1).unwrap(),
        FactorLabel::atom("x", 2).unwrap(),
    ])
    .unwrap();
    let psi =
        StateVector::normalized(space, DVector::from_vec(vec![ONE, ONE, ZERO, ZERO])).unwrap();
    let t = StateVector::basis(
        CompositeSpace::single(FactorLabel::cavity("A", 1).unwrap()),
        &[0],
    )
    .unwrap();
    assert!((reduced_fidelity(&psi, &t, &["x"]).unwrap() - 1.0).abs() < 1e-12);
    let t1 = StateVector::basis(t.space().clone(), &[1]).unwrap();
    assert!(reduced_fidelity(&psi, &t1, &["x"]).unwrap() < 1e-12);
}
