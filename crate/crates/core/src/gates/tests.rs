use super::*;
use crate::qstate::unitarity_deviation;

fn node(cutoff: usize) -> Vec<FactorLabel> {
    vec![
        FactorLabel::atom("atom", 2).unwrap(),
        FactorLabel::cavity("cavity", cutoff).unwrap(),
    ]
}

fn amp(op: &Operator, to: &[usize], from: &[usize]) -> C64 {
    let s = op.space();
    op.matrix()[(s.index_of(to).unwrap(), s.index_of(from).unwrap())]
}

fn close(a: C64, b: C64, tol: f64) -> bool {
    (a - b).norm() < tol
}

const ALL: [GateKind; 7] = [
    GateKind::CnotCavityToAtom,
    GateKind::CnotAtomToCavity,
    GateKind::SwapAtomCavity,
    GateKind::CqpgLocal { phi: PI },
    GateKind::HadamardAtom,
    GateKind::NotAtom,
    GateKind::SigmaZ,
];

fn factors_for(kind: GateKind, cutoff: usize) -> Vec<FactorLabel> {
    if kind.arity() == 1 {
        vec![FactorLabel::atom("atom", 2).unwrap()]
    } else {
        node(cutoff)
    }
}

#[test]
fn truth_tables() {
    let f = node(1);
    let cnot = ideal_gate(GateKind::CnotCavityToAtom, &f).unwrap();
    assert_eq!(amp(&cnot, &[1, 1], &[0, 1]), ONE);
    assert_eq!(amp(&cnot, &[1, 0], &[1, 0]), ONE);
    let cq = ideal_gate(GateKind::CqpgLocal { phi: PI }, &f).unwrap();
    assert!(close(amp(&cq, &[1, 1], &[1, 1]), -ONE, 1e-15));
    assert_eq!(amp(&cq, &[0, 1], &[0, 1]), ONE);
    let back = ideal_gate(GateKind::CnotAtomToCavity, &f).unwrap();
    assert_eq!(amp(&back, &[0, 1], &[0, 0]), ONE);
    assert_eq!(amp(&back, &[1, 1], &[1, 1]), ONE);
}

#[test]
fn every_gate_is_unitary_in_both_conventions() {
    for cutoff in [1, 4] {
        for kind in ALL {
            let f = factors_for(kind, cutoff);
            for op in [
                ideal_gate(kind, &f).unwrap(),
                native_gate(kind, &f).unwrap(),
            ] {
                assert!(unitarity_deviation(op.matrix()) < 1e-12, "{}", kind.name());
            }
            // Same transitions, possibly different phases.
            let (a, b) = (
                ideal_gate(kind, &f).unwrap(),
                native_gate(kind, &f).unwrap(),
            );
            assert!(a
                .matrix()
                .iter()
                .zip(b.matrix().iter())
                .all(|(x, y)| (x.norm() - y.norm()).abs() < 1e-15));
        }
    }
}

#[test]
fn arity_mismatch_rejected() {
    assert!(ideal_gate(GateKind::HadamardAtom, &node(1)).is_err());
    assert!(ideal_gate(GateKind::SwapAtomCavity, &node(1)[..1]).is_err());
    let bad = [
        FactorLabel::cavity("c", 4).unwrap(),
        FactorLabel::cavity("d", 1).unwrap(),
    ];
    assert!(ideal_gate(GateKind::SwapAtomCavity, &bad).is_err());
}

#[test]
fn phase_gate_inverse() {
    let f = node(2);
    for phi in [0.3, PI, -2.0] {
        let a = ideal_gate(GateKind::CqpgLocal { phi }, &f).unwrap();
        let b = ideal_gate(GateKind::CqpgLocal { phi: -phi }, &f).unwrap();
        let p = a.compose(&b).unwrap();
        assert!((p.matrix() - DMatrix::<C64>::identity(6, 6)).norm() < 1e-12);
    }
}

#[test]
fn two_swaps_around_cnot_reverse_control() {
    for cutoff in [1, 3] {
        let f = node(cutoff);
        let swap = ideal_gate(GateKind::SwapAtomCavity, &f).unwrap();
        let cnot = ideal_gate(GateKind::CnotCavityToAtom, &f).unwrap();
        let seq = swap.matrix() * cnot.matrix() * swap.matrix();
        let target = ideal_gate(GateKind::CnotAtomToCavity, &f).unwrap();
        assert!((seq - target.matrix()).norm() < 1e-12);
    }
}

#[test]
fn hadamard_twice_is_not_up_to_phase() {
    let f = factors_for(GateKind::HadamardAtom, 0);
    let h = ideal_gate(GateKind::HadamardAtom, &f).unwrap();
    let hh = h.compose(&h).unwrap();
    let x = ideal_gate(GateKind::NotAtom, &f).unwrap();
    assert!((hh.matrix() - x.matrix() * (-I)).norm() < 1e-15);
}

#[test]
fn closed_form_fidelity() {
    assert_eq!(fidelity_closed_form(0.0), 1.0);
    // 0.985 · π/2 = 1.547, sin = 0.999722...
    let expected = 0.25 * (1.0 + (1.5472343818929438_f64).sin()).powi(2) + 3e-5;
    assert!((fidelity_closed_form(0.1) - expected).abs() < 1e-12);
    assert!((fidelity_closed_form(0.1) - 0.99975).abs() < 5e-5);
    // The quadratic correction wins over the quartic loss for small x, so the
    // curve rises by under 1e-6 before turning down near x ≈ 0.023.
    let xs: Vec<f64> = (0..100).map(|k| 0.1 * k as f64 / 99.0).collect();
    assert!(xs.iter().all(|&x| fidelity_closed_form(x) < 1.0 + 1e-6));
    let tail: Vec<f64> = xs.iter().copied().filter(|&x| x >= 0.03).collect();
    assert!(tail
        .windows(2)
        .all(|w| fidelity_closed_form(w[1]) <= fidelity_closed_form(w[0])));
    assert!(fidelity_closed_form(0.02) > 1.0);
}

#[test]
fn phase_correction_aligns_diagonal_phases() {
    let target = DMatrix::from_row_slice(2, 2, &[ZERO, -I, -I, ZERO]);
    let u = DMatrix::from_row_slice(2, 2, &[ZERO, ONE, C64::from_polar(1.0, 0.4), ZERO]);
    let d = phase_correction(&u, &target);
    let fixed = apply_correction(&d, &u);
    assert!((fixed - &target).norm() < 1e-14);
    // No overlap: leave the row alone.
    let d = phase_correction(&DMatrix::identity(2, 2), &target);
    assert_eq!(d, vec![ONE, ONE]);
}

#[test]
fn truncation_guard_flags_edge_population() {
    let space = node_space(ATOM, CAVITY, 2).unwrap();
    let mut m = DMatrix::<C64>::identity(6, 6);
    assert_eq!(truncation_guard(&space, &m).unwrap(), 0.0);
    // Route |g1⟩ partly to |g2⟩.
    let (g1, g2) = (
        space.index_of(&[0, 1]).unwrap(),
        space.index_of(&[0, 2]).unwrap(),
    );
    m[(g1, g1)] = C64::from(0.99f64.sqrt());
    m[(g2, g1)] = C64::from(0.1);
    assert!(matches!(
        truncation_guard(&space, &m),
        Err(Error::Truncation { .. })
    ));
}

fn dispersive(x: f64) -> JCParams {
    JCParams::with_ratio(2.0 / x, 1.0, x).unwrap()
}

fn superposed_input(cutoff: usize) -> StateVector {
    let h = C64::from(FRAC_1_SQRT_2);
    let space = node_space(ATOM, CAVITY, cutoff).unwrap();
    let mut v = nalgebra::DVector::from_element(space.dim(), ZERO);
    v[space.index_of(&[GROUND, 1]).unwrap()] = h;
    v[space.index_of(&[GROUND, 0]).unwrap()] = h;
    StateVector::new(space, v).unwrap()
}

#[test]
fn physical_cnot_tracks_closed_form() {
    let r = physical_cnot_cavity_to_atom(
        &superposed_input(3),
        &dispersive(0.1),
        &PulseConfig::default(),
    )
    .unwrap();
    assert!(r.fidelity_vs_ideal >= 0.995, "{}", r.fidelity_vs_ideal);
    assert!((r.fidelity_vs_ideal - fidelity_closed_form(0.1)).abs() < 0.01);
    assert_eq!(r.pulse_log.len(), 1);
    assert!((r.pulse_log[0].area() - PI).abs() < 1e-10);
}

#[test]
fn physical_cnot_leaves_ground_alone() {
    let s = StateVector::basis(node_space(ATOM, CAVITY, 3).unwrap(), &[GROUND, 0]).unwrap();
    let r = physical_cnot_cavity_to_atom(&s, &dispersive(0.1), &PulseConfig::default()).unwrap();
    assert!(r.fidelity_vs_ideal >= 0.999);
}

#[test]
fn physical_cnot_rwa_matches_full_drive() {
    let p = dispersive(0.1);
    let full = cnot_cavity_to_atom_gate(&p, &PulseConfig::default(), 3).unwrap();
    let rwa = cnot_cavity_to_atom_gate(
        &p,
        &PulseConfig {
            rwa: true,
            ..Default::default()
        },
        3,
    )
    .unwrap();
    let (a, b) = (
        full.basis_fidelities().unwrap(),
        rwa.basis_fidelities().unwrap(),
    );
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-3);
    }
}

#[test]
fn physical_cnot_rejects_resonant_node() {
    let p = JCParams::with_ratio(10.0, 1.0, 0.5).unwrap();
    assert!(matches!(
        cnot_cavity_to_atom_gate(&p, &PulseConfig::default(), 3),
        Err(Error::ContractViolation(_))
    ));
}

#[test]
fn physical_hadamard_matches_target() {
    let p = dispersive(0.01);
    let space = node_space(ATOM, CAVITY, 3).unwrap();
    let g0 = StateVector::basis(space.clone(), &[GROUND, 0]).unwrap();
    let r = physical_hadamard_atom(&g0, &p, &RotationDrive::for_params(&p)).unwrap();
    let h = FRAC_1_SQRT_2;
    let (ig, ie) = (
        space.index_of(&[GROUND, 0]).unwrap(),
        space.index_of(&[EXCITED, 0]).unwrap(),
    );
    let mut target = nalgebra::DVector::from_element(space.dim(), ZERO);
    target[ig] = C64::from(h);
    target[ie] = -I * h;
    // Compare up to a global phase.
    let overlap = target.dotc(r.output.amplitudes());
    let out = r.output.amplitudes() * (overlap.conj() / overlap.norm());
    assert!(close(out[ig], target[ig], 1e-3));
    assert!(close(out[ie], target[ie], 1e-3));

    let gate = hadamard_atom_gate(&p, &RotationDrive::for_params(&p), 3).unwrap();
    assert!(gate.basis_fidelities().unwrap().iter().all(|&f| f >= 0.999));
    // Photon number is untouched.
    let input = superposed_input(3);
    let after = gate.apply(&input).unwrap().output;
    for n in 0..=3 {
        let pop = |s: &StateVector| -> f64 {
            (0..2)
                .map(|a| s.amplitude(&[a, n]).unwrap().norm_sqr())
                .sum()
        };
        assert!((pop(&input) - pop(&after)).abs() < 1e-6);
    }
}

#[test]
fn physical_not_flips_atom_for_both_photon_numbers() {
    let p = dispersive(0.01);
    let gate = not_atom_gate(&p, &RotationDrive::for_params(&p), 3).unwrap();
    assert!(gate.basis_fidelities().unwrap().iter().all(|&f| f >= 0.999));
}

#[test]
fn rotation_needs_far_dispersive_node() {
    let p = dispersive(0.1);
    assert!(hadamard_atom_gate(&p, &RotationDrive::for_params(&p), 3).is_err());
}

fn scaled_two_photon(sigma0: f64) -> TwoPhotonParams {
    TwoPhotonParams::new(1.0, 10.0, 2.0, sigma0, 6.0).unwrap()
}

#[test]
fn undriven_swap_is_identity() {
    let gate = swap_two_photon_gate(&scaled_two_photon(0.0), 3, 1e-11).unwrap();
    let id = DMatrix::<C64>::identity(gate.space.dim(), gate.space.dim());
    assert!((&gate.matrix - id).norm() < 1e-9);
}

#[test]
fn swap_transfer_is_symmetric() {
    let gate = swap_two_photon_gate(&scaled_two_photon(1.2), 3, 1e-11).unwrap();
    let s = &gate.space;
    let (g0, e1) = (
        s.index_of(&[GROUND, 0]).unwrap(),
        s.index_of(&[EXCITED, 1]).unwrap(),
    );
    let up = gate.matrix[(e1, g0)].norm_sqr();
    let down = gate.matrix[(g0, e1)].norm_sqr();
    assert!(up > 0.01, "{up}");
    assert!((up - down).abs() < 1e-3);
    let exact = gate
        .diagnostics
        .iter()
        .find(|d| d.0 == "exchange_probability_exact")
        .unwrap()
        .1;
    assert!((exact - up).abs() < 1e-9);
}

#[test]
fn atom_controlled_cnot_keeps_idle_state() {
    let x = 0.1;
    let params = dispersive(x);
    let cfg = AtomToCavityConfig {
        cnot: PulseConfig::default(),
        two_photon: TwoPhotonParams {
            cavity_omega: params.omega(),
            ..scaled_two_photon(1.2)
        },
        tol: 1e-11,
    };
    let s = StateVector::basis(node_space(ATOM, CAVITY, 3).unwrap(), &[EXCITED, 0]).unwrap();
    let r = physical_cnot_atom_to_cavity(&s, &params, &cfg).unwrap();
    assert!(r.fidelity_vs_ideal >= 0.9, "{}", r.fidelity_vs_ideal);
    assert_eq!(r.pulse_log.len(), 3);
}

#[test]
fn atom_controlled_cnot_requires_matching_node() {
    let params = dispersive(0.2);
    let cfg = AtomToCavityConfig {
        cnot: PulseConfig::default(),
        two_photon: scaled_two_photon(1.0),
        tol: 1e-10,
    };
    assert!(cnot_atom_to_cavity_gate(&params, &cfg, 3).is_err());
}

fn cqpg_params(ge_detuning: f64, coupling_ge: f64) -> ThreeLevelParams {
    ThreeLevelParams {
        coupling_ge,
        ..ThreeLevelParams::resonant_ei(50.0, 1.0, ge_detuning).unwrap()
    }
}

#[test]
fn resonant_two_pi_pulse_flips_sign() {
    // Closed form of the e1 ↔ i0 doublet: cos(Ωt) at Ωt = π.
    assert!(((PI / 1.0_f64).cos() + 1.0).abs() < 1e-12);
    let gate = cqpg_local_gate(&cqpg_params(100.0, 0.0), 2, 1e-12).unwrap();
    let s = &gate.space;
    let e1 = s.index_of(&[EXCITED, 1]).unwrap();
    assert!((gate.matrix[(e1, e1)] + 1.0).norm() < 1e-8);
    for lv in [[GROUND, 0], [GROUND, 1], [EXCITED, 0]] {
        let k = s.index_of(&lv).unwrap();
        assert!((gate.matrix[(k, k)] - 1.0).norm() < 1e-8);
    }
}

#[test]
fn spectators_survive_detuned_coupling() {
    let gate = cqpg_local_gate(&cqpg_params(100.0, 1.0), 2, 1e-12).unwrap();
    let s = &gate.space;
    for lv in [[GROUND, 0], [GROUND, 1], [EXCITED, 0]] {
        let k = s.index_of(&lv).unwrap();
        assert!(
            (gate.matrix[(k, k)] - 1.0).norm() < 1e-6,
            "{lv:?}: {}",
            gate.matrix[(k, k)]
        );
    }
    // The resonant sign flip survives to first order in Ω/Δ.
    let e1 = s.index_of(&[EXCITED, 1]).unwrap();
    assert!((gate.matrix[(e1, e1)] + 1.0).norm() < 0.05);
}

#[test]
fn lifted_operator_leaves_third_level() {
    let f = node(2);
    let h = native_gate(GateKind::CnotCavityToAtom, &f).unwrap();
    let big = lift_to_three_level(h.matrix(), 2).unwrap();
    assert!(unitarity_deviation(&big) < 1e-12);
    let space = three_level_space(ATOM, CAVITY, 2).unwrap();
    let i1 = space.index_of(&[2, 1]).unwrap();
    assert_eq!(big[(i1, i1)], ONE);
}
