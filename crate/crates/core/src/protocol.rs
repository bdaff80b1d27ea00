//! Two-node protocol engine: Alice holds cavity `A` and atom `α`, Bob holds
//! cavity `B` and atom `β`. A shared ebit on `(α, β)`, local gates, two
//! measurements and two classical bits implement a CNOT (or a π phase gate)
//! between the cavity qubits `A` and `B`.
//!
//! Every operator goes through a [`Node`], which refuses operators on factors
//! it does not own. Measurement branches are either all enumerated or sampled
//! with a seeded generator.
//!
//! Register order is `[A, α, B, β, ancillas…]`. On Bob's side after the
//! atom-controlled CNOT the qubit reads `|g⟩ ≡ 1`, `|e⟩ ≡ 0`; that map is
//! recorded in the trace.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gates::{
    cnot_atom_to_cavity_gate, cnot_cavity_to_atom_gate, cqpg_local_gate, hadamard_atom_gate,
    lift_to_three_level, native_on_node, not_atom_gate, AtomToCavityConfig, GateKind, PulseConfig,
    RotationDrive,
};
use crate::jcmodel::{
    interaction_on, node_space, resonant_rabi_evolve, JCParams, ThreeLevelParams, ATOM, CAVITY,
};
use crate::perturb::{calibrate_convention, FrequencyConvention, TwoPhotonParams};
use crate::pulses::propagate;
use crate::qstate::{
    enumerate_branches, measure_with_rng, tensor, Branch, CompositeSpace, FactorLabel,
    MeasurementBasis, Operator, StateVector, EXCITED, GROUND, I, ONE, ZERO,
};
use crate::tolerance::TOLERANCES;
use crate::C64;

pub const CAVITY_A: &str = "A";
pub const CAVITY_B: &str = "B";
pub const ATOM_ALPHA: &str = "alpha";
pub const ATOM_BETA: &str = "beta";
const MODE_A: &str = "mode_a";
const MODE_B: &str = "mode_b";

/// How Bob's qubit is read after the atom-controlled CNOT.
pub const BETA_ENCODING: &str = "beta: g=1, e=0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeName {
    Alice,
    Bob,
    /// Input loading and the photon source; not a party of the protocol.
    Source,
}

impl fmt::Display for NodeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Alice => "Alice",
            Self::Bob => "Bob",
            Self::Source => "Source",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Ideal,
    Physical,
}

impl Level {
    pub fn name(self) -> &'static str {
        match self {
            Self::Ideal => "ideal",
            Self::Physical => "physical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchMode {
    Enumerate,
    Sample(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonlocalGate {
    Cnot,
    /// π controlled phase.
    Cqpg,
}

impl NonlocalGate {
    pub fn name(self) -> &'static str {
        match self {
            Self::Cnot => "cnot",
            Self::Cqpg => "cqpg",
        }
    }

    fn beta_levels(self) -> usize {
        match self {
            Self::Cnot => 2,
            Self::Cqpg => 3,
        }
    }
}

/// Local pulse parameters of one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeParams {
    /// Node used for the cavity-controlled CNOT and the two-photon swap.
    pub gate: JCParams,
    /// Stark-switched node used for single-atom rotations.
    pub rotation: JCParams,
    pub pulse: PulseConfig,
    pub rotation_drive: RotationDrive,
    pub two_photon: TwoPhotonParams,
    pub three_level: ThreeLevelParams,
    pub tol: f64,
}

impl NodeParams {
    /// Builds every node from one two-photon operating point: the gate node
    /// shares its `Ω` and `δ`, rotations use `δ = 100Ω`, and the three-level
    /// atom sits `100Ω` off the `g↔e` resonance.
    pub fn from_two_photon(tp: &TwoPhotonParams) -> Result<Self> {
        let gate = tp.jc()?;
        let w = tp.cavity_omega;
        let g = tp.rabi_coupling;
        let rotation = JCParams::new(w + 100.0 * g, w, g)?;
        Ok(Self {
            gate,
            rotation,
            pulse: PulseConfig::default(),
            rotation_drive: RotationDrive::for_params(&rotation),
            two_photon: *tp,
            three_level: ThreeLevelParams::resonant_ei(w, g, 100.0 * g)?,
            tol: 1e-10,
        })
    }
}

/// Simulation settings shared by both nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolConfig {
    pub fock_cutoff: usize,
    pub alice: NodeParams,
    pub bob: NodeParams,
}

impl ProtocolConfig {
    pub fn new(fock_cutoff: usize, node: NodeParams) -> Result<Self> {
        if fock_cutoff < 3 {
            return Err(Error::InvalidParameter(format!(
                "protocol needs a Fock cutoff ≥ 3, got {fock_cutoff}"
            )));
        }
        Ok(Self {
            fock_cutoff,
            alice: node,
            bob: node,
        })
    }

    /// Reference two-photon point read in the frequency convention that
    /// reproduces the calibration target.
    pub fn calibrated() -> Result<Self> {
        let nominal = TwoPhotonParams::reference(FrequencyConvention::Angular);
        let report = calibrate_convention(&nominal)?;
        let tp = nominal.in_convention(report.chosen);
        Self::new(3, NodeParams::from_two_photon(&tp)?)
    }

    /// Reference point in a fixed convention (no calibration run).
    pub fn with_convention(c: FrequencyConvention) -> Result<Self> {
        Self::new(
            3,
            NodeParams::from_two_photon(&TwoPhotonParams::reference(c))?,
        )
    }
}

/// One party. Holds the names of its cavity and atom and refuses to touch
/// anything else.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: NodeName,
    pub cavity: String,
    pub atom: String,
    pub params: NodeParams,
}

impl Node {
    pub fn alice(params: NodeParams) -> Self {
        Self {
            name: NodeName::Alice,
            cavity: CAVITY_A.into(),
            atom: ATOM_ALPHA.into(),
            params,
        }
    }

    pub fn bob(params: NodeParams) -> Self {
        Self {
            name: NodeName::Bob,
            cavity: CAVITY_B.into(),
            atom: ATOM_BETA.into(),
            params,
        }
    }

    pub fn owns(&self, factor: &str) -> bool {
        factor == self.cavity || factor == self.atom
    }

    pub fn check_support(&self, support: &[&str]) -> Result<()> {
        match support.iter().find(|f| !self.owns(f)) {
            Some(f) => Err(Error::Locality(format!(
                "{} cannot act on `{f}`",
                self.name
            ))),
            None => Ok(()),
        }
    }

    /// Applies `m` on `support` (in that factor order) and returns the
    /// renormalized state with the squared norm before renormalization.
    pub fn apply(
        &self,
        state: &StateVector,
        m: &DMatrix<C64>,
        support: &[&str],
    ) -> Result<(StateVector, f64)> {
        self.check_support(support)?;
        state.apply_local_lossy(m, support)
    }

    fn node_support(&self) -> [&str; 2] {
        [self.atom.as_str(), self.cavity.as_str()]
    }
}

/// One message on the classical channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub sender: NodeName,
    pub bit: u8,
    pub step: &'static str,
}

/// In-process log of classical bits.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassicalChannel {
    pub messages: Vec<Message>,
}

impl ClassicalChannel {
    pub fn send(&mut self, sender: NodeName, bit: u8, step: &'static str) {
        self.messages.push(Message { sender, bit, step });
    }

    pub fn bits_sent(&self) -> usize {
        self.messages.len()
    }
}

/// Attenuated single-photon source. Probabilities need not sum to one; the
/// remainder is discarded runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonGunModel {
    pub p_empty: f64,
    pub p_single: f64,
    pub p_double: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhotonEvent {
    Empty,
    Single,
    Double,
}

impl PhotonEvent {
    pub fn name(self) -> &'static str {
        match self {
            Self::Empty => "empty",
            Self::Single => "single",
            Self::Double => "double",
        }
    }
}

impl PhotonGunModel {
    pub fn new(p_empty: f64, p_single: f64, p_double: f64) -> Result<Self> {
        let m = Self {
            p_empty,
            p_single,
            p_double,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let p = [self.p_empty, self.p_single, self.p_double];
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) || self.total() > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "photon-gun probabilities must be ≥ 0 with sum ≤ 1, got {p:?}"
            )));
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.p_empty + self.p_single + self.p_double
    }

    /// Draws one pulse; `None` is a discarded run. Three independent uniforms
    /// decide discard, good/bad and empty/double, so that along a ray of fixed
    /// `p_empty : p_double` the set of bad runs only grows.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<PhotonEvent> {
        let (u0, u1, u2): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
        let total = self.total();
        if total <= 0.0 || u0 >= total {
            return None;
        }
        let bad = self.p_empty + self.p_double;
        if u1 >= bad / total {
            Some(PhotonEvent::Single)
        } else if u2 < self.p_empty / bad {
            Some(PhotonEvent::Empty)
        } else {
            Some(PhotonEvent::Double)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EbitMode {
    Ideal,
    PhotonGun(PhotonGunModel),
}

/// Atoms `(α, β)` after photon absorption.
#[derive(Debug, Clone, PartialEq)]
pub struct EbitState {
    pub state: StateVector,
    /// `None` for the ideal source.
    pub event: Option<PhotonEvent>,
    /// False when the source produced something the protocol cannot correct.
    pub heralded: bool,
}

/// 50:50 beam splitter `exp[π/4 (e^{iφ} a†b − e^{−iφ} a b†)]` on two mode
/// factors. With `φ = π`, `|10⟩ → (|10⟩ + |01⟩)/√2`. Exact on every block of
/// fixed total photon number that fits under both cutoffs.
pub fn beam_splitter(space: &CompositeSpace, phase: f64) -> Result<Operator> {
    let f = space.factors();
    if f.len() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: f.len(),
        });
    }
    let dim = space.dim();
    let mut gen = DMatrix::from_element(dim, dim, ZERO);
    let w = C64::from_polar(PI / 4.0, phase);
    for col in 0..dim {
        let lv = space.levels_of(col);
        let (na, nb) = (lv[0], lv[1]);
        // a†b
        if nb > 0 && na + 1 < f[0].dim() {
            let row = space.index_of(&[na + 1, nb - 1])?;
            gen[(row, col)] += w * (((na + 1) * nb) as f64).sqrt();
        }
        // −a b†
        if na > 0 && nb + 1 < f[1].dim() {
            let row = space.index_of(&[na - 1, nb + 1])?;
            gen[(row, col)] -= w.conj() * ((na * (nb + 1)) as f64).sqrt();
        }
    }
    Operator::unitary(space.clone(), gen.exp())
}

/// Applies the documented beam splitter (`φ = π`) to a two-mode state.
pub fn beam_splitter_mix(state: &StateVector) -> Result<StateVector> {
    state.apply(&beam_splitter(state.space(), PI)?)
}

fn atom_pair_space(beta_levels: usize) -> Result<CompositeSpace> {
    CompositeSpace::new(vec![
        FactorLabel::atom(ATOM_ALPHA, 2)?,
        FactorLabel::atom(ATOM_BETA, beta_levels)?,
    ])
}

/// Atoms after absorbing the output of one photon-gun event.
pub fn ebit_for_event(event: Option<PhotonEvent>, beta_levels: usize) -> Result<EbitState> {
    let atoms = atom_pair_space(beta_levels)?;
    let (state, heralded) = match event {
        None | Some(PhotonEvent::Single) => {
            let modes = CompositeSpace::new(vec![
                FactorLabel::cavity(MODE_A, 2)?,
                FactorLabel::cavity(MODE_B, 2)?,
            ])?;
            let mixed = beam_splitter_mix(&StateVector::basis(modes.clone(), &[1, 0])?)?;
            // Each atom absorbs the photon in its mode: |n⟩|g⟩ → |0⟩|e or g⟩.
            let mut amps = DVector::from_element(atoms.dim(), ZERO);
            for k in 0..modes.dim() {
                let lv = modes.levels_of(k);
                let amp = mixed.amplitudes()[k];
                if lv[0] > 1 || lv[1] > 1 {
                    if amp.norm() > TOLERANCES.comparison {
                        return Err(Error::ContractViolation(
                            "single-photon input left two photons in one mode".into(),
                        ));
                    }
                    continue;
                }
                amps[atoms.index_of(&lv)?] += amp;
            }
            (StateVector::normalized(atoms, amps)?, true)
        }
        Some(PhotonEvent::Empty) => (StateVector::basis(atoms, &[GROUND, GROUND])?, false),
        Some(PhotonEvent::Double) => (StateVector::basis(atoms, &[EXCITED, EXCITED])?, false),
    };
    Ok(EbitState {
        state,
        event,
        heralded,
    })
}

/// Prepares the shared pair. `Ok(None)` is a discarded photon-gun run.
pub fn prepare_ebit<R: Rng + ?Sized>(
    mode: &EbitMode,
    beta_levels: usize,
    rng: &mut R,
) -> Result<Option<EbitState>> {
    match mode {
        EbitMode::Ideal => ebit_for_event(None, beta_levels).map(Some),
        EbitMode::PhotonGun(m) => {
            m.validate()?;
            match m.sample(rng) {
                Some(ev) => ebit_for_event(Some(ev), beta_levels).map(Some),
                None => Ok(None),
            }
        }
    }
}

/// Initial cavity qubits: `(a|1⟩ + b|0⟩)_A ⊗ (c|1⟩ + d|0⟩)_B`, or a joint
/// state of `A`, `B` and any ancilla factors (cavities as qubits, dim 2).
#[derive(Debug, Clone, PartialEq)]
pub enum Inputs {
    Product([C64; 4]),
    Joint(StateVector),
}

impl Inputs {
    pub fn product(a: C64, b: C64, c: C64, d: C64) -> Result<Self> {
        for (x, y) in [(a, b), (c, d)] {
            let n = (x.norm_sqr() + y.norm_sqr()).sqrt();
            if (n - 1.0).abs() > TOLERANCES.norm {
                return Err(Error::NotNormalized { norm: n });
            }
        }
        Ok(Self::Product([a, b, c, d]))
    }

    pub fn joint(state: StateVector) -> Result<Self> {
        for name in [CAVITY_A, CAVITY_B] {
            if state.space().factor(name)?.dim() != 2 {
                return Err(Error::InvalidParameter(format!(
                    "input cavity `{name}` must be a qubit"
                )));
            }
        }
        for f in state.space().factors() {
            if [ATOM_ALPHA, ATOM_BETA].contains(&f.name()) {
                return Err(Error::LabelCollision(f.name().into()));
            }
        }
        Ok(Self::Joint(state))
    }

    /// Input as a state on `[A, B, ancillas…]` with qubit cavities.
    pub fn cavity_state(&self) -> Result<StateVector> {
        match self {
            Self::Product([a, b, c, d]) => {
                let qa =
                    StateVector::from_amplitudes(FactorLabel::cavity(CAVITY_A, 1)?, &[*b, *a])?;
                let qb =
                    StateVector::from_amplitudes(FactorLabel::cavity(CAVITY_B, 1)?, &[*d, *c])?;
                tensor(&[qa, qb])
            }
            Self::Joint(s) => {
                let mut names = vec![CAVITY_A.to_string(), CAVITY_B.to_string()];
                names.extend(
                    s.space()
                        .factors()
                        .iter()
                        .map(|f| f.name().to_string())
                        .filter(|n| n != CAVITY_A && n != CAVITY_B),
                );
                let order = names
                    .iter()
                    .map(|n| s.space().factor(n).cloned())
                    .collect::<Result<Vec<_>>>()?;
                s.reorder(&CompositeSpace::new(order)?)
            }
        }
    }

    pub fn amplitudes(&self) -> Option<[C64; 4]> {
        match self {
            Self::Product(v) => Some(*v),
            Self::Joint(_) => None,
        }
    }
}

/// Target of `gate` on the cavity qubits, identity on ancillas.
pub fn target_state(gate: NonlocalGate, inputs: &Inputs) -> Result<StateVector> {
    let s = inputs.cavity_state()?;
    let local = CompositeSpace::new(vec![
        s.space().factor(CAVITY_A)?.clone(),
        s.space().factor(CAVITY_B)?.clone(),
    ])?;
    let m = match gate {
        // |A B⟩ with A controlling on 1.
        NonlocalGate::Cnot => DMatrix::from_fn(4, 4, |i, j| {
            let flip = |k: usize| if k >= 2 { k ^ 1 } else { k };
            if i == flip(j) {
                ONE
            } else {
                ZERO
            }
        }),
        NonlocalGate::Cqpg => DMatrix::from_diagonal(&DVector::from_vec(vec![-ONE, ONE, ONE, ONE])),
    };
    s.apply_local(&Operator::unitary(local, m)?, &[CAVITY_A, CAVITY_B])
}

/// Copies `state` into a space where the listed factors have dimension `dim`.
fn pad_factors(state: &StateVector, names: &[&str], dim: usize) -> Result<StateVector> {
    let factors = state
        .space()
        .factors()
        .iter()
        .map(|f| {
            if names.contains(&f.name()) {
                FactorLabel::new(f.name(), dim)
            } else {
                Ok(f.clone())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let big = CompositeSpace::new(factors)?;
    let mut amps = DVector::from_element(big.dim(), ZERO);
    for k in 0..state.space().dim() {
        amps[big.index_of(&state.space().levels_of(k))?] = state.amplitudes()[k];
    }
    StateVector::new(big, amps)
}

/// `⟨t| Tr_atoms |ψ⟩⟨ψ| |t⟩`: fidelity of the non-atom factors of `psi` with
/// `target`, which lives on those factors (in any order).
pub fn reduced_fidelity(psi: &StateVector, target: &StateVector, atoms: &[&str]) -> Result<f64> {
    let space = psi.space();
    let atom_pos = atoms
        .iter()
        .map(|a| space.position(a))
        .collect::<Result<Vec<_>>>()?;
    let mut rest = space.clone();
    for a in atoms {
        rest = rest.without(a)?;
    }
    let t = target.reorder(&rest)?;
    let mut overlaps: std::collections::BTreeMap<Vec<usize>, C64> = Default::default();
    for k in 0..space.dim() {
        let lv = space.levels_of(k);
        let key: Vec<usize> = atom_pos.iter().map(|&p| lv[p]).collect();
        let other: Vec<usize> = lv
            .iter()
            .enumerate()
            .filter(|(i, _)| !atom_pos.contains(i))
            .map(|(_, &l)| l)
            .collect();
        *overlaps.entry(key).or_insert(ZERO) +=
            t.amplitudes()[rest.index_of(&other)?].conj() * psi.amplitudes()[k];
    }
    Ok(overlaps
        .values()
        .map(|z| z.norm_sqr())
        .sum::<f64>()
        .min(1.0))
}

/// The full register: cavities padded to the protocol cutoff, atoms in `|g⟩`.
fn register_space_state(
    cavities: &StateVector,
    cutoff: usize,
    beta_levels: usize,
) -> Result<StateVector> {
    let padded = pad_factors(cavities, &[CAVITY_A, CAVITY_B], cutoff + 1)?;
    let atoms = StateVector::basis(atom_pair_space(beta_levels)?, &[GROUND, GROUND])?;
    let joined = tensor(&[padded, atoms])?;
    let f = |n: &str| joined.space().factor(n).cloned();
    let mut order = vec![f(CAVITY_A)?, f(ATOM_ALPHA)?, f(CAVITY_B)?, f(ATOM_BETA)?];
    for x in joined.space().factors() {
        if ![CAVITY_A, CAVITY_B, ATOM_ALPHA, ATOM_BETA].contains(&x.name()) {
            order.push(x.clone());
        }
    }
    joined.reorder(&CompositeSpace::new(order)?)
}

/// One applied operation, measurement or message.
#[derive(Debug, Clone, PartialEq)]
pub struct OpRecord {
    pub step: &'static str,
    pub node: NodeName,
    pub name: String,
    pub support: Vec<String>,
    pub params: Vec<(String, f64)>,
    pub outcome: Option<String>,
}

impl OpRecord {
    fn op(step: &'static str, node: &Node, name: &str, support: &[&str]) -> Self {
        Self::by(step, node.name, name, support)
    }

    fn by(step: &'static str, node: NodeName, name: &str, support: &[&str]) -> Self {
        Self {
            step,
            node,
            name: name.into(),
            support: support.iter().map(|s| s.to_string()).collect(),
            params: Vec::new(),
            outcome: None,
        }
    }

    fn with(mut self, key: &str, v: f64) -> Self {
        self.params.push((key.into(), v));
        self
    }

    fn outcome(mut self, o: impl Into<String>) -> Self {
        self.outcome = Some(o.into());
        self
    }
}

/// Result of one measurement branch.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchResult {
    pub alpha: String,
    pub beta: String,
    pub probability: f64,
    pub fidelity_vs_ideal: f64,
    /// Register state at the end of the branch.
    pub state: StateVector,
    pub operations: Vec<OpRecord>,
    pub channel: ClassicalChannel,
    /// Smallest norm survival of any lossy local operation.
    pub min_survival: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolTrace {
    pub gate: NonlocalGate,
    pub level: Level,
    pub mode: BranchMode,
    /// `(a, b, c, d)` for product inputs.
    pub inputs: Option<[C64; 4]>,
    pub encoding: &'static str,
    pub ebit_event: Option<PhotonEvent>,
    pub ebit_heralded: bool,
    pub branches: Vec<BranchResult>,
}

impl ProtocolTrace {
    pub fn total_probability(&self) -> f64 {
        self.branches.iter().map(|b| b.probability).sum()
    }

    /// Probability-weighted fidelity over the recorded branches.
    pub fn average_fidelity(&self) -> f64 {
        let p = self.total_probability();
        if p <= 0.0 {
            return 0.0;
        }
        self.branches
            .iter()
            .map(|b| b.probability * b.fidelity_vs_ideal)
            .sum::<f64>()
            / p
    }

    pub fn min_fidelity(&self) -> f64 {
        self.branches
            .iter()
            .map(|b| b.fidelity_vs_ideal)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Node-local unitaries for one run, all on `(atom, cavity)` node spaces.
struct Toolkit {
    /// Alice: cavity-controlled CNOT.
    cnot_a: DMatrix<C64>,
    not_alpha: DMatrix<C64>,
    not_beta: DMatrix<C64>,
    /// Bob: atom-controlled CNOT or local phase gate.
    step5_b: DMatrix<C64>,
    hadamard_beta: DMatrix<C64>,
    /// Alice: `|g1⟩ → −|g1⟩` by a full resonant cycle.
    two_pi_a: DMatrix<C64>,
    /// π Rabi transfer `|e0⟩ → −i|g1⟩` used to load the register.
    pi_load: DMatrix<C64>,
}

fn ideal_rabi(cutoff: usize, theta: f64) -> Result<DMatrix<C64>> {
    let space = node_space(ATOM, CAVITY, cutoff)?;
    let params = JCParams::resonant(1.0, 1.0)?;
    let mut m = DMatrix::from_element(space.dim(), space.dim(), ZERO);
    for j in 0..space.dim() {
        let mut e = DVector::from_element(space.dim(), ZERO);
        e[j] = ONE;
        let out = resonant_rabi_evolve(&StateVector::new(space.clone(), e)?, &params, theta)?;
        m.set_column(j, out.amplitudes());
    }
    Ok(m)
}

/// Resonant node evolution over `t`, integrated in the interaction picture
/// (bare labels kept across the sudden Stark switch).
fn physical_rabi(params: &JCParams, cutoff: usize, t: f64, tol: f64) -> Result<DMatrix<C64>> {
    let space = node_space(ATOM, CAVITY, cutoff)?;
    let resonant = JCParams::resonant(params.omega(), params.rabi_coupling())?;
    Ok(propagate(&interaction_on(&resonant, &space)?, &[], 0.0, t, tol)?.matrix)
}

fn node_local(kind: GateKind, atom_levels: usize, cutoff: usize) -> Result<DMatrix<C64>> {
    let space = CompositeSpace::new(vec![
        FactorLabel::atom(ATOM, atom_levels)?,
        FactorLabel::cavity(CAVITY, cutoff)?,
    ])?;
    native_on_node(kind, &space)
}

impl Toolkit {
    fn ideal(gate: NonlocalGate, cutoff: usize) -> Result<Self> {
        let bl = gate.beta_levels();
        let step5 = match gate {
            NonlocalGate::Cnot => GateKind::CnotAtomToCavity,
            NonlocalGate::Cqpg => GateKind::CqpgLocal { phi: PI },
        };
        Ok(Self {
            cnot_a: node_local(GateKind::CnotCavityToAtom, 2, cutoff)?,
            not_alpha: node_local(GateKind::NotAtom, 2, cutoff)?,
            not_beta: node_local(GateKind::NotAtom, bl, cutoff)?,
            step5_b: node_local(step5, bl, cutoff)?,
            hadamard_beta: node_local(GateKind::HadamardAtom, bl, cutoff)?,
            two_pi_a: ideal_rabi(cutoff, PI)?,
            pi_load: ideal_rabi(cutoff, PI / 2.0)?,
        })
    }

    fn physical(gate: NonlocalGate, cfg: &ProtocolConfig) -> Result<Self> {
        let n = cfg.fock_cutoff;
        let (a, b) = (&cfg.alice, &cfg.bob);
        let lift = |m: DMatrix<C64>| -> Result<DMatrix<C64>> {
            match gate {
                NonlocalGate::Cnot => Ok(m),
                NonlocalGate::Cqpg => lift_to_three_level(&m, n),
            }
        };
        let step5_b = match gate {
            NonlocalGate::Cnot => {
                let c = AtomToCavityConfig {
                    cnot: b.pulse,
                    two_photon: b.two_photon,
                    tol: b.tol,
                };
                cnot_atom_to_cavity_gate(&b.gate, &c, n)?.matrix
            }
            NonlocalGate::Cqpg => cqpg_local_gate(&b.three_level, n, b.tol)?.matrix,
        };
        let g = a.gate.rabi_coupling();
        Ok(Self {
            cnot_a: cnot_cavity_to_atom_gate(&a.gate, &a.pulse, n)?.matrix,
            not_alpha: not_atom_gate(&a.rotation, &a.rotation_drive, n)?.matrix,
            not_beta: lift(not_atom_gate(&b.rotation, &b.rotation_drive, n)?.matrix)?,
            step5_b,
            hadamard_beta: lift(hadamard_atom_gate(&b.rotation, &b.rotation_drive, n)?.matrix)?,
            two_pi_a: physical_rabi(&a.gate, n, PI / g, a.tol)?,
            pi_load: physical_rabi(&a.gate, n, PI / (2.0 * g), a.tol)?,
        })
    }
}

/// Loads `(a|1⟩+b|0⟩)_A ⊗ (c|1⟩+d|0⟩)_B` with atoms in `|gg⟩`: each atom is
/// first set to `i·x|e⟩ + y|g⟩` (the `i` pre-compensates the transfer phase),
/// then a resonant π pulse moves the excitation into the empty cavity.
/// Returns the register state and the operation log.
pub fn prepare_register(
    inputs: &Inputs,
    level: Level,
    cfg: &ProtocolConfig,
    gate: NonlocalGate,
) -> Result<(StateVector, Vec<OpRecord>)> {
    let pi_load = match level {
        Level::Ideal => ideal_rabi(cfg.fock_cutoff, PI / 2.0)?,
        Level::Physical => {
            let a = &cfg.alice;
            physical_rabi(
                &a.gate,
                cfg.fock_cutoff,
                PI / (2.0 * a.gate.rabi_coupling()),
                a.tol,
            )?
        }
    };
    load_register(inputs, &pi_load, cfg, gate)
}

fn load_register(
    inputs: &Inputs,
    pi_load: &DMatrix<C64>,
    cfg: &ProtocolConfig,
    gate: NonlocalGate,
) -> Result<(StateVector, Vec<OpRecord>)> {
    let (alice, bob) = (Node::alice(cfg.alice), Node::bob(cfg.bob));
    let bl = gate.beta_levels();
    let amps = match inputs {
        Inputs::Joint(_) => {
            let reg = register_space_state(&inputs.cavity_state()?, cfg.fock_cutoff, bl)?;
            return Ok((
                reg,
                vec![OpRecord::by(
                    "step2",
                    NodeName::Source,
                    "load_joint_input",
                    &[CAVITY_A, CAVITY_B],
                )],
            ));
        }
        Inputs::Product(v) => *v,
    };
    let vacuum = Inputs::product(ZERO, ONE, ZERO, ONE)?.cavity_state()?;
    let mut reg = register_space_state(&vacuum, cfg.fock_cutoff, bl)?;
    let mut log = Vec::new();
    for (node, x, y) in [(&alice, amps[0], amps[1]), (&bob, amps[2], amps[3])] {
        let levels = if node.name == NodeName::Alice { 2 } else { bl };
        // |g⟩ → i·x|e⟩ + y|g⟩ on the atom alone.
        let mut u = DMatrix::<C64>::identity(levels, levels);
        let (p, q) = (I * x, y);
        u[(GROUND, GROUND)] = q;
        u[(EXCITED, GROUND)] = p;
        u[(GROUND, EXCITED)] = -p.conj();
        u[(EXCITED, EXCITED)] = q.conj();
        reg = node.apply(&reg, &u, &[node.atom.as_str()])?.0;
        log.push(
            OpRecord::op("step2", node, "prepare_atom", &[node.atom.as_str()])
                .with("amp_e_re", x.re)
                .with("amp_e_im", x.im),
        );
        let load = if levels == 3 {
            lift_to_three_level(pi_load, cfg.fock_cutoff)?
        } else {
            pi_load.clone()
        };
        reg = node.apply(&reg, &load, &node.node_support())?.0;
        log.push(
            OpRecord::op("step2", node, "pi_rabi_transfer", &node.node_support()).with("area", PI),
        );
    }
    Ok((reg, log))
}

/// Shared state of a partially executed run.
#[derive(Clone)]
struct Path {
    state: StateVector,
    probability: f64,
    ops: Vec<OpRecord>,
    channel: ClassicalChannel,
    alpha: String,
    min_survival: f64,
}

impl Path {
    fn apply(
        &mut self,
        node: &Node,
        m: &DMatrix<C64>,
        support: &[&str],
        record: OpRecord,
    ) -> Result<()> {
        let (s, surv) = node.apply(&self.state, m, support)?;
        self.state = s;
        self.min_survival = self.min_survival.min(surv);
        self.ops.push(record);
        Ok(())
    }
}

fn outcomes(
    state: &StateVector,
    factor: &str,
    mode: BranchMode,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Branch>> {
    let basis = MeasurementBasis::computational(&["g", "e"]);
    let levels = state.space().factor(factor)?.dim();
    let basis = if levels == 3 {
        MeasurementBasis::computational(&["g", "e", "i"])
    } else {
        basis
    };
    match mode {
        BranchMode::Enumerate => Ok(enumerate_branches(state, factor, &basis)?
            .into_iter()
            // The third level is reported only when it is actually populated.
            .filter(|b| b.outcome_index < 2 || b.probability > TOLERANCES.comparison)
            .collect()),
        BranchMode::Sample(_) => Ok(vec![measure_with_rng(state, factor, &basis, rng)?]),
    }
}

/// A configured protocol with its local unitaries simulated once, ready to
/// run on many inputs.
pub struct ProtocolEngine {
    gate: NonlocalGate,
    level: Level,
    cfg: ProtocolConfig,
    kit: Toolkit,
}

impl ProtocolEngine {
    pub fn new(gate: NonlocalGate, level: Level, cfg: &ProtocolConfig) -> Result<Self> {
        let kit = match level {
            Level::Ideal => Toolkit::ideal(gate, cfg.fock_cutoff)?,
            Level::Physical => Toolkit::physical(gate, cfg)?,
        };
        Ok(Self {
            gate,
            level,
            cfg: *cfg,
            kit,
        })
    }

    pub fn gate(&self) -> NonlocalGate {
        self.gate
    }

    pub fn level(&self) -> Level {
        self.level
    }

    /// Runs with the ideal ebit.
    pub fn run(&self, inputs: &Inputs, mode: BranchMode) -> Result<ProtocolTrace> {
        self.run_with_ebit(
            inputs,
            mode,
            &ebit_for_event(None, self.gate.beta_levels())?,
        )
    }

    /// Steps: 2 load register, 3 share ebit, 4 Alice's CNOT and measurement
    /// of `α`, 5 Bob's local gate, 6 Bob's rotation and measurement of `β`
    /// followed by Alice's phase fix.
    pub fn run_with_ebit(
        &self,
        inputs: &Inputs,
        mode: BranchMode,
        ebit: &EbitState,
    ) -> Result<ProtocolTrace> {
        let (gate, level, cfg, kit) = (self.gate, self.level, &self.cfg, &self.kit);
        let bl = gate.beta_levels();
        if ebit.state.space().factor(ATOM_BETA)?.dim() != bl {
            return Err(Error::DimensionMismatch {
                expected: bl,
                found: ebit.state.space().factor(ATOM_BETA)?.dim(),
            });
        }
        let (alice, bob) = (Node::alice(cfg.alice), Node::bob(cfg.bob));
        let target = target_state(gate, inputs)?;
        let target = pad_factors(&target, &[CAVITY_A, CAVITY_B], cfg.fock_cutoff + 1)?;
        let mut rng = ChaCha8Rng::seed_from_u64(match mode {
            BranchMode::Sample(s) => s,
            BranchMode::Enumerate => 0,
        });

        let (reg, mut ops) = load_register(inputs, &kit.pi_load, cfg, gate)?;
        // Step 3: the atoms start in |gg⟩, so swapping in the ebit is a relabeling
        // of the atom amplitudes, not an operator.
        let cav = reg
            .condition(ATOM_ALPHA, &basis_vec(2, GROUND))?
            .0
            .condition(ATOM_BETA, &basis_vec(bl, GROUND))?
            .0;
        let joined = tensor(&[cav, ebit.state.clone()])?;
        let state = joined.reorder(reg.space())?;
        let mut rec = OpRecord::by(
            "step3",
            NodeName::Source,
            "share_ebit",
            &[ATOM_ALPHA, ATOM_BETA],
        );
        if let Some(ev) = ebit.event {
            rec = rec.outcome(ev.name());
        }
        ops.push(rec);
        let mut root = Path {
            state,
            probability: 1.0,
            ops,
            channel: ClassicalChannel::default(),
            alpha: String::new(),
            min_survival: 1.0,
        };

        let a_sup = alice.node_support();
        let b_sup = bob.node_support();
        root.apply(
            &alice,
            &kit.cnot_a,
            &a_sup,
            OpRecord::op("step4", &alice, "CNOT_cavity_to_atom", &a_sup),
        )?;

        let mut results = Vec::new();
        for ba in outcomes(&root.state, ATOM_ALPHA, mode, &mut rng)? {
            let mut p = root.clone();
            p.probability *= ba.probability;
            p.alpha = ba.outcome.clone();
            p.ops.push(
                OpRecord::op("step4", &alice, "measure", &[ATOM_ALPHA])
                    .outcome(&ba.outcome)
                    .with("p", ba.probability),
            );
            let Some(s) = ba.state else {
                results.extend(dead_branches(&p, &["g", "e"]));
                continue;
            };
            p.state = s;
            let bit = (ba.outcome_index == EXCITED) as u8;
            p.channel.send(NodeName::Alice, bit, "step4");
            p.ops
                .push(OpRecord::op("step4", &alice, "send_bit", &[]).with("bit", bit as f64));
            if bit == 1 {
                p.apply(
                    &bob,
                    &kit.not_beta,
                    &[ATOM_BETA, CAVITY_B],
                    OpRecord::op("step4", &bob, "NOT_atom", &[ATOM_BETA]),
                )?;
                p.apply(
                    &alice,
                    &kit.not_alpha,
                    &a_sup,
                    OpRecord::op("step4", &alice, "reset_NOT_atom", &[ATOM_ALPHA]),
                )?;
            }

            let step5 = match gate {
                NonlocalGate::Cnot => "CNOT_atom_to_cavity",
                NonlocalGate::Cqpg => "CQPG_local",
            };
            let mut r = OpRecord::op("step5", &bob, step5, &b_sup);
            if gate == NonlocalGate::Cqpg {
                r = r.with("phi", PI);
            }
            p.apply(&bob, &kit.step5_b, &b_sup, r)?;
            p.apply(
                &bob,
                &kit.hadamard_beta,
                &b_sup,
                OpRecord::op("step6", &bob, "HADAMARD_atom", &[ATOM_BETA]),
            )?;

            for bb in outcomes(&p.state, ATOM_BETA, mode, &mut rng)? {
                let mut q = p.clone();
                q.probability *= bb.probability;
                q.ops.push(
                    OpRecord::op("step6", &bob, "measure", &[ATOM_BETA])
                        .outcome(&bb.outcome)
                        .with("p", bb.probability),
                );
                let Some(s) = bb.state else {
                    results.push(dead_branch(&q, &bb.outcome));
                    continue;
                };
                q.state = s;
                let bit = (bb.outcome_index == EXCITED) as u8;
                q.channel.send(NodeName::Bob, bit, "step6");
                q.ops
                    .push(OpRecord::op("step6", &bob, "send_bit", &[]).with("bit", bit as f64));
                if bb.outcome_index == GROUND {
                    q.apply(
                        &alice,
                        &kit.two_pi_a,
                        &a_sup,
                        OpRecord::op("step6", &alice, "two_pi_rabi", &a_sup).with("area", 2.0 * PI),
                    )?;
                }
                let fidelity = reduced_fidelity(&q.state, &target, &[ATOM_ALPHA, ATOM_BETA])?;
                results.push(BranchResult {
                    alpha: q.alpha.clone(),
                    beta: bb.outcome.clone(),
                    probability: q.probability,
                    fidelity_vs_ideal: fidelity,
                    state: q.state,
                    operations: q.ops,
                    channel: q.channel,
                    min_survival: q.min_survival,
                });
            }
        }
        Ok(ProtocolTrace {
            gate,
            level,
            mode,
            inputs: inputs.amplitudes(),
            encoding: BETA_ENCODING,
            ebit_event: ebit.event,
            ebit_heralded: ebit.heralded,
            branches: results,
        })
    }
}

/// One-shot run with a freshly built engine.
pub fn run_nonlocal(
    gate: NonlocalGate,
    inputs: &Inputs,
    level: Level,
    mode: BranchMode,
    cfg: &ProtocolConfig,
    ebit: &EbitState,
) -> Result<ProtocolTrace> {
    ProtocolEngine::new(gate, level, cfg)?.run_with_ebit(inputs, mode, ebit)
}

fn basis_vec(dim: usize, k: usize) -> DVector<C64> {
    let mut v = DVector::from_element(dim, ZERO);
    v[k] = ONE;
    v
}

/// A branch that cannot occur. Kept so that enumeration always lists four
/// `(α, β)` outcomes.
fn dead_branch(p: &Path, beta: &str) -> BranchResult {
    BranchResult {
        alpha: p.alpha.clone(),
        beta: beta.into(),
        probability: 0.0,
        fidelity_vs_ideal: 0.0,
        state: p.state.clone(),
        operations: p.ops.clone(),
        channel: p.channel.clone(),
        min_survival: p.min_survival,
    }
}

fn dead_branches(p: &Path, betas: &[&str]) -> Vec<BranchResult> {
    betas.iter().map(|b| dead_branch(p, b)).collect()
}

pub fn run_nonlocal_cnot(
    inputs: &Inputs,
    level: Level,
    mode: BranchMode,
    cfg: &ProtocolConfig,
) -> Result<ProtocolTrace> {
    let ebit = ebit_for_event(None, NonlocalGate::Cnot.beta_levels())?;
    run_nonlocal(NonlocalGate::Cnot, inputs, level, mode, cfg, &ebit)
}

pub fn run_nonlocal_cqpg(
    inputs: &Inputs,
    level: Level,
    mode: BranchMode,
    cfg: &ProtocolConfig,
) -> Result<ProtocolTrace> {
    let ebit = ebit_for_event(None, NonlocalGate::Cqpg.beta_levels())?;
    run_nonlocal(NonlocalGate::Cqpg, inputs, level, mode, cfg, &ebit)
}

/// Outcome of one photon-gun run of the ideal-level protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EbitRun {
    pub event: Option<PhotonEvent>,
    /// Branch-averaged fidelity; `None` for discarded runs.
    pub fidelity: Option<f64>,
}

/// Event of run `index`: every run draws from its own stream of a generator
/// seeded with `seed`, so results do not depend on evaluation order.
pub fn sample_event(model: &PhotonGunModel, seed: u64, index: u64) -> Option<PhotonEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    model.sample(&mut rng)
}

/// Branch-averaged ideal-level fidelity when the source emitted `event`.
pub fn event_fidelity(
    gate: NonlocalGate,
    event: PhotonEvent,
    inputs: &Inputs,
    cfg: &ProtocolConfig,
) -> Result<f64> {
    let ebit = ebit_for_event(Some(event), gate.beta_levels())?;
    Ok(run_nonlocal(
        gate,
        inputs,
        Level::Ideal,
        BranchMode::Enumerate,
        cfg,
        &ebit,
    )?
    .average_fidelity())
}

/// `n` photon-gun runs with fixed inputs. At ideal level the fidelity depends
/// only on the event, so each event kind is simulated once.
pub fn ebit_noise_runs(
    gate: NonlocalGate,
    model: &PhotonGunModel,
    inputs: &Inputs,
    cfg: &ProtocolConfig,
    n: usize,
    seed: u64,
) -> Result<Vec<EbitRun>> {
    model.validate()?;
    let mut cache: std::collections::HashMap<PhotonEvent, f64> = Default::default();
    (0..n as u64)
        .map(|i| {
            let event = sample_event(model, seed, i);
            let fidelity = match event {
                Some(ev) => Some(match cache.get(&ev) {
                    Some(f) => *f,
                    None => *cache
                        .entry(ev)
                        .or_insert(event_fidelity(gate, ev, inputs, cfg)?),
                }),
                None => None,
            };
            Ok(EbitRun { event, fidelity })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EbitNoiseSummary {
    pub runs: usize,
    pub discarded: usize,
    pub empty: usize,
    pub single: usize,
    pub double: usize,
    /// Mean over all kept runs.
    pub mean_fidelity: f64,
    /// Mean over runs with a single photon (the heralded ones).
    pub mean_fidelity_heralded: f64,
}

pub fn summarize_ebit_runs(runs: &[EbitRun]) -> EbitNoiseSummary {
    let mut s = EbitNoiseSummary {
        runs: runs.len(),
        ..Default::default()
    };
    let (mut sum, mut sum_h) = (0.0, 0.0);
    for r in runs {
        match (r.event, r.fidelity) {
            (Some(ev), Some(f)) => {
                sum += f;
                match ev {
                    PhotonEvent::Empty => s.empty += 1,
                    PhotonEvent::Double => s.double += 1,
                    PhotonEvent::Single => {
                        s.single += 1;
                        sum_h += f;
                    }
                }
            }
            _ => s.discarded += 1,
        }
    }
    let kept = s.empty + s.single + s.double;
    s.mean_fidelity = if kept > 0 {
        sum / kept as f64
    } else {
        f64::NAN
    };
    s.mean_fidelity_heralded = if s.single > 0 {
        sum_h / s.single as f64
    } else {
        f64::NAN
    };
    s
}

pub fn ebit_noise_study(
    gate: NonlocalGate,
    model: &PhotonGunModel,
    inputs: &Inputs,
    cfg: &ProtocolConfig,
    n: usize,
    seed: u64,
) -> Result<EbitNoiseSummary> {
    Ok(summarize_ebit_runs(&ebit_noise_runs(
        gate, model, inputs, cfg, n, seed,
    )?))
}

/// Default configuration for ideal-level runs (no calibration needed).
pub fn ideal_config() -> ProtocolConfig {
    ProtocolConfig::with_convention(FrequencyConvention::Angular)
        .expect("reference parameters are valid")
}

/// Random normalized qubit pair `(x, y)` with `|x|² + |y|² = 1`.
pub fn random_qubit<R: Rng + ?Sized>(rng: &mut R) -> (C64, C64) {
    let theta: f64 = rng.random::<f64>() * PI;
    let (p1, p2): (f64, f64) = (
        rng.random::<f64>() * 2.0 * PI,
        rng.random::<f64>() * 2.0 * PI,
    );
    (
        C64::from_polar((theta / 2.0).cos(), p1),
        C64::from_polar((theta / 2.0).sin(), p2),
    )
}

pub fn random_product_inputs<R: Rng + ?Sized>(rng: &mut R) -> Inputs {
    let (a, b) = random_qubit(rng);
    let (c, d) = random_qubit(rng);
    Inputs::Product([a, b, c, d])
}

/// Random state of `A`, `B` and a qubit ancilla `anc` entangled with `A`.
pub fn random_entangled_inputs<R: Rng + ?Sized>(rng: &mut R) -> Result<Inputs> {
    let space = CompositeSpace::new(vec![
        FactorLabel::cavity(CAVITY_A, 1)?,
        FactorLabel::cavity(CAVITY_B, 1)?,
        FactorLabel::cavity("anc", 1)?,
    ])?;
    let amps = DVector::from_fn(space.dim(), |_, _| {
        C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    });
    Inputs::joint(StateVector::normalized(space, amps)?)
}

#[cfg(test)]
mod tests;
