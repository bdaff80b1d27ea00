//! Jaynes-Cummings model of one atom-cavity node.
//!
//! The Hamiltonian is `H = ω0/2 σz + ω (a†a + 1/2) + Ω (a†σ− + a σ+)` with
//! `σz|e⟩ = +|e⟩`. Keeping the zero-point term makes `E(g,0) = −δ/2` and
//! `E±(n) = ω(n+1) ± sqrt(δ²/4 + Ω²(n+1))` exact eigenvalues.
//!
//! Node spaces are ordered `(atom, cavity)`, so bare labels read `|atom, n⟩`.

use std::f64::consts::FRAC_PI_4;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::qstate::{
    CompositeSpace, FactorLabel, Operator, StateVector, EXCITED, GROUND, I, ONE, THIRD, ZERO,
};
use crate::C64;

pub const DEFAULT_FOCK_CUTOFF: usize = 5;
/// `|δ| ≥ DISPERSIVE_RATIO · Ω` counts as dispersive.
pub const DISPERSIVE_RATIO: f64 = 10.0;
pub const ATOM: &str = "atom";
pub const CAVITY: &str = "cavity";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JCParams {
    omega0: f64,
    omega: f64,
    rabi_coupling: f64,
}

impl JCParams {
    pub fn new(omega0: f64, omega: f64, rabi_coupling: f64) -> Result<Self> {
        if !(omega0.is_finite() && omega.is_finite() && rabi_coupling.is_finite()) {
            return Err(Error::InvalidParameter("frequencies must be finite".into()));
        }
        if rabi_coupling <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "Rabi coupling must be positive, got {rabi_coupling}"
            )));
        }
        Ok(Self {
            omega0,
            omega,
            rabi_coupling,
        })
    }

    pub fn resonant(omega: f64, rabi_coupling: f64) -> Result<Self> {
        Self::new(omega, omega, rabi_coupling)
    }

    /// Parameters with `Ω/δ = x` (atom above the cavity).
    pub fn with_ratio(omega: f64, rabi_coupling: f64, x: f64) -> Result<Self> {
        if !(x > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Ω/δ must be positive, got {x}"
            )));
        }
        Self::new(omega + rabi_coupling / x, omega, rabi_coupling)
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn rabi_coupling(&self) -> f64 {
        self.rabi_coupling
    }

    /// `δ = ω0 − ω`.
    pub fn detuning(&self) -> f64 {
        self.omega0 - self.omega
    }

    /// `x = Ω/δ`; infinite on resonance.
    pub fn coupling_ratio(&self) -> f64 {
        self.rabi_coupling / self.detuning()
    }

    pub fn is_dispersive(&self) -> bool {
        self.detuning().abs() >= DISPERSIVE_RATIO * self.rabi_coupling
    }

    pub fn set_stark_detuning(&self, new_omega0: f64) -> Result<JCParams> {
        JCParams::new(new_omega0, self.omega, self.rabi_coupling)
    }

    /// Mixing angle `φ_n ∈ (0, π/2)` with `tan 2φ_n = 2Ω√(n+1)/δ`; `π/4` on resonance.
    pub fn mixing_angle(&self, n: usize) -> f64 {
        let d = self.detuning();
        if d == 0.0 {
            return FRAC_PI_4;
        }
        0.5 * (2.0 * self.rabi_coupling * ((n + 1) as f64).sqrt()).atan2(d)
    }

    /// `(E+, E−)` of manifold `n`.
    pub fn dressed_energies(&self, n: usize) -> (f64, f64) {
        let d = self.detuning();
        let r = (0.25 * d * d + self.rabi_coupling.powi(2) * (n + 1) as f64).sqrt();
        let c = self.omega * (n + 1) as f64;
        (c + r, c - r)
    }

    /// Energy of `|g,0⟩`.
    pub fn ground_energy(&self) -> f64 {
        -0.5 * self.detuning()
    }

    /// Bare energy of `|atom, n⟩` under the free part of the Hamiltonian.
    pub fn bare_energy(&self, atom: usize, n: usize) -> f64 {
        let sz = if atom == EXCITED { 0.5 } else { -0.5 };
        sz * self.omega0 + self.omega * (n as f64 + 0.5)
    }
}

pub fn set_stark_detuning(params: &JCParams, new_omega0: f64) -> Result<JCParams> {
    params.set_stark_detuning(new_omega0)
}

/// `(atom, cavity)` space with a two-level atom.
pub fn node_space(atom: &str, cavity: &str, fock_cutoff: usize) -> Result<CompositeSpace> {
    CompositeSpace::new(vec![
        FactorLabel::atom(atom, 2)?,
        FactorLabel::cavity(cavity, fock_cutoff)?,
    ])
}

fn node_dims(space: &CompositeSpace, atom_levels: usize) -> Result<usize> {
    let f = space.factors();
    if f.len() != 2 || f[0].dim() != atom_levels {
        return Err(Error::InvalidParameter(format!(
            "expected an (atom[{atom_levels}], cavity) space, got {space}"
        )));
    }
    let cutoff = f[1].dim() - 1;
    if cutoff < 2 {
        return Err(Error::InvalidParameter(format!(
            "Fock cutoff must be at least 2, got {cutoff}"
        )));
    }
    Ok(cutoff)
}

/// Bare free part `ω0/2 σz + ω(a†a + 1/2)`, diagonal.
pub fn free_hamiltonian_on(params: &JCParams, space: &CompositeSpace) -> Result<Operator> {
    let cutoff = node_dims(space, 2)?;
    let mut h = DMatrix::from_element(space.dim(), space.dim(), ZERO);
    for atom in [GROUND, EXCITED] {
        for n in 0..=cutoff {
            let k = space.index_of(&[atom, n])?;
            h[(k, k)] = C64::from(params.bare_energy(atom, n));
        }
    }
    Operator::hermitian(space.clone(), h)
}

/// Coupling part `Ω(a†σ− + aσ+)`.
pub fn interaction_on(params: &JCParams, space: &CompositeSpace) -> Result<Operator> {
    let cutoff = node_dims(space, 2)?;
    let mut h = DMatrix::from_element(space.dim(), space.dim(), ZERO);
    for n in 0..cutoff {
        let e = space.index_of(&[EXCITED, n])?;
        let g = space.index_of(&[GROUND, n + 1])?;
        let v = C64::from(params.rabi_coupling * ((n + 1) as f64).sqrt());
        h[(e, g)] = v;
        h[(g, e)] = v;
    }
    Operator::hermitian(space.clone(), h)
}

pub fn jc_hamiltonian_on(params: &JCParams, space: &CompositeSpace) -> Result<Operator> {
    let h0 = free_hamiltonian_on(params, space)?;
    let v = interaction_on(params, space)?;
    Operator::hermitian(space.clone(), h0.matrix() + v.matrix())
}

pub fn jc_hamiltonian(params: &JCParams, fock_cutoff: usize) -> Result<Operator> {
    if fock_cutoff < 2 {
        return Err(Error::InvalidParameter(format!(
            "Fock cutoff must be at least 2, got {fock_cutoff}"
        )));
    }
    jc_hamiltonian_on(params, &node_space(ATOM, CAVITY, fock_cutoff)?)
}

/// Dressed states of manifold `n`:
/// `|V+⟩ = cos φ |e,n⟩ + sin φ |g,n+1⟩`, `|V−⟩ = −sin φ |e,n⟩ + cos φ |g,n+1⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct DressedPair {
    pub n: usize,
    pub phi: f64,
    pub plus: StateVector,
    pub minus: StateVector,
    pub e_plus: f64,
    pub e_minus: f64,
}

pub fn dressed_pair_in(params: &JCParams, n: usize, space: &CompositeSpace) -> Result<DressedPair> {
    let cutoff = node_dims(space, 2)?;
    if n + 1 > cutoff {
        return Err(Error::InvalidParameter(format!(
            "manifold {n} needs Fock cutoff ≥ {}, space has {cutoff}",
            n + 1
        )));
    }
    let phi = params.mixing_angle(n);
    let (c, s) = (phi.cos(), phi.sin());
    let e = space.index_of(&[EXCITED, n])?;
    let g = space.index_of(&[GROUND, n + 1])?;
    let mut plus = DVector::from_element(space.dim(), ZERO);
    let mut minus = plus.clone();
    plus[e] = C64::from(c);
    plus[g] = C64::from(s);
    minus[e] = C64::from(-s);
    minus[g] = C64::from(c);
    let (e_plus, e_minus) = params.dressed_energies(n);
    Ok(DressedPair {
        n,
        phi,
        plus: StateVector::new(space.clone(), plus)?,
        minus: StateVector::new(space.clone(), minus)?,
        e_plus,
        e_minus,
    })
}

/// Dressed pair on the smallest node space that holds manifold `n`.
pub fn dressed_pair(params: &JCParams, n: usize) -> Result<DressedPair> {
    dressed_pair_in(params, n, &node_space(ATOM, CAVITY, (n + 1).max(2))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DressedLabel {
    /// `|g,0⟩`
    Ground,
    Plus(usize),
    Minus(usize),
    /// `|e,N⟩` at the truncation edge, which has no partner state.
    Edge(usize),
}

impl std::fmt::Display for DressedLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DressedLabel::Ground => write!(f, "g0"),
            DressedLabel::Plus(n) => write!(f, "V+{n}"),
            DressedLabel::Minus(n) => write!(f, "V-{n}"),
            DressedLabel::Edge(n) => write!(f, "e{n}"),
        }
    }
}

/// Full eigenbasis of the truncated JC Hamiltonian, built from the closed
/// form. Column `k` of `transform` is eigenstate `labels[k]` in the bare basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DressedFrame {
    pub params: JCParams,
    pub space: CompositeSpace,
    pub labels: Vec<DressedLabel>,
    pub energies: Vec<f64>,
    pub transform: DMatrix<C64>,
}

impl DressedFrame {
    pub fn new(params: &JCParams, space: &CompositeSpace) -> Result<Self> {
        let cutoff = node_dims(space, 2)?;
        let dim = space.dim();
        let mut labels = Vec::with_capacity(dim);
        let mut energies = Vec::with_capacity(dim);
        let mut transform = DMatrix::from_element(dim, dim, ZERO);
        let mut col = 0;

        transform[(space.index_of(&[GROUND, 0])?, col)] = ONE;
        labels.push(DressedLabel::Ground);
        energies.push(params.ground_energy());
        col += 1;

        for n in 0..cutoff {
            let pair = dressed_pair_in(params, n, space)?;
            transform.set_column(col, pair.plus.amplitudes());
            transform.set_column(col + 1, pair.minus.amplitudes());
            labels.extend([DressedLabel::Plus(n), DressedLabel::Minus(n)]);
            energies.extend([pair.e_plus, pair.e_minus]);
            col += 2;
        }

        transform[(space.index_of(&[EXCITED, cutoff])?, col)] = ONE;
        labels.push(DressedLabel::Edge(cutoff));
        energies.push(params.bare_energy(EXCITED, cutoff));

        Ok(Self {
            params: *params,
            space: space.clone(),
            labels,
            energies,
            transform,
        })
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn index(&self, label: DressedLabel) -> Result<usize> {
        self.labels.iter().position(|&l| l == label).ok_or_else(|| {
            Error::InvalidParameter(format!("dressed state {label} not in the truncation"))
        })
    }

    pub fn energy(&self, label: DressedLabel) -> Result<f64> {
        Ok(self.energies[self.index(label)?])
    }

    /// Bare-basis operator expressed in the dressed basis: `T† M T`.
    pub fn to_dressed_operator(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        self.transform.adjoint() * m * &self.transform
    }

    pub fn to_dressed(&self, psi: &DVector<C64>) -> DVector<C64> {
        self.transform.adjoint() * psi
    }

    pub fn to_bare(&self, psi: &DVector<C64>) -> DVector<C64> {
        &self.transform * psi
    }
}

/// Exact resonant evolution in the frame rotating with the free part of the
/// Hamiltonian. Within manifold `n`, `|e,n⟩ → cos(Ω√(n+1)t)|e,n⟩ − i sin(Ω√(n+1)t)|g,n+1⟩`
/// and symmetrically for `|g,n+1⟩`; `|g,0⟩` and the truncation edge are stationary.
pub fn resonant_rabi_evolve(state: &StateVector, params: &JCParams, t: f64) -> Result<StateVector> {
    if params.detuning() != 0.0 {
        return Err(Error::ContractViolation(format!(
            "resonant evolution requires δ = 0, got δ = {}",
            params.detuning()
        )));
    }
    let space = state.space();
    let cutoff = node_dims(space, 2)?;
    let psi = state.amplitudes();
    let mut out = psi.clone();
    for n in 0..cutoff {
        let e = space.index_of(&[EXCITED, n])?;
        let g = space.index_of(&[GROUND, n + 1])?;
        let theta = params.rabi_coupling * ((n + 1) as f64).sqrt() * t;
        let (c, s) = (C64::from(theta.cos()), -I * theta.sin());
        out[e] = c * psi[e] + s * psi[g];
        out[g] = s * psi[e] + c * psi[g];
    }
    StateVector::normalized(space.clone(), out)
}

/// Maps a lab-frame state at time `t` into the frame rotating with the free
/// part of the Hamiltonian: `|ψ_I⟩ = exp(+i H0 t)|ψ⟩`.
pub fn to_rotating_frame(state: &StateVector, params: &JCParams, t: f64) -> Result<StateVector> {
    let h0 = free_hamiltonian_on(params, state.space())?;
    let mut out = state.amplitudes().clone();
    for k in 0..out.len() {
        out[k] *= (I * h0.matrix()[(k, k)].re * t).exp();
    }
    StateVector::normalized(state.space().clone(), out)
}

/// Excitation-number operator `a†a + |e⟩⟨e|`, diagonal.
pub fn excitation_number_on(space: &CompositeSpace) -> Result<Operator> {
    let cutoff = node_dims(space, 2).or_else(|_| node_dims(space, 3))?;
    let levels = space.factors()[0].dim();
    let mut m = DMatrix::from_element(space.dim(), space.dim(), ZERO);
    for a in 0..levels {
        for n in 0..=cutoff {
            let k = space.index_of(&[a, n])?;
            m[(k, k)] = C64::from((n + a) as f64);
        }
    }
    Operator::hermitian(space.clone(), m)
}

/// Three-level node `g < e < i`, cavity mode near the `e↔i` transition.
/// Both transitions couple to the same mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeLevelParams {
    pub omega_ge: f64,
    pub omega_ei: f64,
    pub omega: f64,
    pub coupling_ei: f64,
    pub coupling_ge: f64,
}

impl ThreeLevelParams {
    /// Cavity exactly resonant with `e↔i`, detuned by `ge_detuning` from `g↔e`;
    /// both couplings equal to `coupling`.
    pub fn resonant_ei(omega: f64, coupling: f64, ge_detuning: f64) -> Result<Self> {
        let p = Self {
            omega_ge: omega + ge_detuning,
            omega_ei: omega,
            omega,
            coupling_ei: coupling,
            coupling_ge: coupling,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.omega_ge,
            self.omega_ei,
            self.omega,
            self.coupling_ei,
            self.coupling_ge,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("frequencies must be finite".into()));
        }
        if self.coupling_ei <= 0.0 || self.coupling_ge < 0.0 {
            return Err(Error::InvalidParameter(
                "couplings must be non-negative, e↔i positive".into(),
            ));
        }
        Ok(())
    }

    pub fn ge_detuning(&self) -> f64 {
        self.omega_ge - self.omega
    }

    pub fn ei_detuning(&self) -> f64 {
        self.omega_ei - self.omega
    }

    pub fn level_energy(&self, level: usize) -> f64 {
        match level {
            GROUND => 0.0,
            EXCITED => self.omega_ge,
            _ => self.omega_ge + self.omega_ei,
        }
    }
}

pub fn three_level_space(atom: &str, cavity: &str, fock_cutoff: usize) -> Result<CompositeSpace> {
    CompositeSpace::new(vec![
        FactorLabel::atom(atom, 3)?,
        FactorLabel::cavity(cavity, fock_cutoff)?,
    ])
}

/// Diagonal free part of the three-level node.
pub fn three_level_free_on(p: &ThreeLevelParams, space: &CompositeSpace) -> Result<Operator> {
    let cutoff = node_dims(space, 3)?;
    let mut h = DMatrix::from_element(space.dim(), space.dim(), ZERO);
    for a in [GROUND, EXCITED, THIRD] {
        for n in 0..=cutoff {
            let k = space.index_of(&[a, n])?;
            h[(k, k)] = C64::from(p.level_energy(a) + p.omega * n as f64);
        }
    }
    Operator::hermitian(space.clone(), h)
}

/// Free part plus `Ω_ei(a†|e⟩⟨i| + h.c.) + Ω_ge(a†|g⟩⟨e| + h.c.)`.
/// `include_ei = false` drops the resonant coupling (spectator reference).
pub fn three_level_hamiltonian_on(
    p: &ThreeLevelParams,
    space: &CompositeSpace,
    include_ei: bool,
) -> Result<Operator> {
    let cutoff = node_dims(space, 3)?;
    let mut h = three_level_free_on(p, space)?.into_matrix();
    for n in 0..cutoff {
        let amp = ((n + 1) as f64).sqrt();
        let mut couple = |lo: usize, hi: usize, g: f64| -> Result<()> {
            let a = space.index_of(&[lo, n + 1])?;
            let b = space.index_of(&[hi, n])?;
            h[(a, b)] += C64::from(g * amp);
            h[(b, a)] += C64::from(g * amp);
            Ok(())
        };
        couple(GROUND, EXCITED, p.coupling_ge)?;
        if include_ei {
            couple(EXCITED, THIRD, p.coupling_ei)?;
        }
    }
    Operator::hermitian(space.clone(), h)
}
