//! Classical drives on a dressed atom: envelopes and pulse-area calibration,
//! drive Hamiltonians, dressed-basis coupling blocks and time-dependent
//! Schrödinger integration.

pub mod dop853;

use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::jcmodel::{DressedFrame, DressedLabel, JCParams};
use crate::qstate::{
    embed, CompositeSpace, FactorLabel, Operator, StateVector, EXCITED, GROUND, ONE, ZERO,
};
use crate::tolerance::TOLERANCES;
use crate::C64;

/// Gaussian envelopes are cut at `± GAUSSIAN_SUPPORT · τ` around their center.
pub const GAUSSIAN_SUPPORT: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnvelopeShape {
    Rectangular {
        start: f64,
        duration: f64,
    },
    /// `exp(−(t − center)²/τ²)` on `[center − support·τ, center + support·τ]`.
    Gaussian {
        center: f64,
        tau: f64,
        support: f64,
    },
}

impl EnvelopeShape {
    pub fn rectangular(start: f64, duration: f64) -> Self {
        Self::Rectangular { start, duration }
    }

    pub fn gaussian(center: f64, tau: f64) -> Self {
        Self::Gaussian {
            center,
            tau,
            support: GAUSSIAN_SUPPORT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Rectangular { start, duration } => {
                start.is_finite() && duration.is_finite() && duration > 0.0
            }
            Self::Gaussian {
                center,
                tau,
                support,
            } => {
                center.is_finite()
                    && tau.is_finite()
                    && tau > 0.0
                    && support.is_finite()
                    && support > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "envelope needs a positive finite width: {self:?}"
            )))
        }
    }

    /// Unit-peak value at `t`; zero outside the support.
    pub fn unit_value(&self, t: f64) -> f64 {
        let (a, b) = self.window();
        if t < a || t > b {
            return 0.0;
        }
        match *self {
            Self::Rectangular { .. } => 1.0,
            Self::Gaussian { center, tau, .. } => (-((t - center) / tau).powi(2)).exp(),
        }
    }

    pub fn window(&self) -> (f64, f64) {
        match *self {
            Self::Rectangular { start, duration } => (start, start + duration),
            Self::Gaussian {
                center,
                tau,
                support,
            } => (center - support * tau, center + support * tau),
        }
    }

    /// `∫ unit_value dt` over the support.
    pub fn unit_area(&self) -> f64 {
        match *self {
            Self::Rectangular { duration, .. } => duration,
            Self::Gaussian { tau, support, .. } => tau * PI.sqrt() * libm::erf(support),
        }
    }
}

/// One classical drive `p(t) cos(ω t + φ)` with `p(t) = amplitude · shape(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSpec {
    pub carrier: f64,
    pub shape: EnvelopeShape,
    pub amplitude: f64,
    pub phase: f64,
}

impl PulseSpec {
    pub fn new(carrier: f64, shape: EnvelopeShape, amplitude: f64, phase: f64) -> Result<Self> {
        shape.validate()?;
        if !(amplitude.is_finite() && amplitude >= 0.0)
            || !carrier.is_finite()
            || !phase.is_finite()
        {
            return Err(Error::InvalidParameter(format!(
                "pulse needs finite carrier/phase and amplitude ≥ 0 (amplitude = {amplitude})"
            )));
        }
        Ok(Self {
            carrier,
            shape,
            amplitude,
            phase,
        })
    }

    pub fn envelope(&self, t: f64) -> f64 {
        self.amplitude * self.shape.unit_value(t)
    }

    pub fn area(&self) -> f64 {
        self.amplitude * self.shape.unit_area()
    }

    pub fn window(&self) -> (f64, f64) {
        self.shape.window()
    }

    pub fn duration(&self) -> f64 {
        let (a, b) = self.window();
        b - a
    }
}

/// Chooses the amplitude so that `∫ p dt = target_area` over the support.
pub fn calibrate_pulse_area(
    shape: EnvelopeShape,
    carrier: f64,
    phase: f64,
    target_area: f64,
    max_amplitude: Option<f64>,
) -> Result<PulseSpec> {
    if !(target_area > 0.0 && target_area.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "target area must be positive, got {target_area}"
        )));
    }
    shape.validate()?;
    let amplitude = target_area / shape.unit_area();
    if let Some(max) = max_amplitude {
        if amplitude > max {
            return Err(Error::InvalidParameter(format!(
                "area {target_area} needs amplitude {amplitude:e}, above the bound {max:e}"
            )));
        }
    }
    PulseSpec::new(carrier, shape, amplitude, phase)
}

/// Sparse operator piece of a drive: it contributes
/// `p(t) · weight · e^{iνt} · M + h.c.` where `M` is given by its non-zero entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveTerm {
    pub entries: Vec<(usize, usize, C64)>,
    pub weight: C64,
    pub frequency: f64,
}

impl DriveTerm {
    pub fn from_matrix(m: &DMatrix<C64>, weight: C64, frequency: f64) -> Self {
        let mut entries = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if m[(i, j)] != ZERO {
                    entries.push((i, j, m[(i, j)]));
                }
            }
        }
        Self {
            entries,
            weight,
            frequency,
        }
    }
}

/// Time-dependent Hermitian drive `H(t) = coupling · Σ_k [c_k(t) M_k + h.c.]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveHamiltonian {
    space: CompositeSpace,
    pulse: PulseSpec,
    coupling: f64,
    terms: Vec<DriveTerm>,
    rwa: bool,
}

impl DriveHamiltonian {
    pub fn new(
        space: CompositeSpace,
        pulse: PulseSpec,
        coupling: f64,
        terms: Vec<DriveTerm>,
        rwa: bool,
    ) -> Result<Self> {
        let n = space.dim();
        if terms
            .iter()
            .flat_map(|t| &t.entries)
            .any(|&(i, j, _)| i >= n || j >= n)
        {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: n + 1,
            });
        }
        if !coupling.is_finite() {
            return Err(Error::InvalidParameter("coupling must be finite".into()));
        }
        Ok(Self {
            space,
            pulse,
            coupling,
            terms,
            rwa,
        })
    }

    pub fn space(&self) -> &CompositeSpace {
        &self.space
    }

    pub fn pulse(&self) -> &PulseSpec {
        &self.pulse
    }

    pub fn rwa(&self) -> bool {
        self.rwa
    }

    pub fn terms(&self) -> &[DriveTerm] {
        &self.terms
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    /// Dense `H(t)`, checked for Hermiticity.
    pub fn at(&self, t: f64) -> Result<Operator> {
        let n = self.space.dim();
        let mut m = DMatrix::from_element(n, n, ZERO);
        let p = self.coupling * self.pulse.envelope(t);
        for term in &self.terms {
            let c = term.weight * p * C64::from_polar(1.0, term.frequency * t);
            for &(i, j, v) in &term.entries {
                m[(i, j)] += c * v;
                m[(j, i)] += (c * v).conj();
            }
        }
        Operator::hermitian(self.space.clone(), m)
    }

    /// Adds `H(t)·Y` to `out`, where `Y` is row-major with `cols` columns.
    fn accumulate(&self, t: f64, y: &[C64], out: &mut [C64], cols: usize) {
        let p = self.coupling * self.pulse.envelope(t);
        if p == 0.0 {
            return;
        }
        for term in &self.terms {
            let c = term.weight * p * C64::from_polar(1.0, term.frequency * t);
            for &(i, j, v) in &term.entries {
                let cv = c * v;
                if i == j {
                    let d = cv + cv.conj();
                    for k in 0..cols {
                        out[i * cols + k] += d * y[i * cols + k];
                    }
                } else {
                    let cc = cv.conj();
                    for k in 0..cols {
                        out[i * cols + k] += cv * y[j * cols + k];
                        out[j * cols + k] += cc * y[i * cols + k];
                    }
                }
            }
        }
    }

    /// Same drive acting on `targets` inside a larger space.
    pub fn embed(&self, targets: &[&str], space: &CompositeSpace) -> Result<DriveHamiltonian> {
        let terms = self
            .terms
            .iter()
            .map(|term| {
                let n = self.space.dim();
                let mut m = DMatrix::from_element(n, n, ZERO);
                for &(i, j, v) in &term.entries {
                    m[(i, j)] += v;
                }
                let local = Operator::general(self.space.clone(), m)?;
                let full = embed(&local, targets, space)?;
                Ok(DriveTerm::from_matrix(
                    full.matrix(),
                    term.weight,
                    term.frequency,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        DriveHamiltonian::new(space.clone(), self.pulse, self.coupling, terms, self.rwa)
    }
}

fn sigma_plus(atom_dim: usize) -> DMatrix<C64> {
    let mut m = DMatrix::from_element(atom_dim, atom_dim, ZERO);
    m[(EXCITED, GROUND)] = ONE;
    m
}

/// `H_S(t) = coupling · p(t) cos(ω t + φ) (σ+ + σ−)` on a bare atom; any third
/// level is untouched. With `rwa` only the co-rotating half is kept.
pub fn bare_drive(
    pulse: &PulseSpec,
    atom: &str,
    atom_dim: usize,
    coupling: f64,
    rwa: bool,
) -> Result<DriveHamiltonian> {
    if !(coupling > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "coupling must be positive, got {coupling}"
        )));
    }
    let space = CompositeSpace::single(FactorLabel::atom(atom, atom_dim)?);
    let sp = sigma_plus(atom_dim);
    let half = 0.5 * C64::from_polar(1.0, -pulse.phase);
    // σ+ e^{−i(ωt+φ)} is the co-rotating part; its partner σ+ e^{+i(ωt+φ)} is dropped under RWA.
    let mut terms = vec![DriveTerm::from_matrix(&sp, half, -pulse.carrier)];
    if !rwa {
        terms.push(DriveTerm::from_matrix(&sp, half.conj(), pulse.carrier));
    }
    DriveHamiltonian::new(space, *pulse, coupling, terms, rwa)
}

/// Full (non-RWA) bare drive on an atom labeled `"atom"`.
pub fn drive_hamiltonian_bare(
    pulse: &PulseSpec,
    atom_dim: usize,
    coupling: f64,
) -> Result<DriveHamiltonian> {
    bare_drive(pulse, crate::jcmodel::ATOM, atom_dim, coupling, false)
}

/// Gaussian laser drive of the two-photon transition:
/// `Σ0 e^{−t²/τ²} (e^{iω_L t}|g⟩⟨e| + h.c.)` under RWA, or
/// `2Σ0 e^{−t²/τ²} cos(ω_L t)(σ+ + σ−)` without it.
pub fn laser_drive(
    sigma0: f64,
    tau: f64,
    omega_l: f64,
    atom_dim: usize,
    rwa: bool,
) -> Result<DriveHamiltonian> {
    let pulse = PulseSpec::new(omega_l, EnvelopeShape::gaussian(0.0, tau), 1.0, 0.0)?;
    let space = CompositeSpace::single(FactorLabel::atom(crate::jcmodel::ATOM, atom_dim)?);
    let sp = sigma_plus(atom_dim);
    let mut terms = vec![DriveTerm::from_matrix(&sp, ONE, -omega_l)];
    if !rwa {
        terms.push(DriveTerm::from_matrix(&sp, ONE, omega_l));
    }
    if sigma0 < 0.0 || !sigma0.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "Σ0 must be ≥ 0, got {sigma0}"
        )));
    }
    DriveHamiltonian::new(space, pulse, sigma0, terms, rwa)
}

/// Matrix of `σ+ + σ−` between the dressed states of `frame`. Entries
/// vanish except between adjacent manifolds.
pub fn dressed_drive_matrix(frame: &DressedFrame) -> Result<DMatrix<C64>> {
    let atom = frame.space.factors()[0].clone();
    let x = Operator::hermitian(
        CompositeSpace::single(atom.clone()),
        sigma_plus(atom.dim()) + sigma_plus(atom.dim()).adjoint(),
    )?;
    let full = embed(&x, &[atom.name()], &frame.space)?;
    Ok(frame.to_dressed_operator(full.matrix()))
}

/// Drive matrix on `{V+^{n−1}, V−^{n−1}, V+^n, V−^n}` from the mixing angles.
pub fn dressed_block_4x4(params: &JCParams, n: usize) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "manifold 0 has no lower partner; use dressed_block_3x3".into(),
        ));
    }
    let (a, b) = (params.mixing_angle(n - 1), params.mixing_angle(n));
    let (ca, sa, cb, sb) = (a.cos(), a.sin(), b.cos(), b.sin());
    let upper = [[cb * sa, -sb * sa], [cb * ca, -sb * ca]];
    let mut m = DMatrix::zeros(4, 4);
    for i in 0..2 {
        for j in 0..2 {
            m[(i, j + 2)] = upper[i][j];
            m[(j + 2, i)] = upper[i][j];
        }
    }
    Ok(m)
}

/// Drive matrix on `{|g,0⟩, V−^0, V+^0}`.
pub fn dressed_block_3x3(params: &JCParams) -> DMatrix<f64> {
    let p = params.mixing_angle(0);
    let (c, s) = (p.cos(), p.sin());
    DMatrix::from_row_slice(3, 3, &[0.0, -s, c, -s, 0.0, 0.0, c, 0.0, 0.0])
}

/// Single-factor space used for amplitudes expressed in a dressed basis.
pub fn dressed_space(frame: &DressedFrame) -> Result<CompositeSpace> {
    Ok(CompositeSpace::single(FactorLabel::new(
        "dressed",
        frame.dim(),
    )?))
}

/// The bare drive `p(t) cos(ωt + φ)(σ+ + σ−)` written in the interaction
/// picture of the Jaynes-Cummings Hamiltonian, on the dressed basis of
/// `frame`. Each transition `j → i` (with `E_i > E_j`) carries its Bohr
/// frequency; under RWA only the `e^{−i(ωt+φ)}` half of every transition is kept.
pub fn dressed_interaction_drive(
    frame: &DressedFrame,
    pulse: &PulseSpec,
    coupling: f64,
    rwa: bool,
) -> Result<DriveHamiltonian> {
    let x = dressed_drive_matrix(frame)?;
    let n = frame.dim();
    let mut terms = Vec::new();
    let half = 0.5 * C64::from_polar(1.0, -pulse.phase);
    for i in 0..n {
        for j in 0..n {
            let v = x[(i, j)];
            if v == ZERO
                || frame.energies[i] < frame.energies[j]
                || (frame.energies[i] == frame.energies[j] && i <= j)
            {
                continue;
            }
            let bohr = frame.energies[i] - frame.energies[j];
            let entries = vec![(i, j, v)];
            terms.push(DriveTerm {
                entries: entries.clone(),
                weight: half,
                frequency: bohr - pulse.carrier,
            });
            if !rwa {
                terms.push(DriveTerm {
                    entries,
                    weight: half.conj(),
                    frequency: bohr + pulse.carrier,
                });
            }
        }
    }
    DriveHamiltonian::new(dressed_space(frame)?, *pulse, coupling, terms, rwa)
}

/// Integration outcome with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub state: StateVector,
    pub stats: dop853::Stats,
    pub norm_drift: f64,
}

/// Propagator with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    pub matrix: DMatrix<C64>,
    pub stats: dop853::Stats,
    pub unitarity_deviation: f64,
}

fn check_interval(t0: f64, t1: f64, tol: f64) -> Result<()> {
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "need t1 > t0, got [{t0}, {t1}]"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    Ok(())
}

fn check_drives(static_h: &Operator, drives: &[DriveHamiltonian]) -> Result<()> {
    for d in drives {
        if d.space != *static_h.space() {
            return Err(Error::DimensionMismatch {
                expected: static_h.space().dim(),
                found: d.space.dim(),
            });
        }
    }
    Ok(())
}

/// Integrates `i dY/dt = (H + Σ drives(t)) Y` for a row-major `n × cols` block.
fn integrate_block(
    static_h: &Operator,
    drives: &[DriveHamiltonian],
    y: &mut [C64],
    cols: usize,
    t0: f64,
    t1: f64,
    tol: f64,
) -> Result<dop853::Stats> {
    let h = static_h.matrix();
    let n = h.nrows();
    // Static part stored row-major, skipping zeros.
    let mut rows: Vec<Vec<(usize, C64)>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if h[(i, j)] != ZERO {
                rows[i].push((j, h[(i, j)]));
            }
        }
    }
    let minus_i = C64::new(0.0, -1.0);
    let rhs = |t: f64, y: &[C64], dy: &mut [C64]| {
        dy.iter_mut().for_each(|v| *v = ZERO);
        for (i, row) in rows.iter().enumerate() {
            for &(j, v) in row {
                for k in 0..cols {
                    dy[i * cols + k] += v * y[j * cols + k];
                }
            }
        }
        for d in drives {
            d.accumulate(t, y, dy, cols);
        }
        dy.iter_mut().for_each(|v| *v *= minus_i);
    };
    dop853::integrate(rhs, t0, t1, y, &dop853::Settings::with_tol(tol))
}

/// Evolves `state` from `t0` to `t1` under the static Hamiltonian plus drives.
pub fn evolve_tdse_report(
    state: &StateVector,
    static_h: &Operator,
    drives: &[DriveHamiltonian],
    t0: f64,
    t1: f64,
    tol: f64,
) -> Result<Evolution> {
    check_interval(t0, t1, tol)?;
    if state.space() != static_h.space() {
        return Err(Error::DimensionMismatch {
            expected: static_h.space().dim(),
            found: state.space().dim(),
        });
    }
    check_drives(static_h, drives)?;
    let mut y: Vec<C64> = state.amplitudes().iter().copied().collect();
    let stats = integrate_block(static_h, drives, &mut y, 1, t0, t1, tol)?;
    let amps = DVector::from_vec(y);
    let norm_drift = (amps.norm() - 1.0).abs();
    let state = StateVector::new(state.space().clone(), amps)?;
    Ok(Evolution {
        state,
        stats,
        norm_drift,
    })
}

pub fn evolve_tdse(
    state: &StateVector,
    static_h: &Operator,
    drives: &[DriveHamiltonian],
    t0: f64,
    t1: f64,
    tol: f64,
) -> Result<StateVector> {
    Ok(evolve_tdse_report(state, static_h, drives, t0, t1, tol)?.state)
}

/// Full propagator `U(t1, t0)`, obtained by evolving every basis vector at once.
pub fn propagate(
    static_h: &Operator,
    drives: &[DriveHamiltonian],
    t0: f64,
    t1: f64,
    tol: f64,
) -> Result<Propagation> {
    check_interval(t0, t1, tol)?;
    check_drives(static_h, drives)?;
    let n = static_h.space().dim();
    let mut y = vec![ZERO; n * n];
    for i in 0..n {
        y[i * n + i] = ONE;
    }
    let stats = integrate_block(static_h, drives, &mut y, n, t0, t1, tol)?;
    let matrix = DMatrix::from_row_slice(n, n, &y);
    let unitarity_deviation = crate::qstate::unitarity_deviation(&matrix);
    if unitarity_deviation > 1e3 * TOLERANCES.norm {
        log::warn!("propagator deviates from unitarity by {unitarity_deviation:e}");
    }
    Ok(Propagation {
        matrix,
        stats,
        unitarity_deviation,
    })
}

/// Resonant frequency of the dressed transition `from → to`.
pub fn transition_frequency(
    frame: &DressedFrame,
    from: DressedLabel,
    to: DressedLabel,
) -> Result<f64> {
    Ok(frame.energy(to)? - frame.energy(from)?)
}
