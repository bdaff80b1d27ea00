//! One function per subcommand. Each returns the text it would write; the
//! caller decides where it goes.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt::Write as _;
use std::str::FromStr;

use cqed_nonlocal::gates::{fidelity_closed_form, simulated_cnot_fidelity, PulseConfig};
use cqed_nonlocal::jcmodel::{jc_hamiltonian_on, node_space, resonant_rabi_evolve, JCParams, ATOM, CAVITY};
use cqed_nonlocal::perturb::{
    calibrate_convention, exact_two_photon, two_photon_probability, Direction, FrequencyConvention, TwoPhotonParams,
    CALIBRATION_TARGET,
};
use cqed_nonlocal::protocol::{
    ebit_noise_study, ideal_config, random_product_inputs, BranchMode, Inputs, Level, NonlocalGate, PhotonGunModel,
    ProtocolConfig, ProtocolEngine, ProtocolTrace,
};
use cqed_nonlocal::pulses::evolve_tdse;
use cqed_nonlocal::qstate::{StateVector, EXCITED};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::*;
use crate::format::{complex, num};
use crate::CliError;

pub const DRESSED_HEADER: &str = "n,phi_n,E_plus,E_minus,bare_overlap";
pub const RABI_HEADER: &str = "t,P_e_closed_form,P_e_tdse,abs_diff";
pub const SWEEP_HEADER: &str = "x,F_formula,F_simulated,abs_diff";
pub const TWO_PHOTON_HEADER: &str = "convention,perturbative,exact,abs_diff,distance_to_target,chosen";
pub const PROTOCOL_HEADER: &str = "run,branch,probability,fidelity_vs_ideal";
pub const EBIT_HEADER: &str =
    "p_empty,p_single,p_double,runs,discarded,empty,single,double,mean_fidelity,mean_fidelity_heralded";

/// Exit code `protocol` returns when an ideal-level branch misses the target.
pub const IDEAL_FIDELITY_FLOOR: f64 = 1.0 - 1e-9;

/// What a subcommand produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub csv: String,
    pub trace: Option<String>,
    pub exit_code: i32,
}

impl Report {
    fn csv(csv: String) -> Self {
        Self { csv, trace: None, exit_code: 0 }
    }
}

pub fn run(r: &Resolved) -> Result<Report, CliError> {
    let g = &r.global;
    if let Some(t) = g.tolerance {
        if !(t > 0.0 && t < 1e-2) {
            return Err(CliError::Validation(format!("tolerance must lie in (0, 0.01), got {t}")));
        }
    }
    if let Some(n) = g.fock_cutoff {
        if n < 3 {
            return Err(CliError::Validation(format!("--fock-cutoff must be at least 3, got {n}")));
        }
    }
    match &r.command {
        Command::Dressed(a) => dressed(a).map(Report::csv),
        Command::Rabi(a) => rabi(a, g).map(Report::csv),
        Command::FidelitySweep(a) => fidelity_sweep(a, g).map(Report::csv),
        Command::TwoPhoton(a) => two_photon(a, g).map(Report::csv),
        Command::Protocol(a) => protocol(a, g),
        Command::EbitNoise(a) => ebit_noise(a, g).map(Report::csv),
    }
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Validation(format!("{name} must be positive, got {v}")))
    }
}

pub fn dressed(a: &DressedArgs) -> Result<String, CliError> {
    let omega = a.omega.unwrap_or(10.0);
    let coupling = positive("coupling", a.coupling.unwrap_or(1.0))?;
    let detuning = a.detuning.unwrap_or(10.0);
    let params = JCParams::new(omega + detuning, omega, coupling)?;
    let mut out = format!("{DRESSED_HEADER}\n");
    for n in 0..=a.n_max.unwrap_or(5) {
        let phi = params.mixing_angle(n);
        let (ep, em) = params.dressed_energies(n);
        // |⟨e,n|V+^n⟩|²
        let overlap = phi.cos().powi(2);
        writeln!(out, "{n},{},{},{},{}", num(phi), num(ep), num(em), num(overlap)).unwrap();
    }
    Ok(out)
}

pub fn rabi(a: &RabiArgs, g: &GlobalArgs) -> Result<String, CliError> {
    let omega = positive("omega", a.omega.unwrap_or(10.0))?;
    let coupling = positive("coupling", a.coupling.unwrap_or(1.0))?;
    let n = a.photons.unwrap_or(0);
    let steps = a.steps.unwrap_or(50).max(1);
    let t_max = positive("t_max", a.t_max.unwrap_or(2.0 * PI / (coupling * ((n + 1) as f64).sqrt())))?;
    let tol = g.tolerance.unwrap_or(1e-12);
    let params = JCParams::resonant(omega, coupling)?;
    let space = node_space(ATOM, CAVITY, g.fock_cutoff.unwrap_or(3).max(n + 2))?;
    let h = jc_hamiltonian_on(&params, &space)?;
    let start = StateVector::basis(space.clone(), &[EXCITED, n])?;
    let k = space.index_of(&[EXCITED, n])?;

    let mut out = format!("{RABI_HEADER}\n");
    let mut psi = start.clone();
    let mut t_prev = 0.0;
    for step in 0..=steps {
        let t = t_max * step as f64 / steps as f64;
        if t > t_prev {
            psi = evolve_tdse(&psi, &h, &[], t_prev, t, tol)?;
            t_prev = t;
        }
        let exact = resonant_rabi_evolve(&start, &params, t)?.amplitudes()[k].norm_sqr();
        let sim = psi.amplitudes()[k].norm_sqr();
        writeln!(out, "{},{},{},{}", num(t), num(exact), num(sim), num((exact - sim).abs())).unwrap();
    }
    Ok(out)
}

pub fn fidelity_sweep(a: &SweepArgs, g: &GlobalArgs) -> Result<String, CliError> {
    let mode = a.mode.unwrap_or(SweepMode::Both);
    let x_min = a.x_min.unwrap_or(0.01);
    let x_max = a.x_max.unwrap_or(0.1);
    let steps = a.steps.unwrap_or(10);
    if steps < 2 || !(x_max > x_min) || x_min < 0.0 {
        return Err(CliError::Validation(format!(
            "need 0 ≤ x_min < x_max and at least 2 points, got [{x_min}, {x_max}] with {steps}"
        )));
    }
    let simulate = mode != SweepMode::Formula;
    if simulate && x_min <= 0.0 {
        return Err(CliError::Validation("simulated sweeps need x_min > 0".into()));
    }
    if simulate && x_max > 0.3 {
        return Err(CliError::Validation(format!("simulated sweeps need x_max ≤ 0.3, got {x_max}")));
    }
    let cfg = PulseConfig { tol: g.tolerance.unwrap_or(1e-10), ..PulseConfig::default() };
    let cutoff = g.fock_cutoff.unwrap_or(3);
    let xs: Vec<f64> = (0..steps).map(|k| x_min + (x_max - x_min) * k as f64 / (steps - 1) as f64).collect();
    let rows: Vec<(f64, f64, Option<f64>)> = xs
        .par_iter()
        .map(|&x| {
            let sim = if simulate { Some(simulated_cnot_fidelity(x, &cfg, cutoff)?) } else { None };
            Ok((x, fidelity_closed_form(x), sim))
        })
        .collect::<Result<_, CliError>>()?;

    let mut out = format!("{SWEEP_HEADER}\n");
    let mut worst: f64 = 0.0;
    for (x, f, sim) in &rows {
        match (mode, sim) {
            (SweepMode::Formula, _) | (_, None) => writeln!(out, "{},{},,", num(*x), num(*f)).unwrap(),
            (SweepMode::Simulated, Some(s)) => writeln!(out, "{},,{},", num(*x), num(*s)).unwrap(),
            (SweepMode::Both, Some(s)) => {
                let d = (f - s).abs();
                if (0.01 - 1e-12..=0.1 + 1e-12).contains(x) {
                    worst = worst.max(d);
                }
                writeln!(out, "{},{},{},{}", num(*x), num(*f), num(*s), num(d)).unwrap();
            }
        }
    }
    if mode == SweepMode::Both {
        writeln!(out, "max_abs_diff,,,{}", num(worst)).unwrap();
    }
    Ok(out)
}

pub fn two_photon(a: &TwoPhotonArgs, g: &GlobalArgs) -> Result<String, CliError> {
    let reference = TwoPhotonParams::reference(FrequencyConvention::Angular);
    let tau = a.tau.unwrap_or(reference.tau);
    let nominal = TwoPhotonParams::new(
        a.coupling.unwrap_or(reference.rabi_coupling),
        a.delta.unwrap_or(reference.delta),
        tau,
        a.sigma0.unwrap_or(reference.sigma0),
        a.t_final.unwrap_or(3.0 * tau),
    )?;
    let tol = g.tolerance.unwrap_or(1e-12);
    let (conventions, chosen) = match a.convention.unwrap_or(ConventionArg::Auto) {
        ConventionArg::Auto => {
            let report = calibrate_convention(&nominal)?;
            (vec![FrequencyConvention::Angular, FrequencyConvention::Cyclic], report.chosen)
        }
        ConventionArg::Angular => (vec![FrequencyConvention::Angular], FrequencyConvention::Angular),
        ConventionArg::Cyclic => (vec![FrequencyConvention::Cyclic], FrequencyConvention::Cyclic),
    };
    let mut out = format!("{TWO_PHOTON_HEADER}\n");
    for c in conventions {
        let p = nominal.in_convention(c);
        let pert = two_photon_probability(&p)?;
        let exact = exact_two_photon(&p, Direction::Up, tol)?.probability;
        writeln!(
            out,
            "{},{},{},{},{},{}",
            c.name(),
            num(pert),
            num(exact),
            num((pert - exact).abs()),
            num((pert - CALIBRATION_TARGET).abs()),
            c == chosen
        )
        .unwrap();
    }
    Ok(out)
}

fn parse_amp(name: &str, s: &Option<String>, default: f64) -> Result<Complex64, CliError> {
    match s {
        None => Ok(Complex64::from(default)),
        Some(t) => Complex64::from_str(t.trim())
            .map_err(|_| CliError::Validation(format!("cannot parse amplitude {name} = `{t}`"))),
    }
}

fn product_inputs(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Result<Inputs, CliError> {
    Inputs::product(a, b, c, d).map_err(|e| CliError::Validation(format!("inputs must satisfy |a|²+|b|² = |c|²+|d|² = 1: {e}")))
}

fn gate_of(g: Option<GateArg>) -> NonlocalGate {
    match g.unwrap_or(GateArg::Cnot) {
        GateArg::Cnot => NonlocalGate::Cnot,
        GateArg::Cqpg => NonlocalGate::Cqpg,
    }
}

fn protocol_config(level: Level, g: &GlobalArgs) -> Result<ProtocolConfig, CliError> {
    let mut cfg = match level {
        Level::Ideal => ideal_config(),
        Level::Physical => ProtocolConfig::calibrated()?,
    };
    if let Some(n) = g.fock_cutoff {
        cfg = ProtocolConfig { fock_cutoff: n, ..cfg };
    }
    if let Some(t) = g.tolerance {
        cfg.alice.tol = t;
        cfg.bob.tol = t;
    }
    Ok(cfg)
}

pub fn protocol(a: &ProtocolArgs, g: &GlobalArgs) -> Result<Report, CliError> {
    let gate = gate_of(a.gate);
    let level = match a.level.unwrap_or(LevelArg::Ideal) {
        LevelArg::Ideal => Level::Ideal,
        LevelArg::Physical => Level::Physical,
    };
    let seed = g.seed.unwrap_or(0);
    let inputs: Vec<Inputs> = match a.random {
        Some(n) => {
            if [&a.a, &a.b, &a.c, &a.d].iter().any(|x| x.is_some()) {
                return Err(CliError::Validation("give either amplitudes or --random, not both".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| random_product_inputs(&mut rng)).collect()
        }
        None => vec![product_inputs(
            parse_amp("a", &a.a, 1.0)?,
            parse_amp("b", &a.b, 0.0)?,
            parse_amp("c", &a.c, 0.0)?,
            parse_amp("d", &a.d, 1.0)?,
        )?],
    };
    let cfg = protocol_config(level, g)?;
    let engine = ProtocolEngine::new(gate, level, &cfg)?;
    let sample = a.sample.unwrap_or(false);
    let traces: Vec<ProtocolTrace> = inputs
        .par_iter()
        .enumerate()
        .map(|(i, inp)| {
            let mode = if sample { BranchMode::Sample(seed.wrapping_add(i as u64)) } else { BranchMode::Enumerate };
            engine.run(inp, mode)
        })
        .collect::<Result<_, _>>()?;

    let mut csv = format!("{PROTOCOL_HEADER}\n");
    let mut trace = String::new();
    writeln!(trace, "# protocol trace v1").unwrap();
    writeln!(
        trace,
        "# gate={} level={} mode={} seed={seed} runs={}",
        gate.name(),
        level.name(),
        if sample { "sample" } else { "enumerate" },
        traces.len()
    )
    .unwrap();
    let mut all_ok = true;
    let mut mean = 0.0;
    for (i, t) in traces.iter().enumerate() {
        write_trace(&mut trace, i, t);
        for b in &t.branches {
            writeln!(csv, "{i},{}{},{},{}", b.alpha, b.beta, num(b.probability), num(b.fidelity_vs_ideal)).unwrap();
            if b.probability > 0.0 && b.fidelity_vs_ideal < IDEAL_FIDELITY_FLOOR {
                all_ok = false;
            }
        }
        mean += t.average_fidelity();
    }
    mean /= traces.len().max(1) as f64;
    let total: f64 = traces.iter().map(|t| t.total_probability()).sum::<f64>() / traces.len().max(1) as f64;
    writeln!(csv, "all,average,{},{}", num(total), num(mean)).unwrap();
    let exit_code = if level == Level::Ideal && !all_ok { 2 } else { 0 };
    Ok(Report { csv, trace: Some(trace), exit_code })
}

/// One line per operation or message: `run`, `branch`, step tag, node,
/// operation name, support, parameters and outcome.
fn write_trace(out: &mut String, run: usize, t: &ProtocolTrace) {
    match t.inputs {
        Some([a, b, c, d]) => writeln!(
            out,
            "# run={run} inputs a={} b={} c={} d={} encoding={}",
            complex(a),
            complex(b),
            complex(c),
            complex(d),
            t.encoding.replace(' ', "")
        )
        .unwrap(),
        None => writeln!(out, "# run={run} inputs=joint encoding={}", t.encoding.replace(' ', "")).unwrap(),
    }
    for b in &t.branches {
        let branch = format!("{}{}", b.alpha, b.beta);
        writeln!(
            out,
            "# run={run} branch={branch} probability={} fidelity={} bits={}",
            num(b.probability),
            num(b.fidelity_vs_ideal),
            b.channel.messages.iter().map(|m| format!("{}:{}", m.sender, m.bit)).collect::<Vec<_>>().join(",")
        )
        .unwrap();
        for op in &b.operations {
            let params = if op.params.is_empty() {
                "-".to_string()
            } else {
                op.params.iter().map(|(k, v)| format!("{k}={}", num(*v))).collect::<Vec<_>>().join(";")
            };
            let support = if op.support.is_empty() { "-".to_string() } else { op.support.join(";") };
            writeln!(
                out,
                "run={run} branch={branch} step={} node={} op={} support={support} params={params} outcome={}",
                op.step,
                op.node,
                op.name,
                op.outcome.as_deref().unwrap_or("-")
            )
            .unwrap();
        }
    }
}

fn parse_list(name: &str, s: &Option<String>, default: &[f64]) -> Result<Vec<f64>, CliError> {
    match s {
        None => Ok(default.to_vec()),
        Some(t) => t
            .split(',')
            .map(|x| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::Validation(format!("cannot parse {name} entry `{x}`")))
            })
            .collect(),
    }
}

pub fn ebit_noise(a: &EbitNoiseArgs, g: &GlobalArgs) -> Result<String, CliError> {
    let gate = gate_of(a.gate);
    let empties = parse_list("p_empty", &a.p_empty, &[0.0, 0.1, 0.2, 0.3, 0.4, 0.5])?;
    let doubles = parse_list("p_double", &a.p_double, &[0.0])?;
    let runs = a.runs.unwrap_or(10_000);
    if runs == 0 {
        return Err(CliError::Validation("runs must be positive".into()));
    }
    let h = FRAC_1_SQRT_2;
    let inputs = product_inputs(
        parse_amp("a", &a.a, h)?,
        parse_amp("b", &a.b, h)?,
        parse_amp("c", &a.c, 1.0)?,
        parse_amp("d", &a.d, 0.0)?,
    )?;
    let mut models = Vec::new();
    for &pe in &empties {
        for &pd in &doubles {
            let ps = a.p_single.unwrap_or(1.0 - pe - pd).max(0.0);
            models.push(PhotonGunModel::new(pe, ps, pd).map_err(|e| CliError::Validation(e.to_string()))?);
        }
    }
    let mut cfg = ideal_config();
    if let Some(n) = g.fock_cutoff {
        cfg.fock_cutoff = n;
    }
    let seed = g.seed.unwrap_or(0);
    let rows = models
        .par_iter()
        .map(|m| Ok((*m, ebit_noise_study(gate, m, &inputs, &cfg, runs, seed)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut out = format!("{EBIT_HEADER}\n");
    for (m, s) in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            num(m.p_empty),
            num(m.p_single),
            num(m.p_double),
            s.runs,
            s.discarded,
            s.empty,
            s.single,
            s.double,
            num(s.mean_fidelity),
            num(s.mean_fidelity_heralded)
        )
        .unwrap();
    }
    Ok(out)
}
