//! Dormand-Prince 8(5,3) explicit Runge-Kutta with Hairer's step-size
//! control, specialised to complex-valued systems `dy/dt = f(t, y)`.
//!
//! No renormalisation is applied to the solution, so the norm drift of a
//! unitary evolution measures the integration error.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

const C: [f64; 12] = [
    0.0,
    0.526001519587677318785587544488e-1,
    0.789002279381515978178381316732e-1,
    0.118350341907227396726757197510,
    0.281649658092772603273242802490,
    0.333333333333333333333333333333,
    0.25,
    0.307692307692307692307692307692,
    0.651282051282051282051282051282,
    0.6,
    0.857142857142857142857142857142,
    1.0,
];

const A: [&[f64]; 12] = [
    &[],
    &[5.26001519587677318785587544488e-2],
    &[
        1.97250569845378994544595329183e-2,
        5.91751709536136983633785987549e-2,
    ],
    &[
        2.95875854768068491816892993775e-2,
        0.0,
        8.87627564304205475450678981324e-2,
    ],
    &[
        2.41365134159266685502369798665e-1,
        0.0,
        -8.84549479328286085344864962717e-1,
        9.24834003261792003115737966543e-1,
    ],
    &[
        3.7037037037037037037037037037e-2,
        0.0,
        0.0,
        1.70828608729473871279604482173e-1,
        1.25467687566822425016691814123e-1,
    ],
    &[
        3.7109375e-2,
        0.0,
        0.0,
        1.70252211019544039314978060272e-1,
        6.02165389804559606850219397283e-2,
        -1.7578125e-2,
    ],
    &[
        3.70920001185047927108779319836e-2,
        0.0,
        0.0,
        1.70383925712239993810214054705e-1,
        1.07262030446373284651809199168e-1,
        -1.53194377486244017527936158236e-2,
        8.27378916381402288758473766002e-3,
    ],
    &[
        6.24110958716075717114429577812e-1,
        0.0,
        0.0,
        -3.36089262944694129406857109825,
        -8.68219346841726006818189891453e-1,
        2.75920996994467083049415600797e1,
        2.01540675504778934086186788979e1,
        -4.34898841810699588477366255144e1,
    ],
    &[
        4.77662536438264365890433908527e-1,
        0.0,
        0.0,
        -2.48811461997166764192642586468,
        -5.90290826836842996371446475743e-1,
        2.12300514481811942347288949897e1,
        1.52792336328824235832596922938e1,
        -3.32882109689848629194453265587e1,
        -2.03312017085086261358222928593e-2,
    ],
    &[
        -9.3714243008598732571704021658e-1,
        0.0,
        0.0,
        5.18637242884406370830023853209,
        1.09143734899672957818500254654,
        -8.14978701074692612513997267357,
        -1.85200656599969598641566180701e1,
        2.27394870993505042818970056734e1,
        2.49360555267965238987089396762,
        -3.0467644718982195003823669022,
    ],
    &[
        2.27331014751653820792359768449,
        0.0,
        0.0,
        -1.05344954667372501984066689879e1,
        -2.00087205822486249909675718444,
        -1.79589318631187989172765950534e1,
        2.79488845294199600508499808837e1,
        -2.85899827713502369474065508674,
        -8.87285693353062954433549289258,
        1.23605671757943030647266201528e1,
        6.43392746015763530355970484046e-1,
    ],
];

const B: [f64; 12] = [
    5.42937341165687622380535766363e-2,
    0.0,
    0.0,
    0.0,
    0.0,
    4.45031289275240888144113950566,
    1.89151789931450038304281599044,
    -5.8012039600105847814672114227,
    3.1116436695781989440891606237e-1,
    -1.52160949662516078556178806805e-1,
    2.01365400804030348374776537501e-1,
    4.47106157277725905176885569043e-2,
];

/// Weights of the embedded third-order estimate on stages 1, 9 and 12.
const BHH: [f64; 3] = [
    0.244094488188976377952755905512,
    0.733846688281611857341361741547,
    0.220588235294117647058823529412e-1,
];

/// Fifth-order error coefficients.
const E: [f64; 12] = [
    0.1312004499419488073250102996e-1,
    0.0,
    0.0,
    0.0,
    0.0,
    -0.1225156446376204440720569753e1,
    -0.4957589496572501915214079952,
    0.1664377182454986536961530415e1,
    -0.3503288487499736816886487290,
    0.3341791187130174790297318841,
    0.8192320648511571246570742613e-1,
    -0.2235530786388629525884427845e-1,
];

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.333;
const FAC_MAX: f64 = 6.0;
const MAX_STEPS: usize = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step size; `None` means the whole interval.
    pub h_max: Option<f64>,
    pub h_init: Option<f64>,
}

impl Settings {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            h_max: None,
            h_init: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

fn axpy_into(out: &mut [C64], y: &[C64], h: f64, ks: &[Vec<C64>], coef: &[f64]) {
    out.copy_from_slice(y);
    for (k, &a) in ks.iter().zip(coef) {
        if a != 0.0 {
            let s = h * a;
            for (o, kv) in out.iter_mut().zip(k) {
                *o += kv * s;
            }
        }
    }
}

fn initial_step<F>(
    f: &mut F,
    t0: f64,
    y: &[C64],
    f0: &[C64],
    dir: f64,
    s: &Settings,
    h_max: f64,
) -> f64
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    let n = y.len() as f64;
    let sc = |yi: C64| s.atol + s.rtol * yi.norm();
    let d0 = (y.iter().map(|&v| (v.norm() / sc(v)).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (y
        .iter()
        .zip(f0)
        .map(|(&v, fv)| (fv.norm() / sc(v)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let mut h0 = if d0 < 1e-10 || d1 < 1e-10 {
        1e-6 * h_max
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(h_max);
    let y1: Vec<C64> = y
        .iter()
        .zip(f0)
        .map(|(&v, &fv)| v + fv * (dir * h0))
        .collect();
    let mut f1 = vec![C64::default(); y.len()];
    f(t0 + dir * h0, &y1, &mut f1);
    let d2 = (y
        .iter()
        .zip(f0.iter().zip(&f1))
        .map(|(&v, (a, b))| ((b - a).norm() / sc(v)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6 * h_max)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 8.0)
    };
    (100.0 * h0).min(h1).min(h_max)
}

/// Integrates `dy/dt = f(t, y)` from `t0` to `t1` in place.
pub fn integrate<F>(mut f: F, t0: f64, t1: f64, y: &mut [C64], s: &Settings) -> Result<Stats>
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    let n = y.len();
    let span = t1 - t0;
    let dir = span.signum();
    let h_max = s.h_max.unwrap_or(span.abs()).min(span.abs());
    let mut stats = Stats::default();
    let mut k: Vec<Vec<C64>> = vec![vec![C64::default(); n]; 12];
    let mut ytmp = vec![C64::default(); n];
    let mut y_new = vec![C64::default(); n];

    f(t0, y, &mut k[0]);
    stats.evaluations += 1;
    let mut h = match s.h_init {
        Some(h) => h.min(h_max),
        None => {
            stats.evaluations += 1;
            let k0 = k[0].clone();
            initial_step(&mut f, t0, y, &k0, dir, s, h_max)
        }
    };
    let mut t = t0;
    let mut last_rejected = false;

    loop {
        if stats.accepted + stats.rejected >= MAX_STEPS
            || 0.1 * h <= f64::EPSILON * t.abs()
            || h <= 0.0
        {
            return Err(Error::Stiffness {
                t,
                h,
                steps: stats.accepted,
            });
        }
        let mut last = false;
        if (t + dir * 1.01 * h - t1) * dir >= 0.0 {
            h = (t1 - t).abs();
            last = true;
        }
        let hs = dir * h;

        for st in 1..12 {
            axpy_into(&mut ytmp, y, hs, &k[..st], A[st]);
            f(t + C[st] * hs, &ytmp, &mut k[st]);
        }
        stats.evaluations += 11;

        axpy_into(&mut y_new, y, hs, &k, &B);

        let mut err = 0.0;
        let mut err2 = 0.0;
        for i in 0..n {
            let sk = s.atol + s.rtol * y[i].norm().max(y_new[i].norm());
            let mut e5 = C64::default();
            let mut slope = C64::default();
            for j in 0..12 {
                if E[j] != 0.0 {
                    e5 += k[j][i] * E[j];
                }
                if B[j] != 0.0 {
                    slope += k[j][i] * B[j];
                }
            }
            let e3 = slope - k[0][i] * BHH[0] - k[8][i] * BHH[1] - k[11][i] * BHH[2];
            err += (e5.norm() / sk).powi(2);
            err2 += (e3.norm() / sk).powi(2);
        }
        let mut deno = err + 0.01 * err2;
        if deno <= 0.0 {
            deno = 1.0;
        }
        let err = h * err * (1.0 / (deno * n as f64)).sqrt();

        let fac11 = err.powf(1.0 / 8.0);
        let fac = (fac11 / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
        let mut h_new = h / fac;

        if err <= 1.0 {
            stats.accepted += 1;
            t = if last { t1 } else { t + hs };
            y.copy_from_slice(&y_new);
            if last {
                return Ok(stats);
            }
            f(t, y, &mut k[0]);
            stats.evaluations += 1;
            h_new = h_new.min(h_max);
            if last_rejected {
                h_new = h_new.min(h);
            }
            last_rejected = false;
        } else {
            h_new = h / (fac11 / SAFETY).min(1.0 / FAC_MIN);
            stats.rejected += 1;
            last_rejected = true;
        }
        h = h_new;
    }
}
