//! Reference solution generators for the four benchmark systems: the Lorenz
//! system, a cubic oscillator, a nonlinear viscous Burgers model, and a
//! hyper-diffusive KS-type equation.
//!
//! ODEs integrate with adaptive Dormand–Prince 5(4), stepping exactly onto
//! the uniform output grid. PDEs use Fourier collocation on periodic domains
//! with ETDRK4 time stepping: the linear symbol is treated exactly and the
//! nonlinear terms are evaluated in physical space on a zero-padded grid with
//! 2/3-rule dealiasing.

use ndarray::{ArrayD, IxDyn};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::data::{Dataset, Grid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum System {
    Lorenz,
    CubicOscillator,
    BurgersNl,
    HyperKs,
}

impl System {
    pub fn state_dim(&self) -> usize {
        match self {
            System::Lorenz => 3,
            System::CubicOscillator => 2,
            System::BurgersNl | System::HyperKs => 1,
        }
    }

    pub fn is_pde(&self) -> bool {
        matches!(self, System::BurgersNl | System::HyperKs)
    }

    pub fn name(&self) -> &'static str {
        match self {
            System::Lorenz => "lorenz",
            System::CubicOscillator => "cubic_oscillator",
            System::BurgersNl => "burgers_nl",
            System::HyperKs => "hyper_ks",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "lorenz" => Ok(System::Lorenz),
            "cubic_oscillator" => Ok(System::CubicOscillator),
            "burgers_nl" => Ok(System::BurgersNl),
            "hyper_ks" => Ok(System::HyperKs),
            other => Err(Error::InvalidArgument(format!("unknown system {other:?}"))),
        }
    }
}

/// Initial state: the recorded per-system default, an explicit ODE state, or
/// an explicit periodic profile sampled on the spatial grid.
#[derive(Debug, Clone)]
pub enum InitialCondition {
    SystemDefault,
    State(Vec<f64>),
    Profile(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub system: System,
    /// `[num_timepoints]` for ODEs, `[nx, nt]` for PDEs.
    pub counts: Vec<usize>,
    pub t_end: f64,
    pub initial: InitialCondition,
    /// Absolute tolerance for the adaptive ODE integrator.
    pub abs_tol: f64,
    pub dealias: bool,
    /// Internal PDE steps per saved interval; `None` picks a stable default.
    pub substeps: Option<usize>,
}

impl SimConfig {
    /// Desk-scale defaults per system.
    pub fn defaults(system: System) -> Self {
        let (counts, t_end) = match system {
            System::Lorenz => (vec![250_000], 10.0),
            System::CubicOscillator => (vec![1_000_000], 25.0),
            System::BurgersNl => (vec![512, 451], 1.5),
            System::HyperKs => (vec![256, 257], 82.0),
        };
        Self {
            system,
            counts,
            t_end,
            initial: InitialCondition::SystemDefault,
            abs_tol: 1e-12,
            dealias: true,
            substeps: None,
        }
    }

    pub fn with_counts(mut self, counts: Vec<usize>) -> Self {
        self.counts = counts;
        self
    }
}

/// Right-hand side of the two ODE systems; exposed so tests can pin the
/// embedded coefficients.
pub fn vector_field(system: System, u: &[f64]) -> Vec<f64> {
    match system {
        System::Lorenz => vec![
            -10.0 * u[0] + 10.0 * u[1],
            28.0 * u[0] - u[1] - u[0] * u[2],
            -8.0 / 3.0 * u[2] + u[0] * u[1],
        ],
        // Damped cubic oscillator: the skew pair ±2 rotates, the −0.1 cubes
        // bleed energy, so trajectories decay from any start.
        System::CubicOscillator => vec![
            -0.1 * u[0].powi(3) + 2.0 * u[1].powi(3),
            -2.0 * u[0].powi(3) - 0.1 * u[1].powi(3),
        ],
        _ => panic!("vector_field is defined for the ODE systems"),
    }
}

pub fn default_initial_state(system: System) -> Vec<f64> {
    match system {
        System::Lorenz => vec![-8.0, 7.0, 27.0],
        System::CubicOscillator => vec![2.0, 0.0],
        _ => panic!("state initial conditions apply to the ODE systems"),
    }
}

pub fn simulate(config: &SimConfig) -> Result<Dataset> {
    match config.system {
        System::Lorenz => simulate_lorenz(config),
        System::CubicOscillator => simulate_cubic_oscillator(config),
        System::BurgersNl => simulate_burgers_nl(config),
        System::HyperKs => simulate_hyper_ks(config),
    }
}

pub fn simulate_lorenz(config: &SimConfig) -> Result<Dataset> {
    simulate_ode(config, System::Lorenz)
}

pub fn simulate_cubic_oscillator(config: &SimConfig) -> Result<Dataset> {
    simulate_ode(config, System::CubicOscillator)
}

fn simulate_ode(config: &SimConfig, system: System) -> Result<Dataset> {
    if config.counts.len() != 1 || config.counts[0] < 2 {
        return Err(Error::InvalidArgument("ODE simulation needs counts = [M >= 2]".into()));
    }
    let y0 = match &config.initial {
        InitialCondition::SystemDefault => default_initial_state(system),
        InitialCondition::State(s) => {
            if s.len() != system.state_dim() {
                return Err(Error::InvalidArgument(format!(
                    "initial state has {} components, system needs {}",
                    s.len(),
                    system.state_dim()
                )));
            }
            s.clone()
        }
        InitialCondition::Profile(_) => {
            return Err(Error::InvalidArgument("profile initial data applies to PDEs".into()));
        }
    };
    let m = config.counts[0];
    let rhs = move |u: &[f64], out: &mut [f64]| {
        let f = vector_field(system, u);
        out.copy_from_slice(&f);
    };
    let outputs: Vec<f64> = (0..m)
        .map(|i| config.t_end * i as f64 / (m - 1) as f64)
        .collect();
    let states = dp54(&rhs, &y0, &outputs, config.abs_tol, config.abs_tol)?;
    let n = system.state_dim();
    let mut flat = Vec::with_capacity(m * n);
    for s in &states {
        flat.extend_from_slice(s);
    }
    let grid = Grid::new(vec![(0.0, config.t_end)], vec![m])?;
    let values = ArrayD::from_shape_vec(IxDyn(&[m, n]), flat).unwrap();
    Dataset::clean(grid, n, values)
}

/// Dormand–Prince 5(4) with PI step control and FSAL; the step is capped so
/// the trajectory lands exactly on every requested output time.
pub fn dp54(
    rhs: &dyn Fn(&[f64], &mut [f64]),
    y0: &[f64],
    outputs: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Vec<Vec<f64>>> {
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];

    if outputs.is_empty() {
        return Err(Error::InvalidArgument("need at least one output time".into()));
    }
    let dim = y0.len();
    let mut t = outputs[0];
    let mut y = y0.to_vec();
    let mut results = Vec::with_capacity(outputs.len());
    results.push(y.clone());

    let mut k = vec![vec![0.0; dim]; 7];
    rhs(&y, &mut k[0]);
    let mut h = ((outputs[outputs.len() - 1] - t) / 1e4).max(1e-12);
    let mut stage = vec![0.0; dim];

    for &t_out in &outputs[1..] {
        let snap = 1e-14 * t_out.abs().max(1.0);
        while t_out - t > snap {
            let capped = h >= t_out - t;
            let h_try = if capped { t_out - t } else { h };
            // Six stages beyond k1.
            for s in 0..6 {
                for i in 0..dim {
                    let mut acc = 0.0;
                    for (j, kj) in k.iter().enumerate().take(s + 1) {
                        acc += A[s][j] * kj[i];
                    }
                    stage[i] = y[i] + h_try * acc;
                }
                rhs(&stage.clone(), &mut k[s + 1]);
            }
            // 5th-order solution (FSAL: it equals the last stage input).
            let mut y5 = vec![0.0; dim];
            let mut err = 0.0f64;
            for i in 0..dim {
                let mut acc5 = 0.0;
                let mut acc4 = 0.0;
                for j in 0..7 {
                    acc5 += B5[j] * k[j][i];
                    acc4 += B4[j] * k[j][i];
                }
                y5[i] = y[i] + h_try * acc5;
                let scale = abs_tol + rel_tol * y[i].abs().max(y5[i].abs());
                let e = h_try * (acc5 - acc4) / scale;
                err += e * e;
            }
            let err = (err / dim as f64).sqrt();
            if !err.is_finite() {
                // A wild step produced overflow; shrink hard and retry.
                rhs(&y, &mut k[0]);
                h = (h_try * 0.1).max(1e-14);
                continue;
            }
            if err <= 1.0 {
                t += h_try;
                y = y5;
                k[0] = k[6].clone();
                if !y.iter().all(|v| v.is_finite()) {
                    return Err(Error::Simulation(format!("non-finite state at t = {t}")));
                }
                // Only let an uncapped step inform the controller; a step
                // shortened to land on an output must not collapse h.
                if !capped {
                    let factor = if err > 0.0 {
                        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                    } else {
                        5.0
                    };
                    h = (h_try * factor).max(1e-14);
                }
            } else {
                rhs(&y, &mut k[0]);
                let factor = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                h = (h_try * factor).max(1e-14);
            }
        }
        t = t_out;
        results.push(y.clone());
    }
    Ok(results)
}

/// Fourier symbol of the hyper-KS linear part, `k⁴ − 0.75k⁶`; positive
/// (unstable) exactly on k² < 4/3.
pub fn hyper_ks_symbol(k: f64) -> f64 {
    k.powi(4) - 0.75 * k.powi(6)
}

/// Fourier symbol of the Burgers linear part, `−0.01 k²`.
pub fn burgers_symbol(k: f64) -> f64 {
    -0.01 * k * k
}

struct SpectralWorkspace {
    n: usize,
    pad: usize,
    planner_fwd_n: std::sync::Arc<dyn rustfft::Fft<f64>>,
    planner_inv_pad: std::sync::Arc<dyn rustfft::Fft<f64>>,
    planner_fwd_pad: std::sync::Arc<dyn rustfft::Fft<f64>>,
    planner_inv_n: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl SpectralWorkspace {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let pad = 2 * n;
        Self {
            n,
            pad,
            planner_fwd_n: planner.plan_fft_forward(n),
            planner_inv_pad: planner.plan_fft_inverse(pad),
            planner_fwd_pad: planner.plan_fft_forward(pad),
            planner_inv_n: planner.plan_fft_inverse(n),
        }
    }

    /// Band-limited upsampling of spectrum `u_hat` (length n, unnormalized)
    /// onto the padded physical grid.
    fn to_padded_physical(&self, u_hat: &[Complex64], out: &mut Vec<Complex64>) {
        let (n, pad) = (self.n, self.pad);
        out.clear();
        out.resize(pad, Complex64::new(0.0, 0.0));
        let scale = pad as f64 / n as f64;
        for j in 0..n / 2 {
            out[j] = u_hat[j] * scale;
        }
        for j in n / 2 + 1..n {
            out[pad - (n - j)] = u_hat[j] * scale;
        }
        self.planner_inv_pad.process(out);
        let inv = 1.0 / pad as f64;
        for v in out.iter_mut() {
            *v *= inv;
        }
    }

    /// Forward transform of a padded physical field, truncated back to n
    /// modes (unnormalized convention).
    fn from_padded_physical(&self, field: &mut [Complex64], out: &mut Vec<Complex64>) {
        let (n, pad) = (self.n, self.pad);
        self.planner_fwd_pad.process(field);
        out.clear();
        out.resize(n, Complex64::new(0.0, 0.0));
        let scale = n as f64 / pad as f64;
        for j in 0..n / 2 {
            out[j] = field[j] * scale;
        }
        for j in n / 2 + 1..n {
            out[j] = field[pad - (n - j)] * scale;
        }
    }
}

/// ETDRK4 coefficients for one mode, evaluated by the stabilized
/// contour-integral mean over a unit circle around z = L·h.
struct EtdCoeffs {
    e: f64,
    e2: f64,
    q: f64,
    f1: f64,
    f2: f64,
    f3: f64,
}

fn etd_coeffs(l: f64, h: f64) -> EtdCoeffs {
    let z0 = l * h;
    const M: usize = 64;
    let mut q = Complex64::new(0.0, 0.0);
    let mut f1 = Complex64::new(0.0, 0.0);
    let mut f2 = Complex64::new(0.0, 0.0);
    let mut f3 = Complex64::new(0.0, 0.0);
    for j in 0..M {
        let theta = std::f64::consts::PI * (j as f64 + 0.5) / M as f64;
        let z = Complex64::new(z0, 0.0) + Complex64::from_polar(1.0, theta);
        let ez = z.exp();
        let ez2 = (z / 2.0).exp();
        q += (ez2 - 1.0) / z;
        let z3 = z * z * z;
        f1 += (-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3;
        f2 += (2.0 + z + ez * (-2.0 + z)) / z3;
        f3 += (-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3;
    }
    let m = M as f64;
    EtdCoeffs {
        e: (z0).exp(),
        e2: (z0 / 2.0).exp(),
        q: h * q.re / m,
        f1: h * f1.re / m,
        f2: h * f2.re / m,
        f3: h * f3.re / m,
    }
}

struct PdeProblem {
    /// Physical wavenumbers per mode index.
    wavenumbers: Vec<f64>,
    /// Linear symbol per mode.
    linear: Vec<f64>,
    /// Nonlinear evaluator: given the current spectrum and workspace, writes
    /// the nonlinear term's spectrum.
    nonlinear: Box<dyn Fn(&[Complex64], &SpectralWorkspace, &mut Vec<Complex64>)>,
}

fn wavenumbers(n: usize, domain_len: f64) -> Vec<f64> {
    let base = 2.0 * std::f64::consts::PI / domain_len;
    (0..n)
        .map(|j| {
            let jj = if j <= n / 2 { j as isize } else { j as isize - n as isize };
            base * jj as f64
        })
        .collect()
}

fn dealias_mask(n: usize, on: bool) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let jj = if j <= n / 2 { j } else { n - j };
            if on && jj > n / 3 {
                0.0
            } else {
                1.0
            }
        })
        .collect()
}

fn etdrk4_run(
    mut u_hat: Vec<Complex64>,
    problem: &PdeProblem,
    ws: &SpectralWorkspace,
    dt: f64,
    substeps: usize,
    saves: usize,
    mask: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let n = ws.n;
    let coeffs: Vec<EtdCoeffs> = problem.linear.iter().map(|&l| etd_coeffs(l, dt)).collect();

    let mut out = Vec::with_capacity(saves);
    let mut physical = vec![Complex64::new(0.0, 0.0); n];
    let mut save_state = |u_hat: &[Complex64], out: &mut Vec<Vec<f64>>| -> Result<()> {
        physical.copy_from_slice(u_hat);
        ws.planner_inv_n.process(&mut physical);
        let inv = 1.0 / n as f64;
        let slice: Vec<f64> = physical.iter().map(|c| c.re * inv).collect();
        if !slice.iter().all(|v| v.is_finite()) {
            return Err(Error::Simulation("non-finite field (blow-up detected)".into()));
        }
        out.push(slice);
        Ok(())
    };
    save_state(&u_hat, &mut out)?;

    let mut nv = Vec::new();
    let mut na = Vec::new();
    let mut nb = Vec::new();
    let mut nc = Vec::new();
    let mut a = vec![Complex64::new(0.0, 0.0); n];
    let mut b = vec![Complex64::new(0.0, 0.0); n];
    let mut c = vec![Complex64::new(0.0, 0.0); n];

    for _ in 1..saves {
        for _ in 0..substeps {
            (problem.nonlinear)(&u_hat, ws, &mut nv);
            for j in 0..n {
                a[j] = coeffs[j].e2 * u_hat[j] + coeffs[j].q * nv[j] * mask[j];
            }
            (problem.nonlinear)(&a, ws, &mut na);
            for j in 0..n {
                b[j] = coeffs[j].e2 * u_hat[j] + coeffs[j].q * na[j] * mask[j];
            }
            (problem.nonlinear)(&b, ws, &mut nb);
            for j in 0..n {
                c[j] = coeffs[j].e2 * a[j] + coeffs[j].q * (2.0 * nb[j] - nv[j]) * mask[j];
            }
            (problem.nonlinear)(&c, ws, &mut nc);
            for j in 0..n {
                let upd = coeffs[j].e * u_hat[j]
                    + coeffs[j].f1 * nv[j] * mask[j]
                    + 2.0 * coeffs[j].f2 * (na[j] + nb[j]) * mask[j]
                    + coeffs[j].f3 * nc[j] * mask[j];
                u_hat[j] = upd;
            }
        }
        save_state(&u_hat, &mut out)?;
    }
    Ok(out)
}

fn pde_dataset(
    slices: Vec<Vec<f64>>,
    nx: usize,
    nt: usize,
    x0: f64,
    domain_len: f64,
    t_end: f64,
) -> Result<Dataset> {
    let hx = domain_len / nx as f64;
    let grid = Grid::new(
        vec![(x0, x0 + hx * (nx - 1) as f64), (0.0, t_end)],
        vec![nx, nt],
    )?;
    let mut flat = vec![0.0; nx * nt];
    for (it, slice) in slices.iter().enumerate() {
        for ix in 0..nx {
            flat[ix * nt + it] = slice[ix];
        }
    }
    let values = ArrayD::from_shape_vec(IxDyn(&[nx, nt, 1]), flat).unwrap();
    Dataset::clean(grid, 1, values)
}

fn pde_initial_spectrum(
    config: &SimConfig,
    ws: &SpectralWorkspace,
    default_profile: impl Fn(f64) -> f64,
    x0: f64,
    domain_len: f64,
) -> Result<Vec<Complex64>> {
    let n = ws.n;
    let profile: Vec<f64> = match &config.initial {
        InitialCondition::SystemDefault => (0..n)
            .map(|i| default_profile(x0 + domain_len * i as f64 / n as f64))
            .collect(),
        InitialCondition::Profile(p) => {
            if p.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "initial profile has {} samples, grid has {n}",
                    p.len()
                )));
            }
            p.clone()
        }
        InitialCondition::State(_) => {
            return Err(Error::InvalidArgument("state initial data applies to ODEs".into()));
        }
    };
    let mut u_hat: Vec<Complex64> = profile.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    ws.planner_fwd_n.process(&mut u_hat);
    Ok(u_hat)
}

/// Nonlinear viscous Burgers model on periodic x ∈ [−1, 1]:
/// `u_t = 0.01 u_xx − 0.5 (u²)_x − u³ + 2u² + 1`.
pub fn simulate_burgers_nl(config: &SimConfig) -> Result<Dataset> {
    if config.counts.len() != 2 {
        return Err(Error::InvalidArgument("PDE simulation needs counts = [nx, nt]".into()));
    }
    let (nx, nt) = (config.counts[0], config.counts[1]);
    if nx < 8 || nx % 2 != 0 || nt < 2 {
        return Err(Error::InvalidArgument("need even nx >= 8 and nt >= 2".into()));
    }
    let domain_len = 2.0;
    let x0 = -1.0;
    let ws = SpectralWorkspace::new(nx);
    let k = wavenumbers(nx, domain_len);
    let linear: Vec<f64> = k.iter().map(|&k| burgers_symbol(k)).collect();
    let k_for_flux = k.clone();

    let nonlinear = move |u_hat: &[Complex64], ws: &SpectralWorkspace, out: &mut Vec<Complex64>| {
        let mut padded = Vec::new();
        ws.to_padded_physical(u_hat, &mut padded);
        // Polynomial part −u³ + 2u² + 1 in physical space.
        let mut poly: Vec<Complex64> = padded
            .iter()
            .map(|u| {
                let v = u.re;
                Complex64::new(-v * v * v + 2.0 * v * v + 1.0, 0.0)
            })
            .collect();
        // The flux term uses u² with a spectral derivative.
        let mut squared: Vec<Complex64> = padded
            .iter()
            .map(|u| Complex64::new(u.re * u.re, 0.0))
            .collect();
        let mut poly_hat = Vec::new();
        ws.from_padded_physical(&mut poly, &mut poly_hat);
        let mut sq_hat = Vec::new();
        ws.from_padded_physical(&mut squared, &mut sq_hat);
        out.clear();
        out.resize(u_hat.len(), Complex64::new(0.0, 0.0));
        for j in 0..u_hat.len() {
            let ik = Complex64::new(0.0, k_for_flux[j]);
            out[j] = poly_hat[j] - 0.5 * ik * sq_hat[j];
        }
        // Nyquist mode of the derivative is meaningless for odd derivatives.
        if u_hat.len() % 2 == 0 {
            let nyq = u_hat.len() / 2;
            out[nyq] = poly_hat[nyq];
        }
    };

    let problem = PdeProblem { wavenumbers: k, linear, nonlinear: Box::new(nonlinear) };
    let u_hat = pde_initial_spectrum(config, &ws, |x| (-36.0 * x * x).exp(), x0, domain_len)?;

    let save_dt = config.t_end / (nt - 1) as f64;
    let substeps = config.substeps.unwrap_or_else(|| {
        // Convective stability: dt scaled to the resolved wavenumber range.
        let dt_target = 0.08 / nx as f64;
        ((save_dt / dt_target).ceil() as usize).max(1)
    });
    let mask = dealias_mask(nx, config.dealias);
    let slices = etdrk4_run(u_hat, &problem, &ws, save_dt / substeps as f64, substeps, nt, &mask)?;
    pde_dataset(slices, nx, nt, x0, domain_len, config.t_end)
}

/// Hyper-diffusive KS-type model on periodic x ∈ [0, 32π]:
/// `u_t = u_xxxx + 0.75 u_xxxxxx − 0.5 (u²)_x + 0.1 (u²)_xxx`.
pub fn simulate_hyper_ks(config: &SimConfig) -> Result<Dataset> {
    if config.counts.len() != 2 {
        return Err(Error::InvalidArgument("PDE simulation needs counts = [nx, nt]".into()));
    }
    let (nx, nt) = (config.counts[0], config.counts[1]);
    if nx < 8 || nx % 2 != 0 || nt < 2 {
        return Err(Error::InvalidArgument("need even nx >= 8 and nt >= 2".into()));
    }
    let domain_len = 32.0 * std::f64::consts::PI;
    let x0 = 0.0;
    let ws = SpectralWorkspace::new(nx);
    let k = wavenumbers(nx, domain_len);
    let linear: Vec<f64> = k.iter().map(|&k| hyper_ks_symbol(k)).collect();
    let k_for_flux = k.clone();

    let nonlinear = move |u_hat: &[Complex64], ws: &SpectralWorkspace, out: &mut Vec<Complex64>| {
        let mut padded = Vec::new();
        ws.to_padded_physical(u_hat, &mut padded);
        let mut squared: Vec<Complex64> = padded
            .iter()
            .map(|u| Complex64::new(u.re * u.re, 0.0))
            .collect();
        let mut sq_hat = Vec::new();
        ws.from_padded_physical(&mut squared, &mut sq_hat);
        out.clear();
        out.resize(u_hat.len(), Complex64::new(0.0, 0.0));
        for j in 0..u_hat.len() {
            let kk = k_for_flux[j];
            // −0.5 (u²)_x + 0.1 (u²)_xxx → (−0.5·ik + 0.1·(ik)³)·û² .
            let factor = Complex64::new(0.0, -0.5 * kk - 0.1 * kk * kk * kk);
            out[j] = factor * sq_hat[j];
        }
        if u_hat.len() % 2 == 0 {
            out[u_hat.len() / 2] = Complex64::new(0.0, 0.0);
        }
    };

    let problem = PdeProblem { wavenumbers: k, linear, nonlinear: Box::new(nonlinear) };
    let u_hat = pde_initial_spectrum(
        config,
        &ws,
        |x| (x / 16.0).cos() * (1.0 + (x / 16.0).sin()),
        x0,
        domain_len,
    )?;

    let save_dt = config.t_end / (nt - 1) as f64;
    let substeps = config.substeps.unwrap_or_else(|| {
        let k_max = nx as f64 / 32.0;
        let rate = k_max * (0.5 + 0.1 * k_max * k_max) * 2.0;
        let dt_target = (1.0 / rate).min(0.05);
        ((save_dt / dt_target).ceil() as usize).max(1)
    });
    let mask = dealias_mask(nx, config.dealias);
    let slices = etdrk4_run(u_hat, &problem, &ws, save_dt / substeps as f64, substeps, nt, &mask)?;
    pde_dataset(slices, nx, nt, x0, domain_len, config.t_end)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn vector_field_embeds_coefficients() {
        let f = vector_field(System::Lorenz, &[1.0, 1.0, 1.0]);
        assert_relative_eq!(f[0], 0.0);
        assert_relative_eq!(f[1], 26.0);
        assert_relative_eq!(f[2], -5.0 / 3.0);

        let g = vector_field(System::CubicOscillator, &[1.0, 1.0]);
        assert_relative_eq!(g[0], 1.9);
        assert_relative_eq!(g[1], -2.1);
    }

    #[test]
    fn hyper_ks_symbol_stability_threshold() {
        // Unstable band: symbol positive iff k² < 4/3.
        let k_star = (4.0f64 / 3.0).sqrt();
        assert!(hyper_ks_symbol(k_star - 1e-6) > 0.0);
        assert!(hyper_ks_symbol(k_star + 1e-6) < 0.0);
        assert_relative_eq!(hyper_ks_symbol(2.0), 16.0 - 48.0);
    }

    #[test]
    fn lorenz_desk_scale_is_bounded_and_deterministic() {
        let config = SimConfig::defaults(System::Lorenz).with_counts(vec![20_001]);
        let d1 = simulate(&config).unwrap();
        let d2 = simulate(&config).unwrap();
        assert_eq!(d1.values, d2.values);
        let max = d1.flat().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max < 100.0, "trajectory max {max}");
    }

    #[test]
    fn lorenz_tolerance_self_convergence() {
        let mut config = SimConfig::defaults(System::Lorenz).with_counts(vec![2]);
        config.abs_tol = 1e-12;
        let endpoint = |tol: f64| {
            let mut c = config.clone();
            c.abs_tol = tol;
            let d = simulate(&c).unwrap();
            let n = d.flat().len();
            d.flat()[n - 3..].to_vec()
        };
        let a = endpoint(1e-12);
        let b = endpoint(5e-13);
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = a
            .iter()
            .zip(&b)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(diff / scale < 1e-8, "relative endpoint drift {}", diff / scale);
    }

    #[test]
    fn cubic_oscillator_stays_bounded() {
        let config = SimConfig::defaults(System::CubicOscillator).with_counts(vec![40_001]);
        let d = simulate(&config).unwrap();
        let max = d.flat().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max <= 2.0 + 1e-6, "cubic oscillator max {max}");
    }

    #[test]
    fn burgers_zero_initial_data_matches_reduced_ode() {
        // Spatially constant data solves u' = −u³ + 2u² + 1.
        let mut config = SimConfig::defaults(System::BurgersNl).with_counts(vec![64, 151]);
        config.initial = InitialCondition::Profile(vec![0.0; 64]);
        let d = simulate(&config).unwrap();
        let rhs = |u: &[f64], out: &mut [f64]| {
            out[0] = -u[0].powi(3) + 2.0 * u[0] * u[0] + 1.0;
        };
        let outputs: Vec<f64> = (0..151).map(|i| 1.5 * i as f64 / 150.0).collect();
        let reference = dp54(&rhs, &[0.0], &outputs, 1e-12, 1e-12).unwrap();
        for it in [50usize, 100, 150] {
            let field_val = d.values[[10, it, 0]];
            assert_relative_eq!(field_val, reference[it][0], max_relative = 1e-6);
            // And the field stays spatially constant.
            assert_relative_eq!(d.values[[0, it, 0]], d.values[[32, it, 0]], epsilon = 1e-10);
        }
    }

    #[test]
    fn burgers_time_self_convergence_order() {
        let base = SimConfig::defaults(System::BurgersNl).with_counts(vec![128, 26]);
        let run = |substeps: usize| {
            let mut c = base.clone();
            c.t_end = 0.5;
            c.substeps = Some(substeps);
            let d = simulate(&c).unwrap();
            d.flat().to_vec()
        };
        let fine = run(64);
        let errs: Vec<f64> = [4usize, 8, 16]
            .iter()
            .map(|&s| {
                run(s)
                    .iter()
                    .zip(&fine)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            })
            .collect();
        let order1 = (errs[0] / errs[1]).log2();
        let order2 = (errs[1] / errs[2]).log2();
        assert!(
            order1 >= 3.0 && order2 >= 3.0,
            "observed orders {order1:.2}, {order2:.2} (errors {errs:?})"
        );
    }

    #[test]
    fn burgers_flux_term_has_zero_spatial_mean() {
        // Mode 0 of the −0.5·ik·û² flux piece vanishes identically, so the
        // spatial mean evolves only through the non-flux terms.
        let k = wavenumbers(64, 2.0);
        assert_eq!(k[0], 0.0);
        let factor = Complex64::new(0.0, -0.5 * k[0]);
        assert_eq!(factor.norm(), 0.0);
    }

    #[test]
    fn pde_simulation_is_deterministic() {
        let config = SimConfig::defaults(System::HyperKs).with_counts(vec![64, 33]);
        let mut c = config;
        c.t_end = 5.0;
        let a = simulate(&c).unwrap();
        let b = simulate(&c).unwrap();
        assert_eq!(a.values, b.values);
    }
}
