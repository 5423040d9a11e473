//! Time propagation of the full and effective models.

use std::f64::consts::TAU;
use ndarray::Array1;
use num_complex::Complex64 as C64;
use crate::{
    error::{ SResult, SwapError },
    model::{
        self, build_hamiltonian, Coefficient, CouplingOrder, OscillatorMode, Stage,
        SystemParams, TimeDependentHamiltonian, LEVEL_F, LEVEL_G, SUBSPACE_LABELS,
    },
    reduction::{ hierarchy_check, HierarchyReport, Thresholds },
    tensor::{ embed, expectation, ops, SpaceSpec, StateVector },
};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Classical oscillator position `X0 e^{-γt/2} cos(ω_m t)` in units of the
/// zero-point spread.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct DriveProfile {
    pub x0: f64,
    pub omega_m: f64,
    pub gamma: f64,
}

impl DriveProfile {
    pub fn undamped(x0: f64, omega_m: f64) -> Self {
        Self { x0, omega_m, gamma: 0.0 }
    }

    pub fn position(&self, t: f64) -> f64 {
        let envelope = if self.gamma == 0.0 { 1.0 } else { (-0.5 * self.gamma * t).exp() };
        self.x0 * envelope * (self.omega_m * t).cos()
    }

    /// Value substituted for `(b + b†)`.
    pub fn quadrature(&self, t: f64) -> f64 {
        2f64.sqrt() * self.position(t)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorConfig {
    /// RK4 steps per period of the fastest frequency present.
    pub steps_per_fastest_period: usize,
    /// Steps between recorded samples (ignored when `samples` is set).
    pub sample_stride: usize,
    /// Record exactly this many equal intervals; the step count is rounded
    /// up to a multiple of it.
    pub samples: Option<usize>,
    pub max_norm_drift: f64,
    /// Allowed observable shift when the cavity cutoff grows by two.
    pub cutoff_tolerance: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            steps_per_fastest_period: 200,
            sample_stride: 1,
            samples: None,
            max_norm_drift: 1e-8,
            cutoff_tolerance: 1e-3,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> SResult<()> {
        if self.steps_per_fastest_period < 50 {
            return Err(SwapError::param("steps_per_fastest_period", "must be >= 50"));
        }
        if self.sample_stride == 0 {
            return Err(SwapError::param("sample_stride", "must be >= 1"));
        }
        if self.samples == Some(0) {
            return Err(SwapError::param("samples", "must be >= 1"));
        }
        if !(self.max_norm_drift > 0.0) {
            return Err(SwapError::param("max_norm_drift", "must be > 0"));
        }
        if !(self.cutoff_tolerance > 0.0) {
            return Err(SwapError::param("cutoff_tolerance", "must be > 0"));
        }
        Ok(())
    }
}

/// Sampled populations, `values[label][sample]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PopulationSeries {
    pub times: Vec<f64>,
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl PopulationSeries {
    pub fn label_index(&self, label: &str) -> SResult<usize> {
        self.labels.iter().position(|l| l == label)
            .ok_or_else(|| SwapError::UnknownLabel(label.to_string()))
    }

    pub fn series(&self, label: &str) -> SResult<&[f64]> {
        Ok(&self.values[self.label_index(label)?])
    }

    pub fn t_start(&self) -> f64 { self.times[0] }

    pub fn t_end(&self) -> f64 { *self.times.last().unwrap() }

    /// Linear interpolation of one label's population at time `t`.
    pub fn value_at(&self, label: &str, t: f64) -> SResult<f64> {
        let k = self.label_index(label)?;
        interpolate(&self.times, &self.values[k], t)
    }

    /// Multiply every time stamp by `factor` (e.g. ω_m to go from seconds
    /// to oscillator periods).
    pub fn scale_time(&self, factor: f64) -> Self {
        Self {
            times: self.times.iter().map(|t| t * factor).collect(),
            ..self.clone()
        }
    }
}

fn interpolate(times: &[f64], values: &[f64], t: f64) -> SResult<f64> {
    let (t0, t1) = (times[0], *times.last().unwrap());
    let slack = 1e-12 * t0.abs().max(t1.abs()).max(1.0);
    if t < t0 - slack || t > t1 + slack || times.is_empty() {
        return Err(SwapError::OutOfRange { t, t0, t1 });
    }
    let j = times.partition_point(|&s| s <= t);
    if j == 0 {
        return Ok(values[0]);
    }
    if j >= times.len() {
        return Ok(values[times.len() - 1]);
    }
    let (ta, tb) = (times[j - 1], times[j]);
    let w = (t - ta) / (tb - ta);
    Ok(values[j - 1] * (1.0 - w) + values[j] * w)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub states: Vec<StateVector>,
    pub populations: PopulationSeries,
    /// `max |‖ψ‖ - 1|` over the run.
    pub norm_drift: f64,
}

impl TrajectoryRecord {
    fn from_states(times: Vec<f64>, states: Vec<StateVector>, labels: Vec<String>, drift: f64) -> Self {
        let dim = labels.len();
        let mut values = vec![Vec::with_capacity(times.len()); dim];
        for s in &states {
            for (k, p) in s.populations().into_iter().enumerate() {
                values[k].push(p);
            }
        }
        Self {
            states,
            populations: PopulationSeries { times, labels, values },
            norm_drift: drift,
        }
    }

    pub fn times(&self) -> &[f64] { &self.populations.times }

    pub fn with_labels(mut self, labels: &[&str]) -> Self {
        assert_eq!(labels.len(), self.populations.labels.len());
        self.populations.labels = labels.iter().map(|s| s.to_string()).collect();
        self
    }
}

/// Upper bound on `‖H(t)‖` from row sums at probe times across the span.
fn norm_bound(h: &TimeDependentHamiltonian, t0: f64, t1: f64) -> f64 {
    const PROBES: usize = 64;
    (0..=PROBES)
        .map(|k| t0 + (t1 - t0) * k as f64 / PROBES as f64)
        .map(|t| h.evaluate(t).row_sum_norm())
        .fold(0.0, f64::max)
}

/// Number of RK4 steps for `h` on `[t0, t1]`.
pub fn step_count(h: &TimeDependentHamiltonian, t0: f64, t1: f64, cfg: &IntegratorConfig) -> usize {
    let rate = h.max_frequency() + norm_bound(h, t0, t1);
    let mut steps = if rate == 0.0 {
        1
    } else {
        let dt = TAU / (rate * cfg.steps_per_fastest_period as f64);
        ((t1 - t0) / dt).ceil().max(1.0) as usize
    };
    if let Some(m) = cfg.samples {
        steps = steps.div_ceil(m) * m;
    }
    steps
}

fn rk4_step(h: &TimeDependentHamiltonian, t: f64, dt: f64, psi: &Array1<C64>) -> Array1<C64> {
    let f = |t: f64, y: &Array1<C64>| h.apply(t, y).mapv(|z| -I * z);
    let k1 = f(t, psi);
    let k2 = f(t + 0.5 * dt, &(psi + &(&k1 * C64::new(0.5 * dt, 0.0))));
    let k3 = f(t + 0.5 * dt, &(psi + &(&k2 * C64::new(0.5 * dt, 0.0))));
    let k4 = f(t + dt, &(psi + &(&k3 * C64::new(dt, 0.0))));
    let sixth = C64::new(dt / 6.0, 0.0);
    psi + &((&k1 + &(&k2 * C64::new(2.0, 0.0)) + &(&k3 * C64::new(2.0, 0.0)) + &k4) * sixth)
}

/// Fixed-step fourth-order Runge-Kutta integration of `i ψ' = H(t) ψ`
/// (ħ = 1) on `[t0, t1]`.
pub fn integrate_tdse(
    h: &TimeDependentHamiltonian,
    psi0: &StateVector,
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> SResult<TrajectoryRecord> {
    integrate_with_steps(h, psi0, t_span, cfg, None)
}

/// As [`integrate_tdse`] with an explicit step count.
pub fn integrate_with_steps(
    h: &TimeDependentHamiltonian,
    psi0: &StateVector,
    (t0, t1): (f64, f64),
    cfg: &IntegratorConfig,
    steps: Option<usize>,
) -> SResult<TrajectoryRecord> {
    cfg.validate()?;
    if psi0.space() != h.space() {
        return Err(SwapError::SpaceMismatch(format!(
            "state {:?} vs Hamiltonian {:?}", psi0.space().dims(), h.space().dims()
        )));
    }
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(SwapError::param("t_span", format!("need finite t0 < t1, got [{t0}, {t1}]")));
    }
    if (psi0.norm() - 1.0).abs() > 1e-9 {
        return Err(SwapError::param("psi0", format!("state norm {} is not 1", psi0.norm())));
    }
    let steps = steps.unwrap_or_else(|| step_count(h, t0, t1, cfg));
    let stride = match cfg.samples {
        Some(m) if steps % m == 0 => steps / m,
        Some(_) => return Err(SwapError::param("samples", "step count must be a multiple of samples")),
        None => cfg.sample_stride,
    };
    let dt = (t1 - t0) / steps as f64;

    let space = psi0.space().clone();
    let mut psi = psi0.amplitudes().clone();
    let mut times = vec![t0];
    let mut states = vec![psi0.clone()];
    let mut drift: f64 = (psi0.norm() - 1.0).abs();
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        psi = rk4_step(h, t, dt, &psi);
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        drift = drift.max((norm - 1.0).abs());
        let done = k + 1;
        if done % stride == 0 || done == steps {
            times.push(if done == steps { t1 } else { t0 + done as f64 * dt });
            states.push(StateVector::new(space.clone(), psi.clone())?);
        }
    }
    if drift > cfg.max_norm_drift {
        return Err(SwapError::NormDrift { drift, allowed: cfg.max_norm_drift });
    }
    Ok(TrajectoryRecord::from_states(times, states, model::basis_labels(&space), drift))
}

/// Accumulated exchange phase `∫₀^τ cos^n(s) ds`, times λ′.
pub fn exchange_phase(lambda_prime: f64, order: CouplingOrder, tau: f64) -> f64 {
    match order {
        CouplingOrder::Linear => lambda_prime * tau.sin(),
        CouplingOrder::Quadratic => lambda_prime * (0.5 * tau + 0.25 * (2.0 * tau).sin()),
    }
}

/// Exact solution of the effective two-level equations in units of 1/ω_m:
/// `b1 = b1(0) cos Φ - i b2(0) sin Φ`, `b2 = -i b1(0) sin Φ + b2(0) cos Φ`.
pub fn solve_effective_closed_form(
    lambda_prime: f64,
    order: CouplingOrder,
    b0: [C64; 2],
    taus: &[f64],
) -> SResult<TrajectoryRecord> {
    if taus.is_empty() {
        return Err(SwapError::param("tau", "need at least one sample time"));
    }
    let space = SpaceSpec::new([2])?;
    let mut states = Vec::with_capacity(taus.len());
    let mut drift: f64 = 0.0;
    for &tau in taus {
        let phi = exchange_phase(lambda_prime, order, tau);
        let (s, c) = phi.sin_cos();
        let b1 = b0[0] * c - I * b0[1] * s;
        let b2 = -I * b0[0] * s + b0[1] * c;
        let st = StateVector::new(space.clone(), Array1::from_vec(vec![b1, b2]))?;
        drift = drift.max((st.norm() - 1.0).abs());
        states.push(st);
    }
    let labels = SUBSPACE_LABELS.iter().map(|s| s.to_string()).collect();
    Ok(TrajectoryRecord::from_states(taus.to_vec(), states, labels, drift))
}

/// `count + 1` equally spaced points on `[t0, t1]`.
pub fn uniform_grid(t0: f64, t1: f64, count: usize) -> Vec<f64> {
    (0..=count).map(|k| {
        if k == count { t1 } else { t0 + (t1 - t0) * k as f64 / count as f64 }
    }).collect()
}

/// Effective Hamiltonian `λ′ (x(τ)/X0)^n σ_x` in units of ω_m on
/// span{|g1 f2>, |f1 g2>}; `gamma` is the drive decay rate in units of ω_m.
pub fn effective_hamiltonian(
    lambda_prime: f64,
    order: CouplingOrder,
    gamma: f64,
) -> SResult<TimeDependentHamiltonian> {
    let n = order.exponent();
    let drive = DriveProfile { x0: 1.0, omega_m: 1.0, gamma };
    let mut h = TimeDependentHamiltonian::new(SpaceSpec::new([2])?);
    h.add_hermitian(
        Coefficient::from_fn(n as f64, move |tau| C64::new(lambda_prime * drive.position(tau).powi(n), 0.0)),
        &ops::transition(2, 0, 1) + &ops::transition(2, 1, 0),
    )?;
    Ok(h)
}

fn subspace_state(b0: [C64; 2]) -> SResult<StateVector> {
    StateVector::new(SpaceSpec::new([2])?, Array1::from_vec(b0.to_vec()))
}

/// RK4 integration of `ḃ1 = -i λ′ cos^n(τ) b2`, `ḃ2 = -i λ′ cos^n(τ) b1`.
pub fn integrate_effective_ode(
    lambda_prime: f64,
    order: CouplingOrder,
    b0: [C64; 2],
    tau_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> SResult<TrajectoryRecord> {
    integrate_effective_damped(lambda_prime, order, 0.0, b0, tau_span, cfg)
}

/// [`integrate_effective_ode`] under a decaying drive envelope.
pub fn integrate_effective_damped(
    lambda_prime: f64,
    order: CouplingOrder,
    gamma: f64,
    b0: [C64; 2],
    tau_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> SResult<TrajectoryRecord> {
    let h = effective_hamiltonian(lambda_prime, order, gamma)?;
    Ok(integrate_tdse(&h, &subspace_state(b0)?, tau_span, cfg)?.with_labels(&SUBSPACE_LABELS))
}

#[derive(Clone, Debug)]
pub struct FullModelRun {
    /// Full state trajectory on `[3, 3, N_c]`, times in seconds.
    pub trajectory: TrajectoryRecord,
    /// Populations of |g1 f2> and |f1 g2>, summed over the cavity.
    pub qubit: PopulationSeries,
    /// `<a†a>` at each sample.
    pub photon_number: Vec<f64>,
    /// Largest finite-difference `|d<a†a>/dt|`.
    pub photon_rate_max: f64,
    pub hierarchy: HierarchyReport,
    /// Largest observable shift when the cutoff is raised by two.
    pub cutoff_shift: f64,
}

/// Copy `psi` into a space with a larger cavity cutoff (slot 2).
fn pad_cavity(psi: &StateVector, cutoff: usize) -> SResult<StateVector> {
    let mut dims = psi.space().dims().to_vec();
    dims[2] = cutoff;
    let big = SpaceSpec::new(dims)?;
    let mut amps = Array1::zeros(big.total());
    for (k, z) in psi.amplitudes().iter().enumerate() {
        amps[big.index_of(&psi.space().labels_of(k))?] = *z;
    }
    StateVector::new(big, amps)
}

/// Qubit-subspace populations (summed over the cavity) and `<a†a>` for a
/// trajectory on an `[atom, atom, cavity, ...]` space.
pub fn atom_cavity_observables(traj: &TrajectoryRecord) -> SResult<(PopulationSeries, Vec<f64>)> {
    let space = traj.states.first()
        .ok_or_else(|| SwapError::param("trajectory", "empty trajectory"))?
        .space().clone();
    if space.len() < 3 {
        return Err(SwapError::SpaceMismatch(format!("space {:?} has no cavity slot", space.dims())));
    }
    let a = embed(&ops::annihilation(space.dims()[2]), 2, &space)?;
    let num = &a.dagger() * &a;
    let photons: Vec<f64> = traj.states.iter()
        .map(|s| expectation(s, &num).map(|z| z.re))
        .collect::<SResult<_>>()?;
    let mut gf = Vec::with_capacity(traj.states.len());
    let mut fg = Vec::with_capacity(traj.states.len());
    for s in &traj.states {
        let (mut p_gf, mut p_fg) = (0.0, 0.0);
        for (k, z) in s.amplitudes().iter().enumerate() {
            let l = space.labels_of(k);
            match (l[0], l[1]) {
                (LEVEL_G, LEVEL_F) => p_gf += z.norm_sqr(),
                (LEVEL_F, LEVEL_G) => p_fg += z.norm_sqr(),
                _ => {}
            }
        }
        gf.push(p_gf);
        fg.push(p_fg);
    }
    let qubit = PopulationSeries {
        times: traj.times().to_vec(),
        labels: SUBSPACE_LABELS.iter().map(|s| s.to_string()).collect(),
        values: vec![gf, fg],
    };
    Ok((qubit, photons))
}

fn full_run_once(params: &SystemParams, psi0: &StateVector, t_span: (f64, f64), cfg: &IntegratorConfig)
    -> SResult<(TrajectoryRecord, PopulationSeries, Vec<f64>)>
{
    let h = build_hamiltonian(Stage::H2, params)?;
    let traj = integrate_tdse(&h, psi0, t_span, cfg)?;
    let (qubit, photons) = atom_cavity_observables(&traj)?;
    Ok((traj, qubit, photons))
}

/// Propagate the atom-cavity system (interaction picture of the free atoms,
/// oscillator as a classical drive) and extract the qubit-subspace
/// populations and the cavity photon audit. The run is repeated with the
/// cavity cutoff raised by two; the two must agree within
/// `cfg.cutoff_tolerance`.
pub fn full_model_simulate(
    params: &SystemParams,
    psi0: &StateVector,
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> SResult<FullModelRun> {
    if params.oscillator != OscillatorMode::Classical {
        return Err(SwapError::param("oscillator", "full-model runs drive the cavity with a classical oscillator"));
    }
    let hierarchy = hierarchy_check(params, Thresholds::default());
    let (trajectory, qubit, photon_number) = full_run_once(params, psi0, t_span, cfg)?;

    let bigger = SystemParams { cavity_cutoff: params.cavity_cutoff + 2, ..params.clone() };
    let (_, qubit2, photons2) = full_run_once(&bigger, &pad_cavity(psi0, bigger.cavity_cutoff)?, t_span, cfg)?;
    let mut cutoff_shift = compare_trajectories(&qubit, &qubit2, &[])?;
    for (k, &t) in qubit.times.iter().enumerate() {
        let other = interpolate(&qubit2.times, &photons2, t)?;
        cutoff_shift = cutoff_shift.max((photon_number[k] - other).abs());
    }
    if cutoff_shift > cfg.cutoff_tolerance {
        return Err(SwapError::CutoffNotConverged {
            cutoff: params.cavity_cutoff,
            shift: cutoff_shift,
            tolerance: cfg.cutoff_tolerance,
        });
    }

    let photon_rate_max = qubit.times.windows(2).zip(photon_number.windows(2))
        .map(|(t, n)| ((n[1] - n[0]) / (t[1] - t[0])).abs())
        .fold(0.0, f64::max);
    Ok(FullModelRun { trajectory, qubit, photon_number, photon_rate_max, hierarchy, cutoff_shift })
}

/// Maximum absolute population deviation over `labels` (all shared labels
/// when empty). `b` is linearly interpolated onto the sample times of `a`
/// that fall inside its range.
pub fn compare_trajectories(a: &PopulationSeries, b: &PopulationSeries, labels: &[&str]) -> SResult<f64> {
    let labels: Vec<String> = if labels.is_empty() {
        a.labels.iter().filter(|l| b.labels.contains(l)).cloned().collect()
    } else {
        labels.iter().map(|s| s.to_string()).collect()
    };
    if a.times.is_empty() || b.times.is_empty() {
        return Err(SwapError::param("trajectory", "empty trajectory"));
    }
    let same_grid = a.times == b.times;
    let (lo, hi) = (b.t_start(), b.t_end());
    let slack = 1e-12 * lo.abs().max(hi.abs()).max(1.0);
    let inside: Vec<usize> = (0..a.times.len())
        .filter(|&k| a.times[k] >= lo - slack && a.times[k] <= hi + slack)
        .collect();
    if inside.is_empty() {
        return Err(SwapError::OutOfRange { t: a.t_start(), t0: lo, t1: hi });
    }
    let mut worst: f64 = 0.0;
    for label in &labels {
        let ka = a.label_index(label)?;
        let kb = b.label_index(label)?;
        for &k in &inside {
            let other = if same_grid {
                b.values[kb][k]
            } else {
                interpolate(&b.times, &b.values[kb], a.times[k])?
            };
            worst = worst.max((a.values[ka][k] - other).abs());
        }
    }
    Ok(worst)
}
