//! Swap-gate timing, fidelity readout and experimental feasibility numbers.

use std::f64::consts::PI;
use serde::Serialize;
use crate::{
    dynamics::PopulationSeries,
    error::{ SResult, SwapError },
    model::{ CouplingOrder, SystemParams },
    reduction::{ coefficients, hierarchy_check, HierarchyReport, Thresholds },
};

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.0545718e-34;
/// Boltzmann constant, J/K.
pub const K_B: f64 = 1.380649e-23;
/// Oscillator amplitude decay time in units of 1/ω_m used for the margin.
pub const OSCILLATOR_DECAY_PERIODS: f64 = 1e2;

const ROOT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GateSolution {
    pub n: i32,
    /// Branch index; 0 is the earliest swap.
    pub s: u32,
    /// Swap time in units of 1/ω_m.
    pub t: f64,
    pub t_seconds: Option<f64>,
}

impl GateSolution {
    pub fn with_frequency(mut self, omega_m: f64) -> Self {
        self.t_seconds = Some(self.t / omega_m);
        self
    }
}

/// Bisection for the root of a continuous `f` with `f(lo) <= 0 <= f(hi)`.
pub fn bisect<F>(mut lo: f64, mut hi: f64, f: F, tol: f64) -> SResult<f64>
where F: Fn(f64) -> f64
{
    let (flo, fhi) = (f(lo), f(hi));
    if flo > 0.0 || fhi < 0.0 {
        return Err(SwapError::NoSolution(format!(
            "bracket [{lo}, {hi}] does not enclose a root (f = {flo}, {fhi})"
        )));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Earliest-but-`s` time at which |g1 f2> has been fully transferred to
/// |f1 g2>, in units of 1/ω_m.
///
/// `n = 1`: `sin(λ′ sin T) = ±1`, so `T = asin((2s+1)π / (2λ′))`, which
/// exists only while the argument is at most one.
/// `n = 2`: `2T + sin 2T = 2π(2s+1)/λ′`, solved by bisection since the left
/// side is nondecreasing.
pub fn swap_time(order: CouplingOrder, lambda_prime: f64, s: u32) -> SResult<GateSolution> {
    if !(lambda_prime > 0.0) || !lambda_prime.is_finite() {
        return Err(SwapError::param("lambda_prime", format!("must be finite and > 0, got {lambda_prime}")));
    }
    let branch = (2 * s + 1) as f64;
    let t = match order {
        CouplingOrder::Linear => {
            let arg = branch * PI / (2.0 * lambda_prime);
            if arg > 1.0 {
                return Err(SwapError::NoSolution(format!(
                    "n = 1 needs λ′ >= (2s+1)π/2 = {:.6} for s = {s}, got {lambda_prime}",
                    branch * PI / 2.0
                )));
            }
            arg.asin()
        }
        CouplingOrder::Quadratic => {
            let target = 2.0 * PI * branch / lambda_prime;
            let hi = PI * branch / lambda_prime + 1.0;
            bisect(0.0, hi, |t| 2.0 * t + (2.0 * t).sin() - target, ROOT_TOL)?
        }
    };
    Ok(GateSolution { n: order.exponent(), s, t, t_seconds: None })
}

/// All branches `s = 0..=s_max` that have a solution.
pub fn enumerate_swap_times(order: CouplingOrder, lambda_prime: f64, s_max: u32) -> SResult<Vec<GateSolution>> {
    let mut out = Vec::new();
    for s in 0..=s_max {
        match swap_time(order, lambda_prime, s) {
            Ok(sol) => out.push(sol),
            Err(SwapError::NoSolution(_)) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Population of `target` at time `t`, interpolated linearly between
/// samples.
pub fn swap_fidelity(traj: &PopulationSeries, initial: &str, target: &str, t: f64) -> SResult<f64> {
    traj.label_index(initial)?;
    traj.value_at(target, t)
}

/// `√(ħ / (2 m ω_m))` in meters.
pub fn zero_point_spread(mass: f64, omega_m: f64) -> f64 {
    (HBAR / (2.0 * mass * omega_m)).sqrt()
}

/// `ħ ω_m / k_B` in kelvin.
pub fn quantum_temperature(omega_m: f64) -> f64 {
    HBAR * omega_m / K_B
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub n: i32,
    pub x_zpf: f64,
    pub t_q: f64,
    pub lambda: f64,
    pub lambda_prime: f64,
    pub lambda_per_gprime: f64,
    pub gate_times: Vec<GateSolution>,
    /// `(10²/ω_m) / T`, or `None` when no swap exists.
    pub decay_margin_ratio: Option<f64>,
    pub hierarchy: HierarchyReport,
}

pub fn feasibility(params: &SystemParams) -> SResult<FeasibilityReport> {
    feasibility_with(params, 2)
}

pub fn feasibility_with(params: &SystemParams, s_max: u32) -> SResult<FeasibilityReport> {
    params.validate()?;
    let mass = params.mass.ok_or_else(|| SwapError::param("mass", "feasibility needs the oscillator mass"))?;
    let cs = coefficients(params)?;
    let gate_times: Vec<GateSolution> = if cs.lambda_prime > 0.0 {
        enumerate_swap_times(params.order, cs.lambda_prime, s_max)?
            .into_iter()
            .map(|g| g.with_frequency(params.omega_m))
            .collect()
    } else {
        Vec::new()
    };
    let decay_margin_ratio = gate_times.first().map(|g| OSCILLATOR_DECAY_PERIODS / g.t);
    Ok(FeasibilityReport {
        n: params.order.exponent(),
        x_zpf: zero_point_spread(mass, params.omega_m),
        t_q: quantum_temperature(params.omega_m),
        lambda: cs.lambda,
        lambda_prime: cs.lambda_prime,
        lambda_per_gprime: cs.lambda_per_gprime,
        gate_times,
        decay_margin_ratio,
        hierarchy: hierarchy_check(params, Thresholds::default()),
    })
}
