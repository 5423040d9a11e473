//! Closed-form quantities left over after adiabatically eliminating the atomic
//! excited states and then the cavity mode.

use std::fmt;
use num_complex::Complex64 as C64;
use serde::Serialize;
use crate::{
    error::{ SResult, SwapError },
    model::{ CouplingOrder, SystemParams, LEVEL_F, LEVEL_G },
    tensor::{ embed, ops, Operator, SpaceSpec },
};

/// `constant + slope · x^n`, where `x` is the value of `(b + b†)`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct Affine {
    pub constant: f64,
    pub slope: f64,
}

impl Affine {
    pub fn at(&self, x: f64, order: CouplingOrder) -> f64 {
        self.constant + self.slope * x.powi(order.exponent())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct CoefficientSet {
    #[serde(skip)]
    pub order: CouplingOrder,
    /// Shift of |g1 g2>.
    pub a: Affine,
    /// Shift of |g1 f2> and |f1 g2>.
    pub b: Affine,
    /// Shift of |f1 f2>.
    pub c: Affine,
    /// Exchange amplitude.
    pub d: Affine,
    pub b_approx: Affine,
    pub d_approx: Affine,
    /// Coupling per unit `X'` in the oscillator interaction picture.
    pub eta: f64,
    /// `eta · X0^n`: peak exchange rate under the classical drive.
    pub lambda: f64,
    pub lambda_prime: f64,
    /// `lambda / g'`, i.e. the same expression with the optomechanical
    /// coupling left out.
    pub lambda_per_gprime: f64,
}

impl CoefficientSet {
    pub fn a_at(&self, x: f64) -> f64 { self.a.at(x, self.order) }
    pub fn b_at(&self, x: f64) -> f64 { self.b.at(x, self.order) }
    pub fn c_at(&self, x: f64) -> f64 { self.c.at(x, self.order) }
    pub fn d_at(&self, x: f64) -> f64 { self.d.at(x, self.order) }
    pub fn b_approx_at(&self, x: f64) -> f64 { self.b_approx.at(x, self.order) }
    pub fn d_approx_at(&self, x: f64) -> f64 { self.d_approx.at(x, self.order) }
}

fn nonzero(key: &str, v: f64) -> SResult<f64> {
    if v == 0.0 || !v.is_finite() {
        Err(SwapError::param(key, format!("detuning must be finite and nonzero (got {v})")))
    } else {
        Ok(v)
    }
}

/// `2 (√2)^n |Ω g / (δ ξ)|²`, the prefactor shared by η and λ.
fn exchange_prefactor(order: CouplingOrder, omega: C64, g: C64, delta: f64, xi: f64) -> f64 {
    let n = order.exponent();
    2.0 * 2f64.sqrt().powi(n) * (omega * g / (delta * xi)).norm_sqr()
}

pub fn coefficients(params: &SystemParams) -> SResult<CoefficientSet> {
    let big = nonzero("delta1", params.common_detuning()?)?;
    let delta = nonzero("delta", params.delta)?;
    let xi = nonzero("xi", params.delta - big)?;
    let g = params.common_coupling()?;
    let om2 = params.omega.norm_sqr();
    let g2 = g.norm_sqr();
    let og2 = om2 * g2;
    let gp = params.gprime;

    let raman = og2 / (big * big) / delta;
    let slope_g = -2.0 * og2 / (delta * big).powi(2) * gp;
    let slope_f = -2.0 * og2 / (delta * xi).powi(2) * gp;
    let pair_shift = delta - om2 / xi + g2 / big;

    let a = Affine { constant: 2.0 * om2 / big, slope: slope_g };
    let b = Affine { constant: raman + pair_shift, slope: slope_f };
    let c = Affine {
        constant: 4.0 / delta * og2 / (xi * xi) + 2.0 * (delta - 2.0 * g2 / xi),
        slope: 0.0,
    };
    let d = Affine { constant: raman, slope: slope_f };
    let b_approx = Affine { constant: pair_shift, slope: 0.0 };
    let d_approx = Affine { constant: 0.0, slope: slope_f };

    let pref = exchange_prefactor(params.order, params.omega, g, delta, xi);
    let x0n = params.x0.powi(params.order.exponent());
    let eta = pref * gp;
    let lambda = eta * x0n;
    Ok(CoefficientSet {
        order: params.order,
        a, b, c, d, b_approx, d_approx,
        eta,
        lambda,
        lambda_prime: lambda / params.omega_m,
        lambda_per_gprime: pref * x0n,
    })
}

/// Cavity annihilation operator after adiabatic elimination, on the two-qubit
/// space:
/// `(1/δ)[(Ω*g*/Δ)(|g2><g2|σ₊⁽¹⁾ + |g1><g1|σ₊⁽²⁾) − √2(Ω*g*/ξ)(|f2><f2|σ₊⁽¹⁾ + |f1><f1|σ₊⁽²⁾)]`.
pub fn eliminated_cavity_field(params: &SystemParams) -> SResult<Operator> {
    let big = nonzero("delta1", params.common_detuning()?)?;
    let delta = nonzero("delta", params.delta)?;
    let xi = nonzero("xi", params.delta - big)?;
    let g = params.common_coupling()?;
    let cc = (params.omega * g).conj();

    let space = SpaceSpec::new([2, 2])?;
    let sp = ops::transition(2, LEVEL_F, LEVEL_G);
    let conditioned = |level: usize| -> SResult<Operator> {
        let p = ops::projector(2, level);
        Ok(&(&embed(&p, 1, &space)? * &embed(&sp, 0, &space)?)
            + &(&embed(&p, 0, &space)? * &embed(&sp, 1, &space)?))
    };
    let via_g = conditioned(LEVEL_G)?.scale(cc / (big * delta));
    let via_f = conditioned(LEVEL_F)?.scale(-cc * 2f64.sqrt() / (xi * delta));
    Ok(&via_g + &via_f)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Flag {
    Pass,
    Marginal,
    Fail,
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pass => "pass",
            Self::Marginal => "marginal",
            Self::Fail => "fail",
        })
    }
}

/// Ratios at or above `pass` pass; at or above `marginal` are marginal.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Thresholds {
    pub pass: f64,
    pub marginal: f64,
}

impl Default for Thresholds {
    fn default() -> Self { Self { pass: 50.0, marginal: 10.0 } }
}

impl Thresholds {
    pub fn classify(&self, ratio: f64) -> Flag {
        if ratio >= self.pass {
            Flag::Pass
        } else if ratio >= self.marginal {
            Flag::Marginal
        } else {
            Flag::Fail
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioCheck {
    pub name: &'static str,
    pub ratio: f64,
    pub flag: Flag,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HierarchyReport {
    pub checks: Vec<RatioCheck>,
}

impl HierarchyReport {
    pub fn get(&self, name: &str) -> Option<&RatioCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Worst flag across all checks.
    pub fn overall(&self) -> Flag {
        self.checks.iter().map(|c| c.flag)
            .max_by_key(|f| match f { Flag::Pass => 0, Flag::Marginal => 1, Flag::Fail => 2 })
            .unwrap_or(Flag::Pass)
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 { f64::INFINITY } else { num.abs() / den.abs() }
}

/// Dimensionless ratios behind the two elimination steps:
/// `excited_state` = Δ / max(|Ω|, |g|), `cavity` = δ / max(|Ωg/Δ|, g'),
/// `pump` = δ / ε.
pub fn hierarchy_check(params: &SystemParams, thresholds: Thresholds) -> HierarchyReport {
    let big = params.delta1.abs().min(params.delta2.abs());
    let couplings = params.omega.norm().max(params.g1.norm()).max(params.g2.norm());
    let raman = if couplings == 0.0 {
        0.0
    } else {
        params.omega.norm() * params.g1.norm().max(params.g2.norm()) / big
    };
    let entries = [
        ("excited_state", ratio(big, couplings)),
        ("cavity", ratio(params.delta, raman.max(params.gprime.abs()))),
        ("pump", ratio(params.delta, params.epsilon)),
    ];
    HierarchyReport {
        checks: entries.iter()
            .map(|&(name, r)| RatioCheck { name, ratio: r, flag: thresholds.classify(r) })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ build_hamiltonian, Stage };
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c(re: f64) -> C64 { C64::new(re, 0.0) }

    fn membrane() -> SystemParams {
        SystemParams {
            omega: c(1e6), g1: c(1e6), g2: c(1e6),
            delta: 1e7, delta1: 1e7 - 1.0, delta2: 1e7 - 1.0,
            gprime: 5.65e-5, order: CouplingOrder::Quadratic,
            omega_m: 2.0 * PI * 134e3, x0: 1.0,
            ..Default::default()
        }
    }

    fn toroid(scale_big: f64) -> SystemParams {
        SystemParams {
            omega: c(1e6), g1: c(1e6), g2: c(1e6),
            delta: 1e7, delta1: 1e7 * scale_big, delta2: 1e7 * scale_big,
            gprime: 3.4e4, order: CouplingOrder::Linear,
            omega_m: 2.0 * PI * 78e6,
            ..Default::default()
        }
    }

    #[test]
    fn a_at_rest() {
        let p = membrane();
        let cs = coefficients(&p).unwrap();
        assert_eq!(cs.a_at(0.0), 2.0 * 1e12 / (1e7 - 1.0));
    }

    #[test]
    fn membrane_lambda() {
        let cs = coefficients(&membrane()).unwrap();
        assert!((cs.lambda - 2.26e6).abs() / 2.26e6 < 1e-9);
        assert!((cs.lambda_prime - 2.684).abs() / 2.684 < 1e-3);
    }

    #[test]
    fn d_ratio_approaches_one() {
        let x = 2f64.sqrt();
        let mut last = f64::INFINITY;
        for xi in [1e4, 1e2, 1.0] {
            let p = SystemParams { delta1: 1e7 - xi, delta2: 1e7 - xi, ..membrane() };
            let cs = coefficients(&p).unwrap();
            // both branches evaluated straight from their closed forms
            let og = 1e24f64;
            let d_full = og / (p.delta1 * p.delta1) / 1e7 - 2.0 * og / (1e7 * xi).powi(2) * p.gprime * x * x;
            let d_app = -2.0 * og / (1e7 * xi).powi(2) * p.gprime * x * x;
            assert!((cs.d_at(x) - d_full).abs() <= 1e-9 * d_full.abs());
            assert!((cs.d_approx_at(x) - d_app).abs() <= 1e-9 * d_app.abs());
            let dev = (cs.d_at(x) / cs.d_approx_at(x) - 1.0).abs();
            assert!(dev < last);
            last = dev;
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn degenerate_detunings_rejected() {
        let p = SystemParams { delta1: 1e7, delta2: 1e7, ..membrane() };
        assert!(matches!(coefficients(&p), Err(SwapError::InvalidParameter { ref key, .. }) if key == "xi"));
        let p = SystemParams { delta1: 0.0, delta2: 0.0, ..membrane() };
        assert!(matches!(coefficients(&p), Err(SwapError::InvalidParameter { ref key, .. }) if key == "delta1"));
        let p = SystemParams { delta: 0.0, ..membrane() };
        assert!(matches!(coefficients(&p), Err(SwapError::InvalidParameter { ref key, .. }) if key == "delta"));
        assert!(eliminated_cavity_field(&SystemParams { delta1: 1e7, delta2: 1e7, ..membrane() }).is_err());
    }

    #[test]
    fn cavity_field_zero_without_pump() {
        let p = SystemParams { omega: c(0.0), ..membrane() };
        assert!(eliminated_cavity_field(&p).unwrap().is_zero(0.0));
    }

    #[test]
    fn cavity_field_exchange_symmetric() {
        let p = SystemParams { omega: C64::new(0.3, 0.2), g1: C64::new(0.1, -0.4), g2: C64::new(0.1, -0.4),
                               delta: 2.0, delta1: 1.3, delta2: 1.3, ..Default::default() };
        let a = eliminated_cavity_field(&p).unwrap();
        // permutation |i j> -> |j i>
        let n = 4;
        for r in 0..n {
            for col in 0..n {
                let sw = |k: usize| (k % 2) * 2 + k / 2;
                assert_eq!(a.get(r, col), a.get(sw(r), sw(col)));
            }
        }
    }

    // largest singular value from the eigenvalues of A†A, via cyclic Jacobi
    // rotations on the real symmetric embedding [[X, -Y], [Y, X]]
    fn largest_singular_value(a: &Operator) -> f64 {
        let ata = &a.dagger() * a;
        let n = ata.dim();
        let mut m = vec![vec![0.0; 2 * n]; 2 * n];
        for i in 0..n {
            for j in 0..n {
                let z = ata.get(i, j);
                m[i][j] = z.re;
                m[i + n][j + n] = z.re;
                m[i][j + n] = -z.im;
                m[i + n][j] = z.im;
            }
        }
        let dim = 2 * n;
        for _ in 0..100 {
            let off: f64 = (0..dim).flat_map(|i| (0..dim).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| m[i][j] * m[i][j]).sum();
            if off < 1e-40 {
                break;
            }
            for p in 0..dim {
                for q in p + 1..dim {
                    if m[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let cs = 1.0 / (t * t + 1.0).sqrt();
                    let sn = t * cs;
                    for k in 0..dim {
                        let (mkp, mkq) = (m[k][p], m[k][q]);
                        m[k][p] = cs * mkp - sn * mkq;
                        m[k][q] = sn * mkp + cs * mkq;
                    }
                    for k in 0..dim {
                        let (mpk, mqk) = (m[p][k], m[q][k]);
                        m[p][k] = cs * mpk - sn * mqk;
                        m[q][k] = sn * mpk + cs * mqk;
                    }
                }
            }
        }
        (0..dim).map(|i| m[i][i]).fold(0.0, f64::max).sqrt()
    }

    proptest! {
        #[test]
        fn cavity_field_singular_value(om in 0.1..2.0f64, g in 0.1..2.0f64, delta in 1.0..5.0f64,
                                       big in 0.5..8.0f64, phase in -3.0..3.0f64) {
            prop_assume!((delta - big).abs() > 0.05);
            let p = SystemParams {
                omega: C64::from_polar(om, phase), g1: c(g), g2: c(g),
                delta, delta1: big, delta2: big, ..Default::default()
            };
            let a = eliminated_cavity_field(&p).unwrap();
            let xi = delta - big;
            let want = 2f64.sqrt() * om * g * (1.0 / (big * delta)).abs().max(2f64.sqrt() / (delta * xi).abs());
            let got = largest_singular_value(&a);
            prop_assert!((got - want).abs() <= 1e-8 * want);
        }

        #[test]
        fn lambda_scaling(k in 0.2..5.0f64, n in 1i64..=2) {
            let base = SystemParams {
                omega: C64::new(0.3, 0.4), g1: c(0.7), g2: c(0.7),
                delta: 10.0, delta1: 9.5, delta2: 9.5, gprime: 0.02,
                order: CouplingOrder::from_exponent(n).unwrap(), x0: 1.7, ..Default::default()
            };
            let l0 = coefficients(&base).unwrap().lambda;
            let rel = |p: &SystemParams, want: f64| {
                let l = coefficients(p).unwrap().lambda;
                (l - want).abs() <= 1e-9 * want.abs()
            };
            let p = SystemParams { omega: base.omega * k, ..base.clone() };
            prop_assert!(rel(&p, l0 * k * k));
            let p = SystemParams { g1: base.g1 * k, g2: base.g2 * k, ..base.clone() };
            prop_assert!(rel(&p, l0 * k * k));
            let p = SystemParams { gprime: base.gprime * k, ..base.clone() };
            prop_assert!(rel(&p, l0 * k));
            // ξ scaled with Δ = δ - kξ
            let xi = base.delta - base.delta1;
            let p = SystemParams { delta1: base.delta - k * xi, delta2: base.delta - k * xi, ..base.clone() };
            prop_assert!(rel(&p, l0 / (k * k)));
            // δ scaled at fixed ξ
            let p = SystemParams { delta: base.delta * k, delta1: base.delta * k - xi,
                                   delta2: base.delta * k - xi, ..base.clone() };
            prop_assert!(rel(&p, l0 / (k * k)));
        }
    }

    #[test]
    fn order_ratio() {
        for x0 in [0.5, 1.0, 3.0] {
            let p1 = SystemParams { order: CouplingOrder::Linear, x0, ..membrane() };
            let p2 = SystemParams { order: CouplingOrder::Quadratic, x0, ..membrane() };
            let r = coefficients(&p2).unwrap().lambda / coefficients(&p1).unwrap().lambda;
            assert!((r - 2f64.sqrt() * x0).abs() < 1e-12 * r);
        }
    }

    #[test]
    fn toroid_without_gprime() {
        // 2√2 |Ωg/(δξ)|² with ξ = 2
        let p = SystemParams { delta1: 1e7 - 2.0, delta2: 1e7 - 2.0, ..toroid(1.0) };
        let cs = coefficients(&p).unwrap();
        let want = 2.0 * 2f64.sqrt() / 4.0 * 1e10;
        assert!((cs.lambda_per_gprime - want).abs() < 1e-6 * want);
        assert!((cs.lambda - want * 3.4e4).abs() < 1e-6 * want * 3.4e4);
    }

    #[test]
    fn hierarchy_flags() {
        let r = hierarchy_check(&SystemParams::default(), Thresholds::default());
        assert!(r.checks.iter().all(|c| c.ratio.is_infinite() && c.flag == Flag::Pass));

        let r = hierarchy_check(&toroid(1.0), Thresholds::default());
        let ex = r.get("excited_state").unwrap();
        assert!((ex.ratio - 10.0).abs() < 1e-12);
        assert_eq!(ex.flag, Flag::Marginal);
        assert_eq!(r.overall(), Flag::Marginal);

        let r = hierarchy_check(&toroid(10.0), Thresholds::default());
        assert_eq!(r.get("excited_state").unwrap().flag, Flag::Pass);

        let r = hierarchy_check(&SystemParams { epsilon: 1e6, ..toroid(1.0) }, Thresholds::default());
        assert_eq!(r.get("pump").unwrap().flag, Flag::Marginal);
        assert_eq!(r.get("pump").unwrap().ratio, 10.0);
    }

    #[test]
    fn h5_uses_leading_order() {
        let p = SystemParams { omega: c(0.3), g1: c(0.2), g2: c(0.2), delta: 5.0,
                               delta1: 4.9, delta2: 4.9, gprime: 0.01, ..Default::default() };
        let cs = coefficients(&p).unwrap();
        let h = build_hamiltonian(Stage::H5, &p).unwrap();
        let m = h.evaluate(0.0);
        let x = 2f64.sqrt() * p.x0;
        assert!((m.get(1, 1).re + cs.b_approx_at(x)).abs() < 1e-12);
        assert!((m.get(1, 2).re + cs.d_approx_at(x)).abs() < 1e-12);
        assert!((m.get(1, 2).re - cs.lambda).abs() < 1e-12);
        assert_eq!(m.get(0, 0).re, 0.0);
    }
}
