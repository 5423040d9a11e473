//! Physical parameters and builders for every Hamiltonian stage, from the
//! composite atom-cavity-oscillator system down to the effective two-atom
//! exchange coupling.
//!
//! Units: all frequencies are angular (rad/s) and ħ = 1, so Hamiltonians carry
//! frequency units. Atom levels are indexed g ↦ 0, f ↦ 1, e ↦ 2; qubit-only
//! spaces keep g ↦ 0, f ↦ 1.

use std::{ fmt, str::FromStr, sync::Arc };
use ndarray::Array1;
use num_complex::Complex64 as C64;
use crate::{
    dynamics::DriveProfile,
    error::{ SResult, SwapError },
    reduction::{ self, Affine },
    tensor::{ embed, kron, ops, Operator, SpaceSpec, StateVector },
};

pub const LEVEL_G: usize = 0;
pub const LEVEL_F: usize = 1;
pub const LEVEL_E: usize = 2;

/// Order `n` of the radiation-pressure coupling `g' a†a (b + b†)^n`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum CouplingOrder {
    /// Movable end mirror.
    Linear,
    /// Membrane at a node or antinode.
    Quadratic,
}

impl CouplingOrder {
    pub fn exponent(self) -> i32 {
        match self {
            Self::Linear => 1,
            Self::Quadratic => 2,
        }
    }

    pub fn from_exponent(n: i64) -> SResult<Self> {
        match n {
            1 => Ok(Self::Linear),
            2 => Ok(Self::Quadratic),
            _ => Err(SwapError::param("n", format!("coupling order must be 1 or 2, got {n}"))),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum OscillatorMode {
    /// `(b + b†)` replaced by the c-number `√2 X_cl(t)`.
    Classical,
    /// Truncated Fock space with the given number of levels.
    Quantum { cutoff: usize },
}

/// Bare atomic level frequencies (relative to `|g>`), needed only for the
/// lab-frame stage that still carries the free atomic evolution.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct AtomicLevels {
    pub omega_eg: f64,
    pub omega_fg: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemParams {
    /// Classical pump Rabi frequency on `|g> <-> |e>`.
    pub omega: C64,
    pub g1: C64,
    pub g2: C64,
    /// Cavity-pump detuning `ω_c - ω_l`.
    pub delta: f64,
    /// Pump detuning `ω_eg - ω_p`.
    pub delta1: f64,
    /// Cavity detuning `ω_ef - ω_c`.
    pub delta2: f64,
    pub gprime: f64,
    pub order: CouplingOrder,
    pub omega_m: f64,
    pub epsilon: f64,
    /// Dimensionless initial oscillator quadrature amplitude.
    pub x0: f64,
    /// Amplitude decay rate of the classical drive (0 = undamped).
    pub gamma: f64,
    pub cavity_cutoff: usize,
    pub oscillator: OscillatorMode,
    /// Oscillator mass in kg, feasibility estimates only.
    pub mass: Option<f64>,
    pub atomic_levels: Option<AtomicLevels>,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            omega: C64::new(0.0, 0.0),
            g1: C64::new(0.0, 0.0),
            g2: C64::new(0.0, 0.0),
            delta: 1.0,
            delta1: 1.0,
            delta2: 1.0,
            gprime: 0.0,
            order: CouplingOrder::Linear,
            omega_m: 1.0,
            epsilon: 0.0,
            x0: 1.0,
            gamma: 0.0,
            cavity_cutoff: 4,
            oscillator: OscillatorMode::Classical,
            mass: None,
            atomic_levels: None,
        }
    }
}

fn relative_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

impl SystemParams {
    /// Check the parameter-wide invariants (finite values, positive
    /// oscillator frequency, cutoffs ≥ 2).
    pub fn validate(&self) -> SResult<()> {
        let reals = [
            ("omega", self.omega.re), ("omega", self.omega.im),
            ("g1", self.g1.re), ("g1", self.g1.im),
            ("g2", self.g2.re), ("g2", self.g2.im),
            ("delta", self.delta), ("delta1", self.delta1), ("delta2", self.delta2),
            ("gprime", self.gprime), ("omega_m", self.omega_m),
            ("epsilon", self.epsilon), ("x0", self.x0), ("gamma", self.gamma),
        ];
        for (key, v) in reals {
            if !v.is_finite() {
                return Err(SwapError::param(key, "must be finite"));
            }
        }
        if self.omega_m <= 0.0 {
            return Err(SwapError::param("omega_m", "must be > 0"));
        }
        if self.gamma < 0.0 {
            return Err(SwapError::param("gamma", "must be >= 0"));
        }
        if self.cavity_cutoff < 2 {
            return Err(SwapError::param("cavity_cutoff", "must be >= 2"));
        }
        if let OscillatorMode::Quantum { cutoff } = self.oscillator {
            if cutoff < 2 {
                return Err(SwapError::param("oscillator_cutoff", "must be >= 2"));
            }
        }
        if let Some(m) = self.mass {
            if !(m.is_finite() && m > 0.0) {
                return Err(SwapError::param("mass", "must be finite and > 0"));
            }
        }
        Ok(())
    }

    /// Common single-photon detuning; requires `delta1 == delta2`.
    pub fn common_detuning(&self) -> SResult<f64> {
        if !relative_eq(self.delta1, self.delta2) {
            return Err(SwapError::param(
                "delta2",
                format!("effective stages need delta1 == delta2 (got {} vs {})", self.delta1, self.delta2),
            ));
        }
        Ok(self.delta1)
    }

    /// Common atom-cavity coupling; requires `g1 == g2`.
    pub fn common_coupling(&self) -> SResult<C64> {
        if !(relative_eq(self.g1.re, self.g2.re) && relative_eq(self.g1.im, self.g2.im)) {
            return Err(SwapError::param("g2", "effective stages need g1 == g2"));
        }
        Ok(self.g1)
    }

    /// `ξ = δ - Δ`.
    pub fn xi(&self) -> SResult<f64> {
        Ok(self.delta - self.common_detuning()?)
    }

    pub fn drive(&self) -> DriveProfile {
        DriveProfile { x0: self.x0, omega_m: self.omega_m, gamma: self.gamma }
    }
}

/// Scalar function of time attached to an operator term.
#[derive(Clone)]
pub struct Coefficient {
    f: Arc<dyn Fn(f64) -> C64 + Send + Sync>,
    frequency: f64,
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Coefficient").field("frequency", &self.frequency).finish()
    }
}

impl Coefficient {
    pub fn constant(c: C64) -> Self {
        Self { f: Arc::new(move |_| c), frequency: 0.0 }
    }

    pub fn real(c: f64) -> Self { Self::constant(C64::new(c, 0.0)) }

    /// `amp * exp(i * omega * t)`.
    pub fn phase(amp: C64, omega: f64) -> Self {
        Self {
            f: Arc::new(move |t| amp * C64::from_polar(1.0, omega * t)),
            frequency: omega.abs(),
        }
    }

    /// Arbitrary function; `frequency` is the fastest angular frequency it
    /// contains and feeds step-size selection.
    pub fn from_fn<F>(frequency: f64, f: F) -> Self
    where F: Fn(f64) -> C64 + Send + Sync + 'static
    {
        Self { f: Arc::new(f), frequency: frequency.abs() }
    }

    pub fn eval(&self, t: f64) -> C64 { (self.f)(t) }

    pub fn frequency(&self) -> f64 { self.frequency }
}

#[derive(Clone, Debug)]
enum TermKind {
    /// `Re f(t) · O` with `O` Hermitian.
    Hermitian,
    /// `f(t) · O + conj(f(t)) · O†`.
    Pair(Operator),
}

/// Nonzero entries `(row, col, value)` of a matrix.
type Entries = Vec<(usize, usize, C64)>;

fn nonzeros(op: &Operator) -> Entries {
    op.matrix().indexed_iter()
        .filter(|(_, z)| **z != C64::new(0.0, 0.0))
        .map(|((r, c), z)| (r, c, *z))
        .collect()
}

#[derive(Clone, Debug)]
pub struct Term {
    coeff: Coefficient,
    op: Operator,
    kind: TermKind,
    entries: Entries,
    entries_dag: Entries,
}

impl Term {
    pub fn coefficient(&self) -> &Coefficient { &self.coeff }

    pub fn operator(&self) -> &Operator { &self.op }

    pub fn is_pair(&self) -> bool { matches!(self.kind, TermKind::Pair(_)) }
}

/// `H(t) = Σ_k f_k(t) O_k`, stored so that every evaluation is Hermitian:
/// Hermitian operators take the real part of their coefficient and
/// non-Hermitian operators are stored together with their adjoint.
#[derive(Clone, Debug)]
pub struct TimeDependentHamiltonian {
    space: SpaceSpec,
    terms: Vec<Term>,
}

impl TimeDependentHamiltonian {
    pub fn new(space: SpaceSpec) -> Self { Self { space, terms: Vec::new() } }

    pub fn space(&self) -> &SpaceSpec { &self.space }

    pub fn terms(&self) -> &[Term] { &self.terms }

    fn check(&self, op: &Operator) -> SResult<()> {
        if op.space() != &self.space {
            return Err(SwapError::SpaceMismatch(format!(
                "term on {:?} added to Hamiltonian on {:?}", op.space().dims(), self.space.dims()
            )));
        }
        Ok(())
    }

    /// Add `Re f(t) · op`; `op` must be Hermitian.
    pub fn add_hermitian(&mut self, coeff: Coefficient, op: Operator) -> SResult<()> {
        self.check(&op)?;
        if !crate::tensor::is_hermitian(&op, 1e-12 * op.max_abs().max(1.0)) {
            return Err(SwapError::SpaceMismatch("non-Hermitian operator in Hermitian term".into()));
        }
        if !op.is_zero(0.0) {
            let entries = nonzeros(&op);
            self.terms.push(Term { coeff, op, kind: TermKind::Hermitian, entries, entries_dag: Vec::new() });
        }
        Ok(())
    }

    /// Add `f(t) · op + h.c.`.
    pub fn add_pair(&mut self, coeff: Coefficient, op: Operator) -> SResult<()> {
        self.check(&op)?;
        if !op.is_zero(0.0) {
            let dag = op.dagger();
            let (entries, entries_dag) = (nonzeros(&op), nonzeros(&dag));
            self.terms.push(Term { coeff, op, kind: TermKind::Pair(dag), entries, entries_dag });
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool { self.terms.is_empty() }

    pub fn evaluate(&self, t: f64) -> Operator {
        let mut acc = Operator::zeros(&self.space);
        for term in &self.terms {
            let c = term.coeff.eval(t);
            match &term.kind {
                TermKind::Hermitian => {
                    acc = &acc + &term.op.scale(C64::new(c.re, 0.0));
                }
                TermKind::Pair(dag) => {
                    acc = &acc + &term.op.scale(c);
                    acc = &acc + &dag.scale(c.conj());
                }
            }
        }
        acc
    }

    /// `H(t) ψ` on raw amplitudes.
    pub fn apply(&self, t: f64, psi: &Array1<C64>) -> Array1<C64> {
        let mut out = Array1::zeros(psi.len());
        for term in &self.terms {
            let c = term.coeff.eval(t);
            let c = match term.kind {
                TermKind::Hermitian => C64::new(c.re, 0.0),
                TermKind::Pair(_) => c,
            };
            for &(r, k, z) in &term.entries {
                out[r] += c * z * psi[k];
            }
            let cc = c.conj();
            for &(r, k, z) in &term.entries_dag {
                out[r] += cc * z * psi[k];
            }
        }
        out
    }

    /// Fastest explicit angular frequency among the coefficients.
    pub fn max_frequency(&self) -> f64 {
        self.terms.iter().map(|t| t.coeff.frequency()).fold(0.0, f64::max)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Stage {
    /// Cavity-oscillator coupling alone.
    Cm,
    /// Frame rotating at the cavity-pump frequency.
    H1,
    /// Interaction picture with respect to the free atoms.
    H2,
    /// Excited states eliminated.
    H3,
    /// Cavity mode eliminated.
    H4,
    /// Restricted to the single-excitation subspace, leading-order
    /// coefficients.
    H5,
    /// Interaction picture with respect to the oscillator.
    VeffInt,
    /// Classical oscillator drive on span{|g1 f2>, |f1 g2>}.
    VeffClassical,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Cm, Stage::H1, Stage::H2, Stage::H3,
        Stage::H4, Stage::H5, Stage::VeffInt, Stage::VeffClassical,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Cm => "cm",
            Self::H1 => "h1",
            Self::H2 => "h2",
            Self::H3 => "h3",
            Self::H4 => "h4",
            Self::H5 => "h5",
            Self::VeffInt => "veff-int",
            Self::VeffClassical => "veff-classical",
        }
    }
}

impl FromStr for Stage {
    type Err = SwapError;
    fn from_str(s: &str) -> SResult<Self> {
        Self::ALL.iter().copied()
            .find(|st| st.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| SwapError::param("stage", format!("unknown stage `{s}`")))
    }
}

/// Oscillator slot bookkeeping shared by the builders.
struct Oscillator {
    order: CouplingOrder,
    drive: DriveProfile,
    /// Fock cutoff and slot index in quantum mode.
    quantum: Option<(usize, usize)>,
    omega_m: f64,
}

impl Oscillator {
    fn dims(params: &SystemParams) -> Vec<usize> {
        match params.oscillator {
            OscillatorMode::Classical => vec![],
            OscillatorMode::Quantum { cutoff } => vec![cutoff],
        }
    }

    fn new(params: &SystemParams, space: &SpaceSpec) -> Self {
        let quantum = match params.oscillator {
            OscillatorMode::Classical => None,
            OscillatorMode::Quantum { cutoff } => Some((cutoff, space.len() - 1)),
        };
        Self { order: params.order, drive: params.drive(), quantum, omega_m: params.omega_m }
    }

    /// Add `scale · (b + b†)^n ⊗ op`, substituting `√2 X_cl(t)` classically.
    fn add_quadrature_term(
        &self,
        h: &mut TimeDependentHamiltonian,
        scale: f64,
        op: &Operator,
    ) -> SResult<()> {
        if scale == 0.0 {
            return Ok(());
        }
        let n = self.order.exponent();
        match self.quantum {
            None => {
                let drive = self.drive;
                let coeff = Coefficient::from_fn(
                    n as f64 * drive.omega_m,
                    move |t| C64::new(scale * drive.quadrature(t).powi(n), 0.0),
                );
                h.add_hermitian(coeff, op.clone())
            }
            Some((cutoff, slot)) => {
                let xn = ops::displacement_quadrature(cutoff).pow(n as u32);
                let full = &embed(&xn, slot, h.space())? * op;
                h.add_hermitian(Coefficient::real(scale), full)
            }
        }
    }

    /// Add `ω_m b†b` (quantum mode only) restricted by `atom_op`.
    fn add_free_term(&self, h: &mut TimeDependentHamiltonian, atom_op: &Operator) -> SResult<()> {
        if let Some((cutoff, slot)) = self.quantum {
            let num = embed(&ops::number(cutoff), slot, h.space())?;
            h.add_hermitian(Coefficient::real(self.omega_m), &num * atom_op)?;
        }
        Ok(())
    }
}

/// Lift an operator on the leading atom slots of `space` (which must match
/// `atoms.space()` as a prefix) to the full space.
fn lift_atoms(atoms: &Operator, space: &SpaceSpec) -> SResult<Operator> {
    let k = atoms.space().len();
    let rest = &space.dims()[k..];
    if space.dims()[..k] != *atoms.space().dims() {
        return Err(SwapError::SpaceMismatch(format!(
            "atom operator {:?} does not prefix {:?}", atoms.space().dims(), space.dims()
        )));
    }
    if rest.is_empty() {
        return Ok(atoms.clone());
    }
    let id = Operator::identity(&SpaceSpec::new(rest.to_vec())?);
    Ok(kron(atoms, &id))
}

/// Two-atom operator `|a1 b1><a2 b2|`-style product of local operators.
fn atom_pair(dim: usize, first: &Operator, second: &Operator) -> SResult<Operator> {
    let space = SpaceSpec::new([dim, dim])?;
    Ok(&embed(first, 0, &space)? * &embed(second, 1, &space)?)
}

/// Projector onto a two-atom product state.
fn pair_projector(dim: usize, l1: usize, l2: usize) -> SResult<Operator> {
    atom_pair(dim, &ops::projector(dim, l1), &ops::projector(dim, l2))
}

/// `σ₊⁽¹⁾σ₋⁽²⁾ + σ₋⁽¹⁾σ₊⁽²⁾` on two qubits (or the g/f block of two
/// three-level atoms).
pub fn exchange_operator(dim: usize) -> SResult<Operator> {
    let sp = ops::transition(dim, LEVEL_F, LEVEL_G);
    let sm = ops::transition(dim, LEVEL_G, LEVEL_F);
    Ok(&atom_pair(dim, &sp, &sm)? + &atom_pair(dim, &sm, &sp)?)
}

/// Build the Hamiltonian of the requested stage.
pub fn build_hamiltonian(stage: Stage, params: &SystemParams) -> SResult<TimeDependentHamiltonian> {
    params.validate()?;
    match stage {
        Stage::Cm => build_cm(params),
        Stage::H1 => build_atom_cavity(params, true),
        Stage::H2 => build_atom_cavity(params, false),
        Stage::H3 => build_h3(params),
        Stage::H4 => build_h4(params),
        Stage::H5 => build_h5(params),
        Stage::VeffInt => build_veff_int(params),
        Stage::VeffClassical => build_veff_classical(params),
    }
}

fn full_space(params: &SystemParams, atom_dim: usize, with_cavity: bool) -> SResult<SpaceSpec> {
    let mut dims = vec![atom_dim, atom_dim];
    if with_cavity {
        dims.push(params.cavity_cutoff);
    }
    dims.extend(Oscillator::dims(params));
    SpaceSpec::new(dims)
}

fn build_cm(params: &SystemParams) -> SResult<TimeDependentHamiltonian> {
    let space = full_space(params, 3, true)?;
    let mut h = TimeDependentHamiltonian::new(space.clone());
    let osc = Oscillator::new(params, &space);
    let num = embed(&ops::number(params.cavity_cutoff), 2, &space)?;
    osc.add_quadrature_term(&mut h, params.gprime, &num)?;
    Ok(h)
}

// Shared by the two composite-system frames. In the rotating frame the
// cavity creation operator carries exp(+i ω_l t); after moving to the
// interaction picture of the free atoms the two drives pick up exp(iΔ₁t) and
// exp(-i(Δ₂+δ)t).
fn build_atom_cavity(params: &SystemParams, lab_atoms: bool) -> SResult<TimeDependentHamiltonian> {
    let space = full_space(params, 3, true)?;
    let mut h = TimeDependentHamiltonian::new(space.clone());
    let osc = Oscillator::new(params, &space);
    let nc = params.cavity_cutoff;
    let a = embed(&ops::annihilation(nc), 2, &space)?;
    let adag = a.dagger();
    let num = &adag * &a;

    h.add_hermitian(Coefficient::real(params.delta), num.clone())?;
    osc.add_free_term(&mut h, &Operator::identity(&space))?;

    let (pump_freq, cavity_freq) = if lab_atoms {
        let levels = params.atomic_levels.ok_or_else(|| SwapError::param(
            "atomic_levels", "stage h1 needs omega_eg and omega_fg",
        ))?;
        let omega_ef = levels.omega_eg - levels.omega_fg;
        let omega_p = levels.omega_eg - params.delta1;
        let omega_l = omega_ef - params.delta2 - params.delta;
        for slot in 0..2 {
            let pe = embed(&ops::projector(3, LEVEL_E), slot, &space)?;
            let pf = embed(&ops::projector(3, LEVEL_F), slot, &space)?;
            h.add_hermitian(Coefficient::real(levels.omega_eg), pe)?;
            h.add_hermitian(Coefficient::real(levels.omega_fg), pf)?;
        }
        (-omega_p, omega_l)
    } else {
        (params.delta1, -(params.delta2 + params.delta))
    };

    for (slot, g) in [(0, params.g1), (1, params.g2)] {
        let eg = embed(&ops::transition(3, LEVEL_E, LEVEL_G), slot, &space)?;
        h.add_pair(Coefficient::phase(params.omega, pump_freq), eg)?;
        let fe = embed(&ops::transition(3, LEVEL_F, LEVEL_E), slot, &space)?;
        h.add_pair(Coefficient::phase(g, cavity_freq), &fe * &adag)?;
    }

    osc.add_quadrature_term(&mut h, params.gprime, &num)?;
    h.add_hermitian(Coefficient::real(params.epsilon), &a + &adag)?;
    Ok(h)
}

fn require_nonzero(key: &str, v: f64) -> SResult<f64> {
    if v == 0.0 {
        Err(SwapError::param(key, "detuning must be nonzero for effective stages"))
    } else {
        Ok(v)
    }
}

fn build_h3(params: &SystemParams) -> SResult<TimeDependentHamiltonian> {
    let big_delta = require_nonzero("delta1", params.common_detuning()?)?;
    let delta = require_nonzero("delta", params.delta)?;
    let xi = require_nonzero("xi", params.xi()?)?;
    let g = params.common_coupling()?;
    let omega2 = params.omega.norm_sqr();
    let g2 = g.norm_sqr();
    let c = g * params.omega;

    let space = full_space(params, 2, true)?;
    let mut h = TimeDependentHamiltonian::new(space.clone());
    let osc = Oscillator::new(params, &space);
    let nc = params.cavity_cutoff;
    let a = embed(&ops::annihilation(nc), 2, &space)?;
    let num = &a.dagger() * &a;

    h.add_hermitian(Coefficient::real(delta), num.clone())?;
    osc.add_free_term(&mut h, &Operator::identity(&space))?;

    // Stark shifts of the joint qubit states
    let stark = [
        (LEVEL_G, LEVEL_G, -2.0 * omega2 / big_delta),
        (LEVEL_F, LEVEL_F, -2.0 * (delta - 2.0 * g2 / xi)),
        (LEVEL_F, LEVEL_G, -(delta - omega2 / xi + g2 / big_delta)),
        (LEVEL_G, LEVEL_F, -(delta - omega2 / xi + g2 / big_delta)),
    ];
    for (l1, l2, shift) in stark {
        h.add_hermitian(Coefficient::real(shift), lift_atoms(&pair_projector(2, l1, l2)?, &space)?)?;
    }

    // Raman couplings conditioned on the partner atom
    let sm = ops::transition(2, LEVEL_G, LEVEL_F);
    let pg = ops::projector(2, LEVEL_G);
    let pf = ops::projector(2, LEVEL_F);
    let via_g = &atom_pair(2, &sm, &pg)? + &atom_pair(2, &pg, &sm)?;
    let via_f = &atom_pair(2, &sm, &pf)? + &atom_pair(2, &pf, &sm)?;
    h.add_pair(Coefficient::constant(-c / big_delta), &lift_atoms(&via_g, &space)? * &a)?;
    h.add_pair(
        Coefficient::constant(c * (2f64.sqrt() / xi)),
        &lift_atoms(&via_f, &space)? * &a,
    )?;

    osc.add_quadrature_term(&mut h, params.gprime, &num)?;
    h.add_hermitian(Coefficient::real(params.epsilon), &a + &a.dagger())?;
    Ok(h)
}

/// Add `-coef(x) · op` where `coef` is affine in `x^n`.
fn add_neg_affine(
    h: &mut TimeDependentHamiltonian,
    osc: &Oscillator,
    coef: Affine,
    atom_op: &Operator,
) -> SResult<()> {
    let op = lift_atoms(atom_op, h.space())?;
    h.add_hermitian(Coefficient::real(-coef.constant), op.clone())?;
    osc.add_quadrature_term(h, -coef.slope, &op)
}

fn build_h4(params: &SystemParams) -> SResult<TimeDependentHamiltonian> {
    let cs = reduction::coefficients(params)?;
    let space = full_space(params, 2, false)?;
    let mut h = TimeDependentHamiltonian::new(space.clone());
    let osc = Oscillator::new(params, &space);
    let p_gf = &pair_projector(2, LEVEL_G, LEVEL_F)? + &pair_projector(2, LEVEL_F, LEVEL_G)?;
    add_neg_affine(&mut h, &osc, cs.a, &pair_projector(2, LEVEL_G, LEVEL_G)?)?;
    add_neg_affine(&mut h, &osc, cs.c, &pair_projector(2, LEVEL_F, LEVEL_F)?)?;
    add_neg_affine(&mut h, &osc, cs.b, &p_gf)?;
    add_neg_affine(&mut h, &osc, cs.d, &exchange_operator(2)?)?;
    osc.add_free_term(&mut h, &Operator::identity(&space))?;
    Ok(h)
}

fn build_h5(params: &SystemParams) -> SResult<TimeDependentHamiltonian> {
    let cs = reduction::coefficients(params)?;
    let space = full_space(params, 2, false)?;
    let mut h = TimeDependentHamiltonian::new(space.clone());
    let osc = Oscillator::new(params, &space);
    let p_sub = &pair_projector(2, LEVEL_G, LEVEL_F)? + &pair_projector(2, LEVEL_F, LEVEL_G)?;
    add_neg_affine(&mut h, &osc, cs.b_approx, &p_sub)?;
    add_neg_affine(&mut h, &osc, cs.d_approx, &exchange_operator(2)?)?;
    osc.add_free_term(&mut h, &lift_atoms(&p_sub, &space)?)?;
    Ok(h)
}

fn build_veff_int(params: &SystemParams) -> SResult<TimeDependentHamiltonian> {
    let cs = reduction::coefficients(params)?;
    let eta = cs.eta;
    let space = full_space(params, 2, false)?;
    let mut h = TimeDependentHamiltonian::new(space.clone());
    let exch = lift_atoms(&exchange_operator(2)?, &space)?;
    let n = params.order.exponent();
    match params.oscillator {
        OscillatorMode::Classical => {
            let drive = params.drive();
            let coeff = Coefficient::from_fn(
                n as f64 * drive.omega_m,
                move |t| C64::new(eta * drive.position(t).powi(n), 0.0),
            );
            h.add_hermitian(coeff, exch)?;
        }
        OscillatorMode::Quantum { cutoff } => {
            // X' = ((b e^{-iωt} + b† e^{iωt}) / √2)^n
            let slot = space.len() - 1;
            let b = embed(&ops::annihilation(cutoff), slot, &space)?;
            let bd = b.dagger();
            let w = params.omega_m;
            match params.order {
                CouplingOrder::Linear => {
                    let amp = C64::new(eta / 2f64.sqrt(), 0.0);
                    h.add_pair(Coefficient::phase(amp, -w), &b * &exch)?;
                }
                CouplingOrder::Quadratic => {
                    let amp = C64::new(eta / 2.0, 0.0);
                    h.add_pair(Coefficient::phase(amp, -2.0 * w), &(&b * &b) * &exch)?;
                    let mixed = &(&b * &bd) + &(&bd * &b);
                    h.add_hermitian(Coefficient::real(eta / 2.0), &mixed * &exch)?;
                }
            }
        }
    }
    Ok(h)
}

/// Basis of the two-dimensional single-excitation subspace, in order.
pub const SUBSPACE_LABELS: [&str; 2] = ["g1f2", "f1g2"];

fn build_veff_classical(params: &SystemParams) -> SResult<TimeDependentHamiltonian> {
    let cs = reduction::coefficients(params)?;
    let eta = cs.eta;
    let n = params.order.exponent();
    let drive = params.drive();
    let mut h = TimeDependentHamiltonian::new(SpaceSpec::new([2])?);
    let coeff = Coefficient::from_fn(
        n as f64 * drive.omega_m,
        move |t| C64::new(eta * drive.position(t).powi(n), 0.0),
    );
    h.add_hermitian(coeff, &ops::transition(2, 0, 1) + &ops::transition(2, 1, 0))?;
    Ok(h)
}

/// Rank-2 projector onto span{|g1 f2>, |f1 g2>} (⊗ identity on the remaining
/// slots). The first two slots of `space` must be atoms of equal dimension 2
/// or 3.
pub fn qubit_subspace_projector(space: &SpaceSpec) -> SResult<Operator> {
    let dims = space.dims();
    if dims.len() < 2 || dims[0] != dims[1] || !(dims[0] == 2 || dims[0] == 3) {
        return Err(SwapError::SpaceMismatch(format!(
            "space {dims:?} does not start with two atom slots"
        )));
    }
    let d = dims[0];
    let p = &pair_projector(d, LEVEL_G, LEVEL_F)? + &pair_projector(d, LEVEL_F, LEVEL_G)?;
    lift_atoms(&p, space)
}

/// Product state with atoms in `(l1, l2)` and every further slot in its
/// ground level.
pub fn atom_product_state(space: &SpaceSpec, l1: usize, l2: usize) -> SResult<StateVector> {
    let mut labels = vec![0; space.len()];
    labels[0] = l1;
    labels[1] = l2;
    StateVector::basis(space, &labels)
}

pub fn level_name(level: usize) -> char {
    match level {
        LEVEL_G => 'g',
        LEVEL_F => 'f',
        LEVEL_E => 'e',
        _ => '?',
    }
}

/// Human-readable basis labels: atom levels by name, bosonic slots by Fock
/// number, e.g. `g_f_0`.
pub fn basis_labels(space: &SpaceSpec) -> Vec<String> {
    (0..space.total())
        .map(|k| {
            space.labels_of(k).iter().enumerate()
                .map(|(slot, &l)| {
                    if slot < 2 && space.dims()[slot] <= 3 {
                        level_name(l).to_string()
                    } else {
                        l.to_string()
                    }
                })
                .collect::<Vec<_>>()
                .join("_")
        })
        .collect()
}
