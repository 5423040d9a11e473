//! Dense operator and state algebra on tensor-product Hilbert spaces.
//!
//! Basis states are indexed in mixed radix with the *last* subsystem varying
//! fastest, so for dims `[3, 3, N]` the flat index of `(i, j, k)` is
//! `(i * 3 + j) * N + k`.

use std::ops::{ Add, Mul, Sub };
use ndarray::{ self as nd, Array1, Array2 };
use num_complex::Complex64 as C64;
use crate::error::{ SResult, SwapError };

/// Ordered list of subsystem dimensions.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpaceSpec {
    dims: Vec<usize>,
}

impl SpaceSpec {
    pub fn new(dims: impl Into<Vec<usize>>) -> SResult<Self> {
        let dims = dims.into();
        if dims.is_empty() {
            return Err(SwapError::SpaceMismatch("space needs at least one subsystem".into()));
        }
        if let Some(k) = dims.iter().position(|&d| d == 0) {
            return Err(SwapError::SpaceMismatch(format!("subsystem {k} has dimension 0")));
        }
        Ok(Self { dims })
    }

    pub fn dims(&self) -> &[usize] { &self.dims }

    pub fn len(&self) -> usize { self.dims.len() }

    pub fn is_empty(&self) -> bool { self.dims.is_empty() }

    pub fn total(&self) -> usize { self.dims.iter().product() }

    pub fn concat(&self, other: &SpaceSpec) -> SpaceSpec {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        SpaceSpec { dims }
    }

    /// Flat index of a multi-index.
    pub fn index_of(&self, labels: &[usize]) -> SResult<usize> {
        if labels.len() != self.dims.len() {
            return Err(SwapError::DimensionMismatch {
                expected: self.dims.len(),
                got: labels.len(),
            });
        }
        let mut idx = 0;
        for (&l, &d) in labels.iter().zip(&self.dims) {
            if l >= d {
                return Err(SwapError::DimensionMismatch { expected: d, got: l });
            }
            idx = idx * d + l;
        }
        Ok(idx)
    }

    /// Multi-index of a flat index.
    pub fn labels_of(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for (slot, &d) in self.dims.iter().enumerate().rev() {
            out[slot] = index % d;
            index /= d;
        }
        out
    }
}

/// Dense complex square matrix acting on a [`SpaceSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    space: SpaceSpec,
    mat: Array2<C64>,
}

impl Operator {
    pub fn new(space: SpaceSpec, mat: Array2<C64>) -> SResult<Self> {
        let n = space.total();
        if mat.nrows() != n || mat.ncols() != n {
            return Err(SwapError::DimensionMismatch {
                expected: n,
                got: if mat.nrows() != n { mat.nrows() } else { mat.ncols() },
            });
        }
        Ok(Self { space, mat })
    }

    /// Single-subsystem operator from a square matrix.
    pub fn local(mat: Array2<C64>) -> Self {
        let n = mat.nrows();
        assert_eq!(n, mat.ncols(), "local operator must be square");
        Self { space: SpaceSpec { dims: vec![n] }, mat }
    }

    pub fn zeros(space: &SpaceSpec) -> Self {
        let n = space.total();
        Self { space: space.clone(), mat: Array2::zeros((n, n)) }
    }

    pub fn identity(space: &SpaceSpec) -> Self {
        let n = space.total();
        Self { space: space.clone(), mat: Array2::eye(n) }
    }

    pub fn space(&self) -> &SpaceSpec { &self.space }

    pub fn matrix(&self) -> &Array2<C64> { &self.mat }

    pub fn dim(&self) -> usize { self.mat.nrows() }

    pub fn get(&self, row: usize, col: usize) -> C64 { self.mat[[row, col]] }

    pub fn dagger(&self) -> Self {
        Self {
            space: self.space.clone(),
            mat: self.mat.t().mapv(|z| z.conj()),
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { space: self.space.clone(), mat: &self.mat * c }
    }

    pub fn trace(&self) -> C64 { self.mat.diag().sum() }

    fn check_same(&self, other: &Operator) -> SResult<()> {
        if self.space != other.space {
            return Err(SwapError::SpaceMismatch(format!(
                "{:?} vs {:?}", self.space.dims, other.space.dims
            )));
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Operator) -> SResult<Operator> {
        self.check_same(other)?;
        Ok(Self { space: self.space.clone(), mat: &self.mat + &other.mat })
    }

    pub fn try_sub(&self, other: &Operator) -> SResult<Operator> {
        self.check_same(other)?;
        Ok(Self { space: self.space.clone(), mat: &self.mat - &other.mat })
    }

    pub fn try_mul(&self, other: &Operator) -> SResult<Operator> {
        self.check_same(other)?;
        Ok(Self { space: self.space.clone(), mat: self.mat.dot(&other.mat) })
    }

    pub fn commutator(&self, other: &Operator) -> SResult<Operator> {
        self.try_mul(other)?.try_sub(&other.try_mul(self)?)
    }

    /// Integer matrix power.
    pub fn pow(&self, k: u32) -> Operator {
        let mut acc = Operator::identity(&self.space);
        for _ in 0..k {
            acc.mat = acc.mat.dot(&self.mat);
        }
        acc
    }

    pub fn apply(&self, psi: &StateVector) -> SResult<StateVector> {
        if self.space != psi.space {
            return Err(SwapError::SpaceMismatch(format!(
                "operator {:?} vs state {:?}", self.space.dims, psi.space.dims
            )));
        }
        Ok(StateVector { space: psi.space.clone(), amps: self.mat.dot(&psi.amps) })
    }

    /// Largest entrywise modulus.
    pub fn max_abs(&self) -> f64 {
        self.mat.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Operator) -> SResult<f64> {
        self.check_same(other)?;
        Ok(self.mat.iter().zip(other.mat.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// Maximum absolute row sum; bounds the spectral norm of a Hermitian
    /// matrix from above.
    pub fn row_sum_norm(&self) -> f64 {
        self.mat.rows().into_iter()
            .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_zero(&self, tol: f64) -> bool { self.max_abs() <= tol }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        self.try_add(rhs).expect("operator spaces differ")
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        self.try_sub(rhs).expect("operator spaces differ")
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.try_mul(rhs).expect("operator spaces differ")
    }
}

/// Tensor product `a ⊗ b`.
pub fn kron(a: &Operator, b: &Operator) -> Operator {
    Operator {
        space: a.space.concat(&b.space),
        mat: nd::linalg::kron(&a.mat, &b.mat),
    }
}

/// Lift a single-subsystem operator into `space`, acting as identity on every
/// other slot.
pub fn embed(local: &Operator, slot: usize, space: &SpaceSpec) -> SResult<Operator> {
    let dims = space.dims();
    if slot >= dims.len() {
        return Err(SwapError::SlotOutOfRange { slot, len: dims.len() });
    }
    if local.dim() != dims[slot] {
        return Err(SwapError::DimensionMismatch { expected: dims[slot], got: local.dim() });
    }
    let before: usize = dims[..slot].iter().product();
    let after: usize = dims[slot + 1..].iter().product();
    let mat = nd::linalg::kron(
        &nd::linalg::kron(&Array2::<C64>::eye(before), &local.mat),
        &Array2::<C64>::eye(after),
    );
    Ok(Operator { space: space.clone(), mat })
}

/// True iff `max |A - A†| <= tol` entrywise.
pub fn is_hermitian(op: &Operator, tol: f64) -> bool {
    let n = op.dim();
    for i in 0..n {
        for j in i..n {
            if (op.mat[[i, j]] - op.mat[[j, i]].conj()).norm() > tol {
                return false;
            }
        }
    }
    true
}

/// `<psi|A|psi>`.
pub fn expectation(psi: &StateVector, op: &Operator) -> SResult<C64> {
    let a_psi = op.apply(psi)?;
    Ok(psi.inner(&a_psi))
}

/// Complex state vector on a [`SpaceSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    space: SpaceSpec,
    amps: Array1<C64>,
}

impl StateVector {
    pub fn new(space: SpaceSpec, amps: Array1<C64>) -> SResult<Self> {
        if amps.len() != space.total() {
            return Err(SwapError::DimensionMismatch { expected: space.total(), got: amps.len() });
        }
        Ok(Self { space, amps })
    }

    /// Product basis state with the given per-slot levels.
    pub fn basis(space: &SpaceSpec, labels: &[usize]) -> SResult<Self> {
        let idx = space.index_of(labels)?;
        let mut amps = Array1::zeros(space.total());
        amps[idx] = C64::new(1.0, 0.0);
        Ok(Self { space: space.clone(), amps })
    }

    pub fn space(&self) -> &SpaceSpec { &self.space }

    pub fn amplitudes(&self) -> &Array1<C64> { &self.amps }

    pub fn amplitude(&self, index: usize) -> C64 { self.amps[index] }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self { space: self.space.clone(), amps: self.amps.mapv(|z| z / n) }
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps.iter().zip(other.amps.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amps.iter().map(|z| z.norm_sqr()).collect()
    }
}

/// Single-mode operators in a truncated number basis and level transitions.
pub mod ops {
    use super::*;

    /// `|row><col|` on a `dim`-level system.
    pub fn transition(dim: usize, row: usize, col: usize) -> Operator {
        let mut m = Array2::zeros((dim, dim));
        m[[row, col]] = C64::new(1.0, 0.0);
        Operator::local(m)
    }

    pub fn projector(dim: usize, level: usize) -> Operator {
        transition(dim, level, level)
    }

    pub fn identity(dim: usize) -> Operator {
        Operator::local(Array2::eye(dim))
    }

    /// Annihilation operator truncated to `cutoff` Fock states.
    pub fn annihilation(cutoff: usize) -> Operator {
        let mut m = Array2::zeros((cutoff, cutoff));
        for k in 1..cutoff {
            m[[k - 1, k]] = C64::new((k as f64).sqrt(), 0.0);
        }
        Operator::local(m)
    }

    pub fn creation(cutoff: usize) -> Operator {
        annihilation(cutoff).dagger()
    }

    pub fn number(cutoff: usize) -> Operator {
        let mut m = Array2::zeros((cutoff, cutoff));
        for k in 0..cutoff {
            m[[k, k]] = C64::new(k as f64, 0.0);
        }
        Operator::local(m)
    }

    /// `b + b†` in the truncated basis.
    pub fn displacement_quadrature(cutoff: usize) -> Operator {
        let a = annihilation(cutoff);
        &a + &a.dagger()
    }
}
