//! Truncated bosonic operators on the joint cavity ⊗ resonator space.
//!
//! Joint basis ordering is fixed: the cavity index is slow and the mechanical
//! index is fast, i.e. `|n_cav, n_mech⟩ ↦ n_cav * n_mech_levels + n_mech`.
//! Every module relies on this, so nothing else should build joint indices by
//! hand; use [`FockCutoffs::index`].

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Hermiticity tolerance for constructed operators.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FockCutoffs {
    n_cav: usize,
    n_mech: usize,
}

impl FockCutoffs {
    pub fn new(n_cav: usize, n_mech: usize) -> Result<Self> {
        if n_cav < 2 {
            return Err(Error::InvalidCutoff(n_cav));
        }
        if n_mech < 2 {
            return Err(Error::InvalidCutoff(n_mech));
        }
        Ok(Self { n_cav, n_mech })
    }

    pub fn n_cav(&self) -> usize {
        self.n_cav
    }

    pub fn n_mech(&self) -> usize {
        self.n_mech
    }

    pub fn dim(&self) -> usize {
        self.n_cav * self.n_mech
    }

    /// Joint index of `|n_cav, n_mech⟩`.
    pub fn index(&self, n_cav: usize, n_mech: usize) -> usize {
        debug_assert!(n_cav < self.n_cav && n_mech < self.n_mech);
        n_cav * self.n_mech + n_mech
    }

    /// Inverse of [`FockCutoffs::index`].
    pub fn split(&self, index: usize) -> (usize, usize) {
        (index / self.n_mech, index % self.n_mech)
    }

    pub fn levels(&self, subsystem: Subsystem) -> usize {
        match subsystem {
            Subsystem::Cavity => self.n_cav,
            Subsystem::Mech => self.n_mech,
        }
    }

    /// Cutoffs enlarged by `factor` in both modes (rounded up).
    pub fn scaled(&self, factor: f64) -> Self {
        let up = |n: usize| ((n as f64 * factor).ceil() as usize).max(n + 1);
        Self {
            n_cav: up(self.n_cav),
            n_mech: up(self.n_mech),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subsystem {
    Cavity,
    Mech,
}

/// A dense operator with a human-readable label.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    matrix: CMatrix,
    label: String,
    hermitian: bool,
}

impl Operator {
    pub fn new(matrix: CMatrix, label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if !matrix.is_square() {
            return Err(Error::Shape {
                expected: matrix.nrows(),
                actual: matrix.ncols(),
            });
        }
        if matrix
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::NonFinite(label));
        }
        Ok(Self {
            matrix,
            label,
            hermitian: false,
        })
    }

    /// Builds an operator labeled Hermitian; fails if `M ≠ M†` beyond 1e-12.
    pub fn hermitian(matrix: CMatrix, label: impl Into<String>) -> Result<Self> {
        let mut op = Self::new(matrix, label)?;
        if hermiticity_error(&op.matrix) > HERMITIAN_TOL {
            return Err(Error::NotHermitian(op.label));
        }
        op.hermitian = true;
        Ok(op)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: CMatrix::identity(dim, dim),
            label: "1".into(),
            hermitian: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn dagger(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
            label: format!("{}†", self.label),
            hermitian: self.hermitian,
        }
    }

    pub fn to_sparse(&self) -> SparseOperator {
        SparseOperator::from_dense(&self.matrix)
    }
}

/// Largest elementwise deviation `|M - M†|`.
pub fn hermiticity_error(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Spectral norm of a dense matrix.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// Truncated annihilation operator with `√k` on the superdiagonal.
pub fn annihilation(n: usize) -> Result<Operator> {
    if n < 2 {
        return Err(Error::InvalidCutoff(n));
    }
    let mut m = CMatrix::zeros(n, n);
    for k in 1..n {
        m[(k - 1, k)] = C64::new((k as f64).sqrt(), 0.0);
    }
    Operator::new(m, "a")
}

/// Lifts a single-mode operator to the joint space (`op ⊗ 1` or `1 ⊗ op`).
pub fn embed(op: &Operator, subsystem: Subsystem, cutoffs: FockCutoffs) -> Result<Operator> {
    let levels = cutoffs.levels(subsystem);
    if op.dim() != levels {
        return Err(Error::Shape {
            expected: levels,
            actual: op.dim(),
        });
    }
    let matrix = match subsystem {
        Subsystem::Cavity => op
            .matrix
            .kronecker(&CMatrix::identity(cutoffs.n_mech, cutoffs.n_mech)),
        Subsystem::Mech => CMatrix::identity(cutoffs.n_cav, cutoffs.n_cav).kronecker(&op.matrix),
    };
    let tag = match subsystem {
        Subsystem::Cavity => "cav",
        Subsystem::Mech => "mech",
    };
    Ok(Operator {
        matrix,
        label: format!("{}[{tag}]", op.label),
        hermitian: op.hermitian,
    })
}

/// Cavity (`d`) and resonator (`b`) annihilators on the joint space.
#[derive(Debug, Clone)]
pub struct LadderOps {
    pub d: Operator,
    pub b: Operator,
}

pub fn ladder_ops(cutoffs: FockCutoffs) -> LadderOps {
    let mut d = embed(
        &annihilation(cutoffs.n_cav).expect("validated cutoff"),
        Subsystem::Cavity,
        cutoffs,
    )
    .expect("cutoff matches");
    d.label = "d".into();
    let mut b = embed(
        &annihilation(cutoffs.n_mech).expect("validated cutoff"),
        Subsystem::Mech,
        cutoffs,
    )
    .expect("cutoff matches");
    b.label = "b".into();
    LadderOps { d, b }
}

/// Mechanical (`X1`, `X2`) and cavity (`Y1`, `Y2`) quadratures, embedded.
#[derive(Debug, Clone)]
pub struct Quadratures {
    pub x1: Operator,
    pub x2: Operator,
    pub y1: Operator,
    pub y2: Operator,
}

impl Quadratures {
    /// In the order used by the moment engine: `(X1, X2, Y1, Y2)`.
    pub fn as_array(&self) -> [&Operator; 4] {
        [&self.x1, &self.x2, &self.y1, &self.y2]
    }
}

pub fn quadrature_ops(cutoffs: FockCutoffs) -> Quadratures {
    let LadderOps { d, b } = ladder_ops(cutoffs);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let position = |a: &CMatrix| (a.adjoint() + a) * C64::new(s, 0.0);
    let momentum = |a: &CMatrix| (a.adjoint() - a) * C64::new(0.0, s);
    let build =
        |m: CMatrix, label: &str| Operator::hermitian(m, label).expect("quadratures are Hermitian");
    Quadratures {
        x1: build(position(&b.matrix), "X1"),
        x2: build(momentum(&b.matrix), "X2"),
        y1: build(position(&d.matrix), "Y1"),
        y2: build(momentum(&d.matrix), "Y2"),
    }
}

/// Tolerances used when validating a density matrix.
#[derive(Debug, Clone, Copy)]
pub struct StateTolerance {
    pub hermitian: f64,
    pub trace: f64,
    pub min_eigenvalue: f64,
}

impl Default for StateTolerance {
    fn default() -> Self {
        Self {
            hermitian: 1e-10,
            trace: 1e-8,
            min_eigenvalue: -1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        Self::with_tolerance(matrix, StateTolerance::default())
    }

    pub fn with_tolerance(matrix: CMatrix, tol: StateTolerance) -> Result<Self> {
        let rho = Self::from_matrix_unchecked(matrix);
        rho.check(tol)?;
        Ok(rho)
    }

    pub(crate) fn from_matrix_unchecked(matrix: CMatrix) -> Self {
        Self { matrix }
    }

    pub fn check(&self, tol: StateTolerance) -> Result<()> {
        if !self.matrix.is_square() {
            return Err(Error::InvalidState("not square".into()));
        }
        if self
            .matrix
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::InvalidState("non-finite entries".into()));
        }
        let herm = hermiticity_error(&self.matrix);
        if herm > tol.hermitian {
            return Err(Error::InvalidState(format!("not Hermitian ({herm:e})")));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > tol.trace {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min_eig = self.min_eigenvalue();
        if min_eig < tol.min_eigenvalue {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {min_eig:e}"
            )));
        }
        Ok(())
    }

    /// Pure state `|ψ⟩⟨ψ|` for a normalized vector.
    pub fn pure(psi: &nalgebra::DVector<C64>) -> Result<Self> {
        let norm = psi.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!("state vector has norm {norm}")));
        }
        Ok(Self::from_matrix_unchecked(psi * psi.adjoint()))
    }

    /// Joint basis projector `|n_cav, n_mech⟩⟨n_cav, n_mech|`.
    pub fn basis(cutoffs: FockCutoffs, n_cav: usize, n_mech: usize) -> Self {
        let dim = cutoffs.dim();
        let mut m = CMatrix::zeros(dim, dim);
        let k = cutoffs.index(n_cav, n_mech);
        m[(k, k)] = ONE;
        Self::from_matrix_unchecked(m)
    }

    pub fn vacuum(cutoffs: FockCutoffs) -> Self {
        Self::basis(cutoffs, 0, 0)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self::from_matrix_unchecked(CMatrix::identity(dim, dim) / C64::new(dim as f64, 0.0))
    }

    /// `ρ_cav ⊗ ρ_mech` in the cavity-slow ordering.
    pub fn product(cavity: &DensityMatrix, mech: &DensityMatrix) -> Self {
        Self::from_matrix_unchecked(cavity.matrix.kronecker(&mech.matrix))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// `tr ρ²`.
    pub fn purity(&self) -> f64 {
        // tr(ρ ρ) = Σ_ij ρ_ij ρ_ji = Σ |ρ_ij|² for Hermitian ρ
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
        h.symmetric_eigenvalues().min()
    }

    /// `tr(ρ A)`.
    pub fn expect(&self, op: &CMatrix) -> C64 {
        // tr(ρA) = Σ_ij ρ_ij A_ji
        self.matrix.component_mul(&op.transpose()).sum()
    }
}

/// A thermal single-mode state together with the probability mass removed
/// by truncation before renormalization.
#[derive(Debug, Clone)]
pub struct ThermalState {
    pub state: DensityMatrix,
    pub truncation_deficit: f64,
}

/// Threshold above which simulations log a truncation warning.
pub const THERMAL_DEFICIT_WARN: f64 = 1e-6;

pub fn thermal_state(n_th: f64, n: usize) -> Result<ThermalState> {
    if n < 2 {
        return Err(Error::InvalidCutoff(n));
    }
    if !(n_th >= 0.0) || !n_th.is_finite() {
        return Err(Error::param("n_th", "must be a finite value >= 0"));
    }
    let q = n_th / (n_th + 1.0);
    let probs: Vec<f64> = (0..n).map(|k| q.powi(k as i32) / (n_th + 1.0)).collect();
    let total: f64 = probs.iter().sum();
    let deficit = q.powi(n as i32);
    let mut m = CMatrix::zeros(n, n);
    for (k, p) in probs.iter().enumerate() {
        m[(k, k)] = C64::new(p / total, 0.0);
    }
    Ok(ThermalState {
        state: DensityMatrix::from_matrix_unchecked(m),
        truncation_deficit: deficit,
    })
}

/// Cavity vacuum ⊗ mechanical thermal state, warning if the thermal tail is
/// cut off too aggressively.
pub fn initial_state(n_th: f64, cutoffs: FockCutoffs) -> Result<DensityMatrix> {
    let thermal = thermal_state(n_th, cutoffs.n_mech)?;
    if thermal.truncation_deficit > THERMAL_DEFICIT_WARN {
        log::warn!(
            "thermal truncation deficit {:.3e} exceeds {:.0e}; raise n_mech",
            thermal.truncation_deficit,
            THERMAL_DEFICIT_WARN
        );
    }
    let mut cav = CMatrix::zeros(cutoffs.n_cav, cutoffs.n_cav);
    cav[(0, 0)] = ONE;
    Ok(DensityMatrix::product(
        &DensityMatrix::from_matrix_unchecked(cav),
        &thermal.state,
    ))
}

/// Coordinate-list operator used in the hot propagation loops.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    entries: Vec<(usize, usize, C64)>,
}

impl SparseOperator {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn from_dense(m: &CMatrix) -> Self {
        let dim = m.nrows();
        let mut entries = Vec::new();
        for j in 0..dim {
            for i in 0..dim {
                let v = m[(i, j)];
                if v != ZERO {
                    entries.push((i, j, v));
                }
            }
        }
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, usize, C64)] {
        &self.entries
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        Self {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .map(|&(i, j, v)| (j, i, v.conj()))
                .collect(),
        }
    }

    /// Appends `c · other` (entries are concatenated, duplicates allowed).
    pub fn push_scaled(&mut self, c: C64, other: &SparseOperator) {
        debug_assert_eq!(self.dim, other.dim);
        if c == ZERO {
            return;
        }
        self.entries
            .extend(other.entries.iter().map(|&(i, j, v)| (i, j, c * v)));
    }

    /// Row-sum bound on the operator norm.
    pub fn norm_bound(&self) -> f64 {
        let mut rows = vec![0.0; self.dim];
        let mut cols = vec![0.0; self.dim];
        for &(i, j, v) in &self.entries {
            rows[i] += v.norm();
            cols[j] += v.norm();
        }
        let r = rows.iter().cloned().fold(0.0, f64::max);
        let c = cols.iter().cloned().fold(0.0, f64::max);
        (r * c).sqrt()
    }

    /// `out += c · S ρ`.
    pub fn left_mul_acc(&self, c: C64, rho: &CMatrix, out: &mut CMatrix) {
        let n = self.dim;
        let src = rho.as_slice();
        let dst = out.as_mut_slice();
        for col in 0..n {
            let base = col * n;
            for &(i, k, v) in &self.entries {
                dst[base + i] += c * v * src[base + k];
            }
        }
    }

    /// `out += c · ρ S`.
    pub fn right_mul_acc(&self, c: C64, rho: &CMatrix, out: &mut CMatrix) {
        let n = self.dim;
        let src = rho.as_slice();
        let dst = out.as_mut_slice();
        for &(k, j, v) in &self.entries {
            let w = c * v;
            let (s, d) = (k * n, j * n);
            for i in 0..n {
                dst[d + i] += w * src[s + i];
            }
        }
    }

    /// `out += c · S ρ S†`.
    pub fn sandwich_acc(&self, c: C64, rho: &CMatrix, out: &mut CMatrix) {
        let n = self.dim;
        let src = rho.as_slice();
        let dst = out.as_mut_slice();
        for &(j, l, b) in &self.entries {
            let w = c * b.conj();
            for &(i, k, a) in &self.entries {
                dst[i + j * n] += w * a * src[k + l * n];
            }
        }
    }

    /// `tr(S ρ)`.
    pub fn expect(&self, rho: &CMatrix) -> C64 {
        self.entries.iter().map(|&(i, k, v)| v * rho[(k, i)]).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn annihilation_small_cases() {
        let a2 = annihilation(2).unwrap();
        assert_eq!(a2.matrix()[(0, 1)], c(1.0));
        assert_eq!(a2.matrix().iter().filter(|z| **z != ZERO).count(), 1);

        let a3 = annihilation(3).unwrap();
        assert_eq!(a3.matrix()[(0, 1)], c(1.0));
        assert_abs_diff_eq!(a3.matrix()[(1, 2)].re, 2f64.sqrt(), epsilon = 1e-15);

        assert!(matches!(annihilation(1), Err(Error::InvalidCutoff(1))));
    }

    #[test]
    fn truncated_commutator_has_defect_in_last_entry() {
        for n in 2..8 {
            let a = annihilation(n).unwrap().into_matrix();
            let comm = commutator(&a, &a.adjoint());
            for i in 0..n {
                for j in 0..n {
                    let expected = if i != j {
                        0.0
                    } else if i == n - 1 {
                        1.0 - n as f64
                    } else {
                        1.0
                    };
                    assert_abs_diff_eq!(comm[(i, j)].re, expected, epsilon = 1e-12);
                    assert_abs_diff_eq!(comm[(i, j)].im, 0.0, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn embed_identity_and_commuting_factors() {
        let cut = FockCutoffs::new(3, 4).unwrap();
        let id = embed(&Operator::identity(3), Subsystem::Cavity, cut).unwrap();
        assert_eq!(id.matrix(), &CMatrix::identity(12, 12));

        let LadderOps { d, b } = ladder_ops(cut);
        let comm = commutator(d.matrix(), b.matrix());
        assert!(comm.norm() < 1e-14);

        assert!(matches!(
            embed(&Operator::identity(4), Subsystem::Cavity, cut),
            Err(Error::Shape {
                expected: 3,
                actual: 4
            })
        ));
    }

    #[test]
    fn embed_basis_elements_follow_cavity_slow_order() {
        let cut = FockCutoffs::new(3, 4).unwrap();
        let LadderOps { d, .. } = ladder_ops(cut);
        let m = d.matrix();
        // ⟨1,0| d |0,0⟩ = 0 and ⟨0,0| d |1,0⟩ = 1
        assert_eq!(m[(cut.index(1, 0), cut.index(0, 0))], ZERO);
        assert_eq!(m[(cut.index(0, 0), cut.index(1, 0))], ONE);
        for k in 0..cut.dim() {
            let (nc, nm) = cut.split(k);
            assert_eq!(cut.index(nc, nm), k);
        }
        assert_eq!(cut.index(1, 0), 4);
    }

    #[test]
    fn embed_preserves_spectral_norm() {
        let cut = FockCutoffs::new(4, 5).unwrap();
        for (n, sub) in [(4, Subsystem::Cavity), (5, Subsystem::Mech)] {
            let a = annihilation(n).unwrap();
            let e = embed(&a, sub, cut).unwrap();
            assert_abs_diff_eq!(
                spectral_norm(a.matrix()),
                spectral_norm(e.matrix()),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn thermal_state_geometric_law() {
        let vac = thermal_state(0.0, 5).unwrap();
        assert_eq!(vac.state.matrix()[(0, 0)], ONE);
        assert_eq!(vac.truncation_deficit, 0.0);

        let big = thermal_state(2.0, 40).unwrap();
        assert_abs_diff_eq!(
            big.truncation_deficit,
            (2.0f64 / 3.0).powi(40),
            epsilon = 1e-20
        );
        assert_abs_diff_eq!(big.truncation_deficit, 9.04e-8, epsilon = 0.01e-8);
        let m = big.state.matrix();
        // renormalized p0 = (1/3) / (1 - deficit)
        assert_abs_diff_eq!(
            m[(0, 0)].re,
            (1.0 / 3.0) / (1.0 - big.truncation_deficit),
            epsilon = 1e-15
        );
        for k in 0..39 {
            assert_abs_diff_eq!(
                m[(k + 1, k + 1)].re / m[(k, k)].re,
                2.0 / 3.0,
                epsilon = 1e-12
            );
        }
        assert_abs_diff_eq!(big.state.trace(), 1.0, epsilon = 1e-14);
        assert!(thermal_state(-1.0, 4).is_err());
    }

    #[test]
    fn quadrature_commutator_on_untruncated_block() {
        let cut = FockCutoffs::new(3, 6).unwrap();
        let q = quadrature_ops(cut);
        for (a, b) in [(&q.x1, &q.x2), (&q.y1, &q.y2)] {
            assert!(hermiticity_error(a.matrix()) < HERMITIAN_TOL);
            let comm = commutator(a.matrix(), b.matrix());
            for k in 0..cut.dim() {
                let (nc, nm) = cut.split(k);
                if nc + 1 < cut.n_cav() && nm + 1 < cut.n_mech() {
                    assert_abs_diff_eq!(comm[(k, k)].im, 1.0, epsilon = 1e-12);
                    assert_abs_diff_eq!(comm[(k, k)].re, 0.0, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn quadrature_variances_vacuum_and_thermal() {
        let cut = FockCutoffs::new(2, 60).unwrap();
        let q = quadrature_ops(cut);
        let x1 = q.x1.matrix();
        let x1sq = x1 * x1;
        let vac = DensityMatrix::vacuum(cut);
        let var = vac.expect(&x1sq).re - vac.expect(x1).re.powi(2);
        assert_abs_diff_eq!(var, 0.5, epsilon = 1e-14);

        let th = initial_state(2.0, cut).unwrap();
        let var = th.expect(&x1sq).re - th.expect(x1).re.powi(2);
        assert_abs_diff_eq!(var, 2.5, epsilon = 1e-6);
    }

    #[test]
    fn truncated_ladder_acts_exactly_on_low_levels() {
        let n = 7;
        let a = annihilation(n).unwrap().into_matrix();
        let ad = a.adjoint();
        for k in 0..n - 2 {
            let mut e = nalgebra::DVector::<C64>::zeros(n);
            e[k] = ONE;
            let down = &a * &e;
            let up = &ad * &e;
            for j in 0..n {
                let exp_down = if k > 0 && j == k - 1 {
                    (k as f64).sqrt()
                } else {
                    0.0
                };
                let exp_up = if j == k + 1 {
                    ((k + 1) as f64).sqrt()
                } else {
                    0.0
                };
                assert_abs_diff_eq!(down[j].re, exp_down, epsilon = 1e-15);
                assert_abs_diff_eq!(up[j].re, exp_up, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn density_validation_rejects_bad_states() {
        let mut m = CMatrix::identity(2, 2);
        assert!(DensityMatrix::new(m.clone()).is_err());
        m[(0, 0)] = c(1.5);
        m[(1, 1)] = c(-0.5);
        assert!(DensityMatrix::new(m).is_err());
        assert!(DensityMatrix::new(CMatrix::identity(3, 3) / c(3.0)).is_ok());
    }

    #[test]
    fn sparse_products_match_dense() {
        let cut = FockCutoffs::new(3, 4).unwrap();
        let LadderOps { d, b } = ladder_ops(cut);
        let op = d.matrix().adjoint() * b.matrix() + b.matrix() * C64::new(0.3, -0.2);
        let s = SparseOperator::from_dense(&op);
        let dim = cut.dim();
        let rho = CMatrix::from_fn(dim, dim, |i, j| {
            C64::new((i * 7 + j) as f64 * 0.01, (i as f64 - j as f64) * 0.02)
        });
        let k = C64::new(0.7, 0.1);

        let mut out = CMatrix::zeros(dim, dim);
        s.left_mul_acc(k, &rho, &mut out);
        assert!((out - (&op * &rho) * k).norm() < 1e-12);

        let mut out = CMatrix::zeros(dim, dim);
        s.right_mul_acc(k, &rho, &mut out);
        assert!((out - (&rho * &op) * k).norm() < 1e-12);

        let mut out = CMatrix::zeros(dim, dim);
        s.sandwich_acc(k, &rho, &mut out);
        assert!((out - (&op * &rho * op.adjoint()) * k).norm() < 1e-12);

        assert!((s.expect(&rho) - (&op * &rho).trace()).norm() < 1e-12);
        assert!((s.adjoint().to_dense() - op.adjoint()).norm() < 1e-15);
        assert!(s.norm_bound() >= spectral_norm(&op) - 1e-12);
    }
}
