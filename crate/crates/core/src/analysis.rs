//! Observables: quadrature variances, reduced states and purities, squeezing
//! in dB, the Bogoliubov squeeze parameter and the effective coupling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{CMatrix, DensityMatrix, FockCutoffs, Operator, SparseOperator, Subsystem};
use crate::moments::GaussianState;
use crate::propagator::Trajectory;

/// Vacuum variance of a quadrature.
pub const ZERO_POINT: f64 = 0.5;

/// Roundoff allowance below zero before a variance is rejected.
const NEG_VARIANCE_TOL: f64 = -1e-10;

/// `⟨A²⟩ - ⟨A⟩²`; tiny negative roundoff is clamped to zero.
pub fn variance(rho: &DensityMatrix, op: &Operator) -> Result<f64> {
    if op.dim() != rho.dim() {
        return Err(Error::Shape {
            expected: rho.dim(),
            actual: op.dim(),
        });
    }
    if !op.is_hermitian() {
        return Err(Error::NotHermitian(op.label().to_string()));
    }
    let a = op.matrix();
    let mean = rho.expect(a).re;
    let second = rho.expect(&(a * a)).re;
    clamp_variance(second - mean * mean)
}

pub(crate) fn clamp_variance(v: f64) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else if v >= NEG_VARIANCE_TOL {
        log::warn!("clamping variance {v:e} to zero");
        Ok(0.0)
    } else {
        Err(Error::InvalidState(format!("negative variance {v:e}")))
    }
}

/// Reduced state of one subsystem.
pub fn partial_trace(
    rho: &DensityMatrix,
    keep: Subsystem,
    cutoffs: FockCutoffs,
) -> Result<DensityMatrix> {
    Ok(DensityMatrix::from_matrix_unchecked(partial_trace_matrix(
        rho.matrix(),
        keep,
        cutoffs,
    )?))
}

pub(crate) fn partial_trace_matrix(
    rho: &CMatrix,
    keep: Subsystem,
    cutoffs: FockCutoffs,
) -> Result<CMatrix> {
    if rho.nrows() != cutoffs.dim() {
        return Err(Error::Shape {
            expected: cutoffs.dim(),
            actual: rho.nrows(),
        });
    }
    let (nc, nm) = (cutoffs.n_cav(), cutoffs.n_mech());
    Ok(match keep {
        Subsystem::Cavity => CMatrix::from_fn(nc, nc, |i, j| {
            (0..nm).map(|m| rho[(i * nm + m, j * nm + m)]).sum()
        }),
        Subsystem::Mech => CMatrix::from_fn(nm, nm, |i, j| {
            (0..nc).map(|c| rho[(c * nm + i, c * nm + j)]).sum()
        }),
    })
}

fn purity_of(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// `dB = -10 log10(ΔX1² / ½)`; positive means squeezed.
pub fn squeezing_db(var_x1: f64) -> Result<f64> {
    if !(var_x1 > 0.0) {
        return Err(Error::param(
            "var_x1",
            format!("must be positive, got {var_x1}"),
        ));
    }
    Ok(-10.0 * (var_x1 / ZERO_POINT).log10())
}

pub fn variance_from_db(db: f64) -> f64 {
    ZERO_POINT * 10f64.powf(-db / 10.0)
}

/// `r = artanh(G+/G-)`.
pub fn squeeze_parameter(gp: f64, gm: f64) -> Result<f64> {
    if !(gp.abs() < gm.abs()) {
        return Err(Error::SqueezeUndefined {
            g_plus: gp,
            g_minus: gm,
        });
    }
    Ok((gp / gm).atanh())
}

/// `𝒢 = √(G-² - G+²)`.
pub fn effective_coupling(gp: f64, gm: f64) -> Result<f64> {
    if !(gp.abs() < gm.abs()) {
        return Err(Error::SqueezeUndefined {
            g_plus: gp,
            g_minus: gm,
        });
    }
    Ok((gm * gm - gp * gp).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezeMetrics {
    pub var_x1: f64,
    pub var_x2: f64,
    pub db: f64,
    pub r: f64,
    pub eff_coupling: f64,
    pub purity_mech: f64,
    pub purity_cav: f64,
    pub purity_total: f64,
}

/// Variances and purities at one instant, without drive-dependent fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub var_x1: f64,
    pub var_x2: f64,
    pub purity_mech: f64,
    pub purity_cav: f64,
    pub purity_total: f64,
}

impl Observables {
    pub fn db(&self) -> f64 {
        squeezing_db(self.var_x1).unwrap_or(f64::NEG_INFINITY)
    }

    pub fn with_drive(&self, gp: f64, gm: f64) -> Result<SqueezeMetrics> {
        Ok(SqueezeMetrics {
            var_x1: self.var_x1,
            var_x2: self.var_x2,
            db: squeezing_db(self.var_x1)?,
            r: squeeze_parameter(gp, gm)?,
            eff_coupling: effective_coupling(gp, gm)?,
            purity_mech: self.purity_mech,
            purity_cav: self.purity_cav,
            purity_total: self.purity_total,
        })
    }
}

/// Source of a metrics evaluation.
pub enum StateRef<'a> {
    Fock(&'a DensityMatrix, FockCutoffs),
    Gaussian(&'a GaussianState),
}

pub fn metrics(state: StateRef<'_>, gp: f64, gm: f64) -> Result<SqueezeMetrics> {
    let obs = match state {
        StateRef::Fock(rho, cutoffs) => FockObserver::new(cutoffs).observe(rho.matrix())?,
        StateRef::Gaussian(g) => g.observables(),
    };
    obs.with_drive(gp, gm)
}

/// Evaluates variances and purities for many states sharing cutoffs.
#[derive(Debug, Clone)]
pub struct FockObserver {
    cutoffs: FockCutoffs,
    x1: SparseOperator,
    x2: SparseOperator,
    x1_sq: SparseOperator,
    x2_sq: SparseOperator,
}

impl FockObserver {
    pub fn new(cutoffs: FockCutoffs) -> Self {
        let q = crate::fock::quadrature_ops(cutoffs);
        let sq = |m: &CMatrix| SparseOperator::from_dense(&(m * m));
        Self {
            cutoffs,
            x1: q.x1.to_sparse(),
            x2: q.x2.to_sparse(),
            x1_sq: sq(q.x1.matrix()),
            x2_sq: sq(q.x2.matrix()),
        }
    }

    pub fn var_x1(&self, rho: &CMatrix) -> Result<f64> {
        let m = self.x1.expect(rho).re;
        clamp_variance(self.x1_sq.expect(rho).re - m * m)
    }

    pub fn mean_x1(&self, rho: &CMatrix) -> f64 {
        self.x1.expect(rho).re
    }

    pub fn observe(&self, rho: &CMatrix) -> Result<Observables> {
        let m2 = self.x2.expect(rho).re;
        let var_x2 = clamp_variance(self.x2_sq.expect(rho).re - m2 * m2)?;
        let mech = partial_trace_matrix(rho, Subsystem::Mech, self.cutoffs)?;
        let cav = partial_trace_matrix(rho, Subsystem::Cavity, self.cutoffs)?;
        Ok(Observables {
            var_x1: self.var_x1(rho)?,
            var_x2,
            purity_mech: purity_of(&mech),
            purity_cav: purity_of(&cav),
            purity_total: purity_of(rho),
        })
    }

    pub fn observe_trajectory(&self, traj: &Trajectory) -> Result<Vec<Observables>> {
        traj.states().iter().map(|s| self.observe(s)).collect()
    }
}

/// Minimum of a variance series and the index where it occurs.
pub fn min_with_index(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .cloned()
        .enumerate()
        .fold(
            (0, f64::INFINITY),
            |acc, (i, v)| if v < acc.1 { (i, v) } else { acc },
        )
}

/// First index at which `values` drops to or below `threshold`.
pub fn first_crossing(values: &[f64], threshold: f64) -> Option<usize> {
    values.iter().position(|&v| v <= threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{initial_state, quadrature_ops, C64};
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    #[test]
    fn variance_of_vacuum_and_thermal() {
        let cut = FockCutoffs::new(2, 60).unwrap();
        let q = quadrature_ops(cut);
        assert_abs_diff_eq!(
            variance(&DensityMatrix::vacuum(cut), &q.x1).unwrap(),
            0.5,
            epsilon = 1e-14
        );
        let th = initial_state(2.0, cut).unwrap();
        assert_abs_diff_eq!(variance(&th, &q.x1).unwrap(), 2.5, epsilon = 1e-6);
        let obs = FockObserver::new(cut).observe(th.matrix()).unwrap();
        assert_abs_diff_eq!(obs.var_x1, 2.5, epsilon = 1e-6);
        assert_abs_diff_eq!(obs.var_x2, 2.5, epsilon = 1e-6);
    }

    #[test]
    fn variance_rejects_non_hermitian_and_wrong_shape() {
        let cut = FockCutoffs::new(2, 3).unwrap();
        let a = crate::fock::ladder_ops(cut).b;
        assert!(matches!(
            variance(&DensityMatrix::vacuum(cut), &a),
            Err(Error::NotHermitian(_))
        ));
        let q = quadrature_ops(FockCutoffs::new(2, 2).unwrap());
        assert!(variance(&DensityMatrix::vacuum(cut), &q.x1).is_err());
    }

    #[test]
    fn bogoliubov_vacuum_variance() {
        // squeezed vacuum Σ c_n |2n⟩ with c_n ∝ (-tanh r)^n √((2n)!)/(2^n n!)
        let r = 0.7f64.atanh();
        assert_abs_diff_eq!(r, 0.8673, epsilon = 1e-4);
        let n = 120;
        let cut = FockCutoffs::new(2, n).unwrap();
        let mut psi = DVector::<C64>::zeros(cut.dim());
        let mut c = 1.0 / r.cosh().sqrt();
        for m in 0..n / 2 {
            psi[cut.index(0, 2 * m)] = C64::new(c, 0.0);
            let k = m as f64;
            c *= -r.tanh() * ((2.0 * k + 1.0) * (2.0 * k + 2.0)).sqrt() / (2.0 * (k + 1.0));
        }
        let norm = psi.norm();
        psi /= C64::new(norm, 0.0);
        let rho = DensityMatrix::pure(&psi).unwrap();
        let q = quadrature_ops(cut);
        let v = variance(&rho, &q.x1).unwrap();
        assert_abs_diff_eq!(v, (-2.0 * r).exp() / 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(v, 0.0882, epsilon = 1e-3);
        // the conjugate quadrature is anti-squeezed
        assert_abs_diff_eq!(
            variance(&rho, &q.x2).unwrap(),
            (2.0 * r).exp() / 2.0,
            epsilon = 1e-8
        );
    }

    #[test]
    fn partial_trace_of_products_and_mixed() {
        let cut = FockCutoffs::new(3, 4).unwrap();
        let cav = DensityMatrix::maximally_mixed(3);
        let mech = initial_state(0.7, FockCutoffs::new(2, 4).unwrap()).unwrap();
        let mech = partial_trace(&mech, Subsystem::Mech, FockCutoffs::new(2, 4).unwrap()).unwrap();
        let joint = DensityMatrix::product(&cav, &mech);
        let rc = partial_trace(&joint, Subsystem::Cavity, cut).unwrap();
        let rm = partial_trace(&joint, Subsystem::Mech, cut).unwrap();
        assert!((rc.matrix() - cav.matrix()).norm() < 1e-15);
        assert!((rm.matrix() - mech.matrix()).norm() < 1e-15);
        assert_abs_diff_eq!(rc.purity(), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rm.trace(), joint.trace(), epsilon = 1e-12);
    }

    #[test]
    fn db_conversions() {
        assert_abs_diff_eq!(squeezing_db(0.5).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(squeezing_db(0.25).unwrap(), 3.010, epsilon = 1e-3);
        assert_abs_diff_eq!(
            squeezing_db(0.25).unwrap(),
            10.0 * 2f64.log10(),
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(variance_from_db(10.1), 0.04886, epsilon = 1e-5);
        assert!(squeezing_db(0.0).is_err());
        assert!(squeezing_db(-1.0).is_err());
    }

    #[test]
    fn squeeze_parameter_and_coupling() {
        assert_abs_diff_eq!(squeeze_parameter(0.7, 1.0).unwrap(), 0.8673, epsilon = 1e-4);
        assert_abs_diff_eq!(effective_coupling(3.0, 5.0).unwrap(), 4.0, epsilon = 1e-15);
        assert!(matches!(
            squeeze_parameter(1.0, 1.0),
            Err(Error::SqueezeUndefined { .. })
        ));
        assert!(effective_coupling(2.0, 1.0).is_err());
    }

    #[test]
    fn clamp_behaviour() {
        assert_eq!(clamp_variance(-1e-12).unwrap(), 0.0);
        assert!(clamp_variance(-1e-6).is_err());
    }

    #[test]
    fn min_and_crossing_helpers() {
        let v = [3.0, 1.0, 0.4, 0.6, 0.2];
        assert_eq!(min_with_index(&v), (4, 0.2));
        assert_eq!(first_crossing(&v, 0.5), Some(2));
        assert_eq!(first_crossing(&v, 0.1), None);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn db_round_trip(db in -20.0f64..30.0) {
                let back = squeezing_db(variance_from_db(db)).unwrap();
                prop_assert!((back - db).abs() < 1e-12);
            }
        }
    }
}
