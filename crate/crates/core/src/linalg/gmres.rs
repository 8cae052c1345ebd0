use serde::{Deserialize, Serialize};

use super::LinearOperator;
use crate::block::BlockVector;
use crate::error::{Error, Result};

/// Orthogonality loss ratio that triggers a second Gram-Schmidt pass.
const REORTHOGONALIZE_RATIO: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmresStats {
    /// Krylov vectors built (one preconditioned operator application each).
    pub iterations: usize,
    /// Final recurrence residual divided by `||b||`.
    pub achieved_reduction: f64,
    pub converged: bool,
    /// Recurrence residual after each iteration, relative to `||b||`.
    pub residual_history: Vec<f64>,
}

/// Right-preconditioned GMRES without restarts.
///
/// Builds at most `max_vectors` Arnoldi vectors for `A M^{-1} y = b`, with
/// `x = M^{-1} y` and a zero initial guess, where `precon` applies `M^{-1}`.
/// Convergence is declared when the Givens recurrence residual falls below
/// `rel_tol * ||b||`. When the budget runs out the minimal-residual iterate
/// is returned with `converged == false`.
pub fn gmres_right_preconditioned<A, P>(
    a: &A,
    precon: &P,
    b: &BlockVector,
    rel_tol: f64,
    max_vectors: usize,
) -> Result<(BlockVector, GmresStats)>
where
    A: LinearOperator + ?Sized,
    P: LinearOperator + ?Sized,
{
    let layout = b.layout();
    a.layout().ensure_same(&layout)?;
    precon.layout().ensure_same(&layout)?;
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "GMRES relative tolerance {rel_tol} outside (0, 1)"
        )));
    }
    if max_vectors == 0 {
        return Err(Error::InvalidConfig(
            "GMRES needs at least one Krylov vector".into(),
        ));
    }
    let beta = b.l2_norm()?;
    if beta == 0.0 {
        return Ok((
            BlockVector::zeros(layout),
            GmresStats {
                iterations: 0,
                achieved_reduction: 0.0,
                converged: true,
                residual_history: Vec::new(),
            },
        ));
    }

    let m = max_vectors;
    let mut basis: Vec<BlockVector> = Vec::with_capacity(m + 1);
    let mut precond_basis: Vec<BlockVector> = Vec::with_capacity(m);
    // Hessenberg columns, rotated in place into upper-triangular form.
    let mut h: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut cs: Vec<f64> = Vec::with_capacity(m);
    let mut sn: Vec<f64> = Vec::with_capacity(m);
    let mut g = vec![0.0; m + 1];
    g[0] = beta;
    basis.push(b.scaled(1.0 / beta));

    let mut history = Vec::with_capacity(m);
    let mut converged = false;
    let mut k_used = 0;

    for k in 0..m {
        let z = precon.apply(&basis[k])?;
        let mut w = a.apply(&z)?;
        if !w.is_finite() || !z.is_finite() {
            return Err(Error::OperatorNonFinite);
        }
        precond_basis.push(z);

        let mut col = vec![0.0; k + 2];
        let norm_before = w.norm();
        for (j, v) in basis.iter().enumerate() {
            let hij = w.dot(v);
            col[j] = hij;
            w.axpy(-hij, v);
        }
        let mut norm_after = w.norm();
        if norm_after < REORTHOGONALIZE_RATIO * norm_before {
            for (j, v) in basis.iter().enumerate() {
                let c = w.dot(v);
                col[j] += c;
                w.axpy(-c, v);
            }
            norm_after = w.norm();
        }
        col[k + 1] = norm_after;

        for j in 0..k {
            let t = cs[j] * col[j] + sn[j] * col[j + 1];
            col[j + 1] = -sn[j] * col[j] + cs[j] * col[j + 1];
            col[j] = t;
        }
        let (c, s) = givens(col[k], col[k + 1]);
        col[k] = c * col[k] + s * col[k + 1];
        col[k + 1] = 0.0;
        cs.push(c);
        sn.push(s);
        g[k + 1] = -s * g[k];
        g[k] *= c;
        h.push(col);

        k_used = k + 1;
        let res = g[k + 1].abs();
        history.push(res / beta);

        let breakdown = norm_after <= 1e-14 * norm_before.max(f64::MIN_POSITIVE);
        if res <= rel_tol * beta {
            converged = true;
            break;
        }
        if breakdown {
            // Invariant subspace found: the recurrence residual is the true
            // least-squares residual and cannot improve further.
            converged = res <= rel_tol * beta;
            break;
        }
        basis.push(w.scaled(1.0 / norm_after));
    }

    // back substitution for y
    let mut y = vec![0.0; k_used];
    for i in (0..k_used).rev() {
        let mut s = g[i];
        for j in i + 1..k_used {
            s -= h[j][i] * y[j];
        }
        y[i] = s / h[i][i];
    }
    let mut x = BlockVector::zeros(layout);
    for (yi, z) in y.iter().zip(&precond_basis) {
        x.axpy(*yi, z);
    }
    if !x.is_finite() {
        return Err(Error::OperatorNonFinite);
    }
    let achieved_reduction = history.last().copied().unwrap_or(0.0);
    Ok((
        x,
        GmresStats {
            iterations: k_used,
            achieved_reduction,
            converged,
            residual_history: history,
        },
    ))
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else if a == 0.0 {
        (0.0, b.signum())
    } else {
        let r = a.hypot(b);
        (a / r, b / r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::{BlockLayout, DenseBlock};
    use crate::linalg::{FnOperator, IdentityOperator};

    fn diag_op(d: Vec<f64>) -> impl LinearOperator {
        let layout = BlockLayout::new(d.len(), 1).unwrap();
        FnOperator::new(layout, move |v: &BlockVector| {
            let vals = v.values().iter().zip(&d).map(|(x, s)| x * s).collect();
            BlockVector::from_values(layout, vals)
        })
    }

    #[test]
    fn identity_converges_in_one_vector() {
        let layout = BlockLayout::new(5, 2).unwrap();
        let b = BlockVector::from_fn(layout, |i, k| (i as f64) - 2.0 * k as f64 + 0.5);
        let id = IdentityOperator(layout);
        let (x, stats) = gmres_right_preconditioned(&id, &id, &b, 1e-2, 100).unwrap();
        assert_eq!(stats.iterations, 1);
        assert!(stats.converged);
        for (xi, bi) in x.values().iter().zip(b.values()) {
            assert!((xi - bi).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_system() {
        let a = diag_op(vec![1.0, 2.0, 4.0]);
        let layout = a.layout();
        let b = BlockVector::from_values(layout, vec![1.0, 2.0, 4.0]).unwrap();
        let (x, stats) =
            gmres_right_preconditioned(&a, &IdentityOperator(layout), &b, 1e-10, 10).unwrap();
        assert!(stats.converged);
        assert!(stats.iterations <= 3);
        for xi in x.values() {
            assert!((xi - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let layout = BlockLayout::new(3, 1).unwrap();
        let id = IdentityOperator(layout);
        let (x, stats) =
            gmres_right_preconditioned(&id, &id, &BlockVector::zeros(layout), 1e-2, 5).unwrap();
        assert_eq!(stats.iterations, 0);
        assert!(stats.converged);
        assert_eq!(x.norm(), 0.0);
    }

    #[test]
    fn budget_exhaustion_reports_failure() {
        let a = diag_op((1..=30).map(|i| i as f64).collect());
        let layout = a.layout();
        let b = BlockVector::from_fn(layout, |_, _| 1.0);
        let (x, stats) =
            gmres_right_preconditioned(&a, &IdentityOperator(layout), &b, 1e-12, 4).unwrap();
        assert!(!stats.converged);
        assert_eq!(stats.iterations, 4);
        assert!(stats.achieved_reduction < 1.0);
        // best iterate: the recurrence value is the true residual
        let r = b.sub(&a.apply(&x).unwrap()).norm() / b.norm();
        assert!((r - stats.achieved_reduction).abs() < 1e-10);
    }

    #[test]
    fn nan_operator_is_an_error() {
        let layout = BlockLayout::new(2, 1).unwrap();
        let bad = FnOperator::new(layout, |v: &BlockVector| Ok(v.scaled(f64::NAN)));
        let b = BlockVector::from_fn(layout, |_, _| 1.0);
        let out = gmres_right_preconditioned(&bad, &IdentityOperator(layout), &b, 1e-2, 5);
        assert_eq!(out.unwrap_err(), Error::OperatorNonFinite);
    }

    #[test]
    fn invalid_arguments() {
        let layout = BlockLayout::new(2, 1).unwrap();
        let id = IdentityOperator(layout);
        let b = BlockVector::from_fn(layout, |_, _| 1.0);
        assert!(gmres_right_preconditioned(&id, &id, &b, 0.0, 5).is_err());
        assert!(gmres_right_preconditioned(&id, &id, &b, 1.0, 5).is_err());
        assert!(gmres_right_preconditioned(&id, &id, &b, 0.1, 0).is_err());
    }

    #[test]
    fn exact_preconditioner_converges_in_one() {
        let layout = BlockLayout::new(1, 3).unwrap();
        let m = DenseBlock::from_rows(3, vec![4.0, 1.0, 0.0, -1.0, 3.0, 2.0, 0.5, 0.0, 5.0]);
        let lu = m.lu().unwrap();
        let m2 = m.clone();
        let a = FnOperator::new(layout, move |v: &BlockVector| {
            let mut out = vec![0.0; 3];
            m2.mul_vec_add(v.values(), &mut out);
            BlockVector::from_values(layout, out)
        });
        let p = FnOperator::new(layout, move |v: &BlockVector| {
            let mut out = v.values().to_vec();
            lu.solve(&mut out);
            BlockVector::from_values(layout, out)
        });
        let b = BlockVector::from_values(layout, vec![1.0, -2.0, 3.0]).unwrap();
        let (x, stats) = gmres_right_preconditioned(&a, &p, &b, 1e-12, 10).unwrap();
        assert_eq!(stats.iterations, 1);
        let r = b.sub(&a.apply(&x).unwrap()).norm();
        assert!(r < 1e-13);
    }
}
