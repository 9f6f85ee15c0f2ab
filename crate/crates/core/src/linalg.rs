//! Dense and iterative solvers for the linear systems induced by a fixed
//! policy. Chains are passed as row-major `n x n` matrices where
//! `chain[i * n + j]` is the probability of moving from `i` to `j`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// State-action count above which solves switch to fixed-point iteration.
pub const DENSE_LIMIT: usize = 10_000;

const ITER_TOL: f64 = 1e-12;
const PIVOT_TOL: f64 = 1e-13;

fn lu_solve(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    let lu = a.lu();
    let u = lu.u();
    let diag = u.diagonal();
    let max = diag.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let min = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if max == 0.0 || min <= PIVOT_TOL * max {
        return Err(Error::Singular(format!(
            "pivot ratio {:.3e} below tolerance",
            if max == 0.0 { 0.0 } else { min / max }
        )));
    }
    lu.solve(&b)
        .ok_or_else(|| Error::Singular("LU solve failed".into()))
}

/// Solves `x = source + gamma * P^T x` for `gamma < 1`.
pub fn discounted_visitation(
    chain: &[f64],
    n: usize,
    gamma: f64,
    source: &[f64],
    dense: bool,
) -> Result<Vec<f64>> {
    debug_assert!(gamma < 1.0);
    if dense {
        let a = DMatrix::from_fn(n, n, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            id - gamma * chain[j * n + i]
        });
        let x = lu_solve(a, DVector::from_column_slice(source))?;
        return Ok(x.iter().copied().collect());
    }
    let mut x = source.to_vec();
    let mut next = vec![0.0; n];
    for _ in 0..10_000_000 {
        next.copy_from_slice(source);
        for i in 0..n {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for j in 0..n {
                next[j] += gamma * chain[i * n + j] * xi;
            }
        }
        let diff = x
            .iter()
            .zip(&next)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        std::mem::swap(&mut x, &mut next);
        if diff < ITER_TOL {
            return Ok(x);
        }
    }
    Err(Error::Singular(
        "fixed-point iteration did not converge".into(),
    ))
}

/// Solves `V = r + gamma * P V` for `gamma < 1`.
pub fn evaluate(chain: &[f64], n: usize, gamma: f64, reward: &[f64]) -> Result<Vec<f64>> {
    let a = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - gamma * chain[i * n + j]
    });
    let v = lu_solve(a, DVector::from_column_slice(reward))?;
    Ok(v.iter().copied().collect())
}

/// Unique stationary distribution of the chain. Errors when the chain has
/// more than one recurrent class.
pub fn stationary(chain: &[f64], n: usize, dense: bool) -> Result<Vec<f64>> {
    if dense {
        // Rows of (I - P^T) are dependent; replace the last by the mass constraint.
        let a = DMatrix::from_fn(n, n, |i, j| {
            if i == n - 1 {
                1.0
            } else {
                let id = if i == j { 1.0 } else { 0.0 };
                id - chain[j * n + i]
            }
        });
        let mut b = DVector::zeros(n);
        b[n - 1] = 1.0;
        let x = lu_solve(a, b).map_err(|_| {
            Error::Singular("induced chain has no unique stationary distribution".into())
        })?;
        if x.iter().any(|v| *v < -1e-9) {
            return Err(Error::Singular(
                "stationary solve produced negative mass".into(),
            ));
        }
        return Ok(x.iter().map(|v| v.max(0.0)).collect());
    }
    // Lazy power iteration; uniqueness is not certified on this path.
    let mut x = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..10_000_000 {
        for (nj, xj) in next.iter_mut().zip(&x) {
            *nj = 0.5 * xj;
        }
        for i in 0..n {
            for j in 0..n {
                next[j] += 0.5 * chain[i * n + j] * x[i];
            }
        }
        let diff = x
            .iter()
            .zip(&next)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        std::mem::swap(&mut x, &mut next);
        if diff < ITER_TOL {
            return Ok(x);
        }
    }
    Err(Error::Singular("power iteration did not converge".into()))
}

/// Average-reward evaluation: returns `(rho, h)` with
/// `h = r - rho + P h` and `<stationary, h> = 0`.
pub fn differential(
    chain: &[f64],
    n: usize,
    stationary: &[f64],
    reward: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let rho: f64 = stationary.iter().zip(reward).map(|(m, r)| m * r).sum();
    let a = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - chain[i * n + j] + stationary[j]
    });
    let b = DVector::from_iterator(n, reward.iter().map(|r| r - rho));
    let h = lu_solve(a, b)?;
    Ok((rho, h.iter().copied().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_and_iterative_visitation_agree() {
        let chain = [0.2, 0.8, 0.0, 0.1, 0.3, 0.6, 0.5, 0.0, 0.5];
        let src = [0.1, 0.0, 0.0];
        let a = discounted_visitation(&chain, 3, 0.9, &src, true).unwrap();
        let b = discounted_visitation(&chain, 3, 0.9, &src, false).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stationary_of_two_state_chain() {
        let chain = [0.9, 0.1, 0.5, 0.5];
        let m = stationary(&chain, 2, true).unwrap();
        assert!((m[0] - 5.0 / 6.0).abs() < 1e-12);
        let it = stationary(&chain, 2, false).unwrap();
        assert!((it[0] - m[0]).abs() < 1e-10);
    }

    #[test]
    fn reducible_chain_is_singular() {
        let chain = [1.0, 0.0, 0.0, 1.0];
        assert!(matches!(
            stationary(&chain, 2, true),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn differential_values_satisfy_poisson_equation() {
        let chain = [0.9, 0.1, 0.5, 0.5];
        let m = stationary(&chain, 2, true).unwrap();
        let r = [1.0, 0.0];
        let (rho, h) = differential(&chain, 2, &m, &r).unwrap();
        assert!((rho - 5.0 / 6.0).abs() < 1e-12);
        for i in 0..2 {
            let ph: f64 = (0..2).map(|j| chain[i * 2 + j] * h[j]).sum();
            assert!((h[i] - (r[i] - rho + ph)).abs() < 1e-12);
        }
    }
}
