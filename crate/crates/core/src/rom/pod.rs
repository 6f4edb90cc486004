use faer::Mat;
use log::warn;

use crate::dense::Basis;
use crate::error::{CloakError, Result};
use crate::sparse::pin_sequential;

/// Left singular vectors kept by the energy criterion and their singular values.
#[derive(Debug, Clone, PartialEq)]
pub struct PodModes {
    pub basis: Basis,
    pub singular_values: Vec<f64>,
}

/// Number of modes `n` such that `Σ_{i>n} σᵢ² ≤ ε² Σ σᵢ²`.
pub fn retained_modes(singular_values: &[f64], eps: f64) -> usize {
    let total: f64 = singular_values.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return 0;
    }
    let budget = eps * eps * total;
    let mut tail = 0.0;
    let mut n = singular_values.len();
    while n > 0 {
        let s = singular_values[n - 1];
        if tail + s * s > budget {
            break;
        }
        tail += s * s;
        n -= 1;
    }
    n
}

/// Truncated POD of the columns of a snapshot matrix.
///
/// Singular values below the numerical rank threshold `σ_max · max(m, n) · ε_mach`
/// are discarded before the energy criterion is applied. An all-zero matrix
/// yields an empty basis.
pub fn pod_truncate(n_rows: usize, columns: &[Vec<f64>], eps: f64) -> Result<PodModes> {
    if columns.is_empty() {
        return Err(CloakError::InvalidParameter("POD of an empty snapshot set".into()));
    }
    if !(eps >= 0.0) {
        return Err(CloakError::InvalidParameter(format!("POD tolerance must be >= 0, got {eps}")));
    }
    if let Some(c) = columns.iter().find(|c| c.len() != n_rows) {
        return Err(CloakError::DimensionMismatch {
            context: "snapshot column",
            expected: n_rows,
            actual: c.len(),
        });
    }
    if columns.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CloakError::InvalidParameter("snapshot matrix has non-finite entries".into()));
    }
    if columns.iter().all(|c| c.iter().all(|&v| v == 0.0)) {
        warn!("all snapshots are zero; POD basis is empty");
        return Ok(PodModes { basis: Basis::empty(n_rows), singular_values: Vec::new() });
    }
    pin_sequential();
    let s = Mat::from_fn(n_rows, columns.len(), |i, j| columns[j][i]);
    let svd = s.thin_svd().map_err(|e| CloakError::Factorization {
        context: "snapshot SVD",
        message: format!("{e:?}"),
    })?;
    let sigma: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    let sigma_max = sigma.iter().copied().fold(0.0, f64::max);
    let floor = sigma_max * n_rows.max(columns.len()) as f64 * f64::EPSILON;
    let rank = sigma.iter().take_while(|&&s| s > floor).count();
    let n = retained_modes(&sigma[..rank], eps);
    let u = svd.U();
    let modes = (0..n)
        .map(|j| (0..n_rows).map(|i| u[(i, j)]).collect())
        .collect();
    Ok(PodModes { basis: Basis::new(n_rows, modes), singular_values: sigma[..n].to_vec() })
}

/// Enriches existing modes with a new snapshot block.
///
/// The current modes enter weighted by their singular values, so that the
/// result approximates the POD of every snapshot seen so far rather than
/// treating the basis vectors as unit-energy snapshots.
pub fn pod_enrich(current: &PodModes, block: &[Vec<f64>], eps: f64) -> Result<PodModes> {
    let n_rows = current.basis.n_rows();
    let mut columns: Vec<Vec<f64>> = current
        .basis
        .columns()
        .iter()
        .zip(&current.singular_values)
        .map(|(c, s)| c.iter().map(|v| v * s).collect())
        .collect();
    columns.extend(block.iter().cloned());
    if columns.is_empty() {
        return Ok(current.clone());
    }
    pod_truncate(n_rows, &columns, eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn energy_criterion() {
        let s = [3.0, 2.0, 1.0];
        assert_eq!(retained_modes(&s, 0.0), 3);
        assert_eq!(retained_modes(&s, 1.0), 0);
        // tail {1} has energy 1/14
        assert_eq!(retained_modes(&s, (1.0f64 / 14.0).sqrt()), 2);
        assert_eq!(retained_modes(&s, 0.2), 3);
    }

    #[test]
    fn rank_one_matrix() {
        let a = [1.0, 2.0, 2.0];
        let cols: Vec<Vec<f64>> = [1.0, -3.0, 0.5].iter().map(|b| a.iter().map(|x| x * b).collect()).collect();
        let pod = pod_truncate(3, &cols, 0.0).unwrap();
        assert_eq!(pod.basis.dim(), 1);
        let v = &pod.basis.columns()[0];
        let cos = (v[0] * 1.0 + v[1] * 2.0 + v[2] * 2.0) / 3.0;
        assert!((cos.abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_matrix_gives_empty_basis() {
        let pod = pod_truncate(4, &[vec![0.0; 4], vec![0.0; 4]], 1e-8).unwrap();
        assert_eq!(pod.basis.dim(), 0);
    }
}
