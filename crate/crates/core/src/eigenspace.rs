//! PCA eigenspace over flattened line images.
//!
//! The covariance of the training set (divide-by-n convention) is never
//! formed at its full d×d size: with d = side² in the tens of thousands the
//! n×n Gram matrix of the centered samples is decomposed instead, and its
//! eigenvectors are mapped back through the sample matrix. Nonzero
//! eigenvalues agree between the two constructions.

use crate::linefeat::LineImage;
use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EigenError {
    #[error("need at least 2 training vectors, got {n}")]
    TooFewSamples { n: usize },
    #[error("vector length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("k {k} exceeds the maximum {max} for this training set")]
    KTooLarge { k: usize, max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorKind {
    Raw,
    Projected,
}

/// A flattened image (raw) or its eigenspace coordinates (projected).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
    kind: VectorKind,
}

impl FeatureVector {
    pub fn raw(values: Vec<f64>) -> Self {
        Self {
            values,
            kind: VectorKind::Raw,
        }
    }

    pub fn projected(values: Vec<f64>) -> Self {
        Self {
            values,
            kind: VectorKind::Projected,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn kind(&self) -> VectorKind {
        self.kind
    }
}

/// Mean vector plus an orthonormal basis of the top-k principal directions,
/// with their eigenvalues in non-increasing order. `basis` holds k columns of
/// length d.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenspace {
    mean: Vec<f64>,
    basis: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
}

impl Eigenspace {
    /// # Panics
    /// If basis columns and eigenvalues disagree in count, or any basis
    /// column's length differs from the mean's.
    pub fn from_parts(mean: Vec<f64>, basis: Vec<Vec<f64>>, eigenvalues: Vec<f64>) -> Self {
        assert_eq!(basis.len(), eigenvalues.len(), "basis/eigenvalue count");
        assert!(
            basis.iter().all(|c| c.len() == mean.len()),
            "basis column length mismatch"
        );
        Self {
            mean,
            basis,
            eigenvalues,
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Input dimension d.
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Retained components k (may be below the requested k when the training
    /// set has lower rank).
    pub fn k(&self) -> usize {
        self.basis.len()
    }
}

/// Row-major flattening of a line image into a raw feature vector.
pub fn flatten(img: &LineImage) -> FeatureVector {
    FeatureVector::raw(img.pixels().to_vec())
}

/// Fits the eigenspace by the Gram-matrix route: eigen-decompose AᵀA/n for
/// the mean-centered sample matrix A (columns = samples), map each
/// eigenvector w back to A·w, normalize, and keep the top k by eigenvalue.
///
/// Each basis column's sign is fixed so its largest-magnitude entry is
/// positive (lowest index on ties). Components whose eigenvalue falls below
/// 1e-12 of the largest are dropped with a warning; a training set of
/// identical vectors therefore yields k = 0.
pub fn fit_eigenspace(training: &[FeatureVector], k: usize) -> Result<Eigenspace, EigenError> {
    let n = training.len();
    if n < 2 {
        return Err(EigenError::TooFewSamples { n });
    }
    let d = training[0].len();
    for v in training {
        assert_eq!(v.kind(), VectorKind::Raw, "fit expects raw vectors");
        if v.len() != d {
            return Err(EigenError::DimensionMismatch {
                expected: d,
                got: v.len(),
            });
        }
    }
    let max_k = d.min(n - 1);
    if k > max_k {
        return Err(EigenError::KTooLarge { k, max: max_k });
    }

    let mut mean = vec![0.0f64; d];
    for v in training {
        for (m, &x) in mean.iter_mut().zip(v.values()) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered: Vec<Vec<f64>> = training
        .iter()
        .map(|v| v.values().iter().zip(&mean).map(|(&x, &m)| x - m).collect())
        .collect();

    let gram = DMatrix::from_fn(n, n, |a, b| {
        let dot: f64 = centered[a].iter().zip(&centered[b]).map(|(&x, &y)| x * y).sum();
        dot / n as f64
    });
    let decomp = SymmetricEigen::new(gram);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| decomp.eigenvalues[b].total_cmp(&decomp.eigenvalues[a]));

    let lambda_max = decomp.eigenvalues[order[0]].max(0.0);
    // relative floor for rank, absolute floor so that identical-vector
    // rounding residue (λ at ulp² scale) never passes as a real component
    let cutoff = (lambda_max * 1e-12).max(1e-20);
    let mut basis = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let lambda = decomp.eigenvalues[idx];
        assert!(lambda >= -1e-10, "eigenvalue {lambda} below tolerance");
        if lambda <= cutoff {
            break;
        }
        let w = decomp.eigenvectors.column(idx);
        let mut col = vec![0.0f64; d];
        for (a, sample) in centered.iter().enumerate() {
            let wa = w[a];
            for (c, &x) in col.iter_mut().zip(sample) {
                *c += wa * x;
            }
        }
        let norm = col.iter().map(|&x| x * x).sum::<f64>().sqrt();
        for c in &mut col {
            *c /= norm;
        }
        fix_sign(&mut col);
        basis.push(col);
        eigenvalues.push(lambda.max(0.0));
    }
    if basis.len() < k {
        log::warn!(
            "training set supports only {} of {} requested components",
            basis.len(),
            k
        );
    }
    Ok(Eigenspace::from_parts(mean, basis, eigenvalues))
}

fn fix_sign(col: &mut [f64]) {
    let mut lead = 0;
    for (i, &x) in col.iter().enumerate() {
        if x.abs() > col[lead].abs() {
            lead = i;
        }
    }
    if col[lead] < 0.0 {
        for x in col.iter_mut() {
            *x = -*x;
        }
    }
}

/// Eigenspace coordinates of a raw vector: basisᵀ·(v − mean).
pub fn project(es: &Eigenspace, v: &FeatureVector) -> Result<FeatureVector, EigenError> {
    assert_eq!(v.kind(), VectorKind::Raw, "project expects a raw vector");
    if v.len() != es.dim() {
        return Err(EigenError::DimensionMismatch {
            expected: es.dim(),
            got: v.len(),
        });
    }
    let centered: Vec<f64> = v.values().iter().zip(es.mean()).map(|(&x, &m)| x - m).collect();
    let coords = es
        .basis()
        .iter()
        .map(|col| col.iter().zip(&centered).map(|(&c, &x)| c * x).sum())
        .collect();
    Ok(FeatureVector::projected(coords))
}

/// Back into image space: mean + basis·p.
pub fn reconstruct(es: &Eigenspace, p: &FeatureVector) -> Result<FeatureVector, EigenError> {
    assert_eq!(
        p.kind(),
        VectorKind::Projected,
        "reconstruct expects a projected vector"
    );
    if p.len() != es.k() {
        return Err(EigenError::DimensionMismatch {
            expected: es.k(),
            got: p.len(),
        });
    }
    let mut out = es.mean().to_vec();
    for (col, &coord) in es.basis().iter().zip(p.values()) {
        for (o, &c) in out.iter_mut().zip(col) {
            *o += coord * c;
        }
    }
    Ok(FeatureVector::raw(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_raws(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<FeatureVector> {
        (0..n)
            .map(|_| FeatureVector::raw((0..d).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect()
    }

    #[test]
    fn flatten_is_row_major_and_injective() {
        let img = LineImage::new(2, vec![0.1, 0.2, 0.3, 0.4]);
        let v = flatten(&img);
        assert_eq!(v.values(), &[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(v.kind(), VectorKind::Raw);
        let other = flatten(&LineImage::new(2, vec![0.1, 0.2, 0.3, 0.5]));
        assert_ne!(v, other);
        assert_eq!(flatten(&LineImage::new(16, vec![0.0; 256])).len(), 256);
    }

    #[test]
    fn two_samples_give_the_difference_direction() {
        let u = FeatureVector::raw(vec![1.0, 0.0, 2.0, -1.0]);
        let v = FeatureVector::raw(vec![0.0, 2.0, 2.0, 1.0]);
        let es = fit_eigenspace(&[u.clone(), v.clone()], 1).unwrap();
        assert_eq!(es.k(), 1);

        let diff: Vec<f64> = u.values().iter().zip(v.values()).map(|(a, b)| a - b).collect();
        let diff_norm = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
        let cos: f64 = es.basis()[0]
            .iter()
            .zip(&diff)
            .map(|(&b, &x)| b * x / diff_norm)
            .sum();
        assert!((cos.abs() - 1.0).abs() < 1e-12, "cos {cos}");
        // divide-by-n covariance: the lone eigenvalue is |u−v|²/4
        let expect = diff_norm * diff_norm / 4.0;
        assert!((es.eigenvalues()[0] - expect).abs() < 1e-12 * expect.max(1.0));
    }

    #[test]
    fn mean_projects_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let training = random_raws(&mut rng, 6, 10);
        let es = fit_eigenspace(&training, 4).unwrap();
        let p = project(&es, &FeatureVector::raw(es.mean().to_vec())).unwrap();
        assert!(p.values().iter().all(|&x| x.abs() < 1e-10));
    }

    #[test]
    fn basis_columns_project_to_unit_axes() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let training = random_raws(&mut rng, 8, 12);
        let es = fit_eigenspace(&training, 5).unwrap();
        for j in 0..es.k() {
            let v: Vec<f64> = es
                .mean()
                .iter()
                .zip(&es.basis()[j])
                .map(|(&m, &b)| m + b)
                .collect();
            let p = project(&es, &FeatureVector::raw(v)).unwrap();
            for (i, &x) in p.values().iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((x - expect).abs() < 1e-10, "axis {j} coord {i}: {x}");
            }
        }
    }

    #[test]
    fn projection_contracts_the_centered_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let training = random_raws(&mut rng, 8, 15);
        let es = fit_eigenspace(&training, 6).unwrap();
        for _ in 0..20 {
            let v = FeatureVector::raw((0..15).map(|_| rng.random_range(-2.0..2.0)).collect());
            let centered_sq: f64 = v
                .values()
                .iter()
                .zip(es.mean())
                .map(|(&x, &m)| (x - m) * (x - m))
                .sum();
            let p = project(&es, &v).unwrap();
            let proj_sq: f64 = p.values().iter().map(|&x| x * x).sum();
            assert!(proj_sq <= centered_sq + 1e-9);
        }
    }

    #[test]
    fn snapshot_matches_dense_covariance_decomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (n, d, k) = (10, 50, 9);
        let training = random_raws(&mut rng, n, d);
        let es = fit_eigenspace(&training, k).unwrap();

        // orthonormality
        for a in 0..k {
            for b in 0..k {
                let dot: f64 = es.basis()[a]
                    .iter()
                    .zip(&es.basis()[b])
                    .map(|(&x, &y)| x * y)
                    .sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() <= 1e-8, "({a},{b}): {dot}");
            }
        }
        for w in es.eigenvalues().windows(2) {
            assert!(w[0] >= w[1]);
        }

        // same spectrum and directions from the d×d covariance, built directly
        let mean: Vec<f64> = (0..d)
            .map(|i| training.iter().map(|v| v.values()[i]).sum::<f64>() / n as f64)
            .collect();
        let cov = DMatrix::from_fn(d, d, |i, j| {
            training
                .iter()
                .map(|v| (v.values()[i] - mean[i]) * (v.values()[j] - mean[j]))
                .sum::<f64>()
                / n as f64
        });
        let dense = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| dense.eigenvalues[b].total_cmp(&dense.eigenvalues[a]));
        for (rank, &idx) in order.iter().take(k).enumerate() {
            let lambda = dense.eigenvalues[idx];
            let rel = (es.eigenvalues()[rank] - lambda).abs() / lambda.max(1e-10);
            assert!(rel <= 1e-6, "eigenvalue {rank}: {rel}");
            let cos: f64 = es.basis()[rank]
                .iter()
                .enumerate()
                .map(|(i, &x)| x * dense.eigenvectors[(i, idx)])
                .sum();
            assert!((cos.abs() - 1.0).abs() < 1e-6, "direction {rank}: {cos}");
        }

        // captured variance never exceeds the covariance trace
        let trace: f64 = (0..d)
            .map(|i| {
                training
                    .iter()
                    .map(|v| (v.values()[i] - mean[i]) * (v.values()[i] - mean[i]))
                    .sum::<f64>()
                    / n as f64
            })
            .sum();
        let captured: f64 = es.eigenvalues().iter().sum();
        assert!(captured <= trace + 1e-9);
    }

    #[test]
    fn reconstruction_round_trips_and_improves_with_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let training = random_raws(&mut rng, 10, 20);

        let es = fit_eigenspace(&training, 9).unwrap();
        let mean_back = reconstruct(
            &es,
            &project(&es, &FeatureVector::raw(es.mean().to_vec())).unwrap(),
        )
        .unwrap();
        for (a, b) in mean_back.values().iter().zip(es.mean()) {
            assert!((a - b).abs() < 1e-10);
        }

        let probe = FeatureVector::raw((0..20).map(|_| rng.random_range(-1.0..1.0)).collect());
        let once = reconstruct(&es, &project(&es, &probe).unwrap()).unwrap();
        let twice = reconstruct(&es, &project(&es, &once).unwrap()).unwrap();
        for (a, b) in once.values().iter().zip(twice.values()) {
            assert!((a - b).abs() < 1e-10);
        }

        let mut last_err = f64::INFINITY;
        for k in [1, 5, 9] {
            let es = fit_eigenspace(&training, k).unwrap();
            let back = reconstruct(&es, &project(&es, &probe).unwrap()).unwrap();
            let err: f64 = probe
                .values()
                .iter()
                .zip(back.values())
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(err <= last_err + 1e-12, "k {k}: {err} > {last_err}");
            last_err = err;
        }
    }

    #[test]
    fn identical_training_vectors_collapse_to_empty_space() {
        let v = FeatureVector::raw(vec![0.4; 6]);
        let es = fit_eigenspace(&[v.clone(), v.clone(), v.clone()], 2).unwrap();
        assert_eq!(es.k(), 0);
        let p = project(&es, &v).unwrap();
        assert!(p.is_empty());
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let v = FeatureVector::raw(vec![0.0; 4]);
        assert!(matches!(
            fit_eigenspace(std::slice::from_ref(&v), 1),
            Err(EigenError::TooFewSamples { n: 1 })
        ));
        let w = FeatureVector::raw(vec![0.0; 5]);
        assert!(matches!(
            fit_eigenspace(&[v.clone(), w], 1),
            Err(EigenError::DimensionMismatch { .. })
        ));
        let u = FeatureVector::raw(vec![1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            fit_eigenspace(&[v.clone(), u.clone()], 2),
            Err(EigenError::KTooLarge { k: 2, max: 1 })
        ));
        let es = fit_eigenspace(&[v, u], 1).unwrap();
        assert!(matches!(
            project(&es, &FeatureVector::raw(vec![0.0; 3])),
            Err(EigenError::DimensionMismatch { .. })
        ));
    }
}
