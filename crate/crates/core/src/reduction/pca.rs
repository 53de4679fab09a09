use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frst::{read_real, tensor_write};
use crate::linalg::{matmul, Trans};
use crate::tensor::DenseTensor;

/// Components whose standard deviation falls below this are not whitened.
pub const WHITEN_FLOOR: f64 = 1e-8;

/// A principal-component projection fitted on a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    /// Training mean, length `dim`.
    pub mean: Vec<f64>,
    /// `u_dim × dim` orthonormal rows, strongest component first.
    pub basis: Vec<f64>,
    /// Per-component standard deviation of the training projections,
    /// non-increasing.
    pub scales: Vec<f64>,
    pub whiten: bool,
    pub u_dim: usize,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn basis_row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.basis[i * d..(i + 1) * d]
    }

    fn whiten_factor(&self, i: usize) -> f64 {
        if self.whiten && self.scales[i] >= WHITEN_FLOOR {
            1.0 / self.scales[i]
        } else {
            1.0
        }
    }

    /// Maps codes back to the embedding space: `mean + basisᵀ · unwhiten(z)`.
    pub fn reconstruct(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.u_dim {
            return Err(Error::shape(format!(
                "code has length {} but the model keeps {} components",
                z.len(),
                self.u_dim
            )));
        }
        let mut out = self.mean.clone();
        for (i, &zi) in z.iter().enumerate() {
            let c = zi / self.whiten_factor(i);
            for (o, b) in out.iter_mut().zip(self.basis_row(i)) {
                *o += c * b;
            }
        }
        Ok(out)
    }
}

fn samples(train: &DenseTensor<f64>) -> Result<(usize, usize)> {
    let n = *train
        .shape()
        .first()
        .ok_or_else(|| Error::shape("expected a batch of samples"))?;
    Ok((n, train.item_len()))
}

/// Unit-norm orthogonalisation of `rows` (each of length `d`) in place,
/// replacing numerically dependent rows by completions from the standard
/// basis.
fn orthonormalize(rows: &mut [f64], d: usize) {
    let count = rows.len() / d;
    let mut next_unit = 0;
    for i in 0..count {
        let mut attempts = 0;
        loop {
            let (done, rest) = rows.split_at_mut(i * d);
            let row = &mut rest[..d];
            let before = norm(row);
            for _ in 0..2 {
                for q in done.chunks(d) {
                    let dot: f64 = q.iter().zip(row.iter()).map(|(a, b)| a * b).sum();
                    row.iter_mut().zip(q).for_each(|(r, qv)| *r -= dot * qv);
                }
            }
            let after = norm(row);
            if after > 1e-6 * before.max(f64::MIN_POSITIVE) && after > 0.0 {
                row.iter_mut().for_each(|v| *v /= after);
                break;
            }
            assert!(attempts <= d, "cannot complete an orthonormal basis");
            attempts += 1;
            row.iter_mut().for_each(|v| *v = 0.0);
            row[next_unit % d] = 1.0;
            next_unit += 1;
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Fits a PCA on the rows of `train` (shape `n × ...`, flattened per sample).
///
/// Uses the `n × n` Gram matrix when there are fewer samples than features
/// and the `D × D` scatter matrix otherwise.
pub fn pca_fit(train: &DenseTensor<f64>, u_dim: usize, whiten: bool) -> Result<PcaModel> {
    let (n, d) = samples(train)?;
    if n < 2 {
        return Err(Error::param(format!("PCA needs at least 2 samples, got {n}")));
    }
    if u_dim == 0 || u_dim > (n - 1).min(d) {
        return Err(Error::OutOfRange(format!(
            "U_dim = {u_dim} must lie in 1..={} for {n} samples of dimension {d}",
            (n - 1).min(d)
        )));
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        mean.iter_mut().zip(train.item(i)).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut xc = train.data().to_vec();
    for row in xc.chunks_mut(d) {
        row.iter_mut().zip(&mean).for_each(|(x, m)| *x -= m);
    }
    let scale_all = xc.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if scale_all == 0.0 {
        return Err(Error::param("all PCA samples are identical"));
    }

    let gram_route = n <= d;
    let m = if gram_route { n } else { d };
    let g = if gram_route {
        matmul(Trans::No, Trans::Yes, n, d, n, &xc, &xc)
    } else {
        matmul(Trans::Yes, Trans::No, d, n, d, &xc, &xc)
    };
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(m, m, &g));
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    order.truncate(u_dim);

    let lambda_max = eig.eigenvalues[order[0]].max(0.0);
    // Eigenvalues below the solver's rounding level are zero variance.
    let noise = lambda_max * m as f64 * f64::EPSILON;
    let mut values = Vec::with_capacity(u_dim);
    let mut basis = vec![0.0; u_dim * d];
    for (r, &idx) in order.iter().enumerate() {
        let lambda = eig.eigenvalues[idx];
        let lambda = if lambda > noise { lambda } else { 0.0 };
        values.push(lambda);
        let v = eig.eigenvectors.column(idx);
        let row = &mut basis[r * d..(r + 1) * d];
        if gram_route {
            // Right singular vector: Xcᵀ v / ‖Xcᵀ v‖.
            if lambda > 0.0 {
                for (s, x) in xc.chunks(d).enumerate() {
                    let c = v[s];
                    row.iter_mut().zip(x).for_each(|(b, xv)| *b += c * xv);
                }
            }
        } else {
            row.iter_mut().zip(v.iter()).for_each(|(b, vv)| *b = *vv);
        }
    }
    orthonormalize(&mut basis, d);
    for row in basis.chunks_mut(d) {
        let pivot = row.iter().fold(0.0f64, |a, &v| if v.abs() > a.abs() { v } else { a });
        if pivot < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
    }
    let scales: Vec<f64> = values.iter().map(|l| (l / (n - 1) as f64).sqrt()).collect();
    Ok(PcaModel {
        mean,
        basis,
        scales,
        whiten,
        u_dim,
    })
}

/// Projects one flattened embedding: `z = basis · (e − mean)`, whitened if
/// the model says so.
pub fn pca_project(e: &[f64], m: &PcaModel) -> Result<Vec<f64>> {
    if e.len() != m.dim() {
        return Err(Error::shape(format!(
            "embedding has length {} but the model expects {}",
            e.len(),
            m.dim()
        )));
    }
    let centered: Vec<f64> = e.iter().zip(&m.mean).map(|(x, mu)| x - mu).collect();
    Ok((0..m.u_dim)
        .map(|i| {
            let dot: f64 = m.basis_row(i).iter().zip(&centered).map(|(b, c)| b * c).sum();
            dot * m.whiten_factor(i)
        })
        .collect())
}

/// Projects every sample of an `n × ...` batch into an `n × U` tensor.
pub fn pca_project_batch(batch: &DenseTensor<f64>, m: &PcaModel) -> Result<DenseTensor<f64>> {
    let (n, d) = samples(batch)?;
    if d != m.dim() {
        return Err(Error::shape(format!(
            "samples have length {d} but the model expects {}",
            m.dim()
        )));
    }
    let mut xc = batch.data().to_vec();
    for row in xc.chunks_mut(d.max(1)) {
        row.iter_mut().zip(&m.mean).for_each(|(x, mu)| *x -= mu);
    }
    let mut z = matmul(Trans::No, Trans::Yes, n, d, m.u_dim, &xc, &m.basis);
    for row in z.chunks_mut(m.u_dim) {
        for (i, v) in row.iter_mut().enumerate() {
            *v *= m.whiten_factor(i);
        }
    }
    DenseTensor::new(vec![n, m.u_dim], z)
}

#[derive(Debug, Serialize, Deserialize)]
struct PcaHeader {
    format: String,
    dim: usize,
    u_dim: usize,
    whiten: bool,
    mean: PathBuf,
    basis: PathBuf,
    scales: PathBuf,
}

fn sibling(header: &Path, suffix: &str) -> PathBuf {
    let stem = header
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "pca".into());
    PathBuf::from(format!("{stem}.{suffix}.frst"))
}

/// Writes a JSON header at `path` plus three tensor files beside it.
pub fn pca_save(m: &PcaModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().unwrap_or(Path::new(""));
    let header = PcaHeader {
        format: "frscatter-pca-1".into(),
        dim: m.dim(),
        u_dim: m.u_dim,
        whiten: m.whiten,
        mean: sibling(path, "mean"),
        basis: sibling(path, "basis"),
        scales: sibling(path, "scales"),
    };
    tensor_write(&DenseTensor::new(vec![m.dim()], m.mean.clone())?, dir.join(&header.mean))?;
    tensor_write(
        &DenseTensor::new(vec![m.u_dim, m.dim()], m.basis.clone())?,
        dir.join(&header.basis),
    )?;
    tensor_write(&DenseTensor::new(vec![m.u_dim], m.scales.clone())?, dir.join(&header.scales))?;
    let text = serde_json::to_string_pretty(&header)?;
    std::fs::write(path, text).map_err(|e| Error::file(path, e))
}

pub fn pca_load(path: impl AsRef<Path>) -> Result<PcaModel> {
    let path = path.as_ref();
    let dir = path.parent().unwrap_or(Path::new(""));
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let h: PcaHeader = serde_json::from_str(&text)?;
    let mean = read_real(dir.join(&h.mean))?.into_data();
    let basis = read_real(dir.join(&h.basis))?.into_data();
    let scales = read_real(dir.join(&h.scales))?.into_data();
    if mean.len() != h.dim || basis.len() != h.dim * h.u_dim || scales.len() != h.u_dim {
        return Err(Error::shape(format!(
            "PCA files in {} disagree with the header",
            path.display()
        )));
    }
    Ok(PcaModel {
        mean,
        basis,
        scales,
        whiten: h.whiten,
        u_dim: h.u_dim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn random(n: usize, d: usize, seed: u64) -> DenseTensor<f64> {
        let mut rng = SeededRng::new(seed);
        // Anisotropic so the spectrum is well separated.
        DenseTensor::from_fn(vec![n, d], |i| {
            let col = i % d;
            (rng.next_f64() - 0.5) * (1.0 + col as f64)
        })
    }

    fn check_orthonormal(m: &PcaModel) {
        for i in 0..m.u_dim {
            for j in 0..m.u_dim {
                let dot: f64 = m.basis_row(i).iter().zip(m.basis_row(j)).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-8, "({i},{j}) = {dot}");
            }
        }
        assert!(m.scales.windows(2).all(|w| w[0] >= w[1]));
        assert!(m.scales.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn rank_one_data() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        let data: Vec<f64> = [0.0, 1.0, 3.0].iter().flat_map(|s| v.map(|x| s * x)).collect();
        let t = DenseTensor::new(vec![3, 5], data).unwrap();
        let m = pca_fit(&t, 2, false).unwrap();
        assert!(m.scales[0] > 0.0);
        assert!(m.scales[1] < 1e-8);
        check_orthonormal(&m);
    }

    #[test]
    fn both_routes_agree() {
        // 30 samples in R^12 uses the scatter route, the transposed problem
        // the Gram route; the spectra must match on shared data.
        let t = random(30, 12, 1);
        let m = pca_fit(&t, 10, false).unwrap();
        check_orthonormal(&m);
        let t2 = random(8, 12, 2);
        let m2 = pca_fit(&t2, 7, true).unwrap();
        check_orthonormal(&m2);
    }

    #[test]
    fn mean_projects_to_zero() {
        let t = random(10, 20, 3);
        let m = pca_fit(&t, 5, true).unwrap();
        let z = pca_project(&m.mean, &m).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn full_rank_reconstruction() {
        let t = random(12, 6, 4);
        for whiten in [false, true] {
            let m = pca_fit(&t, 6, whiten).unwrap();
            for i in 0..12 {
                let e = t.item(i);
                let z = pca_project(e, &m).unwrap();
                let back = m.reconstruct(&z).unwrap();
                let err: f64 = e.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let size: f64 = e.iter().map(|a| a * a).sum::<f64>().sqrt();
                assert!(err <= 1e-6 * size);
            }
        }
    }

    #[test]
    fn whitened_training_codes_are_standardised() {
        for (n, d) in [(40, 10), (15, 30)] {
            let t = random(n, d, 5);
            let u = (n - 1).min(d);
            let m = pca_fit(&t, u, true).unwrap();
            let z = pca_project_batch(&t, &m).unwrap();
            for c in 0..u {
                let col: Vec<f64> = (0..n).map(|i| z.data()[i * u + c]).collect();
                let mean = col.iter().sum::<f64>() / n as f64;
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                assert!(mean.abs() < 1e-8);
                if m.scales[c] > 1e-6 {
                    assert!((var - 1.0).abs() < 1e-3, "component {c}: {var}");
                }
            }
        }
    }

    #[test]
    fn batch_matches_single() {
        let t = random(9, 7, 6);
        let m = pca_fit(&t, 4, true).unwrap();
        let z = pca_project_batch(&t, &m).unwrap();
        for i in 0..9 {
            let single = pca_project(t.item(i), &m).unwrap();
            for (a, b) in single.iter().zip(&z.data()[i * 4..(i + 1) * 4]) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn errors() {
        let t = random(5, 4, 7);
        assert!(pca_fit(&t, 5, false).is_err());
        assert!(pca_fit(&t, 0, false).is_err());
        assert!(pca_fit(&random(1, 4, 1), 1, false).is_err());
        let same = DenseTensor::filled(vec![4, 3], 2.5);
        assert!(pca_fit(&same, 1, false).is_err());
        let m = pca_fit(&t, 2, false).unwrap();
        assert!(pca_project(&[0.0; 3], &m).is_err());
        assert!(m.reconstruct(&[0.0; 3]).is_err());
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let t = random(10, 6, 8);
        let m = pca_fit(&t, 4, true).unwrap();
        let path = dir.path().join("model.json");
        pca_save(&m, &path).unwrap();
        assert!(dir.path().join("model.basis.frst").exists());
        assert_eq!(pca_load(&path).unwrap(), m);
    }
}
