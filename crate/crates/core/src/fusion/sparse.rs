//! Overcomplete DCT atom bank and orthogonal matching pursuit.

use super::FusionError;
use nalgebra::{DMatrix, DVector};

const UNIT_NORM_TOL: f64 = 1e-9;
// Correlations below this are treated as no remaining structure.
const CORR_FLOOR: f64 = 1e-12;

/// Column atoms of length `patch_size^2`, each of unit norm.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomDictionary {
    patch_size: usize,
    atoms: DMatrix<f64>,
}

impl AtomDictionary {
    /// Wrap explicit columns. Sub-banks with fewer atoms than dimensions are
    /// allowed; only the unit-norm invariant is enforced.
    pub fn from_columns(patch_size: usize, atoms: DMatrix<f64>) -> Result<Self, FusionError> {
        if patch_size == 0 || atoms.nrows() != patch_size * patch_size || atoms.ncols() == 0 {
            return Err(FusionError::InvalidDictionary(format!(
                "{}x{} matrix for patch size {patch_size}",
                atoms.nrows(),
                atoms.ncols()
            )));
        }
        for (j, c) in atoms.column_iter().enumerate() {
            if (c.norm() - 1.0).abs() > UNIT_NORM_TOL {
                return Err(FusionError::InvalidDictionary(format!(
                    "atom {j} has norm {}",
                    c.norm()
                )));
            }
        }
        Ok(AtomDictionary { patch_size, atoms })
    }

    /// Keep the listed atoms, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self, FusionError> {
        if let Some(&j) = indices.iter().find(|&&j| j >= self.len()) {
            return Err(FusionError::InvalidDictionary(format!("atom {j} out of range")));
        }
        let cols: Vec<_> = indices.iter().map(|&j| self.atoms.column(j)).collect();
        Self::from_columns(self.patch_size, DMatrix::from_columns(&cols))
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    /// Signal dimension `d`.
    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }

    /// Number of atoms `m`.
    pub fn len(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.ncols() == 0
    }

    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    pub fn atom(&self, j: usize) -> DVector<f64> {
        self.atoms.column(j).into_owned()
    }
}

/// Separable cosine bank: 1-D atoms `cos(pi k (2i+1) / 2K)` for `k < K`,
/// 2-D atom `ky * K + kx` is their outer product, normalized.
///
/// With `K = 2 n` the atoms with even `kx` and `ky` are exactly the
/// orthonormal DCT-II basis of an `n x n` patch.
pub fn dct_dictionary(patch_size: usize, atoms_per_dim: usize) -> Result<AtomDictionary, FusionError> {
    if patch_size == 0 || atoms_per_dim < patch_size {
        return Err(FusionError::InvalidDictionary(format!(
            "atoms_per_dim {atoms_per_dim} must be at least patch size {patch_size} (> 0)"
        )));
    }
    let (n, k) = (patch_size, atoms_per_dim);
    let one_d: Vec<Vec<f64>> = (0..k)
        .map(|f| {
            let v: Vec<f64> = (0..n)
                .map(|i| (std::f64::consts::PI * f as f64 * (2 * i + 1) as f64 / (2 * k) as f64).cos())
                .collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect();
    let d = n * n;
    let mut atoms = DMatrix::zeros(d, k * k);
    for ky in 0..k {
        for kx in 0..k {
            let mut col = atoms.column_mut(ky * k + kx);
            for y in 0..n {
                for x in 0..n {
                    col[y * n + x] = one_d[ky][y] * one_d[kx][x];
                }
            }
            let norm = col.norm();
            col /= norm;
        }
    }
    AtomDictionary::from_columns(patch_size, atoms)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub support: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub residual_norm: f64,
}

impl SparseCode {
    pub fn l1(&self) -> f64 {
        self.coefficients.iter().map(|c| c.abs()).sum()
    }

    pub fn reconstruct(&self, dict: &AtomDictionary) -> DVector<f64> {
        let mut out = DVector::zeros(dict.dim());
        for (&j, &c) in self.support.iter().zip(&self.coefficients) {
            out.axpy(c, &dict.atoms.column(j), 1.0);
        }
        out
    }
}

fn back_substitute(r: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    // r[j] holds column j of the upper-triangular factor
    let k = b.len();
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = b[i];
        for j in i + 1..k {
            s -= r[j][i] * x[j];
        }
        x[i] = s / r[i][i];
    }
    x
}

/// Orthogonal matching pursuit. Returns the code after every iteration,
/// starting with the empty code.
pub fn omp_path(
    signal: &[f64],
    dict: &AtomDictionary,
    max_atoms: usize,
    tol: f64,
) -> Result<Vec<SparseCode>, FusionError> {
    run_omp(signal, dict, max_atoms, tol, true)
}

pub fn omp(signal: &[f64], dict: &AtomDictionary, max_atoms: usize, tol: f64) -> Result<SparseCode, FusionError> {
    Ok(run_omp(signal, dict, max_atoms, tol, false)?
        .pop()
        .expect("final code is always reported"))
}

fn run_omp(
    signal: &[f64],
    dict: &AtomDictionary,
    max_atoms: usize,
    tol: f64,
    trace: bool,
) -> Result<Vec<SparseCode>, FusionError> {
    if signal.len() != dict.dim() {
        return Err(FusionError::SignalLength {
            expected: dict.dim(),
            found: signal.len(),
        });
    }
    let s = DVector::from_column_slice(signal);
    let mut residual = s.clone();
    let mut q: Vec<DVector<f64>> = Vec::new();
    let mut r: Vec<Vec<f64>> = Vec::new();
    let mut qts: Vec<f64> = Vec::new();
    let mut support: Vec<usize> = Vec::new();

    let snapshot = |support: &[usize], r: &[Vec<f64>], qts: &[f64], norm: f64| SparseCode {
        support: support.to_vec(),
        coefficients: back_substitute(r, qts),
        residual_norm: norm,
    };
    let mut path = Vec::new();
    if trace {
        path.push(snapshot(&support, &r, &qts, residual.norm()));
    }

    while support.len() < max_atoms.min(dict.dim()) && residual.norm() > tol {
        let corr = dict.atoms.tr_mul(&residual);
        let mut best = None;
        let mut best_abs = CORR_FLOOR;
        for (j, c) in corr.iter().enumerate() {
            if c.abs() > best_abs && !support.contains(&j) {
                best = Some(j);
                best_abs = c.abs();
            }
        }
        let Some(j) = best else { break };

        let mut v = dict.atoms.column(j).into_owned();
        let mut col = vec![0.0; q.len() + 1];
        // Two Gram-Schmidt passes keep Q orthonormal to working precision.
        for _ in 0..2 {
            for (i, qi) in q.iter().enumerate() {
                let p = qi.dot(&v);
                col[i] += p;
                v.axpy(-p, qi, 1.0);
            }
        }
        let norm = v.norm();
        if norm <= 1e-10 {
            break;
        }
        v /= norm;
        col[q.len()] = norm;
        qts.push(v.dot(&s));
        residual.axpy(-v.dot(&residual), &v, 1.0);
        q.push(v);
        r.push(col);
        support.push(j);
        if trace {
            path.push(snapshot(&support, &r, &qts, residual.norm()));
        }
    }
    if !trace {
        path.push(snapshot(&support, &r, &qts, residual.norm()));
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orthonormal_bank() -> AtomDictionary {
        let full = dct_dictionary(4, 8).unwrap();
        let even: Vec<usize> = (0..8)
            .step_by(2)
            .flat_map(|ky| (0..8).step_by(2).map(move |kx| ky * 8 + kx))
            .collect();
        full.select(&even).unwrap()
    }

    #[test]
    fn dictionary_shape_and_norms() {
        let d = dct_dictionary(8, 16).unwrap();
        assert_eq!((d.dim(), d.len()), (64, 256));
        let gram = d.atoms().tr_mul(d.atoms());
        for j in 0..256 {
            assert!((gram[(j, j)] - 1.0).abs() < 1e-9);
        }
        assert!(d.atom(0).iter().all(|v| (v - 1.0 / 8.0).abs() < 1e-12));
        assert!(dct_dictionary(8, 7).is_err());
    }

    #[test]
    fn even_sub_bank_is_orthonormal() {
        let b = orthonormal_bank();
        let g = b.atoms().tr_mul(b.atoms());
        assert!((g - DMatrix::identity(16, 16)).abs().max() < 1e-12);
    }

    #[test]
    fn single_atom_recovery() {
        let b = orthonormal_bank();
        let sig: Vec<f64> = (b.atom(5) * 3.0).iter().cloned().collect();
        let path = omp_path(&sig, &b, 8, 1e-9).unwrap();
        assert_eq!(path.len(), 2);
        let c = path.last().unwrap();
        assert_eq!(c.support, vec![5]);
        assert!((c.coefficients[0] - 3.0).abs() < 1e-12);
        assert!(c.residual_norm < 1e-12);
    }

    #[test]
    fn zero_signal() {
        let d = dct_dictionary(4, 8).unwrap();
        let c = omp(&[0.0; 16], &d, 4, 1e-3).unwrap();
        assert!(c.support.is_empty() && c.coefficients.is_empty());
        assert_eq!(c.residual_norm, 0.0);
        assert!(matches!(
            omp(&[0.0; 15], &d, 4, 1e-3),
            Err(FusionError::SignalLength { .. })
        ));
    }

    #[test]
    fn two_orthogonal_atoms() {
        let b = orthonormal_bank();
        let sig: Vec<f64> = (b.atom(1) * 3.0 + b.atom(5) * 2.0).iter().cloned().collect();
        let c = omp(&sig, &b, 8, 1e-12).unwrap();
        let mut pairs: Vec<_> = c.support.iter().cloned().zip(c.coefficients.iter().cloned()).collect();
        pairs.sort_by_key(|p| p.0);
        assert_eq!(pairs.len(), 2);
        assert_eq!((pairs[0].0, pairs[1].0), (1, 5));
        assert!((pairs[0].1 - 3.0).abs() < 1e-12 && (pairs[1].1 - 2.0).abs() < 1e-12);
        assert!(c.residual_norm <= 1e-9);
    }

    #[test]
    fn budget_and_tolerance_stop() {
        let d = dct_dictionary(4, 8).unwrap();
        let sig: Vec<f64> = (0..16).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        assert_eq!(omp(&sig, &d, 3, 0.0).unwrap().support.len(), 3);
        let full = omp(&sig, &d, 16, 1e-9).unwrap();
        assert!(full.residual_norm <= 1e-9);
        let rec = full.reconstruct(&d);
        for (a, b) in rec.iter().zip(&sig) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}
