use alloc::sync::Arc;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::SpinBasis;
use crate::couplings::CouplingMatrix;
use crate::{Error, Result, C64};

/// `H = −Σ_{i<j} J_ij σ_z^i σ_z^j − B_x Σ_i σ_x^i`, applied matrix-free.
///
/// The Ising part is a stored diagonal; the field term couples each basis
/// state to its `N` single-bit-flip partners. Cloning shares the diagonal, so
/// [`with_field`](Self::with_field) is cheap.
#[derive(Debug, Clone)]
pub struct IsingHamiltonian {
    basis: SpinBasis,
    diagonal: Arc<[f64]>,
    b_field: f64,
}

pub fn build_hamiltonian(couplings: &CouplingMatrix, b_field: f64) -> Result<IsingHamiltonian> {
    let basis = SpinBasis::new(couplings.n())?;
    let n = basis.n_spins();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let v = couplings.get(i, j);
            if v != 0.0 {
                pairs.push((i, j, v));
            }
        }
    }
    let diagonal: Vec<f64> = (0..basis.dimension())
        .map(|c| {
            let mut e = 0.0;
            for &(i, j, v) in &pairs {
                // σ_z^i σ_z^j = −1 exactly when the two bits differ.
                if (c >> i ^ c >> j) & 1 == 0 {
                    e -= v;
                } else {
                    e += v;
                }
            }
            e
        })
        .collect();
    IsingHamiltonian::from_diagonal(basis, diagonal, b_field)
}

impl IsingHamiltonian {
    pub fn from_diagonal(basis: SpinBasis, diagonal: Vec<f64>, b_field: f64) -> Result<Self> {
        if diagonal.len() != basis.dimension() {
            return Err(Error::DimensionMismatch { expected: basis.dimension(), got: diagonal.len() });
        }
        if !b_field.is_finite() || diagonal.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvalidParameter("Hamiltonian entries must be finite".into()));
        }
        Ok(Self { basis, diagonal: diagonal.into(), b_field })
    }

    pub fn basis(&self) -> SpinBasis {
        self.basis
    }

    pub fn n_spins(&self) -> usize {
        self.basis.n_spins()
    }

    pub fn dimension(&self) -> usize {
        self.basis.dimension()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn b_field(&self) -> f64 {
        self.b_field
    }

    pub fn with_field(&self, b_field: f64) -> Self {
        Self { basis: self.basis, diagonal: Arc::clone(&self.diagonal), b_field }
    }

    /// Upper bound on the spectral radius.
    pub fn norm_bound(&self) -> f64 {
        let d = self.diagonal.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        d + self.n_spins() as f64 * self.b_field.abs()
    }

    /// `out += scale · (−B Σ σ_x) x`.
    pub fn add_transverse(&self, scale: C64, x: &[C64], out: &mut [C64]) {
        let c = scale * -self.b_field;
        let dim = self.dimension();
        for site in 0..self.n_spins() {
            let m = 1 << site;
            for block in (0..dim).step_by(2 * m) {
                for k in block..block + m {
                    out[k] += c * x[k + m];
                    out[k + m] += c * x[k];
                }
            }
        }
    }

    /// `out = H x`.
    pub fn apply(&self, x: &[C64], out: &mut [C64]) {
        debug_assert_eq!(x.len(), self.dimension());
        for ((o, xi), d) in out.iter_mut().zip(x).zip(self.diagonal.iter()) {
            *o = xi * *d;
        }
        self.add_transverse(C64::new(1.0, 0.0), x, out);
    }

    /// Real-vector variant of [`apply`](Self::apply).
    pub fn apply_real(&self, x: &[f64], out: &mut [f64]) {
        let dim = self.dimension();
        for k in 0..dim {
            out[k] = self.diagonal[k] * x[k];
        }
        let b = -self.b_field;
        for site in 0..self.n_spins() {
            let m = 1 << site;
            for block in (0..dim).step_by(2 * m) {
                for k in block..block + m {
                    out[k] += b * x[k + m];
                    out[k + m] += b * x[k];
                }
            }
        }
    }

    /// `⟨x|H|x⟩` for a normalized `x`.
    pub fn expectation(&self, x: &[C64]) -> f64 {
        let mut hx = alloc::vec![C64::new(0.0, 0.0); x.len()];
        self.apply(x, &mut hx);
        x.iter().zip(&hx).map(|(a, b)| (a.conj() * b).re).sum()
    }

    /// Dense matrix; only sensible for small chains.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let dim = self.dimension();
        let mut m = DMatrix::zeros(dim, dim);
        for c in 0..dim {
            m[(c, c)] = self.diagonal[c];
            for site in 0..self.n_spins() {
                m[(c ^ (1 << site), c)] = -self.b_field;
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::couplings::CouplingSign;
    use alloc::vec;

    fn couplings(n: usize, j: f64) -> CouplingMatrix {
        CouplingMatrix::from_values(DMatrix::from_element(n, n, j), CouplingSign::Ferromagnetic)
            .unwrap()
    }

    #[test]
    fn two_spin_diagonal() {
        let h = build_hamiltonian(&couplings(2, 1.5), 0.0).unwrap();
        assert_eq!(h.diagonal(), &[-1.5, 1.5, 1.5, -1.5]);
    }

    #[test]
    fn single_spin_field_eigenvalues() {
        let h = build_hamiltonian(&couplings(1, 0.0), 2.0).unwrap();
        let eig = h.to_dense().symmetric_eigenvalues();
        let mut e: Vec<f64> = eig.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        assert!((e[0] + 2.0).abs() < 1e-14 && (e[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn matvec_matches_dense() {
        let h = build_hamiltonian(&couplings(3, 0.7), 1.1).unwrap();
        let dense = h.to_dense();
        let x: Vec<C64> = (0..8).map(|k| C64::new(k as f64 * 0.1, 1.0 - k as f64 * 0.05)).collect();
        let mut out = vec![C64::new(0.0, 0.0); 8];
        h.apply(&x, &mut out);
        for r in 0..8 {
            let expect: C64 = (0..8).map(|c| x[c] * dense[(r, c)]).sum();
            assert!((expect - out[r]).norm() < 1e-14);
        }
        let xr: Vec<f64> = x.iter().map(|z| z.re).collect();
        let mut outr = vec![0.0; 8];
        h.apply_real(&xr, &mut outr);
        for r in 0..8 {
            let expect: f64 = (0..8).map(|c| xr[c] * dense[(r, c)]).sum();
            assert!((expect - outr[r]).abs() < 1e-14);
        }
    }

    #[test]
    fn with_field_shares_diagonal() {
        let h = build_hamiltonian(&couplings(4, 1.0), 1.0).unwrap();
        let g = h.with_field(3.0);
        assert_eq!(g.b_field(), 3.0);
        assert!(core::ptr::eq(h.diagonal().as_ptr(), g.diagonal().as_ptr()));
    }
}
