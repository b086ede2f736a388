use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};

use super::symmetry::{flip_bits, reflect_bits};
use super::{IsingHamiltonian, SymmetrySector};
use crate::{Error, Result, C64};
#[allow(unused_imports)]
use num_traits::Float;

const NO_STATE: u32 = u32::MAX;
/// Relative energy window within which levels count as degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-12;
const PARITY_TOLERANCE: f64 = 1e-8;

/// Symmetry-adapted basis vector: a signed, normalized sum over one orbit.
#[derive(Debug, Clone, Copy)]
struct AdaptedState {
    index: [usize; 4],
    coeff: [f64; 4],
    len: u8,
}

impl AdaptedState {
    fn entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.len as usize).map(move |k| (self.index[k], self.coeff[k]))
    }

    fn coeff_at(&self, index: usize) -> f64 {
        self.entries().find(|(i, _)| *i == index).map_or(0.0, |(_, c)| c)
    }
}

/// One symmetry sector: adapted basis and its eigenpairs.
#[derive(Debug, Clone)]
pub struct SectorBlock {
    pub sector: SymmetrySector,
    states: Vec<AdaptedState>,
    /// Ascending.
    pub energies: Vec<f64>,
    /// Columns are eigenvectors in the adapted basis.
    pub eigenvectors: DMatrix<f64>,
}

impl SectorBlock {
    pub fn dimension(&self) -> usize {
        self.states.len()
    }

    /// Eigenvector `col` written out on the computational basis.
    pub fn expand(&self, col: usize, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        self.expand_into(col, &mut out);
        out
    }

    fn expand_into(&self, col: usize, out: &mut [f64]) {
        let v = self.eigenvectors.column(col);
        for (a, st) in self.states.iter().enumerate() {
            for (idx, c) in st.entries() {
                out[idx] = c * v[a];
            }
        }
    }

    /// `⟨n|ψ⟩` for every eigenvector of the block.
    pub fn overlaps(&self, psi: &[C64]) -> Vec<C64> {
        let proj: Vec<C64> = self
            .states
            .iter()
            .map(|st| st.entries().map(|(i, c)| psi[i] * c).sum())
            .collect();
        let d = self.dimension();
        (0..d)
            .map(|col| {
                let v = self.eigenvectors.column(col);
                let mut acc = C64::new(0.0, 0.0);
                for a in 0..d {
                    acc += proj[a] * v[a];
                }
                acc
            })
            .collect()
    }

    /// Orbit size (2 or 4) of the adapted basis state carrying the largest
    /// weight in eigenvector `col`.
    pub fn dominant_orbit_size(&self, col: usize) -> usize {
        let v = self.eigenvectors.column(col);
        let (best, _) = v
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (a, x)| if x.abs() > acc.1 { (a, x.abs()) } else { acc });
        self.states[best].len as usize
    }
}

/// Full spectrum of `H` with simultaneous parity labels.
///
/// Eigenvectors are kept per sector block, which keeps the storage at a
/// quarter of the dense `4^N`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    n_spins: usize,
    b_field: f64,
    energies: Vec<f64>,
    sectors: Vec<SymmetrySector>,
    locator: Vec<(usize, usize)>,
    blocks: Vec<SectorBlock>,
}

/// Diagonalizes `h` sector by sector.
///
/// The basis is first rotated into joint eigenstates of the spatial
/// reflection and the spin flip, one orbit at a time. Because `H` commutes with
/// both, it is block diagonal there and every eigenvector carries exact parity
/// labels, degenerate or not.
pub fn diagonalize_with_symmetries(h: &IsingHamiltonian) -> Result<SpectralDecomposition> {
    let n = h.n_spins();
    let dim = h.dimension();
    if !h.b_field().is_finite() {
        return Err(Error::InvalidParameter("b_field must be finite".into()));
    }

    // Orbit bookkeeping.
    let mut orbit_of = vec![u32::MAX; dim];
    let mut orbits: Vec<usize> = Vec::new();
    for c in 0..dim {
        if orbit_of[c] != u32::MAX {
            continue;
        }
        let id = orbits.len() as u32;
        let r = reflect_bits(c, n);
        for g in [c, r, flip_bits(c, n), flip_bits(r, n)] {
            orbit_of[g] = id;
        }
        orbits.push(c);
    }

    let diag = h.diagonal();
    let b = h.b_field();
    let mut blocks = Vec::with_capacity(4);
    for sector in SymmetrySector::ALL {
        let p = sector.spatial.value();
        let s = sector.spin.value();
        let mut states = Vec::new();
        let mut state_of_orbit = vec![NO_STATE; orbits.len()];
        for (oid, &rep) in orbits.iter().enumerate() {
            let r = reflect_bits(rep, n);
            let images = [(rep, 1.0), (r, p), (flip_bits(rep, n), s), (flip_bits(r, n), p * s)];
            let mut st = AdaptedState { index: [0; 4], coeff: [0.0; 4], len: 0 };
            for (idx, chi) in images {
                match (0..st.len as usize).find(|&k| st.index[k] == idx) {
                    Some(k) => st.coeff[k] += chi,
                    None => {
                        st.index[st.len as usize] = idx;
                        st.coeff[st.len as usize] = chi;
                        st.len += 1;
                    }
                }
            }
            if st.coeff[..st.len as usize].iter().any(|&c| c == 0.0) {
                // The character is nontrivial on the stabilizer; this orbit
                // contributes nothing to the sector.
                continue;
            }
            let norm = st.coeff[..st.len as usize].iter().map(|c| c * c).sum::<f64>().sqrt();
            for c in &mut st.coeff[..st.len as usize] {
                *c /= norm;
            }
            state_of_orbit[oid] = states.len() as u32;
            states.push(st);
        }

        let d = states.len();
        let mut block = DMatrix::<f64>::zeros(d, d);
        for (a, st) in states.iter().enumerate() {
            for (c, ac) in st.entries() {
                block[(a, a)] += ac * ac * diag[c];
                if b == 0.0 {
                    continue;
                }
                for site in 0..n {
                    let cp = c ^ (1 << site);
                    let t = state_of_orbit[orbit_of[cp] as usize];
                    if t != NO_STATE {
                        let bc = states[t as usize].coeff_at(cp);
                        block[(t as usize, a)] += -b * ac * bc;
                    }
                }
            }
        }
        let (energies, eigenvectors) = eigen_sorted(block);
        blocks.push(SectorBlock { sector, states, energies, eigenvectors });
    }

    let mut order: Vec<(f64, usize, usize)> = Vec::with_capacity(dim);
    for (bi, blk) in blocks.iter().enumerate() {
        for (col, &e) in blk.energies.iter().enumerate() {
            order.push((e, bi, col));
        }
    }
    order.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    // Levels split by less than the eigensolver can resolve are ordered by
    // sector, so the symmetric partner of a doublet comes first.
    let scale = order.iter().fold(0.0f64, |m, o| m.max(o.0.abs()));
    let tol = DEGENERACY_TOLERANCE * scale;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && order[end].0 - order[start].0 <= tol {
            end += 1;
        }
        order[start..end].sort_by(|x, y| x.1.cmp(&y.1).then(x.2.cmp(&y.2)));
        start = end;
    }

    let spec = SpectralDecomposition {
        n_spins: n,
        b_field: b,
        energies: order.iter().map(|o| o.0).collect(),
        sectors: order.iter().map(|o| blocks[o.1].sector).collect(),
        locator: order.iter().map(|o| (o.1, o.2)).collect(),
        blocks,
    };

    let worst = spec.max_parity_residual();
    if worst > PARITY_TOLERANCE {
        return Err(Error::ParityLabeling { residual: worst });
    }
    Ok(spec)
}

fn eigen_sorted(block: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let d = block.nrows();
    let mut off_diagonal = false;
    'outer: for j in 0..d {
        for i in 0..d {
            if i != j && block[(i, j)] != 0.0 {
                off_diagonal = true;
                break 'outer;
            }
        }
    }
    let (values, vectors) = if off_diagonal {
        let eig = SymmetricEigen::new(block);
        (eig.eigenvalues.iter().copied().collect::<Vec<_>>(), eig.eigenvectors)
    } else {
        // Zero field: the adapted states already are the eigenvectors.
        (block.diagonal().iter().copied().collect(), DMatrix::identity(d, d))
    };

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut sorted = DMatrix::zeros(d, d);
    for (k, &src) in order.iter().enumerate() {
        let mut col = vectors.column(src).clone_owned();
        if let Some(first) = col.iter().find(|x| x.abs() > 1e-9) {
            if *first < 0.0 {
                col.neg_mut();
            }
        }
        sorted.set_column(k, &col);
    }
    (order.iter().map(|&k| values[k]).collect(), sorted)
}

impl SpectralDecomposition {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn dimension(&self) -> usize {
        1 << self.n_spins
    }

    pub fn b_field(&self) -> f64 {
        self.b_field
    }

    /// All eigenvalues, ascending.
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn energy(&self, n: usize) -> f64 {
        self.energies[n]
    }

    pub fn sector(&self, n: usize) -> SymmetrySector {
        self.sectors[n]
    }

    pub fn sectors(&self) -> &[SymmetrySector] {
        &self.sectors
    }

    pub fn ground_sector(&self) -> SymmetrySector {
        self.sectors[0]
    }

    pub fn ground_energy(&self) -> f64 {
        self.energies[0]
    }

    pub fn block(&self, sector: SymmetrySector) -> &SectorBlock {
        &self.blocks[sector.index()]
    }

    pub fn blocks(&self) -> &[SectorBlock] {
        &self.blocks
    }

    /// Global indices of the eigenstates in `sector`, ascending in energy.
    pub fn indices_in_sector(&self, sector: SymmetrySector) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.sectors[k] == sector).collect()
    }

    pub fn eigenvector(&self, n: usize) -> Vec<f64> {
        let (b, col) = self.locator[n];
        self.blocks[b].expand(col, self.dimension())
    }

    /// Writes eigenvector `n` into `out`, which must be zeroed beforehand.
    pub fn eigenvector_into(&self, n: usize, out: &mut [f64]) {
        let (b, col) = self.locator[n];
        self.blocks[b].expand_into(col, out);
    }

    pub fn dominant_orbit_size(&self, n: usize) -> usize {
        let (b, col) = self.locator[n];
        self.blocks[b].dominant_orbit_size(col)
    }

    /// `⟨n|ψ⟩` in global eigenstate order.
    pub fn overlaps(&self, psi: &[C64]) -> Result<Vec<C64>> {
        if psi.len() != self.dimension() {
            return Err(Error::DimensionMismatch { expected: self.dimension(), got: psi.len() });
        }
        let per_block: Vec<Vec<C64>> = self.blocks.iter().map(|b| b.overlaps(psi)).collect();
        Ok(self.locator.iter().map(|&(b, col)| per_block[b][col]).collect())
    }

    /// Largest violation of `P|n⟩ = p|n⟩` or `X|n⟩ = s|n⟩` over all eigenvectors.
    pub fn max_parity_residual(&self) -> f64 {
        let dim = self.dimension();
        let n = self.n_spins;
        let mut worst = 0.0f64;
        let mut v = vec![0.0; dim];
        for k in 0..self.len() {
            v.iter_mut().for_each(|x| *x = 0.0);
            self.eigenvector_into(k, &mut v);
            let p = self.sectors[k].spatial.value();
            let s = self.sectors[k].spin.value();
            let mut rp = 0.0;
            let mut rs = 0.0;
            for c in 0..dim {
                rp += (v[reflect_bits(c, n)] - p * v[c]).powi(2);
                rs += (v[flip_bits(c, n)] - s * v[c]).powi(2);
            }
            worst = worst.max(rp.sqrt()).max(rs.sqrt());
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::couplings::{CouplingMatrix, CouplingSign};
    use crate::spin::{build_hamiltonian, SpinBasis};

    fn uniform(n: usize, j: f64, b: f64) -> IsingHamiltonian {
        let cm = CouplingMatrix::from_values(DMatrix::from_element(n, n, j), CouplingSign::Ferromagnetic)
            .unwrap();
        build_hamiltonian(&cm, b).unwrap()
    }

    #[test]
    fn two_spin_ferromagnet_ground_doublet() {
        let spec = diagonalize_with_symmetries(&uniform(2, 1.0, 0.0)).unwrap();
        assert!((spec.energy(0) + 1.0).abs() < 1e-14);
        assert!((spec.energy(1) + 1.0).abs() < 1e-14);
        let h = core::f64::consts::FRAC_1_SQRT_2;
        let labels = [spec.sector(0), spec.sector(1)];
        assert!(labels.contains(&SymmetrySector::EVEN_EVEN));
        assert!(labels.contains(&SymmetrySector { spatial: super::super::Parity::Even, spin: super::super::Parity::Odd }));
        for k in 0..2 {
            let v = spec.eigenvector(k);
            let s = spec.sector(k).spin.value();
            assert!((v[0] - h).abs() < 1e-15);
            assert!((v[3] - s * h).abs() < 1e-15);
        }
    }

    #[test]
    fn sector_dimensions_are_complete() {
        for n in 1..=10 {
            let spec = diagonalize_with_symmetries(&uniform(n, 0.3, 0.0)).unwrap();
            let total: usize = spec.blocks().iter().map(|b| b.dimension()).sum();
            assert_eq!(total, 1 << n);
        }
    }

    #[test]
    fn zero_field_eigenvectors_are_orbit_localized() {
        let spec = diagonalize_with_symmetries(&uniform(6, 1.0, 0.0)).unwrap();
        for k in 0..spec.len() {
            let support = spec.eigenvector(k).iter().filter(|x| x.abs() > 1e-12).count();
            assert!(support == 2 || support == 4, "support {support}");
        }
    }

    #[test]
    fn overlaps_of_eigenvector_are_kronecker() {
        let h = uniform(4, 0.8, 0.6);
        let spec = diagonalize_with_symmetries(&h).unwrap();
        let v: Vec<C64> = spec.eigenvector(3).iter().map(|&x| C64::new(x, 0.0)).collect();
        let ov = spec.overlaps(&v).unwrap();
        for (k, o) in ov.iter().enumerate() {
            let expect = if k == 3 { 1.0 } else { 0.0 };
            assert!((o.norm() - expect).abs() < 1e-12);
        }
        let basis = SpinBasis::new(4).unwrap();
        assert_eq!(spec.dimension(), basis.dimension());
    }
}
