use alloc::vec;
use alloc::vec::Vec;

use super::SpinBasis;
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn value(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Parity::Even => 1,
            Parity::Odd => -1,
        }
    }

    pub fn from_sign(sign: i8) -> Option<Self> {
        match sign {
            1 => Some(Parity::Even),
            -1 => Some(Parity::Odd),
            _ => None,
        }
    }
}

/// Joint eigenvalues of the spatial reflection and the global spin flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymmetrySector {
    pub spatial: Parity,
    pub spin: Parity,
}

impl SymmetrySector {
    pub const EVEN_EVEN: Self = Self { spatial: Parity::Even, spin: Parity::Even };

    pub const ALL: [Self; 4] = [
        Self { spatial: Parity::Even, spin: Parity::Even },
        Self { spatial: Parity::Even, spin: Parity::Odd },
        Self { spatial: Parity::Odd, spin: Parity::Even },
        Self { spatial: Parity::Odd, spin: Parity::Odd },
    ];

    pub fn index(self) -> usize {
        (self.spatial as usize) * 2 + self.spin as usize
    }
}

/// A permutation of computational basis states.
pub trait BasisPermutation {
    fn n_spins(&self) -> usize;

    fn map_index(&self, index: usize) -> usize;

    /// `(Uψ)_{map(c)} = ψ_c`.
    fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); x.len()];
        for (c, v) in x.iter().enumerate() {
            out[self.map_index(c)] = *v;
        }
        out
    }

    fn apply_real(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for (c, v) in x.iter().enumerate() {
            out[self.map_index(c)] = *v;
        }
        out
    }
}

/// Site `i → N + 1 − i`, i.e. bit-order reversal of the basis index.
#[derive(Debug, Clone, Copy)]
pub struct SpatialReflection {
    n: usize,
}

/// `Π_i σ_x^(i)`, i.e. complement of every bit.
#[derive(Debug, Clone, Copy)]
pub struct SpinFlip {
    n: usize,
}

pub fn spatial_reflection_operator(basis: SpinBasis) -> SpatialReflection {
    SpatialReflection { n: basis.n_spins() }
}

pub fn spin_parity_operator(basis: SpinBasis) -> SpinFlip {
    SpinFlip { n: basis.n_spins() }
}

#[inline]
pub(crate) fn reflect_bits(index: usize, n: usize) -> usize {
    index.reverse_bits() >> (usize::BITS as usize - n)
}

#[inline]
pub(crate) fn flip_bits(index: usize, n: usize) -> usize {
    !index & ((1 << n) - 1)
}

impl BasisPermutation for SpatialReflection {
    fn n_spins(&self) -> usize {
        self.n
    }

    fn map_index(&self, index: usize) -> usize {
        reflect_bits(index, self.n)
    }
}

impl BasisPermutation for SpinFlip {
    fn n_spins(&self) -> usize {
        self.n
    }

    fn map_index(&self, index: usize) -> usize {
        flip_bits(index, self.n)
    }
}

/// Number of distinct states in the orbit of `index` under both parities.
/// Always 2 or 4, since the spin flip has no fixed points.
pub fn orbit_size(index: usize, n: usize) -> usize {
    let r = reflect_bits(index, n);
    if r == index || r == flip_bits(index, n) {
        2
    } else {
        4
    }
}

/// `‖Π_σ ψ‖²` with `Π_σ = (1 + p P)(1 + s X) / 4`.
pub fn sector_projector_population(state: &[C64], n: usize, sector: SymmetrySector) -> f64 {
    let p = sector.spatial.value();
    let s = sector.spin.value();
    let mut total = 0.0;
    for c in 0..state.len() {
        let r = reflect_bits(c, n);
        let v = state[c] + state[r] * p + state[flip_bits(c, n)] * s + state[flip_bits(r, n)] * (p * s);
        total += (v * 0.25).norm_sqr();
    }
    total
}
