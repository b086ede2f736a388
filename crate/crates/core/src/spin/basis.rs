use crate::{Error, Result};

pub const DEFAULT_MAX_SPINS: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpinBasis {
    n_spins: usize,
}

impl SpinBasis {
    pub fn new(n_spins: usize) -> Result<Self> {
        Self::with_max(n_spins, DEFAULT_MAX_SPINS)
    }

    pub fn with_max(n_spins: usize, max: usize) -> Result<Self> {
        if n_spins == 0 {
            return Err(Error::InvalidParameter("a spin basis needs at least one site".into()));
        }
        if n_spins > max {
            return Err(Error::TooLarge { what: "n_spins", requested: n_spins, max });
        }
        Ok(Self { n_spins })
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn dimension(&self) -> usize {
        1 << self.n_spins
    }

    /// `σ_z` eigenvalue of 0-based `site` in basis state `index`.
    #[inline]
    pub fn sigma_z(index: usize, site: usize) -> f64 {
        if index >> site & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoding() {
        let b = SpinBasis::new(3).unwrap();
        assert_eq!(b.dimension(), 8);
        assert_eq!(SpinBasis::sigma_z(0b000, 2), 1.0);
        assert_eq!(SpinBasis::sigma_z(0b100, 2), -1.0);
        assert_eq!(SpinBasis::sigma_z(0b100, 0), 1.0);
        assert!(SpinBasis::new(0).is_err());
        assert!(matches!(SpinBasis::new(15), Err(Error::TooLarge { .. })));
        assert!(SpinBasis::with_max(15, 16).is_ok());
    }
}
