//! Spin configurations in the computational basis and per-site amplitude tables.
//!
//! A configuration of `N ≤ 63` spins is packed into a `u64`. Site `h` (zero
//! based) occupies bit `N-1-h`, with a set bit meaning σ_h = +1. The packed
//! integer is therefore also the row index of the configuration in dense
//! `2^N × 2^N` matrices, with site 0 as the most significant bit.

use std::fmt;

use num_complex::Complex64;

use crate::error::{GhdoError, Result};

pub const MAX_SITES: usize = 63;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpinConfig {
    sites: u8,
    bits: u64,
}

impl SpinConfig {
    /// All spins down.
    pub fn down(sites: usize) -> Self {
        assert!(sites <= MAX_SITES, "at most {MAX_SITES} sites supported");
        SpinConfig {
            sites: sites as u8,
            bits: 0,
        }
    }

    pub fn from_index(sites: usize, index: u64) -> Self {
        assert!(sites <= MAX_SITES, "at most {MAX_SITES} sites supported");
        debug_assert!(sites == 64 || index < (1u64 << sites));
        SpinConfig {
            sites: sites as u8,
            bits: index,
        }
    }

    pub fn from_spins(spins: &[i8]) -> Result<Self> {
        if spins.len() > MAX_SITES {
            return Err(GhdoError::Input(format!(
                "{} sites exceeds the maximum of {MAX_SITES}",
                spins.len()
            )));
        }
        let mut cfg = SpinConfig::down(spins.len());
        for (h, &s) in spins.iter().enumerate() {
            match s {
                1 => cfg.set(h, 1),
                -1 => {}
                other => {
                    return Err(GhdoError::Input(format!(
                        "spin value {other} at site {h} is not ±1"
                    )))
                }
            }
        }
        Ok(cfg)
    }

    #[inline]
    pub fn sites(&self) -> usize {
        self.sites as usize
    }

    #[inline]
    pub fn index(&self) -> usize {
        self.bits as usize
    }

    #[inline]
    fn mask(&self, site: usize) -> u64 {
        1u64 << (self.sites as usize - 1 - site)
    }

    /// Spin value (±1) at `site`.
    #[inline]
    pub fn get(&self, site: usize) -> i8 {
        if self.bits & self.mask(site) != 0 {
            1
        } else {
            -1
        }
    }

    /// Local basis index at `site`: 0 for σ = −1, 1 for σ = +1.
    #[inline]
    pub fn bit(&self, site: usize) -> usize {
        (self.bits & self.mask(site) != 0) as usize
    }

    #[inline]
    pub fn set(&mut self, site: usize, value: i8) {
        let m = self.mask(site);
        if value > 0 {
            self.bits |= m;
        } else {
            self.bits &= !m;
        }
    }

    #[inline]
    pub fn set_bit(&mut self, site: usize, bit: usize) {
        self.set(site, if bit == 1 { 1 } else { -1 });
    }

    #[inline]
    pub fn flipped(&self, site: usize) -> Self {
        SpinConfig {
            sites: self.sites,
            bits: self.bits ^ self.mask(site),
        }
    }

    /// Integer label of σ_{<h}, i.e. the first `h` sites read as a binary number.
    #[inline]
    pub fn prefix(&self, h: usize) -> usize {
        if h == 0 {
            0
        } else {
            (self.bits >> (self.sites as usize - h)) as usize
        }
    }

    pub fn spins(&self) -> Vec<i8> {
        (0..self.sites()).map(|h| self.get(h)).collect()
    }

    /// Iterator over every configuration of `sites` spins in index order.
    pub fn all(sites: usize) -> impl Iterator<Item = SpinConfig> {
        assert!(sites <= 30, "enumeration limited to 30 sites");
        (0..(1u64 << sites)).map(move |i| SpinConfig::from_index(sites, i))
    }
}

impl fmt::Debug for SpinConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for h in 0..self.sites() {
            f.write_str(if self.get(h) > 0 { "+" } else { "-" })?;
        }
        Ok(())
    }
}

impl fmt::Display for SpinConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Complex values `φ[h, s, a]` for every site `h`, local value `s ∈ {0: −1, 1: +1}`
/// and rank index `a`.
#[derive(Clone, Debug, PartialEq)]
pub struct AmplitudeTable {
    sites: usize,
    rank: usize,
    values: Vec<Complex64>,
}

impl AmplitudeTable {
    pub fn zeros(sites: usize, rank: usize) -> Self {
        AmplitudeTable {
            sites,
            rank,
            values: vec![Complex64::new(0.0, 0.0); sites * 2 * rank],
        }
    }

    pub fn from_values(sites: usize, rank: usize, values: Vec<Complex64>) -> Self {
        assert_eq!(values.len(), sites * 2 * rank);
        AmplitudeTable {
            sites,
            rank,
            values,
        }
    }

    #[inline]
    pub fn sites(&self) -> usize {
        self.sites
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.rank
    }

    #[inline]
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    #[inline]
    pub fn offset(&self, h: usize, s: usize) -> usize {
        (h * 2 + s) * self.rank
    }

    #[inline]
    pub fn get(&self, h: usize, s: usize, a: usize) -> Complex64 {
        self.values[self.offset(h, s) + a]
    }

    /// The `R` values of the block `(h, s)`.
    #[inline]
    pub fn block(&self, h: usize, s: usize) -> &[Complex64] {
        let o = self.offset(h, s);
        &self.values[o..o + self.rank]
    }

    #[inline]
    pub fn site(&self, h: usize) -> &[Complex64] {
        let o = self.offset(h, 0);
        &self.values[o..o + 2 * self.rank]
    }

    /// Σ_{s,a} |φ[h,s,a]|².
    pub fn site_norm_sqr(&self, h: usize) -> f64 {
        self.site(h).iter().map(|z| z.norm_sqr()).sum()
    }

    /// Rescales every site block so that Σ_{s,a} |ψ[h,s,a]|² = 1. A block that
    /// is identically zero is left untouched.
    pub fn normalize(&mut self) {
        let r2 = 2 * self.rank;
        for h in 0..self.sites {
            let norm = self.site_norm_sqr(h);
            if norm > 0.0 {
                let inv = 1.0 / norm.sqrt();
                for z in &mut self.values[h * r2..(h + 1) * r2] {
                    *z *= inv;
                }
            }
        }
    }

    pub fn normalized(mut self) -> Self {
        self.normalize();
        self
    }
}
