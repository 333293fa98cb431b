//! Per-configuration memoization of normalized amplitude tables.

use std::borrow::Cow;

use rayon::prelude::*;

use crate::model::AmplitudeModel;
use crate::spins::{AmplitudeTable, SpinConfig};

/// Enumerate every configuration when `2^N` is at most this many.
pub const DEFAULT_ENUMERATION_LIMIT: usize = 1 << 12;

/// Source of normalized tables `ψ(σ)`: either computed on demand or looked up
/// from a full enumeration of the Hilbert space.
pub struct AmplitudeCache<'a, M: AmplitudeModel + ?Sized> {
    model: &'a M,
    full: Option<Vec<AmplitudeTable>>,
}

impl<'a, M: AmplitudeModel + ?Sized> AmplitudeCache<'a, M> {
    pub fn direct(model: &'a M) -> Self {
        AmplitudeCache { model, full: None }
    }

    pub fn enumerated(model: &'a M) -> Self {
        let n = model.sites();
        let full = (0..(1u64 << n))
            .into_par_iter()
            .map(|i| model.amplitudes(SpinConfig::from_index(n, i)))
            .collect();
        AmplitudeCache {
            model,
            full: Some(full),
        }
    }

    /// Enumerates when the Hilbert space has at most `limit` configurations.
    pub fn auto(model: &'a M, limit: usize) -> Self {
        if model.sites() < usize::BITS as usize - 1 && (1usize << model.sites()) <= limit {
            Self::enumerated(model)
        } else {
            Self::direct(model)
        }
    }

    pub fn model(&self) -> &'a M {
        self.model
    }

    pub fn is_enumerated(&self) -> bool {
        self.full.is_some()
    }

    #[inline]
    pub fn table(&self, sigma: SpinConfig) -> Cow<'_, AmplitudeTable> {
        match &self.full {
            Some(all) => Cow::Borrowed(&all[sigma.index()]),
            None => Cow::Owned(self.model.amplitudes(sigma)),
        }
    }
}
