//! Frequency-quantile split of the vocabulary into sensitive and
//! non-sensitive tokens.

use crate::error::{Error, Result};
use crate::store::{EmbeddingStore, TokenId};

/// Fraction of the vocabulary treated as sensitive by default.
pub const DEFAULT_SENSITIVE_QUANTILE: f64 = 0.20;

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityPartition {
    quantile: f64,
    // Indexed by token id.
    sensitive: Vec<bool>,
    sensitive_count: usize,
}

impl SensitivityPartition {
    /// Marks the `ceil(q * |V|)` least frequent tokens as sensitive. Ties in
    /// frequency are broken by lower token id.
    pub fn by_frequency(store: &EmbeddingStore, q: f64) -> Result<Self> {
        Self::from_frequencies(store.frequencies(), q)
    }

    pub fn from_frequencies(frequencies: &[u64], q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::param(format!(
                "quantile q must lie in [0, 1], got {q}"
            )));
        }
        let n = frequencies.len();
        let take = sensitive_count(q, n);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| (frequencies[i], i));
        let mut sensitive = vec![false; n];
        for &i in &order[..take] {
            sensitive[i] = true;
        }
        Ok(Self {
            quantile: q,
            sensitive,
            sensitive_count: take,
        })
    }

    /// Explicit partition, mainly for constructing test instances.
    pub fn from_sensitive_ids(n: usize, ids: &[TokenId]) -> Result<Self> {
        let mut sensitive = vec![false; n];
        for &id in ids {
            let slot = sensitive
                .get_mut(id as usize)
                .ok_or_else(|| Error::param(format!("token id {id} out of range")))?;
            *slot = true;
        }
        let count = sensitive.iter().filter(|&&s| s).count();
        Ok(Self {
            quantile: if n == 0 { 0.0 } else { count as f64 / n as f64 },
            sensitive,
            sensitive_count: count,
        })
    }

    pub fn quantile(&self) -> f64 {
        self.quantile
    }

    pub fn len(&self) -> usize {
        self.sensitive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensitive.is_empty()
    }

    /// Unknown ids are reported as non-sensitive.
    pub fn is_sensitive(&self, id: TokenId) -> bool {
        self.sensitive.get(id as usize).copied().unwrap_or(false)
    }

    pub fn sensitive_count(&self) -> usize {
        self.sensitive_count
    }

    pub fn sensitive_ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.ids_where(true)
    }

    pub fn non_sensitive_ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.ids_where(false)
    }

    fn ids_where(&self, flag: bool) -> impl Iterator<Item = TokenId> + '_ {
        self.sensitive
            .iter()
            .enumerate()
            .filter(move |(_, &s)| s == flag)
            .map(|(i, _)| i as TokenId)
    }
}

/// `ceil(q * n)`, ignoring the last-ulp error of the product so that e.g.
/// `q = 0.3, n = 10` yields 3 rather than 4.
fn sensitive_count(q: f64, n: usize) -> usize {
    let exact = q * n as f64;
    let rounded = exact.round();
    let c = if (exact - rounded).abs() <= 1e-9 * exact.max(1.0) {
        rounded
    } else {
        exact.ceil()
    };
    (c as usize).min(n)
}
