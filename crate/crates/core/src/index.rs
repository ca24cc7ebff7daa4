//! Exact top-k cosine neighbourhoods.
//!
//! For every token the table holds its `min(k, |V| - 1)` most cosine-similar
//! other tokens, sorted by raw cosine descending (ties broken by lower id),
//! together with a min-max normalised score
//!
//! ```text
//! norm = (cos - cos_min) / (cos_max - cos_min)
//! ```
//!
//! taken over that token's own list. Normalisation pins every score to
//! [0, 1], so a change of input moves any one score by at most 1. When all
//! cosines in a list are equal (including single-entry lists) every entry gets
//! score 1.
//!
//! Cosine is used as a similarity: the mechanism prefers candidates with the
//! largest value.
//!
//! Table file (little-endian): magic `SSCT`, version `u16`, 32-byte store
//! checksum, `k: u32`, `N: u32`, then per token `m: u32` followed by `m`
//! records of `(candidate_id: u32, raw_cos: f64, norm_score: f64)`.

use std::cmp::Ordering;
use std::io::{Read, Write};

use rayon::prelude::*;

use crate::codec::Cursor;
use crate::error::{Error, Result};
use crate::store::{EmbeddingStore, TokenId};

pub const TABLE_MAGIC: &[u8; 4] = b"SSCT";
pub const TABLE_VERSION: u16 = 1;

/// Candidate count used when none is given.
pub const DEFAULT_K: usize = 30;

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Structural(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Domain("cosine of a zero vector is undefined".into()));
    }
    Ok(dot(a, b) / (na * nb))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateEntry {
    pub candidate_id: TokenId,
    pub raw_cos: f64,
    pub norm_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateTable {
    k: usize,
    store_checksum: [u8; 32],
    lists: Vec<Vec<CandidateEntry>>,
}

impl CandidateTable {
    /// Brute-force construction over all pairs, parallel across tokens.
    pub fn build(store: &EmbeddingStore, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::param("k must be at least 1"));
        }
        if store.len() < 2 {
            return Err(Error::Domain(
                "at least two tokens are needed to form candidate lists".into(),
            ));
        }
        // Normalising once keeps each pair's cosine a single dot product.
        let unit: Vec<Vec<f64>> = store
            .tokens()
            .iter()
            .map(|t| {
                let v = store.vector(t.id);
                let n = norm(v);
                v.iter().map(|x| x / n).collect()
            })
            .collect();
        let m = k.min(store.len() - 1);
        let lists = (0..store.len())
            .into_par_iter()
            .map(|i| top_candidates(&unit, i, m))
            .collect();
        Ok(Self {
            k,
            store_checksum: store.checksum(),
            lists,
        })
    }

    /// Assemble a table from explicit lists, checking structural invariants
    /// and recomputing nothing. Scores must already be normalised.
    pub fn from_lists(
        k: usize,
        store_checksum: [u8; 32],
        lists: Vec<Vec<CandidateEntry>>,
    ) -> Result<Self> {
        let table = Self {
            k,
            store_checksum,
            lists,
        };
        table.validate()?;
        Ok(table)
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::format("table k must be at least 1"));
        }
        let n = self.lists.len();
        let mut seen = vec![u32::MAX; n];
        for (owner, list) in self.lists.iter().enumerate() {
            if list.len() > self.k {
                return Err(Error::format(format!(
                    "token {owner} has {} candidates, more than k = {}",
                    list.len(),
                    self.k
                )));
            }
            for e in list {
                let c = e.candidate_id as usize;
                if c >= n {
                    return Err(Error::format(format!(
                        "token {owner} lists out-of-range candidate {c}"
                    )));
                }
                if c == owner {
                    return Err(Error::format(format!("token {owner} lists itself")));
                }
                if seen[c] == owner as u32 {
                    return Err(Error::format(format!(
                        "token {owner} lists candidate {c} twice"
                    )));
                }
                seen[c] = owner as u32;
                if !(0.0..=1.0).contains(&e.norm_score) {
                    return Err(Error::format(format!(
                        "token {owner} has score {} outside [0, 1]",
                        e.norm_score
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn store_checksum(&self) -> &[u8; 32] {
        &self.store_checksum
    }

    pub fn candidates(&self, id: TokenId) -> Option<&[CandidateEntry]> {
        self.lists.get(id as usize).map(Vec::as_slice)
    }

    pub fn lists(&self) -> &[Vec<CandidateEntry>] {
        &self.lists
    }

    /// Fails with [`Error::ChecksumMismatch`] unless this table was built
    /// from `store`.
    pub fn check_store(&self, store: &EmbeddingStore) -> Result<()> {
        let actual = store.checksum();
        if actual != self.store_checksum {
            return Err(Error::ChecksumMismatch {
                expected: hex(&self.store_checksum),
                actual: hex(&actual),
            });
        }
        Ok(())
    }

    /// Writes the table and returns the number of bytes written.
    pub fn save(&self, mut w: impl Write) -> Result<u64> {
        let mut buf = Vec::with_capacity(self.encoded_len());
        buf.extend_from_slice(TABLE_MAGIC);
        buf.extend_from_slice(&TABLE_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.store_checksum);
        buf.extend_from_slice(&(self.k as u32).to_le_bytes());
        buf.extend_from_slice(&(self.lists.len() as u32).to_le_bytes());
        for list in &self.lists {
            buf.extend_from_slice(&(list.len() as u32).to_le_bytes());
            for e in list {
                buf.extend_from_slice(&e.candidate_id.to_le_bytes());
                buf.extend_from_slice(&e.raw_cos.to_le_bytes());
                buf.extend_from_slice(&e.norm_score.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        w.flush()?;
        Ok(buf.len() as u64)
    }

    fn encoded_len(&self) -> usize {
        4 + 2 + 32 + 4 + 4 + self.lists.iter().map(|l| 4 + 20 * l.len()).sum::<usize>()
    }

    pub fn load(mut r: impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        let mut cur = Cursor::new(&buf);
        if cur.bytes(4)? != TABLE_MAGIC {
            return Err(Error::format("bad table magic"));
        }
        let version = cur.u16()?;
        if version != TABLE_VERSION {
            return Err(Error::format(format!(
                "unsupported table version {version}"
            )));
        }
        let store_checksum: [u8; 32] = cur.bytes(32)?.try_into().unwrap();
        let k = cur.u32()? as usize;
        let n = cur.u32()? as usize;
        let mut lists = Vec::with_capacity(n.min(cur.remaining() / 4));
        for _ in 0..n {
            let m = cur.u32()? as usize;
            if m > cur.remaining() / 20 {
                return Err(Error::format("truncated candidate list"));
            }
            let mut list = Vec::with_capacity(m);
            for _ in 0..m {
                list.push(CandidateEntry {
                    candidate_id: cur.u32()?,
                    raw_cos: cur.f64()?,
                    norm_score: cur.f64()?,
                });
            }
            lists.push(list);
        }
        if cur.remaining() != 0 {
            return Err(Error::format(format!(
                "{} trailing bytes after last list",
                cur.remaining()
            )));
        }
        Self::from_lists(k, store_checksum, lists)
    }

    /// Load a table and check it belongs to `store`.
    pub fn load_for(store: &EmbeddingStore, r: impl Read) -> Result<Self> {
        let table = Self::load(r)?;
        if table.len() != store.len() {
            return Err(Error::format(format!(
                "table covers {} tokens, store has {}",
                table.len(),
                store.len()
            )));
        }
        table.check_store(store)?;
        Ok(table)
    }
}

fn top_candidates(unit: &[Vec<f64>], owner: usize, m: usize) -> Vec<CandidateEntry> {
    let q = &unit[owner];
    let mut scored: Vec<(usize, f64)> = unit
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != owner)
        .map(|(j, v)| (j, dot(q, v).clamp(-1.0, 1.0)))
        .collect();
    let by_rank = |a: &(usize, f64), b: &(usize, f64)| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then(a.0.cmp(&b.0))
    };
    if scored.len() > m {
        scored.select_nth_unstable_by(m - 1, by_rank);
        scored.truncate(m);
    }
    scored.sort_by(by_rank);
    normalise(&scored)
}

fn normalise(scored: &[(usize, f64)]) -> Vec<CandidateEntry> {
    let cos_max = scored.first().map_or(0.0, |s| s.1);
    let cos_min = scored.last().map_or(0.0, |s| s.1);
    let span = cos_max - cos_min;
    scored
        .iter()
        .map(|&(j, c)| CandidateEntry {
            candidate_id: j as TokenId,
            raw_cos: c,
            norm_score: if span > 0.0 {
                ((c - cos_min) / span).clamp(0.0, 1.0)
            } else {
                1.0
            },
        })
        .collect()
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
