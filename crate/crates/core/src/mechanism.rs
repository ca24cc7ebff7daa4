//! Laplace noise, Report-Noisy-Max selection and the per-token mapping
//! function.
//!
//! Draw schedule for one token (fixed, so runs are reproducible):
//!
//! 1. out-of-vocabulary: no draws;
//! 2. non-sensitive: one uniform for the replacement gate, then, if the gate
//!    fires, one uniform per candidate in list order;
//! 3. sensitive: one uniform per candidate in list order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::CandidateTable;
use crate::partition::SensitivityPartition;
use crate::rng::RngStream;
use crate::store::TokenId;

/// Replacement probability for non-sensitive tokens used when none is given.
pub const DEFAULT_REPLACE_PROB: f64 = 0.3;
pub const DEFAULT_EPSILON: f64 = 1.0;

/// Sensitivity of min-max normalised cosine scores.
pub const SCORE_SENSITIVITY: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    epsilon: f64,
    replace_prob: f64,
}

impl PrivacyParams {
    /// `epsilon > 0` and `0 < replace_prob <= 1`. A replacement probability
    /// of zero is rejected: the bound for mixed sensitive/non-sensitive pairs
    /// grows as `ln(1/p)` and is unbounded there.
    pub fn new(epsilon: f64, replace_prob: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::param(format!(
                "epsilon must be positive and finite, got {epsilon}"
            )));
        }
        if !(replace_prob > 0.0 && replace_prob <= 1.0) {
            return Err(Error::param(format!(
                "replacement probability p must lie in (0, 1], got {replace_prob}"
            )));
        }
        Ok(Self {
            epsilon,
            replace_prob,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn replace_prob(&self) -> f64 {
        self.replace_prob
    }

    pub fn sensitivity(&self) -> f64 {
        SCORE_SENSITIVITY
    }

    /// Laplace scale `sensitivity / epsilon`.
    pub fn noise_scale(&self) -> f64 {
        SCORE_SENSITIVITY / self.epsilon
    }

    /// Privacy loss bound when one of two neighbouring tokens is
    /// non-sensitive: `ln(1/p) + epsilon`.
    pub fn mixed_pair_budget(&self) -> f64 {
        (1.0 / self.replace_prob).ln() + self.epsilon
    }
}

impl Default for PrivacyParams {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            replace_prob: DEFAULT_REPLACE_PROB,
        }
    }
}

/// Free-function form of [`PrivacyParams::mixed_pair_budget`].
pub fn case2_budget(params: &PrivacyParams) -> f64 {
    params.mixed_pair_budget()
}

/// One Laplace(0, `scale`) draw by inverse CDF from a single uniform.
pub fn sample_laplace(rng: &mut RngStream, scale: f64) -> Result<f64> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::param(format!(
            "Laplace scale must be positive, got {scale}"
        )));
    }
    Ok(laplace_unchecked(rng, scale))
}

#[inline]
fn laplace_unchecked(rng: &mut RngStream, scale: f64) -> f64 {
    // u in (-1/2, 1/2); the open interval keeps the logarithm finite.
    let u = rng.open01() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Report-Noisy-Max: adds independent Laplace(`scale`) noise to each score
/// and returns the id with the largest noisy score. Exact ties go to the
/// lower id.
pub fn noisy_argmax_with_scale(
    scores: impl IntoIterator<Item = (TokenId, f64)>,
    scale: f64,
    rng: &mut RngStream,
) -> Result<TokenId> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::param(format!(
            "Laplace scale must be positive, got {scale}"
        )));
    }
    let mut best: Option<(TokenId, f64)> = None;
    for (id, score) in scores {
        let noisy = score + laplace_unchecked(rng, scale);
        best = match best {
            Some((bid, bval)) if bval > noisy || (bval == noisy && bid < id) => Some((bid, bval)),
            _ => Some((id, noisy)),
        };
    }
    best.map(|(id, _)| id)
        .ok_or_else(|| Error::Domain("noisy argmax over an empty outcome set".into()))
}

/// [`noisy_argmax_with_scale`] at scale `sensitivity / epsilon`. Scores must
/// lie in [0, 1].
pub fn noisy_argmax(
    scores: &[(TokenId, f64)],
    params: &PrivacyParams,
    rng: &mut RngStream,
) -> Result<TokenId> {
    if let Some(&(id, s)) = scores.iter().find(|(_, s)| !(0.0..=1.0).contains(s)) {
        return Err(Error::Domain(format!(
            "score {s} for outcome {id} outside [0, 1]"
        )));
    }
    noisy_argmax_with_scale(scores.iter().copied(), params.noise_scale(), rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    SensitiveRnm,
    NonsensitiveRnm,
    NonsensitiveKeep,
    OovPassthrough,
}

impl Branch {
    pub fn is_replacement(self) -> bool {
        matches!(self, Branch::SensitiveRnm | Branch::NonsensitiveRnm)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Branch::SensitiveRnm => "sensitive_rnm",
            Branch::NonsensitiveRnm => "nonsensitive_rnm",
            Branch::NonsensitiveKeep => "nonsensitive_keep",
            Branch::OovPassthrough => "oov_passthrough",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SanitizeDecision {
    pub original_id: TokenId,
    pub output_id: TokenId,
    pub branch: Branch,
    pub epsilon_spent: f64,
}

/// Mapping function for a single token.
///
/// Sensitive tokens are always replaced by a Report-Noisy-Max choice from
/// their candidate list. Non-sensitive tokens go through the same selection
/// with probability `p` and are kept otherwise. Ids outside the table pass
/// through untouched. Budget is charged only when a selection runs.
pub fn sanitize_token(
    token: TokenId,
    partition: &SensitivityPartition,
    table: &CandidateTable,
    params: &PrivacyParams,
    rng: &mut RngStream,
) -> SanitizeDecision {
    sanitize_token_with_scale(token, partition, table, params, params.noise_scale(), rng)
}

/// [`sanitize_token`] with an explicit noise scale. Only the verifier's
/// negative controls should pass anything other than
/// `params.noise_scale()`.
pub fn sanitize_token_with_scale(
    token: TokenId,
    partition: &SensitivityPartition,
    table: &CandidateTable,
    params: &PrivacyParams,
    scale: f64,
    rng: &mut RngStream,
) -> SanitizeDecision {
    let keep = |branch| SanitizeDecision {
        original_id: token,
        output_id: token,
        branch,
        epsilon_spent: 0.0,
    };
    let candidates = match table.candidates(token) {
        Some(c) if !c.is_empty() => c,
        _ => return keep(Branch::OovPassthrough),
    };
    let branch = if partition.is_sensitive(token) {
        Branch::SensitiveRnm
    } else if rng.unit() < params.replace_prob() {
        Branch::NonsensitiveRnm
    } else {
        return keep(Branch::NonsensitiveKeep);
    };
    let output_id = noisy_argmax_with_scale(
        candidates.iter().map(|c| (c.candidate_id, c.norm_score)),
        scale,
        rng,
    )
    .expect("candidate list is non-empty and scale was validated");
    SanitizeDecision {
        original_id: token,
        output_id,
        branch,
        epsilon_spent: params.epsilon(),
    }
}
