//! Monte-Carlo checks of the privacy-loss bounds of the mapping function.
//!
//! For two neighbouring input tokens `x` and `x'` the verifier estimates the
//! output distributions of the mechanism, and for every outcome both can
//! produce it compares `|ln(P[F(x) = o] / P[F(x') = o])|` against the claimed
//! bound:
//!
//! * both sensitive: `epsilon`;
//! * `x` sensitive, `x'` non-sensitive: `ln(1/p) + epsilon`.
//!
//! Each probability carries a 99% normal-approximation halfwidth `h`; the
//! log-ratio slack is the first-order propagation `h_x / p_x + h_x' / p_x'`.
//! Outcomes that only one input can produce are listed as support
//! mismatches rather than treated as infinite ratios.

use std::collections::{BTreeMap, BTreeSet};

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::CandidateTable;
use crate::mechanism::{sanitize_token_with_scale, PrivacyParams};
use crate::partition::SensitivityPartition;
use crate::rng::{derive_stream_id, RngStream};
use crate::store::TokenId;

/// Two-sided 99% standard normal quantile.
pub const Z_99: f64 = 2.5758293035489004;
pub const MIN_TRIALS: u64 = 10_000;
pub const DEFAULT_TRIALS: u64 = 1_000_000;
pub const DEFAULT_ORACLE_SAMPLES: u64 = 10_000_000;
pub const MAX_ORACLE_OUTCOMES: usize = 8;

const CHUNKS: u64 = 256;

pub fn halfwidth(p: f64, trials: u64) -> f64 {
    Z_99 * (p * (1.0 - p) / trials as f64).sqrt()
}

/// The mapping function as seen by the verifier. The noise scale can be
/// overridden for one input to build deliberately broken variants.
#[derive(Debug, Clone, Copy)]
pub struct Mechanism<'a> {
    partition: &'a SensitivityPartition,
    table: &'a CandidateTable,
    params: PrivacyParams,
    scale_override: Option<(TokenId, f64)>,
}

impl<'a> Mechanism<'a> {
    pub fn new(
        partition: &'a SensitivityPartition,
        table: &'a CandidateTable,
        params: PrivacyParams,
    ) -> Self {
        Self {
            partition,
            table,
            params,
            scale_override: None,
        }
    }

    /// Multiplies the Laplace scale by `factor` whenever the input is `token`.
    /// The result is no longer the calibrated mechanism.
    pub fn with_scaled_noise(mut self, token: TokenId, factor: f64) -> Self {
        self.scale_override = Some((token, self.params.noise_scale() * factor));
        self
    }

    pub fn params(&self) -> &PrivacyParams {
        &self.params
    }

    pub fn is_sensitive(&self, token: TokenId) -> bool {
        self.partition.is_sensitive(token)
    }

    fn scale_for(&self, token: TokenId) -> f64 {
        match self.scale_override {
            Some((t, s)) if t == token => s,
            _ => self.params.noise_scale(),
        }
    }

    pub fn sample(&self, token: TokenId, rng: &mut RngStream) -> TokenId {
        sanitize_token_with_scale(
            token,
            self.partition,
            self.table,
            &self.params,
            self.scale_for(token),
            rng,
        )
        .output_id
    }

    /// Every output the mechanism can produce for `token`.
    pub fn support(&self, token: TokenId) -> BTreeSet<TokenId> {
        let mut out: BTreeSet<TokenId> = self
            .table
            .candidates(token)
            .unwrap_or_default()
            .iter()
            .map(|c| c.candidate_id)
            .collect();
        if out.is_empty() || !self.is_sensitive(token) {
            out.insert(token);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismDistribution {
    pub input_id: TokenId,
    pub trials: u64,
    pub counts: BTreeMap<TokenId, u64>,
}

impl MechanismDistribution {
    pub fn probability(&self, outcome: TokenId) -> f64 {
        self.counts.get(&outcome).copied().unwrap_or(0) as f64 / self.trials as f64
    }

    pub fn halfwidth(&self, outcome: TokenId) -> f64 {
        halfwidth(self.probability(outcome), self.trials)
    }

    pub fn probabilities(&self) -> BTreeMap<TokenId, f64> {
        self.counts
            .keys()
            .map(|&o| (o, self.probability(o)))
            .collect()
    }
}

/// Runs the mechanism `trials` times on `input`. Trials are split into
/// fixed chunks, each on its own stream forked from `(seed, input)`, so the
/// result is independent of the number of worker threads.
pub fn estimate(
    mechanism: &Mechanism<'_>,
    input: TokenId,
    trials: u64,
    seed: u64,
) -> Result<MechanismDistribution> {
    if trials < MIN_TRIALS {
        return Err(Error::param(format!(
            "at least {MIN_TRIALS} trials are required, got {trials}"
        )));
    }
    let root = RngStream::new(seed, input as u64);
    let counts = (0..CHUNKS)
        .into_par_iter()
        .map(|chunk| {
            let n = trials / CHUNKS + u64::from(chunk < trials % CHUNKS);
            let mut rng = root.fork(chunk);
            let mut local = BTreeMap::new();
            for _ in 0..n {
                *local
                    .entry(mechanism.sample(input, &mut rng))
                    .or_insert(0u64) += 1;
            }
            local
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            a
        });
    Ok(MechanismDistribution {
        input_id: input,
        trials,
        counts,
    })
}

/// [`estimate`] for the calibrated mechanism.
pub fn estimate_distribution(
    input: TokenId,
    partition: &SensitivityPartition,
    table: &CandidateTable,
    params: &PrivacyParams,
    trials: u64,
    seed: u64,
) -> Result<MechanismDistribution> {
    estimate(
        &Mechanism::new(partition, table, *params),
        input,
        trials,
        seed,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairCase {
    /// Both inputs sensitive.
    BothSensitive,
    /// First input sensitive, second non-sensitive.
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub outcome: TokenId,
    pub p_x: f64,
    pub p_x_prime: f64,
    pub halfwidth_x: f64,
    pub halfwidth_x_prime: f64,
    /// `None` when either probability is not resolved from zero.
    pub log_ratio: Option<f64>,
    pub slack: Option<f64>,
    pub within_bound: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportMismatch {
    pub outcome: TokenId,
    /// Which input can produce the outcome: `"x"` or `"x_prime"`.
    pub only_in: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub case: PairCase,
    pub x: TokenId,
    pub x_prime: TokenId,
    pub epsilon: f64,
    pub replace_prob: f64,
    pub bound: f64,
    pub trials: u64,
    pub worst_log_ratio: Option<f64>,
    /// Slack of the pair with the largest log-ratio.
    pub worst_slack: Option<f64>,
    pub testable_pairs: usize,
    pub pass: bool,
    pub pairs: Vec<PairRow>,
    pub support_mismatches: Vec<SupportMismatch>,
}

impl PrivacyReport {
    /// One-line human summary.
    pub fn summary(&self) -> String {
        match self.worst_log_ratio {
            Some(w) => format!(
                "{:?} x={} x'={} eps={} bound={:.5} worst|ln ratio|={:.5} slack={:.5} pairs={} -> {}",
                self.case,
                self.x,
                self.x_prime,
                self.epsilon,
                self.bound,
                w,
                self.worst_slack.unwrap_or(0.0),
                self.testable_pairs,
                if self.pass { "PASS" } else { "FAIL" }
            ),
            None => format!(
                "{:?} x={} x'={} eps={}: no testable outcome pairs (not passed)",
                self.case, self.x, self.x_prime, self.epsilon
            ),
        }
    }
}

/// Compares two estimated distributions against `bound` over the outcomes
/// both inputs can produce.
pub fn compare(
    case: PairCase,
    mechanism: &Mechanism<'_>,
    px: &MechanismDistribution,
    pxp: &MechanismDistribution,
    bound: f64,
) -> PrivacyReport {
    let (x, xp) = (px.input_id, pxp.input_id);
    let sx = mechanism.support(x);
    let sxp = mechanism.support(xp);
    let mut support_mismatches = Vec::new();
    for &o in sx.difference(&sxp) {
        support_mismatches.push(SupportMismatch {
            outcome: o,
            only_in: "x".into(),
        });
    }
    for &o in sxp.difference(&sx) {
        support_mismatches.push(SupportMismatch {
            outcome: o,
            only_in: "x_prime".into(),
        });
    }

    let mut pairs = Vec::new();
    let mut worst: Option<(f64, f64)> = None;
    let mut pass = true;
    for &o in sx.intersection(&sxp) {
        let (a, b) = (px.probability(o), pxp.probability(o));
        let (ha, hb) = (px.halfwidth(o), pxp.halfwidth(o));
        let resolved = a - ha > 0.0 && b - hb > 0.0;
        let (log_ratio, slack, within) = if resolved {
            let lr = (a / b).ln().abs();
            let slack = ha / a + hb / b;
            let ok = lr <= bound + slack;
            pass &= ok;
            worst = match worst {
                Some((w, s)) if w >= lr => Some((w, s)),
                _ => Some((lr, slack)),
            };
            (Some(lr), Some(slack), Some(ok))
        } else {
            (None, None, None)
        };
        pairs.push(PairRow {
            outcome: o,
            p_x: a,
            p_x_prime: b,
            halfwidth_x: ha,
            halfwidth_x_prime: hb,
            log_ratio,
            slack,
            within_bound: within,
        });
    }
    let testable_pairs = pairs.iter().filter(|p| p.log_ratio.is_some()).count();
    PrivacyReport {
        case,
        x,
        x_prime: xp,
        epsilon: mechanism.params().epsilon(),
        replace_prob: mechanism.params().replace_prob(),
        bound,
        trials: px.trials,
        worst_log_ratio: worst.map(|w| w.0),
        worst_slack: worst.map(|w| w.1),
        testable_pairs,
        pass: pass && testable_pairs > 0,
        pairs,
        support_mismatches,
    }
}

/// Both inputs sensitive: checks the `epsilon` bound.
pub fn check_case1(
    mechanism: &Mechanism<'_>,
    x: TokenId,
    x_prime: TokenId,
    trials: u64,
    seed: u64,
) -> Result<PrivacyReport> {
    for t in [x, x_prime] {
        if !mechanism.is_sensitive(t) {
            return Err(Error::param(format!("token {t} is not sensitive")));
        }
    }
    let px = estimate(mechanism, x, trials, seed)?;
    let pxp = estimate(mechanism, x_prime, trials, seed)?;
    Ok(compare(
        PairCase::BothSensitive,
        mechanism,
        &px,
        &pxp,
        mechanism.params().epsilon(),
    ))
}

/// `x` sensitive, `x_prime` non-sensitive: checks `ln(1/p) + epsilon`.
pub fn check_case2(
    mechanism: &Mechanism<'_>,
    x: TokenId,
    x_prime: TokenId,
    trials: u64,
    seed: u64,
) -> Result<PrivacyReport> {
    if !mechanism.is_sensitive(x) {
        return Err(Error::param(format!("token {x} is not sensitive")));
    }
    if mechanism.is_sensitive(x_prime) {
        return Err(Error::param(format!("token {x_prime} is sensitive")));
    }
    let px = estimate(mechanism, x, trials, seed)?;
    let pxp = estimate(mechanism, x_prime, trials, seed)?;
    Ok(compare(
        PairCase::Mixed,
        mechanism,
        &px,
        &pxp,
        mechanism.params().mixed_pair_budget(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleDistribution {
    pub samples: u64,
    pub probabilities: Vec<f64>,
}

impl OracleDistribution {
    pub fn halfwidth(&self, i: usize) -> f64 {
        halfwidth(self.probabilities[i], self.samples)
    }
}

/// Direct simulation of noisy argmax over `scores` with a generator and
/// noise construction unrelated to the mechanism's: xoshiro256++ and
/// Laplace noise as the difference of two unit exponentials. Ties go to the
/// lower index.
pub fn exact_small_oracle(
    scores: &[f64],
    epsilon: f64,
    samples: u64,
    seed: u64,
) -> Result<OracleDistribution> {
    if scores.is_empty() || scores.len() > MAX_ORACLE_OUTCOMES {
        return Err(Error::param(format!(
            "oracle takes 1..={MAX_ORACLE_OUTCOMES} scores, got {}",
            scores.len()
        )));
    }
    if epsilon.is_nan() || epsilon <= 0.0 || samples == 0 {
        return Err(Error::param("oracle needs epsilon > 0 and samples > 0"));
    }
    let scale = 1.0 / epsilon;
    let counts = (0..CHUNKS)
        .into_par_iter()
        .map(|chunk| {
            let n = samples / CHUNKS + u64::from(chunk < samples % CHUNKS);
            let mut rng = SmallRng::seed_from_u64(derive_stream_id(seed ^ 0x5EED_0AC1E, chunk));
            let mut local = vec![0u64; scores.len()];
            for _ in 0..n {
                let mut best = 0;
                let mut best_val = f64::NEG_INFINITY;
                for (i, s) in scores.iter().enumerate() {
                    let e1: f64 = rng.sample(Exp1);
                    let e2: f64 = rng.sample(Exp1);
                    let v = s + scale * (e1 - e2);
                    if v > best_val {
                        best = i;
                        best_val = v;
                    }
                }
                local[best] += 1;
            }
            local
        })
        .reduce(
            || vec![0u64; scores.len()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Ok(OracleDistribution {
        samples,
        probabilities: counts.iter().map(|&c| c as f64 / samples as f64).collect(),
    })
}
