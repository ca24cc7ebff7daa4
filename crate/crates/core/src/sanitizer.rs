//! Document-level sanitization: whitespace tokenization, per-token mapping
//! and an audit trail.

use std::io::Write;
use std::ops::Range;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{CandidateTable, DEFAULT_K};
use crate::mechanism::{
    sanitize_token, Branch, PrivacyParams, SanitizeDecision, DEFAULT_EPSILON, DEFAULT_REPLACE_PROB,
};
use crate::partition::{SensitivityPartition, DEFAULT_SENSITIVE_QUANTILE};
use crate::rng::RngStream;
use crate::store::{EmbeddingStore, TokenId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Span<'a> {
    pub surface: &'a str,
    pub bytes: Range<usize>,
}

/// Splits on Unicode whitespace. Punctuation stays attached to its word.
pub fn tokenize(text: &str) -> Vec<Span<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in text.char_indices() {
        match (ch.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push(Span {
                    surface: &text[s..i],
                    bytes: s..i,
                });
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(Span {
            surface: &text[s..],
            bytes: s..text.len(),
        });
    }
    out
}

/// Rebuilds `original` with each token span replaced by the matching entry
/// of `replacements`; all whitespace is copied through verbatim.
pub fn detokenize(original: &str, spans: &[Span<'_>], replacements: &[&str]) -> String {
    assert_eq!(spans.len(), replacements.len());
    let mut out = String::with_capacity(original.len());
    let mut last = 0;
    for (span, rep) in spans.iter().zip(replacements) {
        out.push_str(&original[last..span.bytes.start]);
        out.push_str(rep);
        last = span.bytes.end;
    }
    out.push_str(&original[last..]);
    out
}

/// Tokenize raw bytes, rejecting invalid UTF-8.
pub fn tokenize_bytes(bytes: &[u8]) -> Result<(&str, Vec<Span<'_>>)> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::format(format!("input is not valid UTF-8: {e}")))?;
    Ok((text, tokenize(text)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanitizerConfig {
    pub epsilon: f64,
    pub k: usize,
    pub p: f64,
    pub q: f64,
    pub seed: u64,
    pub store: Option<PathBuf>,
    pub table: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub audit: Option<PathBuf>,
}

impl Default for SanitizerConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            k: DEFAULT_K,
            p: DEFAULT_REPLACE_PROB,
            q: DEFAULT_SENSITIVE_QUANTILE,
            seed: 0,
            store: None,
            table: None,
            input: None,
            output: None,
            audit: None,
        }
    }
}

impl SanitizerConfig {
    pub fn params(&self) -> Result<PrivacyParams> {
        PrivacyParams::new(self.epsilon, self.p).map_err(as_config)
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.q) {
            return Err(Error::Config(format!(
                "q must lie in [0, 1], got {}",
                self.q
            )));
        }
        Ok(())
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Parameter(msg) => Error::Config(msg),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub position: usize,
    /// `None` for out-of-vocabulary tokens.
    pub original_id: Option<TokenId>,
    pub output_id: Option<TokenId>,
    pub branch: Branch,
    pub epsilon_spent: f64,
    pub original_surface: String,
    pub output_surface: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SanitizedDocument {
    pub text: String,
    pub audit: Vec<AuditRecord>,
}

impl SanitizedDocument {
    pub fn epsilon_spent(&self) -> f64 {
        self.audit.iter().map(|r| r.epsilon_spent).sum()
    }

    pub fn branch_count(&self, branch: Branch) -> usize {
        self.audit.iter().filter(|r| r.branch == branch).count()
    }

    /// Token ids as they would be sent downstream. OOV tokens map to
    /// `oov_id`.
    pub fn output_ids(&self, oov_id: TokenId) -> Vec<TokenId> {
        self.audit
            .iter()
            .map(|r| r.output_id.unwrap_or(oov_id))
            .collect()
    }

    /// Audit log as JSON lines.
    pub fn write_audit(&self, mut w: impl Write) -> Result<()> {
        for rec in &self.audit {
            serde_json::to_writer(&mut w, rec)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Ready-to-run sanitizer: a store, its candidate table, the frequency
/// partition and privacy parameters. Immutable and shareable across threads.
#[derive(Debug, Clone)]
pub struct Sanitizer {
    store: EmbeddingStore,
    table: CandidateTable,
    partition: SensitivityPartition,
    params: PrivacyParams,
}

impl Sanitizer {
    pub fn new(
        store: EmbeddingStore,
        table: CandidateTable,
        partition: SensitivityPartition,
        params: PrivacyParams,
    ) -> Result<Self> {
        table.check_store(&store)?;
        if partition.len() != store.len() {
            return Err(Error::Config(format!(
                "partition covers {} tokens, store has {}",
                partition.len(),
                store.len()
            )));
        }
        Ok(Self {
            store,
            table,
            partition,
            params,
        })
    }

    /// Load store and table from the paths in `config`, partition the
    /// vocabulary and check that the table was built with `config.k`.
    pub fn from_config(config: &SanitizerConfig) -> Result<Self> {
        config.validate()?;
        let store_path = config
            .store
            .as_ref()
            .ok_or_else(|| Error::Config("no store path given".into()))?;
        let table_path = config
            .table
            .as_ref()
            .ok_or_else(|| Error::Config("no table path given".into()))?;
        let store = EmbeddingStore::load_path(store_path)?;
        let table = CandidateTable::load_for(
            &store,
            std::io::BufReader::new(std::fs::File::open(table_path)?),
        )?;
        if table.k() != config.k {
            return Err(Error::Config(format!(
                "table was built with k = {} but k = {} was requested; rebuild the index",
                table.k(),
                config.k
            )));
        }
        let partition = SensitivityPartition::by_frequency(&store, config.q).map_err(as_config)?;
        Self::new(store, table, partition, config.params()?)
    }

    pub fn store(&self) -> &EmbeddingStore {
        &self.store
    }

    pub fn table(&self) -> &CandidateTable {
        &self.table
    }

    pub fn partition(&self) -> &SensitivityPartition {
        &self.partition
    }

    pub fn params(&self) -> &PrivacyParams {
        &self.params
    }

    pub fn sanitize_token(&self, id: TokenId, rng: &mut RngStream) -> SanitizeDecision {
        sanitize_token(id, &self.partition, &self.table, &self.params, rng)
    }

    /// Sanitizes one document. Tokens are processed in order on `rng`; the
    /// output keeps every whitespace run of the input.
    pub fn sanitize_document(&self, text: &str, rng: &mut RngStream) -> SanitizedDocument {
        let spans = tokenize(text);
        let mut audit = Vec::with_capacity(spans.len());
        for (position, span) in spans.iter().enumerate() {
            let record = match self.store.lookup(span.surface) {
                Some(id) => {
                    let d = self.sanitize_token(id, rng);
                    AuditRecord {
                        position,
                        original_id: Some(id),
                        output_id: Some(d.output_id),
                        branch: d.branch,
                        epsilon_spent: d.epsilon_spent,
                        original_surface: span.surface.to_owned(),
                        output_surface: self
                            .store
                            .surface(d.output_id)
                            .expect("output ids come from the store")
                            .to_owned(),
                    }
                }
                None => AuditRecord {
                    position,
                    original_id: None,
                    output_id: None,
                    branch: Branch::OovPassthrough,
                    epsilon_spent: 0.0,
                    original_surface: span.surface.to_owned(),
                    output_surface: span.surface.to_owned(),
                },
            };
            audit.push(record);
        }
        let replacements: Vec<&str> = audit.iter().map(|r| r.output_surface.as_str()).collect();
        let text = detokenize(text, &spans, &replacements);
        SanitizedDocument { text, audit }
    }

    /// Sanitizes documents in parallel. Document `i` uses stream id `i`
    /// under `seed`, so results do not depend on thread scheduling.
    pub fn sanitize_documents<S: AsRef<str> + Sync>(
        &self,
        docs: &[S],
        seed: u64,
    ) -> Vec<SanitizedDocument> {
        docs.par_iter()
            .enumerate()
            .map(|(i, d)| self.sanitize_document(d.as_ref(), &mut RngStream::new(seed, i as u64)))
            .collect()
    }

    /// Count of tokens in `doc` that were not in the vocabulary.
    pub fn oov_count(doc: &SanitizedDocument) -> usize {
        doc.branch_count(Branch::OovPassthrough)
    }
}

/// Runs the full file-to-file pipeline described by `config`: reads the
/// input, writes the sanitized text to `config.output` (stdout if unset) and
/// the JSON-lines audit to `config.audit` if set.
pub fn run_sanitize(config: &SanitizerConfig) -> Result<SanitizedDocument> {
    let sanitizer = Sanitizer::from_config(config)?;
    let input = match &config.input {
        Some(p) => std::fs::read(p)?,
        None => {
            let mut buf = Vec::new();
            std::io::Read::read_to_end(&mut std::io::stdin(), &mut buf)?;
            buf
        }
    };
    let (text, _) = tokenize_bytes(&input)?;
    let doc = sanitizer.sanitize_document(text, &mut RngStream::new(config.seed, 0));
    match &config.output {
        Some(p) => std::fs::write(p, doc.text.as_bytes())?,
        None => std::io::stdout().write_all(doc.text.as_bytes())?,
    }
    if let Some(p) = &config.audit {
        doc.write_audit(std::io::BufWriter::new(std::fs::File::create(p)?))?;
    }
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::StoreRecord;

    #[test]
    fn tokenize_examples() {
        let t = tokenize("hello world");
        assert_eq!(
            t.iter().map(|s| s.surface).collect::<Vec<_>>(),
            ["hello", "world"]
        );
        assert!(tokenize("").is_empty());
        assert!(tokenize(" \t\n").is_empty());
        let t = tokenize("a  b");
        assert_eq!(t.len(), 2);
        assert_eq!(detokenize("a  b", &t, &["a", "b"]), "a  b");
        assert_eq!(detokenize("a  b", &t, &["xy", "z"]), "xy  z");
    }

    #[test]
    fn tokenize_keeps_punctuation_and_unicode_space() {
        let text = "well,\u{00A0}done!\u{3000}ok";
        let t = tokenize(text);
        assert_eq!(
            t.iter().map(|s| s.surface).collect::<Vec<_>>(),
            ["well,", "done!", "ok"]
        );
        let same: Vec<&str> = t.iter().map(|s| s.surface).collect();
        assert_eq!(detokenize(text, &t, &same), text);
    }

    #[test]
    fn invalid_utf8_is_rejected() {
        assert!(matches!(
            tokenize_bytes(&[0x66, 0xff]),
            Err(Error::Format(_))
        ));
    }

    fn sanitizer(p: f64) -> Sanitizer {
        let records = (0..6)
            .map(|i| {
                let a = (i as f64) * 0.4;
                StoreRecord::new(format!("w{i}"), 10 + i as u64, vec![a.cos(), a.sin(), 0.1])
            })
            .collect();
        let store = EmbeddingStore::from_records(records).unwrap();
        let table = CandidateTable::build(&store, 3).unwrap();
        let part = SensitivityPartition::by_frequency(&store, 0.34).unwrap();
        Sanitizer::new(store, table, part, PrivacyParams::new(1.0, p).unwrap()).unwrap()
    }

    #[test]
    fn oov_document_is_unchanged() {
        let s = sanitizer(0.3);
        let text = "these  words\tare unknown\n";
        let doc = s.sanitize_document(text, &mut RngStream::new(0, 0));
        assert_eq!(doc.text, text);
        assert!(doc.audit.iter().all(|r| r.branch == Branch::OovPassthrough));
        assert_eq!(doc.epsilon_spent(), 0.0);
    }

    #[test]
    fn sensitive_token_is_replaced_from_its_list() {
        let s = sanitizer(0.3);
        for seed in 0..50 {
            let doc = s.sanitize_document("w0", &mut RngStream::new(seed, 0));
            let rec = &doc.audit[0];
            assert_eq!(rec.branch, Branch::SensitiveRnm);
            let out = rec.output_id.unwrap();
            assert_ne!(out, 0);
            assert!(s
                .table()
                .candidates(0)
                .unwrap()
                .iter()
                .any(|c| c.candidate_id == out));
            assert_eq!(doc.text, rec.output_surface);
        }
    }

    #[test]
    fn audit_jsonl_shape() {
        let s = sanitizer(1.0);
        let doc = s.sanitize_document("w0 zz", &mut RngStream::new(0, 0));
        let mut out = Vec::new();
        doc.write_audit(&mut out).unwrap();
        let lines: Vec<serde_json::Value> = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0]["branch"], "sensitive_rnm");
        assert_eq!(lines[1]["branch"], "oov_passthrough");
        assert!(lines[1]["original_id"].is_null());
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = SanitizerConfig::default();
        assert_eq!((c.epsilon, c.k, c.p, c.q, c.seed), (1.0, 30, 0.3, 0.2, 0));
        assert!(c.validate().is_ok());
        let bad = SanitizerConfig {
            p: 0.0,
            ..c.clone()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = SanitizerConfig { q: 2.0, ..c };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }
}
