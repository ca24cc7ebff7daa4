//! Report-Noisy-Max text sanitization over word-embedding neighbourhoods.
//!
//! Low-frequency ("sensitive") tokens are always replaced by a neighbour
//! drawn with Report-Noisy-Max over min-max normalised cosine scores; other
//! tokens are replaced with probability `p` and kept otherwise. Around that
//! core the crate provides:
//!
//! * [`store`]: vocabulary, embeddings and frequencies with text and binary
//!   file formats;
//! * [`partition`]: frequency-quantile split into sensitive and
//!   non-sensitive tokens;
//! * [`index`]: exact top-k cosine candidate tables, persisted alongside a
//!   checksum of the store they came from;
//! * [`mechanism`]: Laplace sampling, noisy argmax and the per-token mapping;
//! * [`sanitizer`]: whitespace tokenization, document sanitization and JSON
//!   audit logs;
//! * [`verify`]: Monte-Carlo estimation of privacy-loss ratios between
//!   neighbouring tokens and an independent simulation oracle;
//! * [`protocol`] and [`harness`]: a framed TCP client/server pair where the
//!   client sanitizes and embeds locally and sends only sanitized ids.
//!
//! ```
//! use sanitext::{CandidateTable, EmbeddingStore, PrivacyParams, RngStream,
//!                Sanitizer, SensitivityPartition, StoreRecord};
//!
//! let store = EmbeddingStore::from_records(vec![
//!     StoreRecord::new("rare", 1, vec![1.0, 0.1]),
//!     StoreRecord::new("common", 90, vec![0.9, 0.2]),
//!     StoreRecord::new("other", 50, vec![0.1, 1.0]),
//! ])?;
//! let table = CandidateTable::build(&store, 2)?;
//! let partition = SensitivityPartition::by_frequency(&store, 0.2)?;
//! let sanitizer = Sanitizer::new(store, table, partition, PrivacyParams::new(1.0, 0.3)?)?;
//! let doc = sanitizer.sanitize_document("rare words", &mut RngStream::new(0, 0));
//! assert_ne!(doc.audit[0].output_surface, "rare");
//! # Ok::<(), sanitext::Error>(())
//! ```

mod codec;
pub mod error;
pub mod harness;
pub mod index;
pub mod mechanism;
pub mod partition;
pub mod protocol;
pub mod rng;
pub mod sanitizer;
pub mod store;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};
pub use index::{cosine, CandidateEntry, CandidateTable};
pub use mechanism::{
    case2_budget, noisy_argmax, sample_laplace, sanitize_token, Branch, PrivacyParams,
    SanitizeDecision,
};
pub use partition::SensitivityPartition;
pub use rng::RngStream;
pub use sanitizer::{tokenize, AuditRecord, SanitizedDocument, Sanitizer, SanitizerConfig};
pub use store::{EmbeddingStore, StoreFormat, StoreRecord, Token, TokenId};
