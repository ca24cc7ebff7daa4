//! Sanitize a batch of documents in parallel. Each document draws from its
//! own stream, so thread count does not change the result.
//!
//! cargo run --release --example parallel_documents

use std::time::Instant;

use sanitext::synth::random_store;
use sanitext::{CandidateTable, PrivacyParams, Sanitizer, SensitivityPartition};

fn main() -> sanitext::Result<()> {
    let store = random_store(2_000, 32, 5)?;
    let table = CandidateTable::build(&store, 30)?;
    let part = SensitivityPartition::by_frequency(&store, 0.2)?;
    let sanitizer = Sanitizer::new(store, table, part, PrivacyParams::new(2.0, 0.3)?)?;

    let docs: Vec<String> = (0..500)
        .map(|d| {
            (0..400)
                .map(|i| {
                    sanitizer
                        .store()
                        .surface(((d * 7919 + i * 104_729) % 2_000) as u32)
                        .unwrap()
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();

    let mut previous = None;
    for threads in [1, 4, 16] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let start = Instant::now();
        let out = pool.install(|| sanitizer.sanitize_documents(&docs, 11));
        let spent: f64 = out.iter().map(|d| d.epsilon_spent()).sum();
        println!(
            "{threads:>2} threads: {} docs in {:.2?}, total epsilon {spent}",
            out.len(),
            start.elapsed()
        );
        if let Some(prev) = &previous {
            assert_eq!(prev, &out);
        }
        previous = Some(out);
    }
    println!("outputs identical across thread counts");
    Ok(())
}
