//! Split a vocabulary into sensitive (rare) and non-sensitive words at a few
//! quantiles.
//!
//! cargo run --example partition_vocab

use sanitext::synth::demo_store;
use sanitext::SensitivityPartition;

fn main() -> sanitext::Result<()> {
    let store = demo_store(1)?;
    for q in [0.0, 0.1, 0.2, 0.5] {
        let part = SensitivityPartition::by_frequency(&store, q)?;
        let mut words: Vec<_> = part
            .sensitive_ids()
            .map(|id| (store.frequency(id), store.surface(id).unwrap()))
            .collect();
        words.sort();
        println!("q = {q}: {} sensitive", part.sensitive_count());
        for (f, w) in words {
            println!("    {w:<10} {f}");
        }
    }
    Ok(())
}
