//! Build the candidate table for a small vocabulary, save it next to the
//! store and reload it with the checksum check.
//!
//! cargo run --example build_index

use std::fs::File;

use sanitext::synth::demo_store;
use sanitext::{CandidateTable, EmbeddingStore, StoreFormat};

fn main() -> sanitext::Result<()> {
    let dir = std::env::temp_dir().join("sanitext-build-index");
    std::fs::create_dir_all(&dir)?;
    let store_path = dir.join("vocab.txt");
    demo_store(1)?.save(File::create(&store_path)?, StoreFormat::Text)?;

    let store = EmbeddingStore::load_path(&store_path)?;
    let table = CandidateTable::build(&store, 5)?;
    let table_path = dir.join("vocab.ssct");
    let bytes = table.save(File::create(&table_path)?)?;
    println!(
        "{} tokens, dim {}, table {bytes} bytes",
        store.len(),
        store.dim()
    );

    let table = CandidateTable::load_for(&store, File::open(&table_path)?)?;
    for word in ["asthma", "lisbon", "doctor"] {
        let id = store.lookup(word).unwrap();
        print!("{word:>8}:");
        for c in table.candidates(id).unwrap() {
            print!(
                " {}({:.3}, {:.2})",
                store.surface(c.candidate_id).unwrap(),
                c.raw_cos,
                c.norm_score
            );
        }
        println!();
    }

    // A table only loads against the store it was built from.
    let other = demo_store(2)?;
    match CandidateTable::load_for(&other, File::open(&table_path)?) {
        Err(e) => println!("other store rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
