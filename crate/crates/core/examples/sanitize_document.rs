//! Sanitize one sentence and print the per-token audit.
//!
//! cargo run --example sanitize_document

use sanitext::synth::demo_store;
use sanitext::{CandidateTable, PrivacyParams, RngStream, Sanitizer, SensitivityPartition};

fn main() -> sanitext::Result<()> {
    let store = demo_store(1)?;
    let table = CandidateTable::build(&store, 5)?;
    let part = SensitivityPartition::by_frequency(&store, 0.2)?;
    let sanitizer = Sanitizer::new(store, table, part, PrivacyParams::new(1.0, 0.3)?)?;

    let text = "alice told the doctor about her asthma and insomnia after flying to oslo";
    let doc = sanitizer.sanitize_document(text, &mut RngStream::new(7, 0));
    println!("in:  {text}");
    println!("out: {}", doc.text);
    for r in &doc.audit {
        println!(
            "{:>3} {:<10} -> {:<10} {:?} eps {}",
            r.position, r.original_surface, r.output_surface, r.branch, r.epsilon_spent
        );
    }
    println!("total epsilon spent: {}", doc.epsilon_spent());
    println!("audit as JSON lines:");
    doc.write_audit(std::io::stdout().lock())?;
    Ok(())
}
