//! Client and server in one process: the client sanitizes locally and only
//! token ids cross the socket.
//!
//! cargo run --example split_inference

use std::sync::Arc;

use sanitext::harness::{Client, ModelKind, Server};
use sanitext::synth::demo_store;
use sanitext::{CandidateTable, PrivacyParams, RngStream, Sanitizer, SensitivityPartition};

fn main() -> sanitext::Result<()> {
    let store = demo_store(1)?;
    let table = CandidateTable::build(&store, 5)?;
    let part = SensitivityPartition::by_frequency(&store, 0.2)?;
    let sanitizer = Arc::new(Sanitizer::new(
        store.clone(),
        table,
        part,
        PrivacyParams::new(1.0, 0.3)?,
    )?);

    let server = Server::bind("127.0.0.1:0", Arc::new(store), ModelKind::Linear)?.spawn()?;
    println!("server on {}", server.addr());

    let mut client = Client::connect(server.addr(), sanitizer)?;
    for (session, text) in [
        "my doctor treated my asthma",
        "erin moved to oslo with a migraine",
    ]
    .into_iter()
    .enumerate()
    {
        let session = session as u64;
        let outcome = client.infer(text, session, &mut RngStream::new(3, session))?;
        println!("\nsent:     {}", outcome.document.text);
        println!("ids:      {:?}", outcome.transmitted_ids());
        println!("returned: {:?}", outcome.response.output_ids);
        for (phase, us) in outcome.timing.phases() {
            println!("  {phase:<22} {us:>9.1} us");
        }
        println!("  {:<22} {:>9.1} us", "total", outcome.timing.total_us);
    }
    drop(client);
    server.shutdown();
    Ok(())
}
