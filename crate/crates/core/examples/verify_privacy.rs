//! Monte-Carlo check of the privacy-loss bound on constructed token pairs.
//!
//! Two tokens share one candidate neighbourhood. When every candidate score
//! moves the same way between them, the observed loss stays under epsilon.
//! When the scores move in opposite directions it can exceed epsilon (up to
//! twice epsilon). A mechanism with half the noise on one input is caught.
//!
//! cargo run --release --example verify_privacy

use sanitext::synth::shared_neighbourhood;
use sanitext::verify::{check_case1, check_case2, Mechanism};
use sanitext::{CandidateTable, PrivacyParams, SensitivityPartition};

const X: [f64; 6] = [0.8, 0.4, 0.4, 0.4, 0.4, 0.4];
const MONOTONE: [f64; 6] = [0.5, 0.5, 0.5, 0.5, 0.5, 0.2];
const OPPOSED: [f64; 6] = [0.2, 0.5, 0.5, 0.5, 0.5, 0.5];

fn run(
    label: &str,
    x_prime: &[f64],
    sensitive: usize,
    eps: f64,
    halve: bool,
) -> sanitext::Result<()> {
    let store = shared_neighbourhood(&X, x_prime)?;
    let table = CandidateTable::build(&store, X.len())?;
    let part = SensitivityPartition::by_frequency(&store, sensitive as f64 / store.len() as f64)?;
    let mut mech = Mechanism::new(&part, &table, PrivacyParams::new(eps, 0.3)?);
    if halve {
        mech = mech.with_scaled_noise(1, 0.5);
    }
    let report = if sensitive == 2 {
        check_case1(&mech, 0, 1, 1_000_000, 3)?
    } else {
        check_case2(&mech, 0, 1, 1_000_000, 3)?
    };
    println!("{label:<28} {}", report.summary());
    Ok(())
}

fn main() -> sanitext::Result<()> {
    for eps in [0.1, 1.0, 3.0] {
        run(
            &format!("both sensitive, eps {eps}"),
            &MONOTONE,
            2,
            eps,
            false,
        )?;
    }
    run("one non-sensitive, eps 1", &MONOTONE, 1, 1.0, false)?;
    run("opposed scores, eps 1", &OPPOSED, 2, 1.0, false)?;
    run("halved noise, eps 0.1", &MONOTONE, 2, 0.1, true)?;
    Ok(())
}
