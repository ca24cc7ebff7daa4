//! Report-Noisy-Max on a fixed score list: how often each outcome wins as
//! epsilon grows.
//!
//! cargo run --release --example report_noisy_max

use sanitext::{noisy_argmax, PrivacyParams, RngStream};

fn main() -> sanitext::Result<()> {
    let scores = [(0, 1.0), (1, 0.75), (2, 0.5), (3, 0.0)];
    let n = 200_000;
    println!("scores {:?}", scores.map(|s| s.1));
    for eps in [0.1, 1.0, 3.0, 10.0, 100.0] {
        let params = PrivacyParams::new(eps, 1.0)?;
        let mut rng = RngStream::new(1, 0);
        let mut wins = [0u32; 4];
        for _ in 0..n {
            wins[noisy_argmax(&scores, &params, &mut rng)? as usize] += 1;
        }
        let freq: Vec<String> = wins
            .iter()
            .map(|&w| format!("{:.3}", w as f64 / n as f64))
            .collect();
        println!("eps {eps:>5}: {}", freq.join("  "));
    }
    Ok(())
}
