#![allow(dead_code)]

use sanitext::synth::shared_neighbourhood;
use sanitext::{CandidateTable, EmbeddingStore, PrivacyParams, SensitivityPartition};

/// All-pairs brute force: for each token, every other token with its cosine
/// computed directly from the raw vectors, sorted by (cosine desc, id asc),
/// truncated to `k`.
pub fn brute_force_top_k(store: &EmbeddingStore, k: usize) -> Vec<Vec<(u32, f64)>> {
    let n = store.len();
    (0..n)
        .map(|i| {
            let a = store.vector(i as u32);
            let mut all: Vec<(u32, f64)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let b = store.vector(j as u32);
                    let mut dot = 0.0;
                    let mut na = 0.0;
                    let mut nb = 0.0;
                    for d in 0..a.len() {
                        dot += a[d] * b[d];
                        na += a[d] * a[d];
                        nb += b[d] * b[d];
                    }
                    (j as u32, dot / (na.sqrt() * nb.sqrt()))
                })
                .collect();
            all.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
            all.truncate(k);
            all
        })
        .collect()
}

/// Straight Report-Noisy-Max simulation written without the library's
/// sampler: a SplitMix64 generator and inverse-CDF Laplace from its own
/// uniforms.
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    /// Uniform on (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    pub fn laplace(&mut self, b: f64) -> f64 {
        let u = self.uniform() - 0.5;
        -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
    }
}

pub fn simulate_rnm(scores: &[f64], epsilon: f64, n: u64, seed: u64) -> Vec<f64> {
    let mut g = SplitMix(seed);
    let mut counts = vec![0u64; scores.len()];
    for _ in 0..n {
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for (i, s) in scores.iter().enumerate() {
            let v = s + g.laplace(1.0 / epsilon);
            if v > best_v {
                best = i;
                best_v = v;
            }
        }
        counts[best] += 1;
    }
    counts.iter().map(|&c| c as f64 / n as f64).collect()
}

/// Six shared candidates. `x` scores one candidate 1 and the rest 0;
/// `x_prime` scores five candidates 1 and the last 0, so every score moves
/// up (or stays) going from `x` to `x_prime`.
pub const MONOTONE_X: [f64; 6] = [0.8, 0.4, 0.4, 0.4, 0.4, 0.4];
pub const MONOTONE_X_PRIME: [f64; 6] = [0.5, 0.5, 0.5, 0.5, 0.5, 0.2];

/// Same store, but `x_prime` ranks the candidates in the opposite order.
pub const OPPOSED_X_PRIME: [f64; 6] = [0.2, 0.5, 0.5, 0.5, 0.5, 0.5];

pub struct Instance {
    pub store: EmbeddingStore,
    pub table: CandidateTable,
    pub partition: SensitivityPartition,
}

/// `sensitive` = number of least-frequent tokens marked sensitive: 2 makes
/// both inputs sensitive, 1 only `x`.
pub fn instance(x_cos: &[f64], x_prime_cos: &[f64], sensitive: usize) -> Instance {
    let store = shared_neighbourhood(x_cos, x_prime_cos).unwrap();
    let table = CandidateTable::build(&store, x_cos.len()).unwrap();
    let q = sensitive as f64 / store.len() as f64;
    let partition = SensitivityPartition::by_frequency(&store, q).unwrap();
    Instance {
        store,
        table,
        partition,
    }
}

pub fn params(epsilon: f64, p: f64) -> PrivacyParams {
    PrivacyParams::new(epsilon, p).unwrap()
}

/// Forwards one connection to `upstream`, recording every byte the client
/// sends.
pub struct Tap {
    pub addr: std::net::SocketAddr,
    pub captured: std::sync::Arc<std::sync::Mutex<Vec<u8>>>,
    pub thread: std::thread::JoinHandle<()>,
}

pub fn tap(upstream: std::net::SocketAddr) -> Tap {
    use std::io::{Read, Write};
    use std::net::{Shutdown, TcpListener, TcpStream};
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let captured = std::sync::Arc::new(std::sync::Mutex::new(Vec::new()));
    let sink = captured.clone();
    let thread = std::thread::spawn(move || {
        let (mut client, _) = listener.accept().unwrap();
        let mut server = TcpStream::connect(upstream).unwrap();
        let mut server_rx = server.try_clone().unwrap();
        let mut client_tx = client.try_clone().unwrap();
        let back = std::thread::spawn(move || {
            let _ = std::io::copy(&mut server_rx, &mut client_tx);
            let _ = client_tx.shutdown(Shutdown::Write);
        });
        let mut buf = [0u8; 4096];
        loop {
            match client.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    sink.lock().unwrap().extend_from_slice(&buf[..n]);
                    server.write_all(&buf[..n]).unwrap();
                }
            }
        }
        let _ = server.shutdown(Shutdown::Write);
        let _ = back.join();
    });
    Tap {
        addr,
        captured,
        thread,
    }
}

pub fn frames(mut bytes: &[u8]) -> Vec<sanitext::protocol::Frame> {
    let mut out = Vec::new();
    while let Some(f) = sanitext::protocol::Frame::read_from(&mut bytes).unwrap() {
        out.push(f);
    }
    out
}

pub const CLINIC_TEXTS: &[&str] = &[
    "my doctor treated my asthma in lisbon",
    "alice emailed the surgeon about insomnia",
    "mallory met erin in oslo with a migraine",
    "the nurse saw bob for flu",
    "carol visited a clinic in madrid",
];
