//! Synthetic embedding stores for examples, benchmarks and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::store::{EmbeddingStore, StoreRecord};

/// `n` tokens named `w0000`, `w0001`, ... with standard-normal vectors and
/// Zipf-like frequencies (`10_000 / (rank + 1)`, ranks shuffled).
pub fn random_store(n: usize, dim: usize, seed: u64) -> Result<EmbeddingStore> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ranks: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        ranks.swap(i, rng.random_range(0..=i));
    }
    let records = (0..n)
        .map(|i| {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            if v.iter().all(|&x| x == 0.0) {
                v[0] = 1.0;
            }
            StoreRecord::new(format!("w{i:04}"), 10_000 / (ranks[i] as u64 + 1), v)
        })
        .collect();
    EmbeddingStore::from_records(records)
}

const DEMO_CLUSTERS: &[&[(&str, u64)]] = &[
    &[
        ("doctor", 900),
        ("nurse", 700),
        ("surgeon", 120),
        ("physician", 90),
        ("clinic", 400),
        ("hospital", 800),
    ],
    &[
        ("diabetes", 60),
        ("asthma", 45),
        ("cancer", 300),
        ("flu", 500),
        ("migraine", 40),
        ("insomnia", 35),
    ],
    &[
        ("paris", 600),
        ("london", 650),
        ("berlin", 400),
        ("madrid", 300),
        ("lisbon", 80),
        ("oslo", 50),
    ],
    &[
        ("alice", 200),
        ("bob", 220),
        ("carol", 70),
        ("dave", 65),
        ("erin", 30),
        ("mallory", 20),
    ],
    &[
        ("visited", 500),
        ("saw", 900),
        ("met", 700),
        ("called", 650),
        ("emailed", 150),
        ("treated", 110),
    ],
    &[
        ("the", 5000),
        ("a", 4800),
        ("my", 2000),
        ("in", 4500),
        ("for", 3900),
        ("with", 3500),
    ],
];

/// A small English vocabulary in six semantic clusters (people, places,
/// conditions, ...). Vectors are a cluster centre plus seeded noise, so
/// nearest neighbours stay inside a cluster.
pub fn demo_store(seed: u64) -> Result<EmbeddingStore> {
    let dim = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for (c, words) in DEMO_CLUSTERS.iter().enumerate() {
        let centre: Vec<f64> = (0..dim)
            .map(|j| {
                if j % DEMO_CLUSTERS.len() == c {
                    3.0
                } else {
                    0.0
                }
            })
            .collect();
        for &(w, f) in words.iter() {
            let v = centre
                .iter()
                .map(|x| x + 0.6 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            records.push(StoreRecord::new(w, f, v));
        }
    }
    EmbeddingStore::from_records(records)
}

/// Two inputs with a fully shared neighbourhood.
///
/// Token 0 (`x`) and token 1 (`x_prime`) are orthogonal unit vectors;
/// candidate `j` (token `j + 2`) has cosine `x_cos[j]` with `x` and
/// `x_prime_cos[j]` with `x_prime`. With `k = x_cos.len()` both inputs get
/// exactly the candidate tokens as their list. Frequencies are 1 for `x`,
/// 2 for `x_prime` and 100 for candidates, so quantile `2 / n` makes both
/// inputs sensitive and `1 / n` only `x`.
///
/// Cosines must be positive with `x_cos[j]^2 + x_prime_cos[j]^2 < 1`.
pub fn shared_neighbourhood(x_cos: &[f64], x_prime_cos: &[f64]) -> Result<EmbeddingStore> {
    assert_eq!(x_cos.len(), x_prime_cos.len());
    let m = x_cos.len();
    let dim = m + 2;
    let axis = |i: usize| {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        v
    };
    let mut records = vec![
        StoreRecord::new("x", 1, axis(0)),
        StoreRecord::new("x_prime", 2, axis(1)),
    ];
    for (j, (&a, &b)) in x_cos.iter().zip(x_prime_cos).enumerate() {
        assert!(
            a > 0.0 && b > 0.0 && a * a + b * b < 1.0,
            "bad cosines ({a}, {b})"
        );
        let mut v = vec![0.0; dim];
        v[0] = a;
        v[1] = b;
        v[2 + j] = (1.0 - a * a - b * b).sqrt();
        records.push(StoreRecord::new(format!("c{j}"), 100, v));
    }
    EmbeddingStore::from_records(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::CandidateTable;

    #[test]
    fn random_store_is_reproducible() {
        assert_eq!(
            random_store(20, 4, 1).unwrap(),
            random_store(20, 4, 1).unwrap()
        );
        assert_ne!(
            random_store(20, 4, 1).unwrap(),
            random_store(20, 4, 2).unwrap()
        );
    }

    #[test]
    fn demo_neighbours_stay_in_cluster() {
        let s = demo_store(0).unwrap();
        let t = CandidateTable::build(&s, 3).unwrap();
        let doctor = s.lookup("doctor").unwrap();
        for c in t.candidates(doctor).unwrap() {
            assert!(c.candidate_id < 6, "{:?}", s.surface(c.candidate_id));
        }
    }

    #[test]
    fn shared_neighbourhood_lists() {
        let s = shared_neighbourhood(&[0.8, 0.4, 0.4], &[0.5, 0.5, 0.2]).unwrap();
        let t = CandidateTable::build(&s, 3).unwrap();
        for input in [0, 1] {
            let mut ids: Vec<_> = t
                .candidates(input)
                .unwrap()
                .iter()
                .map(|c| c.candidate_id)
                .collect();
            ids.sort();
            assert_eq!(ids, vec![2, 3, 4]);
        }
        let x = t.candidates(0).unwrap();
        assert_eq!(x[0].candidate_id, 2);
        assert_eq!(x[0].norm_score, 1.0);
    }
}
