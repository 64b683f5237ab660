//! Seeded instance generators for the benchmarks.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use unweaver::retrieval::Ballots;
use unweaver::{AlignmentProblem, Matrix};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// `voters` ballots over `candidates`, each approving with probability `density`.
pub fn ballots(rng: &mut StdRng, voters: usize, candidates: usize, density: f64) -> Ballots {
    let rows: Vec<Vec<u8>> = (0..voters)
        .map(|_| (0..candidates).map(|_| rng.random_bool(density) as u8).collect())
        .collect();
    Ballots::from_rows(&rows, candidates)
}

/// `dim x n` matrix of unit-norm columns and a unit query.
pub fn embeddings(rng: &mut StdRng, dim: usize, n: usize) -> (Matrix, Vec<f64>) {
    let mut v = Matrix::from_fn(dim, n, |_, _| rng.random_range(-1.0..1.0));
    for c in 0..n {
        let norm = v.column(c).iter().map(|x| x * x).sum::<f64>().sqrt();
        for r in 0..dim {
            v[(r, c)] /= norm;
        }
    }
    let q: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    (v, q.into_iter().map(|x| x / norm).collect())
}

/// Alignment problem with `k` chunks and `s` classes. Class `j` always occurs
/// in chunk `j % k`, so `C` has full row rank and no empty column; other
/// memberships are random.
pub fn alignment_problem(rng: &mut StdRng, k: usize, s: usize, dim: usize) -> AlignmentProblem {
    assert!(s >= k);
    let c = Matrix::from_fn(k, s, |i, j| if j % k == i || rng.random_bool(0.3) { 1.0 } else { 0.0 });
    let (v, q) = embeddings(rng, dim, s);
    // budgets reachable from a positive strength vector
    let x0: Vec<f64> = (0..s).map(|_| rng.random_range(0.5..1.5)).collect();
    let f: Vec<f64> = (0..k).map(|i| (0..s).map(|j| c[(i, j)] * x0[j]).sum()).collect();
    AlignmentProblem::new(c, v, q, f).expect("well-formed problem")
}
