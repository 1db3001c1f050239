#![allow(dead_code)]

use arbor_core::{RngStream, TransitionMatrix};

/// Random matrix with all entries positive.
pub fn random_positive(n: usize, rng: &mut RngStream) -> TransitionMatrix {
    let rows = (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..n).map(|_| 0.05 + rng.uniform()).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / s).collect()
        })
        .collect();
    TransitionMatrix::new(rows).unwrap()
}

/// Random irreducible matrix with roughly `zero_frac` of its entries zeroed.
/// The cycle 1 -> 2 -> ... -> n -> 1 always keeps positive mass.
pub fn random_irreducible(n: usize, zero_frac: f64, rng: &mut RngStream) -> TransitionMatrix {
    let rows = (0..n)
        .map(|i| {
            let next = (i + 1) % n;
            let raw: Vec<f64> = (0..n)
                .map(|j| {
                    if j == next {
                        0.1 + rng.uniform()
                    } else if rng.uniform() < zero_frac {
                        0.0
                    } else {
                        rng.uniform()
                    }
                })
                .collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / s).collect()
        })
        .collect();
    let p = TransitionMatrix::new(rows).unwrap();
    assert!(p.validate().irreducible);
    p
}

pub fn matrix(rows: &[&[f64]]) -> TransitionMatrix {
    TransitionMatrix::new(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
}

/// The n = 3 chain with p_13 = 0 used throughout the general-mode checks.
pub fn chain_without_assumption_a() -> TransitionMatrix {
    matrix(&[&[0.5, 0.5, 0.0], &[0.2, 0.3, 0.5], &[0.4, 0.3, 0.3]])
}
