//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use targetkit_core::sim::{generate, preset_with_seed};
use targetkit_core::{
    CateMethod, CatePredictions, ExperimentTable, GroundTruth, LearnerSpec, Matrix,
};

/// The heterogeneous-policy preset resized to `n` rows.
pub fn policy_table(n: usize, seed: u64) -> (ExperimentTable, GroundTruth) {
    let mut spec = preset_with_seed("heterogeneous-policy", seed).expect("preset exists");
    spec.n = n;
    generate(&spec).expect("preset generates")
}

/// Uniform random effects for a control arm and `programs` programs.
pub fn random_cates(n: usize, programs: usize, seed: u64) -> CatePredictions {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tau = Matrix::zeros(n, programs);
    for i in 0..n {
        for j in 0..programs {
            tau.set(i, j, rng.random_range(-0.2..0.4));
        }
    }
    let mut arms = vec!["control".to_string()];
    arms.extend((1..=programs).map(|p| format!("program{p}")));
    CatePredictions {
        arms,
        control: 0,
        programs: (1..=programs).collect(),
        tau,
        method: CateMethod::DrLearner,
        spec: LearnerSpec::linear(),
        folds: 0,
        notes: Vec::new(),
    }
}

/// Rows x covariates with a few discrete levels, and rows x actions rewards.
pub fn tree_problem(
    n: usize,
    p: usize,
    actions: usize,
    seed: u64,
) -> (Matrix, Vec<String>, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Matrix::zeros(n, p);
    let mut r = Matrix::zeros(n, actions);
    for i in 0..n {
        for j in 0..p {
            x.set(i, j, f64::from(rng.random_range(0u8..8)));
        }
        for a in 0..actions {
            r.set(
                i,
                a,
                rng.random_range(-1.0..1.0) + if x.get(i, a % p) > 3.0 { 0.5 } else { 0.0 },
            );
        }
    }
    let names = (0..p).map(|j| format!("x{j}")).collect();
    (x, names, r)
}
