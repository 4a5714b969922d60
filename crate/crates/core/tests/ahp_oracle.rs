mod common;

use common::perron_3x3;
use nalgebra::DMatrix;
use proptest::prelude::*;
use servqual::ahp::{self, JudgmentMatrix, WeightVector, CR_GATE};
use servqual::synth;

fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("f{i}")).collect()
}

fn reciprocal(n: usize, upper: &[f64]) -> JudgmentMatrix {
    let mut values = DMatrix::from_element(n, n, 1.0);
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            values[(i, j)] = upper[k];
            values[(j, i)] = 1.0 / upper[k];
            k += 1;
        }
    }
    JudgmentMatrix::new(labels(n), values).unwrap()
}

#[test]
fn perturbed_judgments_aggregate_close_to_the_truth() {
    let truth = WeightVector::new(labels(3), vec![0.6, 0.2, 0.2]).unwrap();
    for seed in 1..=20 {
        let matrices = synth::gen_ahp_judgments(&truth, 0.2, 50, seed);
        assert_eq!(matrices.len(), 50);
        let pooled = ahp::aggregate_geomean(&matrices).unwrap();
        let (w, _) = ahp::weights_eigen(&pooled).unwrap();
        for (got, want) in w.weights.iter().zip(&truth.weights) {
            assert!((got - want).abs() < 0.03, "seed {seed}: {:?}", w.weights);
        }
    }
}

#[test]
fn noiseless_judgments_are_consistent() {
    let truth = WeightVector::new(labels(3), vec![0.6, 0.2, 0.2]).unwrap();
    for m in synth::gen_ahp_judgments(&truth, 0.0, 5, 3) {
        let (w, lambda) = ahp::weights_eigen(&m).unwrap();
        assert!(ahp::consistency(&m, lambda, CR_GATE).cr < 1e-10);
        for (got, want) in w.weights.iter().zip(&truth.weights) {
            assert!((got - want).abs() < 1e-10);
        }
    }
}

#[test]
fn extreme_cycle_fails_the_consistency_gate() {
    let m = reciprocal(3, &[9.0, 1.0 / 9.0, 9.0]);
    let (_, lambda) = ahp::weights_eigen(&m).unwrap();
    let (oracle_lambda, _) = perron_3x3(&[[1.0, 9.0, 1.0 / 9.0], [1.0 / 9.0, 1.0, 9.0], [9.0, 1.0 / 9.0, 1.0]]);
    assert!((lambda - oracle_lambda).abs() < 1e-9);
    let c = ahp::consistency(&m, lambda, CR_GATE);
    assert!(c.cr > 0.1 && !c.pass);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn eigen_weights_match_the_cubic_oracle(upper in prop::collection::vec(1.0f64 / 9.0..9.0, 3)) {
        let m = reciprocal(3, &upper);
        let (w, lambda) = ahp::weights_eigen(&m).unwrap();
        let rows: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| m.values[(i, j)]));
        let (oracle_lambda, oracle_w) = perron_3x3(&rows);
        // Near-consistent matrices make the oracle's null vector ill-posed.
        prop_assume!(oracle_lambda - 3.0 > 1e-6);
        prop_assert!((lambda - oracle_lambda).abs() < 1e-9);
        for (a, b) in w.weights.iter().zip(oracle_w) {
            prop_assert!((a - b).abs() < 1e-9, "{:?} vs {:?}", w.weights, oracle_w);
        }
    }

    #[test]
    fn consistent_matrices_recover_their_weights(raw in prop::collection::vec(0.01f64..100.0, 2..=10)) {
        let total: f64 = raw.iter().sum();
        let truth: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let m = JudgmentMatrix::consistent(labels(raw.len()), &raw).unwrap();
        let (w, lambda) = ahp::weights_eigen(&m).unwrap();
        for (a, b) in w.weights.iter().zip(&truth) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        prop_assert!(ahp::consistency(&m, lambda, CR_GATE).cr.abs() < 1e-10);
    }

    #[test]
    fn two_by_two_matrices_are_always_consistent(a in 1.0f64 / 9.0..9.0) {
        let m = reciprocal(2, &[a]);
        let (_, lambda) = ahp::weights_eigen(&m).unwrap();
        prop_assert_eq!(ahp::consistency(&m, lambda, CR_GATE).cr, 0.0);
    }

    #[test]
    fn weights_follow_a_simultaneous_permutation(
        upper in prop::collection::vec(1.0f64 / 9.0..9.0, 6),
        shift in 1usize..4,
    ) {
        let m = reciprocal(4, &upper);
        let perm: Vec<usize> = (0..4).map(|i| (i + shift) % 4).collect();
        let permuted = JudgmentMatrix::new(
            perm.iter().map(|&i| m.labels[i].clone()).collect(),
            DMatrix::from_fn(4, 4, |i, j| m.values[(perm[i], perm[j])]),
        )
        .unwrap();
        let (a, _) = ahp::weights_eigen(&m).unwrap();
        let (b, _) = ahp::weights_eigen(&permuted).unwrap();
        for (name, w) in b.names.iter().zip(&b.weights) {
            prop_assert!((a.get(name).unwrap() - w).abs() < 1e-10);
        }
    }

    #[test]
    fn uniform_local_weights_give_uniform_global_weights(_x in 0u8..1) {
        let h = ahp::Hierarchy::reference();
        let criteria = WeightVector::new(h.criteria.clone(), vec![1.0; h.criteria.len()]).unwrap();
        let leaves: Vec<WeightVector> = h
            .leaves
            .iter()
            .map(|l| WeightVector::new(l.clone(), vec![1.0; l.len()]).unwrap())
            .collect();
        let g = ahp::global_weights(&h, &criteria, &leaves).unwrap();
        let n = g.weights.len() as f64;
        for w in g.weights {
            prop_assert!((w - 1.0 / n).abs() < 1e-15);
        }
    }
}
