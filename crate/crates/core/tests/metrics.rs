//! Metrics against a brute-force confusion-matrix oracle with exact
//! rational arithmetic.

mod common;

use common::rational::{class_f1, confusion, oracle_accuracy, oracle_weighted, Frac};
use proptest::prelude::*;
use rand::Rng;
use tbje_core::metrics::{accuracy, f1_unweighted, f1_weighted, multilabel_accuracy, ConfusionCounts};
use tbje_core::rng::{stream, StreamKind};

fn as_bool(v: &[usize]) -> Vec<bool> {
    v.iter().map(|&x| x == 1).collect()
}

#[test]
fn metrics_match_the_confusion_matrix_oracle_on_random_labelings() {
    for seed in 0..1000u64 {
        let mut r = stream(seed, StreamKind::Synthetic, 77);
        let n = r.random_range(1..=200);
        let bias = r.random_range(0.0..1.0);
        let gold: Vec<usize> = (0..n).map(|_| usize::from(r.random_bool(bias))).collect();
        let pred: Vec<usize> = (0..n).map(|_| usize::from(r.random_bool(bias))).collect();
        let m = confusion(&pred, &gold, 2);
        assert_eq!(accuracy(&pred, &gold).unwrap(), oracle_accuracy(&m), "seed {seed}");
        assert_eq!(f1_unweighted(&pred, &gold, &1), class_f1(&m, 1).value(), "seed {seed}");
        assert_eq!(f1_weighted(&as_bool(&pred), &as_bool(&gold)), oracle_weighted(&m), "seed {seed}");

        let classes = 7;
        let gold7: Vec<usize> = (0..n).map(|_| r.random_range(0..classes)).collect();
        let pred7: Vec<usize> = gold7.iter().map(|&g| if r.random_bool(0.4) { g } else { r.random_range(0..classes) }).collect();
        assert_eq!(accuracy(&pred7, &gold7).unwrap(), oracle_accuracy(&confusion(&pred7, &gold7, classes)));
    }
}

#[test]
fn multilabel_accuracy_is_the_mean_of_per_class_accuracies() {
    let mut r = stream(1, StreamKind::Synthetic, 78);
    for _ in 0..100 {
        let n = r.random_range(1..50);
        let gold: Vec<[bool; 6]> = (0..n).map(|_| std::array::from_fn(|_| r.random_bool(0.3))).collect();
        let pred: Vec<[bool; 6]> = (0..n).map(|_| std::array::from_fn(|_| r.random_bool(0.3))).collect();
        let per_class: Vec<Frac> = (0..6)
            .map(|j| Frac::new(pred.iter().zip(&gold).filter(|(p, g)| p[j] == g[j]).count() as u128, n as u128))
            .collect();
        let mean = per_class.into_iter().fold(Frac(0, 1), Frac::add).div(Frac(6, 1));
        assert_eq!(multilabel_accuracy(&pred, &gold).unwrap(), mean.value());
    }
}

#[test]
fn weighted_and_unweighted_f1_differ_on_an_imbalanced_fixture() {
    let gold = [true, true, false, false, false, false];
    let pred = [true, false, false, false, false, true];
    let c = ConfusionCounts::tally(&pred, &gold);
    assert_eq!(c, ConfusionCounts { tp: 1, fp: 1, fn_: 1, tn: 3 });
    let unweighted = f1_unweighted(&pred, &gold, &true);
    let weighted = f1_weighted(&pred, &gold);
    assert_eq!(unweighted, 0.5);
    // (2 · 1/2 + 4 · 3/4) / 6
    assert_eq!(weighted, 2.0 / 3.0);
    assert_ne!(weighted, unweighted);
}

#[test]
fn weighted_equals_unweighted_when_gold_is_all_positive() {
    let mut r = stream(3, StreamKind::Synthetic, 79);
    for _ in 0..200 {
        let n = r.random_range(1..40);
        let gold = vec![true; n];
        let pred: Vec<bool> = (0..n).map(|_| r.random_bool(0.5)).collect();
        assert_eq!(f1_weighted(&pred, &gold), f1_unweighted(&pred, &gold, &true));
    }
}

proptest! {
    #[test]
    fn metrics_ignore_example_order(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..60), rot in 0usize..60) {
        let (pred, gold): (Vec<bool>, Vec<bool>) = pairs.iter().copied().unzip();
        let k = rot % pairs.len();
        let mut p2 = pred.clone();
        let mut g2 = gold.clone();
        p2.rotate_left(k);
        g2.rotate_left(k);
        p2.reverse();
        g2.reverse();
        prop_assert_eq!(accuracy(&pred, &gold).unwrap(), accuracy(&p2, &g2).unwrap());
        prop_assert_eq!(f1_unweighted(&pred, &gold, &true), f1_unweighted(&p2, &g2, &true));
        prop_assert_eq!(f1_weighted(&pred, &gold), f1_weighted(&p2, &g2));
    }
}
