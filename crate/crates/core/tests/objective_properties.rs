mod common;

use common::*;
use lgg::autodiff::{finite_diff_check, Tape, Var};
use lgg::graph::diff::{build_lgg_on_tape, degree_normalize_on_tape, label_variation_on_tape, signal_variation_on_tape};
use lgg::graph::{build_lgg, GraphParams, LabelIndicatorMatrix, Similarity};
use lgg::objectives::{cross_entropy_loss, gkd_distance, gkd_loss, label_variation_loss};
use lgg::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Cross-entropy evaluated term by term with log-sum-exp around the row max.
fn oracle_cross_entropy(logits: &Tensor, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    total / labels.len() as f64
}

#[test]
fn cross_entropy_matches_direct_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let logits = random_matrix(&mut rng, 4, 3, -5.0, 5.0);
        let labels: Vec<usize> = (0..4).map(|_| rng.gen_range(0..3)).collect();
        let tape = Tape::new();
        let got = cross_entropy_loss(tape.constant(logits.clone()), &labels).unwrap().item();
        assert!((got - oracle_cross_entropy(&logits, &labels)).abs() < 1e-12);
    }
}

#[test]
fn gkd_hand_value() {
    let tape = Tape::new();
    let a = Tensor::zeros(&[3, 3]);
    let mut b = a.clone();
    b.set(0, 2, 0.3);
    b.set(2, 0, 0.3);
    let v = gkd_loss(tape.constant(a), tape.constant(b)).unwrap().item();
    assert!((v - (2.0f64 * 0.09).sqrt()).abs() < 1e-15);
}

fn tie_free_batch(rng: &mut ChaCha8Rng, b: usize, d: usize, k: usize, sim: Similarity) -> Tensor {
    loop {
        let x = random_matrix(rng, b, d, 0.1, 2.0);
        let order = match sim {
            Similarity::Cosine => oracle_cosine(&x),
            _ => oracle_neg_sq_dist(&x),
        };
        if knn_gap(&order, k) > 1e-3 {
            return x;
        }
    }
}

fn fixed_bandwidth(x: &Tensor, sim: Similarity) -> GraphParams {
    let mut p = GraphParams::default().with_k(3).with_similarity(sim);
    if sim == Similarity::Gaussian {
        let h = lgg::graph::median_pairwise_distance(x).unwrap();
        p = p.with_bandwidth(lgg::graph::Bandwidth::Fixed(h));
    }
    p
}

fn higher_ranked<F>(f: F) -> F
where
    F: for<'t> Fn(Var<'t>) -> lgg::Result<Var<'t>>,
{
    f
}

#[test]
fn graph_primitives_pass_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let labels = LabelIndicatorMatrix::from_labels(&[0, 1, 2, 0, 1, 2, 0, 1]).unwrap();
    for sim in [Similarity::Cosine, Similarity::Gaussian] {
        for _ in 0..5 {
            let x = tie_free_batch(&mut rng, 8, 5, 3, sim);
            let params = fixed_bandwidth(&x, sim);
            let s = random_matrix(&mut rng, 8, 2, -1.0, 1.0);

            let lv = higher_ranked(|v| {
                let g = build_lgg_on_tape(v, &params)?;
                label_variation_on_tape(g.adjacency, &labels)
            });
            assert!(finite_diff_check(lv, &x, 1e-5).unwrap() < 1e-4);

            let normalized = higher_ranked(|v| {
                let g = build_lgg_on_tape(v, &params)?;
                let a = degree_normalize_on_tape(g.adjacency)?;
                signal_variation_on_tape(a, v.tape().constant(s.clone()))
            });
            assert!(finite_diff_check(normalized, &x, 1e-5).unwrap() < 1e-4);
        }
    }
}

#[test]
fn tape_graph_matches_plain_graph() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for sim in [Similarity::Cosine, Similarity::Gaussian] {
        for normalize in [false, true] {
            let x = random_matrix(&mut rng, 10, 4, -1.0, 2.0);
            let params = GraphParams::default().with_k(3).with_similarity(sim).with_normalize(normalize);
            let tape = Tape::new();
            let tg = build_lgg_on_tape(tape.constant(x.clone()), &params).unwrap();
            let g = build_lgg(&x, &params).unwrap();
            assert_eq!(&tg.edges, g.edges());
            for (p, q) in tg.adjacency.value().data().iter().zip(g.adjacency().data()) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }
}

fn batch() -> impl Strategy<Value = (Tensor, Vec<usize>, u64)> {
    (4usize..=12, 1usize..=5, any::<u64>()).prop_map(|(b, d, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_matrix(&mut rng, b, d, -2.0, 2.0);
        let mut labels: Vec<usize> = (0..b).map(|_| rng.gen_range(0..3)).collect();
        labels[0] = 0;
        labels[1] = 1;
        (x, labels, seed)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gkd_nonnegative_symmetric_and_order_invariant((x, _, seed) in batch()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
        let y = random_matrix(&mut rng, x.rows(), 3, -1.0, 1.0);
        prop_assume!(knn_gap(&oracle_neg_sq_dist(&x), 2) > 1e-9 && knn_gap(&oracle_neg_sq_dist(&y), 2) > 1e-9);
        let params = GraphParams::default().with_k(2).with_similarity(Similarity::Gaussian).with_normalize(true);
        let gt = build_lgg(&x, &params).unwrap();
        let gs = build_lgg(&y, &params).unwrap();
        let d = gkd_distance(&gt, &gs).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert_eq!(d, gkd_distance(&gs, &gt).unwrap());
        prop_assert_eq!(gkd_distance(&gt, &gt).unwrap(), 0.0);

        use rand::seq::SliceRandom;
        let mut perm: Vec<usize> = (0..x.rows()).collect();
        perm.shuffle(&mut rng);
        let pt = build_lgg(&permute_rows(&x, &perm), &params).unwrap();
        let ps = build_lgg(&permute_rows(&y, &perm), &params).unwrap();
        prop_assert!((gkd_distance(&pt, &ps).unwrap() - d).abs() < 1e-12);
    }

    #[test]
    fn label_variation_loss_invariances((x, labels, seed) in batch()) {
        prop_assume!(knn_gap(&oracle_neg_sq_dist(&x), 3) > 1e-9);
        let params = GraphParams::default().with_k(3).with_similarity(Similarity::Gaussian);
        let eval = |x: &Tensor, labels: &[usize]| {
            let tape = Tape::new();
            let v = LabelIndicatorMatrix::from_labels(labels).unwrap();
            label_variation_loss(tape.constant(x.clone()), &v, &params).unwrap().item()
        };
        let base = eval(&x, &labels);
        prop_assert!(base.is_finite() && base >= 0.0);

        let relabeled: Vec<usize> = labels.iter().map(|&c| [2, 0, 1][c]).collect();
        prop_assert!((eval(&x, &relabeled) - base).abs() <= 1e-12 * base.max(1.0));

        use rand::seq::SliceRandom;
        let mut perm: Vec<usize> = (0..x.rows()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 3));
        let plabels: Vec<usize> = perm.iter().map(|&p| labels[p]).collect();
        prop_assert!((eval(&permute_rows(&x, &perm), &plabels) - base).abs() <= 1e-10 * base.max(1.0));
    }

    #[test]
    fn cosine_label_variation_loss_ignores_row_scale((x, labels, seed) in batch()) {
        let x = x.map(f64::abs).map(|v| v + 0.05);
        prop_assume!(knn_gap(&oracle_cosine(&x), 3) > 1e-9);
        let params = GraphParams::default().with_k(3).with_similarity(Similarity::Cosine);
        let v = LabelIndicatorMatrix::from_labels(&labels).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 5);
        let mut scaled = x.clone();
        for i in 0..x.rows() {
            let c = rng.gen_range(0.1..10.0);
            for j in 0..x.cols() {
                scaled.set(i, j, x.at(i, j) * c);
            }
        }
        let tape = Tape::new();
        let a = label_variation_loss(tape.constant(x), &v, &params).unwrap().item();
        let b = label_variation_loss(tape.constant(scaled), &v, &params).unwrap().item();
        prop_assert!((a - b).abs() < 1e-10 * a.max(1.0));
    }
}
