use cogcode::numerics::Tensor;
use cogcode::objective::{
    infonce_loss, positive_accuracy, positive_accuracy_per_step, score_lower, NegativeSampling, NegativeSource, ScoreMatrix,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Softmax cross-entropy with the positive in column 0, written out the
/// long way.
fn naive_loss(rows: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for row in rows {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = row.iter().map(|s| (s - m).exp()).sum();
        let p0 = (row[0] - m).exp() / denom;
        total += -p0.ln();
    }
    total / rows.len() as f64
}

fn matrix(rows: &[Vec<f64>]) -> ScoreMatrix {
    let n = rows[0].len();
    ScoreMatrix::new(n, rows.concat(), vec![1; rows.len()]).unwrap()
}

fn random_rows(rng: &mut ChaCha8Rng, rows: usize, n: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..rows).map(|_| (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()).collect()
}

#[test]
fn loss_matches_naive_cross_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [2, 5, 9] {
        let rows = random_rows(&mut rng, 50, n, 3.0);
        let got = infonce_loss(&matrix(&rows)).unwrap();
        assert!((got - naive_loss(&rows)).abs() < 1e-10);
    }
}

#[test]
fn random_scores_hit_chance_accuracy() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rows = random_rows(&mut rng, 40_000, 8, 1.0);
    let acc = positive_accuracy(&matrix(&rows));
    // standard error is about 0.0017
    assert!((acc - 0.125).abs() < 0.008, "accuracy {acc}");
}

#[test]
fn ties_count_as_misses() {
    let m = matrix(&[vec![1.0, 1.0, 0.0], vec![2.0, 1.0, 1.0]]);
    assert_eq!(positive_accuracy(&m), 0.5);
}

#[test]
fn per_step_accuracy_splits_rows_by_step() {
    let m = ScoreMatrix::new(2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0], vec![1, 1, 3]).unwrap();
    assert_eq!(positive_accuracy_per_step(&m, 3), vec![Some(0.5), None, Some(1.0)]);
}

proptest! {
    #[test]
    fn row_translation_leaves_loss_unchanged(seed in any::<u64>(), shift in -50.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = random_rows(&mut rng, 6, 4, 2.0);
        let moved: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v + shift).collect()).collect();
        let (a, b) = (infonce_loss(&matrix(&rows)).unwrap(), infonce_loss(&matrix(&moved)).unwrap());
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn positive_scaling_keeps_accuracy(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = random_rows(&mut rng, 20, 5, 1.0);
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * scale).collect()).collect();
        prop_assert_eq!(positive_accuracy(&matrix(&rows)), positive_accuracy(&matrix(&scaled)));
    }

    #[test]
    fn shuffling_negatives_keeps_loss_and_accuracy(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = random_rows(&mut rng, 10, 6, 2.0);
        let shuffled: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                let mut neg = r[1..].to_vec();
                rand::seq::SliceRandom::shuffle(&mut neg[..], &mut rng);
                std::iter::once(r[0]).chain(neg).collect()
            })
            .collect();
        let (a, b) = (matrix(&rows), matrix(&shuffled));
        prop_assert!((infonce_loss(&a).unwrap() - infonce_loss(&b).unwrap()).abs() < 1e-12);
        prop_assert_eq!(positive_accuracy(&a), positive_accuracy(&b));
    }

    #[test]
    fn bilinear_score_matches_naive_loop(c in 1usize..9, d in 1usize..9, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: Vec<f64> = (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..c * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut naive = 0.0;
        for i in 0..c {
            for j in 0..d {
                naive += z[i] * w[i * d + j] * g[j];
            }
        }
        let got = score_lower(&z, &Tensor::new([c, d], w).unwrap(), &g).unwrap();
        prop_assert!((got - naive).abs() < 1e-12);
    }

    #[test]
    fn negatives_respect_their_source(batch in 2usize..5, frames in 3usize..12, k in 1usize..4, n in 1usize..9, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for source in [NegativeSource::Mixed, NegativeSource::SameSequence, NegativeSource::CrossBatch] {
            let table = NegativeSampling { n_negatives: n, source }.draw(&mut rng, batch, frames, k).unwrap();
            prop_assert_eq!(table.n, n + 1);
            prop_assert_eq!(table.cand.len(), table.steps.len() * (n + 1));
            for (r, cands) in table.cand.chunks(n + 1).enumerate() {
                let pos = cands[0];
                let (b, t) = (table.pred_rows[r] / k / frames, table.pred_rows[r] / k % frames);
                prop_assert_eq!(pos, b * frames + t + table.steps[r]);
                for &neg in &cands[1..] {
                    prop_assert!(neg != pos && neg < batch * frames);
                    match source {
                        NegativeSource::SameSequence => prop_assert_eq!(neg / frames, b),
                        NegativeSource::CrossBatch => prop_assert!(neg / frames != b),
                        NegativeSource::Mixed => {}
                    }
                }
            }
        }
    }
}

#[test]
fn mixed_negatives_cover_every_other_position() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (batch, frames) = (2, 6);
    let table = NegativeSampling { n_negatives: 4000, source: NegativeSource::Mixed }.draw(&mut rng, batch, frames, 1).unwrap();
    let cands = &table.cand[..4001];
    let mut counts = vec![0usize; batch * frames];
    cands[1..].iter().for_each(|&c| counts[c] += 1);
    assert_eq!(counts[cands[0]], 0);
    // 4000 draws over 11 positions, about 364 each
    for (i, &c) in counts.iter().enumerate() {
        if i != cands[0] {
            assert!((250..480).contains(&c), "position {i} drawn {c} times");
        }
    }
}
