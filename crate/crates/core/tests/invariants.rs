use proptest::prelude::*;
use udfilt_core::bounds::{mutual_information, phi, phi_inverse, random_hmm, SubtractiveLoss};
use udfilt_core::filters::{filter, FilterMode};
use udfilt_core::lz78::Growth;
use udfilt_core::rng::seeded;
use udfilt_core::spa::{delayed_marginal_exact, delayed_marginal_mc, IidSpa, MonteCarlo};
use udfilt_core::types::{kl_divergence, l1_distance};
use udfilt_core::{Alphabet, LossMatrix, Lz78Tree, Pmf, ScoreVector, Spa};

fn weights(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, k)
}

fn pmf(k: usize) -> impl Strategy<Value = Pmf> {
    weights(k).prop_map(|w| Pmf::from_weights(w).unwrap())
}

fn symbols(k: usize, max_len: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..k, 1..max_len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bayes_response_ignores_positive_scaling(
        v in prop::collection::vec(-1.0f64..1.0, 3),
        entries in prop::collection::vec(0.0f64..4.0, 12),
        c in 0.01f64..100.0,
    ) {
        let loss = LossMatrix::new(3, 4, entries).unwrap();
        let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
        let a = loss.bayes_response(&v).unwrap();
        let b = loss.bayes_response(&scaled).unwrap();
        // Near-ties may legitimately flip under rounding.
        let la = loss.expected_loss(a, &v);
        let lb = loss.expected_loss(b, &v);
        prop_assert!((la - lb).abs() <= 1e-9 * (1.0 + la.abs()));
    }

    #[test]
    fn kl_is_nonnegative_and_dominates_pinsker(p in pmf(4), q in pmf(4)) {
        let kl = kl_divergence(&p, &q).unwrap();
        let l1 = l1_distance(p.as_slice(), q.as_slice()).unwrap();
        prop_assert!(kl >= -1e-12);
        prop_assert!(kl + 1e-12 >= l1 * l1 / 2.0);
    }

    #[test]
    fn delayed_prior_inverts_push_forward(seed in any::<u64>(), nx in 2usize..5) {
        let (_, ch) = random_hmm(nx, &mut seeded(seed, 0)).unwrap();
        let px = Pmf::from_weights((0..nx).map(|i| 1.0 + (seed >> i & 7) as f64).collect()).unwrap();
        let back = ch.delayed_prior(&ch.push_forward(px.as_slice())).unwrap();
        for (a, b) in back.as_slice().iter().zip(px.as_slice()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn posterior_is_bayes_rule_when_pz_is_a_push_forward(seed in any::<u64>(), px in pmf(3), z in 0usize..3) {
        let (_, ch) = random_hmm(3, &mut seeded(seed, 0)).unwrap();
        let pz = ch.push_forward(px.as_slice());
        let post = ch.posterior(&pz, z).unwrap();
        for x in 0..3 {
            let want = px.as_slice()[x] * ch.prob(x, z) / pz[z];
            prop_assert!((post.as_slice()[x] - want).abs() < 1e-9);
        }
    }

    #[test]
    fn pruning_is_idempotent(seq in symbols(3, 400), n_th in 1u64..8) {
        let tree = Lz78Tree::build_shifted(&seq, Alphabet::indexed(3).unwrap(), 0.5, Growth::OneLeaf).unwrap();
        let once = tree.prune(n_th);
        prop_assert_eq!(once.prune(n_th), once.clone());
        prop_assert!(once.node_count() <= tree.node_count());
        prop_assert_eq!(tree.prune(0), tree);
    }

    #[test]
    fn tree_predictions_are_distributions(seq in symbols(4, 300), ctx in symbols(4, 50)) {
        let tree = Lz78Tree::build(&seq, Alphabet::indexed(4).unwrap(), 0.5).unwrap();
        let p = tree.spa().prob_next(&ctx);
        prop_assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.as_slice().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn phi_inverse_undoes_phi(rho in prop::collection::vec(0.1f64..3.0, 1..4), frac in 0.02f64..0.98) {
        let mut r = vec![0.0];
        r.extend(rho);
        let loss = SubtractiveLoss::new(r).unwrap();
        let d = frac * loss.mean();
        let h = phi(d, &loss).unwrap();
        let back = phi_inverse(h, &loss).unwrap();
        prop_assert!((back - d).abs() < 1e-6 * (1.0 + d), "d {} h {} back {}", d, h, back);
    }

    #[test]
    fn causal_filter_on_identity_channel_reproduces_input(seq in symbols(3, 200), q in pmf(3)) {
        let ch = udfilt_core::ChannelMatrix::identity(3).unwrap();
        let out = filter(&seq, &IidSpa::new(q), &ch, &LossMatrix::hamming(3), FilterMode::Causal, false).unwrap();
        prop_assert_eq!(out.estimates, seq);
    }
}

#[test]
fn more_lookahead_never_lowers_information() {
    for seed in 0..4 {
        let (hmm, _) = random_hmm(2, &mut seeded(seed, 3)).unwrap();
        let info: Vec<f64> = (0..3).map(|l| mutual_information(&hmm, 5, l, 1e7).unwrap()).collect();
        for w in info.windows(2) {
            assert!(w[1] >= w[0] - 1e-10, "{info:?}");
        }
    }
}

#[test]
fn monte_carlo_error_shrinks_like_inverse_root() {
    let seq: Vec<usize> = {
        let mut rng = seeded(11, 0);
        (0..5000).map(|_| udfilt_core::rng::sample_index(&[0.5, 0.3, 0.2], &mut rng)).collect()
    };
    let spa = Lz78Tree::build(&seq, Alphabet::indexed(3).unwrap(), 0.5).unwrap().spa();
    let past = &seq[..200];
    let exact = delayed_marginal_exact(&spa, past, 3, 1 << 20).unwrap();
    let sizes = [100usize, 400, 1600, 6400];
    let mut rng = seeded(5, 0);
    let err: Vec<f64> = sizes
        .iter()
        .map(|&trials| {
            let reps = 200;
            let total: f64 = (0..reps)
                .map(|_| {
                    let mc = delayed_marginal_mc(&spa, past, 3, MonteCarlo { trials, gamma: 0.0 }, &mut rng).unwrap();
                    l1_distance(mc.as_slice(), exact.as_slice()).unwrap()
                })
                .sum();
            total / reps as f64
        })
        .collect();
    // Least-squares slope of log error against log M.
    let xs: Vec<f64> = sizes.iter().map(|&m| (m as f64).ln()).collect();
    let ys: Vec<f64> = err.iter().map(|e| e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!((slope + 0.5).abs() < 0.1, "slope {slope}, errors {err:?}");
}

#[test]
fn score_vector_accepts_negative_entries() {
    assert!(ScoreVector::new(vec![-0.5, 1.5]).is_ok());
}

#[test]
fn channel_inverse_agrees_with_nalgebra() {
    for seed in 0..20 {
        let nx = 2 + (seed as usize % 4);
        let (_, ch) = random_hmm(nx, &mut seeded(seed, 7)).unwrap();
        let pi = nalgebra::DMatrix::from_fn(nx, nx, |r, c| ch.pi()[(r, c)]);
        let want = pi.transpose().try_inverse().unwrap();
        for r in 0..nx {
            for c in 0..nx {
                assert!((ch.pi_inv_t()[(r, c)] - want[(r, c)]).abs() < 1e-9, "seed {seed}");
            }
        }
        let m = udfilt_core::linalg::Matrix::from_rows(&ch.pi().to_rows()).unwrap();
        let det = m.inverse_with_det().unwrap().1;
        assert!((det - pi.determinant()).abs() < 1e-9 * (1.0 + det.abs()));
    }
}
