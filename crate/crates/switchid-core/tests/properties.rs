//! Randomized property tests for the structural invariants of the
//! annealing quantizer, the local identifier and the estimated model.

use proptest::prelude::*;
use switchid_core::divergence::separating_hyperplane;
use switchid_core::hybrid::{Cell, EstimatedHybridModel};
use switchid_core::oda::{
    gibbs_probs, merge, oda_update, perturb_split, Codevector, ThetaRef, UpdateOrder,
};
use switchid_core::rng::SplitMix64;
use switchid_core::{Divergence, LocalModel, StepSchedule};

const DIV: Divergence = Divergence::SquaredEuclidean;

fn finite(range: core::ops::Range<f64>) -> impl Strategy<Value = f64> {
    range.prop_map(|v| if v == 0.0 { 0.0 } else { v })
}

fn vec_of(dim: usize, range: core::ops::Range<f64>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(finite(range), dim)
}

fn codevector_set(k: usize, dim: usize) -> impl Strategy<Value = Vec<Codevector>> {
    prop::collection::vec(
        (vec_of(dim, -10.0..10.0), 0.01f64..1.0),
        k,
    )
    .prop_map(|parts| {
        parts
            .into_iter()
            .map(|(phi_hat, rho)| Codevector {
                sigma_acc: phi_hat.iter().map(|p| p * rho).collect(),
                phi_hat,
                rho,
                theta: ThetaRef::Mode(0),
            })
            .collect()
    })
}

proptest! {
    /// Association weights form a probability simplex for any finite input.
    #[test]
    fn gibbs_weights_form_a_simplex(
        cvs in (1usize..6).prop_flat_map(|k| codevector_set(k, 2)),
        phi in vec_of(2, -10.0..10.0),
        psi in vec_of(1, -10.0..10.0),
        lambda in 0.01f64..0.99,
    ) {
        let model = LocalModel::zeros(1, 2);
        let mut x = psi.clone();
        x.extend_from_slice(&phi);
        let probs = gibbs_probs(&cvs, &x, &phi, |_| &model, lambda, DIV).unwrap();
        for &p in &probs {
            prop_assert!(p >= 0.0);
        }
        let total: f64 = probs.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    /// The mass accumulator stays in (0, 1] under arbitrary update streams:
    /// each step is a convex combination of the old mass and a probability.
    #[test]
    fn rho_stays_in_unit_interval(
        mut cvs in (2usize..5).prop_flat_map(|k| codevector_set(k, 2)),
        stream in prop::collection::vec((vec_of(2, -10.0..10.0), vec_of(1, -10.0..10.0)), 1..40),
        lambda in 0.05f64..0.95,
        beta in 0.01f64..1.0,
    ) {
        let model = LocalModel::zeros(1, 2);
        for (phi, psi) in &stream {
            let mut x = psi.clone();
            x.extend_from_slice(phi);
            oda_update(&mut cvs, &x, phi, |_| &model, lambda, beta, DIV, UpdateOrder::Synchronous)
                .unwrap();
            for cv in &cvs {
                prop_assert!(cv.rho > 0.0 && cv.rho <= 1.0);
            }
        }
    }

    /// On scalar features, every prototype stays inside the smallest interval
    /// containing its start and all observed samples (both accumulators are
    /// identically weighted averages, so their ratio cannot escape the hull).
    #[test]
    fn prototypes_stay_in_observation_hull(
        mut cvs in (1usize..4).prop_flat_map(|k| codevector_set(k, 1)),
        stream in prop::collection::vec((vec_of(1, -5.0..5.0), vec_of(1, -5.0..5.0)), 1..50),
        lambda in 0.05f64..0.95,
        beta in 0.01f64..0.9,
    ) {
        let model = LocalModel::zeros(1, 1);
        let mut lo = cvs.iter().map(|c| c.phi_hat[0]).fold(f64::INFINITY, f64::min);
        let mut hi = cvs.iter().map(|c| c.phi_hat[0]).fold(f64::NEG_INFINITY, f64::max);
        for (phi, psi) in &stream {
            lo = lo.min(phi[0]);
            hi = hi.max(phi[0]);
            let mut x = psi.clone();
            x.extend_from_slice(phi);
            oda_update(&mut cvs, &x, phi, |_| &model, lambda, beta, DIV, UpdateOrder::Synchronous)
                .unwrap();
            for cv in &cvs {
                prop_assert!(cv.phi_hat[0] >= lo - 1e-9 && cv.phi_hat[0] <= hi + 1e-9);
            }
        }
    }

    /// `nearest` returns the argmin of the divergence, with ties resolved to
    /// the lowest index, and is unchanged when every prototype moves so that
    /// all divergences shift by a common constant (argmin property).
    #[test]
    fn nearest_is_argmin_with_lowest_index_ties(
        x in vec_of(3, -10.0..10.0),
        protos in prop::collection::vec(vec_of(3, -10.0..10.0), 1..8),
    ) {
        let idx = DIV.nearest(&x, &protos).unwrap();
        let dists: Vec<f64> = protos.iter().map(|p| DIV.eval(&x, p).unwrap()).collect();
        let best = dists.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!((dists[idx] - best).abs() == 0.0);
        for d in &dists[..idx] {
            prop_assert!(*d > best);
        }
    }

    /// Cell boundaries of the squared-Euclidean quantizer are hyperplanes:
    /// the pairwise comparison agrees in sign with the affine test.
    #[test]
    fn voronoi_boundaries_are_hyperplanes(
        p_i in vec_of(3, -10.0..10.0),
        p_j in vec_of(3, -10.0..10.0),
        phi in vec_of(3, -20.0..20.0),
    ) {
        let (a, b) = separating_hyperplane(&p_i, &p_j);
        let affine: f64 = a.iter().zip(phi.iter()).map(|(u, v)| u * v).sum::<f64>() - b;
        let gap = DIV.eval(&phi, &p_i).unwrap() - DIV.eval(&phi, &p_j).unwrap();
        if gap.abs() > 1e-9 {
            prop_assert_eq!(gap.signum(), affine.signum());
        }
    }

    /// Merging is idempotent: a second pass over an already-merged set
    /// changes nothing.
    #[test]
    fn merge_is_idempotent(
        mut cvs in (1usize..7).prop_flat_map(|k| codevector_set(k, 2)),
        lambda in 0.05f64..0.95,
        eps_n in 0.001f64..5.0,
    ) {
        merge(&mut cvs, lambda, eps_n, DIV, |_| 0).unwrap();
        let once = cvs.clone();
        merge(&mut cvs, lambda, eps_n, DIV, |_| 0).unwrap();
        prop_assert_eq!(cvs, once);
    }

    /// Splitting conserves total mass and never exceeds the cell budget.
    #[test]
    fn split_conserves_mass_within_budget(
        mut cvs in (1usize..6).prop_flat_map(|k| codevector_set(k, 2)),
        delta in 0.0f64..1.0,
        k_max in 1usize..10,
        seed in any::<u64>(),
    ) {
        let k_before = cvs.len();
        let before: f64 = cvs.iter().map(|c| c.rho).sum();
        let mut rng = SplitMix64::new(seed);
        perturb_split(&mut cvs, delta, &mut rng, k_max);
        let after: f64 = cvs.iter().map(|c| c.rho).sum();
        prop_assert!((before - after).abs() < 1e-12);
        // an already-over-budget set is left untouched
        prop_assert!(cvs.len() <= k_max.max(k_before));
    }

    /// The parameter update is exactly one gradient step of the squared
    /// prediction error: compare against central finite differences.
    #[test]
    fn sgd_step_matches_finite_difference_gradient(
        theta in vec_of(6, -3.0..3.0),
        phi in vec_of(3, -3.0..3.0),
        psi in vec_of(2, -3.0..3.0),
        alpha in 0.001f64..0.5,
    ) {
        let before = LocalModel::from_rows(2, 3, theta).unwrap();
        let mut after = before.clone();
        after.sgd_update(&phi, &psi, alpha).unwrap();
        let h = 1e-6;
        for r in 0..2 {
            for c in 0..3 {
                let mut plus = before.clone();
                let mut minus = before.clone();
                bump(&mut plus, r, c, h);
                bump(&mut minus, r, c, -h);
                let grad = (loss(&plus, &phi, &psi) - loss(&minus, &phi, &psi)) / (2.0 * h);
                let step = after.entry(r, c) - before.entry(r, c);
                prop_assert!((step + alpha * grad).abs() <= 1e-5 * (1.0 + grad.abs()));
            }
        }
    }

    /// Hard prediction is invariant under relabeling the cells as long as
    /// each prototype keeps its mode.
    #[test]
    fn hard_prediction_invariant_under_cell_relabeling(
        protos in prop::collection::vec(vec_of(2, -5.0..5.0), 2..6),
        thetas in prop::collection::vec(vec_of(2, -2.0..2.0), 2),
        phi in vec_of(2, -6.0..6.0),
        rot in 0usize..5,
    ) {
        let modes: Vec<LocalModel> =
            thetas.iter().map(|t| LocalModel::from_rows(1, 2, t.clone()).unwrap()).collect();
        let cells: Vec<Cell> = protos
            .iter()
            .enumerate()
            .map(|(i, p)| Cell { phi_hat: p.clone(), mode: i % 2 })
            .collect();
        let mut rotated = cells.clone();
        rotated.rotate_left(rot % cells.len());
        let base = EstimatedHybridModel { modes: modes.clone(), cells, divergence: DIV };
        let relabeled = EstimatedHybridModel { modes, cells: rotated, divergence: DIV };
        let a = base.predict_hard(&phi).unwrap();
        let b = relabeled.predict_hard(&phi).unwrap();
        for (u, v) in a.iter().zip(b.iter()) {
            prop_assert!((u - v).abs() < 1e-12);
        }
    }
}

fn bump(model: &mut LocalModel, r: usize, c: usize, h: f64) {
    let mut rows = model.rows().to_vec();
    rows[r * model.input_dim() + c] += h;
    *model = LocalModel::from_rows(model.output_dim(), model.input_dim(), rows).unwrap();
}

fn loss(model: &LocalModel, phi: &[f64], psi: &[f64]) -> f64 {
    let pred = model.predict(phi).unwrap();
    0.5 * pred.iter().zip(psi.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

/// The slow schedule decays strictly faster than the fast one: their ratio is
/// nonincreasing and falls below 0.1 within the first thousand steps.
#[test]
fn timescale_ratio_is_nonincreasing_and_separates() {
    let alpha = StepSchedule::Harmonic { c: 0.01 };
    let beta = StepSchedule::HarmonicLog { c: 0.9 };
    let mut prev = f64::INFINITY;
    for t in 0..100_000u64 {
        let ratio = beta.value(t) / alpha.value(t);
        assert!(ratio <= prev + 1e-15, "ratio increased at t={t}");
        prev = ratio;
        if t >= 1000 {
            assert!(ratio < 0.1, "ratio {ratio} too large at t={t}");
        }
    }
}

/// The confirmed mode count never shrinks while levels run, and the cell
/// count never exceeds the budget (observed through per-sample records).
#[test]
fn mode_count_nondecreasing_and_cells_bounded() {
    use switchid_core::{Identifier, IdentifierConfig};
    let cfg = IdentifierConfig {
        lambda_max: 0.95,
        lambda_min: 0.3,
        max_iters_per_level: 200,
        k_max: 6,
        ..IdentifierConfig::default()
    };
    let k_max = cfg.k_max;
    let mut id = Identifier::new(cfg).unwrap();
    let mut rng = SplitMix64::new(11);
    let mut source = core::iter::from_fn(move || {
        let r = 8.0 * rng.next_f64() - 4.0;
        let psi = if r < 0.0 { -r } else { 2.0 * r + 1.0 };
        Some((vec![r, 1.0], vec![psi]))
    });
    let mut last_s = 0usize;
    id.run_all_levels(&mut source, |rec| {
        assert!(rec.s_hat >= last_s, "mode count shrank at t={}", rec.t);
        last_s = rec.s_hat;
        assert!(rec.k <= k_max, "cell budget exceeded at t={}", rec.t);
    })
    .unwrap();
}
