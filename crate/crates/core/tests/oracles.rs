mod common;

use nalgebra::{DMatrix, DVector};
use pwl_core::eval::{match_modes, min_cost_assignment, segmentation_agreement};
use pwl_core::identify::{
    assign_weights, identify, objective, refit_params, AffineLaw, Dataset, IdentifyConfig, ModeParams, Weights,
};
use pwl_core::linalg::{numerical_rank, rank_above, singular_values};
use pwl_core::model::{merge_to_lssj, split_by_partition, AffineMode, InitialStates, Partition, PwlSystem};
use pwl_core::realization::{
    build_hankel, find_kn_partition, kalman_ho, kn_realize, markov_from_lssj, partition_hankel, MarkovTable,
    PartitionSearch, RealizationError,
};
use pwl_core::sim::{
    add_noise, concatenate, rk4_step, simulate_ode, simulate_pwl, SimOptions, SwitchingLaw, VectorField,
};
use rand::Rng;

use common::*;

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

#[test]
fn kalman_ho_reproduces_random_markov_tables() {
    let mut rng = rng(11);
    for _ in 0..100 {
        let sys = random_lssj(4, 2, 3, &mut rng);
        let table = MarkovTable::from_lssj(&sys, 10).unwrap();
        let h = build_hankel(&table, 5, 5, 3).unwrap();
        let real = kalman_ho(&h, None).unwrap();
        assert_eq!(real.n(), numerical_rank(&h.entries, None));
        let rebuilt = build_hankel(&MarkovTable::from_lssj(&real, 10).unwrap(), 5, 5, real.x0.len()).unwrap();
        let scale = h.entries.amax();
        assert!((rebuilt.entries - &h.entries).amax() <= 1e-8 * scale);
    }
}

#[test]
fn hankel_rank_is_bounded_by_state_dimension() {
    let mut rng = rng(12);
    for _ in 0..50 {
        let n = rng.random_range(1..=5);
        let sys = random_lssj(n, rng.random_range(1..=3), rng.random_range(1..=4), &mut rng);
        let table = MarkovTable::from_lssj(&sys, 2 * n + 4).unwrap();
        let h = build_hankel(&table, n + 2, n + 2, sys.x0.len()).unwrap();
        assert!(numerical_rank(&h.entries, None) <= n);
    }
}

fn two_mode_system(d0: usize, d1: usize, p: usize, per_mode: usize, rng: &mut impl Rng) -> PwlSystem {
    let m0 = random_stable_lssj(d0, p, per_mode, rng);
    let m1 = random_stable_lssj(d1, p, per_mode, rng);
    PwlSystem::new(vec![m0.to_pwl().mode(0).clone(), m1.to_pwl().mode(0).clone()], p).unwrap()
}

#[test]
fn merge_then_split_recovers_mode_dimensions() {
    let mut rng = rng(13);
    for _ in 0..20 {
        let (d0, d1) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let sys = two_mode_system(d0, d1, 1, 2, &mut rng);
        let merged = merge_to_lssj(&sys).unwrap();
        let switch: Vec<(usize, DVector<f64>)> = merged.x0.iter().cloned().enumerate().collect();
        let partition = Partition::new(vec![vec![0, 1], vec![2, 3]]).unwrap();
        let split = split_by_partition(&merged, &partition, &switch, None).unwrap();
        assert_eq!(split.mode(0).state_dim(), d0);
        assert_eq!(split.mode(1).state_dim(), d1);
        // Same Markov parameters from corresponding initial states.
        for (q, block) in [(0, 0..2), (1, 2..4)] {
            let mode = split.mode(q);
            let states = mode.initial_states.finite().unwrap();
            let lssj = pwl_core::model::Lssj::new(mode.dynamics.clone(), mode.output.clone(), states.to_vec()).unwrap();
            for (k, i) in block.enumerate() {
                let want = markov_from_lssj(&merged, &merged.x0[i], 8).unwrap();
                let got = markov_from_lssj(&lssj, &states[k], 8).unwrap();
                assert!(max_gap(&want, &got) <= 1e-9 * max_abs(&want).max(1.0));
            }
        }
    }
}

#[test]
fn kn_mode_dimensions_equal_block_hankel_ranks() {
    let mut rng = rng(14);
    for _ in 0..10 {
        let sys = two_mode_system(2, 3, 2, 2, &mut rng);
        let merged = merge_to_lssj(&sys).unwrap();
        let h = build_hankel(&MarkovTable::from_lssj(&merged, 12).unwrap(), 6, 6, 4).unwrap();
        let partition = find_kn_partition(&h, 2, 3, None, PartitionSearch::Exhaustive).unwrap();
        assert_eq!(partition.blocks(), &[vec![0, 1], vec![2, 3]]);
        let realized = kn_realize(&h, 2, 3, None, PartitionSearch::Exhaustive).unwrap();
        let smax = singular_values(&h.entries)[0];
        let tol = pwl_core::linalg::default_rank_tol(h.entries.nrows(), h.entries.ncols());
        for (q, block) in partition_hankel(&h, &partition).unwrap().iter().enumerate() {
            assert_eq!(realized.mode(q).state_dim(), rank_above(block, tol * smax));
        }
    }
}

#[test]
fn kn_separates_two_planar_modes() {
    let mut rng = rng(15);
    let sys = two_mode_system(2, 2, 1, 2, &mut rng);
    let merged = merge_to_lssj(&sys).unwrap();
    let h = build_hankel(&MarkovTable::from_lssj(&merged, 10).unwrap(), 5, 5, 4).unwrap();
    let partition = find_kn_partition(&h, 2, 2, None, PartitionSearch::Exhaustive).unwrap();
    assert_eq!(partition.blocks(), &[vec![0, 1], vec![2, 3]]);
    for block in partition_hankel(&h, &partition).unwrap() {
        assert_eq!(numerical_rank(&block, Some(1e-10)), 2);
    }
}

#[test]
fn kn_with_too_few_modes_is_not_found() {
    let mut rng = rng(16);
    let sys = two_mode_system(2, 3, 2, 2, &mut rng);
    let merged = merge_to_lssj(&sys).unwrap();
    let h = build_hankel(&MarkovTable::from_lssj(&merged, 12).unwrap(), 6, 6, 4).unwrap();
    assert_eq!(numerical_rank(&h.entries, None), 5);
    for search in [PartitionSearch::Greedy, PartitionSearch::Exhaustive] {
        assert!(matches!(kn_realize(&h, 1, 2, None, search), Err(RealizationError::NotFound { k: 1, n: 2 })));
    }
}

/// Brute-force minimum of E over all hard assignments.
fn best_hard_assignment(data: &Dataset, params: &ModeParams) -> f64 {
    let (m, k) = (data.len(), params.num_modes());
    let mut labels = vec![0usize; m];
    let mut best = f64::INFINITY;
    loop {
        let e = objective(data, params, &Weights::from_assignments(&labels, k)).unwrap();
        best = best.min(e);
        let mut i = 0;
        loop {
            if i == m {
                return best;
            }
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
    }
}

fn random_dataset(m: usize, n: usize, rng: &mut impl Rng) -> Dataset {
    let states = (0..m).map(|_| normal_vector(n, rng)).collect();
    let derivs = (0..m).map(|_| normal_vector(n, rng)).collect();
    Dataset::new((0..m).map(|i| i as f64).collect(), states, derivs).unwrap()
}

fn random_params(k: usize, n: usize, rng: &mut impl Rng) -> ModeParams {
    ModeParams::new(
        (0..k).map(|_| AffineLaw { matrix: normal_matrix(n, n, rng), offset: normal_vector(n, rng) }).collect(),
    )
    .unwrap()
}

#[test]
fn assignment_matches_exhaustive_enumeration() {
    let mut rng = rng(17);
    for _ in 0..30 {
        let m = rng.random_range(1..=8);
        let k = rng.random_range(1..=3);
        let data = random_dataset(m, 2, &mut rng);
        let params = random_params(k, 2, &mut rng);
        let w = assign_weights(&data, &params);
        let e = objective(&data, &params, &w).unwrap();
        let oracle = best_hard_assignment(&data, &params);
        assert!((e - oracle).abs() <= 1e-12 * oracle.max(1.0), "{e} vs {oracle}");
        // A random soft weighting never does better.
        let soft = DMatrix::from_fn(m, k, |_, _| rng.random_range(0.0..1.0));
        let sums: Vec<f64> = soft.row_iter().map(|r| r.sum()).collect();
        let soft = DMatrix::from_fn(m, k, |i, j| soft[(i, j)] / sums[i]);
        assert!(objective(&data, &params, &Weights::new(soft).unwrap()).unwrap() >= e - 1e-12);
    }
}

#[test]
fn refit_recovers_presegmented_laws() {
    let mut rng = rng(18);
    let truth = random_params(2, 2, &mut rng);
    let (mut states, mut derivs, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..40 {
        let q = i % 2;
        let x = normal_vector(2, &mut rng);
        derivs.push(&truth.modes[q].matrix * &x + &truth.modes[q].offset);
        states.push(x);
        labels.push(q);
    }
    let data = Dataset::new((0..40).map(f64::from).collect(), states, derivs).unwrap();
    let start = random_params(2, 2, &mut rng);
    let fit = refit_params(&data, &Weights::from_assignments(&labels, 2), &start).unwrap();
    for q in 0..2 {
        assert!((fit.params.modes[q].augmented() - truth.modes[q].augmented()).amax() < 1e-10);
    }
}

#[test]
fn single_law_is_recovered_exactly() {
    let mut rng = rng(19);
    let truth = random_params(1, 3, &mut rng);
    let states: Vec<DVector<f64>> = (0..30).map(|_| normal_vector(3, &mut rng)).collect();
    let derivs = states.iter().map(|x| &truth.modes[0].matrix * x + &truth.modes[0].offset).collect();
    let data = Dataset::new((0..30).map(f64::from).collect(), states, derivs).unwrap();
    let result = identify(&data, 1, &IdentifyConfig { restarts: 1, ..Default::default() }).unwrap();
    assert!(result.converged);
    assert!(result.objective < 1e-20);
    assert!(result.trace.len() <= 2, "trace {:?}", result.trace);
    assert!((result.params.modes[0].augmented() - truth.modes[0].augmented()).amax() < 1e-10);
}

#[test]
fn concatenated_pwl_data_fits_generating_parameters() {
    let mut rng = rng(20);
    let (sys, centers) = pwl_core::presets::random_voronoi_pwl(3, 2, &mut rng);
    let law = SwitchingLaw::voronoi(centers).unwrap();
    let runs: Vec<_> = (0..3)
        .map(|_| simulate_pwl(&sys, &law, &normal_vector(2, &mut rng), 0, &SimOptions::new(4.0, 0.02)).unwrap())
        .collect();
    let traj = concatenate(&runs).unwrap();
    let data = traj.to_dataset().unwrap();
    let params = pwl_core::presets::params_of(&sys);
    let w = Weights::from_assignments(traj.mode_labels.as_ref().unwrap(), 3);
    assert!(objective(&data, &params, &w).unwrap() < 1e-12);
}

struct AffineField(AffineMode);

impl VectorField for AffineField {
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        self.0.rhs(x)
    }
}

#[test]
fn exact_flow_agrees_with_fine_rk4() {
    let mut rng = rng(21);
    let a = pwl_core::presets::random_stable_matrix(3, &mut rng);
    let mode = AffineMode::new(
        a,
        normal_vector(3, &mut rng),
        DMatrix::identity(3, 3),
        DVector::zeros(3),
        InitialStates::Unconstrained,
    )
    .unwrap();
    let sys = PwlSystem::new(vec![mode.clone()], 3).unwrap();
    let x0 = normal_vector(3, &mut rng);
    let delta = 0.01;
    let exact = simulate_pwl(&sys, &SwitchingLaw::Schedule(vec![]), &x0, 0, &SimOptions::new(10.0, delta)).unwrap();
    let field = AffineField(mode);
    let mut x = x0.clone();
    let mut worst = (exact.states[0].clone() - &x).amax();
    for i in 1..exact.len() {
        for _ in 0..100 {
            x = rk4_step(&field, &x, delta / 100.0);
        }
        worst = worst.max((&exact.states[i] - &x).amax());
    }
    assert!(worst < 1e-8, "{worst}");
}

#[test]
fn exact_flow_is_consistent_under_grid_refinement() {
    let mut rng = rng(22);
    let sys = random_affine_pwl(&[3], 3, 1, &mut rng);
    let x0 = sys.mode(0).initial_states.finite().unwrap()[0].clone();
    let coarse = simulate_pwl(&sys, &SwitchingLaw::Schedule(vec![]), &x0, 0, &SimOptions::new(5.0, 0.02)).unwrap();
    let fine = simulate_pwl(&sys, &SwitchingLaw::Schedule(vec![]), &x0, 0, &SimOptions::new(5.0, 0.01)).unwrap();
    for (i, x) in coarse.states.iter().enumerate() {
        let y = &fine.states[2 * i];
        assert!((x - y).norm() <= 1e-12 * x.norm().max(1.0), "step {i}: {}", (x - y).norm());
    }
}

#[test]
fn rk4_is_fourth_order() {
    let field = |x: &DVector<f64>| DVector::from_vec(vec![x[1], -x[0] - 0.1 * x[1] * x[1]]);
    let x0 = v(&[1.0, 0.0]);
    let reference = simulate_ode(&field, &x0, 2.0, 1e-4).unwrap();
    let err = |delta: f64| {
        let traj = simulate_ode(&field, &x0, 2.0, delta).unwrap();
        let stride = (delta / 1e-4).round() as usize;
        traj.states.iter().enumerate().map(|(i, x)| (x - &reference.states[i * stride]).amax()).fold(0.0, f64::max)
    };
    let ratio = err(0.1) / err(0.05);
    assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn noise_level_matches_requested_snr() {
    let field = |x: &DVector<f64>| DVector::from_vec(vec![x[1], -x[0]]);
    let traj = simulate_ode(&field, &v(&[1.0, 0.5]), 100.0, 0.01).unwrap();
    assert_eq!(traj.len(), 10_000);
    let noisy = add_noise(&traj, 5.0, 7).unwrap();
    for c in 0..2 {
        let rms = |xs: &[DVector<f64>]| (xs.iter().map(|x| x[c] * x[c]).sum::<f64>() / xs.len() as f64).sqrt();
        let diff: Vec<DVector<f64>> = noisy.states.iter().zip(&traj.states).map(|(a, b)| a - b).collect();
        let ratio = rms(&diff) / rms(&traj.states);
        assert!((ratio - 0.05).abs() < 0.005, "channel {c}: {ratio}");
    }
}

fn brute_force_assignment_cost(cost: &DMatrix<f64>) -> f64 {
    // Bitmask dynamic program over the set of used columns.
    let (r, c) = cost.shape();
    let mut best = vec![f64::INFINITY; 1 << c];
    best[0] = 0.0;
    for row in 0..r {
        let mut next = best.clone(); // leaving the row unmatched
        for (mask, &value) in best.iter().enumerate().filter(|(_, v)| v.is_finite()) {
            for col in (0..c).filter(|&col| mask & (1 << col) == 0) {
                let m = mask | (1 << col);
                next[m] = next[m].min(value + cost[(row, col)]);
            }
        }
        best = next;
    }
    let full = r.min(c);
    (0..1usize << c).filter(|m| m.count_ones() as usize == full).map(|m| best[m]).fold(f64::INFINITY, f64::min)
}

#[test]
fn assignment_is_optimal_small_and_large() {
    let mut rng = rng(23);
    for (r, c) in [(4, 4), (3, 5), (5, 3), (10, 10), (12, 9), (9, 12)] {
        for _ in 0..5 {
            let cost = DMatrix::from_fn(r, c, |_, _| rng.random_range(0.0..10.0));
            let map = min_cost_assignment(&cost);
            let used: Vec<usize> = map.iter().flatten().copied().collect();
            assert_eq!(used.len(), r.min(c));
            let mut dedup = used.clone();
            dedup.sort_unstable();
            dedup.dedup();
            assert_eq!(dedup.len(), used.len());
            let total: f64 = map.iter().enumerate().filter_map(|(i, j)| j.map(|j| cost[(i, j)])).sum();
            assert!((total - brute_force_assignment_cost(&cost)).abs() < 1e-9);
        }
    }
}

#[test]
fn match_modes_is_optimal_for_four_modes() {
    let mut rng = rng(24);
    for _ in 0..20 {
        let truth = random_params(4, 2, &mut rng);
        let est = random_params(4, 2, &mut rng);
        let report = match_modes(&truth, &est).unwrap();
        let cost = DMatrix::from_fn(4, 4, |e, t| (est.modes[e].augmented() - truth.modes[t].augmented()).norm());
        assert!((report.total_error - brute_force_assignment_cost(&cost)).abs() < 1e-9);
    }
}

#[test]
fn independent_labelings_agree_about_half() {
    let mut rng = rng(25);
    let a: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..2)).collect();
    let b: Vec<usize> = (0..10_000).map(|_| rng.random_range(0..2)).collect();
    let agreement = segmentation_agreement(&a, &b).unwrap();
    assert!((0.5..0.52).contains(&agreement), "{agreement}");
}

#[test]
fn pwl_simulation_invariants() {
    let mut rng = rng(26);
    for _ in 0..10 {
        let (sys, centers) = pwl_core::presets::random_voronoi_pwl(4, 2, &mut rng);
        let law = SwitchingLaw::voronoi(centers.clone()).unwrap();
        let opts = SimOptions::new(6.0, 0.01);
        let traj = simulate_pwl(&sys, &law, &normal_vector(2, &mut rng), 0, &opts).unwrap();
        let labels = traj.mode_labels.as_ref().unwrap();
        assert!(traj.switch_times.windows(2).all(|w| w[1] > w[0]));
        let min_dwell = 5.0 * opts.delta;
        for (i, &q) in labels.iter().enumerate() {
            assert_eq!(traj.derivs[i], sys.mode(q).rhs(&traj.states[i]));
            let last_switch = traj.switch_times.iter().copied().filter(|&s| s <= traj.times[i]).fold(0.0, f64::max);
            let suppressed = i > 0 && traj.times[i] - last_switch < min_dwell - 1e-9;
            if !suppressed {
                assert_eq!(q, pwl_core::sim::voronoi_cell(&centers, &traj.states[i]));
            }
        }
    }
}
