use proptest::prelude::*;

use sapinvit::adaptivity::{
    a_pinvit, doerfler_mark, run_observed, sa_pinvit, AdaptiveConfig, EstimateWith, LevelRecord,
    Problem, RunHistory,
};
use sapinvit::linalg::PrecondSpec;
use sapinvit::mesh::Domain;
use sapinvit::Error;

fn without_timings(h: &RunHistory) -> Vec<LevelRecord> {
    h.records
        .iter()
        .map(|r| LevelRecord {
            t_setup_s: 0.0,
            t_solve_s: 0.0,
            t_estimate_s: 0.0,
            t_mark_s: 0.0,
            t_refine_s: 0.0,
            ..r.clone()
        })
        .collect()
}

fn lshape(levels: usize, r: usize) -> AdaptiveConfig {
    AdaptiveConfig {
        theta: 0.5,
        max_levels: levels,
        r,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn doerfler_marks_a_minimal_bulk(
        eta in prop::collection::vec(0.0f64..10.0, 1..80),
        theta in 0.01f64..=1.0,
    ) {
        let cells: Vec<usize> = (0..eta.len()).map(|i| 3 * i + 1).collect();
        let m = doerfler_mark(&cells, &eta, theta).unwrap();
        let total: f64 = eta.iter().sum();
        prop_assume!(total > 0.0);
        let value = |c: usize| eta[(c - 1) / 3];
        let marked: f64 = m.cells.iter().map(|&c| value(c)).sum();
        prop_assert!(marked >= theta * total * (1.0 - 1e-12));
        // dropping the smallest marked indicator loses the bulk
        let smallest = m.cells.iter().map(|&c| value(c)).fold(f64::INFINITY, f64::min);
        prop_assert!(marked - smallest < theta * total);
        // greedy order
        for w in m.cells.windows(2) {
            prop_assert!(value(w[0]) >= value(w[1]));
        }
    }
}

#[test]
fn eigenvalues_decrease_on_nested_meshes() {
    let h = a_pinvit(&Problem::new(Domain::Lshape), &lshape(7, 2)).unwrap();
    for w in h.records.windows(2) {
        for (a, b) in w[0].eigenvalues.iter().zip(&w[1].eigenvalues) {
            assert!(*b <= a + 1e-10 * a, "{a} -> {b}");
        }
        assert!(w[1].n_cells > w[0].n_cells);
    }
    assert!(h.final_converged);
}

#[test]
fn degenerate_smoothed_run_matches_reference_run() {
    let config = AdaptiveConfig {
        p_int: PrecondSpec::gmg(1),
        max_iter_int: 500,
        ..lshape(6, 2)
    };
    let problem = Problem::new(Domain::Lshape);
    let a = a_pinvit(&problem, &config).unwrap();
    let sa = sa_pinvit(&problem, &config).unwrap();
    assert_eq!(without_timings(&a), without_timings(&sa));
    assert_eq!(a.final_block.vectors, sa.final_block.vectors);
}

#[test]
fn identical_seeds_give_identical_runs() {
    let problem = Problem::new(Domain::Dumbbell);
    let config = AdaptiveConfig {
        estimate_with: EstimateWith::SumOverBlock,
        ..lshape(4, 3)
    };
    let first = sa_pinvit(&problem, &config).unwrap();
    let second = sa_pinvit(&problem, &config).unwrap();
    assert_eq!(without_timings(&first), without_timings(&second));
    let other = sa_pinvit(&problem, &AdaptiveConfig { seed: 7, ..config }).unwrap();
    assert_ne!(
        first.records[0].eigenvalues, other.records[0].eigenvalues,
        "the seed should reach the starting block"
    );
}

#[test]
fn smoothed_run_tracks_reference_mesh() {
    let problem = Problem::new(Domain::Lshape);
    let a = a_pinvit(&problem, &lshape(8, 1)).unwrap();
    let sa = sa_pinvit(&problem, &lshape(8, 1)).unwrap();
    let (ca, cs) = (
        a.final_record().n_cells as f64,
        sa.final_record().n_cells as f64,
    );
    assert!((ca - cs).abs() <= 0.05 * ca, "{ca} vs {cs}");
    let (la, ls) = (
        a.final_record().eigenvalues[0],
        sa.final_record().eigenvalues[0],
    );
    assert!((la - ls).abs() <= 1e-3 * la);
    // intermediate levels take a single step
    for r in &sa.records[1..sa.records.len() - 1] {
        assert_eq!(r.solver_iters, 1);
    }
}

#[test]
fn observer_sees_every_level() {
    let mut seen = Vec::new();
    let h = run_observed(
        &Problem::new(Domain::UnitSquare),
        &AdaptiveConfig {
            theta: 1.0,
            max_levels: 3,
            ..Default::default()
        },
        true,
        &mut |view| {
            assert_eq!(view.estimates.cells.len(), view.record.n_cells);
            assert_eq!(view.space.n_free(), view.record.n_dofs);
            seen.push(view.record.level);
            Ok(())
        },
    )
    .unwrap();
    assert_eq!(seen, vec![1, 2, 3]);
    assert_eq!(h.records.len(), 3);
}

#[test]
fn observer_errors_abort_the_run() {
    let r = run_observed(
        &Problem::new(Domain::UnitSquare),
        &AdaptiveConfig::default(),
        false,
        &mut |_| Err(Error::InvalidConfig("stop".into())),
    );
    assert!(r.is_err());
}

#[test]
fn block_larger_than_the_space_is_rejected() {
    let problem = Problem::new(Domain::UnitSquare).with_initial_refinements(1);
    let err = a_pinvit(&problem, &lshape(2, 3)).unwrap_err();
    assert!(matches!(err, Error::InvalidConfig(_)), "{err}");
}

#[test]
fn single_level_run() {
    let h = sa_pinvit(&Problem::new(Domain::Lshape), &lshape(1, 1)).unwrap();
    assert_eq!(h.records.len(), 1);
    assert_eq!(h.records[0].t_refine_s, 0.0);
    assert!(h.final_converged);
}

#[test]
fn csv_has_one_row_per_level() {
    let h = a_pinvit(&Problem::new(Domain::Lshape), &lshape(3, 2)).unwrap();
    let csv = h.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], RunHistory::csv_header(2));
    assert_eq!(lines.len(), 4);
    let columns = lines[0].split(',').count();
    assert!(lines.iter().all(|l| l.split(',').count() == columns));
}
