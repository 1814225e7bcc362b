use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sapinvit::fem::{distribute_dofs, prolongation, FeSpace};
use sapinvit::linalg::{dot, SparseMatrix};
use sapinvit::mesh::{make_grid, Domain, GeometryParams, Mesh};
use sapinvit::oracle::dense_eigenpairs;

fn base(domain: Domain) -> Mesh {
    make_grid(domain, &GeometryParams::default()).unwrap()
}

fn refine_randomly(mesh: &Mesh, rng: &mut ChaCha8Rng, fraction: f64) -> Mesh {
    let flags: Vec<usize> = mesh
        .active_cells()
        .into_iter()
        .filter(|_| rng.gen_bool(fraction))
        .collect();
    mesh.refine(&flags).unwrap()
}

fn quadratic_form(a: &SparseMatrix, v: &[f64]) -> f64 {
    dot(v, &a.spmv(v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn prolongation_preserves_energy_and_mass(
        seed in any::<u64>(),
        lshape in any::<bool>(),
        fraction in 0.1f64..0.7,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let domain = if lshape { Domain::Lshape } else { Domain::UnitSquare };
        let coarse_mesh = refine_randomly(&base(domain).refine_global(2), &mut rng, fraction);
        let fine_mesh = refine_randomly(&coarse_mesh, &mut rng, fraction);
        let coarse = FeSpace::new(Arc::new(coarse_mesh));
        let fine = FeSpace::new(Arc::new(fine_mesh));
        let p = fine.prolongation_from(&coarse).unwrap();
        for _ in 0..3 {
            let v: Vec<f64> = (0..coarse.n_free()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let pv = p.spmv(&v).unwrap();
            for (f, c) in [(fine.stiffness(), coarse.stiffness()), (fine.mass(), coarse.mass())] {
                let (ef, ec) = (quadratic_form(f, &pv), quadratic_form(c, &v));
                prop_assert!((ef - ec).abs() <= 1e-12 * ec, "{ef} vs {ec}");
            }
        }
    }

    #[test]
    fn full_prolongation_rows_sum_to_one(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coarse_mesh = refine_randomly(&base(Domain::Dumbbell), &mut rng, 0.4);
        let fine_mesh = refine_randomly(&coarse_mesh, &mut rng, 0.4);
        let coarse = distribute_dofs(Arc::new(coarse_mesh));
        let fine = distribute_dofs(Arc::new(fine_mesh));
        let p = prolongation(&coarse, &fine).unwrap();
        for i in 0..p.nrows() {
            let s: f64 = p.row(i).map(|(_, w)| w).sum();
            prop_assert!((s - 1.0).abs() <= 1e-14);
        }
    }

    #[test]
    fn system_matrices_are_symmetric_positive_definite(seed in any::<u64>(), domain in 0usize..3) {
        let domain = [Domain::UnitSquare, Domain::Lshape, Domain::Dumbbell][domain];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = if domain == Domain::Dumbbell { base(domain) } else { base(domain).refine_global(2) };
        let mesh = refine_randomly(&start, &mut rng, 0.3);
        let space = FeSpace::new(Arc::new(mesh));
        prop_assume!(space.n_free() > 0 && space.n_free() <= 600);
        for m in [space.stiffness(), space.mass()] {
            prop_assert!(m.symmetry_defect() <= 1e-14);
        }
        let (values, _) = dense_eigenpairs(space.mass(), &SparseMatrix::identity(space.n_free())).unwrap();
        prop_assert!(values[0] > 0.0);
        let (values, _) = dense_eigenpairs(space.stiffness(), space.mass()).unwrap();
        prop_assert!(values[0] > 0.0);
    }
}

#[test]
fn uniform_square_stays_above_two_pi_squared() {
    let exact = 2.0 * PI * PI;
    let mut previous = f64::INFINITY;
    for n in 1..=5 {
        let space = FeSpace::new(Arc::new(base(Domain::UnitSquare).refine_global(n)));
        let (values, _) = dense_eigenpairs(space.stiffness(), space.mass()).unwrap();
        assert!(values[0] >= exact, "level {n}: {}", values[0]);
        assert!(values[0] < previous);
        previous = values[0];
    }
}

#[test]
fn matrix_market_roundtrip_counts() {
    let space = FeSpace::new(Arc::new(base(Domain::Lshape).refine_global(2)));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.mtx");
    space.stiffness().write_matrix_market(&path).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    let header: Vec<usize> = text
        .lines()
        .nth(1)
        .unwrap()
        .split_whitespace()
        .map(|t| t.parse().unwrap())
        .collect();
    let n = space.n_free();
    assert_eq!(header, vec![n, n, space.stiffness().nnz()]);
    assert_eq!(text.lines().count(), 2 + space.stiffness().nnz());
}
