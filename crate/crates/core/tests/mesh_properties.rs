use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sapinvit::mesh::{make_grid, Domain, GeometryParams, Mesh, Neighbor, Point2, Side};

fn domain_strategy() -> impl Strategy<Value = Domain> {
    prop_oneof![
        Just(Domain::UnitSquare),
        Just(Domain::Lshape),
        Just(Domain::Dumbbell)
    ]
}

fn random_mesh(domain: Domain, seed: u64, rounds: usize, fraction: f64) -> Vec<Mesh> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mesh = make_grid(domain, &GeometryParams::default()).unwrap();
    let mut seq = vec![mesh.clone()];
    for _ in 0..rounds {
        let flags: Vec<usize> = mesh
            .active_cells()
            .into_iter()
            .filter(|_| rng.gen_bool(fraction))
            .collect();
        mesh = mesh.refine(&flags).unwrap();
        seq.push(mesh.clone());
    }
    seq
}

/// Active cells whose interior contains `p`.
fn cells_at(mesh: &Mesh, p: Point2) -> Vec<usize> {
    mesh.active_cells()
        .into_iter()
        .filter(|&c| {
            let b = mesh.cell_box(c);
            p.x > b.x0 && p.x < b.x1 && p.y > b.y0 && p.y < b.y1
        })
        .collect()
}

/// Points just across `side` at fractions `t` along it.
fn probe(mesh: &Mesh, c: usize, side: Side, t: f64) -> Point2 {
    let b = mesh.cell_box(c);
    let eps = 1e-3 * b.hx().min(b.hy());
    let x = b.x0 + t * b.hx();
    let y = b.y0 + t * b.hy();
    match side {
        Side::Bottom => Point2::new(x, b.y0 - eps),
        Side::Right => Point2::new(b.x1 + eps, y),
        Side::Top => Point2::new(x, b.y1 + eps),
        Side::Left => Point2::new(b.x0 - eps, y),
    }
}

fn check_neighbors(mesh: &Mesh) -> Result<(), TestCaseError> {
    for c in mesh.active_cells() {
        let level = mesh.cell(c).level;
        for side in Side::ALL {
            let lo = cells_at(mesh, probe(mesh, c, side, 0.25));
            let hi = cells_at(mesh, probe(mesh, c, side, 0.75));
            match mesh.neighbor(c, side) {
                Neighbor::Boundary => {
                    prop_assert!(lo.is_empty() && hi.is_empty(), "cell {c} {side:?}");
                }
                Neighbor::Same(n) => {
                    prop_assert_eq!(&lo, &vec![n]);
                    prop_assert_eq!(&hi, &vec![n]);
                    prop_assert_eq!(mesh.cell(n).level, level);
                }
                Neighbor::Coarser(n) => {
                    prop_assert_eq!(&lo, &vec![n]);
                    prop_assert_eq!(&hi, &vec![n]);
                    prop_assert_eq!(mesh.cell(n).level + 1, level);
                }
                Neighbor::Finer([a, b]) => {
                    let mut got = vec![lo[0], hi[0]];
                    got.sort_unstable();
                    let mut want = vec![a, b];
                    want.sort_unstable();
                    prop_assert_eq!(got, want);
                    prop_assert_eq!(mesh.cell(a).level, level + 1);
                }
            }
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn neighbor_table_matches_geometry(
        domain in domain_strategy(),
        seed in any::<u64>(),
        rounds in 1usize..5,
        fraction in 0.05f64..0.5,
    ) {
        let seq = random_mesh(domain, seed, rounds, fraction);
        check_neighbors(seq.last().unwrap())?;
    }

    #[test]
    fn refinement_preserves_area_and_regularity(
        domain in domain_strategy(),
        seed in any::<u64>(),
        rounds in 1usize..6,
        fraction in 0.05f64..0.6,
    ) {
        let params = GeometryParams::default();
        for mesh in random_mesh(domain, seed, rounds, fraction) {
            prop_assert!(mesh.covers_domain(&params));
            prop_assert!(mesh.is_one_irregular());
        }
    }

    #[test]
    fn refined_cells_nest_in_the_input(
        domain in domain_strategy(),
        seed in any::<u64>(),
        fraction in 0.1f64..0.6,
    ) {
        let seq = random_mesh(domain, seed, 3, fraction);
        for pair in seq.windows(2) {
            let (coarse, fine) = (&pair[0], &pair[1]);
            for c in fine.active_cells() {
                let a = fine.ancestor_active_in(c, coarse);
                prop_assert!(a.is_some());
                let (inner, outer) = (fine.cell_box(c), coarse.cell_box(a.unwrap()));
                prop_assert!(inner.x0 >= outer.x0 && inner.x1 <= outer.x1);
                prop_assert!(inner.y0 >= outer.y0 && inner.y1 <= outer.y1);
            }
        }
    }

    #[test]
    fn vertex_keys_follow_coordinates(domain in domain_strategy(), seed in any::<u64>()) {
        let mesh = random_mesh(domain, seed, 3, 0.3).pop().unwrap();
        let mut ids: Vec<usize> = (0..mesh.vertices().len()).collect();
        ids.sort_by_key(|&v| mesh.vertex_key(v));
        for w in ids.windows(2) {
            let (p, q) = (mesh.vertex(w[0]), mesh.vertex(w[1]));
            prop_assert!((p.x, p.y) < (q.x, q.y));
        }
    }
}

#[test]
fn uniform_refinement_quadruples() {
    for domain in [Domain::UnitSquare, Domain::Lshape, Domain::Dumbbell] {
        let mut mesh = random_mesh(domain, 3, 2, 0.3).pop().unwrap();
        for _ in 0..2 {
            let before = mesh.n_active_cells();
            mesh = mesh.refine_uniform();
            assert_eq!(mesh.n_active_cells(), 4 * before);
            assert!(mesh.is_one_irregular());
        }
    }
}

#[test]
fn corner_refinement_keeps_interfaces_graded() {
    // repeatedly refine the cell touching the re-entrant corner
    let mut mesh = make_grid(Domain::Lshape, &GeometryParams::default()).unwrap();
    for _ in 0..8 {
        let corner = mesh
            .active_cells()
            .into_iter()
            .find(|&c| {
                let b = mesh.cell_box(c);
                b.x0 == 0.0 && b.y0 == 0.0
            })
            .unwrap();
        mesh = mesh.refine(&[corner]).unwrap();
        assert!(mesh.is_one_irregular());
    }
    assert!(mesh.level_count() >= 9);
    check_neighbors(&mesh).unwrap();
}
