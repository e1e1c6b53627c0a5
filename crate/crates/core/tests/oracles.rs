mod common;

use adaptive_mpcc::easa::{beta, eta, EasaParams};
use adaptive_mpcc::global_path::{astar, is_traversable};
use adaptive_mpcc::grid_esdf::map_file::{load_map, save_map};
use adaptive_mpcc::grid_esdf::{build_esdf, VoxelGrid};
use adaptive_mpcc::linear_system::{batch_map, IntegratorModel};
use adaptive_mpcc::{PlannerError, Vec3};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn grid_from(dims: [usize; 3], res: f64, cells: &[bool]) -> VoxelGrid {
    let mut grid = VoxelGrid::new(Vec3::new(0.3, -1.2, 0.0), res, dims).unwrap();
    let g = *grid.geometry();
    for i in 0..g.cell_count() {
        grid.set_occupied(g.cell_of(i), cells[i % cells.len()]);
    }
    grid
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn esdf_matches_exhaustive_search(
        dims in prop::array::uniform3(1usize..10),
        res in 0.05f64..2.0,
        cells in prop::collection::vec(prop::bool::weighted(0.2), 1..64),
    ) {
        let grid = grid_from(dims, res, &cells);
        let fast = build_esdf(&grid);
        let exact = common::brute_force_esdf(&grid);
        prop_assert_eq!(fast.distances(), exact.as_slice());
    }

    #[test]
    fn astar_cost_matches_dijkstra(
        nx in 3usize..16,
        ny in 3usize..16,
        nz in 1usize..3,
        cells in prop::collection::vec(prop::bool::weighted(0.3), 1..97),
        clearance_cells in 0usize..3,
        s in any::<prop::sample::Index>(),
        t in any::<prop::sample::Index>(),
    ) {
        let grid = grid_from([nx, ny, nz], 0.25, &cells);
        let esdf = build_esdf(&grid);
        let clearance = 0.25 * clearance_cells as f64 * 0.6;
        let g = *grid.geometry();
        let open: Vec<usize> = (0..g.cell_count()).filter(|&i| is_traversable(&grid, &esdf, i, clearance)).collect();
        prop_assume!(open.len() >= 2);
        let (s, t) = (*s.get(&open), *t.get(&open));
        let found = astar(&grid, &esdf, &g.cell_center(g.cell_of(s)), &g.cell_center(g.cell_of(t)), clearance);
        match (common::dijkstra_cost(&grid, &esdf, s, t, clearance), found) {
            (Some(cost), Ok(path)) => {
                prop_assert!((cost - path.cost).abs() < 1e-9);
                prop_assert_eq!(path.cells.first(), Some(&g.cell_of(s)));
                prop_assert_eq!(path.cells.last(), Some(&g.cell_of(t)));
                for c in &path.cells {
                    prop_assert!(is_traversable(&grid, &esdf, g.linear_index(*c), clearance));
                }
            }
            (None, Err(PlannerError::Unreachable)) => {}
            (e, f) => prop_assert!(false, "dijkstra {:?}, astar {:?}", e, f.map(|p| p.cost)),
        }
    }

    #[test]
    fn batch_map_matches_rollout(
        order in prop::sample::select(vec![1usize, 3]),
        dt in 0.01f64..1.0,
        inputs in prop::collection::vec(-3.0f64..3.0, 1..=40),
        s0 in prop::array::uniform3(-3.0f64..3.0),
    ) {
        let model = IntegratorModel::new(order, dt, inputs.len()).unwrap();
        let maps = batch_map(&model);
        let s0 = &s0[..order];
        let dense = maps.input_matrix() * DVector::from_column_slice(&inputs)
            + maps.initial_state_matrix() * DVector::from_column_slice(s0);
        let rolled = model.rollout(s0, &inputs).unwrap();
        let applied = maps.apply(s0, &inputs).unwrap();
        for ((x, y), z) in dense.iter().zip(rolled.as_slice()).zip(applied.as_slice()) {
            prop_assert!((x - y).abs() < 1e-10);
            prop_assert!((z - y).abs() < 1e-10);
        }
    }

    #[test]
    fn eta_is_symmetric_about_one(b in -1.0f64..1.0, alpha in 0.1f64..10.0) {
        let p = EasaParams { alpha, ..Default::default() };
        prop_assert!((eta(b, &p) + eta(-b, &p) - 2.0).abs() < 1e-12);
        prop_assert!(eta(b.abs(), &p) <= 1.0 && eta(-b.abs(), &p) >= 1.0);
    }

    #[test]
    fn beta_ignores_rotation_and_scale(seed in any::<u64>(), sv in 0.1f64..10.0, sg in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = EasaParams::default();
        let v = common::random_vec(&mut rng, 3.0) + Vec3::new(0.2, 0.0, 0.0);
        let g = common::random_vec(&mut rng, 1.0) + Vec3::new(0.0, 0.1, 0.0);
        let r = common::random_rotation(&mut rng);
        let b = beta(&v, &g, &p);
        prop_assert!((-1.0..=1.0).contains(&b));
        prop_assert!((beta(&(r * v), &(r * g), &p) - b).abs() < 1e-12);
        prop_assert!((beta(&(v * sv), &(g * sg), &p) - b).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn map_file_round_trip(
        dims in prop::array::uniform3(1usize..12),
        res in 0.01f64..1.0,
        cells in prop::collection::vec(any::<bool>(), 1..50),
    ) {
        let grid = grid_from(dims, res, &cells);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.txt");
        save_map(&grid, &path).unwrap();
        prop_assert_eq!(load_map(&path).unwrap(), grid);
    }
}

#[test]
fn eta_decreases_over_full_range() {
    let p = EasaParams::default();
    let samples: Vec<f64> = (0..=400).map(|i| eta(-1.0 + i as f64 / 200.0, &p)).collect();
    assert_eq!(eta(0.0, &p), 1.0);
    assert!(samples.windows(2).all(|w| w[1] < w[0]));
}
