use sdgame::fixtures;
use sdgame::game::{self, DppConfig};
use sdgame::isaacs::{self, Kind, Mesh, NodeKind, SchemeParams};

#[test]
fn uv_game_dpp_matches_pde_nodewise() {
    let spec = fixtures::uv_game();
    for kind in [Kind::Lower, Kind::Upper] {
        let pde = isaacs::solve(&spec, kind, &SchemeParams::new(0.01)).unwrap();
        let dpp = game::dpp_value(&spec, kind, pde.mesh().clone(), &DppConfig::new(1.0 / 6400.0, 1)).unwrap();
        let mut worst: f64 = 0.0;
        for (l, &t) in pde.times().iter().enumerate() {
            for (i, node) in pde.mesh().nodes().iter().enumerate() {
                worst = worst.max((pde.layer(l)[i] - dpp.value_at(t, &node.x)).abs());
            }
        }
        assert!(worst <= 0.02, "{kind:?}: {worst}");
    }
}

#[test]
fn eigen_error_shrinks_under_refinement() {
    let spec = fixtures::eigenfixture();
    let error = |h: f64, layers: usize| {
        let grid = isaacs::solve(&spec, Kind::Lower, &SchemeParams::new(h).with_layers(layers)).unwrap();
        grid.mesh()
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, n)| (grid.layer(0)[i] - fixtures::eigen_solution(0.0, n.x[0])).abs())
            .fold(0.0, f64::max)
    };
    let coarse = error(0.04, 100);
    let fine = error(0.02, 400);
    assert!(fine < coarse, "{fine} vs {coarse}");
}

/// Largest interior and Neumann residuals on layers with `t <= t_max`.
fn residuals(h: f64, t_max: f64) -> (f64, f64) {
    let spec = fixtures::eigenfixture();
    let grid = isaacs::solve(&spec, Kind::Lower, &SchemeParams::new(h)).unwrap();
    let r = isaacs::viscosity_residual(&grid, &spec).unwrap();
    let m = grid.mesh().len();
    let (mut interior, mut neumann) = (0.0f64, 0.0f64);
    for (idx, v) in r.interior.iter().enumerate() {
        if grid.times()[idx / m] > t_max {
            continue;
        }
        match grid.mesh().node(idx % m).kind {
            NodeKind::Interior => interior = interior.max(v.abs()),
            NodeKind::Boundary => neumann = neumann.max(r.neumann[idx].abs()),
        }
    }
    (interior, neumann)
}

#[test]
fn solved_grid_residuals_shrink_with_h() {
    // The wall nodes start from a one-sided stencil, so the first layers
    // below T carry a short transient; look past it.
    let coarse = residuals(0.04, 0.9);
    let fine = residuals(0.02, 0.9);
    assert!(fine.0 < 0.05 && fine.1 < 0.05, "{fine:?}");
    assert!(fine.0 < coarse.0 && fine.1 < coarse.1, "{fine:?} vs {coarse:?}");
}

#[test]
fn separable_game_lower_equals_upper() {
    let spec = fixtures::separable_game();
    let mesh = Mesh::new(&spec.domain, 0.1).unwrap();
    let params = SchemeParams::new(0.1);
    let lower = isaacs::solve_on(&spec, Kind::Lower, mesh.clone(), &params).unwrap();
    let upper = isaacs::solve_on(&spec, Kind::Upper, mesh, &params).unwrap();
    let gap = lower.values().iter().zip(upper.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(gap < 1e-12, "{gap}");
}

#[test]
fn drift_reflection_dpp_is_exact() {
    let spec = fixtures::drift_reflection();
    let mesh = Mesh::new(&spec.domain, 0.05).unwrap();
    let w = game::dpp_value(&spec, Kind::Lower, mesh, &DppConfig::new(0.05, 1)).unwrap();
    for (l, &t) in w.times().iter().enumerate() {
        for (i, node) in w.mesh().nodes().iter().enumerate() {
            let exact = (node.x[0] + spec.horizon - t - 1.0).max(0.0);
            assert!((w.layer(l)[i] - exact).abs() < 1e-9, "t={t} x={:?}", node.x);
        }
    }
}
