use proptest::prelude::*;

use sdgame::dynamics::{Generator, Terminal};
use sdgame::fixtures;
use sdgame::gbsde::{self, SolveOptions};
use sdgame::isaacs::{self, Kind, Mesh, Scheme};
use sdgame::rsde::{self, EnsembleConfig};
use sdgame::timechange::TimeChange;
use sdgame::{Domain, FixedControl};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_lands_in_closed_ball(x in -3.0f64..3.0, y in -3.0f64..3.0, z in -3.0f64..3.0) {
        let ball = Domain::ball(3, 1.0).unwrap();
        let p = ball.project(&[x, y, z]).unwrap();
        prop_assert!(ball.phi(&p.point) >= -1e-9);
        prop_assert!(p.overshoot >= 0.0);
        if ball.phi(&[x, y, z]) >= 0.0 {
            prop_assert_eq!(p.point, vec![x, y, z]);
            prop_assert_eq!(p.overshoot, 0.0);
        }
    }

    #[test]
    fn reflected_paths_stay_inside(x0 in -1.0f64..1.0, seed in any::<u64>()) {
        let spec = fixtures::eigenfixture();
        let e = rsde::simulate(&spec, &FixedControl(0), &FixedControl(0), 0.0, &[x0], &EnsembleConfig::new(8, 50, seed)).unwrap();
        for p in 0..e.paths() {
            for k in 0..=e.steps() {
                prop_assert!(e.state(p, k)[0].abs() <= 1.0 + 1e-9);
                if k > 0 {
                    prop_assert!(e.eta(p, k) >= e.eta(p, k - 1));
                }
            }
        }
    }

    #[test]
    fn minimax_weak_duality(values in prop::collection::vec(-10.0f64..10.0, 1..=25), nu in 1usize..=5) {
        let nv = (values.len() / nu).max(1);
        let table = &values[..nu.min(values.len()) * nv];
        let nu = table.len() / nv;
        let lower = isaacs::minimax(table, nu, nv, Kind::Lower);
        let upper = isaacs::minimax(table, nu, nv, Kind::Upper);
        prop_assert!(lower.value <= upper.value);
    }

    #[test]
    fn explicit_step_is_monotone(bump in 0.0f64..1.0, node in 0usize..26) {
        let spec = fixtures::uv_game();
        let mesh = Mesh::new(&spec.domain, 0.08).unwrap();
        let scheme = Scheme::new(&spec, &mesh, Kind::Lower).unwrap();
        let dt = scheme.cfl_bound(0.9);
        let base: Vec<f64> = mesh.nodes().iter().map(|n| spec.terminal(&n.x)).collect();
        let mut raised = base.clone();
        raised[node % mesh.len()] += bump;
        let (mut a, mut b) = (vec![0.0; mesh.len()], vec![0.0; mesh.len()]);
        scheme.step(0.5, dt, &base, &mut a);
        scheme.step(0.5, dt, &raised, &mut b);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(y >= &(x - 1e-12));
        }
    }

    #[test]
    fn time_change_round_trip(increments in prop::collection::vec(0.0f64..0.5, 2..40)) {
        let count = increments.len() + 1;
        let s: Vec<f64> = (0..count).map(|i| i as f64 / (count - 1) as f64).collect();
        let mut a = vec![0.0];
        for inc in &increments {
            a.push(a.last().unwrap() + inc);
        }
        let tc = TimeChange::build(&s, &a, 513).unwrap();
        prop_assert_eq!(tc.density_identity_error(), 0.0);
        prop_assert!(tc.round_trip_error() <= 1e-9);
        prop_assert!(tc.clock_budget_error(0.5 * (tc.psi_end() - tc.t())) <= 1e-9);
    }

    #[test]
    fn raising_terminal_never_lowers_y(shift in 0.0f64..2.0, x0 in -1.0f64..1.0) {
        let spec = fixtures::drift_reflection();
        let spec = spec.with_costs(Generator { y: -0.5, ..Default::default() }, Generator::constant(1.0), Terminal::Linear { constant: 0.0, gradient: vec![1.0] });
        let e = rsde::simulate(&spec, &FixedControl(0), &FixedControl(0), 0.0, &[x0], &EnsembleConfig::new(1, 40, 0)).unwrap();
        let lower = gbsde::solve_on_ensemble(&e, &spec, &FixedControl(0), &FixedControl(0), &|x| spec.terminal(x), &SolveOptions::default()).unwrap();
        let upper = gbsde::solve_on_ensemble(&e, &spec, &FixedControl(0), &FixedControl(0), &|x| spec.terminal(x) + shift, &SolveOptions::default()).unwrap();
        for k in 0..=e.steps() {
            prop_assert!(upper.y(0, k) >= lower.y(0, k));
        }
    }
}
