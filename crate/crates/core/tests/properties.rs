use nalgebra::DVector;
use proptest::prelude::*;

use teleop_core::channel::{DelayChannel, LinkConfig, LinkEvent};
use teleop_core::fic::{FicParams, Phase, TaskFic};
use teleop_core::planner::{PlannerParams, PlannerState};
use teleop_core::plant::{
    bond_force, contact_forces, step_dynamics, BondState, Obstacle, PlantModel, PlantState, Shape,
    TwoLinkParams,
};
use teleop_core::teleop::{master_force, replica_torque, MasterController, TeleopMode};
use teleop_core::Vec3;

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn arm() -> PlantModel {
    PlantModel::TwoLink(TwoLinkParams::default())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn planner_velocity_and_divergence_accel_limits(
        target in vec3(0.5),
        omega in 0.5f64..10.0,
        v_d in 0.01f64..0.5,
        retarget in vec3(0.5),
    ) {
        let params = PlannerParams::new(omega, v_d).unwrap();
        let mut st = PlannerState::new(Vec3::zeros(), &params);
        st.set_target(&params, target, v_d).unwrap();
        for k in 0..4000 {
            if k == 2000 {
                st.set_target(&params, retarget, v_d).unwrap();
            }
            let x_t = if k < 2000 { target } else { retarget };
            let step = st.step(&params, x_t, 1e-3).unwrap();
            let cap = st.a_cap();
            for i in 0..3 {
                prop_assert!(st.velocity()[i].abs() <= v_d);
                if step.phases[i] == Phase::Divergence {
                    prop_assert!(step.drive[i].abs() <= cap);
                }
            }
        }
    }

    #[test]
    fn planner_hold_is_a_fixed_point(x in vec3(1.0), omega in 0.5f64..10.0) {
        let params = PlannerParams::new(omega, 0.2).unwrap();
        let mut st = PlannerState::new(x, &params);
        for _ in 0..100 {
            st.step(&params, x, 1e-3).unwrap();
        }
        prop_assert_eq!(st.setpoint(), x);
        prop_assert_eq!(st.velocity(), Vec3::zeros());
    }

    #[test]
    fn haptic_term_is_linear_in_replica_force(
        x_m in vec3(0.1),
        f_r in vec3(50.0),
        k_h in 0.0f64..1.0,
    ) {
        let mut fic = TaskFic::new(FicParams::master_default());
        let f = master_force(&x_m, &f_r, k_h, &mut fic).unwrap();
        let mut fic0 = TaskFic::new(FicParams::master_default());
        let f0 = master_force(&x_m, &Vec3::zeros(), k_h, &mut fic0).unwrap();
        prop_assert_eq!(f.haptic, f_r * k_h);
        prop_assert_eq!(f.boundary, f0.boundary);
    }

    #[test]
    fn replica_task_force_is_saturated(
        errs in proptest::collection::vec(vec3(1.0), 1..50),
        q in (-3.0f64..3.0, -3.0f64..3.0),
    ) {
        let model = arm();
        let q = DVector::from_vec(vec![q.0, q.1]);
        let q_dot = DVector::zeros(2);
        let x_r = model.forward_kinematics(&q);
        let mut fic = TaskFic::new(FicParams::replica_default());
        for e in errs {
            let out = replica_torque(&q, &q_dot, &(x_r + e), &model, &mut fic).unwrap();
            for i in 0..3 {
                prop_assert!(out.force[i].abs() < 20.0);
            }
        }
    }

    #[test]
    fn offset_mode_tracks_master_without_lag(xs in proptest::collection::vec(vec3(0.05), 1..50)) {
        let mut m = MasterController::new(FicParams::master_default(), 1.0);
        for x in xs {
            let out = m.update(x, 0.5, TeleopMode::Offset, &Vec3::zeros(), 1e-3).unwrap();
            prop_assert_eq!(out.x_prime_d, x);
        }
    }

    #[test]
    fn mass_matrix_is_symmetric_positive_definite(q1 in -6.0f64..6.0, q2 in -6.0f64..6.0) {
        let m = arm().dynamics_terms(&DVector::from_vec(vec![q1, q2]), &DVector::zeros(2)).mass;
        prop_assert_eq!(m[(0, 1)], m[(1, 0)]);
        let eig = m.symmetric_eigenvalues();
        prop_assert!(eig.iter().all(|l| *l > 0.0), "eigenvalues {:?}", eig);
    }

    #[test]
    fn jacobian_matches_finite_differences(q1 in -6.0f64..6.0, q2 in -6.0f64..6.0) {
        let model = arm();
        let q = DVector::from_vec(vec![q1, q2]);
        let j = model.jacobian(&q);
        let h = 1e-6;
        for c in 0..2 {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[c] += h;
            qm[c] -= h;
            let fd = (model.forward_kinematics(&qp) - model.forward_kinematics(&qm)) / (2.0 * h);
            let col = Vec3::new(j[(0, c)], j[(1, c)], j[(2, c)]);
            prop_assert!((col - fd).norm() <= 1e-6 * col.norm().max(1e-3));
        }
    }

    #[test]
    fn free_plant_energy_does_not_grow(
        q in (-3.0f64..3.0, -3.0f64..3.0),
        qd in (-2.0f64..2.0, -2.0f64..2.0),
    ) {
        let model = PlantModel::TwoLink(TwoLinkParams { gravity: 0.0, ..TwoLinkParams::default() });
        let mut st = PlantState::at_rest(DVector::from_vec(vec![q.0, q.1]));
        st.q_dot = DVector::from_vec(vec![qd.0, qd.1]);
        let energy = |s: &PlantState| model.kinetic_energy(&s.q, &s.q_dot);
        let e0 = energy(&st);
        let tau = DVector::zeros(2);
        for _ in 0..2000 {
            st = step_dynamics(&model, &st, &tau, &Vec3::zeros(), 1e-3).unwrap();
            // first-order integrator tolerance
            prop_assert!(energy(&st) <= e0 * 1.01 + 1e-12);
        }
    }

    #[test]
    fn contact_never_pulls(x in vec3(0.2), v in vec3(2.0)) {
        let obstacles = [
            Obstacle::new(Shape::Box { center: Vec3::new(0.0, 0.1, 0.0), half_extents: Vec3::new(0.02, 0.02, 0.05) }),
            Obstacle::new(Shape::HalfPlane { point: Vec3::new(0.0, -0.05, 0.0), normal: Vec3::new(0.0, 1.0, 0.0) }),
        ];
        for o in &obstacles {
            let f = o.force(&x, &v);
            match o.penetration(&x) {
                Some((_, n)) => prop_assert!(f.dot(&n) >= 0.0),
                None => prop_assert_eq!(f, Vec3::zeros()),
            }
        }
        let total = contact_forces(&x, &v, &obstacles);
        prop_assert!(total.iter().all(|c| c.is_finite()));
    }

    #[test]
    fn bond_failure_is_irreversible(path in proptest::collection::vec(vec3(0.01), 1..200)) {
        let mut bond = BondState::attached_at(Vec3::zeros(), 5000.0, 15.0);
        let mut broken = false;
        for x in path {
            let (f, next) = bond_force(&x, &bond);
            if broken {
                prop_assert!(!next.attached);
                prop_assert_eq!(f, Vec3::zeros());
            }
            broken |= !next.attached;
            bond = next;
        }
    }

    #[test]
    fn plant_steps_are_deterministic(
        q in (-3.0f64..3.0, -3.0f64..3.0),
        tau in (-5.0f64..5.0, -5.0f64..5.0),
        f in vec3(10.0),
    ) {
        let model = arm();
        let st = PlantState::at_rest(DVector::from_vec(vec![q.0, q.1]));
        let tau = DVector::from_vec(vec![tau.0, tau.1]);
        let a = step_dynamics(&model, &st, &tau, &f, 1e-3).unwrap();
        let b = step_dynamics(&model, &st, &tau, &f, 1e-3).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn channel_invariants(
        delay in 0.0f64..0.3,
        jitter in 0.0f64..0.05,
        drop_prob in 0.0f64..0.5,
        ordered in any::<bool>(),
        seed in any::<u64>(),
        outage in (0.2f64..0.6, 0.0f64..0.3),
    ) {
        let cfg = LinkConfig { delay, jitter, drop_prob, ordered, seed: None };
        let run = || {
            let mut ch = DelayChannel::new(cfg, seed).unwrap();
            ch.set_link_state(LinkEvent::DisconnectAt(outage.0)).unwrap();
            ch.set_link_state(LinkEvent::ReconnectAt(outage.0 + outage.1)).unwrap();
            let mut delivered = Vec::new();
            for k in 0..=1500u32 {
                let t = k as f64 * 1e-3;
                if k < 1000 {
                    ch.send(k, t);
                }
                for env in ch.poll(t) {
                    delivered.push((env.seq, env.t_send, env.t_deliver, t));
                }
            }
            (delivered, ch.stats())
        };
        let (delivered, stats) = run();
        for &(_, t_send, t_deliver, t_poll) in &delivered {
            prop_assert!(t_deliver - t_send >= delay);
            prop_assert!(t_poll >= t_deliver && t_poll - t_deliver < 1e-3 + 1e-12);
        }
        if ordered {
            prop_assert!(delivered.windows(2).all(|w| w[0].0 < w[1].0));
        }
        prop_assert!(stats.reconciles());
        prop_assert_eq!(stats.in_flight, 0);
        prop_assert_eq!(stats.sent, 1000);
        let again = run();
        prop_assert_eq!(&delivered, &again.0);
        prop_assert_eq!(stats, again.1);
    }
}
