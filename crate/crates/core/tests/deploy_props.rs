mod common;

use common::models::{backup_case, exhaustive_feasible, integrator};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stlnpc::deploy::{backup_search, mpc_step, theorem1_bound, BackupConfig, Status, Task};
use stlnpc::stl::eval_boolean;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn bound_is_monotone(m in 1usize..3, t in 1usize..4, l in 2usize..7, delta in 0.001f64..0.5, width in 0.5f64..4.0) {
        let lo = vec![-width / 2.0; m];
        let hi = vec![width / 2.0; m];
        let b = theorem1_bound(m, t, l, delta, &lo, &hi).unwrap();
        prop_assert!((0.0..=1.0).contains(&b));
        prop_assert!(theorem1_bound(m, t, l + 1, delta, &lo, &hi).unwrap() >= b);
        prop_assert!(theorem1_bound(m, t, l, delta * 1.5, &lo, &hi).unwrap() >= b);
        prop_assert!(theorem1_bound(m, t + 1, l, delta, &lo, &hi).unwrap() <= b);
        let wide_hi: Vec<f64> = hi.iter().map(|v| v + 1.0).collect();
        prop_assert!(theorem1_bound(m, t, l, delta, &lo, &wide_hi).unwrap() <= b);
    }

    #[test]
    fn backup_invariants(seed in any::<u64>()) {
        let case = backup_case(&mut ChaCha8Rng::seed_from_u64(seed), 3);
        let task = Task { system: &case.system, phi: &case.phi, phi_safe: &case.phi_safe };
        let cfg = BackupConfig { levels: 3, max_prefix: 3, batch: 5 };
        let r = backup_search(&case.net, &task, &[case.x0], &cfg).unwrap();
        prop_assert!(r.action[0] >= -1.0 && r.action[0] <= 1.0);
        prop_assert_eq!(r.predicted.len(), 4);
        match r.status {
            Status::BackupFullStl => prop_assert!(r.robustness > 0.0 && !r.violation),
            Status::BackupSafetyOnly => prop_assert!(eval_boolean(&r.predicted, 0, &case.phi_safe).unwrap()),
            Status::BackupLongestSafePrefix => prop_assert!(r.violation),
            s => prop_assert!(false, "unexpected status {:?}", s),
        }
        prop_assert_eq!(r.status == Status::BackupFullStl, exhaustive_feasible(&case, 3, 3));
        let step = mpc_step(&case.net, &task, &[case.x0], Some(&cfg)).unwrap();
        prop_assert!(step.action[0] >= -1.0 && step.action[0] <= 1.0);
    }

    #[test]
    fn shorter_prefix_wins(seed in any::<u64>()) {
        // When a one-step prefix already satisfies the formula, the result
        // matches a search limited to one-step prefixes.
        let case = backup_case(&mut ChaCha8Rng::seed_from_u64(seed), 3);
        let task = Task { system: &case.system, phi: &case.phi, phi_safe: &case.phi_safe };
        let one = backup_search(&case.net, &task, &[case.x0], &BackupConfig { levels: 3, max_prefix: 1, batch: 8 }).unwrap();
        let all = backup_search(&case.net, &task, &[case.x0], &BackupConfig { levels: 3, max_prefix: 3, batch: 8 }).unwrap();
        if one.status == Status::BackupFullStl {
            prop_assert_eq!(all.action, one.action);
            prop_assert_eq!(all.robustness, one.robustness);
        }
    }
}

#[test]
fn bound_rejects_bad_parameters() {
    assert!(theorem1_bound(1, 1, 1, 0.1, &[-1.0], &[1.0]).is_err());
    assert!(theorem1_bound(1, 1, 3, 0.0, &[-1.0], &[1.0]).is_err());
    assert!(theorem1_bound(1, 1, 3, 0.1, &[1.0], &[-1.0]).is_err());
    assert!(theorem1_bound(2, 1, 3, 0.1, &[-1.0], &[1.0]).is_err());
}

#[test]
fn backup_config_validation() {
    let s = integrator(3, 100.0, 100.0);
    assert!(BackupConfig { levels: 1, ..Default::default() }.validate(s.horizon).is_err());
    assert!(BackupConfig { max_prefix: 4, ..Default::default() }.validate(s.horizon).is_err());
    assert!(BackupConfig { max_prefix: 0, ..Default::default() }.validate(s.horizon).is_err());
    assert!(BackupConfig { levels: 3, max_prefix: 3, batch: 1 }.validate(s.horizon).is_ok());
}
