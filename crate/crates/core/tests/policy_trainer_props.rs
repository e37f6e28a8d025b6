mod common;

use common::models::tiny_integrator;
use proptest::prelude::*;
use stlnpc::benchmarks::{instantiate, instantiate_with, BenchmarkConfigs};
use stlnpc::diff::grad_check;
use stlnpc::policy::{PolicyNet, PolicySpec};
use stlnpc::trainer::{loss_and_grad, train, truncated_loss, TrainConfig};

fn net(seed: u64, n: usize, m: usize, t: usize) -> PolicyNet<f64> {
    let mut spec = PolicySpec::new(n, m, t, vec![-2.0; m], vec![3.0; m]);
    spec.hidden = vec![16, 16];
    let mut net = PolicyNet::init(&spec, seed).unwrap();
    // Larger weights push pre-activations into saturation.
    net.params.iter_mut().for_each(|p| *p *= 5.0);
    net
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn outputs_stay_in_bounds(seed in any::<u64>(), x in prop::collection::vec(prop::sample::select(vec![-1e6, -1.0, 0.0, 1.0, 1e6]), 4)) {
        let p = net(seed, 4, 2, 3);
        for row in p.predict(&x).unwrap() {
            for u in row {
                prop_assert!((-2.0..=3.0).contains(&u));
            }
        }
    }

    #[test]
    fn batch_matches_single(seed in any::<u64>(), xs in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 1..6)) {
        let p = net(seed, 4, 2, 3);
        let batch = p.predict_batch(&xs).unwrap();
        for (x, b) in xs.iter().zip(&batch) {
            prop_assert_eq!(&p.predict(x).unwrap(), b);
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact(seed in any::<u64>(), x in prop::collection::vec(-3.0f64..3.0, 4)) {
        let p = net(seed, 4, 2, 3);
        let back = PolicyNet::<f64>::from_json(&p.to_json().unwrap()).unwrap();
        prop_assert_eq!(&back, &p);
        prop_assert_eq!(back.predict(&x).unwrap(), p.predict(&x).unwrap());
    }

    #[test]
    fn hard_loss_nonincreasing_in_robustness(scores in prop::collection::vec(-3.0f64..3.0, 1..8), i in 0usize..8, bump in 0.0f64..2.0, gamma in 0.0f64..1.0) {
        let i = i % scores.len();
        let mut up = scores.clone();
        up[i] += bump;
        prop_assert!(truncated_loss(&up, gamma, None) <= truncated_loss(&scores, gamma, None));
        prop_assert!(truncated_loss(&up, gamma, Some(50.0)) <= truncated_loss(&scores, gamma, Some(50.0)) + 1e-15);
    }
}

#[test]
fn f32_policy_bounds() {
    let mut spec = PolicySpec::<f32>::new(2, 1, 2, vec![-1.0], vec![1.0]);
    spec.hidden = vec![4];
    let p = PolicyNet::init(&spec, 0).unwrap();
    for row in p.predict(&[1e6, -1e6]).unwrap() {
        assert!(row[0] >= -1.0 && row[0] <= 1.0);
    }
}

/// Traffic with a 4-step horizon and a width-8 hidden layer.
fn tiny_traffic() -> (stlnpc::Benchmark64, TrainConfig) {
    let mut cfgs = BenchmarkConfigs::default();
    cfgs.traffic.horizon = 4;
    let b = instantiate_with::<f64>("traffic", &cfgs, 0).unwrap();
    let cfg = TrainConfig { hidden: vec![8], k: 10.0, gamma: 3.0, n_train: 16, batch: 4, ..Default::default() };
    (b, cfg)
}

#[test]
fn end_to_end_gradient_matches_finite_differences() {
    let b = tiny_integrator();
    let cfg = TrainConfig { hidden: vec![8], k: 10.0, gamma: 1.0, n_train: 16, batch: 4, ..Default::default() };
    let mut spec = PolicySpec::new(1, 1, 4, vec![-1.0], vec![1.0]);
    spec.hidden = vec![8];
    let base = PolicyNet::init(&spec, 3).unwrap();
    let xs = b.sampler.sample_n(4, 11).unwrap();
    let f = |theta: &[f64]| {
        let mut p = base.clone();
        p.params = theta.to_vec();
        let (parts, g) = loss_and_grad(&p, &b, &cfg, &xs, 5).unwrap();
        (parts.total, g)
    };
    let err = grad_check(f, &base.params, 1e-6);
    assert!(err <= 1e-3, "relative error {err}");
}

#[test]
fn training_is_reproducible() {
    let (b, cfg) = tiny_traffic();
    let cfg = TrainConfig { steps: 8, eval_every: 4, ..cfg };
    let a = train(&b, &cfg, |_| {}).unwrap();
    let c = train(&b, &cfg, |_| {}).unwrap();
    assert_eq!(a.best, c.best);
    let rows = |s: &stlnpc::trainer::TrainState<f64>| s.history.iter().map(|r| (r.step, r.loss.to_bits(), r.val_acc.to_bits())).collect::<Vec<_>>();
    assert_eq!(rows(&a), rows(&c));
}

#[test]
fn training_improves_on_traffic_quickly() {
    let b = instantiate::<f64>("traffic", 0).unwrap();
    let cfg = TrainConfig { n_train: 256, steps: 120, hidden: vec![64, 64], lr: 1e-3, eval_every: 40, ..Default::default() };
    let st = train(&b, &cfg, |_| {}).unwrap();
    let first = st.history.first().unwrap().val_acc;
    assert!(st.best_val >= first);
    assert!(st.best_val > 0.6, "{}", st.best_val);
}
