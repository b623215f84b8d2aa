use proptest::prelude::*;
use waffle_sim::client::AgentUpdate;
use waffle_sim::config::{ExperimentConfig, ScheduleKind};
use waffle_sim::data::Distribution;
use waffle_sim::experiment::{run_experiment, Experiment};
use waffle_sim::model::loss_and_gradient;
use waffle_sim::server::{aggregate, Algorithm};
use waffle_sim::weights::pairwise_distances;
use waffle_sim::ParamVector;

fn small(algorithm: Algorithm, distribution: Distribution, rounds: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::synthetic(algorithm, distribution, rounds);
    cfg.data.input_dim = 6;
    cfg.data.per_class = 60;
    cfg.optimizer.batch_size = 16;
    cfg
}

fn bits(v: &ParamVector) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn max_abs_diff(a: &ParamVector, b: &ParamVector) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn uniform_weights_recover_scaffold() {
    let cfg = small(Algorithm::Waffle, Distribution::C, 12);
    let mut scaffold_cfg = cfg.clone();
    scaffold_cfg.algorithm.name = Algorithm::Scaffold;
    let mut w = Experiment::build(&cfg, 4).unwrap();
    let mut s = Experiment::build(&scaffold_cfg, 4).unwrap();
    let uniform = vec![1.0 / cfg.num_agents as f64; cfg.num_agents];
    for _ in 0..cfg.rounds {
        let rw = w.step_with_weights(&uniform).unwrap();
        let rs = s.step().unwrap();
        assert_eq!(bits(&w.server().x), bits(&s.server().x));
        assert_eq!(bits(&w.server().c), bits(&s.server().c));
        assert_eq!(rw.alice_test_accuracy, rs.alice_test_accuracy);
    }
}

#[test]
fn constant_schedule_on_clones_matches_scaffold_accuracy() {
    let mut cfg = small(Algorithm::Waffle, Distribution::B, 10);
    cfg.data.replicate_alice = true;
    cfg.algorithm.schedule = ScheduleKind::Constant;
    cfg.algorithm.schedule_value = Some(1.0);
    let mut scaffold_cfg = cfg.clone();
    scaffold_cfg.algorithm.name = Algorithm::Scaffold;
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&scaffold_cfg).unwrap();
    // the last round falls inside the one-hot tail
    for (x, y) in a.iter().zip(&b).take(9) {
        assert_eq!(x.alice_test_accuracy, y.alice_test_accuracy);
        assert_eq!(x.weights, y.weights);
    }
}

#[test]
fn pinned_zero_controls_recover_fedavg() {
    let cfg = small(Algorithm::Scaffold, Distribution::B, 8);
    let mut fedavg_cfg = cfg.clone();
    fedavg_cfg.algorithm.name = Algorithm::FedAvg;
    let mut s = Experiment::build(&cfg, 8).unwrap();
    let mut f = Experiment::build(&fedavg_cfg, 8).unwrap();
    for _ in 0..cfg.rounds {
        s.server_mut().c.fill_zero();
        for client in s.clients_mut() {
            client.reset_control();
        }
        s.step().unwrap();
        f.step().unwrap();
        assert_eq!(bits(&s.server().x), bits(&f.server().x));
        assert!(f.server().c.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn scaffold_control_tracks_mean_of_locals() {
    let cfg = small(Algorithm::Scaffold, Distribution::C, 10);
    let mut exp = Experiment::build(&cfg, 2).unwrap();
    for _ in 0..cfg.rounds {
        exp.step().unwrap();
        let n = exp.clients().len() as f64;
        let mut mean = ParamVector::zeros(exp.server().c.len());
        for client in exp.clients() {
            mean.axpy(1.0 / n, client.local_control());
        }
        assert!(max_abs_diff(&mean, &exp.server().c) <= 1e-9);
    }
}

#[test]
fn single_agent_fedavg_is_gradient_descent() {
    let mut cfg = small(Algorithm::FedAvg, Distribution::A, 6);
    cfg.num_agents = 1;
    cfg.data.per_class = 20;
    let train_size = Experiment::build(&cfg, 3).unwrap().clients()[0].train_size();
    cfg.optimizer.batch_size = train_size;
    let mut exp_full = Experiment::build(&cfg, 3).unwrap();

    let spec = exp_full.spec().clone();
    let mut x = exp_full.server().x.clone();
    for _ in 0..cfg.rounds {
        let train = exp_full.clients()[0].data().train.clone();
        let (_, g) = loss_and_gradient(&spec, &x, &train.as_batch().unwrap()).unwrap();
        x.axpy(-cfg.optimizer.eta_l, &g);
        exp_full.step().unwrap();
        assert!(max_abs_diff(&x, &exp_full.server().x) <= 1e-12);
    }
}

#[test]
fn forced_one_hot_follows_local_training() {
    let cfg = small(Algorithm::Waffle, Distribution::C, 10);
    let mut local_cfg = cfg.clone();
    local_cfg.algorithm.name = Algorithm::Local;
    let mut w = Experiment::build(&cfg, 6).unwrap();
    let mut l = Experiment::build(&local_cfg, 6).unwrap();
    let mut one_hot = vec![0.0; cfg.num_agents];
    one_hot[0] = 1.0;
    for _ in 0..cfg.rounds {
        w.step_with_weights(&one_hot).unwrap();
        l.step().unwrap();
        assert!(max_abs_diff(&w.server().x, &l.server().x) <= 1e-10);
        assert!(l.server().c.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn waffle_records_end_in_alice_only_rounds() {
    let cfg = small(Algorithm::Waffle, Distribution::BStar, 40);
    let records = run_experiment(&cfg).unwrap();
    let mut best = f64::NEG_INFINITY;
    for r in &records {
        assert!(r.best_so_far >= best);
        best = r.best_so_far;
        if r.round as f64 >= 0.95 * cfg.rounds as f64 + 2.0 {
            assert_eq!(r.weights[0], 1.0);
            assert!(r.weights[1..].iter().all(|&a| a == 0.0));
        }
    }
}

#[test]
fn tail_rounds_apply_alice_update_only() {
    let rounds = 40;
    let cfg = small(Algorithm::Waffle, Distribution::C, rounds);
    let mut exp = Experiment::build(&cfg, 1).unwrap();
    let tail_start = (0.95 * rounds as f64).ceil() as usize + 2;
    for _ in 1..tail_start {
        exp.step().unwrap();
    }
    while exp.rounds_remaining() > 0 {
        let before = exp.server().x.clone();
        let c_alice_before = exp.clients()[0].local_control().clone();
        let c_before = exp.server().c.clone();
        // replay Alice's local round on a copy to get her update alone
        let mut alice = exp.clients()[0].clone();
        let rc = exp.round_config().clone();
        let steps = rc.local_steps.unwrap_or_else(|| alice.epoch_steps(rc.batch_size));
        let update = alice
            .local_round(
                exp.spec(),
                &before,
                &c_before,
                &waffle_sim::client::LocalConfig {
                    steps,
                    eta_l: rc.eta_l,
                    batch_size: rc.batch_size,
                    corrected: true,
                },
            )
            .unwrap();
        exp.step().unwrap();
        let mut expected = before;
        expected.axpy(exp.server().eta_g, &update.delta_y);
        assert_eq!(bits(&expected), bits(&exp.server().x));
        assert_eq!(bits(alice.local_control()), bits(exp.clients()[0].local_control()));
        assert_ne!(bits(&c_alice_before), bits(alice.local_control()));
    }
}

fn random_updates() -> impl Strategy<Value = (Vec<AgentUpdate>, Vec<f64>)> {
    (1usize..8, 1usize..20).prop_flat_map(|(n, len)| {
        (
            prop::collection::vec(
                (
                    prop::collection::vec(-5.0..5.0f64, len),
                    prop::collection::vec(-5.0..5.0f64, len),
                ),
                n,
            ),
            prop::collection::vec(0.0..1.0f64, n),
        )
            .prop_filter("some weight", |(_, w)| w.iter().sum::<f64>() > 1e-3)
            .prop_map(|(vs, w)| {
                let s: f64 = w.iter().sum();
                let updates = vs
                    .into_iter()
                    .map(|(y, c)| AgentUpdate {
                        delta_y: ParamVector::from_vec(y),
                        delta_c: ParamVector::from_vec(c),
                        num_samples: 1,
                    })
                    .collect();
                (updates, w.iter().map(|x| x / s).collect())
            })
    })
}

proptest! {
    #[test]
    fn aggregate_matches_naive_loop((updates, weights) in random_updates()) {
        let (dx, dc) = aggregate(&updates, &weights).unwrap();
        for j in 0..dx.len() {
            let mut sx = 0.0;
            let mut sc = 0.0;
            for (u, w) in updates.iter().zip(&weights) {
                sx += w * u.delta_y[j];
                sc += w * u.delta_c[j];
            }
            prop_assert!((dx[j] - sx).abs() <= 1e-12);
            prop_assert!((dc[j] - sc).abs() <= 1e-12);
        }
    }

    #[test]
    fn distances_match_naive_loop((updates, _) in random_updates(), alice in 0usize..8) {
        let alice = alice % updates.len();
        let d = pairwise_distances(&updates, alice).unwrap();
        prop_assert_eq!(d[alice], 0.0);
        for (i, u) in updates.iter().enumerate() {
            let mut s = 0.0;
            for j in 0..u.delta_y.len() {
                let diff = u.delta_y[j] - updates[alice].delta_y[j];
                s += diff * diff;
            }
            prop_assert!((d[i] - s.sqrt()).abs() <= 1e-12);
        }
    }
}
