mod common;

use advop::adversarial::{AdversarialConfig, AdversarialCoupling};
use advop::datagen::{generate_dataset, integrate, Equation, OdeSystem, Trajectory};
use advop::deeponet::{space_time_queries, train_deeponet, DeepONet};
use advop::koopman::{
    koopman_loss, koopman_loss_terms, record_koopman_loss, train_koopman, train_koopman_observed, KoopmanModel,
    TrajectoryBatch, DEFAULT_CLIP_NORM,
};
use advop::networks::{Discriminator, Mlp, TridiagonalOperator};
use advop::nn::{Graph, Module, Tensor};
use advop::rng::{standard_normal, stream, uniform};
use advop::training::{LossHistory, TrainConfig};
use common::{alternation_audit, grad_close_with, numeric_gradients};
use proptest::prelude::*;

fn small_deeponet(seed: u64) -> DeepONet<f64> {
    DeepONet::new(6, 2, &[8, 8], 5, &mut stream(seed, 1)).unwrap()
}

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Tensor<f64> {
    let mut rng = stream(seed, 7);
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| uniform(&mut rng, -1.0, 1.0)).collect()).unwrap()
}

#[test]
fn scaling_the_branch_scales_predictions() {
    let m = small_deeponet(3);
    let u = random_matrix(4, 6, 1);
    let q = random_matrix(9, 2, 2);
    let base = m.predict(&u, &q).unwrap();
    for c in [-2.0, 0.5, 3.0] {
        let mut scaled = m.clone();
        let last = scaled.branch_mut().layers_mut().last_mut().unwrap();
        let w = last.weight.value().scale(c);
        let b = last.bias.value().scale(c);
        last.weight.assign(&w).unwrap();
        last.bias.assign(&b).unwrap();
        let p = scaled.predict(&u, &q).unwrap();
        for (a, b) in p.data().iter().zip(base.data()) {
            assert!((a - c * b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {c}·{b}");
        }
    }
}

#[test]
fn batch_forward_matches_single_calls() {
    let m = small_deeponet(4);
    let u = Tensor::vector(random_matrix(1, 6, 3).into_data());
    let mut q = random_matrix(64, 2, 4);
    // duplicate one query
    let dup = q.row(5).to_vec();
    q.data_mut()[2 * 9..2 * 10].copy_from_slice(&dup);
    let batch = m.batch_forward(&u, &q).unwrap();
    for r in 0..64 {
        let single = m.forward(&u, &Tensor::vector(q.row(r).to_vec())).unwrap();
        assert_eq!(batch[r].to_bits(), single.to_bits(), "query {r}");
    }
    assert_eq!(batch[5].to_bits(), batch[9].to_bits());
    let one = m.batch_forward(&u, &Tensor::matrix(1, 2, q.row(0).to_vec()).unwrap()).unwrap();
    assert_eq!(one.len(), 1);
}

#[test]
fn predict_agrees_with_batch_forward() {
    let m = small_deeponet(5);
    let u = random_matrix(3, 6, 5);
    let q = random_matrix(7, 2, 6);
    let p = m.predict(&u, &q).unwrap();
    for s in 0..3 {
        let b = m.batch_forward(&Tensor::vector(u.row(s).to_vec()), &q).unwrap();
        for (x, y) in p.row(s).iter().zip(&b) {
            assert!((x - y).abs() < 1e-13, "{x} vs {y}");
        }
    }
}

fn dense_power_apply(k: &Tensor<f64>, e: &[f64], times: usize) -> Vec<f64> {
    let d = e.len();
    let mut v = e.to_vec();
    for _ in 0..times {
        v = (0..d).map(|i| (0..d).map(|j| k.get(i, j) * v[j]).sum()).collect();
    }
    v
}

fn banded(d: usize, seed: u64) -> Tensor<f64> {
    let mut k = random_matrix(d, d, seed);
    for i in 0..d {
        for j in 0..d {
            if i.abs_diff(j) > 1 {
                k.set(i, j, 0.0);
            }
        }
    }
    k
}

fn small_koopman(d: usize, seed: u64) -> KoopmanModel<f64> {
    let mut m = KoopmanModel::new(2, d, &[6], &mut stream(seed, 1)).unwrap();
    m.set_operator(&banded(d, seed + 100)).unwrap();
    m
}

#[test]
fn rollout_matches_dense_matrix_powers() {
    let m = small_koopman(5, 1);
    let s0 = Tensor::vector(vec![0.3, -0.7]);
    let out = m.rollout(&s0, 2).unwrap();
    let e0 = m.encoder().forward(&s0).unwrap();
    let k2e = dense_power_apply(m.operator().matrix(), e0.data(), 2);
    let expected = m.decoder().forward(&Tensor::vector(k2e)).unwrap();
    for (a, b) in out[2].data().iter().zip(expected.data()) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
    let once = m.operator().apply(&e0, 1).unwrap();
    let dense = dense_power_apply(m.operator().matrix(), e0.data(), 1);
    for (a, b) in once.data().iter().zip(&dense) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn latent_sequence_is_linear_in_k() {
    let m = small_koopman(6, 2);
    let s0 = Tensor::vector(vec![1.1, 0.2]);
    let lat = m.latent_rollout(&s0, 8).unwrap();
    for w in lat.windows(2) {
        let next = m.operator().apply(&w[0], 1).unwrap();
        assert_eq!(next.data(), w[1].data());
    }
    // the operator itself is linear
    let (e1, e2) =
        (Tensor::vector(random_matrix(1, 6, 8).into_data()), Tensor::vector(random_matrix(1, 6, 9).into_data()));
    let (a, b) = (0.7, -1.3);
    let lhs = m.operator().apply(&e1.scale(a).add(&e2.scale(b)).unwrap(), 3).unwrap();
    let rhs = m.operator().apply(&e1, 3).unwrap().scale(a).add(&m.operator().apply(&e2, 3).unwrap().scale(b)).unwrap();
    for (x, y) in lhs.data().iter().zip(rhs.data()) {
        assert!((x - y).abs() < 1e-12);
    }
}

fn pendulum(n: usize, s0: [f64; 2]) -> Trajectory<f64> {
    integrate(OdeSystem::Pendulum, &s0, 0.1, n).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn unitary_term_ignores_transposition(d in 1usize..10, seed in 0u64..1000) {
        let mut m = small_koopman(d, seed);
        let traj = pendulum(3, [0.4, 0.1]);
        let k = banded(d, seed);
        m.set_operator(&k).unwrap();
        let (_, _, u) = koopman_loss_terms(&m, &traj).unwrap();
        m.set_operator(&k.transpose()).unwrap();
        let (_, _, ut) = koopman_loss_terms(&m, &traj).unwrap();
        prop_assert!((u - ut).abs() <= 1e-10 * (1.0 + u.abs()), "{} vs {}", u, ut);
    }

    #[test]
    fn koopman_gradients_match_finite_differences(n in 1usize..=5, d in 1usize..=6, seed in 0u64..1000) {
        let m = small_koopman(d, seed);
        let traj = pendulum(n, [0.5, -0.3]);
        let batch = TrajectoryBatch::new(&[&traj]).unwrap();
        let mut g = Graph::new();
        let t = record_koopman_loss(&mut g, &m, &batch, true).unwrap();
        let analytic: Vec<Vec<f64>> =
            g.backward(t.total).unwrap().for_params(&m.parameters()).into_iter().map(|t| t.into_data()).collect();
        let numeric = numeric_gradients(&m, |m| koopman_loss(m, &traj).unwrap());
        for (pi, (a, f)) in analytic.iter().zip(&numeric).enumerate() {
            for (k, (x, y)) in a.iter().zip(f).enumerate() {
                prop_assert!(grad_close_with(*x, *y, 1e-4), "param {} entry {}: {} vs {}", pi, k, x, y);
            }
        }
    }
}

#[test]
fn operator_stays_tridiagonal_through_training() {
    let trajs: Vec<_> = (0..3).map(|i| pendulum(10, [0.2 * i as f64, 0.5])).collect();
    let mut m = KoopmanModel::new(2, 6, &[8], &mut stream(1, 1)).unwrap();
    let cfg = TrainConfig { epochs: 50, clip_norm: Some(DEFAULT_CLIP_NORM), ..TrainConfig::default() };
    let mut seen = 0;
    train_koopman_observed(&mut m, &trajs, &cfg, None, |_, model| {
        assert!(model.operator().is_tridiagonal());
        seen += 1;
    })
    .unwrap();
    assert_eq!(seen, 50);
    assert!(m.operator().is_tridiagonal());
    let k = m.operator().matrix();
    assert!((0..6).any(|i| (0..6).any(|j| i != j && k.get(i, j) != 0.0)), "operator never moved off the diagonal");
}

fn assert_strict_alternation(h: &LossHistory, model0: u64, disc0: u64) {
    if let Err(e) = alternation_audit(h, model0, disc0) {
        panic!("{e}");
    }
}

#[test]
fn coupled_koopman_training_alternates() {
    let trajs: Vec<_> = (0..4).map(|i| pendulum(8, [0.3 * i as f64 - 0.5, 0.2])).collect();
    let mut m = KoopmanModel::new(2, 4, &[8], &mut stream(2, 1)).unwrap();
    let mut adv = AdversarialCoupling::new(4, &AdversarialConfig { hidden: vec![8], ..Default::default() }).unwrap();
    let (m0, d0) = (m.checksum(), adv.discriminator().checksum());
    let cfg = TrainConfig { epochs: 20, swa_fraction: 0.0, clip_norm: Some(1.0), ..TrainConfig::default() };
    let h = train_koopman(&mut m, &trajs, &cfg, Some(&mut adv)).unwrap();
    assert_eq!(h.records.len(), 20);
    assert_strict_alternation(&h, m0, d0);
}

#[test]
fn coupled_deeponet_training_alternates() {
    let ds = generate_dataset::<f64>(Equation::Burgers, 3, 11).unwrap();
    let fields = ds.fields().unwrap();
    let mut m = DeepONet::new(fields[0].grid().points, 2, &[8], 4, &mut stream(3, 1)).unwrap();
    let mut adv = AdversarialCoupling::new(4, &AdversarialConfig { hidden: vec![8], ..Default::default() }).unwrap();
    let (m0, d0) = (m.checksum(), adv.discriminator().checksum());
    let cfg = TrainConfig { epochs: 20, swa_fraction: 0.0, ..TrainConfig::default() };
    let h = train_deeponet(&mut m, fields, &cfg, Some(&mut adv)).unwrap();
    assert_strict_alternation(&h, m0, d0);
    // over any window of 2k epochs, k model and k discriminator updates
    assert_eq!(h.column("train_loss").unwrap().len(), 10);
    assert_eq!(h.column("discriminator_loss").unwrap().len(), 10);
}

#[test]
fn discriminator_outputs_stay_inside_the_unit_interval() {
    let d = Discriminator::<f64>::new(16, &[64, 64, 64], &mut stream(5, 3)).unwrap();
    let mut rng = stream(6, 3);
    let mut latents = Vec::with_capacity(10_000 * 16);
    for i in 0..10_000 {
        let scale = [1.0, 1e2, 1e3][i % 3];
        latents.extend((0..16).map(|_| scale * standard_normal(&mut rng)));
    }
    let probs = d.discriminate_batch(&Tensor::matrix(10_000, 16, latents).unwrap()).unwrap();
    assert!(probs.iter().all(|&p| p > 0.0 && p < 1.0));
}

#[test]
fn mlp_matches_hand_composition() {
    let mut net = Mlp::<f64>::zeros(&[2, 2, 1], 0, "n").unwrap();
    net.layers_mut()[0].weight.assign(&Tensor::matrix(2, 2, vec![0.5, -1.0, 2.0, 0.25]).unwrap()).unwrap();
    net.layers_mut()[0].bias.assign(&Tensor::vector(vec![0.1, -0.2])).unwrap();
    net.layers_mut()[1].weight.assign(&Tensor::matrix(1, 2, vec![1.5, -0.5]).unwrap()).unwrap();
    net.layers_mut()[1].bias.assign(&Tensor::vector(vec![0.3])).unwrap();
    let (x0, x1) = (0.7, -0.4);
    let h0 = (0.5 * x0 - 1.0 * x1 + 0.1f64).tanh();
    let h1 = (2.0 * x0 + 0.25 * x1 - 0.2f64).tanh();
    let expected = 1.5 * h0 - 0.5 * h1 + 0.3;
    let y = net.forward(&Tensor::vector(vec![x0, x1])).unwrap();
    assert!((y.data()[0] - expected).abs() < 1e-15);
}

#[test]
fn tridiagonal_mask_on_dense_ones() {
    let op = TridiagonalOperator::from_matrix(Tensor::full(&[3, 3], 1.0f64), 0).unwrap();
    let expected = [1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0];
    assert_eq!(op.matrix().data(), &expected);
    let mut again = op.clone();
    again.apply_mask();
    assert_eq!(again, op);
}

#[test]
fn queries_cover_requested_slices() {
    let grid = Equation::Kdv.grid().unwrap();
    let q: Tensor<f64> = space_time_queries(&grid, 101, &[0, 50, 100]);
    assert_eq!(q.shape(), &[3 * grid.points, 2]);
    assert_eq!(q.row(0), &[0.0, 0.0]);
    assert_eq!(q.row(grid.points)[1], 0.5);
    assert_eq!(q.row(3 * grid.points - 1)[1], 1.0);
}
