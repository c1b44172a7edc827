//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Numeric arguments select criteria, e.g.
//! `cargo test --release --test acceptance -- 1 5 6`.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use advop::adversarial::AdversarialCoupling;
use advop::datagen::{generate_dataset, read_dataset, write_dataset, Dataset, Equation};
use advop::deeponet::{deeponet_loss, train_deeponet, FunctionSample};
use advop::harness::*;
use advop::koopman::{koopman_loss_terms, train_koopman, train_koopman_observed, KoopmanModel};
use advop::networks::Discriminator;
use advop::nn::{bce_loss, Module, Tensor};
use advop::rng::{standard_normal, stream, uniform};
use advop::training::TrainConfig;
use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Collects named checks; the criterion passes when all of them do.
#[derive(Default)]
struct Checks {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if !ok {
            self.failures.push(what.clone());
        }
        self.notes.push(what);
    }

    fn finish(self) -> Outcome {
        if self.failures.is_empty() {
            outcome(true, self.notes.join("; "))
        } else {
            outcome(false, format!("failed: {}", self.failures.join("; ")))
        }
    }
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..50 {
        match RandomGraph::new(seed).check() {
            Ok(w) => worst = worst.max(w),
            Err(e) => return outcome(false, format!("graph {seed}: {e}")),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(secs < 60.0, format!("50 graphs, worst relative discrepancy {worst:.2e}, {secs:.1}s"))
}

fn rk4() -> Outcome {
    let mut c = Checks::default();
    let order = rk4_order();
    c.check(order >= 3.8, format!("order {order:.3}"));
    let drift = pendulum_energy_drift();
    c.check(drift < 1e-6, format!("pendulum energy drift {drift:.2e}"));
    c.finish()
}

fn burgers() -> Outcome {
    let mut c = Checks::default();
    c.check(burgers_zero_stays_zero(), "zero data stays zero");
    let rise = burgers_sup_norm_rise(20);
    c.check(rise <= 0.0, format!("largest sup-norm change {rise:.2e}"));
    let order = burgers_self_convergence();
    c.check(order >= 1.8, format!("self-convergence order {order:.3}"));
    c.finish()
}

fn kdv() -> Outcome {
    let mut c = Checks::default();
    let drift = kdv_mean_drift(20);
    c.check(drift < 1e-8, format!("mean drift {drift:.2e}"));
    let err = soliton_transit_error();
    c.check(err < 1e-3, format!("soliton shape error {err:.2e}"));
    c.finish()
}

fn structure() -> Outcome {
    let mut c = Checks::default();

    let cfg = ExperimentConfig {
        train_samples: Some(4),
        test_samples: 1,
        epochs: 50,
        ..ExperimentConfig::new(Equation::Pendulum)
    };
    let (train, _) = load_data(&cfg).unwrap();
    for adversarial in [false, true] {
        let TrainedModel::Koopman(mut m) = init_model(&cfg).unwrap() else { unreachable!() };
        let mut adv =
            adversarial.then(|| AdversarialCoupling::new(m.encoding_dim(), &cfg.adversarial_config()).unwrap());
        let mut steps = (0, 0);
        train_koopman_observed(&mut m, train.trajectories().unwrap(), &cfg.train_config(), adv.as_mut(), |_, model| {
            steps.0 += 1;
            steps.1 += model.operator().is_tridiagonal() as usize;
        })
        .unwrap();
        c.check(
            steps.0 == 50 && steps.1 == 50,
            format!("K tridiagonal after {}/{} epochs (adversarial={adversarial})", steps.1, steps.0),
        );
    }

    for eq in [Equation::Burgers, Equation::Pendulum] {
        let cfg = ExperimentConfig {
            train_samples: Some(3),
            test_samples: 1,
            epochs: 40,
            adversarial: true,
            ..ExperimentConfig::new(eq)
        };
        let (train, _) = load_data(&cfg).unwrap();
        let tc = TrainConfig { swa_fraction: 0.0, ..cfg.train_config() };
        let audit = match init_model(&cfg).unwrap() {
            TrainedModel::Deeponet(mut m) => {
                let mut adv = AdversarialCoupling::new(m.latent_dim(), &cfg.adversarial_config()).unwrap();
                let (m0, d0) = (m.checksum(), adv.discriminator().checksum());
                let h = train_deeponet(&mut m, train.fields().unwrap(), &tc, Some(&mut adv)).unwrap();
                alternation_audit(&h, m0, d0)
            }
            TrainedModel::Koopman(mut m) => {
                let mut adv = AdversarialCoupling::new(m.encoding_dim(), &cfg.adversarial_config()).unwrap();
                let (m0, d0) = (m.checksum(), adv.discriminator().checksum());
                let h = train_koopman(&mut m, train.trajectories().unwrap(), &tc, Some(&mut adv)).unwrap();
                alternation_audit(&h, m0, d0)
            }
        };
        c.check(audit.is_ok(), format!("{eq} alternation audit: {}", audit.err().unwrap_or_else(|| "strict".into())));
    }

    let d = Discriminator::<f64>::new(16, &[64, 64, 64], &mut stream(5, 3)).unwrap();
    let mut rng = stream(6, 3);
    let latents: Vec<f64> = (0..10_000)
        .flat_map(|i| {
            let scale = [1.0, 1e2, 1e3][i % 3];
            (0..16).map(|_| scale * standard_normal(&mut rng)).collect::<Vec<_>>()
        })
        .collect();
    let probs = d.discriminate_batch(&Tensor::matrix(10_000, 16, latents).unwrap()).unwrap();
    let inside = probs.iter().filter(|&&p| p > 0.0 && p < 1.0).count();
    c.check(inside == 10_000, format!("{inside}/10000 discriminator outputs in (0,1)"));
    c.finish()
}

/// Block-diagonal rotations, with a trailing ±1 for odd sizes.
fn orthogonal_tridiagonal(d: usize, seed: u64) -> Tensor<f64> {
    let mut rng = stream(seed, 7);
    let mut k = Tensor::zeros(&[d, d]);
    let mut i = 0;
    while i + 1 < d {
        let a = uniform(&mut rng, 0.0, std::f64::consts::TAU);
        k.set(i, i, a.cos());
        k.set(i, i + 1, -a.sin());
        k.set(i + 1, i, a.sin());
        k.set(i + 1, i + 1, a.cos());
        i += 2;
    }
    if i < d {
        k.set(i, i, -1.0);
    }
    k
}

fn loss_formulas() -> Outcome {
    let mut c = Checks::default();
    let traj = &generate_dataset::<f64>(Equation::Pendulum, 1, 0).unwrap().trajectories().unwrap()[0].clone();
    for d in [4, 16] {
        let mut m = KoopmanModel::new(2, d, &[16], &mut stream(d as u64, 1)).unwrap();
        m.set_operator(&Tensor::zeros(&[d, d])).unwrap();
        let (_, _, u) = koopman_loss_terms(&m, traj).unwrap();
        c.check(u == d as f64, format!("unitary term {u} for K=0, d={d}"));
        for (seed, dim) in [(1, d), (2, d + 1)] {
            let mut m = KoopmanModel::new(2, dim, &[16], &mut stream(seed, 1)).unwrap();
            m.set_operator(&orthogonal_tridiagonal(dim, seed)).unwrap();
            let (_, _, u) = koopman_loss_terms(&m, traj).unwrap();
            c.check(u.abs() < 1e-10, format!("unitary term {u:.1e} for orthogonal K, d={dim}"));
        }
    }
    let ln2 = std::f64::consts::LN_2;
    let e = (bce_loss(0.5, 0.0).unwrap() - ln2).abs().max((bce_loss(0.5, 1.0).unwrap() - ln2).abs());
    c.check(e < 1e-12, format!("|bce(0.5) - ln 2| = {e:.1e}"));
    c.finish()
}

fn overfitting() -> Outcome {
    let mut c = Checks::default();
    for eq in [Equation::Pendulum, Equation::Burgers] {
        let start = Instant::now();
        let cfg = ExperimentConfig { train_samples: Some(1), test_samples: 1, ..ExperimentConfig::new(eq) };
        let (train, _) = load_data(&cfg).unwrap();
        let run = run_experiment(&cfg).unwrap();
        let secs = start.elapsed().as_secs_f64();
        let (loss, bound, what) = match &run.model {
            TrainedModel::Koopman(m) => {
                (koopman_loss_terms(m, &train.trajectories().unwrap()[0]).unwrap().0, 1e-3, "koopman prediction term")
            }
            TrainedModel::Deeponet(m) => {
                let f = &train.fields().unwrap()[0];
                let sample = FunctionSample::from_field(f, &(0..f.slices()).collect::<Vec<_>>()).unwrap();
                (deeponet_loss(m, &[sample]).unwrap(), 1e-4, "deeponet full-field MSE")
            }
        };
        c.check(loss < bound, format!("{eq} {what} {loss:.2e} (bound {bound:.0e})"));
        c.check(secs < 300.0, format!("{eq} {}-epoch run {secs:.0}s", cfg.epochs));
    }
    c.finish()
}

fn reproduction() -> Outcome {
    let start = Instant::now();
    let base = ExperimentConfig::default();
    let report = run_table_with(&Equation::ALL, &DEFAULT_SEEDS, &base, |r| {
        eprintln!(
            "  {} adversarial={} seed={}: error {:.4e} ({:.0}s)",
            r.config.equation, r.config.adversarial, r.config.seed, r.error, r.wall_clock_s
        );
    });
    let report = match report {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("table run failed: {e}")),
    };
    let elapsed = start.elapsed();
    let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    if let Ok(path) = emit_report(&report, &dir, ReportFormat::Csv) {
        eprintln!("  report written to {}", path.display());
    }
    let table = report.table();
    eprint!("{}", format_table(&table));

    let mut c = Checks::default();
    let helped: Vec<&TableRow> = table.iter().filter(|r| r.improvement_pct > 0.0).collect();
    c.check(helped.len() >= 3, format!("adversarial lower in {}/5 systems", helped.len()));
    let mean_gain = if helped.is_empty() {
        f64::NAN
    } else {
        helped.iter().map(|r| r.improvement_pct).sum::<f64>() / helped.len() as f64
    };
    c.check(mean_gain >= 3.0, format!("mean improvement where it helps {mean_gain:.1}%"));
    for r in &table {
        for (ours, paper, variant) in [
            (r.mean_error_plain, r.paper_error_plain, "plain"),
            (r.mean_error_adversarial, r.paper_error_adversarial, "adversarial"),
        ] {
            let ratio = ours / paper;
            c.check(
                (0.1..=10.0).contains(&ratio),
                format!("{} {variant} {ours:.3e} is {ratio:.2}x published", r.equation),
            );
        }
    }
    c.check(elapsed < Duration::from_secs(4 * 3600), format!("{:.0} min", elapsed.as_secs_f64() / 60.0));
    c.finish()
}

fn determinism() -> Outcome {
    let mut c = Checks::default();
    for eq in Equation::ALL {
        let cfg = ExperimentConfig {
            train_samples: Some(3),
            test_samples: 2,
            epochs: 30,
            adversarial: true,
            ..ExperimentConfig::new(eq)
        };
        let (a, b) = (run_experiment(&cfg).unwrap(), run_experiment(&cfg).unwrap());
        let same = a.error.to_bits() == b.error.to_bits()
            && a.checkpoint_bytes().unwrap() == b.checkpoint_bytes().unwrap()
            && a.history.records == b.history.records;
        c.check(same, format!("{eq} bitwise repeatable"));
    }
    c.finish()
}

fn serialization() -> Outcome {
    let mut c = Checks::default();
    let dir = tempfile::tempdir().unwrap();
    for eq in Equation::ALL {
        let ds = generate_dataset::<f64>(eq, 2, 3).unwrap();
        let path = dir.path().join(format!("{eq}.dat"));
        write_dataset(&ds, &path).unwrap();
        let back: Dataset<f64> = read_dataset(&path).unwrap();
        c.check(datasets_bitwise_equal(&ds, &back), format!("{eq} dataset"));
    }
    for eq in [Equation::Kdv, Equation::FluidAttractor] {
        let m = init_model(&ExperimentConfig::new(eq)).unwrap();
        let path = dir.path().join(format!("{eq}.ckpt"));
        std::fs::write(&path, m.to_checkpoint_bytes(1).unwrap()).unwrap();
        let ok = TrainedModel::load(&path).map(|(back, seed)| seed == 1 && models_bitwise_equal(&m, &back));
        c.check(matches!(ok, Ok(true)), format!("{} checkpoint", m.architecture()));
    }

    let ds = generate_dataset::<f64>(Equation::Lorenz, 2, 3).unwrap().to_bytes().unwrap();
    let ck = init_model(&ExperimentConfig::new(Equation::Lorenz)).unwrap().to_checkpoint_bytes(0).unwrap();
    let bad: [(&str, Vec<u8>, Vec<u8>); 4] = [
        ("truncated", ds[..ds.len() - 3].to_vec(), ck[..ck.len() - 3].to_vec()),
        ("flipped byte", corrupt_payload_byte(&ds), corrupt_payload_byte(&ck)),
        ("bad magic", [b"X".as_slice(), &ds].concat(), [b"X".as_slice(), &ck].concat()),
        (
            "wrong dtype",
            String::from_utf8_lossy(&ds).replacen("f64le", "f16le", 1).into_bytes(),
            String::from_utf8_lossy(&ck).replacen("f64le", "f16le", 1).into_bytes(),
        ),
    ];
    for (what, d, k) in bad {
        let de = Dataset::<f64>::from_bytes(&d).err().map(|e| e.to_string());
        let ke = TrainedModel::from_checkpoint_bytes(&k).err().map(|e| e.to_string());
        c.check(
            de.as_deref().is_some_and(|m| !m.is_empty()) && ke.as_deref().is_some_and(|m| !m.is_empty()),
            format!("{what} rejected"),
        );
    }
    c.finish()
}

type Criterion = (u32, &'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 10] = [
    (1, "gradient correctness", gradients),
    (2, "rk4 order and energy drift", rk4),
    (3, "burgers solver", burgers),
    (4, "kdv solver", kdv),
    (5, "structural invariants", structure),
    (6, "loss formulas", loss_formulas),
    (7, "overfitting sanity", overfitting),
    (8, "scaled reproduction", reproduction),
    (9, "determinism", determinism),
    (10, "serialization", serialization),
];

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        let tag = if result.pass { "PASS" } else { "FAIL" };
        failed += !result.pass as usize;
        println!("{tag} [{id}] {name}: {} ({:.1}s)", result.detail, start.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
