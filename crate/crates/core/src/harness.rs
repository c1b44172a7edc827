//! Experiment orchestration: configuration, the error metric, paired
//! plain/adversarial runs and report files.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::adversarial::{AdversarialConfig, AdversarialCoupling};
use crate::datagen::{generate_dataset, read_dataset, Dataset, Equation};
use crate::deeponet::{space_time_queries, train_deeponet, DeepONet, COORD_DIM};
use crate::error::{Error, Result};
use crate::koopman::{train_koopman, KoopmanModel, DEFAULT_CLIP_NORM};
use crate::nn::{AdamConfig, Checkpointable, Module, Tensor};
use crate::rng::{stream, streams};
use crate::training::{LossHistory, TrainConfig};

/// Seeds are spread this far apart when deriving dataset seeds, so runs with
/// different seeds never share samples.
pub const DATA_SEED_STRIDE: u64 = 1 << 20;
pub const DEFAULT_TEST_SAMPLES: usize = 100;
pub const DEFAULT_SEEDS: [u64; 3] = [0, 1, 2];

/// Published errors without and with the discriminator.
pub const PAPER_ERRORS: [(Equation, f64, f64); 5] = [
    (Equation::Burgers, 3.860e-2, 3.707e-2),
    (Equation::Kdv, 3.059e-2, 2.795e-2),
    (Equation::Pendulum, 2.615e-3, 1.922e-3),
    (Equation::Lorenz, 5.874e-2, 4.703e-2),
    (Equation::FluidAttractor, 2.833e-5, 2.637e-5),
];

pub fn paper_errors(equation: Equation) -> (f64, f64) {
    PAPER_ERRORS.iter().find(|(e, _, _)| *e == equation).map(|&(_, a, b)| (a, b)).expect("every equation listed")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Deeponet,
    Koopman,
}

impl Architecture {
    /// DeepONets for the field equations, Koopman autoencoders for the ODEs.
    pub fn for_equation(equation: Equation) -> Self {
        if equation.is_pde() {
            Architecture::Deeponet
        } else {
            Architecture::Koopman
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Deeponet => "deeponet",
            Architecture::Koopman => "koopman",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deeponet" => Ok(Architecture::Deeponet),
            "koopman" => Ok(Architecture::Koopman),
            _ => Err(Error::InvalidArgument(format!("unknown architecture `{s}`"))),
        }
    }
}

/// Everything that determines one run. Unset options fall back to the
/// per-equation defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub equation: Equation,
    pub architecture: Option<Architecture>,
    pub adversarial: bool,
    pub train_samples: Option<usize>,
    pub test_samples: usize,
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub swa_fraction: f64,
    /// Defaults to 1.0 for Koopman models and no clipping for DeepONets.
    pub clip_norm: Option<f64>,
    pub hidden: Vec<usize>,
    pub deeponet_latent_dim: usize,
    pub encoding_dim: usize,
    pub noise_scale: f64,
    pub discriminator_hidden: Vec<usize>,
    pub discriminator_lr: f64,
    /// Load data from this file instead of generating it.
    pub data_path: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            equation: Equation::Burgers,
            architecture: None,
            adversarial: false,
            train_samples: None,
            test_samples: DEFAULT_TEST_SAMPLES,
            seed: 0,
            epochs: 5000,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            swa_fraction: 0.25,
            clip_norm: None,
            hidden: crate::networks::DEFAULT_HIDDEN.to_vec(),
            deeponet_latent_dim: crate::deeponet::DEFAULT_LATENT_DIM,
            encoding_dim: crate::koopman::DEFAULT_ENCODING_DIM,
            noise_scale: crate::adversarial::DEFAULT_NOISE_SCALE,
            discriminator_hidden: crate::networks::DEFAULT_HIDDEN.to_vec(),
            discriminator_lr: adam.lr,
            data_path: None,
        }
    }
}

impl ExperimentConfig {
    pub fn new(equation: Equation) -> Self {
        Self { equation, ..Default::default() }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(format!("experiment config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("experiment config: {e}")))
    }

    pub fn architecture(&self) -> Architecture {
        self.architecture.unwrap_or_else(|| Architecture::for_equation(self.equation))
    }

    pub fn train_samples(&self) -> usize {
        self.train_samples.unwrap_or_else(|| self.equation.default_train_samples())
    }

    pub fn clip_norm(&self) -> Option<f64> {
        match (self.clip_norm, self.architecture()) {
            (Some(c), _) => Some(c),
            (None, Architecture::Koopman) => Some(DEFAULT_CLIP_NORM),
            (None, Architecture::Deeponet) => None,
        }
    }

    /// Base seed of the generated dataset.
    pub fn data_seed(&self) -> u64 {
        self.seed.wrapping_mul(DATA_SEED_STRIDE)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            adam: AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps },
            swa_fraction: self.swa_fraction,
            clip_norm: self.clip_norm(),
            seed: self.seed,
        }
    }

    pub fn adversarial_config(&self) -> AdversarialConfig {
        AdversarialConfig {
            noise_scale: self.noise_scale,
            adam: AdamConfig { lr: self.discriminator_lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps },
            hidden: self.discriminator_hidden.clone(),
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_samples() == 0 || self.test_samples == 0 {
            return Err(Error::InvalidArgument("need at least one training and one test sample".into()));
        }
        if self.architecture() == Architecture::Deeponet && !self.equation.is_pde() {
            return Err(Error::InvalidArgument(format!("deeponet needs a field equation, not {}", self.equation)));
        }
        if self.architecture() == Architecture::Koopman && self.equation.is_pde() {
            return Err(Error::InvalidArgument(format!("koopman needs an ODE system, not {}", self.equation)));
        }
        if !(self.noise_scale >= 0.0) {
            return Err(Error::InvalidArgument("noise scale must be non-negative".into()));
        }
        self.train_config().validate()
    }
}

/// `‖pred − target‖₂ / ‖target‖₂`.
pub fn relative_l2_error(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!("prediction of length {} for target of length {}", pred.len(), target.len())));
    }
    let den: f64 = target.iter().map(|y| y * y).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(Error::InvalidArgument("target has zero norm".into()));
    }
    let num: f64 = pred.iter().zip(target).map(|(p, y)| (p - y) * (p - y)).sum::<f64>().sqrt();
    Ok(num / den)
}

/// Relative L2 error averaged over paired samples.
pub fn mean_relative_l2_error(preds: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(Error::InvalidArgument(format!("{} predictions for {} targets", preds.len(), targets.len())));
    }
    let mut s = 0.0;
    for (p, t) in preds.iter().zip(targets) {
        s += relative_l2_error(p, t)?;
    }
    Ok(s / preds.len() as f64)
}

/// A trained model of either architecture.
#[derive(Clone, Debug, PartialEq)]
pub enum TrainedModel {
    Deeponet(DeepONet<f64>),
    Koopman(KoopmanModel<f64>),
}

impl TrainedModel {
    pub fn architecture(&self) -> Architecture {
        match self {
            TrainedModel::Deeponet(_) => Architecture::Deeponet,
            TrainedModel::Koopman(_) => Architecture::Koopman,
        }
    }

    pub fn checksum(&self) -> u64 {
        match self {
            TrainedModel::Deeponet(m) => m.checksum(),
            TrainedModel::Koopman(m) => m.checksum(),
        }
    }

    pub fn to_checkpoint_bytes(&self, seed: u64) -> Result<Vec<u8>> {
        match self {
            TrainedModel::Deeponet(m) => m.to_checkpoint_bytes(seed),
            TrainedModel::Koopman(m) => m.to_checkpoint_bytes(seed),
        }
    }

    /// Reads a checkpoint of either kind.
    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<(Self, u64)> {
        match DeepONet::from_checkpoint_bytes(bytes) {
            Ok((m, s)) => Ok((TrainedModel::Deeponet(m), s)),
            Err(Error::Format(msg)) if msg.contains("expected `deeponet`") => {
                KoopmanModel::from_checkpoint_bytes(bytes).map(|(m, s)| (TrainedModel::Koopman(m), s))
            }
            Err(e) => Err(e),
        }
    }

    pub fn load(path: &Path) -> Result<(Self, u64)> {
        Self::from_checkpoint_bytes(&std::fs::read(path)?)
    }

    /// Predictions for every sample of `data`, flattened over the full
    /// space-time field or the full trajectory.
    pub fn predict_all(&self, data: &Dataset<f64>) -> Result<Vec<Vec<f64>>> {
        match (self, &data.samples) {
            (TrainedModel::Deeponet(m), crate::datagen::Samples::Fields(fields)) => {
                let Some(first) = fields.first() else { return Ok(Vec::new()) };
                let n = first.slices();
                let queries: Tensor<f64> = space_time_queries(first.grid(), n, &(0..n).collect::<Vec<_>>());
                debug_assert_eq!(queries.cols(), COORD_DIM);
                let inputs = Tensor::from_rows(&fields.iter().map(|f| f.initial()).collect::<Vec<_>>())?;
                let pred = m.predict(&inputs, &queries)?;
                Ok((0..pred.rows()).map(|r| pred.row(r).to_vec()).collect())
            }
            (TrainedModel::Koopman(m), crate::datagen::Samples::Trajectories(trajs)) => {
                let Some(first) = trajs.first() else { return Ok(Vec::new()) };
                let initial = Tensor::from_rows(&trajs.iter().map(|t| t.initial()).collect::<Vec<_>>())?;
                let steps = m.rollout_batch(&initial, first.steps())?;
                Ok((0..trajs.len()).map(|b| steps.iter().flat_map(|s| s.row(b).iter().copied()).collect()).collect())
            }
            _ => Err(Error::InvalidArgument(format!(
                "{} model cannot predict {} data",
                self.architecture(),
                data.equation
            ))),
        }
    }

    /// Mean relative L2 error over the samples of `data`.
    pub fn evaluate(&self, data: &Dataset<f64>) -> Result<f64> {
        let preds = self.predict_all(data)?;
        let targets: Vec<Vec<f64>> = match &data.samples {
            crate::datagen::Samples::Fields(v) => v.iter().map(|f| f.values().data().to_vec()).collect(),
            crate::datagen::Samples::Trajectories(v) => v.iter().map(|t| t.states().data().to_vec()).collect(),
        };
        mean_relative_l2_error(&preds, &targets)
    }

    /// Prediction and target for plotting: the final time slice of the first
    /// sample for fields, the full first trajectory for ODEs.
    pub fn plot_data(&self, data: &Dataset<f64>) -> Result<PlotData> {
        let preds = self.predict_all(data)?;
        let Some(pred) = preds.first() else {
            return Err(Error::InvalidArgument("no samples to plot".into()));
        };
        match &data.samples {
            crate::datagen::Samples::Fields(v) => {
                let f = &v[0];
                let m = f.grid().points;
                let last = f.slices() - 1;
                let rows = (0..m).map(|j| vec![f.grid().coordinate(j), pred[last * m + j], f.slice(last)[j]]).collect();
                Ok(PlotData { header: vec!["x".into(), "prediction".into(), "target".into()], rows })
            }
            crate::datagen::Samples::Trajectories(v) => {
                let t = &v[0];
                let d = t.dim();
                let mut header = vec!["t".to_string()];
                header.extend((0..d).map(|k| format!("prediction_{k}")));
                header.extend((0..d).map(|k| format!("target_{k}")));
                let rows = (0..=t.steps())
                    .map(|i| {
                        let mut row = vec![i as f64 * t.dt()];
                        row.extend_from_slice(&pred[i * d..(i + 1) * d]);
                        row.extend_from_slice(t.states().row(i));
                        row
                    })
                    .collect();
                Ok(PlotData { header, rows })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlotData {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl PlotData {
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|x| x.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Outcome of one training run.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub config: ExperimentConfig,
    /// Mean relative L2 test error.
    pub error: f64,
    pub history: LossHistory,
    pub wall_clock_s: f64,
    pub dataset_checksum: u64,
    pub model: TrainedModel,
    pub plot: PlotData,
}

impl RunReport {
    pub fn checkpoint_bytes(&self) -> Result<Vec<u8>> {
        self.model.to_checkpoint_bytes(self.config.seed)
    }

    /// File stem shared by the per-run outputs.
    pub fn stem(&self) -> String {
        let c = &self.config;
        format!(
            "{}_{}_{}_seed{}",
            c.equation,
            c.architecture(),
            if c.adversarial { "adversarial" } else { "plain" },
            c.seed
        )
    }
}

/// Loads or generates `train + test` samples and splits them.
pub fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset<f64>, Dataset<f64>)> {
    let (train, test) = (cfg.train_samples(), cfg.test_samples);
    let ds = match &cfg.data_path {
        Some(p) => {
            let ds: Dataset<f64> = read_dataset(p)?;
            if ds.equation != cfg.equation {
                return Err(Error::InvalidArgument(format!(
                    "{} holds {} data, config asks for {}",
                    p.display(),
                    ds.equation,
                    cfg.equation
                )));
            }
            if ds.len() < train + test {
                return Err(Error::InvalidArgument(format!(
                    "{} has {} samples, need {}",
                    p.display(),
                    ds.len(),
                    train + test
                )));
            }
            ds
        }
        None => generate_dataset(cfg.equation, train + test, cfg.data_seed())?,
    };
    let (tr, rest) = ds.split(train)?;
    let (te, _) = rest.split(test)?;
    Ok((tr, te))
}

/// Builds the untrained model of a configuration.
pub fn init_model(cfg: &ExperimentConfig) -> Result<TrainedModel> {
    let mut rng = stream(cfg.seed, streams::MODEL_INIT);
    Ok(match cfg.architecture() {
        Architecture::Deeponet => {
            let grid = cfg.equation.grid().ok_or_else(|| Error::InvalidArgument("deeponet needs a grid".into()))?;
            TrainedModel::Deeponet(DeepONet::new(
                grid.points,
                COORD_DIM,
                &cfg.hidden,
                cfg.deeponet_latent_dim,
                &mut rng,
            )?)
        }
        Architecture::Koopman => {
            let dim = cfg.equation.ode().ok_or_else(|| Error::InvalidArgument("koopman needs an ODE".into()))?.dim();
            TrainedModel::Koopman(KoopmanModel::new(dim, cfg.encoding_dim, &cfg.hidden, &mut rng)?)
        }
    })
}

/// Trains and evaluates one configuration.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let start = Instant::now();
    let (train, test) = load_data(cfg)?;
    let mut model = init_model(cfg)?;
    let tc = cfg.train_config();
    let ac = cfg.adversarial_config();
    let with_echo = |e: Error| match e {
        Error::Diverged { epoch, detail } => Error::Diverged {
            epoch,
            detail: format!(
                "{detail} [{} {} adversarial={} seed={}]",
                cfg.equation,
                cfg.architecture(),
                cfg.adversarial,
                cfg.seed
            ),
        },
        other => other,
    };
    let history = match &mut model {
        TrainedModel::Deeponet(m) => {
            let fields = train.fields().expect("field equation");
            let mut coupling = cfg.adversarial.then(|| AdversarialCoupling::new(m.latent_dim(), &ac)).transpose()?;
            train_deeponet(m, fields, &tc, coupling.as_mut()).map_err(with_echo)?
        }
        TrainedModel::Koopman(m) => {
            let trajs = train.trajectories().expect("ODE system");
            let mut coupling = cfg.adversarial.then(|| AdversarialCoupling::new(m.encoding_dim(), &ac)).transpose()?;
            train_koopman(m, trajs, &tc, coupling.as_mut()).map_err(with_echo)?
        }
    };
    let error = model.evaluate(&test)?;
    let plot = model.plot_data(&test)?;
    Ok(RunReport {
        config: cfg.clone(),
        error,
        history,
        wall_clock_s: start.elapsed().as_secs_f64(),
        dataset_checksum: train.checksum() ^ test.checksum().rotate_left(1),
        model,
        plot,
    })
}

/// `(plain − adversarial) / plain × 100`.
pub fn improvement_pct(plain: f64, adversarial: f64) -> f64 {
    (plain - adversarial) / plain * 100.0
}

/// Per-equation summary in the two-row shape of the published tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub equation: Equation,
    pub architecture: Architecture,
    pub seeds: usize,
    pub mean_error_plain: f64,
    pub mean_error_adversarial: f64,
    pub improvement_pct: f64,
    pub paper_error_plain: f64,
    pub paper_error_adversarial: f64,
}

/// One line of the report CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub equation: Equation,
    pub architecture: Architecture,
    pub adversarial: bool,
    pub seed: u64,
    pub error: f64,
    /// Improvement of the pair this run belongs to, if paired.
    pub improvement_pct: Option<f64>,
    pub epochs: usize,
    pub wall_clock_s: f64,
}

#[derive(Clone, Debug, Default)]
pub struct ExperimentReport {
    pub runs: Vec<RunReport>,
}

impl ExperimentReport {
    pub fn new(runs: Vec<RunReport>) -> Self {
        Self { runs }
    }

    fn partner(&self, r: &RunReport) -> Option<&RunReport> {
        self.runs.iter().find(|o| {
            o.config.equation == r.config.equation
                && o.config.architecture() == r.config.architecture()
                && o.config.seed == r.config.seed
                && o.config.adversarial != r.config.adversarial
        })
    }

    /// Improvement of a run's plain/adversarial pair.
    pub fn pair_improvement(&self, r: &RunReport) -> Option<f64> {
        let o = self.partner(r)?;
        let (plain, adv) = if r.config.adversarial { (o.error, r.error) } else { (r.error, o.error) };
        Some(improvement_pct(plain, adv))
    }

    pub fn rows(&self) -> Vec<ReportRow> {
        self.runs
            .iter()
            .map(|r| ReportRow {
                equation: r.config.equation,
                architecture: r.config.architecture(),
                adversarial: r.config.adversarial,
                seed: r.config.seed,
                error: r.error,
                improvement_pct: self.pair_improvement(r),
                epochs: r.config.epochs,
                wall_clock_s: r.wall_clock_s,
            })
            .collect()
    }

    /// Mean errors per equation over seeds, with the improvement of the means.
    pub fn table(&self) -> Vec<TableRow> {
        table_from_rows(&self.rows())
    }
}

/// Groups report rows by equation and averages each variant over seeds.
pub fn table_from_rows(rows: &[ReportRow]) -> Vec<TableRow> {
    let mut keys: Vec<(Equation, Architecture)> = rows.iter().map(|r| (r.equation, r.architecture)).collect();
    keys.sort_by_key(|(e, a)| (Equation::ALL.iter().position(|x| x == e), *a));
    keys.dedup();
    keys.into_iter()
        .filter_map(|(eq, arch)| {
            let errs = |adv: bool| -> Vec<f64> {
                rows.iter()
                    .filter(|r| r.equation == eq && r.architecture == arch && r.adversarial == adv)
                    .map(|r| r.error)
                    .collect()
            };
            let (p, a) = (errs(false), errs(true));
            if p.is_empty() || a.is_empty() {
                return None;
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let (mp, ma) = (mean(&p), mean(&a));
            let (pp, pa) = paper_errors(eq);
            Some(TableRow {
                equation: eq,
                architecture: arch,
                seeds: p.len().min(a.len()),
                mean_error_plain: mp,
                mean_error_adversarial: ma,
                improvement_pct: improvement_pct(mp, ma),
                paper_error_plain: pp,
                paper_error_adversarial: pa,
            })
        })
        .collect()
}

/// Plain-text rendering of table rows, two lines per equation.
pub fn format_table(rows: &[TableRow]) -> String {
    let mut out = format!(
        "{:<16} {:<9} {:<12} {:>12} {:>12} {:>13}\n",
        "equation", "model", "adversarial", "error", "paper", "improvement"
    );
    for r in rows {
        out += &format!(
            "{:<16} {:<9} {:<12} {:>12.3e} {:>12.3e}\n",
            r.equation.name(),
            r.architecture.name(),
            "false",
            r.mean_error_plain,
            r.paper_error_plain
        );
        out += &format!(
            "{:<16} {:<9} {:<12} {:>12.3e} {:>12.3e} {:>12.1}%\n",
            r.equation.name(),
            r.architecture.name(),
            "true",
            r.mean_error_adversarial,
            r.paper_error_adversarial,
            r.improvement_pct
        );
    }
    out
}

/// Runs plain and adversarial variants of every equation for every seed.
/// `base` supplies the shared hyperparameters; its equation, adversarial
/// flag and seed are overridden.
pub fn run_table(equations: &[Equation], seeds: &[u64], base: &ExperimentConfig) -> Result<ExperimentReport> {
    run_table_with(equations, seeds, base, |_| {})
}

/// As [`run_table`], calling `progress` after each run.
pub fn run_table_with(
    equations: &[Equation],
    seeds: &[u64],
    base: &ExperimentConfig,
    mut progress: impl FnMut(&RunReport),
) -> Result<ExperimentReport> {
    if equations.is_empty() {
        return Err(Error::InvalidArgument("no equations".into()));
    }
    let mut runs = Vec::with_capacity(equations.len() * seeds.len() * 2);
    for &equation in equations {
        for &seed in seeds {
            for adversarial in [false, true] {
                let cfg = ExperimentConfig {
                    equation,
                    seed,
                    adversarial,
                    architecture: base.architecture.filter(|a| *a == Architecture::for_equation(equation)),
                    ..base.clone()
                };
                let run = run_experiment(&cfg)?;
                progress(&run);
                runs.push(run);
            }
        }
    }
    Ok(ExperimentReport::new(runs))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    StructuredText,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "toml" | "text" | "structured-text" => Ok(ReportFormat::StructuredText),
            _ => Err(Error::InvalidArgument(format!("unknown report format `{s}`"))),
        }
    }
}

pub const REPORT_COLUMNS: [&str; 8] =
    ["equation", "architecture", "adversarial", "seed", "error", "improvement_pct", "epochs", "wall_clock_s"];

pub fn write_report_csv<W: std::io::Write>(report: &ExperimentReport, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(REPORT_COLUMNS)?;
    for row in report.rows() {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report_csv<R: std::io::Read>(input: R) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != REPORT_COLUMNS {
        return Err(Error::Format(format!("unexpected report columns {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Serialize)]
struct TextReport<'a> {
    table: Vec<TableRow>,
    runs: Vec<TextRun<'a>>,
}

#[derive(Serialize)]
struct TextRun<'a> {
    error: f64,
    improvement_pct: Option<f64>,
    wall_clock_s: f64,
    dataset_checksum: String,
    model_checksum: String,
    loss_history: String,
    config: &'a ExperimentConfig,
}

pub fn report_to_toml(report: &ExperimentReport) -> Result<String> {
    let text = TextReport {
        table: report.table(),
        runs: report
            .runs
            .iter()
            .map(|r| TextRun {
                error: r.error,
                improvement_pct: report.pair_improvement(r),
                wall_clock_s: r.wall_clock_s,
                dataset_checksum: format!("{:016x}", r.dataset_checksum),
                model_checksum: format!("{:016x}", r.model.checksum()),
                loss_history: format!("{}_loss.csv", r.stem()),
                config: &r.config,
            })
            .collect(),
    };
    toml::to_string(&text).map_err(|e| Error::Format(format!("report: {e}")))
}

/// Writes the report file into `dir` along with each run's loss history,
/// plot data and checkpoint. Returns the report path.
pub fn emit_report(report: &ExperimentReport, dir: &Path, format: ReportFormat) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = match format {
        ReportFormat::Csv => {
            let p = dir.join("report.csv");
            write_report_csv(report, std::fs::File::create(&p)?)?;
            p
        }
        ReportFormat::StructuredText => {
            let p = dir.join("report.toml");
            std::fs::write(&p, report_to_toml(report)?)?;
            p
        }
    };
    for r in &report.runs {
        let stem = r.stem();
        r.history.save_csv(&dir.join(format!("{stem}_loss.csv")))?;
        r.plot.save_csv(&dir.join(format!("{stem}_plot.csv")))?;
        std::fs::write(dir.join(format!("{stem}.ckpt")), r.checkpoint_bytes()?)?;
    }
    Ok(path)
}
