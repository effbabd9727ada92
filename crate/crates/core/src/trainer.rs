//! Mini-batch training driver for the recursive embedding schedule.
//!
//! A [`StagePlan`] is an ordered list of phases. Each phase trains the same
//! network with either the t-SNE or the UMAP objective, taking its
//! high-dimensional affinities from the raw rows or from a frozen feature
//! tap of the network itself.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::affinity::{affinities_from_features, AffinityConfig, PerplexityConfig, UmapGraphConfig};
use crate::error::{DreError, Result};
use crate::loss::{loss_grad, KernelConfigs};
use crate::matrix::Matrix;
use crate::nn::{adam_step, init_params, AdamConfig, AdamState, Mode, NetworkParams, NetworkSpec};
use crate::scalar::Scalar;

/// Affinity source naming the raw input rows.
pub const RAW_SOURCE: &str = "raw";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Tsne,
    Umap,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Tsne => "tsne",
            LossKind::Umap => "umap",
        })
    }
}

impl FromStr for LossKind {
    type Err = DreError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsne" => Ok(LossKind::Tsne),
            "umap" => Ok(LossKind::Umap),
            other => Err(DreError::InvalidConfig(format!("unknown loss `{other}` (expected tsne or umap)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Phase {
    pub loss: LossKind,
    /// `raw` or a tap name of the network.
    pub source: String,
    pub epochs: usize,
}

impl Phase {
    pub fn new(loss: LossKind, source: impl Into<String>, epochs: usize) -> Self {
        Self {
            loss,
            source: source.into(),
            epochs,
        }
    }

    pub fn is_raw(&self) -> bool {
        self.source == RAW_SOURCE
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.loss, self.source, self.epochs)
    }
}

impl FromStr for Phase {
    type Err = DreError;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split('/').collect();
        let [loss, source, epochs] = parts[..] else {
            return Err(DreError::InvalidConfig(format!("phase `{s}` is not loss/source/epochs")));
        };
        let epochs = epochs
            .parse()
            .map_err(|_| DreError::InvalidConfig(format!("phase `{s}`: bad epoch count")))?;
        if source.is_empty() {
            return Err(DreError::InvalidConfig(format!("phase `{s}`: empty affinity source")));
        }
        Ok(Phase::new(loss.parse()?, source, epochs))
    }
}

/// Ordered training phases; written as `tsne/raw/100,tsne/dense2000/50,...`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StagePlan {
    pub phases: Vec<Phase>,
}

impl StagePlan {
    /// Base t-SNE, three recursions on Dense-2000/500/100, then UMAP refinement.
    pub fn dre() -> Self {
        Self {
            phases: vec![
                Phase::new(LossKind::Tsne, RAW_SOURCE, 100),
                Phase::new(LossKind::Tsne, "dense2000", 50),
                Phase::new(LossKind::Tsne, "dense500", 50),
                Phase::new(LossKind::Tsne, "dense100", 50),
                Phase::new(LossKind::Umap, RAW_SOURCE, 100),
            ],
        }
    }

    /// Plain parametric t-SNE: one raw phase of 100 epochs.
    pub fn deep_tsne() -> Self {
        Self {
            phases: vec![Phase::new(LossKind::Tsne, RAW_SOURCE, 100)],
        }
    }

    pub fn total_epochs(&self) -> usize {
        self.phases.iter().map(|p| p.epochs).sum()
    }

    pub fn validate(&self, spec: &NetworkSpec) -> Result<()> {
        if self.phases.is_empty() {
            return Err(DreError::InvalidConfig("stage plan has no phases".into()));
        }
        for p in &self.phases {
            if p.epochs == 0 {
                return Err(DreError::InvalidConfig(format!("phase {p} has zero epochs")));
            }
            if !p.is_raw() {
                spec.tap_layer(&p.source)?;
            }
        }
        Ok(())
    }
}

impl Default for StagePlan {
    fn default() -> Self {
        Self::dre()
    }
}

impl fmt::Display for StagePlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.phases.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

impl FromStr for StagePlan {
    type Err = DreError;
    fn from_str(s: &str) -> Result<Self> {
        let phases = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>>>()?;
        if phases.is_empty() {
            return Err(DreError::InvalidConfig("stage plan has no phases".into()));
        }
        Ok(Self { phases })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig<T> {
    pub batch_size: usize,
    pub seed: u64,
    pub perplexity: PerplexityConfig<T>,
    pub umap_graph: UmapGraphConfig<T>,
    pub kernels: KernelConfigs<T>,
    pub adam: AdamConfig<T>,
    pub plan: StagePlan,
    /// Emit a progress line every this many epochs (0 disables).
    pub log_every: usize,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            batch_size: 2500,
            seed: 0,
            perplexity: PerplexityConfig::default(),
            umap_graph: UmapGraphConfig::default(),
            kernels: KernelConfigs::default(),
            adam: AdamConfig::default(),
            plan: StagePlan::default(),
            log_every: 1,
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    pub fn validate(&self, n_rows: usize, spec: &NetworkSpec) -> Result<()> {
        if self.batch_size < 4 {
            return Err(DreError::InvalidConfig(format!("batch_size must be >= 4, got {}", self.batch_size)));
        }
        if self.batch_size > n_rows {
            return Err(DreError::InvalidConfig(format!(
                "batch_size {} exceeds the {n_rows} available rows",
                self.batch_size
            )));
        }
        self.kernels.tsne.validate()?;
        self.kernels.umap.validate()?;
        self.plan.validate(spec)
    }

    fn affinity_config(&self, loss: LossKind) -> AffinityConfig<T> {
        match loss {
            LossKind::Tsne => AffinityConfig::Tsne(self.perplexity),
            LossKind::Umap => AffinityConfig::Umap(self.umap_graph),
        }
    }
}

/// One epoch's shuffle: `perm` holds every index once; `batches` are
/// contiguous ranges of `perm`. A trailing partial batch is left out.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchPartition {
    pub perm: Vec<usize>,
    pub batches: Vec<Range<usize>>,
}

impl BatchPartition {
    pub fn batch(&self, b: usize) -> &[usize] {
        &self.perm[self.batches[b].clone()]
    }

    pub fn dropped(&self) -> &[usize] {
        let end = self.batches.last().map_or(0, |r| r.end);
        &self.perm[end..]
    }
}

pub fn make_epoch_batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Result<BatchPartition> {
    if batch_size == 0 || n < batch_size {
        return Err(DreError::InvalidConfig(format!("cannot cut batches of {batch_size} from {n} rows")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let batches = (0..n / batch_size).map(|b| b * batch_size..(b + 1) * batch_size).collect();
    Ok(BatchPartition { perm, batches })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch counter across the whole run.
    pub epoch: usize,
    pub phase: usize,
    pub phase_label: String,
    pub mean_loss: f64,
    pub batches: usize,
    pub skipped: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub entries: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn phase_losses(&self, phase: usize) -> Vec<f64> {
        self.entries.iter().filter(|e| e.phase == phase).map(|e| e.mean_loss).collect()
    }

    /// Index in `entries` of the first epoch of each phase.
    pub fn phase_boundaries(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (i, e) in self.entries.iter().enumerate() {
            if i == 0 || self.entries[i - 1].phase != e.phase {
                out.push(i);
            }
        }
        out
    }

    /// One line per epoch. Wall time is left out when `timing` is false so
    /// the text is reproducible.
    pub fn to_text(&self, timing: bool) -> String {
        let mut s = String::new();
        for e in &self.entries {
            s.push_str(&e.line(timing));
            s.push('\n');
        }
        s
    }
}

impl EpochRecord {
    pub fn line(&self, timing: bool) -> String {
        let mut line = format!(
            "epoch={} phase={}:{} loss={} batches={} skipped={}",
            self.epoch, self.phase, self.phase_label, self.mean_loss, self.batches, self.skipped
        );
        if timing {
            line.push_str(&format!(" seconds={:.3}", self.seconds));
        }
        line
    }
}

/// Network, optimizer state and shuffling stream. Cloning a trainer is a
/// complete checkpoint: resuming a clone continues the run exactly.
#[derive(Clone, Debug)]
pub struct Trainer<T> {
    pub params: NetworkParams<T>,
    pub adam: AdamState<T>,
    pub config: TrainConfig<T>,
    pub log: TrainLog,
    rng: ChaCha8Rng,
    phases_run: usize,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(spec: &NetworkSpec, config: TrainConfig<T>) -> Result<Self> {
        let params = init_params(spec, config.seed)?;
        Ok(Self::from_params(params, config))
    }

    pub fn from_params(params: NetworkParams<T>, config: TrainConfig<T>) -> Self {
        let adam = AdamState::new(&params, config.adam);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        Self {
            params,
            adam,
            config,
            log: TrainLog::default(),
            rng,
            phases_run: 0,
        }
    }

    /// Trains one phase and appends its epochs to the log.
    pub fn run_phase(&mut self, data: &Matrix<T>, phase: &Phase) -> Result<()> {
        let cfg = self.config.clone();
        cfg.validate(data.rows(), &self.params.spec)?;
        if phase.epochs == 0 {
            return Err(DreError::InvalidConfig(format!("phase {phase} has zero epochs")));
        }
        if data.cols() != self.params.spec.input_dim {
            return Err(DreError::dims("training data columns", self.params.spec.input_dim, data.cols()));
        }
        if !data.is_finite() {
            return Err(DreError::NonFinite("training data".into()));
        }
        let phase_idx = self.phases_run;
        let label = format!("{}/{}", phase.loss, phase.source);
        let affinity_cfg = cfg.affinity_config(phase.loss);

        // Tap features are computed once and held fixed for the whole phase.
        let frozen = if phase.is_raw() {
            None
        } else {
            Some(self.params.features_chunked(data, &phase.source, cfg.batch_size)?)
        };

        for _ in 0..phase.epochs {
            let start = Instant::now();
            let partition = make_epoch_batches(data.rows(), cfg.batch_size, &mut self.rng)?;
            let mut total = 0.0;
            let mut trained = 0;
            let mut skipped = 0;
            for b in 0..partition.batches.len() {
                let idx = partition.batch(b);
                let xb = data.select_rows(idx);
                let fb = frozen.as_ref().map(|f| f.select_rows(idx));
                let affinity = match affinities_from_features(fb.as_ref().unwrap_or(&xb), &affinity_cfg) {
                    Ok(c) => {
                        if !c.unconverged_rows.is_empty() {
                            log::debug!(
                                "phase {phase_idx} ({label}): {} rows hit the bandwidth bracket",
                                c.unconverged_rows.len()
                            );
                        }
                        c.affinity
                    }
                    Err(DreError::DegenerateRow { row, reason }) => {
                        log::warn!("phase {phase_idx} ({label}): skipping batch {b}, row {row}: {reason}");
                        skipped += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let (y, trace) = self.params.forward(&xb, Mode::Train)?;
                let (loss, dy) = loss_grad(&affinity, &y, &cfg.kernels)?;
                if !loss.is_finite() {
                    return Err(DreError::NonFinite(format!(
                        "loss {loss} in phase {phase_idx} ({label}), epoch {}, batch {b}",
                        self.log.entries.len() + 1
                    )));
                }
                let grads = self.params.backward(&trace, &dy)?;
                self.params.absorb_batch_stats(&trace)?;
                adam_step(&mut self.params, &grads, &mut self.adam)?;
                total += loss.as_f64();
                trained += 1;
            }
            if trained == 0 {
                return Err(DreError::Training(format!(
                    "phase {phase_idx} ({label}): every batch of the epoch was degenerate"
                )));
            }
            let record = EpochRecord {
                epoch: self.log.entries.len() + 1,
                phase: phase_idx,
                phase_label: label.clone(),
                mean_loss: total / trained as f64,
                batches: trained,
                skipped,
                seconds: start.elapsed().as_secs_f64(),
            };
            if cfg.log_every > 0 && record.epoch.is_multiple_of(cfg.log_every) {
                log::info!("{}", record.line(true));
            }
            self.log.entries.push(record);
        }
        self.phases_run += 1;
        Ok(())
    }

    /// Runs every phase of the configured plan in order.
    pub fn run_plan(&mut self, data: &Matrix<T>) -> Result<()> {
        let plan = self.config.plan.clone();
        plan.validate(&self.params.spec)?;
        for phase in &plan.phases {
            self.run_phase(data, phase)?;
        }
        Ok(())
    }

    pub fn embed(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        embed(&self.params, x)
    }
}

/// Trains a fresh network through the whole plan.
pub fn run_dre<T: Scalar>(data: &Matrix<T>, spec: &NetworkSpec, config: TrainConfig<T>) -> Result<(NetworkParams<T>, TrainLog)> {
    config.validate(data.rows(), spec)?;
    let mut trainer = Trainer::new(spec, config)?;
    trainer.run_plan(data)?;
    Ok((trainer.params, trainer.log))
}

/// Rows processed per inference chunk by [`embed`].
pub const EMBED_CHUNK: usize = 2500;

/// Out-of-sample projection: an inference-mode forward pass, so every row
/// is mapped independently of the others.
pub fn embed<T: Scalar>(params: &NetworkParams<T>, x: &Matrix<T>) -> Result<Matrix<T>> {
    params.embed_chunked(x, EMBED_CHUNK)
}
