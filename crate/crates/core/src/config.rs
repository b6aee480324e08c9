//! Run configuration: TOML on disk, validated before any data is touched,
//! and identified in checkpoints and reports by a canonical content hash.
//!
//! Every section has defaults, so a config file only needs the fields it
//! overrides. The hash covers the sections that change what a model *is*
//! or how it is trained (`model`, `dynamics`, `objective`, `optim`); data
//! paths, seeds, the epoch budget and the `gradcheck` section are excluded
//! so a checkpoint can be evaluated from another directory, under another
//! seed list, or resumed with more epochs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Context-conditioned softmax over sub-state scores.
    Learned,
    /// Fixed weights `1/K`.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transitions {
    /// Each sub-state owns its gate weights and decay rates.
    Heterogeneous,
    /// All sub-states share one set of gate weights and one `(λ, μ)`.
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Uniform,
    Popularity,
}

/// Ablation variants, each a switch applied to a full-model config whose
/// decision state has size `d = k · d_s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    /// One state of size `d`.
    Monolithic,
    /// One state of size `d_s`.
    SingleSmall,
    /// `α = 1/K` at every step.
    UniformAgg,
    /// One set of transition weights and one `(λ, μ)` shared by all sub-states.
    Homogeneous,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::Monolithic,
        Variant::SingleSmall,
        Variant::UniformAgg,
        Variant::Homogeneous,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Monolithic => "monolithic",
            Variant::SingleSmall => "single_small",
            Variant::UniformAgg => "uniform_agg",
            Variant::Homogeneous => "homogeneous",
        }
    }

    pub fn apply(self, base: &RunConfig) -> RunConfig {
        let mut cfg = base.clone();
        let m = &mut cfg.model;
        match self {
            Variant::Full => {}
            Variant::Monolithic => {
                m.d_s *= m.k;
                m.k = 1;
            }
            Variant::SingleSmall => m.k = 1,
            Variant::UniformAgg => m.aggregation = Aggregation::Uniform,
            Variant::Homogeneous => m.transitions = Transitions::Shared,
        }
        cfg
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
            Error::config(
                "variant",
                format!("unknown variant {s:?}; expected one of {}", names.join(", ")),
            )
        })
    }
}

/// How a timestamp maps to a discrete time slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotScheme {
    /// 24 slots: hour of day.
    Hour,
    /// 48 slots: hour of day, weekday/weekend.
    HourWeekend,
    /// 168 slots: hour of week.
    HourOfWeek,
}

impl SlotScheme {
    pub fn from_count(n_slot: usize) -> Option<Self> {
        match n_slot {
            24 => Some(SlotScheme::Hour),
            48 => Some(SlotScheme::HourWeekend),
            168 => Some(SlotScheme::HourOfWeek),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_e: usize,
    pub k: usize,
    pub d_s: usize,
    pub d_slot: usize,
    pub d_dist: usize,
    pub d_spatial: usize,
    pub n_slot: usize,
    /// Finite bucket edges in km, starting at 0. Bucket count equals the
    /// number of edges.
    pub bucket_edges: Vec<f64>,
    pub aggregation: Aggregation,
    pub transitions: Transitions,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_e: 128,
            k: 4,
            d_s: 32,
            d_slot: 8,
            d_dist: 8,
            d_spatial: 16,
            n_slot: 48,
            bucket_edges: vec![0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0],
            aggregation: Aggregation::Learned,
            transitions: Transitions::Heterogeneous,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsConfig {
    /// Time normalizer in seconds.
    pub tau_t: f64,
    /// Distance normalizer in km.
    pub tau_d: f64,
    /// Aggregation softmax temperature.
    pub temperature: f64,
    /// Initial effective decay rate of sub-state 0.
    pub decay_init: f64,
    /// Added per sub-state index to the initial decay rate.
    pub decay_stagger: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            tau_t: 86_400.0,
            tau_d: 10.0,
            temperature: 1.0,
            decay_init: 0.5,
            decay_stagger: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub n_neg: usize,
    pub label_smoothing: f64,
    pub hard_negatives: usize,
    pub margin: f64,
    pub bpr_weight: f64,
    pub sampler: SamplerKind,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            n_neg: 100,
            label_smoothing: 0.1,
            hard_negatives: 10,
            margin: 0.5,
            bpr_weight: 0.1,
            sampler: SamplerKind::Uniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub dropout: f64,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub max_seq_len: usize,
    /// Non-protocol speed option: validate on only the first N users.
    pub val_subsample: Option<usize>,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
            batch_size: 256,
            dropout: 0.2,
            epochs: 100,
            patience: 10,
            max_seq_len: 200,
            val_subsample: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset file written by `preprocess` or `synth`.
    pub dataset: Option<PathBuf>,
    /// Label used in reports; defaults to the dataset's own name.
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seeds: Vec<u64>,
    pub deterministic: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seeds: vec![0, 1, 2, 3, 4],
            deterministic: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub n_pois: usize,
    pub batch: usize,
    pub seq_len: usize,
    /// Shape overrides applied on top of the run config, keeping the check
    /// small enough to perturb every coordinate.
    pub d_e: usize,
    pub k: usize,
    pub d_s: usize,
    pub n_neg: usize,
    pub hard_negatives: usize,
    pub fd_step: f64,
    pub tolerance: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            n_pois: 40,
            batch: 3,
            seq_len: 5,
            d_e: 12,
            k: 2,
            d_s: 6,
            n_neg: 8,
            hard_negatives: 3,
            fd_step: 1e-4,
            tolerance: 1e-4,
        }
    }
}

impl GradcheckConfig {
    /// `base` with this section's shape overrides applied.
    pub fn apply(&self, base: &RunConfig) -> RunConfig {
        let mut cfg = base.clone();
        cfg.model.d_e = self.d_e;
        cfg.model.k = self.k;
        cfg.model.d_s = self.d_s;
        cfg.objective.n_neg = self.n_neg;
        cfg.objective.hard_negatives = self.hard_negatives;
        cfg
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub dynamics: DynamicsConfig,
    pub objective: ObjectiveConfig,
    pub optim: OptimConfig,
    pub run: RunSection,
    pub gradcheck: GradcheckConfig,
}

#[derive(Serialize)]
struct HashedView<'a> {
    model: &'a ModelConfig,
    dynamics: &'a DynamicsConfig,
    objective: &'a ObjectiveConfig,
    optim: &'a OptimConfig,
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be finite and > 0, got {v}")))
    }
}

fn nonzero(field: &str, v: usize) -> Result<()> {
    if v >= 1 {
        Ok(())
    } else {
        Err(Error::config(field, "must be >= 1"))
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config("<file>", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file. Relative data paths are resolved
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Input {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (Some(ds), Some(dir)) = (cfg.data.dataset.as_ref(), path.parent()) {
            if ds.is_relative() {
                cfg.data.dataset = Some(dir.join(ds));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        nonzero("model.d_e", m.d_e)?;
        nonzero("model.k", m.k)?;
        nonzero("model.d_s", m.d_s)?;
        nonzero("model.d_slot", m.d_slot)?;
        nonzero("model.d_dist", m.d_dist)?;
        nonzero("model.d_spatial", m.d_spatial)?;
        if SlotScheme::from_count(m.n_slot).is_none() {
            return Err(Error::config("model.n_slot", "must be 24, 48 or 168"));
        }
        if m.bucket_edges.is_empty() || m.bucket_edges[0] != 0.0 {
            return Err(Error::config("model.bucket_edges", "must start at 0"));
        }
        if m.bucket_edges.windows(2).any(|w| w[1] <= w[0] || !w[1].is_finite()) {
            return Err(Error::config(
                "model.bucket_edges",
                "must be finite and strictly increasing",
            ));
        }

        let d = &self.dynamics;
        positive("dynamics.tau_t", d.tau_t)?;
        positive("dynamics.tau_d", d.tau_d)?;
        positive("dynamics.temperature", d.temperature)?;
        positive("dynamics.decay_init", d.decay_init)?;
        if !(d.decay_stagger.is_finite() && d.decay_stagger >= 0.0) {
            return Err(Error::config("dynamics.decay_stagger", "must be >= 0"));
        }

        let o = &self.objective;
        nonzero("objective.n_neg", o.n_neg)?;
        if !(0.0..1.0).contains(&o.label_smoothing) {
            return Err(Error::config("objective.label_smoothing", "must satisfy 0 <= eps < 1"));
        }
        nonzero("objective.hard_negatives", o.hard_negatives)?;
        if o.hard_negatives > o.n_neg {
            return Err(Error::config(
                "objective.hard_negatives",
                "must not exceed objective.n_neg",
            ));
        }
        if !(o.margin.is_finite() && o.margin >= 0.0) {
            return Err(Error::config("objective.margin", "must be >= 0"));
        }
        if !(o.bpr_weight.is_finite() && o.bpr_weight >= 0.0) {
            return Err(Error::config("objective.bpr_weight", "must be >= 0"));
        }
        if o.sampler != SamplerKind::Uniform {
            return Err(Error::config("objective.sampler", "only \"uniform\" is implemented"));
        }

        let p = &self.optim;
        positive("optim.lr", p.lr)?;
        if !(0.0..1.0).contains(&p.beta1) {
            return Err(Error::config("optim.beta1", "must be in [0, 1)"));
        }
        if !(0.0..1.0).contains(&p.beta2) {
            return Err(Error::config("optim.beta2", "must be in [0, 1)"));
        }
        positive("optim.eps", p.eps)?;
        if !(p.weight_decay.is_finite() && p.weight_decay >= 0.0) {
            return Err(Error::config("optim.weight_decay", "must be >= 0"));
        }
        nonzero("optim.batch_size", p.batch_size)?;
        if !(0.0..1.0).contains(&p.dropout) {
            return Err(Error::config("optim.dropout", "must be in [0, 1)"));
        }
        nonzero("optim.epochs", p.epochs)?;
        if p.max_seq_len < 2 {
            return Err(Error::config("optim.max_seq_len", "must be >= 2"));
        }
        if p.val_subsample == Some(0) {
            return Err(Error::config("optim.val_subsample", "must be >= 1"));
        }

        let g = &self.gradcheck;
        positive("gradcheck.fd_step", g.fd_step)?;
        positive("gradcheck.tolerance", g.tolerance)?;
        nonzero("gradcheck.batch", g.batch)?;
        nonzero("gradcheck.d_e", g.d_e)?;
        nonzero("gradcheck.k", g.k)?;
        nonzero("gradcheck.d_s", g.d_s)?;
        nonzero("gradcheck.hard_negatives", g.hard_negatives)?;
        if g.hard_negatives > g.n_neg {
            return Err(Error::config(
                "gradcheck.hard_negatives",
                "must not exceed gradcheck.n_neg",
            ));
        }
        if g.seq_len < 2 {
            return Err(Error::config("gradcheck.seq_len", "must be >= 2"));
        }
        if g.n_pois <= g.n_neg {
            return Err(Error::config("gradcheck.n_pois", "must exceed gradcheck.n_neg"));
        }
        Ok(())
    }

    pub fn slot_scheme(&self) -> SlotScheme {
        SlotScheme::from_count(self.model.n_slot).expect("validated n_slot")
    }

    /// Hex SHA-256 of the canonical JSON form of the hashed sections.
    pub fn hash(&self) -> String {
        // the epoch budget only decides where a run stops, so a checkpoint
        // can be resumed under a larger one
        let optim = OptimConfig {
            epochs: 0,
            ..self.optim.clone()
        };
        let view = HashedView {
            model: &self.model,
            dynamics: &self.dynamics,
            objective: &self.objective,
            optim: &optim,
        };
        let canonical = serde_json::to_vec(&view).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}
