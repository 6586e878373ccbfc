//! Run configuration: defaults, JSON config file, flag overrides.
//!
//! Precedence is flags over file over defaults. The merged `RunConfig` is
//! embedded verbatim in every output artifact, so a stored artifact can be
//! reproduced by feeding its `config` block back as a config file. Outputs
//! carry no timestamps; reruns are byte-identical.

use std::path::{Path, PathBuf};

use landmark_maxent::cubic::{CubicFitConfig, McmcConfig};
use landmark_maxent::error::{Error, Result};
use landmark_maxent::geometry::AngleMode;
use landmark_maxent::grbm::GrbmTrainConfig;
use landmark_maxent::linalg::DEFAULT_EIGEN_THRESHOLD;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Flavor {
    Bare,
    Intersubject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AngleFlag {
    /// Folded arctan convention on (-pi/2, pi/2].
    Arctan,
    /// Full-circle atan2 convention on (-pi, pi].
    Atan2,
}

impl AngleFlag {
    pub fn mode(self) -> AngleMode {
        match self {
            AngleFlag::Arctan => AngleMode::FoldedArctan,
            AngleFlag::Atan2 => AngleMode::FullCircle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    /// The bundled landmark fixture: 16-dim constrained Gaussian cohort.
    Fixture,
    /// Two classes differing only in their mean.
    Mean,
    /// Two classes differing only in one pair correlation.
    Pairwise,
    /// Two classes differing only in one third-order moment.
    ThirdOrder,
}

/// Cubic fit hyperparameters as they appear in configs and output
/// provenance. Defaults mirror the library's.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CubicSettings {
    pub eta_h: f64,
    pub eta_j: f64,
    pub eta_q: f64,
    pub max_epochs: usize,
    pub check_every: usize,
    pub rel_tol: f64,
    pub stall_epochs: usize,
    pub fit_repeated_q: bool,
    pub box_sigmas: f64,
    pub divergence_threshold: f64,
    pub n_chains: usize,
    pub burn_in: usize,
    pub n_sweeps: usize,
    pub thin: usize,
}

impl Default for CubicSettings {
    fn default() -> Self {
        let fit = CubicFitConfig::default();
        let mcmc = McmcConfig::default();
        Self {
            eta_h: fit.eta_h,
            eta_j: fit.eta_j,
            eta_q: fit.eta_q,
            max_epochs: fit.max_epochs,
            check_every: fit.check_every,
            rel_tol: fit.rel_tol,
            stall_epochs: fit.stall_epochs,
            fit_repeated_q: fit.fit_repeated_q,
            box_sigmas: fit.box_sigmas,
            divergence_threshold: fit.divergence_threshold,
            n_chains: mcmc.n_chains,
            burn_in: mcmc.burn_in,
            n_sweeps: mcmc.n_sweeps,
            thin: mcmc.thin,
        }
    }
}

impl CubicSettings {
    pub fn fit_config(&self, seed: u64) -> CubicFitConfig {
        CubicFitConfig {
            eta_h: self.eta_h,
            eta_j: self.eta_j,
            eta_q: self.eta_q,
            max_epochs: self.max_epochs,
            check_every: self.check_every,
            rel_tol: self.rel_tol,
            stall_epochs: self.stall_epochs,
            fit_repeated_q: self.fit_repeated_q,
            box_sigmas: self.box_sigmas,
            divergence_threshold: self.divergence_threshold,
            mcmc: McmcConfig {
                n_chains: self.n_chains,
                burn_in: self.burn_in,
                n_sweeps: self.n_sweeps,
                thin: self.thin,
                ..McmcConfig::default()
            },
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrbmSettings {
    pub n_hidden: usize,
    pub steps: usize,
    pub batch: usize,
    pub eta_start: f64,
    pub eta_end: f64,
    pub n_chains: usize,
    pub sigma_init: f64,
    pub train_sigma: bool,
    pub rescale_sigma: bool,
    pub eval_every: usize,
    pub window: usize,
}

impl Default for GrbmSettings {
    fn default() -> Self {
        let cfg = GrbmTrainConfig::default();
        Self {
            n_hidden: cfg.n_hidden,
            steps: cfg.steps,
            batch: cfg.batch,
            eta_start: cfg.eta_start,
            eta_end: cfg.eta_end,
            n_chains: cfg.n_chains,
            sigma_init: cfg.sigma_init,
            train_sigma: cfg.train_sigma,
            rescale_sigma: cfg.rescale_sigma,
            eval_every: cfg.eval_every,
            window: cfg.window,
        }
    }
}

impl GrbmSettings {
    pub fn train_config(&self, seed: u64) -> GrbmTrainConfig {
        GrbmTrainConfig {
            n_hidden: self.n_hidden,
            steps: self.steps,
            batch: self.batch,
            eta_start: self.eta_start,
            eta_end: self.eta_end,
            momentum: 0.0,
            n_chains: self.n_chains,
            sigma_init: self.sigma_init,
            train_sigma: self.train_sigma,
            rescale_sigma: self.rescale_sigma,
            eval_every: self.eval_every,
            window: self.window,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSettings {
    pub kind: SynthKind,
    pub n_subjects: usize,
    pub per_subject: usize,
    pub ambient_dim: usize,
    pub n_null: usize,
    /// Mean separation for `mean` data.
    pub shift: f64,
    /// Planted correlation for `pairwise` data.
    pub rho: f64,
    /// Planted third-order coupling for `third-order` data.
    pub q: f64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            kind: SynthKind::Fixture,
            n_subjects: 50,
            per_subject: 40,
            ambient_dim: 8,
            n_null: 3,
            shift: 0.3,
            rho: 0.3,
            q: 0.25,
        }
    }
}

/// The merged configuration of one command invocation.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub input: Option<PathBuf>,
    pub input_b: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub constraints: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub model: String,
    pub flavor: Flavor,
    pub train_fraction: f64,
    pub seed: u64,
    pub eigen_threshold: f64,
    pub angle_mode: AngleFlag,
    pub import_scores: Option<PathBuf>,
    pub n_samples: usize,
    pub n_bootstrap: usize,
    pub n_realizations: usize,
    pub cubic: CubicSettings,
    pub grbm: GrbmSettings,
    pub synth: SynthSettings,
}

/// Config-file shape: every key optional, unknown keys rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub input_b: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub constraints: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub model: Option<String>,
    pub flavor: Option<Flavor>,
    pub train_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub eigen_threshold: Option<f64>,
    pub angle_mode: Option<AngleFlag>,
    pub import_scores: Option<PathBuf>,
    pub n_samples: Option<usize>,
    pub n_bootstrap: Option<usize>,
    pub n_realizations: Option<usize>,
    pub cubic: Option<CubicSettings>,
    pub grbm: Option<GrbmSettings>,
    pub synth: Option<SynthSettings>,
    /// Accepted and ignored so a stored `config` block can be replayed
    /// against the same command.
    #[allow(dead_code)]
    pub command: Option<String>,
}

pub const MODEL_TAGS: [&str; 7] = [
    "maxent1",
    "maxent2",
    "maxent2-approx",
    "maxent2-nullxy",
    "maxent2-dot",
    "maxent3",
    "grbm",
];

pub fn load_file_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::parse(format!("config {}: {e}", path.display())))
}

/// Flag values as parsed by clap; `None` means "not given on the command
/// line", letting the file value (then the default) through.
#[derive(Debug, Default, clap::Args)]
pub struct CommonFlags {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Input dataset CSV (class A for classify; report JSON for report).
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Class-B dataset CSV for classify.
    #[arg(long, global = true)]
    pub input_b: Option<PathBuf>,
    /// Dataset manifest JSON (landmark count, units, mean positions).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Constraint-set JSON from a previous fit (used by sample).
    #[arg(long, global = true)]
    pub constraints: Option<PathBuf>,
    /// Directory for output artifacts (created if absent).
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Model family.
    #[arg(long, global = true, value_parser = MODEL_TAGS)]
    pub model: Option<String>,
    /// Moment flavor.
    #[arg(long, global = true, value_enum)]
    pub flavor: Option<Flavor>,
    /// Fraction of subjects in the training split.
    #[arg(long, global = true)]
    pub train_fraction: Option<f64>,
    /// Base random seed for every stochastic stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Relative eigenvalue threshold separating null from retained modes.
    #[arg(long, global = true)]
    pub eigen_threshold: Option<f64>,
    /// Angle convention for the angle histograms.
    #[arg(long, global = true, value_enum)]
    pub angle_mode: Option<AngleFlag>,
    /// External score CSV to include in the classify ladder.
    #[arg(long, global = true)]
    pub import_scores: Option<PathBuf>,
    /// Number of vectors for sample.
    #[arg(long, global = true)]
    pub n_samples: Option<usize>,
    /// Bootstrap replicates for bare-moment errors.
    #[arg(long, global = true)]
    pub n_bootstrap: Option<usize>,
    /// Realizations for inter-subject moment estimates.
    #[arg(long, global = true)]
    pub n_realizations: Option<usize>,
    /// Synthetic data kind for synth.
    #[arg(long, global = true, value_enum)]
    pub synth_kind: Option<SynthKind>,
}

pub fn merge(command: &str, flags: &CommonFlags) -> Result<RunConfig> {
    let file = match &flags.config {
        Some(path) => load_file_config(path)?,
        None => FileConfig::default(),
    };
    let config = RunConfig {
        command: command.to_string(),
        input: flags.input.clone().or(file.input),
        input_b: flags.input_b.clone().or(file.input_b),
        manifest: flags.manifest.clone().or(file.manifest),
        constraints: flags.constraints.clone().or(file.constraints),
        output_dir: flags
            .output_dir
            .clone()
            .or(file.output_dir)
            .unwrap_or_else(|| PathBuf::from("out")),
        model: flags.model.clone().or(file.model).unwrap_or_else(|| "maxent2".to_string()),
        flavor: flags.flavor.or(file.flavor).unwrap_or(Flavor::Bare),
        train_fraction: flags.train_fraction.or(file.train_fraction).unwrap_or(0.5),
        seed: flags.seed.or(file.seed).unwrap_or(0),
        eigen_threshold: flags
            .eigen_threshold
            .or(file.eigen_threshold)
            .unwrap_or(DEFAULT_EIGEN_THRESHOLD),
        angle_mode: flags.angle_mode.or(file.angle_mode).unwrap_or(AngleFlag::Arctan),
        import_scores: flags.import_scores.clone().or(file.import_scores),
        n_samples: flags.n_samples.or(file.n_samples).unwrap_or(1000),
        n_bootstrap: flags.n_bootstrap.or(file.n_bootstrap).unwrap_or(1000),
        n_realizations: flags.n_realizations.or(file.n_realizations).unwrap_or(1000),
        cubic: file.cubic.unwrap_or_default(),
        grbm: file.grbm.unwrap_or_default(),
        synth: {
            let mut s = file.synth.unwrap_or_default();
            if let Some(kind) = flags.synth_kind {
                s.kind = kind;
            }
            s
        },
    };
    if !(config.train_fraction > 0.0 && config.train_fraction < 1.0) {
        return Err(Error::precondition(format!(
            "train fraction must be strictly between 0 and 1, got {}",
            config.train_fraction
        )));
    }
    if !(config.eigen_threshold > 0.0 && config.eigen_threshold < 1.0) {
        return Err(Error::precondition(format!(
            "eigen threshold must be in (0, 1), got {}",
            config.eigen_threshold
        )));
    }
    Ok(config)
}

impl RunConfig {
    pub fn require_input(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| Error::precondition("this command needs --input"))
    }
}
