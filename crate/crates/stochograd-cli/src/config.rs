//! Experiment configuration: a single JSON document, every field echoed back
//! into the output sidecar, unknown keys rejected.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SpikesDeblur,
    CtSheppLogan,
    DenoiseTv,
    DenoiseTgv,
    TridiagLs,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::SpikesDeblur => "spikes-deblur",
            ExperimentKind::CtSheppLogan => "ct-shepp-logan",
            ExperimentKind::DenoiseTv => "denoise-tv",
            ExperimentKind::DenoiseTgv => "denoise-tgv",
            ExperimentKind::TridiagLs => "tridiag-ls",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Gd,
    Nag,
    NagSc,
    Pgd,
    Fista,
    Pdhg,
    Admm,
    CondatVu,
    Pd3o,
    CoordinateDescent,
    Sgd,
    Sag,
    Saga,
    SagaModified,
    Svrg,
    Lsvrg,
    AccSaga,
    AccSvrg,
    Spdhg,
    Adam,
    DiagSgd,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Gd => "gd",
            Algorithm::Nag => "nag",
            Algorithm::NagSc => "nag-sc",
            Algorithm::Pgd => "pgd",
            Algorithm::Fista => "fista",
            Algorithm::Pdhg => "pdhg",
            Algorithm::Admm => "admm",
            Algorithm::CondatVu => "condat-vu",
            Algorithm::Pd3o => "pd3o",
            Algorithm::CoordinateDescent => "coordinate-descent",
            Algorithm::Sgd => "sgd",
            Algorithm::Sag => "sag",
            Algorithm::Saga => "saga",
            Algorithm::SagaModified => "saga-modified",
            Algorithm::Svrg => "svrg",
            Algorithm::Lsvrg => "lsvrg",
            Algorithm::AccSaga => "acc-saga",
            Algorithm::AccSvrg => "acc-svrg",
            Algorithm::Spdhg => "spdhg",
            Algorithm::Adam => "adam",
            Algorithm::DiagSgd => "diag-sgd",
        }
    }

    pub fn parse(s: &str) -> Option<Algorithm> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).ok()
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(
            self,
            Algorithm::Sgd
                | Algorithm::Sag
                | Algorithm::Saga
                | Algorithm::SagaModified
                | Algorithm::Svrg
                | Algorithm::Lsvrg
                | Algorithm::AccSaga
                | Algorithm::AccSvrg
                | Algorithm::Spdhg
                | Algorithm::Adam
                | Algorithm::DiagSgd
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default = "default_noise_kind")]
    pub kind: NoiseKind,
    /// Gaussian standard deviation.
    #[serde(default = "one")]
    pub sigma: f64,
    /// Beer–Lambert initial beam intensity.
    #[serde(default = "default_i0")]
    pub i0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    None,
    Gaussian,
    BeerLambert,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            kind: NoiseKind::Gaussian,
            sigma: 1.0,
            i0: 5000.0,
        }
    }
}

fn default_noise_kind() -> NoiseKind {
    NoiseKind::Gaussian
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ProblemParams {
    /// Signal length of the deblurring problem.
    #[serde(default = "default_d")]
    pub d: usize,
    /// Blur kernel width (odd).
    #[serde(default = "default_kappa")]
    pub kappa: usize,
    #[serde(default = "default_spikes")]
    pub n_spikes: usize,
    /// Image side of the CT / denoising problems.
    #[serde(default = "default_size")]
    pub size: usize,
    #[serde(default = "default_angles")]
    pub angles: usize,
    /// Detector bins; `3*size/2` when omitted.
    #[serde(default)]
    pub detectors: Option<usize>,
    #[serde(default)]
    pub noise: NoiseSpec,
    /// TV weight of the CT / denoising objectives.
    #[serde(default = "one")]
    pub alpha: f64,
    /// Second-order TGV weight ratio.
    #[serde(default = "two")]
    pub beta: f64,
    /// l1 weight rule for spikes: mu = mu_scale * ||K* v||_inf.
    #[serde(default = "half")]
    pub mu_scale: f64,
    /// Peak attenuation the sinogram is scaled to before the Beer–Lambert
    /// pipeline.
    #[serde(default = "default_attenuation")]
    pub peak_attenuation: f64,
}

impl Default for ProblemParams {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

fn default_d() -> usize {
    1000
}
fn default_kappa() -> usize {
    5
}
fn default_spikes() -> usize {
    20
}
fn default_size() -> usize {
    64
}
fn default_angles() -> usize {
    120
}
fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn half() -> f64 {
    0.5
}
fn default_i0() -> f64 {
    5000.0
}
fn default_attenuation() -> f64 {
    4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RestartSpec {
    Off,
    FunctionValue,
    Gradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SolverParams {
    /// Primal step; the per-algorithm default rule applies when omitted.
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub sigma: Option<f64>,
    /// Multiplier on the default step rule (e.g. 3/1.75 for the aggressive
    /// SAGA step of the spikes experiment).
    #[serde(default = "one")]
    pub step_scale: f64,
    #[serde(default = "default_restart")]
    pub restart: RestartSpec,
    /// Stop when the relative iterate change drops below this.
    #[serde(default)]
    pub rel_change_tol: Option<f64>,
    /// Stop when the relative distance to the reference solution drops
    /// below this (needs `reference-passes`).
    #[serde(default)]
    pub target_tol: Option<f64>,
    /// Strong-convexity constant for the nag-sc momentum.
    #[serde(default)]
    pub mu: Option<f64>,
    /// FGP budget of each TV prox.
    #[serde(default = "default_fgp")]
    pub fgp_iters: usize,
    /// Loopless-SVRG refresh probability; two-loop SVRG when absent.
    #[serde(default)]
    pub loopless_p: Option<f64>,
    /// SVRG inner loop length; `2 n` when absent.
    #[serde(default)]
    pub inner_length: Option<usize>,
    /// Coordinate-descent block size.
    #[serde(default = "one_usize")]
    pub block_size: usize,
    /// SPDHG gamma / rho parameters.
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Run this many passes of plain SGD before a variance-reduced method.
    #[serde(default)]
    pub warm_start_passes: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

fn default_restart() -> RestartSpec {
    RestartSpec::Off
}
fn default_fgp() -> usize {
    100
}
fn one_usize() -> usize {
    1
}
fn default_rho() -> f64 {
    0.99
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ScheduleSpec {
    #[serde(default = "default_schedule_kind")]
    pub kind: ScheduleKind,
    #[serde(default = "default_c")]
    pub c: f64,
    /// Decay exponent: 1 (linear in k) or 0.5 (linear in sqrt k).
    #[serde(default = "one")]
    pub power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    Constant,
    SgdDecay,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec {
            kind: ScheduleKind::SgdDecay,
            c: 0.01,
            power: 1.0,
        }
    }
}

fn default_schedule_kind() -> ScheduleKind {
    ScheduleKind::SgdDecay
}
fn default_c() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SamplerSpec {
    #[serde(default = "default_sampler_kind")]
    pub kind: SamplerKindSpec,
    /// Separate sampler seed; the experiment seed when omitted.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKindSpec {
    Uniform,
    Permutation,
    Cyclic,
    HermanMeyer,
    /// Probabilities proportional to the subset Lipschitz constants.
    Importance,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        SamplerSpec {
            kind: SamplerKindSpec::Uniform,
            seed: None,
        }
    }
}

fn default_sampler_kind() -> SamplerKindSpec {
    SamplerKindSpec::Uniform
}

/// The whole experiment description; serialisable, echoed as a sidecar next
/// to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    /// Algorithms of a `compare` sweep; falls back to `algorithm` alone.
    #[serde(default)]
    pub algorithms: Vec<Algorithm>,
    /// Budget in data passes.
    #[serde(default = "default_passes")]
    pub passes: f64,
    /// Number of subsets of the stochastic methods.
    #[serde(default)]
    pub subsets: Option<usize>,
    #[serde(default)]
    pub out: Option<String>,
    #[serde(default)]
    pub problem: ProblemParams,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub sampler: SamplerSpec,
    /// Budget of the inline FISTA reference run feeding the subopt column;
    /// no reference when absent.
    #[serde(default)]
    pub reference_passes: Option<f64>,
    /// Record wall-clock seconds in the CSV. Off by default so identical
    /// config + seed produce byte-identical CSVs.
    #[serde(default)]
    pub timing: bool,
}

fn default_seed() -> u64 {
    0
}
fn default_algorithm() -> Algorithm {
    Algorithm::Pgd
}
fn default_passes() -> f64 {
    10.0
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        let mut cfg: ExperimentConfig =
            serde_json::from_value(serde_json::json!({ "experiment": experiment.name() }))
                .expect("defaults");
        if experiment == ExperimentKind::TridiagLs {
            cfg.algorithm = Algorithm::Gd;
        }
        cfg
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Effective sampler seed.
    pub fn sampler_seed(&self) -> u64 {
        self.sampler.seed.unwrap_or(self.seed)
    }

    /// Effective subset count for the experiment.
    pub fn n_subsets(&self) -> usize {
        match self.subsets {
            Some(n) => n,
            None => match self.experiment {
                // the deblurring experiment splits into single rows
                ExperimentKind::SpikesDeblur => self.problem.d,
                ExperimentKind::CtSheppLogan => 10,
                _ => 1,
            },
        }
    }

    pub fn detectors(&self) -> usize {
        self.problem.detectors.unwrap_or(3 * self.problem.size / 2)
    }
}
