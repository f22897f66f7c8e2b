//! Experiment configuration: JSON schema, validation and conversion into core
//! types.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wdrc::design::DesignOptions;
use wdrc::model::{self, CostWeights, DisturbanceModel, LinearSystem, NominalMoments};
use wdrc::{Mat, Vector};

use crate::CliError;

/// A matrix written as nested rows, `{"diag": [...]}` or
/// `{"identity": n, "scale": s}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Rows(Vec<Vec<f64>>),
    Diag {
        diag: Vec<f64>,
    },
    Identity {
        identity: usize,
        #[serde(default = "one")]
        scale: f64,
    },
}

/// A vector written as a list or `{"fill": x, "len": n}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorSpec {
    List(Vec<f64>),
    Fill { fill: f64, len: usize },
}

fn one() -> f64 {
    1.0
}

impl MatrixSpec {
    pub fn build(&self, field: &str) -> Result<Mat, CliError> {
        match self {
            MatrixSpec::Rows(rows) => wdrc::io::rows_to_mat(rows).map_err(|e| CliError::schema(field, e)),
            MatrixSpec::Diag { diag } => Ok(Mat::from_diagonal(&Vector::from_vec(diag.clone()))),
            MatrixSpec::Identity { identity, scale } => Ok(Mat::identity(*identity, *identity) * *scale),
        }
    }
}

impl VectorSpec {
    pub fn build(&self) -> Vector {
        match self {
            VectorSpec::List(v) => Vector::from_vec(v.clone()),
            VectorSpec::Fill { fill, len } => Vector::from_element(*len, *fill),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    Gaussian { mean: VectorSpec, cov: MatrixSpec },
    UniformBox { lo: VectorSpec, hi: VectorSpec },
    Empirical { samples: Vec<Vec<f64>> },
}

impl DistributionSpec {
    pub fn build(&self, field: &str) -> Result<DisturbanceModel, CliError> {
        let m = match self {
            DistributionSpec::Gaussian { mean, cov } => DisturbanceModel::Gaussian {
                mean: mean.build(),
                cov: cov.build(&format!("{field}.cov"))?,
            },
            DistributionSpec::UniformBox { lo, hi } => DisturbanceModel::UniformBox {
                lo: lo.build(),
                hi: hi.build(),
            },
            DistributionSpec::Empirical { samples } => DisturbanceModel::Empirical {
                samples: samples.iter().cloned().map(Vector::from_vec).collect(),
            },
        };
        m.validate().map_err(|e| CliError::schema(field, e))?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    Inline {
        a: MatrixSpec,
        b: MatrixSpec,
        c: MatrixSpec,
        m: MatrixSpec,
        m0: VectorSpec,
        m0_cov: MatrixSpec,
    },
    /// Ring-plus-chords swing-equation grid, discretized with a zero-order hold.
    PowerGrid {
        #[serde(default = "default_generators")]
        generators: usize,
        #[serde(default = "default_chords")]
        chords: Vec<(usize, usize)>,
        #[serde(default)]
        inertia: Option<Vec<f64>>,
        #[serde(default)]
        damping: Option<Vec<f64>>,
        observed_generators: usize,
        dt: f64,
        m: MatrixSpec,
        m0: VectorSpec,
        m0_cov: MatrixSpec,
    },
}

fn default_generators() -> usize {
    10
}

fn default_chords() -> Vec<(usize, usize)> {
    vec![(0, 5), (2, 7), (4, 9)]
}

impl SystemSpec {
    pub fn build(&self) -> Result<LinearSystem, CliError> {
        let sys = match self {
            SystemSpec::Inline { a, b, c, m, m0, m0_cov } => LinearSystem::new(
                a.build("system.a")?,
                b.build("system.b")?,
                c.build("system.c")?,
                m.build("system.m")?,
                m0.build(),
                m0_cov.build("system.m0_cov")?,
            ),
            SystemSpec::PowerGrid {
                generators,
                chords,
                inertia,
                damping,
                observed_generators,
                dt,
                m,
                m0,
                m0_cov,
            } => {
                let n = *generators;
                let lap = model::ring_laplacian(n, chords).map_err(|e| CliError::schema("system.chords", e))?;
                let inertia = inertia.clone().unwrap_or_else(|| vec![1.0; n]);
                let damping = damping.clone().unwrap_or_else(|| vec![1.0; n]);
                let ps = model::build_power_system(&inertia, &damping, &lap, *observed_generators)
                    .map_err(|e| CliError::schema("system", e))?;
                ps.discretize(*dt, m.build("system.m")?, m0.build(), m0_cov.build("system.m0_cov")?)
            }
        };
        sys.map_err(|e| CliError::schema("system", e))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSpec {
    pub q: MatrixSpec,
    pub r: MatrixSpec,
    /// Defaults to `q`.
    #[serde(default)]
    pub qf: Option<MatrixSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NominalSpec {
    Moments {
        w_hat: VectorSpec,
        sigma_hat: MatrixSpec,
    },
    /// Samples inline or from a CSV file (one sample per line).
    Samples {
        #[serde(default)]
        samples: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        path: Option<PathBuf>,
        #[serde(default)]
        jitter: f64,
        #[serde(default)]
        zero_mean: bool,
    },
    /// `count` draws from the truth distribution.
    Sampled {
        count: usize,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        jitter: f64,
        #[serde(default)]
        zero_mean: bool,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaGridSpec {
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_hi")]
    pub hi: f64,
}

fn default_points() -> usize {
    40
}

fn default_hi() -> f64 {
    1e6
}

impl Default for LambdaGridSpec {
    fn default() -> Self {
        Self {
            values: None,
            points: default_points(),
            hi: default_hi(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Number of per-run traces to write.
    #[serde(default)]
    pub traces: usize,
    /// Defaults to Gaussian(m0, M0).
    #[serde(default)]
    pub initial_state: Option<DistributionSpec>,
    /// Defaults to Gaussian(0, M).
    #[serde(default)]
    pub measurement_noise: Option<DistributionSpec>,
}

fn default_horizon() -> usize {
    200
}

fn default_runs() -> usize {
    100
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            horizon: default_horizon(),
            runs: default_runs(),
            seed: 0,
            traces: 0,
            initial_state: None,
            measurement_noise: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_thetas")]
    pub thetas: Vec<f64>,
    #[serde(default = "default_sample_sizes")]
    pub sample_sizes: Vec<usize>,
    #[serde(default = "default_datasets")]
    pub datasets: usize,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

fn default_thetas() -> Vec<f64> {
    vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0]
}

fn default_sample_sizes() -> Vec<usize> {
    vec![10]
}

fn default_datasets() -> usize {
    20
}

fn default_jitter() -> f64 {
    1e-8
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            thetas: default_thetas(),
            sample_sizes: default_sample_sizes(),
            datasets: default_datasets(),
            jitter: default_jitter(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    /// Defaults to identity `Q`, `Qf` and `R`.
    #[serde(default)]
    pub weights: Option<WeightsSpec>,
    pub truth: DistributionSpec,
    pub nominal: NominalSpec,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub lambda_grid: LambdaGridSpec,
    #[serde(default = "yes")]
    pub require_phi_psd: bool,
    #[serde(default)]
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn yes() -> bool {
    true
}

impl ExperimentConfig {
    /// Parse with a line and field-path diagnostic on failure.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            CliError::Schema(format!(
                "line {}, column {}, field `{path}`: {inner}",
                inner.line(),
                inner.column()
            ))
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Schema(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        // relative sample files resolve against the config's directory
        if let NominalSpec::Samples { path: Some(p), .. } = &mut cfg.nominal {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        match (self.lambda, self.theta) {
            (Some(_), Some(_)) => return Err(CliError::schema("lambda", "give exactly one of `lambda` and `theta`, not both")),
            (None, None) => return Err(CliError::schema("lambda", "give exactly one of `lambda` and `theta`")),
            (Some(l), None) if !(l > 0.0 && l.is_finite()) => return Err(CliError::schema("lambda", format!("must be positive, got {l}"))),
            (None, Some(t)) if !(t >= 0.0 && t.is_finite()) => return Err(CliError::schema("theta", format!("must be nonnegative, got {t}"))),
            _ => {}
        }
        if self.simulation.horizon == 0 {
            return Err(CliError::schema("simulation.horizon", "must be at least 1"));
        }
        if self.simulation.runs == 0 {
            return Err(CliError::schema("simulation.runs", "must be at least 1"));
        }
        if let Some(v) = &self.lambda_grid.values {
            if v.is_empty() {
                return Err(CliError::schema("lambda_grid.values", "must not be empty"));
            }
        } else if self.lambda_grid.points == 0 {
            return Err(CliError::schema("lambda_grid.points", "must be at least 1"));
        }
        if let NominalSpec::Samples { samples, path, .. } = &self.nominal {
            match (samples, path) {
                (Some(_), Some(_)) | (None, None) => {
                    return Err(CliError::schema("nominal", "give exactly one of `samples` and `path`"))
                }
                (None, Some(p)) if !p.is_file() => {
                    return Err(CliError::schema("nominal.path", format!("file {} does not exist", p.display())))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn weights(&self, sys: &LinearSystem) -> Result<CostWeights, CliError> {
        let w = match &self.weights {
            None => CostWeights::identity(sys.n_x(), sys.n_u()),
            Some(spec) => {
                let q = spec.q.build("weights.q")?;
                let qf = match &spec.qf {
                    Some(m) => m.build("weights.qf")?,
                    None => q.clone(),
                };
                CostWeights::new(q, qf, spec.r.build("weights.r")?).map_err(|e| CliError::schema("weights", e))?
            }
        };
        w.check_against(sys).map_err(|e| CliError::schema("weights", e))?;
        Ok(w)
    }

    pub fn design_options(&self) -> DesignOptions {
        DesignOptions {
            require_phi_psd: self.require_phi_psd,
        }
    }

    /// Nominal moments. Sampled nominals use `nominal.seed`, falling back to
    /// the simulation seed.
    pub fn nominal(&self, truth: &DisturbanceModel) -> Result<NominalMoments, CliError> {
        let (samples, jitter, zero_mean) = match &self.nominal {
            NominalSpec::Moments { w_hat, sigma_hat } => {
                return NominalMoments::new(w_hat.build(), sigma_hat.build("nominal.sigma_hat")?)
                    .map_err(|e| CliError::schema("nominal", e))
            }
            NominalSpec::Samples {
                samples,
                path,
                jitter,
                zero_mean,
            } => {
                let rows = match (samples, path) {
                    (Some(s), _) => s.clone(),
                    (None, Some(p)) => read_samples_csv(p)?,
                    (None, None) => unreachable!("validated"),
                };
                (rows.into_iter().map(Vector::from_vec).collect::<Vec<_>>(), *jitter, *zero_mean)
            }
            NominalSpec::Sampled {
                count,
                seed,
                jitter,
                zero_mean,
            } => {
                let sampler = truth.prepare().map_err(|e| CliError::schema("truth", e))?;
                let mut rng = wdrc::sim::run_rng(seed.unwrap_or(self.simulation.seed), 0);
                ((0..*count).map(|_| sampler.sample(&mut rng)).collect(), *jitter, *zero_mean)
            }
        };
        let mut nom = model::empirical_moments(&samples).map_err(|e| CliError::schema("nominal", e))?;
        if zero_mean {
            nom.w_hat.fill(0.0);
        }
        Ok(nom.with_jitter(jitter))
    }
}

fn read_samples_csv(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Schema(format!("cannot read samples {}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            line.split(',')
                .map(|x| {
                    x.trim().parse::<f64>().map_err(|e| {
                        CliError::Schema(format!("{}:{}: cannot parse `{}`: {e}", path.display(), i + 1, x.trim()))
                    })
                })
                .collect()
        })
        .collect()
}
