use std::path::{Path, PathBuf};

use clap::Args;
use fractalwalk::augtree::default_gamma;
use fractalwalk::error::Error;
use fractalwalk::export::Manifest;
use fractalwalk::ifs::{load_ifs, IfsSystem, Weights};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Flags shared by every subcommand. Each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON run configuration; flags win over its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// `builtin:<name>` or a path to an IFS JSON file.
    #[arg(long, global = true)]
    pub ifs: Option<String>,
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    /// Defaults to `1/N`, the simple random walk for homogeneous systems.
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// `natural` or comma-separated probabilities `p1,p2,...`.
    #[arg(long, global = true)]
    pub weights: Option<String>,
    #[arg(long, global = true)]
    pub levels: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Graph export format: dot, json or csv.
    #[arg(long, global = true)]
    pub format: Option<String>,
}

/// The validated configuration of one run, echoed into every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub ifs: String,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
    pub weights: String,
    pub levels: usize,
    pub seed: u64,
    pub samples: usize,
    pub tol: f64,
    /// Where artifacts go; not part of the hashed configuration, so reruns
    /// into different directories produce identical bytes.
    #[serde(skip_serializing)]
    pub out: PathBuf,
    pub format: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            ifs: "builtin:gasket2".into(),
            gamma: None,
            lambda: None,
            weights: "natural".into(),
            levels: 6,
            seed: 0,
            samples: 100_000,
            tol: 1e-3,
            out: PathBuf::from("out"),
            format: "dot".into(),
        }
    }
}

/// Everything a command needs, resolved from a [`RunConfig`].
pub struct Resolved {
    pub config: RunConfig,
    pub ifs: IfsSystem,
    pub weights: Weights,
    pub gamma: f64,
    pub lambda: f64,
}

impl RunConfig {
    pub fn load(args: &CommonArgs) -> anyhow::Result<Self> {
        let mut cfg = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("reading {}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        macro_rules! take {
            ($field:ident) => {
                if let Some(v) = &args.$field {
                    cfg.$field = v.clone();
                }
            };
            ($field:ident, opt) => {
                if let Some(v) = args.$field {
                    cfg.$field = Some(v);
                }
            };
        }
        take!(ifs);
        take!(gamma, opt);
        take!(lambda, opt);
        take!(weights);
        take!(levels);
        take!(seed);
        take!(samples);
        take!(tol);
        take!(out);
        take!(format);
        Ok(cfg)
    }

    /// Checks every field and loads the IFS.
    pub fn resolve(self) -> Result<Resolved, Error> {
        let (ifs, file_weights) = load_ifs(&self.ifs).map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("{}: {io}", self.ifs)),
            e => e,
        })?;
        let weights = match self.weights.as_str() {
            "natural" => file_weights,
            list => {
                let p = list
                    .split(',')
                    .map(|t| t.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| Error::Config(format!("weights {list:?}: {e}")))?;
                if p.len() != ifs.n_maps() {
                    return Err(Error::Config(format!("{} weights given for {} maps", p.len(), ifs.n_maps())));
                }
                Weights::custom(p)?
            }
        };
        let gamma = self.gamma.unwrap_or_else(|| default_gamma(&ifs));
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
        }
        let lambda = self.lambda.unwrap_or(1.0 / ifs.n_maps() as f64);
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::Config(format!("lambda must lie in (0, 1), got {lambda}")));
        }
        if self.levels == 0 {
            return Err(Error::Config("levels must be at least 1".into()));
        }
        if self.tol <= 0.0 || !self.tol.is_finite() {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        self.format.parse::<fractalwalk::export::Format>()?;
        Ok(Resolved { config: self, ifs, weights, gamma, lambda })
    }

    /// Canonical JSON rendering; the hash is taken over these bytes.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}

impl Resolved {
    pub fn manifest(&self, command: &str) -> Manifest {
        Manifest::new()
            .with("command", command)
            .with("config", self.config.canonical())
            .with("config_sha256", self.config.hash())
            .with("gamma", self.gamma)
            .with("lambda", self.lambda)
            .with("version", env!("CARGO_PKG_VERSION"))
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.out
    }
}
