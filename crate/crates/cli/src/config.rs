//! Flag/JSON merging. Flags override the JSON file, which overrides defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use rksens::butcher::make_tableau_default;
use rksens::experiments::BenchConfig;
use rksens::ocp::Transcription;
use rksens::sqp::HessianMode;
use rksens::{ButcherTableau, Model, ModelRegistry, NewtonOpts, SchemeFamily};
use serde::Deserialize;

use crate::CliError;

/// Options shared by every command. All are optional so that unset flags fall
/// through to the JSON file and then to the defaults.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    /// Model name: linear, dae-test or chain-<n_mass>
    #[arg(long)]
    pub model: Option<String>,
    /// Eigenvalue of the linear model
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    /// Velocity damping of the chain model, N s/m
    #[arg(long)]
    pub damping: Option<f64>,
    /// Tableau family: gl, radau, rk4, heun, euler
    #[arg(long)]
    pub family: Option<String>,
    /// Stage count (ignored by fixed-stage explicit families)
    #[arg(long)]
    pub s: Option<usize>,
    /// Integrator steps (per interval for OCPs, base count for order-study)
    #[arg(long = "n-steps")]
    pub n_steps: Option<usize>,
    /// Simulation time, or OCP horizon for solve-ocp
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub t_sim: Option<f64>,
    /// Newton iterations (maximum when --newton-tol > 0)
    #[arg(long = "newton-iters")]
    pub newton_iters: Option<usize>,
    /// Newton residual tolerance, 0 for a fixed iteration count
    #[arg(long = "newton-tol")]
    pub newton_tol: Option<f64>,
    /// Reuse the first Newton matrix for all iterations of a step
    #[arg(long = "freeze-jac", num_args = 0..=1, default_missing_value = "true")]
    pub freeze_jac: Option<bool>,
    /// Initial state, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    /// Control, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub u0: Option<Vec<f64>>,
    /// OCP transcription: shooting or collocation
    #[arg(long)]
    pub transcription: Option<String>,
    /// Number of OCP intervals
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n_intervals: Option<usize>,
    /// SQP Hessian: gn or exact
    #[arg(long)]
    pub hessian: Option<String>,
    /// Maximum SQP iterations
    #[arg(long = "sqp-iters")]
    pub sqp_iters: Option<usize>,
    /// SQP KKT tolerance
    #[arg(long = "kkt-tol")]
    pub kkt_tol: Option<f64>,
    /// Repetitions for timing medians
    #[arg(long)]
    pub reps: Option<usize>,
    /// Random points for sens-check
    #[arg(long)]
    pub points: Option<usize>,
    /// RNG seed for sens-check
    #[arg(long)]
    pub seed: Option<u64>,
    /// Skip the Hessian checks in sens-check
    #[arg(long = "no-hessian", num_args = 0..=1, default_missing_value = "true")]
    pub no_hessian: Option<bool>,
    /// Chain sizes for bench, comma separated
    #[arg(long, value_delimiter = ',')]
    pub masses: Option<Vec<usize>>,
    /// Bench integrator settings such as gl2x1,gl4x4 (tableau x steps)
    #[arg(long, value_delimiter = ',')]
    pub configs: Option<Vec<String>>,
    /// Output path (stdout if absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Trajectory CSV path for solve-ocp
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
}

macro_rules! overlay {
    ($top:expr, $base:expr; $($f:ident),* $(,)?) => {
        Options { $($f: $top.$f.or($base.$f)),* }
    };
}

impl Options {
    /// Fields set in `self` win over those in `base`.
    pub fn over(self, base: Options) -> Options {
        overlay!(self, base;
            model, lambda, damping, family, s, n_steps, t_sim, newton_iters, newton_tol,
            freeze_jac, x0, u0, transcription, n_intervals, hessian, sqp_iters, kkt_tol,
            reps, points, seed, no_hessian, masses, configs, out, trajectory)
    }

    pub fn load(path: &Path) -> Result<Options, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn model_name(&self) -> String {
        self.model.clone().unwrap_or_else(|| "chain-3".into())
    }

    pub fn build_model(&self) -> Result<Model, CliError> {
        let mut params = BTreeMap::new();
        if let Some(l) = self.lambda {
            params.insert("lambda".to_string(), l);
        }
        if let Some(d) = self.damping {
            params.insert("damping".to_string(), d);
        }
        Ok(ModelRegistry::build(&self.model_name(), &params)?)
    }

    pub fn family(&self) -> Result<SchemeFamily, CliError> {
        let name = self.family.as_deref().unwrap_or("gl");
        SchemeFamily::parse(name).ok_or_else(|| CliError::Config(format!("unknown tableau family `{name}`")))
    }

    pub fn tableau(&self) -> Result<ButcherTableau, CliError> {
        Ok(make_tableau_default(self.family()?, self.s)?)
    }

    /// Newton options on top of `base`.
    pub fn newton(&self, base: NewtonOpts) -> NewtonOpts {
        NewtonOpts {
            max_iters: self.newton_iters.unwrap_or(base.max_iters),
            tol: self.newton_tol.unwrap_or(base.tol),
            freeze_jacobian: self.freeze_jac.unwrap_or(base.freeze_jacobian),
            strict: base.strict,
        }
    }

    pub fn transcription(&self) -> Result<Transcription, CliError> {
        let name = self.transcription.as_deref().unwrap_or("shooting");
        Transcription::parse(name).ok_or_else(|| CliError::Config(format!("unknown transcription `{name}`")))
    }

    pub fn hessian_mode(&self) -> Result<HessianMode, CliError> {
        let name = self.hessian.as_deref().unwrap_or("gn");
        HessianMode::parse(name).ok_or_else(|| CliError::Config(format!("unknown Hessian mode `{name}`")))
    }

    pub fn reps(&self) -> Result<usize, CliError> {
        match self.reps.unwrap_or(1) {
            0 => Err(CliError::Config("--reps must be >= 1".into())),
            r => Ok(r),
        }
    }

    pub fn bench_configs(&self) -> Result<Vec<BenchConfig>, CliError> {
        let labels = self.configs.clone().unwrap_or_else(|| vec!["gl2x1".into(), "gl4x4".into()]);
        labels.iter().map(|l| parse_bench_config(l)).collect()
    }
}

/// Parses labels such as `gl2x1`, `radau3x2` or `rk4x8`.
pub fn parse_bench_config(label: &str) -> Result<BenchConfig, CliError> {
    let bad = || CliError::Config(format!("bad integrator setting `{label}`, expected e.g. gl2x1"));
    let (tab, steps) = label.rsplit_once('x').ok_or_else(bad)?;
    let n_steps: usize = steps.parse().map_err(|_| bad())?;
    let tableau = match SchemeFamily::parse(tab) {
        Some(f) if f.fixed_stages().is_some() => make_tableau_default(f, None)?,
        _ => {
            let split = tab.find(|c: char| c.is_ascii_digit()).ok_or_else(bad)?;
            let family = SchemeFamily::parse(&tab[..split]).ok_or_else(bad)?;
            let s: usize = tab[split..].parse().map_err(|_| bad())?;
            rksens::make_tableau(family, s)?
        }
    };
    Ok(BenchConfig { tableau, n_steps })
}
