use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use memica_core::ica::{Algorithm, BackendKind};

use crate::commands::{cmd_compare, cmd_device_demo, cmd_mc, cmd_mix, cmd_separate, Context};
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "memica", version, about = "Memristor crossbar ICA experiments")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Use 512×512 synthetic images and subsample convergence traces.
    #[arg(long, global = true)]
    pub paper_scale: bool,

    /// Learning rate for both algorithms.
    #[arg(long, global = true)]
    pub learning_rate: Option<f64>,

    #[arg(long, global = true)]
    pub max_iters: Option<usize>,

    #[arg(long, global = true)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AlgorithmArg {
    Acy,
    Fastica,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Acy => Algorithm::Acy,
            AlgorithmArg::Fastica => Algorithm::FastIca,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BackendArg {
    Ideal,
    Crossbar,
}

impl From<BackendArg> for BackendKind {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Ideal => BackendKind::Ideal,
            BackendArg::Crossbar => BackendKind::Crossbar,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mix two images (or the synthetic pair) with the configured matrix.
    Mix {
        #[arg(num_args = 2, value_names = ["IMAGE_A", "IMAGE_B"])]
        images: Option<Vec<PathBuf>>,
    },
    /// Separate two mixture images with one algorithm and backend.
    Separate {
        #[arg(long, value_enum)]
        algorithm: AlgorithmArg,
        #[arg(long, value_enum, default_value = "ideal")]
        backend: BackendArg,
        #[arg(num_args = 2, required = true, value_names = ["MIXTURE_A", "MIXTURE_B"])]
        mixtures: Vec<PathBuf>,
        /// Original images used for alignment and metrics.
        #[arg(long, num_args = 2, value_names = ["ORIGINAL_A", "ORIGINAL_B"])]
        originals: Option<Vec<PathBuf>>,
    },
    /// Run all four pipelines and tabulate the improvement percentages.
    Compare {
        /// Start from existing mixtures instead of mixing the originals.
        #[arg(long, num_args = 2, value_names = ["MIXTURE_A", "MIXTURE_B"])]
        mixtures: Option<Vec<PathBuf>>,
        #[arg(long, num_args = 2, value_names = ["ORIGINAL_A", "ORIGINAL_B"])]
        originals: Option<Vec<PathBuf>>,
    },
    /// Trace resistance and weight of one device under alternating writes.
    DeviceDemo,
    /// Monte Carlo device-variation study for both algorithms.
    Mc {
        #[arg(long)]
        trials: Option<usize>,
        /// Standard deviation as a fraction of each parameter's mean.
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, num_args = 2, value_names = ["ORIGINAL_A", "ORIGINAL_B"])]
        originals: Option<Vec<PathBuf>>,
    },
}

fn pair(v: &Option<Vec<PathBuf>>) -> Option<[PathBuf; 2]> {
    v.as_ref().map(|p| [p[0].clone(), p[1].clone()])
}

/// Builds the effective configuration: file (or defaults), then flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if c.paper_scale {
        cfg.paper_scale();
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
        cfg.variation.seed = seed;
    }
    if let Some(out) = &c.out {
        cfg.out_dir = out.clone();
    }
    for s in [&mut cfg.acy, &mut cfg.fastica] {
        if let Some(v) = c.learning_rate {
            s.learning_rate = v;
        }
        if let Some(v) = c.max_iters {
            s.max_iters = v;
        }
        if let Some(v) = c.tol {
            s.tol = v;
        }
    }
    if let Command::Mc { trials, sigma, .. } = &cli.command {
        if let Some(t) = trials {
            cfg.variation.trials = *t;
        }
        if let Some(s) = sigma {
            cfg.variation.sigma_fraction = *s;
        }
    }
    Ok(cfg)
}

/// Runs the parsed command; returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let ctx = Context::new(resolve_config(cli)?)?;
    match &cli.command {
        Command::Mix { images } => Ok(cmd_mix(&ctx, pair(images).as_ref())?.files),
        Command::Separate {
            algorithm,
            backend,
            mixtures,
            originals,
        } => {
            let mixtures = pair(&Some(mixtures.clone())).expect("two mixtures");
            Ok(cmd_separate(
                &ctx,
                (*algorithm).into(),
                (*backend).into(),
                &mixtures,
                pair(originals).as_ref(),
            )?
            .files)
        }
        Command::Compare {
            mixtures,
            originals,
        } => Ok(cmd_compare(&ctx, pair(mixtures).as_ref(), pair(originals).as_ref())?.files),
        Command::DeviceDemo => Ok(cmd_device_demo(&ctx)?.files),
        Command::Mc { originals, .. } => Ok(cmd_mc(&ctx, pair(originals).as_ref())?.files),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"seed": 4, "variation": {"trials": 9}}"#).unwrap();
        let cli = Cli::parse_from([
            "memica",
            "mc",
            "--config",
            path.to_str().unwrap(),
            "--trials",
            "2",
            "--max-iters",
            "11",
            "--paper-scale",
        ]);
        let cfg = resolve_config(&cli).unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.variation.trials, 2);
        assert_eq!(cfg.acy.max_iters, 11);
        assert_eq!(cfg.fastica.max_iters, 11);
        assert_eq!(cfg.image_size, 512);

        let cli = Cli::parse_from(["memica", "--seed", "8", "device-demo"]);
        assert_eq!(resolve_config(&cli).unwrap().seed, 8);
    }

    #[test]
    fn separate_requires_two_mixtures() {
        assert!(Cli::try_parse_from(["memica", "separate", "--algorithm", "acy", "a.pgm"]).is_err());
        assert!(Cli::try_parse_from(["memica", "separate", "--algorithm", "acy", "a.pgm", "b.pgm"]).is_ok());
    }
}
