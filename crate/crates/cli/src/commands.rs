use std::path::{Path, PathBuf};

use memica_core::device::{run_schedule, MemristorState, TraceSample};
use memica_core::ica::{Algorithm, BackendKind};
use memica_core::imaging::{load_pgm, mix, save_pgm, synthetic_pair, GrayImage, Mixture};
use memica_core::metrics::{improvement_pct, Improvement, QualityReport};
use memica_core::pipeline::{finish, pipeline_label, separate, Experiment, Separation};
use memica_core::variability::{run_mc, McReport, METRIC_NAMES};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::report::{ensure_dir, num, opt, write_csv, write_file, Provenance};

pub const ALGORITHMS: [Algorithm; 2] = [Algorithm::Acy, Algorithm::FastIca];
pub const PIPELINES: [(Algorithm, BackendKind); 4] = [
    (Algorithm::Acy, BackendKind::Ideal),
    (Algorithm::Acy, BackendKind::Crossbar),
    (Algorithm::FastIca, BackendKind::Ideal),
    (Algorithm::FastIca, BackendKind::Crossbar),
];

pub const METRICS_HEADER: [&str; 6] = ["pipeline", "image", "mse", "psnr_db", "ssim", "gsm"];
pub const IMPROVEMENT_HEADER: [&str; 5] =
    ["algorithm", "ssim_impr", "gsm_impr", "psnr_impr", "mse_impr"];

/// Effective configuration plus the output directory for one command.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
}

impl Context {
    pub fn new(config: RunConfig) -> Result<Self, CliError> {
        config.validate()?;
        Ok(Context { config })
    }

    pub fn out(&self) -> &Path {
        &self.config.out_dir
    }

    fn provenance(&self, command: &'static str) -> Provenance {
        Provenance {
            command,
            config_sha256: self.config.digest(),
            seed: self.config.seed,
        }
    }

    fn prepare(&self) -> Result<(), CliError> {
        ensure_dir(self.out())?;
        write_file(
            &self.out().join("run_config.json"),
            self.config.to_json().as_bytes(),
        )
    }

    fn path(&self, name: impl AsRef<Path>) -> PathBuf {
        self.out().join(name)
    }

    /// Originals from explicit paths, the config, or the synthetic pair.
    fn sources(&self, paths: Option<&[PathBuf; 2]>) -> Result<(Vec<GrayImage>, bool), CliError> {
        match paths.or(self.config.images.as_ref()) {
            Some(p) => Ok((load_pair(p)?, false)),
            None => Ok((synthetic_pair(self.config.image_size)?.to_vec(), true)),
        }
    }

    fn experiment(&self, sources: Vec<GrayImage>) -> Result<Experiment, CliError> {
        let mut exp = Experiment::new(
            sources,
            self.config.mixing_matrix()?,
            self.config.device_params(),
        )?;
        exp.crossbar = self.config.crossbar;
        exp.metrics = self.config.metrics;
        Ok(exp)
    }
}

fn load_pair(paths: &[PathBuf; 2]) -> Result<Vec<GrayImage>, CliError> {
    let images = paths.iter().map(load_pgm).collect::<Result<Vec<_>, _>>()?;
    if !images[0].same_size(&images[1]) {
        return Err(CliError::Config(format!(
            "{} is {}x{} but {} is {}x{}",
            paths[0].display(),
            images[0].width(),
            images[0].height(),
            paths[1].display(),
            images[1].width(),
            images[1].height()
        )));
    }
    Ok(images)
}

#[derive(Debug)]
pub struct MixOutput {
    pub sources: Vec<GrayImage>,
    pub mixture: Mixture,
    pub files: Vec<PathBuf>,
}

pub fn cmd_mix(ctx: &Context, images: Option<&[PathBuf; 2]>) -> Result<MixOutput, CliError> {
    let (sources, synthetic) = ctx.sources(images)?;
    let a = ctx.config.mixing_matrix()?;
    let mixture = mix(&sources, &a)?;
    ctx.prepare()?;
    let mut files = Vec::new();
    if synthetic {
        for (k, img) in sources.iter().enumerate() {
            let p = ctx.path(format!("source_{k}.pgm"));
            save_pgm(img, &p)?;
            files.push(p);
        }
    }
    for (k, img) in mixture.images.iter().enumerate() {
        let p = ctx.path(format!("mixture_{k}.pgm"));
        save_pgm(img, &p)?;
        files.push(p);
    }
    let n = a.matrix().ncols();
    let mut header = vec!["mixture".to_string()];
    header.extend((0..n).map(|i| format!("a_{i}")));
    header.extend(["scale".to_string(), "offset".to_string()]);
    let rows: Vec<Vec<String>> = a
        .rows()
        .iter()
        .zip(&mixture.rescale)
        .enumerate()
        .map(|(k, (row, r))| {
            let mut out = vec![k.to_string()];
            out.extend(row.iter().map(|&v| num(v)));
            out.extend([num(r.scale), num(r.offset)]);
            out
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    files.push(write_csv(
        &ctx.path("mix_record.csv"),
        &ctx.provenance("mix"),
        &header,
        &rows,
    )?);
    Ok(MixOutput {
        sources,
        mixture,
        files,
    })
}

fn quality_rows(q: &QualityReport) -> Vec<Vec<String>> {
    q.images
        .iter()
        .enumerate()
        .map(|(k, m)| {
            vec![
                q.pipeline.clone(),
                k.to_string(),
                num(m.mse),
                m.psnr.to_string(),
                num(m.ssim),
                num(m.gsm),
            ]
        })
        .collect()
}

fn file_stem(sep: &Separation) -> String {
    format!(
        "{}_{}",
        sep.config.algorithm.name(),
        sep.config.backend.name()
    )
}

/// Writes the separated images and the convergence trace of one pipeline.
fn write_separation(ctx: &Context, sep: &Separation, command: &'static str) -> Result<Vec<PathBuf>, CliError> {
    let stem = file_stem(sep);
    let mut files = Vec::new();
    for (k, img) in sep.images.iter().enumerate() {
        let p = ctx.path(format!("{stem}_separated_{k}.pgm"));
        save_pgm(img, &p)?;
        files.push(p);
    }
    let rows: Vec<Vec<String>> = sep
        .outcome
        .trace
        .iter()
        .map(|t| {
            vec![
                t.component.map_or_else(|| "all".to_string(), |c| c.to_string()),
                t.iteration.to_string(),
                num(t.value),
            ]
        })
        .collect();
    files.push(write_csv(
        &ctx.path(format!("{stem}_trace.csv")),
        &ctx.provenance(command),
        &["component", "iteration", "value"],
        &rows,
    )?);
    if let Some(al) = &sep.alignment {
        let rows: Vec<Vec<String>> = al
            .matches
            .iter()
            .map(|m| {
                vec![
                    m.reference.to_string(),
                    m.output.to_string(),
                    num(m.sign),
                    num(m.scale),
                    num(m.offset),
                    num(m.corr_before),
                    num(m.corr_after),
                ]
            })
            .collect();
        files.push(write_csv(
            &ctx.path(format!("{stem}_alignment.csv")),
            &ctx.provenance(command),
            &[
                "reference",
                "output",
                "sign",
                "scale",
                "offset",
                "corr_before",
                "corr_after",
            ],
            &rows,
        )?);
    }
    Ok(files)
}

#[derive(Debug)]
pub struct SeparateOutput {
    pub separation: Separation,
    pub files: Vec<PathBuf>,
}

/// Separates two mixture images; scores them when originals are given.
///
/// Outputs are written before a non-convergence error is returned.
pub fn cmd_separate(
    ctx: &Context,
    algorithm: Algorithm,
    backend: BackendKind,
    mixtures: &[PathBuf; 2],
    originals: Option<&[PathBuf; 2]>,
) -> Result<SeparateOutput, CliError> {
    let mixed = load_pair(mixtures)?;
    let refs = originals.map(load_pair).transpose()?;
    if let Some(r) = &refs {
        if !r[0].same_size(&mixed[0]) {
            return Err(CliError::Config(
                "originals and mixtures differ in size".into(),
            ));
        }
    }
    let cfg = ctx.config.ica(algorithm, backend);
    let device = ctx.config.device_params();
    let outcome = separate(&mixed, &cfg, &device, &ctx.config.crossbar, None)?;
    let sep = finish(
        &cfg,
        outcome,
        mixed[0].width(),
        mixed[0].height(),
        refs.as_deref(),
        &ctx.config.metrics,
    )?;
    ctx.prepare()?;
    let mut files = write_separation(ctx, &sep, "separate")?;
    if let Some(q) = &sep.quality {
        files.push(write_csv(
            &ctx.path(format!("{}_metrics.csv", file_stem(&sep))),
            &ctx.provenance("separate"),
            &METRICS_HEADER,
            &quality_rows(q),
        )?);
    }
    if !sep.outcome.converged {
        return Err(CliError::NotConverged(format!(
            "{} did not converge in {} iterations; outputs were still written",
            sep.label(),
            cfg.max_iters
        )));
    }
    Ok(SeparateOutput {
        separation: sep,
        files,
    })
}

#[derive(Debug)]
pub struct CompareOutput {
    /// In [`PIPELINES`] order.
    pub runs: Vec<Result<Separation, String>>,
    /// In [`ALGORITHMS`] order; `None` when either pipeline failed.
    pub improvements: Vec<Option<Improvement>>,
    pub files: Vec<PathBuf>,
}

impl CompareOutput {
    pub fn improvement(&self, algorithm: Algorithm) -> Option<Improvement> {
        let k = ALGORITHMS.iter().position(|&a| a == algorithm)?;
        self.improvements[k]
    }
}

pub fn improvement_row(name: &str, imp: Option<&Improvement>) -> Vec<String> {
    let mut row = vec![name.to_string()];
    match imp {
        Some(i) => row.extend(i.as_array().iter().map(|&v| opt(v))),
        None => row.extend(std::iter::repeat_n("failed".to_string(), 4)),
    }
    row
}

/// Runs all four pipelines and tabulates memristive-versus-software improvements.
pub fn cmd_compare(
    ctx: &Context,
    mixtures: Option<&[PathBuf; 2]>,
    originals: Option<&[PathBuf; 2]>,
) -> Result<CompareOutput, CliError> {
    let runs: Vec<Result<Separation, String>> = match mixtures {
        Some(mix_paths) => {
            let refs = match originals.or(ctx.config.images.as_ref()) {
                Some(p) => load_pair(p)?,
                None => {
                    return Err(CliError::Config(
                        "compare needs original images to score against (pass --originals)".into(),
                    ))
                }
            };
            let mixed = load_pair(mix_paths)?;
            let device = ctx.config.device_params();
            PIPELINES
                .par_iter()
                .map(|&(alg, backend)| {
                    let cfg = ctx.config.ica(alg, backend);
                    separate(&mixed, &cfg, &device, &ctx.config.crossbar, None)
                        .and_then(|o| {
                            finish(&cfg, o, mixed[0].width(), mixed[0].height(), Some(&refs), &ctx.config.metrics)
                        })
                        .map_err(|e| e.to_string())
                })
                .collect()
        }
        None => {
            let (sources, _) = ctx.sources(originals)?;
            let exp = ctx.experiment(sources)?;
            PIPELINES
                .par_iter()
                .map(|&(alg, backend)| exp.run(&ctx.config.ica(alg, backend)).map_err(|e| e.to_string()))
                .collect()
        }
    };

    ctx.prepare()?;
    let mut files = Vec::new();
    let mut metric_rows = Vec::new();
    for (run, &(alg, backend)) in runs.iter().zip(&PIPELINES) {
        match run {
            Ok(sep) => {
                files.extend(write_separation(ctx, sep, "compare")?);
                metric_rows.extend(quality_rows(sep.quality.as_ref().expect("scored")));
            }
            Err(e) => {
                log::error!("{} failed: {e}", pipeline_label(alg, backend));
                let mut row = vec![pipeline_label(alg, backend), "all".into()];
                row.extend(std::iter::repeat_n("failed".to_string(), 4));
                metric_rows.push(row);
            }
        }
    }
    files.push(write_csv(
        &ctx.path("metrics.csv"),
        &ctx.provenance("compare"),
        &METRICS_HEADER,
        &metric_rows,
    )?);

    let improvements: Vec<Option<Improvement>> = ALGORITHMS
        .iter()
        .map(|&alg| {
            let get = |b| {
                let k = PIPELINES.iter().position(|&p| p == (alg, b)).expect("listed");
                runs[k].as_ref().ok().and_then(|s| s.quality.as_ref())
            };
            Some(improvement_pct(get(BackendKind::Crossbar)?, get(BackendKind::Ideal)?))
        })
        .collect();
    let rows: Vec<Vec<String>> = ALGORITHMS
        .iter()
        .zip(&improvements)
        .map(|(alg, imp)| improvement_row(alg.name(), imp.as_ref()))
        .collect();
    files.push(write_csv(
        &ctx.path("improvements.csv"),
        &ctx.provenance("compare"),
        &IMPROVEMENT_HEADER,
        &rows,
    )?);

    let unconverged: Vec<String> = runs
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .filter(|s| !s.outcome.converged)
        .map(Separation::label)
        .collect();
    if !unconverged.is_empty() {
        return Err(CliError::NotConverged(format!(
            "{} did not converge; all tables were still written",
            unconverged.join(", ")
        )));
    }
    Ok(CompareOutput {
        runs,
        improvements,
        files,
    })
}

#[derive(Debug)]
pub struct DemoOutput {
    pub trace: Vec<TraceSample>,
    pub files: Vec<PathBuf>,
}

/// Single-device write/read trace starting from the low-resistance state.
pub fn cmd_device_demo(ctx: &Context) -> Result<DemoOutput, CliError> {
    let params = ctx
        .config
        .device
        .unwrap_or_else(memica_core::DeviceParams::demo);
    let schedule = ctx.config.demo.pulses()?;
    let (_, trace) = run_schedule(MemristorState::from_fraction(0.0, &params), &schedule, &params)?;
    ctx.prepare()?;
    let rows: Vec<Vec<String>> = trace
        .iter()
        .map(|s| vec![num(s.time), num(s.resistance), num(s.weight)])
        .collect();
    let file = write_csv(
        &ctx.path("device_trace.csv"),
        &ctx.provenance("device-demo"),
        &["time_s", "resistance_ohm", "weight"],
        &rows,
    )?;
    Ok(DemoOutput {
        trace,
        files: vec![file],
    })
}

#[derive(Debug)]
pub struct McOutput {
    /// In [`ALGORITHMS`] order.
    pub reports: Vec<McReport>,
    pub files: Vec<PathBuf>,
}

pub fn cmd_mc(ctx: &Context, originals: Option<&[PathBuf; 2]>) -> Result<McOutput, CliError> {
    let (sources, _) = ctx.sources(originals)?;
    let exp = ctx.experiment(sources)?;
    let spec = ctx.config.variation;
    let reports = ALGORITHMS
        .iter()
        .map(|&alg| run_mc(&exp, &ctx.config.ica(alg, BackendKind::Crossbar), &spec))
        .collect::<Result<Vec<_>, _>>()?;

    ctx.prepare()?;
    let mut trial_rows = Vec::new();
    for r in &reports {
        for t in &r.trials {
            let mut row = vec![t.trial.to_string()];
            row.extend(improvement_row(r.config.algorithm.name(), t.outcome.as_ref().ok()));
            trial_rows.push(row);
        }
    }
    let mut header = vec!["trial"];
    header.extend(IMPROVEMENT_HEADER);
    let mut files = vec![write_csv(
        &ctx.path("mc_trials.csv"),
        &ctx.provenance("mc"),
        &header,
        &trial_rows,
    )?];

    let summaries: Vec<_> = reports.iter().map(|r| r.summary()).collect();
    let mut header = vec!["metric".to_string()];
    for r in &reports {
        let a = r.config.algorithm.name();
        header.extend(["nominal", "mean", "std"].map(|s| format!("{a}_{s}")));
    }
    let rows: Vec<Vec<String>> = METRIC_NAMES
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let mut row = vec![name.to_string()];
            for (r, s) in reports.iter().zip(&summaries) {
                row.push(opt(r.nominal.as_array()[k]));
                row.push(opt(s[k].map(|st| st.mean)));
                row.push(opt(s[k].map(|st| st.std)));
            }
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    files.push(write_csv(
        &ctx.path("mc_summary.csv"),
        &ctx.provenance("mc"),
        &header,
        &rows,
    )?);
    Ok(McOutput { reports, files })
}
