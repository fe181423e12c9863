//! `lvae`: dataset generation, VAE training, reconstruction, latent-space
//! design, forward simulation and evaluation.
//!
//! Every command that writes an artifact also writes `<artifact>.config.toml`
//! (the resolved configuration) and `<artifact>.run` (command line, seed and
//! the SHA-256 of that configuration).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use lvae_core::config::Config;
use lvae_core::datagen::{duplicate_fraction, generate_diffusion_dataset, generate_litho_dataset, manifest_path, Dataset};
use lvae_core::design::{design, DesignProblem};
use lvae_core::eval::{batch_roundtrip, binary_accuracy, reconstruction_accuracy, AccuracyReport, SampleAccuracy};
use lvae_core::field::{binarize, concat_pair, BinaryImage, Field2D};
use lvae_core::io::{read_key_values, read_pgm, write_key_values, write_pgm, write_raw};
use lvae_core::litho::{aerial_image, litho_forward};
use lvae_core::morphology::TrenchCheck;
use lvae_core::nn::{field_matrix, read_checkpoint, train, AdamState, VaeArch, VaeModel};
use lvae_core::phase::{evolve_to_steady, prepare_initial};

#[derive(Parser, Debug)]
#[command(name = "lvae", version, about = "Inverse layout design with a variational autoencoder")]
struct Cli {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Problem {
    Diffusion,
    Litho,
}

impl Problem {
    fn name(self) -> &'static str {
        match self {
            Problem::Diffusion => "diffusion",
            Problem::Litho => "litho",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "diffusion" => Some(Problem::Diffusion),
            "litho" => Some(Problem::Litho),
            _ => None,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a paired dataset.
    GenData(GenDataArgs),
    /// Train a VAE on a dataset.
    Train(TrainArgs),
    /// Reconstruct dataset samples and write input/reconstruction images.
    Reconstruct(ReconstructArgs),
    /// Search the latent space for a layout producing a target.
    Design(DesignArgs),
    /// Smooth and evolve a binary layout to steady state.
    Simulate(SimulateArgs),
    /// Push a mask through the lithography model.
    Litho(LithoArgs),
    /// Design for test targets and score the simulated outcome.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[arg(long, value_enum)]
    problem: Problem,
    /// Number of samples (default from config).
    #[arg(long)]
    count: Option<usize>,
    /// Samples held out as the test split (default from config).
    #[arg(long)]
    test_count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Default from config for the dataset's problem.
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output directory for the images.
    #[arg(long)]
    out: PathBuf,
    /// Number of samples to write.
    #[arg(long, default_value_t = 8)]
    count: usize,
    /// Use training samples instead of the test split.
    #[arg(long)]
    train_split: bool,
}

#[derive(Args, Debug)]
struct DesignArgs {
    #[arg(long)]
    model: PathBuf,
    /// Target final shape, one half wide.
    #[arg(long)]
    target: PathBuf,
    /// Chooses the default alpha and beta.
    #[arg(long, value_enum, default_value = "diffusion")]
    problem: Problem,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Latent box half-width.
    #[arg(long)]
    bounds: Option<f64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Design image; the generated final half and a report are written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Binary initial layout.
    #[arg(long)]
    input: PathBuf,
    /// Final field image; binarized image, CSV history and raw dump are written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct LithoArgs {
    #[arg(long)]
    mask: PathBuf,
    /// Printed pattern image; the aerial image is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Dataset whose test split provides the targets.
    #[arg(long)]
    data: PathBuf,
    /// TOML whose solver and eval sections replace the main config's.
    #[arg(long)]
    phase_config: Option<PathBuf>,
    #[arg(long)]
    report: PathBuf,
    /// Number of test targets (default from config, 0 = all).
    #[arg(long)]
    count: Option<usize>,
}

// ---------------------------------------------------------------------------
// Exit codes

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 3;
const EXIT_FILE: u8 = 4;
const EXIT_DIMENSION: u8 = 5;
const EXIT_FORMAT: u8 = 6;
const EXIT_NUMERIC: u8 = 7;

fn exit_code(err: &anyhow::Error) -> u8 {
    use lvae_core::Error as E;
    let Some(core) = err.chain().find_map(|e| e.downcast_ref::<E>()) else {
        if err.chain().any(|e| e.downcast_ref::<std::io::Error>().is_some()) {
            return EXIT_FILE;
        }
        if err.chain().any(|e| e.downcast_ref::<UsageError>().is_some()) {
            return EXIT_CONFIG;
        }
        return EXIT_FAILURE;
    };
    let core = match core {
        E::Sample { source, .. } => source.as_ref(),
        other => other,
    };
    match core {
        E::Config(_) | E::InvalidParameter { .. } => EXIT_CONFIG,
        E::File { .. } | E::Io(_) => EXIT_FILE,
        E::DimensionMismatch { .. } => EXIT_DIMENSION,
        E::MalformedHeader(_) | E::TruncatedPayload { .. } | E::DimensionOverflow(_) | E::ChecksumMismatch { .. } => {
            EXIT_FORMAT
        }
        E::NonFinite { .. }
        | E::NonFiniteGradient
        | E::NonFiniteLoss { .. }
        | E::FitFailure(_)
        | E::GenerationFailed { .. }
        | E::AllRestartsFailed { .. } => EXIT_NUMERIC,
        E::Sample { .. } => EXIT_FAILURE,
    }
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match cli.command {
        Command::GenData(a) => gen_data(&config, a),
        Command::Train(a) => train_cmd(&config, a),
        Command::Reconstruct(a) => reconstruct(&config, a),
        Command::Design(a) => design_cmd(&config, a),
        Command::Simulate(a) => simulate(&config, a),
        Command::Litho(a) => litho(&config, a),
        Command::Evaluate(a) => evaluate(&config, a),
    }
}

// ---------------------------------------------------------------------------
// Provenance

fn config_hash(config: &Config) -> String {
    hex::encode(Sha256::digest(config.canonical().as_bytes()))
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    s.into()
}

fn with_suffix(path: &Path, tail: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{tail}"))
}

fn command_line() -> String {
    std::env::args().collect::<Vec<_>>().join(" ")
}

/// Resolved config snapshot plus run record for `artifact`.
fn provenance(artifact: &Path, config: &Config, entries: &[(String, String)]) -> Result<()> {
    std::fs::write(sidecar(artifact, ".config.toml"), config.canonical())
        .with_context(|| format!("writing config snapshot for {}", artifact.display()))?;
    let mut kv = vec![
        ("command".to_string(), command_line()),
        ("config_sha256".into(), config_hash(config)),
        ("version".into(), env!("CARGO_PKG_VERSION").into()),
    ];
    kv.extend_from_slice(entries);
    write_key_values(sidecar(artifact, ".run"), &kv)?;
    Ok(())
}

fn kv(k: &str, v: impl ToString) -> (String, String) {
    (k.to_string(), v.to_string())
}

fn dataset_problem(data: &Path) -> Option<Problem> {
    let kv = read_key_values(manifest_path(data)).ok()?;
    kv.iter().find(|(k, _)| k == "problem").and_then(|(_, v)| Problem::parse(v))
}

fn load_model(path: &Path) -> Result<VaeModel<f32>> {
    let (model, _) = read_checkpoint::<f32>(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(model)
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::load(path).with_context(|| format!("loading {}", path.display()))
}

// ---------------------------------------------------------------------------
// Commands

fn gen_data(config: &Config, a: GenDataArgs) -> Result<()> {
    let mut config = config.clone();
    let d = &mut config.datagen;
    if let Some(s) = a.seed {
        d.seed = s;
    }
    let (count, test_count) = match a.problem {
        Problem::Diffusion => (
            a.count.unwrap_or(d.diffusion_count),
            a.test_count.unwrap_or(d.diffusion_test_count.min(a.count.unwrap_or(usize::MAX))),
        ),
        Problem::Litho => (
            a.count.unwrap_or(d.litho_count),
            a.test_count.unwrap_or(d.litho_test_count.min(a.count.unwrap_or(usize::MAX))),
        ),
    };
    match a.problem {
        Problem::Diffusion => {
            d.diffusion_count = count;
            d.diffusion_test_count = test_count;
        }
        Problem::Litho => {
            d.litho_count = count;
            d.litho_test_count = test_count;
        }
    }
    config.validate()?;
    let d = &config.datagen;
    let hash = config_hash(&config);
    let mut extra = vec![kv("problem", a.problem.name()), kv("config_sha256", &hash)];
    let ds = match a.problem {
        Problem::Diffusion => {
            let params = config.solver.params(d.trench.width, d.trench.height)?;
            let (ds, stats) = generate_diffusion_dataset(
                count,
                d.seed,
                &params,
                &d.trench,
                &config.eval.smoothing,
                test_count,
            )?;
            let steps: usize = stats.iter().map(|s| s.steps).sum();
            extra.push(kv("retries", stats.iter().map(|s| s.retries).sum::<usize>()));
            extra.push(kv("converged", stats.iter().filter(|s| s.converged).count()));
            extra.push(kv("escalations", stats.iter().map(|s| s.escalations).sum::<usize>()));
            extra.push(kv("mean_steps", steps as f64 / count.max(1) as f64));
            ds
        }
        Problem::Litho => {
            let params = config.litho.params(d.mask.size)?;
            let (ds, _) = generate_litho_dataset(count, d.seed, &params, &d.mask, test_count)?;
            extra.push(kv("duplicate_fraction", duplicate_fraction(&ds)));
            ds
        }
    };
    ds.save(&a.out, &extra)?;
    provenance(&a.out, &config, &[kv("seed", d.seed), kv("problem", a.problem.name())])?;
    println!(
        "wrote {} samples ({} train, {} test) to {}",
        ds.len(),
        ds.train.len(),
        ds.test.len(),
        a.out.display()
    );
    Ok(())
}

fn train_cmd(config: &Config, a: TrainArgs) -> Result<()> {
    let mut config = config.clone();
    let problem = dataset_problem(&a.data).unwrap_or(Problem::Diffusion);
    let v = &mut config.vae;
    if let Some(e) = a.epochs {
        v.epochs = e;
    }
    if let Some(s) = a.seed {
        v.seed = s;
    }
    if let Some(l) = a.latent_dim {
        match problem {
            Problem::Diffusion => v.diffusion_latent_dim = l,
            Problem::Litho => v.litho_latent_dim = l,
        }
    }
    config.validate()?;
    let v = &config.vae;
    let latent = match problem {
        Problem::Diffusion => v.diffusion_latent_dim,
        Problem::Litho => v.litho_latent_dim,
    };
    let ds = load_dataset(&a.data)?;
    if ds.train.is_empty() {
        bail!(lvae_core::Error::InvalidParameter {
            name: "data",
            reason: "dataset has no training samples".into()
        });
    }
    let x = field_matrix::<f32>(ds.train_samples().map(|s| s.combined()))?;
    let arch = VaeArch {
        input_dim: x.ncols(),
        hidden: v.hidden.clone(),
        latent_dim: latent,
    };
    let mut model = VaeModel::<f32>::from_seed(arch, v.seed);
    let mut adam = AdamState::new(&model, v.adam());
    let mut tc = v.train();
    tc.checkpoint = Some(a.out.clone());
    let report = train(&mut model, &mut adam, x.view(), &tc)?;
    let mut csv = String::from("epoch,loss\n");
    for (i, l) in report.epoch_loss.iter().enumerate() {
        writeln!(csv, "{},{l}", i + 1).unwrap();
    }
    std::fs::write(with_suffix(&a.out, ".loss.csv"), csv).context("writing loss history")?;
    let acc = reconstruction_accuracy(&model, ds.train_samples(), config.fields.binarize_threshold)?;
    provenance(
        &a.out,
        &config,
        &[
            kv("seed", v.seed),
            kv("problem", problem.name()),
            kv("latent_dim", latent),
            kv("epochs_run", report.epochs_run()),
            kv("stopped_early", report.stopped_early),
            kv("final_loss", report.epoch_loss.last().copied().unwrap_or(f64::NAN)),
            kv("train_accuracy", acc.accuracy),
        ],
    )?;
    println!(
        "trained {} epochs, final loss {:.4}, train reconstruction accuracy {:.4}",
        report.epochs_run(),
        report.epoch_loss.last().copied().unwrap_or(f64::NAN),
        acc.accuracy
    );
    Ok(())
}

/// Inputs in the first row, reconstructions in the second.
fn montage(inputs: &[Field2D], outputs: &[Field2D]) -> Field2D {
    let (w, h) = (inputs[0].width(), inputs[0].height());
    let gap = 2;
    let cols = inputs.len();
    let width = cols * w + (cols - 1) * gap;
    let height = 2 * h + gap;
    Field2D::from_fn(width, height, |r, c| {
        let (slot, x) = (c / (w + gap), c % (w + gap));
        if x >= w || (r >= h && r < h + gap) {
            return 0.5;
        }
        let src = if r < h { &inputs[slot] } else { &outputs[slot] };
        src.get(r % (h + gap), x)
    })
}

fn reconstruct(config: &Config, a: ReconstructArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let ds = load_dataset(&a.data)?;
    let pool: Vec<&Field2D> = if a.train_split || ds.test.is_empty() {
        ds.train_samples().map(|s| s.combined()).collect()
    } else {
        ds.test_samples().map(|s| s.combined()).collect()
    };
    let pool: Vec<&Field2D> = pool.into_iter().take(a.count.max(1)).collect();
    if pool.is_empty() {
        bail!(usage("dataset is empty"));
    }
    let x = field_matrix::<f32>(pool.iter().copied())?;
    let out = model.reconstruct(x.view())?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let (w, h) = (pool[0].width(), pool[0].height());
    let mut recons = Vec::new();
    let mut per_sample = Vec::new();
    for (i, input) in pool.iter().enumerate() {
        let rec = Field2D::new(w, h, out.row(i).iter().map(|&v| v as f64).collect())?;
        write_pgm(a.out.join(format!("sample_{i:03}_input.pgm")), input)?;
        write_pgm(a.out.join(format!("sample_{i:03}_recon.pgm")), &rec)?;
        let t = config.fields.binarize_threshold;
        let r = binary_accuracy(&binarize(&rec, t), &binarize(input, t))?;
        per_sample.push(SampleAccuracy { id: i, ..r.per_sample[0] });
        recons.push(rec);
    }
    let inputs: Vec<Field2D> = pool.iter().map(|f| (*f).clone()).collect();
    let grid = a.out.join("montage.pgm");
    write_pgm(&grid, &montage(&inputs, &recons))?;
    let acc = AccuracyReport::from_samples(per_sample);
    provenance(&grid, config, &[kv("samples", pool.len()), kv("accuracy", acc.accuracy)])?;
    println!("wrote {} reconstructions to {}, binary accuracy {:.4}", pool.len(), a.out.display(), acc.accuracy);
    Ok(())
}

fn design_problem(config: &Config, target: Field2D, latent: usize, problem: Problem) -> Result<DesignProblem> {
    let g = &config.design;
    let (alpha, beta) = match problem {
        Problem::Diffusion => (g.diffusion_alpha, g.diffusion_beta),
        Problem::Litho => (g.litho_alpha, g.litho_beta),
    };
    let mut p = DesignProblem::new(target, latent, alpha, beta, g.bound)?;
    p.restarts = g.restarts;
    p.seed = g.seed;
    p.optimizer = g.optimizer();
    Ok(p)
}

fn design_cmd(config: &Config, a: DesignArgs) -> Result<()> {
    let mut config = config.clone();
    let g = &mut config.design;
    let (alpha, beta) = match a.problem {
        Problem::Diffusion => (&mut g.diffusion_alpha, &mut g.diffusion_beta),
        Problem::Litho => (&mut g.litho_alpha, &mut g.litho_beta),
    };
    if let Some(v) = a.alpha {
        *alpha = v;
    }
    if let Some(v) = a.beta {
        *beta = v;
    }
    if let Some(v) = a.bounds {
        g.bound = v;
    }
    if let Some(v) = a.restarts {
        g.restarts = v;
    }
    if let Some(v) = a.seed {
        g.seed = v;
    }
    config.validate()?;
    let model = load_model(&a.model)?.cast::<f64>();
    let t = config.fields.binarize_threshold;
    let target = binarize(&read_pgm(&a.target)?, t).to_field();
    let problem = design_problem(&config, target, model.latent_dim(), a.problem)?;
    let r = design(&problem, &model)?;
    write_pgm(&a.out, &r.design)?;
    write_pgm(with_suffix(&a.out, ".binary.pgm"), &r.binary_design().to_field())?;
    write_pgm(with_suffix(&a.out, ".final.pgm"), &r.generated_final)?;
    let mut report = String::new();
    let o = &r.objective;
    writeln!(report, "objective = {:.12e}", o.total).unwrap();
    writeln!(report, "mismatch = {:.12e}", o.mismatch).unwrap();
    writeln!(report, "volume = {:.12e}", o.volume).unwrap();
    writeln!(report, "tv = {:.12e}", o.tv).unwrap();
    writeln!(report, "alpha = {}", problem.alpha).unwrap();
    writeln!(report, "beta = {}", problem.beta).unwrap();
    writeln!(report, "best_restart = {}", r.best).unwrap();
    writeln!(
        report,
        "z_hat = {}",
        r.z_hat.iter().map(|v| format!("{v:.9}")).collect::<Vec<_>>().join(",")
    )
    .unwrap();
    for l in &r.restarts {
        writeln!(
            report,
            "restart {} value={:.9e} iterations={} evaluations={} status={:?}",
            l.index, l.value, l.iterations, l.evaluations, l.status
        )
        .unwrap();
    }
    std::fs::write(with_suffix(&a.out, ".report.txt"), report).context("writing design report")?;
    provenance(&a.out, &config, &[kv("seed", problem.seed), kv("problem", a.problem.name())])?;
    println!(
        "objective {:.6} (mismatch {:.6}, volume {:.6}, tv {:.6}); design written to {}",
        o.total,
        o.mismatch,
        o.volume,
        o.tv,
        a.out.display()
    );
    Ok(())
}

fn simulate(config: &Config, a: SimulateArgs) -> Result<()> {
    let t = config.fields.binarize_threshold;
    let initial: BinaryImage = binarize(&read_pgm(&a.input)?, t);
    let params = config.solver.params(initial.width(), initial.height())?;
    let s = &config.eval.smoothing;
    let phi0 = prepare_initial(&initial, &params, s.iterations, s.dt_factor * params.dt)?;
    let ev = evolve_to_steady(&phi0, &params)?;
    let density = ev.phi.to_density();
    write_pgm(&a.out, &density)?;
    write_pgm(with_suffix(&a.out, ".binary.pgm"), &ev.phi.binarize().to_field())?;
    let mut csv = String::from("step,time,mass,energy\n");
    for h in &ev.history {
        writeln!(csv, "{},{},{},{}", h.step, h.time, h.mass, h.energy).unwrap();
    }
    std::fs::write(with_suffix(&a.out, ".csv"), csv).context("writing history")?;
    let raw = with_suffix(&a.out, ".lvae");
    write_raw(&raw, &[ev.phi.grid().clone()])?;
    write_key_values(sidecar(&raw, ".params"), &ev.params.to_key_values())?;
    provenance(
        &a.out,
        config,
        &[
            kv("steps", ev.steps),
            kv("converged", ev.converged),
            kv("escalations", ev.escalations),
        ],
    )?;
    println!(
        "{} steps, converged {}, escalations {}; wrote {}",
        ev.steps,
        ev.converged,
        ev.escalations,
        a.out.display()
    );
    Ok(())
}

fn litho(config: &Config, a: LithoArgs) -> Result<()> {
    let t = config.fields.binarize_threshold;
    let mask = binarize(&read_pgm(&a.mask)?, t).to_field();
    let params = config.litho.params(mask.width())?;
    let aerial = aerial_image(&mask, &params)?;
    let printed = litho_forward(&mask, &params)?;
    write_pgm(&a.out, &printed.to_field())?;
    write_pgm(with_suffix(&a.out, ".aerial.pgm"), &aerial)?;
    provenance(&a.out, config, &[kv("sigma", params.sigma)])?;
    println!("printed {} pixels; wrote {}", printed.count_ones(), a.out.display());
    Ok(())
}

fn evaluate(config: &Config, a: EvaluateArgs) -> Result<()> {
    let mut config = config.clone();
    if let Some(p) = &a.phase_config {
        let phase = Config::load(p)?;
        config.solver = phase.solver;
        config.eval = phase.eval;
    }
    if let Some(n) = a.count {
        config.eval.max_targets = n;
    }
    config.validate()?;
    let problem = dataset_problem(&a.data).unwrap_or(Problem::Diffusion);
    let model = load_model(&a.model)?.cast::<f64>();
    let ds = load_dataset(&a.data)?;
    let limit = match config.eval.max_targets {
        0 => usize::MAX,
        n => n,
    };
    let tests: Vec<_> = ds.test_samples().take(limit).collect();
    if tests.is_empty() {
        bail!(usage("dataset has no test samples"));
    }
    let t = config.fields.binarize_threshold;
    let mut designs = Vec::with_capacity(tests.len());
    for s in &tests {
        let target = binarize(&s.final_shape(), t);
        let p = design_problem(&config, target.to_field(), model.latent_dim(), problem)?;
        let r = design(&p, &model)?;
        designs.push((r.binary_design(), target, r.objective));
    }
    let (report, steps, simulated): (AccuracyReport, Vec<usize>, Vec<BinaryImage>) = match problem {
        Problem::Diffusion => {
            let (w, h) = (designs[0].0.width(), designs[0].0.height());
            let params = config.solver.params(w, h)?;
            let cases: Vec<(BinaryImage, BinaryImage)> = designs.iter().map(|(d, t, _)| (d.clone(), t.clone())).collect();
            let (report, trips) = batch_roundtrip(&cases, &params, &config.eval.smoothing)?;
            let steps = trips.iter().map(|t| t.steps).collect();
            let sims = trips.into_iter().map(|t| t.simulated).collect();
            (report, steps, sims)
        }
        Problem::Litho => {
            let params = config.litho.params(designs[0].0.width())?;
            let mut per = Vec::new();
            let mut sims = Vec::new();
            for (i, (d, target, _)) in designs.iter().enumerate() {
                let printed = litho_forward(&d.to_field(), &params)?;
                let r = binary_accuracy(&printed, target)?;
                per.push(SampleAccuracy { id: i, ..r.per_sample[0] });
                sims.push(printed);
            }
            (AccuracyReport::from_samples(per), vec![0; designs.len()], sims)
        }
    };
    let check = TrenchCheck::default();
    let mut csv = String::from("sample_id,accuracy,objective,mismatch,volume,tv,solver_steps,trench_like\n");
    let mut trench_like = 0;
    for (i, ((d, _, o), s)) in designs.iter().zip(&report.per_sample).enumerate() {
        let tl = check.is_trench_like(d);
        trench_like += tl as usize;
        writeln!(
            csv,
            "{},{:.6},{:.9e},{:.9e},{:.9e},{:.9e},{},{}",
            ds.test[i],
            s.accuracy(),
            o.total,
            o.mismatch,
            o.volume,
            o.tv,
            steps[i],
            tl as u8
        )
        .unwrap();
    }
    std::fs::write(&a.report, csv).with_context(|| format!("writing {}", a.report.display()))?;
    if let Some(dir) = a.report.parent() {
        let stem = a.report.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        for (i, ((d, t, _), sim)) in designs.iter().zip(&simulated).enumerate().take(16) {
            let pair = concat_pair(&d.to_field(), &sim.to_field())?;
            write_pgm(dir.join(format!("{stem}_{i:03}_design.pgm")), pair.combined())?;
            write_pgm(dir.join(format!("{stem}_{i:03}_target.pgm")), &t.to_field())?;
        }
    }
    provenance(
        &a.report,
        &config,
        &[
            kv("problem", problem.name()),
            kv("targets", tests.len()),
            kv("pooled_accuracy", report.accuracy),
            kv("mean_accuracy", report.mean_accuracy()),
            kv("trench_like_fraction", trench_like as f64 / designs.len() as f64),
        ],
    )?;
    println!(
        "{} targets: pooled accuracy {:.4}, mean accuracy {:.4}, trench-like {}/{}",
        tests.len(),
        report.accuracy,
        report.mean_accuracy(),
        trench_like,
        designs.len()
    );
    Ok(())
}
