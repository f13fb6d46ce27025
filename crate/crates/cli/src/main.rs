//! Command-line interface: train a neural viscosity, evaluate a viscosity
//! model on a benchmark case, reproduce the comparison tables, or run the
//! gradient check.
//!
//! Exit codes: 0 ok, 1 check failure, 2 usage/config error, 3 numerical
//! instability.

mod cases;
mod evaluate;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dgvisc::trainer::gradcheck::{run_gradcheck, GradCheckConfig};
use dgvisc::trainer::{TrainConfig, Trainer};
use dgvisc::viscosity::{DbParams, MdhParams, NeuralViscosity, ViscosityModel};

use evaluate::{metrics_header, reference_final, run_case, EvalSettings};
use manifest::Manifest;

#[derive(Parser)]
#[command(name = "dgvisc", version, about = "1D DG solver with trainable artificial viscosity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the neural viscosity with the settings from a TOML config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Caps the number of parallel workers from the config file.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Solve one benchmark case with one viscosity model and measure it.
    Eval {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        case: String,
        #[arg(long)]
        cells: usize,
        #[command(flatten)]
        numerics: NumericsArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// All four models across a list of cell counts: one combined table
    /// plus per-run plot data.
    Compare {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        case: String,
        /// Comma-separated cell counts, e.g. 32,64,128,256.
        #[arg(long)]
        cells: String,
        #[command(flatten)]
        numerics: NumericsArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify the backpropagated gradient against finite differences.
    Gradcheck {
        /// Optional TOML overriding the built-in small configuration.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ModelArg {
    /// Closed-form model: none, db, or mdh.
    #[arg(long)]
    model: Option<String>,
    /// Neural viscosity checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct NumericsArgs {
    /// Nodes per cell (polynomial degree + 1).
    #[arg(long, default_value_t = 4)]
    p: usize,
    /// DG timestep.
    #[arg(long, default_value_t = 1e-5)]
    dt: f64,
    /// Reference solver timestep (defaults to --dt).
    #[arg(long)]
    dt_ref: Option<f64>,
    /// Reference grid resolution; rounded to a multiple of the cell count.
    #[arg(long, default_value_t = 2048)]
    n_ref: usize,
    /// Reference reconstruction limiter: minmod, mc, or superbee.
    /// The published comparison tables need superbee (contacts stay sharp
    /// over long horizons).
    #[arg(long, default_value = "superbee")]
    limiter: String,
    /// DG mass treatment: exact or lumped. The published tables are
    /// reproduced with the lumped (collocation) variant.
    #[arg(long, default_value = "lumped")]
    mass: String,
}

impl NumericsArgs {
    fn settings(&self, cells: usize) -> Result<EvalSettings> {
        Ok(EvalSettings {
            cells,
            p: self.p,
            dt: self.dt,
            dt_ref: self.dt_ref.unwrap_or(self.dt),
            n_ref: self.n_ref,
            limiter: dgvisc::fv::Limiter::parse(&self.limiter)?,
            mass: dgvisc::mesh::MassMatrix::parse(&self.mass)?,
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            classify_error(&err)
        }
    }
}

/// Map failures onto the documented exit codes.
fn classify_error(err: &anyhow::Error) -> ExitCode {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<dgvisc::Error>() {
            return match e {
                dgvisc::Error::Unstable { .. } => ExitCode::from(3),
                dgvisc::Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some()
            || cause.downcast_ref::<toml::de::Error>().is_some()
        {
            return ExitCode::from(2);
        }
    }
    ExitCode::from(1)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train { config, seed, out, workers } => cmd_train(&config, seed, &out, workers),
        Command::Eval { model, case, cells, numerics, out } => {
            cmd_eval(&model, &case, cells, &numerics, &out)
        }
        Command::Compare { checkpoint, case, cells, numerics, out } => {
            cmd_compare(&checkpoint, &case, &cells, &numerics, &out)
        }
        Command::Gradcheck { config } => cmd_gradcheck(config.as_deref()),
    }
}

fn load_train_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let config: TrainConfig =
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
    Ok(config)
}

fn cmd_train(
    config_path: &Path,
    seed: Option<u64>,
    out: &Path,
    workers: Option<usize>,
) -> Result<ExitCode> {
    let mut config = load_train_config(config_path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(w) = workers {
        config.workers = config.workers.min(w).max(1);
    }
    config.validate()?;
    std::fs::create_dir_all(out)?;

    let config_toml = toml::to_string(&config).expect("config serializes");
    let trainer = Trainer::new(config.clone())?;
    let outcome = trainer.train(Some(out))?;
    eprintln!(
        "training finished: validation J {} -> {}",
        outcome.initial_validation(),
        outcome.final_validation()
    );

    let mut outputs = vec!["loss_history.csv".to_string(), "checkpoint.bin".to_string()];
    for e in 1..=config.episodes {
        outputs.push(format!("checkpoint_ep{e}.bin"));
    }
    Manifest {
        command: "train".into(),
        config_toml,
        seeds: vec![config.seed],
        outputs,
    }
    .write(out)?;
    Ok(ExitCode::SUCCESS)
}

fn load_model(model: &ModelArg, case: &cases::Case, p: usize) -> Result<ViscosityModel> {
    if let Some(path) = &model.checkpoint {
        let net = NeuralViscosity::load(path)
            .with_context(|| format!("cannot load checkpoint {}", path.display()))?;
        if net.config.n_vars != case.eq.n_vars() || net.config.p != p {
            bail!(
                "checkpoint was built for s={}, p={}, but case '{}' with --p {p} needs s={}",
                net.config.n_vars,
                net.config.p,
                case.name,
                case.eq.n_vars()
            );
        }
        return Ok(ViscosityModel::Neural(net));
    }
    match model.model.as_deref() {
        Some("none") => Ok(ViscosityModel::None),
        Some("db") => Ok(ViscosityModel::Db(DbParams::default())),
        Some("mdh") => Ok(ViscosityModel::Mdh(MdhParams::default())),
        Some(other) => bail!("unknown model '{other}' (none|db|mdh)"),
        None => unreachable!("clap enforces the model group"),
    }
}

fn cmd_eval(
    model_arg: &ModelArg,
    case_name: &str,
    cells: usize,
    numerics: &NumericsArgs,
    out: &Path,
) -> Result<ExitCode> {
    let case = cases::lookup(case_name)?;
    let model = load_model(model_arg, &case, numerics.p)?;
    let settings = numerics.settings(cells)?;
    std::fs::create_dir_all(out)?;

    let reference =
        reference_final(&case, settings.n_ref_adjusted(), settings.dt_ref, settings.limiter)?;
    let result = run_case(&case, &model, &settings, &reference)?;

    let solution_file = format!("{}_{}_{}.csv", case.name, model.label(), cells);
    std::fs::write(out.join(&solution_file), &result.solution_csv)?;
    let metrics_file = "metrics.csv";
    std::fs::write(
        out.join(metrics_file),
        format!("{}{}", metrics_header(), result.metrics.csv_line()),
    )?;
    println!(
        "{} {} cells={}: c_osc={:.3e} c_acc={:.3e} c_visc={:.3e} l2={:.3e} linf={:.3e}",
        case.name,
        model.label(),
        cells,
        result.metrics.c_osc,
        result.metrics.c_acc,
        result.metrics.c_visc,
        result.metrics.l2,
        result.metrics.linf
    );

    Manifest {
        command: format!(
            "eval --case {case_name} --cells {cells} --p {} --dt {} --n-ref {}",
            settings.p, settings.dt, settings.n_ref
        ),
        config_toml: format!(
            "case = {:?}\nmodel = {:?}\ncells = {}\np = {}\ndt = {}\ndt_ref = {}\nn_ref = {}\nlimiter = {:?}\n",
            case_name,
            model.label(),
            cells,
            settings.p,
            settings.dt,
            settings.dt_ref,
            settings.n_ref_adjusted(),
            settings.limiter.label()
        ) + &format!("mass = {:?}\n", settings.mass.label()),
        seeds: vec![],
        outputs: vec![solution_file, metrics_file.into()],
    }
    .write(out)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(
    checkpoint: &Path,
    case_name: &str,
    cells_list: &str,
    numerics: &NumericsArgs,
    out: &Path,
) -> Result<ExitCode> {
    let case = cases::lookup(case_name)?;
    let cells: Vec<usize> = cells_list
        .split(',')
        .map(|c| c.trim().parse::<usize>().with_context(|| format!("bad cell count '{c}'")))
        .collect::<Result<_>>()?;
    if cells.is_empty() {
        bail!("empty cell list");
    }
    let net = NeuralViscosity::load(checkpoint)
        .with_context(|| format!("cannot load checkpoint {}", checkpoint.display()))?;
    if net.config.n_vars != case.eq.n_vars() || net.config.p != numerics.p {
        bail!(
            "checkpoint was built for s={}, p={}; case '{}' with --p {} needs s={}",
            net.config.n_vars,
            net.config.p,
            case.name,
            numerics.p,
            case.eq.n_vars()
        );
    }
    std::fs::create_dir_all(out)?;

    let models = [
        ViscosityModel::None,
        ViscosityModel::Db(DbParams::default()),
        ViscosityModel::Mdh(MdhParams::default()),
        ViscosityModel::Neural(net),
    ];
    let mut table = String::from(metrics_header());
    let mut outputs = Vec::new();
    // Reference runs are shared across models and, when the rounding
    // coincides, across cell counts.
    let mut references: Vec<(usize, (dgvisc::fv::FvMesh, dgvisc::fv::FvState))> = Vec::new();
    for &n in &cells {
        let settings = numerics.settings(n)?;
        let n_ref = settings.n_ref_adjusted();
        if !references.iter().any(|(r, _)| *r == n_ref) {
            let reference = reference_final(&case, n_ref, settings.dt_ref, settings.limiter)?;
            references.push((n_ref, reference));
        }
        let reference = &references.iter().find(|(r, _)| *r == n_ref).unwrap().1;
        for model in &models {
            eprintln!("running {} / {} / {n} cells", case.name, model.label());
            let result = run_case(&case, model, &settings, reference)?;
            table.push_str(&result.metrics.csv_line());
            let plot = format!("{}_{}_{}.csv", case.name, model.label(), n);
            std::fs::write(out.join(&plot), &result.solution_csv)?;
            outputs.push(plot);
        }
    }
    std::fs::write(out.join("comparison.csv"), &table)?;
    outputs.push("comparison.csv".into());
    print!("{table}");

    Manifest {
        command: format!("compare --case {case_name} --cells {cells_list}"),
        config_toml: format!(
            "case = {:?}\ncells = {:?}\np = {}\ndt = {}\nn_ref = {}\ncheckpoint = {:?}\n",
            case_name,
            cells,
            numerics.p,
            numerics.dt,
            numerics.n_ref,
            checkpoint.display().to_string()
        ),
        seeds: vec![],
        outputs,
    }
    .write(out)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_gradcheck(config: Option<&Path>) -> Result<ExitCode> {
    let mut cfg = GradCheckConfig::default();
    if let Some(path) = config {
        cfg.train = load_train_config(path)?;
    }
    let report = run_gradcheck(&cfg, None)?;
    for (m, err) in &report.per_m {
        println!("m = {m:>3}: max relative error {err:.3e}");
    }
    println!("overall max relative error {:.3e}", report.max_rel_error);
    if report.max_rel_error > 1e-5 {
        eprintln!("gradient check FAILED (tolerance 1e-5)");
        return Ok(ExitCode::from(1));
    }
    println!("gradient check passed");
    Ok(ExitCode::SUCCESS)
}
