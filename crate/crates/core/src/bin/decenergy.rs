//! Command line front end. Exit codes: 0 success, 1 usage, 2 data error,
//! 3 training did not converge.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use decenergy::bitdepth::{
    default_groups, parse_groups, reference_phi, search_phi, sweep_zeta, ZetaGrid,
};
use decenergy::catalog::{CatalogVariant, FeatureCatalog};
use decenergy::dataset::{
    load_dataset, load_dataset_dir, write_dataset, BitDepth, EnergyDataset, VideoFormat,
};
use decenergy::energy::{energy_ratio_report, mean_estimation_error, phi_to_bits, EnergyModel};
use decenergy::pipeline::{load_phi, run_pipeline};
use decenergy::report::{
    format_percent, render_curve, render_curve_raw, render_error_table, EvaluationReport, ReportRow,
};
use decenergy::synthetic::{
    default_count_ranges, default_true_coefficients, generate_synthetic_corpus, CorpusSpec,
};
use decenergy::trainer::{check_disjoint, train, Objective, TrainingConfig};
use decenergy::{Error, Result};

#[derive(Parser)]
#[command(
    name = "decenergy",
    version,
    about = "Feature-based HEVC decoding energy models"
)]
struct Cli {
    /// Directory all relative paths resolve against.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and join a features/energies/manifest triple into a dataset directory.
    Ingest {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        energies: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the feature catalog.
    Catalog {
        #[arg(long, default_value = "fu")]
        variant: CatalogVariant,
        /// Print only the canonical features CSV header.
        #[arg(long)]
        csv_header: bool,
    },
    /// Fit nonnegative feature energies on a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "rel")]
        objective: Objective,
        /// Catalog of the model; FU data is projected for FA.
        #[arg(long)]
        variant: Option<CatalogVariant>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report the mean estimation error of a model on datasets.
    Validate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "dataset", required = true)]
        datasets: Vec<PathBuf>,
        /// Training dataset, checked for overlap with the validation sets.
        #[arg(long)]
        train: Option<PathBuf>,
        /// Use the model's bit-depth extension.
        #[arg(long)]
        scaled: bool,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        residuals: Option<PathBuf>,
    },
    /// Sweep the bit-depth scaling factor for a fixed phi.
    SweepZeta {
        #[arg(long)]
        model: PathBuf,
        /// `reference` or a file with one line of 0/1 flags.
        #[arg(long, default_value = "reference")]
        phi: String,
        #[arg(long)]
        validate: PathBuf,
        #[arg(long, default_value = "0:1.5:0.01")]
        grid: ZetaGridArg,
        #[arg(long)]
        curve_out: Option<PathBuf>,
        /// Full-precision `zeta,mean_error` rows.
        #[arg(long)]
        raw_out: Option<PathBuf>,
    },
    /// Brute-force the phi assignment over feature groups.
    ///
    /// The default grouping (one group per catalog row) is a guess. Pass a
    /// file to use another.
    SearchPhi {
        #[arg(long)]
        model: PathBuf,
        /// `default` or a file of `name: leaf-or-label ...` lines.
        #[arg(long, default_value = "default")]
        groups: String,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        validate: PathBuf,
        #[arg(long, default_value = "0:1.5:0.01")]
        grid: ZetaGridArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic dataset with known coefficients.
    Synth(SynthArgs),
    /// Report 10-bit/8-bit energy ratios of paired datasets.
    Ratio {
        #[arg(long)]
        dataset8: PathBuf,
        #[arg(long)]
        dataset10: PathBuf,
        #[arg(long)]
        scatter_out: Option<PathBuf>,
    },
    /// Run a declarative pipeline configuration.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value = "fu")]
    catalog: CatalogVariant,
    #[arg(long)]
    records: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seed of the planted coefficients.
    #[arg(long, default_value_t = 0)]
    coefficient_seed: u64,
    #[arg(long, default_value_t = 8)]
    bit_depth: u8,
    #[arg(long, default_value = "Synthetic8")]
    setup: String,
    #[arg(long, default_value = "sdr")]
    format: String,
    /// Plant the bit-depth scaling with the reference phi flags.
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone)]
struct ZetaGridArg(ZetaGrid);

impl std::str::FromStr for ZetaGridArg {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ZetaGrid::parse(s).map(ZetaGridArg)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn load(dir: &Path) -> Result<EnergyDataset> {
    let (ds, check) = load_dataset_dir(dir)?;
    check.into_result()?;
    Ok(ds)
}

fn load_model(path: &Path) -> Result<EnergyModel> {
    EnergyModel::from_text(&read(path)?)
}

fn in_variant(ds: EnergyDataset, variant: CatalogVariant) -> Result<EnergyDataset> {
    if ds.variant() == variant {
        Ok(ds)
    } else {
        ds.project(FeatureCatalog::get(variant))
    }
}

fn run(cli: Cli) -> Result<u8> {
    let wd = |p: &Path| cli.workdir.join(p);
    match cli.command {
        Command::Ingest {
            features,
            energies,
            manifest,
            out,
        } => {
            let (ds, check) = load_dataset(&wd(&features), &wd(&energies), &wd(&manifest))?;
            check.into_result()?;
            write_dataset(&ds, &wd(&out))?;
            println!(
                "{}: {} records, catalog {}",
                ds.name,
                ds.len(),
                ds.variant()
            );
        }
        Command::Catalog {
            variant,
            csv_header,
        } => {
            let catalog = FeatureCatalog::get(variant);
            if csv_header {
                println!("id,{}", catalog.leaf_names().join(","));
            } else {
                print!("{}", catalog.to_table());
            }
        }
        Command::Train {
            dataset,
            objective,
            variant,
            max_iter,
            tol,
            out,
        } => {
            let ds = load(&wd(&dataset))?;
            let variant = variant.unwrap_or(ds.variant());
            let ds = in_variant(ds, variant)?;
            let config = TrainingConfig {
                objective,
                max_iterations: max_iter,
                convergence_tol: tol,
                ..TrainingConfig::default()
            };
            let outcome = train(&ds, &config)?;
            write(&wd(&out), &outcome.model.to_text())?;
            let untrained = outcome.model.untrained().iter().filter(|&&u| u).count();
            println!(
                "trained {} on {} ({} records): {} iterations, KKT residual {:e}, {} untrained leaves",
                variant,
                ds.name,
                ds.len(),
                outcome.iterations,
                outcome.kkt_residual,
                untrained
            );
            if !outcome.converged {
                eprintln!(
                    "error: {}",
                    Error::NotConverged {
                        iterations: outcome.iterations,
                        kkt_residual: outcome.kkt_residual
                    }
                );
                return Ok(3);
            }
        }
        Command::Validate {
            model,
            datasets,
            train,
            scaled,
            report,
            residuals,
        } => {
            let model = load_model(&wd(&model))?;
            let train_set = train.map(|t| load(&wd(&t))).transpose()?;
            let setup = model.attribute("trained_on").unwrap_or("model").to_string();
            let depth = model
                .attribute("bit_depth")
                .and_then(|d| d.parse::<u8>().ok())
                .and_then(|d| BitDepth::try_from(d).ok());
            let mut out = EvaluationReport::new(&setup, depth);
            for path in &datasets {
                let ds = load(&wd(path))?;
                if let Some(t) = &train_set {
                    check_disjoint(t, &ds)?;
                }
                let data = in_variant(ds, model.variant())?;
                let summary = mean_estimation_error(&model, &data, scaled)?;
                println!(
                    "{}: mean_error={} ({})",
                    data.name,
                    summary.mean,
                    format_percent(summary.mean)
                );
                out.rows.push(ReportRow {
                    validation_setup: data.name.clone(),
                    validation_bit_depth: data.bit_depth(),
                    variant: model.variant(),
                    mean_error: summary.mean,
                    residuals: summary.residuals,
                });
            }
            print!("{}", render_error_table(std::slice::from_ref(&out)));
            if let Some(path) = report {
                write(&wd(&path), &out.to_csv())?;
            }
            if let Some(path) = residuals {
                write(&wd(&path), &out.residuals_csv())?;
            }
        }
        Command::SweepZeta {
            model,
            phi,
            validate,
            grid,
            curve_out,
            raw_out,
        } => {
            let model = load_model(&wd(&model))?;
            let catalog = FeatureCatalog::get(model.variant());
            let phi = load_phi(&phi, catalog, &cli.workdir)?;
            let ds = in_variant(load(&wd(&validate))?, model.variant())?;
            let sweep = sweep_zeta(&model, &phi, &ds, &grid.0)?;
            let curve = render_curve(&sweep);
            match curve_out {
                Some(path) => write(&wd(&path), &curve)?,
                None => print!("{curve}"),
            }
            if let Some(path) = raw_out {
                write(&wd(&path), &render_curve_raw(&sweep))?;
            }
            let (z, e) = sweep.best();
            println!(
                "argmin zeta={:.*} mean_error={} ({})",
                sweep.decimals,
                z,
                e,
                format_percent(e)
            );
        }
        Command::SearchPhi {
            model,
            groups,
            train,
            validate,
            grid,
            out,
        } => {
            let model = load_model(&wd(&model))?;
            let catalog = FeatureCatalog::get(model.variant());
            let groups = if groups == "default" {
                default_groups(catalog)
            } else {
                parse_groups(&read(&wd(Path::new(&groups)))?, catalog)?
            };
            let train_set = in_variant(load(&wd(&train))?, model.variant())?;
            let validation = in_variant(load(&wd(&validate))?, model.variant())?;
            let result = search_phi(&model, &groups, &train_set, &validation, &grid.0)?;
            let names: Vec<&str> = result
                .selected_groups
                .iter()
                .map(|&g| groups[g].name.as_str())
                .collect();
            let text = format!(
                "groups={}\nsubsets={}\nselected={}\nzeta={:.*}\nmean_error={}\nmean_error_percent={}\nphi={}\n",
                groups.len(),
                result.subsets_evaluated,
                names.join(" "),
                grid.0.display_decimals(),
                result.zeta,
                result.mean_error,
                format_percent(result.mean_error),
                phi_to_bits(&result.phi)
            );
            match out {
                Some(path) => write(&wd(&path), &text)?,
                None => print!("{text}"),
            }
        }
        Command::Synth(args) => synth(&cli.workdir, args)?,
        Command::Ratio {
            dataset8,
            dataset10,
            scatter_out,
        } => {
            let report = energy_ratio_report(&load(&wd(&dataset8))?, &load(&wd(&dataset10))?)?;
            print!("{}", report.summary());
            if let Some(path) = scatter_out {
                write(&wd(&path), &report.scatter_csv())?;
            }
        }
        Command::Pipeline { config } => {
            let summary = run_pipeline(&config, &cli.workdir)?;
            println!(
                "wrote {} artifacts to {}",
                summary.artifacts.len(),
                summary.output.display()
            );
        }
    }
    Ok(0)
}

fn synth(workdir: &Path, args: SynthArgs) -> Result<()> {
    let catalog = FeatureCatalog::get(args.catalog);
    let bit_depth = BitDepth::try_from(args.bit_depth)
        .map_err(|e| Error::InvalidConfig(format!("--bit-depth: {e}")))?;
    let ranges = default_count_ranges();
    let coefficients = default_true_coefficients(catalog, &ranges, args.coefficient_seed);
    let mut spec = CorpusSpec::new(
        &args.setup,
        bit_depth,
        args.records,
        coefficients,
        args.seed,
    );
    spec.noise_sigma = args.noise;
    spec.format = args
        .format
        .parse::<VideoFormat>()
        .map_err(|e| Error::InvalidConfig(format!("--format: {e}")))?;
    if let Some(zeta) = args.zeta {
        spec.extension = Some((zeta, reference_phi(catalog)?));
    }
    let (ds, truth) = generate_synthetic_corpus(catalog, &spec)?;
    let out = workdir.join(&args.out);
    write_dataset(&ds, &out)?;
    write(&out.join("ground_truth.txt"), &truth.to_text())?;
    println!(
        "{}: {} records written to {}",
        ds.name,
        ds.len(),
        out.display()
    );
    Ok(())
}
