use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use fairdiv::cake::{cake_bridge, decompose_general, decompose_two_agents, farkas_feasibility, lottery_shares};
use fairdiv::instance::{gen_cake_space, validate_space, DeterministicSpace};
use fairdiv::io::{self, CakeFile, CertificateFile};
use fairdiv::oracle::certify;
use fairdiv::preferences::{envy_matrix, Preference};
use fairdiv::qsolver::{solve_q, SolverConfig, WeightVector};
use fairdiv::sperner::{plot_svg, solve_fair, solve_fair_detailed, TraceRound};

#[derive(Parser)]
#[command(name = "fairdiv", version, about = "Envy-free, weakly Pareto-efficient random allocations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check that the allocation space is closed under swapping agents.
    Validate { instance: PathBuf },
    /// Envy matrix of a lottery, as CSV (row agent envies column agent by the entry).
    Envy {
        instance: PathBuf,
        prefs: PathBuf,
        lottery: PathBuf,
    },
    /// Maximize regularized weighted welfare at fixed weights.
    Maximize {
        instance: PathBuf,
        prefs: PathBuf,
        /// Pareto weights, e.g. `1/3,1/3,1/3` or `0.5,0.5`.
        #[arg(long, allow_hyphen_values = true)]
        lambda: String,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 100_000)]
        max_iters: usize,
        /// Per-iteration `iter,gap,q_value` rows.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the result here instead of stdout.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Find an ε-envy-free, ε-weakly Pareto-efficient lottery and print its certificate.
    Solve {
        instance: PathBuf,
        prefs: PathBuf,
        #[arg(long)]
        eps: f64,
        /// Per-round search rows.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// SVG of the labeled subdivisions (three agents only).
        #[arg(long)]
        plot: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Write a cake allocation as a lottery over partitions, one `weight,assignment` row each.
    Decompose {
        cake: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Greedy)]
        method: Method,
    },
    /// Solve the cake's cell economy and decompose the resulting shares into partitions.
    CakeSolve {
        cake: PathBuf,
        #[arg(long)]
        eps: f64,
    },
    /// Recheck a certificate exactly; exit 1 if it does not hold.
    OracleCheck {
        instance: PathBuf,
        prefs: PathBuf,
        certificate: PathBuf,
        /// Tolerance to check against (default: the one the certificate was issued for).
        #[arg(long)]
        eps: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    TwoAgent,
    Greedy,
    Farkas,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load(instance: &Path, prefs: &Path) -> Result<(DeterministicSpace, Vec<Preference>)> {
    let space = io::read_instance(&read(instance)?).with_context(|| format!("instance {}", instance.display()))?;
    let prefs = io::read_preferences(&read(prefs)?, &space).with_context(|| format!("preferences {}", prefs.display()))?;
    Ok((space, prefs))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Validate { instance } => {
            let space = io::read_instance(&read(&instance)?)?;
            let report = validate_space(&space);
            print!("allocations={}\n{}", space.len(), report.to_key_values());
            return Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) });
        }
        Command::Envy { instance, prefs, lottery } => {
            let (space, prefs) = load(&instance, &prefs)?;
            let p = io::read_lottery(&read(&lottery)?, &space)?;
            print!("{}", envy_matrix(&space, &p, &prefs)?.to_csv());
        }
        Command::Maximize {
            instance,
            prefs,
            lambda,
            delta,
            tol,
            max_iters,
            trace,
            out,
        } => {
            let (space, prefs) = load(&instance, &prefs)?;
            let lambda = WeightVector::parse(&lambda)?;
            let sol = solve_q(&space, &prefs, &lambda, &SolverConfig::new(delta, tol, max_iters)?)?;
            if let Some(path) = trace {
                let mut csv = String::from("iter,gap,q_value\n");
                for row in &sol.trace {
                    csv.push_str(&format!("{},{:e},{}\n", row.iter, row.gap, row.q_value));
                }
                write(&path, &csv)?;
            }
            emit(out.as_deref(), &io::write_qsolution(&sol, &space, &lambda, delta))?;
        }
        Command::Solve {
            instance,
            prefs,
            eps,
            trace,
            plot,
            out,
        } => {
            let space = io::read_instance(&read(&instance)?)?;
            let report = validate_space(&space);
            if !report.passed() {
                eprint!("{}", report.to_key_values());
                bail!("refusing to solve: the allocation space is not closed under swapping agents");
            }
            let prefs = io::read_preferences(&read(&prefs)?, &space)?;
            let run = solve_fair_detailed(&space, &prefs, eps)?;
            if let Some(path) = trace {
                let mut csv = format!("{}\n", TraceRound::CSV_HEADER);
                for row in &run.refinement.trace {
                    csv.push_str(&row.to_csv());
                    csv.push('\n');
                }
                write(&path, &csv)?;
            }
            if let Some(path) = plot {
                write(&path, &plot_svg(&run.refinement)?)?;
            }
            emit(out.as_deref(), &CertificateFile::new(&run.certificate, &space, eps).to_json())?;
        }
        Command::Decompose { cake, method } => {
            let f = CakeFile::parse(&read(&cake)?)?.simple_allocation()?;
            let d = match method {
                Method::TwoAgent => decompose_two_agents(&f)?,
                Method::Greedy => decompose_general(&f)?,
                Method::Farkas => farkas_feasibility(&f)?,
            };
            print!("{}", d.to_rows());
        }
        Command::CakeSolve { cake, eps } => {
            let file = CakeFile::parse(&read(&cake)?)?;
            let mu = file.measure()?;
            let space = gen_cake_space(mu.n_agents(), mu.n_cells())?;
            let prefs = cake_bridge(&space, &mu)?;
            let cert = solve_fair(&space, &prefs, eps)?;
            let shares = lottery_shares(&space, &cert.lottery, file.widths()?)?;
            print!("{}", decompose_general(&shares)?.to_rows());
        }
        Command::OracleCheck {
            instance,
            prefs,
            certificate,
            eps,
        } => {
            let (space, prefs) = load(&instance, &prefs)?;
            let file = CertificateFile::parse(&read(&certificate)?)?;
            let eps = eps.unwrap_or(file.eps);
            let checked = file
                .to_certificate(&space)
                .and_then(|cert| certify(&space, &prefs, &cert, eps));
            return Ok(match checked {
                Ok(report) => {
                    print!("verdict=pass\n{}", report.to_key_values());
                    ExitCode::SUCCESS
                }
                Err(fairdiv::FairDivError::Certification(failures)) => {
                    println!("verdict=fail");
                    for f in failures {
                        println!("violation={f}");
                    }
                    ExitCode::from(1)
                }
                Err(e) => return Err(e.into()),
            });
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
