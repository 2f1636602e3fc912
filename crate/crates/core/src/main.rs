use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use beclab::config::{Config, GridSection, MinimizerSection, SweepSection};
use beclab::electro::{multipole_moments, riemann_gap, vortex_kinetic_bound, CellCharge, CellShape};
use beclab::sweep::{locate_crossover, run_sweep, write_rows, CrossoverOptions};
use beclab::trial::DEFAULT_MAX_N;
use beclab::vortex::{extract_vortices, vorticity_measure, Region};
use beclab::*;

#[derive(Parser)]
#[command(name = "beclab", version, about = "Rotating condensates on the unit disc")]
struct Cli {
    /// Sectioned key-value config file; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum, Default)]
enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Args, Clone, Copy)]
struct PhysArgs {
    #[arg(long)]
    epsilon: f64,
    #[arg(long = "Omega", allow_negative_numbers = true)]
    omega: f64,
}

impl PhysArgs {
    fn params(&self) -> Result<Params> {
        if self.omega == 0.0 {
            Params::at_rest(self.epsilon)
        } else {
            Params::derive(self.epsilon, self.omega)
        }
    }
}

/// Flags mirroring the config keys.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    max_n: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    tol_residual: Option<f64>,
    /// uniform | giant | random:SEED | trial:KIND | file:PATH
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    anneal: Option<bool>,
    #[arg(long)]
    anneal_start_fraction: Option<f64>,
    #[arg(long)]
    anneal_stages: Option<usize>,
    #[arg(long)]
    anneal_iters: Option<usize>,
}

#[derive(Args, Clone, Default)]
struct SweepArgs {
    /// eps:Omega,eps:Omega,...
    #[arg(long)]
    pairs: Option<String>,
    /// eps0:Omega0:steps
    #[arg(long)]
    path: Option<String>,
    #[arg(long)]
    kinds: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    snapshots: Option<bool>,
    #[arg(long)]
    workers: Option<usize>,
}

fn load_config(path: &Option<PathBuf>, c: &ConfigArgs, s: Option<&SweepArgs>) -> Result<Config> {
    let base = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let s = s.cloned().unwrap_or_default();
    Ok(base.overlay(Config {
        grid: GridSection { n: c.n, max_n: c.max_n },
        minimizer: MinimizerSection {
            max_iters: c.max_iters,
            step: c.step,
            tol_residual: c.tol_residual,
            init: c.init.clone(),
            anneal: c.anneal,
            anneal_start_fraction: c.anneal_start_fraction,
            anneal_stages: c.anneal_stages,
            anneal_iters: c.anneal_iters,
        },
        sweep: SweepSection {
            pairs: s.pairs,
            path: s.path,
            kinds: s.kinds,
            out_dir: s.out_dir,
            snapshots: s.snapshots,
            workers: s.workers,
        },
    }))
}

#[derive(Subcommand)]
enum Command {
    /// Thomas-Fermi energy, chemical potential and density.
    Tf {
        #[command(flatten)]
        phys: PhysArgs,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Vortex-lattice trial state and its energy.
    Trial {
        #[command(flatten)]
        phys: PhysArgs,
        #[arg(long, default_value = "triangular")]
        kind: LatticeKind,
        /// Grid points per side; defaults to a core-resolving grid.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
        #[arg(long)]
        dump_field: Option<PathBuf>,
    },
    /// Minimize the discrete GP energy. Exits with 2 when not converged.
    Minimize {
        #[command(flatten)]
        phys: PhysArgs,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        dump_field: Option<PathBuf>,
        /// CSV of the energy per iteration.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Vortices of a stored field (CSV on stdout) and the vorticity measure.
    Vortices {
        #[arg(long)]
        field: PathBuf,
        #[command(flatten)]
        phys: PhysArgs,
        /// annulus:R1:R2 | box:X0:X1:Y0:Y1 | disc:R
        #[arg(long)]
        region: Option<Region>,
        /// Relative amplitude used for the isolation checks.
        #[arg(long, default_value_t = 0.1)]
        threshold: f64,
        /// Where to write the JSON report; stderr when absent.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Multipole moments of a neutral lattice cell.
    #[command(args_conflicts_with_subcommands = true)]
    Electro {
        #[command(subcommand)]
        sub: Option<ElectroSub>,
        #[arg(long, default_value = "square")]
        cell: CellShape,
        #[arg(long = "K", default_value_t = 8)]
        k: usize,
    },
    /// Run a parameter sweep; CSV on stdout and in OUT_DIR/sweep.csv.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Bisect for the Omega where lattice and giant-vortex trial energies cross.
    Crossover {
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        lo: Option<f64>,
        #[arg(long)]
        hi: Option<f64>,
        #[arg(long, default_value = "triangular")]
        kind: LatticeKind,
        #[arg(long, default_value_t = DEFAULT_MAX_N)]
        max_n: usize,
        #[arg(long, default_value_t = 0.02)]
        rel_tol: f64,
    },
}

#[derive(Subcommand)]
enum ElectroSub {
    /// Vortex kinetic energy of the lattice phase against its leading term.
    Bound {
        #[command(flatten)]
        phys: PhysArgs,
        #[arg(long, default_value = "triangular")]
        kind: LatticeKind,
        #[arg(long, default_value_t = 0.0)]
        slack: f64,
    },
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    writeln!(std::io::stdout().lock(), "{s}")?;
    Ok(())
}

fn print_csv(header: &[String], row: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(std::io::stdout());
    let map = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(header).map_err(map)?;
    w.write_record(row).map_err(map)?;
    w.flush()?;
    Ok(())
}

fn configure_threads() {
    if let Some(n) = std::env::var("BECLAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let n = n.max(1);
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not cap threads: {e}");
        }
    }
}

fn thread_cap() -> Option<usize> {
    std::env::var("BECLAB_THREADS").ok()?.parse().ok()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    configure_threads();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Tf { phys, format } => {
            let p = phys.params()?;
            let tf = solve_tf(p.omega)?;
            let radii: Vec<f64> = (0..512).map(|i| i as f64 / 511.0).collect();
            let density: Vec<f64> = radii.iter().map(|&r| tf.density(r)).collect();
            match format {
                Format::Json => {
                    #[derive(Serialize)]
                    struct Out {
                        omega: f64,
                        scaled_energy: f64,
                        unscaled_energy: f64,
                        scaled_mu: f64,
                        unscaled_mu: f64,
                        hole_radius: f64,
                        radii: Vec<f64>,
                        density_at: Vec<f64>,
                    }
                    print_json(&Out {
                        omega: tf.omega,
                        scaled_energy: tf.scaled_energy,
                        unscaled_energy: tf.unscaled_energy(&p),
                        scaled_mu: tf.scaled_chemical_potential,
                        unscaled_mu: tf.unscaled_chemical_potential(&p),
                        hole_radius: tf.hole_radius,
                        radii,
                        density_at: density,
                    })?;
                }
                Format::Csv => {
                    // One record; density columns are at r = i/511.
                    let mut header: Vec<String> =
                        ["omega", "scaled_energy", "unscaled_energy", "scaled_mu", "unscaled_mu", "hole_radius"]
                            .iter()
                            .map(|s| s.to_string())
                            .collect();
                    header.extend((0..512).map(|i| format!("rho_{i}")));
                    let mut row: Vec<String> = [
                        tf.omega,
                        tf.scaled_energy,
                        tf.unscaled_energy(&p),
                        tf.scaled_chemical_potential,
                        tf.unscaled_chemical_potential(&p),
                        tf.hole_radius,
                    ]
                    .iter()
                    .map(|v| format!("{v:.15e}"))
                    .collect();
                    row.extend(density.iter().map(|v| format!("{v:.15e}")));
                    print_csv(&header, &row)?;
                }
            }
        }
        Command::Trial {
            phys,
            kind,
            n,
            format,
            dump_field,
        } => {
            let p = phys.params()?;
            let grid = n.map(make_grid).transpose()?;
            let tr = assemble_trial(&p, &TrialOptions::with_kind(kind), grid)?;
            let e = tr.energy(&p)?;
            let lat = tr.lattice.as_ref().expect("lattice trial");
            if let Some(path) = dump_field {
                tr.psi.save(&path)?;
            }
            #[derive(Serialize)]
            struct Out {
                kind: LatticeKind,
                kinetic: f64,
                centrifugal: f64,
                interaction: f64,
                total: f64,
                c: f64,
                t: f64,
                ell: f64,
                count: usize,
                count_support: usize,
                grid_n: usize,
            }
            let out = Out {
                kind,
                kinetic: e.kinetic,
                centrifugal: e.centrifugal,
                interaction: e.interaction,
                total: e.total,
                c: tr.c,
                t: lat.core_radius,
                ell: lat.ell,
                count: lat.count,
                count_support: lat.count_support,
                grid_n: tr.psi.grid().n(),
            };
            match format {
                Format::Json => print_json(&out)?,
                Format::Csv => {
                    let header: Vec<String> = [
                        "kind", "kinetic", "centrifugal", "interaction", "total", "c", "t", "ell", "N",
                        "N_support", "grid_n",
                    ]
                    .iter()
                    .map(|s| s.to_string())
                    .collect();
                    let f = |v: f64| format!("{v:.15e}");
                    let row = vec![
                        kind.to_string(),
                        f(out.kinetic),
                        f(out.centrifugal),
                        f(out.interaction),
                        f(out.total),
                        f(out.c),
                        f(out.t),
                        f(out.ell),
                        out.count.to_string(),
                        out.count_support.to_string(),
                        out.grid_n.to_string(),
                    ];
                    print_csv(&header, &row)?;
                }
            }
        }
        Command::Minimize {
            phys,
            cfg,
            dump_field,
            history,
        } => {
            let p = phys.params()?;
            let config = load_config(&cli.config, &cfg, None)?;
            let grid = make_grid(config.grid_n())?;
            let opts = config.minimize_options()?;
            let report = match minimize(&p, &grid, &opts) {
                Ok(r) => r,
                Err(e @ (Error::NonConvergence { .. } | Error::StepUnderflow { .. })) => {
                    log::warn!("{e}");
                    e.into_report().expect("convergence errors carry a report")
                }
                Err(e) => return Err(e),
            };
            if let Some(path) = dump_field {
                report.psi.save(&path)?;
            }
            if let Some(path) = history {
                let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Format(e.to_string()))?;
                let map = |e: csv::Error| Error::Format(e.to_string());
                w.write_record(["iter", "energy"]).map_err(map)?;
                for (i, e) in report.energy_history.iter().enumerate() {
                    w.write_record([i.to_string(), format!("{e:.15e}")]).map_err(map)?;
                }
                w.flush()?;
            }
            let tf = solve_tf(p.omega)?;
            #[derive(Serialize)]
            struct Out<'a> {
                status: &'static str,
                params: &'a Params,
                init: String,
                seed: Option<u64>,
                energy: EnergyBreakdown,
                e_tf: f64,
                mu: f64,
                residual: f64,
                residual_target: f64,
                iters: usize,
                sup_ratio: f64,
            }
            print_json(&Out {
                status: if report.converged { "CONVERGED" } else { "NONCONVERGED" },
                params: &p,
                init: opts.init.to_string(),
                seed: report.seed,
                energy: report.breakdown,
                e_tf: tf.unscaled_energy(&p),
                mu: report.mu,
                residual: report.residual_norm,
                residual_target: report.residual_target,
                iters: report.iters,
                sup_ratio: report.sup_density / tf.sup_density(),
            })?;
            if !report.converged {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Vortices {
            field,
            phys,
            region,
            threshold,
            json,
        } => {
            let p = phys.params()?;
            let psi = ComplexField::load(&field)?;
            let rotation = p.is_rotating().then_some(p.rotation);
            let vs = extract_vortices(&psi, threshold, rotation)?;
            vs.write_csv(std::io::stdout())?;
            #[derive(Serialize)]
            struct Out {
                count: usize,
                total_degree: i64,
                violations: usize,
                undefined_plaquettes: usize,
                measure: Option<beclab::vortex::VorticityMeasureReport>,
            }
            let measure = match region {
                Some(r) => Some(vorticity_measure(&vs, &p, &solve_tf(p.omega)?, r)?),
                None => None,
            };
            let out = Out {
                count: vs.len(),
                total_degree: vs.total_degree,
                violations: vs.violations(),
                undefined_plaquettes: vs.undefined_plaquettes,
                measure,
            };
            let s = serde_json::to_string_pretty(&out).map_err(|e| Error::Format(e.to_string()))?;
            match json {
                Some(path) => std::fs::write(path, s + "\n")?,
                None => eprintln!("{s}"),
            }
        }
        Command::Electro { sub, cell, k } => match sub {
            None => print_json(&multipole_moments(&CellCharge::unit(cell), k)?)?,
            Some(ElectroSub::Bound { phys, kind, slack }) => {
                let p = phys.params()?;
                let tf = solve_tf(p.omega)?;
                let c = RegimeConstants::default();
                let lattice = build_lattice(&p, kind, [0.0, 0.0], &c)?;
                let bound = vortex_kinetic_bound(&p, &lattice, &tf, slack, None)?;
                let gap = riemann_gap(&tf, p.rotation, kind, Some(p.epsilon))?;
                #[derive(Serialize)]
                struct Out {
                    lhs: f64,
                    rhs: f64,
                    ratio: f64,
                    detail: beclab::electro::KineticBound,
                    riemann: beclab::electro::RiemannGap,
                }
                print_json(&Out {
                    lhs: bound.lhs,
                    rhs: bound.rhs,
                    ratio: bound.ratio,
                    detail: bound,
                    riemann: gap,
                })?;
            }
        },
        Command::Sweep { cfg, sweep } => {
            let config = load_config(&cli.config, &cfg, Some(&sweep))?;
            let mut spec = config.sweep_spec()?;
            if let Some(cap) = thread_cap() {
                spec.workers = spec.workers.min(cap.max(1));
            }
            let rows = run_sweep(&spec)?;
            let mut out = std::io::stdout().lock();
            write_rows(&rows, &mut out)?;
            out.flush()?;
        }
        Command::Crossover {
            epsilon,
            lo,
            hi,
            kind,
            max_n,
            rel_tol,
        } => {
            let predicted = 1.0 / (epsilon * epsilon * epsilon.ln().abs());
            // Start just above the hole onset so the giant vortex exists.
            let lo = lo.unwrap_or_else(|| (0.2 * predicted).max(1.05 * beclab::tf::OMEGA_H / epsilon));
            let hi = hi.unwrap_or(5.0 * predicted);
            let opts = CrossoverOptions { kind, max_n, rel_tol };
            print_json(&locate_crossover(epsilon, (lo, hi), &opts)?)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
