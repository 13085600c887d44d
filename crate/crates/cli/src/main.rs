use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lomac::io::{
    append_row, config_from_entries, config_to_string, csv_header, parse_config_str,
    parse_override, snapshot_read, snapshot_write, write_diagnostics, ConfigEntry, Snapshot,
};
use lomac::presets::forced_errors;
use lomac::{
    Dimensionality, KineticState, LomacError, Preset, Result, Simulation, SolverConfig, Variant,
};

#[derive(Parser)]
#[command(
    name = "lomac",
    version,
    about = "Conservative low-rank Vlasov-Poisson solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its diagnostics CSV.
    Run(RunArgs),
    /// Forced-problem error table over a list of resolutions.
    Convergence {
        #[command(flatten)]
        common: Common,
        /// Comma-separated grid sizes (N x N).
        #[arg(long, value_delimiter = ',', default_value = "32,64,128,256")]
        sizes: Vec<usize>,
    },
    /// Run variants I, II and III on one setup and merge the diagnostics.
    Compare(Common),
    /// Print a summary of a snapshot file.
    Inspect { snapshot: PathBuf },
}

#[derive(Args)]
struct Common {
    /// Config file in `[section]` / `key = value` form.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset name; overrides `preset.name` from the config file.
    #[arg(long)]
    preset: Option<String>,
    /// Override a single key, e.g. `--set grid.nx=64` or `--set eps=1e-6`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Write a restart snapshot every this many steps.
    #[arg(long)]
    snapshot_every: Option<usize>,
    /// Continue from a snapshot instead of the initial condition.
    #[arg(long)]
    resume: Option<PathBuf>,
}

impl Common {
    fn entries(&self) -> Result<Vec<ConfigEntry>> {
        let mut entries = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| LomacError::io(path, e))?;
                parse_config_str(&text)?
            }
            None => Vec::new(),
        };
        if let Some(name) = &self.preset {
            entries.push(ConfigEntry {
                section: "preset".into(),
                key: "name".into(),
                value: name.clone(),
                line: 0,
            });
        }
        for s in &self.overrides {
            entries.push(parse_override(s)?);
        }
        Ok(entries)
    }

    fn config(&self) -> Result<SolverConfig> {
        config_from_entries(&self.entries()?)
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out).map_err(|e| LomacError::io(&self.out, e))?;
        Ok(&self.out)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| LomacError::io(path, e))
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let cfg = args.common.config()?;
    let out = args.common.out_dir()?;
    write_text(&out.join("config.cfg"), &config_to_string(&cfg))?;
    let mut sim = match &args.resume {
        Some(path) => snapshot_read(path)?.resume(cfg.clone())?,
        None => Simulation::new(cfg.clone())?,
    };
    eprintln!(
        "{} variant {}: {} steps of {:.4e} to t = {}",
        cfg.preset,
        cfg.variant,
        sim.n_steps() - sim.step_index(),
        sim.dt(),
        cfg.t_end
    );
    let every = args.snapshot_every.filter(|&k| k > 0);
    let series = sim.run_with(|s| {
        if let Some(k) = every {
            if s.step_index() % k == 0 || s.is_finished() {
                let path = out.join(format!("snapshot_{:06}.bin", s.step_index()));
                snapshot_write(&Snapshot::from_simulation(s), path)?;
            }
        }
        Ok(())
    })?;
    let csv = out.join("diagnostics.csv");
    write_diagnostics(&series, &csv)?;
    let last = series.rows.last().expect("series has the initial row");
    eprintln!(
        "t = {:.4}, ranks {:?}, mass dev {:.2e}, energy dev {:.2e} -> {}",
        last.t,
        last.ranks,
        series.max_relative_deviation(|r| r.mass),
        series.max_relative_deviation(|r| r.energy),
        csv.display()
    );
    Ok(())
}

fn cmd_convergence(common: &Common, sizes: &[usize]) -> Result<()> {
    let mut base = if common.config.is_none() && common.preset.is_none() {
        let mut entries = vec![parse_override("preset.name=forced")?];
        for s in &common.overrides {
            entries.push(parse_override(s)?);
        }
        config_from_entries(&entries)?
    } else {
        common.config()?
    };
    if base.preset != Preset::Forced {
        return Err(LomacError::Config(format!(
            "convergence needs the forced preset, got {}",
            base.preset
        )));
    }
    let out = common.out_dir()?;
    let mut rows: Vec<(usize, f64, f64)> = Vec::new();
    println!(
        "{:>6} {:>12} {:>7} {:>12} {:>7}",
        "N", "L_inf", "order", "L_2", "order"
    );
    let mut csv = String::from("n,linf,linf_order,l2,l2_order\n");
    for &n in sizes {
        base.nx = n;
        base.nv = n;
        let mut sim = Simulation::new(base.clone())?;
        sim.run_with(|_| Ok(()))?;
        let f = sim.current().f.as_1d().expect("forced preset is 1D1V");
        let (linf, l2) = forced_errors(f, sim.spatial_grids()[0], sim.velocity_grid(), sim.time());
        let (oi, o2) = match rows.last() {
            Some(&(m, a, b)) => {
                let r = (n as f64 / m as f64).log2();
                ((a / linf).log2() / r, (b / l2).log2() / r)
            }
            None => (f64::NAN, f64::NAN),
        };
        let show = |o: f64| {
            if o.is_nan() {
                "-".to_string()
            } else {
                format!("{o:.2}")
            }
        };
        println!(
            "{n:>6} {linf:>12.3e} {:>7} {l2:>12.3e} {:>7}",
            show(oi),
            show(o2)
        );
        csv += &format!("{n},{linf:e},{oi},{l2:e},{o2}\n");
        rows.push((n, linf, l2));
    }
    write_text(&out.join("convergence.csv"), &csv)
}

fn cmd_compare(common: &Common) -> Result<()> {
    let base = common.config()?;
    let out = common.out_dir()?;
    let path = out.join("compare.csv");
    let file = File::create(&path).map_err(|e| LomacError::io(&path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| LomacError::io(&path, e);
    writeln!(w, "variant,{}", csv_header(base.dimensionality())).map_err(io)?;
    println!(
        "{:>7} {:>12} {:>12} {:>12}",
        "variant", "mass", "momentum", "energy"
    );
    for variant in Variant::ALL {
        let cfg = SolverConfig {
            variant,
            ..base.clone()
        };
        let series = lomac::run(&cfg)?;
        for row in &series.rows {
            let mut line = Vec::new();
            append_row(row, &mut line).map_err(io)?;
            write!(w, "{variant},").map_err(io)?;
            w.write_all(&line).map_err(io)?;
        }
        let dim = series.rows[0].momentum.len();
        let mom = (0..dim)
            .map(|d| series.max_abs_deviation(|r| r.momentum[d]))
            .fold(0.0, f64::max);
        println!(
            "{variant:>7} {:>12.3e} {mom:>12.3e} {:>12.3e}",
            series.max_relative_deviation(|r| r.mass),
            series.max_relative_deviation(|r| r.energy)
        );
    }
    w.flush().map_err(io)
}

fn cmd_inspect(path: &Path) -> Result<()> {
    let snap = snapshot_read(path)?;
    println!("snapshot     {}", path.display());
    println!("format       v{}", snap.version);
    let dim = match snap.dimensionality {
        Dimensionality::OneD1V => "1D1V",
        Dimensionality::TwoD2V => "2D2V",
    };
    println!("dimension    {dim}");
    println!(
        "grid         nx = {}, nv = {}, v_max = {}",
        snap.nx, snap.nv, snap.v_max
    );
    println!("weight beta  {}", snap.beta);
    println!("eps          {:e}", snap.eps);
    println!(
        "time         {} (step {}, dt = {:e})",
        snap.time, snap.step, snap.dt
    );
    println!("levels       {}", snap.levels.len());
    for (i, level) in snap.levels.iter().enumerate() {
        let (kind, storage, norm) = match &level.f {
            KineticState::One(f) => ("low-rank", f.storage_len(), f.norm()),
            KineticState::Two(f) => ("HT", f.storage_len(), f.norm()),
        };
        print!(
            "  [{i}] {kind} ranks {:?}, {storage} stored values, norm {norm:.6e}",
            level.f.ranks()
        );
        match &level.macro_state {
            Some(m) => println!(", sum rho {:.12e}", m.rho.iter().sum::<f64>()),
            None => println!(),
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Convergence { common, sizes } => cmd_convergence(common, sizes),
        Command::Compare(common) => cmd_compare(common),
        Command::Inspect { snapshot } => cmd_inspect(snapshot),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
