use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mixdec_core::graph::RegionBox;
use mixdec_core::report::{run, Command, Format, RunError, RunOptions, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "mixdec", version, about = "Recurrent-class decomposition, homoclinic periods and pseudo-orbit surgery")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Args)]
struct Global {
    /// Seed for every random choice of the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory receiving reports, plots and manifest.json.
    #[arg(long, global = true, default_value = "mixdec-out")]
    out_dir: PathBuf,
    /// Tables to emit next to the JSON report.
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// Print nothing but errors.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Recurrent classes, periods and cyclic classes of a box covering.
    Decompose {
        config: PathBuf,
        /// Covering depth; 2^depth boxes per axis.
        #[arg(long)]
        depth: Option<u32>,
        /// Restrict the covering to a box, given as lo1,hi1,lo2,hi2,...
        #[arg(long, value_parser = parse_region)]
        region: Option<RegionBox>,
        /// Also search periodic orbits and add an orbit table.
        #[arg(long)]
        orbits: bool,
    },
    /// Periodic orbits by Newton search, with resonance verdicts.
    Orbits {
        config: PathBuf,
        #[arg(long)]
        max_period: Option<usize>,
    },
    /// Homoclinic intersection times and the period they generate.
    Homoclinic {
        config: PathBuf,
        #[arg(long)]
        orbit_id: usize,
        /// Second orbit; defaults to the first.
        #[arg(long)]
        partner: Option<usize>,
        #[arg(long = "nmax")]
        n_max: Option<i64>,
    },
    /// Periodic orbits whose period is not a multiple of ell.
    Kset {
        config: PathBuf,
        #[arg(long)]
        ell: usize,
        #[arg(long)]
        max_period: Option<usize>,
    },
    /// Shortcut surgery on a pseudo-orbit instance.
    Surgery {
        /// Instance JSON; required unless --generate is given.
        #[arg(required_unless_present = "generate", conflicts_with = "generate")]
        instance: Option<PathBuf>,
        /// Generate a random valid instance from --seed.
        #[arg(long)]
        generate: bool,
        #[arg(long)]
        ell: Option<usize>,
    },
    /// Close the orbit of a point by a perturbation supported in certified balls.
    Close {
        config: PathBuf,
        /// Target point, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        point: Vec<f64>,
        #[arg(long)]
        ell: usize,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Check a tiled perturbation domain from a config or an instance file.
    ValidateDomain { input: PathBuf },
}

fn parse_region(s: &str) -> Result<RegionBox, String> {
    let values = s
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() || values.len() % 2 != 0 {
        return Err(format!("expected lo,hi pairs, got {} numbers", values.len()));
    }
    let (lo, hi): (Vec<f64>, Vec<f64>) = values.chunks(2).map(|c| (c[0], c[1])).unzip();
    if lo.iter().zip(&hi).any(|(l, h)| l >= h) {
        return Err("every lo must be below its hi".into());
    }
    Ok(RegionBox { lo, hi })
}

impl From<Sub> for Command {
    fn from(sub: Sub) -> Self {
        match sub {
            Sub::Decompose { config, depth, region, orbits } => Command::Decompose { config, depth, region, orbits },
            Sub::Orbits { config, max_period } => Command::Orbits { config, max_period },
            Sub::Homoclinic { config, orbit_id, partner, n_max } => Command::Homoclinic { config, orbit_id, partner, n_max },
            Sub::Kset { config, ell, max_period } => Command::Kset { config, ell, max_period },
            Sub::Surgery { instance, ell, .. } => Command::Surgery { instance, ell },
            Sub::Close { config, point, ell, budget } => Command::Close { config, point, ell, budget },
            Sub::ValidateDomain { input } => Command::ValidateDomain { input },
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    let level = if cli.global.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let opts = RunOptions {
        seed: cli.global.seed,
        out_dir: cli.global.out_dir,
        format: match cli.global.format {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        },
    };
    let command = Command::from(cli.command);
    match run(&command, &opts) {
        Ok(outcome) => {
            if !cli.global.quiet {
                for line in &outcome.summary {
                    println!("{line}");
                }
                for notice in &outcome.manifest.notices {
                    println!("note: {notice}");
                }
                println!("wrote {} files to {}", outcome.manifest.outputs.len() + 1, opts.out_dir.display());
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            report(&e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn report(e: &RunError) {
    let mut shown = e.to_string();
    eprintln!("error: {shown}");
    let mut source = std::error::Error::source(e);
    while let Some(s) = source {
        let text = s.to_string();
        if !shown.contains(&text) {
            eprintln!("  caused by: {text}");
            shown = text;
        }
        source = s.source();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn region_pairs() {
        let r = parse_region("0, 0.5,-1,1").unwrap();
        assert_eq!((r.lo, r.hi), (vec![0.0, -1.0], vec![0.5, 1.0]));
        assert!(parse_region("0,1,2").is_err());
        assert!(parse_region("1,0").is_err());
        assert!(parse_region("a,1").is_err());
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn surgery_needs_an_instance_or_generate() {
        assert!(Cli::try_parse_from(["mixdec", "surgery"]).is_err());
        let cli = Cli::try_parse_from(["mixdec", "surgery", "--generate", "--seed", "9"]).unwrap();
        assert_eq!(cli.global.seed, 9);
        assert!(matches!(Command::from(cli.command), Command::Surgery { instance: None, .. }));
    }

    #[test]
    fn negative_point_coordinates() {
        let cli = Cli::try_parse_from(["mixdec", "close", "c.toml", "--point", "-0.25,0.5", "--ell", "2"]).unwrap();
        let Sub::Close { point, .. } = cli.command else { panic!() };
        assert_eq!(point, vec![-0.25, 0.5]);
    }
}
