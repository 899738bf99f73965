use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qedmbpt::cli_report::{
    build_run_spectrum, csv_text, emit_csv, exit_code, parse_config, parse_csv, run_pipeline, Contribution, RunConfig,
};
use qedmbpt::{Error, Result};

#[derive(Parser)]
#[command(name = "qedmbpt", about = "Coulomb-correlated retarded photon exchange in two-electron ions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Directory for cached intermediate tables.
    #[arg(long, global = true, default_value = ".qedmbpt-cache")]
    cache_dir: PathBuf,
    /// Recompute even when a cached table exists.
    #[arg(long, global = true)]
    no_cache: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Bound-state energies of the pair basis.
    Spectrum { config: PathBuf },
    /// Coulomb-ladder pair energies.
    Pair { config: PathBuf },
    /// Photon-exchange contributions.
    Photon { config: PathBuf },
    /// Full run: CSV at `out` plus a manifest next to it.
    Report { config: PathBuf },
}

fn load(path: &Path) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

fn with_contributions(cfg: &RunConfig, keep: impl Fn(Contribution) -> bool, fallback: Contribution) -> RunConfig {
    let mut c = cfg.clone();
    c.contributions.retain(|&x| keep(x));
    if c.contributions.is_empty() {
        c.contributions.push(fallback);
    }
    c
}

struct Cache<'a> {
    dir: &'a Path,
    enabled: bool,
}

impl Cache<'_> {
    /// Cached text for `name`, or `make()` stored under it.
    fn get(&self, name: &str, make: impl FnOnce() -> Result<String>) -> Result<String> {
        let path = self.dir.join(name);
        if self.enabled {
            if let Ok(text) = std::fs::read_to_string(&path) {
                return Ok(text);
            }
        }
        let text = make()?;
        std::fs::create_dir_all(self.dir)?;
        std::fs::write(&path, &text)?;
        Ok(text)
    }
}

fn spectrum_table(cfg: &RunConfig) -> Result<String> {
    let spec = build_run_spectrum(cfg)?;
    let mut s = String::from("kappa n energy_hartree\n");
    for kappa in cfg.kappas() {
        let l = if kappa < 0 { (-kappa - 1) as usize } else { kappa as usize };
        for (i, o) in spec.positive(kappa).take(cfg.basis_n).enumerate() {
            s += &format!("{kappa} {} {:e}\n", i + l + 1, o.energy);
        }
    }
    Ok(s)
}

fn run(cli: &Cli) -> Result<()> {
    let cache = Cache { dir: &cli.cache_dir, enabled: !cli.no_cache };
    match &cli.command {
        Command::Spectrum { config } => {
            let cfg = load(config)?;
            print!("{}", cache.get(&format!("{}.spectrum.txt", cfg.hash()), || spectrum_table(&cfg))?);
        }
        Command::Pair { config } => {
            let cfg = with_contributions(&load(config)?, |_| false, Contribution::CoulombLadder);
            let text = cache.get(&format!("{}.pair.csv", cfg.hash()), || Ok(csv_text(&run_pipeline(&cfg)?.records, true)))?;
            print!("{}", csv_text(&parse_csv(&text)?, false));
        }
        Command::Photon { config } => {
            let cfg = with_contributions(&load(config)?, Contribution::needs_photon, Contribution::OnePhoton);
            let text = cache.get(&format!("{}.photon.csv", cfg.hash()), || Ok(csv_text(&run_pipeline(&cfg)?.records, true)))?;
            print!("{}", csv_text(&parse_csv(&text)?, false));
        }
        Command::Report { config } => {
            let cfg = load(config)?;
            let hash = cfg.hash();
            let mut manifest = None;
            let text = cache.get(&format!("{hash}.report.csv"), || {
                let out = run_pipeline(&cfg)?;
                manifest = Some(out.manifest.text());
                Ok(csv_text(&out.records, true))
            })?;
            let manifest = cache.get(&format!("{hash}.manifest.txt"), || {
                manifest.ok_or_else(|| Error::InvalidModel("cached report has no manifest; rerun with --no-cache".into()))
            })?;
            let records = parse_csv(&text)?;
            emit_csv(&records, &cfg.out)?;
            let mut mpath = cfg.out.clone().into_os_string();
            mpath.push(".manifest");
            std::fs::write(&mpath, manifest)?;
            eprintln!("wrote {} and {}", cfg.out.display(), Path::new(&mpath).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
