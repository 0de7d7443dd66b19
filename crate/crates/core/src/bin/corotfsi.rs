use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use corotfsi::cli;
use corotfsi::config::Config;
use corotfsi::{Error, Result};

#[derive(Parser)]
#[command(name = "corotfsi", version, about = "Corotational Oldroyd fluid-structure simulator and checks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// run configuration (`key = value` lines)
    #[arg(long)]
    config: PathBuf,
    /// overrides `output_dir` from the config
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<Config> {
        let mut c = cli::load_config(&self.config)?;
        if let Some(o) = &self.out {
            c.output_dir = o.clone();
        }
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// corotational identity and geometry suites
    SelfCheck,
    /// one trajectory, writes timeseries.csv
    Simulate(Common),
    /// trajectory with decay envelopes, writes decay.csv and decay_verdict.txt
    Decay(Common),
    /// vanishing-diffusion sweep, writes sweep.csv
    SweepEps {
        #[command(flatten)]
        common: Common,
        /// comma-separated, strictly decreasing; defaults to `eps_list` from the config
        #[arg(long, value_delimiter = ',')]
        eps_list: Option<Vec<f64>>,
    },
    /// kinetic closure residuals, writes closure.csv
    ClosureCheck(Common),
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::SelfCheck => {
            let lines = cli::self_check()?;
            for l in &lines {
                println!("{l}");
            }
            if let Some(f) = lines.iter().find(|l| !l.pass) {
                return Err(Error::Acceptance(format!("self-check `{}` failed", f.name)));
            }
        }
        Cmd::Simulate(c) => {
            let (tr, path) = cli::simulate(&c.load()?)?;
            println!("wrote {} ({} samples, {} fluid solves)", path.display(), tr.samples.len(), tr.fluid_solves);
        }
        Cmd::Decay(c) => {
            let (rep, path) = cli::decay(&c.load()?)?;
            print!("{}", cli::decay_verdict(&rep));
            println!("wrote {}", path.display());
        }
        Cmd::SweepEps { common, eps_list } => {
            let cfg = common.load()?;
            let list = eps_list.unwrap_or_else(|| cfg.eps_list.clone());
            let (r, path) = cli::sweep_eps(&cfg, &list)?;
            let s = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "unavailable".into());
            println!("slope_T = {}, slope_u = {}", s(r.slope_t), s(r.slope_u));
            println!("wrote {}", path.display());
        }
        Cmd::ClosureCheck(c) => {
            let (r, path) = cli::closure_check(&c.load()?)?;
            let worst = r.iter().map(|c| c.oracle_rel).fold(0.0, f64::max);
            println!("max deviation from closed form = {:.4}%", 100.0 * worst);
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", cli::error_line(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
