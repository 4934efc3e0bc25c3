use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Arg, ArgAction, ArgMatches, Command};
use ldqd::harness::{self, config::KEYS, RunConfig};

fn key_help(k: &str) -> &'static str {
    match k {
        "model" => "doublewell or rescaled",
        "method" => "var, reg1, reg2, naive or exact",
        "n_g" => "number of Gaussians",
        "eps_s" => "overlap eigenvalue threshold",
        "dt" => "time step (a.u.)",
        "t_final" => "propagation horizon (a.u.); 6 or 31.739 by model",
        "seed" => "Monte Carlo seed",
        "ic_file" => "'q p' file replacing the sampler",
        "stride" => "steps between output rows",
        "z0" => "initial coherent state, e.g. -0.447+0i",
        "z2" => "second state of the unitarity run",
        "kt" => "sampler thermal energy (a.u.)",
        "q_range" => "sampler position window lo,hi",
        "n_b" => "oscillator basis size of the exact reference",
        "newton_tol" => "Newton residual tolerance of the frame step",
        "newton_max_iter" => "Newton iteration cap",
        "rhs" => "classical right-hand side: hamilton or printed",
        "frozen" => "keep the Gaussians fixed",
        "out_dir" => "output directory",
        "name" => "output file stem",
        "checkpoint" => "checkpoint to revert from",
        "sweep_ng" => "comma-separated N_g list",
        "sweep_eps" => "comma-separated eps_S list",
        "sweep_methods" => "comma-separated methods",
        "jobs" => "worker threads of the sweep",
        "dt_check" => "rerun the smallest basis at dt/2",
        _ => "",
    }
}

fn key_args() -> Vec<Arg> {
    KEYS.iter()
        .map(|&k| {
            Arg::new(k)
                .long(k)
                .value_name("VALUE")
                .num_args(0..=1)
                .default_missing_value("true")
                .help(key_help(k))
                .help_heading("Configuration keys")
        })
        .collect()
}

fn with_config(cmd: Command) -> Command {
    cmd.arg(
        Arg::new("config")
            .long("config")
            .short('c')
            .value_name("FILE")
            .value_parser(clap::value_parser!(PathBuf))
            .help("key = value file; flags of the same names override it"),
    )
    .args(key_args())
}

fn cli() -> Command {
    Command::new("ldqd")
        .about("Gaussian wavepacket propagation in linearly dependent bases")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("verbose")
                .short('v')
                .long("verbose")
                .action(ArgAction::Count)
                .global(true)
                .help("More log output (repeatable); RUST_LOG also works"),
        )
        .subcommand(with_config(
            Command::new("run").about("Propagate one method and write its time series and final checkpoint"),
        ))
        .subcommand(with_config(
            Command::new("sweep").about("N_g x eps_S grid over several methods against the exact reference"),
        ))
        .subcommand(with_config(
            Command::new("revert").about("Propagate forward, then backward from the final checkpoint"),
        ))
        .subcommand(with_config(
            Command::new("unitarity").about("Co-propagate two states and track norms and their overlap"),
        ))
        .subcommand(with_config(
            Command::new("sample").about("Print Monte Carlo initial conditions as 'q p' lines"),
        ))
        .subcommand(
            Command::new("compare")
                .about("Join two CSVs on t and write the column differences")
                .arg(Arg::new("a").required(true).value_parser(clap::value_parser!(PathBuf)))
                .arg(Arg::new("b").required(true).value_parser(clap::value_parser!(PathBuf)))
                .arg(
                    Arg::new("out")
                        .long("out")
                        .short('o')
                        .value_name("FILE")
                        .value_parser(clap::value_parser!(PathBuf))
                        .default_value("compare.csv"),
                ),
        )
}

fn load_config(m: &ArgMatches) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = m.get_one::<PathBuf>("config") {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg.apply_text(&text)
            .with_context(|| format!("in {}", path.display()))?;
    }
    for &k in KEYS {
        if let Some(v) = m.get_one::<String>(k) {
            cfg.set(k, v).with_context(|| format!("--{k}"))?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report_failure(label: &str, failure: Option<&harness::engine::CellFailure>) {
    if let Some(f) = failure {
        println!("{label}: stopped at t = {}: {}", f.time, f.message);
    }
}

fn main() -> Result<()> {
    let matches = cli().get_matches();
    let level = match matches.get_count("verbose") {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match matches.subcommand() {
        Some(("run", m)) => {
            let cfg = load_config(m)?;
            let rep = harness::run(&cfg)?;
            let cell = &rep.cells[0];
            let name = cfg.run_name();
            println!("{}", cfg.out_dir.join(format!("{name}.csv")).display());
            if let Some(s) = cell.samples.last() {
                println!(
                    "t={} norm={:.12} energy={:.12} position={:.12} |autocorr|={:.12}",
                    s.t,
                    s.norm,
                    s.energy,
                    s.position,
                    s.autocorr.norm()
                );
            }
            report_failure(&cell.spec.label(), cell.failure.as_ref());
            report_failure("frame", rep.frame_failure.as_ref());
        }
        Some(("sweep", m)) => {
            let cfg = load_config(m)?;
            let rep = harness::sweep(&cfg)?;
            for r in &rep.rows {
                println!(
                    "{:<6} n_g={:<4} eps_s={:<6e} norm={:.3e} energy={:.3e} autocorr={:.3e} position={:.3e}{}",
                    r.method.as_str(),
                    r.n_g,
                    r.eps_s,
                    r.norm_err,
                    r.energy_err,
                    r.autocorr_err,
                    r.position_err,
                    if r.diverged { " diverged" } else { "" }
                );
            }
            if let Some(c) = &rep.dt_check {
                println!(
                    "dt check n_g={} max change {:e} passed={}",
                    c.n_g, c.max_change, c.passed
                );
            }
        }
        Some(("revert", m)) => {
            let cfg = load_config(m)?;
            let r = harness::revert(&cfg)?;
            println!(
                "{}: max |<Q>_fwd - <Q>_bwd| = {:e}",
                r.spec.label(),
                r.max_discrepancy()
            );
            report_failure(&r.spec.label(), r.failure.as_ref());
        }
        Some(("unitarity", m)) => {
            let cfg = load_config(m)?;
            let r = harness::unitarity(&cfg)?;
            println!(
                "{}: max norm error {:e}, max overlap error {:e}",
                r.spec.label(),
                r.max_norm_error(),
                r.max_overlap_error()
            );
            report_failure(&r.spec.label(), r.failure.as_ref());
        }
        Some(("sample", m)) => {
            let cfg = load_config(m)?;
            print!("{}", harness::sample(&cfg)?);
        }
        Some(("compare", m)) => {
            let a = m.get_one::<PathBuf>("a").expect("required");
            let b = m.get_one::<PathBuf>("b").expect("required");
            let out: &Path = m.get_one::<PathBuf>("out").expect("defaulted");
            let c = harness::compare(a, b, out)?;
            for (name, avg) in &c.averages {
                println!("{name:<18} {avg:e}");
            }
        }
        _ => unreachable!("subcommand required"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_is_well_formed() {
        cli().debug_assert();
    }

    #[test]
    fn flags_override_config_keys() {
        let m = cli()
            .try_get_matches_from(["ldqd", "run", "--n_g", "7", "--eps_s", "1e-9", "--frozen"])
            .unwrap();
        let cfg = load_config(m.subcommand_matches("run").unwrap()).unwrap();
        assert_eq!(cfg.n_g, 7);
        assert_eq!(cfg.eps_s, 1e-9);
        assert!(cfg.frozen);
    }
}
