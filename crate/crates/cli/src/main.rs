//! `adspec <command> [--key value]... [--config path] [--out dir]`

use std::path::PathBuf;
use std::process::ExitCode;

use adspec_core::workflows::{run_command, Command, Config};
use clap::{value_parser, Arg, ArgAction, ArgMatches};

const VERSION: &str = env!("ADSPEC_VERSION");

fn about(c: Command) -> &'static str {
    match c {
        Command::FhnPhase => "Limit cycle, Floquet spectrum and phase sensitivity of the FitzHugh-Nagumo oscillator",
        Command::NeutralCurve => "Trace the Orr-Sommerfeld neutral curve of plane Poiseuille flow",
        Command::Resolvent => "Leading resolvent gains of an advection-diffusion operator over a frequency sweep",
        Command::BurgersOpt => "Recover a Burgers initial condition from its final state by adjoint looping",
        Command::Verify => "Run the adjoint verification suite; exits nonzero on any failure",
    }
}

fn cli() -> clap::Command {
    let mut app = clap::Command::new("adspec")
        .version(VERSION)
        .about("Discrete adjoint workflows for sparse spectral solvers")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("verbose")
                .short('v')
                .long("verbose")
                .action(ArgAction::Count)
                .global(true)
                .help("More log output (-v info, -vv debug)"),
        );
    for c in Command::ALL {
        let mut sub = clap::Command::new(c.name())
            .about(about(c))
            .arg(
                Arg::new("config")
                    .long("config")
                    .value_name("PATH")
                    .value_parser(value_parser!(PathBuf))
                    .help("key = value file; flags override it"),
            )
            .arg(
                Arg::new("out")
                    .long("out")
                    .value_name("DIR")
                    .value_parser(value_parser!(PathBuf))
                    .help("Output directory [default: adspec-out/<command>]"),
            );
        for key in c.keys() {
            let long = key.replace('_', "-");
            let mut arg = Arg::new(*key).long(long.clone()).value_name("VALUE").allow_negative_numbers(true);
            if long != *key {
                arg = arg.alias(*key);
            }
            sub = sub.arg(arg);
        }
        app = app.subcommand(sub);
    }
    app
}

fn config_from(command: Command, m: &ArgMatches) -> adspec_core::Result<Config> {
    let mut cfg = match m.get_one::<PathBuf>("config") {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    for key in command.keys() {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v);
        }
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let level = match matches.get_count("verbose") {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let command: Command = name.parse().expect("subcommands mirror Command::ALL");
    let out = sub.get_one::<PathBuf>("out").cloned().unwrap_or_else(|| PathBuf::from("adspec-out").join(name));
    let result = config_from(command, sub).and_then(|cfg| run_command(command, &cfg, &out, VERSION));
    match result {
        Ok(o) if o.passed => {
            println!("{name}: {}", o.message);
            println!("output written to {}", out.display());
            ExitCode::SUCCESS
        }
        Ok(o) => {
            eprintln!("{name}: {}", o.message);
            eprintln!("report written to {}", out.display());
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("{name}: error: {e}");
            ExitCode::from(2)
        }
    }
}
