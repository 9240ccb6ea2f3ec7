use std::collections::HashMap;
use std::process::ExitCode;

use clap::{Arg, ArgAction, Command};
use ovalflow::cli::{output_dir, parse_config, run, RunConfig, Scenario, KEYS};
use ovalflow::Error;

fn command() -> Command {
    let mut root = Command::new("ovalflow")
        .about("Desk-scale scenarios for rotationally symmetric ancient flows")
        .subcommand_required(true)
        .arg(Arg::new("config").long("config").short('c').global(true).value_name("FILE").help("key = value config file"))
        .arg(Arg::new("print-defaults").long("print-defaults").global(true).action(ArgAction::SetTrue).help("print every key with its default and exit"));
    for c in Scenario::ALL {
        root = root.subcommand(Command::new(c.name()));
    }
    for (key, help) in KEYS.iter().filter(|(k, _)| *k != "command") {
        root = root.arg(Arg::new(*key).long(*key).global(true).value_name("VALUE").allow_negative_numbers(true).help(*help));
    }
    root
}

fn configure() -> Result<Option<RunConfig>, Error> {
    let m = command().get_matches();
    let mut cfg = RunConfig::default();
    let (name, sub) = m.subcommand().expect("subcommand is required");
    if sub.get_flag("print-defaults") {
        println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
        return Ok(None);
    }
    let mut origin = HashMap::new();
    if let Some(path) = sub.get_one::<String>("config") {
        let text = std::fs::read_to_string(path)?;
        origin = parse_config(&text, &mut cfg)?;
    }
    for (key, _) in KEYS.iter().filter(|(k, _)| *k != "command") {
        if let Some(v) = sub.get_one::<String>(key) {
            cfg.set(key, v).map_err(|msg| Error::Config { line: 0, field: (*key).into(), msg })?;
            origin.insert((*key).to_string(), 0);
        }
    }
    cfg.command = name.parse().map_err(|msg| Error::Config { line: 0, field: "command".into(), msg })?;
    cfg.validate(&origin)?;
    Ok(Some(cfg))
}

fn main() -> ExitCode {
    let cfg = match configure() {
        Ok(Some(c)) => c,
        Ok(None) => return ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(m) => {
            for c in &m.checks {
                println!("{} {}/{}: {:.6e} <= {:.6e}", if c.pass { "PASS" } else { "FAIL" }, c.suite, c.name, c.value, c.bound);
            }
            println!("outputs in {}", output_dir(&cfg).display());
            if m.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
