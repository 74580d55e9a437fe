mod commands;
mod config;
mod error;
mod opts;
mod output;

use clap::Parser;

use crate::error::CliError;
use crate::opts::Cli;
use crate::output::{resolve_out_dir, OutputContext};

fn run(cli: &Cli) -> Result<(), CliError> {
    let name = cli.command.name();
    let args = cli.command.args();
    let spec = config::resolve(name, args)?;
    commands::configure_workers(spec.workers);
    let dir = resolve_out_dir(args.out.as_deref());
    let out = OutputContext::new(dir.clone(), name, spec.preset.as_deref());
    let outputs = commands::dispatch(name, &spec, &out)?;
    for file in &outputs {
        println!("wrote {}", dir.join(file).display());
    }
    println!("wrote {}", dir.join(out.manifest_name()).display());
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
