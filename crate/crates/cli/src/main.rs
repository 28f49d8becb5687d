mod cli;
mod commands;
mod config;
mod error;
mod manifest;

use clap::Parser;

use cli::{Cli, Command};

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analytic(a) => commands::analytic(a),
        Command::Simulate(a) => commands::simulate_cmd(a),
        Command::Correlate(a) => commands::correlate(a),
        Command::G2(a) => commands::g2(a),
        Command::Resonance(a) => commands::resonance(a),
        Command::Preset(a) => commands::preset(a),
        Command::ConfigTemplate(a) => commands::config_template(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
