use clap::Parser;

fn main() {
    std::process::exit(teamvar_cli::main_with(teamvar_cli::Cli::parse()));
}
