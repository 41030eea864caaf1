use clap::Parser;

fn main() {
    std::process::exit(gric::cli::run(gric::cli::Cli::parse()));
}
