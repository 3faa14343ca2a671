use clap::Parser;

fn main() {
    std::process::exit(vtensor::cli::main_with(vtensor::cli::Cli::parse()));
}
