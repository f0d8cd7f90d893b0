use clap::Parser;

fn main() {
    std::process::exit(imgk::cli::run(imgk::cli::Cli::parse()));
}
