use clap::Parser;

fn main() {
    std::process::exit(microrec::run(microrec::Cli::parse()));
}
