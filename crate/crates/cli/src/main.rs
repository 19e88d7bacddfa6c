use clap::Parser;

fn main() {
    let cli = dnbcure_cli::Cli::parse();
    std::process::exit(dnbcure_cli::run(cli));
}
