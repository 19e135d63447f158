use clap::Parser;

fn main() {
    let cli = zp3_cli::args::Cli::parse();
    std::process::exit(zp3_cli::run(&cli));
}
