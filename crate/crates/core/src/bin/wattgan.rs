use clap::Parser;

fn main() {
    let cli = wattgan::cli::Cli::parse();
    if let Err(e) = wattgan::cli::run(&cli) {
        eprintln!("wattgan: {e}");
        std::process::exit(e.exit_code());
    }
}
