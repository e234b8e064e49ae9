use clap::Parser;

fn main() {
    let args = qkrff::cli::Cli::parse();
    if let Err(err) = qkrff::cli::run(args) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
