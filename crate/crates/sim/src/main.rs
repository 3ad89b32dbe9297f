use clap::Parser;

fn main() {
    let cli = bcdiff::cli::Cli::parse();
    match bcdiff::cli::execute(&cli) {
        Ok(text) => print!("{text}"),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
