use clap::Parser;
use hmimo_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(cli.command, &cli.common) {
        Ok(paths) => {
            for p in paths.iter().filter(|p| p.extension().is_none_or(|e| e != "json")) {
                println!("wrote {}", p.display());
            }
        }
        Err(e) => {
            eprintln!("hmimo {}: {e}", cli.command.name());
            std::process::exit(e.exit_code());
        }
    }
}
