use clap::Parser;

fn main() {
    let cli = msvar_cli::Cli::parse();
    match msvar_cli::run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
