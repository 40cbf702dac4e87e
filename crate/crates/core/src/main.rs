use clap::Parser;

use sespec::cli::{run, Cli};

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok((code, text)) => {
            if !text.is_empty() {
                println!("{}", text.trim_end_matches('\n'));
            }
            std::process::exit(code);
        }
        Err(e) => {
            eprintln!("sespec: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
