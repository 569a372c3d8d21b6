use clap::Parser;
use tastekit_cli::{configure_threads, run, Cli, CliError};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            let first = e.to_string().lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ").to_string();
            fail(CliError::Config(first));
        }
    };
    if let Err(e) = configure_threads().and_then(|_| run(cli)) {
        fail(e);
    }
}

fn fail(e: CliError) -> ! {
    eprintln!("{}", e.line());
    std::process::exit(e.exit_code());
}
