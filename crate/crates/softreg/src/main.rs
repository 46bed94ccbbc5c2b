use clap::Parser;

use softreg::cli::{dispatch, Cli};

fn main() {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build_global()
            .ok();
    }
    if let Err(e) = dispatch(&cli.cmd) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
