//! Deterministic stand-in for a chat-completions endpoint.
//!
//! Serves scripted responses from a JSON fixture so the whole pipeline can
//! be exercised offline and reproducibly. Prints its base URL on stdout,
//! then serves until killed. Admin endpoints: GET /__admin/stats,
//! GET /__admin/requests, POST /__admin/reset.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use its::mockserver::{MockServer, MockServerConfig};

#[derive(Parser)]
#[command(
    name = "its-mock",
    version,
    about = "Scripted chat-completions endpoint for offline runs"
)]
struct Cli {
    /// JSON fixture describing the responses: {"default": …, "rules": […]}.
    /// Without it, every request gets the stock reply.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Port to bind on 127.0.0.1; 0 picks a free one.
    #[arg(long, default_value_t = 0)]
    port: u16,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match &cli.config {
        Some(path) => {
            let text = match std::fs::read_to_string(path) {
                Ok(text) => text,
                Err(e) => {
                    eprintln!("error[usage]: cannot read {}: {e}", path.display());
                    return ExitCode::from(1);
                }
            };
            match serde_json::from_str::<MockServerConfig>(&text) {
                Ok(config) => config,
                Err(e) => {
                    eprintln!("error[usage]: bad fixture {}: {e}", path.display());
                    return ExitCode::from(1);
                }
            }
        }
        None => MockServerConfig::default(),
    };

    let server = match MockServer::start_on(config, cli.port) {
        Ok(server) => server,
        Err(e) => {
            eprintln!("error[runtime]: cannot bind 127.0.0.1:{}: {e}", cli.port);
            return ExitCode::from(2);
        }
    };
    println!("{}", server.url());
    std::io::stdout().flush().ok();
    eprintln!("its-mock: serving on {} (ctrl-c to stop)", server.url());
    loop {
        std::thread::park();
    }
}
