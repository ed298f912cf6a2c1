//! Serves a simulated class on 127.0.0.1:8080 until Ctrl-C.
//!
//! ```bash
//! cargo run --release --example serve_api
//! curl -s localhost:8080/api/v1/state | head -c 400
//! ```

use namemo::api;
use namemo::cli::build_service;
use namemo::config::AppConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = AppConfig::default();
    cfg.session.refresh_interval_s = 10.0;
    cfg.capture.students = 40;
    let service = build_service(&cfg, None)?;
    let running = service.session.spawn_loop();
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((cfg.api.bind.as_str(), cfg.api.port)).await?;
        println!("listening on http://{}", listener.local_addr()?);
        api::serve(listener, service.state, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
    })?;
    running.stop();
    Ok(())
}
