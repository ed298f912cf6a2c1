use std::time::Duration;

use axum::extract::ws::{CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use tokio::sync::broadcast::error::RecvError;
use tokio::time::{interval_at, sleep_until, timeout, Instant};

use super::ApiState;

/// Policy violation: used for stalled and lagging consumers.
pub const CLOSE_POLICY: u16 = 1008;
const CLOSE_GOING_AWAY: u16 = 1001;

pub(super) async fn events(ws: WebSocketUpgrade, State(s): State<ApiState>) -> Response {
    ws.on_upgrade(move |socket| push(socket, s))
}

async fn close(socket: &mut WebSocket, code: u16, reason: &'static str, wait: Duration) {
    let frame = Message::Close(Some(CloseFrame { code, reason: reason.into() }));
    let _ = timeout(wait, socket.send(frame)).await;
}

async fn push(mut socket: WebSocket, s: ApiState) {
    let mut versions = s.store.subscribe();
    let beat = Duration::from_secs_f64(s.config.heartbeat_s);
    let stall = Duration::from_secs_f64(s.config.stall_timeout_s);
    let mut heartbeat = interval_at(Instant::now() + beat, beat);
    let mut last_heard = Instant::now();
    loop {
        let outgoing = tokio::select! {
            v = versions.recv() => match v {
                Ok(version) => vec![Message::Text(
                    serde_json::json!({ "type": "snapshot", "version": version }).to_string(),
                )],
                Err(RecvError::Lagged(_)) => {
                    close(&mut socket, CLOSE_POLICY, "slow consumer", stall).await;
                    return;
                }
                Err(RecvError::Closed) => {
                    close(&mut socket, CLOSE_GOING_AWAY, "shutting down", stall).await;
                    return;
                }
            },
            _ = heartbeat.tick() => vec![
                Message::Text(serde_json::json!({ "type": "ping" }).to_string()),
                Message::Ping(Vec::new()),
            ],
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => return,
                Some(Ok(_)) => {
                    last_heard = Instant::now();
                    continue;
                }
            },
            _ = sleep_until(last_heard + stall) => {
                close(&mut socket, CLOSE_POLICY, "consumer stalled", stall).await;
                return;
            }
        };
        for m in outgoing {
            match timeout(stall, socket.send(m)).await {
                Ok(Ok(())) => {}
                // Send blocked for the whole stall window or failed: drop the client.
                _ => return,
            }
        }
    }
}
