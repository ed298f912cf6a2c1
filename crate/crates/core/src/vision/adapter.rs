//! External model adapter: a child process speaking newline-delimited JSON
//! over stdio, strictly one reply per request, in order.
//!
//! Request:  `{"tile_id":N,"png_b64":"..."}`
//! Reply:    `{"detections":[{"bbox":[x,y,w,h],"landmarks":[[x,y]x5],"embedding":[f x128],"score":s}]}`

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{BackendError, Detection, VisionBackend};
use crate::boxes::BBox;
use crate::capture::TileImage;
use crate::embedding::Embedding;
use crate::imaging::encode_png_rgb;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterRequest {
    pub tile_id: u32,
    pub png_b64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireDetection {
    pub bbox: [f64; 4],
    pub landmarks: [[f64; 2]; 5],
    pub embedding: Vec<f64>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterReply {
    pub detections: Vec<WireDetection>,
}

impl WireDetection {
    /// Validates against tile bounds; boxes and landmarks are clamped,
    /// embeddings renormalized.
    pub fn into_detection(self, width: f64, height: f64) -> Result<Detection, BackendError> {
        let malformed = |m: &str| BackendError::MalformedAdapterReply(m.to_string());
        if self.bbox.iter().chain(self.landmarks.iter().flatten()).any(|v| !v.is_finite())
            || !self.score.is_finite()
        {
            return Err(malformed("non-finite geometry or score"));
        }
        let [x, y, w, h] = self.bbox;
        let bbox = BBox::new(x, y, w, h)
            .clip(width, height)
            .ok_or_else(|| malformed("bbox outside tile"))?;
        let embedding = Embedding::normalized(&self.embedding)
            .map_err(|e| BackendError::MalformedAdapterReply(e.to_string()))?;
        let mut landmarks = self.landmarks;
        for l in &mut landmarks {
            *l = [l[0].clamp(bbox.x, bbox.right()), l[1].clamp(bbox.y, bbox.bottom())];
        }
        Ok(Detection {
            bbox,
            landmarks,
            embedding,
            det_score: self.score.clamp(0.0, 1.0),
        })
    }
}

struct AdapterProcess {
    child: Child,
    stdin: ChildStdin,
    replies: Receiver<String>,
}

pub struct AdapterBackend {
    process: Mutex<AdapterProcess>,
    reply_timeout: Duration,
}

impl AdapterBackend {
    /// Launches `command` through `sh -c`.
    pub fn spawn(command: &str, reply_timeout: Duration) -> Result<Self, BackendError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BackendError::BackendUnavailable(format!("spawn {command:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, replies) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(l) = line else { break };
                if tx.send(l).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            process: Mutex::new(AdapterProcess { child, stdin, replies }),
            reply_timeout,
        })
    }

    pub fn encode_request(tile: &TileImage) -> Result<String, BackendError> {
        let png = encode_png_rgb(tile.width, tile.height, tile.pixels())
            .map_err(|e| BackendError::BackendUnavailable(format!("png encode: {e}")))?;
        let req = AdapterRequest {
            tile_id: tile.tile_id,
            png_b64: base64::engine::general_purpose::STANDARD.encode(png),
        };
        Ok(serde_json::to_string(&req).expect("request serializes"))
    }

    pub fn decode_reply(line: &str, width: f64, height: f64) -> Result<Vec<Detection>, BackendError> {
        let reply: AdapterReply = serde_json::from_str(line)
            .map_err(|e| BackendError::MalformedAdapterReply(e.to_string()))?;
        reply
            .detections
            .into_iter()
            .map(|d| d.into_detection(width, height))
            .collect()
    }
}

impl VisionBackend for AdapterBackend {
    fn detect_and_embed(&self, tile: &TileImage) -> Result<Vec<Detection>, BackendError> {
        let request = Self::encode_request(tile)?;
        let mut p = self.process.lock().unwrap_or_else(|e| e.into_inner());
        let unavailable = |e: String| BackendError::BackendUnavailable(e);
        p.stdin
            .write_all(request.as_bytes())
            .and_then(|_| p.stdin.write_all(b"\n"))
            .and_then(|_| p.stdin.flush())
            .map_err(|e| unavailable(format!("write to adapter: {e}")))?;
        let line = match p.replies.recv_timeout(self.reply_timeout) {
            Ok(line) => line,
            Err(RecvTimeoutError::Timeout) => {
                return Err(unavailable(format!("no reply within {:?}", self.reply_timeout)))
            }
            Err(RecvTimeoutError::Disconnected) => return Err(unavailable("adapter exited".into())),
        };
        Self::decode_reply(&line, f64::from(tile.width), f64::from(tile.height))
    }
}

impl Drop for AdapterBackend {
    fn drop(&mut self) {
        if let Ok(p) = self.process.get_mut() {
            let _ = p.child.kill();
            let _ = p.child.wait();
        }
    }
}
