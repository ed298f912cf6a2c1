#![allow(dead_code)]

use std::sync::Arc;

use namemo::capture::{generate_scene, CaptureSource, IdentityBank, SimScene, Simulator, TileRegistry};
use namemo::gallery::{Gallery, GalleryStore, StudentRecord};
use namemo::profile::RunProfile;
use namemo::session::{Session, SessionConfig, SnapshotStore};
use namemo::stitch::CanvasSpec;
use namemo::vision::SyntheticBackend;

pub struct Rig {
    pub session: Session,
    pub backend: Arc<SyntheticBackend>,
    pub gallery: Arc<GalleryStore>,
    pub store: Arc<SnapshotStore>,
    pub registry: Arc<TileRegistry>,
    pub scene: SimScene,
}

/// Session config with a small canvas so cycles stay quick in debug builds.
pub fn quick_config() -> SessionConfig {
    SessionConfig {
        refresh_interval_s: 0.05,
        panorama: CanvasSpec { deg_per_px: None, max_dim_px: 400 },
        ..SessionConfig::default()
    }
}

pub fn gallery_for(bank: &IdentityBank) -> Gallery {
    let mut g = Gallery::new();
    for (id, e) in bank.iter() {
        g.enroll(StudentRecord::new(id, format!("Student {id}"), e.clone()).with_profile("program", "Physics"))
            .unwrap();
    }
    g
}

pub fn rig_with(students: usize, seed: u64, noise: f64, config: SessionConfig, source: Option<Box<dyn CaptureSource>>) -> Rig {
    let p = RunProfile::feasibility_test();
    let scene = generate_scene(students, &p.room, seed).unwrap();
    let bank = Arc::new(IdentityBank::for_scene(&scene));
    let gallery = GalleryStore::new(gallery_for(&bank), None);
    let store = SnapshotStore::new(config.retention);
    let source = source.unwrap_or_else(|| Box::new(Simulator::new(p.room, p.intrinsics, p.mount, scene.clone())));
    let registry = source.registry();
    let backend = Arc::new(SyntheticBackend::new(bank, noise));
    let session = Session::new(
        config,
        p.plan().unwrap(),
        p.intrinsics,
        source,
        backend.clone(),
        Arc::clone(&gallery),
        Arc::clone(&store),
    )
    .unwrap();
    Rig { session, backend, gallery, store, registry, scene }
}

pub fn rig(students: usize, seed: u64, noise: f64, config: SessionConfig) -> Rig {
    rig_with(students, seed, noise, config, None)
}

pub mod http {
    use axum::body::Body;
    use axum::http::{HeaderMap, Request, StatusCode};
    use axum::Router;
    use http_body_util::BodyExt;
    use tower::ServiceExt;

    pub struct Reply {
        pub status: StatusCode,
        pub headers: HeaderMap,
        pub body: Vec<u8>,
    }

    impl Reply {
        pub fn json(&self) -> serde_json::Value {
            serde_json::from_slice(&self.body).unwrap()
        }

        pub fn text(&self) -> String {
            String::from_utf8_lossy(&self.body).into_owned()
        }
    }

    pub async fn send(app: &Router, req: Request<Body>) -> Reply {
        let res = app.clone().oneshot(req).await.unwrap();
        let status = res.status();
        let headers = res.headers().clone();
        let body = res.into_body().collect().await.unwrap().to_bytes().to_vec();
        Reply { status, headers, body }
    }

    pub async fn get(app: &Router, uri: &str) -> Reply {
        send(app, Request::get(uri).body(Body::empty()).unwrap()).await
    }

    pub async fn post(app: &Router, uri: &str, body: serde_json::Value, token: Option<&str>) -> Reply {
        let mut req = Request::post(uri).header("content-type", "application/json");
        if let Some(t) = token {
            req = req.header("x-namemo-token", t);
        }
        send(app, req.body(Body::from(body.to_string())).unwrap()).await
    }
}
