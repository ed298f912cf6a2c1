use std::collections::VecDeque;
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use crate::capture::TileImage;
use crate::matcher::MatchResult;
use crate::stitch::{CanvasLayout, PanoBox};

const EVENT_CAPACITY: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SnapshotStats {
    pub tiles: usize,
    pub detections: usize,
    pub matched_high: usize,
    pub matched_tentative: usize,
    pub unknown: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    #[serde(rename = "box")]
    pub pano_box: PanoBox,
    pub result: MatchResult,
    /// Identity carried over from the previous snapshot.
    pub sticky: bool,
}

/// Encoded panorama of one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Panorama {
    pub layout: CanvasLayout,
    pub png: Arc<[u8]>,
}

/// Immutable result of one refresh cycle.
#[derive(Debug)]
pub struct Snapshot {
    /// Assigned at publish.
    pub version: u64,
    pub cycle: u64,
    pub started_at: SystemTime,
    /// Assigned at publish.
    pub published_at: SystemTime,
    pub panorama: Panorama,
    pub annotations: Vec<Annotation>,
    pub stats: SnapshotStats,
    /// Raw tiles, only kept when tile retention is switched on.
    pub retained_tiles: Vec<TileImage>,
}

pub fn unix_ms(t: SystemTime) -> u64 {
    t.duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// The last few published snapshots plus a version feed.
///
/// Readers clone an `Arc<Snapshot>`, so a publish never tears what a reader
/// already holds.
#[derive(Debug)]
pub struct SnapshotStore {
    snapshots: RwLock<VecDeque<Arc<Snapshot>>>,
    last_version: RwLock<u64>,
    retention: usize,
    events: broadcast::Sender<u64>,
}

impl SnapshotStore {
    pub fn new(retention: usize) -> Arc<Self> {
        let (events, _) = broadcast::channel(EVENT_CAPACITY);
        Arc::new(Self {
            snapshots: RwLock::new(VecDeque::new()),
            last_version: RwLock::new(0),
            retention: retention.max(1),
            events,
        })
    }

    /// Stamps the next version and publish time, stores and announces it.
    pub fn publish(&self, mut snapshot: Snapshot) -> Arc<Snapshot> {
        let mut snaps = self.snapshots.write().unwrap_or_else(|e| e.into_inner());
        let mut last = self.last_version.write().unwrap_or_else(|e| e.into_inner());
        *last += 1;
        snapshot.version = *last;
        snapshot.published_at = SystemTime::now();
        let snapshot = Arc::new(snapshot);
        snaps.push_back(Arc::clone(&snapshot));
        while snaps.len() > self.retention {
            snaps.pop_front();
        }
        let _ = self.events.send(snapshot.version);
        snapshot
    }

    pub fn latest(&self) -> Option<Arc<Snapshot>> {
        self.snapshots.read().unwrap_or_else(|e| e.into_inner()).back().cloned()
    }

    pub fn get(&self, version: u64) -> Option<Arc<Snapshot>> {
        self.snapshots
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .iter()
            .find(|s| s.version == version)
            .cloned()
    }

    pub fn versions(&self) -> Vec<u64> {
        self.snapshots.read().unwrap_or_else(|e| e.into_inner()).iter().map(|s| s.version).collect()
    }

    pub fn last_version(&self) -> u64 {
        *self.last_version.read().unwrap_or_else(|e| e.into_inner())
    }

    /// Version feed. A receiver that falls more than a few versions behind
    /// gets `Lagged`.
    pub fn subscribe(&self) -> broadcast::Receiver<u64> {
        self.events.subscribe()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stitch::CanvasLayout;

    fn blank(cycle: u64) -> Snapshot {
        Snapshot {
            version: 0,
            cycle,
            started_at: SystemTime::now(),
            published_at: UNIX_EPOCH,
            panorama: Panorama {
                layout: CanvasLayout {
                    az_range_deg: [0.0, 1.0],
                    el_range_deg: [0.0, 1.0],
                    width_px: 1,
                    height_px: 1,
                },
                png: Arc::from(&b""[..]),
            },
            annotations: Vec::new(),
            stats: SnapshotStats::default(),
            retained_tiles: Vec::new(),
        }
    }

    #[test]
    fn versions_increase_and_old_ones_expire() {
        let store = SnapshotStore::new(5);
        assert!(store.latest().is_none());
        for c in 1..=8 {
            assert_eq!(store.publish(blank(c)).version, c);
        }
        assert_eq!(store.versions(), [4, 5, 6, 7, 8]);
        assert!(store.get(3).is_none());
        assert_eq!(store.get(4).unwrap().cycle, 4);
        assert_eq!(store.latest().unwrap().version, 8);
    }

    #[test]
    fn subscribers_see_versions_in_order() {
        let store = SnapshotStore::new(5);
        let mut rx = store.subscribe();
        for c in 1..=3 {
            store.publish(blank(c));
        }
        let got: Vec<u64> = (0..3).map(|_| rx.try_recv().unwrap()).collect();
        assert_eq!(got, [1, 2, 3]);
    }

    #[test]
    fn held_snapshot_survives_later_publishes() {
        let store = SnapshotStore::new(1);
        let first = store.publish(blank(1));
        store.publish(blank(2));
        assert_eq!(first.version, 1);
        assert!(store.get(1).is_none());
    }
}
