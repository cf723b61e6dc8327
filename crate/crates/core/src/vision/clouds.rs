use serde::{Deserialize, Serialize};

use super::bbox::BBox;
use super::detect::{Detection, ObjectClass};
use crate::geometry::{PixelOffset, PixelPoint};

/// Association gate for cloud centroids, pixels.
pub const CLOUD_GATE_PX: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudObservation {
    pub time_s: f64,
    pub center: PixelPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudTrack {
    pub id: u32,
    /// Time-ordered centroid history.
    pub history: Vec<CloudObservation>,
    /// Latest bounding box.
    pub bbox: BBox,
    /// From the last two observations; absent with a single observation.
    pub velocity_px_s: Option<PixelOffset>,
    pub time_to_occlusion_s: Option<f64>,
}

impl CloudTrack {
    pub fn last(&self) -> &CloudObservation {
        self.history.last().expect("a track always has an observation")
    }

    fn predicted(&self, dt: f64) -> PixelPoint {
        let last = self.last().center;
        match self.velocity_px_s {
            Some(v) => last.shifted(&v.scaled(dt)),
            None => last,
        }
    }
}

/// Advances cloud tracks by one frame.
///
/// Detections are matched greedily to predicted track positions, closest pair
/// first, within [`CLOUD_GATE_PX`]. Unmatched tracks end; unmatched detections
/// start new tracks with fresh ids. Track times run on a shared clock that
/// starts at zero with the first observed cloud.
pub fn track_clouds(
    prev: &[CloudTrack],
    dets: &[Detection],
    dt: f64,
    sun_bbox: Option<&BBox>,
) -> Vec<CloudTrack> {
    assert!(dt > 0.0, "dt must be positive, got {dt}");
    let now = prev.iter().map(|t| t.last().time_s).fold(None, |acc: Option<f64>, t| {
        Some(acc.map_or(t, |a| a.max(t)))
    });
    let now = now.map_or(0.0, |t| t + dt);
    let clouds: Vec<&Detection> = dets.iter().filter(|d| d.class == ObjectClass::Cloud).collect();

    let mut pairs = Vec::new();
    for (ti, track) in prev.iter().enumerate() {
        let predicted = track.predicted(now - track.last().time_s);
        for (di, det) in clouds.iter().enumerate() {
            let dist = predicted.distance_to(&det.point());
            if dist <= CLOUD_GATE_PX {
                pairs.push((dist, ti, di));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut track_used = vec![false; prev.len()];
    let mut det_used = vec![false; clouds.len()];
    let mut out = Vec::new();
    for (_, ti, di) in pairs {
        if track_used[ti] || det_used[di] {
            continue;
        }
        track_used[ti] = true;
        det_used[di] = true;
        let mut track = prev[ti].clone();
        let det = clouds[di];
        let prev_obs = *track.last();
        let obs = CloudObservation { time_s: now, center: det.point() };
        let span = obs.time_s - prev_obs.time_s;
        track.velocity_px_s = Some(obs.center.offset_from(&prev_obs.center).scaled(1.0 / span));
        track.history.push(obs);
        track.bbox = det.bbox;
        out.push(track);
    }

    let mut next_id = prev.iter().map(|t| t.id + 1).max().unwrap_or(1);
    for (di, det) in clouds.iter().enumerate() {
        if det_used[di] {
            continue;
        }
        out.push(CloudTrack {
            id: next_id,
            history: vec![CloudObservation { time_s: now, center: det.point() }],
            bbox: det.bbox,
            velocity_px_s: None,
            time_to_occlusion_s: None,
        });
        next_id += 1;
    }

    out.sort_by_key(|t| t.id);
    for track in &mut out {
        track.time_to_occlusion_s = match (sun_bbox, track.velocity_px_s) {
            (Some(sun), Some(v)) => time_to_occlusion(&track.bbox, &v, sun),
            (Some(sun), None) => track.bbox.overlaps(sun).then_some(0.0),
            (None, _) => None,
        };
    }
    out
}

/// Earliest `t >= 0` at which `cloud` moving at `velocity` overlaps `sun`
/// with positive area; the infimum is returned when overlap begins at a
/// touching edge.
pub fn time_to_occlusion(cloud: &BBox, velocity: &PixelOffset, sun: &BBox) -> Option<f64> {
    let mut enter = 0.0_f64;
    let mut leave = f64::INFINITY;
    let axes = [
        (cloud.x, cloud.right(), velocity.du, sun.x, sun.right()),
        (cloud.y, cloud.bottom(), velocity.dv, sun.y, sun.bottom()),
    ];
    for (a0, a1, v, b0, b1) in axes {
        if v == 0.0 {
            if !(a0 < b1 && a1 > b0) {
                return None;
            }
            continue;
        }
        let t_a = (b0 - a1) / v;
        let t_b = (b1 - a0) / v;
        let (lo, hi) = if t_a < t_b { (t_a, t_b) } else { (t_b, t_a) };
        enter = enter.max(lo);
        leave = leave.min(hi);
    }
    (enter < leave).then_some(enter)
}
