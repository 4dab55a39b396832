//! Temporal smoothing of detections into identity-stable tracks, and the
//! binding of confirmed tracks to the four figure slots.

use serde::{Deserialize, Serialize};

use crate::detect::Detection;
use crate::geom::RectF;

/// Number of painted figures a face can be mapped onto.
pub const SLOT_COUNT: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerParams {
    pub iou_match_threshold: f64,
    pub min_hits: u32,
    pub max_misses: u32,
    /// Weight of the new detection in the exponential rect smoothing.
    pub smoothing: f64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            iou_match_threshold: 0.3,
            min_hits: 3,
            max_misses: 15,
            smoothing: 0.5,
        }
    }
}

impl TrackerParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.iou_match_threshold > 0.0 && self.iou_match_threshold < 1.0) {
            return Err("tracker.iou_match_threshold must lie in (0, 1)".into());
        }
        if !(0.0..=1.0).contains(&self.smoothing) {
            return Err("tracker.smoothing must lie in [0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceTrack {
    pub id: u64,
    pub rect: RectF,
    /// Consecutive frames with a matched detection.
    pub hits: u32,
    /// Consecutive frames without one.
    pub misses: u32,
    pub confirmed: bool,
    pub slot: Option<usize>,
}

/// Tracker state: live tracks plus the id counter. Ids are never reused.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tracker {
    tracks: Vec<FaceTrack>,
    next_id: u64,
}

/// A match chosen by [`greedy_matches`]: (track index, detection index).
pub type Match = (usize, usize);

/// Greedy assignment in descending-IoU order; pairs below `threshold` never
/// match. Ties are broken by track index, then detection index.
pub fn greedy_matches(tracks: &[RectF], detections: &[RectF], threshold: f64) -> Vec<Match> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (ti, t) in tracks.iter().enumerate() {
        for (di, d) in detections.iter().enumerate() {
            let iou = t.iou(d);
            if iou >= threshold {
                pairs.push((iou, ti, di));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut track_used = vec![false; tracks.len()];
    let mut det_used = vec![false; detections.len()];
    let mut out = Vec::new();
    for (_, ti, di) in pairs {
        if !track_used[ti] && !det_used[di] {
            track_used[ti] = true;
            det_used[di] = true;
            out.push((ti, di));
        }
    }
    out
}

impl Tracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tracks(&self) -> &[FaceTrack] {
        &self.tracks
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    /// Folds one frame of detections into the tracks.
    pub fn update(&mut self, detections: &[Detection], params: &TrackerParams) {
        let track_rects: Vec<RectF> = self.tracks.iter().map(|t| t.rect).collect();
        let det_rects: Vec<RectF> = detections.iter().map(|d| d.rect.to_f64()).collect();
        let matches = greedy_matches(&track_rects, &det_rects, params.iou_match_threshold);

        let mut matched_track = vec![None; self.tracks.len()];
        let mut det_used = vec![false; detections.len()];
        for (ti, di) in matches {
            matched_track[ti] = Some(di);
            det_used[di] = true;
        }

        for (track, m) in self.tracks.iter_mut().zip(&matched_track) {
            match m {
                Some(di) => {
                    track.rect = track.rect.lerp_toward(&det_rects[*di], params.smoothing);
                    track.hits += 1;
                    track.misses = 0;
                }
                None => {
                    track.hits = 0;
                    track.misses += 1;
                }
            }
        }
        self.tracks.retain(|t| t.misses <= params.max_misses);

        for (di, used) in det_used.iter().enumerate() {
            if !used {
                self.tracks.push(FaceTrack {
                    id: self.next_id,
                    rect: det_rects[di],
                    hits: 1,
                    misses: 0,
                    confirmed: false,
                    slot: None,
                });
                self.next_id += 1;
            }
        }
        for t in &mut self.tracks {
            if t.hits >= params.min_hits {
                t.confirmed = true;
            }
        }
    }

    pub fn assign_slots(&mut self) {
        assign_slots(&mut self.tracks);
    }

    /// Per-slot track, `None` for a free slot.
    pub fn slots(&self) -> [Option<&FaceTrack>; SLOT_COUNT] {
        let mut out = [None; SLOT_COUNT];
        for t in &self.tracks {
            if let Some(s) = t.slot {
                out[s] = Some(t);
            }
        }
        out
    }

    pub fn occupied_slots(&self) -> usize {
        self.slots().iter().filter(|s| s.is_some()).count()
    }
}

/// Confirmed tracks keep their slot until they die. Slotless confirmed
/// tracks claim free slots largest-area first, each taking the lowest free
/// index.
pub fn assign_slots(tracks: &mut [FaceTrack]) {
    let mut taken = [false; SLOT_COUNT];
    for t in tracks.iter() {
        if let Some(s) = t.slot {
            taken[s] = true;
        }
    }
    let mut waiting: Vec<usize> = (0..tracks.len())
        .filter(|&i| tracks[i].confirmed && tracks[i].slot.is_none())
        .collect();
    waiting.sort_by(|&a, &b| {
        tracks[b]
            .rect
            .area()
            .total_cmp(&tracks[a].rect.area())
            .then(tracks[a].id.cmp(&tracks[b].id))
    });
    for i in waiting {
        let Some(free) = taken.iter().position(|t| !t) else {
            break;
        };
        taken[free] = true;
        tracks[i].slot = Some(free);
    }
}
