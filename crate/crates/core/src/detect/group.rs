//! Merging of raw window hits into detections.

use serde::{Deserialize, Serialize};

use crate::geom::Rect;

/// A grouped detection in image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub rect: Rect,
    /// Number of raw hits merged into this detection.
    pub neighbors: u32,
    /// Ranking score: rect area in pixels².
    pub score: f64,
}

impl Detection {
    pub fn from_rect(rect: Rect, neighbors: u32) -> Self {
        Self {
            rect,
            neighbors,
            score: rect.area() as f64,
        }
    }
}

/// Two rects are similar when every edge moves by at most
/// `eps * (min(w1, w2) + min(h1, h2)) / 2`.
pub fn similar(a: &Rect, b: &Rect, eps: f64) -> bool {
    let delta = eps * f64::from(a.w.min(b.w) + a.h.min(b.h)) * 0.5;
    f64::from((a.x - b.x).abs()) <= delta
        && f64::from((a.y - b.y).abs()) <= delta
        && f64::from((a.right() - b.right()).abs()) <= delta
        && f64::from((a.bottom() - b.bottom()).abs()) <= delta
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu((0..n).collect())
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = (ra.min(rb), ra.max(rb));
        self.0[hi] = lo;
        true
    }
}

fn mean_rect(members: &[Rect]) -> Rect {
    let n = members.len() as f64;
    let (mut x, mut y, mut w, mut h) = (0i64, 0i64, 0i64, 0i64);
    for r in members {
        x += i64::from(r.x);
        y += i64::from(r.y);
        w += i64::from(r.w);
        h += i64::from(r.h);
    }
    let avg = |s: i64| (s as f64 / n).round() as i32;
    Rect::new(avg(x), avg(y), avg(w), avg(h))
}

/// Partitions `raw` into similarity classes (transitively closed) and keeps
/// classes with more than `min_neighbors` members as one averaged detection.
///
/// Classes whose averaged rects are themselves similar are merged until no
/// such pair remains, so regrouping the output is a fixed point.
pub fn group_rectangles(raw: &[Rect], min_neighbors: u32, eps: f64) -> Vec<Detection> {
    let n = raw.len();
    if n == 0 {
        return Vec::new();
    }
    let mut dsu = Dsu::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if similar(&raw[i], &raw[j], eps) {
                dsu.union(i, j);
            }
        }
    }

    let classes = loop {
        let mut by_root: Vec<(usize, Vec<Rect>)> = Vec::new();
        for i in 0..n {
            let root = dsu.find(i);
            match by_root.iter_mut().find(|(r, _)| *r == root) {
                Some((_, members)) => members.push(raw[i]),
                None => by_root.push((root, vec![raw[i]])),
            }
        }
        let means: Vec<(usize, Rect)> = by_root.iter().map(|(r, m)| (*r, mean_rect(m))).collect();
        let mut merged = false;
        for a in 0..means.len() {
            for b in a + 1..means.len() {
                if similar(&means[a].1, &means[b].1, eps) {
                    merged |= dsu.union(means[a].0, means[b].0);
                }
            }
        }
        if !merged {
            break by_root;
        }
    };

    let mut out: Vec<Detection> = classes
        .into_iter()
        .filter(|(_, members)| members.len() as u64 > u64::from(min_neighbors))
        .map(|(_, members)| Detection::from_rect(mean_rect(&members), members.len() as u32))
        .collect();
    out.sort_by(|a, b| {
        b.neighbors
            .cmp(&a.neighbors)
            .then(a.rect.x.cmp(&b.rect.x))
            .then(a.rect.y.cmp(&b.rect.y))
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input() {
        assert!(group_rectangles(&[], 0, 0.2).is_empty());
    }

    #[test]
    fn identical_rects_collapse() {
        let r = Rect::new(10, 20, 30, 30);
        let out = group_rectangles(&[r, r, r], 2, 0.2);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].rect, r);
        assert_eq!(out[0].neighbors, 3);
        assert_eq!(out[0].score, 900.0);
        assert!(group_rectangles(&[r, r, r], 3, 0.2).is_empty());
    }

    #[test]
    fn order_is_neighbors_then_x_then_y() {
        let a = Rect::new(100, 0, 20, 20);
        let b = Rect::new(0, 50, 20, 20);
        let c = Rect::new(0, 0, 20, 20);
        let out = group_rectangles(&[a, a, b, c], 0, 0.2);
        let rects: Vec<Rect> = out.iter().map(|d| d.rect).collect();
        assert_eq!(rects, vec![a, c, b]);
    }

    #[test]
    fn chained_similarity_is_transitive() {
        let a = Rect::new(0, 0, 100, 100);
        let b = Rect::new(15, 0, 100, 100);
        let c = Rect::new(30, 0, 100, 100);
        assert!(similar(&a, &b, 0.2) && similar(&b, &c, 0.2) && !similar(&a, &c, 0.2));
        let out = group_rectangles(&[a, b, c], 0, 0.2);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].neighbors, 3);
    }
}
