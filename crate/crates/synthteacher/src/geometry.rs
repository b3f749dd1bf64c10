//! 2D polygon primitives: containment, convex clipping, IoU, hulls.
//!
//! Coordinates follow image conventions (x right, y down, units of pixels).
//! Polygons are vertex lists without a repeated closing vertex.

use serde::{Deserialize, Serialize};

/// A 2D point, serialized compactly as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, f64)", into = "(f64, f64)")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point { x, y }
    }
}

impl From<Point> for (f64, f64) {
    fn from(p: Point) -> Self {
        (p.x, p.y)
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BBox {
    pub fn of(points: &[Point]) -> Option<BBox> {
        let first = points.first()?;
        let mut b = BBox {
            min_x: first.x,
            min_y: first.y,
            max_x: first.x,
            max_y: first.y,
        };
        for p in &points[1..] {
            b.min_x = b.min_x.min(p.x);
            b.min_y = b.min_y.min(p.y);
            b.max_x = b.max_x.max(p.x);
            b.max_y = b.max_y.max(p.y);
        }
        Some(b)
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.min_x <= other.max_x
            && other.min_x <= self.max_x
            && self.min_y <= other.max_y
            && other.min_y <= self.max_y
    }
}

/// Twice the signed area of triangle (a, b, c). Positive when c is to the
/// left of a->b in a y-up frame; only the sign pattern matters here.
fn cross(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y)
}

/// Signed polygon area (shoelace). The sign encodes winding direction.
pub fn signed_area(poly: &[Point]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        acc += a.x * b.y - b.x * a.y;
    }
    acc / 2.0
}

pub fn polygon_area(poly: &[Point]) -> f64 {
    signed_area(poly).abs()
}

/// Winding-number point-in-polygon test. Boundary behavior is unspecified;
/// callers with boundary-sensitive needs use [`contains_with_tolerance`].
pub fn polygon_contains(poly: &[Point], p: Point) -> bool {
    if poly.len() < 3 {
        return false;
    }
    let mut winding = 0i32;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        if a.y <= p.y {
            if b.y > p.y && cross(a, b, p) > 0.0 {
                winding += 1;
            }
        } else if b.y <= p.y && cross(a, b, p) < 0.0 {
            winding -= 1;
        }
    }
    winding != 0
}

/// Distance from `p` to the segment `[a, b]`.
pub fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.distance(Point::new(a.x + t * dx, a.y + t * dy))
}

/// Containment test that also accepts points within `tol` of the boundary.
pub fn contains_with_tolerance(poly: &[Point], p: Point, tol: f64) -> bool {
    if polygon_contains(poly, p) {
        return true;
    }
    (0..poly.len()).any(|i| segment_distance(p, poly[i], poly[(i + 1) % poly.len()]) <= tol)
}

fn segments_properly_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// True when the polygon has no properly crossing non-adjacent edges and no
/// degenerate (zero-length) edges.
pub fn is_simple_polygon(poly: &[Point]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        if poly[i] == poly[(i + 1) % n] {
            return false;
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            // Skip adjacent edges (share a vertex).
            if j == i || (j + 1) % n == i || (i + 1) % n == j {
                continue;
            }
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            let (c, d) = (poly[j], poly[(j + 1) % n]);
            if segments_properly_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

/// True when all turns share one orientation (or are collinear).
pub fn is_convex(poly: &[Point]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let mut sign = 0.0f64;
    for i in 0..n {
        let c = cross(poly[i], poly[(i + 1) % n], poly[(i + 2) % n]);
        if c != 0.0 {
            if sign != 0.0 && c.signum() != sign {
                return false;
            }
            sign = c.signum();
        }
    }
    true
}

/// Convex hull by Andrew's monotone chain. Returns vertices in
/// counter-clockwise order (y-up sense); collinear interior points dropped.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap());
    pts.dedup();
    let n = pts.len();
    if n < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * n);
    for &p in pts.iter() {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev() {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Clip `subject` against a convex `clip` polygon (Sutherland-Hodgman).
/// Returns the intersection polygon, possibly empty.
pub fn convex_clip(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    if subject.len() < 3 || clip.len() < 3 {
        return Vec::new();
    }
    // Orient the clip polygon consistently so "inside" is well defined.
    let clip_ccw: Vec<Point> = if signed_area(clip) < 0.0 {
        clip.iter().rev().copied().collect()
    } else {
        clip.to_vec()
    };
    let mut output: Vec<Point> = subject.to_vec();
    let n = clip_ccw.len();
    for i in 0..n {
        if output.is_empty() {
            return Vec::new();
        }
        let a = clip_ccw[i];
        let b = clip_ccw[(i + 1) % n];
        let input = std::mem::take(&mut output);
        let inside = |p: Point| cross(a, b, p) >= 0.0;
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let cur_in = inside(cur);
            let prev_in = inside(prev);
            if cur_in != prev_in {
                // Edge crosses the clip line; add the intersection point.
                let dc = cross(a, b, prev);
                let dn = cross(a, b, cur);
                let t = dc / (dc - dn);
                output.push(Point::new(
                    prev.x + t * (cur.x - prev.x),
                    prev.y + t * (cur.y - prev.y),
                ));
            }
            if cur_in {
                output.push(cur);
            }
        }
    }
    output
}

/// Intersection-over-union of two simple polygons.
///
/// Convex pairs use exact clipping; anything else falls back to pixel-grid
/// sampling via [`iou_raster`].
pub fn iou(a: &[Point], b: &[Point]) -> f64 {
    let area_a = polygon_area(a);
    let area_b = polygon_area(b);
    if area_a == 0.0 || area_b == 0.0 {
        return 0.0;
    }
    if let (Some(ba), Some(bb)) = (BBox::of(a), BBox::of(b)) {
        if !ba.intersects(&bb) {
            return 0.0;
        }
    }
    let inter = if is_convex(a) && is_convex(b) {
        polygon_area(&convex_clip(a, b))
    } else {
        return iou_raster(a, b);
    };
    inter / (area_a + area_b - inter)
}

/// IoU estimated by sampling pixel centers on a 1 px grid over the joint
/// bounding box.
pub fn iou_raster(a: &[Point], b: &[Point]) -> f64 {
    let (Some(ba), Some(bb)) = (BBox::of(a), BBox::of(b)) else {
        return 0.0;
    };
    let min_x = ba.min_x.min(bb.min_x).floor() as i64;
    let min_y = ba.min_y.min(bb.min_y).floor() as i64;
    let max_x = ba.max_x.max(bb.max_x).ceil() as i64;
    let max_y = ba.max_y.max(bb.max_y).ceil() as i64;
    let mut inter = 0u64;
    let mut union = 0u64;
    for py in min_y..max_y {
        for px in min_x..max_x {
            let c = Point::new(px as f64 + 0.5, py as f64 + 0.5);
            let in_a = polygon_contains(a, c);
            let in_b = polygon_contains(b, c);
            if in_a && in_b {
                inter += 1;
            }
            if in_a || in_b {
                union += 1;
            }
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}
