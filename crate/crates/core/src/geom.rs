//! Small 2-D geometry toolkit: vectors, convex polygon clipping, oriented
//! boxes and segment intersection. Shared by the ingest deduplication and
//! the lane-map relation classifier.

use alloc::vec::Vec;
#[allow(unused_imports)] // no_std builds take f64 math from this trait
use num_traits::Float;

pub const TAU: f64 = core::f64::consts::TAU;
pub const PI: f64 = core::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }

    pub fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }

    pub fn scale(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3-D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dist(self, o: Vec2) -> f64 {
        self.sub(o).norm()
    }

    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

/// Wrap an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a % TAU;
    if r <= -PI {
        r += TAU;
    } else if r > PI {
        r -= TAU;
    }
    r
}

/// An oriented rectangle given by center, heading and extents.
#[derive(Debug, Clone, Copy)]
pub struct OrientedBox {
    pub center: Vec2,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedBox {
    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [Vec2; 4] {
        let hl = 0.5 * self.length;
        let hw = 0.5 * self.width;
        let local = [
            Vec2::new(hl, hw),
            Vec2::new(-hl, hw),
            Vec2::new(-hl, -hw),
            Vec2::new(hl, -hw),
        ];
        local.map(|p| self.center.add(p.rotate(self.heading)))
    }

    pub fn area(&self) -> f64 {
        self.length * self.width
    }
}

/// Signed area of a simple polygon (positive when counter-clockwise).
pub fn polygon_area(points: &[Vec2]) -> f64 {
    if points.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..points.len() {
        let a = points[i];
        let b = points[(i + 1) % points.len()];
        twice += a.cross(b);
    }
    0.5 * twice
}

/// Sutherland-Hodgman clipping of a convex `subject` against a convex
/// counter-clockwise `clip` polygon. Returns the intersection polygon
/// (possibly empty).
pub fn clip_convex(subject: &[Vec2], clip: &[Vec2]) -> Vec<Vec2> {
    let mut points: Vec<Vec2> = subject.to_vec();
    for i in 0..clip.len() {
        if points.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let edge = b.sub(a);
        let inside = |p: Vec2| edge.cross(p.sub(a)) >= 0.0;

        let mut result = Vec::with_capacity(points.len() + 1);
        let mut prev = *points.last().unwrap();
        let mut prev_inside = inside(prev);
        for p in points {
            let p_inside = inside(p);
            if p_inside != prev_inside {
                // Edge crossing: intersect prev->p with the clip line a->b.
                let d = p.sub(prev);
                let denom = edge.cross(d);
                let t = edge.cross(a.sub(prev)) / denom;
                result.push(prev.add(d.scale(t)));
            }
            if p_inside {
                result.push(p);
            }
            prev = p;
            prev_inside = p_inside;
        }
        points = result;
    }
    points
}

/// Intersection point of segments `a0->a1` and `b0->b1`, if any.
/// Returns the parameter along the first segment together with the point.
pub fn segment_intersection(a0: Vec2, a1: Vec2, b0: Vec2, b1: Vec2) -> Option<(f64, Vec2)> {
    let r = a1.sub(a0);
    let s = b1.sub(b0);
    let denom = r.cross(s);
    if denom == 0.0 {
        return None; // parallel or collinear: no single crossing point
    }
    let t = b0.sub(a0).cross(s) / denom;
    let u = b0.sub(a0).cross(r) / denom;
    if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
        Some((t, a0.add(r.scale(t))))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(cx: f64, cy: f64, side: f64) -> OrientedBox {
        OrientedBox {
            center: Vec2::new(cx, cy),
            heading: 0.0,
            length: side,
            width: side,
        }
    }

    #[test]
    fn corners_are_ccw() {
        let b = square(0.0, 0.0, 2.0);
        let area = polygon_area(&b.corners());
        assert!((area - 4.0).abs() < 1e-12);
    }

    #[test]
    fn clip_identical_squares() {
        let b = square(1.0, 1.0, 2.0);
        let inter = clip_convex(&b.corners(), &b.corners());
        assert!((polygon_area(&inter) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn clip_offset_squares() {
        let a = square(0.0, 0.0, 1.0);
        let b = square(0.5, 0.0, 1.0);
        let inter = clip_convex(&a.corners(), &b.corners());
        assert!((polygon_area(&inter) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn clip_disjoint_is_empty() {
        let a = square(0.0, 0.0, 1.0);
        let b = square(5.0, 0.0, 1.0);
        let inter = clip_convex(&a.corners(), &b.corners());
        assert!(polygon_area(&inter).abs() < 1e-12);
    }

    #[test]
    fn segments_cross() {
        let (t, p) =
            segment_intersection(Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0), Vec2::new(1.0, -1.0), Vec2::new(1.0, 1.0))
                .unwrap();
        assert!((t - 0.5).abs() < 1e-12);
        assert!((p.x - 1.0).abs() < 1e-12 && p.y.abs() < 1e-12);
    }

    #[test]
    fn segments_parallel_none() {
        assert!(segment_intersection(
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(1.0, 1.0)
        )
        .is_none());
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.25) - 0.25).abs() < 1e-15);
    }
}
