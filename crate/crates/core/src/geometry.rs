//! Planar convex bodies described through their support functions.
//!
//! Everything here is two-dimensional. A body `G` is stored in closed form
//! (disk, axis-aligned ellipse, or CCW polygon) and answers support, chord,
//! membership and boundary-distance queries exactly. Reconstructed shapes
//! come back as [`ConvexPolygon`], which may be empty or degenerate.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector2;

use crate::error::{Error, Result};

pub type Point = Vector2<f64>;

/// Tolerance for closed-set membership and clipping ties.
const GEOM_EPS: f64 = 1e-12;

/// Unit vector on the circle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Direction(Point);

impl Direction {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        let v = Point::new(x, y);
        let n = v.norm();
        if !((n - 1.0).abs() <= 1e-12) {
            return Err(Error::arg(format!("direction ({x}, {y}) has norm {n}, expected 1")));
        }
        Ok(Self(v))
    }

    /// Normalizes `v`; fails on the zero vector.
    pub fn normalized(v: Point) -> Result<Self> {
        let n = v.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::arg("cannot normalize a zero or non-finite vector"));
        }
        Ok(Self(v / n))
    }

    pub fn from_angle(theta: f64) -> Self {
        Self(Point::new(theta.cos(), theta.sin()))
    }

    pub fn dim(&self) -> usize {
        2
    }

    pub fn vector(&self) -> Point {
        self.0
    }

    pub fn x(&self) -> f64 {
        self.0.x
    }

    pub fn y(&self) -> f64 {
        self.0.y
    }

    /// Angle in `[0, 2π)`.
    pub fn angle(&self) -> f64 {
        self.0.y.atan2(self.0.x).rem_euclid(TAU)
    }

    /// The direction rotated by +90°, so that `(u, u⊥)` is positively oriented.
    pub fn perp(&self) -> Point {
        Point::new(-self.0.y, self.0.x)
    }

    pub fn dot(&self, x: &Point) -> f64 {
        self.0.dot(x)
    }
}

/// `N` equally spaced directions `(cos 2πk/N, sin 2πk/N)`.
pub fn direction_grid(n: usize) -> Result<Vec<Direction>> {
    if n < 3 {
        return Err(Error::arg(format!("direction grid needs N >= 3, got {n}")));
    }
    Ok((0..n)
        .map(|k| Direction::from_angle(TAU * k as f64 / n as f64))
        .collect())
}

/// Anything with a support function. Empty sets report `-inf`.
pub trait SupportFunction {
    fn support(&self, u: &Direction) -> f64;

    fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    Disk { center: Point, radius: f64 },
    /// Axis-aligned, centered at the origin.
    Ellipse { a: f64, b: f64 },
    /// Counterclockwise vertices in strictly convex position.
    Polygon { vertices: Vec<Point> },
}

#[derive(Clone, Copy, Debug)]
struct Edge {
    normal: Point,
    offset: f64,
}

/// A validated convex body inside the unit disk with the origin in its interior.
#[derive(Clone, Debug)]
pub struct ConvexBody {
    shape: Shape,
    edges: Vec<Edge>,
}

impl ConvexBody {
    pub fn disk(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !center.iter().all(|c| c.is_finite()) {
            return Err(Error::arg(format!("disk radius must be positive, got {radius}")));
        }
        if center.norm() + radius > 1.0 + GEOM_EPS {
            return Err(Error::arg("disk is not contained in the unit ball"));
        }
        if center.norm() >= radius {
            return Err(Error::arg("origin is not interior to the disk"));
        }
        Ok(Self {
            shape: Shape::Disk { center, radius },
            edges: Vec::new(),
        })
    }

    pub fn centered_disk(radius: f64) -> Result<Self> {
        Self::disk(Point::zeros(), radius)
    }

    pub fn ellipse(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::arg(format!("ellipse semi-axes must be positive, got ({a}, {b})")));
        }
        if a > 1.0 + GEOM_EPS || b > 1.0 + GEOM_EPS {
            return Err(Error::arg("ellipse is not contained in the unit ball"));
        }
        Ok(Self {
            shape: Shape::Ellipse { a, b },
            edges: Vec::new(),
        })
    }

    /// Axis-aligned square `[-half, half]^2`.
    pub fn square(half: f64) -> Result<Self> {
        Self::polygon(vec![
            Point::new(half, -half),
            Point::new(half, half),
            Point::new(-half, half),
            Point::new(-half, -half),
        ])
    }

    pub fn polygon(vertices: Vec<Point>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::arg(format!("polygon needs at least 3 vertices, got {n}")));
        }
        if let Some(v) = vertices.iter().find(|v| !(v.norm() <= 1.0 + GEOM_EPS)) {
            return Err(Error::arg(format!(
                "polygon vertex ({}, {}) lies outside the unit ball",
                v.x, v.y
            )));
        }
        let mut turning = 0.0;
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            let e1 = b - a;
            let e2 = c - b;
            let cross = e1.perp(&e2);
            if !(cross > GEOM_EPS * e1.norm() * e2.norm()) {
                return Err(Error::arg(
                    "polygon vertices must be counterclockwise, strictly convex, with no three collinear",
                ));
            }
            turning += cross.atan2(e1.dot(&e2));
        }
        if (turning - TAU).abs() > 1e-6 {
            return Err(Error::arg("polygon boundary winds more than once"));
        }
        let edges = polygon_edges(&vertices);
        if edges.iter().any(|e| !(e.offset > GEOM_EPS)) {
            return Err(Error::arg("origin is not interior to the polygon"));
        }
        Ok(Self {
            shape: Shape::Polygon { vertices },
            edges,
        })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    /// Returns the body translated by `t`, revalidated.
    pub fn translated(&self, t: Point) -> Result<Self> {
        match &self.shape {
            Shape::Disk { center, radius } => Self::disk(center + t, *radius),
            Shape::Ellipse { .. } => Err(Error::arg("ellipses are origin-centered; translate a polygon instead")),
            Shape::Polygon { vertices } => Self::polygon(vertices.iter().map(|v| v + t).collect()),
        }
    }

    /// Exact support value `sup { x·u : x ∈ G }`.
    pub fn support_function(&self, u: &Direction) -> f64 {
        match &self.shape {
            Shape::Disk { center, radius } => u.dot(center) + radius,
            Shape::Ellipse { a, b } => (a * a * u.x() * u.x() + b * b * u.y() * u.y()).sqrt(),
            Shape::Polygon { vertices } => vertices
                .iter()
                .map(|v| u.dot(v))
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Closed-set membership.
    pub fn contains(&self, x: &Point) -> bool {
        match &self.shape {
            Shape::Disk { center, radius } => (x - center).norm() <= radius * (1.0 + GEOM_EPS),
            Shape::Ellipse { a, b } => (x.x / a).powi(2) + (x.y / b).powi(2) <= 1.0 + GEOM_EPS,
            Shape::Polygon { .. } => self
                .edges
                .iter()
                .all(|e| e.normal.dot(x) <= e.offset + GEOM_EPS),
        }
    }

    /// The chord `{ s : t·u + s·u⊥ ∈ G }`, or `None` when the line misses `G`.
    pub fn chord(&self, u: &Direction, t: f64) -> Option<(f64, f64)> {
        let up = u.perp();
        match &self.shape {
            Shape::Disk { center, radius } => {
                let a = t - u.dot(center);
                let disc = radius * radius - a * a;
                if disc < 0.0 {
                    return None;
                }
                let mid = up.dot(center);
                let half = disc.sqrt();
                Some((mid - half, mid + half))
            }
            Shape::Ellipse { a, b } => {
                let (u1, u2) = (u.x(), u.y());
                let (ia2, ib2) = (1.0 / (a * a), 1.0 / (b * b));
                let qa = u2 * u2 * ia2 + u1 * u1 * ib2;
                let qb = 2.0 * t * u1 * u2 * (ib2 - ia2);
                let qc = t * t * (u1 * u1 * ia2 + u2 * u2 * ib2) - 1.0;
                let disc = qb * qb - 4.0 * qa * qc;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                Some(((-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)))
            }
            Shape::Polygon { .. } => {
                let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
                for e in &self.edges {
                    let slope = e.normal.dot(&up);
                    let rhs = e.offset - t * e.normal.dot(&u.vector());
                    if slope.abs() < 1e-15 {
                        if rhs < 0.0 {
                            return None;
                        }
                    } else if slope > 0.0 {
                        hi = hi.min(rhs / slope);
                    } else {
                        lo = lo.max(rhs / slope);
                    }
                }
                (lo <= hi).then_some((lo, hi))
            }
        }
    }

    /// Euclidean distance from an interior point to the boundary; zero outside.
    pub fn distance_to_boundary(&self, x: &Point) -> f64 {
        if !self.contains(x) {
            return 0.0;
        }
        match &self.shape {
            Shape::Disk { center, radius } => (radius - (x - center).norm()).max(0.0),
            Shape::Ellipse { a, b } => ellipse_distance(*a, *b, x.x, x.y),
            Shape::Polygon { .. } => self
                .edges
                .iter()
                .map(|e| e.offset - e.normal.dot(x))
                .fold(f64::INFINITY, f64::min)
                .max(0.0),
        }
    }

    /// Support-value breakpoints along `u` where the chord length has a kink.
    pub(crate) fn chord_breaks(&self, u: &Direction) -> Vec<f64> {
        match &self.shape {
            Shape::Polygon { vertices } => vertices.iter().map(|v| u.dot(v)).collect(),
            _ => Vec::new(),
        }
    }

    /// Closed boundary polyline with roughly `samples` points (polygons return their vertices).
    pub fn boundary(&self, samples: usize) -> Vec<Point> {
        match &self.shape {
            Shape::Disk { center, radius } => (0..samples)
                .map(|k| {
                    let th = TAU * k as f64 / samples as f64;
                    center + *radius * Point::new(th.cos(), th.sin())
                })
                .collect(),
            Shape::Ellipse { a, b } => (0..samples)
                .map(|k| {
                    let th = TAU * k as f64 / samples as f64;
                    Point::new(a * th.cos(), b * th.sin())
                })
                .collect(),
            Shape::Polygon { vertices } => vertices.clone(),
        }
    }

    /// Largest `|x|` over the body.
    pub fn radius_bound(&self) -> f64 {
        match &self.shape {
            Shape::Disk { center, radius } => center.norm() + radius,
            Shape::Ellipse { a, b } => a.max(*b),
            Shape::Polygon { vertices } => vertices.iter().map(|v| v.norm()).fold(0.0, f64::max),
        }
    }

    pub fn area(&self) -> f64 {
        match &self.shape {
            Shape::Disk { radius, .. } => PI * radius * radius,
            Shape::Ellipse { a, b } => PI * a * b,
            Shape::Polygon { vertices } => shoelace(vertices),
        }
    }
}

impl SupportFunction for ConvexBody {
    fn support(&self, u: &Direction) -> f64 {
        self.support_function(u)
    }
}

fn polygon_edges(vertices: &[Point]) -> Vec<Edge> {
    let n = vertices.len();
    (0..n)
        .map(|i| {
            let a = vertices[i];
            let d = vertices[(i + 1) % n] - a;
            let normal = Point::new(d.y, -d.x).normalize();
            Edge {
                normal,
                offset: normal.dot(&a),
            }
        })
        .collect()
}

fn shoelace(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    if n < 3 {
        return 0.0;
    }
    0.5 * (0..n)
        .map(|i| vertices[i].perp(&vertices[(i + 1) % n]))
        .sum::<f64>()
}

/// Distance from an interior point to the ellipse `x²/a² + y²/b² = 1`
/// by bisection on the Lagrange parameter.
fn ellipse_distance(a: f64, b: f64, x: f64, y: f64) -> f64 {
    // Work with e0 >= e1 and the point in the first quadrant.
    let (e0, e1, y0, y1) = if a >= b {
        (a, b, x.abs(), y.abs())
    } else {
        (b, a, y.abs(), x.abs())
    };
    if y1 > 0.0 {
        if y0 > 0.0 {
            let z0 = y0 / e0;
            let z1 = y1 / e1;
            let g = z0 * z0 + z1 * z1 - 1.0;
            if g == 0.0 {
                return 0.0;
            }
            let r0 = (e0 / e1).powi(2);
            let sbar = ellipse_bisector(r0, z0, z1, g);
            let x0 = r0 * y0 / (sbar + r0);
            let x1 = y1 / (sbar + 1.0);
            ((x0 - y0).powi(2) + (x1 - y1).powi(2)).sqrt()
        } else {
            (y1 - e1).abs()
        }
    } else {
        let numer = e0 * y0;
        let denom = e0 * e0 - e1 * e1;
        if numer < denom {
            let xde = numer / denom;
            let x0 = e0 * xde;
            let x1 = e1 * (1.0 - xde * xde).sqrt();
            ((x0 - y0).powi(2) + x1 * x1).sqrt()
        } else {
            (y0 - e0).abs()
        }
    }
}

fn ellipse_bisector(r0: f64, z0: f64, z1: f64, g0: f64) -> f64 {
    let n0 = r0 * z0;
    let mut s0 = z1 - 1.0;
    let mut s1 = if g0 < 0.0 { 0.0 } else { n0.hypot(z1) - 1.0 };
    let mut s = 0.0;
    for _ in 0..2000 {
        s = 0.5 * (s0 + s1);
        if s == s0 || s == s1 {
            break;
        }
        let g = (n0 / (s + r0)).powi(2) + (z1 / (s + 1.0)).powi(2) - 1.0;
        if g > 0.0 {
            s0 = s;
        } else if g < 0.0 {
            s1 = s;
        } else {
            break;
        }
    }
    s
}

/// Boundary slab `{ x : h(u) − η ≤ x·u ≤ h(u) }` of a body.
#[derive(Clone, Copy, Debug)]
pub struct SlabSpec {
    pub direction: Direction,
    pub depth: f64,
    support: f64,
}

impl SlabSpec {
    pub fn new(body: &ConvexBody, direction: Direction, depth: f64) -> Result<Self> {
        let support = body.support_function(&direction);
        if !(depth > 0.0 && depth <= support) {
            return Err(Error::arg(format!(
                "slab depth must lie in (0, h(u)] = (0, {support}], got {depth}"
            )));
        }
        Ok(Self {
            direction,
            depth,
            support,
        })
    }

    pub fn contains(&self, x: &Point) -> bool {
        let t = self.direction.dot(x);
        t >= self.support - self.depth && t <= self.support
    }
}

/// Support values sampled on the uniform direction grid of size `N`.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportProfile {
    directions: Vec<Direction>,
    values: Vec<f64>,
}

impl SupportProfile {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let directions = direction_grid(values.len())?;
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::arg(format!("support profile value {v} outside [0, 1]")));
        }
        Ok(Self { directions, values })
    }

    /// Exact profile of a body on `direction_grid(n)`.
    pub fn of_body(body: &ConvexBody, n: usize) -> Result<Self> {
        let directions = direction_grid(n)?;
        let values = directions.iter().map(|u| body.support_function(u)).collect();
        Ok(Self { directions, values })
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Quadrature weight of each direction (arc length `2π/N`).
    pub fn weight(&self) -> f64 {
        TAU / self.values.len() as f64
    }

    pub fn intersection(&self) -> HalfplaneIntersection {
        halfplane_intersection(&self.directions, &self.values)
    }
}

/// A convex polygon produced by clipping; may be empty or degenerate.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvexPolygon {
    pub vertices: Vec<Point>,
}

impl ConvexPolygon {
    pub fn area(&self) -> f64 {
        shoelace(&self.vertices)
    }

    pub fn contains(&self, x: &Point) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            (b - a).perp(&(x - a)) >= -1e-9
        })
    }
}

impl SupportFunction for ConvexPolygon {
    fn support(&self, u: &Direction) -> f64 {
        self.vertices
            .iter()
            .map(|v| u.dot(v))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HalfplaneIntersection {
    pub polygon: ConvexPolygon,
    pub empty: bool,
    /// Nonempty with (numerically) zero area.
    pub degenerate: bool,
}

/// Half-side of the square every intersection starts from.
pub const CLIP_BOX: f64 = 2.0;

/// `∩_k { x : x·u_k ≤ v_k }` by successive clipping of `[-2, 2]²`.
pub fn halfplane_intersection(directions: &[Direction], values: &[f64]) -> HalfplaneIntersection {
    assert_eq!(directions.len(), values.len(), "one value per direction");
    let b = CLIP_BOX;
    let mut poly = vec![
        Point::new(-b, -b),
        Point::new(b, -b),
        Point::new(b, b),
        Point::new(-b, b),
    ];
    let mut scratch = Vec::with_capacity(poly.len() + 4);
    for (u, &c) in directions.iter().zip(values) {
        clip(&poly, &u.vector(), c, &mut scratch);
        std::mem::swap(&mut poly, &mut scratch);
        if poly.is_empty() {
            break;
        }
    }
    dedup_ring(&mut poly);
    let polygon = ConvexPolygon { vertices: poly };
    let empty = polygon.vertices.is_empty();
    let degenerate = !empty && (polygon.vertices.len() < 3 || polygon.area() <= 1e-12);
    HalfplaneIntersection {
        polygon,
        empty,
        degenerate,
    }
}

fn clip(poly: &[Point], normal: &Point, offset: f64, out: &mut Vec<Point>) {
    out.clear();
    let n = poly.len();
    if n == 0 {
        return;
    }
    let tol = GEOM_EPS * (1.0 + offset.abs());
    let mut prev = poly[n - 1];
    let mut dp = normal.dot(&prev) - offset;
    for &cur in poly {
        let dc = normal.dot(&cur) - offset;
        let cur_in = dc <= tol;
        let prev_in = dp <= tol;
        if cur_in != prev_in {
            let t = dp / (dp - dc);
            out.push(prev + t * (cur - prev));
        }
        if cur_in {
            out.push(cur);
        }
        prev = cur;
        dp = dc;
    }
}

fn dedup_ring(poly: &mut Vec<Point>) {
    poly.dedup_by(|a, b| (*a - *b).norm() <= 1e-12);
    while poly.len() > 1 && (poly[0] - poly[poly.len() - 1]).norm() <= 1e-12 {
        poly.pop();
    }
}

/// `max_k |h_A(u_k) − h_B(u_k)|` on `direction_grid(n)`; the Hausdorff
/// distance for convex sets in the limit of large `n`.
pub fn hausdorff_distance<A, B>(a: &A, b: &B, n: usize) -> Result<f64>
where
    A: SupportFunction + ?Sized,
    B: SupportFunction + ?Sized,
{
    if a.is_empty() || b.is_empty() {
        return Err(Error::arg("Hausdorff distance of an empty set"));
    }
    Ok(direction_grid(n)?
        .iter()
        .map(|u| (a.support(u) - b.support(u)).abs())
        .fold(0.0, f64::max))
}

/// Sampled `Δ_p` distance between support functions with arc weights `2π/N`.
pub fn lp_support_metric<A, B>(a: &A, b: &B, p: f64, n: usize) -> Result<f64>
where
    A: SupportFunction + ?Sized,
    B: SupportFunction + ?Sized,
{
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::arg(format!("Δ_p needs p in [1, ∞), got {p}")));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::arg("Δ_p distance of an empty set"));
    }
    let w = TAU / n as f64;
    let sum: f64 = direction_grid(n)?
        .iter()
        .map(|u| (a.support(u) - b.support(u)).abs().powf(p))
        .sum();
    Ok((w * sum).powf(1.0 / p))
}
