//! Half-spaces, axis-aligned boxes and planar polygon clipping.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `{ x : normal · x <= offset }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace {
    pub normal: DVector<f64>,
    pub offset: f64,
}

impl HalfSpace {
    pub fn new(normal: DVector<f64>, offset: f64) -> Self {
        Self { normal, offset }
    }

    /// Half-space over `dim` coordinates constraining only coordinates `i`, `j`.
    pub fn planar(dim: usize, i: usize, j: usize, a: f64, b: f64, offset: f64) -> Self {
        let mut normal = DVector::zeros(dim);
        normal[i] = a;
        normal[j] = b;
        Self { normal, offset }
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.normal.dot(x) <= self.offset
    }

    /// The closure of the complement, `{ x : normal · x >= offset }`, written
    /// as `-normal · x <= -offset`.
    pub fn complement(&self) -> Self {
        Self::new(-&self.normal, -self.offset)
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }
}

/// Axis-aligned hyperrectangle `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Box {
    lo: DVector<f64>,
    hi: DVector<f64>,
}

impl Box {
    pub fn new(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension(format!("box bounds {} vs {}", lo.len(), hi.len())));
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| !(l <= h)) {
            return Err(Error::Domain("box needs lo <= hi component-wise".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn from_slices(lo: &[f64], hi: &[f64]) -> Result<Self> {
        Self::new(DVector::from_row_slice(lo), DVector::from_row_slice(hi))
    }

    pub fn from_center(center: &[f64], half_width: &[f64]) -> Result<Self> {
        if center.len() != half_width.len() {
            return Err(Error::Dimension("center and half-width lengths differ".into()));
        }
        if half_width.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Domain("half-widths must be non-negative".into()));
        }
        let c = DVector::from_row_slice(center);
        let w = DVector::from_row_slice(half_width);
        Self::new(&c - &w, &c + &w)
    }

    pub fn point(x: &DVector<f64>) -> Self {
        Self {
            lo: x.clone(),
            hi: x.clone(),
        }
    }

    pub fn lo(&self) -> &DVector<f64> {
        &self.lo
    }

    pub fn hi(&self) -> &DVector<f64> {
        &self.hi
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn center(&self) -> DVector<f64> {
        (&self.lo + &self.hi) * 0.5
    }

    pub fn half_widths(&self) -> DVector<f64> {
        (&self.hi - &self.lo) * 0.5
    }

    pub fn widths(&self) -> DVector<f64> {
        &self.hi - &self.lo
    }

    pub fn is_finite(&self) -> bool {
        self.lo.iter().chain(self.hi.iter()).all(|v| v.is_finite())
    }

    pub fn contains_point(&self, x: &DVector<f64>, slack: f64) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(self.hi.iter()))
            .all(|(v, (l, h))| *v >= l - slack * l.abs().max(1.0) && *v <= h + slack * h.abs().max(1.0))
    }

    pub fn contains_box(&self, other: &Box) -> bool {
        self.lo.iter().zip(other.lo.iter()).all(|(a, b)| a <= b)
            && self.hi.iter().zip(other.hi.iter()).all(|(a, b)| a >= b)
    }

    pub fn intersects(&self, other: &Box) -> bool {
        (0..self.dim()).all(|i| self.lo[i] <= other.hi[i] && other.lo[i] <= self.hi[i])
    }

    /// Maximum of `a · x` over the box.
    pub fn support(&self, a: &DVector<f64>) -> f64 {
        let c = self.center();
        let w = self.half_widths();
        a.dot(&c) + a.iter().zip(w.iter()).map(|(ai, wi)| (ai * wi).abs()).sum::<f64>()
    }

    /// Replace coordinates `i` with `[lo, hi]`.
    pub fn with_interval(mut self, i: usize, lo: f64, hi: f64) -> Self {
        self.lo[i] = lo;
        self.hi[i] = hi;
        self
    }

    /// Projection onto the coordinates in `idx`.
    pub fn project(&self, idx: &[usize]) -> Box {
        Box {
            lo: DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.lo[i])),
            hi: DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.hi[i])),
        }
    }

    /// Smallest box containing both.
    pub fn hull(&self, other: &Box) -> Box {
        Box {
            lo: self.lo.zip_map(&other.lo, f64::min),
            hi: self.hi.zip_map(&other.hi, f64::max),
        }
    }

    /// Corner selected by the sign pattern in `bits` (bit `i` set = upper bound).
    pub fn corner(&self, bits: u64) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|i| if bits >> i & 1 == 1 { self.hi[i] } else { self.lo[i] }),
        )
    }
}

/// Vertices of a convex polygon in the plane, counter-clockwise.
pub type Polygon = Vec<[f64; 2]>;

/// Sutherland-Hodgman clip of a convex polygon by `a·p <= b`.
pub fn clip_polygon(poly: &[[f64; 2]], a: [f64; 2], b: f64) -> Polygon {
    let mut out = Vec::with_capacity(poly.len() + 1);
    if poly.is_empty() {
        return out;
    }
    let eval = |p: &[f64; 2]| a[0] * p[0] + a[1] * p[1] - b;
    for i in 0..poly.len() {
        let cur = poly[i];
        let next = poly[(i + 1) % poly.len()];
        let (fc, fn_) = (eval(&cur), eval(&next));
        if fc <= 0.0 {
            out.push(cur);
        }
        if (fc < 0.0 && fn_ > 0.0) || (fc > 0.0 && fn_ < 0.0) {
            let t = fc / (fc - fn_);
            out.push([cur[0] + t * (next[0] - cur[0]), cur[1] + t * (next[1] - cur[1])]);
        }
    }
    out
}

/// Axis-aligned rectangle as a counter-clockwise polygon.
pub fn rect_polygon(lo: [f64; 2], hi: [f64; 2]) -> Polygon {
    vec![[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]]
}

/// Bounding rectangle of a polygon, `None` when empty.
pub fn polygon_bounds(poly: &[[f64; 2]]) -> Option<([f64; 2], [f64; 2])> {
    if poly.is_empty() {
        return None;
    }
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in poly {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    Some((lo, hi))
}

/// Planar convex region given by half-planes `a·p <= b`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarRegion {
    pub edges: Vec<([f64; 2], f64)>,
}

impl PlanarRegion {
    /// Regular octagon inscribed in the circle of `radius`, vertices at
    /// multiples of 45° (one vertex on each half-axis).
    pub fn octagon(radius: f64) -> Self {
        Self::inscribed_octagon(radius, std::f64::consts::PI / 8.0)
    }

    /// Inscribed octagon whose first edge normal points at `first_normal` rad.
    pub fn inscribed_octagon(radius: f64, first_normal: f64) -> Self {
        let offset = radius * (std::f64::consts::PI / 8.0).cos();
        let edges = (0..8)
            .map(|k| {
                let ang = first_normal + k as f64 * std::f64::consts::PI / 4.0;
                ([ang.cos(), ang.sin()], offset)
            })
            .collect();
        Self { edges }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.edges.iter().all(|(a, b)| a[0] * p[0] + a[1] * p[1] <= *b)
    }

    /// Is the rectangle entirely inside (boundary included)?
    pub fn contains_rect(&self, lo: [f64; 2], hi: [f64; 2]) -> bool {
        self.edges.iter().all(|(a, b)| {
            let s = a[0].max(0.0) * hi[0] + a[0].min(0.0) * lo[0] + a[1].max(0.0) * hi[1] + a[1].min(0.0) * lo[1];
            s <= *b
        })
    }

    /// Clip a rectangle to the region; returns the bounding rectangle of the
    /// intersection or `None` when it is empty.
    pub fn clip_rect(&self, lo: [f64; 2], hi: [f64; 2]) -> Option<([f64; 2], [f64; 2])> {
        let mut poly = rect_polygon(lo, hi);
        for (a, b) in &self.edges {
            poly = clip_polygon(&poly, *a, *b);
            if poly.is_empty() {
                return None;
            }
        }
        polygon_bounds(&poly).map(|(l, h)| {
            // the intersection lies in the rectangle
            ([l[0].max(lo[0]), l[1].max(lo[1])], [h[0].min(hi[0]), h[1].min(hi[1])])
        })
    }

    /// Bounding rectangle of `rect \ interior(region)`, or `None` when the
    /// rectangle lies inside the closed region.
    pub fn clip_rect_outside(&self, lo: [f64; 2], hi: [f64; 2]) -> Option<([f64; 2], [f64; 2])> {
        if self.contains_rect(lo, hi) {
            return None;
        }
        let mut acc: Option<([f64; 2], [f64; 2])> = None;
        for (a, b) in &self.edges {
            // rect ∩ { a·p >= b }
            let poly = clip_polygon(&rect_polygon(lo, hi), [-a[0], -a[1]], -b);
            if let Some((l, h)) = polygon_bounds(&poly) {
                acc = Some(match acc {
                    None => (l, h),
                    Some((al, ah)) => ([al[0].min(l[0]), al[1].min(l[1])], [ah[0].max(h[0]), ah[1].max(h[1])]),
                });
            }
        }
        acc.map(|(l, h)| ([l[0].max(lo[0]), l[1].max(lo[1])], [h[0].min(hi[0]), h[1].min(hi[1])]))
    }

    /// Vertices of the region when it is the octagon built by [`Self::octagon`].
    pub fn vertices(&self) -> Polygon {
        let n = self.edges.len();
        (0..n)
            .map(|k| {
                let (a1, b1) = self.edges[(k + n - 1) % n];
                let (a2, b2) = self.edges[k];
                let det = a1[0] * a2[1] - a1[1] * a2[0];
                [(b1 * a2[1] - b2 * a1[1]) / det, (a1[0] * b2 - a2[0] * b1) / det]
            })
            .collect()
    }
}
