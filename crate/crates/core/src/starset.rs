//! Generalized star sets `{ x0 + V α : α ∈ [-1, 1]^n }` and their exact
//! propagation under linear step maps.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::Box;
use crate::numsim::StepPropagator;

#[derive(Debug, Clone, PartialEq)]
pub struct StarSet {
    center: DVector<f64>,
    /// Generators as columns.
    basis: DMatrix<f64>,
}

impl StarSet {
    pub fn new(center: DVector<f64>, basis: DMatrix<f64>) -> Result<Self> {
        if basis.nrows() != center.len() || basis.ncols() != center.len() {
            return Err(Error::Dimension(format!(
                "star of dim {} needs a square basis, got {}x{}",
                center.len(),
                basis.nrows(),
                basis.ncols()
            )));
        }
        Ok(Self { center, basis })
    }

    /// Exact star representation of a box.
    pub fn from_box(b: &Box) -> Self {
        Self {
            center: b.center(),
            basis: DMatrix::from_diagonal(&b.half_widths()),
        }
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn is_finite(&self) -> bool {
        self.center.iter().chain(self.basis.iter()).all(|v| v.is_finite())
    }

    /// Image under a linear map.
    pub fn transform(&self, phi: &DMatrix<f64>) -> Result<Self> {
        if phi.ncols() != self.dim() || phi.nrows() != self.dim() {
            return Err(Error::Dimension(format!(
                "map {}x{} on star of dim {}",
                phi.nrows(),
                phi.ncols(),
                self.dim()
            )));
        }
        Ok(Self {
            center: phi * &self.center,
            basis: phi * &self.basis,
        })
    }

    /// One step of the propagator.
    pub fn propagate(&self, prop: &StepPropagator) -> Result<Self> {
        self.transform(prop.phi())
    }

    /// Tight axis-aligned box: `x0_d ± Σ_j |v_j,d|`.
    pub fn bounding_box(&self) -> Box {
        let radius = DVector::from_iterator(
            self.dim(),
            self.basis.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()),
        );
        Box::new(&self.center - &radius, &self.center + &radius).expect("radius is non-negative")
    }

    /// `max a·x` over the set.
    pub fn support(&self, a: &DVector<f64>) -> f64 {
        let proj = self.basis.tr_mul(a);
        a.dot(&self.center) + proj.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Does the set meet the closed half-space `a·x >= b`?
    pub fn violates_halfspace(&self, a: &DVector<f64>, b: f64) -> bool {
        self.support(a) >= b
    }

    /// The point for a given α.
    pub fn point(&self, alpha: &DVector<f64>) -> DVector<f64> {
        &self.center + &self.basis * alpha
    }

    /// Corner for the sign pattern in `bits` (bit i set means α_i = +1).
    pub fn corner(&self, bits: usize) -> DVector<f64> {
        let alpha = DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|i| if bits >> i & 1 == 1 { 1.0 } else { -1.0 }),
        );
        self.point(&alpha)
    }
}

impl StarSet {
    /// Basis of this star completed to an invertible frame: generators that
    /// vanish or depend on earlier ones are replaced by unit vectors from the
    /// orthogonal complement.
    pub fn completed_frame(&self) -> DMatrix<f64> {
        let n = self.dim();
        let scale = self.basis.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
        let mut frame = self.basis.clone();
        let mut ortho: Vec<DVector<f64>> = Vec::with_capacity(n);
        let mut missing = Vec::new();
        for j in 0..n {
            let col = self.basis.column(j).into_owned();
            let mut r = col.clone();
            for q in &ortho {
                r -= q * q.dot(&col);
            }
            let norm = r.norm();
            if scale > 0.0 && norm > 1e-9 * col.norm().max(1e-300) && col.norm() > 1e-12 * scale {
                ortho.push(r / norm);
            } else {
                missing.push(j);
            }
        }
        let mut axis = 0;
        for j in missing {
            while axis < n {
                let e = DVector::from_fn(n, |i, _| if i == axis { 1.0 } else { 0.0 });
                axis += 1;
                let mut r = e.clone();
                for q in &ortho {
                    r -= q * q.dot(&e);
                }
                let norm = r.norm();
                if norm > 1e-6 {
                    let q = r / norm;
                    frame.set_column(j, &q);
                    ortho.push(q);
                    break;
                }
            }
        }
        frame
    }

    /// Parallelotope containing both sets, boxed in the frame of `self`.
    /// Falls back to an axis-aligned hull when the frame is singular.
    pub fn frame_hull(&self, other: &StarSet) -> Result<StarSet> {
        if other.dim() != self.dim() {
            return Err(Error::Dimension(format!(
                "hull of stars with dims {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        let frame = self.completed_frame();
        let axis_hull = || StarSet::from_box(&self.bounding_box().hull(&other.bounding_box()));
        let Some(inv) = frame.clone().try_inverse() else {
            return Ok(axis_hull());
        };
        if inv.iter().any(|v| !v.is_finite()) {
            return Ok(axis_hull());
        }
        let a = self.transform(&inv)?.bounding_box();
        let b = other.transform(&inv)?.bounding_box();
        StarSet::from_box(&a.hull(&b)).transform(&frame)
    }
}

/// Smallest box containing every input.
pub fn hull_boxes<'a, I>(boxes: I) -> Result<Box>
where
    I: IntoIterator<Item = &'a Box>,
{
    let mut it = boxes.into_iter();
    let first = it
        .next()
        .ok_or_else(|| Error::Domain("hull of an empty box list".into()))?
        .clone();
    it.try_fold(first, |acc, b| {
        if b.dim() != acc.dim() {
            return Err(Error::Dimension(format!(
                "hull of boxes with dims {} and {}",
                acc.dim(),
                b.dim()
            )));
        }
        Ok(acc.hull(b))
    })
}
