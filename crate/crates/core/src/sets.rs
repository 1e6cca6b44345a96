//! Axis-aligned boxes used for uncertainty sets, feasible sets and obstacles.

use std::fmt;

use thiserror::Error;

use crate::interval::Interval;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SetError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("inverted bounds in dimension {dim}: {lo} > {hi}")]
    Inverted { dim: usize, lo: f64, hi: f64 },
    #[error("non-finite bound in dimension {0}")]
    NonFinite(usize),
    #[error("negative inflation {eps} in dimension {dim}")]
    NegativeEps { dim: usize, eps: f64 },
    #[error("obstacle {index} is not contained in the state set")]
    ObstacleOutsideStateSet { index: usize },
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<(), SetError> {
    if expected == got {
        Ok(())
    } else {
        Err(SetError::DimensionMismatch { expected, got })
    }
}

/// The box `[lo, hi]`, closed in every coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypercube {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Hypercube {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, SetError> {
        check_dim(lo.len(), hi.len())?;
        for (dim, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if !l.is_finite() || !h.is_finite() {
                return Err(SetError::NonFinite(dim));
            }
            if l > h {
                return Err(SetError::Inverted { dim, lo: l, hi: h });
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn point(p: &[f64]) -> Result<Self, SetError> {
        Self::new(p.to_vec(), p.to_vec())
    }

    /// The centered box `[-half, half]`.
    pub fn symmetric(half: &[f64]) -> Result<Self, SetError> {
        Self::new(half.iter().map(|h| -h).collect(), half.to_vec())
    }

    pub fn from_intervals(iv: &[Interval]) -> Result<Self, SetError> {
        Self::new(iv.iter().map(|i| i.lo).collect(), iv.iter().map(|i| i.hi).collect())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn intervals(&self) -> Vec<Interval> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&lo, &hi)| Interval { lo, hi })
            .collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }

    /// Componentwise `[max lo, min hi]`, or `None` when some component is empty.
    pub fn intersect(&self, other: &Hypercube) -> Result<Option<Hypercube>, SetError> {
        check_dim(self.dim(), other.dim())?;
        let lo: Vec<f64> = self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect();
        let hi: Vec<f64> = self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(*b)).collect();
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Ok(None);
        }
        Ok(Some(Hypercube { lo, hi }))
    }

    /// Minkowski sum with the centered box of half-widths `eps`.
    pub fn inflate(&self, eps: &[f64]) -> Result<Hypercube, SetError> {
        check_dim(self.dim(), eps.len())?;
        for (dim, &e) in eps.iter().enumerate() {
            if !(e >= 0.0) || !e.is_finite() {
                return Err(SetError::NegativeEps { dim, eps: e });
            }
        }
        Ok(Hypercube {
            lo: self.lo.iter().zip(eps).map(|(l, e)| l - e).collect(),
            hi: self.hi.iter().zip(eps).map(|(h, e)| h + e).collect(),
        })
    }

    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(x, (l, h))| *x >= l - tol && *x <= h + tol)
    }

    pub fn is_subset_of(&self, other: &Hypercube, tol: f64) -> bool {
        self.dim() == other.dim()
            && (0..self.dim()).all(|i| self.lo[i] >= other.lo[i] - tol && self.hi[i] <= other.hi[i] + tol)
    }

    /// True when the interiors of the two boxes meet.
    pub fn overlaps_interior(&self, other: &Hypercube) -> bool {
        self.overlaps_interior_tol(other, 0.0)
    }

    /// Interior overlap test where each face may intrude by up to `tol`.
    pub fn overlaps_interior_tol(&self, other: &Hypercube, tol: f64) -> bool {
        (0..self.dim()).all(|i| self.lo[i] < other.hi[i] - tol && other.lo[i] < self.hi[i] - tol)
    }

    /// Cartesian product `self × other`.
    pub fn product(&self, other: &Hypercube) -> Hypercube {
        Hypercube {
            lo: self.lo.iter().chain(&other.lo).copied().collect(),
            hi: self.hi.iter().chain(&other.hi).copied().collect(),
        }
    }

    /// Coordinates `range` of the box.
    pub fn project(&self, range: std::ops::Range<usize>) -> Hypercube {
        Hypercube {
            lo: self.lo[range.clone()].to_vec(),
            hi: self.hi[range].to_vec(),
        }
    }

    /// Nearest point of the box to `p`.
    pub fn clamp(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(x, (l, h))| x.clamp(*l, *h))
            .collect()
    }
}

impl fmt::Display for Hypercube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} .. {:?}", self.lo, self.hi)
    }
}

/// Union of obstacle boxes, each inside the state set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UnsafeRegion {
    boxes: Vec<Hypercube>,
}

impl UnsafeRegion {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(boxes: Vec<Hypercube>, state_set: &Hypercube) -> Result<Self, SetError> {
        for (index, b) in boxes.iter().enumerate() {
            check_dim(state_set.dim(), b.dim())?;
            if !b.is_subset_of(state_set, 0.0) {
                return Err(SetError::ObstacleOutsideStateSet { index });
            }
        }
        Ok(Self { boxes })
    }

    pub fn boxes(&self) -> &[Hypercube] {
        &self.boxes
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    /// True when `p` lies in the open interior of some obstacle.
    pub fn contains_interior(&self, p: &[f64]) -> bool {
        self.boxes
            .iter()
            .any(|b| p.iter().enumerate().all(|(i, &x)| x > b.lo()[i] && x < b.hi()[i]))
    }
}

/// True iff `h` shares no interior point with any obstacle; touching faces count as disjoint.
pub fn disjoint_from_region(h: &Hypercube, region: &UnsafeRegion) -> Result<bool, SetError> {
    disjoint_from_region_tol(h, region, 0.0)
}

/// As [`disjoint_from_region`], allowing each face to intrude by up to `tol`.
pub fn disjoint_from_region_tol(h: &Hypercube, region: &UnsafeRegion, tol: f64) -> Result<bool, SetError> {
    for b in region.boxes() {
        check_dim(b.dim(), h.dim())?;
        if h.overlaps_interior_tol(b, tol) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `[y - eps_y, y + eps_y]` clamped to `x_set`; `None` when the measurement is inconsistent with it.
pub fn measurement_box(y: &[f64], eps_y: &[f64], x_set: &Hypercube) -> Result<Option<Hypercube>, SetError> {
    check_dim(x_set.dim(), y.len())?;
    check_dim(x_set.dim(), eps_y.len())?;
    let lo: Vec<f64> = (0..y.len()).map(|i| x_set.lo[i].max(y[i] - eps_y[i])).collect();
    let hi: Vec<f64> = (0..y.len()).map(|i| x_set.hi[i].min(y[i] + eps_y[i])).collect();
    if lo.iter().zip(&hi).any(|(l, h)| !(l <= h)) {
        return Ok(None);
    }
    Ok(Some(Hypercube { lo, hi }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cube(lo: &[f64], hi: &[f64]) -> Hypercube {
        Hypercube::new(lo.to_vec(), hi.to_vec()).unwrap()
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn intersect_examples() {
        let a = cube(&[0.0, 0.0], &[2.0, 2.0]);
        let b = cube(&[1.0, 1.0], &[3.0, 3.0]);
        assert_eq!(a.intersect(&b).unwrap(), Some(cube(&[1.0, 1.0], &[2.0, 2.0])));
        assert_eq!(cube(&[0.0], &[1.0]).intersect(&cube(&[2.0], &[3.0])).unwrap(), None);
        assert_eq!(a.intersect(&a).unwrap(), Some(a.clone()));
        assert!(a.intersect(&cube(&[0.0], &[1.0])).is_err());
    }

    #[test]
    fn inflate_examples() {
        assert_eq!(cube(&[1.0], &[2.0]).inflate(&[0.5]).unwrap(), cube(&[0.5], &[2.5]));
        let a = cube(&[1.0, -1.0], &[2.0, 4.0]);
        assert_eq!(a.inflate(&[0.0, 0.0]).unwrap(), a);
        let p = Hypercube::point(&[3.0, 3.0]).unwrap().inflate(&[0.02, 0.02]).unwrap();
        assert!(close(p.lo(), &[2.98, 2.98]) && close(p.hi(), &[3.02, 3.02]));
        assert!(matches!(a.inflate(&[-0.1, 0.0]), Err(SetError::NegativeEps { dim: 0, .. })));
    }

    #[test]
    fn disjointness_examples() {
        let x = cube(&[-1.0, -1.0], &[10.0, 10.0]);
        let h = cube(&[0.0, 0.0], &[1.0, 1.0]);
        let region = |lo: &[f64], hi: &[f64]| UnsafeRegion::new(vec![cube(lo, hi)], &x).unwrap();
        assert!(disjoint_from_region(&h, &region(&[2.0, 2.0], &[3.0, 3.0])).unwrap());
        assert!(!disjoint_from_region(&h, &region(&[0.5, 0.5], &[3.0, 3.0])).unwrap());
        assert!(disjoint_from_region(&h, &region(&[1.0, 1.0], &[2.0, 2.0])).unwrap());
        assert!(disjoint_from_region(&h, &UnsafeRegion::empty()).unwrap());
    }

    #[test]
    fn obstacle_must_lie_in_state_set() {
        let x = cube(&[0.0], &[1.0]);
        assert!(matches!(
            UnsafeRegion::new(vec![cube(&[0.5], &[1.5])], &x),
            Err(SetError::ObstacleOutsideStateSet { index: 0 })
        ));
    }

    #[test]
    fn measurement_box_examples() {
        let x = cube(&[-1.0, -1.0], &[10.0, 10.0]);
        let m = measurement_box(&[5.0, 5.0], &[0.05, 0.05], &x).unwrap().unwrap();
        assert!(close(m.lo(), &[4.95, 4.95]) && close(m.hi(), &[5.05, 5.05]));
        let m = measurement_box(&[-1.02, 0.0], &[0.05, 0.05], &x).unwrap().unwrap();
        assert!(close(m.lo(), &[-1.0, -0.05]) && close(m.hi(), &[-0.97, 0.05]));
        assert_eq!(measurement_box(&[12.0, 0.0], &[0.05, 0.05], &x).unwrap(), None);
    }

    #[test]
    fn constructor_validation() {
        assert!(matches!(Hypercube::new(vec![1.0], vec![0.0]), Err(SetError::Inverted { dim: 0, .. })));
        assert!(matches!(Hypercube::new(vec![f64::NAN], vec![0.0]), Err(SetError::NonFinite(0))));
        assert!(Hypercube::new(vec![0.0], vec![0.0, 1.0]).is_err());
    }

    fn arb_box(dim: usize) -> impl Strategy<Value = Hypercube> {
        prop::collection::vec((-5.0..5.0f64, 0.0..4.0f64), dim)
            .prop_map(|v| Hypercube::new(v.iter().map(|p| p.0).collect(), v.iter().map(|p| p.0 + p.1).collect()).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn intersect_algebra(a in arb_box(3), b in arb_box(3), c in arb_box(3)) {
            prop_assert_eq!(a.intersect(&b).unwrap(), b.intersect(&a).unwrap());
            prop_assert_eq!(a.intersect(&a).unwrap(), Some(a.clone()));
            let left = a.intersect(&b).unwrap().and_then(|ab| ab.intersect(&c).unwrap());
            let right = b.intersect(&c).unwrap().and_then(|bc| a.intersect(&bc).unwrap());
            prop_assert_eq!(left, right);
        }

        #[test]
        fn inflate_composes(a in arb_box(2), e1 in prop::collection::vec(0.0..1.0f64, 2), e2 in prop::collection::vec(0.0..1.0f64, 2)) {
            let sum: Vec<f64> = e1.iter().zip(&e2).map(|(x, y)| x + y).collect();
            let once = a.inflate(&sum).unwrap();
            let twice = a.inflate(&e1).unwrap().inflate(&e2).unwrap();
            prop_assert!(close(once.lo(), twice.lo()) && close(once.hi(), twice.hi()));
        }
    }
}
