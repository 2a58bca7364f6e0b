//! Plain containers for scattered observations and gridded fields.

/// A set of `d`-dimensional points with one scalar value per point.
///
/// Coordinates are stored flat, point-major: point `i` occupies
/// `coords[i * dim..(i + 1) * dim]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    pub dim: usize,
    pub coords: Vec<f64>,
    pub values: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>, values: Vec<f64>) -> Self {
        assert!(dim > 0, "point dimension must be positive");
        assert_eq!(coords.len(), values.len() * dim, "coords/values length mismatch");
        PointSet { dim, coords, values }
    }

    pub fn empty(dim: usize) -> Self {
        PointSet::new(dim, Vec::new(), Vec::new())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn push(&mut self, point: &[f64], value: f64) {
        assert_eq!(point.len(), self.dim);
        self.coords.extend_from_slice(point);
        self.values.push(value);
    }

    /// Subset in the order given by `indices`.
    pub fn select(&self, indices: &[usize]) -> PointSet {
        let mut out = PointSet::empty(self.dim);
        for &i in indices {
            out.push(self.point(i), self.values[i]);
        }
        out
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }
}

/// A scalar field sampled on a regular axis-aligned grid (row-major, last axis fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct GriddedField {
    pub origin: Vec<f64>,
    pub spacing: f64,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl GriddedField {
    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Coordinates of every node, in storage order.
    pub fn node_coords(&self) -> Vec<f64> {
        let n: usize = self.shape.iter().product();
        let mut out = Vec::with_capacity(n * self.dim());
        let mut idx = vec![0usize; self.dim()];
        for _ in 0..n {
            for (d, &i) in idx.iter().enumerate() {
                out.push(self.origin[d] + i as f64 * self.spacing);
            }
            increment(&mut idx, &self.shape);
        }
        out
    }

    /// Value at the node nearest to `point`, clamping to the grid edge.
    pub fn nearest(&self, point: &[f64]) -> f64 {
        let mut flat = 0;
        for d in 0..self.dim() {
            let rel = ((point[d] - self.origin[d]) / self.spacing).round();
            let i = rel.clamp(0.0, (self.shape[d] - 1) as f64) as usize;
            flat = flat * self.shape[d] + i;
        }
        self.values[flat]
    }
}

/// Row-major multi-index increment; wraps to zero after the last index.
pub(crate) fn increment(idx: &mut [usize], shape: &[usize]) {
    for d in (0..idx.len()).rev() {
        idx[d] += 1;
        if idx[d] < shape[d] {
            return;
        }
        idx[d] = 0;
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
