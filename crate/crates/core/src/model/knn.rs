use super::ModelError;

/// Exhaustive Euclidean k-nearest-neighbor search.
///
/// Neighbors come back ordered by distance; equal distances are ordered by
/// ascending reference row index.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnIndex {
    points: Vec<Vec<f64>>,
    k: usize,
}

impl KnnIndex {
    pub fn new(points: Vec<Vec<f64>>, k: usize) -> Result<Self, ModelError> {
        if k == 0 || k > points.len() {
            return Err(ModelError::TooFewNeighbors {
                k,
                available: points.len(),
            });
        }
        let width = points[0].len();
        if let Some(p) = points.iter().find(|p| p.len() != width) {
            return Err(ModelError::DimensionMismatch {
                expected: width,
                found: p.len(),
            });
        }
        Ok(Self { points, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn query(&self, point: &[f64]) -> Result<Vec<usize>, ModelError> {
        self.nearest(point, self.k, None)
    }

    /// The k nearest rows other than `skip`.
    pub fn query_excluding(&self, point: &[f64], skip: usize) -> Result<Vec<usize>, ModelError> {
        if self.k >= self.points.len() {
            return Err(ModelError::TooFewNeighbors {
                k: self.k,
                available: self.points.len() - 1,
            });
        }
        self.nearest(point, self.k, Some(skip))
    }

    fn nearest(
        &self,
        point: &[f64],
        k: usize,
        skip: Option<usize>,
    ) -> Result<Vec<usize>, ModelError> {
        let width = self.points[0].len();
        if point.len() != width {
            return Err(ModelError::DimensionMismatch {
                expected: width,
                found: point.len(),
            });
        }
        let mut dist: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != skip)
            .map(|(i, p)| {
                let d = p
                    .iter()
                    .zip(point)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
                (d, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, cmp);
            dist.truncate(k);
        }
        dist.sort_unstable_by(cmp);
        Ok(dist.into_iter().map(|(_, i)| i).collect())
    }
}
