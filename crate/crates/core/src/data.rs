use alloc::vec::Vec;
use nalgebra::DMatrix;

/// Dense row-major sample matrix: one row per sample, one column per
/// coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    /// Panics if `data.len() != rows * cols`.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "sample matrix shape mismatch");
        SampleMatrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        SampleMatrix { rows, cols, data: alloc::vec![0.0; rows * cols] }
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            data.extend(m.row(i).iter().copied());
        }
        SampleMatrix { rows: m.nrows(), cols: m.ncols(), data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Index of the first row holding a NaN or infinity.
    pub fn first_non_finite_row(&self) -> Option<usize> {
        if self.cols == 0 {
            return None;
        }
        self.data.iter().position(|x| !x.is_finite()).map(|p| p / self.cols)
    }

    pub fn select_rows(&self, idx: &[usize]) -> SampleMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        SampleMatrix { rows: idx.len(), cols: self.cols, data }
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest and second-nearest rows of `centers` to `x`, lower index winning
/// ties. With a single center both entries are 0.
pub fn nearest_two(x: &[f64], centers: &SampleMatrix) -> (usize, usize) {
    let (mut b0, mut d0) = (0usize, f64::INFINITY);
    let (mut b1, mut d1) = (0usize, f64::INFINITY);
    for c in 0..centers.rows() {
        let d = sq_dist(x, centers.row(c));
        if d < d0 {
            b1 = b0;
            d1 = d0;
            b0 = c;
            d0 = d;
        } else if d < d1 {
            b1 = c;
            d1 = d;
        }
    }
    if centers.rows() == 1 {
        b1 = b0;
    }
    (b0, b1)
}
