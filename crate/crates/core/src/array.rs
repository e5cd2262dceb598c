//! Dense row-major n-dimensional arrays and broadcasting.
//!
//! All stride and index arithmetic lives in this module. Every operation
//! returns a freshly allocated [`Array`]; there are no views.

use std::fmt;

use crate::error::{Error, Result};
use crate::precision::{default_precision, Precision};

#[derive(Clone, PartialEq)]
pub struct Array {
    shape: Vec<usize>,
    data: Vec<f64>,
    precision: Precision,
}

impl Array {
    /// Builds an array at the thread's default precision.
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self> {
        Self::with_precision(shape, data, default_precision())
    }

    pub fn with_precision(
        shape: impl Into<Vec<usize>>,
        mut data: Vec<f64>,
        precision: Precision,
    ) -> Result<Self> {
        let shape = shape.into();
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::ShapeMismatch {
                shape,
                len: data.len(),
            });
        }
        if precision == Precision::F32 {
            data.iter_mut().for_each(|v| *v = precision.round(*v));
        }
        Ok(Array {
            shape,
            data,
            precision,
        })
    }

    /// One-dimensional array.
    pub fn from_vec(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::new(vec![n], data).expect("1-d shape always matches")
    }

    /// Zero-dimensional array holding one value.
    pub fn scalar(value: f64) -> Self {
        Self::new(Vec::new(), vec![value]).expect("scalar shape always matches")
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: f64) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Self::new(shape, vec![value; n]).expect("full shape always matches")
    }

    /// Used by operations: `data` must already match `shape`.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>, precision: Precision) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self::with_precision(shape, data, precision).expect("caller guarantees shape")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The single element of a one-element array.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(Error::NotScalar {
                shape: self.shape.clone(),
            })
        }
    }

    pub fn to_precision(&self, precision: Precision) -> Array {
        Array::from_parts(self.shape.clone(), self.data.clone(), precision)
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Array> {
        Array::with_precision(shape, self.data.clone(), self.precision)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Array {
        Array::from_parts(
            self.shape.clone(),
            self.data.iter().map(|&v| f(v)).collect(),
            self.precision,
        )
    }

    /// Element-wise combination of two equally shaped arrays.
    pub fn zip_map(&self, other: &Array, f: impl Fn(f64, f64) -> f64) -> Result<Array> {
        if self.shape != other.shape {
            return Err(Error::IncompatibleShapes {
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(Array::from_parts(
            self.shape.clone(),
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            self.precision.widest(other.precision),
        ))
    }

    /// Element-wise combination under broadcasting.
    pub fn broadcast_zip(&self, other: &Array, f: impl Fn(f64, f64) -> f64) -> Result<Array> {
        if self.shape == other.shape {
            return self.zip_map(other, f);
        }
        let shape = broadcast_shapes(&self.shape, &other.shape)?;
        let ia = source_indices(&self.shape, &shape);
        let ib = source_indices(&other.shape, &shape);
        let data = ia
            .iter()
            .zip(&ib)
            .map(|(&i, &j)| f(self.data[i], other.data[j]))
            .collect();
        Ok(Array::from_parts(
            shape,
            data,
            self.precision.widest(other.precision),
        ))
    }

    /// Copies the array out to `shape` under broadcasting rules.
    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Array> {
        if broadcast_shapes(&self.shape, shape)? != shape {
            return Err(Error::IncompatibleShapes {
                left: self.shape.clone(),
                right: shape.to_vec(),
            });
        }
        let data = source_indices(&self.shape, shape)
            .into_iter()
            .map(|i| self.data[i])
            .collect();
        Ok(Array::from_parts(shape.to_vec(), data, self.precision))
    }

    /// Sums over every axis that broadcasting added or stretched so the
    /// result has exactly `target` shape. Inverse of [`Array::broadcast_to`]
    /// for gradients.
    pub fn reduce_to_shape(&self, target: &[usize]) -> Result<Array> {
        if self.shape == target {
            return Ok(self.clone());
        }
        if broadcast_shapes(target, &self.shape)? != self.shape {
            return Err(Error::IncompatibleShapes {
                left: self.shape.clone(),
                right: target.to_vec(),
            });
        }
        let mut out = vec![0.0; target.iter().product()];
        for (&v, i) in self.data.iter().zip(source_indices(target, &self.shape)) {
            out[i] += v;
        }
        Ok(Array::from_parts(target.to_vec(), out, self.precision))
    }

    pub fn scale(&self, factor: f64) -> Array {
        self.map(|v| v * factor)
    }

    /// `self + other` for equal shapes, keeping `self`'s precision.
    pub(crate) fn add_assign(&mut self, other: &Array) {
        debug_assert_eq!(self.shape, other.shape);
        let p = self.precision;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = p.round(*a + b);
        }
    }

    pub(crate) fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

impl fmt::Debug for Array {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Array({:?}, {}, {:?})",
            self.shape, self.precision, self.data
        )
    }
}

impl From<f64> for Array {
    fn from(v: f64) -> Self {
        Array::scalar(v)
    }
}

impl From<Vec<f64>> for Array {
    fn from(v: Vec<f64>) -> Self {
        Array::from_vec(v)
    }
}

/// Result shape of an element-wise operation under trailing-axis alignment.
/// Extents of 1 stretch; missing leading axes stretch.
pub fn broadcast_shapes(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for k in 0..rank {
        let da = if k < rank - a.len() {
            1
        } else {
            a[k - (rank - a.len())]
        };
        let db = if k < rank - b.len() {
            1
        } else {
            b[k - (rank - b.len())]
        };
        out[k] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(Error::IncompatibleShapes {
                    left: a.to_vec(),
                    right: b.to_vec(),
                })
            }
        };
    }
    Ok(out)
}

/// For every flat index of `out`, the flat index of `src` it reads under
/// broadcasting. `src` must broadcast to `out`.
fn source_indices(src: &[usize], out: &[usize]) -> Vec<usize> {
    let total: usize = out.iter().product();
    if src.iter().product::<usize>() == 1 {
        return vec![0; total];
    }
    let offset = out.len() - src.len();
    // Row-major strides of `src`, zeroed on stretched axes, aligned to `out`.
    let mut strides = vec![0usize; out.len()];
    let mut acc = 1;
    for k in (0..src.len()).rev() {
        if src[k] != 1 {
            strides[k + offset] = acc;
        }
        acc *= src[k];
    }
    let mut indices = Vec::with_capacity(total);
    let mut counter = vec![0usize; out.len()];
    let mut pos = 0usize;
    for _ in 0..total {
        indices.push(pos);
        for axis in (0..out.len()).rev() {
            counter[axis] += 1;
            pos += strides[axis];
            if counter[axis] < out[axis] {
                break;
            }
            pos -= strides[axis] * counter[axis];
            counter[axis] = 0;
        }
    }
    indices
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_equal_and_stretch() {
        assert_eq!(broadcast_shapes(&[3], &[3]).unwrap(), vec![3]);
        assert_eq!(broadcast_shapes(&[1], &[5]).unwrap(), vec![5]);
        assert_eq!(broadcast_shapes(&[7, 1], &[7, 4]).unwrap(), vec![7, 4]);
        assert_eq!(broadcast_shapes(&[], &[2, 3]).unwrap(), vec![2, 3]);
    }

    #[test]
    fn broadcast_rejects_mismatch() {
        assert!(matches!(
            broadcast_shapes(&[3], &[4]),
            Err(Error::IncompatibleShapes { .. })
        ));
        assert!(broadcast_shapes(&[2, 3], &[3, 3]).is_err());
    }

    #[test]
    fn reduce_leading_axis() {
        let g = Array::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let r = g.reduce_to_shape(&[2]).unwrap();
        assert_eq!(r.shape(), &[2]);
        assert_eq!(r.data(), &[4.0, 6.0]);
    }

    #[test]
    fn reduce_identity() {
        let g = Array::new(vec![1], vec![5.0]).unwrap();
        assert_eq!(g.reduce_to_shape(&[1]).unwrap().data(), &[5.0]);
    }

    #[test]
    fn reduce_stretched_axis_gives_row_sums() {
        let data: Vec<f64> = (0..28).map(|v| v as f64).collect();
        let g = Array::new(vec![7, 4], data.clone()).unwrap();
        let r = g.reduce_to_shape(&[7, 1]).unwrap();
        assert_eq!(r.shape(), &[7, 1]);
        for row in 0..7 {
            let expect: f64 = data[row * 4..row * 4 + 4].iter().sum();
            assert_eq!(r.data()[row], expect);
        }
    }

    #[test]
    fn reduce_rejects_incompatible_target() {
        let g = Array::zeros(vec![7, 4]);
        assert!(g.reduce_to_shape(&[3]).is_err());
        assert!(g.reduce_to_shape(&[7, 4, 1]).is_err());
    }

    #[test]
    fn scalar_to_vector_reduction_is_total_sum() {
        let g = Array::from_vec(vec![1.0, 2.0, 3.0]);
        let r = g.reduce_to_shape(&[]).unwrap();
        assert_eq!(r.shape(), &[] as &[usize]);
        assert_eq!(r.data(), &[6.0]);
    }

    #[test]
    fn broadcast_zip_column_against_matrix() {
        let col = Array::new(vec![2, 1], vec![10.0, 20.0]).unwrap();
        let m = Array::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let s = col.broadcast_zip(&m, |a, b| a + b).unwrap();
        assert_eq!(s.shape(), &[2, 3]);
        assert_eq!(s.data(), &[11.0, 12.0, 13.0, 24.0, 25.0, 26.0]);
    }

    #[test]
    fn shape_must_match_data() {
        assert!(matches!(
            Array::new(vec![2, 2], vec![1.0]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn f32_arrays_round_on_construction() {
        let a = Array::with_precision(vec![1], vec![0.1], Precision::F32).unwrap();
        assert_eq!(a.data()[0], 0.1f32 as f64);
        let b = Array::with_precision(vec![1], vec![0.1], Precision::F64).unwrap();
        assert_eq!(b.data()[0], 0.1);
    }

    #[test]
    fn mixed_precision_promotes() {
        let a = Array::with_precision(vec![1], vec![1.0], Precision::F32).unwrap();
        let b = Array::with_precision(vec![1], vec![1.0], Precision::F64).unwrap();
        assert_eq!(
            a.zip_map(&b, |x, y| x + y).unwrap().precision(),
            Precision::F64
        );
    }
}
