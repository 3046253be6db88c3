//! Datasets, point identity, the metric, and centroids.

use std::io::Read;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// An immutable `N x D` matrix of finite coordinates, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T = f64> {
    dim: usize,
    coords: Vec<T>,
}

impl<T: Scalar> Dataset<T> {
    /// Builds a dataset from rows. Rejects empty input, zero dimensions, ragged
    /// rows and non-finite values.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::usage("dataset must contain at least one point"))?;
        let dim = first.as_ref().len();
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::usage(format!("row {i} has {} columns, expected {dim}", row.len())));
            }
            coords.extend_from_slice(row);
        }
        Self::from_flat(dim, coords)
    }

    /// Builds a dataset from a row-major coordinate buffer.
    pub fn from_flat(dim: usize, coords: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::usage("dataset dimension must be at least 1"));
        }
        if coords.is_empty() {
            return Err(Error::usage("dataset must contain at least one point"));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::usage(format!("{} coordinates do not divide into rows of {dim}", coords.len())));
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::usage(format!("non-finite coordinate in row {}", pos / dim)));
        }
        Ok(Dataset { dim, coords })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    /// Always false: a dataset holds at least one point.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn point(&self, index: usize) -> &[T] {
        &self.coords[index * self.dim..(index + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    /// Resolves a point reference, checking the index.
    pub fn resolve(&self, point: PointRef) -> Result<&[T]> {
        if point.index < self.len() {
            Ok(self.point(point.index))
        } else {
            Err(Error::usage(format!("point index {} out of range for {} points", point.index, self.len())))
        }
    }
}

/// Which side of a query/reference computation a point belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Query,
    Reference,
}

/// Stable identity of a point: the dataset it comes from and its row index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PointRef {
    pub role: Role,
    pub index: usize,
}

impl PointRef {
    pub fn query(index: usize) -> Self {
        PointRef { role: Role::Query, index }
    }

    pub fn reference(index: usize) -> Self {
        PointRef { role: Role::Reference, index }
    }
}

/// A distance function on coordinate slices of equal length.
pub trait Metric<T: Scalar>: Send + Sync {
    fn distance(&self, a: &[T], b: &[T]) -> T;
}

/// The L2 metric. The only metric the node bounds are derived for.
#[derive(Clone, Copy, Debug, Default)]
pub struct Euclidean;

impl<T: Scalar> Metric<T> for Euclidean {
    #[inline]
    fn distance(&self, a: &[T], b: &[T]) -> T {
        euclidean(a, b)
    }
}

/// Euclidean distance without a dimension check. Every distance in the crate
/// goes through here so that tree searches and oracles agree bit-for-bit.
#[inline]
pub(crate) fn euclidean<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut sum = T::zero();
    for (x, y) in a.iter().zip(b) {
        let d = *x - *y;
        sum = sum + d * d;
    }
    sum.sqrt()
}

/// Euclidean distance between two points of equal dimension.
pub fn distance<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::usage(format!("dimension mismatch: {} vs {}", a.len(), b.len())));
    }
    Ok(euclidean(a, b))
}

/// Coordinate-wise arithmetic mean of a nonempty set of points.
pub fn centroid<T: Scalar, P: AsRef<[T]>>(points: &[P]) -> Result<Vec<T>> {
    let first = points.first().ok_or_else(|| Error::usage("centroid of an empty set"))?;
    let dim = first.as_ref().len();
    let mut sum = vec![T::zero(); dim];
    for p in points {
        let p = p.as_ref();
        if p.len() != dim {
            return Err(Error::usage(format!("dimension mismatch: {} vs {dim}", p.len())));
        }
        for (s, c) in sum.iter_mut().zip(p) {
            *s = *s + *c;
        }
    }
    let n = T::from_usize(points.len()).expect("point count fits the scalar type");
    Ok(sum.into_iter().map(|s| s / n).collect())
}

/// Mean of the dataset rows named by `indices`; `indices` must be nonempty.
pub(crate) fn centroid_of<T: Scalar>(data: &Dataset<T>, indices: &[usize]) -> Vec<T> {
    let mut sum = vec![T::zero(); data.dim()];
    for &i in indices {
        for (s, c) in sum.iter_mut().zip(data.point(i)) {
            *s = *s + *c;
        }
    }
    let n = T::from_usize(indices.len()).expect("point count fits the scalar type");
    sum.into_iter().map(|s| s / n).collect()
}

/// Reads a CSV dataset: one point per record, comma separated decimal reals.
///
/// A single leading header record is skipped when any of its fields is not a
/// number. The dimension is fixed by the first data record.
pub fn load_dataset<T: Scalar, R: Read>(source: R) -> Result<Dataset<T>> {
    let mut reader =
        csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(source);

    let mut coords: Vec<T> = Vec::new();
    let mut dim: Option<usize> = None;
    let mut first_record = true;
    let mut record = csv::StringRecord::new();
    loop {
        let more = reader.read_record(&mut record).map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Parse { line, message: e.to_string() }
        })?;
        if !more {
            break;
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: Vec<Option<T>> = record.iter().map(|f| f.parse::<T>().ok()).collect();
        if first_record {
            first_record = false;
            if parsed.iter().any(Option::is_none) {
                continue;
            }
        }
        let expected = *dim.get_or_insert(parsed.len());
        if parsed.len() != expected {
            return Err(Error::Parse { line, message: format!("expected {expected} fields, found {}", parsed.len()) });
        }
        for (field, value) in record.iter().zip(parsed) {
            match value {
                Some(v) if v.is_finite() => coords.push(v),
                Some(_) => {
                    return Err(Error::Parse { line, message: format!("non-finite value {field:?}") });
                }
                None => {
                    return Err(Error::Parse { line, message: format!("non-numeric field {field:?}") });
                }
            }
        }
    }
    match dim {
        Some(dim) => Dataset::from_flat(dim, coords),
        None => Err(Error::Parse { line: 1, message: "input contains no data records".into() }),
    }
}
