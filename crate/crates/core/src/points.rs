use crate::error::{check_dim, Error, Result};

/// A row-major set of points in R^d.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    data: Vec<f64>,
    dim: usize,
}

impl Points {
    pub fn empty(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput(
                "point dimension must be at least 1".into(),
            ));
        }
        Ok(Self {
            data: Vec::new(),
            dim,
        })
    }

    pub fn from_flat(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput(
                "point dimension must be at least 1".into(),
            ));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidInput(format!(
                "{} coordinates cannot be split into points of dimension {dim}",
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                index,
                value: data[index],
            });
        }
        Ok(Self { data, dim })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| Error::InvalidInput("no rows given".into()))?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            check_dim(dim, row.as_ref().len())?;
            data.extend_from_slice(row.as_ref());
        }
        Self::from_flat(data, dim)
    }

    /// One-dimensional points from scalars.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::from_flat(values.to_vec(), 1)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn push(&mut self, point: &[f64]) -> Result<()> {
        check_dim(self.dim, point.len())?;
        self.data.extend_from_slice(point);
        Ok(())
    }

    pub fn extend_from(&mut self, other: &Points) -> Result<()> {
        check_dim(self.dim, other.dim)?;
        self.data.extend_from_slice(&other.data);
        Ok(())
    }

    /// Keeps the rows for which `keep` is true.
    pub(crate) fn retain_rows(&mut self, keep: &[bool]) {
        let dim = self.dim;
        let mut out = Vec::with_capacity(self.data.len());
        for (row, &k) in self.data.chunks_exact(dim).zip(keep) {
            if k {
                out.extend_from_slice(row);
            }
        }
        self.data = out;
    }

    pub fn translate(&mut self, offset: &[f64]) -> Result<()> {
        check_dim(self.dim, offset.len())?;
        for row in self.data.chunks_exact_mut(self.dim) {
            for (x, o) in row.iter_mut().zip(offset) {
                *x += o;
            }
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_round_trip() {
        let p = Points::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.row(1), &[3.0, 4.0]);
        assert_eq!(p.rows().count(), 2);
    }

    #[test]
    fn rejects_ragged_and_non_finite() {
        assert!(Points::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        assert!(Points::from_flat(vec![1.0, f64::NAN], 1).is_err());
        assert!(Points::from_flat(vec![1.0, 2.0, 3.0], 2).is_err());
        assert!(Points::empty(0).is_err());
    }

    #[test]
    fn retain_drops_rows() {
        let mut p = Points::from_scalars(&[1.0, 2.0, 3.0]).unwrap();
        p.retain_rows(&[true, false, true]);
        assert_eq!(p.as_flat(), &[1.0, 3.0]);
    }
}
