//! Row-major sample matrix shared by the learners.

use crate::error::{Error, Result};

/// An `n × d` matrix of observations, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl Dataset {
    /// Wraps a row-major buffer. `values.len()` must equal `n * d`.
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if values.len() != n * d {
            return Err(Error::InvalidArgument(format!(
                "buffer of {} values cannot form a {n}x{d} matrix",
                values.len()
            )));
        }
        Ok(Self { n, d, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let d = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| Error::InvalidArgument("no rows".into()))?;
        let mut values = Vec::with_capacity(rows.len() * d);
        for r in rows {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), d, values)
    }

    /// Stacks several datasets of equal width.
    pub fn concat<'a, I>(parts: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Dataset>,
    {
        let mut out: Option<Dataset> = None;
        for p in parts {
            match out.as_mut() {
                None => out = Some(p.clone()),
                Some(acc) => {
                    if acc.d != p.d {
                        return Err(Error::DimensionMismatch {
                            expected: acc.d,
                            actual: p.d,
                        });
                    }
                    acc.values.extend_from_slice(&p.values);
                    acc.n += p.n;
                }
            }
        }
        out.ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.d..(t + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.d)
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[j])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Column means.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for r in self.rows() {
            for (acc, v) in m.iter_mut().zip(r) {
                *acc += v;
            }
        }
        let n = self.n as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    /// Population (1/n) covariance as a dense `d × d` matrix.
    pub fn covariance(&self) -> nalgebra::DMatrix<f64> {
        let m = self.mean();
        let mut c = nalgebra::DMatrix::zeros(self.d, self.d);
        for r in self.rows() {
            for a in 0..self.d {
                let da = r[a] - m[a];
                for b in 0..=a {
                    c[(a, b)] += da * (r[b] - m[b]);
                }
            }
        }
        let n = self.n as f64;
        for a in 0..self.d {
            for b in 0..=a {
                let v = c[(a, b)] / n;
                c[(a, b)] = v;
                c[(b, a)] = v;
            }
        }
        c
    }
}
