//! Sparse linear maps between lattice cell spaces.

use std::fmt;
use std::io::{self, Write};

use nalgebra::DMatrix;
use sprs::{CsMat, TriMat};

use crate::lattice::CellKind;

/// The domain or codomain of a [`LinearMap`]: one kind of cell plus a number of
/// appended global (winding) components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct Space {
    pub kind: CellKind,
    pub cells: usize,
    pub global: usize,
}

impl Space {
    pub fn cells(kind: CellKind, cells: usize) -> Self {
        Self { kind, cells, global: 0 }
    }

    pub fn with_global(kind: CellKind, cells: usize, global: usize) -> Self {
        Self { kind, cells, global }
    }

    pub fn len(&self) -> usize {
        self.cells + self.global
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.global > 0 {
            write!(f, "{}[{}]+global[{}]", self.kind, self.cells, self.global)
        } else {
            write!(f, "{}[{}]", self.kind, self.cells)
        }
    }
}

/// A named sparse matrix mapping fields on `domain` to fields on `codomain`.
#[derive(Debug, Clone)]
pub struct LinearMap<T> {
    pub name: String,
    pub domain: Space,
    pub codomain: Space,
    pub matrix: CsMat<T>,
}

/// Integer-valued map (difference operators, dual embeddings, D-matrix).
pub type IntMap = LinearMap<i64>;
/// Real-valued map (projectors, Green's-function based maps).
pub type RealMap = LinearMap<f64>;

impl<T> LinearMap<T>
where
    T: Copy + Default + PartialEq + std::ops::Add<Output = T> + num_traits::Zero,
{
    /// Builds a map from (row, col, value) triplets; duplicates are summed and
    /// explicit zeros dropped.
    pub fn from_triplets(
        name: impl Into<String>,
        domain: Space,
        codomain: Space,
        triplets: impl IntoIterator<Item = (usize, usize, T)>,
    ) -> Self {
        let mut tri = TriMat::new((codomain.len(), domain.len()));
        for (r, c, v) in triplets {
            tri.add_triplet(r, c, v);
        }
        let summed: CsMat<T> = tri.to_csr();
        Self {
            name: name.into(),
            domain,
            codomain,
            matrix: prune(&summed),
        }
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }

    pub fn nnz(&self) -> usize {
        self.matrix.nnz()
    }

    /// Entry lookup; absent entries are zero.
    pub fn get(&self, row: usize, col: usize) -> T {
        self.matrix.get(row, col).copied().unwrap_or_default()
    }

    /// Row `r` as (column, value) pairs.
    pub fn row(&self, r: usize) -> Vec<(usize, T)> {
        self.matrix
            .outer_view(r)
            .map(|v| v.iter().map(|(c, &x)| (c, x)).collect())
            .unwrap_or_default()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, T)> {
        let mut out = Vec::with_capacity(self.nnz());
        for (r, row) in self.matrix.outer_iterator().enumerate() {
            for (c, &v) in row.iter() {
                out.push((r, c, v));
            }
        }
        out
    }

    pub fn transpose(&self, name: impl Into<String>) -> Self {
        let t: CsMat<T> = self.matrix.transpose_view().to_csr();
        Self {
            name: name.into(),
            domain: self.codomain,
            codomain: self.domain,
            matrix: t,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.data().iter().all(|v| *v == T::zero())
    }
}

impl<T> LinearMap<T>
where
    T: Copy
        + Default
        + PartialEq
        + num_traits::Zero
        + std::ops::Add<Output = T>
        + std::ops::Mul<Output = T>
        + std::ops::AddAssign,
{
    /// Matrix-vector product.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols(), "{}: input length mismatch", self.name);
        self.matrix
            .outer_iterator()
            .map(|row| {
                let mut acc = T::zero();
                for (c, &v) in row.iter() {
                    acc += v * x[c];
                }
                acc
            })
            .collect()
    }

    /// `self ∘ rhs`, i.e. the matrix product `self · rhs`.
    pub fn compose(&self, rhs: &Self, name: impl Into<String>) -> Self {
        assert_eq!(self.cols(), rhs.rows(), "composition shape mismatch");
        let mut trip = Vec::new();
        for (r, row) in self.matrix.outer_iterator().enumerate() {
            for (k, &a) in row.iter() {
                if let Some(rrow) = rhs.matrix.outer_view(k) {
                    for (c, &b) in rrow.iter() {
                        trip.push((r, c, a * b));
                    }
                }
            }
        }
        Self::from_triplets(name, rhs.domain, self.codomain, trip)
    }
}

impl IntMap {
    pub fn to_f64(&self) -> RealMap {
        RealMap {
            name: self.name.clone(),
            domain: self.domain,
            codomain: self.codomain,
            matrix: self.matrix.map(|&v| v as f64),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.to_f64().to_dense()
    }

    /// Row-wise sparse integer representation, as used by the exact rank routines.
    pub fn int_rows(&self) -> Vec<Vec<(usize, i64)>> {
        (0..self.rows()).map(|r| self.row(r)).collect()
    }
}

impl RealMap {
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows(), self.cols());
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    /// Sparse map from a dense matrix, dropping entries below `tol` in magnitude.
    pub fn from_dense(name: impl Into<String>, domain: Space, codomain: Space, dense: &DMatrix<f64>, tol: f64) -> Self {
        let mut trip = Vec::new();
        for c in 0..dense.ncols() {
            for r in 0..dense.nrows() {
                let v = dense[(r, c)];
                if v.abs() > tol {
                    trip.push((r, c, v));
                }
            }
        }
        Self::from_triplets(name, domain, codomain, trip)
    }
}

impl<T: fmt::Display + Copy> LinearMap<T> {
    /// Writes the map as coordinate triplets: one `#` header line naming the
    /// operator and the lattice, then `row,col,value` lines in row-major order.
    pub fn write_csv<W: Write>(&self, lattice_label: &str, out: &mut W) -> io::Result<()> {
        writeln!(
            out,
            "# op={} lattice={} rows={} cols={} domain={} codomain={}",
            self.name,
            lattice_label,
            self.matrix.rows(),
            self.matrix.cols(),
            self.domain,
            self.codomain
        )?;
        for (r, row) in self.matrix.outer_iterator().enumerate() {
            for (c, v) in row.iter() {
                writeln!(out, "{r},{c},{v}")?;
            }
        }
        Ok(())
    }
}

fn prune<T: Copy + PartialEq + num_traits::Zero>(m: &CsMat<T>) -> CsMat<T> {
    let mut indptr = Vec::with_capacity(m.rows() + 1);
    let mut indices = Vec::new();
    let mut data = Vec::new();
    indptr.push(0);
    for row in m.outer_iterator() {
        for (c, &v) in row.iter() {
            if v != T::zero() {
                indices.push(c);
                data.push(v);
            }
        }
        indptr.push(indices.len());
    }
    CsMat::new((m.rows(), m.cols()), indptr, indices, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(n: usize) -> Space {
        Space::cells(CellKind::Site, n)
    }

    #[test]
    fn duplicates_are_summed_and_zeros_dropped() {
        let m = IntMap::from_triplets("t", sp(2), sp(2), [(0, 0, 1), (0, 0, 2), (1, 1, 3), (1, 1, -3)]);
        assert_eq!(m.get(0, 0), 3);
        assert_eq!(m.nnz(), 1);
    }

    #[test]
    fn compose_matches_dense_product() {
        let a = IntMap::from_triplets("a", sp(3), sp(2), [(0, 0, 1), (0, 2, -1), (1, 1, 2)]);
        let b = IntMap::from_triplets("b", sp(2), sp(3), [(0, 0, 1), (1, 1, 1), (2, 0, 4)]);
        let ab = a.compose(&b, "ab");
        assert_eq!(ab.to_dense(), a.to_dense() * b.to_dense());
    }

    #[test]
    fn csv_has_single_header_line() {
        let a = IntMap::from_triplets("grad", sp(2), sp(1), [(0, 0, -1), (0, 1, 1)]);
        let mut buf = Vec::new();
        a.write_csv("2d-open-N1", &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert!(lines[0].starts_with("# op=grad"));
        assert_eq!(&lines[1..], ["0,0,-1", "0,1,1"]);
    }
}
