//! Lattice Green's functions and Poisson solvers.
//!
//! Site kernels invert `−∇²` on the subspace of zero-sum fields: `G` is fixed
//! by `Σ_x G(x,y) = 0`, so that `−∇²G(·,y) = δ(·,y) − 1/V`. Plaquette kernels
//! invert the Hodge operator `C Cᵀ + D_cᵀ D_c` on plaquettes, which in two
//! dimensions with open boundaries is the constant-diagonal plaquette Laplacian.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{rat, RatMatrix};
use crate::lattice::{CellKind, FieldVector, Lattice};

/// Site count above which the open-boundary site kernel is built column by
/// column with conjugate gradients instead of a dense factorisation.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GreensKind {
    SitePbc,
    SiteObc,
    PlaqObc,
    Modified,
}

/// How the kernel was pinned down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Pseudo-inverse with `Σ_x G(x,y) = 0`.
    ZeroSum,
    /// Pseudo-inverse with zero sum over all components, including global ones.
    ZeroSumAllComponents,
    /// True inverse of a nonsingular operator.
    Inverse,
}

#[derive(Debug, Clone)]
pub struct GreensTable {
    pub kind: GreensKind,
    pub values: DMatrix<f64>,
    pub normalization: Normalization,
    /// Number of trailing global-loop rows/columns (modified kernel only).
    pub global: usize,
}

impl GreensTable {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[(x, y)]
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (&self.values * DVector::from_column_slice(v)).as_slice().to_vec()
    }

    pub fn max_asymmetry(&self) -> f64 {
        (&self.values - self.values.transpose()).amax()
    }
}

/// Site Green's function, cached on the lattice.
pub fn greens_sites(lat: &Lattice) -> Arc<GreensTable> {
    lat.cache_site_greens()
        .get_or_init(|| {
            Arc::new(if lat.is_periodic() {
                site_pbc(lat)
            } else if lat.n_sites() <= DENSE_LIMIT {
                site_obc_dense(lat)
            } else {
                site_obc_cg(lat)
            })
        })
        .clone()
}

/// Inverse of the constant-diagonal plaquette Laplacian (open boundaries).
pub fn greens_plaquettes_obc(lat: &Lattice) -> Result<Arc<GreensTable>> {
    if lat.is_periodic() {
        return Err(Error::RequiresOpen("greens_plaquettes_obc"));
    }
    Ok(lat
        .cache_plaq_greens()
        .get_or_init(|| {
            let k = -lat.plaq_laplacian_map().to_dense();
            Arc::new(GreensTable {
                kind: GreensKind::PlaqObc,
                values: spd_inverse(k),
                normalization: Normalization::Inverse,
                global: 0,
            })
        })
        .clone())
}

/// Fourier sum `G(r) = N^-d Σ_{k≠0} cos(k·r) / Σ_i 2(1 − cos k_i)` for every
/// displacement `r`, indexed like the sites.
pub fn periodic_displacement_table(dim: usize, n: usize) -> Vec<f64> {
    let vol = n.pow(dim as u32);
    let coords = |idx: usize| -> [usize; 3] { [idx % n, (idx / n) % n, idx / (n * n)] };
    let cosines: Vec<f64> = (0..n).map(|j| (2.0 * PI * j as f64 / n as f64).cos()).collect();
    let denom: Vec<f64> = (0..vol)
        .map(|k| {
            let kc = coords(k);
            (0..dim).map(|i| 2.0 * (1.0 - cosines[kc[i]])).sum()
        })
        .collect();
    (0..vol)
        .into_par_iter()
        .map(|r| {
            let rc = coords(r);
            let mut acc = 0.0;
            for (k, d) in denom.iter().enumerate().skip(1) {
                let kc = coords(k);
                let phase = (0..dim).map(|i| kc[i] * rc[i]).sum::<usize>() % n;
                acc += cosines[phase] / d;
            }
            acc / vol as f64
        })
        .collect()
}

fn site_pbc(lat: &Lattice) -> GreensTable {
    let table = periodic_displacement_table(lat.dim(), lat.extent());
    GreensTable {
        kind: GreensKind::SitePbc,
        values: periodic_kernel(lat, CellKind::Site, &table),
        normalization: Normalization::ZeroSum,
        global: 0,
    }
}

/// Expands a displacement table into a dense translation-invariant kernel
/// over the cells of one orientation block (sites, or one plaquette normal).
fn periodic_kernel(lat: &Lattice, kind: CellKind, table: &[f64]) -> DMatrix<f64> {
    let n = lat.extent() as isize;
    let cells: Vec<_> = lat.cells(kind).collect();
    let len = cells.len();
    let mut m = DMatrix::zeros(len, len);
    for (a, ca) in cells.iter().enumerate() {
        for (b, cb) in cells.iter().enumerate() {
            if ca.orient != cb.orient {
                continue;
            }
            let mut r = 0isize;
            let mut stride = 1isize;
            for axis in 0..lat.dim() {
                let d = (ca.coords[axis] as isize - cb.coords[axis] as isize).rem_euclid(n);
                r += d * stride;
                stride *= n;
            }
            m[(a, b)] = table[r as usize];
        }
    }
    m
}

fn site_obc_dense(lat: &Lattice) -> GreensTable {
    let v = lat.n_sites();
    let lap = -lat.site_laplacian_map().to_dense();
    let j = DMatrix::from_element(v, v, 1.0 / v as f64);
    let values = spd_inverse(lap + &j) - j;
    GreensTable {
        kind: GreensKind::SiteObc,
        values: symmetrize(values),
        normalization: Normalization::ZeroSum,
        global: 0,
    }
}

fn site_obc_cg(lat: &Lattice) -> GreensTable {
    let v = lat.n_sites();
    let lap = lat.site_laplacian_map().to_f64();
    let cols: Vec<Vec<f64>> = (0..v)
        .into_par_iter()
        .map(|y| {
            let mut rhs = vec![-1.0 / v as f64; v];
            rhs[y] += 1.0;
            deflated_cg(|x| lap.apply(x).into_iter().map(|t| -t).collect(), &rhs, 1e-13, 10 * v)
        })
        .collect();
    let mut values = DMatrix::zeros(v, v);
    for (y, col) in cols.iter().enumerate() {
        values.set_column(y, &DVector::from_column_slice(col));
    }
    GreensTable {
        kind: GreensKind::SiteObc,
        values: symmetrize(values),
        normalization: Normalization::ZeroSum,
        global: 0,
    }
}

/// Conjugate gradients for a positive semidefinite operator whose kernel is
/// the constant vector; iterates stay in the zero-mean subspace.
pub(crate) fn deflated_cg(op: impl Fn(&[f64]) -> Vec<f64>, rhs: &[f64], tol: f64, max_iter: usize) -> Vec<f64> {
    let n = rhs.len();
    let demean = |v: &mut [f64]| {
        let m = v.iter().sum::<f64>() / n as f64;
        v.iter_mut().for_each(|x| *x -= m);
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut r = rhs.to_vec();
    demean(&mut r);
    let mut x = vec![0.0; n];
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let stop = tol * tol * rr.max(f64::MIN_POSITIVE);
    for _ in 0..max_iter {
        if rr <= stop {
            break;
        }
        let ap = op(&p);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        demean(&mut r);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    demean(&mut x);
    x
}

pub(crate) fn spd_inverse(m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return m;
    }
    let inv = match Cholesky::new(m.clone()) {
        Some(c) => c.inverse(),
        None => m.try_inverse().expect("operator expected to be nonsingular"),
    };
    symmetrize(inv)
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Projector onto the kernel of the plaquette Hodge operator: constants on each
/// normal block for periodic lattices, nothing for open ones.
fn harmonic_projector(lat: &Lattice) -> DMatrix<f64> {
    let np = lat.n_plaqs();
    let mut p = DMatrix::zeros(np, np);
    if !lat.is_periodic() {
        return p;
    }
    let cells: Vec<_> = lat.cells(CellKind::Plaquette).collect();
    for (a, ca) in cells.iter().enumerate() {
        let len = lat.block_len(CellKind::Plaquette, ca.orient) as f64;
        for (b, cb) in cells.iter().enumerate() {
            if ca.orient == cb.orient {
                p[(a, b)] = 1.0 / len;
            }
        }
    }
    p
}

/// The Hodge operator `K = C Cᵀ + D_cᵀ D_c` on plaquettes as an integer matrix.
pub fn hodge_operator(lat: &Lattice) -> crate::linmap::IntMap {
    let c = lat.curl_link_to_plaq_map();
    let r = lat.curl_plaq_to_link_map();
    let mut k = c.compose(r, "hodge");
    if lat.dim() == 3 {
        let dc = lat.cube_divergence_map();
        let dd = dc.transpose("cube_divergence_t").compose(dc, "dd");
        let trip = k.triplets().into_iter().chain(dd.triplets());
        k = crate::linmap::IntMap::from_triplets("hodge", k.domain, k.codomain, trip);
    }
    k
}

/// Pseudo-inverse of the plaquette Hodge operator (cached).
pub fn hodge_pinv(lat: &Lattice) -> Arc<DMatrix<f64>> {
    lat.cache_plaq_kernel()
        .get_or_init(|| {
            let k = hodge_operator(lat).to_dense();
            let p = harmonic_projector(lat);
            Arc::new(spd_inverse(k + &p) - p)
        })
        .clone()
}

/// Exact rational pseudo-inverse of the plaquette Hodge operator.
pub fn hodge_pinv_exact(lat: &Lattice) -> RatMatrix {
    let k = hodge_operator(lat);
    let np = lat.n_plaqs();
    let mut kr = RatMatrix::from_int_rows(&k.int_rows(), np);
    let mut p = RatMatrix::zeros(np, np);
    if lat.is_periodic() {
        let cells: Vec<_> = lat.cells(CellKind::Plaquette).collect();
        for (a, ca) in cells.iter().enumerate() {
            let len = lat.block_len(CellKind::Plaquette, ca.orient) as i64;
            for (b, cb) in cells.iter().enumerate() {
                if ca.orient == cb.orient {
                    p[(a, b)] = rat(1, len);
                }
            }
        }
        kr = kr.add(&p);
    }
    kr.inverse()
        .expect("Hodge operator plus harmonic projector is nonsingular")
        .sub(&p)
}

/// Solves `−∇² f = rhs` with the cached kernels. Site sources must be neutral;
/// on periodic lattices plaquette sources must be neutral on every block.
pub fn poisson_solve(lat: &Lattice, rhs: &FieldVector) -> Result<FieldVector> {
    let count = lat.count(rhs.kind);
    if rhs.values.len() != count {
        return Err(Error::FieldLength {
            kind: rhs.kind,
            len: rhs.values.len(),
            count,
        });
    }
    let scale = rhs.max_abs().max(1.0);
    let values = match rhs.kind {
        CellKind::Site => {
            let total: f64 = rhs.values.iter().sum();
            if total.abs() > 1e-9 * scale * count as f64 {
                return Err(Error::NotNeutral(total));
            }
            greens_sites(lat).apply(&rhs.values)
        }
        CellKind::Plaquette if lat.is_periodic() => {
            for normal in lat.normals() {
                let total: f64 = lat
                    .cells(CellKind::Plaquette)
                    .zip(&rhs.values)
                    .filter(|(c, _)| c.orient == normal)
                    .map(|(_, v)| v)
                    .sum();
                if total.abs() > 1e-9 * scale * count as f64 {
                    return Err(Error::NotNeutral(total));
                }
            }
            let k = hodge_pinv(lat);
            (&*k * DVector::from_column_slice(&rhs.values)).as_slice().to_vec()
        }
        CellKind::Plaquette => greens_plaquettes_obc(lat)?.apply(&rhs.values),
        other => {
            return Err(Error::CellKind {
                expected: CellKind::Site,
                found: other,
            })
        }
    };
    FieldVector::new(lat, rhs.kind, values)
}
