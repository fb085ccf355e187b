//! Cell-complex geometry and discrete differential operators on square and
//! cubic lattices with periodic or open boundaries.
//!
//! Cells are grouped into blocks of equal orientation. Sites form one block,
//! links one block per direction, plaquettes one block per normal direction
//! (a single block with normal `e_3` in two dimensions) and cubes one block.
//! Inside a block, cells are labelled by their bottom-left corner and indexed
//! row-major from the origin (`x_1` fastest).
//!
//! Open-boundary operators are the periodic stencils with every reference to a
//! cell outside the lattice deleted.

use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linmap::{IntMap, Space};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Open,
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Boundary::Periodic => "periodic",
            Boundary::Open => "open",
        })
    }
}

impl std::str::FromStr for Boundary {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "periodic" | "pbc" => Ok(Boundary::Periodic),
            "open" | "obc" => Ok(Boundary::Open),
            other => Err(format!("unknown boundary condition '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Site,
    Link,
    Plaquette,
    Cube,
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellKind::Site => "site",
            CellKind::Link => "link",
            CellKind::Plaquette => "plaquette",
            CellKind::Cube => "cube",
        })
    }
}

/// A cell of the lattice: its kind, its orientation inside the kind (link
/// direction or plaquette normal, 0-based) and its bottom-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Cell {
    pub kind: CellKind,
    pub orient: usize,
    pub coords: [usize; 3],
}

#[derive(Debug, Clone)]
struct Block {
    orient: usize,
    ext: [usize; 3],
    offset: usize,
    len: usize,
}

/// Levi-Civita symbol on 0-based indices.
pub fn levi_civita(i: usize, j: usize, k: usize) -> i64 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1,
        _ => 0,
    }
}

#[derive(Default)]
struct OpCache {
    gradient: OnceLock<IntMap>,
    divergence: OnceLock<IntMap>,
    curl_link_to_plaq: OnceLock<IntMap>,
    curl_plaq_to_link: OnceLock<IntMap>,
    site_laplacian: OnceLock<IntMap>,
    plaq_laplacian: OnceLock<IntMap>,
    cube_divergence: OnceLock<IntMap>,
    pub(crate) site_greens: OnceLock<Arc<crate::greens::GreensTable>>,
    pub(crate) plaq_greens: OnceLock<Arc<crate::greens::GreensTable>>,
    pub(crate) plaq_kernel: OnceLock<Arc<DMatrix<f64>>>,
}

/// A `dim`-dimensional lattice of extent `N` with its cell complex.
pub struct Lattice {
    dim: usize,
    n: usize,
    bc: Boundary,
    blocks: [Vec<Block>; 4],
    cache: OpCache,
}

impl fmt::Debug for Lattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Lattice")
            .field("dim", &self.dim)
            .field("n", &self.n)
            .field("bc", &self.bc)
            .finish()
    }
}

fn kind_slot(kind: CellKind) -> usize {
    match kind {
        CellKind::Site => 0,
        CellKind::Link => 1,
        CellKind::Plaquette => 2,
        CellKind::Cube => 3,
    }
}

/// Builds a lattice and its index maps.
pub fn build_lattice(dim: usize, n: usize, bc: Boundary) -> Result<Arc<Lattice>> {
    Lattice::new(dim, n, bc).map(Arc::new)
}

impl Lattice {
    pub fn new(dim: usize, n: usize, bc: Boundary) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Dimension(dim));
        }
        if n == 0 {
            return Err(Error::ZeroExtent);
        }
        // spans[a] == true means the cell extends along axis a.
        let mk = |spans: [bool; 3], orient: usize, offset: &mut usize| {
            let mut ext = [1usize; 3];
            for (a, e) in ext.iter_mut().enumerate().take(dim) {
                *e = match bc {
                    Boundary::Periodic => n,
                    Boundary::Open if spans[a] => n,
                    Boundary::Open => n + 1,
                };
            }
            let len = ext.iter().product();
            let b = Block {
                orient,
                ext,
                offset: *offset,
                len,
            };
            *offset += len;
            b
        };
        let mut off = 0;
        let sites = vec![mk([false; 3], 0, &mut off)];
        off = 0;
        let links = (0..dim)
            .map(|i| {
                let mut s = [false; 3];
                s[i] = true;
                mk(s, i, &mut off)
            })
            .collect();
        off = 0;
        let plaqs = if dim == 2 {
            vec![mk([true, true, false], 2, &mut off)]
        } else {
            (0..3)
                .map(|k| {
                    let mut s = [true; 3];
                    s[k] = false;
                    mk(s, k, &mut off)
                })
                .collect()
        };
        off = 0;
        let cubes = if dim == 3 {
            vec![mk([true; 3], 0, &mut off)]
        } else {
            Vec::new()
        };
        Ok(Self {
            dim,
            n,
            bc,
            blocks: [sites, links, plaqs, cubes],
            cache: OpCache::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Extent `N`: plaquettes per direction.
    pub fn extent(&self) -> usize {
        self.n
    }

    pub fn boundary(&self) -> Boundary {
        self.bc
    }

    pub fn is_periodic(&self) -> bool {
        self.bc == Boundary::Periodic
    }

    pub fn label(&self) -> String {
        format!("{}d-{}-N{}", self.dim, self.bc, self.n)
    }

    pub fn count(&self, kind: CellKind) -> usize {
        self.blocks[kind_slot(kind)].iter().map(|b| b.len).sum()
    }

    pub fn n_sites(&self) -> usize {
        self.count(CellKind::Site)
    }

    pub fn n_links(&self) -> usize {
        self.count(CellKind::Link)
    }

    pub fn n_plaqs(&self) -> usize {
        self.count(CellKind::Plaquette)
    }

    pub fn n_cubes(&self) -> usize {
        self.count(CellKind::Cube)
    }

    /// Number of non-contractible loops: one per direction on the torus.
    pub fn n_global_loops(&self) -> usize {
        if self.is_periodic() {
            self.dim
        } else {
            0
        }
    }

    /// Number of cells of `kind` in the block with orientation `orient`.
    pub fn block_len(&self, kind: CellKind, orient: usize) -> usize {
        self.block(kind, orient).map(|b| b.len).unwrap_or(0)
    }

    /// Orientations present for `kind` (link directions, plaquette normals).
    pub fn orientations(&self, kind: CellKind) -> Vec<usize> {
        self.blocks[kind_slot(kind)].iter().map(|b| b.orient).collect()
    }

    fn block(&self, kind: CellKind, orient: usize) -> Option<&Block> {
        self.blocks[kind_slot(kind)].iter().find(|b| b.orient == orient)
    }

    /// Index of the cell with the given orientation and corner. Coordinates may
    /// be negative or past the edge: periodic lattices wrap them, open lattices
    /// return `None` for cells outside the lattice.
    pub fn index(&self, kind: CellKind, orient: usize, coords: [isize; 3]) -> Option<usize> {
        let b = self.block(kind, orient)?;
        let mut x = [0usize; 3];
        for a in 0..3 {
            let c = coords[a];
            if a >= self.dim {
                if c != 0 {
                    return None;
                }
                continue;
            }
            x[a] = match self.bc {
                Boundary::Periodic => c.rem_euclid(self.n as isize) as usize,
                Boundary::Open => {
                    if c < 0 || c as usize >= b.ext[a] {
                        return None;
                    }
                    c as usize
                }
            };
        }
        Some(b.offset + x[0] + b.ext[0] * (x[1] + b.ext[1] * x[2]))
    }

    pub fn site_index(&self, coords: [isize; 3]) -> Option<usize> {
        self.index(CellKind::Site, 0, coords)
    }

    pub fn link_index(&self, coords: [isize; 3], dir: usize) -> Option<usize> {
        self.index(CellKind::Link, dir, coords)
    }

    /// Plaquette index; `normal` is ignored in two dimensions.
    pub fn plaq_index(&self, coords: [isize; 3], normal: usize) -> Option<usize> {
        let normal = if self.dim == 2 { 2 } else { normal };
        self.index(CellKind::Plaquette, normal, coords)
    }

    /// Inverse of [`Lattice::index`].
    pub fn cell(&self, kind: CellKind, index: usize) -> Cell {
        let b = self.blocks[kind_slot(kind)]
            .iter()
            .find(|b| index >= b.offset && index < b.offset + b.len)
            .unwrap_or_else(|| panic!("{kind} index {index} out of range"));
        let r = index - b.offset;
        let coords = [r % b.ext[0], (r / b.ext[0]) % b.ext[1], r / (b.ext[0] * b.ext[1])];
        Cell {
            kind,
            orient: b.orient,
            coords,
        }
    }

    /// All cells of a kind, in index order.
    pub fn cells(&self, kind: CellKind) -> impl Iterator<Item = Cell> + '_ {
        (0..self.count(kind)).map(move |i| self.cell(kind, i))
    }

    fn space(&self, kind: CellKind) -> Space {
        Space::cells(kind, self.count(kind))
    }

    fn shifted(x: [usize; 3], axis: usize, delta: isize) -> [isize; 3] {
        let mut y = [x[0] as isize, x[1] as isize, x[2] as isize];
        y[axis] += delta;
        y
    }

    /// Plaquette normals: `[2]` in two dimensions, `[0, 1, 2]` in three.
    pub fn normals(&self) -> Vec<usize> {
        self.orientations(CellKind::Plaquette)
    }

    /// `(∇f)_i(x) = f(x+e_i) − f(x)`: sites → links.
    pub fn gradient_map(&self) -> &IntMap {
        self.cache.gradient.get_or_init(|| {
            let mut t = Vec::new();
            for (l, c) in self.cells(CellKind::Link).enumerate() {
                let i = c.orient;
                let from = self.site_index(Self::shifted(c.coords, i, 0)).unwrap();
                let to = self.site_index(Self::shifted(c.coords, i, 1)).unwrap();
                t.push((l, to, 1));
                t.push((l, from, -1));
            }
            IntMap::from_triplets("gradient", self.space(CellKind::Site), self.space(CellKind::Link), t)
        })
    }

    /// `∇·F(x) = Σ_i F_i(x) − F_i(x−e_i)`: links → sites.
    pub fn divergence_map(&self) -> &IntMap {
        self.cache.divergence.get_or_init(|| {
            let mut t = Vec::new();
            for (s, c) in self.cells(CellKind::Site).enumerate() {
                for i in 0..self.dim {
                    if let Some(l) = self.link_index(Self::shifted(c.coords, i, 0), i) {
                        t.push((s, l, 1));
                    }
                    if let Some(l) = self.link_index(Self::shifted(c.coords, i, -1), i) {
                        t.push((s, l, -1));
                    }
                }
            }
            IntMap::from_triplets("divergence", self.space(CellKind::Link), self.space(CellKind::Site), t)
        })
    }

    /// `(∇×F)_k(x) = ε_kjm Δ⁺_j F_m(x)`: links → plaquettes. In two dimensions
    /// the single plaquette component is `k = 3`.
    pub fn curl_link_to_plaq_map(&self) -> &IntMap {
        self.cache.curl_link_to_plaq.get_or_init(|| {
            let mut t = Vec::new();
            for (p, c) in self.cells(CellKind::Plaquette).enumerate() {
                let k = c.orient;
                for j in 0..self.dim {
                    for m in 0..self.dim {
                        let e = levi_civita(k, j, m);
                        if e == 0 {
                            continue;
                        }
                        if let Some(l) = self.link_index(Self::shifted(c.coords, j, 1), m) {
                            t.push((p, l, e));
                        }
                        if let Some(l) = self.link_index(Self::shifted(c.coords, j, 0), m) {
                            t.push((p, l, -e));
                        }
                    }
                }
            }
            IntMap::from_triplets(
                "curl_link_to_plaq",
                self.space(CellKind::Link),
                self.space(CellKind::Plaquette),
                t,
            )
        })
    }

    /// `(∇×L)_i(x) = ε_ijk Δ⁻_j L_k(x)`: plaquettes → links.
    pub fn curl_plaq_to_link_map(&self) -> &IntMap {
        self.cache.curl_plaq_to_link.get_or_init(|| {
            let mut t = Vec::new();
            let normals = self.normals();
            for (l, c) in self.cells(CellKind::Link).enumerate() {
                let i = c.orient;
                for j in 0..self.dim {
                    for &k in &normals {
                        let e = levi_civita(i, j, k);
                        if e == 0 {
                            continue;
                        }
                        if let Some(p) = self.plaq_index(Self::shifted(c.coords, j, 0), k) {
                            t.push((l, p, e));
                        }
                        if let Some(p) = self.plaq_index(Self::shifted(c.coords, j, -1), k) {
                            t.push((l, p, -e));
                        }
                    }
                }
            }
            IntMap::from_triplets(
                "curl_plaq_to_link",
                self.space(CellKind::Plaquette),
                self.space(CellKind::Link),
                t,
            )
        })
    }

    /// `Δ⁺_i B_i(x)`: plaquettes → cubes (empty in two dimensions).
    pub fn cube_divergence_map(&self) -> &IntMap {
        self.cache.cube_divergence.get_or_init(|| {
            let mut t = Vec::new();
            for (q, c) in self.cells(CellKind::Cube).enumerate() {
                for i in 0..self.dim {
                    if let Some(p) = self.plaq_index(Self::shifted(c.coords, i, 1), i) {
                        t.push((q, p, 1));
                    }
                    if let Some(p) = self.plaq_index(Self::shifted(c.coords, i, 0), i) {
                        t.push((q, p, -1));
                    }
                }
            }
            IntMap::from_triplets(
                "cube_divergence",
                self.space(CellKind::Plaquette),
                self.space(CellKind::Cube),
                t,
            )
        })
    }

    /// Site Laplacian `Δ⁻_i Δ⁺_i`. On open lattices each missing link removes
    /// one neighbour and one unit of the diagonal.
    pub fn site_laplacian_map(&self) -> &IntMap {
        self.cache.site_laplacian.get_or_init(|| {
            let mut t = Vec::new();
            for (s, c) in self.cells(CellKind::Site).enumerate() {
                for i in 0..self.dim {
                    for d in [1isize, -1] {
                        if let Some(nb) = self.site_index(Self::shifted(c.coords, i, d)) {
                            t.push((s, nb, 1));
                            t.push((s, s, -1));
                        }
                    }
                }
            }
            IntMap::from_triplets(
                "site_laplacian",
                self.space(CellKind::Site),
                self.space(CellKind::Site),
                t,
            )
        })
    }

    /// Componentwise plaquette Laplacian. On open lattices the diagonal stays
    /// `−2d` everywhere and only neighbours inside the lattice are coupled.
    pub fn plaq_laplacian_map(&self) -> &IntMap {
        self.cache.plaq_laplacian.get_or_init(|| {
            let mut t = Vec::new();
            let diag = -2 * self.dim as i64;
            for (p, c) in self.cells(CellKind::Plaquette).enumerate() {
                t.push((p, p, diag));
                for a in 0..self.dim {
                    for d in [1isize, -1] {
                        if let Some(nb) = self.plaq_index(Self::shifted(c.coords, a, d), c.orient) {
                            t.push((p, nb, 1));
                        }
                    }
                }
            }
            IntMap::from_triplets(
                "plaq_laplacian",
                self.space(CellKind::Plaquette),
                self.space(CellKind::Plaquette),
                t,
            )
        })
    }

    pub(crate) fn cache_site_greens(&self) -> &OnceLock<Arc<crate::greens::GreensTable>> {
        &self.cache.site_greens
    }

    pub(crate) fn cache_plaq_greens(&self) -> &OnceLock<Arc<crate::greens::GreensTable>> {
        &self.cache.plaq_greens
    }

    pub(crate) fn cache_plaq_kernel(&self) -> &OnceLock<Arc<DMatrix<f64>>> {
        &self.cache.plaq_kernel
    }

    /// Indicator columns of the global loops: column `i` is the set of links in
    /// direction `i` on the axis line through the origin. Empty for open lattices.
    pub fn axis_lines(&self) -> Vec<Vec<usize>> {
        if !self.is_periodic() {
            return Vec::new();
        }
        (0..self.dim)
            .map(|i| {
                (0..self.n as isize)
                    .map(|s| {
                        let mut x = [0isize; 3];
                        x[i] = s;
                        self.link_index(x, i).unwrap()
                    })
                    .collect()
            })
            .collect()
    }
}

/// A link given by its base site and 0-based direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct LinkRef {
    pub coords: [isize; 3],
    pub dir: usize,
}

impl std::str::FromStr for LinkRef {
    type Err = Error;

    /// Parses `x1,x2[,x3]:i` with a 1-based direction `i`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidLink(format!("'{s}' is not of the form x1,x2[,x3]:i"));
        let (xs, d) = s.split_once(':').ok_or_else(bad)?;
        let parts: Vec<isize> = xs
            .split(',')
            .map(|p| p.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        if parts.is_empty() || parts.len() > 3 {
            return Err(bad());
        }
        let dir: usize = d.trim().parse().map_err(|_| bad())?;
        if dir == 0 || dir > 3 {
            return Err(Error::InvalidLink(format!("direction {dir} must be 1, 2 or 3")));
        }
        let mut coords = [0isize; 3];
        coords[..parts.len()].copy_from_slice(&parts);
        Ok(Self { coords, dir: dir - 1 })
    }
}

impl fmt::Display for LinkRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{}:{}",
            self.coords[0],
            self.coords[1],
            self.coords[2],
            self.dir + 1
        )
    }
}

impl Lattice {
    /// Index of a link; fails if it does not exist on this lattice. Periodic
    /// coordinates must lie in `0..N`.
    pub fn resolve_link(&self, link: &LinkRef) -> Result<usize> {
        let in_range = link.coords.iter().all(|&c| c >= 0 && c <= self.n as isize)
            && (self.bc == Boundary::Open || link.coords.iter().all(|&c| c < self.n as isize));
        if link.dir >= self.dim || !in_range {
            return Err(Error::InvalidLink(format!(
                "{link} is not a link of the {} lattice",
                self.label()
            )));
        }
        self.link_index(link.coords, link.dir)
            .ok_or_else(|| Error::InvalidLink(format!("{link} is not a link of the {} lattice", self.label())))
    }
}

/// Values on one kind of cell, optionally with global winding components.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldVector {
    pub kind: CellKind,
    pub values: Vec<f64>,
    pub global: Option<Vec<f64>>,
}

impl FieldVector {
    pub fn new(lat: &Lattice, kind: CellKind, values: Vec<f64>) -> Result<Self> {
        let count = lat.count(kind);
        if values.len() != count {
            return Err(Error::FieldLength {
                kind,
                len: values.len(),
                count,
            });
        }
        Ok(Self {
            kind,
            values,
            global: None,
        })
    }

    pub fn zeros(lat: &Lattice, kind: CellKind) -> Self {
        Self {
            kind,
            values: vec![0.0; lat.count(kind)],
            global: None,
        }
    }

    /// Unit indicator on one cell.
    pub fn delta(lat: &Lattice, kind: CellKind, index: usize) -> Self {
        let mut f = Self::zeros(lat, kind);
        f.values[index] = 1.0;
        f
    }

    pub fn with_global(mut self, lat: &Lattice, global: Vec<f64>) -> Result<Self> {
        if !lat.is_periodic() || global.len() != lat.n_global_loops() {
            return Err(Error::FieldLength {
                kind: self.kind,
                len: global.len(),
                count: lat.n_global_loops(),
            });
        }
        self.global = Some(global);
        Ok(self)
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .chain(self.global.iter().flatten())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    fn expect(&self, lat: &Lattice, kind: CellKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::CellKind {
                expected: kind,
                found: self.kind,
            });
        }
        let count = lat.count(kind);
        if self.values.len() != count {
            return Err(Error::FieldLength {
                kind,
                len: self.values.len(),
                count,
            });
        }
        Ok(())
    }
}

fn apply_map(lat: &Lattice, map: &IntMap, f: &FieldVector, from: CellKind, to: CellKind) -> Result<FieldVector> {
    f.expect(lat, from)?;
    let m = map.to_f64();
    Ok(FieldVector {
        kind: to,
        values: m.apply(&f.values),
        global: None,
    })
}

pub fn gradient(lat: &Lattice, f: &FieldVector) -> Result<FieldVector> {
    apply_map(lat, lat.gradient_map(), f, CellKind::Site, CellKind::Link)
}

pub fn divergence(lat: &Lattice, f: &FieldVector) -> Result<FieldVector> {
    apply_map(lat, lat.divergence_map(), f, CellKind::Link, CellKind::Site)
}

pub fn curl_link_to_plaq(lat: &Lattice, f: &FieldVector) -> Result<FieldVector> {
    apply_map(lat, lat.curl_link_to_plaq_map(), f, CellKind::Link, CellKind::Plaquette)
}

pub fn curl_plaq_to_link(lat: &Lattice, f: &FieldVector) -> Result<FieldVector> {
    apply_map(lat, lat.curl_plaq_to_link_map(), f, CellKind::Plaquette, CellKind::Link)
}

/// Laplacian on site or plaquette fields (see [`Lattice::site_laplacian_map`]
/// and [`Lattice::plaq_laplacian_map`]).
pub fn laplacian(lat: &Lattice, f: &FieldVector) -> Result<FieldVector> {
    match f.kind {
        CellKind::Site => apply_map(lat, lat.site_laplacian_map(), f, CellKind::Site, CellKind::Site),
        CellKind::Plaquette => apply_map(
            lat,
            lat.plaq_laplacian_map(),
            f,
            CellKind::Plaquette,
            CellKind::Plaquette,
        ),
        other => Err(Error::CellKind {
            expected: CellKind::Site,
            found: other,
        }),
    }
}
