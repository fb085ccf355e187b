//! Linear-map level dual variables: the embedding of plaquette potentials and
//! global loops into link fields, its transpose (M from E), the D-matrix, the
//! modified Coulomb kernel and the constraint sets with exact DOF counts.
//!
//! The dual embedding is `W = [∇×  | A]`, mapping `(L, L_glob)` to the link
//! field `E_i(x) = ε_ij Δ⁻_j L(x) + δ_{x_j,0} L_i`. Its transpose maps a link
//! field to `(M, M_glob)` with `M = ∇×E` and `M_i` the sum of `E_i` along the
//! axis line. The D-matrix is `Wᵀ W`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::int_rank;
use crate::greens::{hodge_pinv, GreensKind, GreensTable, Normalization};
use crate::helmholtz::all_shift_tables;
use crate::lattice::{CellKind, Lattice};
use crate::linmap::{IntMap, RealMap, Space};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    Original,
    #[serde(rename = "bl")]
    BL,
    #[serde(rename = "thetam")]
    ThetaM,
}

impl std::str::FromStr for Formulation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "original" => Ok(Formulation::Original),
            "bl" | "b/l" => Ok(Formulation::BL),
            "thetam" | "theta-m" | "θ/m" => Ok(Formulation::ThetaM),
            other => Err(format!("unknown formulation '{other}'")),
        }
    }
}

impl std::fmt::Display for Formulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Formulation::Original => "original",
            Formulation::BL => "bl",
            Formulation::ThetaM => "thetam",
        })
    }
}

/// Plaquette-plus-global space of the dual variables.
pub fn dual_space(lat: &Lattice) -> Space {
    Space::with_global(CellKind::Plaquette, lat.n_plaqs(), lat.n_global_loops())
}

#[derive(Debug, Clone)]
pub struct DualEmbedding {
    pub formulation: Formulation,
    pub map: IntMap,
}

/// `W`: (plaquettes ⊕ global loops) → links. The B/L and θ/M embeddings share
/// the same matrix; only the label differs.
pub fn dual_embedding(lat: &Lattice, formulation: Formulation) -> Result<DualEmbedding> {
    if formulation == Formulation::Original {
        return Err(Error::InvalidParams(
            "the original formulation has no dual embedding".into(),
        ));
    }
    let np = lat.n_plaqs();
    let mut trip = lat.curl_plaq_to_link_map().triplets();
    for (i, line) in lat.axis_lines().iter().enumerate() {
        trip.extend(line.iter().map(|&l| (l, np + i, 1)));
    }
    let name = match formulation {
        Formulation::BL => "dual_embedding_bl",
        _ => "dual_embedding_thetam",
    };
    Ok(DualEmbedding {
        formulation,
        map: IntMap::from_triplets(name, dual_space(lat), Space::cells(CellKind::Link, lat.n_links()), trip),
    })
}

/// `M = ∇×E`: links → plaquettes.
pub fn curl_of_e_map(lat: &Lattice) -> IntMap {
    let c = lat.curl_link_to_plaq_map();
    IntMap {
        name: "curl_of_e".into(),
        ..c.clone()
    }
}

/// `Wᵀ`: links → (M, M_glob), the global rows summing `E_i` along the axis lines.
pub fn m_from_e_map(lat: &Lattice) -> IntMap {
    dual_embedding(lat, Formulation::ThetaM)
        .expect("dual formulation")
        .map
        .transpose("m_from_e")
}

fn require_2d(lat: &Lattice, op: &'static str) -> Result<()> {
    if lat.dim() != 2 {
        return Err(Error::UnsupportedDimension { op, supported: "two" });
    }
    Ok(())
}

/// `D = Wᵀ W` with `D (L, L_glob) = (M, M_glob)`.
pub fn d_matrix(lat: &Lattice) -> Result<IntMap> {
    require_2d(lat, "d_matrix")?;
    let w = dual_embedding(lat, Formulation::ThetaM)?.map;
    Ok(w.transpose("w_t").compose(&w, "d_matrix"))
}

/// Unit kernel vector of `W` (constant on plaquettes), periodic lattices only.
fn embedding_kernel(lat: &Lattice) -> Option<DVector<f64>> {
    if !lat.is_periodic() {
        return None;
    }
    let np = lat.n_plaqs();
    let mut u = DVector::zeros(np + lat.n_global_loops());
    u.rows_mut(0, np).fill(1.0 / (np as f64).sqrt());
    Some(u)
}

/// Moore-Penrose inverse of D.
fn d_pinv(lat: &Lattice) -> Result<DMatrix<f64>> {
    let d = d_matrix(lat)?.to_dense();
    Ok(match embedding_kernel(lat) {
        Some(u) => {
            let p = &u * u.transpose();
            crate::greens::spd_inverse(d + &p) - p
        }
        None => crate::greens::spd_inverse(d),
    })
}

/// Generalised inverse `X` of D fixed by the zero sum of all components of
/// `X M`.
pub fn d_inverse_zero_sum(lat: &Lattice) -> Result<DMatrix<f64>> {
    let dp = d_pinv(lat)?;
    Ok(match embedding_kernel(lat) {
        Some(u) => {
            let n = u.len();
            let v = DVector::from_element(n, 1.0);
            let corr = DMatrix::identity(n, n) - (&u * v.transpose()) / v.dot(&u);
            corr * dp
        }
        None => dp,
    })
}

/// Modified Coulomb kernel `G̃ = (W X)ᵀ (W X)` over plaquettes and global loops.
pub fn modified_greens(lat: &Lattice) -> Result<GreensTable> {
    require_2d(lat, "modified_greens")?;
    let w = dual_embedding(lat, Formulation::ThetaM)?.map.to_dense();
    let wx = w * d_inverse_zero_sum(lat)?;
    let g = wx.transpose() * wx;
    Ok(GreensTable {
        kind: GreensKind::Modified,
        values: (&g + g.transpose()) * 0.5,
        normalization: Normalization::ZeroSumAllComponents,
        global: lat.n_global_loops(),
    })
}

/// `L` from `E`: column `l` is the shift table of link `l` (plaquettes, then
/// global loops).
pub fn l_from_e_map(lat: &Lattice) -> RealMap {
    let rows = dual_space(lat);
    let mut trip = Vec::new();
    for t in all_shift_tables(lat) {
        for (r, v) in t.full().into_iter().enumerate() {
            if v != 0.0 {
                trip.push((r, t.link_index, v));
            }
        }
    }
    RealMap::from_triplets("l_from_e", Space::cells(CellKind::Link, lat.n_links()), rows, trip)
}

/// `C Sᵀ` with `S` the L-from-E map: the commutator matrix `[B(x), L(y)] / i`.
pub fn commutator_matrix(lat: &Lattice) -> DMatrix<f64> {
    let c = lat.curl_link_to_plaq_map().to_dense();
    c * l_from_e_map(lat).to_dense().transpose()
}

/// Max deviations of the commutator matrix from the identity: literally, and
/// on the constraint-satisfying sector (`Σ B = 0` on the torus).
pub fn commutator_deviation(lat: &Lattice) -> (f64, f64) {
    let m = commutator_matrix(lat);
    let np = lat.n_plaqs();
    let mut ident = DMatrix::zeros(np, m.ncols());
    for i in 0..np {
        ident[(i, i)] = 1.0;
    }
    let literal = (&m - &ident).amax();
    let proj = if lat.is_periodic() && lat.dim() == 2 {
        DMatrix::identity(np, np) - DMatrix::from_element(np, np, 1.0 / np as f64)
    } else if lat.is_periodic() {
        let k = crate::greens::hodge_operator(lat).to_dense();
        k * &*hodge_pinv(lat)
    } else {
        DMatrix::identity(np, np)
    };
    let sector = (&proj * (&m - &ident).columns(0, np) * &proj)
        .amax()
        .max((&proj * m.columns(np, m.ncols() - np)).amax());
    (literal, sector)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Gauss,
    Global2d,
    Cube3d,
    Slice3d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DofReport {
    pub raw_variables: usize,
    pub constraints: usize,
    pub independent_constraints: usize,
    pub physical_dof: usize,
}

#[derive(Debug, Clone)]
pub struct ConstraintSet {
    pub formulation: Formulation,
    /// Integer sparse rows over the formulation's variables.
    pub constraints: Vec<Vec<(usize, i64)>>,
    pub kinds: Vec<ConstraintKind>,
    pub variables: usize,
    pub dof: DofReport,
}

impl ConstraintSet {
    pub fn rank_of(&self, kind: ConstraintKind) -> usize {
        let rows: Vec<_> = self
            .constraints
            .iter()
            .zip(&self.kinds)
            .filter(|(_, k)| **k == kind)
            .map(|(r, _)| r.clone())
            .collect();
        int_rank(&rows, self.variables)
    }
}

/// Constraints of a formulation. Original: one Gauss law per site on the link
/// variables. Dual: global (2D torus), cube and slice constraints on
/// (plaquettes ⊕ global loops).
pub fn constraint_set(lat: &Lattice, formulation: Formulation) -> ConstraintSet {
    let mut rows = Vec::new();
    let mut kinds = Vec::new();
    let variables = match formulation {
        Formulation::Original => {
            for r in lat.divergence_map().int_rows() {
                rows.push(r);
                kinds.push(ConstraintKind::Gauss);
            }
            lat.n_links()
        }
        _ => {
            if lat.dim() == 2 && lat.is_periodic() {
                rows.push((0..lat.n_plaqs()).map(|p| (p, 1)).collect());
                kinds.push(ConstraintKind::Global2d);
            }
            if lat.dim() == 3 {
                for r in lat.cube_divergence_map().int_rows() {
                    rows.push(r);
                    kinds.push(ConstraintKind::Cube3d);
                }
                if lat.is_periodic() {
                    for i in 0..3 {
                        let slice = lat
                            .cells(CellKind::Plaquette)
                            .enumerate()
                            .filter(|(_, c)| c.orient == i && c.coords[i] == 0)
                            .map(|(p, _)| (p, 1))
                            .collect();
                        rows.push(slice);
                        kinds.push(ConstraintKind::Slice3d);
                    }
                }
            }
            lat.n_plaqs() + lat.n_global_loops()
        }
    };
    let rank = int_rank(&rows, variables);
    ConstraintSet {
        formulation,
        dof: DofReport {
            raw_variables: variables,
            constraints: rows.len(),
            independent_constraints: rank,
            physical_dof: variables - rank,
        },
        constraints: rows,
        kinds,
        variables,
    }
}

/// Closed-form physical gauge DOF count.
pub fn expected_dof(dim: usize, n: usize, periodic: bool) -> usize {
    match (dim, periodic) {
        (2, true) => n * n + 1,
        (2, false) => n * n,
        (3, true) => 2 * n.pow(3) + 1,
        _ => 2 * n.pow(3) + 3 * n * n,
    }
}
