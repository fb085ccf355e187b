//! Helmholtz decomposition of link fields, global-loop bookkeeping and the
//! hopping shift tables.
//!
//! A link field splits as `F = −∇φ + ∇×(L_plaq + L_const) + A L_glob`, where
//! `A` places each global loop `L_i` on the axis line through the origin in
//! direction `i` (periodic lattices only). `L_const` spreads the axis-line
//! loops into a constant field over the whole lattice.

use nalgebra::{DMatrix, DVector};
use num_rational::BigRational;
use num_traits::Zero;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{rat, rat_string, rat_to_f64};
use crate::greens::{greens_sites, hodge_pinv, hodge_pinv_exact};
use crate::lattice::{levi_civita, CellKind, FieldVector, Lattice, LinkRef};
use crate::linmap::{RealMap, Space};

/// Largest plaquette count for which shift tables are computed exactly.
pub const EXACT_PLAQ_LIMIT: usize = 64;

#[derive(Debug, Clone, Serialize)]
pub struct Decomposition {
    pub phi: FieldVector,
    pub l_plaq: FieldVector,
    pub l_const: Option<FieldVector>,
    pub global_loops: Option<Vec<f64>>,
    pub f_long: FieldVector,
    pub f_trans: FieldVector,
}

impl Decomposition {
    /// Total plaquette potential `L_plaq + L_const`.
    pub fn l_total(&self) -> Vec<f64> {
        match &self.l_const {
            Some(c) => self.l_plaq.values.iter().zip(&c.values).map(|(a, b)| a + b).collect(),
            None => self.l_plaq.values.clone(),
        }
    }
}

/// Coefficients of `L_const` on each plaquette: `L_const(p) = Σ_i c_i(p) S_i`
/// with `S_i = Σ_x F_i(x)` and `c_i(p) = num / den`.
fn l_const_coefficients(lat: &Lattice) -> Vec<Vec<(i64, i64)>> {
    let dim = lat.dim();
    let n = lat.extent() as i64;
    let mut out = vec![vec![(0i64, 1i64); dim]; lat.n_plaqs()];
    if !lat.is_periodic() {
        return out;
    }
    for (p, cell) in lat.cells(CellKind::Plaquette).enumerate() {
        let x = cell.coords.map(|v| v as i64);
        let k = cell.orient;
        for (i, slot) in out[p].iter_mut().enumerate().take(dim) {
            let (a, b) = match (0..3).filter(|&t| t != i).collect::<Vec<_>>()[..] {
                [a, b] => (a, b),
                _ => unreachable!(),
            };
            let eps = levi_civita(i, a, b);
            // L_b(x) = ε (S_i/N²) x_a on the slice x_b = 0
            if k == b && x[b] == 0 {
                *slot = (eps * x[a], n * n);
            }
            // L_a(x) = −ε (S_i/N³) x_b
            if k == a && dim == 3 {
                *slot = (-eps * x[b], n * n * n);
            }
        }
    }
    out
}

fn direction_sums(lat: &Lattice, f: &[f64]) -> Vec<f64> {
    let mut s = vec![0.0; lat.dim()];
    for (l, c) in lat.cells(CellKind::Link).enumerate() {
        s[c.orient] += f[l];
    }
    s
}

/// Link field `A L_glob`: each loop value on the axis line of its direction.
pub fn axis_field(lat: &Lattice, global: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; lat.n_links()];
    for (i, line) in lat.axis_lines().iter().enumerate() {
        for &l in line {
            out[l] += global[i];
        }
    }
    out
}

fn dense_apply(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (m * DVector::from_column_slice(v)).as_slice().to_vec()
}

pub fn helmholtz_decompose(lat: &Lattice, f: &FieldVector) -> Result<Decomposition> {
    if f.kind != CellKind::Link {
        return Err(Error::CellKind {
            expected: CellKind::Link,
            found: f.kind,
        });
    }
    let f = FieldVector::new(lat, CellKind::Link, f.values.clone())?;
    let div = lat.divergence_map().to_f64().apply(&f.values);
    let phi = greens_sites(lat).apply(&div);
    let f_long: Vec<f64> = lat
        .gradient_map()
        .to_f64()
        .apply(&phi)
        .into_iter()
        .map(|v| -v)
        .collect();

    let curl = lat.curl_link_to_plaq_map().to_f64().apply(&f.values);
    let l_plaq = dense_apply(&hodge_pinv(lat), &curl);
    let r = lat.curl_plaq_to_link_map().to_f64();

    let (l_const, global_loops, f_trans) = if lat.is_periodic() {
        let sums = direction_sums(lat, &f.values);
        let n = lat.extent() as f64;
        let global: Vec<f64> = sums.iter().map(|s| s / n).collect();
        let coeffs = l_const_coefficients(lat);
        let l_const: Vec<f64> = coeffs
            .iter()
            .map(|c| {
                c.iter()
                    .zip(&sums)
                    .map(|((num, den), s)| *num as f64 / *den as f64 * s)
                    .sum()
            })
            .collect();
        let total: Vec<f64> = l_plaq.iter().zip(&l_const).map(|(a, b)| a + b).collect();
        let axis = axis_field(lat, &global);
        let ft: Vec<f64> = r.apply(&total).iter().zip(&axis).map(|(a, b)| a + b).collect();
        (
            Some(FieldVector::new(lat, CellKind::Plaquette, l_const)?),
            Some(global),
            ft,
        )
    } else {
        (None, None, r.apply(&l_plaq))
    };

    Ok(Decomposition {
        phi: FieldVector::new(lat, CellKind::Site, phi)?,
        l_plaq: FieldVector::new(lat, CellKind::Plaquette, l_plaq)?,
        l_const,
        global_loops,
        f_long: FieldVector::new(lat, CellKind::Link, f_long)?,
        f_trans: FieldVector::new(lat, CellKind::Link, f_trans)?,
    })
}

/// Change of the dual potentials when one unit of flux is added to a link.
#[derive(Debug, Clone, Serialize)]
pub struct ShiftTable {
    pub link: LinkRef,
    pub link_index: usize,
    /// `s_{x,i}(y)` on every plaquette (`s_plaq + s_const`).
    pub shifts: Vec<f64>,
    /// Shifts of the global loops (periodic lattices only).
    pub global_shifts: Vec<f64>,
    /// Exact values, present when computed in rational arithmetic.
    #[serde(skip)]
    pub exact: Option<(Vec<BigRational>, Vec<BigRational>)>,
}

impl ShiftTable {
    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    /// Exact shifts as `p/q` strings.
    pub fn exact_strings(&self) -> Option<(Vec<String>, Vec<String>)> {
        self.exact
            .as_ref()
            .map(|(s, g)| (s.iter().map(rat_string).collect(), g.iter().map(rat_string).collect()))
    }

    /// Shift vector over plaquettes followed by global loops.
    pub fn full(&self) -> Vec<f64> {
        self.shifts.iter().chain(&self.global_shifts).copied().collect()
    }
}

/// Shift table of a link; exact rational arithmetic is used when `exact` is
/// requested and the lattice has at most [`EXACT_PLAQ_LIMIT`] plaquettes.
pub fn link_shift_table(lat: &Lattice, link: &LinkRef, exact: bool) -> Result<ShiftTable> {
    let l = lat.resolve_link(link)?;
    let np = lat.n_plaqs();
    let curl_col: Vec<(usize, i64)> = lat
        .curl_link_to_plaq_map()
        .triplets()
        .into_iter()
        .filter(|t| t.1 == l)
        .map(|(p, _, v)| (p, v))
        .collect();
    let dir = lat.cell(CellKind::Link, l).orient;
    let n = lat.extent() as i64;
    let coeffs = l_const_coefficients(lat);

    if exact && np <= EXACT_PLAQ_LIMIT {
        let kp = hodge_pinv_exact(lat);
        let mut s = vec![BigRational::zero(); np];
        for (p, sp) in s.iter_mut().enumerate() {
            for &(q, v) in &curl_col {
                *sp += &kp[(p, q)] * rat(v, 1);
            }
            if lat.is_periodic() {
                let (num, den) = coeffs[p][dir];
                *sp += rat(num, den);
            }
        }
        let g: Vec<BigRational> = (0..lat.n_global_loops())
            .map(|i| if i == dir { rat(1, n) } else { BigRational::zero() })
            .collect();
        return Ok(ShiftTable {
            link: *link,
            link_index: l,
            shifts: s.iter().map(rat_to_f64).collect(),
            global_shifts: g.iter().map(rat_to_f64).collect(),
            exact: Some((s, g)),
        });
    }

    let kp = hodge_pinv(lat);
    let mut s = vec![0.0; np];
    for (p, sp) in s.iter_mut().enumerate() {
        for &(q, v) in &curl_col {
            *sp += kp[(p, q)] * v as f64;
        }
        if lat.is_periodic() {
            let (num, den) = coeffs[p][dir];
            *sp += num as f64 / den as f64;
        }
    }
    let g = (0..lat.n_global_loops())
        .map(|i| if i == dir { 1.0 / n as f64 } else { 0.0 })
        .collect();
    Ok(ShiftTable {
        link: *link,
        link_index: l,
        shifts: s,
        global_shifts: g,
        exact: None,
    })
}

/// Shift tables for every link, in link order.
pub fn all_shift_tables(lat: &Lattice) -> Vec<ShiftTable> {
    use rayon::prelude::*;
    (0..lat.n_links())
        .into_par_iter()
        .map(|l| {
            let c = lat.cell(CellKind::Link, l);
            let link = LinkRef {
                coords: c.coords.map(|v| v as isize),
                dir: c.orient,
            };
            link_shift_table(lat, &link, false).expect("link exists")
        })
        .collect()
}

/// Dense transverse projector `P_T = ∇× K⁺ ∇× + H`, with `H` the projector on
/// constant fields per direction (periodic lattices).
pub fn transverse_projector_dense(lat: &Lattice) -> DMatrix<f64> {
    let c = lat.curl_link_to_plaq_map().to_dense();
    let r = lat.curl_plaq_to_link_map().to_dense();
    let mut p = r * &*hodge_pinv(lat) * c;
    if lat.is_periodic() {
        let links: Vec<_> = lat.cells(CellKind::Link).map(|c| c.orient).collect();
        let w = 1.0 / lat.n_sites() as f64;
        for (a, da) in links.iter().enumerate() {
            for (b, db) in links.iter().enumerate() {
                if da == db {
                    p[(a, b)] += w;
                }
            }
        }
    }
    p
}

pub fn transverse_projector(lat: &Lattice) -> RealMap {
    let space = Space::cells(CellKind::Link, lat.n_links());
    RealMap::from_dense(
        "transverse_projector",
        space,
        space,
        &transverse_projector_dense(lat),
        1e-15,
    )
}

/// `Σ_y s(y) B(y) + Σ_i s_i B_i` for a link field `φ`, with `B = ∇×φ` and
/// `B_i` the sum of `φ_i` along the axis line in direction `i`.
pub fn shifted_flux(lat: &Lattice, table: &ShiftTable, phi: &[f64]) -> f64 {
    let b = lat.curl_link_to_plaq_map().to_f64().apply(phi);
    let mut acc: f64 = table.shifts.iter().zip(&b).map(|(s, v)| s * v).sum();
    for (i, line) in lat.axis_lines().iter().enumerate() {
        let bi: f64 = line.iter().map(|&l| phi[l]).sum();
        acc += table.global_shifts[i] * bi;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, Boundary};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(lat: &Lattice, kind: CellKind, rng: &mut ChaCha8Rng) -> FieldVector {
        let v = (0..lat.count(kind)).map(|_| rng.random_range(-1.0..1.0)).collect();
        FieldVector::new(lat, kind, v).unwrap()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn round_trip_all_geometries() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dim in [2, 3] {
            for bc in [Boundary::Open, Boundary::Periodic] {
                for n in 1..4 {
                    let lat = build_lattice(dim, n, bc).unwrap();
                    let pt = transverse_projector_dense(&lat);
                    for _ in 0..5 {
                        let f = random_field(&lat, CellKind::Link, &mut rng);
                        let d = helmholtz_decompose(&lat, &f).unwrap();
                        let sum: Vec<f64> = d
                            .f_long
                            .values
                            .iter()
                            .zip(&d.f_trans.values)
                            .map(|(a, b)| a + b)
                            .collect();
                        assert!(max_diff(&sum, &f.values) < 1e-12, "{dim} {bc} {n}");
                        let div = lat.divergence_map().to_f64().apply(&d.f_trans.values);
                        assert!(div.iter().all(|v| v.abs() < 1e-12));
                        let curl = lat.curl_link_to_plaq_map().to_f64().apply(&d.f_long.values);
                        assert!(curl.iter().all(|v| v.abs() < 1e-12));
                        let proj = dense_apply(&pt, &f.values);
                        assert!(max_diff(&proj, &d.f_trans.values) < 1e-12);
                        let dot: f64 = d.f_long.values.iter().zip(&d.f_trans.values).map(|(a, b)| a * b).sum();
                        assert!(dot.abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn pure_longitudinal_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lat = build_lattice(2, 3, Boundary::Open).unwrap();
        let s = random_field(&lat, CellKind::Site, &mut rng);
        let f = crate::lattice::gradient(&lat, &s).unwrap();
        let d = helmholtz_decompose(&lat, &f).unwrap();
        assert!(d.f_trans.max_abs() < 1e-12);
        // F_L = −∇φ, so φ = −f up to a constant
        let offset = d.phi.values[0] + s.values[0];
        for (p, v) in d.phi.values.iter().zip(&s.values) {
            assert!((p + v - offset).abs() < 1e-12);
        }
    }

    #[test]
    fn pure_transverse_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (dim, bc) in [(2, Boundary::Periodic), (3, Boundary::Open)] {
            let lat = build_lattice(dim, 3, bc).unwrap();
            let l = random_field(&lat, CellKind::Plaquette, &mut rng);
            let f = crate::lattice::curl_plaq_to_link(&lat, &l).unwrap();
            let d = helmholtz_decompose(&lat, &f).unwrap();
            assert!(d.f_long.max_abs() < 1e-12);
            assert!(max_diff(&d.f_trans.values, &f.values) < 1e-12);
        }
    }

    #[test]
    fn constant_field_goes_into_global_loop() {
        let lat = build_lattice(2, 3, Boundary::Periodic).unwrap();
        let v = lat
            .cells(CellKind::Link)
            .map(|c| if c.orient == 0 { 1.0 } else { 0.0 })
            .collect();
        let f = FieldVector::new(&lat, CellKind::Link, v).unwrap();
        let d = helmholtz_decompose(&lat, &f).unwrap();
        assert!(d.f_long.max_abs() < 1e-12);
        assert!(d.l_plaq.max_abs() < 1e-12);
        let g = d.global_loops.unwrap();
        assert!((g[0] - 3.0).abs() < 1e-12 && g[1].abs() < 1e-12);
    }

    #[test]
    fn three_by_three_open_shifts() {
        let lat = build_lattice(2, 3, Boundary::Open).unwrap();
        let link: LinkRef = "1,1:1".parse().unwrap();
        let t = link_shift_table(&lat, &link, true).unwrap();
        let (s, g) = t.exact_strings().unwrap();
        assert!(g.is_empty());
        let at = |x: isize, y: isize| s[lat.plaq_index([x, y, 0], 2).unwrap()].clone();
        let rows = [
            [at(0, 2), at(1, 2), at(2, 2)],
            [at(0, 1), at(1, 1), at(2, 1)],
            [at(0, 0), at(1, 0), at(2, 0)],
        ];
        assert_eq!(rows[0], ["1/28", "9/112", "1/28"]);
        assert_eq!(rows[1], ["1/16", "1/4", "1/16"]);
        assert_eq!(rows[2], ["-1/28", "-23/112", "-1/28"]);
    }

    #[test]
    fn exact_and_float_shifts_agree() {
        for bc in [Boundary::Open, Boundary::Periodic] {
            let lat = build_lattice(2, 4, bc).unwrap();
            let link: LinkRef = "2,1:2".parse().unwrap();
            let e = link_shift_table(&lat, &link, true).unwrap();
            let f = link_shift_table(&lat, &link, false).unwrap();
            assert!(e.is_exact() && !f.is_exact());
            assert!(max_diff(&e.full(), &f.full()) < 1e-13);
        }
    }

    #[test]
    fn periodic_global_shift_is_one_over_n() {
        let lat = build_lattice(2, 4, Boundary::Periodic).unwrap();
        let t = link_shift_table(&lat, &"0,3:1".parse().unwrap(), true).unwrap();
        let (_, g) = t.exact_strings().unwrap();
        assert_eq!(g, ["1/4", "0"]);
    }

    #[test]
    fn shift_reconstruction_and_range() {
        for dim in [2, 3] {
            for bc in [Boundary::Open, Boundary::Periodic] {
                for n in 2..4 {
                    let lat = build_lattice(dim, n, bc).unwrap();
                    let pt = transverse_projector_dense(&lat);
                    let r = lat.curl_plaq_to_link_map().to_f64();
                    for t in all_shift_tables(&lat) {
                        let mut e = r.apply(&t.shifts);
                        let axis = axis_field(&lat, &t.global_shifts);
                        e.iter_mut().zip(&axis).for_each(|(a, b)| *a += b);
                        let col: Vec<f64> = pt.column(t.link_index).iter().copied().collect();
                        assert!(max_diff(&e, &col) < 1e-12);
                        for s in t.full() {
                            assert!(s > -0.5 && s <= 0.5 + 1e-15, "{dim} {bc} {n}: {s}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn hopping_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for bc in [Boundary::Open, Boundary::Periodic] {
            let lat = build_lattice(2, 3, bc).unwrap();
            let pt = transverse_projector_dense(&lat);
            let tables = all_shift_tables(&lat);
            for _ in 0..10 {
                let phi = random_field(&lat, CellKind::Link, &mut rng).values;
                let want = dense_apply(&pt, &phi);
                for t in &tables {
                    assert!((shifted_flux(&lat, t, &phi) - want[t.link_index]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn projector_properties() {
        for (dim, bc) in [(2, Boundary::Open), (2, Boundary::Periodic), (3, Boundary::Open)] {
            let lat = build_lattice(dim, 2, bc).unwrap();
            let p = transverse_projector_dense(&lat);
            assert!((&p * &p - &p).amax() < 1e-10);
            let g = lat.gradient_map().to_dense();
            assert!((&p * g).amax() < 1e-12);
        }
        for n in 1..4 {
            let lat = build_lattice(2, n, Boundary::Open).unwrap();
            let rank = transverse_projector_dense(&lat).rank(1e-9);
            assert_eq!(rank, lat.n_links() - (lat.n_sites() - 1));
        }
    }

    #[test]
    fn plaquette_shifts_decay_on_torus() {
        let lat = build_lattice(2, 8, Boundary::Periodic).unwrap();
        let t = link_shift_table(&lat, &"0,0:1".parse().unwrap(), false).unwrap();
        let kp = crate::greens::hodge_pinv(&lat);
        let l = t.link_index;
        let col: Vec<(usize, f64)> = lat
            .curl_link_to_plaq_map()
            .triplets()
            .into_iter()
            .filter(|x| x.1 == l)
            .map(|(p, _, v)| (p, v as f64))
            .collect();
        // maximum of |s_plaq| over square rings around the link midpoint (0.5, 0)
        let mut rings = std::collections::BTreeMap::<usize, f64>::new();
        for (p, c) in lat.cells(CellKind::Plaquette).enumerate() {
            let s: f64 = col.iter().map(|&(q, v)| kp[(p, q)] * v).sum();
            let wrap = |d: f64| {
                let d = d.rem_euclid(8.0);
                d.min(8.0 - d)
            };
            let dx = wrap(c.coords[0] as f64);
            let dy = wrap(c.coords[1] as f64 + 0.5);
            let ring = dx.max(dy).floor() as usize;
            let e = rings.entry(ring).or_insert(0.0);
            *e = e.max(s.abs());
        }
        let maxima: Vec<f64> = rings.values().copied().collect();
        assert!(maxima.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{maxima:?}");
        assert!(maxima[0] > 10.0 * maxima[maxima.len() - 1]);
    }
}
