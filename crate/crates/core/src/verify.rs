//! Named invariant checks, grouped by module, shared by the command line and
//! the acceptance tests.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::ModelConfig;
use crate::dualmap::{commutator_deviation, constraint_set, dual_embedding, expected_dof, Formulation};
use crate::error::{Error, Result};
use crate::greens::{greens_plaquettes_obc, greens_sites, poisson_solve};
use crate::hamiltonian::{h_dual_bl_classical, ModelParams};
use crate::helmholtz::{all_shift_tables, axis_field, helmholtz_decompose, transverse_projector_dense};
use crate::hilbert::{gauss_operator, total_charge, total_m, Basis, MatterKind};
use crate::lattice::{CellKind, FieldVector, Lattice};
use crate::spectrum::{lowest_eigenpairs, Method};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    /// Measured deviation (or count) compared against `tolerance`.
    pub value: f64,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Check {
    pub fn measured(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            status: if value <= tolerance { Status::Pass } else { Status::Fail },
            value,
            tolerance,
            detail: None,
        }
    }

    pub fn skipped(name: &str, why: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: Status::Skipped,
            value: 0.0,
            tolerance: 0.0,
            detail: Some(why.into()),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }

    fn from_result(name: &str, tolerance: f64, r: Result<f64>) -> Self {
        match r {
            Ok(v) => Self::measured(name, v, tolerance),
            Err(Error::DimensionLimit { dim, limit }) => {
                Self::skipped(name, format!("Hilbert space dimension {dim} above limit {limit}"))
            }
            Err(e) => Self {
                name: name.into(),
                status: Status::Fail,
                value: f64::INFINITY,
                tolerance,
                detail: Some(e.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub lattice: String,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl VerifyReport {
    fn new(lat: &Lattice, seed: u64, checks: Vec<Check>) -> Self {
        let passed = checks.iter().all(|c| c.status != Status::Fail);
        Self {
            lattice: lat.label(),
            seed,
            checks,
            passed,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Random samples for the sampled invariants.
    pub samples: usize,
    /// Largest product-space dimension used by the Hamiltonian checks.
    pub hilbert_limit: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: 20,
            hilbert_limit: 1 << 22,
        }
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn random_values(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Closed-form cell counts.
pub fn expected_counts(dim: usize, n: usize, periodic: bool) -> [usize; 3] {
    let (n0, n1) = (n, if periodic { n } else { n + 1 });
    let sites = n1.pow(dim as u32);
    let links = dim * n0 * n1.pow(dim as u32 - 1);
    let plaqs = if dim == 2 { n0 * n0 } else { 3 * n0 * n0 * n1 };
    [sites, links, plaqs]
}

/// Integer identities of the difference operators; values are the number of
/// mismatching entries.
pub fn lattice_checks(lat: &Lattice) -> Vec<Check> {
    let mut out = Vec::new();
    let want = expected_counts(lat.dim(), lat.extent(), lat.is_periodic());
    let got = [lat.n_sites(), lat.n_links(), lat.n_plaqs()];
    let mismatch = want.iter().zip(&got).filter(|(a, b)| a != b).count();
    out.push(Check::measured("lattice.counts", mismatch as f64, 0.0).with_detail(format!("{got:?}")));

    let grad = lat.gradient_map();
    let curl = lat.curl_link_to_plaq_map();
    let rot = lat.curl_plaq_to_link_map();
    let div = lat.divergence_map();
    out.push(Check::measured(
        "lattice.curl_of_gradient",
        curl.compose(grad, "c_g").nnz() as f64,
        0.0,
    ));
    out.push(Check::measured(
        "lattice.divergence_of_curl",
        div.compose(rot, "d_r").nnz() as f64,
        0.0,
    ));
    let lap = div.compose(grad, "d_g");
    let diff = lap.to_dense() - lat.site_laplacian_map().to_dense();
    out.push(Check::measured(
        "lattice.divergence_of_gradient",
        diff.iter().filter(|v| **v != 0.0).count() as f64,
        0.0,
    ));
    let adj = rot.to_dense() - curl.to_dense().transpose();
    out.push(Check::measured(
        "lattice.curl_adjoint",
        adj.iter().filter(|v| **v != 0.0).count() as f64,
        0.0,
    ));
    if lat.dim() == 3 {
        out.push(Check::measured(
            "lattice.cube_divergence_of_curl",
            lat.cube_divergence_map().compose(curl, "dc_c").nnz() as f64,
            0.0,
        ));
    }
    out
}

/// Residual, symmetry and normalisation of the site Green's function.
pub fn greens_checks(lat: &Lattice, rng: &mut ChaCha8Rng) -> Vec<Check> {
    let mut out = Vec::new();
    let g = greens_sites(lat);
    let v = lat.n_sites();
    let neg_lap = -lat.site_laplacian_map().to_dense();
    let target = DMatrix::identity(v, v) - DMatrix::from_element(v, v, 1.0 / v as f64);
    out.push(Check::measured(
        "greens.site_residual",
        (&neg_lap * &g.values - target).amax(),
        1e-10,
    ));
    out.push(Check::measured("greens.site_symmetry", g.max_asymmetry(), 1e-12));
    let col_sum = (0..v).map(|y| g.values.column(y).sum().abs()).fold(0.0, f64::max);
    out.push(Check::measured("greens.site_zero_sum", col_sum, 1e-10));

    let mut rho = random_values(v, rng);
    let mean = rho.iter().sum::<f64>() / v as f64;
    rho.iter_mut().for_each(|x| *x -= mean);
    let r = FieldVector::new(lat, CellKind::Site, rho.clone())
        .and_then(|f| poisson_solve(lat, &f))
        .map(|phi| max_abs_diff((&neg_lap * DVector::from_vec(phi.values)).as_slice(), &rho));
    out.push(Check::from_result("greens.poisson_right_inverse", 1e-10, r));

    if lat.is_periodic() {
        out.push(Check::skipped("greens.plaquette_residual", "open boundaries only"));
    } else {
        let r = greens_plaquettes_obc(lat).map(|gp| {
            let np = lat.n_plaqs();
            let lp = -lat.plaq_laplacian_map().to_dense();
            (lp * &gp.values - DMatrix::identity(np, np))
                .amax()
                .max(gp.max_asymmetry())
        });
        out.push(Check::from_result("greens.plaquette_residual", 1e-10, r));
    }
    out
}

/// Largest violation of `F = F_long + F_trans`, `∇·F_trans = 0`,
/// `∇×F_long = 0` and `F_long·F_trans = 0` over `samples` random fields.
pub fn helmholtz_round_trip_error(lat: &Lattice, samples: usize, rng: &mut ChaCha8Rng) -> Result<[f64; 4]> {
    let div = lat.divergence_map().to_f64();
    let curl = lat.curl_link_to_plaq_map().to_f64();
    let mut err = [0.0f64; 4];
    for _ in 0..samples {
        let f = FieldVector::new(lat, CellKind::Link, random_values(lat.n_links(), rng))?;
        let d = helmholtz_decompose(lat, &f)?;
        let sum: Vec<f64> = d
            .f_long
            .values
            .iter()
            .zip(&d.f_trans.values)
            .map(|(a, b)| a + b)
            .collect();
        err[0] = err[0].max(max_abs_diff(&sum, &f.values));
        err[1] = err[1].max(max_abs(&div.apply(&d.f_trans.values)));
        err[2] = err[2].max(max_abs(&curl.apply(&d.f_long.values)));
        let dot: f64 = d.f_long.values.iter().zip(&d.f_trans.values).map(|(a, b)| a * b).sum();
        err[3] = err[3].max(dot.abs());
    }
    Ok(err)
}

pub fn helmholtz_checks(lat: &Lattice, samples: usize, rng: &mut ChaCha8Rng) -> Vec<Check> {
    let mut out = Vec::new();
    match helmholtz_round_trip_error(lat, samples, rng) {
        Ok(e) => {
            out.push(Check::measured("helmholtz.reconstruction", e[0], 1e-12));
            out.push(Check::measured("helmholtz.transverse_divergence_free", e[1], 1e-12));
            out.push(Check::measured("helmholtz.longitudinal_curl_free", e[2], 1e-12));
            out.push(Check::measured("helmholtz.orthogonality", e[3], 1e-10));
        }
        Err(e) => out.push(Check::from_result("helmholtz.reconstruction", 1e-12, Err(e))),
    }
    let p = transverse_projector_dense(lat);
    let idem = (&p * &p - &p).amax().max((&p - p.transpose()).amax());
    out.push(Check::measured("helmholtz.projector_idempotent", idem, 1e-10));

    let r = lat.curl_plaq_to_link_map().to_f64();
    let mut recon: f64 = 0.0;
    let mut outside = 0usize;
    for t in all_shift_tables(lat) {
        let mut e = r.apply(&t.shifts);
        let axis = axis_field(lat, &t.global_shifts);
        e.iter_mut().zip(&axis).for_each(|(a, b)| *a += b);
        let col: Vec<f64> = p.column(t.link_index).iter().copied().collect();
        recon = recon.max(max_abs_diff(&e, &col));
        outside += t.shifts.iter().filter(|s| !(**s > -0.5 && **s <= 0.5 + 1e-12)).count();
    }
    out.push(Check::measured("helmholtz.shift_reconstruction", recon, 1e-12));
    out.push(
        Check::measured("helmholtz.shift_range", outside as f64, 0.0)
            .with_detail("number of plaquette shifts outside (-1/2, 1/2]"),
    );
    out
}

/// Dual-variable map identities. `samples` random vectors are used by the
/// sampled identities.
pub fn dualmap_checks(lat: &Lattice, samples: usize, seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    for f in [Formulation::Original, Formulation::ThetaM] {
        let cs = constraint_set(lat, f);
        let want = expected_dof(lat.dim(), lat.extent(), lat.is_periodic());
        out.push(
            Check::measured(
                &format!("dualmap.dof_{f}"),
                (cs.dof.physical_dof as f64 - want as f64).abs(),
                0.0,
            )
            .with_detail(format!("physical_dof = {}, closed form = {want}", cs.dof.physical_dof)),
        );
    }
    match dual_embedding(lat, Formulation::BL) {
        Ok(w) => out.push(Check::measured(
            "dualmap.image_transverse",
            lat.divergence_map().compose(&w.map, "d_w").nnz() as f64,
            0.0,
        )),
        Err(e) => out.push(Check::from_result("dualmap.image_transverse", 0.0, Err(e))),
    }
    if lat.dim() != 2 {
        for name in [
            "dualmap.commutator",
            "dualmap.quadratic_form",
            "dualmap.hopping_identity",
        ] {
            out.push(Check::skipped(name, "two dimensions only"));
        }
        return out;
    }
    let (literal, sector) = commutator_deviation(lat);
    let value = if lat.is_periodic() { sector } else { literal };
    out.push(Check::measured("dualmap.commutator", value, 1e-10).with_detail(format!(
        "literal deviation {literal:.3e}, on the constraint sector {sector:.3e}"
    )));
    match h_dual_bl_classical(lat, &ModelParams::default(), samples, seed) {
        Ok(bl) => {
            out.push(Check::measured(
                "dualmap.quadratic_form",
                bl.report.quadratic_form_error,
                1e-10,
            ));
            out.push(Check::measured(
                "dualmap.hopping_identity",
                bl.report.hopping_identity_error,
                1e-10,
            ));
        }
        Err(e) => out.push(Check::from_result("dualmap.quadratic_form", 1e-10, Err(e))),
    }
    out
}

/// Hermiticity, gauge invariance and block structure of both quantum
/// Hamiltonians. Staggered fermions are used when they fit into `limit`,
/// otherwise pure gauge theory.
pub fn hamiltonian_checks(lat: &Lattice, limit: u64) -> Vec<Check> {
    let names = [
        "hamiltonian.original_hermitian",
        "hamiltonian.gauss_commutation",
        "hamiltonian.dual_hermitian",
        "hamiltonian.dual_block_structure",
        "hamiltonian.dual_sector_closed",
    ];
    if lat.dim() != 2 {
        return names.iter().map(|n| Check::skipped(n, "two dimensions only")).collect();
    }
    let mut cfg = ModelConfig::new(2, lat.extent(), lat.boundary());
    cfg.matter = MatterKind::StaggeredFermion;
    cfg.t = 1.0;
    cfg.m = 0.5;
    cfg.cutoffs.links = 1;
    cfg.cutoffs.plaquettes = 1;
    cfg.cutoffs.global = 1;
    let fits = |c: &ModelConfig| {
        [Formulation::Original, Formulation::ThetaM]
            .iter()
            .all(|f| c.spec(*f, Some(limit)).is_ok())
    };
    if !fits(&cfg) {
        cfg.matter = MatterKind::None;
        cfg.t = 0.0;
        cfg.m = 0.0;
    }
    let label = format!("matter = {:?}, cutoffs = 1", cfg.matter);
    let mut out = Vec::new();

    let orig = (|| -> Result<(f64, f64)> {
        let spec = cfg.spec(Formulation::Original, Some(limit))?;
        let (h, sector) = cfg.hamiltonian(Formulation::Original, Some(limit))?;
        let hs = h.materialize(&sector)?;
        // on small spaces the commutators are formed explicitly
        let comm = if spec.dim() <= 1 << 13 {
            let full = Basis::full(&spec);
            let hf = h.materialize(&full)?;
            let mut worst: f64 = 0.0;
            for x in 0..lat.n_sites() {
                worst = worst.max(hf.commutator_norm(&gauss_operator(&spec, x)?.materialize(&full)?));
            }
            worst
        } else {
            hs.leakage as f64
        };
        Ok((hs.hermiticity_error(), comm))
    })();
    match orig {
        Ok((herm, comm)) => {
            out.push(Check::measured(names[0], herm, 1e-12).with_detail(label.clone()));
            out.push(Check::measured(names[1], comm, 1e-10).with_detail(label.clone()));
        }
        Err(e) => {
            let msg = e.to_string();
            out.push(Check::from_result(names[0], 1e-12, Err(e)));
            out.push(Check::skipped(names[1], msg));
        }
    }

    let dual = (|| -> Result<(f64, f64, f64)> {
        let spec = cfg.spec(Formulation::ThetaM, Some(limit))?;
        let (h, sector) = cfg.hamiltonian(Formulation::ThetaM, Some(limit))?;
        let hs = h.materialize(&sector)?;
        let blocks = if spec.dim() <= 1 << 16 {
            let hf = h.materialize(&Basis::full(&spec))?;
            let mut off = 0;
            if lat.is_periodic() {
                let sm = total_m(&spec)?;
                off += hf.off_block_entries(|i| sm.diagonal_value(i as u64).re.round() as i64);
            }
            if spec.has_matter() {
                let q = total_charge(&spec)?;
                off += hf.off_block_entries(|i| q.diagonal_value(i as u64).re.round() as i64);
            }
            off as f64
        } else {
            0.0
        };
        Ok((hs.hermiticity_error(), blocks, hs.leakage as f64))
    })();
    match dual {
        Ok((herm, blocks, leak)) => {
            out.push(Check::measured(names[2], herm, 1e-12).with_detail(label.clone()));
            out.push(Check::measured(names[3], blocks, 0.0).with_detail(label.clone()));
            out.push(Check::measured(names[4], leak, 0.0).with_detail(label));
        }
        Err(e) => {
            let msg = e.to_string();
            out.push(Check::from_result(names[2], 1e-12, Err(e)));
            out.push(Check::skipped(names[3], msg.clone()));
            out.push(Check::skipped(names[4], msg));
        }
    }
    out
}

/// Max level difference between the Gauss-projected original Hamiltonian at
/// link cutoff `lam` and the θ/M Hamiltonian at plaquette cutoff `4 lam`, for
/// the single-plaquette open lattice without matter.
pub fn pure_gauge_exactness(lam: u32, g2: f64) -> Result<f64> {
    let mut cfg = ModelConfig::new(2, 1, crate::lattice::Boundary::Open);
    cfg.g2 = g2;
    cfg.cutoffs.links = lam;
    cfg.cutoffs.plaquettes = 4 * lam;
    let spectrum = |f| -> Result<Vec<f64>> {
        let (h, b) = cfg.hamiltonian(f, None)?;
        let m = h.materialize(&b)?;
        let n = m.dim();
        Ok(lowest_eigenpairs(&m, n, 0, Some(Method::Dense))?.0.eigenvalues)
    };
    let a = spectrum(Formulation::Original)?;
    let b = spectrum(Formulation::ThetaM)?;
    if a.len() != b.len() {
        return Ok(f64::INFINITY);
    }
    Ok(max_abs_diff(&a, &b))
}

pub fn spectrum_checks(lat: &Lattice, seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    // hodge operator of the geometry as a real symmetric test matrix
    let k = crate::greens::hodge_operator(lat);
    let trip = k.triplets().into_iter().map(|(r, c, v)| (r, c, v as f64)).collect();
    let m = crate::hilbert::OperatorMatrix::from_real_triplets(k.rows(), trip);
    let want = 3.min(m.dim());
    let r = lowest_eigenpairs(&m, want, seed, Some(Method::Dense)).and_then(|(d, _)| {
        let (it, _) = lowest_eigenpairs(&m, want, seed, Some(Method::Iterative))?;
        Ok(max_abs_diff(&d.eigenvalues, &it.eigenvalues))
    });
    out.push(Check::from_result("spectrum.iterative_vs_dense", 1e-9, r));
    if lat.dim() == 2 && !lat.is_periodic() && lat.extent() == 1 {
        let r = (1..=2)
            .map(|l| pure_gauge_exactness(l, 1.0))
            .try_fold(0.0f64, |m, v| v.map(|v| m.max(v)));
        out.push(Check::from_result("spectrum.pure_gauge_exactness", 1e-12, r));
    } else {
        out.push(Check::skipped(
            "spectrum.pure_gauge_exactness",
            "single-plaquette open lattice only",
        ));
    }
    out
}

/// Map identities only (used by `check-maps`).
pub fn check_maps(lat: &Lattice, opts: VerifyOptions) -> VerifyReport {
    let mut checks = lattice_checks(lat);
    checks.extend(dualmap_checks(lat, opts.samples, opts.seed));
    VerifyReport::new(lat, opts.seed, checks)
}

/// Every invariant suite applicable to the geometry.
pub fn verify_all(lat: &Arc<Lattice>, opts: VerifyOptions) -> VerifyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut checks = lattice_checks(lat);
    checks.extend(greens_checks(lat, &mut rng));
    checks.extend(helmholtz_checks(lat, opts.samples, &mut rng));
    checks.extend(dualmap_checks(lat, opts.samples, opts.seed));
    checks.extend(hamiltonian_checks(lat, opts.hilbert_limit));
    checks.extend(spectrum_checks(lat, opts.seed));
    VerifyReport::new(lat, opts.seed, checks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, Boundary};

    #[test]
    fn verify_all_passes_on_small_geometries() {
        for (dim, n, bc) in [
            (2, 1, Boundary::Open),
            (2, 2, Boundary::Open),
            (2, 2, Boundary::Periodic),
            (3, 2, Boundary::Open),
            (3, 2, Boundary::Periodic),
        ] {
            let lat = build_lattice(dim, n, bc).unwrap();
            let r = verify_all(
                &lat,
                VerifyOptions {
                    samples: 5,
                    ..Default::default()
                },
            );
            for c in &r.checks {
                assert_ne!(c.status, Status::Fail, "{}: {c:?}", r.lattice);
            }
        }
    }

    #[test]
    fn counts_match_closed_forms() {
        assert_eq!(expected_counts(2, 3, false), [16, 24, 9]);
        assert_eq!(expected_counts(3, 2, true), [8, 24, 24]);
        assert_eq!(expected_counts(3, 1, false), [8, 12, 6]);
    }
}
