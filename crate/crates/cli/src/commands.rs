//! One function per subcommand. Each returns the JSON report and whether its
//! checks passed.

use nalgebra::DMatrix;
use serde_json::{json, Value};

use dualqed::dualmap::{constraint_set, expected_dof, l_from_e_map, m_from_e_map, ConstraintKind};
use dualqed::greens::hodge_operator;
use dualqed::hamiltonian::h_dual_bl_classical;
use dualqed::helmholtz::{axis_field, transverse_projector_dense};
use dualqed::spectrum::{compare_formulations, config_spectrum, sector_labels};
use dualqed::verify::{self, VerifyOptions};
use dualqed::{
    d_matrix, dual_embedding, greens_plaquettes_obc, greens_sites, link_shift_table, modified_greens, CellKind,
    Formulation, GreensTable, IntMap, Lattice, LinkRef, RealMap, Space,
};

use crate::output::{sidecar_path, write_atomic, write_json};
use crate::{CliError, Outcome, RunConfig};

const INLINE_LIMIT: usize = 256;
const PROJECTOR_LINK_LIMIT: usize = 4000;

fn to_value<T: serde::Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Io(e.to_string()))
}

/// Writes the report to `--out` when given and wraps it.
fn finish(rc: &RunConfig, report: Value, passed: bool) -> Result<Outcome, CliError> {
    if let Some(path) = &rc.out {
        write_json(path, &report)?;
    }
    Ok(Outcome { report, passed })
}

enum AnyMap {
    Int(IntMap),
    Real(RealMap),
}

impl AnyMap {
    fn describe(&self) -> (String, Space, Space, usize, usize, usize) {
        match self {
            AnyMap::Int(m) => (m.name.clone(), m.domain, m.codomain, m.rows(), m.cols(), m.nnz()),
            AnyMap::Real(m) => (m.name.clone(), m.domain, m.codomain, m.rows(), m.cols(), m.nnz()),
        }
    }

    fn csv(&self, label: &str) -> Result<Vec<u8>, CliError> {
        let mut buf = Vec::new();
        match self {
            AnyMap::Int(m) => m.write_csv(label, &mut buf),
            AnyMap::Real(m) => m.write_csv(label, &mut buf),
        }
        .map_err(|e| CliError::Io(e.to_string()))?;
        Ok(buf)
    }
}

/// Writes a matrix as CSV plus a JSON sidecar; returns the sidecar content.
fn write_matrix(rc: &RunConfig, lat: &Lattice, map: &AnyMap, extra: Value) -> Result<Value, CliError> {
    let (name, domain, codomain, rows, cols, nnz) = map.describe();
    let mut meta = json!({
        "op": name,
        "lattice": lat.label(),
        "format": "csv triplets: one '#' header line, then row,col,value (0-based, row-major)",
        "rows": rows,
        "cols": cols,
        "nnz": nnz,
        "domain": domain.to_string(),
        "codomain": codomain.to_string(),
    });
    if let (Value::Object(m), Value::Object(e)) = (&mut meta, extra) {
        m.extend(e);
    }
    if let Some(path) = &rc.out {
        write_atomic(path, &map.csv(&lat.label())?)?;
        let side = sidecar_path(path);
        write_json(&side, &meta)?;
        meta["csv"] = json!(path.display().to_string());
        meta["sidecar"] = json!(side.display().to_string());
    }
    Ok(meta)
}

fn dense_rows(m: &dualqed::sprs::CsMat<f64>) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; m.cols()]; m.rows()];
    for (r, row) in m.outer_iterator().enumerate() {
        for (c, v) in row.iter() {
            out[r][c] = *v;
        }
    }
    out
}

pub fn greens(rc: &RunConfig, kind: &str) -> Result<Outcome, CliError> {
    let lat = rc.model.lattice()?;
    let (table, space, residual): (GreensTable, Space, f64) = match kind {
        "sites" => {
            let g = greens_sites(&lat).as_ref().clone();
            let v = lat.n_sites();
            let lap = -lat.site_laplacian_map().to_dense();
            let target = dualqed_identity_minus_mean(v);
            let res = (lap * &g.values - target).amax();
            (g, Space::cells(CellKind::Site, v), res)
        }
        "plaquettes" => {
            let g = greens_plaquettes_obc(&lat)?.as_ref().clone();
            let np = lat.n_plaqs();
            let lap = -lat.plaq_laplacian_map().to_dense();
            let res = (lap * &g.values - identity(np)).amax();
            (g, Space::cells(CellKind::Plaquette, np), res)
        }
        "modified" => {
            let g = modified_greens(&lat)?;
            let d = d_matrix(&lat)?.to_dense();
            let res = (&d * &g.values * &d - &d).amax();
            (g, dualqed::dualmap::dual_space(&lat), res)
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown Green's function kind '{other}' (sites, plaquettes, modified)"
            )))
        }
    };
    let asym = table.max_asymmetry();
    let map = RealMap::from_dense(format!("greens_{kind}"), space, space, &table.values, 0.0);
    let extra = json!({
        "kind": table.kind,
        "normalization": table.normalization,
        "global_components": table.global,
        "max_asymmetry": asym,
        "residual": residual,
    });
    let mut report = write_matrix(rc, &lat, &AnyMap::Real(map.clone()), extra)?;
    if rc.out.is_none() && table.len() <= INLINE_LIMIT {
        report["values"] = json!(dense_rows(&map.matrix));
    }
    let passed = asym <= 1e-12 && residual <= 1e-10;
    report["passed"] = json!(passed);
    Ok(Outcome { report, passed })
}

fn identity(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}

fn dualqed_identity_minus_mean(n: usize) -> DMatrix<f64> {
    identity(n) - DMatrix::from_element(n, n, 1.0 / n as f64)
}

pub fn shifts(rc: &RunConfig, link: &LinkRef) -> Result<Outcome, CliError> {
    let lat = rc.model.lattice()?;
    let table = link_shift_table(&lat, link, rc.exact_rational)?;
    let exact = table.exact_strings();
    let dim = lat.dim();
    let plaquettes: Vec<Value> = lat
        .cells(CellKind::Plaquette)
        .enumerate()
        .map(|(p, cell)| {
            let mut v = json!({
                "index": p,
                "coords": &cell.coords[..dim],
                "normal": cell.orient + 1,
                "shift": table.shifts[p],
            });
            if let Some((s, _)) = &exact {
                v["exact"] = json!(s[p]);
            }
            v
        })
        .collect();

    let mut order: Vec<usize> = (0..table.shifts.len()).collect();
    order.sort_by(|&a, &b| table.shifts[a].total_cmp(&table.shifts[b]));
    let multiset: Value = match &exact {
        Some((s, _)) => json!(order.iter().map(|&p| s[p].clone()).collect::<Vec<_>>()),
        None => json!(order.iter().map(|&p| table.shifts[p]).collect::<Vec<_>>()),
    };

    let mut report = json!({
        "lattice": lat.label(),
        "link": link.to_string(),
        "link_index": table.link_index,
        "exact_requested": rc.exact_rational,
        "exact": table.is_exact(),
        "plaquettes": plaquettes,
        "multiset": multiset,
        "global_shifts": table.global_shifts,
    });
    if let Some((_, g)) = &exact {
        report["global_exact"] = json!(g);
    }
    if rc.exact_rational && !table.is_exact() {
        report["note"] = json!(format!(
            "exact arithmetic is limited to {} plaquettes; floating-point values reported",
            dualqed::helmholtz::EXACT_PLAQ_LIMIT
        ));
    }
    if dim == 2 {
        // rows from the top (x2 = N-1) down, columns x1 = 0..N-1
        let n = lat.extent() as isize;
        let grid: Vec<Vec<Value>> = (0..n)
            .rev()
            .map(|y| {
                (0..n)
                    .map(|x| {
                        let p = lat.plaq_index([x, y, 0], 2).expect("plaquette in range");
                        match &exact {
                            Some((s, _)) => json!(s[p]),
                            None => json!(table.shifts[p]),
                        }
                    })
                    .collect()
            })
            .collect();
        report["grid"] = json!(grid);
    }

    let in_range = table.shifts.iter().all(|s| *s > -0.5 && *s <= 0.5 + 1e-12);
    report["in_range"] = json!(in_range);
    let mut passed = true;
    if lat.n_links() <= PROJECTOR_LINK_LIMIT {
        let pt = transverse_projector_dense(&lat);
        let mut e = lat.curl_plaq_to_link_map().to_f64().apply(&table.shifts);
        for (a, b) in e.iter_mut().zip(axis_field(&lat, &table.global_shifts)) {
            *a += b;
        }
        let err = e
            .iter()
            .enumerate()
            .map(|(l, v)| (v - pt[(l, table.link_index)]).abs())
            .fold(0.0, f64::max);
        report["reconstruction_error"] = json!(err);
        passed = err <= 1e-12;
    }
    report["passed"] = json!(passed);
    finish(rc, report, passed)
}

pub fn dof(rc: &RunConfig) -> Result<Outcome, CliError> {
    let lat = rc.model.lattice()?;
    let closed = expected_dof(lat.dim(), lat.extent(), lat.is_periodic());
    let describe = |f: Formulation| -> Result<(usize, Value), CliError> {
        let cs = constraint_set(&lat, f);
        let kinds = [
            ConstraintKind::Gauss,
            ConstraintKind::Global2d,
            ConstraintKind::Cube3d,
            ConstraintKind::Slice3d,
        ];
        let mut ranks = serde_json::Map::new();
        for k in kinds {
            let count = cs.kinds.iter().filter(|x| **x == k).count();
            if count > 0 {
                let key = to_value(&k)?.as_str().unwrap_or_default().to_string();
                ranks.insert(key, json!({ "count": count, "rank": cs.rank_of(k) }));
            }
        }
        let mut v = to_value(&cs.dof)?;
        v["constraints_by_kind"] = Value::Object(ranks);
        Ok((cs.dof.physical_dof, v))
    };
    let (orig_dof, original) = describe(Formulation::Original)?;
    let (dual_dof, dual) = describe(Formulation::ThetaM)?;
    let passed = orig_dof == closed && dual_dof == closed;
    let report = json!({
        "lattice": lat.label(),
        "physical_dof": orig_dof,
        "closed_form": closed,
        "original": original,
        "dual": dual,
        "passed": passed,
    });
    finish(rc, report, passed)
}

pub fn check_maps(rc: &RunConfig, samples: usize) -> Result<Outcome, CliError> {
    let lat = rc.model.lattice()?;
    let r = verify::check_maps(
        &lat,
        VerifyOptions {
            seed: rc.seed,
            samples,
            ..Default::default()
        },
    );
    let passed = r.passed;
    finish(rc, to_value(&r)?, passed)
}

pub fn verify_all(rc: &RunConfig, samples: usize) -> Result<Outcome, CliError> {
    let lat = rc.model.lattice()?;
    let r = verify::verify_all(
        &lat,
        VerifyOptions {
            seed: rc.seed,
            samples,
            ..Default::default()
        },
    );
    let passed = r.passed;
    finish(rc, to_value(&r)?, passed)
}

pub const OPERATORS: &[&str] = &[
    "gradient",
    "divergence",
    "curl",
    "curl_dual",
    "cube_divergence",
    "laplacian_sites",
    "laplacian_plaquettes",
    "hodge",
    "transverse_projector",
    "dual_embedding",
    "m_from_e",
    "l_from_e",
    "d_matrix",
];

pub fn dump_op(rc: &RunConfig, op: &str) -> Result<Outcome, CliError> {
    if rc.out.is_none() {
        return Err(CliError::Config("dump-op requires --out".into()));
    }
    let lat = rc.model.lattice()?;
    let map = match op {
        "gradient" => AnyMap::Int(lat.gradient_map().clone()),
        "divergence" => AnyMap::Int(lat.divergence_map().clone()),
        "curl" => AnyMap::Int(lat.curl_link_to_plaq_map().clone()),
        "curl_dual" => AnyMap::Int(lat.curl_plaq_to_link_map().clone()),
        "cube_divergence" => {
            if lat.dim() != 3 {
                return Err(CliError::Config("cube_divergence needs a 3D lattice".into()));
            }
            AnyMap::Int(lat.cube_divergence_map().clone())
        }
        "laplacian_sites" => AnyMap::Int(lat.site_laplacian_map().clone()),
        "laplacian_plaquettes" => AnyMap::Int(lat.plaq_laplacian_map().clone()),
        "hodge" => AnyMap::Int(hodge_operator(&lat)),
        "transverse_projector" => AnyMap::Real(dualqed::transverse_projector(&lat)),
        "dual_embedding" => AnyMap::Int(dual_embedding(&lat, Formulation::ThetaM)?.map),
        "m_from_e" => AnyMap::Int(m_from_e_map(&lat)),
        "l_from_e" => AnyMap::Real(l_from_e_map(&lat)),
        "d_matrix" => AnyMap::Int(d_matrix(&lat)?),
        other => {
            return Err(CliError::Config(format!(
                "unknown operator '{other}'; one of {}",
                OPERATORS.join(", ")
            )))
        }
    };
    let report = write_matrix(rc, &lat, &map, json!({}))?;
    Ok(Outcome { report, passed: true })
}

pub fn build(rc: &RunConfig) -> Result<Outcome, CliError> {
    let cfg = &rc.model;
    let f = cfg.formulation;
    if f == Formulation::BL {
        let lat = cfg.lattice()?;
        let bl = h_dual_bl_classical(&lat, &cfg.params(), 20, rc.seed)?;
        let passed = bl.report.passed;
        let report = json!({
            "config": cfg,
            "formulation": f,
            "variables": bl.quadratic_form.nrows(),
            "shift_tables": bl.shift_tables.len(),
            "classical_checks": bl.report,
            "passed": passed,
        });
        return finish(rc, report, passed);
    }
    let spec = cfg.spec(f, None)?;
    let (h, basis) = cfg.hamiltonian(f, None)?;
    let m = h.materialize(&basis)?;
    let herm = m.hermiticity_error();
    let passed = m.leakage == 0 && herm <= 1e-12;
    let report = json!({
        "config": cfg,
        "formulation": f,
        "factors": spec.factors().len(),
        "hilbert_dim": spec.dim(),
        "sector": sector_labels(cfg, f),
        "sector_dim": basis.len(),
        "terms": h.terms.len(),
        "nnz": m.nnz(),
        "leakage": m.leakage,
        "hermiticity_error": herm,
        "passed": passed,
    });
    finish(rc, report, passed)
}

pub fn spectrum(rc: &RunConfig, k: usize) -> Result<Outcome, CliError> {
    let cfg = &rc.model;
    if cfg.formulation == Formulation::BL {
        return Err(CliError::Config(
            "the B/L formulation has no quantum Hamiltonian; use original or thetam".into(),
        ));
    }
    let r = config_spectrum(cfg, cfg.formulation, k, rc.seed)?;
    let report = json!({
        "config": cfg,
        "formulation": cfg.formulation,
        "seed": rc.seed,
        "spectrum": r,
    });
    finish(rc, report, true)
}

pub fn compare(rc: &RunConfig, k: usize, schedule: &[(u32, u32)], tolerance: f64) -> Result<Outcome, CliError> {
    let r = compare_formulations(&rc.model, k, schedule, tolerance, rc.seed)?;
    let passed = r.passed;
    finish(rc, to_value(&r)?, passed)
}
