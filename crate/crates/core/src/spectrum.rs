//! Lowest eigenvalues of hermitian operators and the cross-formulation
//! comparison harness.
//!
//! Below [`DENSE_LIMIT`] the matrix is diagonalised densely. Above it a
//! thick-restart Lanczos iteration with full reorthogonalisation is used;
//! degenerate eigenspaces are completed by repeated passes that deflate the
//! vectors already found.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Cutoffs, ModelConfig};
use crate::dualmap::Formulation;
use crate::error::{Error, Result};
use crate::hilbert::{OperatorMatrix, C64};

/// Largest dimension diagonalised densely.
pub const DENSE_LIMIT: usize = 4096;
/// Required residual `‖Hv − λv‖` per eigenpair.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Width used to group degenerate levels.
pub const CLUSTER_WIDTH: f64 = 1e-9;

const HERMITIAN_TOL: f64 = 1e-10;
const MAX_RESTARTS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dense,
    Iterative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<f64>,
    pub method: Method,
    pub residuals: Vec<f64>,
    pub dimension: usize,
    /// Constraints defining the sector the operator was restricted to.
    pub sector: Vec<String>,
    pub cutoffs: Option<Cutoffs>,
}

pub fn lowest_eigenvalues(h: &OperatorMatrix, k: usize, seed: u64) -> Result<SpectrumReport> {
    lowest_eigenpairs(h, k, seed, None).map(|(r, _)| r)
}

/// Like [`lowest_eigenvalues`], also returning the eigenvectors. `force`
/// overrides the dense/iterative choice.
pub fn lowest_eigenpairs(
    h: &OperatorMatrix,
    k: usize,
    seed: u64,
    force: Option<Method>,
) -> Result<(SpectrumReport, Vec<Vec<C64>>)> {
    let n = h.dim();
    if h.rows != h.cols {
        return Err(Error::NotHermitian(f64::INFINITY));
    }
    if k == 0 || k > n {
        return Err(Error::TooManyEigenvalues { k, dim: n });
    }
    let herm = h.hermiticity_error();
    if herm > HERMITIAN_TOL * h.max_abs().max(1.0) {
        return Err(Error::NotHermitian(herm));
    }
    let method = force.unwrap_or(if n < DENSE_LIMIT {
        Method::Dense
    } else {
        Method::Iterative
    });
    let (values, vectors) = match method {
        Method::Dense => dense_lowest(h, k),
        Method::Iterative => lanczos_lowest(h, k, seed)?,
    };
    let residuals: Vec<f64> = values.iter().zip(&vectors).map(|(l, v)| residual(h, *l, v)).collect();
    if let Some(r) = residuals.iter().copied().find(|r| r.is_nan() || *r > RESIDUAL_TOL) {
        return Err(Error::NoConvergence(format!("residual {r:e} exceeds {RESIDUAL_TOL:e}")));
    }
    let report = SpectrumReport {
        eigenvalues: values,
        method,
        residuals,
        dimension: n,
        sector: Vec::new(),
        cutoffs: None,
    };
    Ok((report, vectors))
}

fn residual(h: &OperatorMatrix, lambda: f64, v: &[C64]) -> f64 {
    let hv = h.matvec(v);
    hv.iter()
        .zip(v)
        .map(|(a, b)| (a - b * lambda).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

fn dense_lowest(h: &OperatorMatrix, k: usize) -> (Vec<f64>, Vec<Vec<C64>>) {
    let n = h.dim();
    let (values, vectors): (Vec<f64>, DMatrix<C64>) = if h.is_real() {
        let e = SymmetricEigen::new(h.to_dense().map(|v| v.re));
        (
            e.eigenvalues.as_slice().to_vec(),
            e.eigenvectors.map(|v| C64::new(v, 0.0)),
        )
    } else {
        let e = SymmetricEigen::new(h.to_dense());
        (e.eigenvalues.as_slice().to_vec(), e.eigenvectors)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    order
        .into_iter()
        .take(k)
        .map(|i| (values[i], vectors.column(i).iter().copied().collect()))
        .unzip()
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

fn axpy(y: &mut [C64], a: C64, x: &[C64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

/// Removes the components along `basis`, twice; returns the coefficients.
fn orthogonalize(w: &mut [C64], basis: &[Vec<C64>]) -> Vec<C64> {
    let mut coef = vec![C64::new(0.0, 0.0); basis.len()];
    for _ in 0..2 {
        for (c, v) in coef.iter_mut().zip(basis) {
            let p = dot(v, w);
            axpy(w, -p, v);
            *c += p;
        }
    }
    coef
}

fn random_vector(n: usize, real: bool, rng: &mut ChaCha8Rng) -> Vec<C64> {
    (0..n)
        .map(|_| {
            let re = rng.random_range(-1.0..1.0);
            let im = if real { 0.0 } else { rng.random_range(-1.0..1.0) };
            C64::new(re, im)
        })
        .collect()
}

/// Unit vector orthogonal to `against`, or `None` if none could be drawn.
fn fresh_vector(n: usize, real: bool, rng: &mut ChaCha8Rng, against: &[&[Vec<C64>]]) -> Option<Vec<C64>> {
    for _ in 0..8 {
        let mut v = random_vector(n, real, rng);
        for b in against {
            orthogonalize(&mut v, b);
        }
        let nv = norm(&v);
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            return Some(v);
        }
    }
    None
}

fn gershgorin(h: &OperatorMatrix) -> f64 {
    (0..h.dim())
        .map(|r| h.row(r).map(|(_, v)| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn lanczos_lowest(h: &OperatorMatrix, k: usize, seed: u64) -> Result<(Vec<f64>, Vec<Vec<C64>>)> {
    let n = h.dim();
    let real = h.is_real();
    let scale = gershgorin(h).max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut locked: Vec<(f64, Vec<C64>)> = Vec::new();
    for _pass in 0..(2 * k + 2) {
        let avail = n - locked.len();
        if avail == 0 {
            break;
        }
        let vecs: Vec<Vec<C64>> = locked.iter().map(|p| p.1.clone()).collect();
        let found = thick_restart(h, k.min(avail), &vecs, real, scale, &mut rng)?;
        let kth = if locked.len() >= k {
            locked[k - 1].0
        } else {
            f64::INFINITY
        };
        let improves = found.iter().any(|p| p.0 < kth - CLUSTER_WIDTH * scale);
        if !improves && locked.len() >= k {
            break;
        }
        locked.extend(found);
        locked.sort_by(|a, b| a.0.total_cmp(&b.0));
        locked.truncate(k);
    }
    Ok(locked.into_iter().unzip())
}

/// Thick-restart Lanczos for the `nev` lowest pairs on the complement of
/// `deflate`.
fn thick_restart(
    h: &OperatorMatrix,
    nev: usize,
    deflate: &[Vec<C64>],
    real: bool,
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(f64, Vec<C64>)>> {
    let n = h.dim();
    let avail = n - deflate.len();
    let m = (2 * nev + 24).min(avail);
    let keep = (nev + (m - nev) / 2).min(m.saturating_sub(1)).max(nev.min(m));
    let tol = 1e-12 * scale;

    let start = fresh_vector(n, real, rng, &[deflate]).ok_or_else(|| Error::NoConvergence("no start vector".into()))?;
    let mut basis: Vec<Vec<C64>> = vec![start];
    let mut t = DMatrix::<C64>::zeros(m, m);
    let mut first_new = 0;

    for _restart in 0..MAX_RESTARTS {
        let mut beta = 0.0;
        let mut resid: Vec<C64> = Vec::new();
        let mut j = first_new;
        while j < basis.len() {
            let mut w = h.matvec(&basis[j]);
            let hv_norm = norm(&w);
            orthogonalize(&mut w, deflate);
            let coef = orthogonalize(&mut w, &basis);
            orthogonalize(&mut w, deflate);
            for (i, c) in coef.iter().enumerate().take(j + 1) {
                t[(i, j)] = *c;
            }
            beta = norm(&w);
            // the projected matrix is formed from explicit inner products, so
            // the next vector only has to be orthonormal, not exactly Hv_j
            let breakdown = beta <= 1e-8 * hv_norm.max(scale * 1e-4);
            if basis.len() < m {
                if !breakdown {
                    w.iter_mut().for_each(|x| *x /= beta);
                    orthogonalize(&mut w, deflate);
                    orthogonalize(&mut w, &basis);
                    let nw = norm(&w);
                    w.iter_mut().for_each(|x| *x /= nw);
                    basis.push(w);
                } else {
                    // invariant subspace: continue with an unrelated direction
                    let v = fresh_vector(n, real, rng, &[deflate, &basis])
                        .ok_or_else(|| Error::NoConvergence("Krylov space exhausted".into()))?;
                    basis.push(v);
                }
            } else {
                resid = w;
            }
            j += 1;
        }

        let size = basis.len();
        let mut ts = DMatrix::<C64>::zeros(size, size);
        for c in 0..size {
            for r in 0..=c {
                let v = if r == c { C64::new(t[(r, c)].re, 0.0) } else { t[(r, c)] };
                ts[(r, c)] = v;
                ts[(c, r)] = v.conj();
            }
        }
        let eig = SymmetricEigen::new(ts);
        let mut order: Vec<usize> = (0..size).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let theta: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let y = DMatrix::from_fn(size, size, |r, c| eig.eigenvectors[(r, order[c])]);

        let converged = (0..nev).all(|i| beta * y[(size - 1, i)].norm() <= tol) || size == avail;
        let ritz = |count: usize| -> Vec<Vec<C64>> {
            (0..count)
                .into_par_iter()
                .map(|i| {
                    let mut x = vec![C64::new(0.0, 0.0); n];
                    for (r, v) in basis.iter().enumerate() {
                        axpy(&mut x, y[(r, i)], v);
                    }
                    x
                })
                .collect()
        };
        if converged {
            return Ok(theta.into_iter().take(nev).zip(ritz(nev)).collect());
        }

        let kept = ritz(keep);
        t.fill(C64::new(0.0, 0.0));
        for (i, th) in theta.iter().take(keep).enumerate() {
            t[(i, i)] = C64::new(*th, 0.0);
        }
        basis = kept;
        if beta > 1e-8 * scale {
            resid.iter_mut().for_each(|x| *x /= beta);
            orthogonalize(&mut resid, deflate);
            orthogonalize(&mut resid, &basis);
            let nr = norm(&resid);
            resid.iter_mut().for_each(|x| *x /= nr);
            basis.push(resid);
        } else {
            let v = fresh_vector(n, real, rng, &[deflate, &basis])
                .ok_or_else(|| Error::NoConvergence("Krylov space exhausted".into()))?;
            basis.push(v);
        }
        first_new = keep;
    }
    Err(Error::NoConvergence(format!("{MAX_RESTARTS} restarts")))
}

/// Spectrum of one formulation of a configuration in its physical sector.
pub fn config_spectrum(config: &ModelConfig, formulation: Formulation, k: usize, seed: u64) -> Result<SpectrumReport> {
    let (h, basis) = config.hamiltonian(formulation, None)?;
    let m = h.materialize(&basis)?;
    let k = k.min(m.dim());
    let mut report = lowest_eigenvalues(&m, k, seed)?;
    report.sector = sector_labels(config, formulation);
    report.cutoffs = Some(config.cutoffs);
    Ok(report)
}

pub fn sector_labels(config: &ModelConfig, formulation: Formulation) -> Vec<String> {
    let periodic = config.bc == crate::lattice::Boundary::Periodic;
    let matter = config.matter != crate::hilbert::MatterKind::None;
    let mut out = Vec::new();
    match formulation {
        Formulation::Original => out.push("gauss".to_string()),
        _ => {
            if matter {
                out.push("sum_q=0".into());
            }
            if periodic {
                out.push("sum_m=0".into());
            }
            out.push("integral_e".into());
        }
    }
    out
}

/// Groups sorted values into clusters of width [`CLUSTER_WIDTH`]; returns
/// (mean, multiplicity) pairs.
pub fn cluster_levels(values: &[f64]) -> Vec<(f64, usize)> {
    let mut out: Vec<(f64, usize, f64)> = Vec::new();
    for &v in values {
        match out.last_mut() {
            Some((sum, count, first)) if (v - *first).abs() <= CLUSTER_WIDTH => {
                *sum += v;
                *count += 1;
            }
            _ => out.push((v, 1, v)),
        }
    }
    out.into_iter().map(|(s, c, _)| (s / c as f64, c)).collect()
}

/// Per-level differences of two sorted spectra, comparing degenerate clusters
/// as multisets: levels inside a cluster are replaced by the cluster mean.
pub fn level_differences(a: &[f64], b: &[f64]) -> Vec<f64> {
    let flat = |v: &[f64]| -> Vec<f64> {
        cluster_levels(v)
            .into_iter()
            .flat_map(|(mean, c)| std::iter::repeat_n(mean, c))
            .collect()
    };
    flat(a).iter().zip(flat(b)).map(|(x, y)| (x - y).abs()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEntry {
    pub links_cutoff: u32,
    pub plaquettes_cutoff: u32,
    pub original: SpectrumReport,
    pub dual: SpectrumReport,
    pub differences: Vec<f64>,
    pub max_difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub config: ModelConfig,
    pub k: usize,
    pub seed: u64,
    pub entries: Vec<ComparisonEntry>,
    /// `log10` of the ratio of successive maximal differences per unit of
    /// link cutoff; absent when either difference is at rounding level.
    pub slopes: Vec<Option<f64>>,
    pub tolerance: f64,
    pub final_within_tolerance: bool,
    pub non_increasing: bool,
    /// Ground energies never rise with the cutoff (per formulation).
    pub variational: bool,
    pub passed: bool,
}

/// Spectra of the original and θ/M formulations for each `(Λ_E, Λ_M)` in
/// `schedule`, with per-level differences.
pub fn compare_formulations(
    config: &ModelConfig,
    k: usize,
    schedule: &[(u32, u32)],
    tolerance: f64,
    seed: u64,
) -> Result<ComparisonReport> {
    if config.dim != 2 {
        return Err(Error::UnsupportedDimension {
            op: "compare_formulations",
            supported: "two",
        });
    }
    config.validate()?;
    let cells: Vec<(usize, Formulation)> = (0..schedule.len())
        .flat_map(|i| [(i, Formulation::Original), (i, Formulation::ThetaM)])
        .collect();
    let results: Vec<Result<((usize, bool), SpectrumReport)>> = cells
        .par_iter()
        .map(|&(i, f)| {
            let mut cfg = config.clone();
            cfg.cutoffs.links = schedule[i].0;
            cfg.cutoffs.plaquettes = schedule[i].1;
            cfg.formulation = f;
            config_spectrum(&cfg, f, k, seed).map(|r| ((i, f == Formulation::ThetaM), r))
        })
        .collect();
    let mut by_key = BTreeMap::new();
    for r in results {
        let (key, rep) = r?;
        by_key.insert(key, rep);
    }

    let mut entries = Vec::new();
    for (i, &(le, lm)) in schedule.iter().enumerate() {
        let original = by_key.remove(&(i, false)).unwrap();
        let dual = by_key.remove(&(i, true)).unwrap();
        let differences = level_differences(&original.eigenvalues, &dual.eigenvalues);
        let max_difference = differences.iter().copied().fold(0.0, f64::max);
        entries.push(ComparisonEntry {
            links_cutoff: le,
            plaquettes_cutoff: lm,
            original,
            dual,
            differences,
            max_difference,
        });
    }

    let floor = 1e-13;
    let slopes = entries
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].max_difference, w[1].max_difference);
            let step = w[1].links_cutoff as f64 - w[0].links_cutoff as f64;
            (a > floor && b > floor && step != 0.0).then(|| (b / a).log10() / step)
        })
        .collect();
    let non_increasing = entries
        .windows(2)
        .all(|w| w[1].max_difference <= w[0].max_difference + 1e-12);
    let ground = |f: fn(&ComparisonEntry) -> &SpectrumReport| {
        entries
            .windows(2)
            .all(|w| f(&w[1]).eigenvalues[0] <= f(&w[0]).eigenvalues[0] + 1e-12)
    };
    let variational = ground(|e| &e.original) && ground(|e| &e.dual);
    let final_within_tolerance = entries.last().is_some_and(|e| e.max_difference <= tolerance);
    Ok(ComparisonReport {
        config: config.clone(),
        k,
        seed,
        entries,
        slopes,
        tolerance,
        final_within_tolerance,
        non_increasing,
        variational,
        passed: final_within_tolerance && non_increasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_sparse_hermitian(n: usize, per_row: usize, complex: bool, seed: u64) -> OperatorMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trip = Vec::new();
        for r in 0..n {
            trip.push((r, r, C64::new(rng.random_range(-2.0..2.0), 0.0)));
            for _ in 0..per_row {
                let c = rng.random_range(0..n);
                if c == r {
                    continue;
                }
                let v = C64::new(
                    rng.random_range(-1.0..1.0),
                    if complex { rng.random_range(-1.0..1.0) } else { 0.0 },
                );
                trip.push((r, c, v));
                trip.push((c, r, v.conj()));
            }
        }
        OperatorMatrix::from_triplets(n, n, trip)
    }

    #[test]
    fn diagonal_trivial() {
        let h = OperatorMatrix::from_real_triplets(3, vec![(0, 0, 2.0), (1, 1, 0.0), (2, 2, 1.0)]);
        let r = lowest_eigenvalues(&h, 2, 0).unwrap();
        assert_eq!(r.eigenvalues, vec![0.0, 1.0]);
        assert_eq!(r.method, Method::Dense);
        let (r, _) = lowest_eigenpairs(&h, 2, 0, Some(Method::Iterative)).unwrap();
        assert!((r.eigenvalues[0]).abs() < 1e-12 && (r.eigenvalues[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let h = OperatorMatrix::from_real_triplets(2, vec![(0, 1, 1.0)]);
        assert!(matches!(lowest_eigenvalues(&h, 1, 0), Err(Error::NotHermitian(_))));
        let h = OperatorMatrix::from_real_triplets(2, vec![(0, 0, 1.0)]);
        assert!(matches!(
            lowest_eigenvalues(&h, 3, 0),
            Err(Error::TooManyEigenvalues { .. })
        ));
        assert!(matches!(
            lowest_eigenvalues(&h, 0, 0),
            Err(Error::TooManyEigenvalues { .. })
        ));
    }

    #[test]
    fn single_plaquette_gauss_projected_oracle() {
        let mut cfg = ModelConfig::new(2, 1, crate::lattice::Boundary::Open);
        cfg.cutoffs.links = 2;
        let r = config_spectrum(&cfg, Formulation::Original, 1, 0).unwrap();
        assert_eq!(r.dimension, 5);
        // the loop variable n ∈ −2..=2 carries E = n on all four links
        let oracle = DMatrix::from_fn(5, 5, |i, j| {
            let n = i as f64 - 2.0;
            if i == j {
                0.5 * 4.0 * n * n
            } else if i.abs_diff(j) == 1 {
                -0.5
            } else {
                0.0
            }
        });
        let e = SymmetricEigen::new(oracle).eigenvalues.min();
        assert!((r.eigenvalues[0] - e).abs() < 1e-12);
    }

    #[test]
    fn iterative_matches_dense_on_moderate_matrices() {
        for (n, complex, seed) in [(300, false, 1u64), (400, true, 2)] {
            let h = random_sparse_hermitian(n, 4, complex, seed);
            let (d, _) = lowest_eigenpairs(&h, 6, 0, Some(Method::Dense)).unwrap();
            let (it, _) = lowest_eigenpairs(&h, 6, 9, Some(Method::Iterative)).unwrap();
            for (a, b) in d.eigenvalues.iter().zip(&it.eigenvalues) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn iterative_finds_degenerate_copies() {
        // two decoupled identical blocks: every level is doubly degenerate
        let block = random_sparse_hermitian(150, 3, false, 5);
        let mut trip: Vec<(usize, usize, C64)> = block.triplets();
        trip.extend(block.triplets().into_iter().map(|(r, c, v)| (r + 150, c + 150, v)));
        let h = OperatorMatrix::from_triplets(300, 300, trip);
        let (d, _) = lowest_eigenpairs(&h, 4, 0, Some(Method::Dense)).unwrap();
        let (it, _) = lowest_eigenpairs(&h, 4, 3, Some(Method::Iterative)).unwrap();
        assert!((d.eigenvalues[0] - d.eigenvalues[1]).abs() < 1e-10);
        for (a, b) in d.eigenvalues.iter().zip(&it.eigenvalues) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn iterative_on_highly_degenerate_operator() {
        let lat = crate::lattice::build_lattice(3, 2, crate::lattice::Boundary::Open).unwrap();
        let k = crate::greens::hodge_operator(&lat);
        let trip = k.triplets().into_iter().map(|(r, c, v)| (r, c, v as f64)).collect();
        let h = OperatorMatrix::from_real_triplets(k.rows(), trip);
        let (d, _) = lowest_eigenpairs(&h, 8, 0, Some(Method::Dense)).unwrap();
        let (it, _) = lowest_eigenpairs(&h, 8, 0, Some(Method::Iterative)).unwrap();
        for (a, b) in d.eigenvalues.iter().zip(&it.eigenvalues) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let h = random_sparse_hermitian(200, 3, true, 4);
        let a = lowest_eigenpairs(&h, 3, 17, Some(Method::Iterative)).unwrap().0;
        let b = lowest_eigenpairs(&h, 3, 17, Some(Method::Iterative)).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn clustering_and_differences() {
        let c = cluster_levels(&[0.0, 1.0, 1.0 + 1e-11, 2.0]);
        assert_eq!(c.len(), 3);
        assert_eq!(c[1].1, 2);
        let d = level_differences(&[0.0, 1.0, 1.0 + 5e-10], &[0.0, 1.0 + 5e-10, 1.0]);
        assert!(d.iter().all(|v| *v < 1e-15));
    }
}
