use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use dualqed::spectrum::config_spectrum;
use dualqed::{build_lattice, constraint_set, greens_sites, link_shift_table, Boundary, Formulation, Lattice, LinkRef};
use dualqed_bench::single_plaquette;

fn lattice(c: &mut Criterion) {
    c.bench_function("build_lattice 3d periodic N=6", |b| {
        b.iter(|| {
            let lat = Lattice::new(3, black_box(6), Boundary::Periodic).unwrap();
            lat.curl_link_to_plaq_map().nnz() + lat.divergence_map().nnz()
        })
    });
}

fn greens(c: &mut Criterion) {
    // fresh lattices, since tables are cached per lattice
    for (n, bc) in [(16, Boundary::Periodic), (8, Boundary::Open)] {
        c.bench_function(&format!("site greens 2d {bc} N={n}"), |b| {
            b.iter_batched(
                || build_lattice(2, n, bc).unwrap(),
                |lat| greens_sites(&lat),
                BatchSize::SmallInput,
            )
        });
    }
}

fn shifts(c: &mut Criterion) {
    let lat = build_lattice(2, 3, Boundary::Open).unwrap();
    let link: LinkRef = "1,1:1".parse().unwrap();
    c.bench_function("exact shift table 2d open N=3", |b| {
        b.iter(|| link_shift_table(&lat, black_box(&link), true).unwrap())
    });
}

fn dof(c: &mut Criterion) {
    let lat = build_lattice(3, 4, Boundary::Periodic).unwrap();
    c.bench_function("exact dof 3d periodic N=4", |b| {
        b.iter(|| constraint_set(black_box(&lat), Formulation::ThetaM).dof)
    });
}

fn spectrum(c: &mut Criterion) {
    let mut g = c.benchmark_group("spectrum");
    g.sample_size(10);
    let cfg = single_plaquette(8, 8);
    for f in [Formulation::Original, Formulation::ThetaM] {
        g.bench_function(format!("single plaquette Λ=8 {f}"), |b| {
            b.iter(|| config_spectrum(&cfg, f, 3, 0).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, lattice, greens, shifts, dof, spectrum);
criterion_main!(benches);
