//! Fixtures shared by the benchmarks.

use dualqed::{Boundary, MatterKind, ModelConfig};

/// Single open plaquette with staggered fermions at the given cutoffs.
pub fn single_plaquette(links: u32, plaquettes: u32) -> ModelConfig {
    let mut cfg = ModelConfig::new(2, 1, Boundary::Open);
    cfg.matter = MatterKind::StaggeredFermion;
    cfg.t = 1.0;
    cfg.m = 0.5;
    cfg.cutoffs.links = links;
    cfg.cutoffs.plaquettes = plaquettes;
    cfg
}
