//! JSON model description shared by the command line and the comparison
//! harness.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dualmap::Formulation;
use crate::error::{Error, Result};
use crate::hamiltonian::{h_dual_thetam, h_original, physical_sector, ModelParams};
use crate::hilbert::{Basis, GaugeKind, HilbertSpec, MatterKind, Operator, DEFAULT_DIM_LIMIT};
use crate::lattice::{build_lattice, Boundary, Lattice};

/// Rotor cutoffs: links `|E| ≤ links`, plaquettes `|M| ≤ plaquettes`,
/// global rotors `|L| ≤ global`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cutoffs {
    #[serde(default = "default_link_cutoff")]
    pub links: u32,
    #[serde(default = "default_plaq_cutoff")]
    pub plaquettes: u32,
    #[serde(default = "default_link_cutoff")]
    pub global: u32,
}

fn default_link_cutoff() -> u32 {
    1
}

fn default_plaq_cutoff() -> u32 {
    4
}

impl Default for Cutoffs {
    fn default() -> Self {
        Self {
            links: default_link_cutoff(),
            plaquettes: default_plaq_cutoff(),
            global: default_link_cutoff(),
        }
    }
}

fn default_g2() -> f64 {
    1.0
}

fn default_matter() -> MatterKind {
    MatterKind::None
}

fn default_formulation() -> Formulation {
    Formulation::Original
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub dim: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub bc: Boundary,
    #[serde(default = "default_matter")]
    pub matter: MatterKind,
    #[serde(default)]
    pub cutoffs: Cutoffs,
    #[serde(default = "default_g2")]
    pub g2: f64,
    #[serde(default)]
    pub t: f64,
    #[serde(default)]
    pub m: f64,
    #[serde(default)]
    pub q: Vec<i64>,
    #[serde(default = "default_formulation")]
    pub formulation: Formulation,
}

impl ModelConfig {
    pub fn new(dim: usize, n: usize, bc: Boundary) -> Self {
        Self {
            dim,
            n,
            bc,
            matter: MatterKind::None,
            cutoffs: Cutoffs::default(),
            g2: 1.0,
            t: 0.0,
            m: 0.0,
            q: Vec::new(),
            formulation: Formulation::Original,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::InvalidParams(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn lattice(&self) -> Result<Arc<Lattice>> {
        build_lattice(self.dim, self.n, self.bc)
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            g2: self.g2,
            t: self.t,
            m: self.m,
            q: self.q.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lat = self.lattice()?;
        self.params().validate(&lat)?;
        for c in [self.cutoffs.links, self.cutoffs.plaquettes, self.cutoffs.global] {
            if c == 0 {
                return Err(Error::Cutoff(c));
            }
        }
        if let MatterKind::TruncatedBoson { n_max: 0 } = self.matter {
            return Err(Error::InvalidParams("truncated boson needs n_max >= 1".into()));
        }
        Ok(())
    }

    pub fn gauge(&self, formulation: Formulation) -> Result<GaugeKind> {
        match formulation {
            Formulation::Original => Ok(GaugeKind::LinksE {
                cutoff: self.cutoffs.links,
            }),
            Formulation::ThetaM => Ok(GaugeKind::PlaqsM {
                cutoff: self.cutoffs.plaquettes,
                global_cutoff: self.cutoffs.global,
            }),
            Formulation::BL => Err(Error::IncompatibleSpec(
                "the B/L formulation has no truncated quantum Hamiltonian".into(),
            )),
        }
    }

    pub fn spec(&self, formulation: Formulation, limit: Option<u64>) -> Result<Arc<HilbertSpec>> {
        let gauge = self.gauge(formulation)?;
        let spec = HilbertSpec::with_limit(self.lattice()?, gauge, self.matter, limit.unwrap_or(DEFAULT_DIM_LIMIT))?;
        Ok(Arc::new(spec))
    }

    /// Symbolic Hamiltonian and physical sector for a formulation.
    pub fn hamiltonian(&self, formulation: Formulation, limit: Option<u64>) -> Result<(Operator, Basis)> {
        self.validate()?;
        let spec = self.spec(formulation, limit)?;
        let params = self.params();
        let h = match formulation {
            Formulation::Original => h_original(&spec, &params)?,
            _ => h_dual_thetam(&spec, &params)?,
        };
        let basis = physical_sector(&spec, &params)?;
        Ok((h, basis))
    }
}
