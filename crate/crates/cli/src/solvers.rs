//! The two current-producing engines behind one trait, registered by name:
//! `stochastic` (path sampling) and `reference` (dense boundary elements).

use serde_json::Value;

use eit_forward::bem::mesh::{build_global_mesh, SurfaceMesh};
use eit_forward::bem::system::{solve_mixed, BemSolution};
use eit_forward::feynman_kac::{voltage_to_current_map_calibrated, QuadratureSpec};
use eit_forward::presets::PresetProblem;
use eit_forward::stochastic::FkCalibration;

use crate::config::{ConfigError, RunConfig};
use crate::report::{int, num};

pub struct SolverCurrents {
    /// J_l indexed by electrode id − 1.
    pub currents: Vec<f64>,
    /// Monte Carlo standard errors; `None` for deterministic engines.
    pub stderrs: Option<Vec<f64>>,
    pub total: f64,
    /// Engine-specific diagnostics appended to each report row.
    pub detail: Vec<(&'static str, Value)>,
}

pub trait ForwardSolver: Send + Sync {
    fn name(&self) -> &'static str;
    fn currents(&self, problem: &PresetProblem, cfg: &RunConfig) -> anyhow::Result<SolverCurrents>;
}

#[derive(Default)]
pub struct StochasticSolver {
    pub calibration: FkCalibration,
}

impl ForwardSolver for StochasticSolver {
    fn name(&self) -> &'static str {
        "stochastic"
    }

    fn currents(&self, problem: &PresetProblem, cfg: &RunConfig) -> anyhow::Result<SolverCurrents> {
        let params = cfg.walk_params();
        let quad = QuadratureSpec {
            n_rings: cfg.map.rings,
            n_sectors: cfg.map.sectors,
        };
        let map = voltage_to_current_map_calibrated(
            &problem.domain,
            &problem.data,
            &params,
            quad,
            &self.calibration,
        )?;
        Ok(SolverCurrents {
            total: map.total,
            detail: vec![
                ("n_paths", int(params.n_paths)),
                ("quad_rings", int(quad.n_rings as u64)),
                ("quad_sectors", int(quad.n_sectors as u64)),
            ],
            stderrs: Some(map.stderrs),
            currents: map.currents,
        })
    }
}

/// Builds the configured mesh, enforcing the dense-matrix memory guard.
pub fn build_guarded_mesh(
    problem: &PresetProblem,
    cfg: &RunConfig,
) -> anyhow::Result<SurfaceMesh> {
    let mesh = build_global_mesh(&problem.domain, &cfg.mesh_params())?;
    let n = mesh.elements.len();
    let gib = (n * n * 8) as f64 / (1u64 << 30) as f64;
    if gib > cfg.bem.max_matrix_gib {
        return Err(ConfigError::Invalid {
            field: "bem.icosphere_depth",
            problem: format!(
                "{n} elements need a {gib:.1} GiB dense matrix, over the {:.1} GiB budget \
                 (bem.max_matrix_gib)",
                cfg.bem.max_matrix_gib
            ),
        }
        .into());
    }
    Ok(mesh)
}

pub struct ReferenceSolver;

impl ReferenceSolver {
    pub fn solve(
        &self,
        problem: &PresetProblem,
        cfg: &RunConfig,
    ) -> anyhow::Result<(SurfaceMesh, BemSolution)> {
        let mesh = build_guarded_mesh(problem, cfg)?;
        let sol = solve_mixed(&mesh, &problem.domain, &problem.data)?;
        Ok((mesh, sol))
    }
}

impl ForwardSolver for ReferenceSolver {
    fn name(&self) -> &'static str {
        "reference"
    }

    fn currents(&self, problem: &PresetProblem, cfg: &RunConfig) -> anyhow::Result<SolverCurrents> {
        let (mesh, sol) = self.solve(problem, cfg)?;
        Ok(SolverCurrents {
            currents: sol.electrode_currents,
            stderrs: None,
            total: sol.total_current,
            detail: vec![
                ("elements", int(mesh.elements.len() as u64)),
                ("rcond", num(sol.rcond)),
                ("residual", num(sol.residual_norm)),
            ],
        })
    }
}

pub fn registry() -> Vec<Box<dyn ForwardSolver>> {
    vec![Box::new(StochasticSolver::default()), Box::new(ReferenceSolver)]
}

pub fn by_name(name: &str) -> Option<Box<dyn ForwardSolver>> {
    registry().into_iter().find(|s| s.name() == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_knows_both_engines() {
        let names: Vec<&str> = registry().iter().map(|s| s.name()).collect();
        assert_eq!(names, ["stochastic", "reference"]);
        assert!(by_name("stochastic").is_some());
        assert!(by_name("spectral").is_none());
    }

    #[test]
    fn matrix_guard_refuses_oversized_meshes() {
        let mut cfg = RunConfig::default();
        cfg.bem.max_matrix_gib = 0.0001;
        let reg = eit_forward::presets::PresetRegistry::standard();
        let problem = reg.resolve("cos4theta", &cfg.domain().unwrap()).unwrap();
        let err = build_guarded_mesh(&problem, &cfg).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("bem.icosphere_depth") && msg.contains("GiB"), "{msg}");
    }
}
