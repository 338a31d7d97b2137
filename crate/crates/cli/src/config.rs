//! Run configuration: a TOML file with one block per concern, every field
//! optional with the documented default. The parsed form echoes back to
//! canonical TOML; outputs carry a hash of that echo so any result file
//! pins down the exact configuration that produced it.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use eit_forward::bem::mesh::MeshParams;
use eit_forward::geometry::DomainSpec;
use eit_forward::stochastic::WalkParams;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config field {field}: {problem}")]
    Invalid { field: &'static str, problem: String },
}

fn invalid(field: &'static str, problem: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        problem: problem.into(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainBlock,
    pub boundary: BoundaryBlock,
    pub solver: SolverBlock,
    pub bem: BemBlock,
    pub map: MapBlock,
    pub output: OutputBlock,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            domain: DomainBlock::default(),
            boundary: BoundaryBlock::default(),
            solver: SolverBlock::default(),
            bem: BemBlock::default(),
            map: MapBlock::default(),
            output: OutputBlock::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DomainBlock {
    /// `ring8` (eight caps on the y-z great circle), `whole-sphere`, `none`.
    pub electrodes: String,
    pub cap_radius: f64,
    pub contact_impedance: f64,
    pub anomaly_center: [f64; 3],
    /// 0 disables the anomaly.
    pub anomaly_radius: f64,
}

impl Default for DomainBlock {
    fn default() -> Self {
        DomainBlock {
            electrodes: "ring8".into(),
            cap_radius: 0.2,
            contact_impedance: 0.5,
            anomaly_center: [0.0; 3],
            anomaly_radius: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BoundaryBlock {
    pub preset: String,
}

impl Default for BoundaryBlock {
    fn default() -> Self {
        BoundaryBlock {
            preset: "cos4theta".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SolverBlock {
    pub n_paths: u64,
    pub max_boundary_events: u32,
    pub epsilon: f64,
    pub delta_x: f64,
    pub seed: u64,
    /// 0 means hardware parallelism.
    pub workers: usize,
}

impl Default for SolverBlock {
    fn default() -> Self {
        let w = WalkParams::default();
        SolverBlock {
            n_paths: w.n_paths,
            max_boundary_events: w.max_boundary_events,
            epsilon: w.epsilon,
            delta_x: w.delta_x,
            seed: w.seed,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BemBlock {
    /// Depth 4 is the default dense-solve budget; depth 5 meshes build but
    /// their dense matrix (~10 GB) trips the memory guard.
    pub icosphere_depth: u32,
    pub rim_refine: u32,
    pub layer_rings: [u32; 4],
    pub layer_radii: [f64; 4],
    pub sectors: u32,
    pub grading_ratio: f64,
    /// Refuse dense solves whose matrix would exceed this many GiB.
    pub max_matrix_gib: f64,
}

impl Default for BemBlock {
    fn default() -> Self {
        let m = MeshParams::default();
        BemBlock {
            icosphere_depth: 4,
            rim_refine: m.rim_refine,
            layer_rings: m.layer_rings,
            layer_radii: m.layer_radii,
            sectors: m.sectors,
            grading_ratio: m.grading_ratio,
            max_matrix_gib: 3.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct MapBlock {
    pub rings: usize,
    pub sectors: usize,
}

impl Default for MapBlock {
    fn default() -> Self {
        MapBlock {
            rings: eit_forward::feynman_kac::DEFAULT_QUADRATURE_RINGS,
            sectors: eit_forward::feynman_kac::DEFAULT_QUADRATURE_SECTORS,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    /// `table`, `json` (one object per record), or `csv`.
    pub format: String,
    /// Empty writes to standard output.
    pub path: String,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            format: "table".into(),
            path: String::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: RunConfig = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self.domain.electrodes.as_str() {
            "ring8" | "whole-sphere" | "none" => {}
            other => {
                return Err(invalid(
                    "domain.electrodes",
                    format!("unknown layout {other:?}; expected ring8, whole-sphere, or none"),
                ))
            }
        }
        if !(self.domain.cap_radius > 0.0 && self.domain.cap_radius < std::f64::consts::PI) {
            return Err(invalid("domain.cap_radius", "must be in (0, pi)"));
        }
        if self.domain.contact_impedance <= 0.0 {
            return Err(invalid("domain.contact_impedance", "must be positive"));
        }
        if self.domain.anomaly_radius < 0.0 {
            return Err(invalid("domain.anomaly_radius", "must be >= 0"));
        }
        if self.solver.n_paths == 0 {
            return Err(invalid("solver.n_paths", "must be >= 1"));
        }
        if self.solver.max_boundary_events == 0 {
            return Err(invalid("solver.max_boundary_events", "must be >= 1"));
        }
        if !(self.solver.epsilon > 0.0) {
            return Err(invalid("solver.epsilon", "must be positive"));
        }
        if !(self.solver.delta_x > 0.0) {
            return Err(invalid("solver.delta_x", "must be positive"));
        }
        if self.map.rings == 0 || self.map.sectors == 0 {
            return Err(invalid("map.rings", "rings and sectors must be >= 1"));
        }
        if self.bem.max_matrix_gib <= 0.0 {
            return Err(invalid("bem.max_matrix_gib", "must be positive"));
        }
        match self.output.format.as_str() {
            "table" | "json" | "csv" => {}
            other => {
                return Err(invalid(
                    "output.format",
                    format!("unknown format {other:?}; expected table, json, or csv"),
                ))
            }
        }
        self.mesh_params()
            .validate()
            .map_err(|e| invalid("bem", e.to_string()))?;
        self.domain()
            .map_err(|e| invalid("domain", e.to_string()))
            .map(|_| ())
    }

    pub fn domain(&self) -> Result<DomainSpec, ConfigError> {
        let ball = DomainSpec::unit_ball();
        let mut d = match self.domain.electrodes.as_str() {
            "ring8" => ball.with_ring_electrodes(self.domain.cap_radius, self.domain.contact_impedance),
            "whole-sphere" => ball.with_whole_sphere_electrode(self.domain.contact_impedance),
            _ => ball,
        };
        if self.domain.anomaly_radius > 0.0 {
            d.anomaly_center = self.domain.anomaly_center;
            d.anomaly_radius = self.domain.anomaly_radius;
        }
        d.validate()
            .map_err(|e| invalid("domain", e.to_string()))?;
        Ok(d)
    }

    pub fn walk_params(&self) -> WalkParams {
        WalkParams {
            n_paths: self.solver.n_paths,
            max_boundary_events: self.solver.max_boundary_events,
            epsilon: self.solver.epsilon,
            delta_x: self.solver.delta_x,
            seed: self.solver.seed,
            ..WalkParams::default()
        }
    }

    pub fn mesh_params(&self) -> MeshParams {
        MeshParams {
            layer_rings: self.bem.layer_rings,
            sectors: self.bem.sectors,
            layer_radii: self.bem.layer_radii,
            grading_ratio: self.bem.grading_ratio,
            icosphere_depth: self.bem.icosphere_depth,
            rim_refine: self.bem.rim_refine,
        }
    }

    pub fn workers(&self) -> usize {
        if self.solver.workers == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            self.solver.workers
        }
    }

    /// Canonical TOML echo; parsing it back yields an identical config.
    pub fn echo(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical echo.
    /// Identifies the numerical task, not the run: worker count and output
    /// routing are masked before hashing, so runs that must agree byte for
    /// byte (any worker count, same seed) report the same hash.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.solver.workers = 0;
        canonical.output = OutputBlock::default();
        let digest = Sha256::digest(canonical.echo().as_bytes());
        let mut s = String::with_capacity(64);
        for b in digest {
            s.push_str(&format!("{b:02x}"));
        }
        s
    }
}
