//! Potential estimates and the voltage-to-current map assembled from walk
//! outputs.
//!
//! Each estimate averages independent paths; paths are dealt out in fixed
//! blocks whose partial statistics merge in a fixed order, so results are
//! bit-identical for any worker count.

use rayon::prelude::*;

use crate::geometry::{BoundaryData, BoundaryRegion, DomainSpec, GeometryError};
use crate::stochastic::{run_path, FkCalibration, WalkError, WalkParams};
use crate::vec3::{self, Vec3};

/// Paths per parallel work unit; partials merge in block order.
const PATH_BLOCK: u64 = 4096;

pub const DEFAULT_QUADRATURE_RINGS: usize = 6;
pub const DEFAULT_QUADRATURE_SECTORS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorResult {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: u64,
    pub n_absorbed: u64,
    pub n_step_capped: u64,
    pub mean_boundary_events: f64,
    pub mean_steps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurrentMap {
    /// J_l indexed by electrode id − 1.
    pub currents: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub total: f64,
    pub total_stderr: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("every path hit the step cap; the configuration does not terminate")]
    AllPathsStepCapped,
    #[error("point {point:?} is not on electrode {id}")]
    PointNotOnElectrode { id: usize, point: Vec3 },
    #[error("electrode quadrature is empty")]
    EmptyQuadrature,
    #[error("{expected} quadrature nodes but {got} potential estimates")]
    QuadratureMismatch { expected: usize, got: usize },
    #[error("no electrode with id {0}")]
    NoSuchElectrode(usize),
}

#[derive(Debug, Clone, Copy, Default)]
struct BlockStats {
    n: u64,
    mean: f64,
    m2: f64,
    absorbed: u64,
    capped: u64,
    events: u64,
    steps: u64,
}

impl BlockStats {
    fn push(&mut self, value: f64) {
        self.n += 1;
        let d = value - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (value - self.mean);
    }

    fn merge(self, other: BlockStats) -> BlockStats {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        BlockStats {
            n,
            mean: self.mean + d * other.n as f64 / n as f64,
            m2: self.m2 + other.m2 + d * d * self.n as f64 * other.n as f64 / n as f64,
            absorbed: self.absorbed + other.absorbed,
            capped: self.capped + other.capped,
            events: self.events + other.events,
            steps: self.steps + other.steps,
        }
    }
}

fn estimate_with_streams(
    x: Vec3,
    domain: &DomainSpec,
    data: &BoundaryData,
    params: &WalkParams,
    calib: &FkCalibration,
    stream_base: u64,
) -> Result<EstimatorResult, EstimatorError> {
    params.validate_for(domain)?;
    domain.distance_to_boundary(x)?;

    let n = params.n_paths;
    let n_blocks = n.div_ceil(PATH_BLOCK);
    let blocks: Result<Vec<BlockStats>, EstimatorError> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let lo = b * PATH_BLOCK;
            let hi = (lo + PATH_BLOCK).min(n);
            let mut stats = BlockStats::default();
            for i in lo..hi {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(params.seed);
                rng.set_stream(stream_base | i);
                let out = run_path(x, domain, data, params, calib, &mut rng)?;
                stats.push(out.value());
                stats.absorbed += out.absorbed as u64;
                stats.capped += out.hit_step_cap as u64;
                stats.events += u64::from(out.n_events);
                stats.steps += out.n_steps;
            }
            Ok(stats)
        })
        .collect();
    let total = blocks?
        .into_iter()
        .fold(BlockStats::default(), BlockStats::merge);

    if total.capped == total.n {
        return Err(EstimatorError::AllPathsStepCapped);
    }
    if total.capped > 0 {
        log::warn!(
            "{} of {} paths hit the step cap; their partial sums are included",
            total.capped,
            total.n
        );
    }
    let stderr = if total.n > 1 {
        (total.m2 / (total.n - 1) as f64 / total.n as f64).sqrt()
    } else {
        0.0
    };
    Ok(EstimatorResult {
        mean: total.mean,
        stderr,
        n_paths: total.n,
        n_absorbed: total.absorbed,
        n_step_capped: total.capped,
        mean_boundary_events: total.events as f64 / total.n as f64,
        mean_steps: total.steps as f64 / total.n as f64,
    })
}

use rand::SeedableRng;

/// Evaluation points within ε/2 of the outer sphere start the walk at the
/// radially nudged interior point instead.
fn nudge_inward(x: Vec3, domain: &DomainSpec, params: &WalkParams) -> Vec3 {
    let r = vec3::norm(x);
    let target = domain.outer_radius - 0.5 * params.epsilon;
    if r > target && r > 0.0 {
        vec3::scale(x, target / r)
    } else {
        x
    }
}

/// Monte Carlo estimate of the potential at `x` (nudged inward when on or
/// near the outer boundary).
pub fn estimate_potential(
    x: Vec3,
    domain: &DomainSpec,
    data: &BoundaryData,
    params: &WalkParams,
) -> Result<EstimatorResult, EstimatorError> {
    estimate_potential_calibrated(x, domain, data, params, &FkCalibration::default())
}

/// As `estimate_potential` but with an explicit local-time calibration;
/// validation passes a corrupted one to prove the oracle suite rejects it.
pub fn estimate_potential_calibrated(
    x: Vec3,
    domain: &DomainSpec,
    data: &BoundaryData,
    params: &WalkParams,
    calib: &FkCalibration,
) -> Result<EstimatorResult, EstimatorError> {
    estimate_with_streams(nudge_inward(x, domain, params), domain, data, params, calib, 0)
}

/// Polar quadrature over an electrode cap: ring × sector cells with exact
/// spherical-cap band weights (their sum is the cap area).
#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodeQuadrature {
    pub electrode_id: usize,
    pub points: Vec<Vec3>,
    pub weights: Vec<f64>,
}

impl ElectrodeQuadrature {
    pub fn area(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Orthonormal tangent frame at a unit vector.
fn tangent_frame(n: Vec3) -> (Vec3, Vec3) {
    let helper = if n[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let e1 = vec3::normalize(vec3::cross(helper, n));
    let e2 = vec3::cross(n, e1);
    (e1, e2)
}

/// Point at geodesic distance `theta` from `center` toward azimuth `phi`
/// in the center's tangent frame.
fn cap_point(center: Vec3, theta: f64, phi: f64) -> Vec3 {
    let (e1, e2) = tangent_frame(center);
    let t = vec3::add(
        vec3::scale(e1, phi.cos() * theta.sin()),
        vec3::scale(e2, phi.sin() * theta.sin()),
    );
    vec3::axpy(t, theta.cos(), center)
}

pub fn cap_quadrature(
    domain: &DomainSpec,
    electrode_id: usize,
    n_rings: usize,
    n_sectors: usize,
) -> Result<ElectrodeQuadrature, EstimatorError> {
    let e = domain
        .electrodes
        .iter()
        .find(|e| e.id == electrode_id)
        .ok_or(EstimatorError::NoSuchElectrode(electrode_id))?;
    if n_rings == 0 || n_sectors == 0 {
        return Err(EstimatorError::EmptyQuadrature);
    }
    let r = e.cap_radius / domain.outer_radius;
    let mut points = Vec::with_capacity(n_rings * n_sectors);
    let mut weights = Vec::with_capacity(n_rings * n_sectors);
    for i in 0..n_rings {
        let t0 = r * i as f64 / n_rings as f64;
        let t1 = r * (i + 1) as f64 / n_rings as f64;
        let band = 2.0 * std::f64::consts::PI / n_sectors as f64 * (t0.cos() - t1.cos());
        let theta = 0.5 * (t0 + t1);
        for k in 0..n_sectors {
            let phi = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / n_sectors as f64;
            points.push(vec3::scale(
                cap_point(e.center, theta, phi),
                domain.outer_radius,
            ));
            weights.push(band * domain.outer_radius * domain.outer_radius);
        }
    }
    Ok(ElectrodeQuadrature {
        electrode_id,
        points,
        weights,
    })
}

/// Independent potential estimates at quadrature points on electrode `l`.
pub fn electrode_potential_profile(
    l: usize,
    quadrature_points: &[Vec3],
    domain: &DomainSpec,
    data: &BoundaryData,
    params: &WalkParams,
) -> Result<Vec<EstimatorResult>, EstimatorError> {
    electrode_potential_profile_calibrated(
        l,
        quadrature_points,
        domain,
        data,
        params,
        &FkCalibration::default(),
        0,
    )
}

fn electrode_potential_profile_calibrated(
    l: usize,
    quadrature_points: &[Vec3],
    domain: &DomainSpec,
    data: &BoundaryData,
    params: &WalkParams,
    calib: &FkCalibration,
    stream_point_offset: u64,
) -> Result<Vec<EstimatorResult>, EstimatorError> {
    for &p in quadrature_points {
        let on_l = matches!(
            domain.classify_boundary_point(p),
            Ok(BoundaryRegion::RobinElectrode(id)) if id == l
        );
        if !on_l {
            return Err(EstimatorError::PointNotOnElectrode { id: l, point: p });
        }
    }
    quadrature_points
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            estimate_with_streams(
                nudge_inward(p, domain, params),
                domain,
                data,
                params,
                calib,
                (stream_point_offset + i as u64) << 32,
            )
        })
        .collect()
}

/// Average outward current density over electrode `l` from potential
/// estimates at its quadrature nodes.
///
/// The walk estimates û at points nudged ε/2 inside; expanding the Robin
/// condition to first order in the nudge gives the flux at the boundary
/// point exactly as (φ1 − û)/(z + ε/2), which removes the O(ε) nudge bias.
pub fn current_from_potentials(
    l: usize,
    potentials: &[EstimatorResult],
    quadrature: &ElectrodeQuadrature,
    domain: &DomainSpec,
    data: &BoundaryData,
    params: &WalkParams,
) -> Result<(f64, f64), EstimatorError> {
    if quadrature.points.is_empty() {
        return Err(EstimatorError::EmptyQuadrature);
    }
    if quadrature.points.len() != potentials.len() {
        return Err(EstimatorError::QuadratureMismatch {
            expected: quadrature.points.len(),
            got: potentials.len(),
        });
    }
    let e = domain
        .electrodes
        .iter()
        .find(|e| e.id == l)
        .ok_or(EstimatorError::NoSuchElectrode(l))?;
    let z_eff = e.contact_impedance + 0.5 * params.epsilon;
    let area = quadrature.area();
    let mut j = 0.0;
    let mut var = 0.0;
    for ((&w, &p), est) in quadrature
        .weights
        .iter()
        .zip(&quadrature.points)
        .zip(potentials)
    {
        j += w * ((data.phi1)(l, p) - est.mean) / z_eff;
        var += (w * est.stderr / z_eff).powi(2);
    }
    Ok((j / area, var.sqrt() / area))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub n_rings: usize,
    pub n_sectors: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            n_rings: DEFAULT_QUADRATURE_RINGS,
            n_sectors: DEFAULT_QUADRATURE_SECTORS,
        }
    }
}

/// Full voltage-to-current map: every electrode's average current density
/// from its own independently seeded path sets.
pub fn voltage_to_current_map(
    domain: &DomainSpec,
    data: &BoundaryData,
    params: &WalkParams,
    quad: QuadratureSpec,
) -> Result<CurrentMap, EstimatorError> {
    voltage_to_current_map_calibrated(domain, data, params, quad, &FkCalibration::default())
}

pub fn voltage_to_current_map_calibrated(
    domain: &DomainSpec,
    data: &BoundaryData,
    params: &WalkParams,
    quad: QuadratureSpec,
    calib: &FkCalibration,
) -> Result<CurrentMap, EstimatorError> {
    let nodes_per = (quad.n_rings * quad.n_sectors) as u64;
    let mut currents = Vec::with_capacity(domain.electrodes.len());
    let mut stderrs = Vec::with_capacity(domain.electrodes.len());
    for e in &domain.electrodes {
        let q = cap_quadrature(domain, e.id, quad.n_rings, quad.n_sectors)?;
        let profile = electrode_potential_profile_calibrated(
            e.id,
            &q.points,
            domain,
            data,
            params,
            calib,
            (e.id as u64 - 1) * nodes_per,
        )?;
        let (j, se) = current_from_potentials(e.id, &profile, &q, domain, data, params)?;
        currents.push(j);
        stderrs.push(se);
    }
    let total = currents.iter().sum();
    let total_stderr = stderrs.iter().map(|s| s * s).sum::<f64>().sqrt();
    Ok(CurrentMap {
        currents,
        stderrs,
        total,
        total_stderr,
    })
}
