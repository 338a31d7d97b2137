//! Computational domain: the unit outer sphere, an optional interior
//! spherical anomaly, electrode caps on the outer sphere, and the boundary
//! data attached to each region.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::sync::Arc;

use crate::vec3::{self, Vec3};

/// Membership tolerance for "is this point on a boundary sphere".
/// Path points are placed on spheres analytically, so this guards
/// round-off only.
pub const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Electrode {
    /// 1-based index; electrodes are stored in id order.
    pub id: usize,
    /// Unit vector on the outer sphere.
    pub center: Vec3,
    /// Geodesic radius of the cap.
    pub cap_radius: f64,
    /// Contact impedance z_l of the Robin condition z_l ∂u/∂n + u = φ1.
    pub contact_impedance: f64,
}

impl Electrode {
    /// Area of the cap on a sphere of radius `sphere_radius`.
    pub fn cap_area(&self, sphere_radius: f64) -> f64 {
        let angle = (self.cap_radius / sphere_radius).min(PI);
        2.0 * PI * sphere_radius * sphere_radius * (1.0 - angle.cos())
    }

    /// Geodesic distance from a unit vector to the cap center.
    pub fn geodesic_to_center(&self, unit_point: Vec3) -> f64 {
        vec3::geodesic(unit_point, self.center)
    }

    pub fn contains(&self, unit_point: Vec3) -> bool {
        self.geodesic_to_center(unit_point) <= self.cap_radius
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    /// Fixed at 1.0; kept explicit so lengths carry their meaning.
    pub outer_radius: f64,
    pub anomaly_center: Vec3,
    /// 0 means no anomaly.
    pub anomaly_radius: f64,
    pub electrodes: Vec<Electrode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryRegion {
    /// Electrode cap l (1-based) on the outer sphere: z_l ∂u/∂n + u = φ1.
    RobinElectrode(usize),
    /// Outer sphere off every electrode: ∂u/∂n = φ2.
    NeumannOff,
    /// Anomaly surface: u = φ3.
    DirichletAnomaly,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum GeometryError {
    #[error("point ({0:?}) lies outside the closed domain")]
    OutsideDomain(Vec3),
    #[error("point ({0:?}) is on neither boundary sphere")]
    NotOnBoundary(Vec3),
    #[error("projection undefined at the domain center")]
    DegenerateProjection,
    #[error("outer radius must be 1.0, got {0}")]
    OuterRadiusNotUnit(f64),
    #[error("anomaly (|center| {center_norm} + radius {radius}) must lie strictly inside the outer sphere")]
    AnomalyNotInterior { center_norm: f64, radius: f64 },
    #[error("electrode {id}: {reason}")]
    BadElectrode { id: usize, reason: String },
    #[error("electrode caps {a} and {b} overlap")]
    ElectrodesOverlap { a: usize, b: usize },
}

impl DomainSpec {
    /// Unit ball, no anomaly, no electrodes.
    pub fn unit_ball() -> Self {
        DomainSpec {
            outer_radius: 1.0,
            anomaly_center: [0.0; 3],
            anomaly_radius: 0.0,
            electrodes: Vec::new(),
        }
    }

    pub fn with_concentric_anomaly(mut self, radius: f64) -> Self {
        self.anomaly_center = [0.0; 3];
        self.anomaly_radius = radius;
        self
    }

    pub fn with_anomaly(mut self, center: Vec3, radius: f64) -> Self {
        self.anomaly_center = center;
        self.anomaly_radius = radius;
        self
    }

    /// The standard eight-electrode ring: centers every 45° around the y-z
    /// great circle starting from (0,0,1). Components are taken from exact
    /// constants so reflections y → −y and z → −z map the set to itself
    /// bit-for-bit.
    pub fn with_ring_electrodes(mut self, cap_radius: f64, contact_impedance: f64) -> Self {
        let s = FRAC_1_SQRT_2;
        let centers: [Vec3; 8] = [
            [0.0, 0.0, 1.0],
            [0.0, s, s],
            [0.0, 1.0, 0.0],
            [0.0, s, -s],
            [0.0, 0.0, -1.0],
            [0.0, -s, -s],
            [0.0, -1.0, 0.0],
            [0.0, -s, s],
        ];
        self.electrodes = centers
            .iter()
            .enumerate()
            .map(|(i, &center)| Electrode {
                id: i + 1,
                center,
                cap_radius,
                contact_impedance,
            })
            .collect();
        self
    }

    /// A single electrode covering the whole outer sphere (pure Robin
    /// problems, used by the oracle suite).
    pub fn with_whole_sphere_electrode(mut self, contact_impedance: f64) -> Self {
        self.electrodes = vec![Electrode {
            id: 1,
            center: [0.0, 0.0, 1.0],
            cap_radius: PI,
            contact_impedance,
        }];
        self
    }

    /// The documented default problem: eight caps of geodesic radius 0.2
    /// with z_l = 0.5, concentric anomaly of radius 0.5.
    pub fn default_problem() -> Self {
        DomainSpec::unit_ball()
            .with_ring_electrodes(0.2, 0.5)
            .with_concentric_anomaly(0.5)
    }

    pub fn has_anomaly(&self) -> bool {
        self.anomaly_radius > 0.0
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.outer_radius != 1.0 {
            return Err(GeometryError::OuterRadiusNotUnit(self.outer_radius));
        }
        if self.anomaly_radius < 0.0 {
            return Err(GeometryError::AnomalyNotInterior {
                center_norm: vec3::norm(self.anomaly_center),
                radius: self.anomaly_radius,
            });
        }
        if self.has_anomaly() {
            let c = vec3::norm(self.anomaly_center);
            if c + self.anomaly_radius >= self.outer_radius {
                return Err(GeometryError::AnomalyNotInterior {
                    center_norm: c,
                    radius: self.anomaly_radius,
                });
            }
        }
        for (i, e) in self.electrodes.iter().enumerate() {
            if e.id != i + 1 {
                return Err(GeometryError::BadElectrode {
                    id: e.id,
                    reason: format!("id out of order (expected {})", i + 1),
                });
            }
            if (vec3::norm(e.center) - 1.0).abs() > 1e-12 {
                return Err(GeometryError::BadElectrode {
                    id: e.id,
                    reason: format!("center not on the unit sphere: |c| = {}", vec3::norm(e.center)),
                });
            }
            if e.cap_radius <= 0.0 {
                return Err(GeometryError::BadElectrode {
                    id: e.id,
                    reason: "cap_radius must be > 0".into(),
                });
            }
            if e.contact_impedance <= 0.0 {
                return Err(GeometryError::BadElectrode {
                    id: e.id,
                    reason: "contact_impedance must be > 0".into(),
                });
            }
        }
        for a in 0..self.electrodes.len() {
            for b in a + 1..self.electrodes.len() {
                let (ea, eb) = (&self.electrodes[a], &self.electrodes[b]);
                if vec3::geodesic(ea.center, eb.center) <= ea.cap_radius + eb.cap_radius {
                    return Err(GeometryError::ElectrodesOverlap { a: ea.id, b: eb.id });
                }
            }
        }
        Ok(())
    }

    /// Signed distance to the outer sphere (positive inside).
    #[inline]
    pub fn distance_to_outer(&self, x: Vec3) -> f64 {
        self.outer_radius - vec3::norm(x)
    }

    /// Distance to the anomaly surface (positive outside the anomaly);
    /// +∞ when there is no anomaly.
    #[inline]
    pub fn distance_to_anomaly(&self, x: Vec3) -> f64 {
        if self.has_anomaly() {
            vec3::dist(x, self.anomaly_center) - self.anomaly_radius
        } else {
            f64::INFINITY
        }
    }

    /// min over both boundary spheres; errors for points outside the
    /// closed domain (beyond the outer sphere or inside the anomaly).
    pub fn distance_to_boundary(&self, x: Vec3) -> Result<f64, GeometryError> {
        let d = self.distance_to_outer(x).min(self.distance_to_anomaly(x));
        if d < 0.0 {
            Err(GeometryError::OutsideDomain(x))
        } else {
            Ok(d)
        }
    }

    /// Classify a point lying (within `BOUNDARY_TOL`) on one of the two
    /// boundary spheres.
    pub fn classify_boundary_point(&self, y: Vec3) -> Result<BoundaryRegion, GeometryError> {
        if (vec3::norm(y) - self.outer_radius).abs() <= BOUNDARY_TOL {
            let unit = vec3::normalize(y);
            for e in &self.electrodes {
                if e.contains(unit) {
                    return Ok(BoundaryRegion::RobinElectrode(e.id));
                }
            }
            return Ok(BoundaryRegion::NeumannOff);
        }
        if self.has_anomaly()
            && (vec3::dist(y, self.anomaly_center) - self.anomaly_radius).abs() <= BOUNDARY_TOL
        {
            return Ok(BoundaryRegion::DirichletAnomaly);
        }
        Err(GeometryError::NotOnBoundary(y))
    }

    /// Radial projection to the outer sphere: the closest outer-boundary
    /// point for any x ≠ 0, together with the outward normal there.
    pub fn project_to_outer_boundary(&self, x: Vec3) -> Result<(Vec3, Vec3), GeometryError> {
        let n = vec3::norm(x);
        if n == 0.0 {
            return Err(GeometryError::DegenerateProjection);
        }
        let normal = vec3::scale(x, 1.0 / n);
        Ok((vec3::scale(normal, self.outer_radius), normal))
    }

    /// Closest point on the anomaly surface (used for absorption).
    pub fn project_to_anomaly(&self, x: Vec3) -> Vec3 {
        let r = vec3::sub(x, self.anomaly_center);
        let n = vec3::norm(r);
        if n == 0.0 {
            // Degenerate only for a path sitting exactly at the anomaly
            // center, which the absorption shell makes unreachable.
            return vec3::add(self.anomaly_center, [self.anomaly_radius, 0.0, 0.0]);
        }
        vec3::axpy(self.anomaly_center, self.anomaly_radius / n, r)
    }
}

/// Polar angle of a point's projection onto the y-z plane, measured from
/// the +z axis: the θ in the default electrode data cos(4θ).
#[inline]
pub fn yz_polar_angle(p: Vec3) -> f64 {
    p[1].atan2(p[2])
}

pub type ElectrodeFn = Arc<dyn Fn(usize, Vec3) -> f64 + Send + Sync>;
pub type SurfaceFn = Arc<dyn Fn(Vec3) -> f64 + Send + Sync>;

/// Boundary data triple plus the per-electrode Robin coefficient
/// κ_l = 1/z_l. `outer_dirichlet`, when set, replaces the whole mixed
/// outer condition with absorption at prescribed values (the classic
/// walk-on-spheres validation mode).
#[derive(Clone)]
pub struct BoundaryData {
    /// Robin data on electrode l: z_l ∂u/∂n + u = φ1.
    pub phi1: ElectrodeFn,
    /// Neumann flux off-electrode.
    pub phi2: SurfaceFn,
    /// Dirichlet value on the anomaly surface.
    pub phi3: SurfaceFn,
    /// κ_l = 1/z_l, indexed by electrode id − 1.
    pub robin_kappa: Vec<f64>,
    pub outer_dirichlet: Option<SurfaceFn>,
}

impl fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundaryData")
            .field("robin_kappa", &self.robin_kappa)
            .field("outer_dirichlet", &self.outer_dirichlet.is_some())
            .finish_non_exhaustive()
    }
}

impl BoundaryData {
    pub fn new(domain: &DomainSpec, phi1: ElectrodeFn, phi2: SurfaceFn, phi3: SurfaceFn) -> Self {
        let robin_kappa = domain
            .electrodes
            .iter()
            .map(|e| 1.0 / e.contact_impedance)
            .collect();
        BoundaryData {
            phi1,
            phi2,
            phi3,
            robin_kappa,
            outer_dirichlet: None,
        }
    }

    /// Default electrode drive φ1 = cos(4θ), zero Neumann flux, grounded
    /// anomaly.
    pub fn cos4theta(domain: &DomainSpec) -> Self {
        BoundaryData::new(
            domain,
            Arc::new(|_, p| (4.0 * yz_polar_angle(p)).cos()),
            Arc::new(|_| 0.0),
            Arc::new(|_| 0.0),
        )
    }

    /// φ1 ≡ v on every electrode, zero elsewhere.
    pub fn constant(domain: &DomainSpec, v: f64) -> Self {
        BoundaryData::new(
            domain,
            Arc::new(move |_, _| v),
            Arc::new(|_| 0.0),
            Arc::new(|_| 0.0),
        )
    }

    pub fn zero(domain: &DomainSpec) -> Self {
        BoundaryData::constant(domain, 0.0)
    }

    /// Validation mode: the whole outer sphere absorbs with value `phi`.
    pub fn outer_dirichlet(phi: SurfaceFn) -> Self {
        BoundaryData {
            phi1: Arc::new(|_, _| 0.0),
            phi2: Arc::new(|_| 0.0),
            phi3: Arc::new(|_| 0.0),
            robin_kappa: Vec::new(),
            outer_dirichlet: Some(phi),
        }
    }

    /// κ for an electrode id, 0 for non-Robin regions.
    #[inline]
    pub fn kappa(&self, electrode_id: usize) -> f64 {
        self.robin_kappa[electrode_id - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn annulus() -> DomainSpec {
        DomainSpec::unit_ball().with_concentric_anomaly(0.5)
    }

    #[test]
    fn distance_center_of_unit_ball() {
        let d = DomainSpec::unit_ball().distance_to_boundary([0.0; 3]).unwrap();
        assert_eq!(d, 1.0);
    }

    #[test]
    fn distance_tie_between_outer_and_anomaly() {
        let d = annulus().distance_to_boundary([0.75, 0.0, 0.0]).unwrap();
        assert!((d - 0.25).abs() < 1e-15);
    }

    #[test]
    fn distance_outer_shell_dominates() {
        let d = annulus().distance_to_boundary([0.0, 0.9, 0.0]).unwrap();
        assert!((d - 0.1).abs() < 1e-15);
    }

    #[test]
    fn distance_rejects_exterior_and_anomaly_interior_points() {
        assert!(annulus().distance_to_boundary([1.5, 0.0, 0.0]).is_err());
        assert!(annulus().distance_to_boundary([0.1, 0.0, 0.0]).is_err());
    }

    #[test]
    fn classify_cap_center_and_poles() {
        let dom = DomainSpec::default_problem();
        assert_eq!(
            dom.classify_boundary_point([0.0, 0.0, 1.0]).unwrap(),
            BoundaryRegion::RobinElectrode(1)
        );
        // The x-axis pole is geodesic π/2 from every center on the y-z ring.
        assert_eq!(
            dom.classify_boundary_point([1.0, 0.0, 0.0]).unwrap(),
            BoundaryRegion::NeumannOff
        );
        assert_eq!(
            dom.classify_boundary_point([0.5, 0.0, 0.0]).unwrap(),
            BoundaryRegion::DirichletAnomaly
        );
        assert!(dom.classify_boundary_point([0.7, 0.0, 0.0]).is_err());
    }

    #[test]
    fn classification_partitions_boundary() {
        let dom = DomainSpec::default_problem();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let v: Vec3 = vec3::normalize([
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            ]);
            let got = dom.classify_boundary_point(v).unwrap();
            // Brute-force geodesic check against every electrode.
            let brute = dom
                .electrodes
                .iter()
                .find(|e| vec3::geodesic(v, e.center) <= e.cap_radius)
                .map(|e| BoundaryRegion::RobinElectrode(e.id))
                .unwrap_or(BoundaryRegion::NeumannOff);
            assert_eq!(got, brute, "mismatch at {v:?}");
        }
    }

    #[test]
    fn projection_pulls_back_radially() {
        let dom = DomainSpec::unit_ball();
        let (p, n) = dom.project_to_outer_boundary([0.0, 0.0, 1.01]).unwrap();
        assert_eq!(p, [0.0, 0.0, 1.0]);
        assert_eq!(n, [0.0, 0.0, 1.0]);

        let (p, _) = dom.project_to_outer_boundary([0.606, 0.808, 0.0]).unwrap();
        assert!(vec3::dist(p, [0.6, 0.8, 0.0]) < 1e-12);

        let (p, _) = dom.project_to_outer_boundary([0.0, 0.0, 0.999]).unwrap();
        assert_eq!(p, [0.0, 0.0, 1.0]);

        assert!(dom.project_to_outer_boundary([0.0; 3]).is_err());
    }

    #[test]
    fn wos_ball_stays_inside_domain() {
        let dom = DomainSpec::default_problem();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let x = [
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            ];
            let Ok(r) = dom.distance_to_boundary(x) else {
                continue;
            };
            for _ in 0..50 {
                let dir = vec3::normalize([
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                ]);
                let y = vec3::axpy(x, r, dir);
                assert!(vec3::norm(y) <= dom.outer_radius + 1e-12);
                assert!(vec3::dist(y, dom.anomaly_center) >= dom.anomaly_radius - 1e-12);
            }
        }
    }

    #[test]
    fn ring_layout_is_invariant_under_quarter_turn_about_x() {
        let dom = DomainSpec::unit_ball().with_ring_electrodes(0.2, 0.5);
        for e in &dom.electrodes {
            // (x, y, z) → (x, z, −y)
            let rotated = [e.center[0], e.center[2], -e.center[1]];
            let matched = dom
                .electrodes
                .iter()
                .any(|f| vec3::dist(f.center, rotated) < 1e-12);
            assert!(matched, "rotated center {rotated:?} not in the layout");
        }
    }

    #[test]
    fn validate_rejects_bad_domains() {
        assert!(DomainSpec::default_problem().validate().is_ok());
        assert!(DomainSpec::unit_ball()
            .with_anomaly([0.6, 0.0, 0.0], 0.5)
            .validate()
            .is_err());
        let overlapping = DomainSpec::unit_ball().with_ring_electrodes(0.4, 0.5);
        assert!(matches!(
            overlapping.validate(),
            Err(GeometryError::ElectrodesOverlap { .. })
        ));
    }

    #[test]
    fn polar_angle_matches_electrode_ring() {
        // Electrode centers sit at θ = (l−1)·45°, where cos(4θ) alternates ±1.
        let dom = DomainSpec::default_problem();
        for e in &dom.electrodes {
            let theta = yz_polar_angle(e.center);
            let expected = if e.id % 2 == 1 { 1.0 } else { -1.0 };
            assert!(
                ((4.0 * theta).cos() - expected).abs() < 1e-12,
                "electrode {} drive sign",
                e.id
            );
        }
    }

    #[test]
    fn cap_area_of_whole_sphere_electrode() {
        let dom = DomainSpec::unit_ball().with_whole_sphere_electrode(0.5);
        let a = dom.electrodes[0].cap_area(1.0);
        assert!((a - 4.0 * std::f64::consts::PI).abs() < 1e-12);
    }
}
