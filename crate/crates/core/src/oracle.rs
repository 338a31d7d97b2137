//! Closed-form validation cases: harmonic-polynomial Dirichlet problems on
//! the unit ball, whole-sphere Robin problems with solid-harmonic data, and
//! radial Neumann/Dirichlet problems on a concentric annulus.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::geometry::{BoundaryData, DomainSpec};
use crate::vec3::{self, Vec3};

/// Polynomial in (x, y, z) as a term list. Coefficients of the supported
/// cases are small integers, so evaluation, differentiation, and the
/// harmonicity check are all exact in f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    /// (i, j, k, c) terms c·xⁱyʲzᵏ, like powers combined.
    terms: Vec<(u32, u32, u32, f64)>,
}

impl Polynomial {
    pub fn new(terms: &[(u32, u32, u32, f64)]) -> Self {
        let mut p = Polynomial {
            terms: terms.to_vec(),
        };
        p.combine();
        p
    }

    pub fn constant(c: f64) -> Self {
        Polynomial::new(&[(0, 0, 0, c)])
    }

    fn combine(&mut self) {
        self.terms
            .sort_by_key(|&(i, j, k, _)| (i, j, k));
        let mut out: Vec<(u32, u32, u32, f64)> = Vec::with_capacity(self.terms.len());
        for &(i, j, k, c) in &self.terms {
            match out.last_mut() {
                Some(last) if (last.0, last.1, last.2) == (i, j, k) => last.3 += c,
                _ => out.push((i, j, k, c)),
            }
        }
        out.retain(|t| t.3 != 0.0);
        self.terms = out;
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|&(i, j, k, _)| i + j + k).max().unwrap_or(0)
    }

    pub fn eval(&self, p: Vec3) -> f64 {
        self.terms
            .iter()
            .map(|&(i, j, k, c)| c * p[0].powi(i as i32) * p[1].powi(j as i32) * p[2].powi(k as i32))
            .sum()
    }

    pub fn gradient(&self, p: Vec3) -> Vec3 {
        let mut g = [0.0; 3];
        for &(i, j, k, c) in &self.terms {
            let pw = |b: f64, e: u32| b.powi(e as i32);
            if i > 0 {
                g[0] += c * i as f64 * pw(p[0], i - 1) * pw(p[1], j) * pw(p[2], k);
            }
            if j > 0 {
                g[1] += c * pw(p[0], i) * j as f64 * pw(p[1], j - 1) * pw(p[2], k);
            }
            if k > 0 {
                g[2] += c * pw(p[0], i) * pw(p[1], j) * k as f64 * pw(p[2], k - 1);
            }
        }
        g
    }

    /// Exact term-by-term Laplacian.
    pub fn laplacian(&self) -> Polynomial {
        let mut terms = Vec::new();
        for &(i, j, k, c) in &self.terms {
            if i >= 2 {
                terms.push((i - 2, j, k, c * (i * (i - 1)) as f64));
            }
            if j >= 2 {
                terms.push((i, j - 2, k, c * (j * (j - 1)) as f64));
            }
            if k >= 2 {
                terms.push((i, j, k - 2, c * (k * (k - 1)) as f64));
            }
        }
        Polynomial::new(&terms)
    }

    pub fn is_harmonic(&self) -> bool {
        self.laplacian().terms.is_empty()
    }

    /// One homogeneous harmonic polynomial per degree 0..=4, used as the
    /// canonical Robin-case data.
    pub fn solid_harmonic(degree: u32) -> Option<Polynomial> {
        let terms: &[(u32, u32, u32, f64)] = match degree {
            0 => &[(0, 0, 0, 1.0)],
            1 => &[(0, 0, 1, 1.0)],
            2 => &[(2, 0, 0, 1.0), (0, 2, 0, -1.0)],
            3 => &[(2, 0, 1, 1.0), (0, 2, 1, -1.0)],
            4 => &[(4, 0, 0, 1.0), (2, 2, 0, -6.0), (0, 4, 0, 1.0)],
            _ => return None,
        };
        Some(Polynomial::new(terms))
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum OracleError {
    #[error("polynomial is not harmonic: Δp = {0:?}")]
    NotHarmonic(Polynomial),
    #[error("no canonical solid harmonic of degree {0} (supported: 0..=4)")]
    UnsupportedDegree(u32),
    #[error("annulus radius must satisfy 0 < r₀ < 1, got {0}")]
    BadAnnulusRadius(f64),
    #[error("Robin coefficient must be positive, got {0}")]
    BadRobinCoefficient(f64),
}

/// A problem instance with a known exact solution. `exact_flux` is the
/// outward normal derivative on the domain boundary (outward meaning out
/// of the solution domain, so toward the center on an anomaly surface).
#[derive(Clone)]
pub struct OracleCase {
    pub name: String,
    pub domain: DomainSpec,
    pub data: BoundaryData,
    pub exact: Arc<dyn Fn(Vec3) -> f64 + Send + Sync>,
    pub exact_flux: Arc<dyn Fn(Vec3) -> f64 + Send + Sync>,
    /// Interior points at which a solver run should be compared to `exact`.
    pub probes: Vec<Vec3>,
}

impl std::fmt::Debug for OracleCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OracleCase")
            .field("name", &self.name)
            .field("probes", &self.probes)
            .finish_non_exhaustive()
    }
}

/// Pure Dirichlet problem on the unit ball with boundary data p|∂B and
/// exact solution p. Rejects non-harmonic input.
pub fn dirichlet_polynomial_case(p: Polynomial) -> Result<OracleCase, OracleError> {
    if !p.is_harmonic() {
        return Err(OracleError::NotHarmonic(p.laplacian()));
    }
    let name = format!("dirichlet-poly-deg{}", p.degree());
    let domain = DomainSpec::unit_ball();
    let grad = p.clone();
    let data = BoundaryData::outer_dirichlet({
        let p = p.clone();
        Arc::new(move |x| p.eval(x))
    });
    let exact = {
        let p = p.clone();
        Arc::new(move |x: Vec3| p.eval(x))
    };
    let exact_flux = Arc::new(move |x: Vec3| vec3::dot(grad.gradient(x), vec3::normalize(x)));
    Ok(OracleCase {
        name,
        domain,
        data,
        exact,
        exact_flux,
        probes: vec![[0.5, 0.0, 0.0], [0.5, 0.5, 0.5], [0.0, 0.0, 0.0]],
    })
}

/// Whole-sphere Robin problem z∂u/∂n + u = ψ with ψ = (n·z + 1)·Y for the
/// canonical degree-n solid harmonic Y and z = 1/κ; the exact solution is
/// Y itself (on the unit sphere ∂Y/∂n = n·Y for homogeneous Y).
pub fn robin_sphere_case(degree: u32, kappa: f64) -> Result<OracleCase, OracleError> {
    if kappa <= 0.0 {
        return Err(OracleError::BadRobinCoefficient(kappa));
    }
    let y = Polynomial::solid_harmonic(degree).ok_or(OracleError::UnsupportedDegree(degree))?;
    let z = 1.0 / kappa;
    let scale = degree as f64 * z + 1.0;
    let domain = DomainSpec::unit_ball().with_whole_sphere_electrode(z);
    let psi = {
        let y = y.clone();
        Arc::new(move |_, x: Vec3| scale * y.eval(x))
    };
    let data = BoundaryData::new(&domain, psi, Arc::new(|_| 0.0), Arc::new(|_| 0.0));
    let exact = {
        let y = y.clone();
        Arc::new(move |x: Vec3| y.eval(x))
    };
    let exact_flux = Arc::new(move |x: Vec3| vec3::dot(y.gradient(x), vec3::normalize(x)));
    Ok(OracleCase {
        name: format!("robin-sphere-deg{degree}-kappa{kappa}"),
        domain,
        data,
        exact,
        exact_flux,
        probes: vec![[0.0, 0.0, 0.9], [0.3, 0.2, 0.1], [0.0, 0.6, 0.0]],
    })
}

/// Concentric annulus r₀ < r < 1 with constant outward flux g on the outer
/// sphere and u = 0 on the inner sphere: u(r) = g/r₀ − g/r.
pub fn annulus_radial_case(r0: f64, g: f64) -> Result<OracleCase, OracleError> {
    if !(0.0 < r0 && r0 < 1.0) {
        return Err(OracleError::BadAnnulusRadius(r0));
    }
    let domain = DomainSpec::unit_ball().with_concentric_anomaly(r0);
    let data = BoundaryData::new(
        &domain,
        Arc::new(|_, _| 0.0),
        Arc::new(move |_| g),
        Arc::new(|_| 0.0),
    );
    let exact = Arc::new(move |x: Vec3| {
        let r = vec3::norm(x);
        g / r0 - g / r
    });
    // ∂u/∂r = g/r²; the domain normal is +r̂ on the outer sphere and −r̂ on
    // the inner one.
    let exact_flux = Arc::new(move |x: Vec3| {
        let r = vec3::norm(x);
        let du_dr = g / (r * r);
        if r > (1.0 + r0) / 2.0 {
            du_dr
        } else {
            -du_dr
        }
    });
    let mid = (1.0 + r0) / 2.0;
    Ok(OracleCase {
        name: format!("annulus-r{r0}-g{g}"),
        domain,
        data,
        exact,
        exact_flux,
        probes: vec![[mid, 0.0, 0.0], [0.0, -mid, 0.0]],
    })
}

/// The fixed validation suite run by `oracle-check` and the calibration
/// tests.
pub fn standard_suite() -> Vec<OracleCase> {
    vec![
        dirichlet_polynomial_case(Polynomial::new(&[(2, 0, 0, 1.0), (0, 2, 0, -1.0)])).unwrap(),
        dirichlet_polynomial_case(Polynomial::new(&[(1, 1, 1, 1.0)])).unwrap(),
        robin_sphere_case(1, 2.0).unwrap(),
        robin_sphere_case(2, 2.0).unwrap(),
        annulus_radial_case(0.5, 1.0).unwrap(),
    ]
}

/// Residual of the case's boundary condition at a boundary point. Zero for
/// the exact solution up to round-off; used by the self-check tests and
/// the negative controls.
pub fn boundary_residual(case: &OracleCase, y: Vec3) -> f64 {
    use crate::geometry::BoundaryRegion::*;
    if let Some(phi) = &case.data.outer_dirichlet {
        return (case.exact)(y) - phi(y);
    }
    match case.domain.classify_boundary_point(y).expect("boundary point") {
        RobinElectrode(l) => {
            let z = case.domain.electrodes[l - 1].contact_impedance;
            z * (case.exact_flux)(y) + (case.exact)(y) - (case.data.phi1)(l, y)
        }
        NeumannOff => (case.exact_flux)(y) - (case.data.phi2)(y),
        DirichletAnomaly => (case.exact)(y) - (case.data.phi3)(y),
    }
}

/// ∮ ∂u/∂n dS over the full closed boundary, by a product rule that is
/// exact for the polynomial and radial fluxes used here: Gauss-Legendre in
/// cos θ times periodic trapezoid in φ.
pub fn flux_integral(case: &OracleCase) -> f64 {
    let mut total = sphere_integral(case, 1.0, [0.0; 3], &case.exact_flux);
    if case.domain.has_anomaly() {
        total += sphere_integral(
            case,
            case.domain.anomaly_radius,
            case.domain.anomaly_center,
            &case.exact_flux,
        );
    }
    total
}

fn sphere_integral(
    _case: &OracleCase,
    radius: f64,
    center: Vec3,
    f: &Arc<dyn Fn(Vec3) -> f64 + Send + Sync>,
) -> f64 {
    // 8-point Gauss-Legendre on [-1, 1] (degree-15 exactness).
    const GL_X: [f64; 8] = [
        -0.960_289_856_497_536_2,
        -0.796_666_477_413_626_7,
        -0.525_532_409_916_329_0,
        -0.183_434_642_495_649_8,
        0.183_434_642_495_649_8,
        0.525_532_409_916_329_0,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_2,
    ];
    const GL_W: [f64; 8] = [
        0.101_228_536_290_376_26,
        0.222_381_034_453_374_47,
        0.313_706_645_877_887_3,
        0.362_683_783_378_362_0,
        0.362_683_783_378_362_0,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_47,
        0.101_228_536_290_376_26,
    ];
    let n_phi = 16;
    let mut total = 0.0;
    for (&ct, &w) in GL_X.iter().zip(&GL_W) {
        let st = (1.0 - ct * ct).sqrt();
        for m in 0..n_phi {
            let phi = 2.0 * PI * m as f64 / n_phi as f64;
            let p = vec3::axpy(
                center,
                radius,
                [st * phi.cos(), st * phi.sin(), ct],
            );
            total += w * (2.0 * PI / n_phi as f64) * radius * radius * f(p);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_boundary_point(case: &OracleCase, rng: &mut ChaCha8Rng) -> Vec3 {
        let v = vec3::normalize([
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
        ]);
        if case.domain.has_anomaly() && rng.random::<bool>() {
            vec3::axpy(case.domain.anomaly_center, case.domain.anomaly_radius, v)
        } else {
            v
        }
    }

    #[test]
    fn laplacian_is_exact_on_monomials() {
        // Δ(x²yz) = 2yz
        let p = Polynomial::new(&[(2, 1, 1, 1.0)]);
        assert_eq!(p.laplacian(), Polynomial::new(&[(0, 1, 1, 2.0)]));
    }

    #[test]
    fn solid_harmonics_are_harmonic_and_homogeneous() {
        for n in 0..=4 {
            let y = Polynomial::solid_harmonic(n).unwrap();
            assert!(y.is_harmonic(), "degree {n}");
            assert_eq!(y.degree(), n);
        }
        assert!(Polynomial::solid_harmonic(5).is_none());
    }

    #[test]
    fn dirichlet_cases_evaluate_exactly() {
        let one = dirichlet_polynomial_case(Polynomial::constant(1.0)).unwrap();
        assert_eq!((one.exact)([0.3, -0.2, 0.7]), 1.0);

        let saddle =
            dirichlet_polynomial_case(Polynomial::new(&[(2, 0, 0, 1.0), (0, 2, 0, -1.0)])).unwrap();
        assert_eq!((saddle.exact)([0.5, 0.0, 0.0]), 0.25);

        let xyz = dirichlet_polynomial_case(Polynomial::new(&[(1, 1, 1, 1.0)])).unwrap();
        assert_eq!((xyz.exact)([0.5, 0.5, 0.5]), 0.125);
    }

    #[test]
    fn dirichlet_rejects_non_harmonic() {
        let p = Polynomial::new(&[(2, 0, 0, 1.0)]);
        assert!(matches!(
            dirichlet_polynomial_case(p),
            Err(OracleError::NotHarmonic(_))
        ));
    }

    #[test]
    fn robin_case_matches_hand_computation() {
        // n = 0: ψ = 1, u ≡ 1.
        let c0 = robin_sphere_case(0, 2.0).unwrap();
        assert_eq!((c0.exact)([0.1, 0.2, 0.3]), 1.0);
        assert_eq!((c0.data.phi1)(1, [0.0, 0.0, 1.0]), 1.0);

        // n = 1, z = 0.5: ψ = 1.5·x₃, u = x₃.
        let c1 = robin_sphere_case(1, 2.0).unwrap();
        assert!(((c1.data.phi1)(1, [0.0, 0.0, 1.0]) - 1.5).abs() < 1e-15);
        assert!(((c1.exact)([0.0, 0.0, 0.9]) - 0.9).abs() < 1e-15);

        // n = 2, z = 0.5: ψ = 2(x² − y²).
        let c2 = robin_sphere_case(2, 2.0).unwrap();
        assert!(((c2.data.phi1)(1, [1.0, 0.0, 0.0]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn annulus_case_matches_radial_solution() {
        let case = annulus_radial_case(0.5, 1.0).unwrap();
        assert!(((case.exact)([1.0, 0.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!(((case.exact)([0.75, 0.0, 0.0]) - (2.0 - 1.0 / 0.75)).abs() < 1e-15);

        let zero = annulus_radial_case(0.5, 0.0).unwrap();
        assert_eq!((zero.exact)([0.75, 0.0, 0.0]), 0.0);

        let neg = annulus_radial_case(0.5, -1.0).unwrap();
        assert!(((neg.exact)([0.75, 0.0, 0.0]) + (2.0 - 1.0 / 0.75)).abs() < 1e-15);

        assert!(annulus_radial_case(1.5, 1.0).is_err());
    }

    #[test]
    fn exact_solutions_satisfy_boundary_conditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for case in standard_suite() {
            for _ in 0..1_000 {
                let y = random_boundary_point(&case, &mut rng);
                let r = boundary_residual(&case, y);
                assert!(
                    r.abs() <= 1e-10,
                    "{}: residual {r:.3e} at {y:?}",
                    case.name
                );
            }
        }
    }

    #[test]
    fn boundary_residual_detects_corrupted_data() {
        let mut case = robin_sphere_case(1, 2.0).unwrap();
        let orig = case.data.phi1.clone();
        case.data.phi1 = Arc::new(move |l, x| orig(l, x) + 0.05);
        let bad = (0..100)
            .map(|i| {
                let t = i as f64 / 100.0 * std::f64::consts::TAU;
                boundary_residual(&case, [t.cos(), t.sin(), 0.0]).abs()
            })
            .fold(0.0_f64, f64::max);
        assert!(bad > 1e-3);
    }

    #[test]
    fn fluxes_integrate_to_zero_over_closed_boundary() {
        for case in standard_suite() {
            let total = flux_integral(&case);
            assert!(
                total.abs() < 1e-12,
                "{}: ∮∂u/∂n = {total:.3e}",
                case.name
            );
        }
    }

    #[test]
    fn sphere_quadrature_weights_sum_to_area() {
        let case = annulus_radial_case(0.5, 1.0).unwrap();
        let one: Arc<dyn Fn(Vec3) -> f64 + Send + Sync> = Arc::new(|_| 1.0);
        let a = sphere_integral(&case, 1.0, [0.0; 3], &one);
        assert!((a - 4.0 * PI).abs() < 1e-12);
    }
}
