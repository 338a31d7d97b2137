//! Green's function and element quadrature for the collocation system.
//!
//! With a concentric grounded anomaly of radius r0 the kernel is corrected
//! by a single image charge, G(x,y) = 1/(4π|x−y|) − (r0/|y|)/(4π|x−y*|)
//! with y* = r0²·y/|y|², which vanishes identically for x on the anomaly
//! sphere. That removes the anomaly surface from the integral equation:
//! only the outer sphere is meshed. The image point never comes within
//! 1 − r0 of the outer sphere, so the image part is smooth there and a
//! one-point rule per element integrates it; all singular quadrature
//! lives in the free-space part.

use crate::bem::mesh::{CapCell, Element};
use crate::geometry::DomainSpec;
use crate::vec3::{self, Vec3};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("kernel evaluated at coincident points")]
    CoincidentPoints,
    #[error("kernel point lies inside the anomaly (|p| = {0})")]
    InsideAnomaly(f64),
    #[error("image kernel requires a concentric anomaly (center offset {0})")]
    OffsetAnomaly(f64),
}

/// Image strength, or None without an anomaly.
pub fn image_radius(domain: &DomainSpec) -> Option<f64> {
    domain.has_anomaly().then_some(domain.anomaly_radius)
}

/// Check the kernel preconditions once per solve; the inner evaluators
/// skip them.
pub fn validate_kernel_domain(domain: &DomainSpec) -> Result<(), KernelError> {
    if domain.has_anomaly() {
        let off = vec3::norm(domain.anomaly_center);
        if off > 1e-12 {
            return Err(KernelError::OffsetAnomaly(off));
        }
    }
    Ok(())
}

/// G(x, y) and its derivative along the outward normal ŷ at y.
pub fn greens_function(x: Vec3, y: Vec3, domain: &DomainSpec) -> Result<(f64, f64), KernelError> {
    validate_kernel_domain(domain)?;
    if vec3::dist(x, y) < 1e-14 {
        return Err(KernelError::CoincidentPoints);
    }
    if let Some(r0) = image_radius(domain) {
        for p in [x, y] {
            if vec3::norm(p) < r0 - 1e-12 {
                return Err(KernelError::InsideAnomaly(vec3::norm(p)));
            }
        }
    }
    let (g, dg) = free_pair(x, y);
    match image_radius(domain) {
        None => Ok((g, dg)),
        Some(r0) => {
            let (gi, di) = image_pair(x, y, r0);
            Ok((g + gi, dg + di))
        }
    }
}

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

/// Free-space kernel pair (1/(4π|x−y|), ∂/∂n_y of it), n = ŷ.
#[inline]
pub fn free_pair(x: Vec3, y: Vec3) -> (f64, f64) {
    let d = vec3::sub(x, y);
    let dist = vec3::norm(d);
    let yhat = vec3::scale(y, 1.0 / vec3::norm(y));
    (
        1.0 / (FOUR_PI * dist),
        vec3::dot(d, yhat) / (FOUR_PI * dist * dist * dist),
    )
}

/// Image-correction pair: −(r0/|y|)/(4π|x−y*|) and its ŷ-derivative.
#[inline]
pub fn image_pair(x: Vec3, y: Vec3, r0: f64) -> (f64, f64) {
    let rho = vec3::norm(y);
    let yhat = vec3::scale(y, 1.0 / rho);
    let ystar = vec3::scale(y, r0 * r0 / (rho * rho));
    let u = vec3::sub(x, ystar);
    let un = vec3::norm(u);
    let a = r0 / FOUR_PI;
    let g = -a / (rho * un);
    // ∇_y G_img = a·[ŷ/(ρ²|u|) − (r0²/(ρ³|u|²))(û − 2ŷ(ŷ·û))]
    let uhat = vec3::scale(u, 1.0 / un);
    let ydotu = vec3::dot(yhat, uhat);
    let grad = vec3::axpy(
        vec3::scale(yhat, 1.0 / (rho * rho * un)),
        -r0 * r0 / (rho * rho * rho * un * un),
        vec3::axpy(uhat, -2.0 * ydotu, yhat),
    );
    (g, a * vec3::dot(grad, yhat))
}

// 6-point Gauss-Legendre on [0, 1].
const GAUSS6: [(f64, f64); 6] = [
    (0.033_765_242_898_423_99, 0.085_662_246_189_585_18),
    (0.169_395_306_766_867_76, 0.180_380_786_524_069_3),
    (0.380_690_406_958_401_56, 0.233_956_967_286_345_52),
    (0.619_309_593_041_598_44, 0.233_956_967_286_345_52),
    (0.830_604_693_233_132_3, 0.180_380_786_524_069_3),
    (0.966_234_757_101_576, 0.085_662_246_189_585_18),
];

/// Distance bands, in element diameters: 4×4 subdivision inside the first,
/// 2×2 inside the second, one-point rule beyond.
const NEAR_FIELD_DIAMETERS: f64 = 3.0;
const MID_FIELD_DIAMETERS: f64 = 8.0;

/// Integrals (∫ G dA, ∫ ∂G/∂n dA) of the free-space kernel over one
/// element, with the collocation point anywhere: Duffy quadrature when x
/// is the element's own centroid (double layer set to zero there — the
/// jump is carried explicitly by the system diagonal), subdivided
/// midpoint rules nearby, one-point rule far away.
pub fn element_integrals(x: Vec3, elem: &Element, outer_radius: f64) -> (f64, f64) {
    let d = vec3::dist(x, elem.centroid);
    if d < 1e-14 {
        let single = match &elem.cell {
            Some(cell) => cap_cell_self_single_layer(x, cell, outer_radius),
            None => triangle_self_single_layer(x, elem),
        };
        (single, 0.0)
    } else if d < NEAR_FIELD_DIAMETERS * elem.diameter() {
        subdivided_integrals(x, elem, outer_radius, 4)
    } else if d < MID_FIELD_DIAMETERS * elem.diameter() {
        subdivided_integrals(x, elem, outer_radius, 2)
    } else {
        let (g, dg) = free_pair(x, elem.centroid);
        (g * elem.area, dg * elem.area)
    }
}

/// One-point rule on a subdivided element: n×n polar sub-cells for cap
/// cells, n² flat sub-triangles otherwise, sub-areas rescaled so they sum
/// to the element's exact curved area.
fn subdivided_integrals(x: Vec3, elem: &Element, outer_radius: f64, n: usize) -> (f64, f64) {
    let mut pts: Vec<(Vec3, f64)> = Vec::with_capacity(n * n);
    match &elem.cell {
        Some(cell) => {
            for i in 0..n {
                let t0 = cell.t[0] + (cell.t[1] - cell.t[0]) * i as f64 / n as f64;
                let t1 = cell.t[0] + (cell.t[1] - cell.t[0]) * (i + 1) as f64 / n as f64;
                for j in 0..n {
                    let p0 = cell.phi[0] + (cell.phi[1] - cell.phi[0]) * j as f64 / n as f64;
                    let p1 = cell.phi[0] + (cell.phi[1] - cell.phi[0]) * (j + 1) as f64 / n as f64;
                    let area = outer_radius * outer_radius * (p1 - p0) * (t0.cos() - t1.cos());
                    pts.push((cell.point(0.5 * (t0 + t1), 0.5 * (p0 + p1), outer_radius), area));
                }
            }
        }
        None => {
            let [a, b, c] = elem.vertices;
            let mut flat_total = 0.0;
            for i in 0..n {
                for j in 0..n - i {
                    push_subtriangle(&mut pts, a, b, c, n, i, j, false, &mut flat_total);
                    if j + 1 < n - i {
                        push_subtriangle(&mut pts, a, b, c, n, i, j, true, &mut flat_total);
                    }
                }
            }
            let scale = elem.area / flat_total;
            for p in &mut pts {
                p.0 = vec3::scale(vec3::normalize(p.0), outer_radius);
                p.1 *= scale;
            }
        }
    }
    let (mut g, mut dg) = (0.0, 0.0);
    for (y, w) in pts {
        let (gv, dv) = free_pair(x, y);
        g += gv * w;
        dg += dv * w;
    }
    (g, dg)
}

fn push_subtriangle(
    pts: &mut Vec<(Vec3, f64)>,
    a: Vec3,
    b: Vec3,
    c: Vec3,
    n: usize,
    i: usize,
    j: usize,
    upper: bool,
    flat_total: &mut f64,
) {
    let n = n as f64;
    let corner = |bi: f64, bj: f64| {
        let bk = n - bi - bj;
        vec3::scale(
            vec3::add(vec3::add(vec3::scale(a, bk), vec3::scale(b, bi)), vec3::scale(c, bj)),
            1.0 / n,
        )
    };
    let (bi, bj) = (i as f64, j as f64);
    let (p, q, r) = if upper {
        (corner(bi + 1.0, bj), corner(bi + 1.0, bj + 1.0), corner(bi, bj + 1.0))
    } else {
        (corner(bi, bj), corner(bi + 1.0, bj), corner(bi, bj + 1.0))
    };
    let centroid = vec3::scale(vec3::add(vec3::add(p, q), r), 1.0 / 3.0);
    let area = 0.5 * vec3::norm(vec3::cross(vec3::sub(q, p), vec3::sub(r, p)));
    pts.push((centroid, area));
    *flat_total += area;
}

/// ∫ 1/(4π|x−y|) dA over a polar cap cell with x at the cell midpoint:
/// split at the midpoint into four (t, φ) boxes, each integrated over two
/// Duffy triangles that cancel the corner singularity.
fn cap_cell_self_single_layer(x: Vec3, cell: &CapCell, outer_radius: f64) -> f64 {
    let tc = 0.5 * (cell.t[0] + cell.t[1]);
    let pc = 0.5 * (cell.phi[0] + cell.phi[1]);
    let r = outer_radius;
    let mut total = 0.0;
    for tb in [cell.t[0], cell.t[1]] {
        for pb in [cell.phi[0], cell.phi[1]] {
            let (wt, wp) = (tb - tc, pb - pc);
            if wt.abs() < 1e-15 || wp.abs() < 1e-15 {
                continue;
            }
            for swap in [false, true] {
                for &(u, wu) in &GAUSS6 {
                    for &(v, wv) in &GAUSS6 {
                        // triangle {(0,0),(1,0),(1,1)} via (s,t) = (u, uv);
                        // the swapped copy covers the other half of the box
                        let (s, t) = (u, u * v);
                        let (dt, dp) = if swap { (t * wt, s * wp) } else { (s * wt, t * wp) };
                        let y = cell.point(tc + dt, pc + dp, r);
                        let dist = vec3::dist(x, y);
                        let jac = u * (wt * wp).abs();
                        let da = r * r * (tc + dt).sin();
                        total += wu * wv * jac * da / (FOUR_PI * dist);
                    }
                }
            }
        }
    }
    total
}

/// ∫ 1/(4π|x−y|) dA over a flat triangle with x at its centroid, Duffy
/// quadrature on the three centroid-corner sub-triangles, rescaled to the
/// element's curved area.
fn triangle_self_single_layer(x: Vec3, elem: &Element) -> f64 {
    let [a, b, c] = elem.vertices;
    let centroid = vec3::scale(vec3::add(vec3::add(a, b), c), 1.0 / 3.0);
    let flat_area = 0.5 * vec3::norm(vec3::cross(vec3::sub(b, a), vec3::sub(c, a)));
    let mut total = 0.0;
    for (p, q) in [(a, b), (b, c), (c, a)] {
        let e1 = vec3::sub(p, centroid);
        let e2 = vec3::sub(q, centroid);
        let sub_area = 0.5 * vec3::norm(vec3::cross(e1, e2));
        for &(u, wu) in &GAUSS6 {
            for &(v, wv) in &GAUSS6 {
                // Duffy: (s,t) = (u, uv) collapses the singular corner
                let y = vec3::add(
                    vec3::add(centroid, vec3::scale(e1, u * (1.0 - v))),
                    vec3::scale(e2, u * v),
                );
                let dist = vec3::dist(x, y);
                total += wu * wv * 2.0 * sub_area * u / (FOUR_PI * dist);
            }
        }
    }
    total * (elem.area / flat_area)
}
