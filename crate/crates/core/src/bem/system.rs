//! Dense collocation system for the mixed Robin/Neumann problem on the
//! outer sphere and its LAPACK solve.
//!
//! Row i collocates at element centroid x_i:
//!
//!   ½u_i + Σ_j D_ij u_j + Σ_{j∈E} κ_j S_ij u_j
//!       = Σ_{j∈E} κ_j S_ij φ1_j + Σ_{j∉E} S_ij φ2_j
//!
//! S/D are single/double-layer element integrals of the (image-corrected)
//! kernel. The free-space double-layer self entry is not quadratured;
//! it is fixed by the discrete Gauss identity Σ_j D_ij = −½, which makes
//! constant data reproduce a constant potential exactly. The raw
//! (self = 0) row sum is exposed separately as a mesh-quality diagnostic.
//!
//! Storage is row-major; LAPACK sees the buffer as the column-major
//! transpose, so dgetrf factors Aᵀ and dgetrs solves with trans = 'T'.

use std::ffi::{c_char, c_int};

use crate::bem::kernel::{self, KernelError};
use crate::bem::mesh::SurfaceMesh;
use crate::geometry::{BoundaryData, BoundaryRegion, DomainSpec, SurfaceFn};
use crate::vec3;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BemError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("anomaly data must vanish for the image formulation (sampled value {0})")]
    NonzeroAnomalyData(f64),
    #[error("{0}")]
    Unsupported(&'static str),
    #[error("LU factorization failed: info = {0}")]
    Factorization(i32),
    #[error("system is numerically singular: rcond = {0:e}")]
    IllConditioned(f64),
    #[error("mesh has no elements")]
    EmptyMesh,
}

const RCOND_FLOOR: f64 = 1e-12;

/// Solved reference problem: potentials and normal fluxes at element
/// centroids plus the per-electrode currents.
#[derive(Debug, Clone)]
pub struct BemSolution {
    pub potentials: Vec<f64>,
    pub fluxes: Vec<f64>,
    /// Area-averaged flux (1/|E_l|)·∫ ∂u/∂n over each electrode, indexed by
    /// id − 1.
    pub electrode_currents: Vec<f64>,
    pub total_current: f64,
    pub rcond: f64,
    /// Max relative residual over a row sample, re-derived independently of
    /// the factorization.
    pub residual_norm: f64,
}

struct RowCtx<'a> {
    mesh: &'a SurfaceMesh,
    data: &'a BoundaryData,
    r0: Option<f64>,
}

impl RowCtx<'_> {
    /// Fill one collocation row and return its right-hand side.
    fn fill_row(&self, i: usize, row: &mut [f64]) -> f64 {
        let elems = &self.mesh.elements;
        let radius = self.mesh.outer_radius;
        let x = elems[i].centroid;
        let mut rhs = 0.0;
        let mut free_d_row_sum = 0.0;
        for (j, elem) in elems.iter().enumerate() {
            let (mut s, mut d) = kernel::element_integrals(x, elem, radius);
            free_d_row_sum += d;
            if let Some(r0) = self.r0 {
                let (gi, di) = kernel::image_pair(x, elem.centroid, r0);
                s += gi * elem.area;
                d += di * elem.area;
            }
            let mut entry = d;
            match elem.electrode_id {
                Some(id) => {
                    let kappa = self.data.kappa(id);
                    entry += kappa * s;
                    rhs += kappa * s * (self.data.phi1)(id, elem.centroid);
                }
                None => rhs += s * (self.data.phi2)(elem.centroid),
            }
            row[j] = entry;
        }
        // jump term ½ plus the Gauss-consistent free-space self entry
        // −½ − Σ_{j≠i} D_ij; together they add −Σ_{j≠i} D_ij
        row[i] -= free_d_row_sum;
        rhs
    }
}

fn check_mixed_inputs(mesh: &SurfaceMesh, domain: &DomainSpec, data: &BoundaryData) -> Result<(), BemError> {
    kernel::validate_kernel_domain(domain)?;
    if mesh.elements.is_empty() {
        return Err(BemError::EmptyMesh);
    }
    if data.outer_dirichlet.is_some() {
        return Err(BemError::Unsupported(
            "mixed assembly does not take an outer Dirichlet condition; use solve_dirichlet",
        ));
    }
    if mesh.elements.iter().any(|e| e.region == BoundaryRegion::DirichletAnomaly) {
        return Err(BemError::Unsupported(
            "mesh contains anomaly-surface elements; the image kernel already removes that boundary",
        ));
    }
    if domain.has_anomaly() {
        // the image kernel imposes u = 0 on the anomaly, so any other value
        // there is silently wrong: refuse up front
        let r0 = domain.anomaly_radius;
        for p in [
            [r0, 0.0, 0.0],
            [-r0, 0.0, 0.0],
            [0.0, r0, 0.0],
            [0.0, -r0, 0.0],
            [0.0, 0.0, r0],
            [0.0, 0.0, -r0],
        ] {
            let v = (data.phi3)(p);
            if v.abs() > 1e-12 {
                return Err(BemError::NonzeroAnomalyData(v));
            }
        }
    }
    Ok(())
}

/// Assemble and solve the mixed problem, then integrate electrode currents.
pub fn solve_mixed(
    mesh: &SurfaceMesh,
    domain: &DomainSpec,
    data: &BoundaryData,
) -> Result<BemSolution, BemError> {
    check_mixed_inputs(mesh, domain, data)?;
    let n = mesh.elements.len();
    let ctx = RowCtx { mesh, data, r0: kernel::image_radius(domain) };
    let mut a = vec![0.0f64; n * n];
    let mut rhs = vec![0.0f64; n];
    for i in 0..n {
        rhs[i] = ctx.fill_row(i, &mut a[i * n..(i + 1) * n]);
    }
    let (potentials, rcond) = lu_solve_in_place(&mut a, &rhs)?;
    drop(a);

    let fluxes: Vec<f64> = mesh
        .elements
        .iter()
        .zip(&potentials)
        .map(|(elem, &u)| match elem.electrode_id {
            Some(id) => data.kappa(id) * ((data.phi1)(id, elem.centroid) - u),
            None => (data.phi2)(elem.centroid),
        })
        .collect();
    let mut electrode_currents = vec![0.0f64; domain.electrodes.len()];
    let mut electrode_areas = vec![0.0f64; domain.electrodes.len()];
    for (elem, &q) in mesh.elements.iter().zip(&fluxes) {
        if let Some(id) = elem.electrode_id {
            electrode_currents[id - 1] += q * elem.area;
            electrode_areas[id - 1] += elem.area;
        }
    }
    for (j, a) in electrode_currents.iter_mut().zip(&electrode_areas) {
        *j /= a.max(1e-300);
    }
    let total_current = electrode_currents.iter().sum();

    // independent spot check of the solve: re-derive a sample of rows and
    // measure how well the solution satisfies them
    let mut row = vec![0.0f64; n];
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for i in (0..n).step_by((n / 200).max(1)) {
        let r = ctx.fill_row(i, &mut row);
        let lhs: f64 = row.iter().zip(&potentials).map(|(m, &u)| m * u).sum();
        worst = worst.max((lhs - r).abs());
        scale = scale.max(r.abs());
    }
    let residual_norm = worst / scale.max(1e-300);

    Ok(BemSolution {
        potentials,
        fluxes,
        electrode_currents,
        total_current,
        rcond,
        residual_norm,
    })
}

/// Max-norm residual of the mixed system at a candidate solution, relative
/// to the right-hand side scale. Re-derives rows one at a time, so it is an
/// independent check that costs a second assembly pass.
pub fn mixed_residual(
    mesh: &SurfaceMesh,
    domain: &DomainSpec,
    data: &BoundaryData,
    potentials: &[f64],
) -> Result<f64, BemError> {
    check_mixed_inputs(mesh, domain, data)?;
    let n = mesh.elements.len();
    assert_eq!(potentials.len(), n);
    let ctx = RowCtx { mesh, data, r0: kernel::image_radius(domain) };
    let mut row = vec![0.0f64; n];
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..n {
        let rhs = ctx.fill_row(i, &mut row);
        // fill_row folds the ½ jump into the diagonal already
        let mut lhs = 0.0;
        for (m, &u) in row.iter().zip(potentials) {
            lhs += m * u;
        }
        worst = worst.max((lhs - rhs).abs());
        scale = scale.max(rhs.abs());
    }
    Ok(worst / scale.max(1e-300))
}

/// Raw free-space double-layer row sum for collocation row i, self entry
/// set to zero. Converges to −½ as the mesh refines; the defect measures
/// quadrature plus flat-facet error.
pub fn double_layer_row_sum(mesh: &SurfaceMesh, i: usize) -> f64 {
    let x = mesh.elements[i].centroid;
    mesh.elements
        .iter()
        .map(|elem| kernel::element_integrals(x, elem, mesh.outer_radius).1)
        .sum()
}

/// Potential at an interior point from the representation formula
/// u(x) = Σ_j (S_j(x) q_j − D_j(x) u_j). Warns when x sits within one
/// element diameter of the surface, where the midpoint rule degrades.
pub fn interior_potential(
    x: vec3::Vec3,
    mesh: &SurfaceMesh,
    domain: &DomainSpec,
    potentials: &[f64],
    fluxes: &[f64],
) -> Result<f64, BemError> {
    kernel::validate_kernel_domain(domain)?;
    let r0 = kernel::image_radius(domain);
    let radius = mesh.outer_radius;
    let mut acc = 0.0;
    let mut too_close = false;
    for ((elem, &u), &q) in mesh.elements.iter().zip(potentials).zip(fluxes) {
        let (mut s, mut d) = kernel::element_integrals(x, elem, radius);
        if let Some(r0) = r0 {
            let (gi, di) = kernel::image_pair(x, elem.centroid, r0);
            s += gi * elem.area;
            d += di * elem.area;
        }
        acc += s * q - d * u;
        too_close |= vec3::dist(x, elem.centroid) < elem.diameter();
    }
    if too_close {
        log::warn!(
            "interior evaluation at {x:?} lies within one element diameter of the surface; \
             expect degraded accuracy"
        );
    }
    Ok(acc)
}

/// First-kind validation mode: given Dirichlet data g on the outer sphere,
/// solve Σ_j S_ij q_j = ½g_i + Σ_j D_ij g_j for the normal flux q.
pub fn solve_dirichlet(
    mesh: &SurfaceMesh,
    domain: &DomainSpec,
    g: &SurfaceFn,
) -> Result<(Vec<f64>, f64), BemError> {
    kernel::validate_kernel_domain(domain)?;
    if mesh.elements.is_empty() {
        return Err(BemError::EmptyMesh);
    }
    let n = mesh.elements.len();
    let r0 = kernel::image_radius(domain);
    let radius = mesh.outer_radius;
    let gvals: Vec<f64> = mesh.elements.iter().map(|e| g(e.centroid)).collect();
    let mut a = vec![0.0f64; n * n];
    let mut rhs = vec![0.0f64; n];
    for i in 0..n {
        let x = mesh.elements[i].centroid;
        let row = &mut a[i * n..(i + 1) * n];
        let mut free_d_row_sum = 0.0;
        let mut dg = 0.0;
        for (j, elem) in mesh.elements.iter().enumerate() {
            let (mut s, mut d) = kernel::element_integrals(x, elem, radius);
            free_d_row_sum += d;
            if let Some(r0) = r0 {
                let (gi, di) = kernel::image_pair(x, elem.centroid, r0);
                s += gi * elem.area;
                d += di * elem.area;
            }
            row[j] = s;
            dg += d * gvals[j];
        }
        // same Gauss-consistent self entry as the mixed system: the ½g_i
        // jump and the self term −(½ + Σ_{j≠i} D_ij)g_i combine below
        rhs[i] = dg - free_d_row_sum * gvals[i];
    }
    lu_solve_in_place(&mut a, &rhs)
}

/// Factor the row-major matrix in place and solve A x = rhs, returning the
/// solution and the reciprocal condition estimate.
fn lu_solve_in_place(a: &mut [f64], rhs: &[f64]) -> Result<(Vec<f64>, f64), BemError> {
    let n = rhs.len();
    assert_eq!(a.len(), n * n);
    // 1-norm of the column-major transpose = max row abs sum
    let anorm = (0..n)
        .map(|i| a[i * n..(i + 1) * n].iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let ni = n as c_int;
    let mut ipiv = vec![0 as c_int; n];
    let mut info: c_int = 0;
    unsafe {
        lapack_sys::dgetrf_(&ni, &ni, a.as_mut_ptr(), &ni, ipiv.as_mut_ptr(), &mut info);
    }
    if info != 0 {
        return Err(BemError::Factorization(info));
    }
    let mut rcond = 0.0f64;
    let mut work = vec![0.0f64; 4 * n];
    let mut iwork = vec![0 as c_int; n];
    let norm_one = b'1' as c_char;
    unsafe {
        lapack_sys::dgecon_(
            &norm_one,
            &ni,
            a.as_ptr(),
            &ni,
            &anorm,
            &mut rcond,
            work.as_mut_ptr(),
            iwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(BemError::Factorization(info));
    }
    if rcond < RCOND_FLOOR {
        return Err(BemError::IllConditioned(rcond));
    }
    let mut x = rhs.to_vec();
    let trans = b'T' as c_char;
    let one: c_int = 1;
    unsafe {
        lapack_sys::dgetrs_(
            &trans,
            &ni,
            &one,
            a.as_ptr(),
            &ni,
            ipiv.as_ptr(),
            x.as_mut_ptr(),
            &ni,
            &mut info,
        );
    }
    if info != 0 {
        return Err(BemError::Factorization(info));
    }
    Ok((x, rcond))
}
