//! Surface mesh for the collocation solver.
//!
//! Each electrode cap carries a polar mesh of four concentric layers whose
//! ring widths follow a geometric grading that accumulates at the electrode
//! rim, where the boundary condition switches and the flux is least smooth.
//! The remaining sphere is covered by a subdivided icosahedron with the cap
//! footprints cut out and the cut border snapped onto the cap rims.

use std::f64::consts::PI;
use std::io::{self, BufRead, Write};

use crate::geometry::{BoundaryRegion, DomainSpec};
use crate::vec3::{self, Vec3};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("layer radii must be strictly increasing and positive, got {0:?}")]
    BadLayerRadii([f64; 4]),
    #[error("ring counts and sectors must be >= 1")]
    EmptyLayer,
    #[error("grading ratio must lie in (0, 1], got {0}")]
    BadGradingRatio(f64),
    #[error("electrode {0} cap radius {1} does not sit on a layer boundary (rim {2})")]
    RimMismatch(usize, f64, f64),
    #[error("extended caps of electrodes {0} and {1} overlap")]
    OverlappingCaps(usize, usize),
    #[error("element areas sum to {total:.6}, expected {expected:.6} (defect {defect_pct:.3}%)")]
    AreaDefect {
        total: f64,
        expected: f64,
        defect_pct: f64,
    },
    #[error("element {index} tagged {tagged:?} but classified {classified:?}")]
    RegionMismatch {
        index: usize,
        tagged: BoundaryRegion,
        classified: BoundaryRegion,
    },
    #[error("mesh file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Mesh resolution and grading controls.
///
/// `layer_radii` are the cumulative geodesic radii of the four cap layers;
/// the second entry is the electrode rim and must match the electrode's cap
/// radius. `layer_rings[j]` rings cover layer j, each split into `sectors`
/// azimuthal cells. Ring widths shrink geometrically toward the rim from
/// both sides (uniform in the outermost layer).
#[derive(Debug, Clone, PartialEq)]
pub struct MeshParams {
    pub layer_rings: [u32; 4],
    pub sectors: u32,
    pub layer_radii: [f64; 4],
    pub grading_ratio: f64,
    pub icosphere_depth: u32,
    /// Extra 4-way subdivision levels applied only to icosphere triangles
    /// near a cap rim before drop/snap; each level cuts the rim area
    /// mismatch about fourfold.
    pub rim_refine: u32,
}

impl Default for MeshParams {
    fn default() -> Self {
        MeshParams {
            layer_rings: [8, 7, 7, 4],
            sectors: 22,
            layer_radii: [0.12, 0.2, 0.26, 0.3],
            grading_ratio: 0.75,
            icosphere_depth: 5,
            rim_refine: 2,
        }
    }
}

impl MeshParams {
    pub fn validate(&self) -> Result<(), MeshError> {
        let r = self.layer_radii;
        if !(r[0] > 0.0 && r[1] > r[0] && r[2] > r[1] && r[3] > r[2] && r.iter().all(|v| v.is_finite())) {
            return Err(MeshError::BadLayerRadii(r));
        }
        if self.layer_rings.iter().any(|&m| m == 0) || self.sectors == 0 {
            return Err(MeshError::EmptyLayer);
        }
        if !(self.grading_ratio > 0.0 && self.grading_ratio <= 1.0) {
            return Err(MeshError::BadGradingRatio(self.grading_ratio));
        }
        if self.rim_refine > 6 {
            return Err(MeshError::Parse(format!(
                "rim_refine {} would explode the element count; 6 is plenty",
                self.rim_refine
            )));
        }
        Ok(())
    }

    /// Geodesic radii of all ring boundaries, 0 to the extended cap radius.
    ///
    /// Layers 1 and 2 shrink outward (toward the rim), layer 3 shrinks
    /// inward (smallest ring adjacent to the rim), layer 4 is uniform.
    pub fn ring_boundaries(&self) -> Vec<f64> {
        let alpha = self.grading_ratio;
        let mut bounds = vec![0.0];
        let mut start = 0.0;
        for (j, &end) in self.layer_radii.iter().enumerate() {
            let extent = end - start;
            let m = self.layer_rings[j] as usize;
            let widths: Vec<f64> = match j {
                0 | 1 => geometric_widths(extent, m, alpha),
                2 => {
                    let mut w = geometric_widths(extent, m, alpha);
                    w.reverse();
                    w
                }
                _ => vec![extent / m as f64; m],
            };
            for w in widths {
                start += w;
                bounds.push(start);
            }
            // kill accumulated rounding so layer edges are exact
            *bounds.last_mut().unwrap() = end;
            start = end;
        }
        bounds
    }
}

/// Ring widths d0*alpha^i summing exactly to `extent`, largest first.
fn geometric_widths(extent: f64, m: usize, alpha: f64) -> Vec<f64> {
    let s: f64 = (0..m).map(|i| alpha.powi(i as i32)).sum();
    (0..m).map(|i| extent * alpha.powi(i as i32) / s).collect()
}

/// Polar-cell bounds of a cap element, kept for singular quadrature.
#[derive(Debug, Clone, Copy)]
pub struct CapCell {
    pub axis: Vec3,
    pub e1: Vec3,
    pub e2: Vec3,
    /// Geodesic radius bounds [inner, outer].
    pub t: [f64; 2],
    /// Sector angle bounds.
    pub phi: [f64; 2],
}

impl CapCell {
    /// Point on the sphere of radius `r` at cell coordinates (t, phi).
    pub fn point(&self, t: f64, phi: f64, r: f64) -> Vec3 {
        let (st, ct) = t.sin_cos();
        let (sp, cp) = phi.sin_cos();
        let d = vec3::axpy(vec3::scale(self.axis, ct), st * cp, self.e1);
        vec3::scale(vec3::axpy(d, st * sp, self.e2), r)
    }
}

#[derive(Debug, Clone)]
pub struct Element {
    /// Representative corners on the sphere. Icosphere elements are true
    /// spherical triangles; cap cells are annular sectors and store the
    /// inner-left, outer-left and outer-right corners (first-ring cells are
    /// true triangles with the apex first). `area` is authoritative.
    pub vertices: [Vec3; 3],
    pub centroid: Vec3,
    pub area: f64,
    pub region: BoundaryRegion,
    pub electrode_id: Option<usize>,
    pub cell: Option<CapCell>,
}

impl Element {
    pub fn diameter(&self) -> f64 {
        let [a, b, c] = self.vertices;
        vec3::dist(a, b).max(vec3::dist(b, c)).max(vec3::dist(a, c))
    }
}

#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    pub elements: Vec<Element>,
    pub outer_radius: f64,
    pub params: MeshParams,
}

/// Solid angle of the spherical triangle spanned by unit vectors.
pub fn spherical_triangle_solid_angle(a: Vec3, b: Vec3, c: Vec3) -> f64 {
    let num = vec3::dot(a, vec3::cross(b, c));
    let den = 1.0 + vec3::dot(a, b) + vec3::dot(b, c) + vec3::dot(a, c);
    2.0 * num.atan2(den).abs()
}

fn orthonormal_frame(axis: Vec3) -> (Vec3, Vec3) {
    let pick = if axis[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let e1 = vec3::normalize(vec3::cross(axis, pick));
    let e2 = vec3::cross(axis, e1);
    (e1, e2)
}

/// Graded polar mesh of one extended electrode cap.
///
/// Cells inside the rim are tagged as that electrode's Robin region; the
/// three outer layers extend the structured mesh past the rim and carry the
/// off-electrode Neumann tag.
pub fn build_graded_electrode_mesh(
    domain: &DomainSpec,
    electrode_index: usize,
    params: &MeshParams,
) -> Result<Vec<Element>, MeshError> {
    params.validate()?;
    let el = &domain.electrodes[electrode_index];
    if (el.cap_radius - params.layer_radii[1]).abs() > 1e-12 {
        return Err(MeshError::RimMismatch(el.id, el.cap_radius, params.layer_radii[1]));
    }
    let r = domain.outer_radius;
    let axis = el.center;
    let (e1, e2) = orthonormal_frame(axis);
    let bounds = params.ring_boundaries();
    let rim = params.layer_radii[1];
    let ns = params.sectors as usize;
    let dphi = 2.0 * std::f64::consts::PI / ns as f64;

    let mut elements = Vec::with_capacity((bounds.len() - 1) * ns);
    for ring in 0..bounds.len() - 1 {
        let (t0, t1) = (bounds[ring], bounds[ring + 1]);
        let on_electrode = t1 <= rim + 1e-12;
        let band_area = r * r * dphi * (t0.cos() - t1.cos());
        for s in 0..ns {
            let (p0, p1) = (s as f64 * dphi, (s + 1) as f64 * dphi);
            let cell = CapCell { axis, e1, e2, t: [t0, t1], phi: [p0, p1] };
            let vertices = if ring == 0 {
                [cell.point(0.0, 0.0, r), cell.point(t1, p0, r), cell.point(t1, p1, r)]
            } else {
                [cell.point(t0, p0, r), cell.point(t1, p0, r), cell.point(t1, p1, r)]
            };
            let mid = 0.5 * (t0 + t1);
            elements.push(Element {
                vertices,
                centroid: cell.point(mid, 0.5 * (p0 + p1), r),
                area: band_area,
                region: if on_electrode {
                    BoundaryRegion::RobinElectrode(el.id)
                } else {
                    BoundaryRegion::NeumannOff
                },
                electrode_id: on_electrode.then_some(el.id),
                cell: Some(cell),
            });
        }
    }
    Ok(elements)
}

/// Triangles of a subdivided icosahedron projected onto the sphere.
pub fn icosphere(depth: u32, radius: f64) -> Vec<[Vec3; 3]> {
    let g = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let verts: Vec<Vec3> = [
        [-1.0, g, 0.0], [1.0, g, 0.0], [-1.0, -g, 0.0], [1.0, -g, 0.0],
        [0.0, -1.0, g], [0.0, 1.0, g], [0.0, -1.0, -g], [0.0, 1.0, -g],
        [g, 0.0, -1.0], [g, 0.0, 1.0], [-g, 0.0, -1.0], [-g, 0.0, 1.0],
    ]
    .into_iter()
    .map(vec3::normalize)
    .collect();
    let faces: [[usize; 3]; 20] = [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    let mut tris: Vec<[Vec3; 3]> = faces.iter().map(|f| [verts[f[0]], verts[f[1]], verts[f[2]]]).collect();
    for _ in 0..depth {
        let mut next = Vec::with_capacity(tris.len() * 4);
        for [a, b, c] in tris {
            let ab = vec3::normalize(vec3::add(a, b));
            let bc = vec3::normalize(vec3::add(b, c));
            let ca = vec3::normalize(vec3::add(c, a));
            next.push([a, ab, ca]);
            next.push([ab, b, bc]);
            next.push([ca, bc, c]);
            next.push([ab, bc, ca]);
        }
        tris = next;
    }
    for t in &mut tris {
        // orient outward
        let n = vec3::cross(vec3::sub(t[1], t[0]), vec3::sub(t[2], t[0]));
        if vec3::dot(n, vec3::add(vec3::add(t[0], t[1]), t[2])) < 0.0 {
            t.swap(1, 2);
        }
        for v in t.iter_mut() {
            *v = vec3::scale(*v, radius);
        }
    }
    tris
}

/// Full partition of the outer sphere: graded caps plus the icosphere
/// remainder. Icosphere triangles fully inside an extended cap are dropped;
/// border triangles have their interior vertices snapped onto the cap rim.
/// An anomaly surface needs no mesh: the image-corrected kernel satisfies
/// the grounded condition there identically.
pub fn build_global_mesh(domain: &DomainSpec, params: &MeshParams) -> Result<SurfaceMesh, MeshError> {
    params.validate()?;
    let r = domain.outer_radius;
    let re = params.layer_radii[3];
    // A cap radius of pi means the electrode has no rim: the plain icosphere
    // covers it and every element is classified onto it below.
    let capped: Vec<usize> = (0..domain.electrodes.len())
        .filter(|&i| domain.electrodes[i].cap_radius < PI - 1e-12)
        .collect();
    for (k, &i) in capped.iter().enumerate() {
        for &j in capped.iter().skip(k + 1) {
            let (a, b) = (&domain.electrodes[i], &domain.electrodes[j]);
            if vec3::geodesic(a.center, b.center) < 2.0 * re {
                return Err(MeshError::OverlappingCaps(a.id, b.id));
            }
        }
    }

    let mut elements = Vec::new();
    for &i in &capped {
        elements.extend(build_graded_electrode_mesh(domain, i, params)?);
    }

    // Rim-crossing triangles carry the whole drop/snap area error (an edge
    // between two outside vertices can dip inside the rim circle by its
    // chord sagitta), so refine them a few levels before deciding.
    let mut stack: Vec<([Vec3; 3], u32)> = icosphere(params.icosphere_depth, r)
        .into_iter()
        .map(|t| (t, params.rim_refine))
        .collect();
    while let Some((tri, budget)) = stack.pop() {
        let unit = tri.map(vec3::normalize);
        let mut discard = false;
        let mut near_rim = false;
        let mut snapped = tri;
        let edge = vec3::geodesic(unit[0], unit[1])
            .max(vec3::geodesic(unit[1], unit[2]))
            .max(vec3::geodesic(unit[0], unit[2]));
        for &i in &capped {
            let el = &domain.electrodes[i];
            let g = unit.map(|v| vec3::geodesic(v, el.center));
            if g.iter().all(|&d| d < re - 1e-12) {
                discard = true;
                break;
            }
            near_rim |= g.iter().any(|&d| (d - re).abs() < edge);
            for k in 0..3 {
                if g[k] < re - 1e-12 {
                    snapped[k] = vec3::scale(slerp_to_radius(el.center, unit[k], re), r);
                }
            }
        }
        if discard {
            continue;
        }
        if near_rim && budget > 0 {
            let [a, b, c] = unit;
            let ab = vec3::scale(vec3::normalize(vec3::add(a, b)), r);
            let bc = vec3::scale(vec3::normalize(vec3::add(b, c)), r);
            let ca = vec3::scale(vec3::normalize(vec3::add(c, a)), r);
            let (ar, br, cr) = (vec3::scale(a, r), vec3::scale(b, r), vec3::scale(c, r));
            for child in [[ar, ab, ca], [ab, br, bc], [ca, bc, cr], [ab, bc, ca]] {
                stack.push((child, budget - 1));
            }
            continue;
        }
        let u = snapped.map(vec3::normalize);
        let area = r * r * spherical_triangle_solid_angle(u[0], u[1], u[2]);
        if area <= 1e-12 * r * r {
            continue;
        }
        let centroid =
            vec3::scale(vec3::normalize(vec3::add(vec3::add(snapped[0], snapped[1]), snapped[2])), r);
        let region = domain
            .classify_boundary_point(centroid)
            .map_err(|e| MeshError::Parse(format!("icosphere centroid off sphere: {e}")))?;
        let electrode_id = match region {
            BoundaryRegion::RobinElectrode(id) => Some(id),
            _ => None,
        };
        elements.push(Element {
            vertices: snapped,
            centroid,
            area,
            region,
            electrode_id,
            cell: None,
        });
    }

    let mesh = SurfaceMesh { elements, outer_radius: r, params: params.clone() };
    mesh.validate(domain)?;
    Ok(mesh)
}

/// Move `p` along the great circle from `center` so its geodesic distance
/// from `center` becomes `target`. Both inputs are unit vectors.
fn slerp_to_radius(center: Vec3, p: Vec3, target: f64) -> Vec3 {
    let tangent = vec3::axpy(p, -vec3::dot(p, center), center);
    let tn = vec3::norm(tangent);
    if tn < 1e-15 {
        // p sits at the cap center; direction is arbitrary
        let (e1, _) = orthonormal_frame(center);
        return vec3::axpy(vec3::scale(center, target.cos()), target.sin(), e1);
    }
    vec3::axpy(vec3::scale(center, target.cos()), target.sin() / tn, tangent)
}

impl SurfaceMesh {
    pub fn total_area(&self) -> f64 {
        self.elements.iter().map(|e| e.area).sum()
    }

    pub fn electrode_elements(&self, id: usize) -> impl Iterator<Item = (usize, &Element)> {
        self.elements
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.electrode_id == Some(id))
    }

    /// Area-sum and tag consistency checks; run after construction or load.
    pub fn validate(&self, domain: &DomainSpec) -> Result<(), MeshError> {
        let expected = 4.0 * std::f64::consts::PI * self.outer_radius * self.outer_radius;
        let total = self.total_area();
        let defect_pct = 100.0 * (total - expected).abs() / expected;
        if defect_pct > 0.5 {
            return Err(MeshError::AreaDefect { total, expected, defect_pct });
        }
        for (index, e) in self.elements.iter().enumerate() {
            let classified = domain
                .classify_boundary_point(e.centroid)
                .map_err(|err| MeshError::Parse(format!("centroid of element {index}: {err}")))?;
            if classified != e.region {
                return Err(MeshError::RegionMismatch { index, tagged: e.region, classified });
            }
        }
        Ok(())
    }

    /// Plain-text dump: commented header with the generation parameters,
    /// then one element per line with nine vertex coordinates, the area,
    /// the region tag and the electrode id (`-` off electrodes).
    pub fn dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        let p = &self.params;
        writeln!(w, "# surface-mesh v1")?;
        writeln!(w, "# outer_radius {}", self.outer_radius)?;
        writeln!(
            w,
            "# layer_rings {} {} {} {}",
            p.layer_rings[0], p.layer_rings[1], p.layer_rings[2], p.layer_rings[3]
        )?;
        writeln!(w, "# sectors {}", p.sectors)?;
        writeln!(
            w,
            "# layer_radii {} {} {} {}",
            p.layer_radii[0], p.layer_radii[1], p.layer_radii[2], p.layer_radii[3]
        )?;
        writeln!(w, "# grading_ratio {}", p.grading_ratio)?;
        writeln!(w, "# icosphere_depth {}", p.icosphere_depth)?;
        writeln!(w, "# rim_refine {}", p.rim_refine)?;
        writeln!(w, "# columns: v1x v1y v1z v2x v2y v2z v3x v3y v3z area region electrode")?;
        writeln!(w, "# elements {}", self.elements.len())?;
        for e in &self.elements {
            for v in e.vertices {
                write!(w, "{:.17e} {:.17e} {:.17e} ", v[0], v[1], v[2])?;
            }
            let (tag, id) = match e.region {
                BoundaryRegion::RobinElectrode(id) => ("electrode", id.to_string()),
                BoundaryRegion::NeumannOff => ("off", "-".to_string()),
                BoundaryRegion::DirichletAnomaly => ("anomaly", "-".to_string()),
            };
            writeln!(w, "{:.17e} {tag} {id}", e.area)?;
        }
        Ok(())
    }

    /// Parse a dump. Cap-cell quadrature metadata is not serialized, so a
    /// loaded mesh falls back to generic singular quadrature, and centroids
    /// are reconstructed as normalized vertex averages (exact for icosphere
    /// triangles, a small collocation shift for wide cap cells); prefer
    /// rebuilding from parameters when exactness matters.
    pub fn load<R: BufRead>(r: R) -> Result<SurfaceMesh, MeshError> {
        let mut params = MeshParams::default();
        let mut outer_radius = 1.0;
        let mut declared = None;
        let mut elements = Vec::new();
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let mut it = rest.split_whitespace();
                match it.next() {
                    Some("outer_radius") => outer_radius = parse_next(&mut it, "outer_radius")?,
                    Some("layer_rings") => {
                        for slot in params.layer_rings.iter_mut() {
                            *slot = parse_next(&mut it, "layer_rings")?;
                        }
                    }
                    Some("sectors") => params.sectors = parse_next(&mut it, "sectors")?,
                    Some("layer_radii") => {
                        for slot in params.layer_radii.iter_mut() {
                            *slot = parse_next(&mut it, "layer_radii")?;
                        }
                    }
                    Some("grading_ratio") => params.grading_ratio = parse_next(&mut it, "grading_ratio")?,
                    Some("icosphere_depth") => params.icosphere_depth = parse_next(&mut it, "icosphere_depth")?,
                    Some("rim_refine") => params.rim_refine = parse_next(&mut it, "rim_refine")?,
                    Some("elements") => declared = Some(parse_next::<usize>(&mut it, "elements")?),
                    _ => {}
                }
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 12 {
                return Err(MeshError::Parse(format!(
                    "expected 12 fields per element line, got {}",
                    fields.len()
                )));
            }
            let mut nums = [0.0_f64; 10];
            for (slot, f) in nums.iter_mut().zip(&fields[..10]) {
                *slot = f
                    .parse()
                    .map_err(|e| MeshError::Parse(format!("bad number {f:?}: {e}")))?;
            }
            let (region, electrode_id) = match (fields[10], fields[11]) {
                ("electrode", id) => {
                    let id: usize = id
                        .parse()
                        .map_err(|e| MeshError::Parse(format!("bad electrode id {id:?}: {e}")))?;
                    (BoundaryRegion::RobinElectrode(id), Some(id))
                }
                ("off", _) => (BoundaryRegion::NeumannOff, None),
                ("anomaly", _) => (BoundaryRegion::DirichletAnomaly, None),
                (tag, _) => return Err(MeshError::Parse(format!("unknown region tag {tag:?}"))),
            };
            let vertices = [
                [nums[0], nums[1], nums[2]],
                [nums[3], nums[4], nums[5]],
                [nums[6], nums[7], nums[8]],
            ];
            let area = nums[9];
            if !(area.is_finite() && area > 0.0) {
                return Err(MeshError::Parse(format!("bad area {area}")));
            }
            let sum = vec3::add(vec3::add(vertices[0], vertices[1]), vertices[2]);
            elements.push(Element {
                vertices,
                centroid: vec3::scale(vec3::normalize(sum), outer_radius),
                area,
                region,
                electrode_id,
                cell: None,
            });
        }
        if let Some(n) = declared {
            if n != elements.len() {
                return Err(MeshError::Parse(format!(
                    "header declares {n} elements, found {}",
                    elements.len()
                )));
            }
        }
        Ok(SurfaceMesh { elements, outer_radius, params })
    }
}

fn parse_next<T: std::str::FromStr>(
    it: &mut std::str::SplitWhitespace<'_>,
    key: &str,
) -> Result<T, MeshError>
where
    T::Err: std::fmt::Display,
{
    let tok = it
        .next()
        .ok_or_else(|| MeshError::Parse(format!("missing value for {key}")))?;
    tok.parse()
        .map_err(|e| MeshError::Parse(format!("bad value for {key}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn ring_widths_grade_toward_rim() {
        let params = MeshParams::default();
        let bounds = params.ring_boundaries();
        assert_eq!(bounds.len() as u32, 1 + params.layer_rings.iter().sum::<u32>());
        let widths: Vec<f64> = bounds.windows(2).map(|w| w[1] - w[0]).collect();
        // layer 2 occupies rings 8..15 and shrinks toward the rim at 0.2
        for k in 8..14 {
            let ratio = widths[k + 1] / widths[k];
            assert!((ratio - 0.75).abs() < 1e-12, "ratio {ratio}");
        }
        // layer 3 (rings 15..22): smallest width adjacent to the rim
        let layer3 = &widths[15..22];
        assert!(layer3[0] < layer3[6]);
        for k in 0..6 {
            assert!((layer3[k + 1] / layer3[k] - 4.0 / 3.0).abs() < 1e-12);
        }
        // boundaries hit the layer edges exactly
        assert_eq!(bounds[8], 0.12);
        assert_eq!(bounds[15], 0.2);
        assert_eq!(bounds[22], 0.26);
        assert_eq!(bounds[26], 0.3);
    }

    #[test]
    fn dense_patch_element_count() {
        let domain = DomainSpec::default_problem();
        let params = MeshParams {
            layer_rings: [20, 16, 16, 9],
            sectors: 120,
            ..MeshParams::default()
        };
        let patch = build_graded_electrode_mesh(&domain, 0, &params).unwrap();
        assert_eq!(patch.len(), 61 * 120);
        let on: usize = patch
            .iter()
            .filter(|e| e.region == BoundaryRegion::RobinElectrode(1))
            .count();
        assert_eq!(on, (20 + 16) * 120);
    }

    #[test]
    fn cap_patch_area_is_exact() {
        let domain = DomainSpec::default_problem();
        let params = MeshParams::default();
        let patch = build_graded_electrode_mesh(&domain, 3, &params).unwrap();
        let total: f64 = patch.iter().map(|e| e.area).sum();
        let exact = 2.0 * PI * (1.0 - 0.3_f64.cos());
        assert!((total - exact).abs() < 1e-12);
        let electrode: f64 = patch
            .iter()
            .filter(|e| e.electrode_id == Some(4))
            .map(|e| e.area)
            .sum();
        assert!((electrode - domain.electrodes[3].cap_area(1.0)).abs() < 1e-12);
    }

    #[test]
    fn icosphere_counts_and_area() {
        for depth in [0u32, 2, 3] {
            let tris = icosphere(depth, 1.0);
            assert_eq!(tris.len(), 20 * 4usize.pow(depth));
            let area: f64 = tris
                .iter()
                .map(|t| spherical_triangle_solid_angle(
                    vec3::normalize(t[0]),
                    vec3::normalize(t[1]),
                    vec3::normalize(t[2]),
                ))
                .sum();
            let defect = (area - 4.0 * PI).abs() / (4.0 * PI);
            assert!(defect < 0.05 / 4.0_f64.powi(depth as i32), "depth {depth}: defect {defect}");
        }
    }

    #[test]
    fn bare_sphere_mesh_is_pure_icosphere() {
        let domain = DomainSpec::unit_ball();
        let params = MeshParams { icosphere_depth: 3, ..MeshParams::default() };
        let mesh = build_global_mesh(&domain, &params).unwrap();
        assert_eq!(mesh.elements.len(), 20 * 64);
        assert!((mesh.total_area() - 4.0 * PI).abs() / (4.0 * PI) < 0.005);
    }

    #[test]
    fn default_mesh_count_band_and_partition() {
        let domain = DomainSpec::default_problem();
        let mesh = build_global_mesh(&domain, &MeshParams::default()).unwrap();
        let n = mesh.elements.len();
        assert!((20_000..=100_000).contains(&n), "element count {n}");
        let cap_cells = 8 * 26 * 22;
        assert_eq!(
            mesh.elements.iter().filter(|e| e.cell.is_some()).count(),
            cap_cells
        );
        // validate() already ran inside build_global_mesh; spot-check tags
        let per_electrode: Vec<usize> = (1..=8)
            .map(|id| mesh.electrode_elements(id).count())
            .collect();
        assert!(per_electrode.iter().all(|&c| c == 15 * 22));
    }

    #[test]
    fn overlapping_caps_rejected() {
        let mut domain = DomainSpec::default_problem();
        domain.electrodes[1].center = vec3::normalize(vec3::axpy(
            domain.electrodes[0].center,
            0.2,
            [1.0, 0.0, 0.0],
        ));
        let err = build_global_mesh(&domain, &MeshParams::default()).unwrap_err();
        assert!(matches!(err, MeshError::OverlappingCaps(_, _)));
    }

    #[test]
    fn dump_load_roundtrip() {
        let domain = DomainSpec::default_problem();
        let params = MeshParams {
            layer_rings: [2, 2, 2, 1],
            icosphere_depth: 3,
            ..MeshParams::default()
        };
        let mesh = build_global_mesh(&domain, &params).unwrap();
        let mut buf = Vec::new();
        mesh.dump(&mut buf).unwrap();
        let loaded = SurfaceMesh::load(buf.as_slice()).unwrap();
        assert_eq!(loaded.elements.len(), mesh.elements.len());
        assert_eq!(loaded.params, params);
        for (a, b) in mesh.elements.iter().zip(&loaded.elements) {
            assert!((a.area - b.area).abs() < 1e-15);
            assert_eq!(a.region, b.region);
            // vertex-average centroids differ from cap-cell midpoints, but
            // must stay inside the cell
            assert!(vec3::dist(a.centroid, b.centroid) < a.diameter());
            for k in 0..3 {
                assert!(vec3::dist(a.vertices[k], b.vertices[k]) < 1e-15);
            }
        }
        loaded.validate(&domain).unwrap();
    }

    #[test]
    fn load_rejects_corrupt_lines() {
        let text = "# surface-mesh v1\n1 2 3 4\n";
        assert!(matches!(SurfaceMesh::load(text.as_bytes()), Err(MeshError::Parse(_))));
        let text2 = "# elements 2\n\
            1 0 0 0 1 0 0 0 1 0.5 off -\n";
        assert!(matches!(SurfaceMesh::load(text2.as_bytes()), Err(MeshError::Parse(_))));
    }

    #[test]
    fn whole_sphere_electrode_meshes_as_a_plain_icosphere() {
        let domain = DomainSpec::unit_ball().with_whole_sphere_electrode(0.5);
        let params = MeshParams { icosphere_depth: 3, ..MeshParams::default() };
        let mesh = build_global_mesh(&domain, &params).unwrap();
        assert_eq!(mesh.elements.len(), 20 * 4usize.pow(3));
        assert!(mesh
            .elements
            .iter()
            .all(|e| e.region == BoundaryRegion::RobinElectrode(1) && e.electrode_id == Some(1)));
        let expected = 4.0 * PI;
        assert!((mesh.total_area() - expected).abs() / expected < 1.5e-3);
    }
}
