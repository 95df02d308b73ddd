//! Bilinear quadrilateral elements, 2x2 Gauss quadrature, assembly of the
//! displacement and damage sub-problems, and the Newton driver.
//!
//! Displacement weak form: find u with B^T sigma integrated over the domain
//! balancing the applied nodal forces, sigma = g(d) dpsi+/de + dpsi-/de.
//!
//! Damage weak form (history-field form of the KKT stationarity):
//!
//! ```text
//!   int [ -2(1-d) H q + f Gc/(cw l) w'(d) q + 2 Gc l/cw f grad d . grad q ] dV = 0
//! ```
//!
//! with the fatigue degradation f interpolated from an L2 nodal projection,
//! so its intra-element gradient enters the weak form. AT1 adds a quadratic
//! recovery penalty for d >= 0; the calibration path replaces the history
//! field by the current psi+ plus a penalty tying d to the previous step.

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::model::{self, Material};
use crate::sparse::{rcm_order, Pattern, SkylineMatrix, SparseSystem};

/// Shape functions and reference-space gradients of the bilinear quad at
/// `(xi, eta)`, counter-clockwise numbering starting at (-1, -1).
pub fn shape_functions(local: (f64, f64)) -> ([f64; 4], [[f64; 2]; 4]) {
    let (xi, eta) = local;
    let n = [
        0.25 * (1.0 - xi) * (1.0 - eta),
        0.25 * (1.0 + xi) * (1.0 - eta),
        0.25 * (1.0 + xi) * (1.0 + eta),
        0.25 * (1.0 - xi) * (1.0 + eta),
    ];
    let dn = [
        [-0.25 * (1.0 - eta), -0.25 * (1.0 - xi)],
        [0.25 * (1.0 - eta), -0.25 * (1.0 + xi)],
        [0.25 * (1.0 + eta), 0.25 * (1.0 + xi)],
        [-0.25 * (1.0 + eta), 0.25 * (1.0 - xi)],
    ];
    (n, dn)
}

/// 2x2 Gauss rule on the reference square; weights sum to 4.
pub fn gauss_2x2() -> [((f64, f64), f64); 4] {
    let g = 1.0 / 3.0_f64.sqrt();
    [
        ((-g, -g), 1.0),
        ((g, -g), 1.0),
        ((g, g), 1.0),
        ((-g, g), 1.0),
    ]
}

/// Precomputed quadrature data of one Gauss point.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub shape: [f64; 4],
    /// Physical-space shape gradients.
    pub dndx: [[f64; 2]; 4],
    /// det(J) * weight (mm^2).
    pub detjw: f64,
    pub jacobian_det: f64,
}

/// Per-element quadrature data for a mesh.
#[derive(Debug, Clone)]
pub struct QuadData {
    pub points: Vec<[QuadPoint; 4]>,
}

impl QuadData {
    pub fn num_qp(&self) -> usize {
        self.points.len() * 4
    }
}

pub fn quadrature(mesh: &Mesh) -> Result<QuadData> {
    let mut points = Vec::with_capacity(mesh.elements.len());
    for (ei, elem) in mesh.elements.iter().enumerate() {
        let xy: Vec<[f64; 2]> = elem.iter().map(|&n| mesh.nodes[n]).collect();
        let mut pts = [QuadPoint {
            shape: [0.0; 4],
            dndx: [[0.0; 2]; 4],
            detjw: 0.0,
            jacobian_det: 0.0,
        }; 4];
        for (q, (local, w)) in gauss_2x2().into_iter().enumerate() {
            let (n, dn) = shape_functions(local);
            let mut j = [[0.0; 2]; 2];
            for a in 0..4 {
                for r in 0..2 {
                    for c in 0..2 {
                        j[r][c] += dn[a][r] * xy[a][c];
                    }
                }
            }
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det <= 0.0 || !det.is_finite() {
                return Err(Error::Assembly(format!(
                    "element {ei} has non-positive Jacobian {det} at Gauss point {q}"
                )));
            }
            let inv = [
                [j[1][1] / det, -j[0][1] / det],
                [-j[1][0] / det, j[0][0] / det],
            ];
            let mut dndx = [[0.0; 2]; 4];
            for a in 0..4 {
                // dN/dx_c = sum_r inv[r][c] * dN/dxi_r  (inverse transpose)
                for c in 0..2 {
                    dndx[a][c] = inv[0][c] * dn[a][0] + inv[1][c] * dn[a][1];
                }
            }
            pts[q] = QuadPoint {
                shape: n,
                dndx,
                detjw: det * w,
                jacobian_det: det,
            };
        }
        points.push(pts);
    }
    Ok(QuadData { points })
}

/// Node ordering plus sparsity patterns shared by all assemblies on a mesh.
#[derive(Debug, Clone)]
pub struct FemContext {
    /// position[old_node] = new position (RCM).
    pub node_pos: Vec<usize>,
    pub pattern_u: Pattern,
    pub pattern_d: Pattern,
    pub quad: QuadData,
}

impl FemContext {
    pub fn new(mesh: &Mesh) -> Result<FemContext> {
        let quad = quadrature(mesh)?;
        let cliques: Vec<Vec<usize>> = mesh.elements.iter().map(|e| e.to_vec()).collect();
        let node_pos = rcm_order(mesh.num_nodes(), &cliques);
        let dof_cliques_u: Vec<Vec<usize>> = mesh
            .elements
            .iter()
            .map(|e| {
                e.iter()
                    .flat_map(|&n| [2 * node_pos[n], 2 * node_pos[n] + 1])
                    .collect()
            })
            .collect();
        let dof_cliques_d: Vec<Vec<usize>> = mesh
            .elements
            .iter()
            .map(|e| e.iter().map(|&n| node_pos[n]).collect())
            .collect();
        let pattern_u = Pattern::from_cliques(2 * mesh.num_nodes(), dof_cliques_u.iter().map(|c| c.as_slice()));
        let pattern_d = Pattern::from_cliques(mesh.num_nodes(), dof_cliques_d.iter().map(|c| c.as_slice()));
        Ok(FemContext {
            node_pos,
            pattern_u,
            pattern_d,
            quad,
        })
    }

    #[inline]
    pub fn udof(&self, node: usize, comp: usize) -> usize {
        2 * self.node_pos[node] + comp
    }

    #[inline]
    pub fn ddof(&self, node: usize) -> usize {
        self.node_pos[node]
    }

    /// Mesh-ordered nodal vector -> solver ordering.
    pub fn gather_d(&self, mesh_ordered: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; mesh_ordered.len()];
        for (node, &v) in mesh_ordered.iter().enumerate() {
            out[self.node_pos[node]] = v;
        }
        out
    }

    /// Solver-ordered nodal vector -> mesh ordering.
    pub fn scatter_d(&self, solver_ordered: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; solver_ordered.len()];
        for (node, &pos) in self.node_pos.iter().enumerate() {
            out[node] = solver_ordered[pos];
        }
        out
    }

    pub fn gather_u(&self, mesh_ordered: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; mesh_ordered.len()];
        for node in 0..self.node_pos.len() {
            for c in 0..2 {
                out[2 * self.node_pos[node] + c] = mesh_ordered[2 * node + c];
            }
        }
        out
    }

    pub fn scatter_u(&self, solver_ordered: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; solver_ordered.len()];
        for node in 0..self.node_pos.len() {
            for c in 0..2 {
                out[2 * node + c] = solver_ordered[2 * self.node_pos[node] + c];
            }
        }
        out
    }
}

/// Boundary data for the displacement problem at one load level.
#[derive(Debug, Clone, Default)]
pub struct BoundaryData {
    /// (node, component, prescribed value).
    pub dirichlet: Vec<(usize, usize, f64)>,
    /// (node, component, applied force).
    pub forces: Vec<(usize, usize, f64)>,
}

/// Strain at a Gauss point from nodal displacements (Voigt, engineering).
#[inline]
fn strain_at(qp: &QuadPoint, elem: &[usize; 4], u: &[f64], ctx: &FemContext) -> [f64; 3] {
    let mut e = [0.0; 3];
    for a in 0..4 {
        let ux = u[ctx.udof(elem[a], 0)];
        let uy = u[ctx.udof(elem[a], 1)];
        e[0] += qp.dndx[a][0] * ux;
        e[1] += qp.dndx[a][1] * uy;
        e[2] += qp.dndx[a][1] * ux + qp.dndx[a][0] * uy;
    }
    e
}

#[inline]
fn interp(qp: &QuadPoint, elem: &[usize; 4], nodal: &[f64], ctx: &FemContext) -> f64 {
    (0..4).map(|a| qp.shape[a] * nodal[ctx.ddof(elem[a])]).sum()
}

/// Assemble tangent and residual of the momentum balance. The returned rhs
/// is the negative residual; Dirichlet entries carry the increment needed
/// to reach the prescribed values from `u`.
pub fn assemble_displacement(
    mesh: &Mesh,
    ctx: &FemContext,
    material: &Material,
    u: &[f64],
    d_nodal: &[f64],
    bc: &BoundaryData,
) -> Result<SparseSystem> {
    let n_dofs = 2 * mesh.num_nodes();
    let mut matrix = SkylineMatrix::new(ctx.pattern_u.clone());
    let mut rhs = vec![0.0; n_dofs];

    for (ei, elem) in mesh.elements.iter().enumerate() {
        for qp in &ctx.quad.points[ei] {
            let eps = strain_at(qp, elem, u, ctx);
            let d = interp(qp, elem, d_nodal, ctx).clamp(0.0, 1.0);
            let (g, _) = model::degradation(d, material.g0)?;
            let split = model::split_energy(eps, material);
            let sig = split.stress(g);
            let c = split.tangent(g);
            // B_a^T sigma and B_a^T C B_b
            for a in 0..4 {
                let ba = [
                    [qp.dndx[a][0], 0.0],
                    [0.0, qp.dndx[a][1]],
                    [qp.dndx[a][1], qp.dndx[a][0]],
                ];
                for ca in 0..2 {
                    let dof_a = ctx.udof(elem[a], ca);
                    let mut r = 0.0;
                    for k in 0..3 {
                        r += ba[k][ca] * sig[k];
                    }
                    rhs[dof_a] -= r * qp.detjw;
                    for b in 0..4 {
                        let bb = [
                            [qp.dndx[b][0], 0.0],
                            [0.0, qp.dndx[b][1]],
                            [qp.dndx[b][1], qp.dndx[b][0]],
                        ];
                        for cb in 0..2 {
                            let dof_b = ctx.udof(elem[b], cb);
                            if dof_b > dof_a {
                                continue;
                            }
                            let mut k_ab = 0.0;
                            for i in 0..3 {
                                for j in 0..3 {
                                    k_ab += ba[i][ca] * c[i][j] * bb[j][cb];
                                }
                            }
                            matrix.add(dof_a, dof_b, k_ab * qp.detjw);
                        }
                    }
                }
            }
        }
    }
    for &(node, comp, f) in &bc.forces {
        rhs[ctx.udof(node, comp)] += f;
    }
    let dirichlet = bc
        .dirichlet
        .iter()
        .map(|&(node, comp, v)| {
            let dof = ctx.udof(node, comp);
            (dof, v - u[dof])
        })
        .collect();
    Ok(SparseSystem {
        matrix,
        rhs,
        dirichlet,
    })
}

/// Driving force of the damage problem.
#[derive(Debug, Clone, Copy)]
pub enum DamageDriving<'a> {
    /// History field (running max of psi+), per quadrature point.
    HistoryField(&'a [f64]),
    /// Current psi+ per quadrature point (penalty-irreversibility path).
    CurrentPsiPlus(&'a [f64]),
}

/// Penalty terms of the damage problem.
#[derive(Debug, Clone, Copy, Default)]
pub struct DamagePenalty<'a> {
    /// Stiffness of the quadratic d >= 0 recovery penalty (AT1).
    pub recovery_gamma: f64,
    /// Irreversibility penalty tying d to the previous converged step.
    pub irreversibility: Option<(f64, &'a [f64])>,
}

/// Penalty stiffness from the tolerance recipe gamma = Gc/l (1/tol^2 - 1).
pub fn penalty_stiffness(material: &Material, tol: f64) -> f64 {
    material.gc / material.ell * (1.0 / (tol * tol) - 1.0)
}

/// Assemble tangent and residual of the damage sub-problem. `f_nodal` holds
/// the L2-projected fatigue degradation.
pub fn assemble_damage(
    mesh: &Mesh,
    ctx: &FemContext,
    material: &Material,
    d_nodal: &[f64],
    driving: DamageDriving<'_>,
    f_nodal: &[f64],
    penalty: DamagePenalty<'_>,
) -> Result<SparseSystem> {
    let n = mesh.num_nodes();
    let mut matrix = SkylineMatrix::new(ctx.pattern_d.clone());
    let mut rhs = vec![0.0; n];
    let gc = material.gc;
    let ell = material.ell;
    let cw = material.c_w();
    let wpp = match material.dissipation {
        crate::model::Dissipation::At1 => 0.0,
        crate::model::Dissipation::At2 => 2.0,
    };

    for (ei, elem) in mesh.elements.iter().enumerate() {
        for (q, qp) in ctx.quad.points[ei].iter().enumerate() {
            let iq = ei * 4 + q;
            let h = match driving {
                DamageDriving::HistoryField(hf) => hf[iq],
                DamageDriving::CurrentPsiPlus(p) => p[iq],
            };
            let d_raw = interp(qp, elem, d_nodal, ctx);
            let d = d_raw.clamp(0.0, 1.0);
            let f = interp(qp, elem, f_nodal, ctx).clamp(0.0, 1.0);
            let (_, wp, _) = model::dissipation(d, material.dissipation)?;
            let mut grad_d = [0.0; 2];
            for a in 0..4 {
                let dn = d_nodal[ctx.ddof(elem[a])];
                grad_d[0] += qp.dndx[a][0] * dn;
                grad_d[1] += qp.dndx[a][1] * dn;
            }
            // local source term and its linearization
            let mut source = -2.0 * (1.0 - d) * h + f * gc / (cw * ell) * wp;
            let mut source_tan = 2.0 * h + f * gc / (cw * ell) * wpp;
            if penalty.recovery_gamma > 0.0 && d_raw <= 0.0 {
                source += penalty.recovery_gamma * d_raw;
                source_tan += penalty.recovery_gamma;
            }
            if let Some((gamma_ir, d_prev)) = penalty.irreversibility {
                let dp = interp(qp, elem, d_prev, ctx);
                if d_raw <= dp {
                    source += gamma_ir * (d_raw - dp);
                    source_tan += gamma_ir;
                }
            }
            let diff = 2.0 * gc * ell / cw * f;
            for a in 0..4 {
                let dof_a = ctx.ddof(elem[a]);
                let r = source * qp.shape[a] + diff * (grad_d[0] * qp.dndx[a][0] + grad_d[1] * qp.dndx[a][1]);
                rhs[dof_a] -= r * qp.detjw;
                for b in 0..4 {
                    let dof_b = ctx.ddof(elem[b]);
                    if dof_b > dof_a {
                        continue;
                    }
                    let k = source_tan * qp.shape[a] * qp.shape[b]
                        + diff * (qp.dndx[a][0] * qp.dndx[b][0] + qp.dndx[a][1] * qp.dndx[b][1]);
                    matrix.add(dof_a, dof_b, k * qp.detjw);
                }
            }
        }
    }
    Ok(SparseSystem {
        matrix,
        rhs,
        dirichlet: Vec::new(),
    })
}

/// psi+ at every quadrature point for the current displacements.
pub fn psi_plus_at_qp(mesh: &Mesh, ctx: &FemContext, material: &Material, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; ctx.quad.num_qp()];
    for (ei, elem) in mesh.elements.iter().enumerate() {
        for (q, qp) in ctx.quad.points[ei].iter().enumerate() {
            let eps = strain_at(qp, elem, u, ctx);
            out[ei * 4 + q] = model::split_energy(eps, material).psi_plus;
        }
    }
    out
}

/// Local fatigue variable alpha = g(d) psi+ at every quadrature point.
pub fn alpha_at_qp(
    mesh: &Mesh,
    ctx: &FemContext,
    material: &Material,
    u: &[f64],
    d_nodal: &[f64],
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; ctx.quad.num_qp()];
    for (ei, elem) in mesh.elements.iter().enumerate() {
        for (q, qp) in ctx.quad.points[ei].iter().enumerate() {
            let eps = strain_at(qp, elem, u, ctx);
            let d = interp(qp, elem, d_nodal, ctx).clamp(0.0, 1.0);
            let (g, _) = model::degradation(d, material.g0)?;
            out[ei * 4 + q] = g * model::split_energy(eps, material).psi_plus;
        }
    }
    Ok(out)
}

/// Lumped L2 projection of quadrature-point values to nodes (in the damage
/// dof ordering).
pub fn project_to_nodes(mesh: &Mesh, ctx: &FemContext, qp_values: &[f64]) -> Vec<f64> {
    let n = mesh.num_nodes();
    let mut num = vec![0.0; n];
    let mut den = vec![0.0; n];
    for (ei, elem) in mesh.elements.iter().enumerate() {
        for (q, qp) in ctx.quad.points[ei].iter().enumerate() {
            let v = qp_values[ei * 4 + q];
            for a in 0..4 {
                let dof = ctx.ddof(elem[a]);
                num[dof] += qp.shape[a] * v * qp.detjw;
                den[dof] += qp.shape[a] * qp.detjw;
            }
        }
    }
    num.iter().zip(&den).map(|(n, d)| if *d > 0.0 { n / d } else { 0.0 }).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonSettings {
    /// Relative residual tolerance.
    pub tol_residual: f64,
    pub max_iters: usize,
    /// Absolute residual floor; a solve starting at an already-converged
    /// state (first residual at rounding level) counts as converged below
    /// this. The cycle solver scales it to the largest residual seen so far.
    pub abs_tol: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings {
            tol_residual: 1e-6,
            max_iters: 250,
            abs_tol: RESIDUAL_FLOOR,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonReport {
    pub iterations: usize,
    pub residual0: f64,
    pub residual: f64,
}

/// Residual floor below which a field counts as converged regardless of the
/// relative criterion.
pub const RESIDUAL_FLOOR: f64 = 1e-14;

/// Write the prescribed boundary values into the displacement vector.
/// Callers do this before [`solve_field`] so the first-iteration residual
/// reflects the new load level.
pub fn preset_dirichlet(u: &mut [f64], ctx: &FemContext, bc: &BoundaryData) {
    for &(node, comp, v) in &bc.dirichlet {
        u[ctx.udof(node, comp)] = v;
    }
}

/// Free-dof residual norm of an assembled system.
pub fn free_residual_norm(sys: &SparseSystem) -> f64 {
    let mut constrained = vec![false; sys.rhs.len()];
    for &(dof, _) in &sys.dirichlet {
        constrained[dof] = true;
    }
    sys.rhs
        .iter()
        .enumerate()
        .filter(|(i, _)| !constrained[*i])
        .map(|(_, r)| r * r)
        .sum::<f64>()
        .sqrt()
}

/// Newton iteration on an assembled field problem. Convergence is measured
/// against the first-iteration residual norm with an absolute floor.
pub fn solve_field(
    mut assemble: impl FnMut(&[f64]) -> Result<SparseSystem>,
    x: &mut [f64],
    settings: &NewtonSettings,
) -> Result<NewtonReport> {
    let mut res0 = 0.0;
    let mut res = 0.0;
    for it in 0..=settings.max_iters {
        let sys = assemble(x)?;
        res = free_residual_norm(&sys);
        if it == 0 {
            res0 = res;
        }
        let still_constrained = sys.dirichlet.iter().any(|&(_, dv)| dv.abs() > RESIDUAL_FLOOR);
        let abs_tol = settings.abs_tol.max(RESIDUAL_FLOOR);
        if !still_constrained && (res <= settings.tol_residual * res0.max(RESIDUAL_FLOOR) || res <= abs_tol) {
            return Ok(NewtonReport {
                iterations: it,
                residual0: res0,
                residual: res,
            });
        }
        if it == settings.max_iters {
            break;
        }
        let delta = sys.solve()?;
        for (xi, di) in x.iter_mut().zip(&delta) {
            *xi += di;
        }
    }
    Err(Error::NonConvergence {
        iterations: settings.max_iters,
        residual: res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_mesh, GeometryPreset};
    use crate::model::{Dissipation, FatigueParams, Plane, Split};
    use approx::assert_relative_eq;

    fn material(split: Split, dissipation: Dissipation) -> Material {
        Material {
            e: 6000.0,
            nu: 0.22,
            gc: 2.28,
            ell: 0.2,
            g0: 1e-6,
            dissipation,
            split,
            plane: Plane::Strain,
        }
    }

    fn unit_square(h: f64) -> Mesh {
        generate_mesh(&GeometryPreset::Rectangle {
            width: 1.0,
            height: 1.0,
            h,
            refine_band: None,
        })
        .unwrap()
    }

    #[test]
    fn shape_function_values() {
        let (n, _) = shape_functions((0.0, 0.0));
        for v in n {
            assert_relative_eq!(v, 0.25);
        }
        let (n, _) = shape_functions((1.0, 1.0));
        assert_eq!(n, [0.0, 0.0, 1.0, 0.0]);
        let (n, dn) = shape_functions((0.3, -0.7));
        assert_relative_eq!(n.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        let gsum: f64 = dn.iter().map(|g| g[0] + g[1]).sum::<f64>();
        assert!(gsum.abs() < 1e-14);
    }

    #[test]
    fn weights_sum_to_four() {
        let sum: f64 = gauss_2x2().iter().map(|&(_, w)| w).sum();
        assert_relative_eq!(sum, 4.0);
    }

    #[test]
    fn unloaded_equilibrium_has_zero_residual() {
        let mesh = unit_square(0.5);
        let ctx = FemContext::new(&mesh).unwrap();
        let mat = material(Split::None, Dissipation::At2);
        let u = vec![0.0; 2 * mesh.num_nodes()];
        let d = vec![0.0; mesh.num_nodes()];
        let sys = assemble_displacement(&mesh, &ctx, &mat, &u, &d, &BoundaryData::default()).unwrap();
        assert!(free_residual_norm(&sys) < 1e-14);
    }

    /// Uniaxial stretch of one element under plane strain matches the
    /// closed-form Hooke reaction.
    #[test]
    fn single_element_uniaxial_reaction() {
        let mesh = unit_square(1.0);
        let ctx = FemContext::new(&mesh).unwrap();
        let mat = material(Split::None, Dissipation::At2);
        let stretch = 1e-3;
        let mut bc = BoundaryData::default();
        for &n in mesh.node_set("left").unwrap() {
            bc.dirichlet.push((n, 0, 0.0));
        }
        for &n in mesh.node_set("right").unwrap() {
            bc.dirichlet.push((n, 0, stretch));
        }
        for &n in mesh.node_set("bottom").unwrap() {
            bc.dirichlet.push((n, 1, 0.0));
        }
        // top edge free in y: uniaxial stress in the plane
        let mut u = vec![0.0; 2 * mesh.num_nodes()];
        let d = vec![0.0; mesh.num_nodes()];
        preset_dirichlet(&mut u, &ctx, &bc);
        let report = solve_field(
            |u| assemble_displacement(&mesh, &ctx, &mat, u, &d, &bc),
            &mut u,
            &NewtonSettings::default(),
        )
        .unwrap();
        assert_eq!(report.iterations, 1, "linear problem takes one Newton step");
        // reaction on the right edge: in-plane uniaxial stress under plane
        // strain, sigma_xx = E/(1-nu^2) exx over a unit section
        let sys = assemble_displacement(&mesh, &ctx, &mat, &u, &d, &BoundaryData::default()).unwrap();
        let mut reaction = 0.0;
        for &n in mesh.node_set("right").unwrap() {
            reaction -= sys.rhs[ctx.udof(n, 0)]; // rhs = -residual
        }
        let expected = (1.0 + mat.g0) * mat.e / (1.0 - mat.nu * mat.nu) * stretch;
        assert_relative_eq!(reaction, expected, max_relative = 1e-10);
    }

    /// Full damage scales the reaction by g(1) = g0 (undecomposed split).
    #[test]
    fn full_damage_scales_reaction_by_g0() {
        let mesh = unit_square(1.0);
        let ctx = FemContext::new(&mesh).unwrap();
        let mat = material(Split::None, Dissipation::At2);
        let mut bc = BoundaryData::default();
        for &n in mesh.node_set("left").unwrap() {
            bc.dirichlet.push((n, 0, 0.0));
            bc.dirichlet.push((n, 1, 0.0));
        }
        for &n in mesh.node_set("right").unwrap() {
            bc.dirichlet.push((n, 0, 1e-3));
        }
        let reaction = |d_val: f64| {
            let d = vec![d_val; mesh.num_nodes()];
            let mut u = vec![0.0; 2 * mesh.num_nodes()];
            preset_dirichlet(&mut u, &ctx, &bc);
            solve_field(
                |u| assemble_displacement(&mesh, &ctx, &mat, u, &d, &bc),
                &mut u,
                &NewtonSettings::default(),
            )
            .unwrap();
            let sys = assemble_displacement(&mesh, &ctx, &mat, &u, &d, &BoundaryData::default()).unwrap();
            mesh.node_set("right")
                .unwrap()
                .iter()
                .map(|&n| -sys.rhs[ctx.udof(n, 0)])
                .sum::<f64>()
        };
        let r0 = reaction(0.0);
        let r1 = reaction(1.0);
        assert_relative_eq!(r1 / r0, 1e-6, max_relative = 1e-4);
    }

    /// Homogeneous AT2 damage state: the converged d matches the scalar
    /// root of 2(1-d)H = Gc/cw * w'(d)/l, i.e. d = 2H/(2H + Gc/(2 l)).
    #[test]
    fn homogeneous_at2_damage_root() {
        let mesh = unit_square(1.0);
        let ctx = FemContext::new(&mesh).unwrap();
        let mat = material(Split::None, Dissipation::At2);
        let h_val = 3.0;
        let hqp = vec![h_val; ctx.quad.num_qp()];
        let f_nodal = vec![1.0; mesh.num_nodes()];
        let mut d = vec![0.0; mesh.num_nodes()];
        solve_field(
            |d| {
                assemble_damage(
                    &mesh,
                    &ctx,
                    &mat,
                    d,
                    DamageDriving::HistoryField(&hqp),
                    &f_nodal,
                    DamagePenalty::default(),
                )
            },
            &mut d,
            &NewtonSettings::default(),
        )
        .unwrap();
        // scalar root of 2(1-d)H = Gc/cw * w'(d)/l with cw = 2, w' = 2d
        let expected = 2.0 * h_val / (2.0 * h_val + mat.gc / mat.ell);
        for &di in &d {
            assert_relative_eq!(di, expected, max_relative = 1e-8);
        }
    }

    /// AT1 below threshold: d stays at zero (positivity penalty active).
    #[test]
    fn at1_below_threshold_stays_zero() {
        let mesh = unit_square(0.5);
        let ctx = FemContext::new(&mesh).unwrap();
        let mat = material(Split::None, Dissipation::At1);
        // threshold: 2 H < Gc/(cw l) * w'(0) -> H < Gc * 3/(16 l)
        let h_val = 0.9 * mat.gc * 3.0 / (16.0 * mat.ell);
        let hqp = vec![h_val; ctx.quad.num_qp()];
        let f_nodal = vec![1.0; mesh.num_nodes()];
        let gamma = penalty_stiffness(&mat, 1e-4);
        let mut d = vec![0.0; mesh.num_nodes()];
        solve_field(
            |d| {
                assemble_damage(
                    &mesh,
                    &ctx,
                    &mat,
                    d,
                    DamageDriving::HistoryField(&hqp),
                    &f_nodal,
                    DamagePenalty {
                        recovery_gamma: gamma,
                        irreversibility: None,
                    },
                )
            },
            &mut d,
            &NewtonSettings::default(),
        )
        .unwrap();
        for &di in &d {
            assert!(di > -1e-8 && di < 1e-6, "d = {di}");
        }
    }

    #[test]
    fn zero_damage_zero_history_is_equilibrium() {
        let mesh = unit_square(0.5);
        let ctx = FemContext::new(&mesh).unwrap();
        let mat = material(Split::None, Dissipation::At2);
        let hqp = vec![0.0; ctx.quad.num_qp()];
        let f_nodal = vec![1.0; mesh.num_nodes()];
        let d = vec![0.0; mesh.num_nodes()];
        let sys = assemble_damage(
            &mesh,
            &ctx,
            &mat,
            &d,
            DamageDriving::HistoryField(&hqp),
            &f_nodal,
            DamagePenalty::default(),
        )
        .unwrap();
        assert!(free_residual_norm(&sys) < 1e-14);
    }

    /// Method of manufactured solutions: inject K u* as the force vector and
    /// recover u* on a 2x2 grid.
    #[test]
    fn manufactured_solution_recovered() {
        let mesh = unit_square(0.5);
        let ctx = FemContext::new(&mesh).unwrap();
        let mat = material(Split::None, Dissipation::At2);
        let n = 2 * mesh.num_nodes();
        let d = vec![0.0; mesh.num_nodes()];
        let u0 = vec![0.0; n];
        let sys = assemble_displacement(&mesh, &ctx, &mat, &u0, &d, &BoundaryData::default()).unwrap();
        // manufactured field, zero on the boundary set "left" to pin rigid modes
        let mut target = vec![0.0; n];
        for (i, t) in target.iter_mut().enumerate() {
            *t = (i as f64 * 0.37).sin() * 1e-3;
        }
        let mut bc = BoundaryData::default();
        for &node in mesh.node_set("left").unwrap() {
            for c in 0..2 {
                bc.dirichlet.push((node, c, target[ctx.udof(node, c)]));
            }
        }
        let f = sys.matrix.multiply(&target);
        let mut u = vec![0.0; n];
        preset_dirichlet(&mut u, &ctx, &bc);
        solve_field(
            |u| {
                let mut s = assemble_displacement(&mesh, &ctx, &mat, u, &d, &bc)?;
                for (r, fi) in s.rhs.iter_mut().zip(&f) {
                    *r += fi;
                }
                Ok(s)
            },
            &mut u,
            &NewtonSettings::default(),
        )
        .unwrap();
        for (a, b) in u.iter().zip(&target) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn inconsistent_constraints_signal_not_crash() {
        let mesh = unit_square(0.5);
        let ctx = FemContext::new(&mesh).unwrap();
        let mat = material(Split::None, Dissipation::At2);
        let d = vec![0.0; mesh.num_nodes()];
        let mut bc = BoundaryData::default();
        let node = mesh.node_set("left").unwrap()[0];
        bc.dirichlet.push((node, 0, 0.0));
        bc.dirichlet.push((node, 0, 1.0)); // fights the first constraint
        let mut u = vec![0.0; 2 * mesh.num_nodes()];
        let err = solve_field(
            |u| assemble_displacement(&mesh, &ctx, &mat, u, &d, &bc),
            &mut u,
            &NewtonSettings::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InconsistentConstraints { .. }));
    }

    /// Directional finite differences of the residual match the assembled
    /// tangent (spectral split, damaged state).
    #[test]
    fn tangent_consistency_displacement() {
        let mesh = unit_square(0.5);
        let ctx = FemContext::new(&mesh).unwrap();
        let mat = material(Split::Spectral, Dissipation::At2);
        let n = 2 * mesh.num_nodes();
        let mut u = vec![0.0; n];
        let mut d = vec![0.0; mesh.num_nodes()];
        for i in 0..n {
            u[i] = 1e-3 * ((i * 7 % 11) as f64 / 11.0 - 0.4);
        }
        for (i, di) in d.iter_mut().enumerate() {
            *di = 0.7 * ((i * 3 % 5) as f64 / 5.0);
        }
        let sys0 = assemble_displacement(&mesh, &ctx, &mat, &u, &d, &BoundaryData::default()).unwrap();
        // random direction, step scaled to the field norm
        let dir: Vec<f64> = (0..n).map(|i| ((i * 13 % 17) as f64 / 17.0 - 0.5)).collect();
        let unorm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let step = 1e-6 * unorm.max(1e-6);
        let perturbed = |sign: f64| {
            let up: Vec<f64> = u.iter().zip(&dir).map(|(a, b)| a + sign * step * b).collect();
            assemble_displacement(&mesh, &ctx, &mat, &up, &d, &BoundaryData::default()).unwrap()
        };
        let sp = perturbed(1.0);
        let sm = perturbed(-1.0);
        // K dir vs central difference of the residual (rhs = -R)
        let kdir = sys0.matrix.multiply(&dir);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            let fd = -(sp.rhs[i] - sm.rhs[i]) / (2.0 * step);
            num += (fd - kdir[i]).powi(2);
            den += kdir[i].powi(2);
        }
        assert!(
            num.sqrt() <= 1e-5 * den.sqrt().max(1e-12),
            "relative tangent error {}",
            num.sqrt() / den.sqrt()
        );
    }

    #[test]
    fn tangent_consistency_damage() {
        let mesh = unit_square(0.5);
        let ctx = FemContext::new(&mesh).unwrap();
        let mat = material(Split::None, Dissipation::At2);
        let nq = ctx.quad.num_qp();
        let hqp: Vec<f64> = (0..nq).map(|i| 0.5 + (i % 7) as f64 * 0.3).collect();
        let f_nodal: Vec<f64> = (0..mesh.num_nodes()).map(|i| 0.5 + 0.5 * ((i % 3) as f64 / 3.0)).collect();
        let d0: Vec<f64> = (0..mesh.num_nodes()).map(|i| 0.3 + 0.3 * ((i % 4) as f64 / 4.0)).collect();
        let assemble = |d: &[f64]| {
            assemble_damage(
                &mesh,
                &ctx,
                &mat,
                d,
                DamageDriving::HistoryField(&hqp),
                &f_nodal,
                DamagePenalty::default(),
            )
            .unwrap()
        };
        let sys0 = assemble(&d0);
        let dir: Vec<f64> = (0..mesh.num_nodes()).map(|i| ((i * 5 % 9) as f64 / 9.0 - 0.5)).collect();
        let step = 1e-7;
        let dp: Vec<f64> = d0.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
        let dm: Vec<f64> = d0.iter().zip(&dir).map(|(a, b)| a - step * b).collect();
        let sp = assemble(&dp);
        let sm = assemble(&dm);
        let kdir = sys0.matrix.multiply(&dir);
        for i in 0..mesh.num_nodes() {
            let fd = -(sp.rhs[i] - sm.rhs[i]) / (2.0 * step);
            assert_relative_eq!(fd, kdir[i], max_relative = 1e-5, epsilon = 1e-9);
        }
    }

    /// Undamaged, undecomposed stiffness is SPD after constraints.
    #[test]
    fn stiffness_spd_after_constraints() {
        let mesh = unit_square(0.25);
        let ctx = FemContext::new(&mesh).unwrap();
        let mat = material(Split::None, Dissipation::At2);
        let u = vec![0.0; 2 * mesh.num_nodes()];
        let d = vec![0.0; mesh.num_nodes()];
        let mut bc = BoundaryData::default();
        for &n in mesh.node_set("left").unwrap() {
            bc.dirichlet.push((n, 0, 0.0));
            bc.dirichlet.push((n, 1, 0.0));
        }
        let mut sys = assemble_displacement(&mesh, &ctx, &mat, &u, &d, &bc).unwrap();
        sys.apply_constraints().unwrap();
        let mut m = sys.matrix;
        m.factor_ldlt().unwrap();
        for i in 0..2 * mesh.num_nodes() {
            assert!(m.get(i, i) > 0.0, "non-positive pivot at {i}");
        }
    }
}
