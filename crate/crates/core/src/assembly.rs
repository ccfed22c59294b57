//! Metric-dependent mass matrices and right-hand side functionals, per
//! element and assembled per block.

use std::fmt;
use std::sync::Arc;

use faer::Mat;

use crate::basis::{eval_face_basis_scalar, eval_volume_basis, Basis1d};
use crate::error::{Error, Result};
use crate::mesh::{ElementGeometry, MeshSpec, QuadratureRule, Side};
use crate::topology::{tangential_axes, BlockTopology, CellGrid};

/// A scalar field `x ↦ f(x)`.
#[derive(Clone)]
pub enum ScalarField {
    Zero,
    Constant(f64),
    Function(Arc<dyn Fn([f64; 3]) -> f64 + Send + Sync>),
}

impl ScalarField {
    pub fn function(f: impl Fn([f64; 3]) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField::Function(Arc::new(f))
    }

    pub fn eval(&self, x: [f64; 3]) -> f64 {
        match self {
            ScalarField::Zero => 0.0,
            ScalarField::Constant(c) => *c,
            ScalarField::Function(f) => f(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ScalarField::Zero)
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Zero => f.write_str("Zero"),
            ScalarField::Constant(c) => write!(f, "Constant({c})"),
            ScalarField::Function(_) => f.write_str("Function"),
        }
    }
}

/// Prescribed outward normal flux `(x, n) ↦ û`.
#[derive(Clone)]
pub enum FluxField {
    Zero,
    Function(Arc<dyn Fn([f64; 3], [f64; 3]) -> f64 + Send + Sync>),
}

impl FluxField {
    pub fn function(f: impl Fn([f64; 3], [f64; 3]) -> f64 + Send + Sync + 'static) -> Self {
        FluxField::Function(Arc::new(f))
    }

    pub fn eval(&self, x: [f64; 3], n: [f64; 3]) -> f64 {
        match self {
            FluxField::Zero => 0.0,
            FluxField::Function(f) => f(x, n),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, FluxField::Zero)
    }
}

impl fmt::Debug for FluxField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FluxField::Zero => f.write_str("Zero"),
            FluxField::Function(_) => f.write_str("Function"),
        }
    }
}

/// Symmetric permeability tensor field.
pub trait Permeability: Send + Sync {
    /// `K(x)` inside `element`.
    fn tensor(&self, element: usize, x: [f64; 3]) -> [[f64; 3]; 3];

    /// The diagonal of `K` when it is constant and diagonal over the element.
    fn element_diagonal(&self, _element: usize) -> Option<[f64; 3]> {
        None
    }
}

/// Spatially constant tensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantPermeability(pub [[f64; 3]; 3]);

impl ConstantPermeability {
    pub fn identity() -> Self {
        Self::isotropic(1.0)
    }

    pub fn isotropic(k: f64) -> Self {
        ConstantPermeability([[k, 0.0, 0.0], [0.0, k, 0.0], [0.0, 0.0, k]])
    }
}

impl Permeability for ConstantPermeability {
    fn tensor(&self, _element: usize, _x: [f64; 3]) -> [[f64; 3]; 3] {
        self.0
    }

    fn element_diagonal(&self, _element: usize) -> Option<[f64; 3]> {
        let k = self.0;
        let off =
            k[0][1] != 0.0 || k[0][2] != 0.0 || k[1][2] != 0.0 || k[1][0] != 0.0 || k[2][0] != 0.0 || k[2][1] != 0.0;
        (!off).then_some([k[0][0], k[1][1], k[2][2]])
    }
}

/// One diagonal tensor per element (global element order).
#[derive(Clone, Debug)]
pub struct CellPermeability {
    pub values: Arc<Vec<[f64; 3]>>,
}

impl Permeability for CellPermeability {
    fn tensor(&self, element: usize, _x: [f64; 3]) -> [[f64; 3]; 3] {
        let k = self.values[element];
        [[k[0], 0.0, 0.0], [0.0, k[1], 0.0], [0.0, 0.0, k[2]]]
    }

    fn element_diagonal(&self, element: usize) -> Option<[f64; 3]> {
        Some(self.values[element])
    }
}

/// Cholesky-based inverse of a symmetric 3×3 matrix; `None` unless SPD.
pub fn spd_inverse3(k: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let mut s = k[i][j];
            for m in 0..j {
                s -= l[i][m] * l[j][m];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut inv = [[0.0; 3]; 3];
    for col in 0..3 {
        let mut y = [0.0; 3];
        for i in 0..3 {
            let mut s = if i == col { 1.0 } else { 0.0 };
            for m in 0..i {
                s -= l[i][m] * y[m];
            }
            y[i] = s / l[i][i];
        }
        for i in (0..3).rev() {
            let mut s = y[i];
            for m in i + 1..3 {
                s -= l[m][i] * inv[m][col];
            }
            inv[i][col] = s / l[i][i];
        }
    }
    Some(inv)
}

/// Evaluates `K⁻¹` with an SPD check at every point.
#[derive(Clone)]
pub struct PermeabilityEvaluator {
    pub field: Arc<dyn Permeability>,
}

impl PermeabilityEvaluator {
    pub fn new(field: Arc<dyn Permeability>) -> Self {
        Self { field }
    }

    pub fn inverse(&self, element: usize, x: [f64; 3]) -> Result<[[f64; 3]; 3]> {
        spd_inverse3(&self.field.tensor(element, x)).ok_or(Error::PermeabilityNotSpd { element, x })
    }

    /// Inverse diagonal when `K` is constant and diagonal on the element.
    pub fn inverse_diagonal(&self, element: usize) -> Result<Option<[f64; 3]>> {
        match self.field.element_diagonal(element) {
            None => Ok(None),
            Some(k) => {
                if k.iter().all(|v| *v > 0.0 && v.is_finite()) {
                    Ok(Some([1.0 / k[0], 1.0 / k[1], 1.0 / k[2]]))
                } else {
                    Err(Error::PermeabilityNotSpd {
                        element,
                        x: [f64::NAN; 3],
                    })
                }
            }
        }
    }
}

/// Number of GLL points per axis used for integration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct QuadratureSettings {
    /// Extra points on top of the defaults.
    pub bump: usize,
}

impl QuadratureSettings {
    /// Points for mass matrices and right-hand sides.
    pub fn assembly_points(&self, order: usize) -> usize {
        order + 3 + self.bump
    }

    /// Points for error norms.
    pub fn error_points(&self, order: usize) -> usize {
        order + 4 + self.bump
    }
}

/// Precomputed reference-element data for one order and quadrature rule.
#[derive(Clone, Debug)]
pub struct ElementAssembler {
    pub basis: Basis1d,
    pub rule: QuadratureRule,
    pub grid: CellGrid,
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
    /// Per direction: scalar face-function values, `n_d × n_q`.
    face_values: [Mat<f64>; 3],
    /// Volume function values, `n_c × n_q`.
    vol_values: Mat<f64>,
    /// Reference direction blocks `Σ w φ_i φ_j` and volume Gram matrix.
    ref_face: [Mat<f64>; 3],
    ref_vol: Mat<f64>,
}

impl ElementAssembler {
    pub fn new(order: usize, quad_points: usize) -> Result<Self> {
        let basis = Basis1d::new(order)?;
        let rule = QuadratureRule::gll(quad_points.max(order + 1))?;
        let grid = CellGrid::new([order; 3]);
        let nq1 = rule.len();
        let mut points = Vec::with_capacity(nq1 * nq1 * nq1);
        let mut weights = Vec::with_capacity(nq1 * nq1 * nq1);
        for k in 0..nq1 {
            for j in 0..nq1 {
                for i in 0..nq1 {
                    points.push([rule.points[i], rule.points[j], rule.points[k]]);
                    weights.push(rule.weights[i] * rule.weights[j] * rule.weights[k]);
                }
            }
        }
        let nq = points.len();
        let nd = grid.n_faces_axis(0);
        let mut face_values = [Mat::zeros(nd, nq), Mat::zeros(nd, nq), Mat::zeros(nd, nq)];
        let mut vol_values = Mat::zeros(grid.n_cells(), nq);
        for (q, &xi) in points.iter().enumerate() {
            let fv = eval_face_basis_scalar(&basis, xi);
            for (d, fvd) in face_values.iter_mut().enumerate() {
                let off = grid.face_offset(d);
                for i in 0..nd {
                    fvd[(i, q)] = fv[off + i];
                }
            }
            for (i, v) in eval_volume_basis(&basis, xi).into_iter().enumerate() {
                vol_values[(i, q)] = v;
            }
        }
        let gram = |vals: &Mat<f64>| {
            let scaled = Mat::from_fn(vals.nrows(), nq, |i, q| vals[(i, q)] * weights[q]);
            vals * scaled.transpose()
        };
        let ref_face = [gram(&face_values[0]), gram(&face_values[1]), gram(&face_values[2])];
        let ref_vol = gram(&vol_values);
        Ok(Self {
            basis,
            rule,
            grid,
            points,
            weights,
            face_values,
            vol_values,
            ref_face,
            ref_vol,
        })
    }

    pub fn with_settings(order: usize, settings: &QuadratureSettings) -> Result<Self> {
        Self::new(order, settings.assembly_points(order))
    }

    pub fn order(&self) -> usize {
        self.basis.order
    }

    pub fn n_faces(&self) -> usize {
        self.grid.n_faces()
    }

    pub fn n_cells(&self) -> usize {
        self.grid.n_cells()
    }

    pub fn quadrature_points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn quadrature_weights(&self) -> &[f64] {
        &self.weights
    }

    fn constant_diagonal_jacobian(geom: &ElementGeometry) -> Option<[f64; 3]> {
        if !geom.mapping.is_affine_diagonal() {
            return None;
        }
        let j = geom.jacobian_unchecked([0.0; 3]);
        Some([j.matrix[0][0], j.matrix[1][1], j.matrix[2][2]])
    }

    /// `∫ Ψ²ᵀ K⁻¹ Ψ²` on one element (element face numbering). With
    /// `perm = None` the unweighted mass matrix is returned.
    pub fn face_mass(&self, geom: &ElementGeometry, perm: Option<&PermeabilityEvaluator>) -> Result<Mat<f64>> {
        let n = self.n_faces();
        let mut m = Mat::zeros(n, n);
        let kinv_diag = match perm {
            None => Some([1.0; 3]),
            Some(p) => p.inverse_diagonal(geom.element)?,
        };
        if let (Some(jd), Some(kd)) = (Self::constant_diagonal_jacobian(geom), kinv_diag) {
            let det = jd[0] * jd[1] * jd[2];
            if !(det > 0.0) {
                return Err(Error::InvertedElement {
                    element: geom.element,
                    det,
                    xi: [0.0; 3],
                });
            }
            for d in 0..3 {
                let c = jd[d] * jd[d] * kd[d] / det;
                let off = self.grid.face_offset(d);
                let r = &self.ref_face[d];
                for j in 0..r.ncols() {
                    for i in 0..r.nrows() {
                        m[(off + i, off + j)] = c * r[(i, j)];
                    }
                }
            }
            return Ok(m);
        }

        let nq = self.points.len();
        let mut g = vec![[[0.0; 3]; 3]; nq];
        for (q, &xi) in self.points.iter().enumerate() {
            let jac = geom.jacobian(xi)?;
            let kinv = match perm {
                None => [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
                Some(p) => p.inverse(geom.element, geom.map(xi))?,
            };
            let jm = &jac.matrix;
            // G = Jᵀ K⁻¹ J / det J
            let mut kj = [[0.0; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    kj[a][b] = (0..3).map(|c| kinv[a][c] * jm[c][b]).sum();
                }
            }
            for a in 0..3 {
                for b in 0..3 {
                    g[q][a][b] = (0..3).map(|c| jm[c][a] * kj[c][b]).sum::<f64>() / jac.det * self.weights[q];
                }
            }
        }
        for d in 0..3 {
            for e in d..3 {
                let scaled = Mat::from_fn(self.face_values[e].nrows(), nq, |i, q| {
                    self.face_values[e][(i, q)] * g[q][d][e]
                });
                let block = &self.face_values[d] * scaled.transpose();
                let (od, oe) = (self.grid.face_offset(d), self.grid.face_offset(e));
                for j in 0..block.ncols() {
                    for i in 0..block.nrows() {
                        m[(od + i, oe + j)] = block[(i, j)];
                        m[(oe + j, od + i)] = block[(i, j)];
                    }
                }
            }
        }
        Ok(m)
    }

    /// `∫ Ψ³ᵀ Ψ³` on one element (physical volume basis).
    pub fn volume_mass(&self, geom: &ElementGeometry) -> Result<Mat<f64>> {
        if let Some(jd) = Self::constant_diagonal_jacobian(geom) {
            let det = jd[0] * jd[1] * jd[2];
            return Ok(Mat::from_fn(self.n_cells(), self.n_cells(), |i, j| {
                self.ref_vol[(i, j)] / det
            }));
        }
        let nq = self.points.len();
        let mut scale = vec![0.0; nq];
        for (q, &xi) in self.points.iter().enumerate() {
            scale[q] = self.weights[q] / geom.jacobian(xi)?.det;
        }
        let scaled = Mat::from_fn(self.n_cells(), nq, |i, q| self.vol_values[(i, q)] * scale[q]);
        Ok(&self.vol_values * scaled.transpose())
    }

    /// Volume DOFs of `f`: the integral of `f` over every lattice sub-cell.
    pub fn rhs_volume(&self, f: &ScalarField, geom: &ElementGeometry) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_cells()];
        if f.is_zero() {
            return Ok(out);
        }
        let nodes = &self.basis.nodes;
        for (c, o) in out.iter_mut().enumerate() {
            let p = self.grid.cell_position(c);
            let r: Vec<QuadratureRule> = (0..3).map(|a| self.rule.mapped(nodes[p[a]], nodes[p[a] + 1])).collect();
            let mut acc = 0.0;
            for (&z, &wz) in r[2].points.iter().zip(&r[2].weights) {
                for (&y, &wy) in r[1].points.iter().zip(&r[1].weights) {
                    for (&x, &wx) in r[0].points.iter().zip(&r[0].weights) {
                        let xi = [x, y, z];
                        let jac = geom.jacobian(xi)?;
                        acc += wx * wy * wz * jac.det * f.eval(geom.map(xi));
                    }
                }
            }
            *o = acc;
        }
        Ok(out)
    }

    fn face_point(side: Side, s: f64, t: f64) -> [f64; 3] {
        let d = side.axis();
        let (t1, t2) = tangential_axes(d);
        let mut xi = [0.0; 3];
        xi[d] = side.outward_sign();
        xi[t1] = s;
        xi[t2] = t;
        xi
    }

    /// Dual trace coefficients of a boundary pressure on one element side:
    /// `∫∫ e_a(s) e_b(t) p̂(x(s, t)) ds dt`, `N²` values (lower tangential axis fastest).
    pub fn rhs_dirichlet(&self, p_hat: &ScalarField, geom: &ElementGeometry, side: Side) -> Result<Vec<f64>> {
        let n = self.order();
        let mut out = vec![0.0; n * n];
        if p_hat.is_zero() {
            return Ok(out);
        }
        for (&t, &wt) in self.rule.points.iter().zip(&self.rule.weights) {
            let et = self.basis.edge(t);
            for (&s, &ws) in self.rule.points.iter().zip(&self.rule.weights) {
                let es = self.basis.edge(s);
                let v = ws * wt * p_hat.eval(geom.map(Self::face_point(side, s, t)));
                for b in 0..n {
                    for a in 0..n {
                        out[a + n * b] += es[a] * et[b] * v;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Outward fluxes of a prescribed normal flux through every lattice
    /// sub-face of one element side, `N²` values.
    pub fn rhs_neumann(&self, u_hat: &FluxField, geom: &ElementGeometry, side: Side) -> Result<Vec<f64>> {
        let n = self.order();
        let mut out = vec![0.0; n * n];
        if u_hat.is_zero() {
            return Ok(out);
        }
        let nodes = &self.basis.nodes;
        for b in 0..n {
            let rt = self.rule.mapped(nodes[b], nodes[b + 1]);
            for a in 0..n {
                let rs = self.rule.mapped(nodes[a], nodes[a + 1]);
                let mut acc = 0.0;
                for (&t, &wt) in rt.points.iter().zip(&rt.weights) {
                    for (&s, &ws) in rs.points.iter().zip(&rs.weights) {
                        let xi = Self::face_point(side, s, t);
                        let jac = geom.jacobian(xi)?;
                        let (normal, area) = jac.face_normal(side.axis(), side.outward_sign());
                        acc += ws * wt * area * u_hat.eval(geom.map(xi), normal);
                    }
                }
                out[a + n * b] = acc;
            }
        }
        Ok(out)
    }

    /// Gram matrix of the physical trace basis on one element side.
    pub fn boundary_mass(&self, geom: &ElementGeometry, side: Side) -> Result<Mat<f64>> {
        let n = self.order();
        let mut m = Mat::zeros(n * n, n * n);
        for (&t, &wt) in self.rule.points.iter().zip(&self.rule.weights) {
            let et = self.basis.edge(t);
            for (&s, &ws) in self.rule.points.iter().zip(&self.rule.weights) {
                let es = self.basis.edge(s);
                let jac = geom.jacobian(Self::face_point(side, s, t))?;
                let (_, area) = jac.face_normal(side.axis(), side.outward_sign());
                let vals: Vec<f64> = (0..n * n).map(|k| es[k % n] * et[k / n]).collect();
                let w = ws * wt / area;
                for j in 0..n * n {
                    for i in 0..n * n {
                        m[(i, j)] += w * vals[i] * vals[j];
                    }
                }
            }
        }
        Ok(m)
    }
}

/// Geometry of each element of a block, in block element order.
pub fn block_geometries(spec: &MeshSpec, elements: &[usize]) -> Vec<ElementGeometry> {
    elements.iter().map(|&e| spec.geometry(e)).collect()
}

/// Dense block assembly of the weighted face mass matrix; shared interior
/// faces are summed across the block's elements.
pub fn assemble_block_face_mass(
    asm: &ElementAssembler,
    block: &BlockTopology,
    geoms: &[ElementGeometry],
    perm: Option<&PermeabilityEvaluator>,
) -> Result<Mat<f64>> {
    let n = block.n_faces();
    let mut m = Mat::zeros(n, n);
    for (i, geom) in geoms.iter().enumerate() {
        let local = asm.face_mass(geom, perm)?;
        let map = block.element_face_map(block.element_offset(i));
        for (b, &gb) in map.iter().enumerate() {
            for (a, &ga) in map.iter().enumerate() {
                m[(ga, gb)] += local[(a, b)];
            }
        }
    }
    Ok(m)
}

/// Triplets of the block face mass matrix (lower triangle only).
pub fn block_face_mass_triplets(
    asm: &ElementAssembler,
    block: &BlockTopology,
    geoms: &[ElementGeometry],
    perm: Option<&PermeabilityEvaluator>,
) -> Result<Vec<(usize, usize, f64)>> {
    let mut out = Vec::new();
    for (i, geom) in geoms.iter().enumerate() {
        let local = asm.face_mass(geom, perm)?;
        let map = block.element_face_map(block.element_offset(i));
        for (b, &gb) in map.iter().enumerate() {
            for (a, &ga) in map.iter().enumerate() {
                let v = local[(a, b)];
                if ga >= gb && v != 0.0 {
                    out.push((ga, gb, v));
                }
            }
        }
    }
    Ok(out)
}

/// Volume DOFs of `f` over a block (block cell order).
pub fn assemble_block_rhs_volume(
    asm: &ElementAssembler,
    block: &BlockTopology,
    geoms: &[ElementGeometry],
    f: &ScalarField,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; block.n_cells()];
    if f.is_zero() {
        return Ok(out);
    }
    for (i, geom) in geoms.iter().enumerate() {
        let local = asm.rhs_volume(f, geom)?;
        for (c, gc) in block.element_cell_map(block.element_offset(i)).into_iter().enumerate() {
            out[gc] = local[c];
        }
    }
    Ok(out)
}

/// Calls `visit(element index, side, boundary DOF indices)` for every element
/// face lying on the block boundary; the `N²` boundary DOF indices follow the
/// element-side ordering of [`ElementAssembler::rhs_dirichlet`].
pub fn for_each_boundary_element_face(
    block: &BlockTopology,
    mut visit: impl FnMut(usize, Side, &[usize]) -> Result<()>,
) -> Result<()> {
    let n = block.order;
    let mut side_offset = 0;
    let mut dofs = vec![0usize; n * n];
    for side in Side::ALL {
        let d = side.axis();
        let (t1, t2) = tangential_axes(d);
        let width = block.grid.dims[t1];
        for e2 in 0..block.elements[t2] {
            for e1 in 0..block.elements[t1] {
                let mut off = [0; 3];
                off[d] = if side.is_high() { block.elements[d] - 1 } else { 0 };
                off[t1] = e1;
                off[t2] = e2;
                let ei = off[0] + block.elements[0] * (off[1] + block.elements[1] * off[2]);
                for b in 0..n {
                    for a in 0..n {
                        dofs[a + n * b] = side_offset + (e1 * n + a) + width * (e2 * n + b);
                    }
                }
                visit(ei, side, &dofs)?;
            }
        }
        side_offset += block.grid.side_len(side);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::eval_face_basis_physical;
    use crate::mesh::Mapping;
    use crate::topology::boundary_dofs;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64) / ((1u64 << 53) as f64)
    }

    fn quad_form(m: &Mat<f64>, u: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..u.len() {
            for j in 0..u.len() {
                s += u[i] * m[(i, j)] * u[j];
            }
        }
        s
    }

    #[test]
    fn identity_face_mass_matches_quadrature_oracle() {
        let spec = MeshSpec::unbroken(1, [1, 1, 1], Mapping::Identity).unwrap();
        let geom = spec.geometry(0);
        let asm = ElementAssembler::new(1, 4).unwrap();
        let m = asm.face_mass(&geom, None).unwrap();
        // block diagonal by direction
        for i in 0..6 {
            for j in 0..6 {
                if i / 2 != j / 2 {
                    assert_eq!(m[(i, j)], 0.0);
                }
            }
        }
        let oracle_rule = QuadratureRule::gll(7).unwrap();
        let mut seed = 11u64;
        for _ in 0..5 {
            let u: Vec<f64> = (0..6).map(|_| lcg(&mut seed) - 0.5).collect();
            let mut integral = 0.0;
            for (&z, &wz) in oracle_rule.points.iter().zip(&oracle_rule.weights) {
                for (&y, &wy) in oracle_rule.points.iter().zip(&oracle_rule.weights) {
                    for (&x, &wx) in oracle_rule.points.iter().zip(&oracle_rule.weights) {
                        let jac = geom.jacobian([x, y, z]).unwrap();
                        let mut v = [0.0; 3];
                        for (phi, c) in eval_face_basis_physical(&asm.basis, [x, y, z], &jac).iter().zip(&u) {
                            for k in 0..3 {
                                v[k] += phi[k] * c;
                            }
                        }
                        integral += wx * wy * wz * jac.det * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
                    }
                }
            }
            assert!((quad_form(&m, &u) - integral).abs() < 1e-12);
        }
    }

    #[test]
    fn doubling_permeability_halves_mass() {
        let spec = MeshSpec::unbroken(2, [2, 2, 2], Mapping::WheelerDeformed).unwrap();
        let geom = spec.geometry(3);
        let asm = ElementAssembler::new(2, 5).unwrap();
        let k1 = PermeabilityEvaluator::new(Arc::new(ConstantPermeability([
            [2.0, 0.3, 0.0],
            [0.3, 1.0, 0.1],
            [0.0, 0.1, 1.5],
        ])));
        let k2 = PermeabilityEvaluator::new(Arc::new(ConstantPermeability([
            [4.0, 0.6, 0.0],
            [0.6, 2.0, 0.2],
            [0.0, 0.2, 3.0],
        ])));
        let m1 = asm.face_mass(&geom, Some(&k1)).unwrap();
        let m2 = asm.face_mass(&geom, Some(&k2)).unwrap();
        for i in 0..m1.nrows() {
            for j in 0..m1.ncols() {
                assert!((m2[(i, j)] - 0.5 * m1[(i, j)]).abs() <= 1e-14 * m1[(i, j)].abs().max(1.0));
            }
        }
    }

    #[test]
    fn fast_path_equals_general_quadrature() {
        let spec = MeshSpec::unbroken(
            2,
            [2, 3, 1],
            Mapping::Box {
                extents: [3.0, 2.0, 0.5],
            },
        )
        .unwrap();
        let geom = spec.geometry(4);
        let asm = ElementAssembler::new(2, 5).unwrap();
        let diag = PermeabilityEvaluator::new(Arc::new(ConstantPermeability([
            [2.0, 0.0, 0.0],
            [0.0, 0.5, 0.0],
            [0.0, 0.0, 3.0],
        ])));
        let fast = asm.face_mass(&geom, Some(&diag)).unwrap();
        // same tensor without the constant-diagonal hint takes the general path
        struct Tilted;
        impl Permeability for Tilted {
            fn tensor(&self, _e: usize, _x: [f64; 3]) -> [[f64; 3]; 3] {
                [[2.0, 0.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, 3.0]]
            }
        }
        let general = asm
            .face_mass(&geom, Some(&PermeabilityEvaluator::new(Arc::new(Tilted))))
            .unwrap();
        for i in 0..fast.nrows() {
            for j in 0..fast.ncols() {
                assert!((fast[(i, j)] - general[(i, j)]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn mass_matrices_are_spd_on_deformed_elements() {
        for n in 1..=3 {
            let spec = MeshSpec::unbroken(n, [3, 3, 3], Mapping::WheelerDeformed).unwrap();
            let asm = ElementAssembler::new(n, n + 3).unwrap();
            let geom = spec.geometry(13);
            for m in [asm.face_mass(&geom, None).unwrap(), asm.volume_mass(&geom).unwrap()] {
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        assert!((m[(i, j)] - m[(j, i)]).abs() <= 1e-12 * m[(i, i)].abs());
                    }
                }
                assert!(m.llt(faer::Side::Lower).is_ok());
            }
            let bm = asm.boundary_mass(&geom, Side::YPlus).unwrap();
            assert!(bm.llt(faer::Side::Lower).is_ok());
        }
    }

    #[test]
    fn lowest_order_volume_mass_is_inverse_volume() {
        let spec = MeshSpec::unbroken(1, [2, 2, 2], Mapping::Identity).unwrap();
        let asm = ElementAssembler::new(1, 4).unwrap();
        let m = asm.volume_mass(&spec.geometry(0)).unwrap();
        assert!((m[(0, 0)] - 8.0).abs() < 1e-13);
    }

    #[test]
    fn reference_boundary_mass_at_lowest_order() {
        // trace function e_0 e_0 = 1/4 on the 2×2 reference face
        let spec = MeshSpec::unbroken(
            1,
            [1, 1, 1],
            Mapping::Box {
                extents: [2.0, 2.0, 2.0],
            },
        )
        .unwrap();
        let asm = ElementAssembler::new(1, 4).unwrap();
        let m = asm.boundary_mass(&spec.geometry(0), Side::XMinus).unwrap();
        assert!((m[(0, 0)] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn volume_rhs_of_unity_sums_to_volume() {
        let spec = MeshSpec::unbroken(2, [2, 2, 2], Mapping::WheelerDeformed).unwrap();
        let asm = ElementAssembler::new(2, 5).unwrap();
        let mut total = 0.0;
        for e in 0..spec.n_elements() {
            total += asm
                .rhs_volume(&ScalarField::Constant(1.0), &spec.geometry(e))
                .unwrap()
                .iter()
                .sum::<f64>();
        }
        // compare against a refined quadrature of det J
        let fine = ElementAssembler::new(2, 12).unwrap();
        let mut oracle = 0.0;
        for e in 0..spec.n_elements() {
            oracle += fine
                .rhs_volume(&ScalarField::Constant(1.0), &spec.geometry(e))
                .unwrap()
                .iter()
                .sum::<f64>();
        }
        assert!((total - oracle).abs() < 1e-6);
        assert!(asm
            .rhs_volume(&ScalarField::Zero, &spec.geometry(0))
            .unwrap()
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn dirichlet_and_neumann_functionals_on_reference_face() {
        let spec = MeshSpec::unbroken(
            1,
            [1, 1, 1],
            Mapping::Box {
                extents: [2.0, 2.0, 2.0],
            },
        )
        .unwrap();
        let asm = ElementAssembler::new(1, 4).unwrap();
        let g = spec.geometry(0);
        let d = asm
            .rhs_dirichlet(&ScalarField::Constant(1.0), &g, Side::XMinus)
            .unwrap();
        assert!((d[0] - 1.0).abs() < 1e-14);
        assert!(asm.rhs_dirichlet(&ScalarField::Zero, &g, Side::XMinus).unwrap()[0] == 0.0);
        let u = asm
            .rhs_neumann(&FluxField::function(|_, _| 1.0), &g, Side::ZPlus)
            .unwrap();
        assert!((u[0] - 4.0).abs() < 1e-13);
        assert_eq!(asm.rhs_neumann(&FluxField::Zero, &g, Side::ZPlus).unwrap(), vec![0.0]);
    }

    #[test]
    fn spd_inverse_of_wheeler_tensor_at_origin_is_identity() {
        let inv = spd_inverse3(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        assert_eq!(inv, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let k = [[2.0, 0.5, 0.1], [0.5, 3.0, 0.2], [0.1, 0.2, 1.0]];
        let inv = spd_inverse3(&k).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|m| k[i][m] * inv[m][j]).sum();
                assert!((s - (i == j) as u8 as f64).abs() < 1e-14);
            }
        }
        assert!(spd_inverse3(&[[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).is_none());
    }

    #[test]
    fn non_spd_permeability_is_a_data_error() {
        struct Bad;
        impl Permeability for Bad {
            fn tensor(&self, _e: usize, _x: [f64; 3]) -> [[f64; 3]; 3] {
                [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]]
            }
        }
        let spec = MeshSpec::unbroken(1, [1, 1, 1], Mapping::WheelerDeformed).unwrap();
        let asm = ElementAssembler::new(1, 4).unwrap();
        let err = asm
            .face_mass(&spec.geometry(0), Some(&PermeabilityEvaluator::new(Arc::new(Bad))))
            .unwrap_err();
        assert_eq!(err.category(), crate::error::ErrorCategory::Data);
    }

    #[test]
    fn boundary_element_faces_cover_boundary_dofs() {
        let block = BlockTopology::new(2, [2, 1, 3]);
        let mut seen = vec![0; block.n_boundary()];
        for_each_boundary_element_face(&block, |ei, side, dofs| {
            assert!(ei < block.n_elements());
            for &b in dofs {
                assert_eq!(block.boundary[b].side, side);
                seen[b] += 1;
            }
            Ok(())
        })
        .unwrap();
        assert!(seen.iter().all(|&c| c == 1));
        assert_eq!(seen.len(), boundary_dofs(&block.grid).len());
    }

    #[test]
    fn block_assembly_sums_shared_faces() {
        let spec = MeshSpec::unbroken(1, [2, 1, 1], Mapping::Identity).unwrap();
        let block = BlockTopology::new(1, [2, 1, 1]);
        let asm = ElementAssembler::new(1, 4).unwrap();
        let geoms = block_geometries(&spec, &[0, 1]);
        let m = assemble_block_face_mass(&asm, &block, &geoms, None).unwrap();
        let shared = block.grid.face_id(0, [1, 0, 0]);
        let single = asm.face_mass(&geoms[0], None).unwrap();
        assert!((m[(shared, shared)] - 2.0 * single[(1, 1)]).abs() < 1e-14);
        let trip = block_face_mass_triplets(&asm, &block, &geoms, None).unwrap();
        let sparse = crate::linalg::SymmetricCsc::from_triplets(block.n_faces(), &trip);
        for i in 0..block.n_faces() {
            for j in 0..block.n_faces() {
                assert!((sparse.get(i, j) - m[(i, j)]).abs() < 1e-15);
            }
        }
    }
}
