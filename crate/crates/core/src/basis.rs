//! Spectral-element bases on the reference hexahedron. Coefficient vectors
//! carry the representation they expand in, primal or dual.

use std::sync::Arc;

use crate::error::{check_len, Error, Result};
use crate::mesh::{gll_nodes_weights, Jacobian, Side};
use crate::topology::{tangential_axes, CellGrid};

/// One-dimensional nodal (Lagrange) and histopolation (edge) polynomials on
/// the GLL nodes of order `N`.
#[derive(Clone, Debug)]
pub struct Basis1d {
    pub order: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Barycentric weights of the nodes.
    bary: Vec<f64>,
}

impl Basis1d {
    pub fn new(order: usize) -> Result<Self> {
        let (nodes, weights) = gll_nodes_weights(order)?;
        let bary = (0..=order)
            .map(|j| {
                let prod: f64 = (0..=order).filter(|&k| k != j).map(|k| nodes[j] - nodes[k]).product();
                1.0 / prod
            })
            .collect();
        Ok(Self {
            order,
            nodes,
            weights,
            bary,
        })
    }

    /// `l_0(x), …, l_N(x)`.
    pub fn lagrange(&self, x: f64) -> Vec<f64> {
        let n = self.order;
        let mut out = vec![0.0; n + 1];
        for (j, o) in out.iter_mut().enumerate() {
            let mut v = 1.0;
            for k in 0..=n {
                if k != j {
                    v *= x - self.nodes[k];
                }
            }
            *o = v * self.bary[j];
        }
        out
    }

    /// `l_0'(x), …, l_N'(x)`.
    pub fn lagrange_derivative(&self, x: f64) -> Vec<f64> {
        let n = self.order;
        let mut out = vec![0.0; n + 1];
        for (j, o) in out.iter_mut().enumerate() {
            let mut sum = 0.0;
            for m in 0..=n {
                if m == j {
                    continue;
                }
                let mut v = 1.0;
                for k in 0..=n {
                    if k != j && k != m {
                        v *= x - self.nodes[k];
                    }
                }
                sum += v;
            }
            *o = sum * self.bary[j];
        }
        out
    }

    /// Edge polynomials `e_i = -Σ_{k≤i} l_k'`, `i = 0..N-1`. The integral of
    /// `e_i` over `[x_m, x_{m+1}]` is `δ_im`.
    pub fn edge(&self, x: f64) -> Vec<f64> {
        let dl = self.lagrange_derivative(x);
        let mut out = vec![0.0; self.order];
        let mut acc = 0.0;
        for i in 0..self.order {
            acc -= dl[i];
            out[i] = acc;
        }
        out
    }
}

/// Reference values of the `N³` volume basis functions at `xi`, in lattice
/// cell order (x fastest).
pub fn eval_volume_basis(basis: &Basis1d, xi: [f64; 3]) -> Vec<f64> {
    let ex = basis.edge(xi[0]);
    let ey = basis.edge(xi[1]);
    let ez = basis.edge(xi[2]);
    let n = basis.order;
    let mut out = Vec::with_capacity(n * n * n);
    for c in &ez {
        for b in &ey {
            for a in &ex {
                out.push(a * b * c);
            }
        }
    }
    out
}

/// Physical volume basis: reference values divided by `det J`.
pub fn eval_volume_basis_physical(basis: &Basis1d, xi: [f64; 3], jac: &Jacobian) -> Vec<f64> {
    let inv = 1.0 / jac.det;
    eval_volume_basis(basis, xi).into_iter().map(|v| v * inv).collect()
}

/// Scalar factor of the reference face basis functions, per direction.
///
/// The face function of direction `d` at element lattice position `p` is
/// `l_{p_d}(ξ_d) e_{p_t1}(ξ_t1) e_{p_t2}(ξ_t2)` times the unit vector of `d`.
/// The returned rows follow the element face numbering of [`CellGrid`].
pub fn eval_face_basis_scalar(basis: &Basis1d, xi: [f64; 3]) -> Vec<f64> {
    let n = basis.order;
    let grid = CellGrid::new([n; 3]);
    let l = [basis.lagrange(xi[0]), basis.lagrange(xi[1]), basis.lagrange(xi[2])];
    let e = [basis.edge(xi[0]), basis.edge(xi[1]), basis.edge(xi[2])];
    let mut out = vec![0.0; grid.n_faces()];
    for (f, o) in out.iter_mut().enumerate() {
        let (d, p) = grid.face_position(f);
        let (t1, t2) = tangential_axes(d);
        *o = l[d][p[d]] * e[t1][p[t1]] * e[t2][p[t2]];
    }
    out
}

/// Reference face basis as vectors, element face order.
pub fn eval_face_basis(basis: &Basis1d, xi: [f64; 3]) -> Vec<[f64; 3]> {
    let grid = CellGrid::new([basis.order; 3]);
    eval_face_basis_scalar(basis, xi)
        .into_iter()
        .enumerate()
        .map(|(f, v)| {
            let mut out = [0.0; 3];
            out[grid.face_position(f).0] = v;
            out
        })
        .collect()
}

/// Physical face basis through the contravariant Piola map.
pub fn eval_face_basis_physical(basis: &Basis1d, xi: [f64; 3], jac: &Jacobian) -> Vec<[f64; 3]> {
    eval_face_basis(basis, xi).into_iter().map(|v| jac.piola(v)).collect()
}

/// Trace basis on the element boundary: on each of the six sides, `N²`
/// functions `e_a(ξ_t1) e_b(ξ_t2)` (per unit reference area), ordered like the
/// boundary DOFs of the element lattice.
#[derive(Clone, Debug)]
pub struct TraceBasis {
    pub basis: Basis1d,
}

impl TraceBasis {
    pub fn dimension(&self) -> usize {
        6 * self.basis.order * self.basis.order
    }

    pub fn per_side(&self) -> usize {
        self.basis.order * self.basis.order
    }

    /// Values of the `N²` trace functions of `side` at tangential reference
    /// coordinates `(s, t)` (lower tangential axis first).
    pub fn eval_side(&self, s: f64, t: f64) -> Vec<f64> {
        let es = self.basis.edge(s);
        let et = self.basis.edge(t);
        let mut out = Vec::with_capacity(self.per_side());
        for b in &et {
            for a in &es {
                out.push(a * b);
            }
        }
        out
    }

    /// Offset of `side` in the element boundary numbering.
    pub fn side_offset(&self, side: Side) -> usize {
        side.index() * self.per_side()
    }
}

/// Boundary trace basis of order `N` (dimension `6 N²` per element).
pub fn trace_restriction(order: usize) -> Result<TraceBasis> {
    Ok(TraceBasis {
        basis: Basis1d::new(order)?,
    })
}

/// Which space a coefficient vector expands in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Representation {
    /// Face fluxes `N²(u)`.
    Primal2,
    /// Volume integrals `N³(p)`.
    Primal3,
    /// Dual pressure coefficients `Ñ⁰(p) = M⁽³⁾ N³(p)`.
    Dual0,
    /// Boundary fluxes `B²(u·n)`.
    Trace2,
    /// Dual trace coefficients `B̃⁰(λ)`.
    DualTrace0,
}

impl Representation {
    pub fn dual_of(self) -> Option<Representation> {
        match self {
            Representation::Dual0 => Some(Representation::Primal3),
            Representation::DualTrace0 => Some(Representation::Trace2),
            _ => None,
        }
    }
}

/// Expansion coefficients tagged with their representation and owner.
#[derive(Clone, Debug, PartialEq)]
pub struct DofVector {
    pub repr: Representation,
    /// Owning subdomain, `None` for the unbroken mesh.
    pub owner: Option<usize>,
    pub values: Vec<f64>,
}

impl DofVector {
    pub fn new(repr: Representation, owner: Option<usize>, values: Vec<f64>) -> Self {
        Self { repr, owner, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Dual coefficients together with the mass matrix that defines them.
#[derive(Clone, Debug)]
pub struct DualDofVector {
    pub dofs: DofVector,
    pub mass: Option<Arc<faer::Mat<f64>>>,
}

impl DualDofVector {
    /// `Ñ = M N` for a primal vector `N`.
    pub fn from_primal(primal: &DofVector, mass: Arc<faer::Mat<f64>>) -> Result<Self> {
        let repr = match primal.repr {
            Representation::Primal3 => Representation::Dual0,
            Representation::Trace2 => Representation::DualTrace0,
            other => return Err(Error::Config(format!("{other:?} has no dual representation"))),
        };
        check_len("dual from primal", mass.ncols(), primal.len())?;
        let values = (0..mass.nrows())
            .map(|i| (0..mass.ncols()).map(|j| mass[(i, j)] * primal.values[j]).sum())
            .collect();
        Ok(Self {
            dofs: DofVector::new(repr, primal.owner, values),
            mass: Some(mass),
        })
    }

    /// Wraps coefficients that are already dual (e.g. solver output).
    pub fn from_values(repr: Representation, owner: Option<usize>, values: Vec<f64>) -> Self {
        Self {
            dofs: DofVector::new(repr, owner, values),
            mass: None,
        }
    }
}

/// `Ñᵀ N`: the L² pairing of a dual and a primal expansion.
pub fn dual_pairing(dual: &DualDofVector, primal: &DofVector) -> Result<f64> {
    if dual.dofs.repr.dual_of() != Some(primal.repr) {
        return Err(Error::Config(format!(
            "cannot pair {:?} with {:?}",
            dual.dofs.repr, primal.repr
        )));
    }
    if dual.dofs.owner != primal.owner {
        return Err(Error::Config(format!(
            "pairing across scopes {:?} and {:?}",
            dual.dofs.owner, primal.owner
        )));
    }
    check_len("dual pairing", dual.dofs.len(), primal.len())?;
    Ok(dual.dofs.values.iter().zip(&primal.values).map(|(a, b)| a * b).sum())
}
