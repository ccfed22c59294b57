use super::{Mapping, MeshSpec};
use crate::error::{Error, Result};

/// Jacobian `J_ab = ∂x_a/∂ξ_b` of the element map at one reference point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jacobian {
    pub matrix: [[f64; 3]; 3],
    pub det: f64,
}

impl Jacobian {
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Self {
        Self {
            matrix: m,
            det: det3(&m),
        }
    }

    /// Cofactor matrix `det(J) J^{-T}`; column `d` is the area-weighted normal of
    /// the surface `ξ_d = const`.
    pub fn cofactor(&self) -> [[f64; 3]; 3] {
        let m = &self.matrix;
        let mut c = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
                let (j1, j2) = ((j + 1) % 3, (j + 2) % 3);
                c[i][j] = m[i1][j1] * m[i2][j2] - m[i1][j2] * m[i2][j1];
            }
        }
        c
    }

    /// Contravariant Piola map of a reference vector: `J v / det J`.
    pub fn piola(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.matrix;
        let inv = 1.0 / self.det;
        [
            (m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2]) * inv,
            (m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2]) * inv,
            (m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]) * inv,
        ]
    }

    /// Outward unit normal and surface measure factor for the face `ξ_axis = ±1`.
    pub fn face_normal(&self, axis: usize, outward_sign: f64) -> ([f64; 3], f64) {
        let c = self.cofactor();
        let v = [c[0][axis], c[1][axis], c[2][axis]];
        let area = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let s = outward_sign / area;
        ([v[0] * s, v[1] * s, v[2] * s], area)
    }
}

pub(crate) fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Geometry of one hexahedral element: the affine embedding of `[-1, 1]^3` into
/// the global reference box composed with the global deformation.
#[derive(Clone, Debug)]
pub struct ElementGeometry {
    pub element: usize,
    pub index: [usize; 3],
    /// Lower corner of the element in the global reference box `[-1, 1]^3`.
    pub lower: [f64; 3],
    /// Element size in the global reference box (`ĥ = 2/K`).
    pub size: [f64; 3],
    pub mapping: Mapping,
}

impl ElementGeometry {
    pub fn new(spec: &MeshSpec, element: usize) -> Self {
        let index = spec.element_index(element);
        let size = spec.h_ref();
        let lower = [
            -1.0 + index[0] as f64 * size[0],
            -1.0 + index[1] as f64 * size[1],
            -1.0 + index[2] as f64 * size[2],
        ];
        Self {
            element,
            index,
            lower,
            size,
            mapping: spec.mapping,
        }
    }

    /// Unit-box coordinates `x̂ = (1 + X) / 2` of a reference point.
    pub fn unit_coords(&self, xi: [f64; 3]) -> [f64; 3] {
        let mut xh = [0.0; 3];
        for a in 0..3 {
            let big_x = self.lower[a] + 0.5 * (xi[a] + 1.0) * self.size[a];
            xh[a] = 0.5 * (1.0 + big_x);
        }
        xh
    }

    pub fn map(&self, xi: [f64; 3]) -> [f64; 3] {
        self.mapping.map(self.unit_coords(xi))
    }

    /// Analytic Jacobian of the composite map; fails for inverted elements.
    pub fn jacobian(&self, xi: [f64; 3]) -> Result<Jacobian> {
        let jac = self.jacobian_unchecked(xi);
        if !(jac.det > 0.0) {
            return Err(Error::InvertedElement {
                element: self.element,
                det: jac.det,
                xi,
            });
        }
        Ok(jac)
    }

    pub(crate) fn jacobian_unchecked(&self, xi: [f64; 3]) -> Jacobian {
        let jm = self.mapping.jacobian(self.unit_coords(xi));
        let mut m = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                m[a][b] = jm[a][b] * 0.25 * self.size[b];
            }
        }
        Jacobian::from_matrix(m)
    }

    /// The eight vertices, lexicographic in (ξ, η, ζ).
    pub fn vertices(&self) -> [[f64; 3]; 8] {
        let mut v = [[0.0; 3]; 8];
        for (c, out) in v.iter_mut().enumerate() {
            let xi = [
                if c & 1 == 0 { -1.0 } else { 1.0 },
                if c & 2 == 0 { -1.0 } else { 1.0 },
                if c & 4 == 0 { -1.0 } else { 1.0 },
            ];
            *out = self.map(xi);
        }
        v
    }
}
