//! Structured hexahedral meshes built from analytic deformation maps of a
//! reference box, together with their subdomain partition.

mod geometry;
mod partition;
mod reference;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

pub use geometry::{ElementGeometry, Jacobian};
pub use partition::{build_partition, BoundaryKind, BoundarySpec, InterfaceGroup, MeshFace, Side, SubdomainPartition};
pub use reference::{gll_nodes_weights, QuadratureRule, ReferenceElement};

use crate::error::{Error, Result};

/// Global analytic map from the unit box coordinates `x̂ ∈ [0, 1]^3` to physical space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mapping {
    /// `x = x̂`, the unit box.
    Identity,
    /// Smooth cosine deformation of the unit box.
    WheelerDeformed,
    /// Axis-aligned box `[0, Lx] x [0, Ly] x [0, Lz]`.
    Box { extents: [f64; 3] },
}

pub const SPE10_EXTENTS_FT: [f64; 3] = [1200.0, 2200.0, 170.0];

const WHEELER_AMPLITUDE: [f64; 3] = [0.03, -0.04, 0.05];

impl Mapping {
    pub fn id(&self) -> &'static str {
        match self {
            Mapping::Identity => "identity",
            Mapping::WheelerDeformed => "wheeler_deformed",
            Mapping::Box { .. } => "spe10_box",
        }
    }

    /// Jacobian is constant and diagonal.
    pub fn is_affine_diagonal(&self) -> bool {
        !matches!(self, Mapping::WheelerDeformed)
    }

    pub fn map(&self, xh: [f64; 3]) -> [f64; 3] {
        match *self {
            Mapping::Identity => xh,
            Mapping::WheelerDeformed => {
                let c = (3.0 * PI * xh[0]).cos() * (3.0 * PI * xh[1]).cos() * (3.0 * PI * xh[2]).cos();
                [
                    xh[0] + WHEELER_AMPLITUDE[0] * c,
                    xh[1] + WHEELER_AMPLITUDE[1] * c,
                    xh[2] + WHEELER_AMPLITUDE[2] * c,
                ]
            }
            Mapping::Box { extents } => [xh[0] * extents[0], xh[1] * extents[1], xh[2] * extents[2]],
        }
    }

    /// `∂x_a / ∂x̂_b`.
    pub fn jacobian(&self, xh: [f64; 3]) -> [[f64; 3]; 3] {
        match *self {
            Mapping::Identity => [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            Mapping::WheelerDeformed => {
                let (s, c): (Vec<f64>, Vec<f64>) =
                    xh.iter().map(|&t| ((3.0 * PI * t).sin(), (3.0 * PI * t).cos())).unzip();
                let grad = [
                    -3.0 * PI * s[0] * c[1] * c[2],
                    -3.0 * PI * c[0] * s[1] * c[2],
                    -3.0 * PI * c[0] * c[1] * s[2],
                ];
                let mut j = [[0.0; 3]; 3];
                for a in 0..3 {
                    for b in 0..3 {
                        j[a][b] = WHEELER_AMPLITUDE[a] * grad[b] + if a == b { 1.0 } else { 0.0 };
                    }
                }
                j
            }
            Mapping::Box { extents } => [[extents[0], 0.0, 0.0], [0.0, extents[1], 0.0], [0.0, 0.0, extents[2]]],
        }
    }
}

impl fmt::Display for Mapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Mapping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Mapping::Identity),
            "wheeler_deformed" | "wheeler" => Ok(Mapping::WheelerDeformed),
            "spe10_box" => Ok(Mapping::Box {
                extents: SPE10_EXTENTS_FT,
            }),
            other => Err(Error::Config(format!("unknown mapping id '{other}'"))),
        }
    }
}

/// Mesh and decomposition description: `K = K1 ∘ K2` elements per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshSpec {
    pub order: usize,
    pub elements: [usize; 3],
    pub subdomains: [usize; 3],
    pub sub_elements: [usize; 3],
    pub mapping: Mapping,
}

impl MeshSpec {
    pub fn new(order: usize, subdomains: [usize; 3], sub_elements: [usize; 3], mapping: Mapping) -> Result<Self> {
        let elements = [
            subdomains[0] * sub_elements[0],
            subdomains[1] * sub_elements[1],
            subdomains[2] * sub_elements[2],
        ];
        let spec = Self {
            order,
            elements,
            subdomains,
            sub_elements,
            mapping,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Single-block mesh with `elements` per axis (the unbroken domain).
    pub fn unbroken(order: usize, elements: [usize; 3], mapping: Mapping) -> Result<Self> {
        Self::new(order, [1, 1, 1], elements, mapping)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::InvalidOrder(self.order));
        }
        for a in 0..3 {
            if self.subdomains[a] == 0 || self.sub_elements[a] == 0 {
                return Err(Error::Spec(format!(
                    "axis {a}: subdomain and element counts must be positive (K1={:?}, K2={:?})",
                    self.subdomains, self.sub_elements
                )));
            }
            if self.subdomains[a] * self.sub_elements[a] != self.elements[a] {
                return Err(Error::Spec(format!(
                    "K1 ∘ K2 = {:?} ∘ {:?} does not match K = {:?}",
                    self.subdomains, self.sub_elements, self.elements
                )));
            }
        }
        Ok(())
    }

    pub fn n_elements(&self) -> usize {
        self.elements.iter().product()
    }

    pub fn n_subdomains(&self) -> usize {
        self.subdomains.iter().product()
    }

    /// Size `2 / K` of an undeformed element of `[-1, 1]^3` along each axis.
    pub fn h_ref(&self) -> [f64; 3] {
        [
            2.0 / self.elements[0] as f64,
            2.0 / self.elements[1] as f64,
            2.0 / self.elements[2] as f64,
        ]
    }

    pub fn element_index(&self, id: usize) -> [usize; 3] {
        let [kx, ky, _] = self.elements;
        [id % kx, (id / kx) % ky, id / (kx * ky)]
    }

    pub fn element_id(&self, idx: [usize; 3]) -> usize {
        idx[0] + self.elements[0] * (idx[1] + self.elements[1] * idx[2])
    }

    pub fn subdomain_index(&self, id: usize) -> [usize; 3] {
        let [sx, sy, _] = self.subdomains;
        [id % sx, (id / sx) % sy, id / (sx * sy)]
    }

    pub fn subdomain_id(&self, idx: [usize; 3]) -> usize {
        idx[0] + self.subdomains[0] * (idx[1] + self.subdomains[1] * idx[2])
    }

    /// Subdomain owning a global element.
    pub fn subdomain_of_element(&self, element: usize) -> usize {
        let e = self.element_index(element);
        self.subdomain_id([
            e[0] / self.sub_elements[0],
            e[1] / self.sub_elements[1],
            e[2] / self.sub_elements[2],
        ])
    }

    pub fn geometry(&self, element: usize) -> ElementGeometry {
        ElementGeometry::new(self, element)
    }
}

/// Physical coordinates of reference point `xi` in element `element`.
pub fn map_point(spec: &MeshSpec, element: usize, xi: [f64; 3]) -> Result<[f64; 3]> {
    if element >= spec.n_elements() {
        return Err(Error::Config(format!(
            "element {element} out of range ({} elements)",
            spec.n_elements()
        )));
    }
    if xi.iter().any(|t| !(-1.0..=1.0).contains(t)) {
        return Err(Error::Config(format!("reference point {xi:?} outside [-1, 1]^3")));
    }
    Ok(spec.geometry(element).map(xi))
}
