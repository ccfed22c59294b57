use std::fmt;
use std::str::FromStr;

use super::MeshSpec;
use crate::error::{Error, Result};
use crate::topology::CellGrid;

/// One of the six faces of an axis-aligned box, ordered x−, x+, y−, y+, z−, z+.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    XMinus,
    XPlus,
    YMinus,
    YPlus,
    ZMinus,
    ZPlus,
}

impl Side {
    pub const ALL: [Side; 6] = [
        Side::XMinus,
        Side::XPlus,
        Side::YMinus,
        Side::YPlus,
        Side::ZMinus,
        Side::ZPlus,
    ];

    pub fn from_axis(axis: usize, high: bool) -> Side {
        Side::ALL[2 * axis + high as usize]
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn axis(self) -> usize {
        self as usize / 2
    }

    pub fn is_high(self) -> bool {
        self as usize % 2 == 1
    }

    /// `+1` on high sides, `-1` on low sides: the sign of the outward normal
    /// relative to the positive axis direction.
    pub fn outward_sign(self) -> f64 {
        if self.is_high() {
            1.0
        } else {
            -1.0
        }
    }

    pub fn opposite(self) -> Side {
        Side::from_axis(self.axis(), !self.is_high())
    }

    pub fn name(self) -> &'static str {
        ["x-", "x+", "y-", "y+", "z-", "z+"][self.index()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
}

impl FromStr for BoundaryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "d" | "dirichlet" => Ok(BoundaryKind::Dirichlet),
            "n" | "neumann" => Ok(BoundaryKind::Neumann),
            other => Err(Error::Config(format!("unknown boundary kind '{other}'"))),
        }
    }
}

/// Boundary-condition type for each of the six outer box faces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundarySpec {
    kinds: [Option<BoundaryKind>; 6],
}

impl BoundarySpec {
    pub fn new(kinds: [Option<BoundaryKind>; 6]) -> Self {
        Self { kinds }
    }

    pub fn uniform(kind: BoundaryKind) -> Self {
        Self { kinds: [Some(kind); 6] }
    }

    /// Dirichlet on x̂ ∈ {0, 1}, Neumann elsewhere.
    pub fn dirichlet_x_neumann_yz() -> Self {
        use BoundaryKind::*;
        Self {
            kinds: [
                Some(Dirichlet),
                Some(Dirichlet),
                Some(Neumann),
                Some(Neumann),
                Some(Neumann),
                Some(Neumann),
            ],
        }
    }

    pub fn kind(&self, side: Side) -> Option<BoundaryKind> {
        self.kinds[side.index()]
    }

    pub fn set(&mut self, side: Side, kind: BoundaryKind) {
        self.kinds[side.index()] = Some(kind);
    }

    pub fn validate(&self) -> Result<[BoundaryKind; 6]> {
        let mut out = [BoundaryKind::Dirichlet; 6];
        for side in Side::ALL {
            out[side.index()] = self.kinds[side.index()]
                .ok_or_else(|| Error::Spec(format!("boundary face {} has no condition assigned", side.name())))?;
        }
        Ok(out)
    }

    pub fn has_dirichlet(&self) -> bool {
        self.kinds.contains(&Some(BoundaryKind::Dirichlet))
    }
}

impl fmt::Display for BoundarySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, side) in Side::ALL.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            let k = match self.kinds[side.index()] {
                Some(BoundaryKind::Dirichlet) => "D",
                Some(BoundaryKind::Neumann) => "N",
                None => "?",
            };
            write!(f, "{}={}", side.name(), k)?;
        }
        Ok(())
    }
}

/// A geometric element face, identified in the face numbering of the element grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MeshFace {
    pub axis: usize,
    pub position: [usize; 3],
}

/// The faces `γ_ij` shared by subdomains `i < j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InterfaceGroup {
    pub pair: (usize, usize),
    pub axis: usize,
    pub faces: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct SubdomainPartition {
    pub spec: MeshSpec,
    pub boundary: [BoundaryKind; 6],
    /// Element ids of each subdomain, in subdomain-local lexicographic order.
    pub subdomains: Vec<Vec<usize>>,
    pub interior_faces: Vec<Vec<usize>>,
    pub interfaces: Vec<InterfaceGroup>,
    pub dirichlet_faces: Vec<usize>,
    pub neumann_faces: Vec<usize>,
    pub face_grid: CellGrid,
}

impl SubdomainPartition {
    pub fn n_subdomains(&self) -> usize {
        self.subdomains.len()
    }

    pub fn boundary_kind(&self, side: Side) -> BoundaryKind {
        self.boundary[side.index()]
    }

    pub fn mesh_face(&self, id: usize) -> MeshFace {
        let (axis, position) = self.face_grid.face_position(id);
        MeshFace { axis, position }
    }

    /// Neighbouring subdomain across `side`, or `None` on the outer boundary.
    pub fn neighbor(&self, subdomain: usize, side: Side) -> Option<usize> {
        let mut idx = self.spec.subdomain_index(subdomain);
        let a = side.axis();
        if side.is_high() {
            if idx[a] + 1 == self.spec.subdomains[a] {
                return None;
            }
            idx[a] += 1;
        } else {
            if idx[a] == 0 {
                return None;
            }
            idx[a] -= 1;
        }
        Some(self.spec.subdomain_id(idx))
    }
}

/// Splits the mesh into `K1` subdomains of `K2` elements each and classifies
/// every element face by the kind of constraint it carries.
pub fn build_partition(spec: &MeshSpec, bc: &BoundarySpec) -> Result<SubdomainPartition> {
    spec.validate()?;
    let boundary = bc.validate()?;
    let face_grid = CellGrid::new(spec.elements);
    let n_sub = spec.n_subdomains();

    let mut subdomains = Vec::with_capacity(n_sub);
    for s in 0..n_sub {
        let si = spec.subdomain_index(s);
        let mut elems = Vec::with_capacity(spec.sub_elements.iter().product());
        for k in 0..spec.sub_elements[2] {
            for j in 0..spec.sub_elements[1] {
                for i in 0..spec.sub_elements[0] {
                    elems.push(spec.element_id([
                        si[0] * spec.sub_elements[0] + i,
                        si[1] * spec.sub_elements[1] + j,
                        si[2] * spec.sub_elements[2] + k,
                    ]));
                }
            }
        }
        subdomains.push(elems);
    }

    let mut interior_faces = vec![Vec::new(); n_sub];
    let mut dirichlet_faces = Vec::new();
    let mut neumann_faces = Vec::new();
    let mut groups: std::collections::BTreeMap<(usize, usize, usize), Vec<usize>> = Default::default();

    for f in 0..face_grid.n_faces() {
        let (axis, pos) = face_grid.face_position(f);
        let k = spec.elements[axis];
        let p = pos[axis];
        if p == 0 || p == k {
            let side = Side::from_axis(axis, p == k);
            match boundary[side.index()] {
                BoundaryKind::Dirichlet => dirichlet_faces.push(f),
                BoundaryKind::Neumann => neumann_faces.push(f),
            }
            continue;
        }
        let mut lo = pos;
        lo[axis] = p - 1;
        let hi = pos;
        let (s_lo, s_hi) = (
            spec.subdomain_of_element(spec.element_id(lo)),
            spec.subdomain_of_element(spec.element_id(hi)),
        );
        if s_lo == s_hi {
            interior_faces[s_lo].push(f);
        } else {
            groups
                .entry((s_lo.min(s_hi), s_lo.max(s_hi), axis))
                .or_default()
                .push(f);
        }
    }

    let interfaces = groups
        .into_iter()
        .map(|((i, j, axis), faces)| InterfaceGroup {
            pair: (i, j),
            axis,
            faces,
        })
        .collect();

    Ok(SubdomainPartition {
        spec: spec.clone(),
        boundary,
        subdomains,
        interior_faces,
        interfaces,
        dirichlet_faces,
        neumann_faces,
        face_grid,
    })
}
