//! Metric-free integer operators of a structured lattice. The same matrices
//! serve every subdomain, and a trace connectivity ties the subdomains together.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::mesh::{BoundaryKind, MeshSpec, Side, SubdomainPartition};

/// The two tangential axes of a face with normal `axis`, lower axis first.
pub fn tangential_axes(axis: usize) -> (usize, usize) {
    match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

/// Numbering of cells and faces of an `nx × ny × nz` lattice.
///
/// Cells are lexicographic with x fastest. Faces are grouped by normal
/// direction (x, then y, then z). Within a group the normal index varies
/// slowest and the two tangential indices are lexicographic with the lower
/// axis fastest, so `x`-face `(i, j, k)` has id `j + ny (k + nz i)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellGrid {
    pub dims: [usize; 3],
    offsets: [usize; 4],
}

impl CellGrid {
    pub fn new(dims: [usize; 3]) -> Self {
        let mut offsets = [0; 4];
        for d in 0..3 {
            let mut shape = dims;
            shape[d] += 1;
            offsets[d + 1] = offsets[d] + shape.iter().product::<usize>();
        }
        Self { dims, offsets }
    }

    pub fn n_cells(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn n_faces(&self) -> usize {
        self.offsets[3]
    }

    pub fn face_offset(&self, axis: usize) -> usize {
        self.offsets[axis]
    }

    pub fn n_faces_axis(&self, axis: usize) -> usize {
        self.offsets[axis + 1] - self.offsets[axis]
    }

    pub fn cell_id(&self, pos: [usize; 3]) -> usize {
        pos[0] + self.dims[0] * (pos[1] + self.dims[1] * pos[2])
    }

    pub fn cell_position(&self, id: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [id % nx, (id / nx) % ny, id / (nx * ny)]
    }

    pub fn face_id(&self, axis: usize, pos: [usize; 3]) -> usize {
        let (t1, t2) = tangential_axes(axis);
        self.offsets[axis] + pos[t1] + self.dims[t1] * (pos[t2] + self.dims[t2] * pos[axis])
    }

    pub fn face_position(&self, id: usize) -> (usize, [usize; 3]) {
        let axis = (0..3)
            .find(|&d| id < self.offsets[d + 1])
            .expect("face id out of range");
        let local = id - self.offsets[axis];
        let (t1, t2) = tangential_axes(axis);
        let mut pos = [0; 3];
        pos[t1] = local % self.dims[t1];
        pos[t2] = (local / self.dims[t1]) % self.dims[t2];
        pos[axis] = local / (self.dims[t1] * self.dims[t2]);
        (axis, pos)
    }

    /// Number of faces on one side of the lattice boundary.
    pub fn side_len(&self, side: Side) -> usize {
        let (t1, t2) = tangential_axes(side.axis());
        self.dims[t1] * self.dims[t2]
    }

    /// Number of boundary faces of the lattice.
    pub fn n_boundary_faces(&self) -> usize {
        Side::ALL.iter().map(|&s| self.side_len(s)).sum()
    }
}

/// Sparse integer matrix with entries in `{-1, +1}`, stored as row-sorted triplets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IncidenceMatrix {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<(usize, usize, i8)>,
}

impl IncidenceMatrix {
    pub fn new(rows: usize, cols: usize, mut entries: Vec<(usize, usize, i8)>) -> Self {
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        Self { rows, cols, entries }
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        crate::error::check_len("incidence apply", self.cols, x.len())?;
        let mut y = vec![0.0; self.rows];
        for &(r, c, s) in &self.entries {
            y[r] += s as f64 * x[c];
        }
        Ok(y)
    }

    /// `y = A^T x`.
    pub fn apply_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        crate::error::check_len("incidence transpose apply", self.rows, x.len())?;
        let mut y = vec![0.0; self.cols];
        for &(r, c, s) in &self.entries {
            y[c] += s as f64 * x[r];
        }
        Ok(y)
    }

    pub fn transpose(&self) -> IncidenceMatrix {
        IncidenceMatrix::new(
            self.cols,
            self.rows,
            self.entries.iter().map(|&(r, c, s)| (c, r, s)).collect(),
        )
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<Vec<i8>> {
        let mut d = vec![vec![0i8; self.cols]; self.rows];
        for &(r, c, s) in &self.entries {
            d[r][c] = s;
        }
        d
    }

    pub fn to_faer(&self) -> faer::Mat<f64> {
        let mut m = faer::Mat::zeros(self.rows, self.cols);
        for &(r, c, s) in &self.entries {
            m[(r, c)] = s as f64;
        }
        m
    }

    /// Writes the matrix in Matrix Market coordinate format (1-based indices).
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate integer general")?;
        writeln!(w, "{} {} {}", self.rows, self.cols, self.nnz())?;
        for &(r, c, s) in &self.entries {
            writeln!(w, "{} {} {}", r + 1, c + 1, s)?;
        }
        Ok(())
    }
}

/// Divergence incidence of a lattice: one row per cell, one column per face,
/// `-1` on the low face and `+1` on the high face along each axis.
pub fn build_divergence(grid: &CellGrid) -> IncidenceMatrix {
    let mut entries = Vec::with_capacity(6 * grid.n_cells());
    for c in 0..grid.n_cells() {
        let pos = grid.cell_position(c);
        for d in 0..3 {
            let mut hi = pos;
            hi[d] += 1;
            entries.push((c, grid.face_id(d, pos), -1));
            entries.push((c, grid.face_id(d, hi), 1));
        }
    }
    IncidenceMatrix::new(grid.n_cells(), grid.n_faces(), entries)
}

/// Divergence incidence of a planar `nx × ny` quadrilateral mesh, with the
/// x-normal edges numbered before the y-normal edges.
pub fn build_divergence_2d(nx: usize, ny: usize) -> IncidenceMatrix {
    let grid = CellGrid::new([nx, ny, 1]);
    let full = build_divergence(&grid);
    let cols = grid.face_offset(2);
    let entries = full.entries.into_iter().filter(|&(_, c, _)| c < cols).collect();
    IncidenceMatrix::new(grid.n_cells(), cols, entries)
}

/// One boundary degree of freedom of a lattice. `sign` is the orientation of
/// the face relative to the outward normal.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryDof {
    pub side: Side,
    pub tangential: [usize; 2],
    pub face: usize,
    pub sign: i8,
}

/// Lists the boundary faces of `grid` side by side (x−, x+, y−, y+, z−, z+),
/// each side ordered with the lower tangential axis fastest.
pub fn boundary_dofs(grid: &CellGrid) -> Vec<BoundaryDof> {
    let mut out = Vec::with_capacity(grid.n_boundary_faces());
    for side in Side::ALL {
        let d = side.axis();
        let (t1, t2) = tangential_axes(d);
        for b in 0..grid.dims[t2] {
            for a in 0..grid.dims[t1] {
                let mut pos = [0; 3];
                pos[d] = if side.is_high() { grid.dims[d] } else { 0 };
                pos[t1] = a;
                pos[t2] = b;
                out.push(BoundaryDof {
                    side,
                    tangential: [a, b],
                    face: grid.face_id(d, pos),
                    sign: if side.is_high() { 1 } else { -1 },
                });
            }
        }
    }
    out
}

/// Inclusion matrix `N₂`: faces × boundary DOFs, one signed entry per column.
pub fn build_inclusion(grid: &CellGrid) -> IncidenceMatrix {
    let dofs = boundary_dofs(grid);
    let entries = dofs.iter().enumerate().map(|(b, d)| (d.face, b, d.sign)).collect();
    IncidenceMatrix::new(grid.n_faces(), dofs.len(), entries)
}

/// Topology shared by every subdomain block (or by the single unbroken block):
/// lattice numbering together with the incidence and element DOF maps.
#[derive(Clone, Debug)]
pub struct BlockTopology {
    pub order: usize,
    /// Elements per axis in the block.
    pub elements: [usize; 3],
    pub grid: CellGrid,
    pub divergence: IncidenceMatrix,
    pub inclusion: IncidenceMatrix,
    pub boundary: Vec<BoundaryDof>,
    element_grid: CellGrid,
}

impl BlockTopology {
    pub fn new(order: usize, elements: [usize; 3]) -> Self {
        let grid = CellGrid::new([elements[0] * order, elements[1] * order, elements[2] * order]);
        Self {
            order,
            elements,
            divergence: build_divergence(&grid),
            inclusion: build_inclusion(&grid),
            boundary: boundary_dofs(&grid),
            element_grid: CellGrid::new([order; 3]),
            grid,
        }
    }

    pub fn n_faces(&self) -> usize {
        self.grid.n_faces()
    }

    pub fn n_cells(&self) -> usize {
        self.grid.n_cells()
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary.len()
    }

    /// Local element lattice numbering (`N × N × N` cells).
    pub fn element_grid(&self) -> &CellGrid {
        &self.element_grid
    }

    /// Block face id of every element-local face DOF of the element at
    /// element offset `offset` inside the block.
    pub fn element_face_map(&self, offset: [usize; 3]) -> Vec<usize> {
        let n = self.order;
        (0..self.element_grid.n_faces())
            .map(|f| {
                let (d, p) = self.element_grid.face_position(f);
                self.grid
                    .face_id(d, [p[0] + offset[0] * n, p[1] + offset[1] * n, p[2] + offset[2] * n])
            })
            .collect()
    }

    /// Block cell id of every element-local cell.
    pub fn element_cell_map(&self, offset: [usize; 3]) -> Vec<usize> {
        let n = self.order;
        (0..self.element_grid.n_cells())
            .map(|c| {
                let p = self.element_grid.cell_position(c);
                self.grid
                    .cell_id([p[0] + offset[0] * n, p[1] + offset[1] * n, p[2] + offset[2] * n])
            })
            .collect()
    }

    /// Element offset (in element units) of the `i`-th element of the block,
    /// lexicographic with x fastest.
    pub fn element_offset(&self, i: usize) -> [usize; 3] {
        let [ex, ey, _] = self.elements;
        [i % ex, (i / ex) % ey, i / (ex * ey)]
    }

    pub fn n_elements(&self) -> usize {
        self.elements.iter().product()
    }
}

/// Where a subdomain boundary DOF is connected globally.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceSlot {
    /// Unknown multiplier on an interface or Neumann face.
    Lambda(usize),
    /// Known pressure on a Dirichlet face.
    Dirichlet(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LambdaKind {
    Interface,
    Neumann,
}

/// Global trace numbering for a partitioned mesh.
#[derive(Clone, Debug)]
pub struct TraceConnectivity {
    pub block: BlockTopology,
    /// Global lattice over the whole mesh (`K N` cells per axis).
    pub global_grid: CellGrid,
    /// Per subdomain, one slot per block boundary DOF.
    pub slots: Vec<Vec<TraceSlot>>,
    pub lambda_kind: Vec<LambdaKind>,
    /// Global lattice face of each multiplier DOF.
    pub lambda_face: Vec<usize>,
    /// `(subdomain, local boundary DOF)` owners of each multiplier DOF.
    pub lambda_owners: Vec<Vec<(usize, usize)>>,
    pub dirichlet_face: Vec<usize>,
    pub dirichlet_owner: Vec<(usize, usize)>,
    /// Lattice offset of each subdomain block inside the global lattice.
    pub block_offsets: Vec<[usize; 3]>,
}

impl TraceConnectivity {
    pub fn n_lambda(&self) -> usize {
        self.lambda_kind.len()
    }

    pub fn n_dirichlet(&self) -> usize {
        self.dirichlet_face.len()
    }

    pub fn n_subdomains(&self) -> usize {
        self.slots.len()
    }

    /// Global lattice face of a subdomain-local block face.
    pub fn global_face(&self, subdomain: usize, local_face: usize) -> usize {
        let (d, p) = self.block.grid.face_position(local_face);
        let o = self.block_offsets[subdomain];
        self.global_grid.face_id(d, [p[0] + o[0], p[1] + o[1], p[2] + o[2]])
    }

    /// Global lattice cell of a subdomain-local block cell.
    pub fn global_cell(&self, subdomain: usize, local_cell: usize) -> usize {
        let p = self.block.grid.cell_position(local_cell);
        let o = self.block_offsets[subdomain];
        self.global_grid.cell_id([p[0] + o[0], p[1] + o[1], p[2] + o[2]])
    }

    /// Assembled constraint operator: one row per multiplier, one column per
    /// subdomain boundary DOF (subdomains concatenated), all entries `+1`.
    /// The inclusion blocks carry the outward sign, so each interface row
    /// reads "outflow of one side plus outflow of the other".
    pub fn constraint_matrix(&self) -> IncidenceMatrix {
        let nb = self.block.n_boundary();
        let mut entries = Vec::new();
        for (l, owners) in self.lambda_owners.iter().enumerate() {
            for &(s, b) in owners {
                entries.push((l, s * nb + b, 1));
            }
        }
        IncidenceMatrix::new(self.n_lambda(), nb * self.n_subdomains(), entries)
    }
}

/// Numbers the multiplier DOFs (interfaces and Neumann faces) and the Dirichlet
/// trace DOFs of a partition, in order of first appearance when walking the
/// subdomains in id order and their boundary DOFs in block order.
pub fn build_trace_connectivity(partition: &SubdomainPartition) -> Result<TraceConnectivity> {
    let spec: &MeshSpec = &partition.spec;
    let n = spec.order;
    let block = BlockTopology::new(n, spec.sub_elements);
    let global_dims = [spec.elements[0] * n, spec.elements[1] * n, spec.elements[2] * n];
    let global_grid = CellGrid::new(global_dims);
    let n_sub = spec.n_subdomains();

    let mut slots = Vec::with_capacity(n_sub);
    let mut lambda_kind = Vec::new();
    let mut lambda_face = Vec::new();
    let mut lambda_owners: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut dirichlet_face = Vec::new();
    let mut dirichlet_owner = Vec::new();
    let mut lambda_of_face: HashMap<usize, usize> = HashMap::new();
    let mut block_offsets = Vec::with_capacity(n_sub);

    for s in 0..n_sub {
        let si = spec.subdomain_index(s);
        let off = [
            si[0] * block.grid.dims[0],
            si[1] * block.grid.dims[1],
            si[2] * block.grid.dims[2],
        ];
        block_offsets.push(off);
        let mut sub_slots = Vec::with_capacity(block.n_boundary());
        for (b, dof) in block.boundary.iter().enumerate() {
            let d = dof.side.axis();
            let (t1, t2) = tangential_axes(d);
            let mut pos = [0; 3];
            pos[d] = off[d] + if dof.side.is_high() { block.grid.dims[d] } else { 0 };
            pos[t1] = off[t1] + dof.tangential[0];
            pos[t2] = off[t2] + dof.tangential[1];
            let gface = global_grid.face_id(d, pos);
            let outer = pos[d] == 0 || pos[d] == global_dims[d];
            let kind = if outer {
                match partition.boundary_kind(Side::from_axis(d, pos[d] != 0)) {
                    BoundaryKind::Dirichlet => None,
                    BoundaryKind::Neumann => Some(LambdaKind::Neumann),
                }
            } else {
                Some(LambdaKind::Interface)
            };
            let slot = match kind {
                None => {
                    dirichlet_face.push(gface);
                    dirichlet_owner.push((s, b));
                    TraceSlot::Dirichlet(dirichlet_face.len() - 1)
                }
                Some(k) => {
                    let l = *lambda_of_face.entry(gface).or_insert_with(|| {
                        lambda_kind.push(k);
                        lambda_face.push(gface);
                        lambda_owners.push(Vec::with_capacity(2));
                        lambda_kind.len() - 1
                    });
                    lambda_owners[l].push((s, b));
                    TraceSlot::Lambda(l)
                }
            };
            sub_slots.push(slot);
        }
        slots.push(sub_slots);
    }

    for (l, owners) in lambda_owners.iter().enumerate() {
        let expected = match lambda_kind[l] {
            LambdaKind::Interface => 2,
            LambdaKind::Neumann => 1,
        };
        if owners.len() != expected {
            let (axis, pos) = global_grid.face_position(lambda_face[l]);
            return Err(Error::Topology(format!(
                "face (axis {axis}, position {pos:?}) is claimed by {} subdomains, expected {expected}",
                owners.len()
            )));
        }
    }

    Ok(TraceConnectivity {
        block,
        global_grid,
        slots,
        lambda_kind,
        lambda_face,
        lambda_owners,
        dirichlet_face,
        dirichlet_owner,
        block_offsets,
    })
}
