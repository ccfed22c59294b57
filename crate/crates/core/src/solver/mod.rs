//! Continuous mixed solve and hybrid domain-decomposition solve by static
//! condensation onto the interface multipliers.

mod continuous;
mod dd;

use std::fmt;
use std::sync::Arc;

pub use continuous::solve_continuous;
pub use dd::{
    assemble_lambda_system, build_local_operators, exact_trace_coefficients, recover_local, restrict_to_subdomains,
    solve_dd, solve_lambda, LambdaSystem, LocalFactors, LocalOperatorSet, LocalRhs, LAMBDA_RTOL,
};

use crate::assembly::{
    for_each_boundary_element_face, ElementAssembler, FluxField, Permeability, PermeabilityEvaluator,
    QuadratureSettings, ScalarField,
};
use crate::error::{Error, Result};
use crate::mesh::{BoundaryKind, BoundarySpec, ElementGeometry, MeshSpec};
use crate::topology::{boundary_dofs, BlockTopology, CellGrid, TraceConnectivity};

/// Default cap on stored matrix entries (about 2 GB of `f64`).
pub const DEFAULT_MEM_BUDGET: u64 = 250_000_000;

/// A Darcy problem with its mesh and data fields.
#[derive(Clone)]
pub struct DarcyProblem {
    pub case_id: String,
    pub spec: MeshSpec,
    pub bc: BoundarySpec,
    pub permeability: Arc<dyn Permeability>,
    /// `f` in `div u = f`.
    pub source: ScalarField,
    /// `p̂` on Dirichlet faces.
    pub pressure_bc: ScalarField,
    /// Outward `û = u·n` on Neumann faces.
    pub flux_bc: FluxField,
    pub quadrature: QuadratureSettings,
}

impl fmt::Debug for DarcyProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DarcyProblem")
            .field("case_id", &self.case_id)
            .field("spec", &self.spec)
            .field("bc", &self.bc)
            .field("source", &self.source)
            .field("pressure_bc", &self.pressure_bc)
            .field("flux_bc", &self.flux_bc)
            .finish()
    }
}

impl DarcyProblem {
    pub fn with_spec(&self, spec: MeshSpec) -> Self {
        Self { spec, ..self.clone() }
    }

    pub(crate) fn check_well_posed(&self) -> Result<()> {
        self.spec.validate()?;
        let kinds = self.bc.validate()?;
        if !kinds.contains(&BoundaryKind::Dirichlet) {
            return Err(Error::ConstraintDeficiency(
                "no Dirichlet face: the pressure is only defined up to a constant".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn evaluator(&self) -> PermeabilityEvaluator {
        PermeabilityEvaluator::new(self.permeability.clone())
    }

    pub(crate) fn assembler(&self) -> Result<ElementAssembler> {
        ElementAssembler::with_settings(self.spec.order, &self.quadrature)
    }
}

/// Controls memory accounting and optional work.
#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Cap on stored matrix entries; exceeding it is an out-of-memory error.
    pub mem_budget: u64,
    /// Form each local `A_i` as a dense matrix instead of applying it through factors.
    pub materialize_local: bool,
    pub condition_numbers: bool,
    /// Keep the local factorizations for recovery; `None` decides from the budget.
    pub cache_local_factors: Option<bool>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            mem_budget: DEFAULT_MEM_BUDGET,
            materialize_local: false,
            condition_numbers: false,
            cache_local_factors: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Formulation {
    Continuous,
    DomainDecomposition,
}

impl Formulation {
    pub fn as_str(self) -> &'static str {
        match self {
            Formulation::Continuous => "continuous",
            Formulation::DomainDecomposition => "dd",
        }
    }
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Timings and size statistics of one solve.
///
/// For the continuous formulation the middle phase is the pressure Schur
/// complement solve; for the decomposition it is the multiplier solve.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub case_id: String,
    pub formulation: Formulation,
    pub order: usize,
    pub elements: [usize; 3],
    pub subdomains: [usize; 3],
    pub sub_elements: [usize; 3],
    pub setup_s: f64,
    pub lambda_s: f64,
    pub recover_s: f64,
    pub total_s: f64,
    pub cond_pressure: Option<f64>,
    pub cond_lambda: Option<f64>,
    pub dof_u: usize,
    pub dof_p: usize,
    pub dof_lambda: usize,
    /// Peak stored matrix entries.
    pub stored_entries: u64,
    pub lambda_residual: Option<f64>,
}

pub const REPORT_CSV_HEADER: &str =
    "case,formulation,N,K,K1,K2,setup_s,lambda_s,recover_s,total_s,lambda_frac,cond_pressure,cond_lambda,dof_u,dof_p,dof_lambda,stored_entries";

pub(crate) fn fmt_axes(v: [usize; 3]) -> String {
    format!("{}x{}x{}", v[0], v[1], v[2])
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6e}"))
}

impl SolveReport {
    pub fn lambda_fraction(&self) -> f64 {
        if self.total_s > 0.0 {
            self.lambda_s / self.total_s
        } else {
            0.0
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.4},{},{},{},{},{},{}",
            self.case_id,
            self.formulation,
            self.order,
            fmt_axes(self.elements),
            fmt_axes(self.subdomains),
            fmt_axes(self.sub_elements),
            self.setup_s,
            self.lambda_s,
            self.recover_s,
            self.total_s,
            self.lambda_fraction(),
            fmt_opt(self.cond_pressure),
            fmt_opt(self.cond_lambda),
            self.dof_u,
            self.dof_p,
            self.dof_lambda,
            self.stored_entries
        )
    }
}

/// Solution on one block (a subdomain, or the whole mesh for the continuous solve).
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionBlock {
    pub subdomain: usize,
    /// Global element ids in block order.
    pub elements: Vec<usize>,
    /// Face fluxes `N²(u)`, block face order.
    pub flux: Vec<f64>,
    /// Dual pressure coefficients `Ñ⁰(p)`, block cell order.
    pub pressure: Vec<f64>,
    /// Pressure trace coefficients on the block boundary.
    pub trace: Vec<f64>,
    /// Volume DOFs `N³(f)` of the source.
    pub source: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct DarcySolution {
    pub formulation: Formulation,
    pub spec: MeshSpec,
    pub block: Arc<BlockTopology>,
    pub global_grid: CellGrid,
    pub block_offsets: Vec<[usize; 3]>,
    pub blocks: Vec<SolutionBlock>,
    /// Multiplier values `B̃⁰(λ)` (empty for the continuous solve).
    pub lambda: Vec<f64>,
    pub connectivity: Option<Arc<TraceConnectivity>>,
    pub report: SolveReport,
}

impl DarcySolution {
    fn global_face(&self, s: usize, f: usize) -> usize {
        let (d, p) = self.block.grid.face_position(f);
        let o = self.block_offsets[s];
        self.global_grid.face_id(d, [p[0] + o[0], p[1] + o[1], p[2] + o[2]])
    }

    fn global_cell(&self, s: usize, c: usize) -> usize {
        let p = self.block.grid.cell_position(c);
        let o = self.block_offsets[s];
        self.global_grid.cell_id([p[0] + o[0], p[1] + o[1], p[2] + o[2]])
    }

    /// Flux DOFs in the numbering of the unbroken mesh. Interface faces take
    /// the value of the lowest-numbered subdomain.
    pub fn global_flux(&self) -> Vec<f64> {
        let mut out = vec![f64::NAN; self.global_grid.n_faces()];
        for (s, b) in self.blocks.iter().enumerate() {
            for (f, &v) in b.flux.iter().enumerate() {
                let g = self.global_face(s, f);
                if out[g].is_nan() {
                    out[g] = v;
                }
            }
        }
        out
    }

    /// Dual pressure DOFs in the numbering of the unbroken mesh.
    pub fn global_pressure(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.global_grid.n_cells()];
        for (s, b) in self.blocks.iter().enumerate() {
            for (c, &v) in b.pressure.iter().enumerate() {
                out[self.global_cell(s, c)] = v;
            }
        }
        out
    }

    /// Largest difference between the two flux values stored on an interface face.
    pub fn interface_flux_mismatch(&self) -> f64 {
        let mut first = vec![f64::NAN; self.global_grid.n_faces()];
        let mut worst: f64 = 0.0;
        for (s, b) in self.blocks.iter().enumerate() {
            for (f, &v) in b.flux.iter().enumerate() {
                let g = self.global_face(s, f);
                if first[g].is_nan() {
                    first[g] = v;
                } else {
                    worst = worst.max((first[g] - v).abs());
                }
            }
        }
        worst
    }

    /// `max |E N²(u) − N³(f)|` over all blocks.
    pub fn divergence_residual(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for b in &self.blocks {
            let div = self.block.divergence.apply(&b.flux)?;
            for (d, f) in div.iter().zip(&b.source) {
                worst = worst.max((d - f).abs());
            }
        }
        Ok(worst)
    }

    /// Net outward flux through the outer boundary.
    pub fn boundary_flux_sum(&self) -> f64 {
        let u = self.global_flux();
        boundary_dofs(&self.global_grid)
            .iter()
            .map(|d| d.sign as f64 * u[d.face])
            .sum()
    }

    /// Total volume source `Σ N³(f)`.
    pub fn source_total(&self) -> f64 {
        self.blocks.iter().flat_map(|b| b.source.iter()).sum()
    }
}

/// Dirichlet pressure coefficients and Neumann fluxes on the boundary DOFs of
/// a block, computed only on element faces for which `kind_of` answers.
pub(crate) fn block_boundary_data(
    asm: &ElementAssembler,
    problem: &DarcyProblem,
    block: &BlockTopology,
    geoms: &[ElementGeometry],
    kind_of: impl Fn(usize) -> Option<BoundaryKind>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut p_hat = vec![0.0; block.n_boundary()];
    let mut u_hat = vec![0.0; block.n_boundary()];
    for_each_boundary_element_face(block, |ei, side, dofs| {
        match kind_of(dofs[0]) {
            Some(BoundaryKind::Dirichlet) => {
                let v = asm.rhs_dirichlet(&problem.pressure_bc, &geoms[ei], side)?;
                for (k, &b) in dofs.iter().enumerate() {
                    p_hat[b] = v[k];
                }
            }
            Some(BoundaryKind::Neumann) => {
                let v = asm.rhs_neumann(&problem.flux_bc, &geoms[ei], side)?;
                for (k, &b) in dofs.iter().enumerate() {
                    u_hat[b] = v[k];
                }
            }
            None => {}
        }
        Ok(())
    })?;
    Ok((p_hat, u_hat))
}

/// Solves with the requested formulation. The continuous solve runs on the
/// same elements with the subdomain split removed.
pub fn solve(problem: &DarcyProblem, formulation: Formulation, options: &SolverOptions) -> Result<DarcySolution> {
    match formulation {
        Formulation::Continuous => {
            let s = &problem.spec;
            let spec = MeshSpec::unbroken(s.order, s.elements, s.mapping)?;
            solve_continuous(&problem.with_spec(spec), options)
        }
        Formulation::DomainDecomposition => solve_dd(problem, options),
    }
}

#[cfg(test)]
mod tests;
