use std::sync::Arc;
use std::time::Instant;

use faer::Mat;
use rayon::prelude::*;

use super::{block_boundary_data, DarcyProblem, DarcySolution, Formulation, SolutionBlock, SolveReport, SolverOptions};
use crate::assembly::{
    assemble_block_face_mass, assemble_block_rhs_volume, block_geometries, for_each_boundary_element_face,
    ElementAssembler, PermeabilityEvaluator, ScalarField,
};
use crate::error::{check_len, Error, Result};
use crate::linalg::{condition_estimate, DenseCholesky, SparseCholesky, SparseSpd, SymmetricCsc};
use crate::mesh::{build_partition, BoundaryKind, ElementGeometry, Side, SubdomainPartition};
use crate::topology::{build_trace_connectivity, BlockTopology, LambdaKind, TraceConnectivity, TraceSlot};

/// Subdomains processed together; results are scattered in subdomain order
/// after each chunk, so the outcome does not depend on the thread count.
const SUBDOMAIN_CHUNK: usize = 32;

/// Relative residual the multiplier solve must reach.
pub const LAMBDA_RTOL: f64 = 1e-10;

/// Factorizations of one subdomain: `M = L Lᵀ` and `S = E M⁻¹ Eᵀ = L_S L_Sᵀ`.
#[derive(Debug)]
pub struct LocalFactors {
    pub mass: DenseCholesky,
    pub schur: DenseCholesky,
}

/// Condensed operators of one subdomain.
///
/// With `b` the trace coefficients on the subdomain boundary, the outward
/// boundary fluxes are `N₂ᵀ u = g_f − Λ b`. Here `Λ = N₂ᵀ A N₂` with
/// `A = M⁻¹ − M⁻¹Eᵀ S⁻¹ E M⁻¹`, and `g_f = N₂ᵀ M⁻¹Eᵀ S⁻¹ N³(f)`.
#[derive(Debug)]
pub struct LocalOperatorSet {
    pub subdomain: usize,
    pub elements: Vec<usize>,
    pub factors: Option<LocalFactors>,
    /// Dense `A`, present only when materialized.
    pub a_matrix: Option<Mat<f64>>,
    /// `Λ`, boundary DOF by boundary DOF.
    pub lambda_block: Mat<f64>,
    pub g_f: Vec<f64>,
    /// Dirichlet trace coefficients (zero on multiplier slots).
    pub p_hat_b: Vec<f64>,
    /// Neumann fluxes (zero elsewhere).
    pub u_hat_b: Vec<f64>,
    /// `N³(f)` in block cell order.
    pub source: Vec<f64>,
}

/// Right-hand side contribution of one subdomain to the multiplier system,
/// one entry per block boundary DOF.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalRhs {
    pub values: Vec<f64>,
}

impl LocalOperatorSet {
    /// `A x`, through the stored matrix or through the factors.
    pub fn apply_a(&self, block: &BlockTopology, x: &[f64]) -> Result<Vec<f64>> {
        check_len("local flux vector", block.n_faces(), x.len())?;
        if let Some(a) = &self.a_matrix {
            return Ok((0..a.nrows())
                .map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum())
                .collect());
        }
        let f = self
            .factors
            .as_ref()
            .ok_or_else(|| Error::Solver(format!("subdomain {}: local factors were released", self.subdomain)))?;
        let y = f.mass.solve(x);
        let t = f.schur.solve(&block.divergence.apply(&y)?);
        let w = f.mass.solve(&block.divergence.apply_transpose(&t)?);
        Ok(y.iter().zip(&w).map(|(a, b)| a - b).collect())
    }

    /// `g_f − Λ p̂_b − û_b`, the data-dependent part of the outward flux balance.
    pub fn rhs(&self) -> LocalRhs {
        let n = self.g_f.len();
        let values = (0..n)
            .map(|i| {
                let lp: f64 = (0..n).map(|j| self.lambda_block[(i, j)] * self.p_hat_b[j]).sum();
                self.g_f[i] - lp - self.u_hat_b[i]
            })
            .collect();
        LocalRhs { values }
    }
}

fn subdomain_geometries(problem: &DarcyProblem, partition: &SubdomainPartition, s: usize) -> Vec<ElementGeometry> {
    block_geometries(&problem.spec, &partition.subdomains[s])
}

fn divergence_transpose_dense(block: &BlockTopology) -> Mat<f64> {
    let mut et = Mat::zeros(block.n_faces(), block.n_cells());
    for &(r, c, s) in &block.divergence.entries {
        et[(c, r)] = s as f64;
    }
    et
}

fn symmetrize(m: &mut Mat<f64>) {
    for i in 0..m.nrows() {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// `S = E Z` for a dense `Z` with one row per face.
fn left_divergence(block: &BlockTopology, z: &Mat<f64>) -> Mat<f64> {
    let mut out = Mat::zeros(block.n_cells(), z.ncols());
    for &(r, c, s) in &block.divergence.entries {
        let s = s as f64;
        for j in 0..z.ncols() {
            out[(r, j)] += s * z[(c, j)];
        }
    }
    out
}

/// Factorizes the local mass matrix and the local pressure Schur complement,
/// returning also `Z = M⁻¹ Eᵀ`.
fn factor_local(
    asm: &ElementAssembler,
    perm: &PermeabilityEvaluator,
    block: &BlockTopology,
    geoms: &[ElementGeometry],
    subdomain: usize,
) -> Result<(LocalFactors, Mat<f64>)> {
    let m = assemble_block_face_mass(asm, block, geoms, Some(perm))?;
    let mass = DenseCholesky::factor(&m, &format!("subdomain {subdomain} flux mass matrix"))?;
    drop(m);
    let z = mass.solve_mat(&divergence_transpose_dense(block));
    let mut s = left_divergence(block, &z);
    symmetrize(&mut s);
    let schur = DenseCholesky::factor(&s, &format!("subdomain {subdomain} pressure Schur complement"))?;
    Ok((LocalFactors { mass, schur }, z))
}

/// Builds the condensed operators of subdomain `s`. Factors are kept only
/// when `keep_factors` is set.
pub fn build_local_operators(
    problem: &DarcyProblem,
    partition: &SubdomainPartition,
    conn: &TraceConnectivity,
    s: usize,
    keep_factors: bool,
    materialize: bool,
) -> Result<LocalOperatorSet> {
    let asm = problem.assembler()?;
    let perm = problem.evaluator();
    let block = &conn.block;
    let geoms = subdomain_geometries(problem, partition, s);
    let (factors, z) = factor_local(&asm, &perm, block, &geoms, s)?;

    let nb = block.n_boundary();
    let nf = block.n_faces();
    let mut n2 = Mat::<f64>::zeros(nf, nb);
    for (b, dof) in block.boundary.iter().enumerate() {
        n2[(dof.face, b)] = dof.sign as f64;
    }
    let y = factors.mass.solve_mat(&n2);
    // W = N₂ᵀ Z, one row per boundary DOF
    let w = Mat::from_fn(nb, block.n_cells(), |b, j| {
        let dof = &block.boundary[b];
        dof.sign as f64 * z[(dof.face, j)]
    });
    let sinv_wt = factors.schur.solve_mat(&w.transpose().to_owned());
    let w_sinv_wt = &w * &sinv_wt;
    let mut lambda_block = Mat::from_fn(nb, nb, |a, b| {
        let dof = &block.boundary[a];
        dof.sign as f64 * y[(dof.face, b)] - w_sinv_wt[(a, b)]
    });
    symmetrize(&mut lambda_block);

    let source = assemble_block_rhs_volume(&asm, block, &geoms, &problem.source)?;
    let sinv_f = factors.schur.solve(&source);
    let g_f: Vec<f64> = (0..nb)
        .map(|b| (0..block.n_cells()).map(|j| w[(b, j)] * sinv_f[j]).sum())
        .collect();

    let slots = &conn.slots[s];
    let (p_hat_b, u_hat_b) = block_boundary_data(&asm, problem, block, &geoms, |b| match slots[b] {
        TraceSlot::Dirichlet(_) => Some(BoundaryKind::Dirichlet),
        TraceSlot::Lambda(l) if conn.lambda_kind[l] == LambdaKind::Neumann => Some(BoundaryKind::Neumann),
        TraceSlot::Lambda(_) => None,
    })?;

    let a_matrix = if materialize {
        let minv = factors.mass.solve_mat(&Mat::identity(nf, nf));
        let sinv_zt = factors.schur.solve_mat(&z.transpose().to_owned());
        let mut a = minv - &z * &sinv_zt;
        symmetrize(&mut a);
        Some(a)
    } else {
        None
    };

    Ok(LocalOperatorSet {
        subdomain: s,
        elements: partition.subdomains[s].clone(),
        factors: keep_factors.then_some(factors),
        a_matrix,
        lambda_block,
        g_f,
        p_hat_b,
        u_hat_b,
        source,
    })
}

/// The assembled multiplier system `Σ Λ_λλ λ = Σ r_λ`.
#[derive(Clone, Debug)]
pub struct LambdaSystem {
    pub matrix: SymmetricCsc,
    pub rhs: Vec<f64>,
}

impl LambdaSystem {
    /// Empty system with the sparsity pattern implied by the connectivity:
    /// two multipliers couple when some subdomain carries both.
    pub fn with_pattern(conn: &TraceConnectivity) -> Self {
        let n = conn.n_lambda();
        let per_sub: Vec<Vec<usize>> = conn
            .slots
            .iter()
            .map(|slots| {
                let mut ls: Vec<usize> = slots
                    .iter()
                    .filter_map(|s| match s {
                        TraceSlot::Lambda(l) => Some(*l),
                        TraceSlot::Dirichlet(_) => None,
                    })
                    .collect();
                ls.sort_unstable();
                ls
            })
            .collect();
        let columns: Vec<Vec<usize>> = (0..n)
            .map(|c| {
                let mut rows: Vec<usize> = conn.lambda_owners[c]
                    .iter()
                    .flat_map(|&(s, _)| {
                        let ls = &per_sub[s];
                        let start = ls.partition_point(|&l| l < c);
                        ls[start..].iter().copied()
                    })
                    .collect();
                rows.sort_unstable();
                rows.dedup();
                rows
            })
            .collect();
        Self {
            matrix: SymmetricCsc::from_pattern(n, columns),
            rhs: vec![0.0; n],
        }
    }

    /// Adds the contribution of one subdomain.
    pub fn add_local(&mut self, conn: &TraceConnectivity, ops: &LocalOperatorSet) -> Result<()> {
        let slots = &conn.slots[ops.subdomain];
        let rhs = ops.rhs();
        for (b, &sb) in slots.iter().enumerate() {
            let TraceSlot::Lambda(lb) = sb else { continue };
            self.rhs[lb] += rhs.values[b];
            for (a, &sa) in slots.iter().enumerate() {
                let TraceSlot::Lambda(la) = sa else { continue };
                if la < lb {
                    continue;
                }
                let k = self
                    .matrix
                    .position(la, lb)
                    .ok_or_else(|| Error::Topology(format!("multiplier pair ({la}, {lb}) missing from the pattern")))?;
                self.matrix.values[k] += ops.lambda_block[(a, b)];
            }
        }
        Ok(())
    }
}

/// Assembles the multiplier system from a full set of local operators,
/// accumulating in subdomain order.
pub fn assemble_lambda_system(conn: &TraceConnectivity, locals: &[LocalOperatorSet]) -> Result<LambdaSystem> {
    let mut sys = LambdaSystem::with_pattern(conn);
    for ops in locals {
        sys.add_local(conn, ops)?;
    }
    Ok(sys)
}

/// Solves the multiplier system by sparse Cholesky and checks the residual.
/// Returns the multipliers, the factor and the relative residual.
pub fn solve_lambda(sys: &LambdaSystem) -> Result<(Vec<f64>, SparseCholesky, f64)> {
    let factor = sys.matrix.cholesky("multiplier system")?;
    let lambda = factor.solve(&sys.rhs);
    let r = sys.matrix.apply(&lambda);
    let num: f64 = r.iter().zip(&sys.rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let den: f64 = sys.rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rel = if den > 0.0 { num / den } else { num };
    if !(rel <= LAMBDA_RTOL) {
        return Err(Error::Solver(format!(
            "multiplier solve residual {rel:.3e} exceeds {LAMBDA_RTOL:e}"
        )));
    }
    Ok((lambda, factor, rel))
}

/// Recovers the pressure and the flux of one subdomain from the multipliers:
/// `Ñ⁰(p) = S⁻¹(N³(f) + E M⁻¹ N₂ b)`, `N²(u) = M⁻¹(Eᵀ Ñ⁰(p) − N₂ b)`.
pub fn recover_local(
    block: &BlockTopology,
    conn: &TraceConnectivity,
    ops: &LocalOperatorSet,
    lambda: &[f64],
) -> Result<SolutionBlock> {
    check_len("multiplier vector", conn.n_lambda(), lambda.len())?;
    let f = ops
        .factors
        .as_ref()
        .ok_or_else(|| Error::Solver(format!("subdomain {}: local factors were released", ops.subdomain)))?;
    let trace: Vec<f64> = conn.slots[ops.subdomain]
        .iter()
        .enumerate()
        .map(|(b, slot)| match *slot {
            TraceSlot::Lambda(l) => lambda[l],
            TraceSlot::Dirichlet(_) => ops.p_hat_b[b],
        })
        .collect();
    let mut n2b = vec![0.0; block.n_faces()];
    for (b, dof) in block.boundary.iter().enumerate() {
        n2b[dof.face] += dof.sign as f64 * trace[b];
    }
    let y = f.mass.solve(&n2b);
    let ey = block.divergence.apply(&y)?;
    let rhs: Vec<f64> = ops.source.iter().zip(&ey).map(|(a, b)| a + b).collect();
    let pressure = f.schur.solve(&rhs);
    let etp = block.divergence.apply_transpose(&pressure)?;
    let v: Vec<f64> = etp.iter().zip(&n2b).map(|(a, b)| a - b).collect();
    let flux = f.mass.solve(&v);
    Ok(SolutionBlock {
        subdomain: ops.subdomain,
        elements: ops.elements.clone(),
        flux,
        pressure,
        trace,
        source: ops.source.clone(),
    })
}

/// `B̃⁰` coefficients of a scalar field on every multiplier face, taken from
/// the first owning subdomain.
pub fn exact_trace_coefficients(
    problem: &DarcyProblem,
    partition: &SubdomainPartition,
    conn: &TraceConnectivity,
    field: &ScalarField,
) -> Result<Vec<f64>> {
    let asm = problem.assembler()?;
    let block = &conn.block;
    let mut where_b: Vec<(usize, Side, usize)> = vec![(0, Side::ALL[0], 0); block.n_boundary()];
    for_each_boundary_element_face(block, |ei, side, dofs| {
        for (k, &b) in dofs.iter().enumerate() {
            where_b[b] = (ei, side, k);
        }
        Ok(())
    })?;
    let mut out = vec![0.0; conn.n_lambda()];
    for (l, owners) in conn.lambda_owners.iter().enumerate() {
        let (s, b) = owners[0];
        let (ei, side, k) = where_b[b];
        let geom = problem.spec.geometry(partition.subdomains[s][ei]);
        out[l] = asm.rhs_dirichlet(field, &geom, side)?[k];
    }
    Ok(out)
}

/// Hybrid solve: local condensation, multiplier solve, local recovery.
pub fn solve_dd(problem: &DarcyProblem, options: &SolverOptions) -> Result<DarcySolution> {
    problem.check_well_posed()?;
    let t0 = Instant::now();
    let spec = &problem.spec;
    let partition = build_partition(spec, &problem.bc)?;
    let conn = Arc::new(build_trace_connectivity(&partition)?);
    let block = Arc::new(conn.block.clone());
    let n_sub = conn.n_subdomains();
    let nf = block.n_faces() as u64;
    let nc = block.n_cells() as u64;

    let local_entries = n_sub as u64 * (nf * nf + nc * nc);
    let cache = options
        .cache_local_factors
        .unwrap_or(local_entries <= options.mem_budget / 4);
    let chunk_working = SUBDOMAIN_CHUNK.min(n_sub) as u64 * (2 * nf * nf + 2 * nf * nc + nc * nc);
    log::debug!("{n_sub} subdomains, caching local factors: {cache}");

    let mut sys = LambdaSystem::with_pattern(&conn);
    let factor_entries = sys.matrix.factor_entries()?;
    let mut required = sys.matrix.nnz() as u64 + factor_entries + chunk_working;
    if cache {
        required += local_entries;
    }
    if required > options.mem_budget {
        return Err(Error::OutOfMemory {
            what: "multiplier system",
            required,
            budget: options.mem_budget,
        });
    }

    let ids: Vec<usize> = (0..n_sub).collect();
    let mut locals: Vec<LocalOperatorSet> = Vec::with_capacity(n_sub);
    for chunk in ids.chunks(SUBDOMAIN_CHUNK) {
        let built: Vec<LocalOperatorSet> = chunk
            .par_iter()
            .map(|&s| build_local_operators(problem, &partition, &conn, s, cache, options.materialize_local))
            .collect::<Result<_>>()?;
        for mut ops in built {
            sys.add_local(&conn, &ops)?;
            // Λ is no longer needed once scattered
            ops.lambda_block = Mat::zeros(0, 0);
            locals.push(ops);
        }
    }
    let setup_s = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let (lambda, factor, residual) = if conn.n_lambda() == 0 {
        (Vec::new(), None, 0.0)
    } else {
        let (l, f, r) = solve_lambda(&sys)?;
        (l, Some(f), r)
    };
    let lambda_s = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let mut blocks = Vec::with_capacity(n_sub);
    for chunk in locals.chunks_mut(SUBDOMAIN_CHUNK) {
        let recovered: Vec<SolutionBlock> = chunk
            .par_iter_mut()
            .map(|ops| {
                if ops.factors.is_none() {
                    let asm = problem.assembler()?;
                    let geoms = subdomain_geometries(problem, &partition, ops.subdomain);
                    let (factors, _) = factor_local(&asm, &problem.evaluator(), &block, &geoms, ops.subdomain)?;
                    let out = recover_local(
                        &block,
                        &conn,
                        &LocalOperatorSet {
                            factors: Some(factors),
                            ..ops.shallow()
                        },
                        &lambda,
                    );
                    return out;
                }
                recover_local(&block, &conn, ops, &lambda)
            })
            .collect::<Result<_>>()?;
        blocks.extend(recovered);
    }
    let recover_s = t2.elapsed().as_secs_f64();
    let total_s = t0.elapsed().as_secs_f64();

    let cond_lambda = match (&factor, options.condition_numbers) {
        (Some(f), true) => Some(condition_estimate(&SparseSpd {
            matrix: &sys.matrix,
            factor: f,
        })?),
        _ => None,
    };
    log::info!(
        "dd solve: {} subdomains, {} multipliers, {:.3}s (multiplier phase {:.3}s)",
        n_sub,
        conn.n_lambda(),
        total_s,
        lambda_s
    );

    let report = SolveReport {
        case_id: problem.case_id.clone(),
        formulation: Formulation::DomainDecomposition,
        order: spec.order,
        elements: spec.elements,
        subdomains: spec.subdomains,
        sub_elements: spec.sub_elements,
        setup_s,
        lambda_s,
        recover_s,
        total_s,
        cond_pressure: None,
        cond_lambda,
        dof_u: n_sub * block.n_faces(),
        dof_p: n_sub * block.n_cells(),
        dof_lambda: conn.n_lambda(),
        stored_entries: required,
        lambda_residual: Some(residual),
    };
    Ok(DarcySolution {
        formulation: Formulation::DomainDecomposition,
        spec: spec.clone(),
        block,
        global_grid: conn.global_grid.clone(),
        block_offsets: conn.block_offsets.clone(),
        blocks,
        lambda,
        connectivity: Some(conn),
        report,
    })
}

impl LocalOperatorSet {
    /// Copy of the data needed for recovery, without factors or matrices.
    fn shallow(&self) -> LocalOperatorSet {
        LocalOperatorSet {
            subdomain: self.subdomain,
            elements: self.elements.clone(),
            factors: None,
            a_matrix: None,
            lambda_block: Mat::zeros(0, 0),
            g_f: Vec::new(),
            p_hat_b: self.p_hat_b.clone(),
            u_hat_b: Vec::new(),
            source: self.source.clone(),
        }
    }
}

/// Re-expresses a continuous solution on the subdomains of `problem.spec`.
/// The traces on interface and Neumann faces are recovered from the local
/// momentum rows, `sign · b = (Eᵀ Ñ⁰(p) − M N²(u))` on each boundary face, so
/// the result can be compared with, and post-processed like, a hybrid solve.
pub fn restrict_to_subdomains(problem: &DarcyProblem, sol: &DarcySolution) -> Result<DarcySolution> {
    if sol.formulation != Formulation::Continuous {
        return Err(Error::Comparison("only continuous solutions can be restricted".into()));
    }
    if sol.spec.elements != problem.spec.elements || sol.spec.order != problem.spec.order {
        return Err(Error::Comparison(format!(
            "mesh mismatch: solution has {:?} elements of order {}, partition has {:?} of order {}",
            sol.spec.elements, sol.spec.order, problem.spec.elements, problem.spec.order
        )));
    }
    let partition = build_partition(&problem.spec, &problem.bc)?;
    let conn = Arc::new(build_trace_connectivity(&partition)?);
    let block = Arc::new(conn.block.clone());
    let asm = problem.assembler()?;
    let perm = problem.evaluator();
    let whole = &sol.blocks[0];
    let blocks: Vec<SolutionBlock> = (0..conn.n_subdomains())
        .into_par_iter()
        .map(|s| {
            let flux: Vec<f64> = (0..block.n_faces())
                .map(|f| whole.flux[conn.global_face(s, f)])
                .collect();
            let cells: Vec<usize> = (0..block.n_cells()).map(|c| conn.global_cell(s, c)).collect();
            let pressure: Vec<f64> = cells.iter().map(|&c| whole.pressure[c]).collect();
            let source: Vec<f64> = cells.iter().map(|&c| whole.source[c]).collect();
            let geoms = subdomain_geometries(problem, &partition, s);
            let triplets = crate::assembly::block_face_mass_triplets(&asm, &block, &geoms, Some(&perm))?;
            let mu = SymmetricCsc::from_triplets(block.n_faces(), &triplets).apply(&flux);
            let etp = block.divergence.apply_transpose(&pressure)?;
            let (p_hat, _) = block_boundary_data(&asm, problem, &block, &geoms, |b| match conn.slots[s][b] {
                TraceSlot::Dirichlet(_) => Some(BoundaryKind::Dirichlet),
                TraceSlot::Lambda(_) => None,
            })?;
            let trace = block
                .boundary
                .iter()
                .enumerate()
                .map(|(b, dof)| match conn.slots[s][b] {
                    TraceSlot::Dirichlet(_) => p_hat[b],
                    TraceSlot::Lambda(_) => dof.sign as f64 * (etp[dof.face] - mu[dof.face]),
                })
                .collect();
            Ok(SolutionBlock {
                subdomain: s,
                elements: partition.subdomains[s].clone(),
                flux,
                pressure,
                trace,
                source,
            })
        })
        .collect::<Result<_>>()?;
    let lambda = conn
        .lambda_owners
        .iter()
        .map(|owners| {
            let (s, b) = owners[0];
            blocks[s].trace[b]
        })
        .collect();
    Ok(DarcySolution {
        formulation: Formulation::Continuous,
        spec: problem.spec.clone(),
        block,
        global_grid: conn.global_grid.clone(),
        block_offsets: conn.block_offsets.clone(),
        blocks,
        lambda,
        connectivity: Some(conn),
        report: sol.report.clone(),
    })
}
