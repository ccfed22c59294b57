//! Post-processing of solutions: error norms against exact fields, and
//! field sampling for comparisons and convergence studies.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::assembly::{block_face_mass_triplets, block_geometries, ElementAssembler};
use crate::basis::{eval_face_basis_physical, eval_volume_basis_physical};
use crate::error::{check_len, Error, Result};
use crate::linalg::{DenseCholesky, SymmetricCsc};
use crate::mesh::ElementGeometry;
use crate::solver::{DarcyProblem, DarcySolution, SolutionBlock};
use crate::topology::BlockTopology;

type Scalar = Arc<dyn Fn([f64; 3]) -> f64 + Send + Sync>;
type Vector = Arc<dyn Fn([f64; 3]) -> [f64; 3] + Send + Sync>;

/// Analytic solution used to measure errors.
#[derive(Clone)]
pub struct ExactSolution {
    pub pressure: Scalar,
    pub gradient: Vector,
    pub velocity: Vector,
    /// `div u`, equal to the source.
    pub divergence: Scalar,
}

impl fmt::Debug for ExactSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ExactSolution")
    }
}

/// Error norms of one solve.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorSummary {
    pub case_id: String,
    pub order: usize,
    pub elements: usize,
    /// Reference element size `2 / K`.
    pub h: f64,
    pub l2_div_residual: f64,
    pub hdiv_u_error: f64,
    pub h1_p_error: f64,
}

/// `Ñ¹ = −Eᵀ Ñ⁰(p) + N₂ B̃⁰(p̂)` on one block.
pub fn dual_gradient(block: &BlockTopology, pressure: &[f64], trace: &[f64]) -> Result<Vec<f64>> {
    check_len("block boundary trace", block.n_boundary(), trace.len())?;
    let mut out = block.divergence.apply_transpose(pressure)?;
    for v in out.iter_mut() {
        *v = -*v;
    }
    for (b, dof) in block.boundary.iter().enumerate() {
        out[dof.face] += dof.sign as f64 * trace[b];
    }
    Ok(out)
}

/// Expansion coefficients of the dual gradient in the face basis, `M⁻¹ Ñ¹`
/// with the unweighted face mass matrix of the block.
pub fn gradient_coefficients(
    asm: &ElementAssembler,
    block: &BlockTopology,
    geoms: &[ElementGeometry],
    dual: &[f64],
) -> Result<Vec<f64>> {
    check_len("dual gradient", block.n_faces(), dual.len())?;
    let triplets = block_face_mass_triplets(asm, block, geoms, None)?;
    let mass = SymmetricCsc::from_triplets(block.n_faces(), &triplets);
    Ok(mass.cholesky("unweighted face mass matrix")?.solve(dual))
}

/// Element-local coefficient vectors of one block.
struct ElementFields {
    flux: Vec<f64>,
    /// Primal pressure coefficients `M₃⁻¹ Ñ⁰(p)`.
    pressure: Vec<f64>,
    gradient: Vec<f64>,
    /// `E u − N³(f)` on the element cells.
    div_residual: Vec<f64>,
    /// `E u` on the element cells.
    divergence: Vec<f64>,
}

struct BlockEvaluator<'a> {
    block: &'a BlockTopology,
    sol: &'a SolutionBlock,
    geoms: Vec<ElementGeometry>,
    gradient: Option<Vec<f64>>,
    div: Vec<f64>,
}

impl<'a> BlockEvaluator<'a> {
    fn new(
        asm: &ElementAssembler,
        problem: &DarcyProblem,
        block: &'a BlockTopology,
        sol: &'a SolutionBlock,
        with_gradient: bool,
    ) -> Result<Self> {
        let geoms = block_geometries(&problem.spec, &sol.elements);
        let gradient = if with_gradient {
            let dual = dual_gradient(block, &sol.pressure, &sol.trace)?;
            Some(gradient_coefficients(asm, block, &geoms, &dual)?)
        } else {
            None
        };
        let div = block.divergence.apply(&sol.flux)?;
        Ok(Self {
            block,
            sol,
            geoms,
            gradient,
            div,
        })
    }

    fn element(&self, asm: &ElementAssembler, i: usize) -> Result<ElementFields> {
        let off = self.block.element_offset(i);
        let faces = self.block.element_face_map(off);
        let cells = self.block.element_cell_map(off);
        let m3 = asm.volume_mass(&self.geoms[i])?;
        let p_dual: Vec<f64> = cells.iter().map(|&c| self.sol.pressure[c]).collect();
        let pressure = DenseCholesky::factor(&m3, "element volume mass matrix")?.solve(&p_dual);
        Ok(ElementFields {
            flux: faces.iter().map(|&f| self.sol.flux[f]).collect(),
            pressure,
            gradient: match &self.gradient {
                Some(g) => faces.iter().map(|&f| g[f]).collect(),
                None => Vec::new(),
            },
            div_residual: cells.iter().map(|&c| self.div[c] - self.sol.source[c]).collect(),
            divergence: cells.iter().map(|&c| self.div[c]).collect(),
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn combine(basis: &[[f64; 3]], coef: &[f64]) -> [f64; 3] {
    let mut v = [0.0; 3];
    for (phi, c) in basis.iter().zip(coef) {
        for a in 0..3 {
            v[a] += phi[a] * c;
        }
    }
    v
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum()
}

/// Squared error contributions of one block:
/// `[‖Ψ³(Eu − f̂)‖², ‖u − u_ex‖², ‖div u − f_ex‖², ‖p − p_ex‖², ‖grad − ∇p_ex‖²]`.
fn block_error_terms(
    asm: &ElementAssembler,
    quad: &ElementAssembler,
    problem: &DarcyProblem,
    block: &BlockTopology,
    sol: &SolutionBlock,
    exact: &ExactSolution,
) -> Result<[f64; 5]> {
    let eval = BlockEvaluator::new(asm, problem, block, sol, true)?;
    let basis = &quad.basis;
    let mut acc = [0.0; 5];
    for i in 0..sol.elements.len() {
        let fields = eval.element(asm, i)?;
        let geom = &eval.geoms[i];
        for (&xi, &w) in quad.quadrature_points().iter().zip(quad.quadrature_weights()) {
            let jac = geom.jacobian(xi)?;
            let x = geom.map(xi);
            let dw = w * jac.det;
            let vol = eval_volume_basis_physical(basis, xi, &jac);
            let face = eval_face_basis_physical(basis, xi, &jac);
            let u = combine(&face, &fields.flux);
            let g = combine(&face, &fields.gradient);
            acc[0] += dw * dot(&vol, &fields.div_residual).powi(2);
            acc[1] += dw * dist2(u, (exact.velocity)(x));
            acc[2] += dw * (dot(&vol, &fields.divergence) - (exact.divergence)(x)).powi(2);
            acc[3] += dw * (dot(&vol, &fields.pressure) - (exact.pressure)(x)).powi(2);
            acc[4] += dw * dist2(g, (exact.gradient)(x));
        }
    }
    Ok(acc)
}

fn assemblers(problem: &DarcyProblem) -> Result<(ElementAssembler, ElementAssembler)> {
    let n = problem.spec.order;
    Ok((
        problem_assembler(problem)?,
        ElementAssembler::new(n, problem.quadrature.error_points(n))?,
    ))
}

fn problem_assembler(problem: &DarcyProblem) -> Result<ElementAssembler> {
    ElementAssembler::with_settings(problem.spec.order, &problem.quadrature)
}

fn summed_terms(problem: &DarcyProblem, sol: &DarcySolution, exact: &ExactSolution) -> Result<[f64; 5]> {
    let (asm, quad) = assemblers(problem)?;
    let parts: Vec<[f64; 5]> = sol
        .blocks
        .par_iter()
        .map(|b| block_error_terms(&asm, &quad, problem, &sol.block, b, exact))
        .collect::<Result<_>>()?;
    let mut total = [0.0; 5];
    for p in parts {
        for k in 0..5 {
            total[k] += p[k];
        }
    }
    Ok(total)
}

/// All error norms of a solution against an exact solution.
pub fn compute_errors(problem: &DarcyProblem, sol: &DarcySolution, exact: &ExactSolution) -> Result<ErrorSummary> {
    let t = summed_terms(problem, sol, exact)?;
    let k = problem.spec.elements[0];
    Ok(ErrorSummary {
        case_id: problem.case_id.clone(),
        order: problem.spec.order,
        elements: k,
        h: 2.0 / k as f64,
        l2_div_residual: t[0].sqrt(),
        hdiv_u_error: (t[1] + t[2]).sqrt(),
        h1_p_error: (t[3] + t[4]).sqrt(),
    })
}

/// `‖u − u_ex‖²_{L²} + ‖div u − f_ex‖²_{L²}`, square-rooted.
pub fn hdiv_error(problem: &DarcyProblem, sol: &DarcySolution, exact: &ExactSolution) -> Result<f64> {
    Ok(compute_errors(problem, sol, exact)?.hdiv_u_error)
}

/// `‖p − p_ex‖²_{L²} + ‖grad(p, p̂) − ∇p_ex‖²_{L²}` over all blocks, square-rooted.
pub fn h1_error(problem: &DarcyProblem, sol: &DarcySolution, exact: &ExactSolution) -> Result<f64> {
    Ok(compute_errors(problem, sol, exact)?.h1_p_error)
}

/// `‖Ψ³(E N²(u) − N³(f))‖_{L²}`.
pub fn l2_div_residual(problem: &DarcyProblem, sol: &DarcySolution) -> Result<f64> {
    let (asm, quad) = assemblers(problem)?;
    let mut total = 0.0;
    for b in &sol.blocks {
        let eval = BlockEvaluator::new(&asm, problem, &sol.block, b, false)?;
        for i in 0..b.elements.len() {
            let fields = eval.element(&asm, i)?;
            let m3 = quad.volume_mass(&eval.geoms[i])?;
            let r = &fields.div_residual;
            for a in 0..r.len() {
                for c in 0..r.len() {
                    total += r[a] * m3[(a, c)] * r[c];
                }
            }
        }
    }
    Ok(total.max(0.0).sqrt())
}

/// One sampled point of the reconstructed fields.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub x: [f64; 3],
    pub p: f64,
    pub u: [f64; 3],
}

pub const SAMPLE_CSV_HEADER: &str = "x,y,z,p,ux,uy,uz";

/// Samples pressure and velocity at the centres of a uniform `res³` lattice
/// in every element, ordered by global element id and then lattice position
/// (x fastest). The output does not depend on the partition.
pub fn sample_fields(problem: &DarcyProblem, sol: &DarcySolution, res: usize) -> Result<Vec<Sample>> {
    if res == 0 {
        return Err(Error::Config("sample resolution must be positive".into()));
    }
    let asm = problem_assembler(problem)?;
    let n_el = problem.spec.n_elements();
    let mut location = vec![(usize::MAX, 0usize); n_el];
    for (bi, b) in sol.blocks.iter().enumerate() {
        for (i, &e) in b.elements.iter().enumerate() {
            location[e] = (bi, i);
        }
    }
    if let Some(e) = location.iter().position(|l| l.0 == usize::MAX) {
        return Err(Error::Topology(format!("element {e} is not covered by the solution")));
    }
    let evals: Vec<BlockEvaluator> = sol
        .blocks
        .iter()
        .map(|b| BlockEvaluator::new(&asm, problem, &sol.block, b, false))
        .collect::<Result<_>>()?;
    let lattice: Vec<[f64; 3]> = (0..res * res * res)
        .map(|k| {
            let c = |i: usize| -1.0 + (2.0 * i as f64 + 1.0) / res as f64;
            [c(k % res), c((k / res) % res), c(k / (res * res))]
        })
        .collect();
    let per_element: Vec<Vec<Sample>> = (0..n_el)
        .into_par_iter()
        .map(|e| {
            let (bi, i) = location[e];
            let ev = &evals[bi];
            let fields = ev.element(&asm, i)?;
            let geom = &ev.geoms[i];
            lattice
                .iter()
                .map(|&xi| {
                    let jac = geom.jacobian(xi)?;
                    let vol = eval_volume_basis_physical(&asm.basis, xi, &jac);
                    let face = eval_face_basis_physical(&asm.basis, xi, &jac);
                    Ok(Sample {
                        x: geom.map(xi),
                        p: dot(&vol, &fields.pressure),
                        u: combine(&face, &fields.flux),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_element.into_iter().flatten().collect())
}

/// Writes samples as CSV rows after the header.
pub fn write_samples_csv<W: Write>(mut w: W, samples: &[Sample]) -> Result<()> {
    writeln!(w, "{SAMPLE_CSV_HEADER}")?;
    for s in samples {
        writeln!(
            w,
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            s.x[0], s.x[1], s.x[2], s.p, s.u[0], s.u[1], s.u[2]
        )?;
    }
    Ok(())
}

/// Largest absolute difference between two sample sets.
pub fn max_sample_difference(a: &[Sample], b: &[Sample]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::Comparison(format!(
            "sample sets differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let mut dp: f64 = 0.0;
    let mut du: f64 = 0.0;
    for (s, t) in a.iter().zip(b) {
        if dist2(s.x, t.x) > 1e-20 {
            return Err(Error::Comparison("sample points do not coincide".into()));
        }
        dp = dp.max((s.p - t.p).abs());
        for k in 0..3 {
            du = du.max((s.u[k] - t.u[k]).abs());
        }
    }
    Ok((dp, du))
}

/// Observed convergence rates of an error series.
#[derive(Clone, Debug, PartialEq)]
pub struct Rates {
    /// Slope between consecutive refinements.
    pub pairwise: Vec<f64>,
    /// Least-squares slope of `log e` against `log h`.
    pub least_squares: f64,
}

/// Log-log slopes of `(h, error)` pairs.
pub fn convergence_rates(series: &[(f64, f64)]) -> Result<Rates> {
    if series.len() < 2 {
        return Err(Error::UndefinedRate("at least two refinements are needed".into()));
    }
    if let Some(&(h, e)) = series.iter().find(|&&(h, e)| !(h > 0.0 && e > 0.0)) {
        return Err(Error::UndefinedRate(format!(
            "nonpositive value in (h, error) = ({h:e}, {e:e})"
        )));
    }
    let logs: Vec<(f64, f64)> = series.iter().map(|&(h, e)| (h.ln(), e.ln())).collect();
    let pairwise = logs
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
        .collect::<Vec<_>>();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|l| l.0).sum::<f64>() / n;
    let my = logs.iter().map(|l| l.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|l| (l.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|l| (l.0 - mx) * (l.1 - my)).sum();
    let least_squares = sxy / sxx;
    if !least_squares.is_finite() || pairwise.iter().any(|r| !r.is_finite()) {
        return Err(Error::UndefinedRate("repeated mesh size in the series".into()));
    }
    Ok(Rates {
        pairwise,
        least_squares,
    })
}

#[cfg(test)]
mod tests;
