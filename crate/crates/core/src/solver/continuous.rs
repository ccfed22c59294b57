use std::sync::Arc;
use std::time::Instant;

use faer::Mat;

use super::{block_boundary_data, DarcyProblem, DarcySolution, Formulation, SolutionBlock, SolveReport, SolverOptions};
use crate::assembly::{assemble_block_rhs_volume, block_face_mass_triplets, block_geometries};
use crate::error::{Error, Result};
use crate::linalg::{condition_estimate, DenseCholesky, DenseSpd, SymmetricCsc};
use crate::topology::BlockTopology;

const SCHUR_CHUNK: usize = 128;

/// Solves the unbroken mixed system by eliminating the flux:
/// `Ñ⁰(p) = (E M⁻¹ Eᵀ)⁻¹ (N³(f) + E M⁻¹ N₂ B̃⁰(p̂))`, then
/// `N²(u) = M⁻¹ (Eᵀ Ñ⁰(p) − N₂ B̃⁰(p̂))`. Neumann fluxes are imposed strongly.
pub fn solve_continuous(problem: &DarcyProblem, options: &SolverOptions) -> Result<DarcySolution> {
    problem.check_well_posed()?;
    let t0 = Instant::now();
    let spec = &problem.spec;
    let asm = problem.assembler()?;
    let perm = problem.evaluator();
    let block = Arc::new(BlockTopology::new(spec.order, spec.elements));
    let elements: Vec<usize> = (0..spec.n_elements()).collect();
    let geoms = block_geometries(spec, &elements);

    let bc = problem.bc.validate()?;
    let (p_hat, u_hat) = block_boundary_data(&asm, problem, &block, &geoms, |b| {
        Some(bc[block.boundary[b].side.index()])
    })?;
    let f = assemble_block_rhs_volume(&asm, &block, &geoms, &problem.source)?;

    let nf = block.n_faces();
    let np = block.n_cells();
    // prescribed Neumann fluxes in face orientation
    let mut u_fixed = vec![0.0; nf];
    let mut is_fixed = vec![false; nf];
    for (b, dof) in block.boundary.iter().enumerate() {
        if bc[dof.side.index()] == crate::mesh::BoundaryKind::Neumann {
            is_fixed[dof.face] = true;
            u_fixed[dof.face] = dof.sign as f64 * u_hat[b];
        }
    }
    let mut free_index = vec![usize::MAX; nf];
    let mut free_faces = Vec::with_capacity(nf);
    for face in 0..nf {
        if !is_fixed[face] {
            free_index[face] = free_faces.len();
            free_faces.push(face);
        }
    }
    let nfree = free_faces.len();

    let triplets = block_face_mass_triplets(&asm, &block, &geoms, Some(&perm))?;
    let mass_full = SymmetricCsc::from_triplets(nf, &triplets);
    let free_triplets: Vec<(usize, usize, f64)> = triplets
        .iter()
        .filter(|&&(r, c, _)| !is_fixed[r] && !is_fixed[c])
        .map(|&(r, c, v)| (free_index[r], free_index[c], v))
        .collect();
    drop(triplets);
    let mass = SymmetricCsc::from_triplets(nfree, &free_triplets);
    drop(free_triplets);

    let factor_entries = mass.factor_entries()?;
    let required = mass_full.nnz() as u64 + mass.nnz() as u64 + factor_entries + (np as u64) * (np as u64);
    if required > options.mem_budget {
        return Err(Error::OutOfMemory {
            what: "continuous pressure Schur complement",
            required,
            budget: options.mem_budget,
        });
    }
    let mass_factor = mass.cholesky("continuous flux mass matrix")?;

    // right-hand side of the momentum rows on free faces: −N₂ p̂ − M u_N
    let m_un = mass_full.apply(&u_fixed);
    let mut n2_phat = vec![0.0; nf];
    for (b, dof) in block.boundary.iter().enumerate() {
        n2_phat[dof.face] += dof.sign as f64 * p_hat[b];
    }
    let rhs_u: Vec<f64> = free_faces.iter().map(|&face| -n2_phat[face] - m_un[face]).collect();
    let e_un = block.divergence.apply(&u_fixed)?;
    let g: Vec<f64> = f.iter().zip(&e_un).map(|(a, b)| a - b).collect();

    // divergence restricted to free faces
    let e_free: Vec<(usize, usize, f64)> = block
        .divergence
        .entries
        .iter()
        .filter(|&&(_, c, _)| !is_fixed[c])
        .map(|&(r, c, s)| (r, free_index[c], s as f64))
        .collect();
    let mut rows_of_e: Vec<Vec<(usize, f64)>> = vec![Vec::new(); np];
    for &(r, c, s) in &e_free {
        rows_of_e[r].push((c, s));
    }

    // S = E_F M⁻¹ E_Fᵀ, built a block of columns at a time
    let mut schur = Mat::<f64>::zeros(np, np);
    let mut j0 = 0;
    while j0 < np {
        let w = SCHUR_CHUNK.min(np - j0);
        let mut x = Mat::<f64>::zeros(nfree, w);
        for j in 0..w {
            for &(c, s) in &rows_of_e[j0 + j] {
                x[(c, j)] = s;
            }
        }
        mass_factor.solve_in_place(x.as_mut());
        for &(r, c, s) in &e_free {
            for j in 0..w {
                schur[(r, j0 + j)] += s * x[(c, j)];
            }
        }
        j0 += w;
    }
    for i in 0..np {
        for j in 0..i {
            let v = 0.5 * (schur[(i, j)] + schur[(j, i)]);
            schur[(i, j)] = v;
            schur[(j, i)] = v;
        }
    }
    let setup_s = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let schur_factor = DenseCholesky::factor(&schur, "continuous pressure Schur complement")?;
    let minv_rhs = mass_factor.solve(&rhs_u);
    let mut rhs_p = g.clone();
    for &(r, c, s) in &e_free {
        rhs_p[r] -= s * minv_rhs[c];
    }
    let pressure = schur_factor.solve(&rhs_p);
    let lambda_s = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let mut ep = rhs_u.clone();
    for &(r, c, s) in &e_free {
        ep[c] += s * pressure[r];
    }
    let u_free = mass_factor.solve(&ep);
    let mut flux = u_fixed.clone();
    for (k, &face) in free_faces.iter().enumerate() {
        flux[face] = u_free[k];
    }
    // pressure trace on Neumann faces from the momentum rows there
    let etp = block.divergence.apply_transpose(&pressure)?;
    let mu = mass_full.apply(&flux);
    let mut trace = p_hat.clone();
    for (b, dof) in block.boundary.iter().enumerate() {
        if is_fixed[dof.face] {
            trace[b] = dof.sign as f64 * (etp[dof.face] - mu[dof.face]);
        }
    }
    let recover_s = t2.elapsed().as_secs_f64();
    let total_s = t0.elapsed().as_secs_f64();

    let cond_pressure = if options.condition_numbers {
        Some(condition_estimate(&DenseSpd {
            matrix: &schur,
            factor: Some(&schur_factor),
        })?)
    } else {
        None
    };
    log::info!(
        "continuous solve: {} flux DOFs, {} pressure DOFs, {:.3}s",
        nf,
        np,
        total_s
    );

    let report = SolveReport {
        case_id: problem.case_id.clone(),
        formulation: Formulation::Continuous,
        order: spec.order,
        elements: spec.elements,
        subdomains: [1, 1, 1],
        sub_elements: spec.elements,
        setup_s,
        lambda_s,
        recover_s,
        total_s,
        cond_pressure,
        cond_lambda: None,
        dof_u: nf,
        dof_p: np,
        dof_lambda: 0,
        stored_entries: required,
        lambda_residual: None,
    };
    Ok(DarcySolution {
        formulation: Formulation::Continuous,
        spec: spec.clone(),
        global_grid: block.grid.clone(),
        block: block.clone(),
        block_offsets: vec![[0, 0, 0]],
        blocks: vec![SolutionBlock {
            subdomain: 0,
            elements,
            flux,
            pressure,
            trace,
            source: f,
        }],
        lambda: Vec::new(),
        connectivity: None,
        report,
    })
}
