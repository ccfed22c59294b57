use std::sync::Arc;

use super::*;
use crate::assembly::{assemble_block_face_mass, ConstantPermeability, FluxField, QuadratureSettings, ScalarField};
use crate::mesh::{BoundaryKind, BoundarySpec, Mapping, MeshSpec};
use crate::solver::{solve_continuous, solve_dd, SolverOptions};

fn problem(spec: MeshSpec, bc: BoundarySpec, p: ScalarField) -> DarcyProblem {
    DarcyProblem {
        case_id: "test".into(),
        spec,
        bc,
        permeability: Arc::new(ConstantPermeability::identity()),
        source: ScalarField::Zero,
        pressure_bc: p,
        flux_bc: FluxField::function(|_, n| -(n[0] + n[1] + n[2])),
        quadrature: QuadratureSettings::default(),
    }
}

fn linear_exact() -> ExactSolution {
    ExactSolution {
        pressure: Arc::new(|x| x[0] + x[1] + x[2] - 1.5),
        gradient: Arc::new(|_| [1.0, 1.0, 1.0]),
        velocity: Arc::new(|_| [-1.0, -1.0, -1.0]),
        divergence: Arc::new(|_| 0.0),
    }
}

fn lcg(seed: &mut u64) -> f64 {
    *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
}

#[test]
fn gradient_of_constant_pressure_vanishes() {
    for order in 1..=3 {
        let spec = MeshSpec::unbroken(order, [1, 1, 1], Mapping::Identity).unwrap();
        let asm = ElementAssembler::with_settings(order, &QuadratureSettings::default()).unwrap();
        let block = BlockTopology::new(order, [1, 1, 1]);
        let geom = spec.geometry(0);
        let c = ScalarField::Constant(2.5);
        let primal = asm.rhs_volume(&c, &geom).unwrap();
        let m3 = asm.volume_mass(&geom).unwrap();
        let p_dual: Vec<f64> = (0..primal.len())
            .map(|i| (0..primal.len()).map(|j| m3[(i, j)] * primal[j]).sum())
            .collect();
        let mut trace = vec![0.0; block.n_boundary()];
        crate::assembly::for_each_boundary_element_face(&block, |_, side, dofs| {
            let v = asm.rhs_dirichlet(&c, &geom, side)?;
            for (k, &b) in dofs.iter().enumerate() {
                trace[b] = v[k];
            }
            Ok(())
        })
        .unwrap();
        let g = dual_gradient(&block, &p_dual, &trace).unwrap();
        let worst = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst < 1e-12, "N={order}: {worst:e}");
    }
}

#[test]
fn dual_gradient_satisfies_the_duality_identity() {
    let order = 2;
    let spec = MeshSpec::unbroken(order, [2, 1, 1], Mapping::WheelerDeformed).unwrap();
    let asm = ElementAssembler::with_settings(order, &QuadratureSettings::default()).unwrap();
    let block = BlockTopology::new(order, [2, 1, 1]);
    let geoms = block_geometries(&spec, &[0, 1]);
    let m2 = assemble_block_face_mass(&asm, &block, &geoms, None).unwrap();
    let mut seed = 11;
    for _ in 0..20 {
        let p: Vec<f64> = (0..block.n_cells()).map(|_| lcg(&mut seed)).collect();
        let t: Vec<f64> = (0..block.n_boundary()).map(|_| lcg(&mut seed)).collect();
        let u: Vec<f64> = (0..block.n_faces()).map(|_| lcg(&mut seed)).collect();
        let dual = dual_gradient(&block, &p, &t).unwrap();
        let g = gradient_coefficients(&asm, &block, &geoms, &dual).unwrap();
        let mut lhs = 0.0;
        for i in 0..u.len() {
            for j in 0..u.len() {
                lhs += u[i] * m2[(i, j)] * g[j];
            }
        }
        let div_u = block.divergence.apply(&u).unwrap();
        let mut rhs = -dot(&p, &div_u);
        for (b, dof) in block.boundary.iter().enumerate() {
            rhs += t[b] * dof.sign as f64 * u[dof.face];
        }
        assert!((lhs - rhs).abs() < 1e-11 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
    }
}

#[test]
fn zero_fields_give_the_norm_of_the_exact_solution() {
    let spec = MeshSpec::unbroken(2, [2, 2, 2], Mapping::Identity).unwrap();
    let pb = problem(spec, BoundarySpec::uniform(BoundaryKind::Dirichlet), ScalarField::Zero);
    let mut sol = solve_continuous(&pb, &SolverOptions::default()).unwrap();
    for b in &mut sol.blocks {
        b.flux.iter_mut().for_each(|v| *v = 0.0);
        b.pressure.iter_mut().for_each(|v| *v = 0.0);
        b.trace.iter_mut().for_each(|v| *v = 0.0);
    }
    let h1 = h1_error(&pb, &sol, &linear_exact()).unwrap();
    assert!((h1 - 3.25f64.sqrt()).abs() < 1e-12, "{h1}");
    let hdiv = hdiv_error(&pb, &sol, &linear_exact()).unwrap();
    assert!((hdiv - 3f64.sqrt()).abs() < 1e-12, "{hdiv}");
}

#[test]
fn linear_solution_has_exact_velocity() {
    let spec = MeshSpec::unbroken(1, [3, 3, 3], Mapping::Identity).unwrap();
    let pb = problem(
        spec,
        BoundarySpec::dirichlet_x_neumann_yz(),
        ScalarField::function(|x| x[0] + x[1] + x[2] - 1.5),
    );
    let sol = solve_continuous(&pb, &SolverOptions::default()).unwrap();
    let e = compute_errors(&pb, &sol, &linear_exact()).unwrap();
    assert!(e.hdiv_u_error < 1e-10, "{e:?}");
    assert!(e.l2_div_residual < 1e-12);
    assert!(l2_div_residual(&pb, &sol).unwrap() < 1e-12);
    assert!(e.h1_p_error > 0.0 && e.h1_p_error < 0.5);
}

#[test]
fn constant_pressure_samples_are_constant() {
    let spec = MeshSpec::new(
        2,
        [2, 1, 1],
        [1, 2, 1],
        Mapping::Box {
            extents: [2.0, 1.0, 0.5],
        },
    )
    .unwrap();
    let pb = problem(
        spec,
        BoundarySpec::uniform(BoundaryKind::Dirichlet),
        ScalarField::Constant(2.0),
    );
    let sol = solve_dd(&pb, &SolverOptions::default()).unwrap();
    let samples = sample_fields(&pb, &sol, 3).unwrap();
    assert_eq!(samples.len(), 4 * 27);
    for s in &samples {
        assert!((s.p - 2.0).abs() < 1e-12, "{}", s.p);
        assert!(s.u.iter().all(|v| v.abs() < 1e-12));
    }
}

#[test]
fn continuous_and_dd_samples_agree() {
    let spec = MeshSpec::new(2, [2, 2, 1], [1, 1, 2], Mapping::WheelerDeformed).unwrap();
    let unbroken = MeshSpec::unbroken(2, spec.elements, Mapping::WheelerDeformed).unwrap();
    let p = ScalarField::function(|x| (x[0] * x[2]).sin() + x[1]);
    let dd_pb = problem(spec, BoundarySpec::dirichlet_x_neumann_yz(), p.clone());
    let cont_pb = problem(unbroken, BoundarySpec::dirichlet_x_neumann_yz(), p);
    let a = sample_fields(&dd_pb, &solve_dd(&dd_pb, &SolverOptions::default()).unwrap(), 2).unwrap();
    let b = sample_fields(
        &cont_pb,
        &solve_continuous(&cont_pb, &SolverOptions::default()).unwrap(),
        2,
    )
    .unwrap();
    let (dp, du) = max_sample_difference(&a, &b).unwrap();
    assert!(dp < 1e-10 && du < 1e-10, "{dp:e} {du:e}");
    let mut buf = Vec::new();
    write_samples_csv(&mut buf, &a).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), a.len() + 1);
    assert!(text.starts_with(SAMPLE_CSV_HEADER));
}

#[test]
fn rates_of_simple_series() {
    let r = convergence_rates(&[(1.0, 1.0), (0.5, 0.5)]).unwrap();
    assert!((r.least_squares - 1.0).abs() < 1e-14);
    let r = convergence_rates(&[(1.0, 1.0), (0.5, 0.125)]).unwrap();
    assert!((r.pairwise[0] - 3.0).abs() < 1e-14);
    assert!(matches!(
        convergence_rates(&[(1.0, 1.0), (0.5, 0.0)]),
        Err(Error::UndefinedRate(_))
    ));
    assert!(matches!(convergence_rates(&[(1.0, 1.0)]), Err(Error::UndefinedRate(_))));
}
