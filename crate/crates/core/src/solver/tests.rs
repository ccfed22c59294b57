use std::sync::Arc;

use faer::Side as FaerSide;

use super::*;
use crate::assembly::ConstantPermeability;
use crate::mesh::{build_partition, Mapping};
use crate::topology::build_trace_connectivity;

fn linear_problem(spec: MeshSpec, bc: BoundarySpec) -> DarcyProblem {
    // p = x + y + z with K = I, so u = (-1, -1, -1) and div u = 0
    DarcyProblem {
        case_id: "linear".into(),
        spec,
        bc,
        permeability: Arc::new(ConstantPermeability::identity()),
        source: ScalarField::Zero,
        pressure_bc: ScalarField::function(|x| x[0] + x[1] + x[2]),
        flux_bc: FluxField::function(|_, n| -(n[0] + n[1] + n[2])),
        quadrature: QuadratureSettings::default(),
    }
}

fn varying_problem(spec: MeshSpec) -> DarcyProblem {
    struct Varying;
    impl Permeability for Varying {
        fn tensor(&self, _element: usize, x: [f64; 3]) -> [[f64; 3]; 3] {
            let s = 0.3 * (x[0] * x[1]).sin();
            [
                [x[0] * x[0] + x[1] * x[1] + 1.0, 0.0, 0.0],
                [0.0, x[2] * x[2] + 1.0, s],
                [0.0, s, x[0] * x[0] * x[1] * x[1] + 1.0],
            ]
        }
    }
    DarcyProblem {
        case_id: "varying".into(),
        spec,
        bc: BoundarySpec::dirichlet_x_neumann_yz(),
        permeability: Arc::new(Varying),
        source: ScalarField::function(|x| (x[0] * x[1]).cos() + x[2]),
        pressure_bc: ScalarField::function(|x| x[0] * x[0] - x[1] + 0.5 * x[2]),
        flux_bc: FluxField::function(|x, n| 0.2 * n[1] * x[0] - 0.1 * n[2]),
        quadrature: QuadratureSettings::default(),
    }
}

fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

#[test]
fn continuous_linear_pressure_has_unit_plane_flux() {
    let spec = MeshSpec::unbroken(2, [2, 2, 2], Mapping::Identity).unwrap();
    let problem = linear_problem(spec, BoundarySpec::uniform(BoundaryKind::Dirichlet));
    let sol = solve_continuous(&problem, &SolverOptions::default()).unwrap();
    let u = sol.global_flux();
    let g = &sol.global_grid;
    for axis in 0..3 {
        for plane in 0..=g.dims[axis] {
            let mut total = 0.0;
            for f in 0..g.n_faces_axis(axis) {
                let id = g.face_offset(axis) + f;
                let (d, p) = g.face_position(id);
                if d == axis && p[axis] == plane {
                    total += u[id];
                }
            }
            assert!((total + 1.0).abs() < 1e-10, "axis {axis} plane {plane}: {total}");
        }
    }
    assert!(sol.divergence_residual().unwrap() < 1e-12);
}

#[test]
fn neumann_and_dirichlet_give_the_same_linear_solution() {
    let spec = MeshSpec::unbroken(2, [2, 2, 2], Mapping::Identity).unwrap();
    let a = solve_continuous(
        &linear_problem(spec.clone(), BoundarySpec::uniform(BoundaryKind::Dirichlet)),
        &SolverOptions::default(),
    )
    .unwrap();
    let b = solve_continuous(
        &linear_problem(spec, BoundarySpec::dirichlet_x_neumann_yz()),
        &SolverOptions::default(),
    )
    .unwrap();
    assert!(max_rel_diff(&a.global_flux(), &b.global_flux()) < 1e-10);
    assert!(max_rel_diff(&a.global_pressure(), &b.global_pressure()) < 1e-10);
}

#[test]
fn pure_neumann_is_rejected() {
    let spec = MeshSpec::unbroken(1, [2, 2, 2], Mapping::Identity).unwrap();
    let problem = linear_problem(spec, BoundarySpec::uniform(BoundaryKind::Neumann));
    let err = solve_continuous(&problem, &SolverOptions::default()).unwrap_err();
    assert!(matches!(err, Error::ConstraintDeficiency(_)));
    let err = solve_dd(&problem, &SolverOptions::default()).unwrap_err();
    assert!(matches!(err, Error::ConstraintDeficiency(_)));
}

#[test]
fn tiny_budget_reports_out_of_memory() {
    let spec = MeshSpec::new(1, [2, 2, 2], [2, 2, 2], Mapping::Identity).unwrap();
    let problem = linear_problem(spec, BoundarySpec::uniform(BoundaryKind::Dirichlet));
    let opts = SolverOptions {
        mem_budget: 100,
        ..Default::default()
    };
    assert!(matches!(
        solve_continuous(&problem, &opts),
        Err(Error::OutOfMemory { .. })
    ));
    assert!(matches!(solve_dd(&problem, &opts), Err(Error::OutOfMemory { .. })));
}

#[test]
fn dd_matches_continuous_on_deformed_mesh_with_variable_permeability() {
    for (order, sub, elems) in [
        (1, [2, 2, 2], [2, 2, 2]),
        (2, [2, 1, 2], [1, 2, 1]),
        (3, [2, 1, 1], [1, 1, 1]),
    ] {
        let spec = MeshSpec::new(order, sub, elems, Mapping::WheelerDeformed).unwrap();
        let unbroken = MeshSpec::unbroken(order, spec.elements, Mapping::WheelerDeformed).unwrap();
        let dd = solve_dd(&varying_problem(spec), &SolverOptions::default()).unwrap();
        let cont = solve_continuous(&varying_problem(unbroken), &SolverOptions::default()).unwrap();
        let du = max_rel_diff(&cont.global_flux(), &dd.global_flux());
        let dp = max_rel_diff(&cont.global_pressure(), &dd.global_pressure());
        assert!(du < 1e-10 && dp < 1e-10, "N={order}: flux {du:e}, pressure {dp:e}");
        assert!(dd.interface_flux_mismatch() < 1e-10);
        assert!(dd.divergence_residual().unwrap() < 1e-10);
        assert!(dd.report.lambda_residual.unwrap() <= 1e-10);
    }
}

#[test]
fn cached_and_recomputed_factors_agree() {
    let spec = MeshSpec::new(2, [2, 1, 1], [1, 1, 1], Mapping::WheelerDeformed).unwrap();
    let problem = varying_problem(spec);
    let a = solve_dd(
        &problem,
        &SolverOptions {
            cache_local_factors: Some(true),
            ..Default::default()
        },
    )
    .unwrap();
    let b = solve_dd(
        &problem,
        &SolverOptions {
            cache_local_factors: Some(false),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(a.blocks, b.blocks);
    assert_eq!(a.lambda, b.lambda);
}

#[test]
fn multipliers_equal_exact_trace_for_linear_pressure() {
    for order in 1..=3 {
        let spec = MeshSpec::new(order, [2, 1, 1], [1, 2, 1], Mapping::Identity).unwrap();
        let problem = linear_problem(spec.clone(), BoundarySpec::dirichlet_x_neumann_yz());
        let sol = solve_dd(&problem, &SolverOptions::default()).unwrap();
        let partition = build_partition(&spec, &problem.bc).unwrap();
        let conn = build_trace_connectivity(&partition).unwrap();
        let exact = exact_trace_coefficients(&problem, &partition, &conn, &problem.pressure_bc).unwrap();
        let err = sol
            .lambda
            .iter()
            .zip(&exact)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-10, "N={order}: {err:e}");
    }
}

fn single_element_ops(order: usize, materialize: bool) -> (DarcyProblem, TraceConnectivity, LocalOperatorSet) {
    let spec = MeshSpec::new(order, [1, 1, 1], [1, 1, 1], Mapping::WheelerDeformed).unwrap();
    let problem = varying_problem(spec.clone());
    let problem = DarcyProblem {
        bc: BoundarySpec::uniform(BoundaryKind::Dirichlet),
        ..problem
    };
    let partition = build_partition(&spec, &problem.bc).unwrap();
    let conn = build_trace_connectivity(&partition).unwrap();
    let ops = build_local_operators(&problem, &partition, &conn, 0, true, materialize).unwrap();
    (problem, conn, ops)
}

#[test]
fn local_operator_has_rank_five_and_annihilates_gradients() {
    let (_, conn, ops) = single_element_ops(1, true);
    let a = ops.a_matrix.as_ref().unwrap();
    let n = a.nrows();
    for i in 0..n {
        for j in 0..n {
            assert!((a[(i, j)] - a[(j, i)]).abs() < 1e-14);
        }
    }
    let ev = a.self_adjoint_eigenvalues(FaerSide::Lower).unwrap();
    let top = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rank = ev.iter().filter(|v| v.abs() > 1e-10 * top).count();
    assert_eq!(rank, 5);
    let et = conn.block.divergence.apply_transpose(&[1.0]).unwrap();
    let aet = ops.apply_a(&conn.block, &et).unwrap();
    assert!(aet.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn materialized_and_factored_local_operators_agree() {
    for order in 1..=3 {
        let (_, conn, dense) = single_element_ops(order, true);
        let (_, _, factored) = single_element_ops(order, false);
        let nf = conn.block.n_faces();
        let x: Vec<f64> = (0..nf).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
        let a = dense.apply_a(&conn.block, &x).unwrap();
        let b = factored.apply_a(&conn.block, &x).unwrap();
        assert!(max_rel_diff(&a, &b) < 1e-12, "N={order}");
        let lb = &dense.lambda_block;
        for i in 0..lb.nrows() {
            for j in 0..lb.ncols() {
                assert!((lb[(i, j)] - factored.lambda_block[(i, j)]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn local_flux_balance_matches_recovered_flux() {
    let (_, conn, ops) = single_element_ops(2, false);
    let lambda = vec![0.0; conn.n_lambda()];
    let blk = recover_local(&conn.block, &conn, &ops, &lambda).unwrap();
    let rhs = ops.rhs();
    for (b, dof) in conn.block.boundary.iter().enumerate() {
        let outward = dof.sign as f64 * blk.flux[dof.face];
        assert!((outward - rhs.values[b]).abs() < 1e-10 * (1.0 + outward.abs()));
    }
}

#[test]
fn report_row_has_header_arity() {
    let spec = MeshSpec::new(1, [2, 1, 1], [1, 1, 1], Mapping::Identity).unwrap();
    let problem = linear_problem(spec, BoundarySpec::uniform(BoundaryKind::Dirichlet));
    let sol = solve_dd(
        &problem,
        &SolverOptions {
            condition_numbers: true,
            ..Default::default()
        },
    )
    .unwrap();
    let row = sol.report.csv_row();
    assert_eq!(row.split(',').count(), REPORT_CSV_HEADER.split(',').count());
    assert!(sol.report.cond_lambda.unwrap() >= 1.0);
}

#[test]
fn restricted_continuous_solution_reproduces_the_multipliers() {
    let spec = MeshSpec::new(2, [2, 1, 2], [1, 2, 1], Mapping::WheelerDeformed).unwrap();
    let unbroken = MeshSpec::unbroken(2, spec.elements, Mapping::WheelerDeformed).unwrap();
    let dd = solve_dd(&varying_problem(spec.clone()), &SolverOptions::default()).unwrap();
    let cont = solve_continuous(&varying_problem(unbroken), &SolverOptions::default()).unwrap();
    let split = restrict_to_subdomains(&varying_problem(spec), &cont).unwrap();
    assert!(max_rel_diff(&dd.lambda, &split.lambda) < 1e-9);
    for (a, b) in dd.blocks.iter().zip(&split.blocks) {
        assert!(max_rel_diff(&a.trace, &b.trace) < 1e-9);
        assert!(max_rel_diff(&a.flux, &b.flux) < 1e-9);
    }
}
