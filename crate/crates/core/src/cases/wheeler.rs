use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ProblemDefinition;
use crate::assembly::{FluxField, Permeability, QuadratureSettings, ScalarField};
use crate::error::{Error, Result};
use crate::mesh::{BoundarySpec, Mapping, MeshSpec};
use crate::postproc::ExactSolution;
use crate::solver::DarcyProblem;

/// Smooth full tensor with a rotating `(y, z)` coupling.
#[derive(Clone, Copy, Debug)]
struct WheelerPermeability;

fn wheeler_tensor(x: [f64; 3]) -> [[f64; 3]; 3] {
    let s = (x[0] * x[1]).sin();
    [
        [x[0] * x[0] + x[1] * x[1] + 1.0, 0.0, 0.0],
        [0.0, x[2] * x[2] + 1.0, s],
        [0.0, s, x[0] * x[0] * x[1] * x[1] + 1.0],
    ]
}

impl Permeability for WheelerPermeability {
    fn tensor(&self, _element: usize, x: [f64; 3]) -> [[f64; 3]; 3] {
        wheeler_tensor(x)
    }
}

fn pressure(x: [f64; 3]) -> f64 {
    x[0] + x[1] + x[2] - 1.5
}

fn velocity(x: [f64; 3]) -> [f64; 3] {
    let k = wheeler_tensor(x);
    [
        -(k[0][0] + k[0][1] + k[0][2]),
        -(k[1][0] + k[1][1] + k[1][2]),
        -(k[2][0] + k[2][1] + k[2][2]),
    ]
}

/// `div u = −div(K grad p)`; only the `x` derivative of `K₁₁` and the `y`
/// derivative of `K₂₃` survive.
fn source(x: [f64; 3]) -> f64 {
    -(2.0 * x[0] + x[0] * (x[0] * x[1]).cos())
}

pub fn wheeler_exact() -> ExactSolution {
    ExactSolution {
        pressure: Arc::new(pressure),
        gradient: Arc::new(|_| [1.0, 1.0, 1.0]),
        velocity: Arc::new(velocity),
        divergence: Arc::new(source),
    }
}

/// Subdomain layout used for the manufactured case: two elements per
/// subdomain and axis for `N ≤ 2` when `K` is even, one otherwise.
pub fn wheeler_decomposition(order: usize, k: usize) -> ([usize; 3], [usize; 3]) {
    if order <= 2 && k.is_multiple_of(2) {
        ([k / 2; 3], [2; 3])
    } else {
        ([k; 3], [1; 3])
    }
}

/// The manufactured problem on the deformed unit cube: pressure data on the
/// two `x̂` faces, normal flux data on the others.
pub fn wheeler_case(spec: MeshSpec) -> Result<ProblemDefinition> {
    if spec.mapping != Mapping::WheelerDeformed {
        log::warn!("manufactured case on mapping '{}'", spec.mapping);
    }
    if !(1..=3).contains(&spec.order) {
        log::warn!("manufactured case at order {} (reference runs use 1 to 3)", spec.order);
    }
    let problem = DarcyProblem {
        case_id: "manufactured".into(),
        spec,
        bc: BoundarySpec::dirichlet_x_neumann_yz(),
        permeability: Arc::new(WheelerPermeability),
        source: ScalarField::function(source),
        pressure_bc: ScalarField::function(pressure),
        flux_bc: FluxField::function(|x, n| {
            let u = velocity(x);
            u[0] * n[0] + u[1] * n[1] + u[2] * n[2]
        }),
        quadrature: QuadratureSettings::default(),
    };
    problem.spec.validate()?;
    Ok(ProblemDefinition {
        problem,
        exact: Some(wheeler_exact()),
    })
}

/// Compares the source of an exact solution with a central-difference
/// divergence of its velocity at random points of the unit cube and returns
/// the largest discrepancy; fails when it exceeds `tol`.
pub fn check_source_consistency(exact: &ExactSolution, points: usize, seed: u64, tol: f64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let x: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
        let mut div = 0.0;
        for a in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            div += ((exact.velocity)(xp)[a] - (exact.velocity)(xm)[a]) / (2.0 * h);
        }
        worst = worst.max((div - (exact.divergence)(x)).abs());
    }
    if worst > tol {
        return Err(Error::Config(format!(
            "source is inconsistent with the exact velocity: discrepancy {worst:e} exceeds {tol:e}"
        )));
    }
    Ok(worst)
}
