use std::fs;
use std::hash::Hasher;
use std::path::Path;
use std::sync::Arc;

use fnv::FnvHasher;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ProblemDefinition;
use crate::assembly::{CellPermeability, FluxField, QuadratureSettings, ScalarField};
use crate::error::{Error, Result};
use crate::mesh::{BoundarySpec, Mapping, MeshSpec};
use crate::solver::DarcyProblem;

/// Blocks per axis of the full model.
pub const SPE10_DIMS: [usize; 3] = [60, 220, 85];
pub const SPE10_BLOCK_COUNT: usize = 60 * 220 * 85;
/// Block edge lengths in feet.
pub const SPE10_BLOCK_SIZE_FT: [f64; 3] = [20.0, 10.0, 2.0];
/// Layers of the upper (Tarbert) formation; the remaining 50 are Upper Ness.
pub const SPE10_TARBERT_LAYERS: usize = 35;

/// Per-block permeability on a regular block grid, x fastest, then y, then z.
#[derive(Clone, Debug, PartialEq)]
pub struct PermeabilityField {
    pub dims: [usize; 3],
    pub block_size: [f64; 3],
    /// Diagonal tensor per block (equal entries when isotropic).
    pub values: Arc<Vec<[f64; 3]>>,
    /// FNV-1a 64 of the raw input bytes (zero for generated fields).
    pub checksum: u64,
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

impl PermeabilityField {
    pub fn n_blocks(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn extents(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| self.dims[a] as f64 * self.block_size[a])
    }

    /// Parses whitespace-separated scalars. Isotropic input uses the first
    /// `1 122 000` values; anisotropic input reads three consecutive blocks of
    /// that size as the diagonal entries, one axis per block.
    pub fn parse(bytes: &[u8], anisotropic: bool) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|e| Error::Ingest(format!("file is not text: {e}")))?;
        let components = if anisotropic { 3 } else { 1 };
        let needed = components * SPE10_BLOCK_COUNT;
        let mut raw = Vec::with_capacity(needed);
        for (i, tok) in text.split_ascii_whitespace().take(needed).enumerate() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::Ingest(format!("value {i} ('{tok}') is not a number")))?;
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Ingest(format!(
                    "value {i} is not a positive finite permeability: {v}"
                )));
            }
            raw.push(v);
        }
        if raw.len() < needed {
            return Err(Error::Ingest(format!(
                "expected {needed} values ({components} x {SPE10_BLOCK_COUNT} blocks), found {}",
                raw.len()
            )));
        }
        let values = (0..SPE10_BLOCK_COUNT)
            .map(|i| {
                if anisotropic {
                    [raw[i], raw[SPE10_BLOCK_COUNT + i], raw[2 * SPE10_BLOCK_COUNT + i]]
                } else {
                    [raw[i]; 3]
                }
            })
            .collect();
        Ok(Self {
            dims: SPE10_DIMS,
            block_size: SPE10_BLOCK_SIZE_FT,
            values: Arc::new(values),
            checksum: fnv1a64(bytes),
        })
    }

    pub fn load(path: &Path, anisotropic: bool) -> Result<Self> {
        let bytes = fs::read(path)?;
        let field = Self::parse(&bytes, anisotropic)?;
        log::info!("permeability file {}: checksum {:016x}", path.display(), field.checksum);
        Ok(field)
    }

    /// Keeps layers `z0..z1`.
    pub fn crop_layers(&self, z0: usize, z1: usize) -> Result<Self> {
        if z0 >= z1 || z1 > self.dims[2] {
            return Err(Error::Config(format!(
                "layer range {z0}..{z1} is not inside 0..{}",
                self.dims[2]
            )));
        }
        let layer = self.dims[0] * self.dims[1];
        Ok(Self {
            dims: [self.dims[0], self.dims[1], z1 - z0],
            block_size: self.block_size,
            values: Arc::new(self.values[z0 * layer..z1 * layer].to_vec()),
            checksum: self.checksum,
        })
    }

    /// Number of upper-formation layers inside the field (full model numbering).
    pub fn formation_split(&self) -> (usize, usize) {
        let upper = SPE10_TARBERT_LAYERS.min(self.dims[2]);
        (upper, self.dims[2] - upper)
    }
}

/// Log-normal field with layer-wise means, reproducible from `seed`.
pub fn synthetic_field(dims: [usize; 3], seed: u64) -> PermeabilityField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.5).expect("valid normal distribution");
    let layer = dims[0] * dims[1];
    let values = (0..dims.iter().product::<usize>())
        .map(|i| {
            let z = i / layer;
            let mean = 2.0 * ((z as f64) * 0.7).sin();
            [(mean + noise.sample(&mut rng)).exp(); 3]
        })
        .collect();
    PermeabilityField {
        dims,
        block_size: SPE10_BLOCK_SIZE_FT,
        values: Arc::new(values),
        checksum: 0,
    }
}

/// Subdomain layout `K1 ∘ K2` per axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Decomposition {
    pub subdomains: [usize; 3],
    pub sub_elements: [usize; 3],
}

impl Decomposition {
    pub const CASE1: Decomposition = Decomposition {
        subdomains: [15, 55, 17],
        sub_elements: [4, 4, 5],
    };
    pub const CASE2: Decomposition = Decomposition {
        subdomains: [12, 44, 17],
        sub_elements: [5, 5, 5],
    };
    /// Ten-layer crop.
    pub const CROP: Decomposition = Decomposition {
        subdomains: [6, 22, 2],
        sub_elements: [10, 10, 5],
    };

    pub fn elements(&self) -> [usize; 3] {
        [0, 1, 2].map(|a| self.subdomains[a] * self.sub_elements[a])
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "case1" => Ok(Self::CASE1),
            "case2" => Ok(Self::CASE2),
            "crop" => Ok(Self::CROP),
            other => Err(Error::Config(format!(
                "unknown decomposition '{other}' (expected case1, case2 or crop)"
            ))),
        }
    }
}

/// Lowest-order reservoir problem: unit pressure drop from `x = 0` to
/// `x = L_x`, no flow elsewhere, no source, one element per block.
pub fn spe10_case(field: &PermeabilityField, decomposition: Decomposition) -> Result<ProblemDefinition> {
    if decomposition.elements() != field.dims {
        return Err(Error::Spec(format!(
            "decomposition {:?} x {:?} does not tile the {:?} block grid",
            decomposition.subdomains, decomposition.sub_elements, field.dims
        )));
    }
    let extents = field.extents();
    let spec = MeshSpec::new(
        1,
        decomposition.subdomains,
        decomposition.sub_elements,
        Mapping::Box { extents },
    )?;
    let half = 0.5 * extents[0];
    let problem = DarcyProblem {
        case_id: if field.dims == SPE10_DIMS {
            "spe10"
        } else {
            "spe10-crop"
        }
        .into(),
        spec,
        bc: BoundarySpec::dirichlet_x_neumann_yz(),
        permeability: Arc::new(CellPermeability {
            values: field.values.clone(),
        }),
        source: ScalarField::Zero,
        pressure_bc: ScalarField::function(move |x| if x[0] < half { 1.0 } else { 0.0 }),
        flux_bc: FluxField::Zero,
        quadrature: QuadratureSettings::default(),
    };
    Ok(ProblemDefinition { problem, exact: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve_dd, SolverOptions};

    fn text(n: usize, v: &str) -> Vec<u8> {
        let mut s = String::with_capacity(n * (v.len() + 1));
        for i in 0..n {
            s.push_str(v);
            s.push(if i % 6 == 5 { '\n' } else { ' ' });
        }
        s.into_bytes()
    }

    #[test]
    fn short_file_names_the_expected_count() {
        let err = PermeabilityField::parse(&text(SPE10_BLOCK_COUNT - 1, "1.0"), false).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("1122000") && msg.contains("1121999"), "{msg}");
    }

    #[test]
    fn bad_values_report_their_index() {
        let mut bytes = text(10, "2.5");
        bytes.extend_from_slice(b" -1.0");
        let msg = PermeabilityField::parse(&bytes, false).unwrap_err().to_string();
        assert!(msg.contains("value 10"), "{msg}");
        let msg = PermeabilityField::parse(b"1.0 abc", false).unwrap_err().to_string();
        assert!(msg.contains("value 1"), "{msg}");
    }

    #[test]
    fn homogeneous_file_and_checksum() {
        let bytes = text(SPE10_BLOCK_COUNT + 5, "1.0");
        let f = PermeabilityField::parse(&bytes, false).unwrap();
        assert_eq!(f.values.len(), SPE10_BLOCK_COUNT);
        assert!(f.values.iter().all(|v| *v == [1.0; 3]));
        assert_eq!(f.extents(), [1200.0, 2200.0, 170.0]);
        assert_eq!(f.formation_split(), (35, 50));
        let again = PermeabilityField::parse(&bytes, false).unwrap();
        assert_eq!(f, again);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        let crop = f.crop_layers(0, 10).unwrap();
        assert_eq!(crop.dims, [60, 220, 10]);
        assert_eq!(crop.extents()[2], 20.0);
    }

    #[test]
    fn anisotropic_reads_three_components() {
        let mut bytes = text(SPE10_BLOCK_COUNT, "1.0");
        bytes.extend(text(SPE10_BLOCK_COUNT, "2.0"));
        bytes.extend(text(SPE10_BLOCK_COUNT, "3.0"));
        let f = PermeabilityField::parse(&bytes, true).unwrap();
        assert_eq!(f.values[17], [1.0, 2.0, 3.0]);
    }

    #[test]
    fn decomposition_must_tile_the_field() {
        let f = synthetic_field([6, 4, 2], 1);
        let bad = Decomposition {
            subdomains: [2, 2, 1],
            sub_elements: [2, 2, 2],
        };
        assert!(matches!(spe10_case(&f, bad), Err(Error::Spec(_))));
        assert_eq!(Decomposition::CASE1.elements(), SPE10_DIMS);
        assert_eq!(Decomposition::CASE2.elements(), SPE10_DIMS);
        assert_eq!(Decomposition::CROP.elements(), [60, 220, 10]);
    }

    #[test]
    fn homogeneous_reservoir_has_linear_pressure() {
        let mut f = synthetic_field([6, 4, 2], 3);
        f.values = Arc::new(vec![[1.0; 3]; 48]);
        let d = Decomposition {
            subdomains: [2, 2, 1],
            sub_elements: [3, 2, 2],
        };
        let def = spe10_case(&f, d).unwrap();
        let sol = solve_dd(&def.problem, &SolverOptions::default()).unwrap();
        let samples = crate::postproc::sample_fields(&def.problem, &sol, 2).unwrap();
        let lx = f.extents()[0];
        let dx = f.block_size[0];
        for s in samples {
            // lowest-order pressure is the cell mean of the linear profile
            let xc = ((s.x[0] / dx).floor() + 0.5) * dx;
            assert!((s.p - (1.0 - xc / lx)).abs() < 1e-8, "{s:?}");
            assert!((s.u[0] - 1.0 / lx).abs() < 1e-8 && s.u[1].abs() < 1e-8 && s.u[2].abs() < 1e-8);
        }
        assert!(sol.boundary_flux_sum().abs() < 1e-8);
    }

    #[test]
    fn synthetic_field_is_reproducible() {
        assert_eq!(synthetic_field([4, 4, 3], 9), synthetic_field([4, 4, 3], 9));
        assert_ne!(synthetic_field([4, 4, 3], 9), synthetic_field([4, 4, 3], 10));
    }
}
