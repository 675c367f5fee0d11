//! Study runner: manufactured targets, refinement loops, error and rate
//! computation, CSV/JSON reports, and the property suites behind the
//! `verify` CLI command.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::biorth::{build_biorthogonal, BiorthogonalSystem, ConstantsReport};
use crate::error::{FeecError, Result};
use crate::exterior::polyform::PolyForm;
use crate::exterior::sampled::{CoeffFn, DerivFn, SampledForm};
use crate::exterior::{lp_norm_diff, subsets_k, LpExponent};
use crate::facetdual::{FacetDualTables, KFunctionals};
use crate::interp::{
    clement, clement_bc, fe_sampled_form, scott_zhang, InterpOptions, InterpolantResult,
};
use crate::mesh::{
    unit_cube_mesh, unit_square_mesh, BoundarySubcomplex, MeshFile, SimplicialComplex,
};
use crate::proxy3d::family_of_name;
use crate::spaces::Family;

/// Mesh source of a study.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MeshSpec {
    /// Unit square, two triangles at level 0.
    Square,
    /// Unit cube, six Kuhn tetrahedra at level 0.
    Cube,
    /// JSON mesh file as level 0.
    File { path: String },
}

/// Which boundary part carries the homogeneous boundary conditions.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BoundarySpec {
    #[default]
    None,
    Full,
    Facets {
        facets: Vec<Vec<usize>>,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpolantKind {
    Clement,
    ClementBc,
    ScottZhang,
}

/// Manufactured interpolation target.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum TargetSpec {
    /// Smooth separable trigonometric form.
    Trig,
    /// Global polynomial form of the given coefficient degree.
    Poly { degree: u32 },
    /// Trig form multiplied by a factor vanishing on the boundary part (the
    /// full box boundary, or a single coordinate plane x_axis = 0).
    BcTrig {
        #[serde(default)]
        plane_axis: Option<usize>,
    },
    /// Piecewise polynomial: a trimmed-family form of degree r+offset on the
    /// level-0 mesh, globally trace-continuous but only piecewise smooth.
    BrokenFe {
        #[serde(default = "default_offset")]
        degree_offset: u32,
        #[serde(default)]
        seed: u64,
    },
    Zero,
}

fn default_offset() -> u32 {
    1
}

/// One convergence study configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyConfig {
    pub mesh: MeshSpec,
    /// Either family/k, or a named 3D space (ned1|ned2|rt|bdm).
    #[serde(default)]
    pub family: Option<Family>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub space: Option<String>,
    pub r: u32,
    pub interpolant: InterpolantKind,
    #[serde(default = "default_p")]
    pub p: String,
    #[serde(default)]
    pub boundary: BoundarySpec,
    pub target: TargetSpec,
    #[serde(default)]
    pub quadrature_order: Option<usize>,
    pub levels: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_p() -> String {
    "2".to_string()
}

/// Per-level study measurements.
#[derive(Clone, Debug, Serialize)]
pub struct LevelReport {
    pub level: usize,
    pub h_max: f64,
    pub error: f64,
    pub per_cell_max: f64,
    pub stability: f64,
    pub dofs: usize,
}

/// Full study output with the fitted convergence slopes.
#[derive(Clone, Debug, Serialize)]
pub struct RateReport {
    pub config: StudyConfig,
    pub levels: Vec<LevelReport>,
    /// Least-squares slope over all levels.
    pub slope_all: f64,
    /// Slope excluding the coarsest level (when 4 or more levels ran).
    pub slope_main: f64,
    /// Slope through the last two levels only.
    pub slope_last_two: f64,
    pub biorth_constants: Vec<ConstantsReport>,
}

impl RateReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,h,error,slope\n");
        for (i, l) in self.levels.iter().enumerate() {
            let slope = if i == 0 {
                String::new()
            } else {
                let a = &self.levels[i - 1];
                format!(
                    "{:.6}",
                    (l.error / a.error).ln() / (l.h_max / a.h_max).ln()
                )
            };
            out.push_str(&format!(
                "{},{:.12e},{:.12e},{}\n",
                l.level, l.h_max, l.error, slope
            ));
        }
        out
    }
}

fn lp_of(p: &str) -> Result<LpExponent> {
    match p {
        "1" => Ok(LpExponent::One),
        "2" => Ok(LpExponent::Two),
        "inf" | "infinity" => Ok(LpExponent::Infinity),
        other => Err(FeecError::InvalidConfig(format!("unsupported p `{other}`"))),
    }
}

/// Least-squares slope of log(err) against log(h).
pub fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, e)| *e > 0.0)
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|(x, _)| x).sum();
    let sy: f64 = pts.iter().map(|(_, y)| y).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| x * y).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// A separable scalar: amp · Π_i f_i(x_i) with per-axis trigonometric and
/// polynomial factors, differentiable to any order.
#[derive(Clone, Debug)]
pub struct SeparableScalar {
    pub amp: f64,
    /// Per axis: optional sin(freq·x + phase) factor and polynomial factor
    /// coefficients (empty = constant 1).
    pub factors: Vec<(Option<(f64, f64)>, Vec<f64>)>,
}

impl SeparableScalar {
    fn axis_value(&self, axis: usize, order: u32, x: f64) -> f64 {
        let (trig, poly) = &self.factors[axis];
        // Leibniz rule over the product of the two factors.
        let trig_d = |j: u32| -> f64 {
            match trig {
                None => {
                    if j == 0 {
                        1.0
                    } else {
                        0.0
                    }
                }
                Some((f, p)) => {
                    f.powi(j as i32) * (f * x + p + j as f64 * std::f64::consts::FRAC_PI_2).sin()
                }
            }
        };
        let poly_d = |j: u32| -> f64 {
            if poly.is_empty() {
                return if j == 0 { 1.0 } else { 0.0 };
            }
            let mut v = 0.0;
            for (deg, c) in poly.iter().enumerate() {
                let deg = deg as u32;
                if deg < j {
                    continue;
                }
                let mut fall = 1.0;
                for t in 0..j {
                    fall *= (deg - t) as f64;
                }
                v += c * fall * x.powi((deg - j) as i32);
            }
            v
        };
        let mut total = 0.0;
        for j in 0..=order {
            let mut binom = 1.0;
            for t in 0..j {
                binom = binom * (order - t) as f64 / (t + 1) as f64;
            }
            total += binom * trig_d(j) * poly_d(order - j);
        }
        total
    }

    pub fn deriv(&self, beta: &[u32], x: &[f64]) -> f64 {
        let mut v = self.amp;
        for (axis, &b) in beta.iter().enumerate() {
            v *= self.axis_value(axis, b, x[axis]);
        }
        v
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.deriv(&vec![0; x.len()], x)
    }
}

/// A sampled k-form whose components are sums of separable scalars, with
/// analytic exterior derivative and coefficient derivatives of all orders.
pub fn sampled_from_components(
    n: usize,
    k: usize,
    comps: Vec<Vec<SeparableScalar>>,
) -> SampledForm {
    let comps = Arc::new(comps);
    let axes_k = subsets_k(0, n as u8, k);
    let axes_k1 = subsets_k(0, n as u8, k + 1);
    let component_deriv = |comps: &[Vec<SeparableScalar>], slot: usize, beta: &[u32], x: &[f64]| {
        comps[slot].iter().map(|c| c.deriv(beta, x)).sum::<f64>()
    };

    let c0 = comps.clone();
    let nvars = n;
    let coeffs: CoeffFn = Arc::new(move |x: &[f64]| {
        let beta = vec![0u32; nvars];
        (0..c0.len())
            .map(|slot| component_deriv(&c0, slot, &beta, x))
            .collect()
    });

    let c1 = comps.clone();
    let ak = axes_k.clone();
    let ak1 = axes_k1.clone();
    let d_coeffs: CoeffFn = Arc::new(move |x: &[f64]| {
        ak1.iter()
            .map(|target| {
                let mut total = 0.0;
                for (pos, &i) in target.iter().enumerate() {
                    let rest: Vec<u8> = target.iter().copied().filter(|&j| j != i).collect();
                    let slot = ak.binary_search(&rest).unwrap();
                    let sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
                    let mut beta = vec![0u32; x.len()];
                    beta[i as usize] = 1;
                    total += sign * component_deriv(&c1, slot, &beta, x);
                }
                total
            })
            .collect()
    });

    let c2 = comps;
    let derivs: DerivFn = Arc::new(move |x: &[f64], beta: &[u32]| {
        (0..c2.len())
            .map(|slot| component_deriv(&c2, slot, beta, x))
            .collect()
    });

    SampledForm::new(n, k, coeffs)
        .with_d(d_coeffs)
        .with_derivs(derivs)
}

/// Builds a manufactured target for a study.
pub fn manufactured_target(
    spec: &TargetSpec,
    n: usize,
    k: usize,
    r: u32,
    family: Family,
    base: &Arc<SimplicialComplex>,
) -> Result<SampledForm> {
    let ncomp = subsets_k(0, n as u8, k).len();
    match spec {
        TargetSpec::Zero => Ok(SampledForm::zero(n, k)),
        TargetSpec::Trig => {
            // Frequencies scale with 2/n, keeping the per-cell variation of
            // the target comparable across dimensions.
            let scale = 2.0 / n as f64;
            let comps = (0..ncomp)
                .map(|j| {
                    vec![SeparableScalar {
                        amp: 1.0,
                        factors: (0..n)
                            .map(|i| {
                                let f = scale
                                    * std::f64::consts::PI
                                    * (1.0 + 0.125 * (i + j) as f64);
                                let p = 0.35 + 0.2 * i as f64 + 0.45 * j as f64;
                                (Some((f, p)), Vec::new())
                            })
                            .collect(),
                    }]
                })
                .collect();
            Ok(sampled_from_components(n, k, comps))
        }
        TargetSpec::Poly { degree } => {
            // Sum of single-axis terms so the total degree stays bounded by
            // the requested one.
            let comps = (0..ncomp)
                .map(|j| {
                    let mut terms = vec![SeparableScalar {
                        amp: 0.4 + 0.3 * j as f64,
                        factors: vec![(None, Vec::new()); n],
                    }];
                    for i in 0..n {
                        for d in 1..=*degree {
                            let mut factors = vec![(None, Vec::new()); n];
                            let mut poly = vec![0.0; d as usize + 1];
                            poly[d as usize] = 1.0;
                            factors[i] = (None, poly);
                            terms.push(SeparableScalar {
                                amp: 0.25 / d as f64 + 0.1 * i as f64 - 0.15 * j as f64,
                                factors,
                            });
                        }
                    }
                    terms
                })
                .collect();
            Ok(sampled_from_components(n, k, comps))
        }
        TargetSpec::BcTrig { plane_axis } => {
            let comps = (0..ncomp)
                .map(|j| {
                    vec![SeparableScalar {
                        amp: 1.0,
                        factors: (0..n)
                            .map(|i| {
                                let f = std::f64::consts::PI * (1.0 + 0.125 * (i + j) as f64);
                                let p = 0.35 + 0.2 * i as f64 + 0.45 * j as f64;
                                let bump = match plane_axis {
                                    // Vanishing on the whole box boundary: x(1−x).
                                    None => vec![0.0, 1.0, -1.0],
                                    Some(a) if *a == i => vec![0.0, 1.0],
                                    Some(_) => Vec::new(),
                                };
                                (Some((f, p)), bump)
                            })
                            .collect(),
                    }]
                })
                .collect();
            Ok(sampled_from_components(n, k, comps))
        }
        TargetSpec::BrokenFe {
            degree_offset,
            seed,
        } => {
            use rand::prelude::*;
            use rand_chacha::ChaCha8Rng;
            let system = build_biorthogonal(base, family, r + degree_offset, k)?;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let coeffs = nalgebra::DVector::from_fn(system.dim(), |_, _| rng.gen_range(-1.0..1.0));
            Ok(fe_sampled_form(&system.space, &coeffs))
        }
    }
}

/// Resolves (family, k) from either explicit fields or a named 3D space.
pub fn resolve_family(config: &StudyConfig, n: usize) -> Result<(Family, usize)> {
    match (&config.space, config.family, config.k) {
        (Some(name), _, _) => family_of_name(name),
        (None, Some(f), Some(k)) => Ok((f.normalized(k, n), k)),
        _ => Err(FeecError::InvalidConfig(
            "need either `space` or both `family` and `k`".into(),
        )),
    }
}

fn boundary_of(spec: &BoundarySpec, complex: &SimplicialComplex) -> Result<BoundarySubcomplex> {
    match spec {
        BoundarySpec::None => Ok(BoundarySubcomplex::empty()),
        BoundarySpec::Full => Ok(complex.full_boundary()),
        BoundarySpec::Facets { facets } => complex.subcomplex_from_facets(facets),
    }
}

fn base_mesh(spec: &MeshSpec) -> Result<SimplicialComplex> {
    match spec {
        MeshSpec::Square => Ok(unit_square_mesh(0)),
        MeshSpec::Cube => Ok(unit_cube_mesh(0)),
        MeshSpec::File { path } => {
            let text = std::fs::read_to_string(path)?;
            let file: MeshFile = serde_json::from_str(&text)?;
            let (complex, _) = file.build()?;
            Ok(complex)
        }
    }
}

/// Runs one interpolation on one mesh level.
pub fn run_level(
    system: &BiorthogonalSystem,
    interpolant: InterpolantKind,
    bc: &BoundarySubcomplex,
    target: &SampledForm,
    opts: &InterpOptions,
) -> Result<InterpolantResult> {
    match interpolant {
        InterpolantKind::Clement => clement(system, target, opts),
        InterpolantKind::ClementBc => clement_bc(system, target, bc, opts),
        InterpolantKind::ScottZhang => {
            let complex = system.complex();
            let fdt = FacetDualTables::build(system.space.tables.clone(), system.pairs.clone())?;
            let anchors = complex.choose_anchors(bc)?;
            let kf = KFunctionals::build(complex, &system.space, &fdt, &anchors);
            let bc_opt = (!bc.is_empty()).then_some(bc);
            scott_zhang(system, &kf, target, bc_opt, opts)
        }
    }
}

/// Runs a full refinement study and optionally writes results.csv,
/// report.json, and the per-level meshes into `out_dir`.
pub fn run_study(config: &StudyConfig, out_dir: Option<&Path>) -> Result<RateReport> {
    let base = Arc::new(base_mesh(&config.mesh)?);
    let n = base.n;
    let (family, k) = resolve_family(config, n)?;
    let p = lp_of(&config.p)?;
    let order = config
        .quadrature_order
        .unwrap_or(2 * config.r as usize + 6);
    let opts = InterpOptions {
        order: config.quadrature_order.unwrap_or(2 * config.r as usize + 4),
    };
    let target = manufactured_target(&config.target, n, k, config.r, family, &base)?;

    let mut levels = Vec::new();
    let mut biorth_constants = Vec::new();
    let mut complex = base;
    for level in 0..config.levels.max(1) {
        if level > 0 {
            complex = Arc::new(complex.refine_uniform()?);
        }
        let bc = boundary_of(&config.boundary, &complex)?;
        let system = build_biorthogonal(&complex, family, config.r, k)?;
        let result = run_level(&system, config.interpolant, &bc, &target, &opts)?;
        let per_cell: Vec<PolyForm> = complex
            .cells()
            .iter()
            .map(|&t| result.on_cell(&system.space, t))
            .collect();
        let error = lp_norm_diff(
            &complex,
            complex.cells(),
            &target,
            |t| Some(&per_cell[system.space.cell_position(t)]),
            p,
            order,
        );
        let per_cell_max = complex
            .cells()
            .iter()
            .map(|&t| {
                lp_norm_diff(
                    &complex,
                    &[t],
                    &target,
                    |_| Some(&per_cell[system.space.cell_position(t)]),
                    p,
                    order,
                )
            })
            .fold(0.0, f64::max);
        let stability =
            crate::interp::stability_constant(&system, &result, &target, p, opts.order);
        biorth_constants.push(system.measure_constants(p, config.seed));
        levels.push(LevelReport {
            level,
            h_max: complex.h_max(),
            error,
            per_cell_max,
            stability,
            dofs: system.dim(),
        });
        if let Some(dir) = out_dir {
            std::fs::create_dir_all(dir)?;
            let file = MeshFile::from_complex(&complex, &bc);
            std::fs::write(
                dir.join(format!("mesh_level{level}.json")),
                serde_json::to_string_pretty(&file)?,
            )?;
        }
    }

    let all: Vec<(f64, f64)> = levels.iter().map(|l| (l.h_max, l.error)).collect();
    let slope_all = fit_slope(&all);
    let slope_main = if all.len() >= 4 {
        fit_slope(&all[1..])
    } else {
        slope_all
    };
    let slope_last_two = fit_slope(&all[all.len().saturating_sub(2)..]);
    let report = RateReport {
        config: config.clone(),
        levels,
        slope_all,
        slope_main,
        slope_last_two,
        biorth_constants,
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("results.csv"), report.to_csv())?;
        std::fs::write(
            dir.join("report.json"),
            serde_json::to_string_pretty(&report)?,
        )?;
    }
    Ok(report)
}

/// Property suites mirroring the acceptance criteria, runnable from the CLI.
pub mod verify {
    use super::*;
    use crate::dofs::{build_dof_set, build_dual_pairs};
    use crate::exterior::chart::Chart;
    use crate::exterior::polyform::{coordinate_differential, coordinate_form, random_polyform};
    use crate::exterior::lp_norm_poly;
    use crate::spaces::{
        koszul_space_equivalence, local_basis, ring_basis, CanonSpace, ElementTables,
    };
    use nalgebra::{DMatrix, DVector};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// One named pass/fail check with a measured detail.
    #[derive(Clone, Debug, Serialize)]
    pub struct Check {
        pub name: String,
        pub passed: bool,
        pub detail: String,
    }

    impl Check {
        fn residual(name: &str, residual: f64, tol: f64) -> Check {
            Check {
                name: name.to_string(),
                passed: residual < tol,
                detail: format!("residual {residual:.3e} (tol {tol:.0e})"),
            }
        }
    }

    /// Exterior algebra identities over random polynomial forms.
    pub fn algebra_suite(seed: u64) -> Vec<Check> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut checks = Vec::new();
        let trials = 50;

        let mut dd: f64 = 0.0;
        let mut leibniz: f64 = 0.0;
        let mut kk: f64 = 0.0;
        let mut naturality: f64 = 0.0;
        for n in 2..=3usize {
            let chart = Chart::reference(n);
            for k in 0..=n {
                for _ in 0..trials {
                    let omega = random_polyform(&chart, k, 3, &mut rng);
                    dd = dd.max(
                        omega
                            .exterior_derivative()
                            .exterior_derivative()
                            .coeff_norm(),
                    );
                    if k >= 2 {
                        kk = kk.max(omega.koszul_barycenter().koszul_barycenter().coeff_norm());
                    }
                    if k < n {
                        let eta = random_polyform(&chart, n - k - 1, 3, &mut rng);
                        let lhs = omega.wedge(&eta).unwrap().exterior_derivative();
                        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                        let rhs = omega
                            .exterior_derivative()
                            .wedge(&eta)
                            .unwrap()
                            .add(&omega.wedge(&eta.exterior_derivative()).unwrap().scale(sign));
                        leibniz = leibniz.max(lhs.coeff_distance(&rhs));
                    }
                    // Trace naturality: commutes with d on the first facet.
                    let keep: Vec<usize> = (0..n).collect();
                    let fchart = Chart::reference(n - 1);
                    if k < n {
                        let a = omega
                            .exterior_derivative()
                            .trace(&fchart, &keep)
                            .unwrap();
                        let b = omega.trace(&fchart, &keep).unwrap().exterior_derivative();
                        naturality = naturality.max(a.coeff_distance(&b));
                    }
                }
            }
        }
        checks.push(Check::residual("d∘d = 0", dd, 1e-10));
        checks.push(Check::residual("Leibniz rule", leibniz, 1e-10));
        checks.push(Check::residual("κ∘κ = 0", kk, 1e-10));
        checks.push(Check::residual("trace∘d = d∘trace", naturality, 1e-10));

        // Stokes on mesh cells.
        let mut stokes: f64 = 0.0;
        for complex in [unit_square_mesh(0), unit_cube_mesh(0)] {
            for &t in complex.cells() {
                let chart = Chart::of_simplex(&complex, t);
                for _ in 0..trials {
                    let omega = random_polyform(&chart, complex.n - 1, 3, &mut rng);
                    let lhs = omega.exterior_derivative().integrate().unwrap();
                    let mut rhs = 0.0;
                    for &(f, sign) in complex.facets_of_cell(t) {
                        let fchart = Chart::of_simplex(&complex, f);
                        let keep: Vec<usize> = complex.simplex(f)
                            .vertex_ids
                            .iter()
                            .map(|v| {
                                complex.simplex(t)
                                    .vertex_ids
                                    .iter()
                                    .position(|w| w == v)
                                    .unwrap()
                            })
                            .collect();
                        rhs += sign as f64
                            * omega.trace(&fchart, &keep).unwrap().integrate().unwrap();
                    }
                    stokes = stokes.max((lhs - rhs).abs());
                }
            }
        }
        checks.push(Check::residual("Stokes on a simplex", stokes, 1e-10));

        // Koszul homotopy on Cartesian-homogeneous pieces about a vertex.
        let mut homotopy: f64 = 0.0;
        for n in 2..=3usize {
            let chart = Chart::reference(n);
            let base = {
                let mut b = vec![0.0; n + 1];
                b[0] = 1.0;
                b
            };
            for k in 1..=n {
                for s in 0..=2u32 {
                    // ω: random combination of x^γ dx_J with |γ| = s.
                    let mut omega = PolyForm::zero(chart.clone(), k);
                    for axes in subsets_k(0, n as u8, k) {
                        let mut factor = PolyForm::one(chart.clone())
                            .scale(rng.gen_range(-1.0..1.0f64));
                        for _ in 0..s {
                            let i = rng.gen_range(0..n);
                            factor = factor.wedge(&coordinate_form(&chart, i)).unwrap();
                        }
                        for &i in &axes {
                            factor = factor
                                .wedge(&coordinate_differential(&chart, i as usize))
                                .unwrap();
                        }
                        omega = omega.add(&factor);
                    }
                    let lhs = omega
                        .koszul(&base)
                        .exterior_derivative()
                        .add(&omega.exterior_derivative().koszul(&base));
                    let factor = (s + k as u32) as f64;
                    homotopy = homotopy.max(lhs.coeff_distance(&omega.scale(factor)));
                }
            }
        }
        checks.push(Check::residual("κ homotopy dκ+κd = (r+k)·id", homotopy, 1e-10));
        checks
    }

    fn binom(n: usize, k: usize) -> usize {
        if k > n {
            return 0;
        }
        let mut v = 1usize;
        for i in 0..k {
            v = v * (n - i) / (i + 1);
        }
        v
    }

    /// Space dimensions, inclusions, derivative image spaces, Koszul
    /// equivalence.
    pub fn space_suite() -> Vec<Check> {
        let mut checks = Vec::new();
        let mut dims_ok = true;
        let mut detail = String::new();
        for d in 1..=3usize {
            let chart = Chart::reference(d);
            for r in 1..=3u32 {
                for k in 0..=d {
                    let full = local_basis(&chart, Family::Full, r, k).dim();
                    let expect_full = binom(r as usize + d, d) * binom(d, k);
                    let trimmed = local_basis(&chart, Family::Trimmed, r, k).dim();
                    let expect_trimmed = if k == 0 {
                        expect_full
                    } else {
                        binom(r as usize + k - 1, k) * binom(d + r as usize, d - k)
                    };
                    if full != expect_full || trimmed != expect_trimmed {
                        dims_ok = false;
                        detail = format!("mismatch at d={d} r={r} k={k}");
                    }
                }
            }
        }
        checks.push(Check {
            name: "local space dimensions".into(),
            passed: dims_ok,
            detail: if dims_ok { "all (family, r ≤ 3, k, n ≤ 3) match".into() } else { detail },
        });

        let mut inclusion: f64 = 0.0;
        let mut image: f64 = 0.0;
        for d in 2..=3usize {
            let chart = Chart::reference(d);
            for k in 0..=d {
                for r in 1..=2u32 {
                    let full_r = local_basis(&chart, Family::Full, r, k);
                    let trim_r1 = local_basis(&chart, Family::Trimmed, r + 1, k);
                    let full_r1 = local_basis(&chart, Family::Full, r + 1, k);
                    let canon = CanonSpace::new(d, r + 1, k);
                    let mut a = DMatrix::zeros(canon.len(), full_r.dim());
                    for (j, f) in full_r.forms.iter().enumerate() {
                        a.set_column(j, &canon.to_vec(f));
                    }
                    let qa = crate::linalg::orthonormal_columns(&a, 1e-12);
                    for j in 0..qa.ncols() {
                        inclusion = inclusion.max(crate::linalg::membership_residual(
                            &qa.column(j).into_owned(),
                            &trim_r1.vectors,
                        ));
                    }
                    for j in 0..trim_r1.vectors.ncols() {
                        inclusion = inclusion.max(crate::linalg::membership_residual(
                            &trim_r1.vectors.column(j).into_owned(),
                            &full_r1.vectors,
                        ));
                    }
                    if k < d {
                        let canon_d = CanonSpace::new(d, r, k + 1);
                        let dmat = |basis: &crate::spaces::LocalBasis| {
                            let mut m = DMatrix::zeros(canon_d.len(), basis.dim());
                            for (j, f) in basis.forms.iter().enumerate() {
                                m.set_column(j, &canon_d.to_vec(&f.exterior_derivative()));
                            }
                            m
                        };
                        let dfull = dmat(&full_r1);
                        let dtrim = dmat(&trim_r1);
                        image = image.max(crate::linalg::mutual_span_residual(
                            &dfull, &dtrim, 1e-12,
                        ));
                        let target = local_basis(&chart, Family::Full, r, k + 1);
                        let q = crate::linalg::orthonormal_columns(&dfull, 1e-12);
                        for j in 0..q.ncols() {
                            image = image.max(crate::linalg::membership_residual(
                                &q.column(j).into_owned(),
                                &target.vectors,
                            ));
                        }
                    }
                }
            }
        }
        checks.push(Check::residual("P_r ⊆ P⁻_(r+1) ⊆ P_(r+1)", inclusion, 1e-9));
        checks.push(Check::residual("dP_(r+1) = dP⁻_(r+1) ⊆ P_rΛ^(k+1)", image, 1e-9));

        let mut koszul: f64 = 0.0;
        for d in 2..=3usize {
            let chart = Chart::reference(d);
            for r in 1..=2u32 {
                for k in 1..d {
                    koszul = koszul.max(koszul_space_equivalence(&chart, r, k));
                }
            }
        }
        checks.push(Check::residual("Koszul vs Whitney trimmed spaces", koszul, 1e-9));

        // Ring traces vanish.
        let mut ring_trace: f64 = 0.0;
        for d in 1..=3usize {
            let chart = Chart::reference(d);
            for family in [Family::Full, Family::Trimmed] {
                for r in 1..=2u32 {
                    for k in 0..=d {
                        let ring = ring_basis(&chart, family, r, k);
                        for form in &ring.forms {
                            for fsize in 1..=d {
                                for g in subsets_k(0, d as u8 + 1, fsize) {
                                    if g.len() == d + 1 {
                                        continue;
                                    }
                                    let gpos: Vec<usize> =
                                        g.iter().map(|&p| p as usize).collect();
                                    let fchart = Chart::reference(gpos.len() - 1);
                                    ring_trace = ring_trace
                                        .max(form.trace(&fchart, &gpos).unwrap().coeff_norm());
                                }
                            }
                        }
                    }
                }
            }
        }
        checks.push(Check::residual("ring space traces vanish", ring_trace, 1e-10));
        checks
    }

    /// Biorthogonality, locality, and constants across refinement levels.
    pub fn biorth_suite() -> Vec<Check> {
        let mut checks = Vec::new();
        let configs: [(&str, Family, u32, usize); 3] = [
            ("square full r2 k0", Family::Full, 2, 0),
            ("square trimmed r1 k1", Family::Trimmed, 1, 1),
            ("square full r1 k1", Family::Full, 1, 1),
        ];
        for (label, family, r, k) in configs {
            let mut biorth_res: f64 = 0.0;
            let mut locality_res: f64 = 0.0;
            let mut constants = Vec::new();
            for level in 0..=3usize {
                let complex = Arc::new(unit_square_mesh(level));
                let system = build_biorthogonal(&complex, family, r, k).unwrap();
                biorth_res = biorth_res.max(system.biorthogonality_residual());
                locality_res = locality_res.max(system.locality_residual());
                constants.push(system.measure_constants(LpExponent::Two, 0));
            }
            push_constant_checks(&mut checks, label, &constants);
            checks.push(Check::residual(
                &format!("{label}: biorthogonality"),
                biorth_res,
                1e-9,
            ));
            checks.push(Check::residual(
                &format!("{label}: locality"),
                locality_res,
                1e-9,
            ));
        }
        // Cube variants on coarser levels.
        for (label, family, r, k) in [("cube trimmed r1 k1", Family::Trimmed, 1u32, 1usize)] {
            let mut biorth_res: f64 = 0.0;
            let mut locality_res: f64 = 0.0;
            let mut constants = Vec::new();
            for level in 0..=2usize {
                let complex = Arc::new(unit_cube_mesh(level));
                let system = build_biorthogonal(&complex, family, r, k).unwrap();
                biorth_res = biorth_res.max(system.biorthogonality_residual());
                locality_res = locality_res.max(system.locality_residual());
                constants.push(system.measure_constants(LpExponent::Two, 0));
            }
            push_constant_checks(&mut checks, label, &constants);
            checks.push(Check::residual(
                &format!("{label}: biorthogonality"),
                biorth_res,
                1e-9,
            ));
            checks.push(Check::residual(
                &format!("{label}: locality"),
                locality_res,
                1e-9,
            ));
        }
        checks
    }

    fn push_constant_checks(checks: &mut Vec<Check>, label: &str, constants: &[ConstantsReport]) {
        let max_var = constants
            .windows(2)
            .map(|w| (w[1].norm_constant / w[0].norm_constant - 1.0).abs())
            .fold(0.0, f64::max);
        checks.push(Check {
            name: format!("{label}: norm constants stable"),
            passed: max_var < 0.05,
            detail: format!("max level-to-level variation {:.2}%", 100.0 * max_var),
        });
        let worst_ratio = constants
            .windows(2)
            .map(|w| w[1].ratio_constant / w[0].ratio_constant)
            .fold(1.0f64, |a, r| a.max(r).max(1.0 / r));
        checks.push(Check {
            name: format!("{label}: operator constants bounded"),
            passed: (0.5..=2.0).contains(&(1.0 / worst_ratio)) || worst_ratio <= 2.0,
            detail: format!("max consecutive-level ratio {worst_ratio:.3}"),
        });
    }

    /// Facet moment identities, integration by parts, Ξ scaling.
    pub fn facetdual_suite(seed: u64) -> Vec<Check> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut checks = Vec::new();
        let mut moment: f64 = 0.0;
        let mut ibp_poly: f64 = 0.0;
        let mut ibp_smooth: f64 = 0.0;
        // Desk-scale cells (two refinements) keep the stated quadrature
        // order convergent well below the smooth-case tolerance.
        for (mesh, family, r, k) in [
            (Arc::new(unit_square_mesh(2)), Family::Full, 1u32, 0usize),
            (Arc::new(unit_square_mesh(2)), Family::Full, 2, 0),
            (Arc::new(unit_square_mesh(2)), Family::Trimmed, 1, 1),
            (Arc::new(unit_cube_mesh(2)), Family::Trimmed, 1, 1),
            (Arc::new(unit_cube_mesh(2)), Family::Trimmed, 1, 2),
        ] {
            let tables = Arc::new(ElementTables::build(family, r, k, mesh.n).unwrap());
            let pairs = Arc::new(build_dual_pairs(&tables).unwrap());
            let fdt = FacetDualTables::build(tables.clone(), pairs.clone()).unwrap();
            let dofs = build_dof_set(&mesh, &tables, &pairs);
            for &facet in mesh.simplices_of_dim(mesh.n - 1).iter().take(3) {
                let cell = mesh.containing_cells(facet)[0];
                let chart = Chart::of_simplex(&mesh, cell);
                let fverts = mesh.simplex(facet).vertex_ids.clone();
                for mask in 1u32..(1 << fverts.len()) {
                    let verts: Vec<usize> = (0..fverts.len())
                        .filter(|i| mask & (1 << i) != 0)
                        .map(|i| fverts[i])
                        .collect();
                    let sub = mesh.find(&verts).unwrap();
                    let m = mesh.simplex(sub).dim;
                    for i in 0..tables.ring_dim(m) {
                        moment =
                            moment.max(fdt.moment_residual(&mesh, &dofs, cell, facet, sub, i));
                        let xi = fdt.build_xi(&mesh, facet, sub, i).unwrap();
                        let ext = fdt.build_cell_extension(&mesh, cell, facet, sub, i);
                        for _ in 0..10 {
                            let omega = random_polyform(&chart, k, r, &mut rng);
                            ibp_poly = ibp_poly.max(crate::facetdual::ibp_residual_poly(
                                &mesh, &ext, &xi, &omega,
                            ));
                        }
                        // A smooth non-polynomial form.
                        let comps = (0..subsets_k(0, mesh.n as u8, k).len())
                            .map(|j| {
                                vec![SeparableScalar {
                                    amp: 0.8,
                                    factors: (0..mesh.n)
                                        .map(|a| {
                                            (Some((1.1 + 0.3 * (a + j) as f64, 0.2)), Vec::new())
                                        })
                                        .collect(),
                                }]
                            })
                            .collect();
                        let smooth = sampled_from_components(mesh.n, k, comps);
                        ibp_smooth = ibp_smooth.max(
                            crate::facetdual::ibp_residual_sampled(
                                &mesh,
                                &ext,
                                &xi,
                                &smooth,
                                2 * r as usize + 6,
                            )
                            .unwrap(),
                        );
                    }
                }
            }
        }
        checks.push(Check::residual("facet moment identity", moment, 1e-9));
        checks.push(Check::residual("integration by parts (polynomial)", ibp_poly, 1e-9));
        checks.push(Check::residual("integration by parts (smooth)", ibp_smooth, 1e-6));

        // Ξ scaling across refinement levels (q = 2):
        // h^{n−k−1−n/q}·‖Ξ‖ and h^{n−k−n/q}·‖dΞ‖ stay bounded.
        let mut ratios = Vec::new();
        for level in 0..3usize {
            let complex = Arc::new(unit_square_mesh(level));
            let (family, r, k) = (Family::Trimmed, 1, 1usize);
            let tables = Arc::new(ElementTables::build(family, r, k, 2).unwrap());
            let pairs = Arc::new(build_dual_pairs(&tables).unwrap());
            let fdt = FacetDualTables::build(tables, pairs).unwrap();
            let n = complex.n as f64;
            let mut xi_const: f64 = 0.0;
            let mut dxi_const: f64 = 0.0;
            for &facet in complex.simplices_of_dim(1) {
                let cell = complex.containing_cells(facet)[0];
                let h = complex.diameter(facet);
                let ext = fdt.build_cell_extension(&complex, cell, facet, facet, 0);
                let q = 2.0;
                let xi_n = lp_norm_poly(&ext.form, LpExponent::Two, 8);
                let dxi_n = lp_norm_poly(&ext.d_form, LpExponent::Two, 8);
                xi_const = xi_const.max(h.powf(n - k as f64 - 1.0 - n / q) * xi_n);
                dxi_const = dxi_const.max(h.powf(n - k as f64 - n / q) * dxi_n);
            }
            ratios.push((xi_const, dxi_const));
        }
        let max_ratio = ratios
            .windows(2)
            .map(|w| {
                (w[1].0 / w[0].0)
                    .max(w[0].0 / w[1].0)
                    .max(w[1].1 / w[0].1)
                    .max(w[0].1 / w[1].1)
            })
            .fold(0.0, f64::max);
        checks.push(Check {
            name: "Ξ scaling bounded across levels".into(),
            passed: max_ratio < 2.0,
            detail: format!("max level-to-level ratio {max_ratio:.3}"),
        });
        checks
    }

    /// Interpolant reproduction, K-matrix identity, and BC preservation.
    pub fn interp_suite() -> Vec<Check> {
        let mut checks = Vec::new();
        let mut reproduction: f64 = 0.0;
        let mut k_matrix: f64 = 0.0;
        for (mesh, family, r, k) in [
            (Arc::new(unit_square_mesh(1)), Family::Full, 1u32, 0usize),
            (Arc::new(unit_square_mesh(1)), Family::Trimmed, 1, 1),
            (Arc::new(unit_square_mesh(0)), Family::Full, 2, 0),
        ] {
            let system = build_biorthogonal(&mesh, family, r, k).unwrap();
            let opts = InterpOptions::for_degree(r);
            let fdt =
                FacetDualTables::build(system.space.tables.clone(), system.pairs.clone()).unwrap();
            let anchors = mesh.choose_anchors(&BoundarySubcomplex::empty()).unwrap();
            let kf = KFunctionals::build(&mesh, &system.space, &fdt, &anchors);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            for _ in 0..3 {
                let coeffs =
                    DVector::from_fn(system.dim(), |_, _| rng.gen_range(-1.0..1.0f64));
                let fe = fe_sampled_form(&system.space, &coeffs);
                for kind in [
                    InterpolantKind::Clement,
                    InterpolantKind::ClementBc,
                    InterpolantKind::ScottZhang,
                ] {
                    let result = run_level(
                        &system,
                        kind,
                        &BoundarySubcomplex::empty(),
                        &fe,
                        &opts,
                    )
                    .unwrap();
                    reproduction =
                        reproduction.max((result.coeffs.clone() - &coeffs).norm());
                }
            }
            // K matrix against the biorthogonal basis.
            for g in 0..system.dim() {
                let coeffs = system.expand(&[(g, 1.0)]);
                for gp in 0..system.dim() {
                    let v = kf.apply_piecewise_poly(&system.space, &system.dofs, gp, |cell| {
                        let pos = system.space.cell_position(cell);
                        system.space.cell_form(pos, &coeffs)
                    });
                    let expect = if gp == g { 1.0 } else { 0.0 };
                    k_matrix = k_matrix.max((v - expect).abs());
                }
            }
        }
        checks.push(Check::residual(
            "interpolants reproduce FE forms",
            reproduction,
            1e-8,
        ));
        checks.push(Check::residual("K matrix = identity", k_matrix, 1e-8));

        // BC preservation on boundary-condition data.
        let mesh = Arc::new(unit_square_mesh(1));
        let boundary = mesh.full_boundary();
        let mut trace_res: f64 = 0.0;
        let mut k_boundary: f64 = 0.0;
        for (family, r, k) in [(Family::Full, 1u32, 0usize), (Family::Trimmed, 1, 1)] {
            let system = build_biorthogonal(&mesh, family, r, k).unwrap();
            let opts = InterpOptions::for_degree(r);
            let target = manufactured_target(
                &TargetSpec::BcTrig { plane_axis: None },
                2,
                k,
                r,
                family,
                &mesh,
            )
            .unwrap();
            let fdt =
                FacetDualTables::build(system.space.tables.clone(), system.pairs.clone()).unwrap();
            let anchors = mesh.choose_anchors(&boundary).unwrap();
            let kf = KFunctionals::build(&mesh, &system.space, &fdt, &anchors);
            // K of boundary dofs before forced zeroing.
            for g in 0..system.dim() {
                let (s, _) = system.space.dofs[g];
                if boundary.contains(s) {
                    let v = kf
                        .apply_sampled(&system.space, &system.dofs, g, &target, opts.order + 4)
                        .unwrap();
                    k_boundary = k_boundary.max(v.abs());
                }
            }
            for kind in [InterpolantKind::ClementBc, InterpolantKind::ScottZhang] {
                let result = run_level(&system, kind, &boundary, &target, &opts).unwrap();
                for b in boundary.members() {
                    if mesh.simplex(b).dim < k {
                        continue;
                    }
                    let cell = mesh.containing_cells(b)[0];
                    let pos = system.space.cell_position(cell);
                    let form = system.space.cell_form(pos, &result.coeffs);
                    let positions: Vec<usize> = system
                        .space
                        .positions_in(b, cell)
                        .iter()
                        .map(|&p| p as usize)
                        .collect();
                    let fchart = Chart::of_simplex(&mesh, b);
                    trace_res = trace_res
                        .max(form.trace(&fchart, &positions).unwrap().coeff_norm());
                }
            }
        }
        checks.push(Check::residual(
            "BC outputs have zero boundary traces",
            trace_res,
            1e-9,
        ));
        checks.push(Check::residual(
            "K vanishes on boundary dofs for BC data",
            k_boundary,
            1e-6,
        ));
        checks
    }

    /// Proxy dimensions and curl/div correspondences.
    pub fn proxy_suite() -> Vec<Check> {
        use crate::proxy3d::{space_by_name, ProxyField, ProxyKind};
        let mut checks = Vec::new();
        let tet = Arc::new(
            crate::mesh::build_complex(
                vec![
                    vec![0.0, 0.0, 0.0],
                    vec![1.0, 0.0, 0.0],
                    vec![0.0, 1.0, 0.0],
                    vec![0.0, 0.0, 1.0],
                ],
                vec![vec![0, 1, 2, 3]],
            )
            .unwrap(),
        );
        let none = BoundarySubcomplex::empty();
        let dims = [
            ("ned1", 6usize),
            ("rt", 4),
            ("bdm", 12),
            ("ned2", 12),
        ];
        let mut dims_ok = true;
        for (name, expect) in dims {
            let got = space_by_name(name, 1, &tet, &none).unwrap().dim();
            if got != expect {
                dims_ok = false;
            }
        }
        checks.push(Check {
            name: "lowest-order proxy space dimensions".into(),
            passed: dims_ok,
            detail: "ned1=6, rt=4, bdm=12, ned2=12 per tetrahedron".into(),
        });

        let u = ProxyField::new(
            ProxyKind::Circulation,
            Arc::new(|x: &[f64]| vec![x[1] * x[2], (x[0] * 1.3).sin(), x[0] * x[1]]),
        )
        .with_derivative(Arc::new(|x: &[f64]| {
            vec![x[0], x[1] - x[1], 1.3 * (x[0] * 1.3).cos() - x[2]]
        }));
        let v = ProxyField::new(
            ProxyKind::Flux,
            Arc::new(|x: &[f64]| vec![x[0] * x[0], x[1] * x[2], (x[2] * 0.7).cos()]),
        )
        .with_derivative(Arc::new(|x: &[f64]| {
            vec![2.0 * x[0] + x[2] - 0.7 * (x[2] * 0.7).sin()]
        }));
        let samples: Vec<Vec<f64>> = vec![
            vec![0.2, 0.3, 0.4],
            vec![0.7, 0.1, 0.5],
            vec![0.35, 0.8, 0.15],
        ];
        let res = u
            .d_correspondence_residual(&samples)
            .max(v.d_correspondence_residual(&samples));
        checks.push(Check::residual("curl/div correspondence", res, 1e-4));
        checks
    }
}
