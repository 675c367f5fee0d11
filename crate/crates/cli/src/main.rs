//! Command line driver: convergence studies from JSON configs and the
//! property verification suites.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use feec::harness::{self, verify, StudyConfig};

#[derive(Parser)]
#[command(
    name = "interp",
    about = "Finite element differential forms: quasi-interpolation studies and property suites"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a refinement study from a JSON config and write CSV/JSON reports.
    Run {
        /// Path to the study configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for results.csv, report.json, and mesh echoes.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also dump the dense biorthogonality matrices [φ*(φ)] per level as
        /// CSV (small meshes only).
        #[arg(long)]
        dump_biorth: bool,
    },
    /// Run one of the property suites and report pass/fail per check.
    Verify {
        #[arg(long)]
        suite: Suite,
        /// Seed for the randomized checks.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Copy, Clone, ValueEnum)]
enum Suite {
    Algebra,
    Spaces,
    Biorth,
    Facetdual,
    Interp,
    Proxy,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            dump_biorth,
        } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", config.display());
                    return ExitCode::FAILURE;
                }
            };
            let parsed: StudyConfig = match serde_json::from_str(&text) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: invalid config: {e}");
                    return ExitCode::FAILURE;
                }
            };
            if dump_biorth {
                if let Err(e) = dump_biorth_matrices(&parsed, out.as_deref()) {
                    eprintln!("error: {e}");
                    return ExitCode::FAILURE;
                }
            }
            match harness::run_study(&parsed, out.as_deref()) {
                Ok(report) => {
                    print!("{}", report.to_csv());
                    println!(
                        "# slope(all) = {:.4}, slope(main) = {:.4}, slope(last two) = {:.4}",
                        report.slope_all, report.slope_main, report.slope_last_two
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
        Command::Verify { suite, seed } => {
            let checks = match suite {
                Suite::Algebra => verify::algebra_suite(seed),
                Suite::Spaces => verify::space_suite(),
                Suite::Biorth => verify::biorth_suite(),
                Suite::Facetdual => verify::facetdual_suite(seed),
                Suite::Interp => verify::interp_suite(),
                Suite::Proxy => verify::proxy_suite(),
            };
            let mut all_ok = true;
            for c in &checks {
                let status = if c.passed { "PASS" } else { "FAIL" };
                println!("[{status}] {} — {}", c.name, c.detail);
                all_ok &= c.passed;
            }
            if all_ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

/// Builds the biorthogonal system of each study level and writes the dense
/// [φ*(φ)] matrix as CSV.
fn dump_biorth_matrices(
    config: &StudyConfig,
    out: Option<&std::path::Path>,
) -> Result<(), Box<dyn std::error::Error>> {
    use std::sync::Arc;
    let dir = out.unwrap_or_else(|| std::path::Path::new("."));
    std::fs::create_dir_all(dir)?;
    let (family, k) = harness::resolve_family(config, mesh_dim(config))?;
    let mut complex = Arc::new(base_complex(config)?);
    for level in 0..config.levels.max(1) {
        if level > 0 {
            complex = Arc::new(complex.refine_uniform()?);
        }
        let system = feec::biorth::build_biorthogonal(&complex, family, config.r, k)?;
        let m = system.dense_matrix();
        let mut text = String::new();
        for i in 0..m.nrows() {
            let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.12e}", m[(i, j)])).collect();
            text.push_str(&row.join(","));
            text.push('\n');
        }
        std::fs::write(dir.join(format!("biorth_level{level}.csv")), text)?;
    }
    Ok(())
}

fn mesh_dim(config: &StudyConfig) -> usize {
    match &config.mesh {
        harness::MeshSpec::Square => 2,
        harness::MeshSpec::Cube => 3,
        harness::MeshSpec::File { path } => std::fs::read_to_string(path)
            .ok()
            .and_then(|t| serde_json::from_str::<feec::mesh::MeshFile>(&t).ok())
            .map(|f| f.dim)
            .unwrap_or(2),
    }
}

fn base_complex(config: &StudyConfig) -> feec::Result<feec::mesh::SimplicialComplex> {
    match &config.mesh {
        harness::MeshSpec::Square => Ok(feec::mesh::unit_square_mesh(0)),
        harness::MeshSpec::Cube => Ok(feec::mesh::unit_cube_mesh(0)),
        harness::MeshSpec::File { path } => {
            let text = std::fs::read_to_string(path)?;
            let file: feec::mesh::MeshFile = serde_json::from_str(&text)?;
            Ok(file.build()?.0)
        }
    }
}
