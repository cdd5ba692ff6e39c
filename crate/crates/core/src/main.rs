use std::error::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use phasefield::anisotropy::{AnisotropyDensity, Vector};
use phasefield::diagnostics::zero_level_set;
use phasefield::fem::Discretization;
use phasefield::io::config::{AnisotropySpec, RunConfig};
use phasefield::io::csv::{EnergyCsv, EnergyRecord};
use phasefield::io::manifest::RunManifest;
use phasefield::io::vtk::write_vtk_snapshot;
use phasefield::mesh::SimplicialMesh;
use phasefield::schemes::{
    geometry_center, initial_profile, initial_state, run_simulation, step, Geometry, SchemeKind,
};

type AnyResult<T> = Result<T, Box<dyn Error + Send + Sync>>;

#[derive(Parser)]
#[command(name = "phasefield", version, about = "Anisotropic Allen-Cahn and Cahn-Hilliard phase field solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation and write the energy log, snapshots and manifest.
    Run {
        config: PathBuf,
        /// Overrides the output directory of the configuration.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the stability inequalities of an anisotropy on random pairs.
    VerifyAnisotropy {
        /// e.g. `iso`, `l1reg:0.01`, `l1reg:0.01:rot=45`, `g:1,0,0,2`.
        spec: String,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Run a few steps at multiples of the implicit-potential step bound, with
    /// the stable scheme and with the implicit variant.
    StabilitySweep {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 100.0, 1e4])]
        tau_factors: Vec<f64>,
        #[arg(long, default_value_t = 50)]
        steps: usize,
    },
    /// Compare the zero level set radius of an Allen-Cahn run started from a
    /// circle or sphere with the isotropic law r(t)² = r₀² − 2(d−1)t.
    BenchmarkCircle {
        config: PathBuf,
        /// Measure every this many steps.
        #[arg(long, default_value_t = 100)]
        every: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out } => load(&config).and_then(|c| match c.dim {
            2 => run::<2>(&c, out),
            _ => run::<3>(&c, out),
        }),
        Command::VerifyAnisotropy { spec, dim, samples, seed } => match dim {
            2 => verify::<2>(&spec, samples, seed),
            3 => verify::<3>(&spec, samples, seed),
            _ => Err("--dim must be 2 or 3".into()),
        },
        Command::StabilitySweep { config, tau_factors, steps } => load(&config).and_then(|c| match c.dim {
            2 => sweep::<2>(&c, &tau_factors, steps),
            _ => sweep::<3>(&c, &tau_factors, steps),
        }),
        Command::BenchmarkCircle { config, every } => load(&config).and_then(|c| match c.dim {
            2 => benchmark::<2>(&c, every),
            _ => benchmark::<3>(&c, every),
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load(path: &Path) -> AnyResult<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(RunConfig::parse(&text)?)
}

fn setup<const D: usize>(config: &RunConfig) -> AnyResult<(Discretization<D>, AnisotropyDensity<D>, Vec<f64>)> {
    let mesh = SimplicialMesh::<D>::uniform(config.half_width, config.subdivisions)?;
    let disc = Discretization::new(mesh);
    let aniso = config.anisotropy.build::<D>()?;
    let u0 = initial_profile(&disc.mesh, config.scheme.eps(), &config.geometry)?;
    Ok((disc, aniso, u0))
}

fn run<const D: usize>(config: &RunConfig, out: Option<PathBuf>) -> AnyResult<bool> {
    let mut manifest = RunManifest::new(config.emit());
    let dir = out.unwrap_or_else(|| config.output.dir.join(&manifest.run_id));
    std::fs::create_dir_all(&dir)?;
    let (disc, aniso, u0) = setup::<D>(config)?;

    let csv_path = dir.join("energy.csv");
    let mut csv = EnergyCsv::open(&csv_path)?;
    manifest.files.push(csv_path);
    let every = config.scheme.snapshot_every;
    let total = config.scheme.num_steps();
    let mut clock = Instant::now();
    let summary = run_simulation(&config.scheme, &disc, &aniso, u0, |state| {
        if state.step > 0 {
            manifest.step_seconds.push(clock.elapsed().as_secs_f64());
        }
        csv.append(&EnergyRecord::from(state))?;
        let snapshot = state.step == 0 || state.step == total || (every > 0 && state.step % every == 0);
        if config.output.vtk && snapshot {
            let path = dir.join(format!("snapshot_{:06}.vtk", state.step));
            write_vtk_snapshot(&path, &disc.mesh, &[("U", &state.u), ("W", &state.w)])?;
            manifest.files.push(path);
        }
        clock = Instant::now();
        Ok(())
    });
    csv.flush()?;
    let manifest_path = dir.join("manifest.txt");
    manifest.files.push(manifest_path.clone());
    manifest.write(&manifest_path)?;
    let summary = summary?;
    let last = &summary.final_state;
    println!("run {} -> {}", manifest.run_id, dir.display());
    println!(
        "steps {}  t {:.6e}  E {:.10e}  mass {:.10e}",
        summary.steps, last.t, last.energy.e_gamma_h, last.energy.mass
    );
    println!(
        "max stability residual {:.3e}  stability violations {}  energy increases {}",
        summary.max_stability_residual, summary.stability_violations, summary.monotonicity_violations
    );
    Ok(summary.stability_violations == 0 && summary.monotonicity_violations == 0)
}

fn random_vector<const D: usize>(rng: &mut ChaCha8Rng) -> Vector<D> {
    let scale = 10f64.powf(rng.random_range(-3.0..3.0));
    Vector::<D>::from_fn(|_, _| rng.random_range(-1.0..1.0)) * scale
}

fn verify<const D: usize>(spec: &str, samples: usize, seed: u64) -> AnyResult<bool> {
    let aniso = AnisotropySpec::parse(spec)?.build::<D>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = ["dual_estimate", "monotonicity", "cauchy_schwarz", "linearized_monotonicity", "stability"];
    let mut worst = [f64::NEG_INFINITY; 5];
    for k in 0..samples {
        let p = random_vector::<D>(&mut rng);
        let q = match k % 10 {
            0 => Vector::<D>::zeros(),
            1 => p * rng.random_range(-2.0..2.0),
            _ => random_vector::<D>(&mut rng),
        };
        let r = aniso.inequality_residuals(&p, &q);
        let scale = 1.0 + p.norm_squared() + q.norm_squared();
        let vals = [r.dual_estimate, r.monotonicity, r.cauchy_schwarz, r.linearized_monotonicity, r.stability];
        for (w, v) in worst.iter_mut().zip(vals) {
            *w = w.max(v / scale);
        }
    }
    let tol = 1e-10;
    let mut ok = true;
    for (name, w) in names.iter().zip(worst) {
        let pass = w <= tol;
        ok &= pass;
        println!("{name:<24} max scaled residual {w:+.3e}  {}", if pass { "ok" } else { "VIOLATED" });
    }
    Ok(ok)
}

fn sweep<const D: usize>(config: &RunConfig, factors: &[f64], steps: usize) -> AnyResult<bool> {
    let (disc, aniso, u0) = setup::<D>(config)?;
    let bound = config.scheme.implicit_step_bound();
    let tol = 10.0 * config.scheme.solver.tol;
    println!("implicit step bound {bound:.6e}");
    println!("{:>10} {:>12} {:>9} {:>14} {:>10} {:>8}", "factor", "tau", "variant", "max_residual", "increases", "status");
    let mut stable_ok = true;
    for &factor in factors {
        for implicit in [false, true] {
            let mut scheme = config.scheme.clone();
            scheme.tau = factor * bound;
            scheme.implicit_potential = implicit;
            let mut state = initial_state(&scheme, &disc, &aniso, u0.clone())?;
            let (mut worst, mut increases, mut status) = (f64::NEG_INFINITY, 0, "ok".to_string());
            for _ in 0..steps {
                match step(&state, &scheme, &disc, &aniso) {
                    Ok(next) => {
                        if !next.stats.converged {
                            status = format!("unconverged@{}", next.step);
                        }
                        worst = worst.max(next.energy.stability_residual);
                        if next.energy.monitored() > state.energy.monitored() + tol {
                            increases += 1;
                        }
                        state = next;
                        if !state.stats.converged {
                            break;
                        }
                    }
                    Err(e) => {
                        status = format!("failed: {e}");
                        break;
                    }
                }
            }
            if !implicit && (status != "ok" || increases > 0 || worst > tol) {
                stable_ok = false;
            }
            let variant = if implicit { "implicit" } else { "stable" };
            println!("{factor:>10.3e} {:>12.4e} {variant:>9} {worst:>14.3e} {increases:>10} {status}", scheme.tau);
        }
    }
    Ok(stable_ok)
}

fn benchmark<const D: usize>(config: &RunConfig, every: usize) -> AnyResult<bool> {
    if config.scheme.scheme != SchemeKind::AllenCahn {
        return Err("benchmark-circle needs scheme = allen_cahn".into());
    }
    let Geometry::Ball { radius, .. } = &config.geometry else {
        return Err("benchmark-circle needs a circle or sphere geometry".into());
    };
    let r0 = *radius;
    let center = geometry_center::<D>(&config.geometry);
    let (disc, aniso, u0) = setup::<D>(config)?;
    let tolerance = (2.0 * disc.mesh.mesh_size()).max(config.scheme.eps());
    println!("{:>12} {:>12} {:>12} {:>12}", "t", "measured", "oracle", "error");
    let mut ok = true;
    let every = every.max(1);
    run_simulation(&config.scheme, &disc, &aniso, u0, |state| {
        if state.step % every != 0 {
            return Ok(());
        }
        let oracle2 = r0 * r0 - 2.0 * (D as f64 - 1.0) * state.t;
        let Some(measured) = zero_level_set(&disc.mesh, &state.u)?.mean_radius(&center) else {
            println!("{:>12.4e} {:>12} {:>12.6}", state.t, "-", oracle2.max(0.0).sqrt());
            return Ok(());
        };
        if oracle2 > 0.0 {
            let oracle = oracle2.sqrt();
            let err = measured - oracle;
            ok &= err.abs() <= tolerance;
            println!("{:>12.4e} {measured:>12.6} {oracle:>12.6} {err:>+12.3e}", state.t);
        }
        Ok(())
    })?;
    println!("tolerance max(2h, eps) = {tolerance:.4e}");
    Ok(ok)
}
