//! Command-line front end. Exit codes: 0 success, 1 validation or runtime
//! failure, 2 usage error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::integrator::IntegratorConfig;
use crate::io::{
    export_point_cloud, export_profile, export_trajectory, import_profile, import_trajectory, render_svg,
    sample_hypersurface, write_atomic, LabeledCurve, Metadata, ProfileDocument, SvgOptions,
};
use crate::linear::{discriminant_integrality_scan, indicial_roots, numeric_indicial_probe, Variant};
use crate::ode::{known_solutions, shrinker_residual, PhaseState, SymmetryParams};
use crate::profile::{build_closed_profile, SEAM_TOL};
use crate::shooting::{default_bracket, explore, find_all_rstar, find_rstar, shoot, shooting_function, RStarResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const DEFAULT_SEED: u64 = 0x005E_ED0F_5A4E;
pub const DEFAULT_FIXTURES: &str = "crates/core/tests/fixtures/golden.json";

#[derive(Debug, Parser)]
#[command(
    name = "shrinker",
    version,
    about = "Closed O(n)xO(n)-invariant self-shrinkers by shooting from the diagonal"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct IntegratorArgs {
    /// Relative tolerance of the integrator.
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    abs_tol: Option<f64>,
    /// Largest step.
    #[arg(long)]
    h_max: Option<f64>,
    /// Width of the guard band at the axes.
    #[arg(long)]
    eps_axis: Option<f64>,
    /// Longest arc length before a run is stopped.
    #[arg(long)]
    t_max: Option<f64>,
}

impl IntegratorArgs {
    fn config(&self) -> Result<IntegratorConfig, CliError> {
        let d = IntegratorConfig::default();
        let cfg = IntegratorConfig {
            rel_tol: self.rel_tol.unwrap_or(d.rel_tol),
            abs_tol: self.abs_tol.unwrap_or(d.abs_tol),
            h_max: self.h_max.unwrap_or(d.h_max),
            eps_axis: self.eps_axis.unwrap_or(d.eps_axis),
            t_max: self.t_max.unwrap_or(d.t_max),
            ..d
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    Printed,
    Rederived,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Residuals of the exact solution families.
    VerifyKnown {
        #[arg(long)]
        m: u32,
        #[arg(long)]
        n: u32,
        /// Samples per family.
        #[arg(long, default_value_t = 256)]
        samples: usize,
    },
    /// One shot from the diagonal at distance R from the origin.
    Shoot {
        #[arg(long)]
        n: u32,
        #[arg(long)]
        radius: f64,
        /// Relative tolerance of the integrator.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        integrator: IntegratorArgs,
    },
    /// Solve for R*, assemble and certify the closed profile.
    FindClosed {
        #[arg(long)]
        n: u32,
        /// Search bracket as LO:HI.
        #[arg(long)]
        bracket: Option<String>,
        /// Tolerance on the return angle and distance.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 1e-3)]
        resample_h: f64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        integrator: IntegratorArgs,
    },
    /// Indicial roots of the linearization about the diagonal.
    Indicial {
        #[arg(long)]
        n: u32,
        #[arg(long, value_enum, default_value = "printed")]
        variant: VariantArg,
        /// Also run the nonlinear probe.
        #[arg(long)]
        probe: bool,
    },
    /// Long integration from arbitrary data, reporting near-closures.
    Explore {
        #[arg(long)]
        n: u32,
        /// Defaults to n.
        #[arg(long)]
        m: Option<u32>,
        #[arg(long)]
        x: f64,
        #[arg(long)]
        y: f64,
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        tmax: f64,
        /// Largest gap reported as a near-closure.
        #[arg(long, default_value_t = 1e-2)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        integrator: IntegratorArgs,
    },
    /// SVG of trajectories (.csv) and profiles (.json).
    Plot {
        #[arg(long = "in", num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Symmetry used for the line ℓ; read from profiles when omitted.
        #[arg(long)]
        m: Option<u32>,
        #[arg(long)]
        n: Option<u32>,
        #[arg(long, default_value_t = 640.0)]
        width: f64,
        #[arg(long, default_value_t = 640.0)]
        height: f64,
    },
    /// Point cloud of the hypersurface over a profile.
    Surface {
        #[arg(long = "in")]
        input: PathBuf,
        /// Points per profile vertex.
        #[arg(long)]
        counts: usize,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the seed recorded in the profile.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check R* against the golden fixtures, or rewrite them.
    Golden {
        #[arg(long, default_value = DEFAULT_FIXTURES)]
        fixtures: PathBuf,
        #[arg(long)]
        regolden: bool,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failure(String),
}

macro_rules! fail {
    ($e:expr) => {
        $e.map_err(|e| CliError::Failure(e.to_string()))
    };
}

fn params(m: u32, n: u32) -> Result<SymmetryParams, CliError> {
    SymmetryParams::new(m, n).map_err(|e| CliError::Usage(e.to_string()))
}

/// Runs the command line and returns the process exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            if code != 0 {
                print_subcommand_help(&args);
            }
            return if code == 0 { EXIT_OK } else { EXIT_USAGE };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            print_subcommand_help(&args);
            EXIT_USAGE
        }
        Err(CliError::Failure(msg)) => {
            eprintln!("error: {msg}");
            EXIT_FAILURE
        }
    }
}

fn print_subcommand_help(args: &[OsString]) {
    let mut cmd = Cli::command();
    let name = args.get(1).and_then(|a| a.to_str()).unwrap_or("");
    if let Some(sub) = cmd.find_subcommand_mut(name) {
        eprintln!("{}", sub.render_help());
    }
}

fn run(command: Command) -> Result<i32, CliError> {
    match command {
        Command::VerifyKnown { m, n, samples } => verify_known(m, n, samples),
        Command::Shoot {
            n,
            radius,
            tol,
            out,
            integrator,
        } => {
            let p = params(n, n)?;
            let mut cfg = integrator.config()?;
            if let Some(t) = tol {
                cfg.rel_tol = t;
                cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            }
            let shot = shoot(radius, &p, &cfg).map_err(|e| CliError::Usage(e.to_string()))?;
            fail!(export_trajectory(&shot.trajectory, &out))?;
            let term = shot.trajectory.terminal();
            println!("R = {radius:.17e}");
            println!("outcome = {}", shot.outcome.label());
            println!("terminal event = {}", term.kind.name());
            println!(
                "terminal (x, y, theta) = ({:.17e}, {:.17e}, {:.17e})",
                term.state.x, term.state.y, term.state.theta
            );
            match shooting_function(&shot) {
                Ok(v) => println!("shooting value = {v:.17e}"),
                Err(_) => println!("shooting value = undefined"),
            }
            println!("samples = {}", shot.trajectory.samples().len());
            Ok(EXIT_OK)
        }
        Command::FindClosed {
            n,
            bracket,
            tol,
            resample_h,
            out,
            integrator,
        } => find_closed(n, bracket.as_deref(), tol, resample_h, &out, &integrator.config()?),
        Command::Indicial { n, variant, probe } => indicial(n, variant, probe),
        Command::Explore {
            n,
            m,
            x,
            y,
            theta,
            tmax,
            threshold,
            out,
            integrator,
        } => {
            let p = params(m.unwrap_or(n), n)?;
            let cfg = integrator.config()?;
            if !(x > 0.0 && y > 0.0 && tmax > 0.0) {
                return Err(CliError::Usage("need x > 0, y > 0 and tmax > 0".into()));
            }
            let ex = fail!(explore(PhaseState::new(x, y, theta), &p, &cfg, tmax, threshold))?;
            fail!(export_trajectory(&ex.trajectory, &out))?;
            println!("terminal event = {}", ex.trajectory.terminal().kind.name());
            println!("arc length = {:.17e}", ex.trajectory.t_end());
            println!("near closures = {}", ex.near_closures.len());
            for c in &ex.near_closures {
                println!("  t = {:.17e}  gap = {:.17e}", c.t, c.gap);
            }
            Ok(EXIT_OK)
        }
        Command::Plot {
            inputs,
            out,
            m,
            n,
            width,
            height,
        } => plot(&inputs, &out, m, n, width, height),
        Command::Surface {
            input,
            counts,
            out,
            seed,
        } => {
            let doc = fail!(import_profile(&input))?;
            let profile = fail!(doc.to_profile())?;
            let seed = seed.unwrap_or(doc.metadata.sampling_seed);
            let rows = sample_hypersurface(
                &profile.points[..profile.points.len() - 1],
                &profile.params,
                counts,
                seed,
            );
            fail!(export_point_cloud(&rows, &profile.params, &out))?;
            println!("points = {}", rows.len());
            println!("dimension = {}", profile.params.m() + profile.params.n());
            println!("seed = {seed}");
            Ok(EXIT_OK)
        }
        Command::Golden { fixtures, regolden } => golden(&fixtures, regolden),
    }
}

fn verify_known(m: u32, n: u32, samples: usize) -> Result<i32, CliError> {
    let p = params(m, n)?;
    let mut worst = 0.0f64;
    for sol in known_solutions(&p) {
        let mut family_worst = 0.0f64;
        for jet in sol.sample(samples) {
            let r = shrinker_residual(&jet, &p).map_err(|e| CliError::Failure(e.to_string()))?;
            family_worst = family_worst.max(r.abs());
        }
        println!("{:?}: max residual {family_worst:.3e}", sol.family);
        worst = worst.max(family_worst);
    }
    println!("max residual = {worst:.17e}");
    Ok(if worst < 1e-12 { EXIT_OK } else { EXIT_FAILURE })
}

fn parse_bracket(s: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Usage(format!("bracket must be LO:HI with 0 < LO < HI, got {s:?}"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let lo: f64 = a.trim().parse().map_err(|_| bad())?;
    let hi: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn metadata(cfg: &IntegratorConfig, solve_tol: f64, resample_h: f64) -> Metadata {
    Metadata {
        generator: format!("shrinker {}", env!("CARGO_PKG_VERSION")),
        rel_tol: cfg.rel_tol,
        abs_tol: cfg.abs_tol,
        h_max: cfg.h_max,
        eps_axis: cfg.eps_axis,
        solve_tol,
        seam_tol: SEAM_TOL,
        resample_h,
        sampling_seed: DEFAULT_SEED,
    }
}

fn find_closed(
    n: u32,
    bracket: Option<&str>,
    tol: f64,
    resample_h: f64,
    out: &Path,
    cfg: &IntegratorConfig,
) -> Result<i32, CliError> {
    let p = params(n, n)?;
    if !(tol > 0.0 && resample_h > 0.0) {
        return Err(CliError::Usage("tol and resample-h must be positive".into()));
    }
    let results: Vec<RStarResult> = match bracket {
        Some(s) => vec![fail!(find_rstar(&p, parse_bracket(s)?, tol, cfg))?],
        None => fail!(find_all_rstar(&p, default_bracket(n), 64, tol, cfg))?,
    };
    if results.len() > 1 {
        println!("sign changes = {}", results.len());
    }
    for r in &results {
        println!(
            "R* = {:.17e}  orthogonality residual = {:.3e}  s residual = {:.3e}  evaluations = {}",
            r.r_star,
            r.orthogonality_residual,
            r.s_residual,
            r.bracket_history.len()
        );
    }
    let first = &results[0];
    let profile = fail!(build_closed_profile(&p, first.r_star, resample_h, cfg))?;
    let doc = ProfileDocument::new(&profile, metadata(cfg, tol, resample_h));
    fail!(export_profile(&doc, out))?;
    println!("points = {}", profile.points.len());
    println!("embedded = {}", profile.embedded);
    println!("ell contacts = {}", profile.ell_contacts);
    println!("closure gap = {:.3e}", profile.closure_gap);
    println!("max residual = {:.3e}", profile.max_residual);
    let certified = profile.is_certified();
    println!("certified = {certified}");
    Ok(if certified { EXIT_OK } else { EXIT_FAILURE })
}

fn indicial(n: u32, variant: VariantArg, probe: bool) -> Result<i32, CliError> {
    let variant = match variant {
        VariantArg::Printed => Variant::Printed,
        VariantArg::Rederived => Variant::Rederived,
    };
    let rep = indicial_roots(n, variant).map_err(|e| CliError::Usage(e.to_string()))?;
    println!("variant = {}", variant.label());
    println!("quadratic = a^2 + {}a + {}", rep.b, rep.c);
    println!("discriminant = {}", rep.discriminant);
    for z in rep.roots {
        if z.im == 0.0 {
            println!("root = {}", z.re);
        } else {
            println!("root = {} {} {}i", z.re, if z.im < 0.0 { '-' } else { '+' }, z.im.abs());
        }
    }
    println!("classification = {:?}", rep.classification);
    if variant == Variant::Printed {
        let scan = discriminant_integrality_scan(n.max(7) as u64);
        println!(
            "perfect-square discriminants up to n = {}: {:?}",
            scan.n_max, scan.resonant
        );
    }
    if probe {
        let p = params(n, n)?;
        let rep = fail!(numeric_indicial_probe(&p, &IntegratorConfig::default()))?;
        println!("probe window r in [{:.6}, {:.6}]", rep.r_close, rep.r_open);
        println!(
            "probe linearity error = {:.3e} ({})",
            rep.linearity_error,
            if rep.linear() { "pass" } else { "fail" }
        );
        for (v, e) in rep.variant_errors {
            println!("probe distance to {} = {:.3e}", v.label(), e);
        }
        println!("probe best match = {}", rep.best_match.label());
        println!("probe sign changes = {}", rep.sign_changes);
        if let Some(a) = rep.fitted_exponent {
            println!("probe fitted exponent = {a:.4}");
        }
        if !rep.linear() {
            return Ok(EXIT_FAILURE);
        }
    }
    Ok(EXIT_OK)
}

fn plot(
    inputs: &[PathBuf],
    out: &Path,
    m: Option<u32>,
    n: Option<u32>,
    width: f64,
    height: f64,
) -> Result<i32, CliError> {
    let mut curves = Vec::new();
    let mut doc_params = None;
    for path in inputs {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("curve").to_string();
        if path.extension().and_then(|e| e.to_str()) == Some("json") {
            let doc = fail!(import_profile(path))?;
            doc_params.get_or_insert((doc.params.m, doc.params.n));
            let pts = doc.points.iter().map(|q| (q[0], q[1])).collect();
            curves.push(LabeledCurve::new(format!("{stem} (R* = {:.6})", doc.r_star), pts));
        } else {
            let rec = fail!(import_trajectory(path))?;
            curves.push(LabeledCurve::new(stem, rec.polyline()));
        }
    }
    let (pm, pn) = match (m, n, doc_params) {
        (Some(m), Some(n), _) => (m, n),
        (Some(m), None, _) => (m, m),
        (None, Some(n), _) => (n, n),
        (None, None, Some(mn)) => mn,
        (None, None, None) => (2, 2),
    };
    let p = params(pm, pn)?;
    let opts = SvgOptions {
        width,
        height,
        ..SvgOptions::default()
    };
    render_svg(&curves, &p, out, &opts).map_err(|e| match e {
        crate::io::IoError::EmptyFigure => CliError::Usage(e.to_string()),
        e => CliError::Failure(e.to_string()),
    })?;
    println!("curves = {}", curves.len());
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenProvenance {
    pub generator: String,
    pub date: String,
    /// SHA-256 of the solver settings used for the entries.
    pub config_hash: String,
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenEntry {
    pub n: u32,
    /// At the default relative tolerance 1e-10.
    pub r_star: f64,
    /// The same solve at relative tolerance 1e-12.
    pub r_star_tight: f64,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenFixtures {
    pub provenance: GoldenProvenance,
    /// Allowed absolute deviation in R*.
    pub tolerance: f64,
    pub solve_tol: f64,
    pub resample_h: f64,
    pub entries: Vec<GoldenEntry>,
}

pub const GOLDEN_TOLERANCE: f64 = 1e-8;
pub const GOLDEN_SOLVE_TOL: f64 = 1e-9;
pub const GOLDEN_RESAMPLE_H: f64 = 1e-3;

fn config_hash(cfg: &IntegratorConfig, solve_tol: f64, resample_h: f64) -> String {
    let text = format!("{cfg:?};solve_tol={solve_tol:e};resample_h={resample_h:e};seam_tol={SEAM_TOL:e}");
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Recomputes the golden entries for `n ∈ {2, 3, 4}`.
pub fn compute_golden() -> Result<GoldenFixtures, String> {
    let cfg = IntegratorConfig::default();
    let tight = IntegratorConfig {
        rel_tol: 1e-12,
        abs_tol: 1e-14,
        ..cfg
    };
    let mut entries = Vec::new();
    for n in [2, 3, 4] {
        let p = SymmetryParams::symmetric(n).map_err(|e| e.to_string())?;
        let a = find_rstar(&p, default_bracket(n), GOLDEN_SOLVE_TOL, &cfg).map_err(|e| e.to_string())?;
        let b = find_rstar(&p, default_bracket(n), GOLDEN_SOLVE_TOL, &tight).map_err(|e| e.to_string())?;
        let prof = build_closed_profile(&p, a.r_star, GOLDEN_RESAMPLE_H, &cfg).map_err(|e| e.to_string())?;
        entries.push(GoldenEntry {
            n,
            r_star: a.r_star,
            r_star_tight: b.r_star,
            max_residual: prof.max_residual,
        });
    }
    Ok(GoldenFixtures {
        provenance: GoldenProvenance {
            generator: format!("shrinker {}", env!("CARGO_PKG_VERSION")),
            date: time::OffsetDateTime::now_utc().date().to_string(),
            config_hash: config_hash(&cfg, GOLDEN_SOLVE_TOL, GOLDEN_RESAMPLE_H),
            notes: "r_star from find_rstar on the default bracket at rel_tol 1e-10, abs_tol 1e-12; \
                    r_star_tight repeats it at rel_tol 1e-12, abs_tol 1e-14; max_residual of the assembled \
                    profile at resample_h 1e-3. Regenerate with `shrinker golden --regolden`."
                .into(),
        },
        tolerance: GOLDEN_TOLERANCE,
        solve_tol: GOLDEN_SOLVE_TOL,
        resample_h: GOLDEN_RESAMPLE_H,
        entries,
    })
}

pub fn load_golden(path: &Path) -> Result<GoldenFixtures, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn golden(path: &Path, regolden: bool) -> Result<i32, CliError> {
    let fresh = compute_golden().map_err(CliError::Failure)?;
    if regolden {
        let mut text = fail!(serde_json::to_string_pretty(&fresh))?;
        text.push('\n');
        fail!(write_atomic(path, text.as_bytes()))?;
        for e in &fresh.entries {
            println!("n = {}  R* = {:.17e}  (tight {:.17e})", e.n, e.r_star, e.r_star_tight);
        }
        println!("wrote {}", path.display());
        return Ok(EXIT_OK);
    }
    let stored = load_golden(path).map_err(CliError::Failure)?;
    let mut ok = true;
    for e in &fresh.entries {
        let Some(s) = stored.entries.iter().find(|s| s.n == e.n) else {
            println!("n = {}: missing from fixtures", e.n);
            ok = false;
            continue;
        };
        let d = (e.r_star - s.r_star).abs();
        let pass = d < stored.tolerance;
        ok &= pass;
        println!(
            "n = {}  R* = {:.17e}  fixture {:.17e}  |diff| = {d:.3e}  {}",
            e.n,
            e.r_star,
            s.r_star,
            if pass { "ok" } else { "MISMATCH" }
        );
    }
    Ok(if ok { EXIT_OK } else { EXIT_FAILURE })
}
