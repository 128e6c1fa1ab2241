//! Command-line laboratory for radial Choquard ground states.
//!
//! Subcommands:
//! - `constants`: analytic constant chain for one (N, α)
//! - `reference`: dump the bubble and extremal reference profiles
//! - `solve`: one ground-state solve at a fixed frequency
//! - `sweep`: warm-started frequency scan driven by a TOML config
//! - `predict`: scaling-exponent table for one problem
//! - `fit`: fitted-versus-predicted report over a sweep CSV
//! - `verify`: cross-module invariant suite
//! - `expand`: cutoff test-function expansion tables
//!
//! Exit codes: 0 success, 2 inadmissible configuration, 3 non-convergence,
//! 4 gate failure in `fit --gate`, 1 other errors.

use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use choquard_core::asymptotics::{
    exact_rate_table, predict_rates, testfunction_expansion, AsymptoticsError, ExactRatio,
    ExpansionFamily, RateModel,
};
use choquard_core::closed_forms::{
    bubble, extremal_w, hls_sharp_constant, limit_equation_residual, sobolev_constants,
};
use choquard_core::harness::{
    records_from_csv, records_to_csv, report, run_sweep_observed, HarnessError, PointStamp,
    RunManifest, SweepConfig, SweepRecord, SWEEP_CSV_HEADER,
};
use choquard_core::problem::{PowerTerm, ProblemError, ProblemParams};
use choquard_core::radial_core::{build_grid, GridLayout, RadialGrid};
use choquard_core::riesz::build_kernel;
use choquard_core::solver::{decay_profile, solve_ground_state, SolverConfig, SolverError};

#[derive(Parser)]
#[command(
    name = "choquard",
    version,
    about = "Numerical laboratory for radial Choquard ground states"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the analytic constant chain for one (N, alpha)
    Constants(ConstantsArgs),
    /// Dump the bubble and extremal reference profiles as CSV
    Reference(ReferenceArgs),
    /// Solve one ground state at a fixed frequency
    Solve(SolveArgs),
    /// Run a warm-started frequency sweep from a TOML config
    Sweep(SweepArgs),
    /// Print predicted scaling exponents for one problem
    Predict(PredictArgs),
    /// Fit sweep records against the predicted exponents
    Fit(FitArgs),
    /// Run the cross-module invariant suite
    Verify(VerifyArgs),
    /// Tabulate cutoff test-function expansions
    Expand(ExpandArgs),
}

fn parse_term(text: &str) -> Result<(f64, f64), String> {
    let (q_text, c_text) = match text.split_once(':') {
        Some((q, c)) => (q, c),
        None => (text, "1.0"),
    };
    let q: f64 = q_text
        .trim()
        .parse()
        .map_err(|_| format!("bad exponent in term {text:?}"))?;
    let c: f64 = c_text
        .trim()
        .parse()
        .map_err(|_| format!("bad coefficient in term {text:?}"))?;
    Ok((q, c))
}

#[derive(Args)]
struct ConstantsArgs {
    /// Spatial dimension N (at least 3)
    #[arg(long)]
    dimension: usize,
    /// Riesz order alpha in (0, N)
    #[arg(long)]
    alpha: f64,
    /// Truncation radius of the realization grid
    #[arg(long, default_value_t = 150.0)]
    rmax: f64,
    /// Grid intervals of the realization grid
    #[arg(long, default_value_t = 768)]
    intervals: usize,
    /// Emit JSON instead of text
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ReferenceArgs {
    /// Spatial dimension N (at least 3)
    #[arg(long)]
    dimension: usize,
    /// Riesz order alpha in (0, N)
    #[arg(long)]
    alpha: f64,
    /// Bubble concentration scale
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    /// Extremal dilation scale
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// Truncation radius
    #[arg(long, default_value_t = 60.0)]
    rmax: f64,
    /// Grid intervals
    #[arg(long, default_value_t = 512)]
    intervals: usize,
    /// Output CSV path; stdout when omitted
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    /// Frequency to solve at
    #[arg(long)]
    eps: f64,
    /// Sweep-style TOML config supplying the problem and solver settings
    #[arg(long)]
    config: Option<PathBuf>,
    /// Spatial dimension N (when no config file is given)
    #[arg(long)]
    dimension: Option<usize>,
    /// Riesz order alpha (when no config file is given)
    #[arg(long)]
    alpha: Option<f64>,
    /// Perturbation power term as q:c, repeatable
    #[arg(long = "term", value_parser = parse_term)]
    terms: Vec<(f64, f64)>,
    /// Override the grid interval count
    #[arg(long)]
    intervals: Option<usize>,
    /// Override the iteration budget
    #[arg(long)]
    max_iters: Option<usize>,
    /// Override the gradient tolerance
    #[arg(long)]
    tol_grad: Option<f64>,
    /// Override the constraint tolerance
    #[arg(long)]
    tol_constraint: Option<f64>,
    /// Override the truncation coefficient
    #[arg(long)]
    truncation: Option<f64>,
    /// Write the solved profile as CSV
    #[arg(long)]
    dump_profile: Option<PathBuf>,
    /// Emit JSON instead of text
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep description TOML
    #[arg(long)]
    config: PathBuf,
    /// Output directory for sweep.csv and manifest.toml
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Spatial dimension N (at least 3)
    #[arg(long)]
    dimension: usize,
    /// Riesz order alpha in (0, N)
    #[arg(long)]
    alpha: f64,
    /// Perturbation power term as q:c, repeatable
    #[arg(long = "term", value_parser = parse_term, required = true)]
    terms: Vec<(f64, f64)>,
    /// Emit JSON instead of text
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct FitArgs {
    /// Sweep records CSV
    #[arg(long)]
    csv: PathBuf,
    /// Run manifest TOML produced by the sweep
    #[arg(long)]
    manifest: PathBuf,
    /// Optional config TOML that must hash-match the manifest
    #[arg(long)]
    config: Option<PathBuf>,
    /// Exit with code 4 when any gated row fails
    #[arg(long)]
    gate: bool,
    /// Emit JSON instead of text
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Grid intervals for the identity checks
    #[arg(long, default_value_t = 512)]
    intervals: usize,
    /// Number of random admissible parameter draws
    #[arg(long, default_value_t = 100)]
    draws: usize,
    /// Seed for the parameter draws
    #[arg(long, default_value_t = 20240815)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    /// Fixed cutoff times a concentrating bubble
    Bubble,
    /// Widening window times the fixed extremal
    Window,
}

#[derive(Args)]
struct ExpandArgs {
    /// Spatial dimension N (at least 3)
    #[arg(long)]
    dimension: usize,
    /// Riesz order alpha in (0, N)
    #[arg(long)]
    alpha: f64,
    /// Dominant perturbation exponent for the pair-energy columns
    #[arg(long)]
    q: f64,
    /// Cutoff family to sample
    #[arg(long, value_enum)]
    family: FamilyArg,
    /// Comma-separated scales; defaults depend on the family
    #[arg(long, value_delimiter = ',')]
    scales: Vec<f64>,
    /// Truncation radius
    #[arg(long, default_value_t = 60.0)]
    rmax: f64,
    /// Grid intervals
    #[arg(long, default_value_t = 768)]
    intervals: usize,
    /// Emit JSON instead of text
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Constants(args) => cmd_constants(args),
        Command::Reference(args) => cmd_reference(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Expand(args) => cmd_expand(args),
    }
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<HarnessError>() {
            match e {
                HarnessError::ConfigInvalid { .. } => return 2,
                HarnessError::PointDidNotConverge { .. } => return 3,
                _ => {}
            }
        }
        if let Some(e) = cause.downcast_ref::<SolverError>() {
            match e {
                SolverError::Inadmissible { .. }
                | SolverError::ConfigInvalid { .. }
                | SolverError::InvalidFrequency { .. } => return 2,
                SolverError::CollapsedToZero { .. } => return 3,
                _ => {}
            }
        }
        if cause.downcast_ref::<ProblemError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<AsymptoticsError>() {
            if matches!(e, AsymptoticsError::Inadmissible { .. }) {
                return 2;
            }
        }
    }
    1
}

fn standard_grid(dimension: usize, rmax: f64, intervals: usize) -> Result<RadialGrid> {
    Ok(build_grid(
        dimension,
        rmax,
        intervals,
        GridLayout::LogUniformWithLinearCore {
            core_radius: 10.0,
            core_fraction: 0.6,
        },
    )?)
}

fn cmd_constants(args: ConstantsArgs) -> Result<u8> {
    let grid = standard_grid(args.dimension, args.rmax, args.intervals)?;
    let kernel = build_kernel(&grid, args.alpha)?;
    let constants = sobolev_constants(&grid, &kernel)?;
    if args.json {
        let value = serde_json::json!({
            "dimension": constants.dimension(),
            "alpha": constants.alpha(),
            "a_alpha": constants.a_alpha(),
            "c_alpha": constants.c_alpha(),
            "c_star": constants.c_star(),
            "s": constants.s(),
            "s_alpha": constants.s_alpha(),
            "m_inf": constants.m_inf(),
        });
        println!("{}", serde_json::to_string_pretty(&value)?);
    } else {
        println!("constants: N={} alpha={}", constants.dimension(), constants.alpha());
        println!("  A_alpha = {:.12}", constants.a_alpha());
        println!("  C_alpha = {:.12}", constants.c_alpha());
        println!("  C_star  = {:.12}", constants.c_star());
        println!("  S       = {:.12}", constants.s());
        println!("  S_alpha = {:.12}", constants.s_alpha());
        println!("  m_inf   = {:.12}", constants.m_inf());
    }
    Ok(0)
}

fn cmd_reference(args: ReferenceArgs) -> Result<u8> {
    let grid = standard_grid(args.dimension, args.rmax, args.intervals)?;
    let u = bubble(&grid, args.kappa)?;
    let w = extremal_w(&grid, args.alpha, args.rho)?;
    let mut out = String::new();
    out.push_str(&format!(
        "# N={} alpha={} kappa={} rho={} Rmax={} M={}\n",
        args.dimension,
        args.alpha,
        args.kappa,
        args.rho,
        grid.rmax(),
        grid.intervals()
    ));
    out.push_str("r,bubble,extremal\n");
    for (i, &r) in grid.nodes().iter().enumerate() {
        out.push_str(&format!("{r},{},{}\n", u.values()[i], w.values()[i]));
    }
    match args.output {
        Some(path) => {
            fs::write(&path, out).with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
        }
        None => print!("{out}"),
    }
    Ok(0)
}

fn solve_setup(args: &SolveArgs) -> Result<(ProblemParams, SolverConfig)> {
    let (params, mut config) = match &args.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let sweep = SweepConfig::from_toml(&text)?;
            (sweep.problem_params()?, sweep.solver_config())
        }
        None => {
            let dimension = args
                .dimension
                .ok_or_else(|| anyhow::anyhow!("--dimension is required without --config"))?;
            let alpha = args
                .alpha
                .ok_or_else(|| anyhow::anyhow!("--alpha is required without --config"))?;
            if args.terms.is_empty() {
                bail!("at least one --term is required without --config");
            }
            let terms = args
                .terms
                .iter()
                .map(|&(q, c)| PowerTerm::new(q, c))
                .collect::<Result<Vec<_>, _>>()?;
            (ProblemParams::new(dimension, alpha, terms)?, SolverConfig::new())
        }
    };
    if let Some(v) = args.intervals {
        config = config.with_intervals(v);
    }
    if let Some(v) = args.max_iters {
        config = config.with_max_iters(v);
    }
    match (args.tol_grad, args.tol_constraint) {
        (Some(g), Some(c)) => config = config.with_tolerances(g, c),
        (Some(g), None) => config = config.with_tolerances(g, config.tol_constraint()),
        (None, Some(c)) => config = config.with_tolerances(config.tol_grad(), c),
        (None, None) => {}
    }
    if let Some(v) = args.truncation {
        config = config.with_truncation_coefficient(v);
    }
    Ok((params, config))
}

fn cmd_solve(args: SolveArgs) -> Result<u8> {
    let (params, config) = solve_setup(&args)?;
    let state = solve_ground_state(&params, args.eps, &config)?;
    let decay = decay_profile(&state, state.xi_stage())?;
    if let Some(path) = &args.dump_profile {
        state
            .grid()
            .write_field_csv(state.profile(), path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if args.json {
        let b = state.breakdown();
        let value = serde_json::json!({
            "eps": state.eps(),
            "converged": state.converged(),
            "iterations": state.iterations(),
            "sigma": state.schedule().sigma(),
            "delta": state.schedule().delta(),
            "m_eps": state.m_eps(),
            "limit_level": state.limit_level(),
            "gap": state.energy_gap(),
            "breakdown": {
                "kinetic": b.kinetic,
                "mass": b.mass,
                "dpp": b.dpp,
                "dpg": b.dpg,
                "dgg": b.dgg,
                "total": b.total,
            },
            "nehari_res": state.nehari().relative,
            "pohozaev_res": state.pohozaev().relative,
            "tau": state.tau(),
            "gradient_norm": state.gradient_norm(),
            "mass_w": state.mass_w(),
            "mass_v": state.mass_v(),
            "mass_u": state.mass_u(),
            "mass_wtilde": state.mass_wtilde(),
            "u0": state.central_amplitude(),
            "xi_stage": state.xi_stage(),
            "xi_meas": state.xi_measured(),
            "decay_sup": decay.sup_weighted(),
            "decay_witness": decay.lower_witness(),
        });
        println!("{}", serde_json::to_string_pretty(&value)?);
    } else {
        println!(
            "solve: N={} alpha={} eps={}",
            params.dimension(),
            params.alpha(),
            state.eps()
        );
        println!(
            "  converged   = {} ({} iterations, gradient {:.3e})",
            state.converged(),
            state.iterations(),
            state.gradient_norm()
        );
        println!("  m_eps       = {:.12}", state.m_eps());
        println!("  limit level = {:.12}", state.limit_level());
        println!("  energy gap  = {:.6e}", state.energy_gap());
        println!(
            "  residuals   = nehari {:.3e}, dilation {:.3e}",
            state.nehari().relative,
            state.pohozaev().relative
        );
        println!("  tau         = {:.12}", state.tau());
        println!(
            "  masses      = w {:.6e}, v {:.6e}, u {:.6e}, recentered {:.6e}",
            state.mass_w(),
            state.mass_v(),
            state.mass_u(),
            state.mass_wtilde()
        );
        println!(
            "  scales      = u0 {:.6e}, xi_stage {:.6e}, xi_meas {:.6e}",
            state.central_amplitude(),
            state.xi_stage(),
            state.xi_measured()
        );
        println!(
            "  decay       = weighted sup {:.6e}, witness {:.6e}",
            decay.sup_weighted(),
            decay.lower_witness()
        );
    }
    if !state.converged() {
        eprintln!("solve did not meet the convergence checks");
        return Ok(3);
    }
    Ok(0)
}

fn csv_line(record: &SweepRecord) -> Result<String> {
    let text = records_to_csv(std::slice::from_ref(record))?;
    text.lines()
        .nth(1)
        .map(str::to_string)
        .ok_or_else(|| anyhow::anyhow!("record serialization produced no row"))
}

fn cmd_sweep(args: SweepArgs) -> Result<u8> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let config = SweepConfig::from_toml(&text)?;
    fs::create_dir_all(&args.output)
        .with_context(|| format!("creating {}", args.output.display()))?;
    let csv_path = args.output.join("sweep.csv");
    let manifest_path = args.output.join("manifest.toml");
    let mut file =
        fs::File::create(&csv_path).with_context(|| format!("writing {}", csv_path.display()))?;
    writeln!(file, "{SWEEP_CSV_HEADER}")?;

    let mut stamps: Vec<PointStamp> = Vec::new();
    let result = run_sweep_observed(&config, |record, state| {
        let line = csv_line(record).map_err(|e| HarnessError::CsvShape {
            detail: e.to_string(),
        })?;
        writeln!(file, "{line}")?;
        file.flush()?;
        stamps.push(PointStamp::from_state(record.eps, state));
        println!(
            "eps={:>12.4}  m_eps={:>14.8}  gap={:>12.6e}  iters={:>5}  {:>6} ms  converged={}",
            record.eps, record.m_eps, record.gap, record.iterations, record.wall_ms, record.converged
        );
        Ok(())
    });

    let manifest = RunManifest::new(&config, stamps)?;
    fs::write(&manifest_path, manifest.to_toml()?)
        .with_context(|| format!("writing {}", manifest_path.display()))?;

    match result {
        Ok(records) => {
            println!(
                "sweep complete: {} records -> {}",
                records.len(),
                csv_path.display()
            );
            println!("manifest -> {}", manifest_path.display());
            Ok(0)
        }
        Err(err) => {
            eprintln!("sweep aborted; partial rows kept in {}", csv_path.display());
            Err(err.into())
        }
    }
}

fn model_label(model: RateModel) -> &'static str {
    match model {
        RateModel::Power => "eps",
        RateModel::EpsLogEps => "eps*ln(eps)",
        RateModel::LogOnly => "ln(eps)",
        RateModel::Mixed => "mixed",
    }
}

fn cmd_predict(args: PredictArgs) -> Result<u8> {
    let terms = args
        .terms
        .iter()
        .map(|&(q, c)| PowerTerm::new(q, c))
        .collect::<Result<Vec<_>, _>>()?;
    let params = ProblemParams::new(args.dimension, args.alpha, terms)?;
    let prediction = predict_rates(&params)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&prediction)?);
    } else {
        println!(
            "rate prediction: N={} alpha={} q2={} sigma={:.6}",
            prediction.dimension(),
            prediction.alpha(),
            prediction.q2(),
            prediction.sigma()
        );
        println!(
            "{:<16} {:<12} {:>12} {:>12}  regime",
            "observable", "base", "eps_power", "log_power"
        );
        for entry in prediction.entries() {
            println!(
                "{:<16} {:<12} {:>12.6} {:>12.6}  {}",
                entry.observable.label(),
                model_label(entry.model),
                entry.eps_power,
                entry.log_power,
                entry.regime
            );
        }
    }
    Ok(0)
}

fn cmd_fit(args: FitArgs) -> Result<u8> {
    let csv_text =
        fs::read_to_string(&args.csv).with_context(|| format!("reading {}", args.csv.display()))?;
    let records = records_from_csv(&csv_text)?;
    let manifest_text = fs::read_to_string(&args.manifest)
        .with_context(|| format!("reading {}", args.manifest.display()))?;
    let manifest = RunManifest::from_toml(&manifest_text)?;
    manifest.verify()?;
    if let Some(path) = &args.config {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let config = SweepConfig::from_toml(&text)?;
        manifest.matches(&config)?;
    }
    let params = manifest.config().problem_params()?;
    let prediction = predict_rates(&params)?;
    let summary = report(&records, &prediction)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        print!("{}", summary.render_text());
    }
    if args.gate && !summary.all_pass() {
        eprintln!("gated fit failed");
        return Ok(4);
    }
    Ok(0)
}

struct SplitMix(u64);

impl SplitMix {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    fn below(&mut self, n: u64) -> u64 {
        self.next() % n.max(1)
    }
}

fn random_admissible_draw(rng: &mut SplitMix) -> (usize, ExactRatio, ExactRatio) {
    let dimension = 3 + rng.below(5) as usize;
    let n = dimension as i128;
    // Rational alpha strictly inside (0, min(N, 3)).
    let da = 2 + rng.below(6) as i128;
    let cap = 3.min(n);
    let na = 1 + rng.below((da * cap - 1) as u64) as i128;
    let alpha = ExactRatio::new(na, da);
    let one = ExactRatio::from_integer(1);
    let two = ExactRatio::from_integer(2);
    let n_exact = ExactRatio::from_integer(n);
    let lower = (n_exact + alpha) / n_exact;
    let upper = (n_exact + alpha) / (n_exact - two);
    let floor = match dimension {
        3 => lower.max(two).max(one + alpha),
        4 => lower.max(two),
        _ => lower,
    };
    // Rational point strictly inside the admissible exponent window.
    let dm = 3 + rng.below(7) as i128;
    let km = 1 + rng.below((dm - 1) as u64) as i128;
    let t = ExactRatio::new(km, dm);
    let q2 = floor + t * (upper - floor);
    (dimension, alpha, q2)
}

fn ratio_f64(r: ExactRatio) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn check_line(name: &str, outcome: &Result<String, String>) -> bool {
    match outcome {
        Ok(detail) => {
            println!("{name:<32} pass  {detail}");
            true
        }
        Err(detail) => {
            println!("{name:<32} FAIL  {detail}");
            false
        }
    }
}

fn cmd_verify(args: VerifyArgs) -> Result<u8> {
    let mut all_ok = true;
    println!("invariant suite (intervals={}):", args.intervals);

    for dimension in [3usize, 4, 5] {
        let alpha = 1.0;
        let grid = standard_grid(dimension, 200.0, args.intervals)?;
        let kernel = build_kernel(&grid, alpha)?;

        let constants_outcome = match sobolev_constants(&grid, &kernel) {
            Ok(c) => Ok(format!(
                "S={:.8} S_alpha={:.8} m_inf={:.8}",
                c.s(),
                c.s_alpha(),
                c.m_inf()
            )),
            Err(e) => Err(e.to_string()),
        };
        all_ok &= check_line(&format!("constant-chain N={dimension}"), &constants_outcome);

        let residual_outcome = match limit_equation_residual(&grid, &kernel, 1.0) {
            Ok(rel) if rel < 4e-3 => Ok(format!("relative residual {rel:.3e}")),
            Ok(rel) => Err(format!("relative residual {rel:.3e} above 4e-3")),
            Err(e) => Err(e.to_string()),
        };
        all_ok &= check_line(
            &format!("limit-equation residual N={dimension}"),
            &residual_outcome,
        );

        let hls_outcome = (|| -> Result<String, String> {
            let nn = dimension as f64;
            let h = grid.field_from_fn(|r| (1.0 + r * r).powf(-(nn + alpha) / 2.0));
            let pair = kernel.pair_energy(&h, &h).map_err(|e| e.to_string())?;
            let q = 2.0 * nn / (nn + alpha);
            let norm = grid.lp_norm(&h, q).map_err(|e| e.to_string())?;
            let quotient = pair / kernel.normalization() / (norm * norm);
            let sharp = hls_sharp_constant(dimension, alpha).map_err(|e| e.to_string())?;
            let ratio = quotient / sharp;
            if ratio >= 0.999 && ratio <= 1.0 + 1e-6 {
                Ok(format!("extremal quotient ratio {ratio:.6}"))
            } else {
                Err(format!("extremal quotient ratio {ratio:.6} outside [0.999, 1]"))
            }
        })();
        all_ok &= check_line(&format!("sharp-quotient ratio N={dimension}"), &hls_outcome);
    }

    let ratio_outcome = (|| -> Result<String, String> {
        let grid = build_grid(
            3,
            400.0,
            1024,
            GridLayout::LogUniformWithLinearCore {
                core_radius: 10.0,
                core_fraction: 0.55,
            },
        )
        .map_err(|e| e.to_string())?;
        let kernel = build_kernel(&grid, 1.0).map_err(|e| e.to_string())?;
        let h = grid.field_from_fn(|r| (1.0 + r * r).powf(-2.0));
        let pot = kernel.apply(&h).map_err(|e| e.to_string())?;
        let mut samples = Vec::new();
        for (i, &r) in grid.nodes().iter().enumerate() {
            if r > 100.0 {
                break;
            }
            samples.push(pot.values()[i] * (1.0 + r * r));
        }
        let mean: f64 = samples.iter().sum::<f64>() / samples.len() as f64;
        let var: f64 =
            samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / samples.len() as f64;
        let rel_std = var.sqrt() / mean;
        if rel_std < 1e-4 {
            Ok(format!("relative std {rel_std:.3e}, flat value {mean:.6}"))
        } else {
            Err(format!("relative std {rel_std:.3e} above 1e-4"))
        }
    })();
    all_ok &= check_line("potential ratio constancy", &ratio_outcome);

    let draws_outcome = (|| -> Result<String, String> {
        let mut rng = SplitMix(args.seed);
        for index in 0..args.draws {
            let (dimension, alpha, q2) = random_admissible_draw(&mut rng);
            let table = exact_rate_table(dimension, alpha, q2)
                .map_err(|e| format!("draw {index} (N={dimension}, alpha={alpha}, q2={q2}): {e}"))?;
            let sigma = ratio_f64(table.sigma);
            if !sigma.is_finite() || sigma <= 0.0 {
                return Err(format!("draw {index}: nonpositive sigma {sigma}"));
            }
        }
        Ok(format!("{} draws, every chain identity exact", args.draws))
    })();
    all_ok &= check_line("exponent-algebra identities", &draws_outcome);

    let ground_outcome = (|| -> Result<String, String> {
        let params = ProblemParams::new(5, 1.0, vec![PowerTerm::new(1.8, 1.0).unwrap()])
            .map_err(|e| e.to_string())?;
        let config = SolverConfig::new()
            .with_intervals(384)
            .with_max_iters(6000);
        let state = solve_ground_state(&params, 100.0, &config).map_err(|e| e.to_string())?;
        if !state.converged() {
            return Err("reference solve did not converge".to_string());
        }
        if state.nehari().relative.abs() > 1e-12 || state.pohozaev().relative.abs() > 1e-12 {
            return Err(format!(
                "residuals {:.2e}/{:.2e} above 1e-12",
                state.nehari().relative,
                state.pohozaev().relative
            ));
        }
        if state.tau() < 1.0 - 1e-6 {
            return Err(format!("tau {} below 1", state.tau()));
        }
        if !(state.m_eps() > 0.0 && state.m_eps() < state.limit_level()) {
            return Err("level ordering violated".to_string());
        }
        let w = state.profile().values();
        let floor = -1e-9 * w[0];
        if w.iter().any(|&v| v < floor) {
            return Err("profile dips negative".to_string());
        }
        if w.windows(2).any(|pair| pair[1] > pair[0] + 1e-9 * w[0]) {
            return Err("profile is not nonincreasing".to_string());
        }
        let decay = decay_profile(&state, state.xi_stage()).map_err(|e| e.to_string())?;
        if !(decay.lower_witness() > 0.0) {
            return Err("decay witness vanished".to_string());
        }
        Ok(format!(
            "m_eps={:.8} gap={:.4e} tau-1={:.2e} iters={}",
            state.m_eps(),
            state.energy_gap(),
            state.tau() - 1.0,
            state.iterations()
        ))
    })();
    all_ok &= check_line("ground-state invariants", &ground_outcome);

    if all_ok {
        println!("all checks passed");
        Ok(0)
    } else {
        eprintln!("invariant suite failed");
        Ok(1)
    }
}

fn cmd_expand(args: ExpandArgs) -> Result<u8> {
    let params = ProblemParams::new(args.dimension, args.alpha, vec![PowerTerm::new(args.q, 1.0)?])?;
    let family = match args.family {
        FamilyArg::Bubble => ExpansionFamily::CutoffBubble,
        FamilyArg::Window => ExpansionFamily::WindowedExtremal,
    };
    let scales: Vec<f64> = if args.scales.is_empty() {
        match family {
            ExpansionFamily::CutoffBubble => vec![0.4, 0.2, 0.1, 0.05],
            ExpansionFamily::WindowedExtremal => vec![2.0, 4.0, 8.0],
        }
    } else {
        args.scales.clone()
    };
    let grid = standard_grid(args.dimension, args.rmax, args.intervals)?;
    let kernel = build_kernel(&grid, args.alpha)?;
    let table = testfunction_expansion(&params, &grid, &kernel, family, &scales)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&table)?);
    } else {
        println!(
            "expansion: N={} alpha={} q2={} reference kinetic {:.10}",
            table.dimension, table.alpha, table.q2, table.reference_kinetic
        );
        println!(
            "{:>10} {:>16} {:>16} {:>16} {:>16} {:>16}",
            "scale", "gradient_term", "mass", "dpp", "dpq", "dqq"
        );
        for row in &table.rows {
            let opt = |v: Option<f64>| match v {
                Some(x) => format!("{x:>16.8e}"),
                None => format!("{:>16}", "-"),
            };
            println!(
                "{:>10.4} {:>16.8e} {:>16.8e} {} {} {}",
                row.scale,
                row.gradient_term,
                row.mass,
                opt(row.dpp),
                opt(row.dpq),
                opt(row.dqq)
            );
        }
    }
    Ok(0)
}
