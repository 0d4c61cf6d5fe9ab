//! Command-line driver for the geoflow laboratory.
//!
//! Subcommands wrap the library experiments one to one:
//!
//! - `verify-lemma` — exact verification of the weight-space identity over a
//!   grid of highest weights and unipotent parameters;
//! - `equi` — equidistribution sweep: Birkhoff averages of the bump suite
//!   against their Haar references, one JSON record per line;
//! - `subsphere` — sphere/hyperplane detection with witness decoding;
//! - `invariants` — SVD solver for non-expanding vectors along a curve;
//! - `kappa` — seeded estimate of the two-sided expansion constant;
//! - `goodfn` — sublevel-set diagnostics for coordinate polynomials.
//!
//! Exit codes: 0 success, 1 assertion failure, 2 usage or validation error.
//! Every randomized command requires an explicit `--seed`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::Complex;
use num::BigRational;

use geoflow::curves::{
    decode_witness, subsphere_detect, AnalyticCurve, CurveSpec, WitnessShape,
};
use geoflow::extadj::{
    build_adjoint, build_exterior, good_function_check, invariant_vector_solver,
    rep_unipotent, upsilon_entry_poly,
};
use geoflow::homsim::{
    birkhoff_suite, haar_integral, standard_bumps, write_plot_data, Mat2, Model, Record,
};
use geoflow::lingroup::QuadraticSpace;
use geoflow::poly::Polynomial;
use geoflow::sl2rep::{kappa_estimate, kappa_violations, verify_key_lemma};

mod config;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "geoflow", version, about = "numerical experiments on flows over hyperbolic quotients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify the weight-space identity over a grid of (l, r) pairs.
    VerifyLemma(VerifyLemmaArgs),
    /// Equidistribution sweep against Haar references.
    Equi(EquiArgs),
    /// Detect containment in a sphere or affine hyperplane.
    Subsphere(SubsphereArgs),
    /// Solve for vectors staying in the non-expanding part along a curve.
    Invariants(InvariantsArgs),
    /// Estimate the two-sided expansion constant.
    Kappa(KappaArgs),
    /// Sublevel-set diagnostics for a coordinate polynomial.
    Goodfn(GoodfnArgs),
}

#[derive(Args)]
struct VerifyLemmaArgs {
    /// Highest weights: a range `2:16` or a comma list `2,4,6` (even only).
    #[arg(long, default_value = "2:16")]
    l: String,
    /// Unipotent parameters, comma-separated rationals such as `1,-2,1/2`.
    #[arg(long, default_value = "1,-1,2,-2,1/2,-1/2,3,-3")]
    r: String,
    /// Exact rational arithmetic (zero-residual acceptance).
    #[arg(long)]
    exact: bool,
    /// Write the per-pair report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EquiArgs {
    /// Curve spec file (TOML).
    #[arg(long)]
    curve: PathBuf,
    /// Model: `sl2r` or `sl2c`.
    #[arg(long)]
    model: String,
    /// Flow times, comma-separated.
    #[arg(long)]
    t: String,
    /// Monte Carlo samples per flow time.
    #[arg(long)]
    samples: u64,
    /// RNG seed (required: runs must be reproducible).
    #[arg(long)]
    seed: u64,
    /// Base matrix entries, comma-separated: 4 reals (sl2r) or 8 values
    /// read as re,im pairs (sl2c). Defaults to the identity.
    #[arg(long)]
    base: Option<String>,
    /// Write records (one JSON object per line) here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write sweep plot data (columns: t value std_error haar_value).
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Fail (exit 1) unless, at the largest flow time, every suite
    /// estimate is within this relative tolerance of its Haar reference.
    #[arg(long)]
    assert_converged: Option<f64>,
}

#[derive(Args)]
struct SubsphereArgs {
    #[arg(long)]
    curve: PathBuf,
    /// Number of curve samples for the lifted rank test.
    #[arg(long, default_value_t = 200)]
    samples: usize,
    /// Fail (exit 1) unless the curve is contained.
    #[arg(long)]
    assert_contained: bool,
    /// Fail (exit 1) if the curve is contained.
    #[arg(long)]
    assert_generic: bool,
}

#[derive(Args)]
struct InvariantsArgs {
    #[arg(long)]
    curve: PathBuf,
    /// Exterior powers to include on top of the adjoint, e.g. `2` or `2,3`.
    #[arg(long, default_value = "2")]
    wedge: String,
    /// Curve samples; defaults to dimension + 30.
    #[arg(long)]
    samples: Option<usize>,
    /// Fail (exit 1) unless the excess dimension equals this value.
    #[arg(long)]
    assert_excess: Option<usize>,
}

#[derive(Args)]
struct KappaArgs {
    /// Hyperbolic dimension (2 or 3).
    #[arg(long)]
    n: usize,
    /// Representations: comma list from `adjoint`, `wedge2`.
    #[arg(long, default_value = "adjoint,wedge2")]
    rep: String,
    /// Unipotent parameter (nonzero).
    #[arg(long)]
    t: f64,
    #[arg(long)]
    trials: u64,
    #[arg(long)]
    seed: u64,
    /// Fail (exit 1) if any estimated constant falls below this bound.
    #[arg(long)]
    min_kappa: Option<f64>,
}

#[derive(Args)]
struct GoodfnArgs {
    /// Curve spec file; required with `--entry`.
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Row,column of the curve operator entry to test, e.g. `0,3`.
    #[arg(long)]
    entry: Option<String>,
    /// Explicit polynomial coefficients (ascending), alternative to --entry.
    #[arg(long)]
    poly: Option<String>,
    /// Interval for --poly mode, as `a,b`.
    #[arg(long)]
    interval: Option<String>,
    #[arg(long)]
    c: f64,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    trials: u64,
    #[arg(long)]
    seed: u64,
    /// Fail (exit 1) if the worst observed ratio exceeds one.
    #[arg(long)]
    assert_good: bool,
}

/// Outcome of a command: success, or a failed run-level assertion.
enum Outcome {
    Pass,
    Fail(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::VerifyLemma(args) => cmd_verify_lemma(args),
        Command::Equi(args) => cmd_equi(args),
        Command::Subsphere(args) => cmd_subsphere(args),
        Command::Invariants(args) => cmd_invariants(args),
        Command::Kappa(args) => cmd_kappa(args),
        Command::Goodfn(args) => cmd_goodfn(args),
    };
    match result {
        Ok(Outcome::Pass) => ExitCode::from(0),
        Ok(Outcome::Fail(msg)) => {
            eprintln!("assertion failed: {msg}");
            ExitCode::from(1)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn parse_l_values(spec: &str) -> Result<Vec<usize>> {
    let values: Vec<usize> = if let Some((lo, hi)) = spec.split_once(':') {
        let lo: usize = lo.trim().parse().context("bad range start")?;
        let hi: usize = hi.trim().parse().context("bad range end")?;
        (lo..=hi).filter(|v| v % 2 == 0).collect()
    } else {
        spec.split(',')
            .map(|v| v.trim().parse::<usize>().context("bad l value"))
            .collect::<Result<_>>()?
    };
    if values.is_empty() {
        bail!("empty l list");
    }
    if let Some(odd) = values.iter().find(|v| *v % 2 != 0) {
        bail!("odd highest weight {odd}: the identity concerns even weights only");
    }
    Ok(values)
}

fn parse_rationals(spec: &str) -> Result<Vec<BigRational>> {
    let list: Vec<BigRational> = spec
        .split(',')
        .map(|v| v.trim().parse::<BigRational>().map_err(|e| anyhow!("bad rational '{v}': {e}")))
        .collect::<Result<_>>()?;
    if list.is_empty() || spec.trim().is_empty() {
        bail!("empty r list");
    }
    Ok(list)
}

fn parse_floats(spec: &str) -> Result<Vec<f64>> {
    spec.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| anyhow!("bad number '{v}': {e}")))
        .collect()
}

fn cmd_verify_lemma(args: VerifyLemmaArgs) -> Result<Outcome> {
    let config = RunConfig::new("verify-lemma")
        .with_out(args.out.clone())
        .with_exact(args.exact);
    config.validate()?;
    let l_values = parse_l_values(&args.l)?;
    let r_values = parse_rationals(&args.r)?;
    let mut lines = Vec::new();
    let mut all_ok = true;
    for &l in &l_values {
        for r in &r_values {
            let (identity_ok, minus_ok, dim, residual) = if args.exact {
                let rep = verify_key_lemma::<BigRational>(l, r)?;
                (rep.identity_ok, rep.minus_claim_ok, rep.space_dim, rep.max_residual)
            } else {
                use num::ToPrimitive;
                let rf = r.to_f64().ok_or_else(|| anyhow!("r out of f64 range"))?;
                let rep = verify_key_lemma::<f64>(l, &rf)?;
                (rep.identity_ok, rep.minus_claim_ok, rep.space_dim, rep.max_residual)
            };
            all_ok &= identity_ok && minus_ok && dim == 1;
            lines.push(format!(
                "l={l} r={r} identity={} minus_claim={} space_dim={dim} residual={residual:e}",
                if identity_ok { "ok" } else { "FAILED" },
                if minus_ok { "ok" } else { "FAILED" },
            ));
        }
    }
    emit(&args.out, &lines)?;
    if all_ok {
        Ok(Outcome::Pass)
    } else {
        Ok(Outcome::Fail("identity verification failed on some (l, r)".into()))
    }
}

fn parse_base(model: Model, spec: &Option<String>) -> Result<Mat2> {
    let Some(spec) = spec else {
        return Ok(Mat2::identity());
    };
    let vals = parse_floats(spec)?;
    let entries: Vec<Complex<f64>> = match (model, vals.len()) {
        (Model::Sl2R, 4) => vals.iter().map(|&v| Complex::new(v, 0.0)).collect(),
        (Model::Sl2C, 8) => vals.chunks(2).map(|p| Complex::new(p[0], p[1])).collect(),
        (m, k) => bail!(
            "base for {} needs {} values, got {k}",
            m.name(),
            if m == Model::Sl2R { 4 } else { 8 }
        ),
    };
    let base = Mat2::new(entries[0], entries[1], entries[2], entries[3]);
    let det = entries[0] * entries[3] - entries[1] * entries[2];
    if (det - Complex::new(1.0, 0.0)).norm() > 1e-9 {
        bail!("base matrix must be unimodular (det = {det})");
    }
    Ok(base)
}

fn load_curve(path: &Path) -> Result<(AnalyticCurve, usize, String)> {
    let spec = CurveSpec::load(path).with_context(|| format!("loading {}", path.display()))?;
    let curve = spec.to_curve()?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "curve".into());
    Ok((curve, spec.n, id))
}

fn cmd_equi(args: EquiArgs) -> Result<Outcome> {
    let model = Model::parse(&args.model)?;
    let (curve, n, curve_id) = load_curve(&args.curve)?;
    if n != model.curve_dim() + 1 {
        bail!(
            "curve has n = {n} but model {} expects n = {}",
            model.name(),
            model.curve_dim() + 1
        );
    }
    let t_values = parse_floats(&args.t)?;
    if t_values.is_empty() {
        bail!("empty t sweep");
    }
    let config = RunConfig::new("equi")
        .with_curve(Some(args.curve.clone()))
        .with_model(Some(args.model.clone()))
        .with_t(t_values.clone())
        .with_samples(Some(args.samples))
        .with_seed(Some(args.seed))
        .with_out(args.out.clone())
        .with_assert_converged(args.assert_converged);
    config.validate()?;
    let base = parse_base(model, &args.base)?;

    // Context for the experiment: is the curve degenerate for the theorem?
    let containment = subsphere_detect(&curve, 200)?;
    let mut lines = vec![format!(
        "# curve {}: {}",
        curve_id,
        if containment.contained {
            "contained in a sphere/hyperplane (equidistribution hypothesis fails)"
        } else {
            "not contained in any sphere/hyperplane"
        }
    )];

    let suite = standard_bumps(model);
    let haars: Vec<f64> = suite
        .iter()
        .map(|f| haar_integral(model, f, 20))
        .collect::<std::result::Result<_, _>>()?;
    let mut plot_rows = Vec::new();
    let mut final_worst_rel = 0.0f64;
    for &t in &t_values {
        let ests = birkhoff_suite(model, &curve, &curve_id, t, &base, &suite, args.samples, args.seed)?;
        let mut worst = 0.0f64;
        let mut worst_rel = 0.0f64;
        for (est, &haar) in ests.iter().zip(haars.iter()) {
            worst = worst.max((est.value - haar).abs());
            worst_rel = worst_rel.max((est.value - haar).abs() / haar.abs().max(1e-12));
            plot_rows.push((t, est.value, est.std_error, haar));
            lines.push(Record::from_estimate(model, est, haar).to_json_line());
        }
        lines.push(format!(
            "# t={t}: max |value - haar| = {worst:.6e} (relative {worst_rel:.6e})"
        ));
        final_worst_rel = worst_rel;
    }
    emit(&args.out, &lines)?;
    if let Some(plot) = &args.plot {
        write_plot_data(plot, &plot_rows)?;
    }
    if let Some(tol) = args.assert_converged {
        if final_worst_rel > tol {
            return Ok(Outcome::Fail(format!(
                "worst relative deviation {final_worst_rel:.6e} at t={} exceeds {tol}",
                t_values.last().unwrap()
            )));
        }
    }
    Ok(Outcome::Pass)
}

fn cmd_subsphere(args: SubsphereArgs) -> Result<Outcome> {
    let (curve, _, curve_id) = load_curve(&args.curve)?;
    let report = subsphere_detect(&curve, args.samples)?;
    if report.contained {
        let witness = report.witness.as_ref().unwrap();
        let shape = match decode_witness(witness) {
            WitnessShape::Sphere { center, radius } => {
                let c: Vec<String> = center.iter().map(|v| format!("{v:.9}")).collect();
                format!("sphere center ({}) radius {radius:.9}", c.join(", "))
            }
            WitnessShape::Hyperplane { normal, offset } => {
                let n: Vec<String> = normal.iter().map(|v| format!("{v:.9}")).collect();
                format!("hyperplane normal ({}) offset {offset:.9}", n.join(", "))
            }
        };
        println!(
            "{curve_id}: contained, witness: {shape} (min singular value {:.3e})",
            report.min_singular_value
        );
    } else {
        println!(
            "{curve_id}: not contained (min singular value {:.3e}, max {:.3e})",
            report.min_singular_value, report.max_singular_value
        );
    }
    if args.assert_contained && !report.contained {
        return Ok(Outcome::Fail("expected a contained curve".into()));
    }
    if args.assert_generic && report.contained {
        return Ok(Outcome::Fail("expected a generic curve".into()));
    }
    Ok(Outcome::Pass)
}

fn cmd_invariants(args: InvariantsArgs) -> Result<Outcome> {
    let (curve, n, curve_id) = load_curve(&args.curve)?;
    let adjoint = build_adjoint(&QuadraticSpace::new(n))?;
    let mut rep = adjoint.clone();
    for d in args
        .wedge
        .split(',')
        .map(|v| v.trim().parse::<usize>().context("bad wedge degree"))
        .collect::<Result<Vec<_>>>()?
    {
        if d < 2 {
            bail!("wedge degrees start at 2; the adjoint is always included");
        }
        rep = rep.direct_sum(&build_exterior(&adjoint, d)?);
    }
    let samples = args.samples.unwrap_or(rep.dim() + 30);
    let report = invariant_vector_solver(&rep, &curve, samples)?;
    println!(
        "{curve_id}: excess_dim = {} (nullspace {}, global invariants {}, gap {:.3e})",
        report.excess_dim,
        report.nullspace.len(),
        report.global_invariants.len(),
        report.gap
    );
    if let Some(expected) = args.assert_excess {
        if report.excess_dim != expected {
            return Ok(Outcome::Fail(format!(
                "excess_dim = {}, expected {expected}",
                report.excess_dim
            )));
        }
    }
    Ok(Outcome::Pass)
}

fn cmd_kappa(args: KappaArgs) -> Result<Outcome> {
    if args.t == 0.0 {
        bail!("unipotent parameter t must be nonzero (the bound fails on the contracted part)");
    }
    let config = RunConfig::new("kappa")
        .with_t(vec![args.t])
        .with_samples(Some(args.trials))
        .with_seed(Some(args.seed));
    config.validate()?;
    let adjoint = build_adjoint(&QuadraticSpace::new(args.n))?;
    let mut failures = Vec::new();
    for name in args.rep.split(',').map(str::trim) {
        let rep = match name {
            "adjoint" => adjoint.clone(),
            "wedge2" => build_exterior(&adjoint, 2)?,
            other => bail!("unknown representation '{other}' (use adjoint, wedge2)"),
        };
        let mut param = vec![0.0; args.n - 1];
        param[0] = args.t;
        let unipotent = rep_unipotent(&rep, &param);
        let est = kappa_estimate(&rep.weights, &unipotent, args.trials, args.seed)?;
        let violations =
            kappa_violations(&rep.weights, &unipotent, est.kappa_hat / 2.0, args.trials, args.seed + 1);
        println!(
            "n={} rep={name} t={}: kappa_hat = {:.6} (violations at kappa_hat/2 on fresh samples: {violations})",
            args.n, args.t, est.kappa_hat
        );
        if violations > 0 {
            failures.push(format!("{name}: {violations} violations"));
        }
        if let Some(min) = args.min_kappa {
            if est.kappa_hat < min {
                failures.push(format!("{name}: kappa_hat {:.6} < {min}", est.kappa_hat));
            }
        }
    }
    if failures.is_empty() {
        Ok(Outcome::Pass)
    } else {
        Ok(Outcome::Fail(failures.join("; ")))
    }
}

fn cmd_goodfn(args: GoodfnArgs) -> Result<Outcome> {
    let (xi, interval) = match (&args.curve, &args.entry, &args.poly) {
        (Some(curve_path), Some(entry), None) => {
            let (curve, n, _) = load_curve(curve_path)?;
            let idx = parse_floats(entry)?;
            if idx.len() != 2 {
                bail!("--entry takes row,col");
            }
            let adjoint = build_adjoint(&QuadraticSpace::new(n))?;
            let poly = upsilon_entry_poly(&adjoint, &curve, idx[0] as usize, idx[1] as usize)?;
            use geoflow::curves::CurveEval;
            (poly, curve.interval())
        }
        (None, None, Some(coeffs)) => {
            let interval = parse_floats(
                args.interval
                    .as_deref()
                    .ok_or_else(|| anyhow!("--poly requires --interval a,b"))?,
            )?;
            if interval.len() != 2 || interval[0] >= interval[1] {
                bail!("--interval must be a,b with a < b");
            }
            (Polynomial::new(parse_floats(coeffs)?), (interval[0], interval[1]))
        }
        _ => bail!("use either --curve with --entry, or --poly with --interval"),
    };
    let report = good_function_check(&xi, interval, args.c, args.alpha, args.trials, args.seed)?;
    println!(
        "worst sublevel ratio over {} trials: {:.6} (C = {}, alpha = {})",
        report.trials, report.worst_ratio, report.c, report.alpha
    );
    if args.assert_good && report.worst_ratio > 1.0 {
        return Ok(Outcome::Fail(format!(
            "ratio {:.6} exceeds 1: not (C, alpha)-good on the sampled pairs",
            report.worst_ratio
        )));
    }
    Ok(Outcome::Pass)
}

fn emit(out: &Option<PathBuf>, lines: &[String]) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, lines.join("\n") + "\n")
                .with_context(|| format!("writing {}", path.display()))?;
        }
        None => {
            for line in lines {
                println!("{line}");
            }
        }
    }
    Ok(())
}
