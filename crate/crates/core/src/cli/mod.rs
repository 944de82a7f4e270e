//! Command-line front end.
//!
//! Every subcommand writes one CSV table and a run manifest. Information
//! columns carry a `_bits` or `_nats` suffix (`_bits2`/`_nats2` for
//! variances); blocklengths, code sizes, distortion levels and
//! probabilities are dimensionless and unsuffixed.

pub mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bes::{bes_curve, log_spaced, BesParams, BoundCurve};
use crate::dispersion::analyze;
use crate::error::{Error, Result};
use crate::model::{builtin_bes, load_model, surrogate_from_noisy, NoisySourceModel};
use crate::numerics::Rational;
use crate::oneshot::{
    achievability_shannon_style, achievability_tilted, code_size_bracket, conditioned_kernel, log_grid, BlockSpec,
    ConverseMethod, ConverseOptions, ConverseTable, Estimate, RandomCodingTable, Reference, Sampling, TiltedParams,
};
use crate::rd_solver::{solve_distortion, SolverOptions};
use output::{emit, fmt_num, fmt_opt, sha256_hex, RunManifest, Table};

const LN_2: f64 = std::f64::consts::LN_2;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_REFUSED: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "noisy-rd", version, about = "Finite-blocklength analysis of noisy lossy source coding")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Rate-distortion function and slope over a grid of distortion levels.
    Rd(RdArgs),
    /// Rate-dispersion functions of the noisy and surrogate problems.
    Dispersion(DispersionArgs),
    /// Rate-blocklength curves for the erased fair coin.
    BesCurve(BesCurveArgs),
    /// Block bounds on the excess-distortion probability, or a bracket on
    /// the optimal code size.
    Oneshot(OneshotArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// TOML model file.
    #[arg(long, value_name = "FILE", conflicts_with = "bes", required_unless_present = "bes")]
    pub model: Option<PathBuf>,
    /// Built-in fair coin seen through an erasure channel with this erasure
    /// probability.
    #[arg(long, value_name = "DELTA")]
    pub bes: Option<String>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    Bits,
    Nats,
}

impl Units {
    fn suffix(self) -> &'static str {
        match self {
            Units::Bits => "bits",
            Units::Nats => "nats",
        }
    }

    fn scale(self) -> f64 {
        match self {
            Units::Bits => 1.0 / LN_2,
            Units::Nats => 1.0,
        }
    }
}

#[derive(Args, Debug)]
pub struct RdArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Distortion levels, comma separated.
    #[arg(long, value_delimiter = ',', required_unless_present = "d_grid")]
    pub d: Vec<String>,
    /// Inclusive grid `start:stop:step`.
    #[arg(long, value_name = "START:STOP:STEP")]
    pub d_grid: Option<String>,
    #[arg(long, value_enum, default_value_t = Units::Bits)]
    pub units: Units,
    /// Output file; stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DispersionArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Distortion levels, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub d: Vec<String>,
    #[arg(long, value_enum, default_value_t = Units::Bits)]
    pub units: Units,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BesCurveArgs {
    /// Erasure probability.
    #[arg(long, default_value = "0.1")]
    pub delta: String,
    /// Per-letter bit-error threshold.
    #[arg(long, default_value = "0.1")]
    pub d: String,
    /// Excess-distortion probability.
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, default_value_t = 10)]
    pub k_min: u64,
    #[arg(long, default_value_t = 5000)]
    pub k_max: u64,
    /// Linear grid step; the grid is log-spaced when omitted.
    #[arg(long)]
    pub k_step: Option<u64>,
    /// Number of points on the log-spaced grid.
    #[arg(long, default_value_t = 40)]
    pub k_count: usize,
    /// Explicit blocklengths, overriding the grid.
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<u64>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct OneshotArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub k: usize,
    /// Per-letter distortion threshold, exact (`0.1` or `1/10`).
    #[arg(long)]
    pub d: String,
    #[arg(long)]
    pub eps: f64,
    /// Code sizes, comma separated.
    #[arg(long = "M", short = 'M', visible_alias = "m", value_delimiter = ',', required_unless_present = "search")]
    pub m: Vec<f64>,
    /// Bracket the smallest code size meeting eps instead.
    #[arg(long, conflicts_with = "m")]
    pub search: bool,
    #[arg(long, default_value_t = Sampling::default().samples)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fixed gamma for the Shannon-style bound; optimized over a grid when
    /// omitted.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Scale of the tilted bound's beta, `beta = sqrt(k) / b`.
    #[arg(long, default_value_t = 1.0)]
    pub b: f64,
    /// Window of the tilted bound, `delta = tau / k`; defaults to `sqrt(k)`.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Refused(_) => EXIT_REFUSED,
        Error::NonConvergence { .. } => EXIT_FAILURE,
        _ => EXIT_VALIDATION,
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { stderr.write_all(text.as_bytes()) } else { stdout.write_all(text.as_bytes()) };
            return code;
        }
    };
    let command_line = args.iter().map(|a| a.to_string_lossy()).collect::<Vec<_>>().join(" ");
    let ctx = Context { command_line, started: Instant::now() };
    let outcome = match &cli.command {
        Command::Rd(a) => cmd_rd(a, &ctx, stdout, stderr),
        Command::Dispersion(a) => cmd_dispersion(a, &ctx, stdout, stderr),
        Command::BesCurve(a) => cmd_bes_curve(a, &ctx, stdout, stderr),
        Command::Oneshot(a) => cmd_oneshot(a, &ctx, stdout, stderr),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

struct Context {
    command_line: String,
    started: Instant,
}

impl Context {
    fn manifest(&self, model_sha256: String, seed: Option<u64>) -> RunManifest {
        RunManifest {
            command_line: self.command_line.clone(),
            model_sha256,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: 0.0,
        }
    }
}

fn parse_rational(field: &str, s: &str) -> Result<Rational> {
    s.parse::<Rational>().map_err(|e| Error::Validation(vec![format!("--{field}: {e}")]))
}

fn bes_fingerprint(delta: Rational) -> String {
    sha256_hex(format!("builtin bes delta={delta}").as_bytes())
}

/// Loads the selected model and a digest identifying it.
pub fn load_selected(args: &ModelArgs) -> Result<(NoisySourceModel, String)> {
    match (&args.model, &args.bes) {
        (Some(path), _) => {
            let bytes = std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            let model = load_model(path)?;
            Ok((model, sha256_hex(&bytes)))
        }
        (None, Some(delta)) => {
            let delta = parse_rational("bes", delta)?;
            Ok((builtin_bes(delta.to_f64())?, bes_fingerprint(delta)))
        }
        (None, None) => Err(Error::Validation(vec!["one of --model or --bes is required".into()])),
    }
}

/// Expands `start:stop:step` into an inclusive list.
pub fn parse_grid(spec: &str) -> Result<Vec<Rational>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Validation(vec![format!("--d-grid '{spec}' is not START:STOP:STEP")]));
    }
    let start = parse_rational("d-grid", parts[0])?;
    let stop = parse_rational("d-grid", parts[1])?;
    let step = parse_rational("d-grid", parts[2])?;
    if step <= Rational::zero() || stop < start {
        return Err(Error::Validation(vec![format!("--d-grid '{spec}' is empty or has a nonpositive step")]));
    }
    let mut out = Vec::new();
    let mut v = start;
    while v <= stop {
        out.push(v);
        if out.len() > 100_000 {
            return Err(Error::Validation(vec![format!("--d-grid '{spec}' has more than 100000 points")]));
        }
        v = v + step;
    }
    Ok(out)
}

fn levels(d: &[String], grid: Option<&str>) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = d.iter().map(|s| parse_rational("d", s).map(|r| r.to_f64())).collect::<Result<_>>()?;
    if let Some(g) = grid {
        out.extend(parse_grid(g)?.iter().map(|r| r.to_f64()));
    }
    Ok(out)
}

fn status_of(e: &Error) -> String {
    match e {
        Error::Range { d_min, d_max, .. } => {
            format!("out of range: d must lie in ({}, {}]", fmt_num(*d_min), fmt_num(*d_max))
        }
        other => other.to_string(),
    }
}

fn cmd_rd(a: &RdArgs, ctx: &Context, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let (model, digest) = load_selected(&a.model)?;
    let sur = surrogate_from_noisy(&model, true)?;
    let u = a.units;
    let (rate_col, slope_col) = (format!("rate_{}", u.suffix()), format!("lambda_star_{}", u.suffix()));
    let mut table = Table::new(&["d", &rate_col, &slope_col, "status"]);
    for d in levels(&a.d, a.d_grid.as_deref())? {
        match solve_distortion(&sur, d, &SolverOptions::default()) {
            Ok(sol) => table.row([
                fmt_num(d),
                fmt_num(sol.rate * u.scale()),
                fmt_num(sol.lambda_star * u.scale()),
                "ok".into(),
            ]),
            Err(e @ (Error::Range { .. } | Error::Infeasible(_))) => {
                table.row([fmt_num(d), String::new(), String::new(), status_of(&e)])
            }
            Err(e) => return Err(e),
        }
    }
    emit(&table, a.output.as_deref(), ctx.manifest(digest, None), ctx.started, stdout, stderr)?;
    Ok(EXIT_OK)
}

fn cmd_dispersion(a: &DispersionArgs, ctx: &Context, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let (model, digest) = load_selected(&a.model)?;
    let u = a.units;
    let s = u.suffix();
    let cols = [
        "d".to_string(),
        format!("rate_{s}"),
        format!("v_{s}2"),
        format!("vtilde_{s}2"),
        format!("v_pair_{s}2"),
        format!("inner_variance_{s}2"),
        format!("lambda_star_{s}"),
        format!("covariance_residual_{s}2"),
        "status".to_string(),
    ];
    let header: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut table = Table::new(&header);
    let (l1, l2) = (u.scale(), u.scale() * u.scale());
    for d in levels(&a.d, None)? {
        match analyze(&model, d, &SolverOptions::default()) {
            Ok((_, _, r)) => table.row([
                fmt_num(d),
                fmt_num(r.rate * l1),
                fmt_num(r.v_surrogate * l2),
                fmt_num(r.v_noisy * l2),
                fmt_num(r.v_pair * l2),
                fmt_num(r.inner_variance_term * l2),
                fmt_num(r.lambda_star * l1),
                fmt_num(r.covariance_cross_term.abs() * l2),
                "ok".into(),
            ]),
            Err(e @ (Error::Range { .. } | Error::Infeasible(_))) => {
                let mut row = vec![fmt_num(d)];
                row.extend(std::iter::repeat_n(String::new(), 7));
                row.push(status_of(&e));
                table.row(row);
            }
            Err(e) => return Err(e),
        }
    }
    emit(&table, a.output.as_deref(), ctx.manifest(digest, None), ctx.started, stdout, stderr)?;
    Ok(EXIT_OK)
}

/// Blocklengths selected by the curve arguments.
pub fn curve_grid(a: &BesCurveArgs) -> Result<Vec<u64>> {
    if !a.k.is_empty() {
        return Ok(a.k.clone());
    }
    if a.k_min == 0 || a.k_max < a.k_min {
        return Err(Error::Validation(vec![format!("bad blocklength range [{}, {}]", a.k_min, a.k_max)]));
    }
    Ok(match a.k_step {
        Some(0) => return Err(Error::Validation(vec!["--k-step must be positive".into()])),
        Some(step) => (a.k_min..=a.k_max).step_by(step as usize).collect(),
        None => log_spaced(a.k_min, a.k_max, a.k_count),
    })
}

/// The curve as CSV, one row per blocklength.
pub fn curve_table(curve: &BoundCurve) -> Table {
    let mut table = Table::new(&[
        "k",
        "rate_rd_bits",
        "noisy_converse_bits",
        "noisy_achievability_bits",
        "noisy_gaussian_bits",
        "noisy_gaussian_logk_bits",
        "surrogate_converse_bits",
        "surrogate_achievability_bits",
        "surrogate_gaussian_bits",
        "surrogate_gaussian_logk_bits",
        "note",
    ]);
    for r in &curve.rows {
        table.row([
            r.k.to_string(),
            fmt_num(r.rate_rd),
            fmt_num(r.noisy_converse),
            fmt_opt(r.noisy_achievability),
            fmt_num(r.noisy_gaussian),
            fmt_num(r.noisy_gaussian_logk),
            fmt_num(r.surrogate_converse),
            fmt_opt(r.surrogate_achievability),
            fmt_num(r.surrogate_gaussian),
            fmt_num(r.surrogate_gaussian_logk),
            r.note.clone().unwrap_or_default(),
        ]);
    }
    table
}

fn cmd_bes_curve(a: &BesCurveArgs, ctx: &Context, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let delta = parse_rational("delta", &a.delta)?;
    let d = parse_rational("d", &a.d)?;
    let params = BesParams::new(delta, d, a.eps)?;
    let curve = bes_curve(&params, &curve_grid(a)?)?;
    let table = curve_table(&curve);
    emit(&table, a.output.as_deref(), ctx.manifest(bes_fingerprint(delta), None), ctx.started, stdout, stderr)?;
    Ok(EXIT_OK)
}

fn estimate_fields(e: &Estimate) -> [String; 2] {
    [fmt_num(e.value), fmt_num(e.std_error)]
}

/// Shannon-style bound at the best gamma of a small grid, or at `fixed`.
fn best_shannon(
    block: &BlockSpec,
    m: f64,
    kernel: &crate::model::Channel,
    fixed: Option<f64>,
) -> Result<(Estimate, f64)> {
    let gammas = match fixed {
        Some(g) => vec![g],
        None => {
            let mut g = vec![0.0];
            g.extend(log_grid(0.05, m.ln().max(0.0) + 5.0, 11));
            g
        }
    };
    let mut best: Option<(Estimate, f64)> = None;
    for g in gammas {
        let e = achievability_shannon_style(block, m, kernel, g)?;
        if best.as_ref().is_none_or(|(b, _)| e.value < b.value) {
            best = Some((e, g));
        }
    }
    Ok(best.expect("nonempty gamma grid"))
}

fn cmd_oneshot(a: &OneshotArgs, ctx: &Context, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let (model, digest) = load_selected(&a.model)?;
    let d = parse_rational("d", &a.d)?;
    let block =
        BlockSpec::new(model, a.k, d, a.eps)?.with_sampling(Sampling { samples: a.mc_samples.max(1), seed: a.seed });
    let manifest = ctx.manifest(digest, Some(a.seed));
    let kf = a.k as f64;

    if a.search {
        let br = code_size_bracket(&block)?;
        let mut table = Table::new(&["side", "m", "log2_m_bits", "rate_bits", "status"]);
        let conv_status = if br.ln_m_converse.is_infinite() { "no code meets eps" } else { "ok" };
        table.row([
            "converse".into(),
            br.m_converse().map(|m| m.to_string()).unwrap_or_default(),
            fmt_num(br.ln_m_converse / LN_2),
            fmt_num(br.ln_m_converse / LN_2 / kf),
            conv_status.into(),
        ]);
        match br.ln_m_achievability {
            Some(l) => table.row([
                "achievability".into(),
                br.m_achievability().map(|m| m.to_string()).unwrap_or_default(),
                fmt_num(l / LN_2),
                fmt_num(l / LN_2 / kf),
                "ok".into(),
            ]),
            None => table.row([
                "achievability".into(),
                String::new(),
                String::new(),
                String::new(),
                "random coding never meets eps".into(),
            ]),
        }
        emit(&table, a.output.as_deref(), manifest, ctx.started, stdout, stderr)?;
        return Ok(EXIT_OK);
    }

    for &m in &a.m {
        if !(m >= 1.0) {
            return Err(Error::Validation(vec![format!("code size {m} must be at least 1")]));
        }
    }
    let mut table =
        Table::new(&["m", "log2_m_bits", "rate_bits", "method", "eps_bound", "std_error", "status", "detail"]);
    let mut refused = false;
    let mut failed_row = |table: &mut Table, m: f64, method: &str, e: &Error, stderr: &mut dyn Write| {
        if matches!(e, Error::Refused(_)) {
            refused = true;
            let _ = writeln!(stderr, "{method} at M = {}: {e}", fmt_num(m));
        }
        let status = match e {
            Error::Refused(_) => "refused",
            _ => "failed",
        };
        table.row([
            fmt_num(m),
            fmt_num(m.log2()),
            fmt_num(m.log2() / kf),
            method.into(),
            String::new(),
            String::new(),
            status.into(),
            e.to_string(),
        ]);
    };
    let head = |m: f64, method: &str| vec![fmt_num(m), fmt_num(m.log2()), fmt_num(m.log2() / kf), method.to_string()];

    let converse = ConverseTable::new(&block, &ConverseOptions::default());
    let tilted = block.tilted_kernel();
    let q = tilted.as_ref().map(|(_, sol)| sol.marginal.clone()).map_err(Clone::clone);
    let random = match &q {
        Ok(q) => RandomCodingTable::new(&block, &Reference::Product(q.clone())),
        Err(e) => Err(e.clone()),
    };
    let conditioned = match &tilted {
        Ok((w, _)) => conditioned_kernel(&block.base, w),
        Err(e) => Err(e.clone()),
    };

    for &m in &a.m {
        match &converse {
            Ok(t) => {
                let method = match t.method {
                    ConverseMethod::Types => "types",
                    ConverseMethod::Separable => "separable",
                };
                let mut row = head(m, "converse");
                row.extend([fmt_num(t.evaluate_ln(m.ln())), fmt_num(0.0), "ok".into(), method.into()]);
                table.row(row);
            }
            Err(e) => failed_row(&mut table, m, "converse", e, stderr),
        }
        match &random {
            Ok(t) => {
                let mut row = head(m, "random_coding");
                row.extend(estimate_fields(&t.evaluate(m)));
                row.extend(["ok".into(), "reference=tilted marginal".into()]);
                table.row(row);
            }
            Err(e) => failed_row(&mut table, m, "random_coding", e, stderr),
        }
        match tilted.as_ref().map_err(Clone::clone).and_then(|(w, _)| best_shannon(&block, m, w, a.gamma)) {
            Ok((est, g)) => {
                let mut row = head(m, "shannon_style");
                row.extend(estimate_fields(&est));
                row.extend(["ok".into(), format!("gamma={}", fmt_num(g))]);
                table.row(row);
            }
            Err(e) => failed_row(&mut table, m, "shannon_style", &e, stderr),
        }
        if a.k < 2 {
            let mut row = head(m, "tilted");
            row.extend([String::new(), String::new(), "skipped".into(), "needs k >= 2".into()]);
            table.row(row);
            continue;
        }
        let tau = a.tau.unwrap_or(kf.sqrt());
        let res = match (&conditioned, &q) {
            (Ok(w), Ok(q)) => TiltedParams::asymptotic(a.k, m, a.b, tau, q.clone())
                .and_then(|p| achievability_tilted(&block, m, w, &p).map(|e| (e, p))),
            (Err(e), _) | (_, Err(e)) => Err(e.clone()),
        };
        match res {
            Ok((est, p)) => {
                let mut row = head(m, "tilted");
                row.extend(estimate_fields(&est));
                row.extend([
                    "ok".into(),
                    format!("beta={} delta={} ln_gamma={}", fmt_num(p.beta), fmt_num(p.delta), fmt_num(p.ln_gamma)),
                ]);
                table.row(row);
            }
            Err(e) => failed_row(&mut table, m, "tilted", &e, stderr),
        }
    }
    emit(&table, a.output.as_deref(), manifest, ctx.started, stdout, stderr)?;
    Ok(if refused { EXIT_REFUSED } else { EXIT_OK })
}

/// Reads a model file and returns it with its digest.
pub fn load_with_digest(path: &Path) -> Result<(NoisySourceModel, String)> {
    load_selected(&ModelArgs { model: Some(path.to_path_buf()), bes: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_inclusive_and_exact() {
        let g = parse_grid("0.05:0.1:0.01").unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g[5], "1/10".parse().unwrap());
        assert!(parse_grid("0.1:0.05:0.01").is_err());
        assert!(parse_grid("0:1").is_err());
    }

    #[test]
    fn refusals_map_to_exit_three() {
        assert_eq!(exit_code(&Error::Refused("cap".into())), EXIT_REFUSED);
        assert_eq!(exit_code(&Error::Validation(vec![])), EXIT_VALIDATION);
    }
}
