//! Command-line surface. Every subcommand renders its result to a string so
//! that output can be compared byte for byte.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::density::{threshold, DeParams, ThresholdResult};
use crate::enumerator::{
    estimate_delta_large_l, growth_rate, uniform_grid, EnumeratorParams, GrowthRate,
};
use crate::error::{Error, Result};
use crate::lifting::{lift, monte_carlo_code, MonteCarloResult};
use crate::protograph::{gv_bound, rate_to_f64, shannon_limit, BaseMatrix, Rate};
use crate::spreading::{ar4ja_family, ar4ja_spreading, fractional_gap, terminate, EdgeSpreading};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "tar4ja", version, about = "Terminated AR4JA protograph ensembles on the BEC")]
pub struct Cli {
    #[arg(long, global = true, value_enum, default_value = "json")]
    pub format: Format,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; all available cores when absent.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Emit a block or terminated protograph as JSON.
    Family(EnsembleArgs),
    /// Exact design rate, Shannon limit and GV bound.
    Rate(EnsembleArgs),
    /// BEC density-evolution threshold.
    Threshold {
        #[command(flatten)]
        ensemble: EnsembleArgs,
        #[command(flatten)]
        de: DeArgs,
    },
    /// Minimum-distance growth rate.
    Growthrate {
        #[command(flatten)]
        ensemble: EnsembleArgs,
        #[command(flatten)]
        enumerator: EnumeratorArgs,
    },
    /// Thresholds and growth rates of the terminated e = 0 family.
    Table1 {
        #[arg(long = "l-min", default_value_t = 2)]
        l_min: usize,
        #[arg(long = "l-max", default_value_t = 10)]
        l_max: usize,
        #[command(flatten)]
        de: DeArgs,
        #[command(flatten)]
        enumerator: EnumeratorArgs,
    },
    /// Rate, threshold and growth rate over a grid of (e, L).
    Sweep {
        /// Extension parameters: `a`, `a..b` (inclusive) or `a,b,c`.
        #[arg(long = "e", default_value = "0")]
        e: String,
        /// Termination factors in the same syntax.
        #[arg(long = "L", default_value = "2..10")]
        l: String,
        /// Skip the growth-rate columns.
        #[arg(long)]
        no_growth: bool,
        #[command(flatten)]
        de: DeArgs,
        #[command(flatten)]
        enumerator: EnumeratorArgs,
    },
    /// Monte Carlo peeling decoder on a lifted code.
    Simulate {
        #[command(flatten)]
        ensemble: EnsembleArgs,
        #[arg(long = "lift-N")]
        lift_n: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Also write the lifted matrix in coordinate format.
        #[arg(long)]
        emit_matrix: Option<PathBuf>,
    },
    /// Lifted parity-check matrix in coordinate format.
    Lift {
        #[command(flatten)]
        ensemble: EnsembleArgs,
        #[arg(long = "lift-N")]
        lift_n: usize,
    },
}

#[derive(Debug, Clone, Args)]
pub struct EnsembleArgs {
    /// Named family.
    #[arg(long, default_value = "ar4ja")]
    pub family: String,
    #[arg(long = "e", default_value_t = 0)]
    pub e: usize,
    /// Termination factor; the block ensemble when absent.
    #[arg(long = "L")]
    pub l: Option<usize>,
    /// Spreading JSON file used instead of the named family.
    #[arg(long, conflicts_with = "protograph")]
    pub spreading: Option<PathBuf>,
    /// Protograph JSON file used as is.
    #[arg(long)]
    pub protograph: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DeArgs {
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long = "max-iter", default_value_t = 200_000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub residual: f64,
}

impl DeArgs {
    fn params(&self) -> DeParams {
        DeParams {
            residual_target: self.residual,
            max_iterations: self.max_iter,
            bisection_tolerance: self.tol,
            ..DeParams::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EnumeratorArgs {
    #[arg(long = "grid-step", default_value_t = 1e-3)]
    pub grid_step: f64,
    #[arg(long, default_value_t = 16)]
    pub starts: usize,
}

impl EnumeratorArgs {
    fn params(&self, seed: u64) -> EnumeratorParams {
        EnumeratorParams { starts: self.starts, seed, ..EnumeratorParams::default() }
    }

    fn grid(&self) -> Result<Vec<f64>> {
        if !(self.grid_step > 0.0 && self.grid_step < 0.2) {
            return Err(Error::InvalidParameter(format!("grid step {}", self.grid_step)));
        }
        Ok(uniform_grid(1e-4, 0.2, self.grid_step))
    }
}

/// Exit status for an error: 2 for invalid configuration, 3 for solver
/// failures.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidBase(_)
        | Error::NonpositiveRate { .. }
        | Error::RateOutOfRange(_)
        | Error::InvalidSpreading(_)
        | Error::TerminationTooShort(_)
        | Error::FractionOutOfRange(_)
        | Error::LiftBelowMultiplicity { .. }
        | Error::InvalidParameter(_)
        | Error::Parse(_) => 2,
        Error::ThresholdAboveCapacity { .. }
        | Error::UndecodableAtZero
        | Error::NoCrossing
        | Error::PermutationSampling { .. } => 3,
    }
}

/// Parses `a`, `a..b` (inclusive) or `a,b,c`.
pub fn parse_range(text: &str) -> Result<Vec<usize>> {
    let bad = || Error::Parse(format!("range '{text}'"));
    let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
    let values: Vec<usize> = if let Some((a, b)) = text.split_once("..") {
        let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
        (a..=b).collect()
    } else {
        text.split(',').map(num).collect::<Result<_>>()?
    };
    if values.is_empty() {
        return Err(Error::InvalidParameter(format!("empty range '{text}'")));
    }
    Ok(values)
}

fn read(path: &PathBuf) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))
}

impl EnsembleArgs {
    /// Resolves the ensemble to a base matrix.
    pub fn base(&self) -> Result<BaseMatrix> {
        if let Some(p) = &self.protograph {
            return BaseMatrix::from_json(&read(p)?);
        }
        let spreading = match &self.spreading {
            Some(p) => Some(EdgeSpreading::from_json(&read(p)?)?),
            None => {
                if self.family != "ar4ja" {
                    return Err(Error::InvalidParameter(format!("unknown family '{}'", self.family)));
                }
                None
            }
        };
        match (self.l, spreading) {
            (Some(l), Some(s)) => Ok(terminate(&s, l)?.base),
            (Some(l), None) => Ok(terminate(&ar4ja_spreading(self.e), l)?.base),
            (None, Some(s)) => {
                let sum = s.component_sum()?;
                BaseMatrix::new(s.name.clone(), sum, s.punctured_columns.iter().copied())
            }
            (None, None) => Ok(ar4ja_family(self.e)),
        }
    }
}

fn render<T: Serialize>(rows: &[T], format: Format) -> Result<String> {
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(rows).expect("serializable") + "\n"),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r).map_err(|e| Error::Parse(e.to_string()))?;
            }
            Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8"))
        }
    }
}

fn render_one<T: Serialize>(row: &T, format: Format) -> Result<String> {
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(row).expect("serializable") + "\n"),
        Format::Csv => render(std::slice::from_ref(row), format),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RateRow {
    pub name: String,
    pub n_c: usize,
    pub n_v: usize,
    pub transmitted: usize,
    pub rate: String,
    pub rate_value: f64,
    pub shannon: f64,
    pub gv_bound: f64,
}

fn rate_row(b: &BaseMatrix) -> Result<RateRow> {
    let rate = b.design_rate()?;
    Ok(RateRow {
        name: b.name.clone(),
        n_c: b.n_c(),
        n_v: b.n_v(),
        transmitted: b.transmitted(),
        rate: rate.to_string(),
        rate_value: rate_to_f64(rate),
        shannon: shannon_limit(rate)?,
        gv_bound: gv_bound(rate)?,
    })
}

#[derive(Debug, Clone, Serialize)]
struct ThresholdRow {
    threshold: f64,
    bracket_low: f64,
    bracket_high: f64,
    saturated: bool,
    probes: usize,
}

#[derive(Debug, Clone, Serialize)]
struct GrowthSummary<'a> {
    delta_min: f64,
    scaled_growth: f64,
    converged: bool,
    curve: &'a [crate::enumerator::ShapeSample],
}

#[derive(Debug, Clone, Serialize)]
struct CurveRow {
    delta: f64,
    r: f64,
    converged: bool,
    delta_min: f64,
    scaled_growth: f64,
}

/// One row of the terminated-family table.
#[derive(Debug, Clone, Serialize)]
pub struct TableRow {
    #[serde(rename = "L")]
    pub l: String,
    pub rate: String,
    pub growth_rate: Option<f64>,
    pub scaled_growth: Option<f64>,
    pub threshold: Option<f64>,
    pub shannon: f64,
    pub gap: Option<f64>,
    pub method: String,
}

fn terminated(e: usize, l: usize) -> Result<BaseMatrix> {
    Ok(terminate(&ar4ja_spreading(e), l)?.base)
}

fn growth(b: &BaseMatrix, en: &EnumeratorArgs, seed: u64) -> Result<GrowthRate> {
    growth_rate(b, en.params(seed), &en.grid()?)
}

/// Builds the table for `e = 0` and `L` in `l_min..=l_max`, followed by the
/// limiting row.
pub fn table1(l_min: usize, l_max: usize, de: &DeParams, en: &EnumeratorArgs, seed: u64) -> Result<Vec<TableRow>> {
    if l_min < 2 || l_max < l_min {
        return Err(Error::InvalidParameter(format!("L range {l_min}..{l_max}")));
    }
    let mut rows = Vec::new();
    let mut last_scaled: Option<f64> = None;
    for l in l_min..=l_max {
        let b = terminated(0, l)?;
        let rate = b.design_rate()?;
        let u = b.transmitted() as f64;
        let eps = threshold(&b, de)?.threshold;
        let shannon = shannon_limit(rate)?;
        let g = growth(&b, en, seed)?;
        let (delta, method) = match (g.converged, last_scaled) {
            (false, Some(s)) if l >= 8 => (estimate_delta_large_l(s, 0, l), "estimate"),
            _ => (g.delta_min, "direct"),
        };
        if g.converged && l >= 7 {
            last_scaled = Some(u * g.delta_min);
        }
        rows.push(TableRow {
            l: l.to_string(),
            rate: rate.to_string(),
            growth_rate: Some(delta),
            scaled_growth: Some(u * delta),
            threshold: Some(eps),
            shannon,
            gap: Some(shannon - eps),
            method: method.into(),
        });
    }
    rows.push(TableRow {
        l: "inf".into(),
        rate: Rate::new(1, 2).to_string(),
        growth_rate: Some(0.0),
        scaled_growth: last_scaled,
        threshold: None,
        shannon: 0.5,
        gap: None,
        method: "limit".into(),
    });
    Ok(rows)
}

/// One point of a parameter sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub e: usize,
    #[serde(rename = "L")]
    pub l: String,
    pub rate: String,
    pub threshold: Option<f64>,
    pub shannon: f64,
    pub delta_min: Option<f64>,
    pub gv_bound: f64,
    pub fractional_gap: Option<f64>,
    pub error: Option<String>,
}

fn sweep_point(e: usize, l: Option<usize>, de: &DeParams, en: Option<&EnumeratorArgs>, seed: u64) -> Result<SweepRow> {
    let b = match l {
        Some(l) => terminated(e, l)?,
        None => ar4ja_family(e),
    };
    let rate = b.design_rate()?;
    let mut row = SweepRow {
        e,
        l: l.map_or("block".into(), |l| l.to_string()),
        rate: rate.to_string(),
        threshold: None,
        shannon: shannon_limit(rate)?,
        delta_min: None,
        gv_bound: gv_bound(rate)?,
        fractional_gap: None,
        error: None,
    };
    let mut errors = Vec::new();
    match threshold(&b, de) {
        Ok(t) => {
            row.threshold = Some(t.threshold);
            row.fractional_gap = Some(fractional_gap(t.threshold, rate)?);
        }
        Err(err) => errors.push(format!("threshold: {err}")),
    }
    if let Some(en) = en {
        match growth(&b, en, seed) {
            Ok(g) => {
                row.delta_min = Some(g.delta_min);
                if !g.converged {
                    errors.push("growth rate: optimizer did not converge".into());
                }
            }
            Err(err) => errors.push(format!("growth rate: {err}")),
        }
    }
    if !errors.is_empty() {
        row.error = Some(errors.join("; "));
    }
    Ok(row)
}

/// Sweeps `(e, L)`; the block ensemble of each `e` comes first.
pub fn sweep(es: &[usize], ls: &[usize], de: &DeParams, en: Option<&EnumeratorArgs>, seed: u64) -> Result<Vec<SweepRow>> {
    if let Some(&l) = ls.iter().find(|&&l| l < 2) {
        return Err(Error::TerminationTooShort(l));
    }
    de.validate()?;
    if let Some(en) = en {
        en.grid()?;
    }
    let points: Vec<(usize, Option<usize>)> = es
        .iter()
        .flat_map(|&e| std::iter::once((e, None)).chain(ls.iter().map(move |&l| (e, Some(l)))))
        .collect();
    points.par_iter().map(|&(e, l)| sweep_point(e, l, de, en, seed)).collect()
}

fn simulation(b: &BaseMatrix, n: usize, eps: f64, trials: usize, seed: u64) -> Result<(MonteCarloResult, crate::lifting::LiftedCode)> {
    let code = lift(b, n, seed)?;
    let result = monte_carlo_code(&code, eps, trials, seed)?;
    Ok((result, code))
}

/// Runs a parsed command line inside a pool with the requested thread count.
pub fn run(cli: &Cli) -> Result<String> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(Error::InvalidParameter("threads must be at least 1".into()));
        }
        builder = builder.num_threads(k);
    }
    let pool = builder.build().map_err(|e| Error::InvalidParameter(e.to_string()))?;
    pool.install(|| execute(cli))
}

fn execute(cli: &Cli) -> Result<String> {
    let format = cli.format;
    match &cli.command {
        Command::Family(ens) => {
            let b = ens.base()?;
            match format {
                Format::Json => Ok(b.to_json() + "\n"),
                Format::Csv => {
                    let mut out = String::new();
                    for (j, row) in b.base.iter().enumerate() {
                        let cells: Vec<String> = row.iter().map(i64::to_string).collect();
                        out += &format!("{j},{}\n", cells.join(","));
                    }
                    let flags: Vec<&str> = (0..b.n_v()).map(|k| if b.is_punctured(k) { "1" } else { "0" }).collect();
                    out += &format!("punctured,{}\n", flags.join(","));
                    Ok(out)
                }
            }
        }
        Command::Rate(ens) => render_one(&rate_row(&ens.base()?)?, format),
        Command::Threshold { ensemble, de } => {
            let t: ThresholdResult = threshold(&ensemble.base()?, &de.params())?;
            match format {
                Format::Json => render_one(&t, format),
                Format::Csv => render_one(
                    &ThresholdRow {
                        threshold: t.threshold,
                        bracket_low: t.bracket.0,
                        bracket_high: t.bracket.1,
                        saturated: t.saturated,
                        probes: t.probes.len(),
                    },
                    format,
                ),
            }
        }
        Command::Growthrate { ensemble, enumerator } => {
            let b = ensemble.base()?;
            let g = growth(&b, enumerator, cli.seed)?;
            let scaled = b.transmitted() as f64 * g.delta_min;
            match format {
                Format::Json => render_one(
                    &GrowthSummary { delta_min: g.delta_min, scaled_growth: scaled, converged: g.converged, curve: &g.shape.samples },
                    format,
                ),
                Format::Csv => {
                    let rows: Vec<CurveRow> = g
                        .shape
                        .samples
                        .iter()
                        .map(|s| CurveRow { delta: s.delta, r: s.r, converged: s.converged, delta_min: g.delta_min, scaled_growth: scaled })
                        .collect();
                    render(&rows, format)
                }
            }
        }
        Command::Table1 { l_min, l_max, de, enumerator } => {
            render(&table1(*l_min, *l_max, &de.params(), enumerator, cli.seed)?, format)
        }
        Command::Sweep { e, l, no_growth, de, enumerator } => {
            let es = parse_range(e)?;
            let ls = parse_range(l)?;
            let en = (!no_growth).then_some(enumerator);
            render(&sweep(&es, &ls, &de.params(), en, cli.seed)?, format)
        }
        Command::Simulate { ensemble, lift_n, eps, trials, emit_matrix } => {
            let (result, code) = simulation(&ensemble.base()?, *lift_n, *eps, *trials, cli.seed)?;
            if let Some(path) = emit_matrix {
                let file = fs::File::create(path).map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
                code.write_coordinate(std::io::BufWriter::new(file))
                    .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
            }
            render_one(&result, format)
        }
        Command::Lift { ensemble, lift_n } => {
            let code = lift(&ensemble.base()?, *lift_n, cli.seed)?;
            let mut buf = Vec::new();
            code.write_coordinate(&mut buf).expect("in-memory writer");
            Ok(String::from_utf8(buf).expect("utf-8"))
        }
    }
}
