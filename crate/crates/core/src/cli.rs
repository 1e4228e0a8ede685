//! Command-line workflow: fit DM curves, calibrate, price, validate.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::barrier::{PathConfig, ProcessParams};
use crate::basket::{em_corporate_curve, PricingSetup};
use crate::calibration::{calibrate_country, calibrate_sector_mc, CalibrationTarget, SECTOR_TENORS};
use crate::curve_fit::{fit_sector, interpolate_grade_spread};
use crate::default_curve::SpreadCurve;
use crate::error::{Error, Result};
use crate::io::{self, CurveRow, ParamRow, ResidualRow, RunConfig, RunManifest, BP};
use crate::rating::RatingGrade;
use crate::validate::{run_checks, Status, ValidateOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NON_CONVERGENCE: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

pub const COUNTRY_PREFIX: &str = "country:";
pub const SECTOR_PREFIX: &str = "sector:";

#[derive(Debug, Parser)]
#[command(
    name = "emftd",
    version,
    about = "EM corporate curves from a two-barrier basket model"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Random seed (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo paths (overrides the config file).
    #[arg(long, global = true)]
    pub paths: Option<usize>,
    /// key=value config file; a run manifest is accepted as well.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; output does not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the parametric sector curve to developed-market quotes.
    FitDm {
        #[arg(long)]
        quotes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Residual report (defaults to `<out>.residuals.csv`).
        #[arg(long)]
        residuals: Option<PathBuf>,
        /// Use only quotes from this sector.
        #[arg(long)]
        sector: Option<String>,
    },
    /// Calibrate (sigma, xi) of a country to its sovereign curve.
    CalibrateCountry {
        #[arg(long)]
        quotes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        country: Option<String>,
        /// Jump intensity instead of the one implied by the sovereign grade.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Calibrate per-rating sigma with a shared xi to a fitted sector curve.
    CalibrateSector {
        /// Parametric curve file written by `fit-dm`.
        #[arg(long)]
        curve: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Label written to the parameter file.
        #[arg(long, default_value = "sector")]
        sector: String,
        /// Ratings to calibrate (default: every fitted broad rating).
        #[arg(long, value_delimiter = ',')]
        grades: Option<Vec<String>>,
    },
    /// Price country, standalone, first-to-default and EM curves.
    Price {
        /// Parameter files (country and sector rows may be split across files).
        #[arg(long, required = true, num_args = 1..)]
        params: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        country: Option<String>,
        #[arg(long)]
        sector: Option<String>,
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,2,3,5,7,10")]
        tenors: Vec<f64>,
    },
    /// Run the invariant checks and print a report.
    Validate {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, hide = true, default_value_t = 0.0)]
        inject_drift_bias: f64,
    },
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonConvergence(_) => EXIT_NON_CONVERGENCE,
        Error::Io(_) => EXIT_INTERNAL,
        _ => EXIT_INPUT,
    }
}

fn load_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(n) = common.paths {
        if n == 0 {
            return Err(Error::InvalidInput("--paths must be at least 1".into()));
        }
        cfg.n_paths = n;
    }
    Ok(cfg)
}

fn manifest_for(cfg: &RunConfig, command: &str, inputs: &[&Path]) -> Result<RunManifest> {
    let mut m = RunManifest::new(cfg, command);
    for p in inputs {
        m.add_input(p)?;
    }
    Ok(m)
}

/// Parses arguments, runs, reports errors on stderr and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    let cfg = load_config(&cli.common)?;
    match cli.common.threads {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidInput(e.to_string()))?
            .install(|| dispatch(cli.command, &cfg)),
        _ => dispatch(cli.command, &cfg),
    }
}

fn dispatch(command: Command, cfg: &RunConfig) -> Result<i32> {
    match command {
        Command::FitDm {
            quotes,
            out,
            residuals,
            sector,
        } => cmd_fit_dm(cfg, &quotes, &out, residuals.as_deref(), sector.as_deref()),
        Command::CalibrateCountry {
            quotes,
            out,
            country,
            lambda,
        } => cmd_calibrate_country(cfg, &quotes, &out, country.as_deref(), lambda),
        Command::CalibrateSector {
            curve,
            out,
            sector,
            grades,
        } => cmd_calibrate_sector(cfg, &curve, &out, &sector, grades.as_deref()),
        Command::Price {
            params,
            out,
            country,
            sector,
            tenors,
        } => cmd_price(cfg, &params, &out, country.as_deref(), sector.as_deref(), &tenors),
        Command::Validate { out, inject_drift_bias } => cmd_validate(cfg, out.as_deref(), inject_drift_bias),
    }
}

pub fn cmd_fit_dm(
    cfg: &RunConfig,
    quotes_path: &Path,
    out: &Path,
    residuals: Option<&Path>,
    sector: Option<&str>,
) -> Result<i32> {
    let mut rows = io::load_quotes(quotes_path)?;
    if let Some(s) = sector {
        rows.retain(|(r, _)| r.sector == s);
        if rows.is_empty() {
            return Err(Error::InvalidInput(format!("no quotes for sector '{s}'")));
        }
    } else {
        let first = &rows[0].0.sector;
        if let Some((r, _)) = rows.iter().find(|(r, _)| &r.sector != first) {
            return Err(Error::InvalidInput(format!(
                "quotes span sectors '{first}' and '{}'; choose one with --sector",
                r.sector
            )));
        }
    }
    let quotes: Vec<_> = rows.iter().map(|(_, q)| q.clone()).collect();
    let fit = fit_sector(&quotes)?;
    for d in &fit.diagnostics {
        eprintln!("{d}");
    }
    io::write_rows(out, &io::parametric_rows(&fit.curve))?;
    let res_path = residuals.map_or_else(
        || {
            let mut s = out.as_os_str().to_owned();
            s.push(".residuals.csv");
            PathBuf::from(s)
        },
        Path::to_path_buf,
    );
    let res_rows: Vec<ResidualRow> = rows
        .iter()
        .zip(&fit.residuals)
        .map(|((r, q), e)| ResidualRow {
            name: r.name.clone(),
            grade: r.grade.clone(),
            tenor_years: r.tenor_years,
            spread_bp: r.spread_bp,
            model_bp: if e.is_nan() {
                f64::NAN
            } else {
                q.spread * (1.0 + e) / BP
            },
            rel_error: *e,
        })
        .collect();
    io::write_rows(&res_path, &res_rows)?;
    manifest_for(cfg, "fit-dm", &[quotes_path])?.write_beside(out)?;
    Ok(EXIT_OK)
}

pub fn cmd_calibrate_country(
    cfg: &RunConfig,
    quotes_path: &Path,
    out: &Path,
    country: Option<&str>,
    lambda: Option<f64>,
) -> Result<i32> {
    let all = io::load_country_quotes(quotes_path)?;
    let chosen = match country {
        Some(c) => all
            .iter()
            .find(|q| q.country == c)
            .ok_or_else(|| Error::InvalidInput(format!("no quotes for country '{c}'")))?,
        None if all.len() == 1 => &all[0],
        None => {
            return Err(Error::InvalidInput(
                "several countries in the file; choose one with --country".into(),
            ))
        }
    };
    let result = calibrate_country(
        &chosen.country,
        &chosen.quotes,
        chosen.grade,
        &cfg.schemes,
        lambda,
        &cfg.calibration()?,
    )?;
    if !result.converged {
        eprintln!(
            "warning: {} objective {:.4} above the acceptance tolerance",
            result.label, result.objective
        );
    }
    let label = format!("{COUNTRY_PREFIX}{}", chosen.country);
    io::write_rows(out, &[io::param_row(&label, chosen.grade, &result)])?;
    let mut m = manifest_for(cfg, "calibrate-country", &[quotes_path])?;
    if let Some(l) = lambda {
        m.options.push(("lambda".into(), l.to_string()));
    }
    m.write_beside(out)?;
    Ok(EXIT_OK)
}

pub fn cmd_calibrate_sector(
    cfg: &RunConfig,
    curve_path: &Path,
    out: &Path,
    sector: &str,
    grades: Option<&[String]>,
) -> Result<i32> {
    let curve = io::load_parametric(curve_path)?;
    let grades: Vec<RatingGrade> = match grades {
        Some(gs) => gs.iter().map(|g| g.parse()).collect::<Result<_>>()?,
        None => curve.params.keys().map(|b| RatingGrade::broad_grade(*b)).collect(),
    };
    let targets = grades
        .iter()
        .map(|&g| {
            let s = SECTOR_TENORS
                .iter()
                .map(|&t| interpolate_grade_spread(&curve, g, t))
                .collect::<Result<Vec<_>>>()?;
            CalibrationTarget::sector(g.to_string(), [s[0], s[1], s[2]], cfg.schemes.lambda(g))
        })
        .collect::<Result<Vec<_>>>()?;
    let result = calibrate_sector_mc(&targets, &cfg.calibration()?)?;
    if result.shared_xi_binding {
        eprintln!(
            "warning: shared xi is binding (objective {:.4}, per-rating {:.4})",
            result.objective,
            result.unconstrained_objective.unwrap_or(f64::NAN)
        );
    }
    let label = format!("{SECTOR_PREFIX}{sector}");
    let rows: Vec<ParamRow> = grades
        .iter()
        .zip(&result.ratings)
        .map(|(g, r)| io::param_row(&label, *g, r))
        .collect();
    io::write_rows(out, &rows)?;
    let mut m = manifest_for(cfg, "calibrate-sector", &[curve_path])?;
    m.options.push(("sector".into(), sector.to_string()));
    m.write_beside(out)?;
    Ok(EXIT_OK)
}

fn pick_label<'a>(rows: &'a [(ParamRow, RatingGrade)], prefix: &str, name: Option<&str>) -> Result<String> {
    if let Some(n) = name {
        return Ok(format!("{prefix}{n}"));
    }
    let mut labels: Vec<&'a str> = rows
        .iter()
        .map(|(r, _)| r.label.as_str())
        .filter(|l| l.starts_with(prefix))
        .collect();
    labels.sort_unstable();
    labels.dedup();
    match labels.as_slice() {
        [one] => Ok((*one).to_string()),
        [] => Err(Error::MissingParameters(format!(
            "no '{prefix}' rows in parameter files"
        ))),
        _ => Err(Error::InvalidInput(format!(
            "several '{prefix}' labels ({}); choose one",
            labels.join(", ")
        ))),
    }
}

fn curve_rows(id: &str, grade: RatingGrade, c: &SpreadCurve) -> Vec<CurveRow> {
    c.tenors
        .iter()
        .zip(&c.spreads)
        .zip(&c.stderr)
        .map(|((t, s), e)| CurveRow {
            curve_id: id.to_string(),
            grade: grade.to_string(),
            tenor_years: *t,
            spread_bp: s / BP,
            stderr_bp: e / BP,
        })
        .collect()
}

pub fn cmd_price(
    cfg: &RunConfig,
    params: &[PathBuf],
    out: &Path,
    country: Option<&str>,
    sector: Option<&str>,
    tenors: &[f64],
) -> Result<i32> {
    if tenors.is_empty() || tenors.iter().any(|t| !(*t > 0.0)) || tenors.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("tenors must be positive and increasing".into()));
    }
    let mut rows = Vec::new();
    for p in params {
        rows.extend(io::load_params(p)?);
    }
    let country_label = pick_label(&rows, COUNTRY_PREFIX, country)?;
    let sector_label = pick_label(&rows, SECTOR_PREFIX, sector)?;
    let country_rows: Vec<_> = rows.iter().filter(|(r, _)| r.label == country_label).collect();
    let (country_row, country_grade) = match country_rows.as_slice() {
        [one] => (&one.0, one.1),
        [] => return Err(Error::MissingParameters(format!("no row labelled '{country_label}'"))),
        _ => return Err(Error::InvalidInput(format!("several rows labelled '{country_label}'"))),
    };
    let country_params = ProcessParams::new(country_row.sigma, country_row.lambda, country_row.xi)?;
    let mut sectors = BTreeMap::new();
    for (r, g) in rows.iter().filter(|(r, _)| r.label == sector_label) {
        if sectors
            .insert(*g, ProcessParams::new(r.sigma, r.lambda, r.xi)?)
            .is_some()
        {
            return Err(Error::InvalidInput(format!("duplicate {g} row for '{sector_label}'")));
        }
    }
    if sectors.is_empty() {
        return Err(Error::MissingParameters(format!("no rows labelled '{sector_label}'")));
    }
    let path_cfg = PathConfig::new(cfg.dt, cfg.dt, cfg.n_paths, cfg.seed)?;
    let disc = cfg.discount();
    let curves = em_corporate_curve(
        &country_params,
        &sectors,
        &[],
        &cfg.schemes,
        &cfg.basket(),
        PricingSetup {
            cfg: &path_cfg,
            disc: &disc,
            rec: cfg.recovery()?,
            tenors,
        },
    )?;
    let mut out_rows = curve_rows("country", country_grade, &curves.country);
    for g in &curves.grades {
        out_rows.extend(curve_rows("standalone", g.grade, &g.standalone));
        out_rows.extend(curve_rows("ftd", g.grade, &g.ftd));
        out_rows.extend(curve_rows("em", g.grade, &g.em));
    }
    io::write_rows(out, &out_rows)?;
    let inputs: Vec<&Path> = params.iter().map(PathBuf::as_path).collect();
    let mut m = manifest_for(cfg, "price", &inputs)?;
    let tenor_list = tenors.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    m.options.push(("tenors".into(), tenor_list));
    m.options.push(("country".into(), country_label));
    m.options.push(("sector".into(), sector_label));
    m.write_beside(out)?;
    Ok(EXIT_OK)
}

pub fn cmd_validate(cfg: &RunConfig, out: Option<&Path>, drift_bias: f64) -> Result<i32> {
    let opts = ValidateOptions {
        n_paths: cfg.n_paths,
        seed: cfg.seed,
        dt: cfg.dt,
        drift_bias,
    };
    let report = run_checks(&opts)?;
    let bytes = io::rows_to_bytes(&report)?;
    std::io::stdout().write_all(&bytes)?;
    if let Some(p) = out {
        std::fs::write(p, &bytes)?;
    }
    let failed = report.iter().filter(|r| r.status == Status::Fail).count();
    if failed > 0 {
        eprintln!("{failed} check(s) failed");
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_common_flags_anywhere() {
        let cli = Cli::try_parse_from([
            "emftd", "price", "--params", "p.csv", "--out", "o.csv", "--seed", "5", "--paths", "100",
        ])
        .unwrap();
        assert_eq!(cli.common.seed, Some(5));
        assert_eq!(cli.common.paths, Some(100));
        match cli.command {
            Command::Price { tenors, .. } => assert_eq!(tenors, vec![0.5, 1.0, 2.0, 3.0, 5.0, 7.0, 10.0]),
            _ => panic!(),
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::InvalidInput("x".into())), EXIT_INPUT);
        assert_eq!(
            exit_code(&Error::Schema {
                path: "f".into(),
                line: 2,
                message: "m".into()
            }),
            EXIT_INPUT
        );
        let r = crate::calibration::CalibrationResult {
            label: "x".into(),
            sigma: 0.1,
            xi: 0.1,
            lambda: 0.5,
            objective: 1.0,
            evaluations: 1,
            iterations: 1,
            converged: false,
        };
        assert_eq!(exit_code(&Error::NonConvergence(Box::new(r))), EXIT_NON_CONVERGENCE);
        assert_eq!(main_with_args(["emftd", "no-such-command"]), EXIT_INPUT);
    }
}
