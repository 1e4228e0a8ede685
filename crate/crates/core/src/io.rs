//! CSV schemas, key=value run configuration and run manifests.
//!
//! Spreads are basis points in files and decimals everywhere else.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::barrier::DEFAULT_DT;
use crate::basket::{BasketConfig, DEFAULT_RHO};
use crate::calibration::{CalibrationConfig, CalibrationResult, CALIBRATION_DT};
use crate::curve_fit::{ParametricSpreadCurve, Quote};
use crate::default_curve::{DiscountCurve, Recovery, DEFAULT_DISCOUNT_RATE, DEFAULT_RECOVERY};
use crate::error::{Error, Result};
use crate::rating::{RatingGrade, RatingSchemes};

pub const BP: f64 = 1e-4;

pub const QUOTE_HEADER: [&str; 6] = ["name", "sector", "country", "grade", "tenor_years", "spread_bp"];
pub const COUNTRY_HEADER: [&str; 4] = ["country", "grade", "tenor_years", "spread_bp"];
pub const PARAM_HEADER: [&str; 5] = ["label", "grade", "sigma", "xi", "lambda"];
pub const CURVE_HEADER: [&str; 5] = ["curve_id", "grade", "tenor_years", "spread_bp", "stderr_bp"];
pub const PARAMETRIC_HEADER: [&str; 4] = ["grade", "a", "b", "theta"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuoteRow {
    pub name: String,
    pub sector: String,
    pub country: String,
    pub grade: String,
    pub tenor_years: f64,
    pub spread_bp: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountryRow {
    pub country: String,
    pub grade: String,
    pub tenor_years: f64,
    pub spread_bp: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRow {
    pub label: String,
    pub grade: String,
    pub sigma: f64,
    pub xi: f64,
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub curve_id: String,
    pub grade: String,
    pub tenor_years: f64,
    pub spread_bp: f64,
    pub stderr_bp: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParametricRow {
    pub grade: String,
    pub a: f64,
    pub b: f64,
    pub theta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub name: String,
    pub grade: String,
    pub tenor_years: f64,
    pub spread_bp: f64,
    pub model_bp: f64,
    pub rel_error: f64,
}

fn schema(path: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

/// Reads every row of a CSV whose header must equal `header` exactly.
/// Row numbers in errors are file line numbers (the header is line 1).
pub fn read_rows<T: DeserializeOwned>(path: &Path, header: &[&str]) -> Result<Vec<T>> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    parse_rows(&text, &path.display().to_string(), header)
}

pub fn parse_rows<T: DeserializeOwned>(text: &str, name: &str, header: &[&str]) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let got: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if got.is_empty() || got.iter().all(String::is_empty) {
        return Err(schema(name, 1, "empty file: header row missing"));
    }
    if got != header {
        return Err(schema(name, 1, format!("header {:?}, expected {:?}", got, header)));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            schema(name, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let row: T = rec
            .deserialize(Some(&csv::StringRecord::from(header.to_vec())))
            .map_err(|e| schema(name, line, e.to_string()))?;
        out.push(row);
    }
    if out.is_empty() {
        return Err(schema(name, 2, "no data rows"));
    }
    Ok(out)
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut file = File::create(path)?;
    file.write_all(&rows_to_bytes(rows)?)?;
    Ok(())
}

pub fn rows_to_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn parse_grade(s: &str, name: &str, line: usize) -> Result<RatingGrade> {
    s.parse().map_err(|e: Error| schema(name, line, e.to_string()))
}

fn check_positive(v: f64, what: &str, name: &str, line: usize) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(schema(name, line, format!("{what} must be positive (got {v})")));
    }
    Ok(())
}

/// Developed-market quotes, validated row by row.
pub fn load_quotes(path: &Path) -> Result<Vec<(QuoteRow, Quote)>> {
    let name = path.display().to_string();
    let rows: Vec<QuoteRow> = read_rows(path, &QUOTE_HEADER)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let line = i + 2;
            check_positive(r.tenor_years, "tenor_years", &name, line)?;
            check_positive(r.spread_bp, "spread_bp", &name, line)?;
            let grade = parse_grade(&r.grade, &name, line)?;
            let q =
                Quote::new(r.tenor_years, r.spread_bp * BP, grade).map_err(|e| schema(&name, line, e.to_string()))?;
            Ok((r, q))
        })
        .collect()
}

/// Sovereign quotes grouped by country, in file order of first appearance.
#[derive(Clone, Debug, PartialEq)]
pub struct CountryQuotes {
    pub country: String,
    pub grade: RatingGrade,
    /// `(tenor, spread)` with spreads as decimals.
    pub quotes: Vec<(f64, f64)>,
}

pub fn load_country_quotes(path: &Path) -> Result<Vec<CountryQuotes>> {
    let name = path.display().to_string();
    let rows: Vec<CountryRow> = read_rows(path, &COUNTRY_HEADER)?;
    let mut out: Vec<CountryQuotes> = Vec::new();
    for (i, r) in rows.into_iter().enumerate() {
        let line = i + 2;
        check_positive(r.tenor_years, "tenor_years", &name, line)?;
        check_positive(r.spread_bp, "spread_bp", &name, line)?;
        let grade = parse_grade(&r.grade, &name, line)?;
        match out.iter_mut().find(|c| c.country == r.country) {
            Some(c) if c.grade != grade => return Err(schema(&name, line, format!("{} has two grades", r.country))),
            Some(c) => c.quotes.push((r.tenor_years, r.spread_bp * BP)),
            None => out.push(CountryQuotes {
                country: r.country,
                grade,
                quotes: vec![(r.tenor_years, r.spread_bp * BP)],
            }),
        }
    }
    Ok(out)
}

pub fn param_row(label: &str, grade: RatingGrade, r: &CalibrationResult) -> ParamRow {
    ParamRow {
        label: label.to_string(),
        grade: grade.to_string(),
        sigma: r.sigma,
        xi: r.xi,
        lambda: r.lambda,
    }
}

/// Parameter rows with their grades parsed and boxes checked.
pub fn load_params(path: &Path) -> Result<Vec<(ParamRow, RatingGrade)>> {
    let name = path.display().to_string();
    let rows: Vec<ParamRow> = read_rows(path, &PARAM_HEADER)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let line = i + 2;
            let grade = parse_grade(&r.grade, &name, line)?;
            crate::barrier::ProcessParams::new(r.sigma, r.lambda, r.xi)
                .map_err(|e| schema(&name, line, e.to_string()))?;
            Ok((r, grade))
        })
        .collect()
}

pub fn parametric_rows(curve: &ParametricSpreadCurve) -> Vec<ParametricRow> {
    curve
        .params
        .iter()
        .map(|(b, &(a, bb))| ParametricRow {
            grade: b.as_str().to_string(),
            a,
            b: bb,
            theta: curve.theta,
        })
        .collect()
}

pub fn load_parametric(path: &Path) -> Result<ParametricSpreadCurve> {
    let name = path.display().to_string();
    let rows: Vec<ParametricRow> = read_rows(path, &PARAMETRIC_HEADER)?;
    let theta = rows[0].theta;
    let mut params = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        let line = i + 2;
        let g = parse_grade(&r.grade, &name, line)?;
        if !g.is_broad() {
            return Err(schema(&name, line, "parametric curves are per broad grade"));
        }
        if r.theta != theta {
            return Err(schema(&name, line, "theta must be shared by every row"));
        }
        if !r.a.is_finite() || !r.b.is_finite() {
            return Err(schema(&name, line, "a and b must be finite"));
        }
        if params.insert(g.broad(), (r.a, r.b)).is_some() {
            return Err(schema(&name, line, format!("duplicate grade {g}")));
        }
    }
    ParametricSpreadCurve::new(theta, params).map_err(|e| schema(&name, 2, e.to_string()))
}

/// Everything that determines a run's numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub n_paths: usize,
    pub dt: f64,
    pub rho: f64,
    pub recovery: f64,
    pub discount_rate: f64,
    pub lstar_a: f64,
    pub schemes: RatingSchemes,
    pub extension1: bool,
    pub extension1_grades: Option<Vec<RatingGrade>>,
    pub quasi_sovereign: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            n_paths: 100_000,
            dt: DEFAULT_DT,
            rho: DEFAULT_RHO,
            recovery: DEFAULT_RECOVERY,
            discount_rate: DEFAULT_DISCOUNT_RATE,
            lstar_a: 1.0,
            schemes: RatingSchemes::default(),
            extension1: false,
            extension1_grades: None,
            quasi_sovereign: false,
        }
    }
}

fn parse_f64(v: &str) -> std::result::Result<f64, String> {
    let v = v.trim();
    match v {
        "inf" | "+inf" | "infinity" => return Ok(f64::INFINITY),
        _ => {}
    }
    if let Some((n, d)) = v.split_once('/') {
        let n: f64 = n.trim().parse().map_err(|_| format!("bad number '{v}'"))?;
        let d: f64 = d.trim().parse().map_err(|_| format!("bad number '{v}'"))?;
        return Ok(n / d);
    }
    v.parse().map_err(|_| format!("bad number '{v}'"))
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(format!("bad boolean '{other}'")),
    }
}

fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v}")
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut text = String::new();
        File::open(path)?.read_to_string(&mut text)?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses `key=value` lines; `#` starts a comment and `manifest.*` keys
    /// are ignored so a manifest can be fed back as a config.
    pub fn parse(text: &str, name: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| schema(name, line_no, format!("expected key=value, got '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            cfg.set(key, value).map_err(|m| schema(name, line_no, m))?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let grade_of = |k: &str| k.parse::<RatingGrade>().map_err(|e| e.to_string());
        match key {
            "seed" => self.seed = value.parse().map_err(|_| format!("bad seed '{value}'"))?,
            "n_paths" => {
                self.n_paths = value.parse().map_err(|_| format!("bad n_paths '{value}'"))?;
                if self.n_paths == 0 {
                    return Err("n_paths must be at least 1".into());
                }
            }
            "dt" => {
                self.dt = parse_f64(value)?;
                if !(self.dt > 0.0 && self.dt.is_finite()) {
                    return Err(format!("dt must be positive (got {value})"));
                }
            }
            "rho" => {
                self.rho = parse_f64(value)?;
                if !(-1.0..=1.0).contains(&self.rho) {
                    return Err(format!("rho outside [-1, 1] (got {value})"));
                }
            }
            "recovery" => {
                self.recovery = parse_f64(value)?;
                Recovery::new(self.recovery).map_err(|e| e.to_string())?;
            }
            "discount_rate" => {
                self.discount_rate = parse_f64(value)?;
                if !self.discount_rate.is_finite() {
                    return Err("discount_rate must be finite".into());
                }
            }
            "lstar_a" => {
                self.lstar_a = parse_f64(value)?;
                if !(self.lstar_a > 0.0 && self.lstar_a.is_finite()) {
                    return Err(format!("lstar_a must be positive (got {value})"));
                }
            }
            "extension1" => self.extension1 = parse_bool(value)?,
            "extension1_grades" => {
                self.extension1_grades = if value.is_empty() || value == "all" {
                    None
                } else {
                    Some(
                        value
                            .split(',')
                            .map(|g| grade_of(g.trim()))
                            .collect::<std::result::Result<Vec<_>, _>>()?,
                    )
                }
            }
            "quasi_sovereign" => self.quasi_sovereign = parse_bool(value)?,
            k if k.starts_with("manifest.") => {}
            k => {
                if let Some(g) = k.strip_prefix("lstar_c.") {
                    self.schemes
                        .set_lstar_c(grade_of(g)?, parse_f64(value)?)
                        .map_err(|e| e.to_string())?;
                } else if let Some(g) = k.strip_prefix("lambda.") {
                    self.schemes
                        .set_lambda(grade_of(g)?, parse_f64(value)?)
                        .map_err(|e| e.to_string())?;
                } else {
                    return Err(format!("unknown config key '{k}'"));
                }
            }
        }
        Ok(())
    }

    /// Canonical `key=value` lines; parsing them gives back this config.
    pub fn to_lines(&self) -> Vec<String> {
        let mut out = vec![
            format!("seed={}", self.seed),
            format!("n_paths={}", self.n_paths),
            format!("dt={}", fmt_f64(self.dt)),
            format!("rho={}", fmt_f64(self.rho)),
            format!("recovery={}", fmt_f64(self.recovery)),
            format!("discount_rate={}", fmt_f64(self.discount_rate)),
            format!("lstar_a={}", fmt_f64(self.lstar_a)),
        ];
        for (k, v) in self.schemes.entries() {
            out.push(format!("{k}={}", fmt_f64(v)));
        }
        out.push(format!("extension1={}", self.extension1));
        let grades = match &self.extension1_grades {
            None => "all".to_string(),
            Some(gs) => gs.iter().map(ToString::to_string).collect::<Vec<_>>().join(","),
        };
        out.push(format!("extension1_grades={grades}"));
        out.push(format!("quasi_sovereign={}", self.quasi_sovereign));
        out
    }

    pub fn basket(&self) -> BasketConfig {
        BasketConfig {
            rho: self.rho,
            lstar_a: self.lstar_a,
            extension1: self.extension1,
            extension1_grades: self.extension1_grades.clone(),
            quasi_sovereign: self.quasi_sovereign,
        }
    }

    pub fn discount(&self) -> DiscountCurve {
        DiscountCurve::Flat(self.discount_rate)
    }

    pub fn recovery(&self) -> Result<Recovery> {
        Recovery::new(self.recovery)
    }

    pub fn calibration(&self) -> Result<CalibrationConfig> {
        Ok(CalibrationConfig {
            n_paths: self.n_paths,
            seed: self.seed,
            dt: CALIBRATION_DT,
            disc: self.discount(),
            rec: self.recovery()?,
        })
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Config plus provenance, written next to each output as `<output>.manifest`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub config: RunConfig,
    pub command: String,
    pub tool_version: String,
    pub created_unix: u64,
    /// `(file name, sha256)` of every input.
    pub inputs: Vec<(String, String)>,
    /// Non-config options that shaped the output, such as tenors.
    pub options: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(config: &RunConfig, command: &str) -> Self {
        Self {
            config: config.clone(),
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            inputs: Vec::new(),
            options: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let digest = sha256_file(path)?;
        self.inputs.push((path.display().to_string(), digest));
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut lines = self.config.to_lines();
        lines.push(format!("manifest.command={}", self.command));
        lines.push(format!("manifest.tool_version={}", self.tool_version));
        lines.push(format!("manifest.created_unix={}", self.created_unix));
        for (i, (name, digest)) in self.inputs.iter().enumerate() {
            lines.push(format!("manifest.input.{i}.path={name}"));
            lines.push(format!("manifest.input.{i}.sha256={digest}"));
        }
        for (k, v) in &self.options {
            lines.push(format!("manifest.option.{k}={v}"));
        }
        lines.join("\n") + "\n"
    }

    pub fn path_for(output: &Path) -> std::path::PathBuf {
        let mut s = output.as_os_str().to_owned();
        s.push(".manifest");
        s.into()
    }

    pub fn write_beside(&self, output: &Path) -> Result<()> {
        std::fs::write(Self::path_for(output), self.render())?;
        Ok(())
    }
}
