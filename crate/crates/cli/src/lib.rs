//! Plumbing behind the `bjel` binary: configuration parsing, CSV input and
//! the three subcommands as library functions.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use bjel_core::bjel::{LikelihoodSetup, Method, SurveySample};
use bjel_core::design::{draw_sample, DesignKind, DesignSpec};
use bjel_core::simharness::{
    generate_population, run_study, PopulationSpec, StudyConfig, StudyResult,
};
use bjel_core::ustat::{jackknife_pseudovalues, Kernel};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Quality(String),
    #[error("{0}")]
    Infeasible(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Quality(_) => 3,
            CliError::Infeasible(_) => 4,
        }
    }
}

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

/// Input-shaped library errors map to exit code 2, the rest to 4.
fn inference(e: bjel_core::Error) -> CliError {
    use bjel_core::Error as E;
    match e {
        E::InvalidInput(_)
        | E::SampleTooSmall { .. }
        | E::NonPositiveWeight { .. }
        | E::SizeMeasureTooLarge { .. }
        | E::RhoUnattainable { .. } => CliError::Input(e.to_string()),
        _ => CliError::Infeasible(e.to_string()),
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Simulation settings read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub population_size: usize,
    pub beta0: f64,
    pub beta1: f64,
    pub x_shift: f64,
    pub rho: f64,
    pub design: DesignKind,
    pub sample_size: usize,
    pub kernel: String,
    pub methods: Vec<Method>,
    pub replicates: usize,
    pub level: f64,
}

const CONFIG_KEYS: [&str; 11] = [
    "population_size",
    "beta0",
    "beta1",
    "x_shift",
    "rho",
    "design",
    "sample_size",
    "kernel",
    "methods",
    "replicates",
    "level",
];

/// Flat `key = value` lines (`#` starts a comment) or a flat JSON object.
fn parse_pairs(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    if text.trim_start().starts_with('{') {
        let obj: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(text).map_err(|e| input(format!("invalid JSON config: {e}")))?;
        for (k, v) in obj {
            let s = match v {
                serde_json::Value::String(s) => s,
                serde_json::Value::Array(items) => items
                    .iter()
                    .map(|i| {
                        i.as_str()
                            .map(str::to_owned)
                            .unwrap_or_else(|| i.to_string())
                    })
                    .collect::<Vec<_>>()
                    .join(","),
                other => other.to_string(),
            };
            map.insert(k, s);
        }
        return Ok(map);
    }
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| input(format!("line {}: expected key = value", lineno + 1)))?;
        if map
            .insert(k.trim().to_owned(), v.trim().to_owned())
            .is_some()
        {
            return Err(input(format!(
                "line {}: duplicate key '{}'",
                lineno + 1,
                k.trim()
            )));
        }
    }
    Ok(map)
}

fn parse_field<T: std::str::FromStr>(
    map: &BTreeMap<String, String>,
    key: &str,
    default: Option<T>,
) -> CliResult<T> {
    match map.get(key) {
        Some(v) => v
            .parse()
            .map_err(|_| input(format!("config key '{key}': cannot parse '{v}'"))),
        None => default.ok_or_else(|| input(format!("config key '{key}' is required"))),
    }
}

impl SimulationConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let map = parse_pairs(text)?;
        if let Some(k) = map.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
            return Err(input(format!("unknown config key '{k}'")));
        }
        let design = match map.get("design").map(|s| s.as_str()) {
            None | Some("rao_sampford") => DesignKind::RaoSampford,
            Some("srswor") => DesignKind::Srswor,
            Some(other) => return Err(input(format!("unknown design '{other}'"))),
        };
        let methods = match map.get("methods") {
            None => Method::ALL.to_vec(),
            Some(list) => list
                .split(',')
                .map(|m| m.parse::<Method>().map_err(|e| input(e.to_string())))
                .collect::<CliResult<Vec<_>>>()?,
        };
        let kernel: String = parse_field(&map, "kernel", None)?;
        if Kernel::by_name(&kernel).is_none() {
            return Err(input(format!("unknown kernel '{kernel}'")));
        }
        Ok(SimulationConfig {
            population_size: parse_field(&map, "population_size", Some(1000))?,
            beta0: parse_field(&map, "beta0", Some(1.0))?,
            beta1: parse_field(&map, "beta1", Some(1.0))?,
            x_shift: parse_field(&map, "x_shift", Some(1.0))?,
            rho: parse_field(&map, "rho", None)?,
            design,
            sample_size: parse_field(&map, "sample_size", None)?,
            kernel,
            methods,
            replicates: parse_field(&map, "replicates", Some(1000))?,
            level: parse_field(&map, "level", Some(0.95))?,
        })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| input(format!("cannot read config '{}': {e}", path.display())))?;
        Self::parse(&text).map_err(|e| input(format!("{}: {e}", path.display())))
    }
}

/// Generates the population from `seed` and runs the study with the same
/// seed as replicate base. The result is returned even when too many
/// replicates failed; the error then carries the exit code.
pub fn simulate(
    config: &SimulationConfig,
    seed: u64,
) -> CliResult<(StudyResult, Option<CliError>)> {
    let pop = generate_population(&PopulationSpec {
        population_size: config.population_size,
        beta0: config.beta0,
        beta1: config.beta1,
        x_shift: config.x_shift,
        target_rho: config.rho,
        seed,
    })
    .map_err(inference)?;
    let study = StudyConfig {
        design: config.design,
        sample_size: config.sample_size,
        kernel: config.kernel.clone(),
        methods: config.methods.clone(),
        replicates: config.replicates,
        level: config.level,
        seed,
    };
    let result = run_study(&pop, &study).map_err(inference)?;
    let quality = result
        .check_failures()
        .err()
        .map(|e| CliError::Quality(e.to_string()));
    Ok((result, quality))
}

/// Columns pulled from an analysis CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisData {
    pub y: Vec<f64>,
    pub weights: Option<Vec<f64>>,
    pub aux: Option<Vec<Vec<f64>>>,
}

fn parse_number(s: &str, row: usize, col: &str) -> CliResult<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| input(format!("row {row}, column '{col}': '{s}' is not a number")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(input(format!(
            "row {row}, column '{col}': value is not finite"
        )))
    }
}

/// Reads a comma-separated file with a header row.
pub fn read_analysis_csv(
    path: &Path,
    y_col: &str,
    weight_col: Option<&str>,
    aux_cols: &[String],
) -> CliResult<AnalysisData> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| input(format!("cannot read '{}': {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| input(format!("malformed CSV header: {e}")))?
        .clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| input(format!("column '{name}' not found in '{}'", path.display())))
    };
    let yi = find(y_col)?;
    let wi = weight_col.map(find).transpose()?;
    let ai = aux_cols
        .iter()
        .map(|c| find(c))
        .collect::<CliResult<Vec<_>>>()?;

    let mut data = AnalysisData {
        y: Vec::new(),
        weights: wi.map(|_| Vec::new()),
        aux: (!ai.is_empty()).then(Vec::new),
    };
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 2;
        let rec = rec.map_err(|e| input(format!("malformed CSV at row {row}: {e}")))?;
        data.y.push(parse_number(&rec[yi], row, y_col)?);
        if let (Some(i), Some(w)) = (wi, data.weights.as_mut()) {
            let v = parse_number(&rec[i], row, weight_col.unwrap_or(""))?;
            if v <= 0.0 {
                return Err(input(format!("row {row}: weight {v} is not positive")));
            }
            w.push(v);
        }
        if let Some(aux) = data.aux.as_mut() {
            let vals = ai
                .iter()
                .zip(aux_cols)
                .map(|(&i, c)| parse_number(&rec[i], row, c))
                .collect::<CliResult<Vec<_>>>()?;
            aux.push(vals);
        }
    }
    if data.y.is_empty() {
        return Err(input(format!("'{}' has no data rows", path.display())));
    }
    Ok(data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisRequest {
    pub kernel: String,
    pub method: Method,
    pub aux_totals: Option<Vec<f64>>,
    pub level: f64,
}

/// Fixed output schema of `analyze`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOutput {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub method: Method,
    pub n: usize,
    pub scale_used: f64,
}

/// Runs one method on the data. Supplied weights serve as both design and
/// calibration weights; without inclusion probabilities the finite
/// population correction is dropped. The auxiliary population mean is
/// `aux_totals / sum(weights)`.
pub fn analyze(
    data: &AnalysisData,
    req: &AnalysisRequest,
) -> CliResult<(AnalysisOutput, Vec<String>)> {
    let kernel = Kernel::by_name(&req.kernel)
        .ok_or_else(|| input(format!("unknown kernel '{}'", req.kernel)))?;
    if data.y.len() < kernel.order() + 1 {
        return Err(input(format!(
            "{} observations; kernel '{}' needs at least {}",
            data.y.len(),
            kernel.name(),
            kernel.order() + 1
        )));
    }
    if !(req.level > 0.0 && req.level < 1.0) {
        return Err(input(format!("level {} is not in (0, 1)", req.level)));
    }
    let n = data.y.len();
    let weights = data.weights.clone().unwrap_or_else(|| vec![1.0; n]);
    let aux_mean = match (&data.aux, &req.aux_totals) {
        (Some(rows), Some(totals)) => {
            if totals.len() != rows[0].len() {
                return Err(input(format!(
                    "{} auxiliary columns but {} totals",
                    rows[0].len(),
                    totals.len()
                )));
            }
            let w_sum: f64 = weights.iter().sum();
            Some(totals.iter().map(|t| t / w_sum).collect::<Vec<_>>())
        }
        (Some(_), None) => return Err(input("auxiliary columns require --aux-totals")),
        (None, Some(_)) => return Err(input("--aux-totals given without --aux-cols")),
        (None, None) => None,
    };
    let pv = jackknife_pseudovalues(&data.y, &kernel).map_err(inference)?;
    let sample = SurveySample {
        values: &pv.values,
        design_weights: &weights,
        incl_probs: None,
        aux: match (&data.aux, &aux_mean) {
            (Some(rows), Some(mean)) => Some((rows.as_slice(), mean.as_slice())),
            _ => None,
        },
        calibration_weights: None,
    };
    let setup = LikelihoodSetup::for_family(req.method.family(), &sample).map_err(inference)?;
    let interval = setup.interval(req.method, req.level).map_err(inference)?;
    let estimate = setup.estimate().map_err(inference)?;
    Ok((
        AnalysisOutput {
            estimate,
            lower: interval.lower,
            upper: interval.upper,
            method: req.method,
            n,
            scale_used: setup.scale,
        },
        interval.diagnostics,
    ))
}

pub fn format_analysis_text(out: &AnalysisOutput, level: f64) -> String {
    format!(
        "method    {}\nn         {}\nestimate  {}\n{}% CI    [{}, {}]\nscale     {}\n",
        out.method.label(),
        out.n,
        out.estimate,
        level * 100.0,
        out.lower,
        out.upper,
        out.scale_used
    )
}

/// Size measures from a file (header row, first column) or an inline
/// comma-separated list.
pub fn parse_sizes(arg: &str) -> CliResult<Vec<f64>> {
    let path = Path::new(arg);
    if path.is_file() {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| input(format!("cannot read '{arg}': {e}")))?;
        let mut out = Vec::new();
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| input(format!("malformed CSV at row {}: {e}", r + 2)))?;
            let field = rec
                .get(0)
                .ok_or_else(|| input(format!("row {} is empty", r + 2)))?;
            out.push(parse_number(field, r + 2, "size")?);
        }
        return Ok(out);
    }
    arg.split(',')
        .enumerate()
        .map(|(i, s)| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| input(format!("size measure {}: '{s}' is not a number", i + 1)))
        })
        .collect()
}

/// Draws one sample and renders it as `index,pi,d` CSV rows.
pub fn sample_csv(
    population_size: usize,
    sample_size: usize,
    sizes: Option<Vec<f64>>,
    seed: u64,
) -> CliResult<String> {
    let spec = match sizes {
        Some(z) => {
            if z.len() != population_size {
                return Err(input(format!(
                    "{} size measures for a population of {population_size}",
                    z.len()
                )));
            }
            DesignSpec::rao_sampford(sample_size, z)
        }
        None => DesignSpec::srswor(population_size, sample_size),
    };
    if sample_size >= population_size {
        return Err(input(format!(
            "sample size {sample_size} must be below the population size {population_size}"
        )));
    }
    let draw = draw_sample(&spec, seed).map_err(|e| input(e.to_string()))?;
    let mut out = String::from("index,pi,d\n");
    for ((i, p), d) in draw
        .indices
        .iter()
        .zip(&draw.incl_probs)
        .zip(&draw.design_weights)
    {
        out.push_str(&format!("{i},{p},{d}\n"));
    }
    Ok(out)
}
