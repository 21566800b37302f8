//! Configuration, dispatch and table output for the `eprsim` binary.
//!
//! Every setting can come from a flag or from a JSON file passed with
//! `--config`; flags win. Angles are given in degrees. Output goes to the
//! `output` path or to stdout.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{Map, Value};

use crate::correlate::{self, Geometry, Model};
use crate::error::Error;
use crate::mc::{self, ExperimentSpec, HiddenAxisMode, SourcePairing};
use crate::qstate::{Sign, UnitAxis};
use crate::table::format_number;
use crate::teleport::{self, Dataset, ExperimentKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_COMPUTE: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Analytic correlations and probabilities over an angle grid.
    Correlate,
    /// CHSH combination for four analyzer angles.
    Chsh,
    /// Monte Carlo coincidence counts over an angle grid.
    Simulate,
    /// Teleportation coincidence-rate predictions.
    Predict,
    /// Binomially sampled teleportation dataset.
    Synth,
    /// Mixture-fraction fit of a dataset.
    Fit,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Correlate => "correlate",
            Command::Chsh => "chsh",
            Command::Simulate => "simulate",
            Command::Predict => "predict",
            Command::Synth => "synth",
            Command::Fit => "fit",
        }
    }

    /// Settings the command reads besides `command`, `config`, `output` and
    /// `format`.
    fn accepts(self, field: &str) -> bool {
        let fields: &[&str] = match self {
            Command::Correlate => &["geometry", "doubled", "angles_deg"],
            Command::Chsh => &["model", "geometry", "doubled", "angles_deg"],
            Command::Simulate => &[
                "model",
                "geometry",
                "doubled",
                "angles_deg",
                "trials",
                "seed",
                "shards",
                "hidden_axis",
                "fixed_axis_deg",
                "pairing",
            ],
            Command::Predict => &["model", "experiment", "angles_deg"],
            Command::Synth => &["model", "experiment", "angles_deg", "counts", "seed"],
            Command::Fit => &["experiment", "input", "fit_background"],
        };
        fields.contains(&field)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "eprsim", version, about = "Entangled/disentangled EPR ensemble calculator")]
pub struct Cli {
    #[command(flatten)]
    pub settings: Settings,
}

/// Raw settings before defaults are applied. `None` means unset.
#[derive(Debug, Clone, Default, Args)]
pub struct Settings {
    /// Subcommand to run; may also come from the config file.
    #[arg(value_enum)]
    pub command: Option<Command>,

    /// JSON file with default settings.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// `entangled`, `disentangled` or `mixture:<lambda>`; chsh takes a
    /// comma-separated list.
    #[arg(long)]
    pub model: Option<String>,

    /// `sphere` or `plane`.
    #[arg(long)]
    pub geometry: Option<String>,

    /// Use doubled (photon polarization) angles.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub doubled: Option<bool>,

    /// Comma-separated angles in degrees.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub angles_deg: Option<Vec<f64>>,

    /// Trials per analyzer pair.
    #[arg(long)]
    pub trials: Option<u64>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Output file; stdout when unset.
    #[arg(long)]
    pub output: Option<PathBuf>,

    #[arg(long, value_enum)]
    pub format: Option<Format>,

    /// Worker shards for simulate; results do not depend on it.
    #[arg(long)]
    pub shards: Option<usize>,

    /// `per-trial` or `fixed`.
    #[arg(long)]
    pub hidden_axis: Option<String>,

    /// Polar and azimuthal angle of a fixed hidden axis, in degrees.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub fixed_axis_deg: Option<Vec<f64>>,

    /// `randomized` or `plus-minus`.
    #[arg(long)]
    pub pairing: Option<String>,

    /// `gisin`, `innsbruck` or `kim`.
    #[arg(long)]
    pub experiment: Option<String>,

    /// Counts per grid point for synth.
    #[arg(long)]
    pub counts: Option<u64>,

    /// Dataset CSV for fit.
    #[arg(long)]
    pub input: Option<PathBuf>,

    /// Fit a non-negative constant background as well.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub fit_background: Option<bool>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid `{field}`: {message}")]
    Invalid { field: &'static str, message: String },

    #[error("cannot read config file {path}: {message}")]
    Config { path: String, message: String },

    #[error("cannot write output: {0}")]
    Output(#[from] std::io::Error),

    #[error("{0}")]
    Compute(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Compute(_) => EXIT_COMPUTE,
            _ => EXIT_INVALID,
        }
    }
}

fn invalid(field: &'static str, message: impl fmt::Display) -> CliError {
    CliError::Invalid {
        field,
        message: message.to_string(),
    }
}

/// Attributes a library validation error to the setting that caused it.
fn from_lib(field: &'static str) -> impl Fn(Error) -> CliError {
    move |e| match e {
        Error::NonIdentifiable => CliError::Compute(e),
        Error::DoubledSphere => invalid("doubled", e),
        Error::OutOfPlaneAnalyzer(_) => invalid("geometry", e),
        Error::InvalidMixture(_) => invalid("model", e),
        other => invalid(field, other),
    }
}

fn field<T: DeserializeOwned>(key: &'static str, value: Value) -> Result<Option<T>, CliError> {
    if value.is_null() {
        return Ok(None);
    }
    serde_json::from_value(value).map(Some).map_err(|e| invalid(key, e))
}

impl Settings {
    /// Settings from a JSON object. Unknown keys are an error.
    pub fn from_json(text: &str) -> Result<Settings, CliError> {
        let map: Map<String, Value> = serde_json::from_str(text).map_err(|e| invalid("config", e))?;
        let mut s = Settings::default();
        for (key, value) in map {
            match key.as_str() {
                "command" => s.command = field("command", value)?,
                "model" => s.model = field("model", value)?,
                "geometry" => s.geometry = field("geometry", value)?,
                "doubled" => s.doubled = field("doubled", value)?,
                "angles_deg" => s.angles_deg = field("angles_deg", value)?,
                "trials" => s.trials = field("trials", value)?,
                "seed" => s.seed = field("seed", value)?,
                "output" => s.output = field("output", value)?,
                "format" => s.format = field("format", value)?,
                "shards" => s.shards = field("shards", value)?,
                "hidden_axis" => s.hidden_axis = field("hidden_axis", value)?,
                "fixed_axis_deg" => s.fixed_axis_deg = field("fixed_axis_deg", value)?,
                "pairing" => s.pairing = field("pairing", value)?,
                "experiment" => s.experiment = field("experiment", value)?,
                "counts" => s.counts = field("counts", value)?,
                "input" => s.input = field("input", value)?,
                "fit_background" => s.fit_background = field("fit_background", value)?,
                _ => return Err(invalid("config", format!("unknown key `{key}`"))),
            }
        }
        Ok(s)
    }

    /// `self` with unset values taken from `base`.
    pub fn or(self, base: Settings) -> Settings {
        Settings {
            command: self.command.or(base.command),
            config: self.config.or(base.config),
            model: self.model.or(base.model),
            geometry: self.geometry.or(base.geometry),
            doubled: self.doubled.or(base.doubled),
            angles_deg: self.angles_deg.or(base.angles_deg),
            trials: self.trials.or(base.trials),
            seed: self.seed.or(base.seed),
            output: self.output.or(base.output),
            format: self.format.or(base.format),
            shards: self.shards.or(base.shards),
            hidden_axis: self.hidden_axis.or(base.hidden_axis),
            fixed_axis_deg: self.fixed_axis_deg.or(base.fixed_axis_deg),
            pairing: self.pairing.or(base.pairing),
            experiment: self.experiment.or(base.experiment),
            counts: self.counts.or(base.counts),
            input: self.input.or(base.input),
            fit_background: self.fit_background.or(base.fit_background),
        }
    }

    /// Merges in the `--config` file, if any.
    pub fn resolve(self) -> Result<Settings, CliError> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = fs::read_to_string(&path).map_err(|e| CliError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(self.or(Settings::from_json(&text)?))
    }

    fn set_fields(&self) -> Vec<&'static str> {
        let flags = [
            ("model", self.model.is_some()),
            ("geometry", self.geometry.is_some()),
            ("doubled", self.doubled.is_some()),
            ("angles_deg", self.angles_deg.is_some()),
            ("trials", self.trials.is_some()),
            ("seed", self.seed.is_some()),
            ("shards", self.shards.is_some()),
            ("hidden_axis", self.hidden_axis.is_some()),
            ("fixed_axis_deg", self.fixed_axis_deg.is_some()),
            ("pairing", self.pairing.is_some()),
            ("experiment", self.experiment.is_some()),
            ("counts", self.counts.is_some()),
            ("input", self.input.is_some()),
            ("fit_background", self.fit_background.is_some()),
        ];
        flags
            .into_iter()
            .filter(|(_, set)| *set)
            .map(|(name, _)| name)
            .collect()
    }
}

/// A cell of an output table.
#[derive(Debug, Clone, PartialEq)]
enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => format_number(*v),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Int(n) => Value::from(*n),
            Cell::Text(s) => Value::from(s.as_str()),
            Cell::Empty => Value::Null,
        }
    }
}

struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(header: Vec<&'static str>) -> Self {
        Table {
            header,
            rows: Vec::new(),
        }
    }

    fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => {
                let mut out = self.header.join(",");
                out.push('\n');
                for row in &self.rows {
                    let cells: Vec<String> = row.iter().map(Cell::csv).collect();
                    out.push_str(&cells.join(","));
                    out.push('\n');
                }
                out
            }
            Format::Json => {
                let records: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|row| {
                        let obj: Map<String, Value> = self
                            .header
                            .iter()
                            .zip(row)
                            .map(|(h, c)| (h.to_string(), c.json()))
                            .collect();
                        Value::Object(obj)
                    })
                    .collect();
                let mut out = serde_json::to_string_pretty(&records).expect("table values serialize");
                out.push('\n');
                out
            }
        }
    }
}

fn parse_model(text: &str) -> Result<Model, CliError> {
    let model: Model = text.trim().parse().map_err(|e| invalid("model", e))?;
    model.validate().map_err(|e| invalid("model", e))?;
    Ok(model)
}

fn geometry_or(s: &Settings, default: Geometry) -> Result<Geometry, CliError> {
    match &s.geometry {
        Some(g) => g.parse().map_err(|e| invalid("geometry", e)),
        None => Ok(default),
    }
}

fn experiment(s: &Settings) -> Result<ExperimentKind, CliError> {
    match &s.experiment {
        Some(e) => e.parse().map_err(|e| invalid("experiment", e)),
        None => Err(invalid("experiment", "required (gisin, innsbruck or kim)")),
    }
}

fn degree_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step).round() as usize;
    (0..=n).map(|k| start + k as f64 * step).collect()
}

fn angles(s: &Settings, default: impl FnOnce() -> Vec<f64>) -> Result<Vec<f64>, CliError> {
    let angles = s.angles_deg.clone().unwrap_or_else(default);
    if angles.is_empty() {
        return Err(invalid("angles_deg", "angle grid is empty"));
    }
    if let Some(a) = angles.iter().find(|a| !a.is_finite()) {
        return Err(invalid("angles_deg", format!("non-finite angle {a}")));
    }
    Ok(angles)
}

/// Analyzer pair with `a` along x and `b` at `theta_deg` in the x-y plane.
fn planar_pair(theta_deg: f64) -> (UnitAxis, UnitAxis) {
    (UnitAxis::in_plane(0.0), UnitAxis::in_plane(theta_deg.to_radians()))
}

fn correlate_table(s: &Settings) -> Result<Table, CliError> {
    let geometry = geometry_or(s, Geometry::PlanePhoton)?;
    let doubled = s.doubled.unwrap_or(false);
    let grid = angles(s, || degree_grid(0.0, 180.0, 15.0))?;
    let mut t = Table::new(vec![
        "theta_ab_deg",
        "E_entangled",
        "E_disentangled",
        "P_pp_E",
        "P_pm_E",
        "P_pp_D",
        "P_pm_D",
    ]);
    for theta in grid {
        let (a, b) = planar_pair(theta);
        let pe = correlate::joint_probs(Model::Entangled, geometry, &a, &b, doubled).map_err(from_lib("angles_deg"))?;
        let pd =
            correlate::joint_probs(Model::Disentangled, geometry, &a, &b, doubled).map_err(from_lib("angles_deg"))?;
        t.rows.push(vec![
            Cell::Num(theta),
            Cell::Num(pe.correlation()),
            Cell::Num(pd.correlation()),
            Cell::Num(pe.p_pp),
            Cell::Num(pe.p_pm),
            Cell::Num(pd.p_pp),
            Cell::Num(pd.p_pm),
        ]);
    }
    Ok(t)
}

fn chsh_table(s: &Settings) -> Result<Table, CliError> {
    let geometry = geometry_or(s, Geometry::PlanePhoton)?;
    let doubled = s.doubled.unwrap_or(false);
    let models = match &s.model {
        Some(list) => list.split(',').map(parse_model).collect::<Result<Vec<_>, _>>()?,
        None => vec![Model::Entangled, Model::Disentangled],
    };
    let deg = angles(s, || vec![0.0, 90.0, 45.0, 135.0])?;
    let [a, a_prime, b, b_prime] = <[f64; 4]>::try_from(deg.as_slice()).map_err(|_| {
        invalid(
            "angles_deg",
            format!("expected 4 angles (a, a', b, b'), got {}", deg.len()),
        )
    })?;
    let axis = |d: f64| UnitAxis::in_plane(d.to_radians());
    let mut t = Table::new(vec!["model", "a_deg", "a_prime_deg", "b_deg", "b_prime_deg", "S"]);
    for model in models {
        let value = correlate::chsh(
            model,
            geometry,
            &axis(a),
            &axis(a_prime),
            &axis(b),
            &axis(b_prime),
            doubled,
        )
        .map_err(from_lib("angles_deg"))?;
        t.rows.push(vec![
            Cell::Text(model.to_string()),
            Cell::Num(a),
            Cell::Num(a_prime),
            Cell::Num(b),
            Cell::Num(b_prime),
            Cell::Num(value),
        ]);
    }
    Ok(t)
}

fn simulate_table(s: &Settings) -> Result<Table, CliError> {
    let model = parse_model(s.model.as_deref().unwrap_or("entangled"))?;
    let geometry = geometry_or(s, Geometry::PlanePhoton)?;
    let grid = angles(s, || degree_grid(0.0, 180.0, 15.0))?;
    let trials = s.trials.unwrap_or(100_000);
    if trials < 2 {
        return Err(invalid(
            "trials",
            format!("need at least 2 trials per analyzer pair, got {trials}"),
        ));
    }
    if s.shards == Some(0) {
        return Err(invalid("shards", "must be at least 1"));
    }
    let hidden_axis = match (s.hidden_axis.as_deref(), &s.fixed_axis_deg) {
        (None | Some("per-trial"), None) => HiddenAxisMode::PerTrial,
        (None | Some("fixed"), Some(deg)) => match deg.as_slice() {
            &[theta, phi] => HiddenAxisMode::Fixed(
                UnitAxis::try_new(theta.to_radians(), phi.to_radians()).map_err(|e| invalid("fixed_axis_deg", e))?,
            ),
            _ => return Err(invalid("fixed_axis_deg", "expected two angles: theta, phi")),
        },
        (Some("fixed"), None) => return Err(invalid("fixed_axis_deg", "required when hidden_axis is `fixed`")),
        (Some("per-trial"), Some(_)) => {
            return Err(invalid("fixed_axis_deg", "only valid when hidden_axis is `fixed`"));
        }
        (Some(other), _) => {
            return Err(invalid(
                "hidden_axis",
                format!("unknown mode `{other}` (expected per-trial or fixed)"),
            ));
        }
    };
    let pairing = match s.pairing.as_deref() {
        None | Some("randomized") => SourcePairing::Randomized,
        Some("plus-minus") => SourcePairing::PlusMinus,
        Some(other) => {
            return Err(invalid(
                "pairing",
                format!("unknown pairing `{other}` (expected randomized or plus-minus)"),
            ));
        }
    };

    let mut spec = ExperimentSpec::new(
        model,
        geometry,
        grid.iter().map(|&d| planar_pair(d)).collect(),
        trials,
        s.seed.unwrap_or(0),
    );
    spec.doubled = s.doubled.unwrap_or(false);
    spec.hidden_axis = hidden_axis;
    spec.pairing = pairing;
    spec.validate().map_err(from_lib("trials"))?;

    let counts = match s.shards {
        Some(n) => mc::run_experiment_sharded(&spec, n),
        None => mc::run_experiment(&spec),
    }
    .map_err(from_lib("trials"))?;

    let mut t = Table::new(vec![
        "theta_ab_deg",
        "n_pp",
        "n_pm",
        "n_mp",
        "n_mm",
        "e_hat",
        "std_err",
        "e_analytic",
    ]);
    for (i, (theta, c)) in grid.iter().zip(&counts).enumerate() {
        let est = mc::estimate_correlation(c).map_err(from_lib("trials"))?;
        let analytic = spec.analytic_correlation(i).map_err(from_lib("angles_deg"))?;
        t.rows.push(vec![
            Cell::Num(*theta),
            Cell::Int(c.n_pp),
            Cell::Int(c.n_pm),
            Cell::Int(c.n_mp),
            Cell::Int(c.n_mm),
            Cell::Num(est.e_hat),
            Cell::Num(est.std_err),
            Cell::Num(analytic),
        ]);
    }
    Ok(t)
}

fn predict_table(s: &Settings) -> Result<Table, CliError> {
    let kind = experiment(s)?;
    let mixture = match s.model.as_deref().map(parse_model).transpose()? {
        Some(Model::Mixture(l)) => Some(Model::Mixture(l)),
        _ => None,
    };
    let grid = angles(s, || degree_grid(0.0, 360.0, 30.0))?;
    let mut header = vec!["x_deg", "x_rad", "branch", "entangled", "disentangled"];
    if mixture.is_some() {
        header.push("mixture");
    }
    let mut t = Table::new(header);
    let branches: &[Sign] = if kind.has_branches() {
        &[Sign::Plus, Sign::Minus]
    } else {
        &[Sign::Plus]
    };
    for deg in grid {
        let x = deg.to_radians();
        for &branch in branches {
            let mut row = vec![
                Cell::Num(deg),
                Cell::Num(x),
                if kind.has_branches() {
                    Cell::Text(branch.symbol().to_string())
                } else {
                    Cell::Empty
                },
                Cell::Num(teleport::predict(kind, x, branch, Model::Entangled)),
                Cell::Num(teleport::predict(kind, x, branch, Model::Disentangled)),
            ];
            if let Some(m) = mixture {
                row.push(Cell::Num(teleport::predict(kind, x, branch, m)));
            }
            t.rows.push(row);
        }
    }
    Ok(t)
}

fn synth_output(s: &Settings) -> Result<String, CliError> {
    if s.format == Some(Format::Json) {
        return Err(invalid("format", "synth writes the CSV dataset format only"));
    }
    let kind = experiment(s)?;
    let model = match &s.model {
        Some(m) => parse_model(m)?,
        None => return Err(invalid("model", "required (e.g. mixture:0.62)")),
    };
    let grid: Vec<f64> = angles(s, || degree_grid(0.0, 360.0, 30.0))?
        .into_iter()
        .map(f64::to_radians)
        .collect();
    let data = teleport::synth_dataset(kind, model, &grid, s.counts.unwrap_or(100_000), s.seed.unwrap_or(0))
        .map_err(from_lib("counts"))?;
    let mut out = Vec::new();
    data.write_csv(&mut out)?;
    Ok(String::from_utf8(out).expect("dataset CSV is ASCII"))
}

fn fit_output(s: &Settings) -> Result<String, CliError> {
    let kind = experiment(s)?;
    let Some(path) = &s.input else {
        return Err(invalid("input", "required: dataset CSV path"));
    };
    let file = fs::File::open(path).map_err(|e| invalid("input", format!("{}: {e}", path.display())))?;
    let data = Dataset::read_csv(file).map_err(|e| invalid("input", e))?;
    let fit = teleport::fit_mixture(kind, &data, s.fit_background.unwrap_or(false)).map_err(from_lib("input"))?;
    match s.format.unwrap_or(Format::Json) {
        Format::Json => {
            let mut out = serde_json::to_string_pretty(&fit).expect("fit result serializes");
            out.push('\n');
            Ok(out)
        }
        Format::Csv => {
            let mut t = Table::new(vec![
                "lambda_hat",
                "background_hat",
                "amplitude_hat",
                "sse",
                "lambda_std_err",
                "amplitude_std_err",
                "background_std_err",
            ]);
            let u = fit.uncertainties;
            t.rows.push(
                [
                    fit.lambda_hat,
                    fit.background_hat,
                    fit.amplitude_hat,
                    fit.sse,
                    u.lambda,
                    u.amplitude,
                    u.background,
                ]
                .into_iter()
                .map(Cell::Num)
                .collect(),
            );
            Ok(t.render(Format::Csv))
        }
    }
}

/// Runs fully resolved settings and returns the rendered output.
pub fn execute(s: &Settings) -> Result<String, CliError> {
    let Some(command) = s.command else {
        return Err(invalid(
            "command",
            "required: correlate, chsh, simulate, predict, synth or fit",
        ));
    };
    if let Some(f) = s.set_fields().into_iter().find(|f| !command.accepts(f)) {
        return Err(CliError::Invalid {
            field: f,
            message: format!("not used by `{}`", command.name()),
        });
    }
    let format = s.format.unwrap_or(Format::Csv);
    match command {
        Command::Correlate => Ok(correlate_table(s)?.render(format)),
        Command::Chsh => Ok(chsh_table(s)?.render(format)),
        Command::Simulate => Ok(simulate_table(s)?.render(format)),
        Command::Predict => Ok(predict_table(s)?.render(format)),
        Command::Synth => synth_output(s),
        Command::Fit => fit_output(s),
    }
}

/// Resolves, runs and writes; returns the process exit code.
pub fn run(settings: Settings) -> i32 {
    let result = settings.resolve().and_then(|s| {
        let out = execute(&s)?;
        match &s.output {
            Some(path) => fs::write(path, out)?,
            None => std::io::stdout().lock().write_all(out.as_bytes())?,
        }
        Ok(())
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(command: Command) -> Settings {
        Settings {
            command: Some(command),
            ..Settings::default()
        }
    }

    fn rows(csv: &str) -> Vec<Vec<String>> {
        csv.lines()
            .skip(1)
            .map(|l| l.split(',').map(str::to_string).collect())
            .collect()
    }

    #[test]
    fn correlate_zero_and_sixty_degrees() {
        let mut s = settings(Command::Correlate);
        s.angles_deg = Some(vec![0.0, 60.0]);
        let out = execute(&s).unwrap();
        let r = rows(&out);
        assert!(out.starts_with("theta_ab_deg,E_entangled,E_disentangled,P_pp_E,P_pm_E,P_pp_D,P_pm_D\n"));
        assert_eq!(r[0][1], "-1.00000000");
        assert_eq!(r[0][2], "-0.500000000");
        assert_eq!(r[1][3], "0.125000000");
        assert_eq!(r[1][5], "0.187500000");
    }

    #[test]
    fn chsh_defaults_and_mixture() {
        let mut s = settings(Command::Chsh);
        s.model = Some("entangled,disentangled,mixture:0.5".into());
        let r = rows(&execute(&s).unwrap());
        assert_eq!(r[0][5], format_number(2.0 * 2f64.sqrt()));
        assert_eq!(r[1][5], format_number(2f64.sqrt()));
        assert_eq!(r[2][5], format_number(1.5 * 2f64.sqrt()));
    }

    #[test]
    fn chsh_needs_four_angles() {
        let mut s = settings(Command::Chsh);
        s.angles_deg = Some(vec![0.0, 90.0, 45.0]);
        let err = execute(&s).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_INVALID);
        assert!(err.to_string().contains("angles_deg"));
    }

    #[test]
    fn zero_trials_names_the_field() {
        let mut s = settings(Command::Simulate);
        s.trials = Some(0);
        let err = execute(&s).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_INVALID);
        assert!(err.to_string().contains("`trials`"));
    }

    #[test]
    fn inapplicable_setting_is_rejected() {
        let mut s = settings(Command::Chsh);
        s.counts = Some(1000);
        assert!(execute(&s).unwrap_err().to_string().contains("`counts`"));
    }

    #[test]
    fn doubled_sphere_points_at_doubled() {
        let mut s = settings(Command::Simulate);
        s.model = Some("disentangled".into());
        s.geometry = Some("sphere".into());
        s.doubled = Some(true);
        assert!(execute(&s).unwrap_err().to_string().contains("`doubled`"));
    }

    #[test]
    fn gisin_visibility_ratio() {
        let mut s = settings(Command::Predict);
        s.experiment = Some("gisin".into());
        s.angles_deg = Some(vec![0.0, 180.0]);
        let r = rows(&execute(&s).unwrap());
        let num = |row: usize, col: usize| r[row][col].parse::<f64>().unwrap();
        let vis = |col: usize| (num(1, col) - num(0, col)) / (num(1, col) + num(0, col));
        assert!((vis(3) / vis(4) - 2.0).abs() < 1e-8);
        assert_eq!(r[0][2], "");
    }

    #[test]
    fn kim_prediction_lists_both_branches() {
        let mut s = settings(Command::Predict);
        s.experiment = Some("kim".into());
        s.model = Some("mixture:0.25".into());
        s.angles_deg = Some(vec![45.0]);
        let out = execute(&s).unwrap();
        assert!(out.starts_with("x_deg,x_rad,branch,entangled,disentangled,mixture\n"));
        let r = rows(&out);
        assert_eq!(r.len(), 2);
        assert_eq!(r[0][2], "+");
        assert_eq!(r[1][2], "-");
    }

    #[test]
    fn json_config_rejects_unknown_keys_and_bad_types() {
        let err = Settings::from_json(r#"{"command": "chsh", "colour": 1}"#).unwrap_err();
        assert!(err.to_string().contains("colour"));
        let err = Settings::from_json(r#"{"trials": "many"}"#).unwrap_err();
        assert!(err.to_string().contains("`trials`"));
    }

    #[test]
    fn flags_override_file_values() {
        let file = Settings::from_json(r#"{"command": "simulate", "trials": 10, "seed": 4}"#).unwrap();
        let flags = Settings {
            trials: Some(20),
            ..Settings::default()
        };
        let merged = flags.or(file);
        assert_eq!(merged.trials, Some(20));
        assert_eq!(merged.seed, Some(4));
        assert_eq!(merged.command, Some(Command::Simulate));
    }

    #[test]
    fn json_table_output() {
        let mut s = settings(Command::Chsh);
        s.format = Some(Format::Json);
        let v: Value = serde_json::from_str(&execute(&s).unwrap()).unwrap();
        assert_eq!(v[0]["model"], "entangled");
        assert!((v[0]["S"].as_f64().unwrap() - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn simulate_is_repeatable() {
        let mut s = settings(Command::Simulate);
        s.trials = Some(5_000);
        s.seed = Some(9);
        s.model = Some("mixture:0.5".into());
        assert_eq!(execute(&s).unwrap(), execute(&s).unwrap());
    }
}
