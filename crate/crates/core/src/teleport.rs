//! Coincidence-rate predictors for three teleportation experiments, synthetic
//! datasets, and fitting of the disentangled population fraction.
//!
//! The predicted curves are, with `x` the scanned angle:
//!
//! | experiment        | entangled               | disentangled            |
//! |-------------------|-------------------------|-------------------------|
//! | `GisinPhase`      | ⅛(1 − cos x)            | ⅛(1 − ½cos x)           |
//! | `InnsbruckDip`    | ¼ matched, 0 mismatched | 3/16 matched, 1/16 mismatched |
//! | `KimAnalyzer`     | ⅛(1 ± 2 cos x sin x)    | ⅛(1 ± cos x sin x)      |
//!
//! A mixture with disentangled fraction λ is `(1 − λ)·entangled + λ·disentangled`.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix2, Vector2};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;

use crate::correlate::Model;
use crate::error::{Error, Result};
use crate::qstate::Sign;
use crate::table::format_number;

/// Minimum number of trials per synthetic data point.
pub const MIN_COUNTS_PER_POINT: u64 = 100;
/// Minimum number of data points accepted by [`fit_mixture`].
pub const MIN_FIT_POINTS: usize = 3;
/// Spacing of the coarse λ grid.
pub const LAMBDA_GRID_STEP: f64 = 0.01;
/// Relative spread of the sse profile below which λ is not identifiable.
pub const FLAT_PROFILE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    /// Coincidences versus the adjustable phase β of photon 3.
    GisinPhase,
    /// Matched (`x = 0`) and mismatched (`x = π`) polarizer settings.
    InnsbruckDip,
    /// Coincidences versus Bob's analyzer angle.
    KimAnalyzer,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 3] = [
        ExperimentKind::GisinPhase,
        ExperimentKind::InnsbruckDip,
        ExperimentKind::KimAnalyzer,
    ];

    /// Whether the prediction depends on the `±` branch.
    pub fn has_branches(self) -> bool {
        self == ExperimentKind::KimAnalyzer
    }

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::GisinPhase => "gisin",
            ExperimentKind::InnsbruckDip => "innsbruck",
            ExperimentKind::KimAnalyzer => "kim",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gisin" | "gisinphase" => Ok(ExperimentKind::GisinPhase),
            "innsbruck" | "innsbruckdip" => Ok(ExperimentKind::InnsbruckDip),
            "kim" | "kimanalyzer" => Ok(ExperimentKind::KimAnalyzer),
            _ => Err(format!("unknown experiment `{s}` (expected gisin, innsbruck or kim)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionPoint {
    pub x: f64,
    pub branch: Sign,
    pub y: f64,
}

fn is_matched(x: f64) -> bool {
    x.cos() >= 0.0
}

fn predict_entangled(kind: ExperimentKind, x: f64, branch: Sign) -> f64 {
    match kind {
        ExperimentKind::GisinPhase => 0.125 * (1.0 - x.cos()),
        ExperimentKind::InnsbruckDip => {
            if is_matched(x) {
                0.25
            } else {
                0.0
            }
        }
        ExperimentKind::KimAnalyzer => 0.125 * (1.0 + branch.value() * 2.0 * x.cos() * x.sin()),
    }
}

fn predict_disentangled(kind: ExperimentKind, x: f64, branch: Sign) -> f64 {
    match kind {
        ExperimentKind::GisinPhase => 0.125 * (1.0 - 0.5 * x.cos()),
        ExperimentKind::InnsbruckDip => {
            if is_matched(x) {
                3.0 / 16.0
            } else {
                1.0 / 16.0
            }
        }
        ExperimentKind::KimAnalyzer => 0.125 * (1.0 + branch.value() * x.cos() * x.sin()),
    }
}

/// Predicted coincidence probability at scan angle `x` (radians).
///
/// For `InnsbruckDip` any `x` with `cos x >= 0` counts as matched. The branch
/// only matters for `KimAnalyzer`.
pub fn predict(kind: ExperimentKind, x: f64, branch: Sign, model: Model) -> f64 {
    model.blend(
        predict_entangled(kind, x, branch),
        predict_disentangled(kind, x, branch),
    )
}

/// Predictions on a grid; `KimAnalyzer` yields a `+` and a `−` point per `x`.
pub fn predict_curve(kind: ExperimentKind, xs: &[f64], model: Model) -> Vec<PredictionPoint> {
    let branches: &[Sign] = if kind.has_branches() {
        &[Sign::Plus, Sign::Minus]
    } else {
        &[Sign::Plus]
    };
    xs.iter()
        .flat_map(|&x| {
            branches.iter().map(move |&branch| PredictionPoint {
                x,
                branch,
                y: predict(kind, x, branch, model),
            })
        })
        .collect()
}

/// One observed coincidence rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataPoint {
    pub x: f64,
    pub rate: f64,
    pub std_err: f64,
    pub branch: Option<Sign>,
}

impl DataPoint {
    fn branch_or_plus(&self) -> Sign {
        self.branch.unwrap_or(Sign::Plus)
    }
}

/// Dataset exchanged as CSV with header `x_rad,rate,std_err[,branch]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub points: Vec<DataPoint>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn has_branch(&self) -> bool {
        self.points.iter().any(|p| p.branch.is_some())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let with_branch = self.has_branch();
        if with_branch {
            out.write_all(b"x_rad,rate,std_err,branch\n")?;
        } else {
            out.write_all(b"x_rad,rate,std_err\n")?;
        }
        for p in &self.points {
            write!(
                out,
                "{},{},{}",
                format_number(p.x),
                format_number(p.rate),
                format_number(p.std_err)
            )?;
            if with_branch {
                write!(out, ",{}", p.branch.map_or('+', Sign::symbol))?;
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Dataset> {
        let bad = |msg: String| Error::InvalidDataset(msg);
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
        let column = |name: &str| headers.iter().position(|h| h == name);
        let (ix, ir, is) = match (column("x_rad"), column("rate"), column("std_err")) {
            (Some(x), Some(r), Some(s)) => (x, r, s),
            _ => return Err(bad("header must contain x_rad,rate,std_err".into())),
        };
        let ib = column("branch");
        if let Some(extra) = headers
            .iter()
            .find(|h| !matches!(*h, "x_rad" | "rate" | "std_err" | "branch"))
        {
            return Err(bad(format!("unknown column `{extra}`")));
        }

        let mut points = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| bad(e.to_string()))?;
            let num = |i: usize, name: &str| -> Result<f64> {
                let field = record.get(i).unwrap_or("");
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(format!("row {}: `{name}` is not a finite number: `{field}`", line + 1)))
            };
            let branch = match ib.map(|i| record.get(i).unwrap_or("")) {
                None => None,
                Some("+") => Some(Sign::Plus),
                Some("-") => Some(Sign::Minus),
                Some(other) => return Err(bad(format!("row {}: branch must be + or -, got `{other}`", line + 1))),
            };
            points.push(DataPoint {
                x: num(ix, "x_rad")?,
                rate: num(ir, "rate")?,
                std_err: num(is, "std_err")?,
                branch,
            });
        }
        Ok(Dataset { points })
    }
}

/// Binomially sampled rates around [`predict`] with `counts_per_point`
/// trials at every grid point, deterministic in `seed`.
pub fn synth_dataset(
    kind: ExperimentKind,
    model: Model,
    x_grid: &[f64],
    counts_per_point: u64,
    seed: u64,
) -> Result<Dataset> {
    model.validate()?;
    if x_grid.is_empty() {
        return Err(Error::InvalidDataset("x grid is empty".into()));
    }
    if let Some(x) = x_grid.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidDataset(format!("non-finite grid value {x}")));
    }
    if counts_per_point < MIN_COUNTS_PER_POINT {
        return Err(Error::TooFewCounts {
            needed: MIN_COUNTS_PER_POINT,
            got: counts_per_point,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = counts_per_point as f64;
    let points = predict_curve(kind, x_grid, model)
        .into_iter()
        .map(|pt| {
            let p = pt.y.clamp(0.0, 1.0);
            let k = Binomial::new(counts_per_point, p)
                .expect("p is clamped to [0, 1]")
                .sample(&mut rng);
            let rate = k as f64 / n;
            DataPoint {
                x: pt.x,
                rate,
                std_err: (rate * (1.0 - rate) / n).sqrt(),
                branch: kind.has_branches().then_some(pt.branch),
            }
        })
        .collect();
    Ok(Dataset { points })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Uncertainties {
    pub lambda: f64,
    pub amplitude: f64,
    pub background: f64,
}

/// Best fit of `A·[(1 − λ)P_E + λP_D] + c` to a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResult {
    pub lambda_hat: f64,
    pub background_hat: f64,
    pub amplitude_hat: f64,
    pub sse: f64,
    pub uncertainties: Uncertainties,
}

struct Prepared {
    y: Vec<f64>,
    w: Vec<f64>,
    pe: Vec<f64>,
    pd: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Profile {
    amplitude: f64,
    background: f64,
    sse: f64,
}

impl Prepared {
    fn new(kind: ExperimentKind, data: &Dataset) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidDataset(msg.to_string());
        if data.len() < MIN_FIT_POINTS {
            return Err(Error::InvalidDataset(format!(
                "need at least {MIN_FIT_POINTS} points, got {}",
                data.len()
            )));
        }
        if data
            .points
            .iter()
            .any(|p| !(p.x.is_finite() && p.rate.is_finite() && p.std_err.is_finite()))
        {
            return Err(bad("non-finite value"));
        }
        if data.points.iter().any(|p| p.std_err < 0.0) {
            return Err(bad("negative std_err"));
        }
        let x0 = data.points[0].x;
        if data.points.iter().all(|p| p.x == x0) {
            return Err(bad("all x values are equal"));
        }
        // zero std_err (a rate of exactly 0 or 1) falls back to the
        // smallest positive std_err in the dataset
        let floor = data
            .points
            .iter()
            .map(|p| p.std_err)
            .filter(|&s| s > 0.0)
            .fold(f64::INFINITY, f64::min);
        if !floor.is_finite() {
            return Err(bad("every std_err is zero"));
        }
        let w = data
            .points
            .iter()
            .map(|p| {
                let s = if p.std_err > 0.0 { p.std_err } else { floor };
                1.0 / (s * s)
            })
            .collect();
        Ok(Self {
            y: data.points.iter().map(|p| p.rate).collect(),
            w,
            pe: data
                .points
                .iter()
                .map(|p| predict(kind, p.x, p.branch_or_plus(), Model::Entangled))
                .collect(),
            pd: data
                .points
                .iter()
                .map(|p| predict(kind, p.x, p.branch_or_plus(), Model::Disentangled))
                .collect(),
        })
    }

    fn basis(&self, lambda: f64, i: usize) -> f64 {
        (1.0 - lambda) * self.pe[i] + lambda * self.pd[i]
    }

    fn sse(&self, lambda: f64, amplitude: f64, background: f64) -> f64 {
        (0..self.y.len())
            .map(|i| {
                let r = self.y[i] - amplitude * self.basis(lambda, i) - background;
                self.w[i] * r * r
            })
            .sum()
    }

    fn total_ss(&self) -> f64 {
        self.y.iter().zip(&self.w).map(|(y, w)| w * y * y).sum()
    }

    /// Weighted linear least squares for `A` (and `c >= 0`) at fixed λ.
    fn profile(&self, lambda: f64, fit_background: bool) -> Profile {
        let (mut sff, mut sf, mut sw, mut sfy, mut sy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..self.y.len() {
            let f = self.basis(lambda, i);
            let w = self.w[i];
            sff += w * f * f;
            sf += w * f;
            sw += w;
            sfy += w * f * self.y[i];
            sy += w * self.y[i];
        }
        if fit_background {
            let normal = Matrix2::new(sff, sf, sf, sw);
            if let Some(sol) = normal.lu().solve(&Vector2::new(sfy, sy)) {
                if sol[1] >= 0.0 && sol.iter().all(|v| v.is_finite()) {
                    return Profile {
                        amplitude: sol[0],
                        background: sol[1],
                        sse: self.sse(lambda, sol[0], sol[1]),
                    };
                }
            }
        }
        let amplitude = if sff > 0.0 { sfy / sff } else { 0.0 };
        Profile {
            amplitude,
            background: 0.0,
            sse: self.sse(lambda, amplitude, 0.0),
        }
    }

    fn uncertainties(&self, lambda: f64, amplitude: f64, fit_background: bool) -> Uncertainties {
        let k = if fit_background { 3 } else { 2 };
        let mut normal = DMatrix::<f64>::zeros(k, k);
        for i in 0..self.y.len() {
            let mut j = [amplitude * (self.pd[i] - self.pe[i]), self.basis(lambda, i), 1.0];
            j.iter_mut().for_each(|v| *v *= self.w[i].sqrt());
            for r in 0..k {
                for c in 0..k {
                    normal[(r, c)] += j[r] * j[c];
                }
            }
        }
        let sd = |cov: &DMatrix<f64>, i: usize| cov[(i, i)].max(0.0).sqrt();
        match normal.try_inverse() {
            Some(cov) => Uncertainties {
                lambda: sd(&cov, 0),
                amplitude: sd(&cov, 1),
                background: if fit_background { sd(&cov, 2) } else { 0.0 },
            },
            None => Uncertainties {
                lambda: f64::INFINITY,
                amplitude: f64::INFINITY,
                background: if fit_background { f64::INFINITY } else { 0.0 },
            },
        }
    }
}

/// Golden-section minimization of `f` over `[lo, hi]`.
fn golden_section<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Fits the disentangled fraction λ, amplitude `A` and (optionally) a
/// non-negative background `c` by weighted least squares.
///
/// λ is scanned on a 0.01 grid and refined by golden-section search around
/// the best node; `A` and `c` are solved in closed form at each λ.
/// Uncertainties come from the inverse weighted normal matrix at the optimum.
pub fn fit_mixture(kind: ExperimentKind, data: &Dataset, fit_background: bool) -> Result<FitResult> {
    let prep = Prepared::new(kind, data)?;
    let steps = (1.0 / LAMBDA_GRID_STEP).round() as usize;
    let grid: Vec<(f64, Profile)> = (0..=steps)
        .map(|k| {
            let l = k as f64 / steps as f64;
            (l, prep.profile(l, fit_background))
        })
        .collect();

    let (min_sse, max_sse) = grid
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, p)| {
            (lo.min(p.sse), hi.max(p.sse))
        });
    let scale = max_sse.max(prep.total_ss() * f64::EPSILON);
    if max_sse - min_sse <= FLAT_PROFILE_TOL * scale {
        return Err(Error::NonIdentifiable);
    }

    let best = grid
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.sse.total_cmp(&b.1 .1.sse))
        .map(|(i, _)| i)
        .expect("grid is non-empty");
    let lo = grid[best.saturating_sub(1)].0;
    let hi = grid[(best + 1).min(steps)].0;
    let refined = golden_section(|l| prep.profile(l, fit_background).sse, lo, hi, 1e-9);
    let refined_profile = prep.profile(refined, fit_background);

    let (lambda, profile) = if refined_profile.sse < grid[best].1.sse {
        (refined, refined_profile)
    } else {
        grid[best]
    };
    let lambda = lambda.clamp(0.0, 1.0);
    Ok(FitResult {
        lambda_hat: lambda,
        background_hat: profile.background,
        amplitude_hat: profile.amplitude,
        sse: profile.sse,
        uncertainties: prep.uncertainties(lambda, profile.amplitude, fit_background),
    })
}
