//! Machine-readable experiment records: CSV rows, a JSON mirror with
//! metadata, and two-column plot data.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Variant;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Run-level facts shared by every row of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub kind: String,
    pub axis: Option<String>,
    /// Requested kernel tolerance.
    pub eps: f64,
    /// Largest certificate actually achieved by any kernel used.
    pub certified_error: f64,
    pub s0: Option<f64>,
    pub seed: u64,
    pub version: String,
    /// What the `error` column holds.
    pub error_norm: String,
    pub reference: Option<(f64, f64)>,
}

/// One cell of a convergence table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub alpha: f64,
    pub variant: String,
    pub h: f64,
    pub dt: f64,
    pub error: f64,
    /// `log2(error / error_next)` against the next finer row of the same series.
    pub rate: Option<f64>,
    pub wall_seconds: f64,
    pub setup_seconds: f64,
    pub n_exp: usize,
    pub n_exp_half: usize,
    pub peak_history_floats: usize,
    pub certified_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub meta: ReportMeta,
    pub rows: Vec<ReportRow>,
}

/// Refined axis of a convergence series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateAxis {
    Time,
    Space,
}

impl ConvergenceReport {
    /// Fill `rate` between adjacent rows of one series: same experiment,
    /// alpha and variant, equal fixed step, and a refined step that shrinks.
    pub fn fill_rates(&mut self, axis: RateAxis) {
        let n = self.rows.len();
        for k in 0..n {
            self.rows[k].rate = None;
            if k + 1 == n {
                continue;
            }
            let (a, b) = (&self.rows[k], &self.rows[k + 1]);
            let (fixed_a, fixed_b, step_a, step_b) = match axis {
                RateAxis::Time => (a.h, b.h, a.dt, b.dt),
                RateAxis::Space => (a.dt, b.dt, a.h, b.h),
            };
            let same_series = a.experiment == b.experiment
                && a.alpha == b.alpha
                && a.variant == b.variant
                && fixed_a == fixed_b
                && step_b < step_a;
            if same_series && a.error > 0.0 && b.error > 0.0 {
                let rate = (a.error / b.error).ln() / (step_a / step_b).ln();
                self.rows[k].rate = Some(rate);
            }
        }
    }

    /// Rates of the series matching `alpha` and `variant`, in ladder order.
    pub fn rates(&self, experiment: &str, alpha: f64, variant: Variant) -> Vec<f64> {
        self.series(experiment, alpha, variant).filter_map(|r| r.rate).collect()
    }

    pub fn series<'a>(
        &'a self,
        experiment: &'a str,
        alpha: f64,
        variant: Variant,
    ) -> impl Iterator<Item = &'a ReportRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| r.experiment == experiment && r.alpha == alpha && r.variant == variant.as_str())
    }
}

/// One cell of the exponential-count table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoeCountRow {
    pub alpha: f64,
    pub eps: f64,
    pub delta: f64,
    pub horizon: f64,
    pub n_exp_raw: usize,
    pub n_exp: usize,
    pub certified_error: f64,
    pub build_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoeCountReport {
    pub meta: ReportMeta,
    pub rows: Vec<SoeCountRow>,
}

/// Either kind of table produced by a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TableReport {
    Convergence(ConvergenceReport),
    SoeCount(SoeCountReport),
}

impl TableReport {
    pub fn meta(&self) -> &ReportMeta {
        match self {
            TableReport::Convergence(r) => &r.meta,
            TableReport::SoeCount(r) => &r.meta,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TableReport::Convergence(r) => r.rows.len(),
            TableReport::SoeCount(r) => r.rows.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_csv(&self) -> Result<String> {
        match self {
            TableReport::Convergence(r) => rows_to_csv(&r.rows, CONVERGENCE_HEADER),
            TableReport::SoeCount(r) => rows_to_csv(&r.rows, SOE_COUNT_HEADER),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        to_json(self)
    }

    /// Write `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(io_error)?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let json_path = dir.join(format!("{stem}.json"));
        fs::write(&csv_path, self.to_csv()?).map_err(io_error)?;
        fs::write(&json_path, self.to_json()?).map_err(io_error)?;
        Ok(vec![csv_path, json_path])
    }
}

const CONVERGENCE_HEADER: &[&str] = &[
    "experiment",
    "alpha",
    "variant",
    "h",
    "dt",
    "error",
    "rate",
    "wall_seconds",
    "setup_seconds",
    "n_exp",
    "n_exp_half",
    "peak_history_floats",
    "certified_error",
];

const SOE_COUNT_HEADER: &[&str] = &[
    "alpha",
    "eps",
    "delta",
    "horizon",
    "n_exp_raw",
    "n_exp",
    "certified_error",
    "build_seconds",
];

/// Serialise rows with a header that is present even when there are none.
fn rows_to_csv<T: Serialize>(rows: &[T], header: &[&str]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Configuration(format!("csv output: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Internal(format!("csv output is not utf-8: {e}")))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Internal(format!("csv output: {e}"))
}

pub(crate) fn io_error(e: std::io::Error) -> Error {
    Error::Configuration(format!("cannot write report: {e}"))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Internal(format!("json output: {e}")))
}

/// Wall time of one solver run in a scaling sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub variant: String,
    pub n_time: usize,
    pub wall_seconds: f64,
    pub setup_seconds: f64,
    pub n_exp: usize,
    pub peak_history_floats: usize,
}

/// Least-squares line `log10(time) = slope log10(N_T) + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub variant: String,
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub meta: ReportMeta,
    pub n_space: usize,
    pub alpha: f64,
    pub points: Vec<ScalingPoint>,
    pub slopes: Vec<SlopeFit>,
}

impl ScalingReport {
    pub fn slope(&self, variant: Variant) -> Option<f64> {
        self.slopes
            .iter()
            .find(|s| s.variant == variant.as_str())
            .map(|s| s.slope)
    }

    pub fn points_for(&self, variant: Variant) -> impl Iterator<Item = &ScalingPoint> {
        self.points.iter().filter(move |p| p.variant == variant.as_str())
    }

    pub fn to_csv(&self) -> Result<String> {
        rows_to_csv(
            &self.points,
            &[
                "variant",
                "n_time",
                "wall_seconds",
                "setup_seconds",
                "n_exp",
                "peak_history_floats",
            ],
        )
    }

    pub fn to_json(&self) -> Result<String> {
        to_json(self)
    }

    /// `N_T  seconds` lines for one variant, readable by gnuplot.
    pub fn plot_data(&self, variant: Variant) -> String {
        let mut out = format!("# N_T wall_seconds ({variant})\n");
        for p in self.points_for(variant) {
            out.push_str(&format!("{} {:.6e}\n", p.n_time, p.wall_seconds));
        }
        out
    }

    /// Write `<stem>.csv`, `<stem>.json` and one `<stem>_<variant>.dat` per variant.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(io_error)?;
        let mut paths = vec![dir.join(format!("{stem}.csv")), dir.join(format!("{stem}.json"))];
        fs::write(&paths[0], self.to_csv()?).map_err(io_error)?;
        fs::write(&paths[1], self.to_json()?).map_err(io_error)?;
        for fit in &self.slopes {
            let variant: Variant = fit.variant.parse()?;
            let path = dir.join(format!("{stem}_{}.dat", fit.variant));
            fs::write(&path, self.plot_data(variant)).map_err(io_error)?;
            paths.push(path);
        }
        Ok(paths)
    }
}

/// Ordinary least squares of `log10 y` on `log10 x`; `None` for fewer than two points.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let lx: Vec<f64> = xs[..n].iter().map(|x| x.log10()).collect();
    let ly: Vec<f64> = ys[..n].iter().map(|y| y.log10()).collect();
    let mx = lx.iter().sum::<f64>() / n as f64;
    let my = ly.iter().sum::<f64>() / n as f64;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> ReportMeta {
        ReportMeta {
            kind: "linear".into(),
            axis: Some("time".into()),
            eps: 1e-7,
            certified_error: 9e-8,
            s0: None,
            seed: 0,
            version: VERSION.into(),
            error_norm: "E".into(),
            reference: None,
        }
    }

    fn row(alpha: f64, dt: f64, error: f64) -> ReportRow {
        ReportRow {
            experiment: "linear".into(),
            alpha,
            variant: "fast".into(),
            h: 0.1,
            dt,
            error,
            rate: None,
            wall_seconds: 1e-3,
            setup_seconds: 0.0,
            n_exp: 10,
            n_exp_half: 8,
            peak_history_floats: 100,
            certified_error: 9e-8,
        }
    }

    #[test]
    fn rates_stay_inside_a_series() {
        let mut r = ConvergenceReport {
            meta: meta(),
            rows: vec![
                row(0.2, 0.1, 1.0),
                row(0.2, 0.05, 0.25),
                row(0.5, 0.1, 1.0),
                row(0.5, 0.05, 0.5),
            ],
        };
        r.fill_rates(RateAxis::Time);
        let rates: Vec<Option<f64>> = r.rows.iter().map(|x| x.rate).collect();
        assert_eq!(rates, vec![Some(2.0), None, Some(1.0), None]);
        assert_eq!(r.rates("linear", 0.5, Variant::Fast), vec![1.0]);
    }

    #[test]
    fn empty_report_still_has_a_header() {
        let t = TableReport::Convergence(ConvergenceReport {
            meta: meta(),
            rows: vec![],
        });
        assert!(t.is_empty());
        assert!(t.to_csv().unwrap().starts_with("experiment,alpha,variant"));
        let back: ConvergenceReport = serde_json::from_str(&t.to_json().unwrap()).unwrap();
        assert!(back.rows.is_empty());
    }

    #[test]
    fn csv_leaves_missing_rates_blank() {
        let t = TableReport::Convergence(ConvergenceReport {
            meta: meta(),
            rows: vec![row(0.2, 0.1, 1.0)],
        });
        let csv = t.to_csv().unwrap();
        let line = csv.lines().nth(1).unwrap();
        assert!(line.contains(",1.0,,"), "{line}");
    }

    #[test]
    fn fit_recovers_a_power_law() {
        let xs = [1e3, 2e3, 4e3, 8e3];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3e-6 * x.powf(1.5)).collect();
        let (s, _) = loglog_fit(&xs, &ys).unwrap();
        assert!((s - 1.5).abs() < 1e-12);
        assert!(loglog_fit(&[1.0], &[1.0]).is_none());
    }
}
