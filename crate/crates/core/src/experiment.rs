//! Campaigns over observation lengths: error probabilities per `N`, fitted
//! decay rates and the analytic exponent they should reproduce.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detect::{exact_error_probabilities, monte_carlo_error, symbol_log_ratios};
use crate::error::{Error, Result};
use crate::exponent::ExponentReport;
use crate::model::ModelParams;
use crate::rng::RngSeed;

/// Version tag written into result files.
pub const FORMAT_VERSION: u32 = 1;

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub params: ModelParams,
    pub n_grid: Vec<u64>,
    pub trials_per_point: u64,
    #[serde(default)]
    pub threshold: f64,
    pub master_seed: RngSeed,
    #[serde(default = "default_true")]
    pub use_exact_when_feasible: bool,
    /// Worker cap; `None` uses the ambient rayon pool. Never affects results.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() {
            return Err(Error::InvalidParameter("n_grid is empty".into()));
        }
        if self.n_grid[0] == 0 {
            return Err(Error::InvalidParameter(
                "n_grid entries must be at least 1".into(),
            ));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "n_grid must be strictly increasing".into(),
            ));
        }
        if self.trials_per_point == 0 {
            return Err(Error::InvalidParameter(
                "trials_per_point must be at least 1".into(),
            ));
        }
        if !self.threshold.is_finite() {
            return Err(Error::InvalidParameter("threshold must be finite".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidParameter("threads must be at least 1".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: CampaignConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn exact_feasible(&self) -> bool {
        self.use_exact_when_feasible && self.params.lambda_b() > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub n: u64,
    pub p_f: f64,
    pub p_m: f64,
    pub p_e: f64,
    pub se_f: f64,
    pub se_m: f64,
    pub trials: u64,
    pub seed: RngSeed,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub format_version: u32,
    pub config: CampaignConfig,
    pub rows: Vec<ExperimentRow>,
    pub fitted_slope_f: Option<f64>,
    pub fitted_slope_m: Option<f64>,
    pub fitted_slope_e: Option<f64>,
    pub exponent_ref: ExponentReport,
}

/// Runs `f` inside a pool capped at `threads` workers, or the ambient pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn run_point(cfg: &CampaignConfig, n: u64) -> Result<ExperimentRow> {
    let seed = cfg.master_seed.derive(&[n]);
    let params = &cfg.params;
    if cfg.exact_feasible() {
        let e = exact_error_probabilities(params, n as usize, cfg.threshold)?;
        Ok(ExperimentRow {
            n,
            p_f: e.p_f,
            p_m: e.p_m,
            p_e: e.p_e,
            se_f: 0.0,
            se_m: 0.0,
            trials: cfg.trials_per_point,
            seed,
            method: Method::Exact,
        })
    } else {
        let mc = monte_carlo_error(
            params,
            n as usize,
            cfg.threshold,
            cfg.trials_per_point,
            seed,
        )?;
        Ok(ExperimentRow {
            n,
            p_f: mc.probs.p_f,
            p_m: mc.probs.p_m,
            p_e: mc.probs.p_e,
            se_f: mc.se_f,
            se_m: mc.se_m,
            trials: mc.trials,
            seed,
            method: Method::MonteCarlo,
        })
    }
}

/// Least-squares slope of `ln p` against `n` over rows above the
/// representable floor; `None` with fewer than three usable rows.
pub fn fit_log_slope(rows: &[ExperimentRow], value: impl Fn(&ExperimentRow) -> f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| {
            let floor = match r.method {
                Method::Exact => 10.0 * f64::MIN_POSITIVE,
                Method::MonteCarlo => 10.0 / r.trials as f64,
            };
            let p = value(r);
            (p > 0.0 && p >= floor).then(|| (r.n as f64, p.ln()))
        })
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let m = pts.len() as f64;
    let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    Some(sxy / sxx)
}

pub fn run_campaign(cfg: &CampaignConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let rows = with_threads(cfg.threads, || {
        cfg.n_grid
            .iter()
            .map(|&n| run_point(cfg, n))
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(ExperimentResult {
        format_version: FORMAT_VERSION,
        config: cfg.clone(),
        fitted_slope_f: fit_log_slope(&rows, |r| r.p_f),
        fitted_slope_m: fit_log_slope(&rows, |r| r.p_m),
        fitted_slope_e: fit_log_slope(&rows, |r| r.p_e),
        exponent_ref: ExponentReport::new(&cfg.params)?,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub p_f: f64,
    pub p_m: f64,
    pub p_e: f64,
    pub method: Method,
}

/// Error trade-off of the LLR test across thresholds at fixed `n`.
///
/// Uses the exact binomial computation when `prefer_exact` and
/// `lambda_b > 0`; otherwise Monte Carlo, with threshold `i` on stream
/// `seed.derive([i])`.
pub fn threshold_sweep(
    params: &ModelParams,
    n: usize,
    thresholds: &[f64],
    trials: u64,
    seed: RngSeed,
    prefer_exact: bool,
) -> Result<Vec<SweepRow>> {
    let exact = prefer_exact && params.lambda_b() > 0.0;
    thresholds
        .iter()
        .enumerate()
        .map(|(i, &gamma)| {
            if exact {
                let e = exact_error_probabilities(params, n, gamma)?;
                Ok(SweepRow {
                    gamma,
                    p_f: e.p_f,
                    p_m: e.p_m,
                    p_e: e.p_e,
                    method: Method::Exact,
                })
            } else {
                let mc = monte_carlo_error(params, n, gamma, trials, seed.derive(&[i as u64]))?;
                Ok(SweepRow {
                    gamma,
                    p_f: mc.probs.p_f,
                    p_m: mc.probs.p_m,
                    p_e: mc.probs.p_e,
                    method: Method::MonteCarlo,
                })
            }
        })
        .collect()
}

/// LLR change per additional idle observation, the spacing of the values
/// the statistic can take at fixed `n`.
pub fn llr_quantization_step(params: &ModelParams) -> f64 {
    let (idle, busy) = symbol_log_ratios(params);
    idle - busy
}

pub fn write_rows_csv<W: Write>(rows: &[ExperimentRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["n", "p_f", "p_m", "p_e", "se_f", "se_m", "trials"])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            format!("{:?}", r.p_f),
            format!("{:?}", r.p_m),
            format!("{:?}", r.p_e),
            format!("{:?}", r.se_f),
            format!("{:?}", r.se_m),
            r.trials.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["gamma", "p_f", "p_m", "p_e"])?;
    for r in rows {
        w.write_record(
            [r.gamma, r.p_f, r.p_m, r.p_e]
                .iter()
                .map(|x| format!("{x:?}")),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Path of the CSV written next to a JSON result file.
pub fn csv_sibling(path: &Path) -> PathBuf {
    path.with_extension("csv")
}

/// Writes the full result as JSON at `path` and the rows as CSV beside it.
pub fn persist(result: &ExperimentResult, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(result)
        .map_err(|e| Error::Numeric(format!("cannot serialize result: {e}")))?;
    fs::write(path, json + "\n")?;
    let file = fs::File::create(csv_sibling(path))?;
    write_rows_csv(&result.rows, file)
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

fn parse_error(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

pub fn from_json_str(s: &str) -> Result<ExperimentResult> {
    let probe: VersionProbe = serde_json::from_str(s).map_err(parse_error)?;
    if probe.format_version != FORMAT_VERSION {
        return Err(Error::Version {
            found: probe.format_version,
            expected: FORMAT_VERSION,
        });
    }
    serde_json::from_str(s).map_err(parse_error)
}

pub fn load(path: &Path) -> Result<ExperimentResult> {
    from_json_str(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(lb: f64, exact: bool) -> CampaignConfig {
        CampaignConfig {
            params: ModelParams::new(0.3, lb, 1.0).unwrap(),
            n_grid: vec![20, 40, 60, 80],
            trials_per_point: 2_000,
            threshold: 0.0,
            master_seed: RngSeed::new(5, 0),
            use_exact_when_feasible: exact,
            threads: None,
        }
    }

    #[test]
    fn degenerate_campaign() {
        let res = run_campaign(&config(0.0, true)).unwrap();
        for r in &res.rows {
            assert_eq!(r.method, Method::MonteCarlo);
            assert_eq!(r.p_e, 0.5);
        }
        assert_eq!(res.fitted_slope_e, Some(0.0));
        assert_eq!(res.fitted_slope_f, None);
    }

    #[test]
    fn config_validation() {
        let mut cfg = config(0.2, true);
        cfg.n_grid = vec![10, 10];
        assert!(run_campaign(&cfg).is_err());
        cfg.n_grid = vec![];
        assert!(run_campaign(&cfg).is_err());
        cfg.n_grid = vec![0, 1];
        assert!(run_campaign(&cfg).is_err());
        let mut cfg = config(0.2, true);
        cfg.trials_per_point = 0;
        assert!(run_campaign(&cfg).is_err());
    }

    #[test]
    fn slope_needs_three_points() {
        let mut res = run_campaign(&config(0.2, true)).unwrap();
        res.rows.truncate(2);
        assert_eq!(fit_log_slope(&res.rows, |r| r.p_e), None);
    }

    #[test]
    fn adding_grid_points_keeps_rows() {
        let small = run_campaign(&config(0.2, false)).unwrap();
        let mut cfg = config(0.2, false);
        cfg.n_grid = vec![10, 20, 40, 50, 60, 80];
        let big = run_campaign(&cfg).unwrap();
        for r in &small.rows {
            let same = big.rows.iter().find(|b| b.n == r.n).unwrap();
            assert_eq!(r, same);
        }
    }

    #[test]
    fn config_from_toml() {
        let cfg = CampaignConfig::from_toml_str(
            r#"
n_grid = [100, 200, 300]
trials_per_point = 1000
[params]
lambda_w = 0.3
lambda_b = 0.2
mu = 1.0
[master_seed]
seed = 9
"#,
        )
        .unwrap();
        assert!(cfg.use_exact_when_feasible);
        assert_eq!(cfg.master_seed, RngSeed::new(9, 0));
        assert_eq!(cfg.threshold, 0.0);
        assert!(CampaignConfig::from_toml_str("n_grid = [1]\n").is_err());
    }

    #[test]
    fn round_trip_and_errors() {
        let res = run_campaign(&config(0.2, false)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("result.json");
        persist(&res, &path).unwrap();
        assert_eq!(load(&path).unwrap(), res);
        let csv = fs::read_to_string(csv_sibling(&path)).unwrap();
        assert!(csv.starts_with("n,p_f,p_m,p_e,se_f,se_m,trials\n"));

        let text = fs::read_to_string(&path).unwrap();
        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        value.as_object_mut().unwrap().remove("rows");
        let err = from_json_str(&value.to_string()).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        assert!(err.to_string().contains("rows"), "{err}");

        let bumped = text.replacen("\"format_version\": 1", "\"format_version\": 99", 1);
        assert!(matches!(
            from_json_str(&bumped),
            Err(Error::Version {
                found: 99,
                expected: 1
            })
        ));

        let broken = format!("{}\n  oops", &text[..text.len() / 2]);
        match from_json_str(&broken) {
            Err(Error::Parse { line, .. }) => assert!(line > 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn sweep_extremes_and_monotonicity() {
        let params = ModelParams::new(0.3, 0.2, 1.0).unwrap();
        let gammas: Vec<f64> = (-40..=40).map(|k| k as f64 * 0.25).collect();
        let rows = threshold_sweep(&params, 50, &gammas, 1, RngSeed::default(), true).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].p_f >= w[0].p_f - 1e-15);
            assert!(w[1].p_m <= w[0].p_m + 1e-15);
        }
        let lo = threshold_sweep(&params, 50, &[-1e6], 1, RngSeed::default(), true).unwrap()[0];
        assert_eq!(lo.p_f, 0.0);
        assert!((lo.p_m - 1.0).abs() < 1e-12);
        let hi = threshold_sweep(&params, 50, &[1e6], 1, RngSeed::default(), true).unwrap()[0];
        assert!((hi.p_f - 1.0).abs() < 1e-12);
        assert_eq!(hi.p_m, 0.0);
    }
}
