//! The epsilon-covertness criterion `K(N) exp(-I_err N) >= 1 - eps` and the
//! largest Nillie rate it admits.
//!
//! Rates here are in units of the service rate (`mu = 1`).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponent::{i_err_closed, i_err_taylor};
use crate::model::ModelParams;

/// Sub-exponential prefactor `K(N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum KFunction {
    /// `K(N) = k0`
    Constant { k0: f64 },
    /// `K(N) = k0 * N^(-alpha)`
    Power { k0: f64, alpha: f64 },
}

impl Default for KFunction {
    fn default() -> Self {
        KFunction::Constant { k0: 1.0 }
    }
}

impl KFunction {
    pub fn validate(&self) -> Result<()> {
        let (k0, alpha) = match *self {
            KFunction::Constant { k0 } => (k0, 0.0),
            KFunction::Power { k0, alpha } => (k0, alpha),
        };
        if !(k0.is_finite() && k0 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "K(N) scale k0 must be positive, got {k0}"
            )));
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "K(N) exponent alpha must be non-negative, got {alpha}"
            )));
        }
        Ok(())
    }

    pub fn eval(&self, n: u64) -> f64 {
        match *self {
            KFunction::Constant { k0 } => k0,
            KFunction::Power { k0, alpha } => k0 * (n as f64).powf(-alpha),
        }
    }

    /// `ln K(N)`, exact for large `N` where `K(N)` itself may underflow.
    pub fn ln_eval(&self, n: u64) -> f64 {
        match *self {
            KFunction::Constant { k0 } => k0.ln(),
            KFunction::Power { k0, alpha } => k0.ln() - alpha * (n as f64).ln(),
        }
    }
}

fn default_k() -> KFunction {
    KFunction::default()
}

/// Target error level, observation length and prefactor family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovertnessSpec {
    pub epsilon: f64,
    pub n: u64,
    #[serde(default = "default_k")]
    pub k: KFunction,
}

impl CovertnessSpec {
    pub fn new(epsilon: f64, n: u64, k: KFunction) -> Result<Self> {
        let spec = CovertnessSpec { epsilon, n, k };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must lie strictly inside (0, 1), got {}",
                self.epsilon
            )));
        }
        if self.n == 0 {
            return Err(Error::InvalidParameter("N must be at least 1".into()));
        }
        self.k.validate()
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: CovertnessSpec = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Outcome of the rate bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum CovertBound {
    Feasible {
        rate: f64,
    },
    /// `K(N) <= 1 - eps`: no positive rate meets the criterion.
    Infeasible {
        k_of_n: f64,
        one_minus_epsilon: f64,
    },
}

impl CovertBound {
    /// The admissible rate, `0` when infeasible.
    pub fn rate(&self) -> f64 {
        match *self {
            CovertBound::Feasible { rate } => rate,
            CovertBound::Infeasible { .. } => 0.0,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, CovertBound::Feasible { .. })
    }
}

/// `lambda_b <= sqrt(8 lw (lw + 1)^2 / N * ln(K(N) / (1 - eps)))`.
pub fn max_covert_rate(lambda_w: f64, spec: &CovertnessSpec) -> Result<CovertBound> {
    if !(lambda_w.is_finite() && lambda_w > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda_w must be a finite positive rate, got {lambda_w}"
        )));
    }
    spec.validate()?;
    let margin = spec.k.ln_eval(spec.n) - (-spec.epsilon).ln_1p();
    if margin <= 0.0 {
        return Ok(CovertBound::Infeasible {
            k_of_n: spec.k.eval(spec.n),
            one_minus_epsilon: 1.0 - spec.epsilon,
        });
    }
    let scale = 8.0 * lambda_w * (lambda_w + 1.0).powi(2);
    Ok(CovertBound::Feasible {
        rate: (scale / spec.n as f64 * margin).sqrt(),
    })
}

/// Exponent used when evaluating the criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExponentMode {
    #[default]
    Taylor,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovertnessCheck {
    pub i_err: f64,
    /// `K(N) exp(-I_err N)`, unclipped.
    pub p_e_raw: f64,
    /// `p_e_raw` clipped to `[0, 1]` for reporting.
    pub p_e_approx: f64,
    pub covert: bool,
}

pub fn covertness_check(
    params: &ModelParams,
    spec: &CovertnessSpec,
    mode: ExponentMode,
) -> Result<CovertnessCheck> {
    spec.validate()?;
    let i_err = match mode {
        ExponentMode::Taylor => i_err_taylor(params),
        ExponentMode::Closed => i_err_closed(params),
    };
    let p_e_raw = spec.k.eval(spec.n) * (-i_err * spec.n as f64).exp();
    Ok(CovertnessCheck {
        i_err,
        p_e_raw,
        p_e_approx: p_e_raw.clamp(0.0, 1.0),
        covert: p_e_raw >= 1.0 - spec.epsilon,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: u64,
    pub k_of_n: f64,
    pub bound: f64,
    pub bound_times_sqrt_n: f64,
}

/// [`max_covert_rate`] across increasing `N`; infeasible points give `0`.
pub fn scaling_table(
    lambda_w: f64,
    epsilon: f64,
    k: KFunction,
    n_values: &[u64],
) -> Result<Vec<ScalingRow>> {
    if n_values.is_empty() {
        return Err(Error::InvalidParameter("N list is empty".into()));
    }
    if n_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "N list must be strictly increasing".into(),
        ));
    }
    n_values
        .iter()
        .map(|&n| {
            let spec = CovertnessSpec::new(epsilon, n, k)?;
            let bound = max_covert_rate(lambda_w, &spec)?.rate();
            Ok(ScalingRow {
                n,
                k_of_n: k.eval(n),
                bound,
                bound_times_sqrt_n: bound * (n as f64).sqrt(),
            })
        })
        .collect()
}

/// CSV with columns `N,K_of_N,bound,bound_times_sqrtN`.
pub fn write_scaling_csv<W: Write>(rows: &[ScalingRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["N", "K_of_N", "bound", "bound_times_sqrtN"])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            format!("{:?}", r.k_of_n),
            format!("{:?}", r.bound),
            format!("{:?}", r.bound_times_sqrt_n),
        ])?;
    }
    w.flush()?;
    Ok(())
}
