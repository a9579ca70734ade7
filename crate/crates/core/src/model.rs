//! Rate parameters of the bufferless server and the busy/idle transition
//! matrices they induce under each hypothesis.
//!
//! States are encoded `0 = idle` (arrival is served) and `1 = busy`
//! (arrival is lost).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observation state seen by an arrival.
pub const IDLE: u8 = 0;
pub const BUSY: u8 = 1;

/// Which traffic the server is carrying.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hypothesis {
    /// Willie jobs only.
    H0,
    /// Willie jobs merged with Nillie jobs.
    H1,
}

impl Hypothesis {
    pub const ALL: [Hypothesis; 2] = [Hypothesis::H0, Hypothesis::H1];

    pub fn index(self) -> u64 {
        match self {
            Hypothesis::H0 => 0,
            Hypothesis::H1 => 1,
        }
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hypothesis::H0 => f.write_str("H0"),
            Hypothesis::H1 => f.write_str("H1"),
        }
    }
}

impl FromStr for Hypothesis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "h0" | "0" => Ok(Hypothesis::H0),
            "h1" | "1" => Ok(Hypothesis::H1),
            other => Err(Error::InvalidParameter(format!(
                "unknown hypothesis '{other}' (expected h0 or h1)"
            ))),
        }
    }
}

#[derive(Deserialize)]
struct RawParams {
    lambda_w: f64,
    #[serde(default)]
    lambda_b: f64,
    mu: f64,
}

/// Arrival and service rates defining both hypotheses.
///
/// `lambda_w > 0`, `mu > 0` and `lambda_b >= 0` are enforced on construction.
/// The queueing regime `mu > lambda_w + lambda_b` is recorded but only
/// enforced by [`ModelParams::new_strict`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct ModelParams {
    lambda_w: f64,
    lambda_b: f64,
    mu: f64,
    #[serde(skip)]
    stable: bool,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        ModelParams::new(raw.lambda_w, raw.lambda_b, raw.mu)
    }
}

impl ModelParams {
    pub fn new(lambda_w: f64, lambda_b: f64, mu: f64) -> Result<Self> {
        if !(lambda_w.is_finite() && lambda_w > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda_w must be a finite positive rate, got {lambda_w}"
            )));
        }
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mu must be a finite positive rate, got {mu}"
            )));
        }
        if !(lambda_b.is_finite() && lambda_b >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda_b must be a finite non-negative rate, got {lambda_b}"
            )));
        }
        Ok(ModelParams {
            lambda_w,
            lambda_b,
            mu,
            stable: mu > lambda_w + lambda_b,
        })
    }

    /// Like [`ModelParams::new`] but also rejects `mu <= lambda_w + lambda_b`.
    pub fn new_strict(lambda_w: f64, lambda_b: f64, mu: f64) -> Result<Self> {
        let params = Self::new(lambda_w, lambda_b, mu)?;
        params.check_stable()?;
        Ok(params)
    }

    pub fn check_stable(&self) -> Result<()> {
        if self.stable {
            Ok(())
        } else {
            Err(Error::Unstable {
                mu: self.mu,
                load: self.lambda_w + self.lambda_b,
            })
        }
    }

    pub fn lambda_w(&self) -> f64 {
        self.lambda_w
    }

    pub fn lambda_b(&self) -> f64 {
        self.lambda_b
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Whether `mu > lambda_w + lambda_b`.
    pub fn is_stable(&self) -> bool {
        self.stable
    }

    /// Total arrival rate under `hyp`.
    pub fn arrival_rate(&self, hyp: Hypothesis) -> f64 {
        match hyp {
            Hypothesis::H0 => self.lambda_w,
            Hypothesis::H1 => self.lambda_w + self.lambda_b,
        }
    }

    /// Probability that an arrival finds the server idle: `p` under H0, `q` under H1.
    pub fn idle_probability(&self, hyp: Hypothesis) -> f64 {
        self.mu / (self.arrival_rate(hyp) + self.mu)
    }

    /// `p = mu / (lambda_w + mu)`.
    pub fn p(&self) -> f64 {
        self.idle_probability(Hypothesis::H0)
    }

    /// `q = mu / (lambda_w + lambda_b + mu)`.
    pub fn q(&self) -> f64 {
        self.idle_probability(Hypothesis::H1)
    }

    pub fn with_lambda_b(&self, lambda_b: f64) -> Result<Self> {
        Self::new(self.lambda_w, lambda_b, self.mu)
    }

    /// Rates rescaled to unit service rate.
    pub fn normalized(&self) -> Self {
        ModelParams {
            lambda_w: self.lambda_w / self.mu,
            lambda_b: self.lambda_b / self.mu,
            mu: 1.0,
            stable: self.stable,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        format!(
            "lambda_w = {:?}\nlambda_b = {:?}\nmu = {:?}\n",
            self.lambda_w, self.lambda_b, self.mu
        )
    }
}

/// A 2x2 row-stochastic matrix indexed by `(previous state, next state)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    rows: [[f64; 2]; 2],
}

impl TransitionMatrix {
    const ROW_SUM_TOL: f64 = 1e-12;

    pub fn new(rows: [[f64; 2]; 2]) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if row.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::InvalidParameter(format!(
                    "row {i} has an entry outside [0, 1]: {row:?}"
                )));
            }
            if (row[0] + row[1] - 1.0).abs() > Self::ROW_SUM_TOL {
                return Err(Error::InvalidParameter(format!(
                    "row {i} does not sum to 1: {row:?}"
                )));
            }
        }
        Ok(TransitionMatrix { rows })
    }

    /// Matrix whose rows both equal `(idle, 1 - idle)`.
    fn equal_rows(idle: f64) -> Self {
        let row = [idle, 1.0 - idle];
        TransitionMatrix { rows: [row, row] }
    }

    pub fn rows(&self) -> [[f64; 2]; 2] {
        self.rows
    }

    pub fn get(&self, from: u8, to: u8) -> f64 {
        self.rows[from as usize][to as usize]
    }

    pub fn has_equal_rows(&self) -> bool {
        self.rows[0] == self.rows[1]
    }

    /// Left eigenvector for eigenvalue 1, normalized to sum 1.
    ///
    /// For a 2-state chain with leave-rates `a = m[0][1]`, `b = m[1][0]` this
    /// is `(b, a) / (a + b)`. The identity matrix has no unique stationary law;
    /// the uniform distribution is returned for it.
    pub fn stationary_distribution(&self) -> [f64; 2] {
        if self.has_equal_rows() {
            return self.rows[0];
        }
        let a = self.rows[0][1];
        let b = self.rows[1][0];
        let s = a + b;
        if s == 0.0 {
            return [0.5, 0.5];
        }
        [b / s, a / s]
    }
}

/// Exact busy/idle transition matrix under `hyp`.
pub fn transition_matrix(params: &ModelParams, hyp: Hypothesis) -> TransitionMatrix {
    TransitionMatrix::equal_rows(params.idle_probability(hyp))
}
