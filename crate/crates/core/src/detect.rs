//! Willie's log-likelihood-ratio test and its error probabilities.
//!
//! Decisions follow `llr >= threshold => H0`, so ties go to H0.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};
use crate::model::{transition_matrix, Hypothesis, ModelParams, TransitionMatrix, IDLE};
use crate::rng::RngSeed;
use crate::sim::{simulate_sequence, ObservationSequence};

/// How the first observation enters the likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialMode {
    /// `x_1` is drawn from each chain's stationary law.
    #[default]
    Stationary,
    /// The likelihood is conditioned on `x_1`, which contributes nothing.
    Conditioned,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LlrResult {
    pub llr: f64,
    pub decision: Hypothesis,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorProbabilities {
    pub p_f: f64,
    pub p_m: f64,
    pub p_e: f64,
}

impl ErrorProbabilities {
    pub fn new(p_f: f64, p_m: f64) -> Self {
        ErrorProbabilities {
            p_f,
            p_m,
            p_e: 0.5 * (p_f + p_m),
        }
    }
}

/// Monte Carlo estimate with binomial standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McErrorEstimate {
    pub probs: ErrorProbabilities,
    pub se_f: f64,
    pub se_m: f64,
    pub trials: u64,
    pub false_alarms: u64,
    pub misses: u64,
}

/// Flat export record for one operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub n: u64,
    pub lambda_w: f64,
    pub lambda_b: f64,
    pub mu: f64,
    pub threshold: f64,
    pub p_f: f64,
    pub p_m: f64,
    pub p_e: f64,
    pub se_f: Option<f64>,
    pub se_m: Option<f64>,
    pub trials: Option<u64>,
}

impl ErrorRecord {
    pub fn exact(params: &ModelParams, n: usize, threshold: f64, e: &ErrorProbabilities) -> Self {
        ErrorRecord {
            n: n as u64,
            lambda_w: params.lambda_w(),
            lambda_b: params.lambda_b(),
            mu: params.mu(),
            threshold,
            p_f: e.p_f,
            p_m: e.p_m,
            p_e: e.p_e,
            se_f: None,
            se_m: None,
            trials: None,
        }
    }

    pub fn monte_carlo(
        params: &ModelParams,
        n: usize,
        threshold: f64,
        e: &McErrorEstimate,
    ) -> Self {
        ErrorRecord {
            se_f: Some(e.se_f),
            se_m: Some(e.se_m),
            trials: Some(e.trials),
            ..Self::exact(params, n, threshold, &e.probs)
        }
    }
}

fn log_ratio(num: f64, den: f64, from: u8, to: u8) -> Result<f64> {
    if num == den {
        return if num > 0.0 {
            Ok(0.0)
        } else {
            Err(Error::UndefinedLlr { from, to })
        };
    }
    if num <= 0.0 || den <= 0.0 {
        return Err(Error::UndefinedLlr { from, to });
    }
    Ok((num / den).ln())
}

/// LLR of `k` idle symbols among `m` counted ones for equal-row chains.
/// Shared by the detector and the exact oracle so both evaluate the same
/// floating-point expression.
#[inline]
fn count_llr(k: u64, m: u64, idle_lr: f64, busy_lr: f64) -> f64 {
    let idle_term = if k == 0 { 0.0 } else { k as f64 * idle_lr };
    let busy_term = if m == k {
        0.0
    } else {
        (m - k) as f64 * busy_lr
    };
    idle_term + busy_term
}

/// Per-symbol log-ratios `(ln(p/q), ln((1-p)/(1-q)))` for an idle and a busy
/// observation.
pub fn symbol_log_ratios(params: &ModelParams) -> (f64, f64) {
    let p = params.p();
    let q = params.q();
    ((p / q).ln(), ((1.0 - p) / (1.0 - q)).ln())
}

/// Natural-log likelihood ratio `ln P[x | H0] / P[x | H1]`.
pub fn log_likelihood_ratio(
    obs: &ObservationSequence,
    p: &TransitionMatrix,
    q: &TransitionMatrix,
    initial: InitialMode,
) -> Result<f64> {
    let bits = obs.bits();
    let Some(&first) = bits.first() else {
        return Err(Error::InputData("empty observation sequence".into()));
    };

    if p.has_equal_rows() && q.has_equal_rows() {
        let counted = match initial {
            InitialMode::Stationary => bits,
            InitialMode::Conditioned => &bits[1..],
        };
        let m = counted.len() as u64;
        let k = counted.iter().filter(|&&b| b == IDLE).count() as u64;
        let idle_lr = if k > 0 {
            log_ratio(p.get(0, 0), q.get(0, 0), 0, 0)?
        } else {
            0.0
        };
        let busy_lr = if k < m {
            log_ratio(p.get(0, 1), q.get(0, 1), 0, 1)?
        } else {
            0.0
        };
        return Ok(count_llr(k, m, idle_lr, busy_lr));
    }

    let mut llr = match initial {
        InitialMode::Stationary => {
            let pi_p = p.stationary_distribution()[first as usize];
            let pi_q = q.stationary_distribution()[first as usize];
            log_ratio(pi_p, pi_q, first, first)?
        }
        InitialMode::Conditioned => 0.0,
    };
    let mut counts = [[0u64; 2]; 2];
    for w in bits.windows(2) {
        counts[w[0] as usize][w[1] as usize] += 1;
    }
    for from in 0..2u8 {
        for to in 0..2u8 {
            let c = counts[from as usize][to as usize];
            if c > 0 {
                llr += c as f64 * log_ratio(p.get(from, to), q.get(from, to), from, to)?;
            }
        }
    }
    Ok(llr)
}

pub fn decide(
    obs: &ObservationSequence,
    p: &TransitionMatrix,
    q: &TransitionMatrix,
    threshold: f64,
    initial: InitialMode,
) -> Result<LlrResult> {
    let llr = log_likelihood_ratio(obs, p, q, initial)?;
    Ok(LlrResult {
        llr,
        decision: decide_llr(llr, threshold),
        threshold,
    })
}

pub fn decide_llr(llr: f64, threshold: f64) -> Hypothesis {
    if llr >= threshold {
        Hypothesis::H0
    } else {
        Hypothesis::H1
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

fn ln_binomial_pmf(m: u64, k: u64, ln_p: f64, ln_1mp: f64) -> f64 {
    let mut lp = ln_binomial(m, k);
    if k > 0 {
        lp += k as f64 * ln_p;
    }
    if m > k {
        lp += (m - k) as f64 * ln_1mp;
    }
    lp
}

/// Exact `P_F`, `P_M`, `P_E` with the stationary first-symbol convention.
pub fn exact_error_probabilities(
    params: &ModelParams,
    n: usize,
    threshold: f64,
) -> Result<ErrorProbabilities> {
    exact_error_probabilities_with(params, n, threshold, InitialMode::Stationary)
}

/// Exact error probabilities of the LLR test.
///
/// Both chains have equal rows, so the observations are i.i.d. and the
/// idle count `k` over the counted symbols is sufficient: `k ~ Bin(m, p)`
/// under H0 and `Bin(m, q)` under H1, with `m = n` (stationary) or `n - 1`
/// (conditioned). The LLR is affine in `k`.
pub fn exact_error_probabilities_with(
    params: &ModelParams,
    n: usize,
    threshold: f64,
    initial: InitialMode,
) -> Result<ErrorProbabilities> {
    if params.lambda_b() == 0.0 {
        return Err(Error::DegenerateModel);
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let m = match initial {
        InitialMode::Stationary => n as u64,
        InitialMode::Conditioned => n as u64 - 1,
    };
    let (p, q) = (params.p(), params.q());
    let (idle_lr, busy_lr) = symbol_log_ratios(params);
    let (ln_p, ln_1mp) = (p.ln(), (1.0 - p).ln());
    let (ln_q, ln_1mq) = (q.ln(), (1.0 - q).ln());

    let mut false_alarm_terms = Vec::new();
    let mut miss_terms = Vec::new();
    for k in 0..=m {
        match decide_llr(count_llr(k, m, idle_lr, busy_lr), threshold) {
            Hypothesis::H1 => false_alarm_terms.push(ln_binomial_pmf(m, k, ln_p, ln_1mp)),
            Hypothesis::H0 => miss_terms.push(ln_binomial_pmf(m, k, ln_q, ln_1mq)),
        }
    }
    let p_f = log_sum_exp(&false_alarm_terms).exp().min(1.0);
    let p_m = log_sum_exp(&miss_terms).exp().min(1.0);
    Ok(ErrorProbabilities::new(p_f, p_m))
}

/// Monte Carlo estimate of the error probabilities through the event
/// simulator. Trial `t` under hypothesis `h` uses stream
/// `seed.derive([h, t])`, so the result does not depend on how trials are
/// spread over threads.
pub fn monte_carlo_error(
    params: &ModelParams,
    n: usize,
    threshold: f64,
    trials: u64,
    seed: RngSeed,
) -> Result<McErrorEstimate> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let p = transition_matrix(params, Hypothesis::H0);
    let q = transition_matrix(params, Hypothesis::H1);

    let count_wrong = |truth: Hypothesis| -> Result<u64> {
        (0..trials)
            .into_par_iter()
            .map(|t| {
                let trial_seed = seed.derive(&[truth.index(), t]);
                let obs = simulate_sequence(params, truth, n, trial_seed)?;
                let res = decide(&obs, &p, &q, threshold, InitialMode::Stationary)?;
                Ok(u64::from(res.decision != truth))
            })
            .try_reduce(|| 0, |a, b| Ok(a + b))
    };
    let false_alarms = count_wrong(Hypothesis::H0)?;
    let misses = count_wrong(Hypothesis::H1)?;

    let tf = trials as f64;
    let p_f = false_alarms as f64 / tf;
    let p_m = misses as f64 / tf;
    Ok(McErrorEstimate {
        probs: ErrorProbabilities::new(p_f, p_m),
        se_f: (p_f * (1.0 - p_f) / tf).sqrt(),
        se_m: (p_m * (1.0 - p_m) / tf).sqrt(),
        trials,
        false_alarms,
        misses,
    })
}
