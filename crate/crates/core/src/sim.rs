//! Event-driven simulation of the bufferless server.
//!
//! Arrivals form a Poisson stream with the hypothesis' total rate; each
//! arrival that finds the server idle starts an exponential service, each
//! arrival that finds it busy is lost. The observation for arrival `j` is
//! `1` when it is lost.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Hypothesis, ModelParams, BUSY, IDLE};
use crate::rng::RngSeed;

/// Busy/idle record `x_1..x_n` reported for `n` successive arrivals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationSequence {
    bits: Vec<u8>,
}

impl ObservationSequence {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(pos) = bits.iter().position(|&b| b > 1) {
            return Err(Error::InputData(format!(
                "observation {pos} is {}, expected 0 or 1",
                bits[pos]
            )));
        }
        Ok(ObservationSequence { bits })
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn n(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn busy_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b == BUSY).count()
    }

    pub fn busy_fraction(&self) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        self.busy_count() as f64 / self.bits.len() as f64
    }

    /// One line of `0`/`1` characters, no terminator.
    pub fn to_line(&self) -> String {
        self.bits
            .iter()
            .map(|&b| if b == BUSY { '1' } else { '0' })
            .collect()
    }

    /// Parses the text form. Surrounding whitespace is ignored.
    pub fn from_line(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::InputData("empty observation sequence".into()));
        }
        let bits = s
            .char_indices()
            .map(|(i, c)| match c {
                '0' => Ok(IDLE),
                '1' => Ok(BUSY),
                other => Err(Error::InputData(format!(
                    "unexpected character {other:?} at offset {i}"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ObservationSequence { bits })
    }

    /// Compact form: little-endian `u64` length followed by the bits packed
    /// LSB-first, eight per byte. Padding bits are zero.
    pub fn to_packed(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.bits.len().div_ceil(8));
        out.extend_from_slice(&(self.bits.len() as u64).to_le_bytes());
        for chunk in self.bits.chunks(8) {
            let byte = chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | (b << i));
            out.push(byte);
        }
        out
    }

    pub fn from_packed(data: &[u8]) -> Result<Self> {
        let header: [u8; 8] = data
            .get(..8)
            .and_then(|h| h.try_into().ok())
            .ok_or_else(|| Error::InputData("packed sequence shorter than its header".into()))?;
        let n = u64::from_le_bytes(header) as usize;
        let body = &data[8..];
        if body.len() != n.div_ceil(8) {
            return Err(Error::InputData(format!(
                "packed sequence declares {n} bits but carries {} bytes",
                body.len()
            )));
        }
        if !n.is_multiple_of(8) {
            let used = n % 8;
            if body[body.len() - 1] >> used != 0 {
                return Err(Error::InputData("non-zero padding bits".into()));
            }
        }
        let bits = (0..n).map(|j| (body[j / 8] >> (j % 8)) & 1).collect();
        Ok(ObservationSequence { bits })
    }
}

/// Source of an arrival.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobOrigin {
    Willie,
    Nillie,
}

/// Full record of a simulation run, for validating the simulator itself.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub arrival_times: Vec<f64>,
    pub job_origin: Vec<JobOrigin>,
    pub served: Vec<bool>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.arrival_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrival_times.is_empty()
    }

    pub fn observations(&self) -> ObservationSequence {
        let bits = self
            .served
            .iter()
            .map(|&s| if s { IDLE } else { BUSY })
            .collect();
        ObservationSequence { bits }
    }

    pub fn nillie_count(&self) -> usize {
        self.job_origin
            .iter()
            .filter(|&&o| o == JobOrigin::Nillie)
            .count()
    }

    /// CSV with header `time,origin,served`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time", "origin", "served"])?;
        for j in 0..self.len() {
            let origin = match self.job_origin[j] {
                JobOrigin::Willie => "willie",
                JobOrigin::Nillie => "nillie",
            };
            w.write_record([
                format!("{:?}", self.arrival_times[j]),
                origin.to_string(),
                self.served[j].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    /// Leading arrivals simulated but not reported. The server starts idle,
    /// so the very first arrival always sees `0`; discarding it makes the
    /// reported sequence follow the stationary law.
    pub burn_in: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { burn_in: 1 }
    }
}

fn check_len(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    Ok(())
}

/// Drives the server for `burn_in + n` arrivals and reports the last `n`
/// through `visit(time, origin, served)`.
fn run_server<F>(
    params: &ModelParams,
    hyp: Hypothesis,
    n: usize,
    seed: RngSeed,
    opts: &SimOptions,
    mut visit: F,
) where
    F: FnMut(f64, JobOrigin, bool),
{
    let rate = params.arrival_rate(hyp);
    let nillie_share = match hyp {
        Hypothesis::H0 => 0.0,
        Hypothesis::H1 => params.lambda_b() / rate,
    };
    let interarrival = Exp::new(rate).expect("arrival rate is positive");
    let service = Exp::new(params.mu()).expect("service rate is positive");
    let mut rng = seed.rng();

    let mut now = 0.0f64;
    let mut busy_until = 0.0f64;
    for j in 0..opts.burn_in + n {
        now += interarrival.sample(&mut rng);
        let origin = if hyp == Hypothesis::H1 && rng.random::<f64>() < nillie_share {
            JobOrigin::Nillie
        } else {
            JobOrigin::Willie
        };
        let served = now >= busy_until;
        if served {
            busy_until = now + service.sample(&mut rng);
        }
        if j >= opts.burn_in {
            visit(now, origin, served);
        }
    }
}

pub fn simulate_sequence(
    params: &ModelParams,
    hyp: Hypothesis,
    n: usize,
    seed: RngSeed,
) -> Result<ObservationSequence> {
    simulate_sequence_with(params, hyp, n, seed, &SimOptions::default())
}

pub fn simulate_sequence_with(
    params: &ModelParams,
    hyp: Hypothesis,
    n: usize,
    seed: RngSeed,
    opts: &SimOptions,
) -> Result<ObservationSequence> {
    check_len(n)?;
    let mut bits = Vec::with_capacity(n);
    run_server(params, hyp, n, seed, opts, |_, _, served| {
        bits.push(if served { IDLE } else { BUSY })
    });
    Ok(ObservationSequence { bits })
}

pub fn simulate_trace(
    params: &ModelParams,
    hyp: Hypothesis,
    n: usize,
    seed: RngSeed,
) -> Result<SimTrace> {
    simulate_trace_with(params, hyp, n, seed, &SimOptions::default())
}

pub fn simulate_trace_with(
    params: &ModelParams,
    hyp: Hypothesis,
    n: usize,
    seed: RngSeed,
    opts: &SimOptions,
) -> Result<SimTrace> {
    check_len(n)?;
    let mut trace = SimTrace {
        arrival_times: Vec::with_capacity(n),
        job_origin: Vec::with_capacity(n),
        served: Vec::with_capacity(n),
    };
    run_server(params, hyp, n, seed, opts, |t, origin, served| {
        trace.arrival_times.push(t);
        trace.job_origin.push(origin);
        trace.served.push(served);
    });
    Ok(trace)
}

/// Counts of consecutive pairs `(x_{j-1}, x_j)`, indexed `[from][to]`.
pub fn empirical_transition_counts(obs: &ObservationSequence) -> Result<[[u64; 2]; 2]> {
    if obs.n() < 2 {
        return Err(Error::InputData(format!(
            "need at least 2 observations to count transitions, got {}",
            obs.n()
        )));
    }
    let mut counts = [[0u64; 2]; 2];
    for w in obs.bits().windows(2) {
        counts[w[0] as usize][w[1] as usize] += 1;
    }
    Ok(counts)
}

/// Row-normalized transition counts; rows with no visits are left at zero.
pub fn empirical_transition_frequencies(obs: &ObservationSequence) -> Result<[[f64; 2]; 2]> {
    let counts = empirical_transition_counts(obs)?;
    let mut freq = [[0.0; 2]; 2];
    for (i, row) in counts.iter().enumerate() {
        let total = row[0] + row[1];
        if total > 0 {
            freq[i] = [row[0] as f64 / total as f64, row[1] as f64 / total as f64];
        }
    }
    Ok(freq)
}
