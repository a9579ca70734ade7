//! Error exponent of the busy/idle hypothesis test.
//!
//! The tilted matrix `M(u)` has equal rows, so its spectral radius is the
//! common row sum
//!
//! ```text
//! r(u) = p^u q^(1-u) + (1-p)^u (1-q)^(1-u) = A B^u + C D^u
//! ```
//!
//! and the exponent is `I_err = -min_{u in [0,1]} ln r(u)`. The minimizer has
//! a closed form `v`; a golden-section search provides the numeric route.
//!
//! Quantities that vanish with `lambda_b` are evaluated through `ln_1p` and
//! `expm1` so that small Nillie rates keep full relative precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Below this `lambda_b / lambda_w` the closed-form minimizer is replaced by
/// its limit `1/2`.
pub const SMALL_RATE_SWITCH: f64 = 1e-7;

/// Default tolerance on `u` for [`i_err_numeric`].
pub const DEFAULT_TOL: f64 = 1e-10;

/// Iteration cap for the golden-section search.
pub const MAX_ITERATIONS: usize = 200;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// `r(u) = A B^u + C D^u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Abcd {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Abcd {
    pub fn new(params: &ModelParams) -> Self {
        let (lw, lb, mu) = (params.lambda_w(), params.lambda_b(), params.mu());
        let total = lb + lw + mu;
        Abcd {
            a: mu / total,
            b: total / (lw + mu),
            c: (lb + lw) / total,
            d: lw * total / ((lb + lw) * (lw + mu)),
        }
    }
}

/// Ratios entering the closed form of `v`:
/// `a = (lb + lw)/mu`, `b = (lb + lw)/lw`, `c = (lw + mu)/(lb + lw + mu)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallAbc {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl SmallAbc {
    pub fn new(params: &ModelParams) -> Self {
        let (lw, lb, mu) = (params.lambda_w(), params.lambda_b(), params.mu());
        SmallAbc {
            a: (lb + lw) / mu,
            b: (lb + lw) / lw,
            c: (lw + mu) / (lb + lw + mu),
        }
    }
}

/// `r(u)` split as `A`, `C` and the logs of `B`, `D`.
///
/// Defined for any `lb > -lw`, which the finite-difference checks around
/// `lambda_b = 0` rely on.
#[derive(Debug, Clone, Copy)]
struct Tilt {
    a: f64,
    c: f64,
    ln_b: f64,
    ln_d: f64,
}

impl Tilt {
    fn new(lw: f64, lb: f64, mu: f64) -> Self {
        let total = lb + lw + mu;
        // ln B = ln(1 + lb/(lw+mu)),  ln D = ln B - ln(1 + lb/lw)
        let ln_b = (lb / (lw + mu)).ln_1p();
        let ln_d = ln_b - (lb / lw).ln_1p();
        Tilt {
            a: mu / total,
            c: (lb + lw) / total,
            ln_b,
            ln_d,
        }
    }

    /// `r(u) - 1`, using `A + C = 1`.
    fn r_minus_one(&self, u: f64) -> f64 {
        self.a * (u * self.ln_b).exp_m1() + self.c * (u * self.ln_d).exp_m1()
    }

    fn ln_r(&self, u: f64) -> f64 {
        self.r_minus_one(u).ln_1p()
    }

    /// `r(x) - r(y)` without forming either value.
    fn r_difference(&self, x: f64, y: f64) -> f64 {
        let dx = x - y;
        self.a * (y * self.ln_b).exp() * (dx * self.ln_b).exp_m1()
            + self.c * (y * self.ln_d).exp() * (dx * self.ln_d).exp_m1()
    }

    /// `r'(u) = A B^u ln B + C D^u ln D`.
    fn r_prime(&self, u: f64) -> f64 {
        self.a * (u * self.ln_b).exp() * self.ln_b + self.c * (u * self.ln_d).exp() * self.ln_d
    }
}

/// Closed-form stationary point `v = ln(a ln(bc) / ln(1/c)) / ln b`.
fn closed_v(lw: f64, lb: f64, mu: f64) -> f64 {
    let ln_b = (lb / lw).ln_1p();
    let ln_inv_c = (lb / (lw + mu)).ln_1p();
    let ln_bc = ln_b - ln_inv_c;
    let a = (lb + lw) / mu;
    (a * ln_bc / ln_inv_c).ln() / ln_b
}

fn check_u(u: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::InvalidParameter(format!(
            "u must lie in [0, 1], got {u}"
        )));
    }
    Ok(())
}

fn tilt(params: &ModelParams) -> Tilt {
    Tilt::new(params.lambda_w(), params.lambda_b(), params.mu())
}

/// Spectral radius of the tilted matrix, `A B^u + C D^u`.
pub fn r_of_u(params: &ModelParams, u: f64) -> Result<f64> {
    check_u(u)?;
    if params.lambda_b() == 0.0 {
        return Ok(1.0);
    }
    let k = Abcd::new(params);
    Ok(k.a * k.b.powf(u) + k.c * k.d.powf(u))
}

/// Same quantity in the `p`, `q` factorization.
pub fn r_of_u_pq(params: &ModelParams, u: f64) -> Result<f64> {
    check_u(u)?;
    let (p, q) = (params.p(), params.q());
    Ok(p.powf(u) * q.powf(1.0 - u) + (1.0 - p).powf(u) * (1.0 - q).powf(1.0 - u))
}

/// `ln r(u)` evaluated without cancellation near `r = 1`.
pub fn log_r_of_u(params: &ModelParams, u: f64) -> Result<f64> {
    check_u(u)?;
    if params.lambda_b() == 0.0 {
        return Ok(0.0);
    }
    Ok(tilt(params).ln_r(u))
}

/// Tilted matrix `M(u)`; both rows equal `(p^u q^(1-u), (1-p)^u (1-q)^(1-u))`.
pub fn tilted_matrix(params: &ModelParams, u: f64) -> Result<[[f64; 2]; 2]> {
    check_u(u)?;
    let (p, q) = (params.p(), params.q());
    let row = [
        p.powf(u) * q.powf(1.0 - u),
        (1.0 - p).powf(u) * (1.0 - q).powf(1.0 - u),
    ];
    Ok([row, row])
}

/// Spectral radius of a non-negative matrix with equal row sums.
pub fn equal_row_spectral_radius(m: &[[f64; 2]; 2]) -> f64 {
    m[0][0] + m[0][1]
}

/// Residual of the stationarity condition `A B^v ln B + C D^v ln D`.
pub fn stationarity_residual(params: &ModelParams, v: f64) -> f64 {
    tilt(params).r_prime(v)
}

/// Closed-form minimizer of `r(u)`.
///
/// Fails with [`Error::BelowSmallRateSwitch`] when `lambda_b / lambda_w` is
/// below [`SMALL_RATE_SWITCH`], where the formula is `0/0`.
pub fn v_closed_form(params: &ModelParams) -> Result<f64> {
    let ratio = params.lambda_b() / params.lambda_w();
    if ratio < SMALL_RATE_SWITCH {
        return Err(Error::BelowSmallRateSwitch { ratio });
    }
    Ok(closed_v(params.lambda_w(), params.lambda_b(), params.mu()))
}

/// Minimizer of `r(u)`, falling back to the limit `1/2` below the switch.
pub fn minimizer(params: &ModelParams) -> f64 {
    v_closed_form(params).unwrap_or(0.5)
}

/// `I_err = -ln r(v)` with the closed-form `v`. Exactly zero for `lambda_b = 0`.
pub fn i_err_closed(params: &ModelParams) -> f64 {
    if params.lambda_b() == 0.0 {
        return 0.0;
    }
    match v_closed_form(params) {
        Ok(v) => -tilt(params).ln_r(v),
        Err(_) => i_err_numeric(params, DEFAULT_TOL)
            .map(|n| n.i_err)
            .unwrap_or_else(|_| i_err_taylor(params)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericExponent {
    pub v: f64,
    pub i_err: f64,
    pub iterations: usize,
}

/// Golden-section minimization of `r(u)` on `[0, 1]` to a bracket of width
/// `tol`.
///
/// Points are compared through `r(x) - r(y)` computed directly, which keeps
/// the comparison sign reliable well inside the flat region around the
/// minimum where `r(x)` and `r(y)` agree to machine precision.
pub fn i_err_numeric(params: &ModelParams, tol: f64) -> Result<NumericExponent> {
    if params.lambda_b() == 0.0 {
        return Err(Error::DegenerateModel);
    }
    if !(tol > 0.0 && tol <= 1e-3) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must lie in (0, 1e-3], got {tol}"
        )));
    }
    let t = tilt(params);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut iterations = 0;
    while hi - lo > tol {
        if iterations == MAX_ITERATIONS {
            return Err(Error::Numeric(format!(
                "golden-section search did not reach tol {tol:e} in {MAX_ITERATIONS} iterations \
                 (bracket [{lo}, {hi}], width {:e})",
                hi - lo
            )));
        }
        iterations += 1;
        if t.r_difference(x1, x2) < 0.0 {
            hi = x2;
            x2 = x1;
            x1 = hi - INV_PHI * (hi - lo);
        } else {
            lo = x1;
            x1 = x2;
            x2 = lo + INV_PHI * (hi - lo);
        }
    }
    let v = 0.5 * (lo + hi);
    Ok(NumericExponent {
        v,
        i_err: -t.ln_r(v),
        iterations,
    })
}

/// Second-order expansion `lb^2 / (8 lw (lw + 1)^2)` in rates normalized to
/// unit service rate.
pub fn i_err_taylor(params: &ModelParams) -> f64 {
    let n = params.normalized();
    let (lw, lb) = (n.lambda_w(), n.lambda_b());
    lb * lb / (8.0 * lw * (lw + 1.0).powi(2))
}

/// Exponent quantities for one parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentReport {
    pub lambda_w: f64,
    pub lambda_b: f64,
    pub mu: f64,
    pub v_closed: f64,
    pub v_numeric: f64,
    pub i_err_closed: f64,
    pub i_err_numeric: f64,
    pub i_err_taylor: f64,
    pub abcd: Abcd,
    pub abc_small: SmallAbc,
}

impl ExponentReport {
    pub fn new(params: &ModelParams) -> Result<Self> {
        let (v_numeric, i_err_numeric) = if params.lambda_b() == 0.0 {
            (0.5, 0.0)
        } else {
            let n = i_err_numeric(params, DEFAULT_TOL)?;
            (n.v, n.i_err)
        };
        Ok(ExponentReport {
            lambda_w: params.lambda_w(),
            lambda_b: params.lambda_b(),
            mu: params.mu(),
            v_closed: minimizer(params),
            v_numeric,
            i_err_closed: i_err_closed(params),
            i_err_numeric,
            i_err_taylor: i_err_taylor(params),
            abcd: Abcd::new(params),
            abc_small: SmallAbc::new(params),
        })
    }

    /// Whether the closed-form and numeric routes agree within the given
    /// tolerances.
    pub fn self_consistent(&self, v_tol: f64, i_tol: f64) -> bool {
        (self.v_closed - self.v_numeric).abs() <= v_tol
            && (self.i_err_closed - self.i_err_numeric).abs() <= i_tol
    }
}

/// Reports for a sweep over Nillie rates at fixed `lambda_w`, `mu`.
pub fn exponent_sweep(lambda_w: f64, mu: f64, lambda_bs: &[f64]) -> Result<Vec<ExponentReport>> {
    lambda_bs
        .iter()
        .map(|&lb| ExponentReport::new(&ModelParams::new(lambda_w, lb, mu)?))
        .collect()
}

/// CSV with columns `lambda_w,lambda_b,mu,v,i_err_closed,i_err_numeric,i_err_taylor`.
pub fn write_sweep_csv<W: std::io::Write>(reports: &[ExponentReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "lambda_w",
        "lambda_b",
        "mu",
        "v",
        "i_err_closed",
        "i_err_numeric",
        "i_err_taylor",
    ])?;
    for r in reports {
        w.write_record(
            [
                r.lambda_w,
                r.lambda_b,
                r.mu,
                r.v_closed,
                r.i_err_closed,
                r.i_err_numeric,
                r.i_err_taylor,
            ]
            .iter()
            .map(|x| format!("{x:?}")),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Values at `lambda_b = 0` (unit service rate) used in the small-rate
/// expansion of the exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallRateFacts {
    pub lambda_w: f64,
    pub p: f64,
    /// `q(0) = p`
    pub q0: f64,
    /// `q'(0) = -p^2`
    pub q1: f64,
    /// `q''(0) = 2 p^3`
    pub q2: f64,
    /// `F(0) = 1`
    pub f0: f64,
    /// `F'(0) = 0`
    pub f1: f64,
    /// `F''(0) = -1 / (4 lw (lw + 1)^2)`
    pub f2: f64,
}

/// Analytic derivatives of `q(lambda_b)` and `F(lambda_b)` at `lambda_b = 0`
/// with `mu = 1`.
pub fn q_derivative_facts(lambda_w: f64) -> Result<SmallRateFacts> {
    if !(lambda_w.is_finite() && lambda_w > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda_w must be a finite positive rate, got {lambda_w}"
        )));
    }
    let p = 1.0 / (lambda_w + 1.0);
    Ok(SmallRateFacts {
        lambda_w,
        p,
        q0: p,
        q1: -p * p,
        q2: 2.0 * p.powi(3),
        f0: 1.0,
        f1: 0.0,
        f2: -1.0 / (4.0 * lambda_w * (lambda_w + 1.0).powi(2)),
    })
}

/// `q(lambda_b) = 1 / (lambda_w + lambda_b + 1)`, defined for
/// `lambda_b > -(lambda_w + 1)`.
pub fn q_of_lambda_b(lambda_w: f64, lambda_b: f64) -> f64 {
    1.0 / (lambda_w + lambda_b + 1.0)
}

/// `F(lambda_b) = r(v(lambda_b))` at `mu = 1`, extended to
/// `lambda_b in (-lambda_w, inf)`; `v` is its limit `1/2` for
/// `|lambda_b| / lambda_w` below [`SMALL_RATE_SWITCH`].
pub fn tilted_mass(lambda_w: f64, lambda_b: f64) -> f64 {
    1.0 + tilted_mass_minus_one(lambda_w, lambda_b)
}

/// `F(lambda_b) - 1`, without the cancellation of forming `F` first.
pub fn tilted_mass_minus_one(lambda_w: f64, lambda_b: f64) -> f64 {
    let v = if (lambda_b / lambda_w).abs() < SMALL_RATE_SWITCH {
        0.5
    } else {
        closed_v(lambda_w, lambda_b, 1.0)
    };
    Tilt::new(lambda_w, lambda_b, 1.0).r_minus_one(v)
}
