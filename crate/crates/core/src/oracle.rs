//! Exact renewal-reward computation of the index of dispersion.
//!
//! Regeneration epochs are the exits from state 0. Over one cycle of
//! length `X` with `Y` counted events, `D = var(Y - R X) / E[Y]` with
//! `R = E[Y] / E[X]`. The cycle moments come from five linear systems in
//! the tridiagonal first-passage matrix `W` on states `1..=J`.
//!
//! Vectors in this module are indexed by state `k = 1..=J`, stored at
//! position `k - 1`; [`interior`] maps a model vector onto that layout.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::BDModel;
use crate::stationary::{rates_and_cdfs, stationary_distribution, StationarySummary};

/// Largest accepted componentwise backward error of a solve.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Relative tolerance of the check `E[Y] / E[X] = thinned rate`.
pub const RATE_IDENTITY_TOL: f64 = 1e-12;

/// Entries `1..=J` of a state vector indexed `0..=J`.
pub fn interior(v: &[f64]) -> &[f64] {
    &v[1..]
}

/// Tridiagonal first-passage matrix on states `1..=J`.
///
/// Row `i` reads `-mu_i x_{i-1} + (lambda_i + mu_i) x_i - lambda_i x_{i+1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WMatrix {
    /// `r_i = lambda_i + mu_i`, `i = 1..=J`.
    pub diag: Vec<f64>,
    /// `-lambda_i`, `i = 1..J-1`.
    pub upper: Vec<f64>,
    /// `-mu_i`, `i = 2..=J`.
    pub lower: Vec<f64>,
    /// Row surplus `diag_i - |upper_i| - |lower_i|`: `mu_1` in row 1 and
    /// zero elsewhere. Kept separately because `diag` is rounded.
    pub surplus: Vec<f64>,
}

/// Coupling matrix: `v_{i,i+1} = lambda_i q+_i`, `v_{i,i-1} = mu_i q-_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VMatrix {
    /// `lambda_i q+_i`, `i = 1..J-1`.
    pub upper: Vec<f64>,
    /// `mu_i q-_i`, `i = 2..=J`.
    pub lower: Vec<f64>,
}

/// Busy-period moments started from each state `k = 1..=J`, plus the
/// cycle moments derived from them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentSet {
    /// `E[tau_k]`, time to reach 0.
    pub tau1: Vec<f64>,
    /// `E[N_k]`, counted events before reaching 0.
    pub n1: Vec<f64>,
    /// `E[tau_k N_k]`.
    pub c1: Vec<f64>,
    /// `E[tau_k^2]`.
    pub tau2: Vec<f64>,
    /// `E[N_k^2]`.
    pub n2: Vec<f64>,
    pub ex: f64,
    pub ey: f64,
    pub ex2: f64,
    pub exy: f64,
    pub ey2: f64,
}

fn tridiag_mul(diag: &[f64], upper: &[f64], lower: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let mut v = diag[i] * x[i];
            if i + 1 < n {
                v += upper[i] * x[i + 1];
            }
            if i > 0 {
                v += lower[i - 1] * x[i - 1];
            }
            v
        })
        .collect()
}

/// Componentwise backward error `max_i |W x - b|_i / (|W| |x| + |b|)_i`.
pub fn backward_error(w: &WMatrix, x: &[f64], rhs: &[f64]) -> f64 {
    let abs = |v: &[f64]| v.iter().map(|a| a.abs()).collect::<Vec<_>>();
    let residual = w.mul_vec(x);
    let scale = tridiag_mul(&abs(&w.diag), &abs(&w.upper), &abs(&w.lower), &abs(x));
    residual
        .iter()
        .zip(rhs)
        .zip(&scale)
        .map(|((r, b), s)| {
            let denom = s + b.abs();
            if denom == 0.0 {
                0.0
            } else {
                (r - b).abs() / denom
            }
        })
        .fold(0.0, f64::max)
}

impl WMatrix {
    /// Builds a tridiagonal matrix, deriving the row surplus from the entries.
    pub fn new(diag: Vec<f64>, upper: Vec<f64>, lower: Vec<f64>) -> Self {
        let n = diag.len();
        let surplus = (0..n)
            .map(|i| {
                let up = if i + 1 < n { upper[i].abs() } else { 0.0 };
                let low = if i > 0 { lower[i - 1].abs() } else { 0.0 };
                diag[i] - up - low
            })
            .collect();
        Self {
            diag,
            upper,
            lower,
            surplus,
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        tridiag_mul(&self.diag, &self.upper, &self.lower, x)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            if i + 1 < n {
                m[(i, i + 1)] = self.upper[i];
                m[(i + 1, i)] = self.lower[i];
            }
        }
        m
    }
}

impl VMatrix {
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let diag = vec![0.0; x.len()];
        tridiag_mul(&diag, &self.upper, &self.lower, x)
    }
}

pub fn build_w(model: &BDModel) -> WMatrix {
    let (lambda, mu) = (interior(model.lambda()), interior(model.mu()));
    let j = model.j();
    WMatrix {
        diag: (0..j).map(|i| lambda[i] + mu[i]).collect(),
        upper: (0..j - 1).map(|i| -lambda[i]).collect(),
        lower: (1..j).map(|i| -mu[i]).collect(),
        surplus: (0..j).map(|i| if i == 0 { mu[0] } else { 0.0 }).collect(),
    }
}

pub fn build_v(model: &BDModel) -> VMatrix {
    let (lambda, mu) = (interior(model.lambda()), interior(model.mu()));
    let (qp, qm) = (interior(model.q_plus()), interior(model.q_minus()));
    let j = model.j();
    VMatrix {
        upper: (0..j - 1).map(|i| lambda[i] * qp[i]).collect(),
        lower: (1..j).map(|i| mu[i] * qm[i]).collect(),
    }
}

/// Dense `W^{-1}` from its closed form
/// `(W^{-1})_{ij} = pi_j * sum_{k=1}^{min(i,j)} 1 / (pi_k mu_k)`.
pub fn explicit_inverse(model: &BDModel) -> Result<DMatrix<f64>> {
    let dist = stationary_distribution(model)?;
    let pi = interior(&dist.pi);
    let mu = interior(model.mu());
    let j = model.j();
    let mut acc = 0.0;
    let prefix: Vec<f64> = (0..j)
        .map(|k| {
            acc += 1.0 / (pi[k] * mu[k]);
            acc
        })
        .collect();
    Ok(DMatrix::from_fn(j, j, |r, c| pi[c] * prefix[r.min(c)]))
}

/// Unreduced fraction; the exact checks below never need a gcd.
#[derive(Debug, Clone)]
struct Frac {
    num: BigInt,
    den: BigInt,
}

impl Frac {
    fn int(n: BigInt) -> Self {
        Self {
            num: n,
            den: BigInt::one(),
        }
    }

    fn mul(&self, o: &Frac) -> Frac {
        Frac {
            num: &self.num * &o.num,
            den: &self.den * &o.den,
        }
    }

    fn add(&self, o: &Frac) -> Frac {
        Frac {
            num: &self.num * &o.den + &o.num * &self.den,
            den: &self.den * &o.den,
        }
    }

    fn minus_one(&self) -> Frac {
        Frac {
            num: &self.num - &self.den,
            den: self.den.clone(),
        }
    }

    fn magnitude(&self) -> f64 {
        if self.num.is_zero() {
            return 0.0;
        }
        BigRational::new_raw(self.num.abs(), self.den.abs())
            .to_f64()
            .unwrap_or(f64::INFINITY)
    }
}

/// Interior rates as integers after one common power-of-two scaling,
/// which is exact and leaves `W^{-1} W` and `W W^{-1}` unchanged.
fn integer_rates(model: &BDModel) -> (Vec<BigInt>, Vec<BigInt>, u64) {
    let (lambda, mu) = (interior(model.lambda()), interior(model.mu()));
    let as_ratio = |x: f64| BigRational::from_float(x).expect("validated rates are finite");
    let shift = lambda
        .iter()
        .chain(mu)
        .map(|&x| as_ratio(x).denom().trailing_zeros().unwrap_or(0))
        .max()
        .unwrap_or(0);
    let scale = |x: f64| {
        let r = as_ratio(x);
        let tz = r.denom().trailing_zeros().unwrap_or(0);
        r.numer() << (shift - tz)
    };
    (
        lambda.iter().map(|&x| scale(x)).collect(),
        mu.iter().map(|&x| scale(x)).collect(),
        shift,
    )
}

/// The closed-form inverse held exactly, as the factors of
/// `(W^{-1})_{ij} = weight_j * prefix_{min(i,j)}` for rates scaled to
/// integers.
///
/// Useful where `W` is so badly conditioned that no rounded inverse can
/// satisfy `W^{-1} W = I` to a fixed absolute tolerance.
#[derive(Debug, Clone)]
pub struct ExactInverse {
    lambda: Vec<BigInt>,
    mu: Vec<BigInt>,
    shift: u64,
    weight: Vec<Frac>,
    prefix: Vec<Frac>,
}

impl ExactInverse {
    /// Entry `(r, c)` of the model's `W^{-1}`, zero-based (states `r + 1`,
    /// `c + 1`).
    pub fn entry(&self, r: usize, c: usize) -> BigRational {
        let e = self.scaled_entry(r, c);
        BigRational::new(e.num << self.shift, e.den)
    }

    fn scaled_entry(&self, r: usize, c: usize) -> Frac {
        self.weight[c].mul(&self.prefix[r.min(c)])
    }
}

pub fn explicit_inverse_exact(model: &BDModel) -> ExactInverse {
    let (lambda, mu, shift) = integer_rates(model);
    let j = lambda.len();
    // weight_k = N_k / D_k with N_k = prod_{i<k} lambda_i, D_k = prod_{1<i<=k} mu_i;
    // prefix_k = P_k / (N_k M_k) with M_k = prod_{i<=k} mu_i.
    let mut weight = Vec::with_capacity(j);
    let mut prefix = Vec::with_capacity(j);
    let (mut n, mut d, mut m_prev, mut p) = (BigInt::one(), BigInt::one(), BigInt::one(), BigInt::zero());
    for k in 0..j {
        if k > 0 {
            n *= &lambda[k - 1];
            d *= &mu[k];
            p = p * &lambda[k - 1] * &mu[k];
        }
        p += &d * &m_prev;
        let m = &m_prev * &mu[k];
        weight.push(Frac {
            num: n.clone(),
            den: d.clone(),
        });
        prefix.push(Frac {
            num: p.clone(),
            den: &n * &m,
        });
        m_prev = m;
    }
    ExactInverse {
        lambda,
        mu,
        shift,
        weight,
        prefix,
    }
}

/// Max-norm residuals of the two products with the explicit inverse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InverseResidual {
    /// `max |W^{-1} W - I|`.
    pub inverse_times_w: f64,
    /// `max |W W^{-1} - I|`.
    pub w_times_inverse: f64,
}

/// Residuals of [`explicit_inverse`] against the stored `f64` matrix.
pub fn inverse_residual(model: &BDModel) -> Result<InverseResidual> {
    let inv = explicit_inverse(model)?;
    let w = build_w(model).to_dense();
    let id = DMatrix::<f64>::identity(w.nrows(), w.ncols());
    Ok(InverseResidual {
        inverse_times_w: (&inv * &w - &id).amax(),
        w_times_inverse: (&w * &inv - &id).amax(),
    })
}

/// Residuals of [`explicit_inverse_exact`] against `W` with exact entries
/// (in particular an unrounded diagonal `lambda_i + mu_i`), rounded to `f64`
/// at the end.
///
/// Away from the diagonal every entry of either product is a fixed band sum
/// times one factor of the inverse, so the maxima over all `J^2` entries
/// need only `O(J)` exact operations.
pub fn inverse_residual_exact(model: &BDModel) -> InverseResidual {
    residual_of(&explicit_inverse_exact(model))
}

fn residual_of(inv: &ExactInverse) -> InverseResidual {
    let j = inv.lambda.len();
    let (lam, mu) = (&inv.lambda, &inv.mu);
    let w = |r: usize, c: usize| -> Frac {
        Frac::int(if r == c {
            &lam[r] + &mu[r]
        } else if c == r + 1 {
            -lam[r].clone()
        } else if r == c + 1 {
            -mu[r].clone()
        } else {
            BigInt::zero()
        })
    };
    let band = |i: usize| i.saturating_sub(1)..(i + 2).min(j);
    let sum = |it: &mut dyn Iterator<Item = Frac>| {
        let first = it.next().expect("band is never empty");
        it.fold(first, |a, b| a.add(&b))
    };
    // A band sum that vanishes exactly makes its whole family vanish, so
    // the (large) factor is only formed when it matters.
    let scaled = |band_sum: Frac, factor: &dyn Fn() -> f64| {
        if band_sum.num.is_zero() {
            0.0
        } else {
            band_sum.magnitude() * factor()
        }
    };
    let largest = |it: &mut dyn Iterator<Item = Frac>| it.map(|f| f.magnitude()).fold(0.0, f64::max);
    let (weight, prefix) = (&inv.weight, &inv.prefix);

    // W^{-1} W, column c. Rows r > c see weight_l prefix_l; rows r < c see
    // prefix_r times the column sum of weight_l W_lc, largest at r = c - 1.
    let mut left = 0.0f64;
    for c in 0..j {
        let diag = sum(&mut band(c).map(|l| inv.scaled_entry(c, l).mul(&w(l, c))));
        left = left.max(diag.minus_one().magnitude());
        if c + 1 < j {
            let below = sum(&mut band(c).map(|l| weight[l].mul(&prefix[l]).mul(&w(l, c))));
            left = left.max(below.magnitude());
        }
        if c > 0 {
            let col = sum(&mut band(c).map(|l| weight[l].mul(&w(l, c))));
            left = left.max(scaled(col, &|| prefix[c - 1].magnitude()));
        }
    }

    // W W^{-1}, row r. Columns c > r see weight_c times the row sum of
    // W_rl prefix_l; columns c < r see weight_c prefix_c times the row sum.
    let mut right = 0.0f64;
    for r in 0..j {
        let diag = sum(&mut band(r).map(|l| w(r, l).mul(&inv.scaled_entry(l, r))));
        right = right.max(diag.minus_one().magnitude());
        if r + 1 < j {
            let row = sum(&mut band(r).map(|l| w(r, l).mul(&prefix[l])));
            right = right.max(scaled(row, &|| largest(&mut weight[r + 1..].iter().cloned())));
        }
        if r > 0 {
            let row = sum(&mut band(r).map(|l| w(r, l)));
            right = right.max(scaled(row, &|| largest(&mut (0..r).map(|c| weight[c].mul(&prefix[c])))));
        }
    }
    InverseResidual {
        inverse_times_w: left,
        w_times_inverse: right,
    }
}

/// Solves `W x = rhs` by Thomas elimination.
///
/// A non-positive pivot or a backward error above [`RESIDUAL_TOL`]
/// (see [`backward_error`]) is reported as [`Error::SolveFailed`].
pub fn solve_tridiagonal(w: &WMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = w.dim();
    if rhs.len() != n {
        return Err(Error::SolveFailed {
            row: 0,
            reason: format!("rhs has length {}, W has dimension {n}", rhs.len()),
        });
    }
    // For a weakly diagonally dominant M-matrix each pivot is formed as
    // |upper_i| + surplus_i, with the row surplus carried forward without
    // subtraction; `diag - sub * c` loses it once it drops below rounding.
    let m_matrix = w.upper.iter().chain(&w.lower).all(|&v| v <= 0.0)
        && w.surplus.len() == n
        && w.surplus.iter().all(|&v| v >= 0.0);
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut carried = 0.0;
    for i in 0..n {
        let sub = if i > 0 { w.lower[i - 1] } else { 0.0 };
        let pivot = if m_matrix {
            let up = if i + 1 < n { -w.upper[i] } else { 0.0 };
            let surplus = w.surplus[i] - sub * carried;
            carried = surplus / (up + surplus);
            up + surplus
        } else {
            w.diag[i] - if i > 0 { sub * c[i - 1] } else { 0.0 }
        };
        if !(pivot > 0.0) {
            return Err(Error::SolveFailed {
                row: i,
                reason: format!("non-positive pivot {pivot}"),
            });
        }
        if i + 1 < n {
            c[i] = w.upper[i] / pivot;
        }
        d[i] = (rhs[i] - if i > 0 { sub * d[i - 1] } else { 0.0 }) / pivot;
    }
    let mut x = d;
    for i in (0..n.saturating_sub(1)).rev() {
        x[i] -= c[i] * x[i + 1];
    }

    let rel = backward_error(w, &x, rhs);
    if !(rel <= RESIDUAL_TOL) {
        return Err(Error::SolveFailed {
            row: n - 1,
            reason: format!("backward error {rel:e} exceeds {RESIDUAL_TOL:e}"),
        });
    }
    Ok(x)
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Solves the five moment systems and assembles the cycle moments.
///
/// A cycle is a busy period started from state 1 followed by an
/// exponential idle period of rate `lambda_0`, whose end (the exit from 0)
/// is counted with probability `q+_0`.
pub fn solve_moments(model: &BDModel) -> Result<MomentSet> {
    let w = build_w(model);
    let v = build_v(model);
    let (lambda, mu) = (interior(model.lambda()), interior(model.mu()));
    let (qp, qm) = (interior(model.q_plus()), interior(model.q_minus()));
    let j = model.j();

    let counted: Vec<f64> = (0..j).map(|i| lambda[i] * qp[i] + mu[i] * qm[i]).collect();
    let tau1 = solve_tridiagonal(&w, &vec![1.0; j])?;
    let n1 = solve_tridiagonal(&w, &counted)?;
    let c1 = solve_tridiagonal(&w, &add(&n1, &v.mul_vec(&tau1)))?;
    let tau2 = solve_tridiagonal(&w, &tau1.iter().map(|t| 2.0 * t).collect::<Vec<_>>())?;
    let w_inv_v_n1 = solve_tridiagonal(&w, &v.mul_vec(&n1))?;
    let n2: Vec<f64> = n1.iter().zip(&w_inv_v_n1).map(|(a, b)| a + 2.0 * b).collect();

    let l0 = model.lambda()[0];
    let q0 = model.q_plus()[0];
    let idle = 1.0 / l0;
    let ex = tau1[0] + idle;
    let ey = n1[0] + q0;
    let ex2 = tau2[0] + 2.0 * tau1[0] * idle + 2.0 * idle * idle;
    let exy = c1[0] + n1[0] * idle + q0 * (tau1[0] + idle);
    let ey2 = n2[0] + 2.0 * n1[0] * q0 + q0;

    Ok(MomentSet {
        tau1,
        n1,
        c1,
        tau2,
        n2,
        ex,
        ey,
        ex2,
        exy,
        ey2,
    })
}

/// Plug-in of cycle moments into `(E[Y^2] - 2R E[XY] + R^2 E[X^2]) / E[Y]`.
pub fn renewal_reward_index(ex: f64, ey: f64, ex2: f64, exy: f64, ey2: f64) -> f64 {
    let r = ey / ex;
    (ey2 - 2.0 * r * exy + r * r * ex2) / ey
}

/// Largest `J` evaluated by [`dispersion_renewal_reward_exact`]; its cost
/// grows roughly as `J^3`.
pub const EXACT_MAX_STATES: usize = 200;

/// Renewal-reward index of dispersion: exact arithmetic up to
/// [`EXACT_MAX_STATES`] states, [`dispersion_renewal_reward_rounded`] above.
pub fn dispersion_renewal_reward(model: &BDModel) -> Result<f64> {
    if model.j() <= EXACT_MAX_STATES {
        dispersion_renewal_reward_exact(model)
    } else {
        dispersion_renewal_reward_rounded(model)
    }
}

/// Renewal-reward index of dispersion from the moment systems in `f64`.
///
/// Evaluated as `var(Y - R X) / E[Y]`: the centered busy-period moments
/// `m = E[N - R tau]` and `s = E[(N - R tau)^2]` are linear combinations of
/// the five systems, so they solve `W m = b - R 1` and
/// `W s = b + 2 (V - R I) m` with `b = lambda q+ + mu q-`. Expanding the raw
/// moments instead cancels away every digit once `E[Y]` is large.
///
/// Also checks that the cycle reward rate `E[Y] / E[X]` reproduces the
/// stationary thinned rate; a mismatch means an implementation bug and is
/// reported as [`Error::InternalIdentityViolated`].
///
/// The centered solves still lose about `eps / pi_0` relative accuracy.
pub fn dispersion_renewal_reward_rounded(model: &BDModel) -> Result<f64> {
    let w = build_w(model);
    let v = build_v(model);
    let (lambda, mu) = (interior(model.lambda()), interior(model.mu()));
    let (qp, qm) = (interior(model.q_plus()), interior(model.q_minus()));
    let j = model.j();
    let l0 = model.lambda()[0];
    let q0 = model.q_plus()[0];

    let counted: Vec<f64> = (0..j).map(|i| lambda[i] * qp[i] + mu[i] * qm[i]).collect();
    let tau1 = solve_tridiagonal(&w, &vec![1.0; j])?;
    let n1 = solve_tridiagonal(&w, &counted)?;
    let ex = tau1[0] + 1.0 / l0;
    let ey = n1[0] + q0;
    check_rate_identity(ex, ey, &rates_and_cdfs(model)?)?;
    let r = ey / ex;

    let m = solve_tridiagonal(&w, &counted.iter().map(|b| b - r).collect::<Vec<_>>())?;
    let vm = v.mul_vec(&m);
    let rhs: Vec<f64> = (0..j).map(|i| counted[i] + 2.0 * (vm[i] - r * m[i])).collect();
    let s = solve_tridiagonal(&w, &rhs)?;

    // The idle period contributes B - R X_0 with B ~ Bernoulli(q+_0) and
    // X_0 ~ Exp(lambda_0), independent of the busy period.
    let idle_mean = q0 - r / l0;
    let idle_sq = q0 - 2.0 * r * q0 / l0 + 2.0 * r * r / (l0 * l0);
    let mean = m[0] + idle_mean;
    let second = s[0] + 2.0 * m[0] * idle_mean + idle_sq;
    Ok((second - mean * mean) / ey)
}

/// `W` scaled by `2^shift` to integer entries, with its leading principal
/// minors, for fraction-free Thomas elimination.
struct IntegerW {
    upper: Vec<BigInt>,
    lower: Vec<BigInt>,
    shift: u64,
    /// `minors[k]` is the determinant of the leading `k x k` block.
    minors: Vec<BigInt>,
}

impl IntegerW {
    fn new(model: &BDModel) -> Result<Self> {
        let (lambda, mu, shift) = integer_rates(model);
        let n = lambda.len();
        let upper: Vec<BigInt> = (0..n - 1).map(|i| -&lambda[i]).collect();
        let lower: Vec<BigInt> = (1..n).map(|i| -&mu[i]).collect();
        let mut minors = vec![BigInt::one(), &lambda[0] + &mu[0]];
        for k in 1..n {
            let next = (&lambda[k] + &mu[k]) * &minors[k] - &lower[k - 1] * &upper[k - 1] * &minors[k - 1];
            if !next.is_positive() {
                return Err(Error::SolveFailed {
                    row: k,
                    reason: "non-positive leading minor".into(),
                });
            }
            minors.push(next);
        }
        Ok(Self {
            upper,
            lower,
            shift,
            minors,
        })
    }

    /// Exact solution of `W x = b / den`, returned as `(X, D)` with `x = X / D`.
    fn solve(&self, b: &[BigInt], den: &BigInt) -> (Vec<BigInt>, BigInt) {
        let n = b.len();
        // e_k = d_k * minors[k + 1], where d is the usual forward sweep.
        let mut e: Vec<BigInt> = Vec::with_capacity(n);
        e.push(&b[0] << self.shift);
        for k in 1..n {
            let next = ((&self.minors[k] * &b[k]) << self.shift) - &self.lower[k - 1] * &e[k - 1];
            e.push(next);
        }
        // x_k * det(W), integral by Cramer's rule.
        let det = &self.minors[n];
        let mut x = vec![BigInt::zero(); n];
        x[n - 1] = e[n - 1].clone();
        for k in (0..n - 1).rev() {
            let numer = &e[k] * det - &self.upper[k] * &self.minors[k] * &x[k + 1];
            x[k] = numer / &self.minors[k + 1];
        }
        (x, det * den)
    }
}

/// Exact value of an `f64`.
fn exact(x: f64) -> Frac {
    let r = BigRational::from_float(x).expect("validated inputs are finite");
    Frac {
        num: r.numer().clone(),
        den: r.denom().clone(),
    }
}

impl Frac {
    fn scale(&self, k: i64) -> Frac {
        Frac {
            num: &self.num * k,
            den: self.den.clone(),
        }
    }

    fn neg(&self) -> Frac {
        Frac {
            num: -&self.num,
            den: self.den.clone(),
        }
    }

    fn div(&self, o: &Frac) -> Frac {
        Frac {
            num: &self.num * &o.den,
            den: &self.den * &o.num,
        }
    }

    fn to_f64(&self) -> f64 {
        BigRational::new_raw(self.num.clone(), self.den.clone())
            .to_f64()
            .unwrap_or(f64::NAN)
    }
}

/// The computation of [`dispersion_renewal_reward_rounded`] carried out
/// exactly on the `f64` inputs and rounded once, so its accuracy does not degrade as `pi_0` shrinks.
///
/// Vectors are integer numerators over one shared denominator, so no gcd
/// is taken before the final rounding.
pub fn dispersion_renewal_reward_exact(model: &BDModel) -> Result<f64> {
    let w = IntegerW::new(model)?;
    let j = model.j();
    let (lambda, mu) = (interior(model.lambda()), interior(model.mu()));
    let (qp, qm) = (interior(model.q_plus()), interior(model.q_minus()));
    let up: Vec<Frac> = (0..j).map(|i| exact(lambda[i]).mul(&exact(qp[i]))).collect();
    let down: Vec<Frac> = (0..j).map(|i| exact(mu[i]).mul(&exact(qm[i]))).collect();
    // Every denominator is a power of two, so the largest is common.
    let c = up.iter().chain(&down).map(|f| f.den.clone()).max().unwrap();
    let over_c = |f: &Frac| &f.num * (&c / &f.den);
    let (up, down): (Vec<BigInt>, Vec<BigInt>) = (up.iter().map(over_c).collect(), down.iter().map(over_c).collect());
    let counted: Vec<BigInt> = up.iter().zip(&down).map(|(a, b)| a + b).collect();
    let l0 = exact(model.lambda()[0]);
    let q0 = exact(model.q_plus()[0]);
    let one = Frac::int(BigInt::one());

    let (tau1, d_tau) = w.solve(&vec![BigInt::one(); j], &BigInt::one());
    let (n1, d_n) = w.solve(&counted, &c);
    let ex = Frac {
        num: tau1[0].clone(),
        den: d_tau,
    }
    .add(&one.div(&l0));
    let ey = Frac {
        num: n1[0].clone(),
        den: d_n,
    }
    .add(&q0);
    check_rate_identity(ex.to_f64(), ey.to_f64(), &rates_and_cdfs(model)?)?;
    let r = ey.div(&ex);

    // m solves W m = counted - r.
    let rhs: Vec<BigInt> = counted.iter().map(|b| b * &r.den - &c * &r.num).collect();
    let (m, d_m) = w.solve(&rhs, &(&c * &r.den));
    // s solves W s = counted + 2 (V m - r m), over the denominator c d_m r_den.
    let rhs: Vec<BigInt> = (0..j)
        .map(|i| {
            let mut vm = BigInt::zero();
            if i + 1 < j {
                vm += &up[i] * &m[i + 1];
            }
            if i > 0 {
                vm += &down[i] * &m[i - 1];
            }
            &counted[i] * &d_m * &r.den + ((vm * &r.den - &c * &r.num * &m[i]) << 1)
        })
        .collect();
    let (s, d_s) = w.solve(&rhs, &(&c * &d_m * &r.den));

    let m0 = Frac {
        num: m[0].clone(),
        den: d_m,
    };
    let s0 = Frac {
        num: s[0].clone(),
        den: d_s,
    };
    let r_l0 = r.div(&l0);
    let idle_mean = q0.add(&r_l0.neg());
    let idle_sq = q0.add(&r_l0.mul(&q0).scale(-2)).add(&r_l0.mul(&r_l0).scale(2));
    let mean = m0.add(&idle_mean);
    let second = s0.add(&m0.mul(&idle_mean).scale(2)).add(&idle_sq);
    let d = second.add(&mean.mul(&mean).neg()).div(&ey).to_f64();
    if !d.is_finite() {
        return Err(Error::NumericOverflow { state: 0 });
    }
    Ok(d)
}

/// Literal plug-in of the five cycle moments, kept for comparison with
/// [`dispersion_renewal_reward_rounded`] on well-conditioned models.
pub fn dispersion_raw_moments(model: &BDModel) -> Result<f64> {
    let m = solve_moments(model)?;
    check_rate_identity(m.ex, m.ey, &rates_and_cdfs(model)?)?;
    Ok(renewal_reward_index(m.ex, m.ey, m.ex2, m.exy, m.ey2))
}

fn check_rate_identity(ex: f64, ey: f64, s: &StationarySummary) -> Result<()> {
    let r = ey / ex;
    if (r - s.thinned_rate).abs() > RATE_IDENTITY_TOL * s.thinned_rate {
        return Err(Error::InternalIdentityViolated {
            identity: "E[Y] / E[X] = thinned rate",
            lhs: r,
            rhs: s.thinned_rate,
        });
    }
    Ok(())
}

/// Same index assembled from the busy-period moments at state 1 with the
/// idle period folded in analytically:
/// `E[Y] D = n2_1 - 2 rate c1_1 + rate^2 tau2_1 + q+_0 (1 - 2 q+_0 + 2 pi_0 E[Y])`.
pub fn dispersion_assembled(model: &BDModel) -> Result<f64> {
    let m = solve_moments(model)?;
    let s = rates_and_cdfs(model)?;
    let rate = s.thinned_rate;
    let q0 = model.q_plus()[0];
    let pi0 = s.pi[0];
    let ey = rate / (pi0 * model.lambda()[0]);
    let numer = m.n2[0] - 2.0 * rate * m.c1[0] + rate * rate * m.tau2[0] + q0 * (1.0 - 2.0 * q0 + 2.0 * pi0 * ey);
    Ok(numer / ey)
}
