//! Numerical integration.
//!
//! Globally adaptive Gauss–Kronrod (7/15) integration on finite intervals,
//! fixed-order Gauss–Legendre rules for tensor grids, and a geometric
//! truncation schedule that decides whether an improper integral settles.

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the 7-point rule embedded at XGK[1], XGK[3], XGK[5], XGK[7].
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Stopping rule for adaptive integration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Self {
            abs,
            rel,
            max_intervals: 4000,
        }
    }

    /// Tolerance used for inner integrals of nested quadrature.
    pub const INNER: Tolerance = Tolerance::new(1e-13, 1e-9);
    /// Tolerance used for outer (or stand-alone) integrals.
    pub const OUTER: Tolerance = Tolerance::new(1e-12, 1e-8);

    pub fn with_max_intervals(mut self, max_intervals: usize) -> Self {
        self.max_intervals = max_intervals;
        self
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self::OUTER
    }
}

/// Result of an adaptive integration, converged or not.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug)]
struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    splittable: bool,
}

/// One Gauss–Kronrod panel. `Ok(None)` flags an integrand that overflowed to
/// an infinity, which the adaptive driver reads as a divergent integral.
fn kronrod15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Result<Option<(f64, f64)>> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    if fc.is_nan() {
        return Err(non_finite(center, fc));
    }
    if fc.is_infinite() {
        return Ok(None);
    }
    let mut res_g = fc * WG[3];
    let mut res_k = fc * WGK[7];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let (x1, x2) = (center - dx, center + dx);
        let (f1, f2) = (f(x1), f(x2));
        if f1.is_nan() {
            return Err(non_finite(x1, f1));
        }
        if f2.is_nan() {
            return Err(non_finite(x2, f2));
        }
        if f1.is_infinite() || f2.is_infinite() {
            return Ok(None);
        }
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    res_abs *= half.abs();
    res_asc *= half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    let floor = 50.0 * f64::EPSILON * res_abs;
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) && err < floor {
        err = floor;
    }
    Ok(Some((value, err)))
}

fn non_finite(x: f64, fx: f64) -> Error {
    Error::QuadratureFailure(format!("integrand is {fx} at x = {x}"))
}

/// Adaptive integration over `[a, b]` that reports non-convergence instead
/// of failing. An integrand that overflows to ±∞ also counts as
/// non-convergence; NaN values are errors.
pub fn integrate_raw<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<Estimate> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::QuadratureFailure(format!(
            "interval [{a}, {b}] is not finite"
        )));
    }
    if a == b {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
            intervals: 0,
            converged: true,
        });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };

    let mut cuts = vec![lo];
    let mut inner: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&c| c > lo && c < hi)
        .collect();
    inner.sort_by(|x, y| x.total_cmp(y));
    inner.dedup();
    cuts.extend(inner);
    cuts.push(hi);

    let overflow = |intervals| Estimate {
        value: sign * f64::INFINITY,
        error: f64::INFINITY,
        intervals,
        converged: false,
    };
    let mut pieces = Vec::with_capacity(64);
    for w in cuts.windows(2) {
        let Some((value, error)) = kronrod15(&mut f, w[0], w[1])? else {
            return Ok(overflow(cuts.len() - 1));
        };
        pieces.push(Piece {
            a: w[0],
            b: w[1],
            value,
            error,
            splittable: true,
        });
    }

    loop {
        let total: f64 = pieces.iter().map(|p| p.value).sum();
        let err: f64 = pieces.iter().map(|p| p.error).sum();
        let target = tol.abs.max(tol.rel * total.abs());
        if err <= target {
            return Ok(Estimate {
                value: sign * total,
                error: err,
                intervals: pieces.len(),
                converged: true,
            });
        }
        let worst = pieces
            .iter()
            .enumerate()
            .filter(|(_, p)| p.splittable)
            .max_by(|(_, p), (_, q)| p.error.total_cmp(&q.error))
            .map(|(i, _)| i);
        let Some(worst) = worst else {
            return Ok(Estimate {
                value: sign * total,
                error: err,
                intervals: pieces.len(),
                converged: false,
            });
        };
        if pieces.len() >= tol.max_intervals {
            return Ok(Estimate {
                value: sign * total,
                error: err,
                intervals: pieces.len(),
                converged: false,
            });
        }
        let p = pieces[worst];
        let mid = 0.5 * (p.a + p.b);
        if !(mid > p.a && mid < p.b)
            || (p.b - p.a) <= 64.0 * f64::EPSILON * mid.abs().max(f64::MIN_POSITIVE)
        {
            pieces[worst].splittable = false;
            continue;
        }
        let (Some((v1, e1)), Some((v2, e2))) =
            (kronrod15(&mut f, p.a, mid)?, kronrod15(&mut f, mid, p.b)?)
        else {
            return Ok(overflow(pieces.len() + 1));
        };
        pieces[worst] = Piece {
            a: p.a,
            b: mid,
            value: v1,
            error: e1,
            splittable: true,
        };
        pieces.push(Piece {
            a: mid,
            b: p.b,
            value: v2,
            error: e2,
            splittable: true,
        });
    }
}

/// Adaptive integration over `[a, b]`, with optional interior breakpoints
/// at known kinks of the integrand.
pub fn integrate<F: FnMut(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<f64> {
    let est = integrate_raw(f, a, b, breaks, tol)?;
    if est.converged {
        Ok(est.value)
    } else {
        Err(Error::QuadratureFailure(format!(
            "no convergence on [{a}, {b}]: estimate {} with error {} after {} intervals",
            est.value, est.error, est.intervals
        )))
    }
}

/// Like [`integrate`], but an integrand that itself fails (for example an
/// inner integral of a nested rule) aborts the whole computation.
pub fn integrate_fallible<F: FnMut(f64) -> Result<f64>>(
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<f64> {
    let mut failure = None;
    let out = integrate(
        |x| match f(x) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        a,
        b,
        breaks,
        tol,
    );
    match failure {
        Some(e) => Err(e),
        None => out,
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "Gauss-Legendre order must be positive");
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    if order % 2 == 1 {
        nodes[order / 2] = 0.0;
    }
    (nodes, weights)
}

/// A Gauss–Legendre rule mapped onto `[a, b]`.
pub fn mapped_rule<'a>(
    nodes: &'a [f64],
    weights: &'a [f64],
    a: f64,
    b: f64,
) -> impl Iterator<Item = (f64, f64)> + 'a {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    nodes
        .iter()
        .zip(weights)
        .map(move |(x, w)| (c + h * x, h * w))
}

/// Verdict of a geometric truncation sequence.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum TailOutcome {
    Finite {
        value: f64,
        truncation: f64,
    },
    /// The increments between successive truncation points never settled;
    /// they are reported as evidence.
    Divergent {
        increments: Vec<f64>,
    },
}

impl TailOutcome {
    pub fn is_finite(&self) -> bool {
        matches!(self, TailOutcome::Finite { .. })
    }
}

/// Truncation points `T, 2T, 4T, ...` for improper integrals on `[0, ∞)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailSchedule {
    pub initial: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Consecutive doublings without a shrinking increment before the
    /// integral is declared divergent.
    pub stall_doublings: usize,
    pub max_doublings: usize,
}

impl TailSchedule {
    pub fn new(initial: f64) -> Self {
        Self {
            initial,
            rel_tol: 1e-8,
            abs_tol: 1e-14,
            stall_doublings: 6,
            max_doublings: 60,
        }
    }

    /// Runs the schedule. `piece(lo, hi)` must return the increment of the
    /// integral when the truncation point moves from `lo` to `hi`; the first
    /// call is `piece(0, T)`.
    pub fn run<F: FnMut(f64, f64) -> Result<f64>>(&self, mut piece: F) -> Result<TailOutcome> {
        let mut upper = self.initial;
        let mut total = piece(0.0, upper)?;
        let mut increments = vec![total];
        if !total.is_finite() {
            return Ok(TailOutcome::Divergent { increments });
        }
        let mut stalled = 0;
        for _ in 0..self.max_doublings {
            let next = 2.0 * upper;
            let inc = match piece(upper, next) {
                Ok(v) => v,
                Err(Error::QuadratureFailure(_)) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            let prev = *increments.last().unwrap_or(&0.0);
            increments.push(inc);
            if !inc.is_finite() {
                return Ok(TailOutcome::Divergent {
                    increments: last_n(increments, 8),
                });
            }
            total += inc;
            upper = next;
            if inc.abs() <= self.rel_tol * total.abs() + self.abs_tol {
                return Ok(TailOutcome::Finite {
                    value: total,
                    truncation: upper,
                });
            }
            if inc.abs() >= prev.abs() {
                stalled += 1;
            } else {
                stalled = 0;
            }
            if stalled >= self.stall_doublings {
                return Ok(TailOutcome::Divergent {
                    increments: last_n(increments, 8),
                });
            }
        }
        Ok(TailOutcome::Divergent {
            increments: last_n(increments, 8),
        })
    }
}

fn last_n(v: Vec<f64>, n: usize) -> Vec<f64> {
    let skip = v.len().saturating_sub(n);
    v.into_iter().skip(skip).collect()
}
