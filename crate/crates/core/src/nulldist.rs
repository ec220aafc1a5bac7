//! The degenerate-regime limit law `m + Σ λ_i (ξ_i² − 1)`.
//!
//! The `λ_i` are eigenvalues of the integral operator with kernel
//!
//! ```text
//! J((x,r),(x',r')) = r r' K̃(x,x') − r ∫_0^{x'} K̃(x,t) dΛ(t)
//!                  − r' ∫_0^x K̃(s,x') dΛ(s) + ∫_0^x ∫_0^{x'} K̃(s,t) dΛ(s) dΛ(t),
//! K̃(s,t) = K'(s,t) / ((1 − G(s−))(1 − G(t−)))
//! ```
//!
//! acting on `L²` of the law of `(X, Δ)`. They are approximated by the
//! Nyström method on nodes drawn from that law.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{map_indexed, try_map_indexed, Execution};
use crate::kernels::Kernel;
use crate::models::{draw_pair, expect_df_checked, expect_df_with, JointModel};
use crate::operators::TransformedKernel;
use crate::quadrature::{gauss_legendre, integrate_fallible, mapped_rule, Tolerance};

/// A point of the observation space: time and event indicator.
pub type Point = (f64, bool);

/// The kernel `J` of the degenerate limit.
#[derive(Clone, Debug)]
pub struct JKernel {
    joint: JointModel,
    kprime: TransformedKernel,
}

impl JKernel {
    pub fn new(joint: &JointModel, kprime: &TransformedKernel) -> Result<Self> {
        if !joint.is_continuous() {
            return Err(Error::ModelNotContinuous(joint.descriptor()));
        }
        if kprime.model().descriptor() != joint.survival.descriptor() {
            return Err(Error::InvalidParameter(format!(
                "K′ was built for {}, not {}",
                kprime.model().descriptor(),
                joint.survival.descriptor()
            )));
        }
        Ok(JKernel {
            joint: joint.clone(),
            kprime: kprime.clone(),
        })
    }

    fn inv_g(&self, x: f64) -> f64 {
        1.0 / self.joint.censoring.survivor_left(x)
    }

    fn hazard(&self, x: f64) -> Result<f64> {
        self.joint
            .survival
            .hazard(x)
            .ok_or_else(|| Error::ModelNotContinuous(self.joint.survival.descriptor()))
    }

    /// `K̃(s, t)`.
    pub fn k_tilde(&self, s: f64, t: f64) -> Result<f64> {
        Ok(self.kprime.eval(s, t)? * self.inv_g(s) * self.inv_g(t))
    }

    /// `∫_0^upto K̃(x, t) dΛ(t)`.
    fn single(&self, x: f64, upto: f64, tol: Tolerance) -> Result<f64> {
        integrate_fallible(
            |t| Ok(self.k_tilde(x, t)? * self.hazard(t)?),
            0.0,
            upto,
            &[x],
            tol,
        )
    }

    pub fn eval(&self, p: Point, q: Point) -> Result<f64> {
        let ((x, r), (y, s)) = (p, q);
        let mut out = 0.0;
        if r && s {
            out += self.k_tilde(x, y)?;
        }
        if r {
            out -= self.single(x, y, Tolerance::OUTER)?;
        }
        if s {
            out -= self.single(y, x, Tolerance::OUTER)?;
        }
        let both = integrate_fallible(
            |u| Ok(self.single(u, y, Tolerance::INNER)? * self.hazard(u)?),
            0.0,
            x,
            &[y],
            Tolerance::OUTER,
        )?;
        Ok(out + both)
    }

    /// `J(p_i, p_j)` for all node pairs, with every `dΛ` integral taken by a
    /// Gauss–Legendre rule on the cells between consecutive sorted nodes, so
    /// the kinks of `K̃` along the nodes fall on cell edges.
    pub fn gram(&self, nodes: &[Point], exec: Execution) -> Result<DMatrix<f64>> {
        let m = nodes.len();
        if m == 0 {
            return Ok(DMatrix::zeros(0, 0));
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| nodes[a].0.total_cmp(&nodes[b].0));
        let xs: Vec<f64> = order.iter().map(|&i| nodes[i].0).collect();

        // cells [e_k, e_{k+1}], with wide gaps subdivided
        let max_width = xs[m - 1] / 256.0;
        let mut edges = vec![0.0];
        let mut node_edge = Vec::with_capacity(m);
        for &x in &xs {
            let last = *edges.last().unwrap();
            if x > last {
                let pieces = ((x - last) / max_width).ceil().max(1.0) as usize;
                for k in 1..pieces {
                    edges.push(last + (x - last) * k as f64 / pieces as f64);
                }
                edges.push(x);
            }
            node_edge.push(edges.len() - 1);
        }
        let cells = edges.len() - 1;
        let (gn, gw) = gauss_legendre(3);
        let mut pts = Vec::with_capacity(cells * 3);
        let mut wts = Vec::with_capacity(cells * 3);
        for c in 0..cells {
            for (t, w) in mapped_rule(&gn, &gw, edges[c], edges[c + 1]) {
                pts.push(t);
                wts.push(w * self.hazard(t)? * self.inv_g(t));
            }
        }
        let q = pts.len() / cells;
        let kp = &self.kprime;

        // single[i][c] = ∫_{cell c} K̃(x_i, t) dΛ(t), prefix-summed over c
        let single = try_map_indexed(exec, m, |i| {
            let xi = xs[i];
            let gi = self.inv_g(xi);
            let mut row = Vec::with_capacity(cells + 1);
            let mut acc = 0.0;
            row.push(0.0);
            for c in 0..cells {
                for a in c * q..(c + 1) * q {
                    acc += wts[a] * kp.eval(xi, pts[a])?;
                }
                row.push(acc * gi);
            }
            Ok(row)
        })?;

        // block[c][d] = ∫∫_{cell c × cell d} K̃ dΛ dΛ, lower triangle
        let block = try_map_indexed(exec, cells, |c| {
            let mut row = Vec::with_capacity(c + 1);
            for d in 0..=c {
                let mut acc = 0.0;
                for a in c * q..(c + 1) * q {
                    let mut inner = 0.0;
                    for b in d * q..(d + 1) * q {
                        inner += wts[b] * kp.eval(pts[a], pts[b])?;
                    }
                    acc += wts[a] * inner;
                }
                row.push(acc);
            }
            Ok(row)
        })?;
        // two-dimensional prefix sums, kept only at node edges
        let mut prefix = vec![0.0; cells + 1];
        let mut at_edge = vec![Vec::new(); cells + 1];
        for (i, &e) in node_edge.iter().enumerate() {
            at_edge[e].push(i);
        }
        let mut double = vec![vec![0.0; m]; m];
        for c in 0..cells {
            // prefix[d+1] becomes Σ_{c' ≤ c, d' ≤ d} block[c'][d']
            let mut run = 0.0;
            for d in 0..cells {
                let v = if d <= c { block[c][d] } else { block[d][c] };
                run += v;
                prefix[d + 1] += run;
            }
            for &i in &at_edge[c + 1] {
                for j in 0..m {
                    double[i][j] = prefix[node_edge[j]];
                }
            }
        }

        let events: Vec<bool> = order.iter().map(|&i| nodes[i].1).collect();
        let sorted = try_map_indexed(exec, m, |i| {
            let (xi, ri) = (xs[i], events[i]);
            let mut row = Vec::with_capacity(m);
            for j in 0..m {
                let (xj, rj) = (xs[j], events[j]);
                let mut v = double[i][j];
                if ri && rj {
                    v += self.k_tilde(xi, xj)?;
                }
                if ri {
                    v -= single[i][node_edge[j]];
                }
                if rj {
                    v -= single[j][node_edge[i]];
                }
                row.push(v);
            }
            Ok(row)
        })?;
        let mut gram = DMatrix::zeros(m, m);
        for (a, &i) in order.iter().enumerate() {
            for (b, &j) in order.iter().enumerate() {
                gram[(i, j)] = sorted[a][b];
            }
        }
        Ok(gram)
    }
}

/// `∫_0^τ K'(x,x) / (1 − G(x−)) dF(x)`.
pub fn asymptotic_mean(joint: &JointModel, kprime: &TransformedKernel) -> Result<f64> {
    let cens = &joint.censoring;
    expect_df_checked(
        &*joint.survival,
        |x| {
            kprime
                .eval(x, x)
                .map_or(f64::NAN, |k| k / cens.survivor_left(x))
        },
        joint.tau(),
        "asymptotic mean",
    )
}

/// `2 ∫_0^τ ∫_0^τ K'(x,y)² / ((1 − G(x−))(1 − G(y−))) dF(x) dF(y)`.
pub fn asymptotic_variance(joint: &JointModel, kprime: &TransformedKernel) -> Result<f64> {
    let f = &*joint.survival;
    let cens = &joint.censoring;
    let tau = joint.tau();
    let half = expect_df_checked(
        f,
        |x| {
            let inner = expect_df_with(
                f,
                |y| {
                    kprime
                        .eval(x, y)
                        .map_or(f64::NAN, |k| k * k / cens.survivor_left(y))
                },
                0.0,
                tau,
                &[x],
                Tolerance::INNER,
            );
            inner.map_or(f64::NAN, |v| v / cens.survivor_left(x))
        },
        tau,
        "asymptotic variance",
    )?;
    Ok(2.0 * half)
}

/// Nyström settings for [`eigenvalues`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Nystrom {
    pub truncation: usize,
    pub nodes: usize,
    pub seed: u64,
}

impl Default for Nystrom {
    fn default() -> Self {
        Nystrom {
            truncation: 100,
            nodes: 2000,
            seed: 7,
        }
    }
}

/// Draws `count` points from the law of `(X, Δ)`.
pub fn draw_nodes(joint: &JointModel, count: usize, seed: u64) -> Result<Vec<Point>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| draw_pair(joint, &mut rng).map(|o| (o.time, o.event)))
        .collect()
}

/// The `truncation` largest-magnitude eigenvalues of the Nyström matrix
/// `J(p_k, p_l) / m`, signed, sorted by decreasing magnitude.
pub fn eigenvalues(
    joint: &JointModel,
    kprime: &TransformedKernel,
    settings: Nystrom,
) -> Result<Vec<f64>> {
    eigenvalues_with(joint, kprime, settings, Execution::default())
}

pub fn eigenvalues_with(
    joint: &JointModel,
    kprime: &TransformedKernel,
    settings: Nystrom,
    exec: Execution,
) -> Result<Vec<f64>> {
    if settings.nodes == 0 || settings.truncation == 0 {
        return Err(Error::InvalidParameter(
            "node count and truncation must be positive".into(),
        ));
    }
    let j = JKernel::new(joint, kprime)?;
    let nodes = draw_nodes(joint, settings.nodes, settings.seed)?;
    let mut gram = j.gram(&nodes, exec)?;
    gram /= settings.nodes as f64;
    let mut values: Vec<f64> = gram.symmetric_eigenvalues().iter().copied().collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonConvergedEigensolve);
    }
    values.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    values.truncate(settings.truncation);
    Ok(values)
}

/// `m + Σ λ_i (ξ_i² − 1)` with a truncated spectrum.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitDistribution {
    #[serde(rename = "mean")]
    pub mean_offset: f64,
    pub variance_closed: f64,
    pub variance_spectral: f64,
    pub eigenvalues: Vec<f64>,
}

impl LimitDistribution {
    /// A limit law from a given spectrum; the closed-form variance is taken
    /// to be the spectral one.
    pub fn from_spectrum(mean_offset: f64, eigenvalues: Vec<f64>) -> Self {
        let variance_spectral = spectral_variance(&eigenvalues);
        LimitDistribution {
            mean_offset,
            variance_closed: variance_spectral,
            variance_spectral,
            eigenvalues,
        }
    }

    /// Mean, closed-form variance and Nyström spectrum of the V-statistic
    /// limit for `K'` under `joint`.
    pub fn for_vstat(
        joint: &JointModel,
        kprime: &TransformedKernel,
        settings: Nystrom,
    ) -> Result<Self> {
        let mean_offset = asymptotic_mean(joint, kprime)?;
        let variance_closed = asymptotic_variance(joint, kprime)?;
        let eigenvalues = eigenvalues(joint, kprime, settings)?;
        Ok(LimitDistribution {
            mean_offset,
            variance_closed,
            variance_spectral: spectral_variance(&eigenvalues),
            eigenvalues,
        })
    }
}

/// `2 Σ λ_i²`.
pub fn spectral_variance(eigenvalues: &[f64]) -> f64 {
    2.0 * eigenvalues.iter().map(|l| l * l).sum::<f64>()
}

const CHUNK: usize = 4096;

/// `draws` independent copies of `m + Σ λ_i (ξ_i² − 1)`. Chunk `c` of the
/// output uses stream `c` of the seeded generator.
pub fn sample_limit(dist: &LimitDistribution, draws: usize, seed: u64) -> Vec<f64> {
    sample_limit_with(dist, draws, seed, Execution::default())
}

pub fn sample_limit_with(
    dist: &LimitDistribution,
    draws: usize,
    seed: u64,
    exec: Execution,
) -> Vec<f64> {
    let chunks = draws.div_ceil(CHUNK);
    map_indexed(exec, chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let len = CHUNK.min(draws - c * CHUNK);
        (0..len)
            .map(|_| {
                let mut v = dist.mean_offset;
                for &l in &dist.eigenvalues {
                    let xi: f64 = StandardNormal.sample(&mut rng);
                    v += l * (xi * xi - 1.0);
                }
                v
            })
            .collect::<Vec<f64>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuantileEstimate {
    pub p: f64,
    pub value: f64,
    pub draws: usize,
}

/// Monte Carlo `p`-quantile of the limit law.
pub fn quantile(
    dist: &LimitDistribution,
    p: f64,
    draws: usize,
    seed: u64,
) -> Result<QuantileEstimate> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "quantile level must lie in (0, 1), got {p}"
        )));
    }
    if draws == 0 {
        return Err(Error::InvalidParameter(
            "at least one draw is needed".into(),
        ));
    }
    let mut sample = sample_limit(dist, draws, seed);
    sample.sort_by(f64::total_cmp);
    let idx = ((p * draws as f64).ceil() as usize).clamp(1, draws) - 1;
    Ok(QuantileEstimate {
        p,
        value: sample[idx],
        draws,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailProbability {
    pub p_value: f64,
    /// Binomial standard error of `p_value`.
    pub standard_error: f64,
    pub draws: usize,
}

/// Monte Carlo `P(limit ≥ statistic)`, with the usual `+1` correction.
pub fn upper_tail(
    dist: &LimitDistribution,
    statistic: f64,
    draws: usize,
    seed: u64,
) -> Result<TailProbability> {
    if draws == 0 {
        return Err(Error::InvalidParameter(
            "at least one draw is needed".into(),
        ));
    }
    let exceed = sample_limit(dist, draws, seed)
        .into_iter()
        .filter(|&v| v >= statistic)
        .count();
    let p = (exceed as f64 + 1.0) / (draws as f64 + 1.0);
    Ok(TailProbability {
        p_value: p,
        standard_error: (p * (1.0 - p) / draws as f64).sqrt(),
        draws,
    })
}

/// Turns the V-statistic limit into the U-statistic limit: subtracts
/// `∫ K(x,x) / (1 − G(x−)) dF` from the mean and rescales by `1 / F(τ)²`.
pub fn ustat_limit_adjust(
    dist: &LimitDistribution,
    joint: &JointModel,
    kernel: &Kernel,
) -> Result<LimitDistribution> {
    let cens = &joint.censoring;
    let shift = expect_df_checked(
        &*joint.survival,
        |x| kernel.eval(x, x) / cens.survivor_left(x),
        joint.tau(),
        "diagonal limit",
    )?;
    let f_tau = joint.mass_at_tau();
    let scale = 1.0 / (f_tau * f_tau);
    Ok(LimitDistribution {
        mean_offset: (dist.mean_offset - shift) * scale,
        variance_closed: dist.variance_closed * scale * scale,
        variance_spectral: dist.variance_spectral * scale * scale,
        eigenvalues: dist.eigenvalues.iter().map(|l| l * scale).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{exponential_model, koziol_green};
    use crate::operators::kprime;
    use rand::Rng;

    fn unit_kprime_setting() -> (JointModel, TransformedKernel) {
        let base = exponential_model(1.0).unwrap();
        let joint = koziol_green(base.clone(), 0.0).unwrap();
        // K = (x − 1)(y − 1) under exp(1) has K' ≡ 1
        let kp = kprime(base, &Kernel::product(1.0)).unwrap();
        (joint, kp)
    }

    #[test]
    fn j_factorises_for_constant_kprime() {
        let (joint, kp) = unit_kprime_setting();
        let j = JKernel::new(&joint, &kp).unwrap();
        assert!(j.eval((1.0, true), (2.0, false)).unwrap().abs() < 1e-9);
        assert!((j.eval((0.5, false), (1.0, false)).unwrap() - 0.5).abs() < 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let p = (rng.random::<f64>() * 3.0, rng.random::<bool>());
            let q = (rng.random::<f64>() * 3.0, rng.random::<bool>());
            let expect = (f64::from(u8::from(p.1)) - p.0) * (f64::from(u8::from(q.1)) - q.0);
            assert!((j.eval(p, q).unwrap() - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn j_is_symmetric() {
        let base = exponential_model(1.0).unwrap();
        let joint = koziol_green(base.clone(), 0.5).unwrap();
        let kp = kprime(base, &Kernel::ou()).unwrap();
        let j = JKernel::new(&joint, &kp).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let p = (rng.random::<f64>() * 3.0, rng.random::<bool>());
            let q = (rng.random::<f64>() * 3.0, rng.random::<bool>());
            let (a, b) = (j.eval(p, q).unwrap(), j.eval(q, p).unwrap());
            assert!((a - b).abs() < 1e-8 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn gram_matches_pointwise_kernel() {
        let base = exponential_model(1.0).unwrap();
        let joint = koziol_green(base.clone(), 0.5).unwrap();
        for k in [Kernel::ou(), Kernel::cvm(base.clone()).unwrap()] {
            let kp = kprime(base.clone(), &k).unwrap();
            let j = JKernel::new(&joint, &kp).unwrap();
            let nodes = draw_nodes(&joint, 60, 5).unwrap();
            let g = j.gram(&nodes, Execution::Sequential).unwrap();
            for a in (0..60).step_by(7) {
                for b in (0..60).step_by(5) {
                    let exact = j.eval(nodes[a], nodes[b]).unwrap();
                    assert!(
                        (g[(a, b)] - exact).abs() < 1e-4 * exact.abs().max(1.0),
                        "{k:?} {a} {b}: {} vs {exact}",
                        g[(a, b)]
                    );
                }
            }
            let par = j.gram(&nodes, Execution::Parallel).unwrap();
            assert_eq!(g, par);
        }
    }

    #[test]
    fn closed_form_means_and_variances() {
        let base = exponential_model(1.0).unwrap();
        let g = 0.5;
        let joint = koziol_green(base.clone(), g).unwrap();
        let cvm = kprime(base.clone(), &Kernel::cvm(base.clone()).unwrap()).unwrap();
        let ou = kprime(base.clone(), &Kernel::ou()).unwrap();
        let prod = kprime(base.clone(), &Kernel::product(1.0)).unwrap();
        let m = asymptotic_mean(&joint, &cvm).unwrap();
        assert!((m - 1.0 / (3.0 * (2.0 - g))).abs() < 1e-9, "{m}");
        let v = asymptotic_variance(&joint, &cvm).unwrap();
        assert!(
            (v - 2.0 / (9.0 * (5.0 - g) * (2.0 - g))).abs() < 1e-9,
            "{v}"
        );
        let m = asymptotic_mean(&joint, &ou).unwrap();
        assert!((m - 1.0 / (2.0 * (1.0 - g))).abs() < 1e-9, "{m}");
        let m = asymptotic_mean(&joint, &prod).unwrap();
        assert!((m - 2.0).abs() < 1e-9, "{m}");
        for g in [0.0, 0.25, 0.6] {
            let joint = koziol_green(base.clone(), g).unwrap();
            let v = asymptotic_variance(&joint, &ou).unwrap();
            let expect = (5.0 - 4.0 * g + g * g) / (2.0 * (g - 3.0f64).powi(3) * (g - 1.0));
            assert!((v - expect).abs() < 1e-8, "γ={g}: {v} vs {expect}");
        }
        let zero = kprime(base.clone(), &Kernel::Constant(2.0)).unwrap();
        assert_eq!(asymptotic_variance(&joint, &zero).unwrap(), 0.0);
    }

    #[test]
    fn divergent_mean_is_reported() {
        let base = exponential_model(1.0).unwrap();
        let joint = koziol_green(base.clone(), 1.5).unwrap();
        let ou = kprime(base, &Kernel::ou()).unwrap();
        assert!(matches!(
            asymptotic_mean(&joint, &ou),
            Err(Error::DivergentIntegral { .. })
        ));
    }

    #[test]
    fn zero_kprime_has_zero_spectrum() {
        let base = exponential_model(1.0).unwrap();
        let joint = koziol_green(base.clone(), 0.5).unwrap();
        let zero = kprime(base, &Kernel::Constant(1.0)).unwrap();
        let settings = Nystrom {
            truncation: 10,
            nodes: 50,
            seed: 1,
        };
        let ev = eigenvalues(&joint, &zero, settings).unwrap();
        assert_eq!(ev.len(), 10);
        assert!(ev.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn small_nystrom_spectrum_is_sane() {
        let base = exponential_model(1.0).unwrap();
        let joint = koziol_green(base.clone(), 0.0).unwrap();
        let ou = kprime(base, &Kernel::ou()).unwrap();
        let mut last = 0.0;
        for t in [5, 20, 100] {
            let s = Nystrom {
                truncation: t,
                nodes: 400,
                seed: 2,
            };
            let ev = eigenvalues(&joint, &ou, s).unwrap();
            let mass = spectral_variance(&ev);
            assert!(mass >= last);
            last = mass;
        }
        assert!(last < 5.0 / 54.0 * 1.1, "{last}");
        assert!(last > 5.0 / 54.0 * 0.7, "{last}");
    }

    #[test]
    fn sampler_moments() {
        let d = LimitDistribution::from_spectrum(0.3, vec![0.4, -0.2, 0.1]);
        let draws = sample_limit(&d, 100_000, 9);
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 0.3).abs() < 4.0 * (var / n).sqrt());
        let expect = spectral_variance(&d.eigenvalues);
        assert!((var / expect - 1.0).abs() < 0.05, "{var} vs {expect}");
        let seq = sample_limit_with(&d, 10_000, 9, Execution::Sequential);
        assert_eq!(seq, sample_limit_with(&d, 10_000, 9, Execution::Parallel));
    }

    #[test]
    fn quantiles() {
        let flat = LimitDistribution::from_spectrum(1.25, vec![0.0; 4]);
        assert!(sample_limit(&flat, 100, 1).iter().all(|&v| v == 1.25));
        for p in [0.01, 0.5, 0.99] {
            assert_eq!(quantile(&flat, p, 1000, 2).unwrap().value, 1.25);
        }
        let sym = LimitDistribution::from_spectrum(0.0, vec![0.7, -0.7]);
        let med = quantile(&sym, 0.5, 100_000, 3).unwrap();
        assert!(med.value.abs() < 0.02, "{}", med.value);
        assert_eq!(med.draws, 100_000);
        let d = LimitDistribution::from_spectrum(0.2, vec![0.5, 0.1, -0.05]);
        assert!(
            quantile(&d, 0.99, 20_000, 4).unwrap().value
                >= quantile(&d, 0.95, 20_000, 4).unwrap().value
        );
        assert!(quantile(&d, 1.0, 10, 4).is_err());
    }

    #[test]
    fn ustat_adjustment() {
        let base = exponential_model(1.0).unwrap();
        let joint = koziol_green(base.clone(), 0.5).unwrap();
        let d = LimitDistribution::from_spectrum(1.0, vec![0.3, 0.2]);
        let adj = ustat_limit_adjust(&d, &joint, &Kernel::ou()).unwrap();
        assert!((adj.mean_offset - (1.0 - 2.0)).abs() < 1e-9);
        assert_eq!(adj.eigenvalues, d.eigenvalues);
        // K(x,x) = (x−1)² for the centred product kernel, so use a kernel
        // vanishing on the diagonal
        let k = Kernel::custom("offdiag", Default::default(), |x, y| (x - y).powi(2));
        let same = ustat_limit_adjust(&d, &joint, &k).unwrap();
        assert_eq!(same, d);
    }
}
