//! Loss systems with random resource requirements: each admitted session
//! holds one of `N` servers plus a random number of the `R` resources.

use std::collections::BTreeMap;

use statrs::function::gamma::ln_gamma;

use crate::demand::ResourcePmf;
use crate::error::{Error, Result};
use crate::numerics::KahanSum;

/// Truncated n-fold self-convolutions `p^(n)_r`, `n <= N`, `r <= R`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionTable {
    rows: Vec<Vec<f64>>,
}

impl ConvolutionTable {
    pub fn get(&self, n: usize, r: usize) -> f64 {
        self.rows[n][r]
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.rows[n]
    }

    pub fn servers(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn resources(&self) -> usize {
        self.rows[0].len() - 1
    }

    pub fn row_sum(&self, n: usize) -> f64 {
        self.rows[n].iter().copied().collect::<KahanSum>().total()
    }
}

pub fn convolve(pmf: &ResourcePmf, n: usize, r: usize) -> ConvolutionTable {
    let p = pmf.probs();
    let mut rows = Vec::with_capacity(n + 1);
    let mut first = vec![0.0; r + 1];
    first[0] = 1.0;
    rows.push(first);
    for k in 1..=n {
        let prev: &Vec<f64> = &rows[k - 1];
        let mut next = vec![0.0; r + 1];
        for (j, &pj) in p.iter().enumerate().take(r + 1) {
            if pj == 0.0 {
                continue;
            }
            for (slot, v) in next[j..].iter_mut().zip(prev) {
                *slot += pj * v;
            }
        }
        rows.push(next);
    }
    ConvolutionTable { rows }
}

/// `P(demand > k)` including infeasible mass, for `k = 0..=R`.
fn tails(pmf: &ResourcePmf, r: usize) -> Vec<f64> {
    let p = pmf.probs();
    let mut out = vec![0.0; r + 1];
    let mut acc = pmf.infeasible() + p.iter().skip(r + 1).sum::<f64>();
    for k in (0..=r).rev() {
        out[k] = acc;
        acc += pmf.get(k);
    }
    out
}

/// Stationary law of `(n, r)` in a single-flow system with offered load
/// `rho`, as `prob[n][r]`.
struct StateLaw {
    prob: Vec<Vec<f64>>,
    q0: f64,
}

fn state_law(rho: f64, table: &ConvolutionTable) -> StateLaw {
    let n_max = table.servers();
    let ln_rho = rho.ln();
    let log_w: Vec<f64> = (0..=n_max)
        .map(|n| {
            if n == 0 {
                0.0
            } else if rho <= 0.0 {
                f64::NEG_INFINITY
            } else {
                n as f64 * ln_rho - ln_gamma(n as f64 + 1.0)
            }
        })
        .collect();
    let sums: Vec<f64> = (0..=n_max).map(|n| table.row_sum(n)).collect();
    let scale = log_w
        .iter()
        .zip(&sums)
        .filter(|(_, s)| **s > 0.0)
        .map(|(w, s)| w + s.ln())
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_w.iter().map(|w| (w - scale).exp()).collect();
    let z = weights
        .iter()
        .zip(&sums)
        .map(|(w, s)| w * s)
        .collect::<KahanSum>()
        .total();
    let prob: Vec<Vec<f64>> = weights
        .iter()
        .enumerate()
        .map(|(n, w)| {
            let w = w / z;
            table.row(n).iter().map(|p| w * p).collect()
        })
        .collect();
    let q0 = prob[0][0];
    StateLaw { prob, q0 }
}

impl StateLaw {
    /// Probability that an arrival with demand law `tail` is rejected.
    fn blocking(&self, tail: &[f64]) -> f64 {
        let n_max = self.prob.len() - 1;
        let mut acc = KahanSum::default();
        for (n, row) in self.prob.iter().enumerate() {
            if n == n_max {
                row.iter().for_each(|v| acc.add(*v));
            } else {
                let r_max = row.len() - 1;
                for (r, v) in row.iter().enumerate() {
                    acc.add(v * tail[r_max - r]);
                }
            }
        }
        acc.total().clamp(0.0, 1.0)
    }

    fn mean_sessions(&self) -> f64 {
        self.prob
            .iter()
            .enumerate()
            .map(|(n, row)| n as f64 * row.iter().sum::<f64>())
            .collect::<KahanSum>()
            .total()
    }

    fn mean_resources(&self) -> f64 {
        self.prob
            .iter()
            .flat_map(|row| row.iter().enumerate().map(|(r, v)| r as f64 * v))
            .collect::<KahanSum>()
            .total()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleClassSolution {
    pub n_bar: f64,
    pub q0: f64,
    pub pi_n: f64,
    pub pi_s: f64,
    pub r_bar: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Single-flow system whose sessions also see state-change events at rate
/// `nu` (release and re-request resources). The events are represented as
/// a secondary arrival flow of intensity `N_bar * nu`, making the offered
/// load depend on its own solution; the fixed point is found by secant
/// steps with plain substitution as fallback.
#[allow(clippy::too_many_arguments)]
pub fn solve_single_class(
    lambda: f64,
    mu: f64,
    nu: f64,
    pmf: &ResourcePmf,
    n: usize,
    r: usize,
    tol: f64,
    max_iter: usize,
) -> Result<SingleClassSolution> {
    let table = convolve(pmf, n, r);
    solve_single_class_with(lambda, mu, nu, pmf, &table, tol, max_iter)
}

pub fn solve_single_class_with(
    lambda: f64,
    mu: f64,
    nu: f64,
    pmf: &ResourcePmf,
    table: &ConvolutionTable,
    tol: f64,
    max_iter: usize,
) -> Result<SingleClassSolution> {
    if !(lambda >= 0.0 && mu > 0.0 && nu >= 0.0) {
        return Err(Error::Domain(format!(
            "rates must be nonnegative with mu > 0 (lambda={lambda}, mu={mu}, nu={nu})"
        )));
    }
    let n_max = table.servers() as f64;
    let law = |n_bar: f64| state_law((lambda + n_bar * nu) / (mu + nu), table);
    let g = |n_bar: f64| law(n_bar).mean_sessions();

    let mut iterations = 0;
    if nu == 0.0 {
        let st = law(0.0);
        return Ok(finish(lambda, nu, pmf, table, st.mean_sessions(), st, 0, 0.0));
    }
    let (x, residual) = {
        let mut x0 = 0.0;
        let mut h0 = g(x0) - x0;
        let mut x1 = x0 + h0;
        let mut h1;
        loop {
            iterations += 1;
            h1 = g(x1) - x1;
            if h1.abs() < tol {
                break;
            }
            if iterations >= max_iter {
                return Err(Error::NonConvergence {
                    stage: "mean sessions at the mmWave BS".into(),
                    iterations,
                    residual: h1.abs(),
                });
            }
            let slope = (h1 - h0) / (x1 - x0);
            let mut x2 = x1 - h1 / slope;
            if !x2.is_finite() || !(0.0..=n_max).contains(&x2) || slope == 0.0 {
                x2 = x1 + h1;
            }
            x0 = x1;
            h0 = h1;
            x1 = x2;
        }
        (x1, h1.abs())
    };
    let x = x.clamp(0.0, n_max);
    Ok(finish(lambda, nu, pmf, table, x, law(x), iterations, residual))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    lambda: f64,
    nu: f64,
    pmf: &ResourcePmf,
    table: &ConvolutionTable,
    x: f64,
    st: StateLaw,
    iterations: usize,
    residual: f64,
) -> SingleClassSolution {
    let pi_n = st.blocking(&tails(pmf, table.resources()));
    let pi_s = if lambda > 0.0 && pi_n < 1.0 {
        x * nu * pi_n / (lambda * (1.0 - pi_n))
    } else {
        0.0
    };
    SingleClassSolution {
        n_bar: x,
        q0: st.q0,
        pi_n,
        pi_s,
        r_bar: st.mean_resources(),
        iterations,
        residual,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoClassSolution {
    pub q0: f64,
    pub n1_bar: f64,
    pub n2_bar: f64,
    pub pi_a1: f64,
    pub pi_a2: f64,
    pub r_bar: f64,
}

impl TwoClassSolution {
    /// Mean numbers of rerouted sessions admitted from blockage and from
    /// micromobility outages, by flow balance.
    pub fn rerouted_split(&self, gamma_b: f64, gamma_m: f64, mu: f64, beta_b: f64, beta_m: f64) -> (f64, f64) {
        let a = 1.0 - self.pi_a2;
        (gamma_b * a / (mu + beta_b), gamma_m * a / (mu + beta_m))
    }
}

/// Two flows sharing the system. Both flows together behave as one flow
/// with load `rho1 + rho2` and the load-weighted mixture of demands; the
/// per-flow blocking then follows from each flow's own demand law.
pub fn solve_two_class(
    rho1: f64,
    rho2: f64,
    pmf1: &ResourcePmf,
    pmf2: &ResourcePmf,
    n: usize,
    r: usize,
) -> Result<TwoClassSolution> {
    if !(rho1 >= 0.0 && rho2 >= 0.0) {
        return Err(Error::Domain(format!(
            "offered loads must be nonnegative ({rho1}, {rho2})"
        )));
    }
    let rho = rho1 + rho2;
    let mix = if rho > 0.0 {
        ResourcePmf::mix(pmf1, rho1, pmf2, rho2)
    } else {
        pmf1.clone()
    };
    let table = convolve(&mix, n, r);
    let st = state_law(rho, &table);
    let pi_a1 = st.blocking(&tails(pmf1, r));
    let pi_a2 = st.blocking(&tails(pmf2, r));
    Ok(TwoClassSolution {
        q0: st.q0,
        n1_bar: rho1 * (1.0 - pi_a1),
        n2_bar: rho2 * (1.0 - pi_a2),
        pi_a1,
        pi_a2,
        r_bar: st.mean_resources(),
    })
}

/// Full joint law `q[(n1, n2, r1, r2)]` from the double sums, for small
/// instances.
pub fn two_class_distribution(
    rho1: f64,
    rho2: f64,
    pmf1: &ResourcePmf,
    pmf2: &ResourcePmf,
    n: usize,
    r: usize,
) -> BTreeMap<(usize, usize, usize, usize), f64> {
    let t1 = convolve(pmf1, n, r);
    let t2 = convolve(pmf2, n, r);
    let ln_fact = |k: usize| ln_gamma(k as f64 + 1.0);
    let mut out = BTreeMap::new();
    let mut total = KahanSum::default();
    for n1 in 0..=n {
        for n2 in 0..=(n - n1) {
            let w1 = if n1 == 0 {
                1.0
            } else {
                (n1 as f64 * rho1.ln() - ln_fact(n1)).exp()
            };
            let w2 = if n2 == 0 {
                1.0
            } else {
                (n2 as f64 * rho2.ln() - ln_fact(n2)).exp()
            };
            for r1 in 0..=r {
                for r2 in 0..=(r - r1) {
                    let v = w1 * w2 * t1.get(n1, r1) * t2.get(n2, r2);
                    if v > 0.0 {
                        out.insert((n1, n2, r1, r2), v);
                        total.add(v);
                    }
                }
            }
        }
    }
    let z = total.total();
    for v in out.values_mut() {
        *v /= z;
    }
    out
}

/// Erlang-B blocking by the standard recursion.
pub fn erlang_b(servers: usize, load: f64) -> f64 {
    let mut b = 1.0;
    for k in 1..=servers {
        b = load * b / (k as f64 + load * b);
    }
    b
}
