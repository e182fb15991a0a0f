//! Direct steady-state solve of the two-class resource loss chain on
//! states (n1, n2, r1, r2), unit service rate per session.
//!
//! A departing class-i session among n_i holding r_i PRBs in total releases
//! j PRBs with probability p_i(j) p_i^{(n_i-1)}(r_i - j) / p_i^{(n_i)}(r_i).
//! Single-flow systems are the special case lambda2 = 0.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};

pub type State = (usize, usize, usize, usize);

/// `powers[n][r]` = n-fold convolution of `p` truncated at `r_max`.
pub fn conv_powers(p: &[f64], n_max: usize, r_max: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; r_max + 1]];
    out[0][0] = 1.0;
    for n in 1..=n_max {
        let prev = &out[n - 1];
        let mut next = vec![0.0; r_max + 1];
        for (a, pa) in prev.iter().enumerate() {
            if *pa == 0.0 {
                continue;
            }
            for (j, pj) in p.iter().enumerate() {
                if a + j <= r_max {
                    next[a + j] += pa * pj;
                }
            }
        }
        out.push(next);
    }
    out
}

pub fn stationary(lambda: [f64; 2], pmfs: [&[f64]; 2], n: usize, r: usize) -> BTreeMap<State, f64> {
    let pw = [conv_powers(pmfs[0], n, r), conv_powers(pmfs[1], n, r)];
    let mut states = Vec::new();
    for n1 in 0..=n {
        for n2 in 0..=(n - n1) {
            if (n2 > 0 && lambda[1] == 0.0) || (n1 > 0 && lambda[0] == 0.0) {
                continue;
            }
            for r1 in 0..=r {
                for r2 in 0..=(r - r1) {
                    if pw[0][n1][r1] > 0.0 && pw[1][n2][r2] > 0.0 {
                        states.push((n1, n2, r1, r2));
                    }
                }
            }
        }
    }
    let index: HashMap<State, usize> = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let m = states.len();
    let mut q = DMatrix::<f64>::zeros(m, m);
    let mut add = |from: usize, to: State, rate: f64| {
        if rate > 0.0 {
            let t = index[&to];
            q[(from, t)] += rate;
            q[(from, from)] -= rate;
        }
    };
    for (i, &(n1, n2, r1, r2)) in states.iter().enumerate() {
        let ns = [n1, n2];
        let rs = [r1, r2];
        for c in 0..2 {
            if n1 + n2 < n {
                for (j, pj) in pmfs[c].iter().enumerate() {
                    if r1 + r2 + j <= r {
                        let mut to = (n1, n2, r1, r2);
                        if c == 0 {
                            to.0 += 1;
                            to.2 += j;
                        } else {
                            to.1 += 1;
                            to.3 += j;
                        }
                        add(i, to, lambda[c] * pj);
                    }
                }
            }
            let k = ns[c];
            if k == 0 {
                continue;
            }
            let denom = pw[c][k][rs[c]];
            for (j, pj) in pmfs[c].iter().enumerate() {
                if j > rs[c] {
                    break;
                }
                let w = pj * pw[c][k - 1][rs[c] - j] / denom;
                let mut to = (n1, n2, r1, r2);
                if c == 0 {
                    to.0 -= 1;
                    to.2 -= j;
                } else {
                    to.1 -= 1;
                    to.3 -= j;
                }
                add(i, to, k as f64 * w);
            }
        }
    }
    // pi Q = 0 with one balance equation replaced by normalisation.
    let mut a = q.transpose();
    let mut b = DVector::<f64>::zeros(m);
    for c in 0..m {
        a[(m - 1, c)] = 1.0;
    }
    b[m - 1] = 1.0;
    let pi = a.lu().solve(&b).expect("generator is irreducible");
    states.into_iter().zip(pi.iter().copied()).collect()
}

pub fn total_variation(a: &BTreeMap<State, f64>, b: &BTreeMap<State, f64>) -> f64 {
    let keys: std::collections::BTreeSet<_> = a.keys().chain(b.keys()).collect();
    0.5 * keys
        .into_iter()
        .map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}
