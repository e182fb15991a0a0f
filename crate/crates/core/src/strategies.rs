//! End-to-end evaluation of an association scheme and multi-connectivity
//! strategy: node flows, nested fixed points and session loss metrics.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use crate::demand::{self, DistanceLaw, Grid, ResourcePmf};
use crate::dynamics::{self, EventRates};
use crate::error::{Error, Result};
use crate::radio::{self, CoverageRadii};
use crate::rels::{self, TwoClassSolution};
use crate::scenario::{Scenario, Strategy};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeFlows {
    pub k: u32,
    pub p_t: f64,
    pub lambda_thz: f64,
    pub lambda_mmw: f64,
    pub gamma_k: f64,
    pub gamma_kp1: f64,
    pub gamma_b: f64,
    pub gamma_m: f64,
    pub mu: f64,
    pub nu: f64,
    pub nu_b: f64,
    pub nu_m: f64,
    pub beta_b: f64,
    pub beta_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Convergence {
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub outer_residual: f64,
    pub inner_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyReport {
    pub pi_n: f64,
    pub pi_o: f64,
    pub pi_o_mmw: f64,
    pub pi_o_thz: f64,
    /// Loss probability of sessions rerouted to the mmWave BS.
    pub pi_a2: f64,
    pub utilization: f64,
    pub r_bar: f64,
    pub n_bar_mmw: f64,
    pub n_bar_thz: f64,
    pub flows: NodeFlows,
    pub convergence: Convergence,
}

/// Everything the strategy evaluators consume besides the scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInputs {
    pub radii: CoverageRadii,
    pub rates: EventRates,
    pub p1: ResourcePmf,
    /// Demand of sessions rerouted from THz BSs; unused by S1.
    pub p2: ResourcePmf,
    pub t_o: f64,
}

/// `p_T = K r_T^2 / r_M^2` for the given radii.
pub fn split_rates(lambda_a: f64, k: u32, r_t: f64, r_m: f64) -> Result<(f64, f64, f64)> {
    let p_t = f64::from(k) * r_t * r_t / (r_m * r_m);
    if p_t > 1.0 + 1e-12 {
        return Err(Error::Geometry {
            field: "association_split.p_T".into(),
            message: format!("{k} THz cells of radius {r_t:.2} m exceed the mmWave cell ({p_t:.3} > 1)"),
        });
    }
    let p_t = p_t.min(1.0);
    let total = lambda_a * std::f64::consts::PI * r_m * r_m;
    Ok((p_t, (1.0 - p_t) * total, p_t * total / f64::from(k)))
}

/// THz association probability and arrival rates `(p_T, lambda_mmw,
/// lambda_k)`.
pub fn association_split(scn: &Scenario, radii: &CoverageRadii) -> Result<(f64, f64, f64)> {
    split_rates(
        scn.traffic.lambda_a,
        scn.deployment.k_thz,
        radio::thz_service_radius(scn, radii),
        radii.r_m,
    )
}

fn rerouted_law(r_m: f64, r_t: f64) -> DistanceLaw {
    static CACHE: OnceLock<Mutex<HashMap<(u64, u64), DistanceLaw>>> = OnceLock::new();
    let key = (r_m.to_bits(), r_t.to_bits());
    let cache = CACHE.get_or_init(Default::default);
    if let Some(law) = cache.lock().expect("cache lock").get(&key) {
        return law.clone();
    }
    let law = demand::rerouted_distance_pdf(r_m, r_t, Grid::default());
    cache.lock().expect("cache lock").insert(key, law.clone());
    law
}

/// Radii, event rates and demand pmfs for a scenario.
pub fn prepare(scn: &Scenario) -> Result<ModelInputs> {
    let radii = radio::coverage_radii(scn).map_err(|e| e.in_module("radio"))?;
    let rates = dynamics::event_rates(scn, &radii).map_err(|e| e.in_module("dynamics"))?;
    let p1 = demand::demand_pmf_native(scn, &radii).map_err(|e| e.in_module("demand"))?;
    let p2 = if scn.strategy == Strategy::S1 {
        p1.clone()
    } else {
        let law = rerouted_law(radii.r_m, radio::thz_service_radius(scn, &radii));
        let cdf = demand::SinrCdf::new(scn, law).map_err(|e| e.in_module("demand"))?;
        let split = demand::mcs_split(|s| cdf.cdf(s), &scn.radio.mcs_table);
        demand::demand_pmf(&split, scn).map_err(|e| e.in_module("demand"))?
    };
    Ok(ModelInputs {
        radii,
        rates,
        p1,
        p2,
        t_o: scn.outage_tolerance(),
    })
}

/// Ongoing-loss average over mmWave and THz sessions.
pub fn combine_ongoing(lambda_mmw: f64, pi_n: f64, pi_o_mmw: f64, lambda_thz_total: f64, pi_o_thz: f64) -> f64 {
    let wm = lambda_mmw * (1.0 - pi_n);
    let total = wm + lambda_thz_total;
    if total <= 0.0 {
        return 0.0;
    }
    (wm * pi_o_mmw + lambda_thz_total * pi_o_thz) / total
}

fn base_flows(scn: &Scenario, inputs: &ModelInputs) -> Result<NodeFlows> {
    let (p_t, lambda_mmw, lambda_thz) = association_split(scn, &inputs.radii).map_err(|e| e.in_module("strategies"))?;
    let r = &inputs.rates;
    Ok(NodeFlows {
        k: scn.deployment.k_thz,
        p_t,
        lambda_thz,
        lambda_mmw,
        gamma_k: 0.0,
        gamma_kp1: 0.0,
        gamma_b: 0.0,
        gamma_m: 0.0,
        mu: scn.traffic.mu,
        nu: r.nu,
        nu_b: r.nu_b,
        nu_m: r.nu_m,
        beta_b: scn.traffic.beta_b,
        beta_m: scn.traffic.beta_m,
    })
}

fn mmw_ongoing(n_bar: f64, nu: f64, pi_n: f64, lambda: f64) -> f64 {
    if lambda > 0.0 && pi_n < 1.0 {
        n_bar * nu * pi_n / (lambda * (1.0 - pi_n))
    } else {
        0.0
    }
}

/// Independent nodes: THz sessions are lost on outages longer than the
/// tolerance, mmWave sessions on failed reallocation.
pub fn evaluate_s1(scn: &Scenario, inputs: &ModelInputs) -> Result<StrategyReport> {
    let flows = base_flows(scn, inputs)?;
    let b = (-flows.beta_b * inputs.t_o).exp();
    let m = (-flows.beta_m * inputs.t_o).exp();
    let leave = flows.nu_b * b + flows.nu_m * m;
    let pi_s_k = leave / (flows.mu + leave);
    let n_bar_k = flows.lambda_thz / (flows.mu + leave);

    let s = &scn.solver;
    let sol = rels::solve_single_class(
        flows.lambda_mmw,
        flows.mu,
        flows.nu,
        &inputs.p1,
        s.servers() as usize,
        s.r_prb as usize,
        s.fp_tol,
        s.fp_max_iter as usize,
    )
    .map_err(|e| e.in_module("rels"))?;

    let pi_o_mmw = mmw_ongoing(sol.n_bar, flows.nu, sol.pi_n, flows.lambda_mmw);
    let thz_total = f64::from(flows.k) * flows.lambda_thz;
    let pi_o_thz = if thz_total > 0.0 { pi_s_k } else { 0.0 };
    Ok(StrategyReport {
        pi_n: sol.pi_n,
        pi_o: combine_ongoing(flows.lambda_mmw, sol.pi_n, pi_o_mmw, thz_total, pi_o_thz),
        pi_o_mmw,
        pi_o_thz,
        pi_a2: 0.0,
        utilization: sol.r_bar / f64::from(s.r_prb),
        r_bar: sol.r_bar,
        n_bar_mmw: sol.n_bar,
        n_bar_thz: n_bar_k,
        flows: NodeFlows {
            gamma_kp1: sol.n_bar * flows.nu,
            ..flows
        },
        convergence: Convergence {
            outer_iterations: 0,
            inner_iterations: sol.iterations,
            outer_residual: 0.0,
            inner_residual: sol.residual,
        },
    })
}

struct MmwState {
    sol: TwoClassSolution,
    gamma_kp1: f64,
    iterations: usize,
    residual: f64,
}

/// Inner loop: secondary flow `gamma_{K+1} = N1 * nu` of the mmWave BS for
/// fixed rerouted load `rho2`, restarted from zero.
fn solve_mmw(scn: &Scenario, inputs: &ModelInputs, f: &NodeFlows, rho2: f64) -> Result<MmwState> {
    let s = &scn.solver;
    let n = s.servers() as usize;
    let r = s.r_prb as usize;
    let solve = |gamma: f64| {
        let rho1 = (f.lambda_mmw + gamma) / (f.mu + f.nu);
        rels::solve_two_class(rho1, rho2, &inputs.p1, &inputs.p2, n, r)
    };
    let mut x0 = 0.0;
    let sol0 = solve(x0)?;
    let mut h0 = sol0.n1_bar * f.nu - x0;
    if f.nu == 0.0 || h0.abs() < s.fp_tol {
        return Ok(MmwState {
            sol: sol0,
            gamma_kp1: x0,
            iterations: 1,
            residual: h0.abs(),
        });
    }
    let mut x1 = x0 + h0;
    let mut iterations = 1;
    loop {
        if iterations >= s.fp_max_iter as usize {
            return Err(Error::NonConvergence {
                stage: "secondary flow at the mmWave BS".into(),
                iterations,
                residual: h0.abs(),
            });
        }
        iterations += 1;
        let sol1 = solve(x1)?;
        let h1 = sol1.n1_bar * f.nu - x1;
        if h1.abs() < s.fp_tol {
            return Ok(MmwState {
                sol: sol1,
                gamma_kp1: x1,
                iterations,
                residual: h1.abs(),
            });
        }
        let slope = (h1 - h0) / (x1 - x0);
        let mut x2 = x1 - h1 / slope;
        if !x2.is_finite() || x2 < 0.0 || slope == 0.0 {
            x2 = x1 + h1;
        }
        x0 = x1;
        h0 = h1;
        x1 = x2;
    }
}

/// Per-node THz quantities for a given rerouting loss `pi_a2`.
struct ThzNode {
    n_bar: f64,
    gamma_k: f64,
    gamma_b: f64,
    gamma_m: f64,
}

fn thz_node(f: &NodeFlows, pi_a2: f64, m_k: f64, reroute_micro: bool) -> ThzNode {
    let back = 1.0 - pi_a2;
    let ret_b = f.nu_b * f.beta_b / (f.mu + f.beta_b);
    let (leave, c) = if reroute_micro {
        let ret_m = f.nu_m * f.beta_m / (f.mu + f.beta_m);
        (f.mu + f.nu_b + f.nu_m, back * (ret_b + ret_m))
    } else {
        (f.mu + f.nu_b + f.nu_m * m_k, back * ret_b)
    };
    // N = (lambda + gamma) / leave and gamma = c N.
    let n_bar = f.lambda_thz / (leave - c);
    let k = f64::from(f.k);
    ThzNode {
        n_bar,
        gamma_k: c * n_bar,
        gamma_b: k * n_bar * f.nu_b,
        gamma_m: if reroute_micro { k * n_bar * f.nu_m } else { 0.0 },
    }
}

/// Shared nested fixed point of S2, S3 and S4.
fn evaluate_rerouting(scn: &Scenario, inputs: &ModelInputs, m_k: f64, reroute_micro: bool) -> Result<StrategyReport> {
    let flows = base_flows(scn, inputs)?;
    let s = &scn.solver;
    let tol = s.fp_tol;
    let rho2_of = |t: &ThzNode| t.gamma_b / (flows.mu + flows.beta_b) + t.gamma_m / (flows.mu + flows.beta_m);

    let mut conv = Convergence::default();
    // Outer map on pi_a2, judged by the change of gamma_k.
    let step = |pi_a2: f64, conv: &mut Convergence| -> Result<(ThzNode, MmwState)> {
        let node = thz_node(&flows, pi_a2, m_k, reroute_micro);
        let mmw = solve_mmw(scn, inputs, &flows, rho2_of(&node)).map_err(|e| e.in_module("rels"))?;
        conv.outer_iterations += 1;
        conv.inner_iterations += mmw.iterations;
        conv.inner_residual = mmw.residual;
        Ok((node, mmw))
    };
    let rel_change = |a: f64, b: f64| {
        let d = (a - b).abs();
        if d == 0.0 {
            0.0
        } else {
            d / a.abs().max(b.abs())
        }
    };

    let mut x0 = 0.0;
    let (_, first) = step(x0, &mut conv)?;
    let mut h0 = first.sol.pi_a2 - x0;
    let mut x1 = first.sol.pi_a2;
    conv.outer_residual = rel_change(
        thz_node(&flows, x1, m_k, reroute_micro).gamma_k,
        thz_node(&flows, x0, m_k, reroute_micro).gamma_k,
    );
    let (node, mmw) = loop {
        if conv.outer_iterations >= s.fp_max_iter as usize {
            return Err(Error::NonConvergence {
                stage: "returning flows at the THz BSs".into(),
                iterations: conv.outer_iterations,
                residual: conv.outer_residual,
            }
            .in_module("strategies"));
        }
        let (node, mmw) = step(x1, &mut conv)?;
        let next = thz_node(&flows, mmw.sol.pi_a2, m_k, reroute_micro);
        let resid = rel_change(next.gamma_k, node.gamma_k);
        conv.outer_residual = resid;
        if resid < tol {
            break (node, mmw);
        }
        let h1 = mmw.sol.pi_a2 - x1;
        let slope = (h1 - h0) / (x1 - x0);
        let mut x2 = x1 - h1 / slope;
        if !x2.is_finite() || !(0.0..=1.0).contains(&x2) || slope == 0.0 {
            x2 = mmw.sol.pi_a2;
        }
        x0 = x1;
        h0 = h1;
        x1 = x2;
    };

    let sol = &mmw.sol;
    let pi_n = sol.pi_a1;
    let pi_o_mmw = mmw_ongoing(sol.n1_bar, flows.nu, pi_n, flows.lambda_mmw);
    let loss_rate = if reroute_micro {
        (flows.nu_b + flows.nu_m) * sol.pi_a2
    } else {
        flows.nu_b * sol.pi_a2 + flows.nu_m * m_k
    };
    let pi_s_k = if flows.lambda_thz > 0.0 {
        node.n_bar * loss_rate / flows.lambda_thz
    } else {
        0.0
    };
    let thz_total = f64::from(flows.k) * flows.lambda_thz;
    Ok(StrategyReport {
        pi_n,
        pi_o: combine_ongoing(flows.lambda_mmw, pi_n, pi_o_mmw, thz_total, pi_s_k),
        pi_o_mmw,
        pi_o_thz: pi_s_k,
        pi_a2: sol.pi_a2,
        utilization: sol.r_bar / f64::from(s.r_prb),
        r_bar: sol.r_bar,
        n_bar_mmw: sol.n1_bar + sol.n2_bar,
        n_bar_thz: node.n_bar,
        flows: NodeFlows {
            gamma_k: node.gamma_k,
            gamma_kp1: mmw.gamma_kp1,
            gamma_b: node.gamma_b,
            gamma_m: node.gamma_m,
            ..flows
        },
        convergence: conv,
    })
}

/// Rerouting on blockage only. Outage-sensitive sessions (S3) are lost
/// when realignment outlasts the tolerance; S2 sessions ride it out.
pub fn evaluate_s2_s3(scn: &Scenario, inputs: &ModelInputs, outage_sensitive: bool) -> Result<StrategyReport> {
    let m_k = if outage_sensitive {
        (-scn.traffic.beta_m * inputs.t_o).exp()
    } else {
        0.0
    };
    evaluate_rerouting(scn, inputs, m_k, false)
}

/// Rerouting on both blockage and micromobility outages.
pub fn evaluate_s4(scn: &Scenario, inputs: &ModelInputs) -> Result<StrategyReport> {
    evaluate_rerouting(scn, inputs, 0.0, true)
}

pub fn evaluate(scn: &Scenario, inputs: &ModelInputs) -> Result<StrategyReport> {
    match scn.strategy {
        Strategy::S1 => evaluate_s1(scn, inputs),
        Strategy::S2 => evaluate_s2_s3(scn, inputs, false),
        Strategy::S3 => evaluate_s2_s3(scn, inputs, true),
        Strategy::S4 => evaluate_s4(scn, inputs),
    }
}

/// Validates and evaluates a scenario.
pub fn run(scn: &Scenario) -> Result<StrategyReport> {
    scn.validate().map_err(|e| e.in_module("scenario"))?;
    let inputs = prepare(scn)?;
    evaluate(scn, &inputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{default_scenario, Association};

    fn with(a: Association, s: Strategy) -> Scenario {
        let mut scn = default_scenario();
        scn.association = a;
        scn.strategy = s;
        scn
    }

    #[test]
    fn split_reference_values() {
        let (p_t, l_m, l_k) = split_rates(1e-4, 5, 20.1, 73.3).unwrap();
        assert!((p_t - 0.376).abs() < 1e-3);
        let total = 1e-4 * std::f64::consts::PI * 73.3 * 73.3;
        assert!((total - 1.688).abs() < 1e-3);
        assert!((l_m - 1.053).abs() < 2e-3);
        assert!((l_k - 0.127).abs() < 1e-3);
        assert!((l_m + 5.0 * l_k - total).abs() < 1e-12);
        let (p0, l0, _) = split_rates(1e-4, 5, 0.0, 73.3).unwrap();
        assert_eq!(p0, 0.0);
        assert!((l0 - total).abs() < 1e-12);
    }

    #[test]
    fn oversized_thz_cells_rejected() {
        let err = split_rates(1e-4, 5, 40.0, 73.3).unwrap_err();
        assert!(matches!(err, Error::Geometry { ref field, .. } if field == "association_split.p_T"));
        let mut s = with(Association::A2, Strategy::S1);
        s.deployment.cap_thz_coverage = false;
        assert!(matches!(run(&s).unwrap_err().root(), Error::Geometry { .. }));
    }

    #[test]
    fn no_events_no_thz_loss() {
        let s = default_scenario();
        let mut inputs = prepare(&s).unwrap();
        inputs.rates.nu_b = 0.0;
        inputs.rates.nu_m = 0.0;
        let r = evaluate_s1(&s, &inputs).unwrap();
        assert_eq!(r.pi_o_thz, 0.0);
    }

    #[test]
    fn degenerate_strategies_coincide_without_events() {
        let mut reports = Vec::new();
        for st in Strategy::ALL {
            let s = with(Association::A2, st);
            let mut inputs = prepare(&s).unwrap();
            inputs.rates.nu_b = 0.0;
            inputs.rates.nu_m = 0.0;
            reports.push(evaluate(&s, &inputs).unwrap());
        }
        for r in &reports[1..] {
            assert!((r.pi_n - reports[0].pi_n).abs() < 1e-10);
            assert!((r.pi_o - reports[0].pi_o).abs() < 1e-10);
            assert!((r.utilization - reports[0].utilization).abs() < 1e-10);
        }
    }

    #[test]
    fn s2_equals_s3_without_micromobility() {
        let s2 = with(Association::A2, Strategy::S2);
        let mut i2 = prepare(&s2).unwrap();
        i2.rates.nu_m = 0.0;
        let a = evaluate_s2_s3(&s2, &i2, false).unwrap();
        let b = evaluate_s2_s3(&s2, &i2, true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn s2_under_a1_loses_nothing_at_thz() {
        let r = run(&with(Association::A1, Strategy::S2)).unwrap();
        assert_eq!(r.pi_o_thz, 0.0);
    }

    #[test]
    fn instant_return_limit() {
        let mut s = with(Association::A2, Strategy::S4);
        s.traffic.beta_b = 1e12;
        s.traffic.beta_m = 1e12;
        let inputs = prepare(&s).unwrap();
        let r = evaluate_s4(&s, &inputs).unwrap();
        let f = r.flows;
        let expect = r.n_bar_thz * (f.nu_b + f.nu_m) * (1.0 - r.pi_a2);
        assert!((f.gamma_k - expect).abs() < 1e-9 * expect.max(1.0));
    }

    #[test]
    fn flow_conservation_at_fixed_point() {
        let s = with(Association::A2, Strategy::S4);
        let r = run(&s).unwrap();
        let f = r.flows;
        let back = 1.0 - r.pi_a2;
        let gk =
            r.n_bar_thz * (f.nu_b * back * f.beta_b / (f.mu + f.beta_b) + f.nu_m * back * f.beta_m / (f.mu + f.beta_m));
        assert!((gk - f.gamma_k).abs() <= s.solver.fp_tol * gk.max(1e-300));
        assert!(((f.lambda_thz + f.gamma_k) / (f.mu + f.nu_b + f.nu_m) - r.n_bar_thz).abs() < 1e-12);
    }

    #[test]
    fn s1_matches_s3_under_a1() {
        let a = run(&with(Association::A1, Strategy::S1)).unwrap();
        let b = run(&with(Association::A1, Strategy::S3)).unwrap();
        assert!((a.pi_o_thz - b.pi_o_thz).abs() < 1e-12);
    }

    #[test]
    fn reports_are_probabilities() {
        for a in Association::ALL {
            for st in Strategy::ALL {
                let r = run(&with(a, st)).unwrap();
                for p in [r.pi_n, r.pi_o, r.pi_o_mmw, r.pi_o_thz, r.utilization] {
                    assert!((0.0..=1.0).contains(&p), "{a} {st}: {r:?}");
                }
                let f = r.flows;
                let thz = f64::from(f.k) * f.lambda_thz;
                let pio = combine_ongoing(f.lambda_mmw, r.pi_n, r.pi_o_mmw, thz, r.pi_o_thz);
                assert_eq!(pio, r.pi_o);
            }
        }
    }

    #[test]
    fn run_is_deterministic() {
        let s = with(Association::A2, Strategy::S4);
        assert_eq!(run(&s).unwrap(), run(&s).unwrap());
    }
}
