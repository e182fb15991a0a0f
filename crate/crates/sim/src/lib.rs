//! Discrete-event simulation of the THz/mmWave queueing network.
//!
//! The simulated system is the Markovian network the analytic model
//! describes, not the physical deployment: every clock is exponential,
//! state-change events hit sessions at the rates in [`NodeFlows`], rerouted
//! sessions come back at rate beta, and the PRB demand of a session is
//! redrawn on every (re)allocation. Agreement with the analytic results is
//! therefore a check of the solvers, not of the modelling assumptions.
//!
//! Randomness comes from ChaCha8 streams, one per (replication, clock
//! type), so results depend only on the seed and the inputs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thzmm_core::demand::ResourcePmf;
use thzmm_core::strategies::{self, NodeFlows};
use thzmm_core::{Error, Result, Scenario, Strategy};

/// Identifier of the generator behind every estimate.
pub const RNG_ALGORITHM: &str = "ChaCha8";

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    /// Simulated seconds discarded before measuring.
    pub warmup: f64,
    /// End of the measured window, simulated seconds.
    pub horizon: f64,
    pub replications: usize,
    /// Per-event trace of the first replication.
    pub trace: Option<PathBuf>,
}

impl SimConfig {
    /// Warmup `10/mu`, horizon `1e4/mu`, 20 replications.
    pub fn for_scenario(scn: &Scenario, seed: u64) -> Self {
        let mu = scn.traffic.mu;
        Self {
            seed,
            warmup: 10.0 / mu,
            horizon: 1e4 / mu,
            replications: 20,
            trace: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: &str| {
            Err(Error::Validation {
                field: field.into(),
                message: message.into(),
            })
        };
        if !(self.warmup >= 0.0 && self.warmup.is_finite()) {
            return bad("sim.warmup", "must be finite and nonnegative");
        }
        if !(self.horizon > self.warmup && self.horizon.is_finite()) {
            return bad("sim.horizon", "must be finite and exceed the warmup");
        }
        if self.replications < 2 {
            return bad("sim.replications", "at least 2 are needed for error estimates");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metric {
    pub mean: f64,
    pub std_error: f64,
    /// Half-width of the 95% confidence interval.
    pub ci_half_width: f64,
}

impl Metric {
    fn from_samples(x: &[f64]) -> Self {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let std_error = (var / n).sqrt();
        let t = StudentsT::new(0.0, 1.0, n - 1.0)
            .expect("at least two replications")
            .inverse_cdf(0.975);
        Self {
            mean,
            std_error,
            ci_half_width: t * std_error,
        }
    }
}

/// Event counters of one replication, measured window only.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub mmw_arrivals: u64,
    pub mmw_accepted: u64,
    pub mmw_blocked: u64,
    pub thz_arrivals: u64,
    pub mmw_lost: u64,
    pub thz_lost: u64,
    pub reroutes: u64,
    pub reroutes_blocked: u64,
    pub events: u64,
}

impl Counters {
    fn add(&mut self, o: &Counters) {
        self.mmw_arrivals += o.mmw_arrivals;
        self.mmw_accepted += o.mmw_accepted;
        self.mmw_blocked += o.mmw_blocked;
        self.thz_arrivals += o.thz_arrivals;
        self.mmw_lost += o.mmw_lost;
        self.thz_lost += o.thz_lost;
        self.reroutes += o.reroutes;
        self.reroutes_blocked += o.reroutes_blocked;
        self.events += o.events;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimEstimate {
    pub pi_n: Metric,
    pub pi_o: Metric,
    pub pi_o_mmw: Metric,
    pub pi_o_thz: Metric,
    pub pi_a2: Metric,
    pub utilization: Metric,
    pub n_bar_mmw: Metric,
    /// Per THz node.
    pub n_bar_thz: Metric,
    pub replications: usize,
    /// Sums over replications.
    pub counters: Counters,
    pub rng: &'static str,
}

impl SimEstimate {
    /// Smallest probability the run can resolve: one event in the whole
    /// measured window.
    pub fn resolution(&self) -> f64 {
        1.0 / self.counters.events.max(1) as f64
    }

    /// Whether `value` lies within three standard errors of `m`, the
    /// standard error floored at [`SimEstimate::resolution`] so that
    /// metrics never observed (all replications zero) can still be compared.
    pub fn agrees(&self, m: Metric, value: f64) -> bool {
        (m.mean - value).abs() <= 3.0 * m.std_error.max(self.resolution())
    }
}

struct Replication {
    pi_n: f64,
    pi_o: f64,
    pi_o_mmw: f64,
    pi_o_thz: f64,
    pi_a2: f64,
    utilization: f64,
    n_bar_mmw: f64,
    n_bar_thz: f64,
    counters: Counters,
}

/// Inverse-CDF sampler of a demand pmf; `None` is the infeasible outcome.
struct DemandSampler {
    cum: Vec<f64>,
}

impl DemandSampler {
    fn new(p: &ResourcePmf) -> Self {
        let mut acc = 0.0;
        let cum = p
            .probs()
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
        Self { cum }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Option<usize> {
        let u: f64 = rng.random();
        let i = self.cum.partition_point(|c| *c <= u);
        (i < self.cum.len()).then_some(i)
    }
}

/// `P(demand > k)` for `k = 0..=R`, infeasible mass included.
fn tails(p: &ResourcePmf, r: usize) -> Vec<f64> {
    let mut out = vec![0.0; r + 1];
    let mut acc = p.infeasible() + p.probs().iter().skip(r + 1).sum::<f64>();
    for k in (0..=r).rev() {
        out[k] = acc;
        acc += p.get(k);
    }
    out
}

#[derive(Clone, Copy)]
struct Session {
    id: u64,
    node: u32,
    prbs: usize,
}

const MMW_NODE: u32 = u32::MAX;

enum Stream {
    Time = 0,
    Pick,
    Demand,
    Loss,
}

fn stream(seed: u64, rep: usize, s: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64 * 4 + s as u64);
    rng
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

struct Tracer(Option<BufWriter<File>>);

impl Tracer {
    fn log(&mut self, t: f64, node: u32, kind: &str, id: u64, delta: i64) -> Result<()> {
        if let Some(w) = &mut self.0 {
            let node = if node == MMW_NODE {
                "mmw".to_string()
            } else {
                format!("thz{node}")
            };
            writeln!(w, "{t:.9} {node} {kind} {id} {delta}").map_err(|e| Error::Io(e.to_string()))?;
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn replicate(
    scn: &Scenario,
    f: &NodeFlows,
    p1: &ResourcePmf,
    p2: &ResourcePmf,
    cfg: &SimConfig,
    rep: usize,
    trace: Option<&PathBuf>,
) -> Result<Replication> {
    let n_srv = scn.solver.servers() as usize;
    let r_prb = scn.solver.r_prb as usize;
    let t_o = scn.outage_tolerance();
    let strategy = scn.strategy;
    let k = f.k.max(1);
    let b_loss = (-f.beta_b * t_o).exp();
    let m_loss = (-f.beta_m * t_o).exp();
    let (s1, s2) = (DemandSampler::new(p1), DemandSampler::new(p2));
    let (tail1, tail2) = (tails(p1, r_prb), tails(p2, r_prb));

    let mut time_rng = stream(cfg.seed, rep, Stream::Time);
    let mut pick_rng = stream(cfg.seed, rep, Stream::Pick);
    let mut demand_rng = stream(cfg.seed, rep, Stream::Demand);
    let mut loss_rng = stream(cfg.seed, rep, Stream::Loss);
    let mut tracer = Tracer(match trace {
        Some(p) => Some(BufWriter::new(File::create(p).map_err(|e| Error::Io(e.to_string()))?)),
        None => None,
    });

    let lambda_m = f.lambda_mmw;
    let lambda_t = f64::from(f.k) * f.lambda_thz;
    let rate_mmw1 = f.mu + f.nu;
    let rate_back = [f.mu + f.beta_b, f.mu + f.beta_m];
    let rate_thz = f.mu + f.nu_b + f.nu_m;

    let mut mmw1: Vec<Session> = Vec::new();
    let mut mmw2: [Vec<Session>; 2] = [Vec::new(), Vec::new()];
    let mut thz: Vec<Session> = Vec::new();
    let mut occ = 0usize;
    let mut next_id = 0u64;

    let mut c = Counters::default();
    let (mut area_occ, mut area_mmw, mut area_thz, mut area_b1, mut area_b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut thz_accepted = 0u64;
    let mut t = 0.0;

    loop {
        let n_mmw = mmw1.len() + mmw2[0].len() + mmw2[1].len();
        let w = [
            lambda_m,
            lambda_t,
            mmw1.len() as f64 * rate_mmw1,
            mmw2[0].len() as f64 * rate_back[0],
            mmw2[1].len() as f64 * rate_back[1],
            thz.len() as f64 * rate_thz,
        ];
        let total: f64 = w.iter().sum();
        let dt = if total > 0.0 {
            Exp::new(total).expect("positive rate").sample(&mut time_rng)
        } else {
            f64::INFINITY
        };
        let next = (t + dt).min(cfg.horizon);
        let span = next - t.max(cfg.warmup);
        if span > 0.0 {
            let free = r_prb - occ;
            let (b1, b2) = if n_mmw >= n_srv {
                (1.0, 1.0)
            } else {
                (tail1[free], tail2[free])
            };
            area_occ += span * occ as f64;
            area_mmw += span * n_mmw as f64;
            area_thz += span * thz.len() as f64;
            area_b1 += span * b1;
            area_b2 += span * b2;
        }
        if t + dt >= cfg.horizon {
            break;
        }
        t += dt;
        let measured = t >= cfg.warmup;
        if measured {
            c.events += 1;
        }

        let mut u = pick_rng.random::<f64>() * total;
        let mut cat = 0;
        while cat + 1 < w.len() && (u >= w[cat] || w[cat] == 0.0) {
            u -= w[cat];
            cat += 1;
        }
        match cat {
            0 => {
                let d = s1.draw(&mut demand_rng);
                let ok = n_mmw < n_srv && d.is_some_and(|d| occ + d <= r_prb);
                if measured {
                    c.mmw_arrivals += 1;
                    if ok {
                        c.mmw_accepted += 1;
                    } else {
                        c.mmw_blocked += 1;
                    }
                }
                next_id += 1;
                if ok {
                    let d = d.unwrap();
                    occ += d;
                    mmw1.push(Session {
                        id: next_id,
                        node: MMW_NODE,
                        prbs: d,
                    });
                    tracer.log(t, MMW_NODE, "arrival", next_id, d as i64)?;
                } else {
                    tracer.log(t, MMW_NODE, "blocked", next_id, 0)?;
                }
            }
            1 => {
                next_id += 1;
                let node = pick_rng.random_range(0..k);
                thz.push(Session {
                    id: next_id,
                    node,
                    prbs: 0,
                });
                if measured {
                    c.thz_arrivals += 1;
                    thz_accepted += 1;
                }
                tracer.log(t, node, "arrival", next_id, 0)?;
            }
            2 => {
                let i = pick_rng.random_range(0..mmw1.len());
                let s = mmw1[i];
                occ -= s.prbs;
                if pick_rng.random::<f64>() * rate_mmw1 < f.mu {
                    mmw1.swap_remove(i);
                    tracer.log(t, MMW_NODE, "departure", s.id, -(s.prbs as i64))?;
                } else {
                    // Blockage toggle: give back the PRBs and ask again.
                    match s1.draw(&mut demand_rng).filter(|d| occ + d <= r_prb) {
                        Some(d) => {
                            occ += d;
                            mmw1[i].prbs = d;
                            tracer.log(t, MMW_NODE, "reallocate", s.id, d as i64 - s.prbs as i64)?;
                        }
                        None => {
                            mmw1.swap_remove(i);
                            if measured {
                                c.mmw_lost += 1;
                            }
                            tracer.log(t, MMW_NODE, "lost", s.id, -(s.prbs as i64))?;
                        }
                    }
                }
            }
            3 | 4 => {
                let cause = cat - 3;
                let i = pick_rng.random_range(0..mmw2[cause].len());
                let s = mmw2[cause].swap_remove(i);
                occ -= s.prbs;
                if pick_rng.random::<f64>() * rate_back[cause] < f.mu {
                    tracer.log(t, MMW_NODE, "departure", s.id, -(s.prbs as i64))?;
                } else {
                    thz.push(Session { prbs: 0, ..s });
                    tracer.log(t, s.node, "return", s.id, -(s.prbs as i64))?;
                }
            }
            _ => {
                let i = pick_rng.random_range(0..thz.len());
                let s = thz[i];
                let v = pick_rng.random::<f64>() * rate_thz;
                if v < f.mu {
                    thz.swap_remove(i);
                    tracer.log(t, s.node, "departure", s.id, 0)?;
                    continue;
                }
                let blockage = v < f.mu + f.nu_b;
                let (reroute, lose_p) = match (strategy, blockage) {
                    (Strategy::S1, true) => (false, b_loss),
                    (Strategy::S1 | Strategy::S3, false) => (false, m_loss),
                    (Strategy::S2, false) => (false, 0.0),
                    _ => (true, 0.0),
                };
                if reroute {
                    if measured {
                        c.reroutes += 1;
                    }
                    thz.swap_remove(i);
                    match s2.draw(&mut demand_rng).filter(|d| n_mmw < n_srv && occ + d <= r_prb) {
                        Some(d) => {
                            occ += d;
                            mmw2[usize::from(!blockage)].push(Session { prbs: d, ..s });
                            tracer.log(t, MMW_NODE, "reroute", s.id, d as i64)?;
                        }
                        None => {
                            if measured {
                                c.reroutes_blocked += 1;
                                c.thz_lost += 1;
                            }
                            tracer.log(t, s.node, "lost", s.id, 0)?;
                        }
                    }
                } else if lose_p > 0.0 && loss_rng.random::<f64>() < lose_p {
                    thz.swap_remove(i);
                    if measured {
                        c.thz_lost += 1;
                    }
                    tracer.log(t, s.node, "lost", s.id, 0)?;
                }
            }
        }
        assert!(occ <= r_prb, "PRB ledger overflow: {occ} > {r_prb}");
    }
    if let Some(w) = &mut tracer.0 {
        w.flush().map_err(|e| Error::Io(e.to_string()))?;
    }
    assert_eq!(c.mmw_accepted + c.mmw_blocked, c.mmw_arrivals);

    let window = cfg.horizon - cfg.warmup;
    Ok(Replication {
        pi_n: area_b1 / window,
        pi_o: ratio(c.mmw_lost + c.thz_lost, c.mmw_accepted + thz_accepted),
        pi_o_mmw: ratio(c.mmw_lost, c.mmw_accepted),
        pi_o_thz: ratio(c.thz_lost, thz_accepted),
        pi_a2: area_b2 / window,
        utilization: area_occ / window / r_prb as f64,
        n_bar_mmw: area_mmw / window,
        n_bar_thz: area_thz / window / f64::from(k),
        counters: c,
    })
}

/// Replicated simulation for given flows and demand pmfs. The strategy and
/// system sizes come from `scn`; the arrival and event rates from `flows`.
pub fn simulate(
    scn: &Scenario,
    flows: &NodeFlows,
    p1: &ResourcePmf,
    p2: &ResourcePmf,
    cfg: &SimConfig,
) -> Result<SimEstimate> {
    cfg.validate()?;
    let reps: Vec<Replication> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| replicate(scn, flows, p1, p2, cfg, rep, cfg.trace.as_ref().filter(|_| rep == 0)))
        .collect::<Result<_>>()?;
    let metric = |g: fn(&Replication) -> f64| Metric::from_samples(&reps.iter().map(g).collect::<Vec<_>>());
    let mut counters = Counters::default();
    for r in &reps {
        counters.add(&r.counters);
    }
    Ok(SimEstimate {
        pi_n: metric(|r| r.pi_n),
        pi_o: metric(|r| r.pi_o),
        pi_o_mmw: metric(|r| r.pi_o_mmw),
        pi_o_thz: metric(|r| r.pi_o_thz),
        pi_a2: metric(|r| r.pi_a2),
        utilization: metric(|r| r.utilization),
        n_bar_mmw: metric(|r| r.n_bar_mmw),
        n_bar_thz: metric(|r| r.n_bar_thz),
        replications: cfg.replications,
        counters,
        rng: RNG_ALGORITHM,
    })
}

/// Simulates a scenario with the flows and pmfs of its analytic model.
pub fn simulate_scenario(scn: &Scenario, cfg: &SimConfig) -> Result<SimEstimate> {
    scn.validate()?;
    let inputs = strategies::prepare(scn)?;
    let report = strategies::evaluate(scn, &inputs)?;
    simulate(scn, &report.flows, &inputs.p1, &inputs.p2, cfg)
}

/// Parallel map over scenarios; scenario `i` uses seed `cfg.seed ^ i`.
pub fn simulate_sweep(scenarios: &[Scenario], cfg: &SimConfig) -> Result<Vec<SimEstimate>> {
    scenarios
        .par_iter()
        .enumerate()
        .map(|(i, scn)| {
            let cfg = SimConfig {
                seed: cfg.seed ^ i as u64,
                trace: None,
                ..cfg.clone()
            };
            simulate_scenario(scn, &cfg)
        })
        .collect()
}
