//! PRB demand of sessions at the mmWave BS: SINR distributions over the
//! cell, MCS selection and the resulting resource pmfs.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{db_to_lin, GaussLegendre, KahanSum};
use crate::radio::{self, CoverageRadii, LinkState};
use crate::scenario::{McsEntry, Scenario};

/// Resource requirement law of one session class. Mass that cannot be
/// served at any MCS is kept apart in `infeasible`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourcePmf {
    probs: Vec<f64>,
    infeasible: f64,
}

impl ResourcePmf {
    pub fn new(probs: Vec<f64>, infeasible: f64) -> Result<Self> {
        if probs
            .iter()
            .chain([&infeasible])
            .any(|p| !(0.0..=1.0 + 1e-12).contains(p))
        {
            return Err(Error::Domain("pmf entries must lie in [0, 1]".into()));
        }
        let total: f64 = probs.iter().sum::<f64>() + infeasible;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("pmf mass is {total}, expected 1")));
        }
        let mut probs = probs;
        while probs.len() > 1 && probs.last() == Some(&0.0) {
            probs.pop();
        }
        Ok(Self { probs, infeasible })
    }

    /// Unit mass at `r`.
    pub fn point(r: usize) -> Self {
        let mut probs = vec![0.0; r + 1];
        probs[r] = 1.0;
        Self { probs, infeasible: 0.0 }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn infeasible(&self) -> f64 {
        self.infeasible
    }

    pub fn get(&self, r: usize) -> f64 {
        self.probs.get(r).copied().unwrap_or(0.0)
    }

    pub fn max_r(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum::<f64>() + self.infeasible
    }

    /// Mean demand of the feasible part.
    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(r, p)| r as f64 * p).sum()
    }

    /// `P(demand <= r)`, infeasible mass excluded.
    pub fn cdf(&self, r: usize) -> f64 {
        self.probs.iter().take(r + 1).sum()
    }

    /// Mixture `(w1 * a + w2 * b) / (w1 + w2)`.
    pub fn mix(a: &ResourcePmf, w1: f64, b: &ResourcePmf, w2: f64) -> ResourcePmf {
        let n = a.probs.len().max(b.probs.len());
        let tot = w1 + w2;
        if tot <= 0.0 {
            return a.clone();
        }
        let probs = (0..n).map(|r| (w1 * a.get(r) + w2 * b.get(r)) / tot).collect();
        ResourcePmf {
            probs,
            infeasible: (w1 * a.infeasible + w2 * b.infeasible) / tot,
        }
    }
}

/// Law of the 2D distance between a UE and the mmWave BS.
#[derive(Debug, Clone, PartialEq)]
pub enum DistanceLaw {
    /// Uniform in a disc of the given radius.
    Disc(f64),
    /// Piecewise-uniform density with bin edges and bin masses.
    Histogram { edges: Vec<f64>, mass: Vec<f64> },
}

impl DistanceLaw {
    pub fn mean(&self) -> f64 {
        match self {
            DistanceLaw::Disc(r) => 2.0 * r / 3.0,
            DistanceLaw::Histogram { edges, mass } => mass
                .iter()
                .enumerate()
                .map(|(i, m)| m * 0.5 * (edges[i] + edges[i + 1]))
                .sum(),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            DistanceLaw::Disc(r) => (x.clamp(0.0, *r) / r).powi(2),
            DistanceLaw::Histogram { edges, mass } => {
                let mut acc = 0.0;
                for (i, m) in mass.iter().enumerate() {
                    let (a, b) = (edges[i], edges[i + 1]);
                    if x >= b {
                        acc += m;
                    } else if x > a {
                        acc += m * (x - a) / (b - a);
                    }
                }
                acc
            }
        }
    }
}

/// CDF of the 3D distance of a UE uniform in the mmWave cell.
pub fn distance_cdf_native(y: f64, r_m: f64, dh: f64) -> Result<f64> {
    let q = (r_m * r_m + dh * dh).sqrt();
    if y < dh - 1e-12 || y > q + 1e-12 {
        return Err(Error::Domain(format!("distance {y} outside [{dh}, {q}]")));
    }
    Ok(((y * y - dh * dh) / (r_m * r_m)).clamp(0.0, 1.0))
}

/// SINR distribution at the mmWave BS for UEs with a given distance law,
/// mixing the blocked and non-blocked branches with the blockage
/// probability at each distance.
#[derive(Debug, Clone)]
pub struct SinrCdf {
    law: DistanceLaw,
    scn: Scenario,
    budget: f64,
    rule: GaussLegendre,
}

impl SinrCdf {
    pub fn new(scn: &Scenario, law: DistanceLaw) -> Result<Self> {
        Ok(Self {
            law,
            scn: scn.clone(),
            budget: radio::mmwave_budget(scn)?,
            rule: GaussLegendre::new(48),
        })
    }

    fn dh(&self) -> f64 {
        self.scn.deployment.h_m_b - self.scn.deployment.h_u
    }

    fn p_blocked(&self, x: f64) -> f64 {
        let dh = self.dh();
        radio::blockage_probability((x * x + dh * dh).sqrt(), self.scn.deployment.h_m_b, &self.scn).unwrap_or(1.0)
    }

    /// Smallest 2D distance at which the branch SINR is at most `s`.
    fn threshold_distance(&self, s: f64, state: LinkState) -> f64 {
        let zeta = match state {
            LinkState::LosNonBlocked => self.scn.radio.zeta_m_1,
            LinkState::LosBlocked => self.scn.radio.zeta_m_2,
        };
        let y = (self.budget / s).powf(1.0 / zeta);
        let dh = self.dh();
        if y <= dh {
            0.0
        } else {
            (y * y - dh * dh).sqrt()
        }
    }

    /// `int_{x0}^inf f(x) w(x) dx` for the branch weight `w`.
    fn tail_mass(&self, x0: f64, blocked: bool) -> f64 {
        let w = |x: f64| {
            let p = self.p_blocked(x);
            if blocked {
                p
            } else {
                1.0 - p
            }
        };
        match &self.law {
            DistanceLaw::Disc(r) => {
                if x0 >= *r {
                    return 0.0;
                }
                let r2 = r * r;
                self.rule.integrate(|x| 2.0 * x / r2 * w(x), x0, *r)
            }
            DistanceLaw::Histogram { edges, mass } => {
                let mut acc = KahanSum::default();
                for (i, m) in mass.iter().enumerate() {
                    let (a, b) = (edges[i], edges[i + 1]);
                    if b <= x0 || *m == 0.0 {
                        continue;
                    }
                    let lo = a.max(x0);
                    acc.add(m * (b - lo) / (b - a) * w(0.5 * (lo + b)));
                }
                acc.total()
            }
        }
    }

    /// `P(SINR <= s)` for linear `s`.
    pub fn cdf(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        if !s.is_finite() {
            return 1.0;
        }
        let nb = self.tail_mass(self.threshold_distance(s, LinkState::LosNonBlocked), false);
        let b = self.tail_mass(self.threshold_distance(s, LinkState::LosBlocked), true);
        (nb + b).clamp(0.0, 1.0)
    }
}

pub fn sinr_cdf_native(scn: &Scenario, radii: &CoverageRadii) -> Result<SinrCdf> {
    SinrCdf::new(scn, DistanceLaw::Disc(radii.r_m))
}

/// Probabilities of each MCS and of falling below the lowest one.
#[derive(Debug, Clone, PartialEq)]
pub struct McsSplit {
    pub eps: Vec<f64>,
    pub infeasible: f64,
}

/// Splits a CDF over linear SINR into MCS probabilities.
pub fn mcs_split<F: Fn(f64) -> f64>(cdf: F, table: &[McsEntry]) -> McsSplit {
    let f: Vec<f64> = table.iter().map(|m| cdf(db_to_lin(m.sinr_db))).collect();
    let eps = (0..f.len())
        .map(|j| {
            let hi = if j + 1 < f.len() { f[j + 1] } else { 1.0 };
            (hi - f[j]).max(0.0)
        })
        .collect();
    McsSplit { eps, infeasible: f[0] }
}

/// Throughput of one PRB at spectral efficiency `se`, bit/s.
pub fn prb_rate(se: f64, scn: &Scenario) -> f64 {
    se * 12.0 * scn.radio.subcarrier_spacing_khz * 1e3 * 13.0 / 14.0
}

/// PRBs needed at MCS `entry` to carry the session rate.
pub fn prbs_for(entry: &McsEntry, scn: &Scenario) -> usize {
    let need = scn.traffic.c_rate / prb_rate(entry.efficiency, scn);
    // Guard against ratios a rounding error above an integer.
    ((need - 1e-9).ceil() as usize).max(1)
}

pub fn demand_pmf(split: &McsSplit, scn: &Scenario) -> Result<ResourcePmf> {
    let table = &scn.radio.mcs_table;
    let r: Vec<usize> = table.iter().map(|m| prbs_for(m, scn)).collect();
    let max_r = r.iter().copied().max().unwrap_or(1);
    let mut probs = vec![0.0; max_r + 1];
    for (j, e) in split.eps.iter().enumerate() {
        probs[r[j]] += e;
    }
    ResourcePmf::new(probs, split.infeasible)
}

/// Demand pmf of sessions native to the mmWave BS.
pub fn demand_pmf_native(scn: &Scenario, radii: &CoverageRadii) -> Result<ResourcePmf> {
    let cdf = sinr_cdf_native(scn, radii)?;
    demand_pmf(&mcs_split(|s| cdf.cdf(s), &scn.radio.mcs_table), scn)
}

/// Midpoint tensor-grid resolution for the rerouted distance law.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub d3: usize,
    pub d4: usize,
    pub psi: usize,
    pub bins: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            d3: 400,
            d4: 400,
            psi: 360,
            bins: 400,
        }
    }
}

/// Distance from the mmWave BS to a UE served by a THz BS: the THz BS is
/// uniform in the mmWave disc, the UE uniform in the THz disc of radius
/// `r_t`.
pub fn rerouted_distance_pdf(r_m: f64, r_t: f64, grid: Grid) -> DistanceLaw {
    let hi = r_m + r_t;
    let bins = grid.bins;
    let width = hi / bins as f64;
    let h3 = r_m / grid.d3 as f64;
    let h4 = r_t / grid.d4 as f64;
    // cos(psi) on (0, pi); the other half-turn is its mirror image.
    let cosines: Vec<f64> = (0..grid.psi)
        .map(|k| ((k as f64 + 0.5) * std::f64::consts::PI / grid.psi as f64).cos())
        .collect();
    let wpsi = 1.0 / grid.psi as f64;
    let rows: Vec<Vec<f64>> = (0..grid.d3)
        .into_par_iter()
        .map(|i| {
            let mut hist = vec![0.0; bins];
            let x3 = (i as f64 + 0.5) * h3;
            let w3 = 2.0 * x3 * h3 / (r_m * r_m);
            if r_t <= 0.0 {
                let b = ((x3 / width) as usize).min(bins - 1);
                hist[b] += w3;
                return hist;
            }
            for j in 0..grid.d4 {
                let x4 = (j as f64 + 0.5) * h4;
                let w = w3 * 2.0 * x4 * h4 / (r_t * r_t) * wpsi;
                let a = x3 * x3 + x4 * x4;
                let c = 2.0 * x3 * x4;
                for cs in &cosines {
                    let d2 = (a - c * cs).max(0.0).sqrt();
                    let b = ((d2 / width) as usize).min(bins - 1);
                    hist[b] += w;
                }
            }
            hist
        })
        .collect();
    let mut mass = vec![KahanSum::default(); bins];
    for row in &rows {
        for (m, v) in mass.iter_mut().zip(row) {
            m.add(*v);
        }
    }
    let mut mass: Vec<f64> = mass.iter().map(|k| k.total()).collect();
    let total: f64 = mass.iter().sum();
    for m in &mut mass {
        *m /= total;
    }
    let edges = (0..=bins).map(|k| k as f64 * width).collect();
    DistanceLaw::Histogram { edges, mass }
}

/// Demand pmf at the mmWave BS of sessions rerouted from THz BSs.
pub fn demand_pmf_rerouted(scn: &Scenario, radii: &CoverageRadii) -> Result<ResourcePmf> {
    demand_pmf_rerouted_with(scn, radii, Grid::default())
}

pub fn demand_pmf_rerouted_with(scn: &Scenario, radii: &CoverageRadii, grid: Grid) -> Result<ResourcePmf> {
    let r_t = radio::thz_service_radius(scn, radii);
    let law = rerouted_distance_pdf(radii.r_m, r_t, grid);
    let cdf = SinrCdf::new(scn, law)?;
    demand_pmf(&mcs_split(|s| cdf.cdf(s), &scn.radio.mcs_table), scn)
}
