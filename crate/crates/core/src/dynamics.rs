//! Temporal rates: blockage toggling at both BS types, micromobility
//! outages on THz links and the beamalignment time.

use std::f64::consts::{PI, SQRT_2};
use std::sync::OnceLock;

use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::numerics::integrate;
use crate::radio::{self, CoverageRadii};
use crate::scenario::{AlignmentMode, AntennaParams, Association, MicromobilityParams, Scenario};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRates {
    /// Blockage state changes of mmWave sessions.
    pub nu: f64,
    /// Blockage outages of THz sessions.
    pub nu_b: f64,
    /// Micromobility outages of THz sessions.
    pub nu_m: f64,
    pub t_b: f64,
    pub p_o1: f64,
    /// Only defined with periodic beamalignment.
    pub p_o2: Option<f64>,
}

/// Time to sweep both beams over all elements.
pub fn beamalignment_time(antenna: &AntennaParams) -> f64 {
    f64::from(antenna.thz_bs.elements() + antenna.thz_ue.elements()) * antenna.delta
}

/// Rate at which blockers enter the LoS blockage zone of a UE at 2D
/// distance `x` from a BS at `bs_height`.
pub fn blocker_zone_rate(x: f64, bs_height: f64, scn: &Scenario) -> f64 {
    let d = &scn.deployment;
    let perimeter = 4.0 * d.r_b + 2.0 * x * (d.h_b - d.h_u) / (bs_height - d.h_u);
    0.4 * d.lambda_b * d.v_b * perimeter
}

/// Mean busy period of an M/M/inf queue with arrival rate `alpha` and mean
/// residence `2 r_B / v_B`.
pub fn busy_period(alpha: f64, scn: &Scenario) -> f64 {
    let s = 2.0 * scn.deployment.r_b / scn.deployment.v_b;
    let load = alpha * s;
    if load < 1e-300 {
        return s;
    }
    s * load.exp_m1() / load
}

pub fn mean_blocked_period(x: f64, bs_height: f64, scn: &Scenario) -> f64 {
    busy_period(blocker_zone_rate(x, bs_height, scn), scn)
}

/// Blocked/non-blocked alternation rate at 2D distance `x`.
pub fn toggle_rate(x: f64, bs_height: f64, scn: &Scenario) -> f64 {
    let alpha = blocker_zone_rate(x, bs_height, scn);
    if alpha <= 0.0 {
        return 0.0;
    }
    1.0 / (1.0 / alpha + busy_period(alpha, scn))
}

/// Mean toggle rate of a UE uniform in the annulus `[lo, hi]`.
pub fn annulus_rate(lo: f64, hi: f64, bs_height: f64, scn: &Scenario) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let norm = hi * hi - lo * lo;
    let tol = scn.solver.quad_tol;
    integrate(
        |x| toggle_rate(x, bs_height, scn) * 2.0 * x / norm,
        lo,
        hi,
        tol * 1e-3,
        tol,
    )
}

/// `(nu, nu_B)`: blockage rate of mmWave UEs over the cell (from the
/// minimum separation distance) and, under A2, of THz UEs beyond the
/// blockage-safe radius.
pub fn blockage_rates(scn: &Scenario, radii: &CoverageRadii) -> (f64, f64) {
    let d = &scn.deployment;
    let nu = annulus_rate(d.min_separation.min(radii.r_m), radii.r_m, d.h_m_b, scn);
    let nu_b = match scn.association {
        Association::A1 => 0.0,
        Association::A2 => {
            let outer = radio::thz_service_radius(scn, radii);
            annulus_rate(radii.r_t_a1, outer, d.h_t_b, scn)
        }
    };
    (nu, nu_b)
}

/// Lognormal law of one time-to-outage component (parameters of `ln T`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNormal {
    pub mu: f64,
    pub sigma: f64,
}

impl LogNormal {
    pub fn pdf(&self, t: f64) -> f64 {
        let z = (t.ln() - self.mu) / self.sigma;
        (-0.5 * z * z).exp() / (self.sigma * t * (2.0 * PI).sqrt())
    }

    pub fn sf(&self, t: f64) -> f64 {
        0.5 * erfc((t.ln() - self.mu) / (self.sigma * SQRT_2))
    }
}

/// Components in the order x, y, phi, theta.
pub type OutageComponents = [LogNormal; 4];

/// Exit-time density of standard Brownian motion from `(-1, 1)` started at 0.
pub fn brownian_exit_pdf(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let mut s = 0.0;
    if t < 1.0 {
        let c = 2.0 / (2.0 * PI * t * t * t).sqrt();
        for k in 0..50 {
            let m = (2 * k + 1) as f64;
            let term = m * (-m * m / (2.0 * t)).exp();
            s += if k % 2 == 0 { term } else { -term };
            if term < 1e-300 {
                break;
            }
        }
        c * s
    } else {
        for k in 0..50 {
            let m = (2 * k + 1) as f64;
            let term = m * (-m * m * PI * PI * t / 8.0).exp();
            s += if k % 2 == 0 { term } else { -term };
            if term < 1e-300 {
                break;
            }
        }
        0.5 * PI * s
    }
}

/// Mean and standard deviation of `ln tau` for the standard exit time.
pub fn brownian_exit_log_moments() -> (f64, f64) {
    static MOMENTS: OnceLock<(f64, f64)> = OnceLock::new();
    *MOMENTS.get_or_init(|| {
        // Substituting t = e^u.
        let g = |u: f64| {
            let t = u.exp();
            brownian_exit_pdf(t) * t
        };
        let m1 = integrate(|u| u * g(u), -8.0, 6.0, 1e-14, 1e-13);
        let m2 = integrate(|u| u * u * g(u), -8.0, 6.0, 1e-14, 1e-13);
        (m1, (m2 - m1 * m1).sqrt())
    })
}

/// Lognormal components of the time to outage. Explicit parameters win;
/// otherwise each axis is a driftless Brownian motion with scale `delta`
/// leaving a window of half-width equal to half the THz BS beamwidth
/// (angles) or its footprint at the reference distance (displacements).
pub fn outage_components(scn: &Scenario) -> Result<OutageComponents> {
    let m = &scn.micromobility;
    if let Some(v) = m.explicit() {
        return Ok([
            LogNormal { mu: v[0], sigma: v[1] },
            LogNormal { mu: v[2], sigma: v[3] },
            LogNormal { mu: v[4], sigma: v[5] },
            LogNormal { mu: v[6], sigma: v[7] },
        ]);
    }
    let bs = scn.antenna.thz_bs;
    let half_beam = radio::hpbw_degrees(bs.v.max(bs.h))? / 2.0;
    let half_shift = m.ref_distance * half_beam.to_radians().tan();
    let (e_ln, sd_ln) = brownian_exit_log_moments();
    let comp = |a: f64, delta: f64| LogNormal {
        mu: 2.0 * (a / delta).ln() + e_ln,
        sigma: sd_ln,
    };
    let xy = comp(half_shift, m.delta_xy);
    let ang = comp(half_beam, m.delta_angle);
    Ok([xy, xy, ang, ang])
}

/// Density of the minimum of the four component times.
pub fn outage_pdf(t: f64, c: &OutageComponents) -> Result<f64> {
    if t.is_nan() || t <= 0.0 {
        return Err(Error::Domain(format!("time must be positive, got {t}")));
    }
    let sf: Vec<f64> = c.iter().map(|l| l.sf(t)).collect();
    let mut f = 0.0;
    for (i, l) in c.iter().enumerate() {
        let mut term = l.pdf(t);
        for (j, s) in sf.iter().enumerate() {
            if i != j {
                term *= s;
            }
        }
        f += term;
    }
    Ok(f)
}

pub fn outage_cdf(t: f64, c: &OutageComponents) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    1.0 - c.iter().map(|l| l.sf(t)).product::<f64>()
}

/// Time-to-outage density for a micromobility parameter set.
pub fn time_to_outage_pdf(t: f64, mm: &MicromobilityParams) -> Result<f64> {
    let mut scn = crate::scenario::default_scenario();
    scn.micromobility = mm.clone();
    outage_pdf(t, &outage_components(&scn)?)
}

/// Range of `ln t` outside of which the density is negligible.
fn log_support(c: &OutageComponents) -> (f64, f64) {
    let lo = c.iter().map(|l| l.mu - 12.0 * l.sigma).fold(f64::INFINITY, f64::min);
    let hi = c.iter().map(|l| l.mu + 12.0 * l.sigma).fold(f64::INFINITY, f64::min);
    (lo, hi.max(lo + 1.0))
}

/// `int g(t) f(t) dt` over `(a, b)`, integrated in `ln t`.
fn expect_over<G: Fn(f64) -> f64>(c: &OutageComponents, g: G, a: f64, b: f64, tol: f64) -> f64 {
    let (lo, hi) = log_support(c);
    let lo = if a > 0.0 { lo.max(a.ln()) } else { lo };
    let hi = if b.is_finite() { hi.min(b.ln()) } else { hi };
    if hi <= lo {
        return 0.0;
    }
    let h = |u: f64| {
        let t = u.exp();
        g(t) * outage_pdf(t, c).unwrap_or(0.0) * t
    };
    // Split so that the narrow peak is always sampled.
    let pieces = 16;
    let w = (hi - lo) / pieces as f64;
    (0..pieces)
        .map(|i| integrate(h, lo + i as f64 * w, lo + (i + 1) as f64 * w, tol * 1e-3, tol))
        .sum()
}

/// Long-run fraction of time in outage with on-demand beamalignment.
pub fn outage_fraction_on_demand(c: &OutageComponents, t_b: f64) -> f64 {
    if t_b <= 0.0 {
        return 0.0;
    }
    expect_over(c, |t| t_b / (t + t_b), 0.0, f64::INFINITY, 1e-12)
}

/// Fraction of time in outage with beamalignment every `t_u` seconds.
pub fn outage_fraction_periodic(c: &OutageComponents, t_b: f64, t_u: f64) -> f64 {
    let cycle = t_u + t_b;
    let tail = 1.0 - outage_cdf(t_u, c);
    t_b * tail / cycle + expect_over(c, |t| (cycle - t) / cycle, 0.0, t_u, 1e-12)
}

/// Micromobility outage rate of a THz session.
pub fn micromobility_rate(scn: &Scenario) -> Result<(f64, f64, Option<f64>)> {
    let c = outage_components(scn)?;
    let t_b = beamalignment_time(&scn.antenna);
    let p_o1 = outage_fraction_on_demand(&c, t_b);
    match scn.traffic.alignment_mode {
        AlignmentMode::OnDemand => {
            let nu_m = if t_b > 0.0 { p_o1 / t_b } else { 0.0 };
            Ok((nu_m, p_o1, None))
        }
        AlignmentMode::Periodic => {
            let t_u = scn
                .traffic
                .t_u
                .ok_or_else(|| Error::validation("traffic.T_U", "required for periodic beamalignment"))?;
            let p_o2 = outage_fraction_periodic(&c, t_b, t_u);
            let cycle = t_u + t_b;
            let tail = 1.0 - outage_cdf(t_u, &c);
            let mean_cycle = expect_over(&c, |t| cycle - t, 0.0, t_u, 1e-12) + tail * t_b;
            let nu_m = if mean_cycle > 0.0 { p_o2 / mean_cycle } else { 0.0 };
            Ok((nu_m, p_o1, Some(p_o2)))
        }
    }
}

pub fn event_rates(scn: &Scenario, radii: &CoverageRadii) -> Result<EventRates> {
    let (nu, nu_b) = blockage_rates(scn, radii);
    let (nu_m, p_o1, p_o2) = micromobility_rate(scn)?;
    Ok(EventRates {
        nu,
        nu_b,
        nu_m,
        t_b: beamalignment_time(&scn.antenna),
        p_o1,
        p_o2,
    })
}
