//! Link budgets for both bands: array gains, blockage probability, SINR and
//! coverage radii.

use std::f64::consts::PI;

use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};
use crate::numerics::{db_to_lin, integrate};
use crate::scenario::{ArrayDims, Association, Scenario};

/// Half-power point of the uniform linear array factor, `N pi cos(theta) / 2`.
const HALF_POWER_ARG: f64 = 2.782;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkState {
    LosNonBlocked,
    LosBlocked,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageRadii {
    pub r_m: f64,
    pub r_t_a1: f64,
    pub r_t_a2: f64,
}

impl CoverageRadii {
    pub fn thz(&self, association: Association) -> f64 {
        match association {
            Association::A1 => self.r_t_a1,
            Association::A2 => self.r_t_a2,
        }
    }
}

fn half_power_angles(n: u32) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::Domain("array must have at least one element".into()));
    }
    let c = HALF_POWER_ARG / (f64::from(n) * PI);
    if c > 1.0 {
        return Err(Error::Domain(format!(
            "half-power argument {c} outside [-1, 1] for {n} elements"
        )));
    }
    // (theta_minus, theta_plus) around broadside.
    Ok((c.acos(), (-c).acos()))
}

fn array_factor(n: f64, theta: f64) -> f64 {
    let x = PI * theta.cos() / 2.0;
    let den = x.sin();
    if den.abs() < 1e-12 {
        return n;
    }
    ((n * x).sin() / den).abs()
}

/// Mean array-factor magnitude over the half-power beamwidth of an
/// `n`-element array, used as a linear power gain.
pub fn array_gain(n_elements: u32) -> Result<f64> {
    if n_elements == 1 {
        return Ok(1.0);
    }
    let (lo, hi) = half_power_angles(n_elements)?;
    let n = f64::from(n_elements);
    let v = integrate(|t| array_factor(n, t), lo, hi, 1e-13, 1e-13);
    Ok(v / (hi - lo))
}

/// Gain of a planar array, taking all `V*H` elements as the steering
/// dimension.
pub fn planar_gain(dims: ArrayDims) -> Result<f64> {
    array_gain(dims.elements())
}

/// Half-power beamwidth in degrees, measured around broadside.
pub fn hpbw_degrees(n_elements: u32) -> Result<f64> {
    let (lo, hi) = half_power_angles(n_elements)?;
    Ok((hi - lo).to_degrees())
}

/// The `102/N` rule of thumb.
pub fn hpbw_degrees_approx(n_elements: u32) -> Result<f64> {
    if n_elements == 0 {
        return Err(Error::Domain("array must have at least one element".into()));
    }
    Ok(102.0 / f64::from(n_elements))
}

/// Probability that the LoS path of length `y` (3D) to a BS at
/// `bs_height` is occluded by at least one blocker.
pub fn blockage_probability(y: f64, bs_height: f64, scn: &Scenario) -> Result<f64> {
    let d = &scn.deployment;
    let dh = (bs_height - d.h_u).abs();
    if y.is_nan() || y < dh * (1.0 - 1e-12) {
        return Err(Error::Domain(format!(
            "3D distance {y} shorter than height difference {dh}"
        )));
    }
    let x = (y * y - dh * dh).max(0.0).sqrt();
    let zone = x * (d.h_b - d.h_u) / (bs_height - d.h_u) + d.r_b;
    Ok(-(-2.0 * d.lambda_b * d.r_b * zone).exp_m1())
}

/// Propagation coefficient `A = 10^(2 log10 f + 3.24)` for `f` in GHz.
pub fn propagation_coefficient(f_ghz: f64) -> f64 {
    f_ghz * f_ghz * 10f64.powf(3.24)
}

/// Noise power in W from the dBm figure.
pub fn noise_watts(n0_dbm: f64) -> f64 {
    db_to_lin(n0_dbm - 30.0)
}

/// SINR at the distance where the path loss is unity, so that
/// `sinr(y) = c * y^-zeta * exp(-K y)`.
pub fn mmwave_budget(scn: &Scenario) -> Result<f64> {
    let r = &scn.radio;
    let a = &scn.antenna;
    let g = planar_gain(a.mmwave_bs)? * planar_gain(a.mmwave_ue)?;
    Ok(r.p_m * g / (propagation_coefficient(r.f_m_c) * noise_watts(r.n0) * db_to_lin(r.m_m_i) * db_to_lin(r.l_m)))
}

pub fn thz_budget(scn: &Scenario) -> Result<f64> {
    let r = &scn.radio;
    let a = &scn.antenna;
    let g = planar_gain(a.thz_bs)? * planar_gain(a.thz_ue)?;
    Ok(r.p_t * g / (propagation_coefficient(r.f_t_c) * noise_watts(r.n0) * db_to_lin(r.m_t_i) * db_to_lin(r.l_t)))
}

fn mmwave_exponent(scn: &Scenario, state: LinkState) -> f64 {
    match state {
        LinkState::LosNonBlocked => scn.radio.zeta_m_1,
        LinkState::LosBlocked => scn.radio.zeta_m_2,
    }
}

fn thz_exponent(scn: &Scenario, state: LinkState) -> f64 {
    match state {
        LinkState::LosNonBlocked => scn.radio.zeta_t_1,
        LinkState::LosBlocked => scn.radio.zeta_t_2,
    }
}

/// Linear SINR of a mmWave link of 3D length `y`.
pub fn sinr_mmwave(y: f64, state: LinkState, scn: &Scenario) -> Result<f64> {
    if y.is_nan() || y <= 0.0 {
        return Err(Error::Domain(format!("distance must be positive, got {y}")));
    }
    Ok(mmwave_budget(scn)? * y.powf(-mmwave_exponent(scn, state)))
}

/// Linear SINR of a THz link of 3D length `y`, including molecular
/// absorption.
pub fn sinr_thz(y: f64, state: LinkState, scn: &Scenario) -> Result<f64> {
    if y.is_nan() || y <= 0.0 {
        return Err(Error::Domain(format!("distance must be positive, got {y}")));
    }
    Ok(thz_budget(scn)? * y.powf(-thz_exponent(scn, state)) * (-scn.radio.k_abs * y).exp())
}

/// Log-normal shadowing margin in dB guaranteeing coverage with
/// probability `1 - p_out`.
pub fn shadow_margin(p_out: f64, sigma: f64) -> Result<f64> {
    if !(p_out > 0.0 && p_out < 1.0) {
        return Err(Error::Domain(format!("outage probability {p_out} outside (0, 1)")));
    }
    Ok(std::f64::consts::SQRT_2 * sigma * erfc_inv(2.0 * p_out))
}

/// Lowest MCS threshold, linear.
pub fn min_sinr(scn: &Scenario) -> f64 {
    db_to_lin(scn.radio.mcs_table[0].sinr_db)
}

/// 3D distance at which `c * y^-zeta * exp(-k y)` falls to `target`.
fn budget_range(c: f64, zeta: f64, k: f64, target: f64, dh: f64, what: &str) -> Result<f64> {
    // ln sinr(y) - ln target, strictly decreasing in y.
    let g = |y: f64| c.ln() - zeta * y.ln() - k * y - target.ln();
    let lo = dh.max(1e-9);
    if g(lo) < 0.0 {
        return Err(Error::Infeasible(format!(
            "{what}: SINR at the closest point is below the lowest MCS threshold"
        )));
    }
    if k == 0.0 {
        return Ok((c / target).powf(1.0 / zeta));
    }
    let mut hi = lo * 2.0;
    while g(hi) > 0.0 {
        hi *= 2.0;
    }
    let mut lo = lo;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn horizontal(y: f64, dh: f64, what: &str) -> Result<f64> {
    let arg = y * y - dh * dh;
    if arg < 0.0 {
        return Err(Error::Infeasible(format!(
            "{what}: budget closes before reaching ground level"
        )));
    }
    Ok(arg.sqrt())
}

/// Coverage radii (2D) of the mmWave BS and of the THz BSs under both
/// association schemes.
pub fn coverage_radii(scn: &Scenario) -> Result<CoverageRadii> {
    let r = &scn.radio;
    let d = &scn.deployment;
    let s_min = min_sinr(scn);
    let margin_m = db_to_lin(shadow_margin(r.p_m_o, r.sigma_m_2)?);
    let margin_t = db_to_lin(shadow_margin(r.p_t_o, r.sigma_m_2)?);

    let dh_m = d.h_m_b - d.h_u;
    let c_m = mmwave_budget(scn)? / margin_m;
    let y_m = budget_range(c_m, r.zeta_m_2, 0.0, s_min, dh_m, "mmWave")?;
    let r_m = horizontal(y_m, dh_m, "mmWave")?;

    let dh_t = d.h_t_b - d.h_u;
    let c_t = thz_budget(scn)? / margin_t;
    let y1 = budget_range(c_t, r.zeta_t_2, r.k_abs, s_min, dh_t, "THz blocked")?;
    let y2 = budget_range(c_t, r.zeta_t_1, r.k_abs, s_min, dh_t, "THz non-blocked")?;
    Ok(CoverageRadii {
        r_m,
        r_t_a1: horizontal(y1, dh_t, "THz blocked")?,
        r_t_a2: horizontal(y2, dh_t, "THz non-blocked")?,
    })
}

/// THz radius in use for the configured association scheme, limited to
/// `r_M / sqrt(K)` when coverage capping is on.
pub fn thz_service_radius(scn: &Scenario, radii: &CoverageRadii) -> f64 {
    let r = radii.thz(scn.association);
    if scn.deployment.cap_thz_coverage {
        r.min(radii.r_m / f64::from(scn.deployment.k_thz).sqrt())
    } else {
        r
    }
}
