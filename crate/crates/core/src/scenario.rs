//! Input parameter set for one evaluation.
//!
//! A [`Scenario`] is read from a TOML file whose layout mirrors the structs
//! below (`[radio]`, `[antenna]`, `[deployment]`, `[traffic]`,
//! `[micromobility]`, `[solver]` plus top-level `association` and
//! `strategy`). Every key is optional and falls back to the default
//! deployment; unknown keys are rejected.
//!
//! Units: frequencies in GHz, bandwidths in Hz, powers in W, gains and
//! margins in dB, lengths in m, rates in 1/s, times in s.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

const DEFAULT_MCS_TABLE: &str = include_str!("../data/mcs_nr_v1.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Association {
    /// Outage avoidance: THz coverage from the blocked-state budget.
    A1,
    /// Coverage enhancement: THz coverage from the non-blocked budget.
    A2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// No multi-connectivity.
    S1,
    /// Blockage rerouting, micromobility outages tolerated.
    S2,
    /// Blockage rerouting, micromobility outages not tolerated.
    S3,
    /// Rerouting on both blockage and micromobility outages.
    S4,
}

impl Association {
    pub const ALL: [Association; 2] = [Association::A1, Association::A2];
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::S1, Strategy::S2, Strategy::S3, Strategy::S4];
}

impl fmt::Display for Association {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// One row of the MCS table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McsEntry {
    pub index: u32,
    /// Lowest SINR (dB) at which this MCS is used.
    pub sinr_db: f64,
    /// bit/s/Hz
    pub efficiency: f64,
}

/// Parses the whitespace-separated MCS table format
/// (`index sinr_threshold_db spectral_efficiency`, `#` comments).
pub fn parse_mcs_table(text: &str) -> Result<Vec<McsEntry>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 3 {
            return Err(Error::Parse(format!(
                "MCS table line {}: expected 3 columns, found {}",
                lineno + 1,
                cols.len()
            )));
        }
        let bad = |what: &str| Error::Parse(format!("MCS table line {}: bad {what}", lineno + 1));
        rows.push(McsEntry {
            index: cols[0].parse().map_err(|_| bad("index"))?,
            sinr_db: cols[1].parse().map_err(|_| bad("SINR threshold"))?,
            efficiency: cols[2].parse().map_err(|_| bad("spectral efficiency"))?,
        });
    }
    Ok(rows)
}

pub fn default_mcs_table() -> Vec<McsEntry> {
    parse_mcs_table(DEFAULT_MCS_TABLE).expect("bundled MCS table parses")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioParams {
    #[serde(rename = "f_M_c")]
    pub f_m_c: f64,
    #[serde(rename = "f_T_c")]
    pub f_t_c: f64,
    #[serde(rename = "B_M")]
    pub b_m: f64,
    #[serde(rename = "P_M")]
    pub p_m: f64,
    #[serde(rename = "P_T")]
    pub p_t: f64,
    /// Receiver noise power over the carrier bandwidth, dBm.
    #[serde(rename = "N0")]
    pub n0: f64,
    #[serde(rename = "M_M_I")]
    pub m_m_i: f64,
    #[serde(rename = "M_T_I")]
    pub m_t_i: f64,
    /// Lumped losses not captured by the propagation model (dB).
    #[serde(rename = "L_M")]
    pub l_m: f64,
    #[serde(rename = "L_T")]
    pub l_t: f64,
    /// Non-blocked path-loss exponent.
    pub zeta_m_1: f64,
    /// Blocked path-loss exponent.
    pub zeta_m_2: f64,
    pub zeta_t_1: f64,
    pub zeta_t_2: f64,
    /// Shadow-fading standard deviation in the blocked state (dB), used for
    /// both bands.
    pub sigma_m_2: f64,
    /// Beer-Lambert absorption coefficient at the THz carrier, 1/m.
    #[serde(rename = "K_abs")]
    pub k_abs: f64,
    #[serde(rename = "S_min_table")]
    pub mcs_table: Vec<McsEntry>,
    #[serde(rename = "p_M_O")]
    pub p_m_o: f64,
    #[serde(rename = "p_T_O")]
    pub p_t_o: f64,
    /// NR subcarrier spacing of the mmWave carrier, kHz.
    pub subcarrier_spacing_khz: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            f_m_c: 28.0,
            f_t_c: 300.0,
            b_m: 400e6,
            p_m: 2.0,
            p_t: 2.0,
            n0: -84.0,
            m_m_i: 3.0,
            m_t_i: 3.0,
            l_m: 16.88,
            l_t: 21.3,
            zeta_m_1: 2.1,
            zeta_m_2: 3.19,
            zeta_t_1: 2.1,
            zeta_t_2: 3.19,
            sigma_m_2: 7.2,
            k_abs: 0.0066,
            mcs_table: default_mcs_table(),
            p_m_o: 0.05,
            p_t_o: 0.05,
            subcarrier_spacing_khz: 120.0,
        }
    }
}

/// Planar array size, written `VxH` in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ArrayDims {
    pub v: u32,
    pub h: u32,
}

impl ArrayDims {
    pub const fn new(v: u32, h: u32) -> Self {
        Self { v, h }
    }

    pub fn elements(&self) -> u32 {
        self.v * self.h
    }
}

impl fmt::Display for ArrayDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.v, self.h)
    }
}

impl FromStr for ArrayDims {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (v, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("array size `{s}` is not of the form VxH"))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| format!("array size `{s}` is not of the form VxH"))
        };
        Ok(ArrayDims::new(parse(v)?, parse(h)?))
    }
}

impl Serialize for ArrayDims {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ArrayDims {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AntennaParams {
    pub mmwave_bs: ArrayDims,
    pub mmwave_ue: ArrayDims,
    pub thz_bs: ArrayDims,
    pub thz_ue: ArrayDims,
    /// Array switching time, s.
    pub delta: f64,
}

/// Beamalignment time targeted by the default switching time.
pub const DEFAULT_BEAMALIGNMENT_TIME: f64 = 1.0 / 1800.0;

impl Default for AntennaParams {
    fn default() -> Self {
        let thz_bs = ArrayDims::new(64, 4);
        let thz_ue = ArrayDims::new(4, 4);
        let delta = DEFAULT_BEAMALIGNMENT_TIME / f64::from(thz_bs.elements() + thz_ue.elements());
        Self {
            mmwave_bs: ArrayDims::new(8, 4),
            mmwave_ue: ArrayDims::new(4, 4),
            thz_bs,
            thz_ue,
            delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeploymentParams {
    #[serde(rename = "K_thz")]
    pub k_thz: u32,
    #[serde(rename = "h_M_B")]
    pub h_m_b: f64,
    #[serde(rename = "h_T_B")]
    pub h_t_b: f64,
    #[serde(rename = "h_B")]
    pub h_b: f64,
    #[serde(rename = "h_U")]
    pub h_u: f64,
    #[serde(rename = "lambda_B")]
    pub lambda_b: f64,
    #[serde(rename = "r_B")]
    pub r_b: f64,
    #[serde(rename = "v_B")]
    pub v_b: f64,
    /// Random-direction-model run length (informational).
    pub tau_run: f64,
    /// Minimum 2D distance between a UE and the mmWave BS.
    pub min_separation: f64,
    /// Limit the THz service radius to `r_M / sqrt(K)` so that the THz cells
    /// never claim more than the whole mmWave cell.
    pub cap_thz_coverage: bool,
}

impl Default for DeploymentParams {
    fn default() -> Self {
        Self {
            k_thz: 5,
            h_m_b: 10.0,
            h_t_b: 10.0,
            h_b: 1.8,
            h_u: 1.7,
            lambda_b: 0.1,
            r_b: 0.4,
            v_b: 1.0,
            tau_run: 10.0,
            min_separation: 3.0,
            cap_thz_coverage: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlignmentMode {
    OnDemand,
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficParams {
    /// Session arrival density, sessions/s/m^2.
    #[serde(rename = "lambda_A")]
    pub lambda_a: f64,
    /// Requested session rate, bit/s.
    #[serde(rename = "C_rate")]
    pub c_rate: f64,
    pub mu: f64,
    #[serde(rename = "beta_B")]
    pub beta_b: f64,
    #[serde(rename = "beta_M")]
    pub beta_m: f64,
    /// Application outage tolerance; defaults to the beamalignment time.
    #[serde(rename = "T_O", skip_serializing_if = "Option::is_none")]
    pub t_o: Option<f64>,
    /// Periodic beamalignment interval.
    #[serde(rename = "T_U", skip_serializing_if = "Option::is_none")]
    pub t_u: Option<f64>,
    pub alignment_mode: AlignmentMode,
}

impl Default for TrafficParams {
    fn default() -> Self {
        Self {
            lambda_a: 1e-4,
            c_rate: 10e6,
            mu: 0.1,
            beta_b: 1.25,
            beta_m: 1800.0,
            t_o: None,
            t_u: None,
            alignment_mode: AlignmentMode::OnDemand,
        }
    }
}

/// Micromobility description. Unless all eight `mu_*`/`sigma_*` keys are
/// given explicitly, the lognormal time-to-outage components are derived
/// from the drift magnitudes (see [`crate::dynamics::outage_components`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MicromobilityParams {
    /// Cartesian displacement scale, m/s^(1/2).
    pub delta_xy: f64,
    /// Yaw/pitch rotation scale, deg/s^(1/2).
    pub delta_angle: f64,
    /// UE-BS distance used to convert beamwidth into a displacement margin.
    pub ref_distance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_y: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_y: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_phi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_phi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_theta: Option<f64>,
}

impl Default for MicromobilityParams {
    fn default() -> Self {
        Self {
            delta_xy: 0.03,
            delta_angle: 0.1,
            ref_distance: 10.0,
            mu_x: None,
            sigma_x: None,
            mu_y: None,
            sigma_y: None,
            mu_phi: None,
            sigma_phi: None,
            mu_theta: None,
            sigma_theta: None,
        }
    }
}

impl MicromobilityParams {
    fn explicit_fields(&self) -> [(&'static str, Option<f64>); 8] {
        [
            ("mu_x", self.mu_x),
            ("sigma_x", self.sigma_x),
            ("mu_y", self.mu_y),
            ("sigma_y", self.sigma_y),
            ("mu_phi", self.mu_phi),
            ("sigma_phi", self.sigma_phi),
            ("mu_theta", self.mu_theta),
            ("sigma_theta", self.sigma_theta),
        ]
    }

    /// `Some([mu_x, sigma_x, mu_y, sigma_y, mu_phi, sigma_phi, mu_theta,
    /// sigma_theta])` when all are set.
    pub fn explicit(&self) -> Option<[f64; 8]> {
        let f = self.explicit_fields();
        let mut out = [0.0; 8];
        for (i, (_, v)) in f.iter().enumerate() {
            out[i] = (*v)?;
        }
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    /// PRBs at the mmWave BS.
    #[serde(rename = "R_prb")]
    pub r_prb: u32,
    /// Simultaneous sessions at the mmWave BS; defaults to `R_prb`.
    #[serde(rename = "N_srv", skip_serializing_if = "Option::is_none")]
    pub n_srv: Option<u32>,
    pub fp_tol: f64,
    pub fp_max_iter: u32,
    pub quad_tol: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            r_prb: 264,
            n_srv: None,
            fp_tol: 1e-10,
            fp_max_iter: 500,
            quad_tol: 1e-10,
        }
    }
}

impl SolverParams {
    pub fn servers(&self) -> u32 {
        self.n_srv.unwrap_or(self.r_prb)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub association: Association,
    pub strategy: Strategy,
    pub radio: RadioParams,
    pub antenna: AntennaParams,
    pub deployment: DeploymentParams,
    pub traffic: TrafficParams,
    pub micromobility: MicromobilityParams,
    pub solver: SolverParams,
}

impl Default for Scenario {
    fn default() -> Self {
        default_scenario()
    }
}

/// The default deployment (28 GHz / 300 GHz, 400 MHz mmWave carrier,
/// 8x4 mmWave and 64x4 THz BS arrays, five THz BSs, 0.1 blockers/m^2).
pub fn default_scenario() -> Scenario {
    Scenario {
        association: Association::A1,
        strategy: Strategy::S1,
        radio: RadioParams::default(),
        antenna: AntennaParams::default(),
        deployment: DeploymentParams::default(),
        traffic: TrafficParams::default(),
        micromobility: MicromobilityParams::default(),
        solver: SolverParams::default(),
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Scenario::from_toml(&text)
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario> {
        let scn: Scenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        scn.validate()?;
        Ok(scn)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Outage tolerance, falling back to the beamalignment time.
    pub fn outage_tolerance(&self) -> f64 {
        self.traffic
            .t_o
            .unwrap_or_else(|| crate::dynamics::beamalignment_time(&self.antenna))
    }

    /// Checks every documented invariant; the first violation is reported
    /// with its dotted field path.
    pub fn validate(&self) -> Result<()> {
        fn pos(field: &str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::validation(field, format!("must be > 0, got {v}")))
            }
        }
        fn nonneg(field: &str, v: f64) -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::validation(field, format!("must be >= 0, got {v}")))
            }
        }
        fn finite(field: &str, v: f64) -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(field, format!("must be finite, got {v}")))
            }
        }
        fn open_unit(field: &str, v: f64) -> Result<()> {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::validation(field, format!("must lie in (0, 1), got {v}")))
            }
        }
        fn exponent(field: &str, v: f64) -> Result<()> {
            if v.is_finite() && v >= 2.0 {
                Ok(())
            } else {
                Err(Error::validation(field, format!("must be >= 2, got {v}")))
            }
        }

        let r = &self.radio;
        pos("radio.f_M_c", r.f_m_c)?;
        pos("radio.f_T_c", r.f_t_c)?;
        pos("radio.B_M", r.b_m)?;
        pos("radio.P_M", r.p_m)?;
        pos("radio.P_T", r.p_t)?;
        finite("radio.N0", r.n0)?;
        finite("radio.M_M_I", r.m_m_i)?;
        finite("radio.M_T_I", r.m_t_i)?;
        finite("radio.L_M", r.l_m)?;
        finite("radio.L_T", r.l_t)?;
        exponent("radio.zeta_m_1", r.zeta_m_1)?;
        exponent("radio.zeta_m_2", r.zeta_m_2)?;
        exponent("radio.zeta_t_1", r.zeta_t_1)?;
        exponent("radio.zeta_t_2", r.zeta_t_2)?;
        pos("radio.sigma_m_2", r.sigma_m_2)?;
        nonneg("radio.K_abs", r.k_abs)?;
        open_unit("radio.p_M_O", r.p_m_o)?;
        open_unit("radio.p_T_O", r.p_t_o)?;
        pos("radio.subcarrier_spacing_khz", r.subcarrier_spacing_khz)?;
        if r.mcs_table.is_empty() {
            return Err(Error::validation("radio.S_min_table", "must not be empty"));
        }
        for (i, row) in r.mcs_table.iter().enumerate() {
            finite(&format!("radio.S_min_table[{i}].sinr_db"), row.sinr_db)?;
            pos(&format!("radio.S_min_table[{i}].efficiency"), row.efficiency)?;
        }
        for (i, w) in r.mcs_table.windows(2).enumerate() {
            if w[1].sinr_db <= w[0].sinr_db {
                return Err(Error::validation(
                    format!("radio.S_min_table[{}].sinr_db", i + 1),
                    "thresholds must be strictly increasing",
                ));
            }
        }

        let a = &self.antenna;
        for (name, dims) in [
            ("antenna.mmwave_bs", a.mmwave_bs),
            ("antenna.mmwave_ue", a.mmwave_ue),
            ("antenna.thz_bs", a.thz_bs),
            ("antenna.thz_ue", a.thz_ue),
        ] {
            if dims.v < 1 || dims.h < 1 {
                return Err(Error::validation(name, "element counts must be >= 1"));
            }
        }
        pos("antenna.delta", a.delta)?;

        let d = &self.deployment;
        if d.k_thz < 1 {
            return Err(Error::validation("deployment.K_thz", "must be >= 1"));
        }
        pos("deployment.h_M_B", d.h_m_b)?;
        pos("deployment.h_T_B", d.h_t_b)?;
        pos("deployment.h_B", d.h_b)?;
        pos("deployment.h_U", d.h_u)?;
        nonneg("deployment.lambda_B", d.lambda_b)?;
        pos("deployment.r_B", d.r_b)?;
        pos("deployment.v_B", d.v_b)?;
        pos("deployment.tau_run", d.tau_run)?;
        nonneg("deployment.min_separation", d.min_separation)?;
        if d.h_b < d.h_u {
            return Err(Error::validation(
                "deployment.h_B",
                format!(
                    "blockers must be at least as tall as UEs (h_B={} < h_U={})",
                    d.h_b, d.h_u
                ),
            ));
        }
        if d.h_m_b <= d.h_b {
            return Err(Error::validation(
                "deployment.h_M_B",
                "mmWave BS must be above blockers and UEs",
            ));
        }
        if d.h_t_b <= d.h_b {
            return Err(Error::validation(
                "deployment.h_T_B",
                "THz BS must be above blockers and UEs",
            ));
        }

        let t = &self.traffic;
        pos("traffic.lambda_A", t.lambda_a)?;
        pos("traffic.C_rate", t.c_rate)?;
        pos("traffic.mu", t.mu)?;
        pos("traffic.beta_B", t.beta_b)?;
        pos("traffic.beta_M", t.beta_m)?;
        if let Some(t_o) = t.t_o {
            nonneg("traffic.T_O", t_o)?;
        }
        if let Some(t_u) = t.t_u {
            pos("traffic.T_U", t_u)?;
        }
        if t.alignment_mode == AlignmentMode::Periodic && t.t_u.is_none() {
            return Err(Error::validation(
                "traffic.T_U",
                "periodic beamalignment requires an interval",
            ));
        }

        let m = &self.micromobility;
        pos("micromobility.delta_xy", m.delta_xy)?;
        pos("micromobility.delta_angle", m.delta_angle)?;
        pos("micromobility.ref_distance", m.ref_distance)?;
        let fields = m.explicit_fields();
        let given = fields.iter().filter(|(_, v)| v.is_some()).count();
        if given != 0 && given != fields.len() {
            let missing = fields.iter().find(|(_, v)| v.is_none()).expect("some missing").0;
            return Err(Error::validation(
                format!("micromobility.{missing}"),
                "explicit lognormal components must be given for all four axes",
            ));
        }
        for (name, v) in fields {
            if let Some(v) = v {
                if name.starts_with("sigma") {
                    pos(&format!("micromobility.{name}"), v)?;
                } else {
                    finite(&format!("micromobility.{name}"), v)?;
                }
            }
        }

        let s = &self.solver;
        if s.r_prb < 1 {
            return Err(Error::validation("solver.R_prb", "must be >= 1"));
        }
        if s.servers() < 1 {
            return Err(Error::validation("solver.N_srv", "must be >= 1"));
        }
        open_unit("solver.fp_tol", s.fp_tol)?;
        open_unit("solver.quad_tol", s.quad_tol)?;
        if s.fp_max_iter < 1 {
            return Err(Error::validation("solver.fp_max_iter", "must be >= 1"));
        }
        Ok(())
    }
}
