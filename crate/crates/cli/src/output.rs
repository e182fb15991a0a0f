//! Result rows and their CSV / NDJSON encodings.

use std::io::Write;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thzmm_core::strategies::StrategyReport;
use thzmm_core::Scenario;
use thzmm_sim::SimEstimate;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Ndjson,
}

/// SHA-256 of the canonical TOML form of a scenario, hex encoded.
pub fn scenario_hash(scn: &Scenario) -> String {
    Sha256::digest(scn.to_toml().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub scenario_hash: String,
    pub association: String,
    pub strategy: String,
    pub parameter: Option<String>,
    pub value: Option<f64>,
    pub mode: &'static str,
    pub pi_n: f64,
    pub pi_o: f64,
    pub pi_o_mmw: f64,
    pub pi_o_thz: f64,
    pub utilization: f64,
    pub outer_iterations: Option<usize>,
    pub inner_iterations: Option<usize>,
    pub residual: Option<f64>,
    pub pi_n_ci: Option<f64>,
    pub pi_o_ci: Option<f64>,
    pub pi_o_mmw_ci: Option<f64>,
    pub pi_o_thz_ci: Option<f64>,
    pub utilization_ci: Option<f64>,
    pub seed: Option<u64>,
    /// Simulated rows in `both` mode: whether the analytic pi_N, pi_O and
    /// utilization lie within three standard errors.
    pub agreement: Option<bool>,
}

/// Shortest round-trip text; scientific notation away from unit scale.
trait Cell {
    fn cell(&self) -> String;
}

impl Cell for f64 {
    fn cell(&self) -> String {
        let a = self.abs();
        if a == 0.0 || (1e-4..1e6).contains(&a) {
            self.to_string()
        } else {
            format!("{self:e}")
        }
    }
}

macro_rules! plain_cell {
    ($($t:ty),*) => {$(impl Cell for $t {
        fn cell(&self) -> String {
            self.to_string()
        }
    })*};
}
plain_cell!(usize, u64, bool, String);

const COLUMNS: [&str; 21] = [
    "scenario_hash",
    "association",
    "strategy",
    "parameter",
    "value",
    "mode",
    "pi_n",
    "pi_o",
    "pi_o_mmw",
    "pi_o_thz",
    "utilization",
    "outer_iterations",
    "inner_iterations",
    "residual",
    "pi_n_ci",
    "pi_o_ci",
    "pi_o_mmw_ci",
    "pi_o_thz_ci",
    "utilization_ci",
    "seed",
    "agreement",
];

pub struct Point<'a> {
    pub scn: &'a Scenario,
    pub parameter: Option<&'a str>,
    pub value: Option<f64>,
}

impl ResultRow {
    fn base(p: &Point, mode: &'static str) -> Self {
        Self {
            scenario_hash: scenario_hash(p.scn),
            association: p.scn.association.to_string(),
            strategy: p.scn.strategy.to_string(),
            parameter: p.parameter.map(str::to_string),
            value: p.value,
            mode,
            pi_n: 0.0,
            pi_o: 0.0,
            pi_o_mmw: 0.0,
            pi_o_thz: 0.0,
            utilization: 0.0,
            outer_iterations: None,
            inner_iterations: None,
            residual: None,
            pi_n_ci: None,
            pi_o_ci: None,
            pi_o_mmw_ci: None,
            pi_o_thz_ci: None,
            utilization_ci: None,
            seed: None,
            agreement: None,
        }
    }

    pub fn analytic(p: &Point, r: &StrategyReport) -> Self {
        let c = r.convergence;
        Self {
            pi_n: r.pi_n,
            pi_o: r.pi_o,
            pi_o_mmw: r.pi_o_mmw,
            pi_o_thz: r.pi_o_thz,
            utilization: r.utilization,
            outer_iterations: Some(c.outer_iterations),
            inner_iterations: Some(c.inner_iterations),
            residual: Some(c.outer_residual.max(c.inner_residual)),
            ..Self::base(p, "analytic")
        }
    }

    pub fn simulated(p: &Point, e: &SimEstimate, seed: u64, reference: Option<&StrategyReport>) -> Self {
        Self {
            pi_n: e.pi_n.mean,
            pi_o: e.pi_o.mean,
            pi_o_mmw: e.pi_o_mmw.mean,
            pi_o_thz: e.pi_o_thz.mean,
            utilization: e.utilization.mean,
            pi_n_ci: Some(e.pi_n.ci_half_width),
            pi_o_ci: Some(e.pi_o.ci_half_width),
            pi_o_mmw_ci: Some(e.pi_o_mmw.ci_half_width),
            pi_o_thz_ci: Some(e.pi_o_thz.ci_half_width),
            utilization_ci: Some(e.utilization.ci_half_width),
            seed: Some(seed),
            agreement: reference.map(|r| {
                e.agrees(e.pi_n, r.pi_n) && e.agrees(e.pi_o, r.pi_o) && e.agrees(e.utilization, r.utilization)
            }),
            ..Self::base(p, "simulate")
        }
    }

    fn csv_fields(&self) -> Vec<String> {
        fn opt<T: Cell>(v: &Option<T>) -> String {
            v.as_ref().map(Cell::cell).unwrap_or_default()
        }
        vec![
            self.scenario_hash.clone(),
            self.association.clone(),
            self.strategy.clone(),
            opt(&self.parameter),
            opt(&self.value),
            self.mode.to_string(),
            self.pi_n.cell(),
            self.pi_o.cell(),
            self.pi_o_mmw.cell(),
            self.pi_o_thz.cell(),
            self.utilization.cell(),
            opt(&self.outer_iterations),
            opt(&self.inner_iterations),
            opt(&self.residual),
            opt(&self.pi_n_ci),
            opt(&self.pi_o_ci),
            opt(&self.pi_o_mmw_ci),
            opt(&self.pi_o_thz_ci),
            opt(&self.utilization_ci),
            opt(&self.seed),
            opt(&self.agreement),
        ]
    }
}

pub fn write_rows(out: &mut dyn Write, format: Format, rows: &[ResultRow]) -> std::io::Result<()> {
    match format {
        Format::Csv => {
            writeln!(
                out,
                "# thzmm {} results schema v{SCHEMA_VERSION}",
                env!("CARGO_PKG_VERSION")
            )?;
            writeln!(out, "{}", COLUMNS.join(","))?;
            for r in rows {
                writeln!(out, "{}", r.csv_fields().join(","))?;
            }
        }
        Format::Ndjson => {
            let header = serde_json::json!({
                "schema": "thzmm-results",
                "version": SCHEMA_VERSION,
                "generator": format!("thzmm {}", env!("CARGO_PKG_VERSION")),
            });
            writeln!(out, "{header}")?;
            for r in rows {
                writeln!(out, "{}", serde_json::to_string(r).map_err(std::io::Error::other)?)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use thzmm_core::default_scenario;

    #[test]
    fn hash_tracks_semantic_changes() {
        let a = default_scenario();
        let mut b = a.clone();
        assert_eq!(scenario_hash(&a), scenario_hash(&b));
        b.deployment.lambda_b = 0.2;
        assert_ne!(scenario_hash(&a), scenario_hash(&b));
        assert_eq!(scenario_hash(&a).len(), 64);
    }

    #[test]
    fn csv_row_width_matches_header() {
        let scn = default_scenario();
        let p = Point {
            scn: &scn,
            parameter: None,
            value: None,
        };
        let r = ResultRow::base(&p, "analytic");
        assert_eq!(r.csv_fields().len(), COLUMNS.len());
    }

    #[test]
    fn floats_round_trip() {
        for v in [0.0, 5.156123419831371e-50, 0.1253645635485408, 3e7, -2.5e-9] {
            assert_eq!(v.cell().parse::<f64>().unwrap(), v);
        }
        assert_eq!(5.1e-50.cell(), "5.1e-50");
    }
}
