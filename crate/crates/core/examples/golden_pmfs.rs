//! Regenerates the golden demand pmfs under `tests/golden/` by sampling UE
//! positions and blockage states directly.
//!
//! cargo run --release -p thzmm-core --example golden_pmfs

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thzmm_core::demand::prbs_for;
use thzmm_core::numerics::lin_to_db;
use thzmm_core::radio::{blockage_probability, coverage_radii, sinr_mmwave, thz_service_radius, LinkState};
use thzmm_core::scenario::{default_scenario, Scenario};

const SAMPLES: usize = 10_000_000;

fn uniform_in_disc(rng: &mut ChaCha8Rng, r: f64) -> (f64, f64) {
    let rad = r * rng.random::<f64>().sqrt();
    let ang = rng.random::<f64>() * std::f64::consts::TAU;
    (rad * ang.cos(), rad * ang.sin())
}

/// PRB count for a 2D distance, `None` below the lowest MCS.
fn demand(x: f64, scn: &Scenario, rng: &mut ChaCha8Rng) -> Option<usize> {
    let dh = scn.deployment.h_m_b - scn.deployment.h_u;
    let d = (x * x + dh * dh).sqrt();
    let p = blockage_probability(d, scn.deployment.h_m_b, scn).unwrap();
    let state = if rng.random::<f64>() < p {
        LinkState::LosBlocked
    } else {
        LinkState::LosNonBlocked
    };
    let s = lin_to_db(sinr_mmwave(d, state, scn).unwrap());
    let entry = scn.radio.mcs_table.iter().rev().find(|m| m.sinr_db <= s)?;
    Some(prbs_for(entry, scn))
}

fn write(path: &Path, title: &str, seed: u64, counts: BTreeMap<usize, usize>, infeasible: usize) {
    let mut out = format!("# {title}\n# {SAMPLES} samples, ChaCha8 seed {seed}\n");
    for (r, c) in counts {
        writeln!(out, "{r} {:.8e}", c as f64 / SAMPLES as f64).unwrap();
    }
    writeln!(out, "infeasible {:.8e}", infeasible as f64 / SAMPLES as f64).unwrap();
    std::fs::write(path, out).unwrap();
}

fn main() {
    let scn = default_scenario();
    let radii = coverage_radii(&scn).unwrap();
    let r_t = thz_service_radius(&scn, &radii);
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    std::fs::create_dir_all(&dir).unwrap();

    let sample = |seed: u64, rerouted: bool| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = BTreeMap::new();
        let mut infeasible = 0;
        for _ in 0..SAMPLES {
            let x = if rerouted {
                let (bx, by) = uniform_in_disc(&mut rng, radii.r_m);
                let (ux, uy) = uniform_in_disc(&mut rng, r_t);
                (bx + ux).hypot(by + uy)
            } else {
                let (x, y) = uniform_in_disc(&mut rng, radii.r_m);
                x.hypot(y)
            };
            match demand(x, &scn, &mut rng) {
                Some(r) => *counts.entry(r).or_insert(0) += 1,
                None => infeasible += 1,
            }
        }
        (counts, infeasible)
    };
    let (c1, i1) = sample(101, false);
    write(
        &dir.join("p1_default.txt"),
        "native mmWave demand pmf, default scenario",
        101,
        c1,
        i1,
    );
    let (c2, i2) = sample(202, true);
    write(
        &dir.join("p2_default.txt"),
        "rerouted THz demand pmf, default scenario",
        202,
        c2,
        i2,
    );
}
