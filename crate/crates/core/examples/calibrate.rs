//! Report the observables a scenario's guessed laser parameters are tuned
//! against.
//!
//! The unstated inputs (blue Rabi frequency and detuning, IR Rabi frequency
//! and detuning) were chosen by editing the scenario and rerunning this
//! until the reported numbers matched the targets:
//!
//! - D3/2 population at the end of the preparation phase: at least 0.95;
//! - T1 from the distinguishable central peak: 230(30) ns;
//! - two-run HOM contrast: 50(20)%;
//! - for a rate scan, the weakest point near T1 = 1.6 us.
//!
//! Run with `cargo run --release --example calibrate -- scenarios/fig4.json`.

use rps_core::pipeline;
use rps_core::scenario::parse_scenario;
use std::time::Instant;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).ok_or("usage: calibrate <scenario.json>")?;
    let sc = parse_scenario(&path)?;
    let t = Instant::now();
    let p = pipeline::populations(&sc)?;
    println!(
        "{}: prepared D = {:.4}, detected-channel photons per sequence = {:.4} ({:.2?})",
        sc.name,
        p.prepared,
        p.emission_probability,
        t.elapsed()
    );
    if let Some(scan) = &sc.analysis.scan {
        for &s in &scan.ir_scales {
            let point = pipeline::scan_point(&sc, s)?;
            println!(
                "  ir scale {s:.3}  intensity {:.4}  T1 {:8.1} ns  window {:?}",
                point.intensity_rel, point.fit.t1, point.fit.window
            );
        }
        return Ok(());
    }
    if sc.analysis.dark_fractions.is_some() {
        let t = Instant::now();
        let h = pipeline::hom(&sc, sc.simulation.seed)?;
        println!(
            "  T1 {:.1} ns, T2 {:.1} ns, beat {:.2} MHz (bin {:.2}), contrast {:.3}, pure {:.4}, doubles {:.3} ({:.2?})",
            h.t1.t1,
            h.g1.t2,
            h.g1.beat_mhz,
            h.g1.fft_bin_mhz,
            h.contrast,
            h.pure_contrast,
            h.budget_ni.doubles_fraction_ni,
            t.elapsed()
        );
    } else {
        let c = pipeline::g1(&sc)?;
        println!("  T1 {:.1} ns, T2 {:.1} ns, beat {:.2} MHz", c.t1.t1, c.g1.t2, c.g1.beat_mhz);
    }
    Ok(())
}
