//! Noise-level calibration for the default scenario.
//!
//! `cargo run --release --example calibrate -- passes` lists the passes of a
//! synthetic constellation over the default rover; with no argument the
//! residual levels and solver errors of the default scenario are averaged
//! over a range of seeds, optionally for a JSON config given after the seed count.

use snapdop::ephemeris::{Ephemeris, TleCatalog};
use snapdop::geodesy;
use snapdop::orbits::sample_times;
use snapdop::simulator::{self, ScenarioConfig, WalkerSpec};

fn passes(start: f64, duration: f64) {
    let cfg = ScenarioConfig::default();
    let walker = WalkerSpec::iridium_like(start - 4.0 * 3600.0);
    let tles = simulator::walker_constellation(&walker);
    let catalog = TleCatalog::new(&tles).expect("valid constellation");
    let times = sample_times(start, start + duration, 10.0);
    for id in catalog.norad_ids() {
        let mut visible = Vec::new();
        for &t in &times {
            let s = catalog.state(id, t).expect("propagates");
            let el = geodesy::elevation_angle(s.position, &cfg.rover_truth);
            if el >= 10.0 {
                let [e, n, _] = geodesy::ecef_to_enu(s.position, &cfg.rover_truth);
                visible.push((t - start, el, e.atan2(n).to_degrees()));
            }
        }
        if let (Some(first), Some(last)) = (visible.first(), visible.last()) {
            let peak = visible.iter().cloned().fold((0.0, f64::MIN, 0.0), |a, b| if b.1 > a.1 { b } else { a });
            println!(
                "{id} {:>6.0}-{:>6.0} s  max el {:5.1} deg at {:>6.0} s az {:6.1}",
                first.0, last.0, peak.1, peak.0, peak.2
            );
        }
    }
}

fn sweep(seeds: u64, cfg: ScenarioConfig) {
    let mut base = Vec::new();
    let mut rover = Vec::new();
    let mut post = Vec::new();
    let mut improved = 0;
    for k in 0..seeds {
        let trial = simulator::trial_config(&cfg, k);
        let run = simulator::run_scenario(&trial).expect("scenario generates");
        let m = simulator::calibration_metrics(&run.scenario).expect("metrics");
        base.push(m.base_rmse_hz);
        rover.push(m.rover_rmse_hz);
        if let Ok(d) = &run.differential {
            post.push(d.result.final_rmse);
            let g = simulator::correction_gain(&run.scenario, &d.corrected).expect("gain");
            if g.post_rmse_hz < g.pre_rmse_hz {
                improved += 1;
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    println!("seeds {seeds}");
    println!("base residual rmse      {:8.2} Hz", mean(&base));
    println!("rover residual rmse     {:8.2} Hz", mean(&rover));
    println!("post-differential rmse  {:8.2} Hz", mean(&post));
    println!("correction improved     {improved}/{seeds}");
    let mc = simulator::monte_carlo(&cfg, seeds, None).expect("monte carlo");
    println!("{}", serde_json::to_string_pretty(&mc.summary).expect("serializable"));
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match args.first().map(String::as_str) {
        Some("passes") => {
            let start = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(simulator::DEFAULT_WINDOW_START);
            passes(start, 3300.0)
        }
        _ => {
            let cfg = match args.get(1) {
                Some(path) => {
                    let text = std::fs::read_to_string(path).expect("readable config");
                    serde_json::from_str(&text).expect("valid config")
                }
                None => ScenarioConfig::default(),
            };
            sweep(args.first().and_then(|s| s.parse().ok()).unwrap_or(50), cfg)
        }
    }
}
