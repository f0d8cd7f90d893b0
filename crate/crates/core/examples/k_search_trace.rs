//! Grid search for k* with patience, then dump and reload the trace.
//!
//! ```bash
//! cargo run --example k_search_trace
//! ```

use imgk::ksearch::{dump_trace, find_k_star, load_trace, SearchConfig};
use imgk::synth::{gen_mixture, MixtureSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = gen_mixture(&MixtureSpec {
        k_true: 8,
        points_per_component: 25,
        dim: 10,
        center_scale: 60.0,
        within_std: 1.0,
        seed: 8,
    })?;
    let config = SearchConfig {
        k_min: 2,
        step: 3,
        patience: 4,
        n_runs: 10,
        ..Default::default()
    };
    let result = find_k_star(data.points.view(), &config)?;
    for e in &result.trace {
        let mark = if e.k == result.k_star { "  <- k*" } else { "" };
        println!("k={:<3} silh={:.4}{mark}", e.k, e.silh_k);
    }
    println!("k*={} stop={:?}", result.k_star, result.stop_reason);

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("trace.csv");
    dump_trace(&result, &path)?;
    let back = load_trace(&path)?;
    assert_eq!(back.trace, result.trace);
    println!("trace written and reloaded: {} rows", back.trace.len());
    Ok(())
}
