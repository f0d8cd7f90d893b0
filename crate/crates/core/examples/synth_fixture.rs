//! The synthetic generators: a separated mixture, its split into pseudo
//! images, and the six-cluster scoring fixture.
//!
//! ```bash
//! cargo run --example synth_fixture
//! ```

use std::collections::HashMap;

use imgk::pipeline::score_set;
use imgk::synth::{gen_mixture, MixtureSpec};
use imgk::validate::{six_cluster_config, six_cluster_fixture};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = MixtureSpec {
        k_true: 4,
        points_per_component: 10,
        dim: 3,
        center_scale: 15.0,
        within_std: 1.0,
        seed: 1,
    };
    let m = gen_mixture(&spec)?;
    println!("mixture: {} points, separation ratio {}", m.points.nrows(), spec.separation_ratio());
    for (c, center) in m.centers.rows().into_iter().enumerate() {
        println!("  center {c}: {:.2}", center);
    }

    let fixture = six_cluster_fixture();
    println!("\nfixture {:?}: {} images", fixture.manifest.set_id, fixture.images.len());
    let store: HashMap<_, _> = fixture.images.into_iter().map(|e| (e.image_id().to_string(), e)).collect();
    let v = score_set(&fixture.manifest, &store, &six_cluster_config())?;
    println!("scored k*={} on {} points (stop: {:?})", v.k_star, v.n_points, v.search.stop_reason);
    Ok(())
}
