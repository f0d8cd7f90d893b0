//! Seeded k-means and the silhouette averaged over restarts, for a few k on
//! three well separated blobs.
//!
//! ```bash
//! cargo run --example kmeans_silhouette
//! ```

use imgk::cluster::{avg_silhouette, kmeans, silhouette, KMeansParams};
use imgk::synth::{gen_mixture, MixtureSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let blobs = gen_mixture(&MixtureSpec {
        k_true: 3,
        points_per_component: 20,
        dim: 2,
        center_scale: 20.0,
        within_std: 1.0,
        seed: 3,
    })?;
    let params = KMeansParams::default();

    let fit = kmeans(blobs.points.view(), 3, 42, &params)?;
    println!("k=3 seed=42: inertia {:.3} after {} iterations", fit.inertia, fit.iterations);
    println!("  silhouette of this run   {:.4}", silhouette(blobs.points.view(), &fit.assignments)?);
    println!("  silhouette of true labels {:.4}", silhouette(blobs.points.view(), &blobs.labels)?);

    println!("\nmean silhouette over 30 restarts");
    for k in 2..=6 {
        let s = avg_silhouette(blobs.points.view(), k, 30, 0, &params)?;
        let (lo, hi) = s.per_run_scores.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        println!("  k={k}  {:.4}  (runs {lo:.4}..{hi:.4})", s.mean_score);
    }
    Ok(())
}
