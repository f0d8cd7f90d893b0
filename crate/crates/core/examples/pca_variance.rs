//! Fit PCA to a stacked five-image set and print the cumulative
//! explained-variance curve.
//!
//! ```bash
//! cargo run --example pca_variance
//! ```

use imgk::pca::fit_pca;
use imgk::synth::{gen_image_set, MixtureSpec};
use ndarray::{concatenate, Axis};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = MixtureSpec {
        k_true: 12,
        points_per_component: 1,
        dim: 256,
        center_scale: 30.0,
        within_std: 2.0,
        seed: 4,
    };
    let set = gen_image_set(&spec, "demo", 5, 196)?;
    let views: Vec<_> = set.images.iter().map(|e| e.patches()).collect();
    let points = concatenate(Axis(0), &views)?.mapv(f64::from);

    let model = fit_pca(points.view(), 100)?;
    println!("stacked {} x {}, kept {} components", points.nrows(), points.ncols(), model.n_components());
    let curve = model.variance_report();
    for l in [1, 2, 5, 10, 11, 12, 20, 50, 100] {
        println!("  L={l:<4} cumulative {:.4}", curve[l - 1]);
    }
    let reduced = model.transform(points.view())?;
    println!("projected to {} x {}", reduced.nrows(), reduced.ncols());
    Ok(())
}
