//! Score a small corpus end to end: KEMB files on disk, manifests, PCA,
//! k* search, JSON-lines and index CSV output.
//!
//! ```bash
//! cargo run --example score_image_set
//! ```

use imgk::embedding::{save_manifest, write_embeddings, DirStore};
use imgk::ksearch::SearchConfig;
use imgk::pipeline::{score_corpus, write_index_csv, write_jsonl, PipelineConfig};
use imgk::synth::{gen_image_set, MixtureSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let store_dir = dir.path().join("store");
    std::fs::create_dir_all(&store_dir)?;

    let mut manifests = Vec::new();
    for (set_id, k, seed) in [("sneaker", 5, 1), ("lamp", 8, 2), ("mug", 2, 3)] {
        let spec = MixtureSpec {
            k_true: k,
            points_per_component: 1,
            dim: 32,
            center_scale: 30.0,
            within_std: 1.0,
            seed,
        };
        let set = gen_image_set(&spec, set_id, 3, 49)?;
        for img in &set.images {
            write_embeddings(img, store_dir.join(format!("{}.kemb", img.image_id())))?;
        }
        save_manifest(&set.manifest, dir.path().join(format!("{set_id}.json")))?;
        manifests.push(set.manifest);
    }

    let config = PipelineConfig {
        n_components: 20,
        search: SearchConfig {
            patience: 4,
            n_runs: 10,
            ..Default::default()
        },
    };
    let results = score_corpus(&manifests, &DirStore::new(&store_dir), &config, 2)?;
    let scored: Vec<_> = results.into_iter().collect::<Result<_, _>>()?;
    for v in &scored {
        println!("{:<8} k*={:<3} images={} points={} cumvar@L={:.3}", v.set_id, v.k_star, v.n_images, v.n_points, v.pca_cumvar_at_l);
    }
    write_jsonl(&scored, &dir.path().join("kvalues.jsonl"))?;
    write_index_csv(&scored, &dir.path().join("index.csv"))?;
    print!("\n{}", std::fs::read_to_string(dir.path().join("index.csv"))?);
    println!("config hash {}", config.hash());
    Ok(())
}
