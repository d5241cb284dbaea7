//! Manifests, MD5-ordered subset selection and source balancing.
//!
//! `cargo run --example dataset_selection`

use drunet::data::{balance_sources, md5_hex, select_subset_md5, DatasetManifest, ManifestEntry, Split};

fn main() -> drunet::Result<()> {
    let dir = std::env::temp_dir().join("drunet_dataset_selection");
    std::fs::create_dir_all(&dir).map_err(|e| drunet::Error::io(&dir, e))?;
    let mut paths = Vec::new();
    for (i, body) in ["alpha", "beta", "gamma", "delta", "epsilon"].iter().enumerate() {
        let p = dir.join(format!("photo{i}.jpg"));
        std::fs::write(&p, body).map_err(|e| drunet::Error::io(&p, e))?;
        println!("{}  {}", md5_hex(&p)?, p.display());
        paths.push(p);
    }
    println!("first 3 by digest:");
    for p in select_subset_md5(&paths, 3)? {
        println!("  {}", p.display());
    }

    let synth = |source: &str, n: usize| {
        let entries = (0..n)
            .map(|i| ManifestEntry {
                image: format!("{source}/{i}.jpg").into(),
                mask: format!("{source}/{i}.png").into(),
                split: Split::Train,
            })
            .collect();
        DatasetManifest::new(source, entries)
    };
    let merged = balance_sources(&[synth("lfw", 1500), synth("lvs", 721), synth("hgr", 899)], &[1000, 721, 899], 1)?;
    println!("balanced manifest '{}' with {} entries", merged.source, merged.len());
    Ok(())
}
