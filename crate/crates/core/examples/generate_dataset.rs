//! Generates the house/cycle motif dataset and writes it as JSON.
//!
//! cargo run --example generate_dataset -- [out.json] [n_graphs] [seed]
//!
//! Without arguments the dataset goes to the system temp directory.

use selfdenoise::graph::{generate_ba2motifs, load_dataset, save_dataset, GeneratorParams, SplitPart};

fn main() -> selfdenoise::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args
        .next()
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("ba2motifs.json"));
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(500);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);

    let ds = generate_ba2motifs(n, seed, &GeneratorParams::default())?;
    save_dataset(&ds, &out, None)?;

    let houses = ds.graphs().iter().filter(|g| g.label() == 1).count();
    let motif_edges: usize = ds
        .graphs()
        .iter()
        .map(|g| g.gt_edge_labels().map_or(0, |l| l.iter().filter(|&&b| b).count()))
        .sum();
    println!("{} graphs ({} house, {} cycle) -> {}", ds.len(), houses, ds.len() - houses, out.display());
    println!(
        "split: train {} / val {} / test {}",
        ds.indices(SplitPart::Train).len(),
        ds.indices(SplitPart::Val).len(),
        ds.indices(SplitPart::Test).len()
    );
    let g = ds.graph(0);
    println!(
        "graph 0: {} nodes, {} directed edges, label {}, avg motif edges per graph {:.1}",
        g.node_count(),
        g.edge_count(),
        g.label(),
        motif_edges as f64 / ds.len() as f64
    );

    let back = load_dataset(&out)?;
    assert_eq!(back, ds);
    println!("round trip ok");
    Ok(())
}
