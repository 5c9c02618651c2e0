//! Cross-model explanation ensembling with and without self-denoising each
//! member first.

use selfdenoise::ensemble::{ee_calibrate, sd_then_ee, ModelPool};
use selfdenoise::graph::{generate_ba2motifs, GeneratorParams, SplitPart};
use selfdenoise::metrics::pooled_auc;
use selfdenoise::model::{train, ArchDescriptor, TrainConfig};

fn main() -> selfdenoise::Result<()> {
    let ds = generate_ba2motifs(500, 0, &GeneratorParams::default())?;
    let seeds: Vec<u64> = (0..3).collect();
    let models = seeds
        .iter()
        .map(|&seed| {
            let cfg = TrainConfig { seed, ..TrainConfig::new(ArchDescriptor::desk(4)) };
            Ok(train(&ds, &cfg)?.0)
        })
        .collect::<selfdenoise::Result<Vec<_>>>()?;
    let pool = ModelPool::new(models, seeds)?;

    let test = ds.indices(SplitPart::Test);
    let graphs: Vec<_> = test.iter().map(|&i| ds.graph(i)).collect();
    for (i, model) in pool.models().iter().enumerate() {
        let masks = graphs.iter().map(|g| model.compute_edge_scores(g, None)).collect::<selfdenoise::Result<Vec<_>>>()?;
        println!("member {i}: AUC {:.4}", pooled_auc(&graphs, &masks)?.unwrap_or(f64::NAN));
    }
    for lambda in [0.0, 1.0, 2.0] {
        let ee = graphs.iter().map(|g| ee_calibrate(&pool, g, lambda)).collect::<selfdenoise::Result<Vec<_>>>()?;
        let sd = graphs.iter().map(|g| sd_then_ee(&pool, g, 1.0, lambda)).collect::<selfdenoise::Result<Vec<_>>>()?;
        println!(
            "lambda {lambda}: EE AUC {:.4}   SD+EE AUC {:.4}",
            pooled_auc(&graphs, &ee)?.unwrap_or(f64::NAN),
            pooled_auc(&graphs, &sd)?.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
