//! Trains a desk-scale SI-GNN and reports explanation and prediction metrics
//! on the test split.
//!
//! cargo run --release --example train_explainer -- [seed] [epochs]

use selfdenoise::graph::{generate_ba2motifs, GeneratorParams, SplitPart};
use selfdenoise::metrics::{evaluate, model_masks};
use selfdenoise::model::{save_model, train, ArchDescriptor, TrainConfig};

fn main() -> selfdenoise::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(150);

    let ds = generate_ba2motifs(500, 0, &GeneratorParams::default())?;
    let config = TrainConfig {
        epochs,
        seed,
        ..TrainConfig::new(ArchDescriptor::desk(4))
    };
    let (model, log) = train(&ds, &config)?;
    for e in log.epochs.iter().step_by(25) {
        println!(
            "epoch {:>3}  loss {:.4}  val acc {:.2}  val auc {:.3}",
            e.epoch,
            e.train_loss,
            e.val_accuracy.unwrap_or(f64::NAN),
            e.val_auc.unwrap_or(f64::NAN)
        );
    }
    println!("kept epoch {}", log.selected_epoch);

    let test = ds.indices(SplitPart::Test);
    let masks = model_masks(&model, &ds, test)?;
    let (expl, pred) = evaluate(&model, &ds, test, &masks)?;
    println!(
        "test: AUC {:.3}  SPA {:.3}  ACC {:.3}  FID- {:.3}  FID+ {:.3}",
        expl.auc.unwrap_or(f64::NAN),
        expl.spa,
        pred.acc,
        pred.fid_minus,
        pred.fid_plus
    );

    let path = std::env::temp_dir().join(format!("selfdenoise-model-{seed}.json"));
    save_model(&model, &path, None)?;
    println!("model -> {}", path.display());
    Ok(())
}
