//! Selects the denoising strength on validation data, then compares the
//! baseline explanation with the calibrated one on the test split.

use selfdenoise::calibration::{calibrate_dataset, select_eta, SdConfig};
use selfdenoise::graph::{generate_ba2motifs, GeneratorParams, SplitPart};
use selfdenoise::metrics::{evaluate, model_masks};
use selfdenoise::model::{train, ArchDescriptor, TrainConfig};

fn main() -> selfdenoise::Result<()> {
    let ds = generate_ba2motifs(500, 0, &GeneratorParams::default())?;
    let (model, _) = train(&ds, &TrainConfig::new(ArchDescriptor::desk(4)))?;

    let (report, adapted) = select_eta(&model, &ds, &SdConfig::default())?;
    for (eta, acc) in report.grid.iter().zip(&report.val_acc) {
        println!("eta {eta:<5} adapted val acc {acc:.3}");
    }
    println!("chosen eta {}", report.chosen_eta);

    let test = ds.indices(SplitPart::Test);
    let base_masks = model_masks(&model, &ds, test)?;
    let (be, bp) = evaluate(&model, &ds, test, &base_masks)?;
    let sd = calibrate_dataset(&model, &ds, test, report.chosen_eta, None)?;
    let (se, sp) = evaluate(&model, &ds, test, &sd.masks())?;
    let (_, ap) = evaluate(&adapted, &ds, test, &sd.masks())?;

    println!("           AUC    SPA    ACC");
    println!("base     {:.3}  {:.3}  {:.3}", be.auc.unwrap_or(f64::NAN), be.spa, bp.acc);
    println!("SD       {:.3}  {:.3}  {:.3}", se.auc.unwrap_or(f64::NAN), se.spa, sp.acc);
    println!("SD*      {:.3}  {:.3}  {:.3}", se.auc.unwrap_or(f64::NAN), se.spa, ap.acc);

    let clipped: usize = sd.graphs.iter().map(|g| g.clip_count).sum();
    println!("edges clipped to zero: {clipped}");
    Ok(())
}
