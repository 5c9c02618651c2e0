//! Ranking-correction threshold for a mis-ranked pair and the two
//! prediction-stability bounds on η, checked against a Monte Carlo estimate.

use selfdenoise::calibration::{
    denoise_unclipped, ranking_correction_threshold, self_denoise, stability_eta_bound_deterministic,
    stability_eta_bound_stochastic, stochastic_shift,
};
use selfdenoise::consistency::re_explain;
use selfdenoise::graph::{generate_ba2motifs, GeneratorParams};
use selfdenoise::model::{ArchDescriptor, SiGnnModel};

fn main() -> selfdenoise::Result<()> {
    // An important edge scored below an unimportant one, but more stable.
    let (m_plus, m_minus, ds_plus, ds_minus) = (0.55, 0.70, 0.05, 0.40);
    let t = ranking_correction_threshold(m_plus, m_minus, ds_plus, ds_minus)?.expect("positive denominator");
    println!("threshold eta* = {t:.4}");
    for eta in [0.5 * t, t * (1.0 + 1e-6), 2.0 * t] {
        let (a, b) = (denoise_unclipped(m_plus, ds_plus, eta), denoise_unclipped(m_minus, ds_minus, eta));
        println!("  eta {eta:.4}: m+ {a:.4}  m- {b:.4}  corrected {}", a > b);
    }

    let ds = generate_ba2motifs(4, 5, &GeneratorParams::default())?;
    let model = SiGnnModel::new(ArchDescriptor::desk(4), 2)?;
    let g = ds.graph(0);
    let rec = re_explain(&model, g)?;
    let epsilon = 0.05;
    let det = stability_eta_bound_deterministic(&model, g, &rec.m1, &rec.delta_s, epsilon)?;
    let sto = stability_eta_bound_stochastic(&rec.m1, &rec.delta_s, epsilon)?;
    println!(
        "deterministic bound {:.4} (|grad|inf {:.4}, damping mass {:.4}); stochastic bound {sto:.4}",
        det.eta, det.gradient_inf_norm, det.damping_mass
    );

    let eta = sto.min(1.0);
    let m_tilde = self_denoise(&rec.m1, &rec.delta_s, eta)?;
    let shift = stochastic_shift(&model, g, &rec.m1, &m_tilde, det.class, 20_000, 9)?;
    println!(
        "eta {eta:.4}: Monte Carlo shift {:.5} +- {:.5}, bound eta * mass = {:.5}",
        shift.shift,
        shift.standard_error,
        eta * det.damping_mass
    );
    Ok(())
}
