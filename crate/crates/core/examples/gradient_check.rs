//! Compares the analytic gradient of both training objectives with central
//! finite differences on a tiny model.

use selfdenoise::graph::{generate_ba2motifs, GeneratorParams};
use selfdenoise::model::{ArchDescriptor, Objective, Sampling, SiGnnModel};
use selfdenoise::nn::{finite_diff_grad, relative_error, ParamSet, RngStream};

fn main() -> selfdenoise::Result<()> {
    let params = GeneratorParams { base_nodes: 6, ..Default::default() };
    let ds = generate_ba2motifs(2, 3, &params)?;
    let g = ds.graph(1);

    for objective in [Objective::SizeConstrained, Objective::KlBernoulli] {
        let mut arch = ArchDescriptor::desk(4);
        arch.encoder_dims = vec![5, 4];
        arch.explainer_dims = vec![6, 1];
        arch.classifier_dims = vec![5, 2];
        arch.objective = objective;
        arch.beta = 0.5;
        let mut model = SiGnnModel::new(arch, 7)?;
        // Move off the ReLU kinks created by the constant bias initialisation.
        let mut rng = RngStream::new(1);
        let theta: Vec<f64> = model.network().flatten().iter().map(|v| v + 0.1 * rng.standard_normal()).collect();
        model.network_mut().assign_flat(&theta);

        let uniforms: Vec<f64> = (0..g.edge_count()).map(|_| rng.uniform_open()).collect();
        let reg = model.arch().regularizer();
        let loss_at = |m: &SiGnnModel| -> selfdenoise::Result<_> {
            let trace = m.forward_trace(g, Sampling::Replay(&uniforms), None)?;
            m.loss(g, &trace, g.label(), reg)
        };

        let analytic = loss_at(&model)?.grads.flatten();
        let numeric = finite_diff_grad(
            |t| {
                let mut m = model.clone();
                m.network_mut().assign_flat(t);
                loss_at(&m).map(|o| o.total).unwrap_or(f64::NAN)
            },
            &theta,
            1e-5,
        )?;
        let worst = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, n)| relative_error(*a, *n))
            .fold(0.0, f64::max);
        println!("{objective:?}: {} parameters, worst relative error {worst:.2e}", theta.len());
    }
    Ok(())
}
