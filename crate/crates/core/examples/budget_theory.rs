//! Explanation-budget bound with its Monte Carlo check, the two inequality
//! steps behind it, and the latent-signal re-explanation simulation.

use selfdenoise::graph::{generate_ba2motifs, GeneratorParams};
use selfdenoise::nn::RngStream;
use selfdenoise::theory::{
    budget_report, cantelli_check, popoviciu_check, simulate_latent_model, simulate_re_explanation,
    simulated_correlation, CtxDistribution, Law, SignalConfig, SimParams, StatePlan,
};

fn main() -> selfdenoise::Result<()> {
    let config = SignalConfig {
        n_pos: 10,
        n_neg: 10,
        n_ctx: 100,
        x_plus: 0.8,
        x_minus: 0.2,
        mu_p: 0.9,
        mu_n: 0.05,
        mu_c: 0.5,
        ctx: CtxDistribution::Beta { concentration: 4.0 },
    };
    for q in [0.5, 0.8, 0.95] {
        let r = budget_report(&config, q, 10_000, 1)?;
        println!("q {q:.2}: c_q {:.4}  K_min {:.2}  frequency {:.4}  pass {}", r.c_q, r.k_min, r.frequency, r.pass);
    }

    let law = Law::Beta { alpha: 2.0, beta: 5.0 };
    let mut rng = RngStream::new(3);
    let samples: Vec<f64> = (0..10_000).map(|_| law.sample(&mut rng)).collect();
    let pop = popoviciu_check(&samples)?;
    println!("Popoviciu: variance {:.5} <= {}  {}", pop.variance, pop.bound, pop.pass);
    let cant = cantelli_check(&law, 0.15, 50_000, 4)?;
    println!("Cantelli: P(X - mu <= a) = {:.4} >= {:.4}  {}", cant.empirical, cant.bound, cant.pass);

    let ds = generate_ba2motifs(100, 7, &GeneratorParams::default())?;
    let graphs: Vec<_> = ds.graphs().iter().collect();
    let root = RngStream::new(11);
    // Negative-signal edges stay fixed yet perturb their neighbours, so a dense
    // negative state flips the sign of the context-edge correlation.
    for neg_fraction in [0.0, 0.5] {
        let params = SimParams {
            plan: StatePlan::GroundTruth { neg_fraction },
            ..SimParams::default()
        };
        let (mut sims, mut recs) = (vec![], vec![]);
        for (i, g) in graphs.iter().enumerate() {
            let sim = simulate_latent_model(g, &params, root.child(i as u64).seed())?;
            recs.push(simulate_re_explanation(&sim)?);
            sims.push(sim);
        }
        let corr = simulated_correlation(&graphs, &sims, &recs)?;
        println!(
            "negative-signal fraction {neg_fraction}: Pearson(ds, dc) context edges {:?}, signal edges {:?}",
            corr.context.pearson, corr.signal.pearson
        );
    }
    Ok(())
}
