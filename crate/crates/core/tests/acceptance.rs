//! Acceptance run: one line per criterion, non-zero exit when any fails.
//!
//! Criteria 7, 8, 10, 11 and 12 share the five desk models trained once on
//! a 500-graph dataset; pool seeds 1 and 2 of criterion 12 train ten more.

use std::time::{Duration, Instant};

use selfdenoise::calibration::{
    calibrate_dataset, calibrate_graph, damping_mass, denoise_unclipped, denoise_value, ranking_correction_threshold,
    select_eta, self_denoise, stochastic_shift, SdConfig,
};
use selfdenoise::consistency::{kendall, re_explain, spearman};
use selfdenoise::ensemble::{ee_calibrate, sd_then_ee, ModelPool};
use selfdenoise::graph::{generate_ba2motifs, GeneratorParams, SplitPart};
use selfdenoise::metrics::{self, auc, model_masks, pooled_auc};
use selfdenoise::model::{train, AdaptConfig, Regularizer, Sampling};
use selfdenoise::nn::{
    finite_diff_grad, relative_error, Activation, DenseMatrix, GinLayerParams, MlpParams, ParamSet, RngStream,
};
use selfdenoise::theory::{
    budget_bound, budget_report, simulate_latent_model, simulate_re_explanation, simulated_correlation,
    CtxDistribution, SignalConfig, SimParams, StatePlan,
};
use selfdenoise::{ArchDescriptor, Dataset, EdgeMask, Graph, SiGnnModel, TrainConfig};

const SEEDS: u64 = 5;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

struct Runner {
    failures: usize,
}

impl Runner {
    fn run(&mut self, id: u32, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let mut o = f();
        let took = start.elapsed();
        if let Some(limit) = limit {
            if took > limit {
                o.pass = false;
                o.detail.push_str(&format!("; over the {limit:?} budget"));
            }
        }
        if !o.pass {
            self.failures += 1;
        }
        println!(
            "criterion {id:>2} [{}] {name}: {} ({:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64()
        );
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sd_algebra() -> Outcome {
    let mut rng = RngStream::new(1);
    let mut bad = 0;
    for _ in 0..10_000 {
        let m = rng.uniform();
        let ds = rng.uniform();
        let eta = rng.uniform_range(0.0, 5.0);
        let t = denoise_value(m, ds, eta);
        let ok = (0.0..=m).contains(&t)
            && denoise_value(m, ds, 0.0) == m
            && denoise_value(m, 0.0, eta) == m
            && ((t == 0.0) == (eta * ds >= 1.0) || m == 0.0)
            && (eta * ds >= 1.0 || (t - (1.0 - eta * ds) * m).abs() <= 1e-12);
        let edge = if ds > 0.0 && m > 0.0 {
            denoise_value(m, ds, (1.0 / ds) * (1.0 + 1e-12)) == 0.0 && denoise_value(m, ds, (1.0 / ds) * (1.0 - 1e-9)) > 0.0
        } else {
            true
        };
        if !(ok && edge) {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("{bad} of 10000 triples violate an identity"))
}

fn threshold_suite() -> Outcome {
    let mut rng = RngStream::new(2);
    let mut bad = 0;
    for _ in 0..1000 {
        let mp = rng.uniform_range(0.01, 0.98);
        let mn = rng.uniform_range(mp + 1e-3, 1.0);
        let dp = rng.uniform_range(0.0, 0.9);
        let dn = rng.uniform_range(dp + 1e-3, 1.0);
        let Ok(Some(t)) = ranking_correction_threshold(mp, mn, dp, dn) else {
            bad += 1;
            continue;
        };
        let above = t * (1.0 + 1e-6);
        let below = t * (1.0 - 1e-6);
        let flipped = denoise_unclipped(mp, dp, above) > denoise_unclipped(mn, dn, above);
        let kept = denoise_unclipped(mp, dp, below) < denoise_unclipped(mn, dn, below);
        if !(flipped && kept) {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("{bad} of 1000 tuples misordered"))
}

fn stability_mc(models: &[SiGnnModel], ds: &Dataset) -> Outcome {
    let test = ds.indices(SplitPart::Test);
    let mut rng = RngStream::new(3);
    let mut worst = f64::NEG_INFINITY;
    let mut bad = 0;
    for trial in 0..50 {
        let model = &models[trial % models.len()];
        let g = ds.graph(test[rng.index(test.len())]);
        let eta = rng.uniform_range(0.0, 2.0);
        let rec = re_explain(model, g).unwrap();
        let tilde = self_denoise(&rec.m1, &rec.delta_s, eta).unwrap();
        let class = model.predict(g, &rec.m1).unwrap().class;
        let est = stochastic_shift(model, g, &rec.m1, &tilde, class, 20_000, 100 + trial as u64).unwrap();
        let allowed = eta * damping_mass(&rec.m1, &rec.delta_s).unwrap() + 3.0 * est.standard_error;
        worst = worst.max(est.shift - allowed);
        if est.shift > allowed {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("{bad} of 50 violations, max(shift - bound) = {worst:.4}"))
}

fn budget_mc() -> Outcome {
    let mut rng = RngStream::new(4);
    let mut bad = 0;
    let mut lowest = f64::INFINITY;
    for i in 0..20 {
        let x_minus = rng.uniform_range(0.05, 0.4);
        let x_plus = rng.uniform_range(0.6, 0.95);
        let config = SignalConfig {
            n_pos: 1 + rng.index(30),
            n_neg: 1 + rng.index(30),
            n_ctx: 5 + rng.index(200),
            x_plus,
            x_minus,
            mu_p: rng.uniform_range(x_plus, 1.0),
            mu_n: rng.uniform_range(0.0, x_minus),
            mu_c: rng.uniform_range(0.1, 0.9),
            ctx: if i % 2 == 0 {
                CtxDistribution::Uniform {
                    half_width: rng.uniform_range(0.0, 0.5),
                }
            } else {
                CtxDistribution::Beta {
                    concentration: rng.uniform_range(0.5, 20.0),
                }
            },
        };
        let q = rng.uniform_range(0.5, 0.95);
        let b = budget_bound(&config, q).unwrap();
        let r = budget_report(&config, q, 10_000, 40 + i).unwrap();
        let agree = (b.k_min - b.k_tradeoff).abs() <= 1e-12 * b.k_min.abs().max(1.0);
        lowest = lowest.min(r.frequency - q);
        if !(agree && r.frequency >= q - 0.01) {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("{bad} of 20 configs fail, min(frequency - q) = {lowest:.4}"))
}

fn worst_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| relative_error(*a, *n))
        .fold(0.0, f64::max)
}

fn random_matrix(rows: usize, cols: usize, rng: &mut RngStream) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.standard_normal())
}

fn mlp_instance(seed: u64) -> f64 {
    let mut rng = RngStream::new(seed);
    let mlp = MlpParams::new(
        &[3, 6, 5, 2],
        &[Activation::Relu, Activation::Sigmoid, Activation::Identity],
        &mut rng,
    )
    .unwrap();
    let x = random_matrix(4, 3, &mut rng);
    let r = random_matrix(4, 2, &mut rng);
    let value = |p: &MlpParams, x: &DenseMatrix| {
        let (out, _) = p.forward(x).unwrap();
        out.data().iter().zip(r.data()).map(|(a, b)| a * b).sum::<f64>()
    };
    let (_, cache) = mlp.forward(&x).unwrap();
    let (grads, d_x) = mlp.backward(&cache, &r).unwrap();
    let numeric_p = finite_diff_grad(
        |t| {
            let mut p = mlp.clone();
            p.assign_flat(t);
            value(&p, &x)
        },
        &mlp.flatten(),
        1e-6,
    )
    .unwrap();
    let numeric_x = finite_diff_grad(
        |t| value(&mlp, &DenseMatrix::new(4, 3, t.to_vec()).unwrap()),
        x.data(),
        1e-6,
    )
    .unwrap();
    worst_error(&grads.flatten(), &numeric_p).max(worst_error(d_x.data(), &numeric_x))
}

fn small_graph(seed: u64) -> Graph {
    let params = GeneratorParams {
        base_nodes: 6,
        ..GeneratorParams::default()
    };
    generate_ba2motifs(2, seed, &params).unwrap().graph((seed % 2) as usize).clone()
}

fn gin_instance(seed: u64) -> f64 {
    let mut rng = RngStream::new(seed);
    let g = small_graph(seed);
    let layer = GinLayerParams {
        eps: rng.uniform_range(-0.5, 0.5),
        mlp: MlpParams::new(&[3, 5, 4], &[Activation::Relu, Activation::Relu], &mut rng).unwrap(),
    };
    let h = random_matrix(g.node_count(), 3, &mut rng);
    let w: Vec<f64> = (0..g.edge_count()).map(|_| rng.uniform()).collect();
    let r = random_matrix(g.node_count(), 4, &mut rng);
    let value = |p: &GinLayerParams, h: &DenseMatrix, w: &[f64]| {
        let (out, _) = p.forward(h, g.edges(), w).unwrap();
        out.data().iter().zip(r.data()).map(|(a, b)| a * b).sum::<f64>()
    };
    let (_, cache) = layer.forward(&h, g.edges(), &w).unwrap();
    let grads = layer.backward(&cache, g.edges(), &w, &r).unwrap();
    let numeric_p = finite_diff_grad(
        |t| {
            let mut p = layer.clone();
            p.assign_flat(t);
            value(&p, &h, &w)
        },
        &layer.flatten(),
        1e-6,
    )
    .unwrap();
    let numeric_h = finite_diff_grad(
        |t| value(&layer, &DenseMatrix::new(h.rows(), 3, t.to_vec()).unwrap(), &w),
        h.data(),
        1e-6,
    )
    .unwrap();
    let numeric_w = finite_diff_grad(|t| value(&layer, &h, t), &w, 1e-6).unwrap();
    worst_error(&grads.params.flatten(), &numeric_p)
        .max(worst_error(grads.node_feats.data(), &numeric_h))
        .max(worst_error(&grads.edge_weights, &numeric_w))
}

fn jittered_model(seed: u64) -> SiGnnModel {
    let mut arch = ArchDescriptor::desk(4);
    arch.encoder_dims = vec![6, 5];
    arch.explainer_dims = vec![6, 1];
    arch.classifier_dims = vec![5, 2];
    let mut model = SiGnnModel::new(arch, seed).unwrap();
    let mut rng = RngStream::new(seed ^ 0x5eed);
    let moved: Vec<f64> = model
        .network()
        .flatten()
        .iter()
        .map(|v| v + 0.1 * rng.standard_normal())
        .collect();
    model.network_mut().assign_flat(&moved);
    model
}

fn loss_instance(seed: u64, reg: Regularizer) -> f64 {
    let model = jittered_model(seed);
    let g = small_graph(seed);
    let mut rng = RngStream::new(seed + 7);
    let u: Vec<f64> = (0..g.edge_count()).map(|_| rng.uniform_open()).collect();
    let total = |m: &SiGnnModel| {
        let trace = m.forward_trace(&g, Sampling::Replay(&u), None).unwrap();
        m.loss(&g, &trace, g.label(), reg).unwrap()
    };
    let analytic = total(&model).grads.flatten();
    let numeric = finite_diff_grad(
        |t| {
            let mut m = model.clone();
            m.network_mut().assign_flat(t);
            total(&m).total
        },
        &model.network().flatten(),
        1e-6,
    )
    .unwrap();
    worst_error(&analytic, &numeric)
}

fn prediction_gradient_instance(seed: u64) -> f64 {
    let model = jittered_model(seed);
    let g = small_graph(seed);
    let mut rng = RngStream::new(seed + 9);
    let mask: Vec<f64> = (0..g.edge_count()).map(|_| rng.uniform_range(0.2, 0.8)).collect();
    let class = (seed % 2) as usize;
    let (_, analytic) = model.prediction_gradient(&g, &EdgeMask::new(mask.clone()).unwrap(), class).unwrap();
    let numeric = finite_diff_grad(
        |t| model.predict(&g, &EdgeMask::new(t.to_vec()).unwrap()).unwrap().probs[class],
        &mask,
        1e-6,
    )
    .unwrap();
    worst_error(&analytic, &numeric)
}

fn gradient_suite() -> Outcome {
    let paths: [(&str, &dyn Fn(u64) -> f64); 5] = [
        ("mlp", &mlp_instance),
        ("gin", &gin_instance),
        ("size loss", &|s| loss_instance(s, Regularizer::Size { beta: 0.7 })),
        ("kl loss", &|s| loss_instance(s, Regularizer::KlBernoulli { beta: 0.4, r: 0.3 })),
        ("prediction gradient", &prediction_gradient_instance),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, f) in paths {
        let worst = (0..20).map(|s| f(1000 + s)).fold(0.0, f64::max);
        pass &= worst < 1e-4;
        parts.push(format!("{name} {worst:.1e}"));
    }
    outcome(pass, format!("worst relative error over 20 instances: {}", parts.join(", ")))
}

fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let (mut p, mut n) = (0usize, 0usize);
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            n += 1;
            continue;
        }
        p += 1;
        for (j, &lj) in labels.iter().enumerate() {
            if !lj {
                wins += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / (p as f64 * n as f64)
}

fn brute_midranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let below = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn plain_pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

fn brute_tau_b(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let (mut c, mut d, mut tx, mut ty) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let sx = (x[i] - x[j]).signum() * f64::from(x[i] != x[j]);
            let sy = (y[i] - y[j]).signum() * f64::from(y[i] != y[j]);
            if sx == 0.0 {
                tx += 1.0;
            }
            if sy == 0.0 {
                ty += 1.0;
            }
            match sx * sy {
                p if p > 0.0 => c += 1.0,
                p if p < 0.0 => d += 1.0,
                _ => {}
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as f64;
    (c - d) / ((n0 - tx) * (n0 - ty)).sqrt()
}

fn metric_oracles() -> Outcome {
    let mut rng = RngStream::new(6);
    let levels = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut auc_bad = 0;
    let all_pairs: Vec<(usize, usize)> = (0..6).flat_map(|u| (u + 1..6).map(move |v| (u, v))).collect();
    let mut done = 0;
    while done < 100 {
        let mut pairs = all_pairs.clone();
        rng.shuffle(&mut pairs);
        let k = 2 + rng.index(11);
        let bonds = &pairs[..k];
        let gt: Vec<bool> = (0..k).map(|_| rng.bernoulli(0.4)).collect();
        if gt.iter().all(|&b| b) || gt.iter().all(|&b| !b) {
            continue;
        }
        done += 1;
        let g = Graph::from_undirected(DenseMatrix::filled(6, 1, 1.0), bonds, Some(&gt), 0).unwrap();
        let directed: Vec<f64> = (0..2 * k).map(|_| levels[rng.index(levels.len())]).collect();
        let sym: Vec<f64> = (0..k).map(|b| 0.5 * (directed[2 * b] + directed[2 * b + 1])).collect();
        let got = pooled_auc(&[&g], &[EdgeMask::new(directed).unwrap()]).unwrap().unwrap();
        if got != brute_auc(&sym, &gt) || auc(&sym, &gt) != Some(brute_auc(&sym, &gt)) {
            auc_bad += 1;
        }
    }
    let mut rank_bad = 0;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = 5 + rng.index(30);
        let x: Vec<f64> = (0..n).map(|_| rng.index(6) as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.index(4) as f64 + 0.5 * rng.uniform()).collect();
        let rho = plain_pearson(&brute_midranks(&x), &brute_midranks(&y));
        let tau = brute_tau_b(&x, &y);
        if !rho.is_finite() || !tau.is_finite() {
            continue;
        }
        let e = (spearman(&x, &y).unwrap() - rho).abs().max((kendall(&x, &y).unwrap() - tau).abs());
        worst = worst.max(e);
        if e > 1e-12 {
            rank_bad += 1;
        }
    }
    outcome(
        auc_bad == 0 && rank_bad == 0,
        format!("{auc_bad} of 100 AUC mismatches, {rank_bad} rank mismatches (max error {worst:.1e})"),
    )
}

struct Desk {
    dataset: Dataset,
    models: Vec<SiGnnModel>,
    train_time: Duration,
}

fn train_pool(dataset: &Dataset, seeds: impl Iterator<Item = u64>) -> Vec<SiGnnModel> {
    seeds
        .map(|seed| {
            let mut cfg = TrainConfig::new(ArchDescriptor::desk(4));
            cfg.seed = seed;
            train(dataset, &cfg).unwrap().0
        })
        .collect()
}

fn desk() -> Desk {
    let start = Instant::now();
    let dataset = generate_ba2motifs(500, 0, &GeneratorParams::default()).unwrap();
    let models = train_pool(&dataset, 0..SEEDS);
    Desk {
        dataset,
        models,
        train_time: start.elapsed(),
    }
}

struct SeedRun {
    auc_base: f64,
    auc_sd: f64,
    spa_base: f64,
    spa_sd: f64,
    val_base: f64,
    val_sd: f64,
    eta: f64,
    val_curve: Vec<f64>,
}

fn seed_run(model: &SiGnnModel, ds: &Dataset, seed: u64) -> SeedRun {
    let (test, val) = (ds.indices(SplitPart::Test), ds.indices(SplitPart::Val));
    let base = model_masks(model, ds, test).unwrap();
    let (e_base, _) = metrics::evaluate(model, ds, test, &base).unwrap();
    let val_base = metrics::acc(model, ds, val, &model_masks(model, ds, val).unwrap()).unwrap();
    let config = SdConfig {
        adapt: AdaptConfig {
            seed,
            ..AdaptConfig::default()
        },
        ..SdConfig::default()
    };
    let (report, adapted) = select_eta(model, ds, &config).unwrap();
    let chosen = report.grid.iter().position(|&e| e == report.chosen_eta).unwrap();
    let sd = calibrate_dataset(model, ds, test, report.chosen_eta, None).unwrap().masks();
    let (e_sd, _) = metrics::evaluate(&adapted, ds, test, &sd).unwrap();
    SeedRun {
        auc_base: e_base.auc.unwrap(),
        auc_sd: e_sd.auc.unwrap(),
        spa_base: e_base.spa,
        spa_sd: e_sd.spa,
        val_base,
        val_sd: report.val_acc[chosen],
        eta: report.chosen_eta,
        val_curve: report.val_acc,
    }
}

fn end_to_end(runs: &[SeedRun]) -> Outcome {
    let col = |f: fn(&SeedRun) -> f64| mean(&runs.iter().map(f).collect::<Vec<_>>());
    let (ab, asd) = (col(|r| r.auc_base), col(|r| r.auc_sd));
    let (sb, ssd) = (col(|r| r.spa_base), col(|r| r.spa_sd));
    let (vb, vsd) = (col(|r| r.val_base), col(|r| r.val_sd));
    let etas: Vec<String> = runs.iter().map(|r| r.eta.to_string()).collect();
    outcome(
        ab >= 0.90 && asd >= ab && ssd < sb && vsd >= vb - 0.01,
        format!(
            "AUC base {ab:.4} sd {asd:.4}, SPA base {sb:.4} sd {ssd:.4}, val acc base {vb:.3} sd* {vsd:.3}, eta [{}]",
            etas.join(", ")
        ),
    )
}

fn self_inconsistency(models: &[SiGnnModel], ds: &Dataset) -> Outcome {
    let test = ds.indices(SplitPart::Test);
    let mut esc_ok = true;
    let mut ordered = 0;
    let mut parts = Vec::new();
    for model in models {
        let mut positive = 0;
        let (mut imp, mut unimp) = (Vec::new(), Vec::new());
        for &gi in test {
            let g = ds.graph(gi);
            let rec = re_explain(model, g).unwrap();
            positive += usize::from(rec.esc > 0.0);
            for (d, &l) in rec.delta_s.iter().zip(g.gt_edge_labels().unwrap()) {
                if l {
                    imp.push(*d);
                } else {
                    unimp.push(*d);
                }
            }
        }
        let frac = positive as f64 / test.len() as f64;
        esc_ok &= frac >= 0.9;
        ordered += usize::from(mean(&imp) < mean(&unimp));
        parts.push(format!("{frac:.2}/{:.4}<{:.4}", mean(&imp), mean(&unimp)));
    }
    outcome(
        esc_ok && ordered >= 4,
        format!("ESC>0 fraction / Δs important<unimportant per seed: {} ({ordered} of 5 ordered)", parts.join(", ")),
    )
}

fn simulated_pearson(graphs: &[&Graph], neg_fraction: f64) -> (Option<f64>, Option<f64>) {
    let params = SimParams {
        plan: StatePlan::GroundTruth { neg_fraction },
        ..SimParams::default()
    };
    let sims: Vec<_> = graphs
        .iter()
        .enumerate()
        .map(|(i, g)| simulate_latent_model(g, &params, i as u64).unwrap())
        .collect();
    let records: Vec<_> = sims.iter().map(|s| simulate_re_explanation(s).unwrap()).collect();
    let c = simulated_correlation(graphs, &sims, &records).unwrap();
    (c.context.pearson, c.signal.pearson)
}

fn latent_simulation() -> Outcome {
    let ds = generate_ba2motifs(100, 9, &GeneratorParams::default()).unwrap();
    let graphs: Vec<&Graph> = ds.graphs().iter().collect();
    // Important edges carry positive signal and every other edge is context-driven.
    let (ctx, signal) = simulated_pearson(&graphs, 0.0);
    let ctx = ctx.unwrap_or(f64::NAN);
    // Signal edges keep their scores, so Δs is constant there and Pearson is undefined: no association.
    let signal = signal.unwrap_or(0.0);
    let sweep: Vec<String> = [0.1, 0.3, 0.5]
        .iter()
        .map(|&nf| format!("{nf}: {:.3}", simulated_pearson(&graphs, nf).0.unwrap_or(f64::NAN)))
        .collect();
    outcome(
        ctx - signal >= 0.2,
        format!(
            "Pearson context {ctx:.4}, signal {signal:.4}; context Pearson by negative-signal fraction {}",
            sweep.join(", ")
        ),
    )
}

fn overhead(model: &SiGnnModel, ds: &Dataset) -> Outcome {
    let test = ds.indices(SplitPart::Test);
    let mut bad = 0;
    for &gi in test {
        let g = ds.graph(gi);
        model.reset_pass_counters();
        model.compute_edge_scores(g, None).unwrap();
        let base = model.scoring_passes();
        model.reset_pass_counters();
        calibrate_graph(model, gi, g, 1.0).unwrap();
        let sd = model.scoring_passes();
        if sd != base + 1 {
            bad += 1;
        }
    }
    model.reset_pass_counters();
    let _ = model_masks(model, ds, test).unwrap();
    let base_total = model.scoring_passes();
    model.reset_pass_counters();
    let _ = calibrate_dataset(model, ds, test, 1.0, None).unwrap();
    let sd_total = model.scoring_passes();
    outcome(
        bad == 0 && sd_total == base_total + test.len(),
        format!("{} graphs: baseline {base_total} scoring passes, SD {sd_total}", test.len()),
    )
}

fn eta_curve(runs: &[SeedRun]) -> Outcome {
    let not_last = runs
        .iter()
        .filter(|r| {
            let last = r.val_curve.len() - 1;
            let best = r.val_curve.iter().enumerate().fold(0, |b, (i, &v)| if v > r.val_curve[b] { i } else { b });
            best != last
        })
        .count();
    let curves: Vec<String> = runs
        .iter()
        .map(|r| format!("[{}]", r.val_curve.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>().join(" ")))
        .collect();
    outcome(not_last >= 4, format!("{not_last} of 5 seeds peak below the largest η; {}", curves.join(" ")))
}

fn pooled(pool: &ModelPool, ds: &Dataset, f: impl Fn(&ModelPool, &Graph) -> EdgeMask) -> f64 {
    let test = ds.indices(SplitPart::Test);
    let graphs: Vec<&Graph> = test.iter().map(|&gi| ds.graph(gi)).collect();
    let masks: Vec<EdgeMask> = graphs.iter().map(|g| f(pool, g)).collect();
    pooled_auc(&graphs, &masks).unwrap().unwrap()
}

fn ensemble_ordering(desk: &Desk) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for p in 0..3u64 {
        let seeds: Vec<u64> = (p * SEEDS..(p + 1) * SEEDS).collect();
        let models = if p == 0 {
            desk.models.clone()
        } else {
            train_pool(&desk.dataset, seeds.iter().copied())
        };
        let pool = ModelPool::new(models, seeds).unwrap();
        let ee = pooled(&pool, &desk.dataset, |pl, g| ee_calibrate(pl, g, 1.0).unwrap());
        let sd_ee = pooled(&pool, &desk.dataset, |pl, g| sd_then_ee(pl, g, 1.0, 1.0).unwrap());
        pass &= sd_ee >= ee - 0.01;
        parts.push(format!("pool {p}: EE {ee:.4}, SD+EE {sd_ee:.4}"));
    }
    outcome(pass, parts.join("; "))
}

fn main() {
    let mut r = Runner { failures: 0 };
    r.run(1, "SD algebra", Some(Duration::from_secs(1)), sd_algebra);
    r.run(2, "ranking-correction threshold", Some(Duration::from_secs(1)), threshold_suite);

    let desk = desk();
    println!(
        "trained {} desk models on {} graphs in {:.1}s",
        desk.models.len(),
        desk.dataset.len(),
        desk.train_time.as_secs_f64()
    );
    r.run(3, "stochastic prediction shift", Some(Duration::from_secs(120)), || {
        stability_mc(&desk.models, &desk.dataset)
    });
    r.run(4, "explanation budget Monte Carlo", Some(Duration::from_secs(30)), budget_mc);
    r.run(5, "gradient suite", Some(Duration::from_secs(60)), gradient_suite);
    r.run(6, "metric oracles", Some(Duration::from_secs(10)), metric_oracles);

    let start = Instant::now();
    let runs: Vec<SeedRun> = desk
        .models
        .iter()
        .zip(0..)
        .map(|(m, s)| seed_run(m, &desk.dataset, s))
        .collect();
    let e2e_time = desk.train_time + start.elapsed();
    r.run(7, "end-to-end SD", None, || {
        let mut o = end_to_end(&runs);
        o.detail.push_str(&format!("; {:.0}s including training", e2e_time.as_secs_f64()));
        if e2e_time > Duration::from_secs(600) {
            o.pass = false;
        }
        o
    });
    r.run(8, "self-inconsistency", None, || self_inconsistency(&desk.models, &desk.dataset));
    r.run(9, "latent-signal simulation", None, latent_simulation);
    r.run(10, "overhead accounting", None, || overhead(&desk.models[0], &desk.dataset));
    r.run(11, "eta-selection curve", None, || eta_curve(&runs));
    r.run(12, "SD+EE ordering", None, || ensemble_ordering(&desk));

    println!("acceptance: {} of 12 criteria failed", r.failures);
    if r.failures > 0 {
        std::process::exit(1);
    }
}
