//! Pipeline tests: localization, the search loop, interpolation and the
//! reconstruction/noise protocols, on a briefly trained miniature model.

use latentsr_core::datagen::{generate_corpus, GenConfig, OperatorSet};
use latentsr_core::encoding::encode_samples;
use latentsr_core::expr::parse_text;
use latentsr_core::model::*;
use latentsr_core::pipeline::*;
use latentsr_core::rng;
use std::sync::OnceLock;

struct Fixture {
    params: ModelParams,
    corpus: Vec<latentsr_core::datagen::CorpusEntry>,
}

fn fixture() -> &'static Fixture {
    static FIX: OnceLock<Fixture> = OnceLock::new();
    FIX.get_or_init(|| {
        let gen = GenConfig {
            ops: OperatorSet::LogExp,
            max_tokens: 7,
            max_vars: 2,
            samples_per_eq: 24,
            domain: (-2.0, 2.0),
            seed: 100,
        };
        let corpus = generate_corpus(&gen, 24).unwrap();
        let tcfg = TrainConfig {
            d: 16,
            d_n: 4,
            layers: 1,
            heads: 2,
            ff: 32,
            n_latent: 2,
            max_vars: 2,
            pad_len: None,
            batch_size: 8,
            epochs: 1,
            steps_per_epoch: 120,
            base_lr: 0.04,
            warmup: 30,
            kl_anneal_frac: 0.5,
            rows_per_entry: 24,
            seed: 3,
        };
        let mut trainer = Trainer::new(&corpus, tcfg).unwrap();
        trainer.run(None, None).unwrap();
        Fixture {
            params: trainer.params.clone(),
            corpus,
        }
    })
}

fn dataset(expr_text: &str, m: usize, seed: u64) -> Vec<(Vec<f64>, f64)> {
    let e = parse_text(expr_text).unwrap();
    let gen = GenConfig {
        ops: OperatorSet::LogExp,
        max_tokens: 9,
        max_vars: 2,
        samples_per_eq: m,
        domain: (-2.0, 2.0),
        seed,
    };
    let mut r = rng::stream(seed, "pipe-data");
    latentsr_core::datagen::sample_dataset(&e, &gen, &mut r).unwrap()
}

fn small_search_cfg(seed: u64) -> SearchConfig {
    let mut cfg = SearchConfig::for_dim(16);
    cfg.cma.population = 12;
    cfg.cma.parents = 6;
    cfg.cma.max_generations = 8;
    cfg.cma.seed = seed;
    cfg.patience = 8;
    cfg
}

#[test]
fn localize_shape_and_permutation_invariance() {
    let fix = fixture();
    let data = dataset("x0 + x1", 24, 1);
    let g = localize(&fix.params, &data).unwrap();
    assert_eq!(g.dim(), 16);

    let mut permuted = data.clone();
    permuted.reverse();
    let g2 = localize(&fix.params, &permuted).unwrap();
    for (a, b) in g.mean.iter().zip(&g2.mean) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn search_runs_and_trace_is_monotone() {
    let fix = fixture();
    let data = dataset("x0 + x1", 32, 2);
    let res = search(&fix.params, &data, &small_search_cfg(7)).unwrap();
    assert!(!res.trace.is_empty());
    for w in res.trace.windows(2) {
        assert!(
            w[1].best_fitness >= w[0].best_fitness,
            "best-so-far decreased"
        );
    }
    assert!(res.complexity >= 1);
    assert!(res.generations >= 1);
    assert!(res.time_s > 0.0);
    // The winner parses back from its prefix form.
    let toks: Vec<_> = res
        .expr_prefix
        .iter()
        .map(|s| latentsr_core::token::Token::from_text(s).unwrap())
        .collect();
    let parsed = latentsr_core::expr::from_prefix(&toks).unwrap();
    assert_eq!(parsed.complexity(), res.complexity);
}

#[test]
fn search_is_seed_deterministic_and_jobs_invariant() {
    let fix = fixture();
    let data = dataset("x0 * x1", 32, 3);
    let a = search(&fix.params, &data, &small_search_cfg(11)).unwrap();
    let b = search(&fix.params, &data, &small_search_cfg(11)).unwrap();
    assert_eq!(a.expr, b.expr);
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.r2.to_bits(), b.r2.to_bits());

    let mut par = small_search_cfg(11);
    par.jobs = 3;
    let c = search(&fix.params, &data, &par).unwrap();
    assert_eq!(a.expr, c.expr);
    assert_eq!(a.trace, c.trace);
}

#[test]
fn search_distinct_seeds_may_differ_but_stay_valid() {
    let fix = fixture();
    let data = dataset("x0 + x1", 32, 4);
    for seed in [21, 22] {
        let res = search(&fix.params, &data, &small_search_cfg(seed)).unwrap();
        assert!(res.fitness > f64::NEG_INFINITY);
    }
}

#[test]
fn interpolation_endpoints_reproduce_direct_decodes() {
    let fix = fixture();
    let d1 = dataset("x0 + x1", 24, 5);
    let d2 = dataset("x0 * x1", 24, 6);
    let report = interpolate(&fix.params, &d1, &d2, &DEFAULT_RATIOS).unwrap();
    assert_eq!(report.points.len(), 5);
    assert_eq!(report.points[0].ratio, 0.0);
    assert_eq!(report.points[4].ratio, 1.0);

    // Direct decodes of each dataset's prior mean.
    let direct = |data: &[(Vec<f64>, f64)]| -> Vec<String> {
        let grid = encode_samples(data).unwrap();
        let g = encode_prior(&fix.params, &grid).unwrap();
        let fused = fuse(&fix.params, std::slice::from_ref(&g.mean));
        decode_greedy(&fix.params, &fused, &grid)
            .unwrap()
            .iter()
            .map(|t| t.text())
            .collect()
    };
    assert_eq!(report.points[0].tokens, direct(&d1));
    assert_eq!(report.points[4].tokens, direct(&d2));
    assert!((0.0..=1.0).contains(&report.validity_rate));
}

#[test]
fn reconstruction_eval_is_deterministic_and_uses_both_branches() {
    let fix = fixture();
    let corpus = &fix.corpus[..8];
    let post1 = reconstruction_eval(&fix.params, corpus, ReconBranch::Posterior).unwrap();
    let post2 = reconstruction_eval(&fix.params, corpus, ReconBranch::Posterior).unwrap();
    assert_eq!(post1.mean.to_bits(), post2.mean.to_bits());
    assert_eq!(post1.std.to_bits(), post2.std.to_bits());
    assert_eq!(post1.entries, 8);

    let prior = reconstruction_eval(&fix.params, corpus, ReconBranch::Prior).unwrap();
    assert_eq!(prior.branch, ReconBranch::Prior);
    assert!(prior.mean >= 0.0 && post1.mean >= 0.0);
}

#[test]
fn noise_bench_rows_and_defaults() {
    let fix = fixture();
    let targets = vec![parse_text("x0 + x1").unwrap(), parse_text("x0 * x1").unwrap()];
    let gen = GenConfig {
        ops: OperatorSet::LogExp,
        max_tokens: 9,
        max_vars: 2,
        samples_per_eq: 24,
        domain: (-2.0, 2.0),
        seed: 8,
    };
    let mut cfg = small_search_cfg(9);
    cfg.cma.max_generations = 3;
    let levels = [0.0, 0.01];
    let report = noise_bench(&fix.params, &targets, &levels, &gen, &cfg, 13).unwrap();
    assert_eq!(report.rows.len(), levels.len());
    assert_eq!(report.runs.len(), levels.len() * targets.len());
    for row in &report.rows {
        assert_eq!(row.runs, targets.len());
    }
    assert_eq!(DEFAULT_NOISE_LEVELS, [0.0, 0.001, 0.01, 0.1]);
}

#[test]
fn held_out_split_is_disjoint_and_private() {
    let data = dataset("x0 + x1", 40, 10);
    let mut r = rng::stream(1, "split-test");
    let split = DataSplit::new(&data, 0.75, &mut r);
    assert_eq!(split.fit_len(), 30);
    assert_eq!(split.held_out_len(), 10);
    // Fit points all come from the dataset.
    for pair in split.fit() {
        assert!(data.contains(pair));
    }
    // Perfect expression scores 1 on held-out data.
    let e = parse_text("x0 + x1").unwrap();
    assert!((split.score_held_out(&e) - 1.0).abs() < 1e-12);
    // A failing expression scores -inf.
    let bad = parse_text("log(0 - 10)").unwrap();
    assert_eq!(split.score_held_out(&bad), f64::NEG_INFINITY);
}
