//! Scratch calibration harness (not part of the deliverable surface):
//! times corpus generation, training, reconstruction and search at the
//! toy scale used by the acceptance suite.

use latentsr_core::datagen::{generate_corpus, sample_dataset, GenConfig, OperatorSet};
use latentsr_core::expr::parse_text;
use latentsr_core::model::*;
use latentsr_core::pipeline::*;
use latentsr_core::rng;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let gen = GenConfig {
        ops: OperatorSet::LogExp,
        max_tokens: 9,
        max_vars: 2,
        samples_per_eq: 200,
        domain: (-2.0, 2.0),
        seed: 42,
    };
    let corpus = generate_corpus(&gen, 2000).unwrap();
    println!("corpus: 2000 entries in {:?}", t0.elapsed());
    let pad = trainpad(&corpus);
    println!("pad_len = {pad}");

    let tcfg = TrainConfig {
        d: 32,
        d_n: 8,
        layers: 2,
        heads: 2,
        ff: 128,
        n_latent: 4,
        max_vars: 2,
        pad_len: None,
        batch_size: 16,
        epochs: 8,
        steps_per_epoch: 250,
        base_lr: 0.05,
        warmup: 400,
        kl_anneal_frac: 0.5,
        rows_per_entry: 48,
        seed: 0,
    };
    let untrained = {
        let t = Trainer::new(&corpus, tcfg.clone()).unwrap();
        t.params.clone()
    };
    let mut trainer = Trainer::new(&corpus, tcfg).unwrap();
    let t1 = Instant::now();
    let log = trainer.run(None, None).unwrap();
    let train_time = t1.elapsed();
    println!(
        "train: {} steps in {:?} ({:.3} s/step)",
        log.len(),
        train_time,
        train_time.as_secs_f64() / log.len() as f64
    );
    for chunk in log.chunks(250) {
        let last = chunk.last().unwrap();
        let lce: f64 = chunk.iter().map(|r| r.lce).sum::<f64>() / chunk.len() as f64;
        let lkl: f64 = chunk.iter().map(|r| r.lkl).sum::<f64>() / chunk.len() as f64;
        println!(
            "  step {:4}: lce {:8.3} lkl {:8.3} lambda {:.2} lr {:.5}",
            last.step, lce, lkl, last.lambda, last.lr
        );
    }

    let eval_corpus = &corpus[..200];
    let t2 = Instant::now();
    for (tag, params) in [("untrained", &untrained), ("trained", &trainer.params)] {
        let post = reconstruction_eval(params, eval_corpus, ReconBranch::Posterior).unwrap();
        let prior = reconstruction_eval(params, eval_corpus, ReconBranch::Prior).unwrap();
        println!(
            "{tag}: posterior {:.3} ± {:.3} | prior {:.3} ± {:.3}",
            post.mean, post.std, prior.mean, prior.std
        );
    }
    println!("recon eval in {:?}", t2.elapsed());

    for target in ["x0 + x1", "x0 * x1", "x0 - x1", "log(x0 + 3)"] {
        let e = parse_text(target).unwrap();
        let mut r = rng::stream(1, "calib-data");
        let data = sample_dataset(&e, &gen, &mut r).unwrap();
        let mut cfg = SearchConfig::for_dim(32);
        cfg.cma.seed = 5;
        cfg.cma.max_generations = 40;
        let t = Instant::now();
        match search(&trainer.params, &data, &cfg) {
            Ok(res) => println!(
                "search {target}: r2 {:.4} expr {} cx {} gens {} in {:?}",
                res.r2, res.expr, res.complexity, res.generations, t.elapsed()
            ),
            Err(e) => println!("search {target}: FAILED {e}"),
        }
    }
}

fn trainpad(corpus: &[latentsr_core::datagen::CorpusEntry]) -> usize {
    corpus.iter().map(|e| e.expr_prefix.len()).max().unwrap()
}
