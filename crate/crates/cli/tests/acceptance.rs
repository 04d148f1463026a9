//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs without the libtest harness so the report stays readable.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use jumpdiff::corpus::{gen_corpus, Corpus, CorpusConfig, Utterance};
use jumpdiff::eval::{
    default_silence_threshold, dtw_path, marginal_check, path_linearity, ratio_of, silence_ratio,
    wasserstein1,
};
use jumpdiff::forward::{deletion_order, forward_sample, kept_prefix, structural_corrupt};
use jumpdiff::predictors::{
    gradient_check, train, training_pair, ContentBatch, ContentNet, ContentNetConfig,
    DurationRegressor, LocationNet, LocationNetConfig, OracleContent, OracleLocation, PriorContent,
    RegressionConfig, RestorationPlan, TrainConfig, TrainedModels, UniformLocation,
};
use jumpdiff::reverse::{synthesize, Allocation, AnalyticScore, Mode, SamplerConfig, Synthesis};
use jumpdiff::rng::stream;
use jumpdiff::state::protected_from_alignment;
use jumpdiff::{schedule_length, DiffusionTime, NoiseSchedule, Result, Spectrogram, DEFAULT_T_MIN};
use rand::Rng;

type Check = (bool, String);

struct Criterion {
    id: &'static str,
    name: &'static str,
    budget: Duration,
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn t(v: f64) -> DiffusionTime {
    DiffusionTime::new(v).expect("valid time")
}

fn default_corpus() -> Corpus {
    gen_corpus(&CorpusConfig::default(), 0, &mut stream(0, "corpus")).expect("default corpus")
}

// ---------------------------------------------------------------------------

fn a1() -> Result<Check> {
    let examples = [
        (100, 20, 1.0, 20),
        (100, 20, 0.1, 100),
        (100, 20, 0.55, 60),
        (73, 10, 0.37, 54),
    ];
    for (l0, p, tv, want) in examples {
        let got = schedule_length(l0, p, t(tv), DEFAULT_T_MIN)?;
        if got != want {
            return Ok((false, format!("({l0}, {p}, {tv}) gave {got}, want {want}")));
        }
    }
    // t = k / 1000 makes the floor an exact integer division.
    let mut rng = stream(1, "a1");
    let mut bad = 0;
    for _ in 0..10_000 {
        let l0 = rng.random_range(1..400usize);
        let p = rng.random_range(0..=l0);
        let k = rng.random_range(0..=1000usize);
        let got = schedule_length(l0, p, t(k as f64 / 1000.0), DEFAULT_T_MIN)?;
        let want = if k <= 100 {
            l0
        } else {
            p + (1000 - k) * (l0 - p) / 900
        };
        let k2 = rng.random_range(k..=1000usize);
        let later = schedule_length(l0, p, t(k2 as f64 / 1000.0), DEFAULT_T_MIN)?;
        let at_one = schedule_length(l0, p, DiffusionTime::ONE, DEFAULT_T_MIN)?;
        let at_zero = schedule_length(l0, p, DiffusionTime::ZERO, DEFAULT_T_MIN)?;
        if got != want || later > got || at_one != p || at_zero != l0 || got < p || got > l0 {
            bad += 1;
        }
    }
    Ok((
        bad == 0,
        format!("4 worked examples, {bad} of 10000 random cases violated"),
    ))
}

fn a2() -> Result<Check> {
    let cfg = CorpusConfig {
        num_utterances: 50,
        ..CorpusConfig::default()
    };
    let corpus = gen_corpus(&cfg, 2, &mut stream(2, "corpus"))?;
    let sched = NoiseSchedule::default();
    let mut rng = stream(2, "a2");
    let mut lost = 0usize;
    for i in 0..10_000 {
        let u = &corpus.utterances[i % corpus.utterances.len()];
        let tv: f64 = rng.random();
        let s = forward_sample(
            &u.x0,
            &u.mu,
            &u.alignment,
            t(tv),
            &sched,
            DEFAULT_T_MIN,
            &mut rng,
        )?;
        let protected = protected_from_alignment(&u.alignment);
        lost += protected
            .indices()
            .iter()
            .filter(|i| s.kept.binary_search(i).is_err())
            .count();
    }
    Ok((
        lost == 0,
        format!("{lost} protected frames deleted over 10000 corruptions"),
    ))
}

fn a3() -> Result<Check> {
    let x = Spectrogram::from_columns(2, &[[0.8f32, -1.2], [1.5, 0.3], [-0.4, 0.9]])?;
    let mu = Spectrogram::from_columns(2, &[[1.0f32, -1.0], [1.0, -1.0], [0.0, 0.5]])?;
    let sched = NoiseSchedule::default();
    let mut ok = true;
    let mut detail = Vec::new();
    for tv in [0.25, 0.5, 0.75] {
        let r = marginal_check(
            &x,
            &mu,
            t(tv),
            &sched,
            100_000,
            &mut stream(3, &format!("a3/{tv}")),
        )?;
        ok &= r.passes(3.0, 0.02);
        detail.push(format!(
            "t={tv}: mean dev {:.2} SE, var ratio [{:.4}, {:.4}]",
            r.max_mean_dev_se, r.min_var_ratio, r.max_var_ratio
        ));
    }
    Ok((ok, detail.join("; ")))
}

fn a4() -> Result<Check> {
    let cfg = CorpusConfig {
        num_utterances: 3,
        ..CorpusConfig::default()
    };
    let corpus = gen_corpus(&cfg, 0, &mut stream(0, "corpus"))?;
    let score = AnalyticScore::new(cfg.frame_variance, NoiseSchedule::default())?;
    let sampler = SamplerConfig {
        mode: Mode::Tdd,
        steps: 100,
        allocation: Allocation::Argmax,
        ..SamplerConfig::default()
    };
    let protos: Vec<f64> = corpus.inventory.prototypes[..cfg.num_phones]
        .iter()
        .flatten()
        .map(|&v| v as f64)
        .collect();
    let mean = protos.iter().sum::<f64>() / protos.len() as f64;
    let spread =
        (protos.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / protos.len() as f64).sqrt();
    let seeds = 100;
    let mut worst: f64 = 0.0;
    let mut exact = true;
    for u in &corpus.utterances {
        let means = corpus.inventory.phone_means(&u.phones)?;
        let oracle = OracleLocation::from_durations(u.durations.clone());
        let (bins, len) = u.mu.shape();
        let mut sum = vec![0.0; bins * len];
        for s in 0..seeds {
            let out = synthesize(
                &sampler,
                &means,
                len,
                &oracle,
                &PriorContent,
                &score,
                &mut stream(s, "a4"),
            )?;
            exact &= out.durations == u.durations;
            for (acc, &v) in sum.iter_mut().zip(out.x.as_frame_major()) {
                *acc += v as f64;
            }
        }
        // Clean distribution per frame is N(prototype, v): its mean is the prior column.
        for j in 0..len {
            let e2: f64 = (0..bins)
                .map(|b| (sum[j * bins + b] / seeds as f64 - u.mu.column(j)[b] as f64).powi(2))
                .sum();
            worst = worst.max((e2 / bins as f64).sqrt());
        }
    }
    let frac = worst / spread;
    Ok((
        exact && frac <= 0.05,
        format!(
            "worst per-frame mean error {worst:.4} = {:.2}% of prototype spread {spread:.3} (bound 5%), durations exact: {exact}",
            100.0 * frac
        ),
    ))
}

fn a5() -> Result<Check> {
    let cfg = CorpusConfig {
        num_utterances: 100,
        ..CorpusConfig::default()
    };
    let corpus = gen_corpus(&cfg, 5, &mut stream(5, "corpus"))?;
    let score = AnalyticScore::new(cfg.frame_variance, NoiseSchedule::default())?;
    let sampler = SamplerConfig {
        mode: Mode::Tdd,
        steps: 50,
        allocation: Allocation::Argmax,
        sequential: true,
        ..SamplerConfig::default()
    };
    let mut failures = 0;
    let mut checked_steps = 0;
    for u in &corpus.utterances {
        let protected = protected_from_alignment(&u.alignment);
        let l0 = u.num_frames();
        let order = deletion_order(&protected, l0, &mut stream(u.id as u64, "a5/order"));
        let plan = RestorationPlan::new(protected.clone(), order.clone(), l0)?;
        let means = corpus.inventory.phone_means(&u.phones)?;
        let out = synthesize(
            &sampler,
            &means,
            l0,
            &OracleLocation::from_plan(plan.clone()),
            &OracleContent::new(u.x0.clone(), plan)?,
            &score,
            &mut stream(u.id as u64, "a5/synth"),
        )?;
        // Replay the trace on frame labels: each insertion must land between
        // its neighbours, and every grid state must equal the forward kept set.
        let mut labels: Vec<usize> = protected.indices().to_vec();
        let mut ok = true;
        for step in &out.trace.grid {
            for &slot in &step.inserted {
                let next = order[labels.len() - protected.len()];
                labels.insert(slot, next);
            }
            let tv = t(step.t);
            let forward = structural_corrupt(
                &u.x0,
                &u.mu,
                &protected,
                tv,
                DEFAULT_T_MIN,
                &mut stream(u.id as u64, "a5/order"),
            )?;
            ok &= labels.windows(2).all(|w| w[0] < w[1])
                && step.len == schedule_length(l0, protected.len(), tv, DEFAULT_T_MIN)?
                && labels == forward.kept
                && labels == kept_prefix(&protected, &order, step.len);
            checked_steps += 1;
        }
        ok &= labels == (0..l0).collect::<Vec<_>>() && out.durations == u.durations;
        if !ok {
            failures += 1;
        }
    }
    Ok((
        failures == 0,
        format!("{failures} of 100 utterances diverged ({checked_steps} grid states compared)"),
    ))
}

fn a6() -> Result<Check> {
    let cfg = CorpusConfig {
        num_utterances: 20,
        bins: 6,
        ..CorpusConfig::default()
    };
    let corpus = gen_corpus(&cfg, 6, &mut stream(6, "corpus"))?;
    let train_cfg = TrainConfig::default();
    let mut worst_loc: f64 = 0.0;
    let mut worst_cont: f64 = 0.0;
    let mut checked = 0;
    for b in 0..10u64 {
        let mut rng = stream(b, "a6");
        let mut locs = Vec::new();
        let mut conts = Vec::new();
        while locs.len() < 4 {
            let u = &corpus.utterances[rng.random_range(0..corpus.utterances.len())];
            if let Some((l, c)) = training_pair(u, &train_cfg, &mut rng)? {
                locs.push(l);
                conts.push(c);
            }
        }
        let loc = LocationNet::new(LocationNetConfig::new(cfg.bins), &mut rng)?;
        let cont = ContentNet::new(ContentNetConfig::new(cfg.bins), &mut rng)?;
        let batch = ContentBatch {
            examples: conts,
            lambda_prior: train_cfg.lambda_prior,
        };
        let rl = gradient_check(&loc, locs.as_slice(), 1e-4, 1)?;
        let rc = gradient_check(&cont, &batch, 1e-4, 1)?;
        worst_loc = worst_loc.max(rl.max_rel_error);
        worst_cont = worst_cont.max(rc.max_rel_error);
        checked += rl.checked + rc.checked;
    }
    Ok((
        worst_loc < 1e-4 && worst_cont < 1e-4,
        format!("max relative error location {worst_loc:.2e}, content {worst_cont:.2e} ({checked} parameters)"),
    ))
}

fn trained_default(corpus: &Corpus) -> Result<TrainedModels> {
    let cfg = TrainConfig {
        lr: 3e-3,
        epochs: 300,
        ..TrainConfig::default()
    };
    train(&corpus.utterances, &cfg, &mut stream(0, "train"))
}

fn a7(corpus: &Corpus, models: &TrainedModels) -> Result<Check> {
    let cfg = &corpus.config;
    let reg = DurationRegressor::fit(
        cfg.num_phones + 1,
        corpus
            .utterances
            .iter()
            .map(|u| (&u.phones[..], &u.durations[..])),
        &RegressionConfig::default(),
    )?;
    let score = AnalyticScore::new(cfg.frame_variance, NoiseSchedule::default())?;
    let sampler = SamplerConfig {
        steps: 50,
        allocation: Allocation::Sample,
        ..SamplerConfig::default()
    };
    let held_out = gen_corpus(
        &CorpusConfig {
            num_utterances: 60,
            ..cfg.clone()
        },
        1,
        &mut stream(1, "corpus"),
    )?;
    let (mut truth, mut sampled, mut regressed) = (Vec::new(), Vec::new(), Vec::new());
    for (i, u) in held_out.utterances.iter().enumerate() {
        let means = held_out.inventory.phone_means(&u.phones)?;
        let out = synthesize(
            &sampler,
            &means,
            u.num_frames(),
            &models.location,
            &models.content,
            &score,
            &mut stream(i as u64, "synth"),
        )?;
        truth.extend(u.durations.iter().map(|&d| d as f64));
        sampled.extend(out.durations.iter().map(|&d| d as f64));
        regressed.extend(reg.predict_durations(&u.phones).iter().map(|&d| d as f64));
    }
    let ws = wasserstein1(&sampled, &truth)?;
    let wr = wasserstein1(&regressed, &truth)?;
    let factor = wr / ws;
    Ok((
        factor >= 2.0,
        format!("W1 sampled {ws:.3}, regression {wr:.3}, factor {factor:.2} (need >= 2)"),
    ))
}

fn a8(corpus: &Corpus, models: &TrainedModels) -> Result<Check> {
    let score = AnalyticScore::new(corpus.config.frame_variance, NoiseSchedule::default())?;
    let threshold = default_silence_threshold(corpus.utterances.iter().map(|u| &u.x0))?;
    let udd = SamplerConfig {
        mode: Mode::Udd,
        steps: 50,
        allocation: Allocation::Argmax,
        ..SamplerConfig::default()
    };
    let one = SamplerConfig {
        mode: Mode::OneShot,
        ..udd.clone()
    };
    let silence = corpus
        .inventory
        .silence_id()
        .expect("corpus has a silence phone");
    let utts: Vec<&Utterance> = corpus
        .utterances
        .iter()
        .filter(|u| u.phones.contains(&silence))
        .take(50)
        .collect();
    let (mut sil_wins, mut r2_wins) = (0, 0);
    for (i, u) in utts.iter().enumerate() {
        let means = corpus.inventory.phone_means(&u.phones)?;
        let normal = u.num_frames();
        let slow = (normal as f64 / 0.75).round() as usize;
        let run = |cfg: &SamplerConfig, uniform: bool, len: usize| -> Result<Synthesis> {
            let mut rng = stream(i as u64, "synth");
            if uniform {
                synthesize(
                    cfg,
                    &means,
                    len,
                    &UniformLocation,
                    &models.content,
                    &score,
                    &mut rng,
                )
            } else {
                synthesize(
                    cfg,
                    &means,
                    len,
                    &models.location,
                    &models.content,
                    &score,
                    &mut rng,
                )
            }
        };
        let (u_slow, u_ref) = (run(&udd, false, slow)?, run(&udd, false, normal)?);
        let (o_slow, o_ref) = (run(&one, true, slow)?, run(&one, true, normal)?);
        if silence_ratio(&u_slow.x, threshold).ratio > silence_ratio(&o_slow.x, threshold).ratio {
            sil_wins += 1;
        }
        let r2_udd = path_linearity(&dtw_path(&u_ref.x, &u_slow.x)?)?;
        let r2_one = path_linearity(&dtw_path(&o_ref.x, &o_slow.x)?)?;
        if r2_udd < r2_one {
            r2_wins += 1;
        }
    }
    let n = utts.len();
    let need = (0.8 * n as f64).ceil() as usize;
    Ok((
        n == 50 && sil_wins >= need && r2_wins >= need,
        format!("UDD higher silence ratio on {sil_wins}/{n}, lower path R^2 on {r2_wins}/{n} (need {need} each)"),
    ))
}

fn a9() -> Result<Check> {
    let rows = [
        (6.26, 0.45, "7.19"),
        (7.37, 0.47, "6.38"),
        (7.37, 0.71, "9.63"),
        (7.37, 0.61, "8.28"),
    ];
    let mut got = Vec::new();
    let mut ok = true;
    for (total, silent, want) in rows {
        let pct = format!("{:.2}", 100.0 * ratio_of(silent, total)?);
        ok &= pct == want;
        got.push(format!("{pct}%"));
    }
    Ok((ok, got.join(", ")))
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).expect("readable dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(dir)
                    .expect("inside dir")
                    .display()
                    .to_string();
                files.insert(rel, fs::read(&path).expect("readable file"));
            }
        }
    }
    files
}

fn pipeline(root: &Path) -> std::result::Result<(), String> {
    let p = |s: &str| root.join(s).display().to_string();
    let runs: Vec<Vec<String>> = vec![
        vec![
            "gen-corpus".into(),
            "--out".into(),
            p("corpus"),
            "--num-utterances".into(),
            "12".into(),
        ],
        vec![
            "corrupt".into(),
            "--corpus".into(),
            p("corpus"),
            "--t".into(),
            "0.4".into(),
            "--out".into(),
            p("corrupt"),
        ],
        vec![
            "train".into(),
            "--corpus".into(),
            p("corpus"),
            "--epochs".into(),
            "3".into(),
            "--out".into(),
            p("model"),
        ],
        vec![
            "synth".into(),
            "--corpus".into(),
            p("corpus"),
            "--model".into(),
            p("model"),
            "--steps".into(),
            "20".into(),
            "--mode".into(),
            "udd".into(),
            "--solver".into(),
            "sde".into(),
            "--speed".into(),
            "0.75".into(),
            "--out".into(),
            p("synth"),
        ],
        vec![
            "eval".into(),
            "--corpus".into(),
            p("corpus"),
            "--synth".into(),
            p("synth"),
            "--heatmaps".into(),
            "--out".into(),
            p("eval"),
        ],
    ];
    for mut args in runs {
        args.insert(0, "jumpdiff".into());
        args.extend(["--seed".into(), "7".into()]);
        let code = jumpdiff_cli::run(&args);
        if code != 0 {
            return Err(format!("`{}` exited with {code}", args[1..].join(" ")));
        }
    }
    Ok(())
}

fn a10() -> Result<Check> {
    let a = tempfile::tempdir()?;
    let b = tempfile::tempdir()?;
    for dir in [a.path(), b.path()] {
        if let Err(e) = pipeline(dir) {
            return Ok((false, e));
        }
    }
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    let differing: Vec<&String> = sa.keys().filter(|k| sa.get(*k) != sb.get(*k)).collect();
    let ok = sa.len() == sb.len() && differing.is_empty() && !sa.is_empty();
    Ok((
        ok,
        format!(
            "{} files from 5 subcommands, {} differ",
            sa.len(),
            differing.len()
        ),
    ))
}

fn main() {
    let criteria = [
        Criterion {
            id: "A1",
            name: "schedule exactness",
            budget: secs(1),
        },
        Criterion {
            id: "A2",
            name: "protected-set safety",
            budget: secs(10),
        },
        Criterion {
            id: "A3",
            name: "marginal fidelity",
            budget: secs(30),
        },
        Criterion {
            id: "A4",
            name: "sampler correctness on Gaussian toy data",
            budget: secs(60),
        },
        Criterion {
            id: "A5",
            name: "oracle round trip",
            budget: secs(60),
        },
        Criterion {
            id: "A6",
            name: "gradient integrity",
            budget: secs(30),
        },
        Criterion {
            id: "A7",
            name: "classification beats regression",
            budget: secs(600),
        },
        Criterion {
            id: "A8",
            name: "adaptive pauses",
            budget: secs(900),
        },
        Criterion {
            id: "A9",
            name: "silence-ratio arithmetic",
            budget: secs(1),
        },
        Criterion {
            id: "A10",
            name: "determinism",
            budget: secs(300),
        },
    ];
    let corpus = default_corpus();
    let mut models: Option<(TrainedModels, Duration)> = None;
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let mut extra = Duration::ZERO;
        let result = match c.id {
            "A1" => a1(),
            "A2" => a2(),
            "A3" => a3(),
            "A4" => a4(),
            "A5" => a5(),
            "A6" => a6(),
            "A7" | "A8" => {
                if models.is_none() {
                    let s = Instant::now();
                    models = trained_default(&corpus).ok().map(|m| (m, s.elapsed()));
                }
                match &models {
                    None => Err(jumpdiff::Error::invalid(
                        "training",
                        "default model failed to train",
                    )),
                    Some((m, took)) => {
                        // Both criteria share one training run; charge it to each.
                        if c.id == "A8" {
                            extra = *took;
                        }
                        if c.id == "A7" {
                            a7(&corpus, m)
                        } else {
                            a8(&corpus, m)
                        }
                    }
                }
            }
            "A9" => a9(),
            "A10" => a10(),
            _ => unreachable!(),
        };
        let elapsed = start.elapsed() + extra;
        let in_budget = elapsed <= c.budget;
        let (pass, detail) = match result {
            Ok((ok, detail)) => (ok && in_budget, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} {:<4} {}: {} [{:.2} s, budget {} s{}]",
            if pass { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            detail,
            elapsed.as_secs_f64(),
            c.budget.as_secs(),
            if in_budget { "" } else { ", over budget" }
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
