use std::fs;
use std::io::Write;
use std::path::Path;

use jumpdiff::corpus::{gen_corpus, utterance_file, Corpus};
use jumpdiff::eval::{
    default_silence_threshold, dtw_cost_matrix, dtw_path, max_vertical_run, path_linearity,
    silence_ratio, wasserstein1,
};
use jumpdiff::forward::forward_sample;
use jumpdiff::io::{load_jdsp, read_jdmp, save_jdsp, write_jdmp, write_pgm};
use jumpdiff::predictors::{
    train, ContentModel, ContentNet, LocationModel, LocationNet, OracleLocation, PriorContent,
    UniformLocation,
};
use jumpdiff::reverse::{synthesize, AnalyticScore, SynthesisTrace};
use jumpdiff::rng::{stream, streams};
use jumpdiff::{schedule_length, DiffusionTime, Error, NoiseSchedule, Result};

use crate::config::RunConfig;
use crate::{Command, Common, ContentChoice, LocationChoice, EXIT_OK, EXIT_RUNTIME};

const LOCATION_FILE: &str = "location.jdmp";
const CONTENT_FILE: &str = "content.jdmp";

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    Ok(cfg)
}

fn finish(cfg: &mut RunConfig) -> Result<u64> {
    cfg.sync_schedule();
    cfg.validate()?;
    cfg.seed()
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn trace_file(id: usize) -> String {
    format!("utt_{id:04}.trace.json")
}

pub(crate) fn dispatch(command: Command, out: &mut impl Write) -> Result<i32> {
    match command {
        Command::GenCorpus {
            common,
            num_utterances,
            bins,
            silence_prob,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(n) = num_utterances {
                cfg.corpus.num_utterances = n;
            }
            if let Some(b) = bins {
                cfg.corpus.bins = b;
            }
            if let Some(p) = silence_prob {
                cfg.corpus.silence_prob = p;
            }
            let seed = finish(&mut cfg)?;
            let corpus = gen_corpus(&cfg.corpus, seed, &mut stream(seed, streams::CORPUS))?;
            corpus.save(&common.out)?;
            writeln!(
                out,
                "wrote {} utterances to {} (silence fraction {:.4})",
                corpus.utterances.len(),
                common.out.display(),
                corpus.silence_fraction()
            )?;
            Ok(EXIT_OK)
        }
        Command::Corrupt { common, corpus, t } => {
            let mut cfg = load_config(&common)?;
            let seed = finish(&mut cfg)?;
            let t = DiffusionTime::new(t)?;
            let corpus = Corpus::load(&corpus)?;
            fs::create_dir_all(&common.out)?;
            for u in &corpus.utterances {
                let mut rng = stream(seed, &format!("{}/{}", streams::CORRUPT, u.id));
                let s = forward_sample(
                    &u.x0,
                    &u.mu,
                    &u.alignment,
                    t,
                    &cfg.schedule,
                    cfg.train.t_min,
                    &mut rng,
                )?;
                save_jdsp(common.out.join(utterance_file(u.id)), &s.x_t)?;
                write_json(
                    &common.out.join(format!("utt_{:04}.json", u.id)),
                    &s.sidecar(),
                )?;
            }
            writeln!(
                out,
                "corrupted {} utterances to t = {}",
                corpus.utterances.len(),
                t.get()
            )?;
            Ok(EXIT_OK)
        }
        Command::Train {
            common,
            corpus,
            epochs,
            lr,
            batch_size,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(lr) = lr {
                cfg.train.lr = lr;
            }
            if let Some(b) = batch_size {
                cfg.train.batch_size = b;
            }
            let seed = finish(&mut cfg)?;
            let corpus = Corpus::load(&corpus)?;
            let models = train(
                &corpus.utterances,
                &cfg.train,
                &mut stream(seed, streams::TRAIN),
            )?;
            fs::create_dir_all(&common.out)?;
            write_jdmp(
                &mut fs::File::create(common.out.join(LOCATION_FILE))?,
                &models.location.to_checkpoint(),
            )?;
            write_jdmp(
                &mut fs::File::create(common.out.join(CONTENT_FILE))?,
                &models.content.to_checkpoint(),
            )?;
            fs::write(common.out.join("train_report.csv"), models.report.to_csv())?;
            if let Some(last) = models.report.epochs.last() {
                writeln!(
                    out,
                    "trained {} epochs: location loss {:.4}, content loss {:.4}",
                    cfg.train.epochs, last.location, last.content
                )?;
            }
            Ok(EXIT_OK)
        }
        Command::Synth {
            common,
            corpus,
            model,
            mode,
            solver,
            steps,
            alloc,
            sequential,
            speed,
            location,
            content,
            limit,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(m) = mode {
                cfg.sampler.mode = m;
            }
            if let Some(s) = solver {
                cfg.sampler.solver = s;
            }
            if let Some(n) = steps {
                cfg.sampler.steps = n;
            }
            if let Some(a) = alloc {
                cfg.sampler.allocation = a;
            }
            if sequential {
                cfg.sampler.sequential = true;
            }
            if !(speed > 0.0 && speed.is_finite()) {
                return Err(Error::invalid("speed", "must be positive"));
            }
            let seed = finish(&mut cfg)?;
            let corpus = Corpus::load(&corpus)?;
            let needs_model = location == LocationChoice::Model || content == ContentChoice::Model;
            let model_dir = match (&model, needs_model) {
                (Some(dir), _) => Some(dir.as_path()),
                (None, true) => {
                    return Err(Error::invalid(
                        "model",
                        "--model is required for trained predictors",
                    ))
                }
                (None, false) => None,
            };
            let load = |name: &str| -> Result<jumpdiff::io::Checkpoint> {
                let dir = model_dir.expect("checked above");
                read_jdmp(&mut fs::File::open(dir.join(name))?)
            };
            let loc_net = match location {
                LocationChoice::Model => Some(LocationNet::from_checkpoint(&load(LOCATION_FILE)?)?),
                _ => None,
            };
            let cont_net = match content {
                ContentChoice::Model => Some(ContentNet::from_checkpoint(&load(CONTENT_FILE)?)?),
                ContentChoice::Prior => None,
            };
            let score = AnalyticScore::new(corpus.inventory.frame_variance, cfg.schedule)?;
            fs::create_dir_all(&common.out)?;
            let n = limit
                .unwrap_or(corpus.utterances.len())
                .min(corpus.utterances.len());
            for u in &corpus.utterances[..n] {
                let means = corpus.inventory.phone_means(&u.phones)?;
                let target = ((u.num_frames() as f64 / speed).round() as usize).max(u.phones.len());
                let oracle;
                let loc: &dyn LocationModel = match location {
                    LocationChoice::Model => loc_net.as_ref().expect("loaded"),
                    LocationChoice::Uniform => &UniformLocation,
                    LocationChoice::Oracle => {
                        if target != u.num_frames() {
                            return Err(Error::invalid(
                                "location",
                                "the oracle only supports speed 1",
                            ));
                        }
                        oracle = OracleLocation::from_durations(u.durations.clone());
                        &oracle
                    }
                };
                let cont: &dyn ContentModel = match &cont_net {
                    Some(net) => net,
                    None => &PriorContent,
                };
                let mut rng = stream(seed, &format!("{}/{}", streams::SYNTH, u.id));
                let syn = synthesize(&cfg.sampler, &means, target, loc, cont, &score, &mut rng)?;
                save_jdsp(common.out.join(utterance_file(u.id)), &syn.x)?;
                write_json(&common.out.join(trace_file(u.id)), &syn.trace)?;
            }
            writeln!(
                out,
                "synthesized {n} utterances ({} {}, {} steps, speed {speed})",
                cfg.sampler.mode, cfg.sampler.solver, cfg.sampler.steps
            )?;
            Ok(EXIT_OK)
        }
        Command::Eval {
            common,
            corpus,
            synth,
            reference,
            threshold,
            heatmaps,
        } => {
            let corpus = Corpus::load(&corpus)?;
            let threshold = match threshold {
                Some(t) if t > 0.0 && t.is_finite() => t,
                Some(_) => return Err(Error::invalid("threshold", "must be positive")),
                None => default_silence_threshold(corpus.utterances.iter().map(|u| &u.x0))?,
            };
            fs::create_dir_all(&common.out)?;
            let mut csv = String::from("utterance,metric,value\n");
            let mut row = |id: &str, metric: &str, value: f64| {
                csv.push_str(&format!("{id},{metric},{value:.6}\n"));
            };
            row("all", "silence_threshold", threshold);
            let (mut truth, mut sampled) = (Vec::new(), Vec::new());
            let mut count = 0;
            for u in &corpus.utterances {
                let path = synth.join(utterance_file(u.id));
                if !path.exists() {
                    continue;
                }
                count += 1;
                let x = load_jdsp(&path)?;
                let reference_x = match &reference {
                    Some(dir) => load_jdsp(dir.join(utterance_file(u.id)))?,
                    None => u.x0.clone(),
                };
                let id = format!("{:04}", u.id);
                let s = silence_ratio(&x, threshold);
                row(&id, "frames", s.total as f64);
                row(&id, "silence_ratio", s.ratio);
                row(
                    &id,
                    "reference_silence_ratio",
                    silence_ratio(&reference_x, threshold).ratio,
                );
                let dtw = dtw_path(&reference_x, &x)?;
                row(&id, "dtw_cost", dtw.cost);
                row(&id, "path_r2", path_linearity(&dtw).unwrap_or(0.0));
                row(&id, "max_vertical_run", max_vertical_run(&dtw) as f64);
                let trace_path = synth.join(trace_file(u.id));
                if trace_path.exists() {
                    let trace: SynthesisTrace =
                        serde_json::from_str(&fs::read_to_string(trace_path)?)?;
                    if trace.durations.len() == u.durations.len() {
                        let d: Vec<f64> = trace.durations.iter().map(|&v| v as f64).collect();
                        let g: Vec<f64> = u.durations.iter().map(|&v| v as f64).collect();
                        row(&id, "duration_w1", wasserstein1(&d, &g)?);
                        sampled.extend(d);
                        truth.extend(g);
                    }
                }
                if heatmaps {
                    let acc = dtw_cost_matrix(&reference_x, &x)?;
                    let mut f =
                        fs::File::create(common.out.join(format!("utt_{:04}.dtw.pgm", u.id)))?;
                    write_pgm(&mut f, x.frames(), reference_x.frames(), &acc)?;
                }
            }
            if !truth.is_empty() {
                row("all", "duration_w1", wasserstein1(&sampled, &truth)?);
            }
            fs::write(common.out.join("metrics.csv"), csv)?;
            writeln!(out, "evaluated {count} utterances")?;
            Ok(EXIT_OK)
        }
        Command::Selftest => selftest(out),
    }
}

fn selftest(out: &mut impl Write) -> Result<i32> {
    let mut failures = 0;
    let mut check = |name: &str, ok: bool, out: &mut dyn Write| -> Result<()> {
        writeln!(out, "{} {name}", if ok { "ok  " } else { "FAIL" })?;
        if !ok {
            failures += 1;
        }
        Ok(())
    };

    let t = |v: f64| DiffusionTime::new(v);
    let cases = [
        (100, 20, 1.0, 20),
        (100, 20, 0.1, 100),
        (100, 20, 0.55, 60),
        (73, 10, 0.37, 54),
    ];
    let mut ok = true;
    for (l0, p, tv, want) in cases {
        ok &= schedule_length(l0, p, t(tv)?, jumpdiff::DEFAULT_T_MIN)? == want;
    }
    check("length schedule worked examples", ok, out)?;

    let sched = NoiseSchedule::default();
    let c = sched.vp_coefficients(t(0.5)?);
    let decay = (-sched.cum_beta(t(0.5)?)).exp();
    check(
        "kernel variance identity",
        (c.sigma * c.sigma + decay - 1.0).abs() < 1e-12,
        out,
    )?;

    let cfg = jumpdiff::corpus::CorpusConfig {
        num_utterances: 4,
        ..Default::default()
    };
    let a = gen_corpus(&cfg, 1, &mut stream(1, streams::CORPUS))?;
    let b = gen_corpus(&cfg, 1, &mut stream(1, streams::CORPUS))?;
    check("seeded corpus is reproducible", a == b, out)?;

    let u = &a.utterances[0];
    let p = u.phones.len();
    let mut protected_ok = true;
    for i in 0..50 {
        let tv = i as f64 / 49.0;
        let s = forward_sample(
            &u.x0,
            &u.mu,
            &u.alignment,
            t(tv)?,
            &sched,
            jumpdiff::DEFAULT_T_MIN,
            &mut stream(i, "selftest"),
        )?;
        let firsts: Vec<usize> = u.alignment.spans().iter().map(|s| s.start).collect();
        protected_ok &= firsts.iter().all(|f| s.kept.contains(f));
        protected_ok &=
            s.kept.len() == schedule_length(u.num_frames(), p, t(tv)?, jumpdiff::DEFAULT_T_MIN)?;
    }
    check(
        "forward corruption keeps protected frames",
        protected_ok,
        out,
    )?;

    let score = AnalyticScore::new(a.inventory.frame_variance, sched)?;
    let sampler = jumpdiff::reverse::SamplerConfig {
        steps: 20,
        allocation: jumpdiff::reverse::Allocation::Argmax,
        ..Default::default()
    };
    let oracle = OracleLocation::from_durations(u.durations.clone());
    let syn = synthesize(
        &sampler,
        &a.inventory.phone_means(&u.phones)?,
        u.num_frames(),
        &oracle,
        &PriorContent,
        &score,
        &mut stream(0, streams::SYNTH),
    )?;
    check(
        "oracle synthesis restores durations",
        syn.durations == u.durations,
        out,
    )?;

    Ok(if failures == 0 { EXIT_OK } else { EXIT_RUNTIME })
}
