//! Acceptance suite: every criterion at its stated tolerance, one
//! PASS/FAIL line each. Run with `cargo test --test acceptance -- --nocapture`.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use pdvoice::config::RunConfig;
use pdvoice::data::audio::{read_audio, write_audio};
use pdvoice::data::manifest::{parse_manifest, render_manifest, ManifestEntry};
use pdvoice::data::matrix::{decode_matrix, encode_matrix, read_matrix, write_matrix};
use pdvoice::data::synth::generate_synthetic_corpus;
use pdvoice::data::Corpus;
use pdvoice::evaluation::{evaluate, metrics, ConfusionMatrix};
use pdvoice::features::{dwt, idwt, padded_len, Waveform, WaveletConfig, WaveletFamily};
use pdvoice::gradcheck::{run_suite, tiny_model};
use pdvoice::losses::{mine_hard_pairs, ContrastiveConfig, PairIndices};
use pdvoice::model::{
    Architecture, Components, HeadKind, LanguageId, LanguageRegistry, ModelParams, TaskType,
    UtteranceInput,
};
use pdvoice::numerics::Tensor;
use pdvoice::training::{
    ablate, adamw_step, batch_gradients, lr_at, train, AdamWConfig, BatchItem, OptimizerState,
    ScheduleConfig, TrainSetup, WeightedSampler,
};
use pdvoice::Error;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_secs: f64) -> Result<(), String> {
    check(elapsed.as_secs_f64() < limit_secs, || {
        format!("took {:.1}s, limit {limit_secs}s", elapsed.as_secs_f64())
    })
}

fn lib<T>(r: pdvoice::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn gradient_integrity() -> Outcome {
    let report = lib(run_suite(0, 20))?;
    let worst = report
        .cases
        .iter()
        .max_by(|a, b| a.max_error.total_cmp(&b.max_error))
        .expect("cases");
    check(report.cases.iter().all(|c| c.seeds >= 20), || {
        "fewer than 20 seeds".into()
    })?;
    check(worst.max_error < 1e-4, || {
        format!("{} max relative error {:.3e}", worst.name, worst.max_error)
    })?;
    within(report.elapsed, 60.0)?;
    Ok(format!(
        "{} cases x 20 seeds, worst {} {:.2e}, {:.1}s",
        report.cases.len(),
        worst.name,
        worst.max_error,
        report.elapsed.as_secs_f64()
    ))
}

fn wavelet_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_energy, mut worst_recon) = (0.0f64, 0.0f64);
    for family in [WaveletFamily::Haar, WaveletFamily::Db4] {
        let cfg = WaveletConfig {
            family,
            ..WaveletConfig::default()
        };
        for _ in 0..1000 {
            let len = rng.random_range(32..=512);
            let x: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p = lib(dwt(&x, &cfg))?;
            let n = padded_len(len, cfg.levels);
            let e: f64 = (0..n).map(|i| x[i % len].powi(2)).sum();
            worst_energy = worst_energy.max((p.energy() - e).abs() / e);
            let back = lib(idwt(&p, family))?;
            check(back.len() == n, || {
                format!("reconstruction has {} samples", back.len())
            })?;
            let err = (0..n)
                .map(|i| (back[i] - x[i % len]).abs())
                .fold(0.0, f64::max);
            worst_recon = worst_recon.max(err);
        }
        for c in [0.0, 0.3, -1.0, 1e-3] {
            let p = lib(dwt(&[c; 400], &cfg))?;
            check(p.details.iter().flatten().all(|&d| d == 0.0), || {
                format!("{family:?}: constant {c} has a nonzero detail")
            })?;
        }
    }
    check(worst_energy <= 1e-6, || {
        format!("energy error {worst_energy:.2e}")
    })?;
    check(worst_recon <= 1e-6, || {
        format!("reconstruction error {worst_recon:.2e}")
    })?;
    within(start.elapsed(), 10.0)?;
    Ok(format!(
        "2000 frames, energy rel {worst_energy:.1e}, reconstruction {worst_recon:.1e}, constant details exactly 0"
    ))
}

fn exhaustive_pairs(emb: &[Vec<f64>], labels: &[u8]) -> PairIndices {
    let dist = |i: usize, j: usize| -> f64 {
        emb[i]
            .iter()
            .zip(&emb[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let mut pos: Option<((usize, usize), f64)> = None;
    let mut neg: Option<((usize, usize), f64)> = None;
    for i in 0..emb.len() {
        for j in i + 1..emb.len() {
            let d = dist(i, j);
            if labels[i] == labels[j] {
                if pos.is_none_or(|(_, b)| d > b) {
                    pos = Some(((i, j), d));
                }
            } else if neg.is_none_or(|(_, b)| d < b) {
                neg = Some(((i, j), d));
            }
        }
    }
    PairIndices {
        hardest_positive: pos.map(|p| p.0),
        hardest_negative: neg.map(|p| p.0),
    }
}

fn miner_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ties = 0;
    for batch in 0..500 {
        let n = rng.random_range(0..=64);
        let d = rng.random_range(1..=4);
        // a coarse integer grid makes distance ties common
        let grid = batch % 2 == 0;
        let emb: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..d)
                    .map(|_| {
                        if grid {
                            f64::from(rng.random_range(-2..=2))
                        } else {
                            rng.random_range(-1.0..1.0)
                        }
                    })
                    .collect()
            })
            .collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let refs: Vec<&[f64]> = emb.iter().map(Vec::as_slice).collect();
        let got = mine_hard_pairs(&refs, &labels);
        let want = exhaustive_pairs(&emb, &labels);
        check(got == want, || {
            format!("batch {batch} (n={n}): {got:?} != {want:?}")
        })?;
        if grid {
            ties += 1;
        }
    }
    within(start.elapsed(), 10.0)?;
    Ok(format!(
        "500 batches, n<=64, {ties} on a tie-heavy grid, {:.2}s",
        start.elapsed().as_secs_f64()
    ))
}

fn metrics_oracle() -> Outcome {
    let render = |tp, fn_, tn, fp| -> Result<[String; 4], String> {
        let m = lib(metrics(&ConfusionMatrix::new(tp, fn_, tn, fp)))?;
        Ok([m.accuracy, m.sensitivity, m.specificity, m.macro_f1].map(|v| format!("{v:.2}")))
    };
    let a = render(32, 14, 289, 49)?;
    check(a == ["83.59", "69.57", "85.50", "70.28"], || {
        format!("first row {a:?}")
    })?;
    let b = render(55, 5, 53, 7)?;
    check(b == ["90.00", "91.67", "88.33", "90.00"], || {
        format!("second row {b:?}")
    })?;
    let mut count = 0u64;
    let ratio = |n: u64, d: u64| {
        if d == 0 {
            0.0
        } else {
            100.0 * n as f64 / d as f64
        }
    };
    for tp in 0..=50u64 {
        for fn_ in 0..=50u64 {
            for tn in 0..=50u64 {
                for fp in 0..=50u64 {
                    if tp + fn_ + tn + fp == 0 {
                        continue;
                    }
                    let m = lib(metrics(&ConfusionMatrix::new(tp, fn_, tn, fp)))?;
                    let f1 = |t: u64, p_pred: u64, p_true: u64| {
                        let (p, r) = (ratio(t, p_pred), ratio(t, p_true));
                        if p + r == 0.0 {
                            0.0
                        } else {
                            2.0 * p * r / (p + r)
                        }
                    };
                    let macro_f1 = (f1(tp, tp + fp, tp + fn_) + f1(tn, tn + fn_, tn + fp)) / 2.0;
                    let want = [
                        ratio(tp + tn, tp + fn_ + tn + fp),
                        ratio(tp, tp + fn_),
                        ratio(tn, tn + fp),
                        macro_f1,
                    ];
                    let got = [m.accuracy, m.sensitivity, m.specificity, m.macro_f1];
                    for (g, w) in got.iter().zip(&want) {
                        check((g - w).abs() < 1e-9, || {
                            format!("({tp},{fn_},{tn},{fp}): {got:?} vs {want:?}")
                        })?;
                    }
                    count += 1;
                }
            }
        }
    }
    Ok(format!(
        "both table rows exact, {count} grid matrices agree"
    ))
}

fn routing_isolation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let arch = lib(Architecture::new(tiny_model(), Components::full(), 2))?;
    let params: ModelParams<f64> = lib(arch.init_params(&mut rng))?;
    let cfg = ContrastiveConfig::default();
    for batch in 0..100 {
        let task = TaskType::ALL[batch % 2];
        let n = rng.random_range(1..=8);
        let data: Vec<(Tensor<f64>, Tensor<f64>)> = (0..n)
            .map(|_| {
                let t = rng.random_range(3..9);
                let mut r = |rows, cols| {
                    let v = (0..rows * cols)
                        .map(|_| rng.random_range(-2.0..2.0))
                        .collect();
                    Tensor::new(vec![rows, cols], v).unwrap()
                };
                (r(t, 4), r(t + 1, 3))
            })
            .collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let items: Vec<BatchItem<'_, f64>> = data
            .iter()
            .zip(&labels)
            .map(|((s, w), &label)| BatchItem {
                input: UtteranceInput {
                    ssl: s,
                    wavelet: Some(w),
                    task,
                    language: LanguageId(rng.random_range(0..2)),
                },
                label,
            })
            .collect();
        let (_, grads) = lib(batch_gradients(&arch, &params, &items, Some(&cfg)))?;
        let active = HeadKind::route(task, &Components::full());
        let inactive = match active {
            HeadKind::Ddk => HeadKind::Speech,
            _ => HeadKind::Ddk,
        };
        let norm_of = |head: HeadKind| -> f64 {
            params
                .iter()
                .zip(&grads)
                .filter(|(p, _)| p.id.starts_with(head.prefix()))
                .map(|(_, g)| g.sum_squares())
                .sum()
        };
        check(norm_of(inactive) == 0.0, || {
            format!(
                "batch {batch}: inactive {inactive:?} head gradient norm {}",
                norm_of(inactive)
            )
        })?;
        check(norm_of(active) > 0.0, || {
            format!("batch {batch}: active head has no gradient")
        })?;
    }
    Ok("100 single-task batches, inactive head gradient norm exactly 0".into())
}

struct Synthetic {
    corpus: Corpus,
    languages: LanguageRegistry,
    config: RunConfig,
    _dir: tempfile::TempDir,
}

fn synthetic() -> Result<Synthetic, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = RunConfig::synthetic();
    lib(generate_synthetic_corpus(
        &config.synth_config(),
        dir.path(),
    ))?;
    let corpus = lib(Corpus::load(dir.path(), Some(&config.features)))?;
    let languages = LanguageRegistry::from_names(["synth_a", "synth_b"]);
    Ok(Synthetic {
        corpus,
        languages,
        config,
        _dir: dir,
    })
}

fn setup_for(s: &Synthetic, components: Components, seed: u64) -> TrainSetup {
    let mut setup = s.config.setup();
    setup.components = components;
    setup.train.seed = seed;
    setup
}

fn test_f1(s: &Synthetic, setup: &TrainSetup) -> Result<BTreeMap<String, f64>, String> {
    let out = lib(train(
        &s.corpus.train,
        &s.corpus.validation,
        &s.languages,
        setup,
    ))?;
    let arch = lib(out.checkpoint.architecture())?;
    let eval = lib(evaluate(
        &arch,
        &out.checkpoint.params,
        &s.languages,
        &s.corpus.test,
        false,
    ))?;
    Ok(eval
        .by_dataset
        .iter()
        .map(|(d, m)| (d.clone(), m.macro_f1))
        .collect())
}

fn bilingual_experiment(s: &Synthetic) -> Outcome {
    let start = Instant::now();
    let mut gains = Vec::new();
    let mut lines = Vec::new();
    for seed in 0..3 {
        let full = test_f1(s, &setup_for(s, Components::full(), seed))?;
        let base = test_f1(s, &setup_for(s, Components::baseline(), seed))?;
        for (lang, f) in &full {
            let b = base[lang];
            check(*f >= b, || {
                format!("seed {seed} {lang}: proposed {f:.2} < baseline {b:.2}")
            })?;
            gains.push(f - b);
            lines.push(format!("{lang}@{seed} {f:.1}/{b:.1}"));
        }
    }
    let mean = gains.iter().sum::<f64>() / gains.len() as f64;
    check(mean >= 2.0, || format!("mean improvement {mean:.2} < 2"))?;
    within(start.elapsed(), 900.0)?;
    Ok(format!(
        "mean gain {mean:.2} points, proposed/baseline {}, {:.0}s",
        lines.join(" "),
        start.elapsed().as_secs_f64()
    ))
}

fn ablation_harness(s: &Synthetic) -> Outcome {
    let base = setup_for(s, Components::full(), s.config.seed);
    let names = Components::NAMES;
    let table = lib(ablate(&s.corpus, &s.languages, &base, &names))?;
    check(table.rows.len() == names.len() + 1, || {
        format!("{} rows for {} components", table.rows.len(), names.len())
    })?;
    for (row, name) in table.rows[1..].iter().zip(names) {
        check(row.name() == name, || {
            format!("row `{}` for `{name}`", row.name())
        })?;
    }
    check(
        matches!(
            ablate(&s.corpus, &s.languages, &base, &["attention"]),
            Err(Error::Usage(_))
        ),
        || "unknown component accepted".into(),
    )?;
    let mut largest = Vec::new();
    for d in &table.datasets {
        let worst = table.rows[1..]
            .iter()
            .min_by(|a, b| a.delta[d].total_cmp(&b.delta[d]))
            .expect("rows");
        largest.push((d.clone(), worst.name().to_string(), worst.delta[d]));
    }
    check(largest.iter().any(|(_, n, _)| n == "dual_head"), || {
        format!("largest drops: {largest:?}")
    })?;
    let again = lib(ablate(&s.corpus, &s.languages, &base, &names))?;
    check(again == table, || "rerun differs".into())?;
    let summary: Vec<String> = largest
        .iter()
        .map(|(d, n, v)| format!("{d}: {n} {v:+.2}"))
        .collect();
    Ok(format!(
        "{} rows, largest drop {}, rerun identical",
        table.rows.len(),
        summary.join(", ")
    ))
}

fn determinism(s: &Synthetic) -> Outcome {
    let setup = setup_for(s, Components::full(), s.config.seed);
    let run = || -> Result<(Vec<u8>, String), String> {
        let out = lib(train(
            &s.corpus.train,
            &s.corpus.validation,
            &s.languages,
            &setup,
        ))?;
        Ok((lib(out.checkpoint.to_bytes())?, out.history.to_tsv()))
    };
    let first = run()?;
    for repeat in 1..=2 {
        let again = run()?;
        check(again.0 == first.0, || {
            format!("checkpoint differs on repeat {repeat}")
        })?;
        check(again.1 == first.1, || {
            format!("history differs on repeat {repeat}")
        })?;
    }
    Ok(format!(
        "checkpoint ({} bytes) and history identical on 2 repeats",
        first.0.len()
    ))
}

fn schedule_and_optimizer() -> Outcome {
    let cfg = lib(ScheduleConfig::new(0.1, 100))?;
    let lr = |s| lib(lr_at(s, &cfg, 1e-4));
    check(lr(0)? == 0.0, || "lr_at(0) != 0".into())?;
    check(lr(10)? == 1e-4, || "lr_at(W) != max_lr".into())?;
    check(lr(55)? == 0.5e-4, || {
        format!("lr_at(55) = {}", lr(55).unwrap())
    })?;
    check(lr(100)? == 0.0, || "lr_at(total) != 0".into())?;
    check(
        matches!(lr_at(101, &cfg, 1e-4), Err(Error::Usage(_))),
        || "step past total accepted".into(),
    )?;

    let mut params = ModelParams::<f64>::new();
    let values = vec![1.0, -2.5, 0.125, 3e-3];
    lib(params.insert("w", Tensor::vector(values.clone())))?;
    let mut state = OptimizerState::new(&params, AdamWConfig::default());
    let zeros = params.zeros_like();
    lib(adamw_step(&mut params, &zeros, &mut state, 1e-4))?;
    let scaled: Vec<f64> = values.iter().map(|v| v * (1.0 - 1e-4 * 0.01)).collect();
    check(lib(params.value("w"))?.data() == scaled.as_slice(), || {
        "pure-decay step is not an exact (1 - lr*wd) scaling".into()
    })?;

    let mut items = Vec::new();
    for (d, hc, pd) in [("a", 900, 100), ("b", 30, 270)] {
        items.extend(std::iter::repeat_n((d, 0u8), hc));
        items.extend(std::iter::repeat_n((d, 1u8), pd));
    }
    let sampler = lib(WeightedSampler::new(&items))?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut counts: BTreeMap<(&str, u8), f64> = BTreeMap::new();
    for _ in 0..100_000 {
        *counts.entry(items[sampler.draw(&mut rng)]).or_default() += 1.0;
    }
    let chi = ChiSquared::new(1.0).map_err(|e| e.to_string())?;
    let mut p_values = Vec::new();
    for d in ["a", "b"] {
        let (h, p) = (counts[&(d, 0)], counts[&(d, 1)]);
        let e = (h + p) / 2.0;
        let stat = ((h - e).powi(2) + (p - e).powi(2)) / e;
        let pv = 1.0 - chi.cdf(stat);
        check(pv > 0.01, || format!("dataset {d}: chi-square p = {pv:.4}"))?;
        p_values.push(format!("{d} p={pv:.3}"));
    }
    Ok(format!(
        "lr_at exact, pure decay exact, sampler {}",
        p_values.join(" ")
    ))
}

fn format_round_trips() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let entries: Vec<ManifestEntry> = (0..5)
        .map(|i| ManifestEntry {
            utterance_id: format!("u{i}"),
            speaker_id: format!("s{}", i / 2),
            dataset: if i % 2 == 0 { "synth_a" } else { "synth_b" }.into(),
            task: TaskType::ALL[i % 2],
            label: (i % 2) as u8,
            audio_path: (i != 3).then(|| format!("audio/u{i}.wav")),
            ssl_feature_path: format!("ssl/u{i}.ftrx"),
        })
        .collect();
    let parsed = lib(parse_manifest(&render_manifest(&entries), "mem"))?;
    check(parsed == entries, || "manifest round trip differs".into())?;
    check(
        matches!(
            parse_manifest("{\"utterance_id\": 3}\n", "bad.jsonl"),
            Err(Error::Parse { line: 1, .. })
        ),
        || "malformed manifest line accepted".into(),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut data: Vec<f32> = (0..50 * 7).map(|_| rng.random_range(-1e3..1e3)).collect();
    data[..4].copy_from_slice(&[-0.0, f32::MIN_POSITIVE / 2.0, f32::MAX, 1.0 / 3.0]);
    let m = lib(Tensor::new(vec![50, 7], data))?;
    let path = dir.path().join("m.ftrx");
    lib(write_matrix(&path, &m))?;
    let back = lib(read_matrix(&path))?;
    check(
        back.shape() == m.shape()
            && back
                .data()
                .iter()
                .zip(m.data())
                .all(|(a, b)| a.to_bits() == b.to_bits()),
        || "FTRX round trip is not bit exact".into(),
    )?;
    let bytes = lib(encode_matrix(&m))?;
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    check(
        matches!(decode_matrix(&bad_magic, "m"), Err(Error::Format { .. })),
        || "corrupted FTRX magic accepted".into(),
    )?;
    check(
        matches!(
            decode_matrix(&bytes[..bytes.len() - 3], "m"),
            Err(Error::Format { .. })
        ),
        || "truncated FTRX accepted".into(),
    )?;

    let samples: Vec<f64> = (0..4000)
        .map(|_| f64::from(rng.random_range(-32768i32..=32767)) / 32768.0)
        .collect();
    let w = lib(Waveform::new(samples, 16_000))?;
    let wav = dir.path().join("a.wav");
    lib(write_audio(&wav, &w))?;
    check(lib(read_audio(&wav))? == w, || {
        "WAV round trip differs".into()
    })?;
    let raw = std::fs::read(&wav).map_err(|e| e.to_string())?;
    let corrupt = dir.path().join("c.wav");
    let mut bad = raw.clone();
    bad[..4].copy_from_slice(b"JUNK");
    std::fs::write(&corrupt, &bad).map_err(|e| e.to_string())?;
    check(
        matches!(read_audio(&corrupt), Err(Error::Format { .. })),
        || "corrupted WAV magic accepted".into(),
    )?;
    std::fs::write(&corrupt, &raw[..30]).map_err(|e| e.to_string())?;
    check(
        matches!(read_audio(&corrupt), Err(Error::Format { .. })),
        || "truncated WAV accepted".into(),
    )?;
    Ok("manifest, FTRX (bit exact) and 16-bit WAV lossless; corruption rejected".into())
}

#[test]
fn acceptance() {
    let synthetic = synthetic();
    let on_corpus = |f: fn(&Synthetic) -> Outcome| -> Outcome {
        match &synthetic {
            Ok(s) => f(s),
            Err(e) => Err(format!("synthetic corpus: {e}")),
        }
    };
    let results: Vec<(&str, Outcome)> = vec![
        ("gradient integrity", gradient_integrity()),
        ("wavelet correctness", wavelet_correctness()),
        ("miner oracle", miner_oracle()),
        ("metrics oracle", metrics_oracle()),
        ("routing isolation", routing_isolation()),
        (
            "bilingual synthetic experiment",
            on_corpus(bilingual_experiment),
        ),
        ("ablation harness", on_corpus(ablation_harness)),
        ("determinism", on_corpus(determinism)),
        ("schedule and optimizer", schedule_and_optimizer()),
        ("format round trips", format_round_trips()),
    ];
    let mut failed = Vec::new();
    for (i, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
