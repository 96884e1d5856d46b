use std::collections::BTreeMap;
use std::path::Path;

use statrs::distribution::{ContinuousCDF, StudentsT};

use super::synth::{LanguageSpec, SynthCorpus, SynthUtterance};
use super::*;

fn small_config(seed: u64) -> SynthConfig {
    SynthConfig {
        seed,
        languages: vec![
            LanguageSpec {
                name: "synth_a".into(),
                healthy: 6,
                pd: 3,
                shift: 3.0,
                scale: 1.0,
            },
            LanguageSpec {
                name: "synth_b".into(),
                healthy: 4,
                pd: 4,
                shift: 3.0,
                scale: 2.0,
            },
        ],
        ddk_secs: 0.5,
        continuous_secs: 0.6,
        ..SynthConfig::default()
    }
}

fn mean_pool(m: &Tensor<f32>) -> Vec<f64> {
    let (t, d) = (m.rows(), m.last_dim());
    let mut out = vec![0.0; d];
    for r in 0..t {
        for (o, v) in out.iter_mut().zip(m.row(r)) {
            *o += f64::from(*v) / t as f64;
        }
    }
    out
}

fn tree_contents(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn same_seed_gives_identical_trees() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate_synthetic_corpus(&small_config(11), a.path()).unwrap();
    generate_synthetic_corpus(&small_config(11), b.path()).unwrap();
    let (ta, tb) = (tree_contents(a.path()), tree_contents(b.path()));
    assert!(ta.len() > 10);
    assert_eq!(ta, tb);

    let c = tempfile::tempdir().unwrap();
    generate_synthetic_corpus(&small_config(12), c.path()).unwrap();
    assert_ne!(ta, tree_contents(c.path()));
}

#[test]
fn loaded_tree_matches_memory_and_is_speaker_disjoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(3);
    let mem = generate_synthetic_corpus(&cfg, dir.path()).unwrap();
    let settings = FeatureSettings::default();
    let corpus = Corpus::load(dir.path(), Some(&settings)).unwrap();
    for split in Split::ALL {
        let (m, d) = (mem.split(split), corpus.split(split));
        assert_eq!(m.len(), d.len());
        for (a, b) in m.iter().zip(d) {
            assert_eq!(a.entry, b.entry);
            assert_eq!(a.ssl, b.ssl);
            let wav = b.wavelet.as_ref().unwrap();
            assert_eq!(wav.last_dim(), 18);
            let expected_frames = (a.audio.samples.len() - 400) / 320 + 1;
            assert_eq!(wav.rows(), expected_frames);
        }
    }
    assert_eq!(corpus.datasets(), vec!["synth_a", "synth_b"]);
    let total: usize = Split::ALL.iter().map(|&s| corpus.split(s).len()).sum();
    assert_eq!(total, (9 + 8) * 2);

    let without = Corpus::load(dir.path(), None).unwrap();
    assert!(without.train.iter().all(|u| u.wavelet.is_none()));
}

#[test]
fn speaker_overlap_is_rejected() {
    let mem = synthesize(&small_config(5)).unwrap();
    let to_utt = |s: &SynthUtterance| Utterance {
        entry: s.entry.clone(),
        ssl: s.ssl.clone(),
        wavelet: None,
    };
    let train: Vec<Utterance> = mem.train.iter().map(to_utt).collect();
    let mut test: Vec<Utterance> = mem.test.iter().map(to_utt).collect();
    check_speaker_disjoint(&[&train, &test]).unwrap();
    test.push(train[0].clone());
    test.last_mut().unwrap().entry.utterance_id.push_str("_dup");
    assert!(matches!(
        check_speaker_disjoint(&[&train, &test]),
        Err(Error::Validation(_))
    ));
}

#[test]
fn split_proportions_per_class() {
    let mem = synthesize(&SynthConfig {
        ddk_secs: 0.3,
        continuous_secs: 0.3,
        ..SynthConfig::default()
    })
    .unwrap();
    let speakers = |s: Split, lang: &str, label: u8| {
        let mut v: Vec<&str> = mem
            .split(s)
            .iter()
            .filter(|u| u.entry.dataset == lang && u.entry.label == label)
            .map(|u| u.entry.speaker_id.as_str())
            .collect();
        v.sort_unstable();
        v.dedup();
        v.len()
    };
    // 64 HC / 16 PD and 24 / 24 under a 70/10/20 split, rounded per class
    assert_eq!(speakers(Split::Train, "synth_a", 0), 45);
    assert_eq!(speakers(Split::Validation, "synth_a", 0), 6);
    assert_eq!(speakers(Split::Test, "synth_a", 0), 13);
    assert_eq!(speakers(Split::Train, "synth_a", 1), 11);
    assert_eq!(speakers(Split::Train, "synth_b", 1), 17);
    assert_eq!(speakers(Split::Validation, "synth_b", 1), 2);
    assert_eq!(speakers(Split::Test, "synth_b", 1), 5);
}

#[test]
fn dim_map_is_cross_lingual() {
    let cfg = SynthConfig::default();
    let mem = synthesize(&SynthConfig {
        ddk_secs: 0.3,
        continuous_secs: 0.3,
        ..cfg.clone()
    })
    .unwrap();
    let dims = &mem.dims;
    assert_eq!(dims.pd.len(), cfg.n_pd_dims);
    assert_eq!(dims.language.len(), 2);
    let mut all: Vec<usize> = dims.pd.clone();
    all.extend(&dims.pd_shared);
    all.extend(&dims.articulation);
    for (_, d) in &dims.language {
        all.extend(d);
    }
    let n = all.len();
    all.sort_unstable();
    all.dedup();
    assert_eq!(all.len(), n, "designated dimension sets overlap");
    assert!(all.iter().all(|&d| d < cfg.d_ssl));
}

fn pooled(corpus: &SynthCorpus, split: Split) -> Vec<(Vec<f64>, &ManifestEntry)> {
    corpus
        .split(split)
        .iter()
        .map(|u| (mean_pool(&u.ssl), &u.entry))
        .collect()
}

fn welch_p(a: &[f64], b: &[f64]) -> f64 {
    let stats = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        (n, m, v)
    };
    let ((na, ma, va), (nb, mb, vb)) = (stats(a), stats(b));
    let se2 = va / na + vb / nb;
    let t = (ma - mb) / se2.sqrt();
    let df = se2.powi(2) / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).unwrap();
    2.0 * (1.0 - dist.cdf(t.abs()))
}

#[test]
fn zero_effect_makes_labels_uninformative() {
    let null = synthesize(&SynthConfig {
        pd_effect: 0.0,
        ddk_secs: 1.0,
        continuous_secs: 1.0,
        ..SynthConfig::default()
    })
    .unwrap();
    let mut rows = pooled(&null, Split::Train);
    rows.extend(pooled(&null, Split::Validation));
    rows.extend(pooled(&null, Split::Test));
    let designated: Vec<usize> = null
        .dims
        .pd
        .iter()
        .chain(&null.dims.pd_shared)
        .copied()
        .collect();
    let k = designated.len() as f64;
    for task in TaskType::ALL {
        for &d in &designated {
            let class = |y: u8| -> Vec<f64> {
                rows.iter()
                    .filter(|(_, e)| e.label == y && e.task == task)
                    .map(|(x, _)| x[d])
                    .collect()
            };
            let p = welch_p(&class(0), &class(1));
            // Bonferroni over the designated dimensions
            assert!(p > 0.01 / k, "dim {d} task {task}: p = {p}");
        }
    }

    let real = synthesize(&SynthConfig::default()).unwrap();
    let rows = pooled(&real, Split::Train);
    let d = real.dims.pd[0];
    let class = |y: u8| -> Vec<f64> {
        rows.iter()
            .filter(|(_, e)| e.label == y && e.task == TaskType::Ddk)
            .map(|(x, _)| x[d])
            .collect()
    };
    assert!(welch_p(&class(0), &class(1)) < 1e-6);
}

/// Class-balanced logistic regression on standardized features, full-batch gradient descent.
struct Probe {
    mean: Vec<f64>,
    std: Vec<f64>,
    w: Vec<f64>,
    b: f64,
}

impl Probe {
    fn fit(x: &[Vec<f64>], y: &[u8]) -> Self {
        let d = x[0].len();
        let n = x.len() as f64;
        let mean: Vec<f64> = (0..d)
            .map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect();
        let std: Vec<f64> = (0..d)
            .map(|j| {
                let v = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                v.sqrt().max(1e-8)
            })
            .collect();
        let mut probe = Probe {
            mean,
            std,
            w: vec![0.0; d],
            b: 0.0,
        };
        let z: Vec<Vec<f64>> = x.iter().map(|r| probe.standardize(r)).collect();
        let pos = y.iter().filter(|&&v| v == 1).count() as f64;
        let weight = |v: u8| {
            if v == 1 {
                n / (2.0 * pos)
            } else {
                n / (2.0 * (n - pos))
            }
        };
        for _ in 0..2000 {
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            for (zi, &yi) in z.iter().zip(y) {
                let p = 1.0 / (1.0 + (-probe.logit(zi)).exp());
                let g = weight(yi) * (p - f64::from(yi)) / n;
                for (a, b) in gw.iter_mut().zip(zi) {
                    *a += g * b;
                }
                gb += g;
            }
            for (w, g) in probe.w.iter_mut().zip(&gw) {
                *w -= 0.5 * (g + 1.0 * *w);
            }
            probe.b -= 0.5 * gb;
        }
        probe
    }

    fn standardize(&self, r: &[f64]) -> Vec<f64> {
        r.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    fn logit(&self, z: &[f64]) -> f64 {
        z.iter().zip(&self.w).map(|(a, b)| a * b).sum::<f64>() + self.b
    }

    fn predict(&self, r: &[f64]) -> u8 {
        u8::from(self.logit(&self.standardize(r)) >= 0.0)
    }
}

fn accuracy(probe: &Probe, rows: &[(Vec<f64>, u8)]) -> f64 {
    let hits = rows.iter().filter(|(x, y)| probe.predict(x) == *y).count();
    hits as f64 / rows.len() as f64
}

#[test]
fn default_corpus_is_learnable_and_language_separable() {
    let corpus = synthesize(&SynthConfig::default()).unwrap();
    let (train, test) = (pooled(&corpus, Split::Train), pooled(&corpus, Split::Test));
    for lang in ["synth_a", "synth_b"] {
        for task in TaskType::ALL {
            let cell = |rows: &[(Vec<f64>, &ManifestEntry)]| -> Vec<(Vec<f64>, u8)> {
                rows.iter()
                    .filter(|(_, e)| e.dataset == lang && e.task == task)
                    .map(|(x, e)| (x.clone(), e.label))
                    .collect()
            };
            let (tr, te) = (cell(&train), cell(&test));
            let (x, y): (Vec<Vec<f64>>, Vec<u8>) = tr.into_iter().unzip();
            let probe = Probe::fit(&x, &y);
            let acc = accuracy(&probe, &te);
            assert!(acc >= 0.85, "{lang}/{task}: linear probe accuracy {acc}");
        }
    }

    let lang_rows = |rows: &[(Vec<f64>, &ManifestEntry)]| -> Vec<(Vec<f64>, u8)> {
        rows.iter()
            .map(|(x, e)| (x.clone(), u8::from(e.dataset == "synth_b")))
            .collect()
    };
    let (x, y): (Vec<Vec<f64>>, Vec<u8>) = lang_rows(&train).into_iter().unzip();
    let probe = Probe::fit(&x, &y);
    let acc = accuracy(&probe, &lang_rows(&test));
    assert!(acc > 0.95, "language probe accuracy {acc}");
}

#[test]
fn invalid_configs_are_rejected() {
    let cfg = SynthConfig {
        d_ssl: 10,
        ..SynthConfig::default()
    };
    assert!(matches!(synthesize(&cfg), Err(Error::Config(_))));
    let cfg = SynthConfig {
        split: [0.5, 0.5, 0.5],
        ..SynthConfig::default()
    };
    assert!(cfg.validate().is_err());
    let mut cfg = SynthConfig::default();
    cfg.languages[1].name = "synth_a".into();
    assert!(cfg.validate().is_err());
}
