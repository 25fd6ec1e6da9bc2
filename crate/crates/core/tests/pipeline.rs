mod common;

use std::fs;

use common::*;
use foasim::augment::{NoiseClip, NoisePool};
use foasim::dataio::config::Config;
use foasim::dataio::manifest::{read_corpus, CorpusEntry};
use foasim::dataio::{ItemStatus, Manifest};
use foasim::foa::MonoSignal;
use foasim::pipeline::{run, JobPlan, Resources};
use foasim::rng::SeededRng;

fn config(seed: u64) -> Config {
    Config {
        seed,
        ..Config::default()
    }
}

#[test]
fn empty_corpus_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let plan = JobPlan::new(Vec::new(), config(1), 2).unwrap();
    let summary = run(&plan, &Resources::from_config(&plan.config).unwrap(), dir.path()).unwrap();
    assert_eq!(summary.items, 0);
    let m = Manifest::read(&dir.path().join("manifest.jsonl")).unwrap();
    assert!(m.items.is_empty());
}

#[test]
fn bad_items_fail_alone() {
    let dir = tempfile::tempdir().unwrap();
    let mut corpus = write_corpus(&dir.path().join("c"), 6, 2);
    fs::write(dir.path().join("junk.wav"), b"not audio").unwrap();
    corpus.push(CorpusEntry {
        id: "junk".into(),
        path: dir.path().join("junk.wav"),
    });
    corpus.push(CorpusEntry {
        id: "absent".into(),
        path: dir.path().join("absent.wav"),
    });
    let mut cfg = config(3);
    cfg.augment.p_m = 1.0;
    cfg.augment.p_n = 0.0;
    let plan = JobPlan::new(corpus, cfg, 3).unwrap();
    let out = dir.path().join("out");
    let summary = run(&plan, &Resources::from_config(&plan.config).unwrap(), &out).unwrap();
    assert_eq!(summary.items, 8);
    assert_eq!(summary.failed, 2);
    let m = Manifest::read(&out.join("manifest.jsonl")).unwrap();
    for item in &m.items {
        let bad = item.id == "junk" || item.id == "absent";
        assert_eq!(item.status == ItemStatus::Failed, bad, "{}", item.id);
        if bad {
            assert!(item.error.is_some() && item.audio.is_none());
        }
    }
}

#[test]
fn worker_count_and_reruns_do_not_change_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(&dir.path().join("c"), 40, 8);
    let mut rng = SeededRng::new(4);
    let noise = NoisePool {
        clips: (0..3)
            .map(|i| NoiseClip {
                id: format!("n{i}"),
                signal: MonoSignal::new(noise(&mut rng, 3000 + 7000 * i)),
            })
            .collect(),
    };
    let mut outputs = Vec::new();
    for (k, workers) in [1, 8, 3].into_iter().enumerate() {
        let mut cfg = config(77);
        cfg.augment.p_m = 0.8;
        let mut res = Resources::from_config(&cfg).unwrap();
        res.noise = noise.clone();
        let plan = JobPlan::new(corpus.clone(), cfg, workers).unwrap();
        let out = dir.path().join(format!("o{k}"));
        let s = run(&plan, &res, &out).unwrap();
        assert_eq!(s.failed, 0);
        assert!(s.mixed > 0);
        outputs.push(tree_bytes(&out));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn different_seeds_differ() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(&dir.path().join("c"), 4, 8);
    let mut trees = Vec::new();
    for seed in [1, 2] {
        let plan = JobPlan::new(corpus.clone(), config(seed), 1).unwrap();
        let out = dir.path().join(format!("o{seed}"));
        run(&plan, &Resources::from_config(&plan.config).unwrap(), &out).unwrap();
        trees.push(tree_bytes(&out.join("audio")));
    }
    assert_ne!(trees[0], trees[1]);
}

#[test]
fn corpus_listing_resolves_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(&dir.path().join("wavs"), 2, 1);
    fs::write(
        dir.path().join("list.jsonl"),
        "{\"id\":\"first\",\"path\":\"wavs/utt0000.wav\"}\n{\"id\":\"second\",\"path\":\"wavs/utt0001.wav\"}\n",
    )
    .unwrap();
    let entries = read_corpus(&dir.path().join("list.jsonl")).unwrap();
    assert_eq!(entries.len(), 2);
    assert!(entries[1].path.exists());

    fs::write(
        dir.path().join("dup.jsonl"),
        "{\"id\":\"a\",\"path\":\"x.wav\"}\n{\"id\":\"a\",\"path\":\"y.wav\"}\n",
    )
    .unwrap();
    assert!(read_corpus(&dir.path().join("dup.jsonl")).is_err());
}

#[test]
fn mixing_without_noise_pool_is_disabled() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(&dir.path().join("c"), 5, 9);
    let plan = JobPlan::new(corpus, config(5), 2).unwrap();
    let s = run(&plan, &Resources::from_config(&plan.config).unwrap(), &dir.path().join("o")).unwrap();
    assert_eq!(s.mixed, 0);
    let m = Manifest::read(&dir.path().join("o/manifest.jsonl")).unwrap();
    assert_eq!(m.header.config.augment.p_m, 0.0);
}
