mod common;

use common::*;
use reid_rank::eval::{mean_ap, EvalOptions};
use reid_rank::pipeline::{compute_distances, run_pipeline, PipelineParams, StageToggles};
use reid_rank::rerank::RerankParams;
use reid_rank::synth::{generate, SynthConfig};

fn raw_map(cfg: &SynthConfig) -> f64 {
    let ds = generate(cfg).unwrap();
    let d = compute_distances(&ds.query_embeddings(), &ds.gallery_embeddings()).unwrap();
    mean_ap(&d.query_gallery, &ds.manifest, &EvalOptions::default())
        .unwrap()
        .map
}

#[test]
#[ignore = "prints the oracle values frozen below"]
fn print_goldens() {
    let ds = generate(&SynthConfig::default()).unwrap();
    let l = labels(&ds);
    let raw = naive_pairwise(&ds.query_embeddings(), &ds.gallery_embeddings());
    let (map, cmc) = naive_map_cmc(&raw, &l.q_ids, &l.g_ids, &l.q_cams, &l.g_cams, false, 10);
    println!("default raw mAP {map:?} rank1 {:?}", cmc[0]);
    for seed in 0..20 {
        let (raw, fin) =
            oracle_pipeline_map(&generate(&improvement_config(seed)).unwrap(), 10, 0.3);
        println!("    ({seed}, {raw:?}, {fin:?}),");
    }
}

fn improvement_config(seed: u64) -> SynthConfig {
    SynthConfig {
        intra_sigma: 1.2,
        inter_sep: 2.0,
        track_len: 4,
        seed,
        ..Default::default()
    }
}

const DEFAULT_RAW_MAP: f64 = 1.0;
const DEFAULT_RAW_RANK1: f64 = 1.0;

#[test]
fn default_config_golden() {
    let ds = generate(&SynthConfig::default()).unwrap();
    let out = run_pipeline(
        &ds,
        &PipelineParams {
            stages: StageToggles::none(),
            ..Default::default()
        },
    )
    .unwrap();
    assert!(
        (out.report.map - DEFAULT_RAW_MAP).abs() <= 1e-12,
        "{}",
        out.report.map
    );
    assert!((out.report.rank1 - DEFAULT_RAW_RANK1).abs() <= 1e-12);
}

#[test]
fn near_zero_noise_is_perfect() {
    let cfg = SynthConfig {
        intra_sigma: 1e-9,
        inter_sep: 10.0,
        ..Default::default()
    };
    assert_eq!(raw_map(&cfg), 1.0);
}

#[test]
fn map_decreases_with_noise() {
    let maps: Vec<f64> = [0.25, 0.5, 1.0, 2.0]
        .iter()
        .map(|&s| {
            raw_map(&SynthConfig {
                intra_sigma: s,
                ..Default::default()
            })
        })
        .collect();
    assert!(maps.windows(2).all(|w| w[0] >= w[1]), "{maps:?}");
    assert!(maps[0] > maps[3]);
}

#[test]
fn rerank_and_tracks_match_oracle_path() {
    let cfg = SynthConfig {
        num_identities: 12,
        intra_sigma: 1.5,
        inter_sep: 2.0,
        seed: 5,
        ..Default::default()
    };
    let ds = generate(&cfg).unwrap();
    let params = PipelineParams {
        rerank: RerankParams::new(10, 3, 0.3),
        ..Default::default()
    };
    let out = run_pipeline(&ds, &params).unwrap();
    let raw = run_pipeline(
        &ds,
        &PipelineParams {
            stages: StageToggles::none(),
            ..Default::default()
        },
    )
    .unwrap();
    let (oracle_raw, oracle_final) = oracle_pipeline_map(&ds, 10, 0.3);
    assert!((raw.report.map - oracle_raw).abs() <= 1e-12);
    assert!((out.report.map - oracle_final).abs() <= 1e-12);
}
