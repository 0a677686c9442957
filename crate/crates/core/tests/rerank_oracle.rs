mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::*;
use proptest::prelude::*;
use reid_rank::dataset::{ItemManifest, ItemRecord, Split};
use reid_rank::distance::{fuse_metadata, FusionWeights};
use reid_rank::rerank::{
    expand_reciprocal, jaccard_distance, k_nearest, k_reciprocal, rerank, track_average,
    RerankParams,
};
use reid_rank::synth::GaussianStream;
use reid_rank::Matrix;

fn set(v: &[usize]) -> BTreeSet<usize> {
    v.iter().copied().collect()
}

fn members(s: &reid_rank::rerank::NeighborSet) -> BTreeSet<usize> {
    s.members.iter().copied().collect()
}

#[test]
fn k_nearest_matches_sort_oracle() {
    let mut rng = GaussianStream::new(12);
    let pts = random_matrix(&mut rng, 12, 3, 1.0);
    let d = naive_pairwise(&pts, &pts);
    for p in 0..12 {
        assert_eq!(members(&k_nearest(&d, p, 4).unwrap()), naive_knn(&d, p, 4));
        let all = k_nearest(&d, p, 11).unwrap();
        assert_eq!(all.len(), 11);
        assert!(!all.contains(p));
    }
}

#[test]
fn k_reciprocal_matches_brute_force() {
    let mut rng = GaussianStream::new(15);
    let pts = random_matrix(&mut rng, 15, 3, 1.0);
    let d = naive_pairwise(&pts, &pts);
    for p in 0..15 {
        let got = members(&k_reciprocal(&d, p, 5).unwrap());
        let brute: BTreeSet<usize> = (0..15)
            .filter(|&q| {
                q != p && naive_knn(&d, p, 5).contains(&q) && naive_knn(&d, q, 5).contains(&p)
            })
            .collect();
        assert_eq!(got, brute);
    }
}

#[test]
fn four_clique_with_k1_2() {
    // At k1 = 2 the candidate sets R(q, 1) hold at most one item, which must
    // already lie in R(p, 2) to pass the overlap test, so nothing is added.
    let d = Matrix::from_rows(&[
        [0.0, 1.0, 1.1, 1.2],
        [1.0, 0.0, 1.05, 1.15],
        [1.1, 1.05, 0.0, 1.25],
        [1.2, 1.15, 1.25, 0.0],
    ])
    .unwrap();
    let expected = [set(&[1, 2]), set(&[0, 2]), set(&[0, 1]), set(&[])];
    for (p, want) in expected.iter().enumerate() {
        let r = members(&k_reciprocal(&d, p, 2).unwrap());
        let rstar = members(&expand_reciprocal(&d, p, 2).unwrap());
        assert_eq!(rstar, naive_expand(&d, p, 2));
        assert_eq!(&rstar, want);
        assert_eq!(r, rstar);
        assert!(rstar.iter().all(|&q| q < 4));
    }
}

#[test]
fn expansion_grows_on_clustered_instance() {
    let mut rng = GaussianStream::new(0);
    let d = clustered_joint(&mut rng, 16, 2, 2);
    let r = members(&k_reciprocal(&d, 0, 11).unwrap());
    let rstar = members(&expand_reciprocal(&d, 0, 11).unwrap());
    assert_eq!(r, set(&[2, 4, 6, 8, 10, 12, 14]));
    assert_eq!(rstar, set(&[0, 2, 4, 6, 8, 10, 11, 12, 14]));
}

#[test]
fn no_expansion_when_overlap_fails() {
    // two far-apart pairs: R(0, 1) = {1}, R(1, 1) = {0} and 0 ∉ R(0, 1)
    let d = Matrix::from_rows(&[
        [0.0, 1.0, 9.0, 9.5],
        [1.0, 0.0, 9.2, 9.7],
        [9.0, 9.2, 0.0, 1.0],
        [9.5, 9.7, 1.0, 0.0],
    ])
    .unwrap();
    for p in 0..4 {
        assert_eq!(
            expand_reciprocal(&d, p, 1).unwrap().members,
            k_reciprocal(&d, p, 1).unwrap().members
        );
    }
}

#[test]
fn jaccard_on_expanded_sets_matches_oracle() {
    let mut rng = GaussianStream::new(4);
    let d = clustered_joint(&mut rng, 20, 3, 4);
    for p in 0..20 {
        for g in 0..20 {
            let a = expand_reciprocal(&d, p, 6).unwrap();
            let b = expand_reciprocal(&d, g, 6).unwrap();
            let want = naive_jaccard(&naive_expand(&d, p, 6), &naive_expand(&d, g, 6));
            assert_eq!(jaccard_distance(&a, &b), want);
        }
    }
}

fn split_fused(joint: &Matrix, nq: usize) -> Matrix {
    let n = joint.rows();
    Matrix::from_fn(nq, n - nq, |p, g| joint.get(p, nq + g))
}

#[test]
fn two_cluster_ten_items_matches_naive() {
    let mut rng = GaussianStream::new(10);
    let joint = clustered_joint(&mut rng, 10, 2, 3);
    let fused = split_fused(&joint, 3);
    let got = rerank(&fused, &joint, &RerankParams::new(4, 2, 0.5)).unwrap();
    let want = naive_rerank(&joint, 3, 4, 0.5);
    assert!(got.max_abs_diff(&want).unwrap() <= 1e-12);
}

#[test]
fn lambda_endpoints() {
    let mut rng = GaussianStream::new(3);
    let joint = clustered_joint(&mut rng, 14, 2, 3);
    let fused = split_fused(&joint, 4);
    let one = rerank(&fused, &joint, &RerankParams::new(5, 2, 1.0)).unwrap();
    assert!(one.bitwise_eq(&fused));
    let zero = rerank(&fused, &joint, &RerankParams::new(5, 2, 0.0)).unwrap();
    let rstar: Vec<_> = (0..14).map(|p| naive_expand(&joint, p, 5)).collect();
    for p in 0..4 {
        for g in 0..10 {
            assert_eq!(zero.get(p, g), naive_jaccard(&rstar[p], &rstar[4 + g]));
        }
    }
}

#[test]
fn metadata_fusion_then_rerank_matches_naive() {
    let mut rng = GaussianStream::new(77);
    let n = 18;
    let nq = 5;
    let base = clustered_joint(&mut rng, n, 3, 4);
    let color_pts = random_matrix(&mut rng, n, 3, 1.0);
    let type_pts = random_matrix(&mut rng, n, 2, 1.0);
    let meta = BTreeMap::from([
        ("color".to_string(), naive_pairwise(&color_pts, &color_pts)),
        ("type".to_string(), naive_pairwise(&type_pts, &type_pts)),
    ]);
    let gamma = BTreeMap::from([("color".to_string(), 0.3), ("type".to_string(), 0.7)]);
    let weights = FusionWeights {
        gamma: gamma.clone(),
    };

    let fused_joint = fuse_metadata(&base, &meta, &weights).unwrap();
    let fused_qg = split_fused(&fused_joint, nq);
    let got = rerank(&fused_qg, &fused_joint, &RerankParams::new(6, 3, 0.3)).unwrap();

    let want = naive_rerank(&naive_fuse(&base, &meta, &gamma), nq, 6, 0.3);
    assert!(got.max_abs_diff(&want).unwrap() <= 1e-12);
}

/// Local query expansion oracle: membership counts averaged over self + (k2−1) nearest,
/// compared with min/max Jaccard.
#[test]
fn query_expansion_matches_naive() {
    let mut rng = GaussianStream::new(8);
    let n = 16;
    let nq = 4;
    let joint = clustered_joint(&mut rng, n, 2, 3);
    let fused = split_fused(&joint, nq);
    let (k1, k2, lambda) = (6, 3, 0.4);
    let mut params = RerankParams::new(k1, k2, lambda);
    params.query_expansion = true;
    let got = rerank(&fused, &joint, &params).unwrap();

    let rstar: Vec<BTreeSet<usize>> = (0..n).map(|p| naive_expand(&joint, p, k1)).collect();
    let vec_of = |p: usize| -> Vec<f64> {
        let mut v = vec![0.0; n];
        let mut sources = vec![p];
        sources.extend(naive_knn(&joint, p, k2 - 1));
        for s in sources {
            for &m in &rstar[s] {
                v[m] += 1.0;
            }
        }
        v.iter().map(|x| x / k2 as f64).collect()
    };
    for p in 0..nq {
        for g in 0..n - nq {
            let a = vec_of(p);
            let b = vec_of(nq + g);
            let num: f64 = a.iter().zip(&b).map(|(x, y)| x.min(*y)).sum();
            let den: f64 = a.iter().zip(&b).map(|(x, y)| x.max(*y)).sum();
            let dj = if den == 0.0 { 1.0 } else { 1.0 - num / den };
            let want = (1.0 - lambda) * dj + lambda * fused.get(p, g);
            assert!((got.get(p, g) - want).abs() <= 1e-12);
        }
    }
}

fn tracked_manifest(nq: usize, tracks: &[Option<u64>]) -> ItemManifest {
    let mut items: Vec<ItemRecord> = (0..nq)
        .map(|i| ItemRecord::new(format!("q{i}"), Split::Query))
        .collect();
    for (i, t) in tracks.iter().enumerate() {
        let mut r = ItemRecord::new(format!("g{i}"), Split::Gallery);
        r.track_id = *t;
        items.push(r);
    }
    ItemManifest::new(items).unwrap()
}

#[test]
fn track_average_preserves_row_sums() {
    let mut rng = GaussianStream::new(6);
    let d = Matrix::from_fn(6, 10, |_, _| rng.uniform() * 3.0);
    let tracks = [
        Some(0),
        Some(1),
        Some(0),
        Some(2),
        Some(1),
        Some(0),
        Some(2),
        Some(2),
        Some(1),
        Some(0),
    ];
    let man = tracked_manifest(6, &tracks);
    let out = track_average(&d, &man).unwrap();
    for p in 0..6 {
        let a: f64 = d.row(p).iter().sum();
        let b: f64 = out.row(p).iter().sum();
        assert!((a - b).abs() <= 1e-12);
        for t in 0..3u64 {
            let cols: Vec<usize> = (0..10).filter(|&c| tracks[c] == Some(t)).collect();
            assert!(cols
                .iter()
                .all(|&c| out.get(p, c).to_bits() == out.get(p, cols[0]).to_bits()));
        }
    }
    assert!(track_average(&out, &man).unwrap().bitwise_eq(&out));
}

fn instance() -> impl Strategy<Value = (u64, usize, usize, usize)> {
    // (seed, n, nq, k1) with k1 < n ≤ 30
    (any::<u64>(), 6usize..=30)
        .prop_flat_map(|(seed, n)| (Just(seed), Just(n), 1usize..n, 1usize..n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reciprocal_membership_is_mutual((seed, n, _nq, k) in instance()) {
        let mut rng = GaussianStream::new(seed);
        let d = clustered_joint(&mut rng, n, 3, 3);
        for p in 0..n {
            let r = members(&k_reciprocal(&d, p, k).unwrap());
            prop_assert_eq!(&r, &naive_reciprocal(&d, p, k));
            for &q in &r {
                prop_assert!(k_reciprocal(&d, q, k).unwrap().contains(p));
            }
        }
    }

    #[test]
    fn rstar_contains_r_and_jaccard_in_unit_interval((seed, n, nq, k) in instance()) {
        let mut rng = GaussianStream::new(seed);
        let d = clustered_joint(&mut rng, n, 2, 2);
        for p in 0..n {
            let r = members(&k_reciprocal(&d, p, k).unwrap());
            let rs = members(&expand_reciprocal(&d, p, k).unwrap());
            prop_assert!(r.is_subset(&rs));
        }
        let out = rerank(&split_fused(&d, nq), &d, &RerankParams::new(k, 1, 0.0)).unwrap();
        prop_assert!(out.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn rerank_matches_naive((seed, n, nq, k) in instance(), lambda in 0.0f64..=1.0) {
        let mut rng = GaussianStream::new(seed);
        let d = clustered_joint(&mut rng, n, 3, 3);
        let got = rerank(&split_fused(&d, nq), &d, &RerankParams::new(k, 1, lambda)).unwrap();
        let want = naive_rerank(&d, nq, k, lambda);
        prop_assert!(got.max_abs_diff(&want).unwrap() <= 1e-12);
    }

    #[test]
    fn track_average_invariants(seed in any::<u64>(), nq in 1usize..5, tracks in proptest::collection::vec(proptest::option::of(0u64..4), 1..12)) {
        let mut rng = GaussianStream::new(seed);
        let d = Matrix::from_fn(nq, tracks.len(), |_, _| rng.uniform());
        let man = tracked_manifest(nq, &tracks);
        let once = track_average(&d, &man).unwrap();
        prop_assert!(track_average(&once, &man).unwrap().bitwise_eq(&once));
        for p in 0..nq {
            let a: f64 = d.row(p).iter().sum();
            let b: f64 = once.row(p).iter().sum();
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
