mod common;

use hnne::dataio::{gen_blobs, gen_uniform_square};
use hnne::hierarchy::build_1nng;
use hnne::metrics::trustworthiness;
use hnne::{fit, DataMatrix, FitParams, InitMode, NnBackend};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use common::*;

fn uniform(n: usize, d: usize, seed: u64) -> DataMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DataMatrix::new(n, d, (0..n * d).map(|_| rng.random::<f64>()).collect()).unwrap()
}

#[test]
fn fit_is_deterministic() {
    let (x, _) = gen_blobs(1500, 12, 5, 10.0, 1.0, 3).unwrap();
    let a = fit(&x, &FitParams::new(2)).unwrap().embedding;
    let b = fit(&x, &FitParams::new(2)).unwrap().embedding;
    assert_eq!(a, b);
}

#[test]
fn blobs_embedding_keeps_neighbors_within_blobs() {
    let (x, y) = blobs(5000, 7);
    let out = fit(&x, &FitParams::new(2)).unwrap();
    let cross = 1.0 - one_nn_agreement(&out.embedding, &y);
    assert!(cross < 0.01, "cross-blob nearest neighbors: {cross}");
}

#[test]
fn nearest_neighbors_stay_inside_top_components() {
    // three far-apart groups form the top level; with shrink 3/5 no point's
    // embedded nearest neighbor may come from another group
    let (x, _) = gen_blobs(900, 6, 3, 1000.0, 1.0, 2).unwrap();
    let mut p = FitParams::new(2);
    p.guarantee = true;
    let out = fit(&x, &p).unwrap();
    let h = &out.hierarchy;
    let top = h.levels().len() - 1;
    let groups = hnne::hierarchy::partition_at_level(h, top).unwrap();
    let nl = hnne::nnsearch::knn_exact(&out.embedding, 1).unwrap();
    let labels = groups.labels();
    for i in 0..x.rows() {
        assert_eq!(labels[i], labels[nl.indices(i)[0]], "point {i}");
    }
}

#[test]
fn inflation_barely_changes_trustworthiness() {
    let (x, _) = blobs(3000, 8);
    let plain = fit(&x, &FitParams::new(2)).unwrap().embedding;
    let mut p = FitParams::new(2);
    p.inflate = true;
    let inflated = fit(&x, &p).unwrap().embedding;
    let a = trustworthiness(&x, &plain, 5).unwrap();
    let b = trustworthiness(&x, &inflated, 5).unwrap();
    assert!((a - b).abs() <= 0.005, "{a} vs {b}");
}

/// Share of training points whose transformed position lies inside the
/// containment ball of the lookup centroid they are assigned to.
fn lookup_ball_share(x: &DataMatrix, p: &FitParams) -> f64 {
    let out = fit(x, p).unwrap();
    let model = &out.model;
    let level = model.lookup_level().unwrap();
    let y = model.transform(x).unwrap();
    let owner = model.assign(x).unwrap();
    let centers = &out.translation.positions[level];
    let radii = &out.translation.radii[level];
    let f = model.params().radius_fraction;
    let inside = (0..x.rows())
        .filter(|&i| euclid(y.row(i), centers.row(owner[i])) <= f * radii[owner[i]])
        .count();
    inside as f64 / x.rows() as f64
}

#[test]
fn training_points_land_in_their_lookup_ball() {
    let (x, _) = blobs(4000, 9);
    let mut p = FitParams::new(2);
    p.guarantee = true;
    p.transform_level = Some(0);
    let share = lookup_ball_share(&x, &p);
    assert!(share >= 0.99, "{share}");
    // the coarser default lookup level leaks more, but stays mostly inside
    p.transform_level = None;
    let share = lookup_ball_share(&x, &p);
    assert!(share >= 0.95, "{share}");
}

#[test]
fn transform_is_a_similarity_within_a_cell() {
    let (x, _) = gen_blobs(2000, 10, 4, 15.0, 1.0, 1).unwrap();
    let out = fit(&x, &FitParams::new(2)).unwrap();
    let model = &out.model;
    let owner = model.assign(&x).unwrap();
    let y = model.transform(&x).unwrap();
    let prelim = hnne::linproj::apply_linear(model.linear(), &x).unwrap();
    let mut checked = 0;
    for i in 0..x.rows() {
        for j in i + 1..x.rows().min(i + 40) {
            for l in j + 1..x.rows().min(i + 40) {
                if owner[i] != owner[j] || owner[i] != owner[l] {
                    continue;
                }
                let before = euclid(prelim.row(i), prelim.row(j)) / euclid(prelim.row(i), prelim.row(l));
                let after = euclid(y.row(i), y.row(j)) / euclid(y.row(i), y.row(l));
                if before.is_finite() {
                    assert!((before - after).abs() <= 1e-9 * before.max(1.0), "{before} vs {after}");
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 0);
}

#[test]
fn concurrent_transforms_match_sequential() {
    let (x, _) = gen_blobs(2000, 10, 4, 15.0, 1.0, 4).unwrap();
    let out = fit(&x, &FitParams::new(2)).unwrap();
    let seq = out.model.transform(&x).unwrap();
    let par: Vec<DataMatrix> = (0..4).into_par_iter().map(|_| out.model.transform(&x).unwrap()).collect();
    assert!(par.iter().all(|p| *p == seq));
}

#[test]
fn transform_rejects_wrong_width() {
    let (x, _) = gen_blobs(300, 5, 3, 10.0, 1.0, 0).unwrap();
    let out = fit(&x, &FitParams::new(2)).unwrap();
    let q = DataMatrix::new(1, 4, vec![0.0; 4]).unwrap();
    assert!(matches!(out.model.transform(&q), Err(hnne::HnneError::InvalidArgument(_))));
}

#[test]
fn every_init_mode_runs() {
    let (x, _) = gen_blobs(800, 8, 4, 10.0, 1.0, 6).unwrap();
    for mode in [InitMode::PcaCentroids, InitMode::PcaFull, InitMode::RandomProjection, InitMode::RandomPoints] {
        let mut p = FitParams::new(3);
        p.init = mode;
        let out = fit(&x, &p).unwrap();
        assert_eq!((out.embedding.rows(), out.embedding.cols()), (800, 3));
        let y = out.model.transform(&x.select_rows(&[0, 1, 2])).unwrap();
        assert_eq!(y.cols(), 3);
    }
}

#[test]
fn approximate_nearest_neighbor_graph_agrees_with_exact() {
    let x = uniform(600, 40, 3);
    let exact = build_1nng(&x, NnBackend::Exact).unwrap();
    let approx = build_1nng(&x, NnBackend::Approx { seed: 1 }).unwrap();
    let agree = (0..600).filter(|&i| exact.nn_index[i] == approx.nn_index[i]).count();
    assert!(agree >= 594, "{agree}");
}

#[test]
fn uniform_square_statistics() {
    let m = gen_uniform_square(100_000, 1).unwrap();
    let mean = m.mean();
    assert!(mean.iter().all(|v| (v - 0.5).abs() <= 0.01), "{mean:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn guaranteed_embeddings_satisfy_containment(
        seed in 0u64..1000,
        n in 50usize..600,
        dim in 2usize..12,
        d in 1usize..4,
        clustered in any::<bool>(),
    ) {
        let x = if clustered {
            gen_blobs(n, dim, 4, 8.0, 1.0, seed).unwrap().0
        } else {
            uniform(n, dim, seed)
        };
        prop_assume!(d <= dim);
        let mut p = FitParams::new(d);
        p.guarantee = true;
        let out = fit(&x, &p).unwrap();
        if !out.hierarchy.levels().is_empty() {
            let (worst, _) = worst_containment_ratio(&out.hierarchy, &out.translation, p.radius_fraction);
            prop_assert!(worst <= 1.0, "worst ratio {}", worst);
        }
    }

    #[test]
    fn lookup_centroids_map_to_their_positions(seed in 0u64..1000, n in 60usize..400) {
        let (x, _) = gen_blobs(n, 6, 3, 10.0, 1.0, seed).unwrap();
        let out = fit(&x, &FitParams::new(2)).unwrap();
        if let Some(level) = out.model.lookup_level() {
            let c = out.model.lookup_centroids().unwrap();
            let y = out.model.transform(c).unwrap();
            for i in 0..c.rows() {
                prop_assert!(euclid(y.row(i), out.translation.positions[level].row(i)) <= 1e-9);
            }
        }
    }
}
