//! Property tests for module invariants.

use earlock::divergence::{gaussian_kl, gmm_kl_approx};
use earlock::evaluation::{cmc_curve, rank_records, roc_curve, MatchRecord};
use earlock::fusion::discrete::DiscreteMass;
use earlock::fusion::{concat_match, ds_combine_pair, ds_fuse_all, to_mass, FeatureSet, FeatureSource, MassFunction, MatchConfig};
use earlock::gmm::{em_fit, gmm_pdf, vq_initialize, FitConfig, Gaussian, Gmm, Points};
use earlock::imaging::{decolorize, histogram_equalize, luminance, ColorImage, GrayImage, Mask};
use earlock::linalg::min_eigenvalue;
use earlock::pipeline::{Metric, Rule};
use earlock::segmentation::{assign_pixels, correspond_slices};
use earlock::sift::{extract_sift, SiftConfig, SiftFeature};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn few(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

fn color_image() -> impl Strategy<Value = ColorImage> {
    (1usize..24, 1usize..24).prop_flat_map(|(w, h)| {
        prop::collection::vec(prop::array::uniform3(any::<u8>()), w * h)
            .prop_map(move |px| ColorImage::new(w, h, px).unwrap())
    })
}

fn gray_image() -> impl Strategy<Value = GrayImage> {
    (1usize..24, 1usize..24).prop_flat_map(|(w, h)| {
        prop::collection::vec(0.0f32..=1.0, w * h).prop_map(move |px| GrayImage::new(w, h, px).unwrap())
    })
}

fn spd(d: usize) -> impl Strategy<Value = Vec<f64>> {
    (prop::collection::vec(-1.0f64..1.0, d * d), 0.2f64..2.0).prop_map(move |(a, ridge)| {
        let mut c = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                c[i * d + j] = (0..d).map(|k| a[i * d + k] * a[j * d + k]).sum::<f64>() + if i == j { ridge } else { 0.0 };
            }
        }
        c
    })
}

fn gaussian(d: usize) -> impl Strategy<Value = Gaussian> {
    (prop::collection::vec(-5.0f64..5.0, d), spd(d)).prop_map(|(m, c)| Gaussian::new(m, c).unwrap())
}

fn gaussian_pair() -> impl Strategy<Value = (Gaussian, Gaussian)> {
    (1usize..=4).prop_flat_map(|d| (gaussian(d), gaussian(d)))
}

fn mass(len: usize) -> impl Strategy<Value = MassFunction> {
    prop::collection::vec(0.01f64..1.0, len).prop_map(|v| to_mass(&v).unwrap())
}

fn discrete_mass() -> impl Strategy<Value = DiscreteMass> {
    (1usize..=5).prop_flat_map(|frame| {
        let full = (1u32 << frame) - 1;
        prop::collection::vec((1..=full, 0.05f64..1.0), 1..6).prop_map(move |focal| {
            let total: f64 = focal.iter().map(|f| f.1).sum();
            let mut merged = std::collections::BTreeMap::new();
            for (s, m) in focal {
                *merged.entry(s).or_insert(0.0) += m / total;
            }
            DiscreteMass::new(frame, merged).unwrap()
        })
    })
}

fn clustered_points(seed: u64, k: usize, n: usize) -> Points {
    use rand::Rng;
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..k).map(|i| vec![40.0 * i as f64, r.random_range(0.0..50.0), 100.0]).collect();
    let gs: Vec<Gaussian> = centers.iter().map(|c| Gaussian::isotropic(c.clone(), 9.0).unwrap()).collect();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| gs[i % k].sample(&mut r)).collect();
    Points::from_rows(&rows).unwrap()
}

fn unit_feature(seed: u64) -> SiftFeature {
    use rand::Rng;
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let d: Vec<f32> = (0..128).map(|_| r.random_range(0.0..1.0f32)).collect();
    let n = d.iter().map(|v| v * v).sum::<f32>().sqrt();
    SiftFeature {
        x: r.random_range(0.0..50.0),
        y: r.random_range(0.0..50.0),
        scale: 2.0,
        orientation: 0.5,
        descriptor: d.iter().map(|v| v / n).collect(),
        octave: 0,
        layer: 1,
    }
}

proptest! {
    #[test]
    fn gray_ops_preserve_shape(img in color_image(), g in gray_image()) {
        let d = decolorize(&img);
        prop_assert_eq!((d.width(), d.height()), (img.width(), img.height()));
        let e = histogram_equalize(&g);
        prop_assert_eq!((e.width(), e.height()), (g.width(), g.height()));
    }

    #[test]
    fn equalization_is_idempotent(g in gray_image()) {
        let once = histogram_equalize(&g);
        let twice = histogram_equalize(&once);
        for (a, b) in once.pixels().iter().zip(twice.pixels()) {
            prop_assert!((a - b).abs() <= 1.0 / 256.0 + 1e-6, "{} vs {}", a, b);
        }
    }

    #[test]
    fn luminance_respects_channel_dominance(a in prop::array::uniform3(any::<u8>()), delta in prop::array::uniform3(any::<u8>())) {
        let b = [a[0].saturating_add(delta[0]), a[1].saturating_add(delta[1]), a[2].saturating_add(delta[2])];
        prop_assert!(luminance(b) >= luminance(a));
    }

    #[test]
    fn kl_is_non_negative_and_zero_on_self((p, q) in gaussian_pair()) {
        prop_assert!(gaussian_kl(&p, &q).unwrap() >= 0.0);
        prop_assert!(gaussian_kl(&p, &p).unwrap().abs() <= 1e-9);
        let single = gmm_kl_approx(&Gmm::single(p.clone()), &Gmm::single(q.clone())).unwrap();
        prop_assert_eq!(single, gaussian_kl(&p, &q).unwrap());
    }

    #[test]
    fn masses_sum_to_one(v in prop::collection::vec(0.0f64..1.0, 1..200)) {
        prop_assume!(v.iter().any(|x| *x > 0.0));
        let m = to_mass(&v).unwrap();
        prop_assert!((m.masses().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(m.masses().iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn combination_is_commutative_and_associative((a, b, c) in (1usize..40).prop_flat_map(|n| (mass(n), mass(n), mass(n)))) {
        let ab = ds_combine_pair(&a, &b).unwrap();
        let ba = ds_combine_pair(&b, &a).unwrap();
        let left = ds_combine_pair(&ab, &c).unwrap();
        let right = ds_combine_pair(&a, &ds_combine_pair(&b, &c).unwrap()).unwrap();
        for i in 0..a.masses().len() {
            prop_assert!((ab.masses()[i] - ba.masses()[i]).abs() <= 1e-12);
            prop_assert!((left.masses()[i] - right.masses()[i]).abs() <= 1e-12);
        }
        prop_assert!((ab.masses().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn fusion_ignores_fold_order(masses in (1usize..20).prop_flat_map(|n| prop::collection::vec(mass(n), 1..=5))) {
        let reference = ds_fuse_all(&masses).unwrap();
        // Every rotation and the reversed order.
        let n = masses.len();
        let mut orders: Vec<Vec<MassFunction>> = (0..n).map(|s| (0..n).map(|i| masses[(s + i) % n].clone()).collect()).collect();
        orders.push(masses.iter().rev().cloned().collect());
        for order in orders {
            let folded = order[1..].iter().try_fold(order[0].clone(), |acc, m| ds_combine_pair(&acc, m)).unwrap();
            let other = ds_fuse_all(&order).unwrap();
            for i in 0..reference.masses().len() {
                prop_assert!((folded.masses()[i] - reference.masses()[i]).abs() <= 1e-12);
                prop_assert!((other.masses()[i] - reference.masses()[i]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn belief_identities(m in discrete_mass()) {
        for a in 0..=m.full() {
            let disjoint: f64 = m.focal().iter().filter(|(b, _)| **b & a == 0).map(|(_, v)| v).sum();
            let bel_complement = m.belief(m.complement(a)).unwrap();
            prop_assert!((disjoint - bel_complement).abs() <= 1e-12);
            prop_assert!((m.plausibility(a).unwrap() - (1.0 - bel_complement)).abs() <= 1e-12);
        }
    }

    #[test]
    fn self_match_has_zero_distance(seeds in prop::collection::vec(any::<u64>(), 1..30), psi in 0.0f64..1.0) {
        let set = FeatureSet::new(seeds.iter().map(|s| unit_feature(*s)).collect(), FeatureSource::Augmented).unwrap();
        let m = concat_match(&set, &set, psi, &MatchConfig::default()).unwrap();
        prop_assert_eq!(m.distance, 0.0);
        prop_assert!(m.accept);
    }

    #[test]
    fn roc_points_are_bounded_and_monotone(g in prop::collection::vec(0.0f64..1.0, 1..40), i in prop::collection::vec(0.0f64..1.0, 1..40)) {
        let roc = roc_curve(&g, &i).unwrap();
        for p in &roc.points {
            prop_assert!((0.0..=1.0).contains(&p.fpr) && (0.0..=1.0).contains(&p.tpr));
        }
        for w in roc.points.windows(2) {
            prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
    }

    #[test]
    fn rankings_are_order_independent(scores in prop::collection::vec(0u8..5, 2..12), rotate in 0usize..12) {
        let records: Vec<MatchRecord> = scores
            .iter()
            .enumerate()
            .map(|(k, s)| MatchRecord {
                probe_id: "g00".into(),
                gallery_id: format!("g{k:02}"),
                rule: Rule::Concat,
                metric: Metric::Euclid,
                score: f64::from(*s),
            })
            .collect();
        let mut shifted = records.clone();
        shifted.rotate_left(rotate % records.len());
        let a = rank_records(records);
        prop_assert_eq!(&a, &rank_records(shifted));
        let curve = cmc_curve(&[a], scores.len());
        prop_assert!(curve.points.windows(2).all(|w| w[1].1 >= w[0].1));
        prop_assert_eq!(curve.rate_at(scores.len()), 1.0);
    }
}

proptest! {
    #![proptest_config(few(12))]

    #[test]
    fn em_fits_are_valid_and_deterministic(seed in any::<u64>(), k in 2usize..=4) {
        let points = clustered_points(seed, k, 600);
        let cfg = FitConfig { seed, covariance_floor: 1.0, ..FitConfig::default() };
        let fit = em_fit(&points, k, &cfg).unwrap();
        prop_assert!(fit.history.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        let weights: f64 = fit.model.components().iter().map(|c| c.weight).sum();
        prop_assert!((weights - 1.0).abs() <= 1e-9);
        for c in fit.model.components() {
            let cov = c.gaussian.covariance();
            prop_assert!(min_eigenvalue(cov, 3) >= 1.0 - 1e-9);
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert_eq!(cov[i * 3 + j], cov[j * 3 + i]);
                }
            }
        }
        let again = em_fit(&points, k, &cfg).unwrap();
        prop_assert_eq!(fit.model, again.model);
        prop_assert_eq!(vq_initialize(&points, k, seed, 1.0).unwrap(), vq_initialize(&points, k, seed, 1.0).unwrap());
    }

    #[test]
    fn labels_cover_the_mask_and_ignore_weight_scale(seed in any::<u64>(), scale in 0.1f64..10.0) {
        use rand::Rng;
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (20, 16);
        let px: Vec<[u8; 3]> = (0..w * h).map(|_| [r.random(), r.random(), r.random()]).collect();
        let bits: Vec<bool> = (0..w * h).map(|_| r.random_bool(0.7)).collect();
        let img = ColorImage::new(w, h, px).unwrap();
        let mask = Mask::new(w, h, bits.clone()).unwrap();
        let parts: Vec<(f64, Gaussian)> = (0..3)
            .map(|i| (r.random_range(0.2..1.0), Gaussian::isotropic(vec![80.0 * i as f64; 3], 400.0).unwrap()))
            .collect();
        let model = Gmm::from_unnormalized(parts.clone()).unwrap();
        let scaled = Gmm::from_unnormalized(parts.into_iter().map(|(wt, g)| (wt * scale, g)).collect()).unwrap();
        let a = assign_pixels(&model, &img, &mask).unwrap();
        let b = assign_pixels(&scaled, &img, &mask).unwrap();
        prop_assert_eq!(a.labels(), b.labels());
        for (label, inside) in a.labels().iter().zip(&bits) {
            prop_assert_eq!(label.is_some(), *inside);
        }
    }

    #[test]
    fn correspondence_cost_ignores_order(gs in prop::collection::vec(gaussian(3), 2..6), qs in prop::collection::vec(gaussian(3), 2..6), rot in 0usize..6) {
        let base = correspond_slices(&gs, &qs).unwrap();
        let mut gs2 = gs.clone();
        gs2.rotate_left(rot % gs.len());
        let mut qs2 = qs.clone();
        qs2.reverse();
        let other = correspond_slices(&gs2, &qs2).unwrap();
        prop_assert!((base.total_cost() - other.total_cost()).abs() <= 1e-9 * base.total_cost().max(1.0));
        prop_assert_eq!(base.pairs.len(), gs.len().min(qs.len()));
    }

    #[test]
    fn mixture_density_integrates_to_one(seed in any::<u64>(), d in 1usize..=3) {
        use rand::Rng;
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let parts: Vec<(f64, Gaussian)> = (0..3)
            .map(|_| {
                let m: Vec<f64> = (0..d).map(|_| r.random_range(-4.0..4.0)).collect();
                (r.random_range(0.2..1.0), Gaussian::isotropic(m, r.random_range(0.5..2.0)).unwrap())
            })
            .collect();
        let model = Gmm::from_unnormalized(parts).unwrap();
        // Importance sampling from a broad Gaussian proposal.
        let proposal = Gaussian::isotropic(vec![0.0; d], 16.0).unwrap();
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let x = proposal.sample(&mut r);
            sum += gmm_pdf(&model, &x).unwrap() / proposal.log_pdf(&x).unwrap().exp();
        }
        let estimate = sum / n as f64;
        prop_assert!((estimate - 1.0).abs() <= 0.02, "{}", estimate);
    }
}

proptest! {
    #![proptest_config(few(6))]

    #[test]
    fn sift_output_is_well_formed(seed in any::<u64>(), w in 48usize..96, h in 48usize..96) {
        use rand::Rng;
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let blobs: Vec<(f64, f64, f64, f64)> = (0..w * h / 60)
            .map(|_| (r.random_range(0.0..w as f64), r.random_range(0.0..h as f64), r.random_range(1.5..4.0), r.random_range(-0.4..0.4)))
            .collect();
        let img = GrayImage::from_fn(w, h, |x, y| {
            let v: f64 = blobs
                .iter()
                .map(|&(bx, by, s, a)| a * (-((x as f64 - bx).powi(2) + (y as f64 - by).powi(2)) / (2.0 * s * s)).exp())
                .sum();
            (0.5 + v).clamp(0.0, 1.0) as f32
        })
        .unwrap();
        let features = extract_sift(&img, &SiftConfig::default()).unwrap();
        for f in &features {
            prop_assert!(f.x >= 0.0 && f.y >= 0.0 && (f.x as usize) < w && (f.y as usize) < h);
            prop_assert_eq!(f.descriptor.len(), 128);
            let norm = f.descriptor.iter().map(|v| f64::from(*v).powi(2)).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() <= 1e-6);
            prop_assert!(f.descriptor.iter().all(|v| *v >= 0.0 && f64::from(*v) <= 0.2 + 1e-6));
        }
    }
}
