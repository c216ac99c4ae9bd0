mod common;

use common::oracle_ks;
use crl_core::bundle::{decode_bundle, encode_bundle};
use crl_core::model::{decode_model, encode_model};
use crl_core::{
    build_cr, build_model, classify, ks_distance, pool, profile, AfmVector, BuildOptions,
    ClassRepresentative, CrModel, FeatureBundle, GcsMode, LabeledInstance, ModelMetadata, PoolMode,
    PoolingSpec, Shape,
};
use proptest::prelude::*;

fn nonzero_vec(dim: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-100.0f32..100.0, dim)
        .prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

fn model_and_query() -> impl Strategy<Value = (CrModel, Vec<f32>)> {
    (1usize..12, 1usize..16).prop_flat_map(|(classes, dim)| {
        (
            prop::collection::vec(nonzero_vec(dim), classes),
            nonzero_vec(dim),
        )
            .prop_map(move |(vs, q)| {
                let crs = vs
                    .into_iter()
                    .enumerate()
                    .map(|(i, v)| {
                        ClassRepresentative::from_parts(format!("c{i:02}"), 1, v).unwrap()
                    })
                    .collect();
                (
                    CrModel::new(Shape::flat(dim), crs, ModelMetadata::default()).unwrap(),
                    q,
                )
            })
    })
}

fn afm_pair() -> impl Strategy<Value = (Shape, Vec<f32>, Vec<f32>)> {
    (1usize..7, 1usize..7, 1usize..4).prop_flat_map(|(h, w, c)| {
        let n = h * w * c;
        (
            Just(Shape::new(h, w, c)),
            prop::collection::vec(-50.0f32..50.0, n),
            prop::collection::vec(-50.0f32..50.0, n),
        )
    })
}

fn names(model: &CrModel, q: &[f32]) -> Vec<String> {
    let afm = AfmVector::from_flat(q.to_vec()).unwrap();
    classify(&afm, model, model.len())
        .unwrap()
        .ranked
        .into_iter()
        .map(|(n, _)| n)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn avg_pool_is_linear_in_the_mean((shape, a, b) in afm_pair(), f in 1usize..4, s in 1usize..4) {
        let spec = PoolingSpec::new(PoolMode::Avg, (f, f), (s, s)).unwrap();
        prop_assume!(spec.output_shape(shape).is_ok());
        let mean: Vec<f32> = a.iter().zip(&b).map(|(x, y)| ((f64::from(*x) + f64::from(*y)) / 2.0) as f32).collect();
        let pa = pool(&AfmVector::new(a, shape).unwrap(), &spec).unwrap();
        let pb = pool(&AfmVector::new(b, shape).unwrap(), &spec).unwrap();
        let pm = pool(&AfmVector::new(mean, shape).unwrap(), &spec).unwrap();
        for ((x, y), m) in pa.values().iter().zip(pb.values()).zip(pm.values()) {
            let want = (f64::from(*x) + f64::from(*y)) / 2.0;
            prop_assert!((f64::from(*m) - want).abs() <= 1e-6 * want.abs().max(1.0));
        }
    }

    #[test]
    fn max_pool_dominates_min_pool((shape, a, _) in afm_pair(), f in 1usize..4) {
        let mx = PoolingSpec::new(PoolMode::Max, (f, f), (f, f)).unwrap();
        let mn = PoolingSpec::new(PoolMode::Min, (f, f), (f, f)).unwrap();
        prop_assume!(mx.output_shape(shape).is_ok());
        let afm = AfmVector::new(a, shape).unwrap();
        let hi = pool(&afm, &mx).unwrap();
        let lo = pool(&afm, &mn).unwrap();
        prop_assert!(hi.values().iter().zip(lo.values()).all(|(h, l)| h >= l));
    }

    #[test]
    fn duplicated_instances_leave_the_cr_unchanged(rows in prop::collection::vec(nonzero_vec(6), 1..20), times in 2usize..6) {
        let afms: Vec<AfmVector> = rows.iter().map(|r| AfmVector::from_flat(r.clone()).unwrap()).collect();
        prop_assume!(build_cr("x", &afms).is_ok());
        let once = build_cr("x", &afms).unwrap();
        let many: Vec<AfmVector> = afms.iter().flat_map(|a| std::iter::repeat_n(a.clone(), times)).collect();
        let rep = build_cr("x", &many).unwrap();
        for (a, b) in once.vector().iter().zip(rep.vector()) {
            let scale = f64::from(a.abs().max(b.abs())).max(1e-3);
            prop_assert!((f64::from(a - b)).abs() <= 1e-6 * scale);
        }
    }

    #[test]
    fn ranking_ignores_query_scale((model, q) in model_and_query(), exp in -8i32..8) {
        let scaled: Vec<f32> = q.iter().map(|x| x * 2f32.powi(exp)).collect();
        let a = classify(&AfmVector::from_flat(q.clone()).unwrap(), &model, model.len()).unwrap();
        let b = classify(&AfmVector::from_flat(scaled).unwrap(), &model, model.len()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn ranking_ignores_cr_order((model, q) in model_and_query(), rot in 0usize..12) {
        let mut crs = model.crs().to_vec();
        let r = rot % crs.len();
        crs.rotate_left(r);
        crs.reverse();
        let permuted = CrModel::new(model.shape(), crs, ModelMetadata::default()).unwrap();
        prop_assert_eq!(names(&model, &q), names(&permuted, &q));
    }

    #[test]
    fn winner_survives_removal_of_losers((model, q) in model_and_query(), keep_mask in any::<u16>()) {
        let full = names(&model, &q);
        let winner = full[0].clone();
        let crs: Vec<ClassRepresentative> = model
            .crs()
            .iter()
            .enumerate()
            .filter(|(i, cr)| cr.name() == winner || keep_mask & (1 << i) != 0)
            .map(|(_, cr)| cr.clone())
            .collect();
        let subset = CrModel::new(model.shape(), crs, ModelMetadata::default()).unwrap();
        prop_assert_eq!(&names(&subset, &q)[0], &winner);
    }

    #[test]
    fn topk_lists_are_nested((model, q) in model_and_query()) {
        let afm = AfmVector::from_flat(q).unwrap();
        let full = classify(&afm, &model, model.len()).unwrap().ranked;
        for k in 1..=model.len() {
            prop_assert_eq!(&classify(&afm, &model, k).unwrap().ranked[..], &full[..k]);
        }
        prop_assert!(full.windows(2).all(|w| w[0].1 >= w[1].1));
        prop_assert!(full.iter().all(|(_, s)| (-1.0..=1.0).contains(s)));
    }

    #[test]
    fn ks_is_symmetric_bounded_and_exact(
        a in prop::collection::vec(-5i8..5, 1..60),
        b in prop::collection::vec(-5i8..5, 1..60),
    ) {
        let a: Vec<f64> = a.into_iter().map(|x| f64::from(x) / 2.0).collect();
        let b: Vec<f64> = b.into_iter().map(|x| f64::from(x) / 2.0).collect();
        let ab = ks_distance(&a, &b).unwrap();
        prop_assert_eq!(ab, ks_distance(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab - oracle_ks(&a, &b)).abs() <= 1e-12);
        prop_assert_eq!(ks_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn profile_ignores_class_order((model, _) in model_and_query()) {
        prop_assume!(model.len() >= 2);
        let mut crs = model.crs().to_vec();
        crs.reverse();
        let rev = CrModel::new(model.shape(), crs, ModelMetadata::default()).unwrap();
        let p = profile(&model, GcsMode::Mean).unwrap();
        let q = profile(&rev, GcsMode::Mean).unwrap();
        prop_assert_eq!(p.pair_similarities.len(), model.len() * (model.len() - 1) / 2);
        prop_assert_eq!(&p.pair_similarities, &q.pair_similarities);
        prop_assert_eq!(p.median, q.median);
        for (name, v) in &p.gcs {
            prop_assert!((v - q.gcs[name]).abs() <= 1e-12);
        }
    }

    #[test]
    fn bundle_bytes_round_trip(
        labels in 1usize..5,
        rows in prop::collection::vec((any::<u32>(), prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 3)), 0..10),
        tag in "[a-z0-9 ]{0,12}",
    ) {
        let records = rows
            .into_iter()
            .map(|(c, v)| LabeledInstance::new(c % labels as u32, AfmVector::from_flat(v).unwrap()))
            .collect();
        let names = (0..labels).map(|i| format!("l{i}")).collect();
        let b = FeatureBundle::new(Shape::flat(3), names, records, tag).unwrap();
        let bytes = encode_bundle(&b).unwrap();
        let back = decode_bundle(&bytes).unwrap();
        prop_assert_eq!(encode_bundle(&back).unwrap(), bytes);
        prop_assert_eq!(back, b);
    }

    #[test]
    fn model_bytes_round_trip((model, _) in model_and_query()) {
        let bytes = encode_model(&model).unwrap();
        let back = decode_model(&bytes).unwrap();
        prop_assert_eq!(encode_model(&back).unwrap(), bytes);
        prop_assert_eq!(back, model);
    }

    #[test]
    fn build_is_independent_of_other_classes(rows in prop::collection::vec((0u32..3, nonzero_vec(4)), 3..30)) {
        let make = |rows: &[(u32, Vec<f32>)]| {
            let records = rows.iter().map(|(c, v)| LabeledInstance::new(*c, AfmVector::from_flat(v.clone()).unwrap())).collect();
            FeatureBundle::new(Shape::flat(4), vec!["a".into(), "b".into(), "c".into()], records, "p").unwrap()
        };
        let all = make(&rows);
        prop_assume!(all.indices_by_class().iter().all(|v| !v.is_empty()));
        let Ok(joint) = build_model(&all, &BuildOptions::default()) else { return Ok(()) };
        // shuffling the other classes around class 0 does not touch its CR
        let mut moved: Vec<(u32, Vec<f32>)> = rows.iter().filter(|(c, _)| *c != 0).cloned().collect();
        moved.reverse();
        let zero: Vec<(u32, Vec<f32>)> = rows.iter().filter(|(c, _)| *c == 0).cloned().collect();
        let mut interleaved = Vec::new();
        let mut it = moved.into_iter();
        for z in zero {
            interleaved.push(z);
            interleaved.extend(it.next());
        }
        interleaved.extend(it);
        let other = build_model(&make(&interleaved), &BuildOptions::default()).unwrap();
        let bits = |m: &CrModel| m.get("a").unwrap().vector().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&joint), bits(&other));
    }
}
