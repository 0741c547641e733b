use durage::align::AgeUnit;
use durage::functionals::{build_feature_matrix, accumulate, FeatureMatrix, N_FUNCTIONALS};
use durage::learners::{
    AdaBoostParams, BaseLearner, MaxFeatures, Sampling, Standardizer, TreeParams,
};
use durage::phone::{build_inventory, CategoryKey, PhoneInventory};
use durage::rng::derive_seed;
use durage::stacking::{
    fit_stacked, out_of_fold, LearnerSpec, ModelClass, StackingConfig,
};
use durage::synth::{default_spec, generate_corpus};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(n: usize, k: usize, seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = FeatureMatrix {
        speaker_ids: (0..n).map(|s| format!("sp{s:03}")).collect(),
        inventory: PhoneInventory::from_keys((0..k).map(|c| CategoryKey::new(format!("K{c}"))), true, 0.0),
        values: Vec::new(),
        present: Vec::new(),
        ages: Vec::new(),
        age_unit: AgeUnit::Grade,
    };
    for _ in 0..n {
        let age = rng.random_range(0..=10) as f64;
        m.values.push(
            (0..k * N_FUNCTIONALS)
                .map(|_| 0.2 - 0.01 * age + rng.random_range(-0.03..0.03))
                .collect(),
        );
        m.present.push((0..k).map(|_| rng.random_bool(0.85)).collect());
        m.ages.push(age);
    }
    m
}

fn synthetic_matrix(n: usize, seed: u64) -> FeatureMatrix {
    let mut spec = default_spec();
    spec.n_speakers = n;
    spec.seed = seed;
    let corpus = generate_corpus(&spec).unwrap();
    let inv = build_inventory(&corpus, true, 0.0).unwrap();
    build_feature_matrix(&accumulate(&corpus, &inv), &inv, &corpus.records()).unwrap()
}

fn tree_booster() -> LearnerSpec {
    LearnerSpec::Adaboost(AdaBoostParams {
        n_rounds: 5,
        base: BaseLearner::Tree(TreeParams {
            max_depth: Some(2),
            min_leaf: 1,
            max_features: MaxFeatures::All,
        }),
        sampling: Sampling::Resample,
    })
}

#[test]
fn perturbing_a_target_leaves_its_own_row_unchanged() {
    for seed in 0..10 {
        let m = random_matrix(24, 4, seed);
        let class = if seed % 2 == 0 { ModelClass::Svr } else { ModelClass::Adaboost };
        let cfg = StackingConfig::new(class, seed);
        let (before, _) = out_of_fold(&m, &cfg).unwrap();
        let victim = (seed as usize * 7) % 24;
        let mut changed = m.clone();
        changed.ages[victim] += 5.0;
        let (after, _) = out_of_fold(&changed, &cfg).unwrap();
        let pos = before
            .speaker_ids
            .iter()
            .position(|s| *s == m.speaker_ids[victim])
            .unwrap();
        assert_eq!(before.rows[pos], after.rows[pos], "seed {seed}");
        assert_ne!(before.rows, after.rows, "seed {seed}: perturbation had no effect");
    }
}

#[test]
fn oof_matches_fold_by_fold_reconstruction() {
    let m = random_matrix(30, 3, 99);
    let seed = 17;
    let mut cfg = StackingConfig::new(ModelClass::Adaboost, seed);
    cfg.base = tree_booster();
    let (oof, _) = out_of_fold(&m, &cfg).unwrap();

    let mut order: Vec<usize> = (0..m.n_speakers()).collect();
    order.sort_by(|&a, &b| m.speaker_ids[a].cmp(&m.speaker_ids[b]));
    assert_eq!(oof.speaker_ids, order.iter().map(|&r| m.speaker_ids[r].clone()).collect::<Vec<_>>());
    for f in 0..cfg.meta_folds {
        let train: Vec<usize> = (0..30).filter(|&p| oof.folds[p] != f).map(|p| order[p]).collect();
        let fallback = train.iter().map(|&r| m.ages[r]).sum::<f64>() / train.len() as f64;
        for c in 0..3 {
            let rows: Vec<usize> = train.iter().copied().filter(|&r| m.present[r][c]).collect();
            let x: Vec<Vec<f64>> = rows.iter().map(|&r| m.block(r, c).to_vec()).collect();
            let y: Vec<f64> = rows.iter().map(|&r| m.ages[r]).collect();
            let st = Standardizer::fit(&x).unwrap();
            let model = cfg
                .base
                .fit(&st.transform(&x), &y, derive_seed(seed, &[c as u64, f as u64]))
                .unwrap();
            for p in (0..30).filter(|&p| oof.folds[p] == f) {
                let r = order[p];
                let want = if m.present[r][c] {
                    model.predict(&st.transform_row(m.block(r, c))).unwrap()
                } else {
                    fallback
                };
                assert_eq!(oof.rows[p][c], want, "fold {f} category {c} speaker {p}");
            }
        }
    }
}

#[test]
fn fit_is_invariant_to_row_order() {
    let m = random_matrix(20, 3, 5);
    let cfg = StackingConfig::new(ModelClass::Adaboost, 3);
    let a = fit_stacked(&m, &cfg).unwrap();
    let mut perm: Vec<usize> = (0..20).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(8));
    let shuffled = m.select_rows(&perm);
    let b = fit_stacked(&shuffled, &cfg).unwrap();
    assert_eq!(a.model, b.model);
    let pa = a.model.predict(&m).unwrap();
    let pb = b.model.predict(&m).unwrap();
    assert_eq!(pa, pb);
}

#[test]
fn batch_prediction_equals_single() {
    let m = random_matrix(20, 3, 6);
    let fit = fit_stacked(&m, &StackingConfig::new(ModelClass::Svr, 1)).unwrap();
    let batch = fit.model.predict(&m).unwrap();
    for s in 0..20 {
        assert_eq!(batch[s], fit.model.predict_one(&m.values[s], &m.present[s]).unwrap());
    }
}

fn single_category(m: &FeatureMatrix, key: &str) -> FeatureMatrix {
    let c = m.inventory.index_of(&CategoryKey::new(key)).unwrap();
    FeatureMatrix {
        speaker_ids: m.speaker_ids.clone(),
        inventory: PhoneInventory::from_keys([CategoryKey::new(key)], true, 0.0),
        values: (0..m.n_speakers()).map(|s| m.block(s, c).to_vec()).collect(),
        present: (0..m.n_speakers()).map(|s| vec![m.present[s][c]]).collect(),
        ages: m.ages.clone(),
        age_unit: m.age_unit,
    }
}

#[test]
fn one_category_stack_tracks_its_base_estimator() {
    let full = synthetic_matrix(66, 4);
    let m = single_category(&full, "VOWELS");
    let cfg = StackingConfig::new(ModelClass::Svr, 4);
    let n = m.n_speakers();
    let (mut stacked, mut lone) = (0.0, 0.0);
    for held in 0..n {
        let train: Vec<usize> = (0..n).filter(|&i| i != held).collect();
        let sub = m.select_rows(&train);
        let fit = fit_stacked(&sub, &cfg).unwrap();
        stacked += (fit.model.predict_one(&m.values[held], &m.present[held]).unwrap() - m.ages[held]).abs();

        let x: Vec<Vec<f64>> = train.iter().map(|&i| m.block(i, 0).to_vec()).collect();
        let y: Vec<f64> = train.iter().map(|&i| m.ages[i]).collect();
        let st = Standardizer::fit(&x).unwrap();
        let base = cfg.base.fit(&st.transform(&x), &y, 0).unwrap();
        lone += (base.predict(&st.transform_row(m.block(held, 0))).unwrap() - m.ages[held]).abs();
    }
    let (stacked, lone) = (stacked / n as f64, lone / n as f64);
    assert!(stacked <= 1.15 * lone, "stacked {stacked} vs lone {lone}");
}
