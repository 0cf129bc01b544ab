use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use varxl::mcs::{loss_differentials, mcs, LossMatrix, McsOptions};

fn squared_errors(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal).powi(2)).collect()
}

fn opts(seed: u64, n_boot: usize) -> McsOptions {
    McsOptions {
        n_boot,
        seed,
        ..McsOptions::default()
    }
}

#[test]
fn differential_examples() {
    let base = vec![1.0, 4.0, 2.0, 0.5];
    let rows = vec![
        ("a".to_string(), base.clone()),
        ("b".to_string(), base.iter().map(|v| v + 1.0).collect()),
        ("c".to_string(), base.clone()),
    ];
    let l = LossMatrix::from_rows(&rows).unwrap();
    let d = loss_differentials(&l).unwrap();
    assert_eq!(d[1][0], vec![1.0; 4]);
    assert_eq!(d[0][2], vec![0.0; 4]);
    for i in 0..3 {
        for j in 0..3 {
            for t in 0..4 {
                assert_eq!(d[i][j][t], -d[j][i][t]);
            }
        }
    }
    let single = LossMatrix::from_rows(&rows[..1]).unwrap();
    assert!(loss_differentials(&single).is_err());
}

#[test]
fn constant_gap_is_eliminated() {
    let mut eliminated = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let good = squared_errors(&mut rng, 60);
        let bad: Vec<f64> = good.iter().map(|v| v + 1000.0).collect();
        let l = LossMatrix::from_rows(&[("good".into(), good), ("bad".into(), bad)]).unwrap();
        let res = mcs(&l, &opts(seed, 5000)).unwrap();
        if res.survivors == vec!["good".to_string()] {
            eliminated += 1;
        }
    }
    assert!(eliminated >= 19, "eliminated in {eliminated}/20 seeds");
}

#[test]
fn identical_models_are_never_separated() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = squared_errors(&mut rng, 60);
        let l = LossMatrix::from_rows(&[("a".into(), a.clone()), ("b".into(), a.clone()), ("c".into(), a)]).unwrap();
        let res = mcs(&l, &opts(seed, 500)).unwrap();
        assert_eq!(res.survivors.len(), 3);
        assert_eq!(res.trace.len(), 1);
        assert_eq!(res.trace[0].p_value, 1.0);
    }
}

#[test]
fn equally_good_models_are_usually_retained() {
    let mut kept = 0;
    let runs = 40;
    for seed in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let rows: Vec<(String, Vec<f64>)> = (0..3).map(|i| (format!("m{i}"), squared_errors(&mut rng, 80))).collect();
        let l = LossMatrix::from_rows(&rows).unwrap();
        let res = mcs(&l, &opts(seed, 1000)).unwrap();
        kept += usize::from(res.survivors.len() == 3);
    }
    assert!(kept as f64 >= 0.8 * runs as f64, "all retained in {kept}/{runs}");
}

#[test]
fn trace_records_each_test() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base = squared_errors(&mut rng, 64);
    let rows = vec![
        ("best".to_string(), base.clone()),
        ("worse".to_string(), base.iter().map(|v| v + 50.0).collect()),
        ("worst".to_string(), base.iter().map(|v| v + 100.0).collect()),
    ];
    let res = mcs(&LossMatrix::from_rows(&rows).unwrap(), &opts(0, 1000)).unwrap();
    assert_eq!(res.survivors, vec!["best".to_string()]);
    assert_eq!(res.block_len, 4);
    let eliminated: Vec<_> = res.trace.iter().filter_map(|s| s.eliminated.clone()).collect();
    assert_eq!(eliminated, vec!["worst".to_string(), "worse".to_string()]);
    assert!(res.trace.iter().all(|s| (0.0..=1.0).contains(&s.p_value)));
}

#[test]
fn short_samples_and_bad_options_are_rejected() {
    let l = LossMatrix::from_rows(&[("a".into(), vec![1.0; 3]), ("b".into(), vec![2.0; 3])]).unwrap();
    assert!(mcs(&l, &McsOptions::default()).is_ok());
    let long = LossMatrix::from_rows(&[("a".into(), vec![1.0; 30]), ("b".into(), vec![2.0; 30])]).unwrap();
    let bad_alpha = McsOptions {
        alpha: 1.5,
        ..McsOptions::default()
    };
    assert!(mcs(&long, &bad_alpha).is_err());
    let no_boot = McsOptions {
        n_boot: 0,
        ..McsOptions::default()
    };
    assert!(mcs(&long, &no_boot).is_err());
    let wide_block = McsOptions {
        block_len: Some(16),
        ..McsOptions::default()
    };
    assert!(mcs(&long, &wide_block).unwrap_err().is_validation());
    assert!(LossMatrix::new(DMatrix::from_element(2, 3, f64::NAN), vec!["a".into(), "b".into()]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn survivors_ignore_input_order(seed in 0u64..1000, shift in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<(String, Vec<f64>)> = (0..4)
            .map(|i| (format!("m{i}"), squared_errors(&mut rng, 40).iter().map(|v| v + 0.3 * i as f64).collect()))
            .collect();
        let mut rotated = rows.clone();
        rotated.rotate_left(shift);
        let a = mcs(&LossMatrix::from_rows(&rows).unwrap(), &opts(seed, 300)).unwrap();
        let b = mcs(&LossMatrix::from_rows(&rotated).unwrap(), &opts(seed, 300)).unwrap();
        let (mut sa, mut sb) = (a.survivors.clone(), b.survivors.clone());
        sa.sort();
        sb.sort();
        prop_assert_eq!(sa, sb);
        prop_assert!(!a.survivors.is_empty());
        for s in &a.survivors {
            prop_assert!(rows.iter().any(|r| &r.0 == s));
        }
    }

    #[test]
    fn duplicated_models_share_their_fate(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = squared_errors(&mut rng, 40);
        let b: Vec<f64> = squared_errors(&mut rng, 40).iter().map(|v| v + 0.5).collect();
        let rows = vec![("a".to_string(), a.clone()), ("a2".to_string(), a), ("b".to_string(), b)];
        let res = mcs(&LossMatrix::from_rows(&rows).unwrap(), &opts(seed, 300)).unwrap();
        prop_assert_eq!(res.survivors.contains(&"a".to_string()), res.survivors.contains(&"a2".to_string()));
    }
}
