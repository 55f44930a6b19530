mod common;

use common::max_log_ratio;
use privexp::mechanisms::ops_release;
use privexp::truncation::Interval;
use privexp::{release_bounded, release_truncated, ConjugatePrior, Dataset, Family, HyperParams, RngHandle};

const DRAWS: usize = 400_000;

/// Releases of neighboring data sets (one record changed) never differ in
/// log probability by more than epsilon, up to sampling error.
#[test]
fn bounded_release_log_ratio_is_bounded() {
    let fam = Family::Bernoulli;
    let eps = 1.0;
    let mut d0 = vec![0u8; 20];
    d0[..7].fill(1);
    let mut d1 = d0.clone();
    d1[19] = 1;
    let (d0, d1) = (Dataset::Binary(d0), Dataset::Binary(d1));
    let mut rng = RngHandle::new(1);
    let a: Vec<f64> = (0..DRAWS).map(|_| release_bounded(fam, &d0, eps, &mut rng).unwrap().y[0]).collect();
    let b: Vec<f64> = (0..DRAWS).map(|_| release_bounded(fam, &d1, eps, &mut rng).unwrap().y[0]).collect();
    let r = max_log_ratio(&a, &b, -5.0, 20.0, 50, 2000);
    assert!(r <= eps + 0.1, "log ratio {r}");
    // the bound is tight in the tails, so the estimate should come close
    assert!(r > eps - 0.1, "log ratio {r}");
}

#[test]
fn truncated_release_log_ratio_is_bounded() {
    let fam = Family::Exponential;
    let eps = 1.0;
    let iv = Interval::new(0.1, 1.5).unwrap();
    // the worst neighbor moves one record from inside the bounds at 1.5 to outside
    let base = vec![0.5, 0.7, 1.2, 3.0, 0.05, 1.0];
    let mut other = base.clone();
    other[2] = 1.5;
    other[5] = 9.0;
    let (d0, d1) = (Dataset::Continuous(base), Dataset::Continuous(other));
    let mut rng = RngHandle::new(2);
    let a: Vec<f64> = (0..DRAWS)
        .map(|_| release_truncated(fam, &d0, eps, iv, &mut rng).unwrap().y[0])
        .collect();
    let b: Vec<f64> = (0..DRAWS)
        .map(|_| release_truncated(fam, &d1, eps, iv, &mut rng).unwrap().y[0])
        .collect();
    let r = max_log_ratio(&a, &b, -5.0, 12.0, 40, 2000);
    assert!(r <= eps + 0.1, "log ratio {r}");
}

#[test]
fn ops_release_log_ratio_is_bounded() {
    // one tempered posterior draw per release; the budget is split evenly
    let fam = Family::Bernoulli;
    let eps = 1.0;
    let prior = HyperParams::new(fam, ConjugatePrior::Beta { alpha: 1.0, beta: 1.0 }).unwrap();
    let settings = privexp::mechanisms::OpsSettings { samples: 1, a0: 0.1 };
    let mut d0 = vec![0u8; 20];
    d0[..7].fill(1);
    let mut d1 = d0.clone();
    d1[19] = 1;
    let (d0, d1) = (Dataset::Binary(d0), Dataset::Binary(d1));
    let mut rng = RngHandle::new(3);
    let draws = 200_000;
    let a: Vec<f64> = (0..draws)
        .map(|_| ops_release(&d0, eps, &settings, &prior, &mut rng).unwrap()[0])
        .collect();
    let b: Vec<f64> = (0..draws)
        .map(|_| ops_release(&d1, eps, &settings, &prior, &mut rng).unwrap()[0])
        .collect();
    let r = max_log_ratio(&a, &b, 0.1, 0.9, 16, 2000);
    assert!(r <= eps + 0.1, "log ratio {r}");
}
