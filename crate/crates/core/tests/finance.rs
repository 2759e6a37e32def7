use lassomix::finance::{
    ema, features_of_returns, pnl_and_sharpe, positions, sharpe_ratio, FeatureSettings, StrategyParams,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn walk() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.03f64..0.03, 30..120).prop_map(|steps| {
        let mut p = 100.0;
        steps.iter().map(|s| {
            p *= f64::exp(*s);
            p
        }).collect()
    })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

proptest! {
    #[test]
    fn ema_commutes_with_shifts(prices in walk(), shift in -50.0f64..50.0, alpha in 0.01f64..1.0) {
        let base = ema(&prices, alpha).unwrap();
        let shifted: Vec<f64> = prices.iter().map(|p| p + shift).collect();
        for (a, b) in ema(&shifted, alpha).unwrap().iter().zip(&base) {
            prop_assert!(close(*a, b + shift, 1e-12));
        }
    }

    #[test]
    fn positions_ignore_price_units(prices in walk(), scale in 0.01f64..100.0) {
        let params = StrategyParams { warmup: 5, ..StrategyParams::default() };
        let base = positions(&prices, &params).unwrap();
        let scaled: Vec<f64> = prices.iter().map(|p| p * scale).collect();
        for (a, b) in positions(&scaled, &params).unwrap().iter().zip(&base) {
            prop_assert!((a - b).abs() <= 1e-8 * b.abs().max(1e-8) + 1e-12);
        }
    }

    #[test]
    fn sharpe_ignores_position_size(prices in walk(), scale in 0.001f64..1000.0) {
        let params = StrategyParams { warmup: 5, ..StrategyParams::default() };
        let pos = positions(&prices, &params).unwrap();
        let (_, base) = pnl_and_sharpe(&prices, &pos, 250.0).unwrap();
        let scaled: Vec<f64> = pos.iter().map(|p| p * scale).collect();
        let (_, s) = pnl_and_sharpe(&prices, &scaled, 250.0).unwrap();
        prop_assert!(close(s, base, 1e-12), "{s} vs {base}");
    }
}

#[test]
fn hand_examples() {
    assert_eq!(ema(&[1.0, 2.0], 0.5).unwrap(), vec![1.0, 1.5]);

    let prices = [100.0, 102.0, 101.0, 104.0, 103.0];
    let params = StrategyParams { alpha_fast: 0.5, alpha_slow: 0.25, vol_decay: 0.5, warmup: 1, trading_days: 250.0 };
    let want = [0.0, 0.25, 0.375 / 2.5f64.sqrt(), 1.03125 / 5.75f64.sqrt(), 0.8984375 / 3.375f64.sqrt()];
    for (g, w) in positions(&prices, &params).unwrap().iter().zip(want) {
        assert!(close(*g, w, 1e-12), "{g} vs {w}");
    }

    let prices10 = [10.0, 11.0, 10.5, 12.0, 11.0, 11.5, 13.0, 12.5, 12.0, 13.0];
    let pos10 = [1.0, -1.0, 2.0, 0.5, 1.0, -0.5, 1.0, 2.0, -1.0, 0.0];
    let (pnl, sharpe) = pnl_and_sharpe(&prices10, &pos10, 250.0).unwrap();
    assert_eq!(pnl, vec![1.0, 0.5, 3.0, -0.5, 0.5, -0.75, -0.5, -1.0, -1.0]);
    let hand = 250.0 * (1.25 / 9.0) / (250.0 * 120.5 / 72.0f64).sqrt();
    assert!(close(sharpe, hand, 1e-12), "{sharpe} vs {hand}");

    let alternating: Vec<f64> = (0..100).map(|t| if t % 2 == 0 { 1.0 } else { -1.0 }).collect();
    assert!(sharpe_ratio(&alternating, 250.0).unwrap().abs() < 1e-6);
}

#[test]
fn gaussian_returns_have_textbook_statistics() {
    let t = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let normal = Normal::new(0.0, 0.01).unwrap();
    let r: Vec<f64> = (0..t).map(|_| normal.sample(&mut rng)).collect();
    let f = features_of_returns(&r, &FeatureSettings::default());
    let tf = t as f64;
    let skew = f.skew.unwrap();
    let kurt = f.kurtosis.unwrap();
    assert!(skew.abs() < 4.0 * (6.0 / tf).sqrt(), "skew {skew}");
    assert!((kurt - 3.0).abs() < 4.0 * (24.0 / tf).sqrt(), "kurtosis {kurt}");
    assert!((f.vrt.unwrap() - 1.0).abs() < 4.0 / tf.sqrt(), "variance ratio {:?}", f.vrt);
    assert!((f.ghe.unwrap() - 0.5).abs() < 0.02, "hurst {:?}", f.ghe);
}
