//! Price-series statistics and the moving-average crossover strategy.
//!
//! All statistics use simple returns `r_t = p_t / p_{t-1} - 1`, `t = 2..T`,
//! so `m = T - 1` returns enter each formula. With `rbar` the mean return,
//! `c_j = (1/m) sum (r_t - rbar)^j` the central moments and
//! `rho_k = sum_{t>k} (r_t - rbar)(r_{t-k} - rbar) / sum_t (r_t - rbar)^2`:
//!
//! - `stdev`: unbiased sample standard deviation of the returns.
//! - `skew = c_3 / c_2^(3/2)`, `kurtosis = c_4 / c_2^2` (not excess).
//! - `autoq = m * sum_{k=1}^{L} rho_k^2`, the Box-Pierce statistic, `L = 10`.
//! - `box2 = m (m + 2) sum_{k=1}^{2} rho_k^2 / (m - k)`, the Ljung-Box statistic.
//! - `vrt`: overlapping variance ratio at horizon `q = 2`,
//!   `VR(q) = sigma_c^2(q) / sigma_a^2` with
//!   `sigma_a^2 = sum (r_t - rbar)^2 / (m - 1)` and
//!   `sigma_c^2(q) = sum_{t=q}^{m} (r_t + ... + r_{t-q+1} - q rbar)^2 / M`,
//!   `M = q (m - q + 1) (1 - q/m)`.
//! - `rs = (max_k S_k - min_k S_k) / (sqrt(c_2) sqrt(m))`, `S_k` the partial
//!   sums of the demeaned returns: the rescaled range normalised by `sqrt(m)`.
//! - `ghe`: with `X_t` the cumulative returns, the slope of
//!   `ln mean_t |X_{t+tau} - X_t|^q` against `ln tau`, `tau = 1..19`, divided
//!   by `q = 2`.

use crate::error::{Error, Result};

/// Minimum series length accepted by [`compute_features`].
pub const MIN_FEATURE_LENGTH: usize = 64;

/// Column names of [`Features::values`].
pub const FEATURE_NAMES: [&str; 8] = ["stdev", "skew", "kurtosis", "autoq", "box2", "vrt", "rs", "ghe"];

/// Strictly positive prices with optional date labels.
#[derive(Clone, Debug, PartialEq)]
pub struct PriceSeries {
    prices: Vec<f64>,
    dates: Option<Vec<String>>,
}

impl PriceSeries {
    pub fn new(prices: Vec<f64>) -> Result<Self> {
        if prices.len() < 2 {
            return Err(Error::InsufficientLength { len: prices.len(), min: 2 });
        }
        if let Some((t, p)) = prices.iter().enumerate().find(|(_, p)| !(**p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidInput(format!("price {p} at position {} is not positive", t + 1)));
        }
        Ok(Self { prices, dates: None })
    }

    pub fn with_dates(mut self, dates: Vec<String>) -> Result<Self> {
        if dates.len() != self.prices.len() {
            return Err(Error::LengthMismatch { left: dates.len(), right: self.prices.len() });
        }
        self.dates = Some(dates);
        Ok(self)
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn dates(&self) -> Option<&[String]> {
        self.dates.as_deref()
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn returns(&self) -> Vec<f64> {
        self.prices.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
    }
}

/// Crossover strategy settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StrategyParams {
    pub alpha_fast: f64,
    pub alpha_slow: f64,
    /// Weight of the newest squared price change in the volatility estimate.
    pub vol_decay: f64,
    /// Number of leading observations with a zero position.
    pub warmup: usize,
    pub trading_days: f64,
}

impl Default for StrategyParams {
    fn default() -> Self {
        Self {
            alpha_fast: 0.03,
            alpha_slow: 0.01,
            vol_decay: 0.06,
            warmup: 20,
            trading_days: 250.0,
        }
    }
}

impl StrategyParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |a: f64| a > 0.0 && a <= 1.0;
        if !unit(self.alpha_fast) || !unit(self.alpha_slow) || self.alpha_fast < self.alpha_slow {
            return Err(Error::InvalidInput(format!(
                "need 0 < alpha_slow <= alpha_fast <= 1, got {} and {}",
                self.alpha_slow, self.alpha_fast
            )));
        }
        if !unit(self.vol_decay) {
            return Err(Error::InvalidInput(format!("vol_decay {} outside (0, 1]", self.vol_decay)));
        }
        if !(self.trading_days > 0.0) {
            return Err(Error::InvalidInput("trading_days must be positive".into()));
        }
        Ok(())
    }
}

/// `EMA_1 = p_1`, `EMA_t = alpha p_t + (1 - alpha) EMA_{t-1}`.
pub fn ema(prices: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidInput(format!("alpha {alpha} outside (0, 1]")));
    }
    let first = *prices.first().ok_or(Error::InsufficientLength { len: 0, min: 1 })?;
    let mut out = Vec::with_capacity(prices.len());
    let mut current = first;
    out.push(current);
    for &p in &prices[1..] {
        current = alpha * p + (1.0 - alpha) * current;
        out.push(current);
    }
    Ok(out)
}

/// Exponentially weighted root-mean-square of daily price changes.
///
/// With `d_t = p_t - p_{t-1}`: `v_2 = d_2^2`, `v_t = (1 - decay) v_{t-1} + decay d_t^2`
/// and `vol_t = sqrt(v_t)`. The first entry repeats the second.
pub fn volatility(prices: &[f64], decay: f64) -> Result<Vec<f64>> {
    if prices.len() < 2 {
        return Err(Error::InsufficientLength { len: prices.len(), min: 2 });
    }
    if !(decay > 0.0 && decay <= 1.0) {
        return Err(Error::InvalidInput(format!("decay {decay} outside (0, 1]")));
    }
    let mut var = (prices[1] - prices[0]).powi(2);
    let mut out = vec![var.sqrt(), var.sqrt()];
    for w in prices[1..].windows(2) {
        var = (1.0 - decay) * var + decay * (w[1] - w[0]).powi(2);
        out.push(var.sqrt());
    }
    Ok(out)
}

/// `pos_t = (EMA^F_t - EMA^S_t) / vol_t`, zero for the first
/// `max(warmup, 1)` observations.
pub fn positions(prices: &[f64], params: &StrategyParams) -> Result<Vec<f64>> {
    params.validate()?;
    let fast = ema(prices, params.alpha_fast)?;
    let slow = ema(prices, params.alpha_slow)?;
    let vol = volatility(prices, params.vol_decay)?;
    let start = params.warmup.max(1);
    (0..prices.len())
        .map(|t| {
            if t < start {
                Ok(0.0)
            } else if vol[t] > 0.0 {
                Ok((fast[t] - slow[t]) / vol[t])
            } else {
                Err(Error::Undefined(format!("zero volatility at observation {}", t + 1)))
            }
        })
        .collect()
}

/// Daily pnl `r_t = pos_{t-1} (p_t - p_{t-1})` and its annualised Sharpe ratio.
pub fn pnl_and_sharpe(prices: &[f64], positions: &[f64], trading_days: f64) -> Result<(Vec<f64>, f64)> {
    if prices.len() != positions.len() {
        return Err(Error::LengthMismatch { left: prices.len(), right: positions.len() });
    }
    let pnl: Vec<f64> = (1..prices.len()).map(|t| positions[t - 1] * (prices[t] - prices[t - 1])).collect();
    let sharpe = sharpe_ratio(&pnl, trading_days)?;
    Ok((pnl, sharpe))
}

/// `(D/T sum r_t) / sqrt(D Var(r))` with the unbiased variance.
pub fn sharpe_ratio(pnl: &[f64], trading_days: f64) -> Result<f64> {
    let t = pnl.len();
    if t < 2 {
        return Err(Error::InsufficientLength { len: t, min: 2 });
    }
    let mean = pnl.iter().sum::<f64>() / t as f64;
    let var = pnl.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (t - 1) as f64;
    if !(var > 0.0) {
        return Err(Error::Undefined("pnl has zero variance".into()));
    }
    Ok(trading_days * mean / (trading_days * var).sqrt())
}

/// Annualised Sharpe ratio of the crossover strategy on a price series.
pub fn strategy_sharpe(prices: &[f64], params: &StrategyParams) -> Result<f64> {
    let pos = positions(prices, params)?;
    pnl_and_sharpe(prices, &pos, params.trading_days).map(|(_, s)| s)
}

/// Tuning of the feature statistics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureSettings {
    pub autoq_lags: usize,
    pub vrt_horizon: usize,
    pub ghe_q: f64,
    pub ghe_max_lag: usize,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        Self {
            autoq_lags: 10,
            vrt_horizon: 2,
            ghe_q: 2.0,
            ghe_max_lag: 19,
        }
    }
}

/// Feature vector of one market. Statistics that divide by a zero
/// dispersion are `None`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Features {
    pub stdev: f64,
    pub skew: Option<f64>,
    pub kurtosis: Option<f64>,
    pub autoq: Option<f64>,
    pub box2: Option<f64>,
    pub vrt: Option<f64>,
    pub rs: Option<f64>,
    pub ghe: Option<f64>,
}

impl Features {
    /// Values in [`FEATURE_NAMES`] order.
    pub fn values(&self) -> [Option<f64>; 8] {
        [
            Some(self.stdev),
            self.skew,
            self.kurtosis,
            self.autoq,
            self.box2,
            self.vrt,
            self.rs,
            self.ghe,
        ]
    }

    /// True when every statistic is defined and finite.
    pub fn is_complete(&self) -> bool {
        self.values().iter().all(|v| v.is_some_and(f64::is_finite))
    }
}

pub fn compute_features(prices: &[f64]) -> Result<Features> {
    compute_features_with(prices, &FeatureSettings::default())
}

pub fn compute_features_with(prices: &[f64], settings: &FeatureSettings) -> Result<Features> {
    if prices.len() < MIN_FEATURE_LENGTH {
        return Err(Error::InsufficientLength { len: prices.len(), min: MIN_FEATURE_LENGTH });
    }
    let returns = PriceSeries::new(prices.to_vec())?.returns();
    Ok(features_of_returns(&returns, settings))
}

/// Statistics of a return series directly (no length requirement beyond
/// what each lag needs).
pub fn features_of_returns(r: &[f64], settings: &FeatureSettings) -> Features {
    let m = r.len() as f64;
    let mean = r.iter().sum::<f64>() / m;
    let dev: Vec<f64> = r.iter().map(|v| v - mean).collect();
    let central = |j: i32| dev.iter().map(|d| d.powi(j)).sum::<f64>() / m;
    let c2 = central(2);
    let stdev = (c2 * m / (m - 1.0)).sqrt();
    // Dispersion at rounding level counts as none.
    let defined = c2.sqrt() > 1e-10 * mean.abs() && c2 > 0.0;
    let when = |v: f64| (defined && v.is_finite()).then_some(v);

    let ss: f64 = dev.iter().map(|d| d * d).sum();
    let rho = |k: usize| dev[k..].iter().zip(&dev).map(|(a, b)| a * b).sum::<f64>() / ss;
    let autoq = m * (1..=settings.autoq_lags.min(r.len() - 1)).map(|k| rho(k).powi(2)).sum::<f64>();
    let box2 = m * (m + 2.0) * (1..=2.min(r.len() - 1)).map(|k| rho(k).powi(2) / (m - k as f64)).sum::<f64>();

    Features {
        stdev,
        skew: when(central(3) / c2.powf(1.5)),
        kurtosis: when(central(4) / (c2 * c2)),
        autoq: when(autoq),
        box2: when(box2),
        vrt: when(variance_ratio(r, settings.vrt_horizon)),
        rs: when(rescaled_range(&dev, c2)),
        ghe: generalized_hurst(r, settings.ghe_q, settings.ghe_max_lag).filter(|_| defined),
    }
}

fn variance_ratio(r: &[f64], q: usize) -> f64 {
    let m = r.len();
    if q < 1 || q >= m {
        return f64::NAN;
    }
    let mf = m as f64;
    let mean = r.iter().sum::<f64>() / mf;
    let sigma_a = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (mf - 1.0);
    let big_m = q as f64 * (mf - q as f64 + 1.0) * (1.0 - q as f64 / mf);
    let sigma_c = r
        .windows(q)
        .map(|w| (w.iter().sum::<f64>() - q as f64 * mean).powi(2))
        .sum::<f64>()
        / big_m;
    sigma_c / sigma_a
}

fn rescaled_range(dev: &[f64], c2: f64) -> f64 {
    let (mut partial, mut hi, mut lo) = (0.0f64, f64::NEG_INFINITY, f64::INFINITY);
    for d in dev {
        partial += d;
        hi = hi.max(partial);
        lo = lo.min(partial);
    }
    (hi - lo) / c2.sqrt() / (dev.len() as f64).sqrt()
}

fn generalized_hurst(r: &[f64], q: f64, max_lag: usize) -> Option<f64> {
    let mut level = Vec::with_capacity(r.len() + 1);
    level.push(0.0);
    for v in r {
        level.push(level.last().unwrap() + v);
    }
    if max_lag < 2 || max_lag >= level.len() {
        return None;
    }
    let mut xs = Vec::with_capacity(max_lag);
    let mut ys = Vec::with_capacity(max_lag);
    for tau in 1..=max_lag {
        let k = level[tau..].iter().zip(&level).map(|(a, b)| (a - b).abs().powf(q)).sum::<f64>()
            / (level.len() - tau) as f64;
        if !(k > 0.0) {
            return None;
        }
        xs.push((tau as f64).ln());
        ys.push(k.ln());
    }
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let h = sxy / sxx / q;
    h.is_finite().then_some(h)
}
