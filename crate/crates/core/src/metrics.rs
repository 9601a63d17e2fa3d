//! Post-failure forecast evaluation: cumulative RMSE/MAPE, time to
//! convergence and the impact-severity split.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Denominator guard for percentage errors, Gbps.
pub const DEFAULT_EPS: f64 = 1.0;
/// Relative change of the mean load above which a scenario is highly impacted.
pub const IMPACT_THRESHOLD: f64 = 0.80;
/// Samples averaged on each side of the failure for impact classification.
pub const IMPACT_WINDOW: usize = 50;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("prediction and actual lengths differ ({pred} vs {actual})")]
    LengthMismatch { pred: usize, actual: usize },
    #[error("empty input")]
    Empty,
    #[error("need {needed} samples, have {got}")]
    TooShort { needed: usize, got: usize },
    #[error("invalid convergence config: {0}")]
    InvalidConfig(String),
}

fn check(pred: &[f64], actual: &[f64]) -> Result<(), MetricsError> {
    if pred.len() != actual.len() {
        return Err(MetricsError::LengthMismatch { pred: pred.len(), actual: actual.len() });
    }
    if pred.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// Absolute percentage error of one prediction.
pub fn pct_error(pred: f64, actual: f64, eps: f64) -> f64 {
    100.0 * (pred - actual).abs() / actual.abs().max(eps)
}

pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64, MetricsError> {
    check(pred, actual)?;
    let sse: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

pub fn mape(pred: &[f64], actual: &[f64], eps: f64) -> Result<f64, MetricsError> {
    check(pred, actual)?;
    let total: f64 = pred.iter().zip(actual).map(|(p, a)| pct_error(*p, *a, eps)).sum();
    Ok(total / pred.len() as f64)
}

/// RMSE and MAPE over post-failure steps 0..=t for every t in 0..=horizon.
pub fn cumulative_curves(
    pred: &[f64],
    actual: &[f64],
    horizon: usize,
    eps: f64,
) -> Result<(Vec<f64>, Vec<f64>), MetricsError> {
    check(pred, actual)?;
    if pred.len() < horizon + 1 {
        return Err(MetricsError::TooShort { needed: horizon + 1, got: pred.len() });
    }
    let mut rmse_curve = Vec::with_capacity(horizon + 1);
    let mut mape_curve = Vec::with_capacity(horizon + 1);
    let (mut sse, mut spe) = (0.0, 0.0);
    for t in 0..=horizon {
        let (p, a) = (pred[t], actual[t]);
        sse += (p - a) * (p - a);
        spe += pct_error(p, a, eps);
        let n = (t + 1) as f64;
        rmse_curve.push((sse / n).sqrt());
        mape_curve.push(spe / n);
    }
    Ok((rmse_curve, mape_curve))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TConvConfig {
    /// Tolerated percentage error.
    pub th: f64,
    /// Required run of consecutive in-tolerance predictions.
    pub x: usize,
}

impl TConvConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.th > 0.0) || self.x == 0 {
            return Err(MetricsError::InvalidConfig(format!("th {} and x {} must be positive", self.th, self.x)));
        }
        Ok(())
    }
}

/// Default pair of tolerances, both with runs of 5.
pub fn default_tconv_configs() -> Vec<TConvConfig> {
    vec![TConvConfig { th: 10.0, x: 5 }, TConvConfig { th: 15.0, x: 5 }]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TConv {
    At(usize),
    NotConverged,
}

impl TConv {
    pub fn step(self) -> Option<usize> {
        match self {
            TConv::At(t) => Some(t),
            TConv::NotConverged => None,
        }
    }
}

impl fmt::Display for TConv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TConv::At(t) => write!(f, "{t}"),
            TConv::NotConverged => f.write_str("not_converged"),
        }
    }
}

/// First post-failure index starting `x` consecutive predictions within
/// `th` percent of the actual value.
pub fn tconv(pred: &[f64], actual: &[f64], cfg: TConvConfig, eps: f64) -> Result<TConv, MetricsError> {
    check(pred, actual)?;
    cfg.validate()?;
    if pred.len() < cfg.x {
        return Err(MetricsError::TooShort { needed: cfg.x, got: pred.len() });
    }
    let mut run = 0;
    for i in 0..pred.len() {
        if pct_error(pred[i], actual[i], eps) <= cfg.th {
            run += 1;
            if run == cfg.x {
                return Ok(TConv::At(i + 1 - cfg.x));
            }
        } else {
            run = 0;
        }
    }
    Ok(TConv::NotConverged)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImpactClass {
    Highly,
    Moderately,
}

impl ImpactClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ImpactClass::Highly => "highly",
            ImpactClass::Moderately => "moderately",
        }
    }
}

impl fmt::Display for ImpactClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactAssessment {
    pub class: ImpactClass,
    pub pre_mean: f64,
    pub post_mean: f64,
    /// |post − pre| / max(pre, eps).
    pub relative_change: f64,
}

/// Compares the mean of the 50 samples before `failure_step` with the mean
/// of the 50 samples from `failure_step` on. Surges count like drops.
pub fn classify_impact(series: &[f64], failure_step: usize, eps: f64) -> Result<ImpactAssessment, MetricsError> {
    if failure_step < IMPACT_WINDOW || series.len() < failure_step + IMPACT_WINDOW {
        return Err(MetricsError::TooShort {
            needed: failure_step.max(IMPACT_WINDOW) + IMPACT_WINDOW,
            got: series.len(),
        });
    }
    let n = IMPACT_WINDOW as f64;
    let pre_mean = series[failure_step - IMPACT_WINDOW..failure_step].iter().sum::<f64>() / n;
    let post_mean = series[failure_step..failure_step + IMPACT_WINDOW].iter().sum::<f64>() / n;
    let relative_change = (post_mean - pre_mean).abs() / pre_mean.max(eps);
    let class = if relative_change > IMPACT_THRESHOLD { ImpactClass::Highly } else { ImpactClass::Moderately };
    Ok(ImpactAssessment { class, pre_mean, post_mean, relative_change })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TConvEntry {
    pub th: f64,
    pub x: usize,
    pub tconv: TConv,
}

/// Results of one forecaster in one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproachResult {
    pub approach: String,
    pub cum_rmse: Vec<f64>,
    pub cum_mape: Vec<f64>,
    pub tconv: Vec<TConvEntry>,
    /// MAPE over the stream between deployment and the failure.
    pub pre_failure_mape: f64,
    /// Partial refits performed during the curve horizon (incremental only).
    pub refits_in_horizon: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenario: String,
    pub failed_link: u32,
    pub inspected_link: u32,
    pub failure_step: u32,
    pub horizon: usize,
    pub impact: ImpactAssessment,
    /// SHA-256 of the observation stream every forecaster consumed.
    pub stream_hash: String,
    pub approaches: Vec<ApproachResult>,
}

impl EvalReport {
    pub fn approach(&self, name: &str) -> Option<&ApproachResult> {
        self.approaches.iter().find(|a| a.approach == name)
    }
}

/// `approach,step,cum_rmse,cum_mape`
pub fn write_curves_csv<W: Write>(approaches: &[ApproachResult], mut w: W) -> std::io::Result<()> {
    writeln!(w, "approach,step,cum_rmse,cum_mape")?;
    for a in approaches {
        for (t, (r, m)) in a.cum_rmse.iter().zip(&a.cum_mape).enumerate() {
            writeln!(w, "{},{},{},{}", a.approach, t, r, m)?;
        }
    }
    Ok(())
}

/// `approach,th,x,tconv`
pub fn write_tconv_csv<W: Write>(report: &EvalReport, mut w: W) -> std::io::Result<()> {
    writeln!(w, "approach,th,x,tconv")?;
    for a in &report.approaches {
        for e in &a.tconv {
            writeln!(w, "{},{},{},{}", a.approach, e.th, e.x, e.tconv)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[2.0, 2.0], &[0.0, 2.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(rmse(&[5.0], &[1.0]).unwrap(), 4.0);
        assert_eq!(rmse(&[], &[]), Err(MetricsError::Empty));
        assert!(matches!(rmse(&[1.0], &[1.0, 2.0]), Err(MetricsError::LengthMismatch { .. })));
    }

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[3.0], &[3.0], 1.0).unwrap(), 0.0);
        assert!((mape(&[110.0], &[100.0], 1.0).unwrap() - 10.0).abs() < 1e-12);
        let m = mape(&[0.5, 2.0], &[0.0, 2.0], 1.0).unwrap();
        assert!((m - 25.0).abs() < 1e-12);
    }

    #[test]
    fn constant_relative_error_gives_flat_mape_curve() {
        let actual: Vec<f64> = (1..=51).map(|v| v as f64 * 10.0).collect();
        let pred: Vec<f64> = actual.iter().map(|a| a * 1.1).collect();
        let (_, m) = cumulative_curves(&pred, &actual, 50, 1.0).unwrap();
        assert!(m.iter().all(|v| (v - 10.0).abs() < 1e-9));
    }

    #[test]
    fn early_error_dilutes() {
        let actual = vec![100.0; 51];
        let mut pred = actual.clone();
        pred[0] = 1000.0;
        let (r, _) = cumulative_curves(&pred, &actual, 50, 1.0).unwrap();
        assert!(r.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn curve_shorter_than_horizon() {
        assert!(matches!(cumulative_curves(&[1.0; 10], &[1.0; 10], 50, 1.0), Err(MetricsError::TooShort { .. })));
    }

    fn from_pct(errors: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let actual = vec![100.0; errors.len()];
        let pred = errors.iter().map(|e| 100.0 + e).collect();
        (pred, actual)
    }

    #[test]
    fn tconv_examples() {
        let cfg = TConvConfig { th: 10.0, x: 5 };
        let (p, a) = from_pct(&[50.0, 9.0, 8.0, 7.0, 6.0, 5.0, 4.0]);
        assert_eq!(tconv(&p, &a, cfg, 1.0).unwrap(), TConv::At(1));
        let (p, a) = from_pct(&[1.0; 8]);
        assert_eq!(tconv(&p, &a, cfg, 1.0).unwrap(), TConv::At(0));
        let alt: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 5.0 } else { 20.0 }).collect();
        let (p, a) = from_pct(&alt);
        assert_eq!(tconv(&p, &a, cfg, 1.0).unwrap(), TConv::NotConverged);
        assert!(matches!(tconv(&p[..3], &a[..3], cfg, 1.0), Err(MetricsError::TooShort { .. })));
        assert!(tconv(&p, &a, TConvConfig { th: 10.0, x: 0 }, 1.0).is_err());
    }

    #[test]
    fn impact_examples() {
        let series = |pre: f64, post: f64| {
            let mut s = vec![pre; 50];
            s.extend(vec![post; 50]);
            s
        };
        assert_eq!(classify_impact(&series(100.0, 15.0), 50, 1.0).unwrap().class, ImpactClass::Highly);
        assert_eq!(classify_impact(&series(100.0, 50.0), 50, 1.0).unwrap().class, ImpactClass::Moderately);
        assert_eq!(classify_impact(&series(100.0, 185.0), 50, 1.0).unwrap().class, ImpactClass::Highly);
        assert_eq!(classify_impact(&series(100.0, 20.0), 50, 1.0).unwrap().class, ImpactClass::Moderately);
        assert!(classify_impact(&series(1.0, 1.0)[..99], 50, 1.0).is_err());
        assert!(classify_impact(&series(1.0, 1.0), 40, 1.0).is_err());
    }

    #[test]
    fn tconv_display() {
        assert_eq!(TConv::At(7).to_string(), "7");
        assert_eq!(TConv::NotConverged.to_string(), "not_converged");
    }

    proptest! {
        #[test]
        fn rmse_zero_iff_equal_and_permutation_invariant(v in prop::collection::vec(-1e3f64..1e3, 1..50), k in 0usize..50) {
            prop_assert_eq!(rmse(&v, &v).unwrap(), 0.0);
            let mut shifted = v.clone();
            shifted[k % v.len()] += 1.0;
            prop_assert!(rmse(&shifted, &v).unwrap() > 0.0);
            let mut pairs: Vec<(f64, f64)> = shifted.iter().copied().zip(v.iter().copied()).collect();
            pairs.reverse();
            let (p, a): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let r1 = rmse(&shifted, &v).unwrap();
            let r2 = rmse(&p, &a).unwrap();
            prop_assert!((r1 - r2).abs() <= 1e-12 * r1.max(1.0));
        }

        #[test]
        fn mape_scale_invariant(pa in prop::collection::vec((0.0f64..1e3, 0.0f64..1e3), 1..50), c in 0.01f64..100.0) {
            let (p, a): (Vec<f64>, Vec<f64>) = pa.into_iter().unzip();
            let ps: Vec<f64> = p.iter().map(|v| v * c).collect();
            let as_: Vec<f64> = a.iter().map(|v| v * c).collect();
            let m1 = mape(&p, &a, 1.0).unwrap();
            let m2 = mape(&ps, &as_, c).unwrap();
            prop_assert!((m1 - m2).abs() <= 1e-9 * m1.max(1.0));
        }
    }
}
