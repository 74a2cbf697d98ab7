//! Episode metrics (success, transport rate, coverage, balance, steps) and
//! their aggregation with confidence intervals.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::action::{ActionKind, HighLevelAction};
use crate::orchestrator::{ControllerMode, EpisodeTrace, Termination};

/// Regularizer in the balance denominator.
pub const BALANCE_EPS: f64 = 1e-4;

/// Two-sided normal quantile for 95% intervals.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("balance needs at least one agent")]
    NoAgents,
    #[error("episode has no subtasks")]
    NoSubtasks,
    #[error("episode has no targets")]
    NoTargets,
    #[error("invalid binomial counts k={k}, n={n}")]
    InvalidCounts { k: u64, n: u64 },
    #[error("alpha must lie in (0, 1)")]
    InvalidAlpha,
    #[error("no episode results to aggregate")]
    Empty,
}

/// min(s) / (max(s) + ε).
pub fn balance(s: &[u32]) -> Result<f64, MetricsError> {
    let min = *s.iter().min().ok_or(MetricsError::NoAgents)?;
    let max = *s.iter().max().ok_or(MetricsError::NoAgents)?;
    Ok(f64::from(min) / (f64::from(max) + BALANCE_EPS))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub scene_id: String,
    pub mode: ControllerMode,
    pub seed: u64,
    pub n_agents: usize,
    pub success: bool,
    pub subtasks_total: u32,
    pub subtasks_done: u32,
    pub targets_total: u32,
    pub targets_interacted: u32,
    /// Successful critical actions per agent.
    pub critical: Vec<u32>,
    pub steps: u32,
    pub horizon: u32,
    pub aborted: bool,
}

/// Actions counted toward balance when they succeed.
pub fn is_critical(action: &HighLevelAction) -> bool {
    matches!(
        action.kind(),
        ActionKind::UseSupply | ActionKind::GetSupply | ActionKind::StoreSupply | ActionKind::Carry | ActionKind::DropOff
    )
}

impl EpisodeResult {
    /// Recomputes the result from a trace: ground-truth subtask status from
    /// the footer, interactions and critical actions from step outcomes.
    pub fn from_trace(trace: &EpisodeTrace) -> Self {
        let h = &trace.header;
        let gt = &trace.footer.ground_truth;
        let subtasks_total = gt.len() as u32;
        let subtasks_done = gt.values().filter(|d| **d).count() as u32;
        let targets: BTreeSet<&str> = h.fires.iter().chain(&h.persons).map(String::as_str).collect();
        let mut touched = BTreeSet::new();
        let mut critical = vec![0u32; h.agents.len()];
        for step in &trace.steps {
            for (i, o) in step.outcomes.iter().enumerate() {
                if !o.success {
                    continue;
                }
                if is_critical(&o.action) {
                    critical[i] += 1;
                }
                match &o.action {
                    HighLevelAction::UseSupply { fire, .. } => {
                        touched.insert(fire.as_str());
                    }
                    HighLevelAction::Carry { person } => {
                        touched.insert(person.as_str());
                    }
                    _ => {}
                }
            }
        }
        let success = subtasks_total > 0 && subtasks_done == subtasks_total;
        Self {
            scene_id: h.scene_id.clone(),
            mode: h.mode,
            seed: h.seed,
            n_agents: h.agents.len(),
            success,
            subtasks_total,
            subtasks_done,
            targets_total: targets.len() as u32,
            targets_interacted: touched.intersection(&targets).count() as u32,
            critical,
            steps: trace.footer.steps,
            horizon: h.horizon,
            aborted: trace.footer.termination == Termination::Aborted,
        }
    }

    pub fn transport_rate(&self) -> Result<f64, MetricsError> {
        transport_rate(self)
    }

    pub fn coverage(&self) -> Result<f64, MetricsError> {
        coverage(self)
    }

    pub fn balance(&self) -> Result<f64, MetricsError> {
        balance(&self.critical)
    }

    /// Episode length as averaged: unsuccessful episodes count the horizon.
    pub fn length(&self) -> u32 {
        if self.success {
            self.steps
        } else {
            self.horizon
        }
    }
}

pub fn transport_rate(r: &EpisodeResult) -> Result<f64, MetricsError> {
    if r.subtasks_total == 0 {
        return Err(MetricsError::NoSubtasks);
    }
    Ok(f64::from(r.subtasks_done) / f64::from(r.subtasks_total))
}

pub fn coverage(r: &EpisodeResult) -> Result<f64, MetricsError> {
    if r.targets_total == 0 {
        return Err(MetricsError::NoTargets);
    }
    Ok(f64::from(r.targets_interacted) / f64::from(r.targets_total))
}

/// ln Γ(x) for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = f64::from(m);
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b) for a, b > 0.
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// x with I_x(a, b) = p, by bisection down to adjacent floats.
pub fn beta_quantile(p: f64, a: f64, b: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if incomplete_beta(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Exact (Clopper–Pearson) two-sided interval for k successes in n trials.
pub fn clopper_pearson(k: u64, n: u64, alpha: f64) -> Result<(f64, f64), MetricsError> {
    if n == 0 || k > n {
        return Err(MetricsError::InvalidCounts { k, n });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MetricsError::InvalidAlpha);
    }
    let (kf, nf) = (k as f64, n as f64);
    let lower = if k == 0 { 0.0 } else { beta_quantile(alpha / 2.0, kf, nf - kf + 1.0) };
    let upper = if k == n { 1.0 } else { beta_quantile(1.0 - alpha / 2.0, kf + 1.0, nf - kf) };
    Ok((lower, upper))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    /// mean ± 1.96·stderr (sample standard deviation), clamped to `[lo, hi]`.
    pub fn normal(values: &[f64], lo: f64, hi: f64) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let half = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            Z_95 * (var / n).sqrt()
        } else {
            0.0
        };
        Self { mean, lower: (mean - half).max(lo), upper: (mean + half).min(hi) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub label: String,
    pub episodes: usize,
    pub successes: usize,
    pub sr: Interval,
    pub tr: Interval,
    pub coverage: Interval,
    pub balance: Interval,
    pub steps: Interval,
}

impl MetricRow {
    fn build(label: String, results: &[&EpisodeResult]) -> Result<Self, MetricsError> {
        if results.is_empty() {
            return Err(MetricsError::Empty);
        }
        let n = results.len();
        let successes = results.iter().filter(|r| r.success).count();
        let (lower, upper) = clopper_pearson(successes as u64, n as u64, 0.05)?;
        let collect = |f: &dyn Fn(&EpisodeResult) -> Result<f64, MetricsError>| -> Result<Vec<f64>, MetricsError> {
            results.iter().map(|r| f(r)).collect()
        };
        let horizon = results.iter().map(|r| r.horizon).max().unwrap_or(0);
        Ok(Self {
            label,
            episodes: n,
            successes,
            sr: Interval { mean: successes as f64 / n as f64, lower, upper },
            tr: Interval::normal(&collect(&transport_rate)?, 0.0, 1.0),
            coverage: Interval::normal(&collect(&coverage)?, 0.0, 1.0),
            balance: Interval::normal(&collect(&|r| r.balance())?, 0.0, 1.0),
            steps: Interval::normal(&collect(&|r| Ok(f64::from(r.length())))?, 0.0, f64::from(horizon)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub pooled: MetricRow,
    pub per_scene: Vec<MetricRow>,
    /// Inputs that could not be used, e.g. corrupt trace files.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<String>,
}

/// Pooled row plus one row per scene id (sorted).
pub fn aggregate(results: &[EpisodeResult]) -> Result<AggregateReport, MetricsError> {
    let all: Vec<&EpisodeResult> = results.iter().collect();
    let pooled = MetricRow::build("all".to_string(), &all)?;
    let mut by_scene: BTreeMap<&str, Vec<&EpisodeResult>> = BTreeMap::new();
    for r in results {
        by_scene.entry(&r.scene_id).or_default().push(r);
    }
    let per_scene = by_scene
        .into_iter()
        .map(|(scene, rs)| MetricRow::build(format!("scene {scene}"), &rs))
        .collect::<Result<_, _>>()?;
    Ok(AggregateReport { pooled, per_scene, skipped: Vec::new() })
}

impl AggregateReport {
    /// Tab-separated table, one row per group.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "group\tepisodes\tsuccesses\tSR\tSR_lo\tSR_hi\tTR\tTR_lo\tTR_hi\tC\tC_lo\tC_hi\tB\tB_lo\tB_hi\tL\tL_lo\tL_hi\n",
        );
        for row in std::iter::once(&self.pooled).chain(&self.per_scene) {
            let _ = write!(out, "{}\t{}\t{}", row.label, row.episodes, row.successes);
            for iv in [row.sr, row.tr, row.coverage, row.balance, row.steps] {
                let _ = write!(out, "\t{:.4}\t{:.4}\t{:.4}", iv.mean, iv.lower, iv.upper);
            }
            out.push('\n');
        }
        out
    }

    /// Fixed-width summary with `mean [lower, upper]` cells.
    pub fn to_text(&self) -> String {
        let cell = |iv: Interval| format!("{:.2} [{:.2}, {:.2}]", iv.mean, iv.lower, iv.upper);
        let mut out = format!(
            "{:<12} {:>4}  {:<20} {:<20} {:<20} {:<20} {:<24}\n",
            "group", "n", "SR", "TR", "C", "B", "L"
        );
        for row in std::iter::once(&self.pooled).chain(&self.per_scene) {
            let _ = writeln!(
                out,
                "{:<12} {:>4}  {:<20} {:<20} {:<20} {:<20} {:<24}",
                row.label,
                row.episodes,
                cell(row.sr),
                cell(row.tr),
                cell(row.coverage),
                cell(row.balance),
                cell(row.steps)
            );
        }
        if !self.skipped.is_empty() {
            let _ = writeln!(out, "\nskipped {} input(s):", self.skipped.len());
            for s in &self.skipped {
                let _ = writeln!(out, "  {s}");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn result(scene: &str, success: bool, done: u32, steps: u32) -> EpisodeResult {
        EpisodeResult {
            scene_id: scene.into(),
            mode: ControllerMode::Llamar,
            seed: 0,
            n_agents: 2,
            success,
            subtasks_total: 4,
            subtasks_done: done,
            targets_total: 4,
            targets_interacted: done,
            critical: vec![3, 3],
            steps,
            horizon: 30,
            aborted: false,
        }
    }

    /// P(X ≤ k) for X ~ Binomial(n, p), summed directly.
    fn binom_cdf(k: u64, n: u64, p: f64) -> f64 {
        let mut total = 0.0;
        for i in 0..=k {
            let ln_c = ln_gamma(n as f64 + 1.0) - ln_gamma(i as f64 + 1.0) - ln_gamma((n - i) as f64 + 1.0);
            total += (ln_c + i as f64 * p.ln() + (n - i) as f64 * (1.0 - p).ln()).exp();
        }
        total
    }

    /// Independent inversion: bisection on the binomial tail sums.
    fn cp_by_binomial_sums(k: u64, n: u64, alpha: f64) -> (f64, f64) {
        let solve = |f: &dyn Fn(f64) -> f64| {
            let (mut lo, mut hi) = (1e-15, 1.0 - 1e-15);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        // Lower: P(X ≥ k | p) = α/2, increasing in p.
        let lower = solve(&|p| alpha / 2.0 - (1.0 - binom_cdf(k - 1, n, p)));
        // Upper: P(X ≤ k | p) = α/2, decreasing in p.
        let upper = solve(&|p| binom_cdf(k, n, p) - alpha / 2.0);
        (lower, upper)
    }

    #[test]
    fn balance_examples() {
        assert!((balance(&[3, 3]).unwrap() - 3.0 / 3.0001).abs() < 1e-9);
        assert_eq!(balance(&[0, 5]).unwrap(), 0.0);
        assert_eq!(balance(&[0, 0]).unwrap(), 0.0);
        assert!((balance(&[7]).unwrap() - 7.0 / 7.0001).abs() < 1e-12);
        assert_eq!(balance(&[]), Err(MetricsError::NoAgents));
    }

    #[test]
    fn rates_examples() {
        let r = result("1", false, 3, 30);
        assert_eq!(transport_rate(&r).unwrap(), 0.75);
        let mut none = result("1", false, 0, 30);
        assert_eq!(transport_rate(&none).unwrap(), 0.0);
        assert_eq!(coverage(&none).unwrap(), 0.0);
        none.subtasks_total = 0;
        none.targets_total = 0;
        assert_eq!(transport_rate(&none), Err(MetricsError::NoSubtasks));
        assert_eq!(coverage(&none), Err(MetricsError::NoTargets));
        let all = result("1", true, 4, 12);
        assert_eq!(transport_rate(&all).unwrap(), 1.0);
        assert_eq!(coverage(&all).unwrap(), 1.0);
    }

    #[test]
    fn gamma_matches_factorials() {
        let mut fact = 1.0_f64;
        for n in 1..20 {
            assert!((ln_gamma(n as f64) - fact.ln()).abs() < 1e-10, "n={n}");
            fact *= n as f64;
        }
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    }

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(1, b) = 1 - (1-x)^b and I_x(a, 1) = x^a.
        for &x in &[0.01, 0.2, 0.5, 0.77, 0.99] {
            assert!((incomplete_beta(1.0, 3.5, x) - (1.0 - (1.0 - x).powf(3.5))).abs() < 1e-13);
            assert!((incomplete_beta(2.5, 1.0, x) - x.powf(2.5)).abs() < 1e-13);
        }
        assert!((incomplete_beta(4.0, 4.0, 0.5) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn cp_zero_successes_closed_form() {
        let (lo, hi) = clopper_pearson(0, 20, 0.05).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - (1.0 - 0.025_f64.powf(1.0 / 20.0))).abs() < 1e-9);
        assert!((hi - 0.16843).abs() < 1e-4);
    }

    #[test]
    fn cp_all_successes() {
        let (lo, hi) = clopper_pearson(5, 5, 0.05).unwrap();
        assert_eq!(hi, 1.0);
        assert!((lo - 0.025_f64.powf(1.0 / 5.0)).abs() < 1e-9);
        assert!((lo - 0.478).abs() < 1e-3);
    }

    #[test]
    fn cp_matches_binomial_inversion() {
        for (k, n) in [(10, 20), (1, 7), (3, 5), (17, 40), (99, 100)] {
            let (lo, hi) = clopper_pearson(k, n, 0.05).unwrap();
            let (olo, ohi) = cp_by_binomial_sums(k, n, 0.05);
            assert!((lo - olo).abs() < 1e-8, "{k}/{n}: {lo} vs {olo}");
            assert!((hi - ohi).abs() < 1e-8, "{k}/{n}: {hi} vs {ohi}");
        }
        let (lo, hi) = clopper_pearson(10, 20, 0.05).unwrap();
        assert!(lo < 0.5 && 0.5 < hi);
        assert!(((0.5 - lo) - (hi - 0.5)).abs() < 1e-9, "symmetric at k = n/2");
    }

    #[test]
    fn cp_rejects_bad_input() {
        assert!(clopper_pearson(3, 2, 0.05).is_err());
        assert!(clopper_pearson(0, 0, 0.05).is_err());
        assert!(clopper_pearson(1, 2, 1.5).is_err());
    }

    #[test]
    fn aggregate_all_successes() {
        let rs: Vec<_> = (0..5).map(|_| result("4", true, 4, 12)).collect();
        let rep = aggregate(&rs).unwrap();
        assert_eq!(rep.pooled.sr.mean, 1.0);
        assert!((rep.pooled.sr.lower - 0.025_f64.powf(0.2)).abs() < 1e-9);
        for iv in [rep.pooled.tr, rep.pooled.coverage, rep.pooled.balance, rep.pooled.steps] {
            assert_eq!(iv.lower, iv.mean);
            assert_eq!(iv.upper, iv.mean);
        }
        assert_eq!(rep.pooled.steps.mean, 12.0);
    }

    #[test]
    fn aggregate_per_scene_accounting() {
        let rs = vec![
            result("1", true, 4, 10),
            result("1", false, 1, 30),
            result("2", false, 2, 8),
            result("3", true, 4, 20),
        ];
        let rep = aggregate(&rs).unwrap();
        assert_eq!(rep.per_scene.len(), 3);
        assert_eq!(rep.per_scene.iter().map(|r| r.episodes).sum::<usize>(), rep.pooled.episodes);
        assert_eq!(rep.per_scene.iter().map(|r| r.successes).sum::<usize>(), rep.pooled.successes);
        // The failed 8-step episode counts the horizon.
        assert_eq!(rep.per_scene[1].steps.mean, 30.0);
        let tsv = rep.to_tsv();
        assert_eq!(tsv.lines().count(), 5);
        assert!(rep.to_text().contains("scene 2"));
        assert_eq!(aggregate(&[]), Err(MetricsError::Empty));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn quantile_round_trip(a in 0.5f64..500.0, b in 0.5f64..500.0, p in 0.001f64..0.999) {
            let x = beta_quantile(p, a, b);
            prop_assert!((incomplete_beta(a, b, x) - p).abs() < 1e-8);
        }

        #[test]
        fn cp_contains_point_estimate(n in 1u64..300, frac in 0.0f64..=1.0) {
            let k = ((n as f64) * frac).floor() as u64;
            let (lo, hi) = clopper_pearson(k, n, 0.05).unwrap();
            let p = k as f64 / n as f64;
            prop_assert!(lo <= p && p <= hi);
        }

        #[test]
        fn cp_nesting(n in 1u64..200, frac in 0.0f64..=1.0) {
            let k = ((n as f64) * frac).floor() as u64;
            let (lo05, hi05) = clopper_pearson(k, n, 0.05).unwrap();
            let (lo10, hi10) = clopper_pearson(k, n, 0.10).unwrap();
            prop_assert!(lo05 <= lo10 && hi10 <= hi05);
        }

        #[test]
        fn balance_converges_with_scale(s in proptest::collection::vec(1u32..50, 1..6)) {
            let min = *s.iter().min().unwrap() as f64;
            let max = *s.iter().max().unwrap() as f64;
            let mut last = f64::INFINITY;
            for c in [1u32, 2, 10, 100] {
                let scaled: Vec<u32> = s.iter().map(|v| v * c).collect();
                let err = (balance(&scaled).unwrap() - min / max).abs();
                prop_assert!(err <= last);
                last = err;
            }
        }
    }
}
