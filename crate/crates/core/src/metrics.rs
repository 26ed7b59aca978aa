//! Policy evaluation: static baselines, cumulative net fraud savings (CNFS),
//! over/under-alert counts and selection heatmaps.
//!
//! All figures come from the environment's full-information day tallies.
//! False-positive alerts carry no dollar cost; they only show up in alert
//! counts.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dqn::GreedyPolicy;
use crate::env::{AlertEnv, DayGroundTruth, EnvConfig, StepRecord};
use crate::error::{Error, Result};
use crate::money::Money;
use crate::rng::{rng_for, tag};
use crate::synth::{Stream, HOURS_PER_DAY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub day: u32,
    /// Fraud dollars on processed alerts (true positives).
    pub fraud_savings: Money,
    /// Fraud dollars without a processed alert (false negatives).
    pub fraud_losses: Money,
    pub net: Money,
    pub over_alerts: u32,
    pub under_alerts: u32,
    pub dropped: u32,
    pub claim_reported: u32,
    pub false_positive_alerts: u32,
    pub alerts_processed: u32,
}

impl EpisodeMetrics {
    pub fn from_truth(day: u32, t: &DayGroundTruth) -> Self {
        EpisodeMetrics {
            day,
            fraud_savings: t.total_fraud_caught,
            fraud_losses: t.total_fraud_missed,
            net: t.total_fraud_caught - t.total_fraud_missed,
            over_alerts: t.over_alerts,
            under_alerts: t.under_alerts,
            dropped: t.dropped,
            claim_reported: t.claim_reported,
            false_positive_alerts: t.false_positive_alerts,
            alerts_processed: t.alerts_processed,
        }
    }
}

/// A threshold policy to evaluate.
#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    /// The same threshold index every hour.
    Static(usize),
    Greedy(&'a GreedyPolicy),
}

impl Policy<'_> {
    pub fn name(&self) -> String {
        match self {
            Policy::Static(k) => static_name(*k),
            Policy::Greedy(_) => DQN_POLICY.to_string(),
        }
    }
}

pub const DQN_POLICY: &str = "dqn";

pub fn static_name(k: usize) -> String {
    format!("thr{k}")
}

/// Metrics plus the hourly decisions behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRun {
    pub metrics: Vec<EpisodeMetrics>,
    pub actions: Vec<[usize; HOURS_PER_DAY]>,
    pub steps: Vec<StepRecord>,
}

/// Plays every day of `stream` under `policy`. The environment's random
/// draws for day `d` come from `(seed, d)`, so results do not depend on
/// evaluation order.
pub fn run_policy_traced(policy: Policy<'_>, stream: &Stream, env_config: &EnvConfig, seed: u64) -> Result<PolicyRun> {
    let mut env = AlertEnv::new(env_config.clone())?;
    if let Policy::Static(k) = policy {
        if k >= env_config.num_actions() {
            return Err(Error::Action {
                action: k,
                num_actions: env_config.num_actions(),
            });
        }
    }
    let days = stream.days();
    let mut run = PolicyRun {
        metrics: Vec::with_capacity(days.len()),
        actions: Vec::with_capacity(days.len()),
        steps: Vec::with_capacity(days.len() * HOURS_PER_DAY),
    };
    for (day, txns) in days {
        let mut rng = rng_for(seed, &[tag::EVAL, day as u64]);
        let mut state = env.reset(txns)?;
        let mut hours = [0usize; HOURS_PER_DAY];
        for slot in hours.iter_mut() {
            let action = match policy {
                Policy::Static(k) => k,
                Policy::Greedy(g) => g.act_on(&state, env_config)?,
            };
            let hour = state.hour;
            let out = env.step(action, &mut rng)?;
            run.steps.push(StepRecord::new(day, hour, action, &out));
            *slot = action;
            state = out.next_state;
        }
        run.actions.push(hours);
        run.metrics.push(EpisodeMetrics::from_truth(day, &env.day_ground_truth()?));
    }
    Ok(run)
}

pub fn run_policy(policy: Policy<'_>, stream: &Stream, env_config: &EnvConfig, seed: u64) -> Result<Vec<EpisodeMetrics>> {
    Ok(run_policy_traced(policy, stream, env_config, seed)?.metrics)
}

/// Sum of daily net savings over the first `up_to` days.
pub fn cnfs(metrics: &[EpisodeMetrics], up_to: usize) -> Money {
    debug_assert!(up_to <= metrics.len());
    metrics.iter().take(up_to).map(|m| m.net).sum()
}

/// Running CNFS after each day.
pub fn cnfs_series(metrics: &[EpisodeMetrics]) -> Vec<Money> {
    metrics
        .iter()
        .scan(Money::ZERO, |acc, m| {
            *acc += m.net;
            Some(*acc)
        })
        .collect()
}

/// Percentage change of `value` relative to `baseline`.
pub fn relative_improvement(value: f64, baseline: f64) -> Result<f64> {
    if baseline == 0.0 {
        return Err(Error::Undefined("relative improvement against a zero baseline"));
    }
    Ok((value - baseline) / baseline * 100.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverUnder {
    pub over: u64,
    pub under: u64,
    pub sum: u64,
}

pub fn over_under_totals(metrics: &[EpisodeMetrics]) -> OverUnder {
    let over: u64 = metrics.iter().map(|m| m.over_alerts as u64).sum();
    let under: u64 = metrics.iter().map(|m| m.under_alerts as u64).sum();
    OverUnder {
        over,
        under,
        sum: over + under,
    }
}

/// Calendar month of a day index, with day 1 = January 1 and 365-day years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MonthKey {
    /// 0 for the first year of the stream.
    pub year: u32,
    /// 1..=12
    pub month: u8,
}

const MONTH_DAYS: [u32; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];
const MONTH_NAMES: [&str; 12] = ["Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"];

pub fn month_of_day(day: u32) -> MonthKey {
    assert!(day >= 1, "day indices start at 1");
    let year = (day - 1) / 365;
    let mut rem = (day - 1) % 365;
    let mut month = 0;
    while rem >= MONTH_DAYS[month] {
        rem -= MONTH_DAYS[month];
        month += 1;
    }
    MonthKey {
        year,
        month: month as u8 + 1,
    }
}

/// First day index of a calendar month.
pub fn first_day_of(month: MonthKey) -> u32 {
    let before: u32 = MONTH_DAYS[..month.month as usize - 1].iter().sum();
    month.year * 365 + before + 1
}

impl fmt::Display for MonthKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = MONTH_NAMES[self.month as usize - 1];
        if self.year == 0 {
            f.write_str(name)
        } else {
            write!(f, "Y{}-{name}", self.year + 1)
        }
    }
}

/// Months spanned by `metrics`, in day order.
pub fn months(metrics: &[EpisodeMetrics]) -> Vec<MonthKey> {
    let mut out: Vec<MonthKey> = Vec::new();
    for m in metrics {
        let key = month_of_day(m.day);
        if out.last() != Some(&key) {
            out.push(key);
        }
    }
    out
}

/// Net savings accumulated within each calendar month.
pub fn monthly_net(metrics: &[EpisodeMetrics]) -> Vec<(MonthKey, Money)> {
    let mut sums: BTreeMap<MonthKey, Money> = BTreeMap::new();
    for m in metrics {
        *sums.entry(month_of_day(m.day)).or_default() += m.net;
    }
    sums.into_iter().collect()
}

/// CNFS from the first day up to the end of each month.
pub fn monthly_cnfs(metrics: &[EpisodeMetrics]) -> Vec<(MonthKey, Money)> {
    monthly_net(metrics)
        .into_iter()
        .scan(Money::ZERO, |acc, (k, net)| {
            *acc += net;
            Some((k, *acc))
        })
        .collect()
}

/// Over+under alert count from the first day up to the end of each month.
pub fn monthly_over_under(metrics: &[EpisodeMetrics]) -> Vec<(MonthKey, u64)> {
    let mut sums: BTreeMap<MonthKey, u64> = BTreeMap::new();
    for m in metrics {
        *sums.entry(month_of_day(m.day)).or_default() += (m.over_alerts + m.under_alerts) as u64;
    }
    sums.into_iter()
        .scan(0, |acc, (k, v)| {
            *acc += v;
            Some((k, *acc))
        })
        .collect()
}

/// Per month, the index of the static run with the highest within-month net
/// savings; ties go to the lower index. `static_runs[k]` are the metrics of
/// threshold `k` over the same days.
pub fn best_static_from(static_runs: &[Vec<EpisodeMetrics>]) -> Vec<(MonthKey, usize)> {
    let per_threshold: Vec<Vec<(MonthKey, Money)>> = static_runs.iter().map(|r| monthly_net(r)).collect();
    let Some(first) = per_threshold.first() else {
        return Vec::new();
    };
    first
        .iter()
        .enumerate()
        .map(|(i, (month, _))| {
            let mut best = 0;
            for (k, run) in per_threshold.iter().enumerate().skip(1) {
                if run[i].1 > per_threshold[best][i].1 {
                    best = k;
                }
            }
            (*month, best)
        })
        .collect()
}

/// Runs every static threshold of `env_config` over `stream` and returns the
/// monthly winners.
pub fn best_static_by_month(stream: &Stream, env_config: &EnvConfig, seed: u64) -> Result<Vec<(MonthKey, usize)>> {
    if stream.num_days() == 0 {
        return Err(Error::Input("need at least one day of data".into()));
    }
    let runs = (0..env_config.num_actions())
        .map(|k| run_policy(Policy::Static(k), stream, env_config, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(best_static_from(&runs))
}

/// How often each threshold was chosen at each hour.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    num_actions: usize,
    days: usize,
    counts: Vec<[u32; HOURS_PER_DAY]>,
}

impl Heatmap {
    pub fn from_actions(actions: &[[usize; HOURS_PER_DAY]], num_actions: usize) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::Input("heatmap needs at least one day".into()));
        }
        let mut counts = vec![[0u32; HOURS_PER_DAY]; num_actions];
        for day in actions {
            for (h, &a) in day.iter().enumerate() {
                if a >= num_actions {
                    return Err(Error::Action { action: a, num_actions });
                }
                counts[a][h] += 1;
            }
        }
        Ok(Heatmap {
            num_actions,
            days: actions.len(),
            counts,
        })
    }

    pub fn days(&self) -> usize {
        self.days
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn count(&self, hour_index: usize, action: usize) -> u32 {
        self.counts[action][hour_index]
    }

    /// 24 rows (hour 1 first), each a distribution over thresholds.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..HOURS_PER_DAY)
            .map(|h| {
                (0..self.num_actions)
                    .map(|k| self.counts[k][h] as f64 / self.days as f64)
                    .collect()
            })
            .collect()
    }

    /// Mean threshold index chosen at each hour.
    pub fn mean_action(&self) -> Vec<f64> {
        self.rows()
            .iter()
            .map(|row| row.iter().enumerate().map(|(k, p)| k as f64 * p).sum())
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("hour");
        for k in 0..self.num_actions {
            s.push(',');
            s.push_str(&static_name(k));
        }
        s.push('\n');
        for (h, row) in self.rows().iter().enumerate() {
            s.push_str(&(h + 1).to_string());
            for p in row {
                s.push_str(&format!(",{p}"));
            }
            s.push('\n');
        }
        s
    }
}

pub fn policy_heatmap(policy: &GreedyPolicy, stream: &Stream, env_config: &EnvConfig, seed: u64) -> Result<Heatmap> {
    let run = run_policy_traced(Policy::Greedy(policy), stream, env_config, seed)?;
    Heatmap::from_actions(&run.actions, env_config.num_actions())
}

pub const METRICS_HEADER: &str =
    "policy,day,fraud_savings,fraud_losses,net,over_alerts,under_alerts,dropped,claim_reported,false_positive_alerts,alerts_processed";

/// Writes per-day metrics of several named policies into one table.
pub fn write_metrics_csv(path: &Path, runs: &[(String, Vec<EpisodeMetrics>)]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{METRICS_HEADER}").map_err(io)?;
    for (name, metrics) in runs {
        for m in metrics {
            writeln!(
                w,
                "{name},{},{},{},{},{},{},{},{},{},{}",
                m.day,
                m.fraud_savings,
                m.fraud_losses,
                m.net,
                m.over_alerts,
                m.under_alerts,
                m.dropped,
                m.claim_reported,
                m.false_positive_alerts,
                m.alerts_processed
            )
            .map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Reads [`write_metrics_csv`] output, keeping the policies in file order.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<(String, Vec<EpisodeMetrics>)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
    let headers = reader.headers().map_err(|e| Error::format(path, e))?;
    if headers.iter().ne(METRICS_HEADER.split(',')) {
        return Err(Error::format(path, format!("expected header `{METRICS_HEADER}`")));
    }
    let mut out: Vec<(String, Vec<EpisodeMetrics>)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let r = record.map_err(|e| Error::format(path, e))?;
        let bad = |what: &str| Error::format(path, format!("record {}: bad {what}", i + 1));
        let int = |j: usize, what: &str| r[j].parse::<u32>().map_err(|_| bad(what));
        let money = |j: usize, what: &str| r[j].parse::<Money>().map_err(|_| bad(what));
        let m = EpisodeMetrics {
            day: int(1, "day")?,
            fraud_savings: money(2, "fraud_savings")?,
            fraud_losses: money(3, "fraud_losses")?,
            net: money(4, "net")?,
            over_alerts: int(5, "over_alerts")?,
            under_alerts: int(6, "under_alerts")?,
            dropped: int(7, "dropped")?,
            claim_reported: int(8, "claim_reported")?,
            false_positive_alerts: int(9, "false_positive_alerts")?,
            alerts_processed: int(10, "alerts_processed")?,
        };
        match out.last_mut() {
            Some((name, ms)) if name == &r[0] => ms.push(m),
            _ => out.push((r[0].to_string(), vec![m])),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub name: String,
    /// CNFS at the end of each reported month.
    pub monthly_cnfs: Vec<Money>,
    /// Percent change of `monthly_cnfs` against the baseline; `None` where
    /// the baseline is zero.
    pub relative_improvement: Vec<Option<f64>>,
    pub total_cnfs: Money,
    /// Over+under count at the end of each reported month.
    pub monthly_over_under: Vec<u64>,
    pub alerts: OverUnder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub months: Vec<MonthKey>,
    pub baseline: String,
    pub policies: Vec<PolicySummary>,
    /// Winning static threshold index per month.
    pub best_static_by_month: Vec<(MonthKey, usize)>,
    /// Static threshold with the highest CNFS over the whole period.
    pub best_static: Option<String>,
    pub worst_static: Option<String>,
}

impl ComparisonReport {
    /// Builds the report from runs over identical days. Static policies are
    /// recognised by their `thr<k>` names and must appear in index order.
    /// Relative improvements are measured against `baseline`, or against the
    /// worst static threshold when `baseline` is `None`.
    pub fn build(runs: &[(String, Vec<EpisodeMetrics>)], baseline: Option<&str>) -> Result<Self> {
        let (_, first) = runs.first().ok_or_else(|| Error::Input("no policies to compare".into()))?;
        let days: Vec<u32> = first.iter().map(|m| m.day).collect();
        if let Some((name, _)) = runs.iter().find(|(_, r)| !r.iter().map(|m| m.day).eq(days.iter().copied())) {
            return Err(Error::Input(format!("policy `{name}` covers different days")));
        }
        let months = months(first);
        let statics: Vec<&(String, Vec<EpisodeMetrics>)> =
            runs.iter().filter(|(n, _)| n.strip_prefix("thr").is_some_and(|k| k.parse::<usize>().is_ok())).collect();
        let total = |r: &[EpisodeMetrics]| cnfs(r, r.len());
        // Lowest index wins ties for best; highest index wins ties for worst.
        let best_static = statics
            .iter()
            .fold(None::<&(String, Vec<EpisodeMetrics>)>, |best, s| match best {
                Some(b) if total(&b.1) >= total(&s.1) => Some(b),
                _ => Some(s),
            })
            .map(|s| s.0.clone());
        let worst_static = statics
            .iter()
            .fold(None::<&(String, Vec<EpisodeMetrics>)>, |worst, s| match worst {
                Some(w) if total(&w.1) < total(&s.1) => Some(w),
                _ => Some(s),
            })
            .map(|s| s.0.clone());
        let baseline_name = match baseline {
            Some(b) => b.to_string(),
            None => worst_static
                .clone()
                .ok_or_else(|| Error::Input("no static policy to use as baseline".into()))?,
        };
        let baseline_run = runs
            .iter()
            .find(|(n, _)| *n == baseline_name)
            .ok_or_else(|| Error::Input(format!("baseline `{baseline_name}` not among policies")))?;
        let baseline_cnfs: Vec<Money> = monthly_cnfs(&baseline_run.1).into_iter().map(|(_, v)| v).collect();

        let policies = runs
            .iter()
            .map(|(name, r)| {
                let monthly: Vec<Money> = monthly_cnfs(r).into_iter().map(|(_, v)| v).collect();
                let relative_improvement = monthly
                    .iter()
                    .zip(&baseline_cnfs)
                    .map(|(v, b)| relative_improvement(v.dollars(), b.dollars()).ok())
                    .collect();
                PolicySummary {
                    name: name.clone(),
                    total_cnfs: total(r),
                    monthly_cnfs: monthly,
                    relative_improvement,
                    monthly_over_under: monthly_over_under(r).into_iter().map(|(_, v)| v).collect(),
                    alerts: over_under_totals(r),
                }
            })
            .collect();
        let static_metrics: Vec<Vec<EpisodeMetrics>> = statics.iter().map(|s| s.1.clone()).collect();
        Ok(ComparisonReport {
            months,
            baseline: baseline_name,
            policies,
            best_static_by_month: best_static_from(&static_metrics),
            best_static,
            worst_static,
        })
    }

    pub fn policy(&self, name: &str) -> Option<&PolicySummary> {
        self.policies.iter().find(|p| p.name == name)
    }

    /// CNFS per month and relative improvement over the baseline, one row
    /// per policy.
    pub fn cnfs_table(&self) -> String {
        let mut s = String::from("policy");
        for m in &self.months {
            s.push_str(&format!(",cnfs_{m}"));
        }
        for m in &self.months {
            s.push_str(&format!(",rel_{m}"));
        }
        s.push('\n');
        for p in &self.policies {
            s.push_str(&p.name);
            for v in &p.monthly_cnfs {
                s.push_str(&format!(",{v}"));
            }
            for r in &p.relative_improvement {
                match r {
                    Some(r) => s.push_str(&format!(",{r:.2}%")),
                    None => s.push_str(",-"),
                }
            }
            s.push('\n');
        }
        s
    }

    /// Cumulative over+under alert counts, one row per month.
    pub fn alert_table(&self) -> String {
        let mut s = String::from("month");
        for p in &self.policies {
            s.push(',');
            s.push_str(&p.name);
        }
        s.push('\n');
        for (i, m) in self.months.iter().enumerate() {
            s.push_str(&m.to_string());
            for p in &self.policies {
                s.push_str(&format!(",{}", p.monthly_over_under[i]));
            }
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(day: u32, net_cents: i64) -> EpisodeMetrics {
        EpisodeMetrics {
            day,
            fraud_savings: Money::from_cents(net_cents.max(0)),
            fraud_losses: Money::from_cents((-net_cents).max(0)),
            net: Money::from_cents(net_cents),
            over_alerts: 0,
            under_alerts: 0,
            dropped: 0,
            claim_reported: 0,
            false_positive_alerts: 0,
            alerts_processed: 0,
        }
    }

    #[test]
    fn cnfs_examples() {
        let seq = [day(1, 1000), day(2, -500), day(3, 700)];
        assert_eq!(cnfs(&seq, 0), Money::ZERO);
        assert_eq!(cnfs(&seq, 3), Money::from_cents(1200));
        assert_eq!(cnfs_series(&seq), vec![Money::from_cents(1000), Money::from_cents(500), Money::from_cents(1200)]);
    }

    #[test]
    fn relative_improvement_examples() {
        assert_eq!(relative_improvement(5.0, 5.0).unwrap(), 0.0);
        let r = relative_improvement(112_058.71, 81_733.93).unwrap();
        assert_eq!(format!("{r:.2}"), "37.10");
        assert!(matches!(relative_improvement(1.0, 0.0), Err(Error::Undefined(_))));
    }

    #[test]
    fn calendar() {
        assert_eq!(month_of_day(1), MonthKey { year: 0, month: 1 });
        assert_eq!(month_of_day(31), MonthKey { year: 0, month: 1 });
        assert_eq!(month_of_day(32), MonthKey { year: 0, month: 2 });
        assert_eq!(month_of_day(274), MonthKey { year: 0, month: 10 });
        assert_eq!(month_of_day(365), MonthKey { year: 0, month: 12 });
        assert_eq!(month_of_day(366), MonthKey { year: 1, month: 1 });
        assert_eq!(first_day_of(MonthKey { year: 0, month: 10 }), 274);
        assert_eq!(first_day_of(MonthKey { year: 0, month: 3 }), 60);
        assert_eq!(month_of_day(274).to_string(), "Oct");
        assert_eq!(month_of_day(400).to_string(), "Y2-Feb");
        for d in 1..=800 {
            let k = month_of_day(d);
            assert!(first_day_of(k) <= d);
        }
    }

    #[test]
    fn monthly_aggregation() {
        let seq: Vec<_> = (28..=33).map(|d| day(d, 100)).collect();
        let net = monthly_net(&seq);
        assert_eq!(net.len(), 2);
        assert_eq!(net[0].1, Money::from_cents(400));
        assert_eq!(net[1].1, Money::from_cents(200));
        let cum = monthly_cnfs(&seq);
        assert_eq!(cum[1].1, Money::from_cents(600));
    }

    #[test]
    fn best_static_single_threshold() {
        let runs = vec![(1..=90).map(|d| day(d, 5)).collect::<Vec<_>>()];
        let best = best_static_from(&runs);
        assert_eq!(best.len(), 3);
        assert!(best.iter().all(|(_, k)| *k == 0));
    }

    #[test]
    fn best_static_tracks_regime_shift() {
        // Threshold 0 wins January, threshold 1 wins February; ties go low.
        let a: Vec<_> = (1..=59).map(|d| day(d, if d <= 31 { 10 } else { 1 })).collect();
        let b: Vec<_> = (1..=59).map(|d| day(d, if d <= 31 { 1 } else { 10 })).collect();
        let best = best_static_from(&[a.clone(), b]);
        assert_eq!(best.iter().map(|x| x.1).collect::<Vec<_>>(), vec![0, 1]);
        let tie = best_static_from(&[a.clone(), a]);
        assert!(tie.iter().all(|x| x.1 == 0));
    }

    #[test]
    fn heatmap_rows_are_distributions() {
        let actions = vec![[3usize; 24], [3usize; 24], [3usize; 24]];
        let h = Heatmap::from_actions(&actions, 11).unwrap();
        for row in h.rows() {
            assert_eq!(row.len(), 11);
            assert_eq!(row[3], 1.0);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(Heatmap::from_actions(&[], 11).is_err());
        assert!(Heatmap::from_actions(&[[11usize; 24]], 11).is_err());
    }

    #[test]
    fn report_relative_to_self_is_zero() {
        let runs = vec![
            ("thr0".to_string(), (1..=40).map(|d| day(d, 300)).collect::<Vec<_>>()),
            ("thr1".to_string(), (1..=40).map(|d| day(d, 200)).collect::<Vec<_>>()),
            (DQN_POLICY.to_string(), (1..=40).map(|d| day(d, 400)).collect::<Vec<_>>()),
        ];
        let report = ComparisonReport::build(&runs, None).unwrap();
        assert_eq!(report.baseline, "thr1");
        assert_eq!(report.best_static.as_deref(), Some("thr0"));
        assert_eq!(report.worst_static.as_deref(), Some("thr1"));
        let base = report.policy("thr1").unwrap();
        assert!(base.relative_improvement.iter().all(|r| *r == Some(0.0)));
        let dqn = report.policy("dqn").unwrap();
        assert_eq!(dqn.relative_improvement[0], Some(100.0));
        assert_eq!(report.months.len(), 2);
        assert!(report.cnfs_table().starts_with("policy,cnfs_Jan,cnfs_Feb,rel_Jan,rel_Feb\n"));
        assert!(report.alert_table().starts_with("month,thr0,thr1,dqn\n"));
    }

    #[test]
    fn metrics_csv_round_trip() {
        let runs = vec![
            ("thr0".to_string(), vec![day(5, -1234), day(6, 99)]),
            ("dqn".to_string(), vec![day(5, 1), day(6, 0)]),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_metrics_csv(&path, &runs).unwrap();
        assert_eq!(read_metrics_csv(&path).unwrap(), runs);
    }
}
