//! Capacity-constrained hourly alert environment.
//!
//! One episode is one day of 24 hourly decisions. At each hour the agent
//! picks a score cutoff; every transaction of that hour scoring strictly above
//! it becomes an alert candidate. Candidates are processed in stream order
//! until the daily capacity is used up, after which they are dropped.
//!
//! Two views of the outcome are kept:
//!
//! * the reward view, which only sees fraud alerts resolved within the hour
//!   (a Bernoulli draw per processed fraud alert), and
//! * the ground-truth view ([`DayGroundTruth`]), tallied with full knowledge
//!   of labels and used for evaluation only.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::money::Money;
use crate::synth::{totals, Stream, Transaction, HOURS_PER_DAY, MAX_SCORE, MIN_SCORE};

pub const STATE_DIM: usize = 5;

/// What counts as an over-alert in the day tallies. Under-alerts are always
/// fraud transactions without a processed alert.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverAlertRule {
    /// Processed alerts on non-fraud transactions plus every dropped alert.
    FalsePositivesAndDropped,
    /// Dropped alerts only.
    DroppedOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Alerts that can be processed per day.
    pub c_max: u32,
    /// Candidate score cutoffs, strictly increasing. Action `k` alerts every
    /// transaction scoring above `thresholds[k]`.
    pub thresholds: Vec<u8>,
    /// Dollar normalizer applied to rewards.
    pub money_scale: f64,
    /// Dollar normalizer applied to the S and L state features.
    pub money_scale_state: f64,
    pub p_resolve_within_hour: f64,
    pub p_claim_report: f64,
    /// Count fraud alerts that are processed but not resolved within the
    /// hour towards that hour's reward as well.
    pub reward_unresolved_fraud: bool,
    pub over_alert_rule: OverAlertRule,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            c_max: 500,
            thresholds: (56..=66).collect(),
            money_scale: 10_000.0,
            money_scale_state: 10_000.0,
            p_resolve_within_hour: 0.9,
            p_claim_report: 0.1,
            reward_unresolved_fraud: false,
            over_alert_rule: OverAlertRule::FalsePositivesAndDropped,
        }
    }
}

impl EnvConfig {
    pub fn num_actions(&self) -> usize {
        self.thresholds.len()
    }

    /// Sets both dollar normalizers to the 95th percentile (nearest rank) of
    /// the daily fraud totals in `stream`. Days with no fraud count as zero.
    /// Leaves the config unchanged when every day is fraud-free.
    pub fn scaled_to(mut self, stream: &Stream) -> Self {
        if let Some(scale) = daily_fraud_p95(stream) {
            self.money_scale = scale;
            self.money_scale_state = scale;
        }
        self
    }

    /// Index of the highest cutoff.
    pub fn most_conservative(&self) -> usize {
        self.thresholds.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_max == 0 {
            return Err(Error::config("c_max", "must be positive"));
        }
        if self.thresholds.len() < 2 {
            return Err(Error::config("thresholds", "need at least two thresholds"));
        }
        if self.thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("thresholds", "must be strictly increasing"));
        }
        if self.thresholds.iter().any(|t| !(MIN_SCORE..=MAX_SCORE).contains(t)) {
            return Err(Error::config("thresholds", "each threshold must lie in 1..=99"));
        }
        for (field, v) in [
            ("money_scale", self.money_scale),
            ("money_scale_state", self.money_scale_state),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(field, "must be finite and positive"));
            }
        }
        for (field, p) in [
            ("p_resolve_within_hour", self.p_resolve_within_hour),
            ("p_claim_report", self.p_claim_report),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(field, format!("{p} not in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// 95th percentile (nearest rank) of the per-day fraud dollar totals, or
/// `None` when it is zero.
pub fn daily_fraud_p95(stream: &Stream) -> Option<f64> {
    let mut daily: Vec<Money> = stream.days().iter().map(|(_, t)| totals(t).fraud_amount).collect();
    if daily.is_empty() {
        return None;
    }
    daily.sort_unstable();
    let rank = (daily.len() * 95).div_ceil(100).max(1);
    let p = daily[rank - 1].dollars();
    (p > 0.0).then_some(p)
}

/// The agent's observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvState {
    /// Hour about to be decided, 1..=24.
    pub hour: u8,
    /// Confirmed fraud dollars so far today (S).
    pub savings: Money,
    /// Missed fraud dollars so far today (L).
    pub losses: Money,
    /// Alerts processed so far today (CC).
    pub consumed: u32,
    /// Threshold index applied in the previous hour (T).
    pub threshold: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HourDetail {
    /// Alert candidates, processed or dropped.
    pub alerts_issued: u32,
    pub alerts_dropped: u32,
    /// Fraud dollars on processed alerts, resolved or not.
    pub fraud_caught_amount: Money,
    /// Fraud dollars on processed alerts resolved within the hour.
    pub fraud_confirmed_amount: Money,
    /// Fraud dollars on dropped alerts or below the cutoff.
    pub fraud_missed_amount: Money,
    pub false_positive_alerts: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: EnvState,
    pub reward: f64,
    pub done: bool,
    pub hour_detail: HourDetail,
}

/// Full-information tallies for one finished day.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayGroundTruth {
    pub total_fraud_caught: Money,
    pub total_fraud_missed: Money,
    pub over_alerts: u32,
    pub under_alerts: u32,
    pub dropped: u32,
    pub claim_reported: u32,
    pub false_positive_alerts: u32,
    pub alerts_processed: u32,
}

#[derive(Debug, Clone)]
pub struct AlertEnv {
    config: EnvConfig,
    /// Transactions of the loaded day bucketed by hour, stream order kept.
    hours: Vec<Vec<Transaction>>,
    state: EnvState,
    started: bool,
    done: bool,
    truth: DayGroundTruth,
}

impl AlertEnv {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let state = initial_state(&config);
        Ok(AlertEnv {
            config,
            hours: vec![Vec::new(); HOURS_PER_DAY],
            state,
            started: false,
            done: false,
            truth: DayGroundTruth::default(),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Loads one day and returns the opening state.
    pub fn reset(&mut self, day_transactions: &[Transaction]) -> Result<EnvState> {
        if let Some(first) = day_transactions.first() {
            if let Some(t) = day_transactions.iter().find(|t| t.day != first.day) {
                return Err(Error::Input(format!(
                    "reset expects a single day, got days {} and {}",
                    first.day, t.day
                )));
            }
        }
        if let Some(t) = day_transactions.iter().find(|t| !(1..=24).contains(&t.hour)) {
            return Err(Error::Input(format!("hour {} outside 1..=24", t.hour)));
        }
        for bucket in &mut self.hours {
            bucket.clear();
        }
        for t in day_transactions {
            self.hours[t.hour as usize - 1].push(*t);
        }
        self.state = initial_state(&self.config);
        self.truth = DayGroundTruth::default();
        self.started = true;
        self.done = false;
        Ok(self.state)
    }

    /// Applies threshold `action` to the current hour.
    pub fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> Result<StepOutcome> {
        if !self.started {
            return Err(Error::Lifecycle("step called before reset"));
        }
        if self.done {
            return Err(Error::Lifecycle("step called after the day ended"));
        }
        let k = self.config.num_actions();
        if action >= k {
            return Err(Error::Action {
                action,
                num_actions: k,
            });
        }
        let hour = self.state.hour;
        let cutoff = self.config.thresholds[action];
        let remaining = self.config.c_max - self.state.consumed;
        let mut detail = HourDetail::default();
        let mut processed = 0u32;
        let mut deferred = Money::ZERO;

        for t in &self.hours[hour as usize - 1] {
            let alerted = t.score > cutoff;
            if alerted {
                detail.alerts_issued += 1;
                if processed < remaining {
                    processed += 1;
                    if t.is_fraud {
                        detail.fraud_caught_amount += t.amount;
                        if rng.random::<f64>() < self.config.p_resolve_within_hour {
                            detail.fraud_confirmed_amount += t.amount;
                        } else {
                            deferred += t.amount;
                        }
                    } else {
                        detail.false_positive_alerts += 1;
                    }
                    continue;
                }
                detail.alerts_dropped += 1;
            }
            if t.is_fraud {
                detail.fraud_missed_amount += t.amount;
                self.truth.under_alerts += 1;
                if rng.random::<f64>() < self.config.p_claim_report {
                    self.truth.claim_reported += 1;
                }
            }
        }

        let consumed = self.state.consumed + processed;
        assert!(
            consumed <= self.config.c_max,
            "capacity violated: {consumed} > {}",
            self.config.c_max
        );

        let credited = if self.config.reward_unresolved_fraud {
            detail.fraud_confirmed_amount + deferred
        } else {
            detail.fraud_confirmed_amount
        };
        let reward = (credited - detail.fraud_missed_amount).dollars() * hour as f64 / self.config.money_scale;

        self.truth.total_fraud_caught += detail.fraud_caught_amount;
        self.truth.total_fraud_missed += detail.fraud_missed_amount;
        self.truth.dropped += detail.alerts_dropped;
        self.truth.false_positive_alerts += detail.false_positive_alerts;
        self.truth.alerts_processed += processed;
        self.truth.over_alerts += match self.config.over_alert_rule {
            OverAlertRule::DroppedOnly => detail.alerts_dropped,
            OverAlertRule::FalsePositivesAndDropped => detail.alerts_dropped + detail.false_positive_alerts,
        };

        let done = hour as usize == HOURS_PER_DAY;
        self.state = EnvState {
            hour: if done { hour } else { hour + 1 },
            savings: self.state.savings + credited,
            losses: self.state.losses + detail.fraud_missed_amount,
            consumed,
            threshold: action,
        };
        self.done = done;
        Ok(StepOutcome {
            next_state: self.state,
            reward,
            done,
            hour_detail: detail,
        })
    }

    /// Feature vector in `[0, 1]^5`: hour, S, L, consumed capacity and the
    /// previous threshold index, each scaled by its natural maximum.
    pub fn normalize_state(&self, state: &EnvState) -> [f64; STATE_DIM] {
        normalize_state(state, &self.config)
    }

    pub fn day_ground_truth(&self) -> Result<DayGroundTruth> {
        if !self.done {
            return Err(Error::Lifecycle("ground truth requested before the day ended"));
        }
        Ok(self.truth)
    }
}

fn initial_state(config: &EnvConfig) -> EnvState {
    EnvState {
        hour: 1,
        savings: Money::ZERO,
        losses: Money::ZERO,
        consumed: 0,
        threshold: config.most_conservative(),
    }
}

pub fn normalize_state(state: &EnvState, config: &EnvConfig) -> [f64; STATE_DIM] {
    let scale = config.money_scale_state;
    [
        state.hour as f64 / HOURS_PER_DAY as f64,
        (state.savings.dollars() / scale).clamp(0.0, 1.0),
        (state.losses.dollars() / scale).clamp(0.0, 1.0),
        state.consumed as f64 / config.c_max as f64,
        state.threshold as f64 / (config.num_actions() - 1) as f64,
    ]
}

/// One row of the per-hour audit log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub day: u32,
    pub hour: u8,
    pub action: usize,
    pub alerts: u32,
    pub dropped: u32,
    pub caught: Money,
    pub missed: Money,
    pub reward: f64,
}

impl StepRecord {
    pub fn new(day: u32, hour: u8, action: usize, outcome: &StepOutcome) -> Self {
        StepRecord {
            day,
            hour,
            action,
            alerts: outcome.hour_detail.alerts_issued,
            dropped: outcome.hour_detail.alerts_dropped,
            caught: outcome.hour_detail.fraud_caught_amount,
            missed: outcome.hour_detail.fraud_missed_amount,
            reward: outcome.reward,
        }
    }
}

pub const STEP_LOG_HEADER: &str = "day,hour,action,alerts,dropped,caught,missed,reward";

pub fn write_step_log(path: &Path, records: &[StepRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{STEP_LOG_HEADER}").map_err(io)?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.day, r.hour, r.action, r.alerts, r.dropped, r.caught, r.missed, r.reward
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use rand::SeedableRng;

    fn txn(hour: u8, score: u8, is_fraud: bool, cents: i64) -> Transaction {
        Transaction {
            day: 1,
            hour,
            amount: Money::from_cents(cents),
            is_fraud,
            score,
        }
    }

    fn config(c_max: u32) -> EnvConfig {
        EnvConfig {
            c_max,
            thresholds: vec![50, 60, 70],
            money_scale: 1.0,
            money_scale_state: 1000.0,
            p_resolve_within_hour: 1.0,
            p_claim_report: 0.0,
            ..EnvConfig::default()
        }
    }

    fn run_day(env: &mut AlertEnv, txns: &[Transaction], action: usize) -> Vec<StepOutcome> {
        let mut rng = SimRng::seed_from_u64(0);
        env.reset(txns).unwrap();
        (0..24).map(|_| env.step(action, &mut rng).unwrap()).collect()
    }

    #[test]
    fn reset_opens_the_day() {
        let mut env = AlertEnv::new(config(10)).unwrap();
        let s = env.reset(&[txn(3, 80, true, 100)]).unwrap();
        assert_eq!(s.hour, 1);
        assert_eq!(s.consumed, 0);
        assert_eq!(s.savings, Money::ZERO);
        assert_eq!(s.threshold, 2);
        assert_eq!(env.reset(&[txn(3, 80, true, 100)]).unwrap(), s);
    }

    #[test]
    fn reset_rejects_mixed_days() {
        let mut env = AlertEnv::new(config(10)).unwrap();
        let mut other = txn(2, 10, false, 100);
        other.day = 2;
        assert!(matches!(env.reset(&[txn(1, 10, false, 100), other]), Err(Error::Input(_))));
    }

    #[test]
    fn reward_example() {
        // Hour 5: $1000 caught and confirmed, $200 of fraud below the cutoff.
        let mut env = AlertEnv::new(config(10)).unwrap();
        let day = [txn(5, 90, true, 100_000), txn(5, 40, true, 20_000)];
        let out = run_day(&mut env, &day, 0);
        assert_eq!(out[4].reward, 4000.0);
        assert_eq!(out[4].hour_detail.fraud_missed_amount, Money::from_cents(20_000));
        assert!(out.iter().enumerate().all(|(i, o)| i == 4 || o.reward == 0.0));
    }

    #[test]
    fn empty_day_has_zero_reward() {
        let mut env = AlertEnv::new(config(10)).unwrap();
        let out = run_day(&mut env, &[], 0);
        assert_eq!(out.len(), 24);
        assert!(out.iter().all(|o| o.reward == 0.0));
        assert!(out[23].done && out[..23].iter().all(|o| !o.done));
        assert_eq!(env.day_ground_truth().unwrap(), DayGroundTruth::default());
    }

    #[test]
    fn capacity_exhaustion_drops_in_stream_order() {
        let mut env = AlertEnv::new(config(2)).unwrap();
        let day = [
            txn(1, 90, false, 100),
            txn(1, 90, true, 500),
            txn(1, 90, true, 700),
            txn(2, 90, true, 900),
        ];
        let out = run_day(&mut env, &day, 0);
        assert_eq!(out[0].hour_detail.alerts_issued, 3);
        assert_eq!(out[0].hour_detail.alerts_dropped, 1);
        assert_eq!(out[0].hour_detail.fraud_caught_amount, Money::from_cents(500));
        assert_eq!(out[0].hour_detail.fraud_missed_amount, Money::from_cents(700));
        assert_eq!(out[0].next_state.consumed, 2);
        // Capacity is exhausted: everything later is treated as not alerted.
        assert_eq!(out[1].hour_detail.alerts_issued, 1);
        assert_eq!(out[1].hour_detail.alerts_dropped, 1);
        assert_eq!(out[1].next_state.consumed, 2);
        let truth = env.day_ground_truth().unwrap();
        assert_eq!(truth.dropped, 2);
        assert_eq!(truth.under_alerts, 2);
        assert_eq!(truth.total_fraud_missed, Money::from_cents(1600));
        assert_eq!(truth.alerts_processed, 2);
    }

    #[test]
    fn lifecycle_errors() {
        let mut env = AlertEnv::new(config(2)).unwrap();
        let mut rng = SimRng::seed_from_u64(0);
        assert!(matches!(env.step(0, &mut rng), Err(Error::Lifecycle(_))));
        env.reset(&[]).unwrap();
        assert!(matches!(env.step(3, &mut rng), Err(Error::Action { action: 3, num_actions: 3 })));
        assert!(matches!(env.day_ground_truth(), Err(Error::Lifecycle(_))));
        for _ in 0..24 {
            env.step(1, &mut rng).unwrap();
        }
        assert!(matches!(env.step(1, &mut rng), Err(Error::Lifecycle(_))));
        assert!(env.day_ground_truth().is_ok());
    }

    #[test]
    fn normalization_examples() {
        let mut cfg = EnvConfig::default();
        cfg.money_scale_state = 1000.0;
        let state = EnvState {
            hour: 12,
            savings: Money::from_dollars(250.0),
            losses: Money::from_dollars(5000.0),
            consumed: 250,
            threshold: 10,
        };
        let v = normalize_state(&state, &cfg);
        assert_eq!(v, [0.5, 0.25, 1.0, 0.5, 1.0]);
    }

    #[test]
    fn perfect_detection_misses_nothing() {
        let mut env = AlertEnv::new(config(100)).unwrap();
        let day: Vec<_> = (1..=24).map(|h| txn(h, 99, true, 1000 + h as i64)).collect();
        run_day(&mut env, &day, 0);
        let truth = env.day_ground_truth().unwrap();
        assert_eq!(truth.total_fraud_missed, Money::ZERO);
        assert_eq!(truth.under_alerts, 0);
    }

    #[test]
    fn over_alert_rules() {
        let day = [txn(1, 90, false, 100), txn(1, 90, false, 100), txn(1, 90, true, 100)];
        let mut cfg = config(2);
        cfg.over_alert_rule = OverAlertRule::DroppedOnly;
        let mut env = AlertEnv::new(cfg.clone()).unwrap();
        run_day(&mut env, &day, 0);
        assert_eq!(env.day_ground_truth().unwrap().over_alerts, 1);
        cfg.over_alert_rule = OverAlertRule::FalsePositivesAndDropped;
        let mut env = AlertEnv::new(cfg).unwrap();
        run_day(&mut env, &day, 0);
        assert_eq!(env.day_ground_truth().unwrap().over_alerts, 3);
    }

    #[test]
    fn unresolved_fraud_is_deferred_from_reward() {
        let mut cfg = config(10);
        cfg.p_resolve_within_hour = 0.0;
        let day = [txn(2, 90, true, 1000)];
        let mut env = AlertEnv::new(cfg.clone()).unwrap();
        let out = run_day(&mut env, &day, 0);
        assert_eq!(out[1].reward, 0.0);
        assert_eq!(env.day_ground_truth().unwrap().total_fraud_caught, Money::from_cents(1000));
        cfg.reward_unresolved_fraud = true;
        let mut env = AlertEnv::new(cfg).unwrap();
        let out = run_day(&mut env, &day, 0);
        assert_eq!(out[1].reward, 20.0);
    }

    #[test]
    fn config_validation() {
        let mut c = EnvConfig::default();
        c.thresholds = vec![60, 60];
        assert!(c.validate().is_err());
        c.thresholds = vec![60];
        assert!(c.validate().is_err());
        c = EnvConfig::default();
        c.c_max = 0;
        assert!(c.validate().is_err());
        c = EnvConfig::default();
        c.p_claim_report = 1.5;
        assert!(c.validate().is_err());
    }
}
