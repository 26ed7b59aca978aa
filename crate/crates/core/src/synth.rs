//! Synthetic transaction streams.
//!
//! The upstream fraud scorer is not modelled; instead each transaction's
//! score is drawn directly from a label-conditional Beta distribution scaled
//! onto the integer range 1..=99. Volume, fraud rate and amounts are
//! calibrated against published monthly aggregates of a year of card
//! transactions (see [`default_calibration`]).
//!
//! Randomness is split per (day, hour) cell: the cell's transactions depend
//! only on `(seed, day, hour)`, which keeps generation order-independent.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Beta, Distribution, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::money::Money;
use crate::rng::{rng_for, tag};

pub const HOURS_PER_DAY: usize = 24;
pub const MIN_SCORE: u8 = 1;
pub const MAX_SCORE: u8 = 99;

/// Header line of the stream interchange file.
pub const STREAM_HEADER: [&str; 5] = ["day", "hour", "amount", "is_fraud", "score"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    /// 1-based day index.
    pub day: u32,
    /// Hour of day, 1..=24.
    pub hour: u8,
    pub amount: Money,
    pub is_fraud: bool,
    pub score: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalParams {
    pub mu: f64,
    pub sigma: f64,
}

impl LogNormalParams {
    /// Parameters of the lognormal with the given mean and log-scale spread.
    pub fn with_mean(mean: f64, sigma: f64) -> Self {
        LogNormalParams {
            mu: mean.ln() - sigma * sigma / 2.0,
            sigma,
        }
    }

    pub fn mean(&self) -> f64 {
        (self.mu + self.sigma * self.sigma / 2.0).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaParams {
    /// Mean score after scaling onto 1..=99 (ignoring rounding).
    pub fn mean_score(&self) -> f64 {
        1.0 + 98.0 * self.alpha / (self.alpha + self.beta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamConfig {
    pub num_days: u32,
    pub mean_daily_volume: f64,
    /// Share of the daily volume arriving in each hour; entry 0 is hour 1.
    pub hourly_profile: [f64; HOURS_PER_DAY],
    pub fraud_rate: f64,
    pub nonfraud_amount: LogNormalParams,
    pub fraud_amount: LogNormalParams,
    pub nonfraud_score: BetaParams,
    pub fraud_score: BetaParams,
    pub seed: u64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        default_calibration()
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mean_daily_volume.is_finite() && self.mean_daily_volume >= 0.0) {
            return Err(Error::config("mean_daily_volume", "must be finite and non-negative"));
        }
        if !(self.fraud_rate > 0.0 && self.fraud_rate < 1.0) {
            return Err(Error::config("fraud_rate", format!("{} not in (0, 1)", self.fraud_rate)));
        }
        if let Some(h) = self.hourly_profile.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::config(
                "hourly_profile",
                format!("weight for hour {} is negative or not finite", h + 1),
            ));
        }
        let total: f64 = self.hourly_profile.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config("hourly_profile", format!("weights sum to {total}, expected 1")));
        }
        let positive = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(field, format!("{v} must be strictly positive")))
            }
        };
        positive("nonfraud_amount.sigma", self.nonfraud_amount.sigma)?;
        positive("fraud_amount.sigma", self.fraud_amount.sigma)?;
        if !self.nonfraud_amount.mu.is_finite() {
            return Err(Error::config("nonfraud_amount.mu", "must be finite"));
        }
        if !self.fraud_amount.mu.is_finite() {
            return Err(Error::config("fraud_amount.mu", "must be finite"));
        }
        positive("nonfraud_score.alpha", self.nonfraud_score.alpha)?;
        positive("nonfraud_score.beta", self.nonfraud_score.beta)?;
        positive("fraud_score.alpha", self.fraud_score.alpha)?;
        positive("fraud_score.beta", self.fraud_score.beta)?;
        Ok(())
    }
}

/// Diurnal arrival shape: quiet overnight, ramping through the morning,
/// flat through business hours and tapering in the evening.
const HOURLY_WEIGHTS: [f64; HOURS_PER_DAY] = [
    0.6, 0.4, 0.3, 0.3, 0.4, 0.7, 1.5, 2.8, 4.2, 5.4, 6.2, 6.6, //
    6.8, 6.7, 6.5, 6.4, 6.3, 6.2, 5.9, 5.3, 4.4, 3.4, 2.3, 1.4,
];

/// Calibrated stream parameters.
///
/// * Volume: 724,542 transactions over 365 days, i.e. 1985 per day.
/// * Fraud rate: 1.63%.
/// * Amounts: lognormal with log-sd 0.8 and means matching the annual
///   per-transaction averages ($139.125 non-fraud, $227.05 fraud). The
///   log-sd is not published; 0.8 gives a moderately heavy tail.
/// * Scores: non-fraud Beta(2.0, 2.6) and fraud Beta(3.5, 1.6) on 1..=99
///   (means ≈ 43.6 and ≈ 68.3). These are chosen so that at the operating
///   thresholds 56..=66 the expected daily alert volume brackets a
///   500-alert capacity (≈ 575 alerts at 56, ≈ 320 at 66) and roughly a
///   quarter of the fraud scores below the lowest threshold.
/// * Hourly profile: invented diurnal shape, see `HOURLY_WEIGHTS`.
pub fn default_calibration() -> StreamConfig {
    let total: f64 = HOURLY_WEIGHTS.iter().sum();
    let mut hourly_profile = [0.0; HOURS_PER_DAY];
    for (p, w) in hourly_profile.iter_mut().zip(HOURLY_WEIGHTS) {
        *p = w / total;
    }
    StreamConfig {
        num_days: 365,
        mean_daily_volume: 1985.0,
        hourly_profile,
        fraud_rate: 0.0163,
        nonfraud_amount: LogNormalParams::with_mean(100_801_831.58 / 724_542.0, 0.8),
        fraud_amount: LogNormalParams::with_mean(2_674_620.05 / 11_780.0, 0.8),
        nonfraud_score: BetaParams { alpha: 2.0, beta: 2.6 },
        fraud_score: BetaParams { alpha: 3.5, beta: 1.6 },
        seed: 0,
    }
}

fn score_from_unit(x: f64) -> u8 {
    (1.0 + 98.0 * x).round().clamp(MIN_SCORE as f64, MAX_SCORE as f64) as u8
}

/// An ordered run of transactions covering the inclusive day range
/// `first_day..=last_day`. Days without transactions are still part of the
/// range.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    first_day: u32,
    last_day: u32,
    transactions: Vec<Transaction>,
}

impl Stream {
    pub fn new(first_day: u32, last_day: u32, transactions: Vec<Transaction>) -> Result<Self> {
        if first_day == 0 {
            return Err(Error::Range("day indices start at 1".into()));
        }
        let mut prev = (first_day, 1u8);
        for (i, t) in transactions.iter().enumerate() {
            if t.day < first_day || t.day > last_day {
                return Err(Error::Input(format!(
                    "transaction {i} on day {} outside {first_day}..={last_day}",
                    t.day
                )));
            }
            if !(1..=24).contains(&t.hour) {
                return Err(Error::Input(format!("transaction {i} has hour {}", t.hour)));
            }
            if !(MIN_SCORE..=MAX_SCORE).contains(&t.score) {
                return Err(Error::Input(format!("transaction {i} has score {}", t.score)));
            }
            if t.amount <= Money::ZERO {
                return Err(Error::Input(format!("transaction {i} has non-positive amount")));
            }
            if (t.day, t.hour) < prev {
                return Err(Error::Input(format!("transaction {i} is out of (day, hour) order")));
            }
            prev = (t.day, t.hour);
        }
        Ok(Stream {
            first_day,
            last_day,
            transactions,
        })
    }

    pub fn empty() -> Self {
        Stream {
            first_day: 1,
            last_day: 0,
            transactions: Vec::new(),
        }
    }

    pub fn first_day(&self) -> u32 {
        self.first_day
    }

    pub fn last_day(&self) -> u32 {
        self.last_day
    }

    pub fn num_days(&self) -> u32 {
        (self.last_day + 1).saturating_sub(self.first_day)
    }

    pub fn transactions(&self) -> &[Transaction] {
        &self.transactions
    }

    pub fn len(&self) -> usize {
        self.transactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transactions.is_empty()
    }

    /// Every day of the range with its (possibly empty) transactions.
    pub fn days(&self) -> Vec<(u32, &[Transaction])> {
        let mut out = Vec::with_capacity(self.num_days() as usize);
        let mut start = 0;
        for day in self.first_day..=self.last_day {
            let len = self.transactions[start..]
                .iter()
                .take_while(|t| t.day == day)
                .count();
            out.push((day, &self.transactions[start..start + len]));
            start += len;
        }
        out
    }

    /// Sub-stream restricted to `first..=last`, which must lie inside this
    /// stream's range.
    pub fn slice_days(&self, first: u32, last: u32) -> Result<Stream> {
        if first < self.first_day || last > self.last_day || first > last + 1 {
            return Err(Error::Range(format!(
                "days {first}..={last} not within {}..={}",
                self.first_day, self.last_day
            )));
        }
        let lo = self.transactions.partition_point(|t| t.day < first);
        let hi = self.transactions.partition_point(|t| t.day <= last);
        Ok(Stream {
            first_day: first,
            last_day: last,
            transactions: self.transactions[lo..hi].to_vec(),
        })
    }

    /// Splits into a training part `first_day..=train_end_day` and a test
    /// part `train_end_day+1..=test_end_day`.
    pub fn split(&self, train_end_day: u32, test_end_day: u32) -> Result<(Stream, Stream)> {
        if !(self.first_day <= train_end_day && train_end_day < test_end_day && test_end_day <= self.last_day) {
            return Err(Error::Range(format!(
                "split boundaries ({train_end_day}, {test_end_day}) invalid for days {}..={}",
                self.first_day, self.last_day
            )));
        }
        Ok((
            self.slice_days(self.first_day, train_end_day)?,
            self.slice_days(train_end_day + 1, test_end_day)?,
        ))
    }

    pub fn total_fraud(&self) -> Money {
        self.transactions
            .iter()
            .filter(|t| t.is_fraud)
            .map(|t| t.amount)
            .sum()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "{}", STREAM_HEADER.join(",")).map_err(io)?;
        for t in &self.transactions {
            writeln!(w, "{},{},{},{},{}", t.day, t.hour, t.amount, t.is_fraud as u8, t.score).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Reads the interchange format. The day range is taken from the first
    /// and last transaction since the file carries no explicit range.
    pub fn read_csv(path: &Path) -> Result<Stream> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| Error::format(path, e))?;
        let headers = reader.headers().map_err(|e| Error::format(path, e))?;
        if headers.iter().ne(STREAM_HEADER.iter().copied()) {
            return Err(Error::format(
                path,
                format!("expected header `{}`", STREAM_HEADER.join(",")),
            ));
        }
        let mut txns = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::format(path, e))?;
            let bad = |what: &str| Error::format(path, format!("record {}: bad {what}", line + 1));
            let is_fraud = match &record[3] {
                "0" => false,
                "1" => true,
                _ => return Err(bad("is_fraud")),
            };
            txns.push(Transaction {
                day: record[0].parse().map_err(|_| bad("day"))?,
                hour: record[1].parse().map_err(|_| bad("hour"))?,
                amount: record[2].parse().map_err(|_| bad("amount"))?,
                is_fraud,
                score: record[4].parse().map_err(|_| bad("score"))?,
            });
        }
        let (first, last) = match (txns.first(), txns.last()) {
            (Some(a), Some(b)) => (a.day, b.day),
            _ => return Ok(Stream::empty()),
        };
        Stream::new(first, last, txns).map_err(|e| Error::format(path, e))
    }
}

/// Generates the stream for days `1..=num_days`.
pub fn generate_stream(config: &StreamConfig) -> Result<Stream> {
    config.validate()?;
    let nonfraud_amount = LogNormal::new(config.nonfraud_amount.mu, config.nonfraud_amount.sigma)
        .map_err(|e| Error::config("nonfraud_amount", e.to_string()))?;
    let fraud_amount = LogNormal::new(config.fraud_amount.mu, config.fraud_amount.sigma)
        .map_err(|e| Error::config("fraud_amount", e.to_string()))?;
    let nonfraud_score = Beta::new(config.nonfraud_score.alpha, config.nonfraud_score.beta)
        .map_err(|e| Error::config("nonfraud_score", e.to_string()))?;
    let fraud_score = Beta::new(config.fraud_score.alpha, config.fraud_score.beta)
        .map_err(|e| Error::config("fraud_score", e.to_string()))?;

    let expected = config.mean_daily_volume * config.num_days as f64;
    let mut txns = Vec::with_capacity(expected as usize + 1024);
    for day in 1..=config.num_days {
        for (h, share) in config.hourly_profile.iter().enumerate() {
            let hour = h as u8 + 1;
            let mut rng = rng_for(config.seed, &[tag::STREAM, day as u64, hour as u64]);
            let mean = config.mean_daily_volume * share;
            let count = if mean > 0.0 {
                let poisson = Poisson::new(mean).map_err(|e| Error::config("hourly_profile", e.to_string()))?;
                poisson.sample(&mut rng) as u64
            } else {
                0
            };
            for _ in 0..count {
                let is_fraud = rng.random::<f64>() < config.fraud_rate;
                let (amount, unit) = if is_fraud {
                    (fraud_amount.sample(&mut rng), fraud_score.sample(&mut rng))
                } else {
                    (nonfraud_amount.sample(&mut rng), nonfraud_score.sample(&mut rng))
                };
                let amount = Money::from_dollars(amount).max(Money::from_cents(1));
                txns.push(Transaction {
                    day,
                    hour,
                    amount,
                    is_fraud,
                    score: score_from_unit(unit),
                });
            }
        }
    }
    Ok(Stream {
        first_day: 1,
        last_day: config.num_days,
        transactions: txns,
    })
}

/// See [`Stream::split`].
pub fn split_stream(stream: &Stream, train_end_day: u32, test_end_day: u32) -> Result<(Stream, Stream)> {
    stream.split(train_end_day, test_end_day)
}

/// Label-split counts and dollar totals.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StreamTotals {
    pub nonfraud_count: usize,
    pub fraud_count: usize,
    pub nonfraud_amount: Money,
    pub fraud_amount: Money,
}

pub fn totals(txns: &[Transaction]) -> StreamTotals {
    txns.iter().fold(StreamTotals::default(), |mut acc, t| {
        if t.is_fraud {
            acc.fraud_count += 1;
            acc.fraud_amount += t.amount;
        } else {
            acc.nonfraud_count += 1;
            acc.nonfraud_amount += t.amount;
        }
        acc
    })
}
