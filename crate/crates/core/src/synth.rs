//! Synthetic corpus generator.
//!
//! Produces a planted-partition account graph whose text carries a class
//! signal: bots and humans draw from distinct pools of indicative tokens
//! mixed into a shared noise vocabulary, and each relation wires
//! intra-class pairs with probability `p_in` and inter-class pairs with
//! `p_out`. Both signals are tunable, so a desk-sized run can exercise the
//! whole pipeline in seconds while staying statistically testable.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, HeteroGraph, Label, UserRecord};
use crate::error::{Error, Result};
use crate::{par, rng};

/// Which rendered sections carry indicative tokens.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SectionMask {
    pub metadata: bool,
    pub description: bool,
    pub tweets: bool,
}

impl Default for SectionMask {
    fn default() -> Self {
        SectionMask { metadata: true, description: true, tweets: true }
    }
}

impl SectionMask {
    fn any(self) -> bool {
        self.metadata || self.description || self.tweets
    }
}

/// Generator knobs. `indicative_ratio` is the odds of drawing an own-class
/// indicative token over an other-class one; the statistical invariant
/// tests recover it from generated corpora.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub n_users: usize,
    /// Fraction of accounts labeled bot.
    pub bot_prior: f64,
    /// Distinct content words, indicative pools included.
    pub vocab_size: usize,
    pub tokens_per_user: usize,
    /// Relation count; 0 yields a graph-less dataset.
    pub relations: usize,
    /// Intra-class edge probability per unordered pair.
    pub p_in: f64,
    /// Inter-class edge probability per unordered pair.
    pub p_out: f64,
    /// Probability a drawn token is own-class indicative.
    pub indicative_rate: f64,
    /// Own-class over other-class indicative odds; must be >= 2.
    pub indicative_ratio: f64,
    /// Fraction of users that keep their label; the rest become context nodes.
    pub label_fraction: f64,
    pub sections: SectionMask,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_users: 2000,
            bot_prior: 0.5,
            vocab_size: 300,
            tokens_per_user: 40,
            relations: 2,
            p_in: 0.05,
            p_out: 0.005,
            indicative_rate: 0.3,
            indicative_ratio: 5.0,
            label_fraction: 1.0,
            sections: SectionMask::default(),
        }
    }
}

/// Indicative pool size per class.
const POOL: usize = 8;

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users < 4 {
            return Err(Error::Config("n_users must be at least 4".into()));
        }
        if !(0.0..=1.0).contains(&self.bot_prior) {
            return Err(Error::Config(format!("bot_prior {} outside [0, 1]", self.bot_prior)));
        }
        for (name, p) in [("p_in", self.p_in), ("p_out", self.p_out)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} {p} outside [0, 1]")));
            }
        }
        if self.vocab_size < 2 * POOL + 2 {
            return Err(Error::Config(format!(
                "vocab_size must be at least {}, got {}",
                2 * POOL + 2,
                self.vocab_size
            )));
        }
        if self.indicative_ratio < 2.0 {
            return Err(Error::Config(format!(
                "indicative_ratio must be at least 2, got {}",
                self.indicative_ratio
            )));
        }
        if !(0.0..=1.0).contains(&self.label_fraction) {
            return Err(Error::Config("label_fraction outside [0, 1]".into()));
        }
        let cross = self.indicative_rate / self.indicative_ratio;
        if self.indicative_rate + cross > 1.0 || self.indicative_rate < 0.0 {
            return Err(Error::Config("indicative_rate leaves no room for noise tokens".into()));
        }
        if !self.sections.any() {
            return Err(Error::Config("at least one section must carry tokens".into()));
        }
        Ok(())
    }
}

fn word(idx: usize) -> String {
    format!("w{idx:03}")
}

/// Draws one content token for a user of class `label`.
fn draw_token<R: Rng>(cfg: &SyntheticConfig, label: Label, rng: &mut R) -> String {
    let own_start = match label {
        Label::Bot => 0,
        Label::Human => POOL,
    };
    let other_start = POOL - own_start; // the opposite pool
    let cross_rate = cfg.indicative_rate / cfg.indicative_ratio;
    let r: f64 = rng.gen();
    let idx = if r < cfg.indicative_rate {
        own_start + rng.gen_range(0..POOL)
    } else if r < cfg.indicative_rate + cross_rate {
        other_start + rng.gen_range(0..POOL)
    } else {
        2 * POOL + rng.gen_range(0..cfg.vocab_size - 2 * POOL)
    };
    word(idx)
}

/// Splits the token budget over enabled sections (metadata : description :
/// tweets at 1 : 1.5 : 2.5), remainder to the last enabled section.
fn section_budgets(cfg: &SyntheticConfig) -> (usize, usize, usize) {
    let weights = [
        if cfg.sections.metadata { 2.0 } else { 0.0 },
        if cfg.sections.description { 3.0 } else { 0.0 },
        if cfg.sections.tweets { 5.0 } else { 0.0 },
    ];
    let total: f64 = weights.iter().sum();
    let mut out = [0usize; 3];
    let mut assigned = 0;
    for i in 0..3 {
        out[i] = (cfg.tokens_per_user as f64 * weights[i] / total).floor() as usize;
        assigned += out[i];
    }
    let last = (0..3).rev().find(|&i| weights[i] > 0.0).unwrap();
    out[last] += cfg.tokens_per_user - assigned;
    (out[0], out[1], out[2])
}

fn make_record(cfg: &SyntheticConfig, seed: u64, index: usize, label: Label, keep_label: bool) -> UserRecord {
    let mut rng = rng::stream(seed, "synth_user", index as u64);
    let (n_meta, n_desc, n_tweet) = section_budgets(cfg);

    let draw_many = |n: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<String> {
        (0..n).map(|_| draw_token(cfg, label, rng)).collect()
    };

    let interests = draw_many(n_meta, &mut rng).join(" ");
    let description = draw_many(n_desc, &mut rng).join(" ");

    let mut tweets = Vec::new();
    let mut remaining = n_tweet;
    while remaining > 0 {
        let take = remaining.min(5);
        let mut parts = draw_many(take, &mut rng);
        // occasional raw hashtags, mentions, and links exercise denoising
        match rng.gen_range(0..12u32) {
            0 => parts.push(format!("https://t.co/{}", rng.gen_range(1000..9999))),
            1 => parts.push(format!("@friend{}", rng.gen_range(0..50))),
            2 => parts.push(format!("#{}", word(2 * POOL + rng.gen_range(0..cfg.vocab_size - 2 * POOL)))),
            _ => {}
        }
        tweets.push(parts.join(" "));
        remaining -= take;
    }

    let metadata = vec![
        ("followers".to_string(), rng.gen_range(0..20000u32).to_string()),
        ("following".to_string(), rng.gen_range(0..5000u32).to_string()),
        ("active_years".to_string(), rng.gen_range(0..15u32).to_string()),
        ("interests".to_string(), interests),
    ];

    UserRecord {
        user_id: format!("u{index:06}"),
        metadata,
        description,
        tweets,
        label: keep_label.then_some(label),
    }
}

/// Generates a dataset; identical `cfg` and `seed` give identical output.
pub fn generate_synthetic(cfg: &SyntheticConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let n = cfg.n_users;

    // exact class counts, assignment shuffled by seed
    let n_bot = (cfg.bot_prior * n as f64).round() as usize;
    let mut labels: Vec<Label> = (0..n)
        .map(|i| if i < n_bot { Label::Bot } else { Label::Human })
        .collect();
    labels.shuffle(&mut rng::stream(seed, "synth_labels", 0));

    let keep_label: Vec<bool> = if cfg.label_fraction >= 1.0 {
        vec![true; n]
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::stream(seed, "synth_mask", 0));
        let k = (cfg.label_fraction * n as f64).round() as usize;
        let mut keep = vec![false; n];
        for &i in order.iter().take(k) {
            keep[i] = true;
        }
        keep
    };

    let records = par::map_indexed(n, |i| make_record(cfg, seed, i, labels[i], keep_label[i]));

    let graph = if cfg.relations == 0 {
        None
    } else {
        let mut relations = BTreeMap::new();
        for r in 0..cfg.relations {
            // per-source streams keep edge sampling parallel and reproducible
            let rows = par::map_indexed(n, |i| {
                let mut rng = rng::stream(seed, &format!("synth_edges_{r}"), i as u64);
                let mut out = Vec::new();
                for j in (i + 1)..n {
                    let p = if labels[i] == labels[j] { cfg.p_in } else { cfg.p_out };
                    if rng.gen::<f64>() < p {
                        out.push((i, j));
                    }
                }
                out
            });
            let mut edges = Vec::new();
            for row in rows {
                for (i, j) in row {
                    edges.push((i, j));
                    edges.push((j, i));
                }
            }
            relations.insert(format!("rel_{r}"), edges);
        }
        Some(HeteroGraph { relations })
    };

    let dataset = Dataset {
        name: "synthetic".to_string(),
        records,
        graph,
        schema: vec![
            "followers".into(),
            "following".into(),
            "active_years".into(),
            "interests".into(),
        ],
    };
    dataset.validate()?;
    Ok(dataset)
}
