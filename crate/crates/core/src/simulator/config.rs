//! Simulation parameters and their flat `key = value` text format.

use crate::domain::validate_alpha;
use crate::error::{Error, Result};

/// Every knob of the generative environment.
///
/// The text format uses the field names as keys, one `key = value` per line;
/// `#` starts a comment and `alpha` takes a comma-separated list. `L` is
/// accepted as an alias for `slots`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Taste dimension, including the leading constant coordinate.
    pub d: usize,
    pub n_items: usize,
    /// Items eligible for the distinguished slot (ids `0..pool_size`).
    pub pool_size: usize,
    /// Slots shown per day (L).
    pub slots: usize,
    /// Per-day retention probability.
    pub gamma: f64,
    /// Exploration probability of the logging policy.
    pub epsilon: f64,
    pub k: usize,
    pub alpha: Vec<f64>,
    pub seed: u64,
    /// Hard cap on lifetime in days.
    pub max_days: u32,
    /// Correlation between click appeal and stick appeal across items.
    pub click_stick_corr: f64,
    pub click_scale: f64,
    pub taste_scale: f64,
    pub embedding_scale: f64,
    /// Noise added to the taste vector users expose to learners.
    pub taste_noise: f64,
    /// Noise added to item embeddings exposed to learners.
    pub embedding_noise: f64,
    /// Intercept of every listen logit; keeps organic discovery rare.
    pub base_offset: f64,
    /// Logit lift from a rendered recommendation at the distinguished slot.
    pub boost: f64,
    pub habit_base: f64,
    pub habit_scale: f64,
    /// Weight of user-item taste alignment in the habit gain.
    pub habit_taste: f64,
    /// Standard deviation of the per-user daily shock.
    pub noise_scale: f64,
    pub engagement_min_secs: f64,
    pub engagement_mean_secs: f64,
    /// Logit penalty on every other item when a recommendation is rendered.
    /// Non-zero values break the no-indirect-impact property on purpose.
    pub substitution: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            d: 4,
            n_items: 100,
            pool_size: 50,
            slots: 10,
            gamma: 0.99,
            epsilon: 0.3,
            k: 3,
            alpha: vec![0.5, 0.9, 0.98],
            seed: 42,
            max_days: 365,
            click_stick_corr: -0.95,
            click_scale: 1.0,
            taste_scale: 1.0,
            embedding_scale: 0.15,
            taste_noise: 0.1,
            embedding_noise: 0.1,
            base_offset: -8.0,
            boost: 2.5,
            habit_base: 15.0,
            habit_scale: 1.5,
            habit_taste: 0.0,
            noise_scale: 0.5,
            engagement_min_secs: 30.0,
            engagement_mean_secs: 600.0,
            substitution: 0.0,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
}

impl SimConfig {
    /// Parses the text format on top of the defaults, then validates.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = SimConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "d" => self.d = parse(key, value)?,
            "n_items" => self.n_items = parse(key, value)?,
            "pool_size" => self.pool_size = parse(key, value)?,
            "slots" | "L" => self.slots = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "alpha" => {
                self.alpha = value
                    .split(',')
                    .map(|v| parse(key, v.trim()))
                    .collect::<Result<_>>()?
            }
            "seed" => self.seed = parse(key, value)?,
            "max_days" => self.max_days = parse(key, value)?,
            "click_stick_corr" => self.click_stick_corr = parse(key, value)?,
            "click_scale" => self.click_scale = parse(key, value)?,
            "taste_scale" => self.taste_scale = parse(key, value)?,
            "embedding_scale" => self.embedding_scale = parse(key, value)?,
            "taste_noise" => self.taste_noise = parse(key, value)?,
            "embedding_noise" => self.embedding_noise = parse(key, value)?,
            "base_offset" => self.base_offset = parse(key, value)?,
            "boost" => self.boost = parse(key, value)?,
            "habit_base" => self.habit_base = parse(key, value)?,
            "habit_scale" => self.habit_scale = parse(key, value)?,
            "habit_taste" => self.habit_taste = parse(key, value)?,
            "noise_scale" => self.noise_scale = parse(key, value)?,
            "engagement_min_secs" => self.engagement_min_secs = parse(key, value)?,
            "engagement_mean_secs" => self.engagement_mean_secs = parse(key, value)?,
            "substitution" => self.substitution = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Renders the configuration in the text format, one key per line.
    pub fn to_text(&self) -> String {
        let alpha: Vec<String> = self.alpha.iter().map(|a| a.to_string()).collect();
        let rows: Vec<(&str, String)> = vec![
            ("d", self.d.to_string()),
            ("n_items", self.n_items.to_string()),
            ("pool_size", self.pool_size.to_string()),
            ("slots", self.slots.to_string()),
            ("gamma", self.gamma.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("k", self.k.to_string()),
            ("alpha", alpha.join(",")),
            ("seed", self.seed.to_string()),
            ("max_days", self.max_days.to_string()),
            ("click_stick_corr", self.click_stick_corr.to_string()),
            ("click_scale", self.click_scale.to_string()),
            ("taste_scale", self.taste_scale.to_string()),
            ("embedding_scale", self.embedding_scale.to_string()),
            ("taste_noise", self.taste_noise.to_string()),
            ("embedding_noise", self.embedding_noise.to_string()),
            ("base_offset", self.base_offset.to_string()),
            ("boost", self.boost.to_string()),
            ("habit_base", self.habit_base.to_string()),
            ("habit_scale", self.habit_scale.to_string()),
            ("habit_taste", self.habit_taste.to_string()),
            ("noise_scale", self.noise_scale.to_string()),
            ("engagement_min_secs", self.engagement_min_secs.to_string()),
            ("engagement_mean_secs", self.engagement_mean_secs.to_string()),
            ("substitution", self.substitution.to_string()),
        ];
        rows.into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.d < 2 {
            return fail(format!("d must be at least 2, got {}", self.d));
        }
        if self.n_items < 2 {
            return fail(format!("n_items must be at least 2, got {}", self.n_items));
        }
        if self.pool_size == 0 || self.pool_size >= self.n_items {
            return fail(format!(
                "pool_size must lie in [1, n_items), got {}",
                self.pool_size
            ));
        }
        if self.slots < 2 {
            return fail(format!("slots must be at least 2, got {}", self.slots));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return fail(format!("epsilon must lie in (0, 1], got {}", self.epsilon));
        }
        if self.k == 0 || self.alpha.len() != self.k {
            return fail(format!(
                "alpha has {} entries but k = {}",
                self.alpha.len(),
                self.k
            ));
        }
        validate_alpha(&self.alpha).map_err(|e| Error::Config(e.to_string()))?;
        if self.max_days == 0 {
            return fail("max_days must be positive".into());
        }
        if !(-1.0..=1.0).contains(&self.click_stick_corr) {
            return fail(format!(
                "click_stick_corr must lie in [-1, 1], got {}",
                self.click_stick_corr
            ));
        }
        if !(self.noise_scale > 0.0) {
            return fail("noise_scale must be positive".into());
        }
        if !(self.engagement_min_secs > 0.0 && self.engagement_mean_secs > 0.0) {
            return fail("engagement parameters must be positive".into());
        }
        for (name, v) in [
            ("click_scale", self.click_scale),
            ("taste_scale", self.taste_scale),
            ("embedding_scale", self.embedding_scale),
            ("taste_noise", self.taste_noise),
            ("embedding_noise", self.embedding_noise),
            ("boost", self.boost),
            ("habit_scale", self.habit_scale),
        ] {
            if !(v >= 0.0) {
                return fail(format!("{name} must be non-negative, got {v}"));
            }
        }
        for (name, v) in [
            ("base_offset", self.base_offset),
            ("habit_base", self.habit_base),
            ("habit_taste", self.habit_taste),
            ("substitution", self.substitution),
        ] {
            if !v.is_finite() {
                return fail(format!("{name} must be finite"));
            }
        }
        Ok(())
    }
}
