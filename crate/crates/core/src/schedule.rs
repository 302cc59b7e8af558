//! Two-source training plan: per-step sample draws, loss weights, learning
//! rate and the synthetic share of the interleaved stream.

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ScheduleError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss: interleaved={interleaved}, pairs={pairs}")]
    NonFiniteLoss { interleaved: f64, pairs: f64 },
    #[error("fraction {0} outside [0, 1]")]
    InvalidFraction(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixConfig {
    pub batch_interleaved: u64,
    pub laion_batch_multiplier: u64,
    pub w_interleaved: f64,
    pub w_pairs: f64,
    pub lr_peak: f64,
    /// Length of the linear warmup. Not pinned by any published value.
    pub warmup_steps: u64,
    /// Carried for downstream trainers; nothing here applies it.
    pub weight_decay_crossattn: f64,
    pub chatgpt_fraction: f64,
    /// Freeze the `<image>`/`<|endofchunk|>` embeddings (metadata only).
    pub freeze_special_embeddings: bool,
}

impl Default for MixConfig {
    fn default() -> Self {
        Self {
            batch_interleaved: 1000,
            laion_batch_multiplier: 2,
            w_interleaved: 1.0,
            w_pairs: 0.2,
            lr_peak: 1e-4,
            warmup_steps: 5000,
            weight_decay_crossattn: 0.1,
            chatgpt_fraction: 0.0,
            freeze_special_embeddings: false,
        }
    }
}

impl MixConfig {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        let bad = |m: String| Err(ScheduleError::InvalidConfig(m));
        if self.batch_interleaved == 0 {
            return bad("batch_interleaved must be at least 1".into());
        }
        if self.laion_batch_multiplier == 0 {
            return bad("laion_batch_multiplier must be at least 1".into());
        }
        if !(self.w_interleaved > 0.0 && self.w_pairs > 0.0) {
            return bad(format!("loss weights must be positive, got {} and {}", self.w_interleaved, self.w_pairs));
        }
        if !(self.lr_peak > 0.0 && self.lr_peak.is_finite()) {
            return bad(format!("lr_peak must be positive, got {}", self.lr_peak));
        }
        if !(0.0..=1.0).contains(&self.chatgpt_fraction) {
            return bad(format!("chatgpt_fraction {} outside [0, 1]", self.chatgpt_fraction));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Draws {
    pub interleaved: u64,
    pub pairs: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub interleaved: f64,
    pub pairs: f64,
}

/// What one optimizer step consumes. Both sources contribute gradients
/// before the step is taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDirective {
    pub step: u64,
    pub lr: f64,
    pub draws: Draws,
    pub loss_weights: LossWeights,
    pub accumulate_within_step: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub total_steps: u64,
    pub budget_interleaved: u64,
    pub budget_pairs: u64,
    pub cfg: MixConfig,
    /// Non-fatal issues, e.g. budgets that disagree with the batch ratio.
    pub warnings: Vec<String>,
}

impl Plan {
    pub fn directive(&self, step: u64) -> Option<StepDirective> {
        if step >= self.total_steps {
            return None;
        }
        let batch = self.cfg.batch_interleaved;
        let interleaved = batch.min(self.budget_interleaved - step * batch);
        Some(StepDirective {
            step,
            lr: lr_at(step, &self.cfg),
            draws: Draws { interleaved, pairs: interleaved * self.cfg.laion_batch_multiplier },
            loss_weights: LossWeights { interleaved: self.cfg.w_interleaved, pairs: self.cfg.w_pairs },
            accumulate_within_step: true,
        })
    }

    /// Lazily generated directives, in step order.
    pub fn directives(&self) -> impl Iterator<Item = StepDirective> + '_ {
        (0..self.total_steps).filter_map(move |s| self.directive(s))
    }
}

pub fn plan(budget_interleaved: u64, budget_pairs: u64, cfg: &MixConfig) -> Result<Plan, ScheduleError> {
    cfg.validate()?;
    let mut warnings = Vec::new();
    let expected_pairs = budget_interleaved.checked_mul(cfg.laion_batch_multiplier);
    if expected_pairs != Some(budget_pairs) {
        let msg = format!(
            "pair budget {budget_pairs} is not {} x interleaved budget {budget_interleaved}",
            cfg.laion_batch_multiplier
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(Plan {
        total_steps: budget_interleaved.div_ceil(cfg.batch_interleaved),
        budget_interleaved,
        budget_pairs,
        cfg: cfg.clone(),
        warnings,
    })
}

/// Linear warmup to `lr_peak`, then constant.
pub fn lr_at(step: u64, cfg: &MixConfig) -> f64 {
    if step < cfg.warmup_steps {
        cfg.lr_peak * (step + 1) as f64 / cfg.warmup_steps as f64
    } else {
        cfg.lr_peak
    }
}

pub fn combined_loss(l_interleaved: f64, l_pairs: f64, cfg: &MixConfig) -> Result<f64, ScheduleError> {
    if !l_interleaved.is_finite() || !l_pairs.is_finite() {
        return Err(ScheduleError::NonFiniteLoss { interleaved: l_interleaved, pairs: l_pairs });
    }
    Ok(cfg.w_interleaved * l_interleaved + cfg.w_pairs * l_pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixCounts {
    pub mmc4: u64,
    pub chatgpt: u64,
}

/// Split the interleaved budget between web documents and synthetic
/// sequences.
pub fn interleaved_mix_counts(budget_interleaved: u64, chatgpt_fraction: f64) -> Result<MixCounts, ScheduleError> {
    if !(0.0..=1.0).contains(&chatgpt_fraction) {
        return Err(ScheduleError::InvalidFraction(chatgpt_fraction));
    }
    let chatgpt = (chatgpt_fraction * budget_interleaved as f64).round() as u64;
    Ok(MixCounts { mmc4: budget_interleaved - chatgpt, chatgpt })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(batch: u64) -> MixConfig {
        MixConfig { batch_interleaved: batch, ..Default::default() }
    }

    #[test]
    fn full_budget_plan() {
        let p = plan(60_000_000, 120_000_000, &cfg(1000)).unwrap();
        assert_eq!(p.total_steps, 60_000);
        assert!(p.warnings.is_empty());
        let d = p.directive(12_345).unwrap();
        assert_eq!((d.draws.interleaved, d.draws.pairs), (1000, 2000));
        assert!(d.accumulate_within_step);
    }

    #[test]
    fn partial_final_step() {
        let p = plan(10, 20, &cfg(3)).unwrap();
        let ds: Vec<_> = p.directives().collect();
        assert_eq!(ds.iter().map(|d| d.draws.interleaved).collect::<Vec<_>>(), vec![3, 3, 3, 1]);
        assert_eq!(ds.iter().map(|d| d.draws.pairs).collect::<Vec<_>>(), vec![6, 6, 6, 2]);
        assert_eq!(ds.iter().map(|d| d.draws.interleaved).sum::<u64>(), 10);
        assert_eq!(ds.iter().map(|d| d.draws.pairs).sum::<u64>(), 20);
        assert_eq!(p.directive(4), None);
    }

    #[test]
    fn mismatched_budget_warns() {
        let p = plan(10, 25, &cfg(3)).unwrap();
        assert_eq!(p.warnings.len(), 1);
    }

    #[test]
    fn zero_batch_rejected() {
        assert!(matches!(plan(10, 20, &cfg(0)), Err(ScheduleError::InvalidConfig(_))));
    }

    #[test]
    fn learning_rate() {
        let c = MixConfig { warmup_steps: 100, ..Default::default() };
        assert!((lr_at(49, &c) - 0.5e-4).abs() < 1e-20);
        assert_eq!(lr_at(100, &c), 1e-4);
        assert_eq!(lr_at(10_000, &c), 1e-4);
        let c0 = MixConfig { warmup_steps: 0, ..Default::default() };
        assert_eq!(lr_at(0, &c0), 1e-4);
        let mut prev = 0.0;
        for s in 0..300 {
            let lr = lr_at(s, &c);
            assert!(lr >= prev && lr <= c.lr_peak);
            prev = lr;
        }
    }

    #[test]
    fn loss_mixing() {
        let c = MixConfig::default();
        assert!((combined_loss(2.0, 5.0, &c).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(combined_loss(0.0, 0.0, &c).unwrap(), 0.0);
        assert!(combined_loss(f64::NAN, 1.0, &c).is_err());
        assert!(combined_loss(1.0, f64::INFINITY, &c).is_err());
        // only positive weights pass validation; a bare (1, 0) config still mixes as expected
        let degenerate = MixConfig { w_pairs: 0.0, ..Default::default() };
        assert_eq!(combined_loss(1.7, 9.0, &degenerate).unwrap(), 1.7);
    }

    #[test]
    fn mix_counts() {
        assert_eq!(interleaved_mix_counts(60_000_000, 0.004).unwrap(), MixCounts { mmc4: 59_760_000, chatgpt: 240_000 });
        assert_eq!(interleaved_mix_counts(1000, 0.0).unwrap(), MixCounts { mmc4: 1000, chatgpt: 0 });
        assert_eq!(interleaved_mix_counts(1000, 1.0).unwrap(), MixCounts { mmc4: 0, chatgpt: 1000 });
        assert!(interleaved_mix_counts(1000, 1.5).is_err());
    }

    #[test]
    fn config_serde_uses_field_names() {
        let json = serde_json::to_value(MixConfig::default()).unwrap();
        for key in ["batch_interleaved", "laion_batch_multiplier", "w_interleaved", "w_pairs", "lr_peak", "warmup_steps", "weight_decay_crossattn", "chatgpt_fraction"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        let partial: MixConfig = serde_json::from_str(r#"{"warmup_steps": 10}"#).unwrap();
        assert_eq!(partial.warmup_steps, 10);
        assert_eq!(partial.w_pairs, 0.2);
    }
}
