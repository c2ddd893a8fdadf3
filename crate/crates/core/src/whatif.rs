//! Zero-shot transformations of a compiled MDP: action penalties, discount
//! overrides and action slip.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::compiler::CoreMdp;
use crate::error::{DacError, Result};
use crate::policy::PolicySettings;
use crate::solver::{solve_parallel, value_iterate, SolveOptions, SolveResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModifierSpec {
    ActionPenalty { action: usize, penalty: f64 },
    DiscountOverride { gamma: f64 },
    Slip { prob: f64 },
}

impl ModifierSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ModifierSpec::ActionPenalty { penalty, .. } if !penalty.is_finite() => {
                Err(DacError::Config(format!("penalty must be finite (got {penalty})")))
            }
            ModifierSpec::DiscountOverride { gamma } if !(0.0..1.0).contains(&gamma) => {
                Err(DacError::Config(format!("gamma must satisfy 0 <= gamma < 1 (got {gamma})")))
            }
            ModifierSpec::Slip { prob } if !(0.0..=1.0).contains(&prob) => {
                Err(DacError::Config(format!("slip probability must lie in [0, 1] (got {prob})")))
            }
            _ => Ok(()),
        }
    }

    /// Parse `action_penalty:<action>:<penalty>`, `discount:<gamma>` or
    /// `slip:<prob>`, resolving action names with `action`.
    pub fn parse_with(text: &str, action: impl Fn(&str) -> Result<usize>) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').map(str::trim).collect();
        let num = |s: &str| s.parse::<f64>().map_err(|_| DacError::Config(format!("bad number '{s}' in modifier '{text}'")));
        let spec = match parts.as_slice() {
            ["action_penalty", a, p] => ModifierSpec::ActionPenalty { action: action(a)?, penalty: num(p)? },
            ["discount", g] | ["discount_override", g] => ModifierSpec::DiscountOverride { gamma: num(g)? },
            ["slip", p] => ModifierSpec::Slip { prob: num(p)? },
            _ => {
                return Err(DacError::Config(format!(
                    "unknown modifier '{text}' (expected action_penalty:A:P, discount:G or slip:P)"
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Apply to `mdp`. Discount overrides only change the stored config.
    pub fn apply(&self, mdp: &CoreMdp) -> Result<CoreMdp> {
        self.validate()?;
        match *self {
            ModifierSpec::ActionPenalty { action, penalty } => apply_action_penalty(mdp, action, penalty),
            ModifierSpec::Slip { prob } => apply_slip(mdp, prob),
            ModifierSpec::DiscountOverride { gamma } => {
                let mut m = mdp.clone();
                m.config.gamma = gamma;
                m.modifiers.push(self.clone());
                Ok(m)
            }
        }
    }
}

impl FromStr for ModifierSpec {
    type Err = DacError;

    /// Actions must be given as indices.
    fn from_str(s: &str) -> Result<Self> {
        Self::parse_with(s, |a| a.parse().map_err(|_| DacError::Config(format!("unknown action '{a}'"))))
    }
}

impl fmt::Display for ModifierSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModifierSpec::ActionPenalty { action, penalty } => write!(f, "action_penalty:{action}:{penalty}"),
            ModifierSpec::DiscountOverride { gamma } => write!(f, "discount:{gamma}"),
            ModifierSpec::Slip { prob } => write!(f, "slip:{prob}"),
        }
    }
}

/// Lower `R[·, a]` by `penalty`; transitions unchanged. The penalty is
/// recorded on the result.
pub fn apply_action_penalty(mdp: &CoreMdp, a: usize, penalty: f64) -> Result<CoreMdp> {
    if a >= mdp.n_actions {
        return Err(DacError::ActionOutOfRange { action: a, action_count: mdp.n_actions });
    }
    if !penalty.is_finite() {
        return Err(DacError::Config(format!("penalty must be finite (got {penalty})")));
    }
    let mut out = mdp.clone();
    if penalty != 0.0 {
        for s in 0..out.n_states {
            out.reward[s * out.n_actions + a] -= penalty;
        }
    }
    out.modifiers.push(ModifierSpec::ActionPenalty { action: a, penalty });
    Ok(out)
}

/// Replace every row by `(1-ρ)·row(s,a) + (ρ/|A|)·Σ_b row(s,b)`, for rewards
/// and transitions. Rows widen to hold the union of successor slots. The slip
/// is recorded on the result.
pub fn apply_slip(mdp: &CoreMdp, rho: f64) -> Result<CoreMdp> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(DacError::Config(format!("slip probability must lie in [0, 1] (got {rho})")));
    }
    if rho == 0.0 {
        let mut out = mdp.clone();
        out.modifiers.push(ModifierSpec::Slip { prob: 0.0 });
        return Ok(out);
    }
    let na = mdp.n_actions;
    let share = rho / na as f64;
    let mut rows: Vec<(Vec<(u32, bool, f64)>, f64)> = Vec::with_capacity(mdp.n_states * na);
    for s in 0..mdp.n_states {
        for a in 0..na {
            let mut slots: Vec<(u32, bool, f64)> = Vec::new();
            let mut reward = 0.0;
            // fixed visiting order, so rho = 1 yields identical rows for all a
            for b in 0..na {
                let coef = share + if b == a { 1.0 - rho } else { 0.0 };
                reward += coef * mdp.reward_at(s, b);
                for j in mdp.row_range(s, b) {
                    let p = mdp.prob[j];
                    if p == 0.0 || coef == 0.0 {
                        continue;
                    }
                    let key = (mdp.succ[j], mdp.terminal[j]);
                    match slots.iter_mut().find(|(i, t, _)| (*i, *t) == key) {
                        Some(slot) => slot.2 += coef * p,
                        None => slots.push((key.0, key.1, coef * p)),
                    }
                }
            }
            let total: f64 = slots.iter().map(|x| x.2).sum();
            slots.iter_mut().for_each(|x| x.2 /= total);
            rows.push((slots, reward));
        }
    }
    let width = rows.iter().map(|(s, _)| s.len()).max().unwrap_or(1).max(1);
    let mut out = CoreMdp {
        width,
        succ: Vec::with_capacity(rows.len() * width),
        prob: Vec::with_capacity(rows.len() * width),
        terminal: Vec::with_capacity(rows.len() * width),
        reward: Vec::with_capacity(rows.len()),
        ..mdp.clone()
    };
    for (slots, r) in rows {
        let pad = slots[0].0;
        for j in 0..width {
            let (i, t, p) = slots.get(j).copied().unwrap_or((pad, false, 0.0));
            out.succ.push(i);
            out.terminal.push(t);
            out.prob.push(p);
        }
        out.reward.push(r);
    }
    out.modifiers.push(ModifierSpec::Slip { prob: rho });
    Ok(out)
}

/// Re-run value iteration with a different discount; the MDP is untouched.
pub fn resolve_with_discount(mdp: &CoreMdp, gamma: f64, opts: &SolveOptions, threads: Option<usize>) -> Result<SolveResult> {
    let opts = SolveOptions { gamma, ..*opts };
    match threads {
        Some(t) => solve_parallel(mdp, &opts, t),
        None => value_iterate(mdp, &opts),
    }
}

/// Policy settings that stay consistent with the modifiers recorded on
/// `mdp`: penalties become action biases, slips compose and mix any
/// earlier biases the same way they mixed the rewards.
pub fn policy_settings(mdp: &CoreMdp) -> PolicySettings {
    let mut settings = PolicySettings::from_config(&mdp.config, mdp.n_actions);
    for m in &mdp.modifiers {
        match *m {
            ModifierSpec::ActionPenalty { action, penalty } => settings.action_bias[action] -= penalty,
            ModifierSpec::Slip { prob } => {
                let bias = &mut settings.action_bias;
                let mean = bias.iter().sum::<f64>() / bias.len() as f64;
                bias.iter_mut().for_each(|b| *b = (1.0 - prob) * *b + prob * mean);
                settings.slip = 1.0 - (1.0 - settings.slip) * (1.0 - prob);
            }
            ModifierSpec::DiscountOverride { .. } => {}
        }
    }
    settings
}
