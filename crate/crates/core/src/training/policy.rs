use crate::error::{bail, Result};
use crate::linalg::softmax;

/// `G_t = Σ_{s≥t} γ^{s−t} r_s` over unmasked steps; masked steps get 0.
pub fn discounted_returns(rewards: &[f64], gamma: f64, mask: &[bool]) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&gamma) {
        bail!(Configuration, "gamma must be in [0,1]");
    }
    if rewards.len() != mask.len() {
        bail!(Input, "{} rewards but {} mask entries", rewards.len(), mask.len());
    }
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        if mask[t] {
            acc = rewards[t] + gamma * acc;
            out[t] = acc;
        }
    }
    Ok(out)
}

/// Gradient of `G·log π(a) + c·H(π)` w.r.t. the logits:
/// `G(e_a − π) − c·π ⊙ (log π + H)`.
pub fn reinforce_feedback_step(logits: &[f64], action: usize, ret: f64, entropy_coef: f64) -> Vec<f64> {
    let pi = softmax(logits);
    let ent: f64 = -pi.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>();
    pi.iter()
        .enumerate()
        .map(|(k, &p)| {
            let score = ret * (f64::from(u8::from(k == action)) - p);
            let h = if p > 0.0 { -p * (p.ln() + ent) } else { 0.0 };
            score + entropy_coef * h
        })
        .collect()
}

/// Per-step feedback for an episode; masked steps get zero vectors.
pub fn reinforce_feedback(
    logits: &[Vec<f64>],
    actions: &[usize],
    returns: &[f64],
    mask: &[bool],
    entropy_coef: f64,
) -> Result<Vec<Vec<f64>>> {
    let t = logits.len();
    if actions.len() != t || returns.len() != t || mask.len() != t {
        bail!(Input, "logits, actions, returns and mask must have equal length");
    }
    Ok((0..t)
        .map(|s| {
            if mask[s] {
                reinforce_feedback_step(&logits[s], actions[s], returns[s], entropy_coef)
            } else {
                vec![0.0; logits[s].len()]
            }
        })
        .collect())
}

/// Draw from `softmax(logits)` with one uniform variate.
pub fn sample_action(probs: &[f64], uniform: f64) -> usize {
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if uniform < acc {
            return k;
        }
    }
    probs.len() - 1
}
