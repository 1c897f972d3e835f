//! Monte Carlo validation of solved policies: exponential races among the
//! enabled events until absorption or the horizon.

use super::solve::Policy;
use super::{EventClass, GameModel};
use rand::Rng;
use rand_distr::{Distribution, Exp};

#[derive(Debug, Clone, PartialEq)]
pub struct DesSamples {
    /// Hitting times of episodes that reached the marked set.
    pub times: Vec<f64>,
    /// Episodes cut off at the horizon (or stuck with no enabled event).
    pub censored: usize,
}

impl DesSamples {
    pub fn mean(&self) -> f64 {
        self.times.iter().sum::<f64>() / self.times.len().max(1) as f64
    }

    pub fn std_error(&self) -> f64 {
        let n = self.times.len();
        if n < 2 {
            return f64::INFINITY;
        }
        let mean = self.mean();
        let var = self
            .times
            .iter()
            .map(|t| (t - mean) * (t - mean))
            .sum::<f64>()
            / (n - 1) as f64;
        (var / n as f64).sqrt()
    }
}

/// Runs seeded episodes under a fixed policy. Episode `i` draws from its own
/// stream derived from the master seed, so results do not depend on
/// execution order.
pub fn simulate_des(
    model: &GameModel,
    policy: &Policy,
    master_seed: u64,
    episodes: usize,
    horizon: f64,
) -> DesSamples {
    let mut times = Vec::with_capacity(episodes);
    let mut censored = 0;
    for episode in 0..episodes {
        let mut rng = crate::rng::stream_rng(master_seed, &format!("des-episode/{episode}"));
        let mut state = model.initial;
        let mut t = 0.0;
        loop {
            if model.marked[state] {
                times.push(t);
                break;
            }
            let chosen = policy.chosen(state);
            let enabled: Vec<(usize, usize)> = model.transitions[state]
                .iter()
                .copied()
                .filter(|&(e, _)| {
                    model.events[e].class == EventClass::Uncontrollable || chosen.contains(&e)
                })
                .collect();
            let total: f64 = enabled.iter().map(|&(e, _)| model.events[e].rate).sum();
            if total <= 0.0 {
                censored += 1;
                break;
            }
            t += Exp::new(total).unwrap().sample(&mut rng);
            if t > horizon {
                censored += 1;
                break;
            }
            // Categorical draw proportional to rates.
            let mut pick = rng.random_range(0.0..total);
            let mut next = enabled[enabled.len() - 1].1;
            for &(e, target) in &enabled {
                pick -= model.events[e].rate;
                if pick <= 0.0 {
                    next = target;
                    break;
                }
            }
            state = next;
        }
    }
    DesSamples { times, censored }
}
