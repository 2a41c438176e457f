use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StLassoConfig {
    /// Threshold on physical-scale coefficients.
    pub tau: f64,
    pub rounds_max: usize,
}

impl Default for StLassoConfig {
    fn default() -> Self {
        StLassoConfig {
            tau: 0.2,
            rounds_max: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryRound {
    pub round: usize,
    pub active: Vec<String>,
    pub theta: Vec<f64>,
    pub loss: f64,
    pub dropped: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryState {
    /// Surviving candidate indices.
    pub active: Vec<usize>,
    /// Coefficients on `active` after the final unpenalized pass.
    pub theta: Vec<f64>,
    pub tau: f64,
    pub rounds: usize,
    pub history: Vec<DiscoveryRound>,
    pub final_loss: f64,
}

/// Sequential thresholding around a penalized solver.
///
/// `round(r, active)` solves one penalized problem on the active candidates
/// and returns `(θ, loss)`; `refit(active)` is the final unpenalized pass.
pub fn st_lasso<R, F>(names: &[String], cfg: &StLassoConfig, mut round: R, refit: F) -> Result<DiscoveryState>
where
    R: FnMut(usize, &[usize]) -> Result<(Vec<f64>, f64)>,
    F: FnOnce(&[usize]) -> Result<(Vec<f64>, f64)>,
{
    if !(cfg.tau >= 0.0) {
        return Err(Error::Config("threshold must be non-negative".into()));
    }
    let label = |idx: &[usize]| idx.iter().map(|&i| names[i].clone()).collect::<Vec<_>>();
    let mut active: Vec<usize> = (0..names.len()).collect();
    let mut history = Vec::new();
    let mut rounds = 0;
    while rounds < cfg.rounds_max {
        let (theta, loss) = round(rounds, &active)?;
        rounds += 1;
        let keep: Vec<usize> = active
            .iter()
            .zip(&theta)
            .filter(|(_, &t)| t != 0.0 && t.abs() >= cfg.tau)
            .map(|(&i, _)| i)
            .collect();
        let dropped: Vec<usize> = active.iter().copied().filter(|i| !keep.contains(i)).collect();
        history.push(DiscoveryRound {
            round: rounds,
            active: label(&active),
            theta,
            loss,
            dropped: label(&dropped),
        });
        if keep.is_empty() {
            return Err(Error::DiscoveryFailed {
                last_support: label(&active),
            });
        }
        let stable = dropped.is_empty();
        active = keep;
        if stable {
            break;
        }
    }
    let (theta, final_loss) = refit(&active)?;
    Ok(DiscoveryState {
        active,
        theta,
        tau: cfg.tau,
        rounds,
        history,
        final_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn zero_threshold_keeps_nonzeros() {
        let cfg = StLassoConfig { tau: 0.0, rounds_max: 1 };
        let st = st_lasso(
            &names(4),
            &cfg,
            |_, a| Ok((a.iter().map(|&i| if i == 2 { 0.0 } else { 0.1 }).collect(), 0.0)),
            |a| Ok((vec![1.0; a.len()], 0.0)),
        )
        .unwrap();
        assert_eq!(st.active, vec![0, 1, 3]);
    }

    #[test]
    fn shrinks_until_stable() {
        // coefficients fall as the support shrinks: small ones drop one by one
        let truth = [1.0, 0.5, 0.15, 0.05, 0.3];
        let cfg = StLassoConfig { tau: 0.2, rounds_max: 100 };
        let mut sizes = vec![];
        let st = st_lasso(
            &names(5),
            &cfg,
            |_, a| {
                sizes.push(a.len());
                Ok((a.iter().map(|&i| truth[i] * (0.6 + 0.1 * a.len() as f64)).collect(), 0.0))
            },
            |a| Ok((a.iter().map(|&i| truth[i]).collect(), 0.0)),
        )
        .unwrap();
        assert!(sizes.windows(2).all(|w| w[1] <= w[0]));
        assert!(st.rounds <= 5);
        assert_eq!(st.active, vec![0, 1, 4]);
        assert_eq!(st.theta, vec![1.0, 0.5, 0.3]);
    }

    #[test]
    fn empty_support_fails() {
        let cfg = StLassoConfig { tau: 10.0, rounds_max: 5 };
        let r = st_lasso(&names(3), &cfg, |_, a| Ok((vec![1.0; a.len()], 0.0)), |a| Ok((vec![0.0; a.len()], 0.0)));
        match r {
            Err(Error::DiscoveryFailed { last_support }) => assert_eq!(last_support.len(), 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
