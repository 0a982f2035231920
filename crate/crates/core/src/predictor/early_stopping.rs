/// Outcome of observing one epoch's validation loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

/// Patience-based stopping on strictly decreasing validation loss.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: Option<usize>,
    epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: None,
            epoch: 0,
        }
    }

    /// Records the loss of the next epoch (epochs count from 1).
    pub fn observe(&mut self, loss: f64) -> Verdict {
        self.epoch += 1;
        if loss < self.best {
            self.best = loss;
            self.best_epoch = Some(self.epoch);
            return Verdict::Improved;
        }
        let since = self.epoch - self.best_epoch.unwrap_or(0);
        if since >= self.patience {
            Verdict::Stop
        } else {
            Verdict::Continue
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }

    pub fn epochs_seen(&self) -> usize {
        self.epoch
    }
}

/// Replays a loss sequence; returns (epoch at which training stops, best epoch).
pub fn replay(losses: &[f64], patience: usize, max_epochs: usize) -> (usize, Option<usize>) {
    let mut es = EarlyStopping::new(patience);
    for &l in losses.iter().take(max_epochs) {
        if es.observe(l) == Verdict::Stop {
            break;
        }
    }
    (es.epochs_seen(), es.best_epoch())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn stops_at_patience_and_remembers_best() {
        let (stop, best) = replay(&[1.0, 0.9, 0.91, 0.92, 0.93, 0.94, 0.95], 5, 20);
        assert_eq!((stop, best), (7, Some(2)));
    }

    #[test]
    fn equal_loss_is_not_an_improvement() {
        assert_eq!(replay(&[1.0, 1.0, 1.0], 2, 20), (3, Some(1)));
    }

    #[test]
    fn max_epochs_caps_training() {
        let losses: Vec<f64> = (0..30).map(|i| 1.0 / (i + 1) as f64).collect();
        assert_eq!(replay(&losses, 5, 20), (20, Some(20)));
    }

    #[test]
    fn nan_never_improves() {
        assert_eq!(replay(&[1.0, f64::NAN, f64::NAN], 2, 20), (3, Some(1)));
    }

    proptest! {
        #[test]
        fn best_epoch_has_minimum_loss(losses in prop::collection::vec(0.0f64..10.0, 1..40), patience in 1usize..6) {
            let (stop, best) = replay(&losses, patience, 20);
            let best = best.unwrap();
            let seen = &losses[..stop];
            let min = seen.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert_eq!(losses[best - 1], min);
            prop_assert_eq!(seen.iter().position(|&l| l == min).unwrap() + 1, best);
            prop_assert!(stop - best <= patience);
        }
    }
}
