use serde::{Deserialize, Serialize};

/// Stops after `patience` consecutive epochs without a strictly lower loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub patience: u32,
    pub best: Option<f64>,
    pub since_improvement: u32,
}

impl EarlyStop {
    pub fn new(patience: u32) -> Self {
        Self { patience, best: None, since_improvement: 0 }
    }

    /// Records one epoch's loss; returns `(improved, should_stop)`.
    pub fn observe(&mut self, loss: f64) -> (bool, bool) {
        let improved = match self.best {
            None => true,
            Some(b) => loss < b,
        };
        if improved {
            self.best = Some(loss);
            self.since_improvement = 0;
        } else {
            self.since_improvement += 1;
        }
        (improved, self.since_improvement >= self.patience)
    }
}

/// Number of epochs run on a fixed loss sequence before stopping.
pub fn epochs_until_stop(losses: &[f64], patience: u32, max_epochs: usize) -> usize {
    let mut es = EarlyStop::new(patience);
    for (i, &l) in losses.iter().take(max_epochs).enumerate() {
        if es.observe(l).1 {
            return i + 1;
        }
    }
    losses.len().min(max_epochs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patience_arithmetic() {
        assert_eq!(epochs_until_stop(&[5.0, 4.0, 4.0, 4.0, 4.0, 4.0, 4.0], 4, 100), 6);
        assert_eq!(epochs_until_stop(&[5.0, 4.0, 3.0, 2.0], 4, 100), 4);
        assert_eq!(epochs_until_stop(&[5.0, 6.0, 7.0, 8.0, 9.0], 1, 100), 2);
        assert_eq!(epochs_until_stop(&[5.0, 5.0, 5.0, 5.0, 5.0], 4, 1), 1);
    }
}
