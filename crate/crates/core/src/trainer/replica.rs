//! Replica workers: each produces a result on its own batch; the caller reduces.

use std::thread;

use crate::error::{Error, Result};

/// Runs `work(r)` for `r in 0..n` concurrently and returns results in replica order.
pub fn run_replicas<T, F>(n: usize, work: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    if n <= 1 {
        return (0..n).map(&work).collect();
    }
    thread::scope(|s| {
        let handles: Vec<_> = (0..n).map(|r| s.spawn({
            let work = &work;
            move || work(r)
        })).collect();
        handles
            .into_iter()
            .map(|h| h.join().map_err(|_| Error::External("replica worker panicked".into()))?)
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_come_back_in_replica_order() {
        assert_eq!(run_replicas(4, |r| Ok(r * 10)).unwrap(), vec![0, 10, 20, 30]);
        assert_eq!(run_replicas(1, Ok).unwrap(), vec![0]);
        assert!(run_replicas(3, |r| if r == 1 { Err(Error::Validation("x".into())) } else { Ok(r) }).is_err());
    }
}
