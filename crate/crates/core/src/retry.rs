use std::future::Future;
use std::time::Duration;

use rand::Rng;

use crate::error::TransportError;

/// Bounded retry with exponential backoff and multiplicative jitter.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Wait before the n-th retry; the last entry repeats if attempts exceed it.
    pub backoff: Vec<Duration>,
    /// Each wait is scaled by a uniform factor in `[1 - jitter, 1 + jitter]`.
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            backoff: vec![
                Duration::from_millis(500),
                Duration::from_secs(1),
                Duration::from_secs(2),
            ],
            jitter: 0.2,
        }
    }
}

impl RetryPolicy {
    /// Same attempt count, millisecond-scale waits. Used against local mocks.
    pub fn fast() -> Self {
        RetryPolicy {
            max_attempts: 3,
            backoff: vec![Duration::from_millis(1), Duration::from_millis(2), Duration::from_millis(4)],
            jitter: 0.2,
        }
    }

    pub fn delay(&self, retry: usize) -> Duration {
        let base = self
            .backoff
            .get(retry)
            .or(self.backoff.last())
            .copied()
            .unwrap_or_default();
        if self.jitter <= 0.0 {
            return base;
        }
        let factor = rand::rng().random_range(1.0 - self.jitter..=1.0 + self.jitter);
        base.mul_f64(factor.max(0.0))
    }
}

pub(crate) enum Failure {
    Retryable(String),
    Fatal(TransportError),
}

impl Failure {
    /// 408 and 429 and server errors are retried; other statuses are final.
    pub(crate) fn from_status(status: reqwest::StatusCode, who: &str) -> Self {
        let msg = format!("{who} returned HTTP {status}");
        let transient = status.is_server_error()
            || status == reqwest::StatusCode::TOO_MANY_REQUESTS
            || status == reqwest::StatusCode::REQUEST_TIMEOUT;
        if transient {
            Failure::Retryable(msg)
        } else {
            Failure::Fatal(TransportError::Protocol(msg))
        }
    }
}

pub(crate) async fn with_retry<T, F, Fut>(policy: &RetryPolicy, mut op: F) -> Result<T, TransportError>
where
    F: FnMut() -> Fut,
    Fut: Future<Output = Result<T, Failure>>,
{
    let attempts = policy.max_attempts.max(1);
    let mut last = String::new();
    for attempt in 0..attempts {
        if attempt > 0 {
            tokio::time::sleep(policy.delay(attempt as usize - 1)).await;
        }
        match op().await {
            Ok(v) => return Ok(v),
            Err(Failure::Fatal(e)) => return Err(e),
            Err(Failure::Retryable(msg)) => {
                tracing::debug!(attempt, %msg, "retryable failure");
                last = msg;
            }
        }
    }
    Err(TransportError::Exhausted { attempts, last })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    #[test]
    fn jitter_stays_in_band() {
        let p = RetryPolicy::default();
        for _ in 0..200 {
            let d = p.delay(0).as_secs_f64();
            assert!((0.4..=0.6).contains(&d), "{d}");
            let d = p.delay(7).as_secs_f64();
            assert!((1.6..=2.4).contains(&d), "{d}");
        }
    }

    #[tokio::test]
    async fn gives_up_after_max_attempts() {
        let calls = AtomicU32::new(0);
        let r: Result<(), _> = with_retry(&RetryPolicy::fast(), || async {
            calls.fetch_add(1, Ordering::SeqCst);
            Err(Failure::Retryable("503".into()))
        })
        .await;
        assert_eq!(calls.load(Ordering::SeqCst), 3);
        assert!(matches!(r, Err(TransportError::Exhausted { attempts: 3, .. })));
    }

    #[tokio::test]
    async fn fatal_is_not_retried() {
        let calls = AtomicU32::new(0);
        let r: Result<(), _> = with_retry(&RetryPolicy::fast(), || async {
            calls.fetch_add(1, Ordering::SeqCst);
            Err(Failure::Fatal(TransportError::Protocol("bad body".into())))
        })
        .await;
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        assert!(r.is_err());
    }
}
