use std::sync::{Arc, Mutex};
use std::time::Duration;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ChatProvider, ChatRequest, ChatResponse, ProviderError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Milliseconds.
    pub base_delay_ms: u64,
    pub multiplier: f64,
    pub jitter_seed: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            base_delay_ms: 500,
            multiplier: 2.0,
            jitter_seed: 0,
        }
    }
}

impl RetryPolicy {
    /// Backoff before retrying after the `attempt`-th failure (1-based), without jitter.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = self.multiplier.powi(attempt.saturating_sub(1) as i32);
        Duration::from_secs_f64(self.base_delay_ms as f64 / 1000.0 * factor)
    }
}

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

/// Retries transient failures with exponential backoff and seeded jitter.
pub struct RetryProvider<P> {
    inner: P,
    policy: RetryPolicy,
    rng: Mutex<ChaCha8Rng>,
    sleeper: Sleeper,
}

pub fn with_retry<P: ChatProvider>(provider: P, policy: RetryPolicy) -> RetryProvider<P> {
    assert!(policy.max_attempts >= 1, "max_attempts must be at least 1");
    RetryProvider {
        rng: Mutex::new(ChaCha8Rng::seed_from_u64(policy.jitter_seed)),
        inner: provider,
        policy,
        sleeper: Arc::new(std::thread::sleep),
    }
}

impl<P> RetryProvider<P> {
    /// Replaces `thread::sleep`, e.g. to record delays in tests.
    pub fn with_sleeper(mut self, sleeper: Sleeper) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    fn delay(&self, attempt: u32) -> Duration {
        let base = self.policy.base_delay_ms;
        let jitter_ms = if base == 0 {
            0
        } else {
            self.rng.lock().expect("jitter rng poisoned").gen_range(0..base)
        };
        self.policy.backoff(attempt) + Duration::from_millis(jitter_ms)
    }
}

impl<P: ChatProvider> ChatProvider for RetryProvider<P> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let mut attempt = 1;
        loop {
            match self.inner.complete(request) {
                Err(e) if e.is_transient() && attempt < self.policy.max_attempts => {
                    let delay = self.delay(attempt);
                    warn!(
                        "request {} attempt {attempt} failed ({e}); retrying in {delay:?}",
                        &request.request_id()[..12]
                    );
                    (self.sleeper)(delay);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}
