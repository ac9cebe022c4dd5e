use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{ChatProvider, ChatRequest, ChatResponse, ProviderError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateLimit {
    pub capacity: u32,
    pub refill_per_second: f64,
}

struct Bucket {
    tokens: f64,
    last_refill: Instant,
    next_ticket: u64,
    now_serving: u64,
}

impl Bucket {
    fn refill(&mut self, limit: &RateLimit) {
        let now = Instant::now();
        let elapsed = now.duration_since(self.last_refill).as_secs_f64();
        self.tokens = (self.tokens + elapsed * limit.refill_per_second).min(limit.capacity as f64);
        self.last_refill = now;
    }
}

/// Token-bucket admission in front of a provider. Callers are admitted in
/// arrival order; a caller that finds the bucket empty waits for a refill.
pub struct RateLimited<P> {
    inner: P,
    limit: RateLimit,
    bucket: Mutex<Bucket>,
    turn: Condvar,
}

pub fn rate_limited<P: ChatProvider>(provider: P, limit: RateLimit) -> RateLimited<P> {
    assert!(limit.capacity >= 1, "capacity must be at least 1");
    assert!(limit.refill_per_second > 0.0, "refill rate must be positive");
    RateLimited {
        inner: provider,
        bucket: Mutex::new(Bucket {
            tokens: limit.capacity as f64,
            last_refill: Instant::now(),
            next_ticket: 0,
            now_serving: 0,
        }),
        limit,
        turn: Condvar::new(),
    }
}

impl<P> RateLimited<P> {
    pub fn inner(&self) -> &P {
        &self.inner
    }

    /// Tokens currently in the bucket, after crediting elapsed time.
    pub fn available_tokens(&self) -> f64 {
        let mut b = self.bucket.lock().expect("bucket poisoned");
        b.refill(&self.limit);
        b.tokens
    }

    /// Blocks until this caller's turn comes and a token is available.
    pub fn acquire(&self) {
        let mut b = self.bucket.lock().expect("bucket poisoned");
        let ticket = b.next_ticket;
        b.next_ticket += 1;
        while b.now_serving != ticket {
            b = self.turn.wait(b).expect("bucket poisoned");
        }
        loop {
            b.refill(&self.limit);
            if b.tokens >= 1.0 {
                b.tokens -= 1.0;
                break;
            }
            let wait = Duration::from_secs_f64((1.0 - b.tokens) / self.limit.refill_per_second);
            b = self.turn.wait_timeout(b, wait).expect("bucket poisoned").0;
        }
        b.now_serving += 1;
        self.turn.notify_all();
    }
}

impl<P: ChatProvider> ChatProvider for RateLimited<P> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        self.acquire();
        self.inner.complete(request)
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}
