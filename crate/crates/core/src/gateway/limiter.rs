use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

/// Shared token bucket. `acquire` blocks until a token is available.
#[derive(Debug)]
pub struct TokenBucket {
    capacity: f64,
    refill_per_sec: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(capacity: u32, refill_per_sec: f64) -> Self {
        assert!(
            capacity > 0 && refill_per_sec > 0.0,
            "token bucket needs positive capacity and rate"
        );
        Self {
            capacity: capacity as f64,
            refill_per_sec,
            state: Mutex::new((capacity as f64, Instant::now())),
        }
    }

    /// Requests per minute with a burst equal to one second's worth (at least 1).
    pub fn per_minute(rpm: u32) -> Self {
        let per_sec = rpm as f64 / 60.0;
        Self::new(per_sec.ceil().max(1.0) as u32, per_sec)
    }

    pub fn try_acquire(&self) -> Result<(), Duration> {
        let mut state = self.state.lock().expect("rate limiter poisoned");
        let (tokens, last) = &mut *state;
        let now = Instant::now();
        *tokens = (*tokens + now.duration_since(*last).as_secs_f64() * self.refill_per_sec).min(self.capacity);
        *last = now;
        if *tokens >= 1.0 {
            *tokens -= 1.0;
            Ok(())
        } else {
            Err(Duration::from_secs_f64((1.0 - *tokens) / self.refill_per_sec))
        }
    }

    pub fn acquire(&self) {
        while let Err(wait) = self.try_acquire() {
            thread::sleep(wait);
        }
    }
}
