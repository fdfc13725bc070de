//! Bounded drop-oldest queue between assembly and classification.
//!
//! If the classifier falls behind, the oldest waiting window is discarded
//! and counted; the producer never blocks. Capacity is small by design so
//! an overloaded server stays current instead of replaying the past.

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

pub struct Ring<T> {
    inner: Mutex<Inner<T>>,
    ready: Condvar,
    capacity: usize,
}

struct Inner<T> {
    buf: VecDeque<T>,
    closed: bool,
    drops: u64,
}

impl<T> Ring<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1);
        Ring {
            inner: Mutex::new(Inner {
                buf: VecDeque::with_capacity(capacity),
                closed: false,
                drops: 0,
            }),
            ready: Condvar::new(),
            capacity,
        }
    }

    /// Never blocks; returns false when an older item had to go.
    pub fn push(&self, item: T) -> bool {
        let mut inner = self.inner.lock().unwrap();
        if inner.closed {
            return false;
        }
        let mut kept_all = true;
        if inner.buf.len() == self.capacity {
            inner.buf.pop_front();
            inner.drops += 1;
            kept_all = false;
        }
        inner.buf.push_back(item);
        drop(inner);
        self.ready.notify_one();
        kept_all
    }

    /// Block until an item arrives or the ring is closed and drained.
    pub fn pop(&self) -> Option<T> {
        let mut inner = self.inner.lock().unwrap();
        loop {
            if let Some(item) = inner.buf.pop_front() {
                return Some(item);
            }
            if inner.closed {
                return None;
            }
            inner = self.ready.wait(inner).unwrap();
        }
    }

    /// Like [`pop`](Self::pop) but gives up after `timeout`.
    pub fn pop_timeout(&self, timeout: Duration) -> Option<T> {
        let deadline = std::time::Instant::now() + timeout;
        let mut inner = self.inner.lock().unwrap();
        loop {
            if let Some(item) = inner.buf.pop_front() {
                return Some(item);
            }
            if inner.closed {
                return None;
            }
            let now = std::time::Instant::now();
            if now >= deadline {
                return None;
            }
            let (guard, res) = self.ready.wait_timeout(inner, deadline - now).unwrap();
            inner = guard;
            if res.timed_out() && inner.buf.is_empty() {
                return None;
            }
        }
    }

    /// Wake all consumers; subsequent pops drain whatever remains, then
    /// return `None`.
    pub fn close(&self) {
        self.inner.lock().unwrap().closed = true;
        self.ready.notify_all();
    }

    pub fn drops(&self) -> u64 {
        self.inner.lock().unwrap().drops
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;
    use std::time::Instant;

    #[test]
    fn drops_oldest_when_full() {
        let ring = Ring::new(3);
        for i in 1..=5 {
            ring.push(i);
        }
        assert_eq!(ring.drops(), 2);
        assert_eq!(ring.pop(), Some(3));
        assert_eq!(ring.pop(), Some(4));
        assert_eq!(ring.pop(), Some(5));
        assert!(ring.is_empty());
    }

    #[test]
    fn close_drains_then_ends() {
        let ring = Ring::new(4);
        ring.push("a");
        ring.push("b");
        ring.close();
        assert_eq!(ring.pop(), Some("a"));
        assert_eq!(ring.pop(), Some("b"));
        assert_eq!(ring.pop(), None);
        // Pushing after close is refused.
        assert!(!ring.push("c"));
        assert_eq!(ring.pop(), None);
    }

    #[test]
    fn pop_timeout_returns_none_on_quiet_ring() {
        let ring: Ring<u8> = Ring::new(2);
        let start = Instant::now();
        assert_eq!(ring.pop_timeout(Duration::from_millis(40)), None);
        assert!(start.elapsed() >= Duration::from_millis(35));
    }

    #[test]
    fn blocked_pop_wakes_on_push() {
        let ring = Arc::new(Ring::new(2));
        let r2 = Arc::clone(&ring);
        let consumer = std::thread::spawn(move || r2.pop());
        std::thread::sleep(Duration::from_millis(20));
        ring.push(99u32);
        assert_eq!(consumer.join().unwrap(), Some(99));
    }

    #[test]
    fn blocked_pop_wakes_on_close() {
        let ring: Arc<Ring<u8>> = Arc::new(Ring::new(2));
        let r2 = Arc::clone(&ring);
        let consumer = std::thread::spawn(move || r2.pop());
        std::thread::sleep(Duration::from_millis(20));
        ring.close();
        assert_eq!(consumer.join().unwrap(), None);
    }
}
