use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum RingError {
    #[error("ring buffer is closed")]
    Closed,
}

/// How the producer behaves when the buffer is full.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverflowPolicy {
    /// Block until the consumer drains (backpressure). The default.
    Block,
    /// Drop the new element and count it.
    Drop,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RingStats {
    /// Elements offered by the producer (accepted + dropped).
    pub pushed: u64,
    pub dropped: u64,
    pub pending: u64,
}

#[derive(Debug)]
struct RingInner<T> {
    queue: VecDeque<T>,
    pushed: u64,
    dropped: u64,
    closed: bool,
}

/// Bounded FIFO between the capture side (producer) and the serializer
/// (consumer). One producer and one consumer may run concurrently; `pending`
/// never exceeds the configured capacity.
#[derive(Debug)]
pub struct RingBuffer<T> {
    capacity: usize,
    inner: Mutex<RingInner<T>>,
    not_full: Condvar,
    not_empty: Condvar,
}

impl<T> RingBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "ring buffer capacity must be positive");
        Self {
            capacity,
            inner: Mutex::new(RingInner {
                queue: VecDeque::with_capacity(capacity),
                pushed: 0,
                dropped: 0,
                closed: false,
            }),
            not_full: Condvar::new(),
            not_empty: Condvar::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Offers an element under the given policy. `Block` waits for space;
    /// `Drop` counts the element as dropped when full.
    ///
    /// The consumer is only woken once the buffer is half full (or on
    /// close): per-element wakeups would context-switch on every push. The
    /// consumer always drains the remainder at close.
    pub fn push(&self, item: T, policy: OverflowPolicy) -> Result<(), RingError> {
        let mut inner = self.inner.lock().unwrap();
        loop {
            if inner.closed {
                return Err(RingError::Closed);
            }
            if inner.queue.len() < self.capacity {
                inner.pushed += 1;
                inner.queue.push_back(item);
                if inner.queue.len() * 2 >= self.capacity {
                    self.not_empty.notify_one();
                }
                return Ok(());
            }
            match policy {
                OverflowPolicy::Drop => {
                    inner.pushed += 1;
                    inner.dropped += 1;
                    return Ok(());
                }
                OverflowPolicy::Block => {
                    self.not_empty.notify_one();
                    inner = self.not_full.wait(inner).unwrap();
                }
            }
        }
    }

    /// Moves everything currently buffered into `sink`, in FIFO order.
    pub fn drain_into(&self, sink: &mut Vec<T>) -> usize {
        let mut inner = self.inner.lock().unwrap();
        let n = inner.queue.len();
        sink.extend(inner.queue.drain(..));
        if n > 0 {
            self.not_full.notify_all();
        }
        n
    }

    /// Blocks until elements arrive or the buffer closes; returns false when
    /// closed and empty (consumer loop exit condition).
    pub fn recv_batch(&self, sink: &mut Vec<T>) -> bool {
        let mut inner = self.inner.lock().unwrap();
        loop {
            if !inner.queue.is_empty() {
                sink.extend(inner.queue.drain(..));
                self.not_full.notify_all();
                return true;
            }
            if inner.closed {
                return false;
            }
            inner = self.not_empty.wait(inner).unwrap();
        }
    }

    /// Closes the buffer: blocked producers fail, the consumer drains what
    /// is left and stops.
    pub fn close(&self) {
        let mut inner = self.inner.lock().unwrap();
        inner.closed = true;
        self.not_empty.notify_all();
        self.not_full.notify_all();
    }

    pub fn stats(&self) -> RingStats {
        let inner = self.inner.lock().unwrap();
        RingStats {
            pushed: inner.pushed,
            dropped: inner.dropped,
            pending: inner.queue.len() as u64,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;
    use std::time::Duration;

    #[test]
    fn push_then_drain_preserves_fifo() {
        let ring = RingBuffer::new(8);
        for i in 0..5 {
            ring.push(i, OverflowPolicy::Block).unwrap();
        }
        let mut out = Vec::new();
        assert_eq!(ring.drain_into(&mut out), 5);
        assert_eq!(out, vec![0, 1, 2, 3, 4]);
        assert_eq!(ring.drain_into(&mut out), 0);
    }

    #[test]
    fn drop_policy_counts_overflow() {
        let ring = RingBuffer::new(2);
        for i in 0..5 {
            ring.push(i, OverflowPolicy::Drop).unwrap();
        }
        let stats = ring.stats();
        assert_eq!(stats.pushed, 5);
        assert_eq!(stats.dropped, 3);
        assert_eq!(stats.pending, 2);
        let mut out = Vec::new();
        ring.drain_into(&mut out);
        assert_eq!(out, vec![0, 1]);
    }

    #[test]
    fn blocked_producer_resumes_when_consumer_drains() {
        let ring = Arc::new(RingBuffer::new(2));
        let producer = {
            let ring = Arc::clone(&ring);
            std::thread::spawn(move || {
                for i in 0..50u32 {
                    ring.push(i, OverflowPolicy::Block).unwrap();
                }
                ring.close();
            })
        };
        std::thread::sleep(Duration::from_millis(10));
        let mut out = Vec::new();
        let mut batch = Vec::new();
        while ring.recv_batch(&mut batch) {
            out.append(&mut batch);
        }
        producer.join().unwrap();
        assert_eq!(out, (0..50).collect::<Vec<_>>());
        let stats = ring.stats();
        assert_eq!(stats.dropped, 0);
        assert_eq!(stats.pushed, 50);
    }

    #[test]
    fn push_after_close_fails() {
        let ring = RingBuffer::new(1);
        ring.close();
        assert_eq!(ring.push(1, OverflowPolicy::Block), Err(RingError::Closed));
    }
}
