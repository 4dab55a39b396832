//! Single-slot, latest-wins hand-off between pipeline stages.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

/// Holds at most one value. `put` overwrites; readers remember the sequence
/// number they last saw and learn how many versions they missed.
#[derive(Debug)]
pub struct Mailbox<T> {
    slot: Mutex<Slot<T>>,
    ready: Condvar,
}

#[derive(Debug)]
struct Slot<T> {
    seq: u64,
    value: Option<Arc<T>>,
}

/// A value taken from a [`Mailbox`].
#[derive(Debug)]
pub struct Delivery<T> {
    pub seq: u64,
    pub value: Arc<T>,
    /// Versions overwritten before this reader saw them.
    pub missed: u64,
}

impl<T> Default for Mailbox<T> {
    fn default() -> Self {
        Self {
            slot: Mutex::new(Slot { seq: 0, value: None }),
            ready: Condvar::new(),
        }
    }
}

impl<T> Mailbox<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores `value`, replacing anything unread; returns its sequence number.
    pub fn put(&self, value: T) -> u64 {
        let mut slot = self.slot.lock().expect("mailbox poisoned");
        slot.seq += 1;
        slot.value = Some(Arc::new(value));
        self.ready.notify_all();
        slot.seq
    }

    /// Drops the stored value. Sequence numbers keep increasing.
    pub fn clear(&self) {
        self.slot.lock().expect("mailbox poisoned").value = None;
    }

    /// The current value if it is newer than `seen`.
    pub fn newer_than(&self, seen: u64) -> Option<Delivery<T>> {
        let slot = self.slot.lock().expect("mailbox poisoned");
        Self::deliver(&slot, seen)
    }

    /// Like [`Mailbox::newer_than`] but waits up to `timeout` for a put.
    pub fn wait_newer_than(&self, seen: u64, timeout: Duration) -> Option<Delivery<T>> {
        let slot = self.slot.lock().expect("mailbox poisoned");
        let (slot, _) = self
            .ready
            .wait_timeout_while(slot, timeout, |s| s.seq <= seen || s.value.is_none())
            .expect("mailbox poisoned");
        Self::deliver(&slot, seen)
    }

    fn deliver(slot: &Slot<T>, seen: u64) -> Option<Delivery<T>> {
        match &slot.value {
            Some(v) if slot.seq > seen => Some(Delivery {
                seq: slot.seq,
                value: Arc::clone(v),
                missed: slot.seq - seen - 1,
            }),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latest_wins_and_counts_missed() {
        let m = Mailbox::new();
        assert!(m.newer_than(0).is_none());
        m.put(1);
        m.put(2);
        m.put(3);
        let d = m.newer_than(0).unwrap();
        assert_eq!((*d.value, d.seq, d.missed), (3, 3, 2));
        assert!(m.newer_than(d.seq).is_none());
    }

    #[test]
    fn wait_wakes_on_put() {
        let m = Arc::new(Mailbox::new());
        let writer = Arc::clone(&m);
        let t = std::thread::spawn(move || {
            std::thread::sleep(Duration::from_millis(20));
            writer.put("frame");
        });
        let d = m.wait_newer_than(0, Duration::from_secs(5)).unwrap();
        assert_eq!(*d.value, "frame");
        t.join().unwrap();
    }

    #[test]
    fn wait_times_out() {
        let m: Mailbox<u8> = Mailbox::new();
        assert!(m.wait_newer_than(0, Duration::from_millis(10)).is_none());
    }
}
