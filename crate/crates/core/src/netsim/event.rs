use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Virtual clock in microseconds. Only ever moves forward.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimClock {
    now_us: u64,
}

impl SimClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    /// Advances the clock. Panics when asked to go backwards.
    pub fn advance_to(&mut self, t_us: u64) {
        assert!(
            t_us >= self.now_us,
            "clock moved backwards: {} -> {}",
            self.now_us,
            t_us
        );
        self.now_us = t_us;
    }
}

#[derive(Debug, Clone)]
struct Entry<E> {
    fire_at_us: u64,
    seq: u64,
    payload: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at_us == other.fire_at_us && self.seq == other.seq
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // BinaryHeap is a max-heap; reverse so the earliest (time, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.fire_at_us, other.seq).cmp(&(self.fire_at_us, self.seq))
    }
}

/// Future-event list ordered by `(fire_at_us, insertion sequence)`.
///
/// The queue owns the simulation clock: popping an event advances the clock to
/// the event's timestamp, and scheduling before the current time panics.
#[derive(Debug, Clone)]
pub struct EventQueue<E> {
    heap: BinaryHeap<Entry<E>>,
    next_seq: u64,
    clock: SimClock,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self {
            heap: BinaryHeap::new(),
            next_seq: 0,
            clock: SimClock::new(),
        }
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now_us(&self) -> u64 {
        self.clock.now_us()
    }

    pub fn clock(&self) -> SimClock {
        self.clock
    }

    /// Inserts an event. Scheduling in the past is a programming error.
    pub fn schedule(&mut self, fire_at_us: u64, payload: E) {
        assert!(
            fire_at_us >= self.clock.now_us(),
            "event scheduled in the past: fire_at={} now={}",
            fire_at_us,
            self.clock.now_us()
        );
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry {
            fire_at_us,
            seq,
            payload,
        });
    }

    /// Removes the earliest event and advances the clock to it.
    pub fn pop(&mut self) -> Option<(u64, E)> {
        let entry = self.heap.pop()?;
        self.clock.advance_to(entry.fire_at_us);
        Some((entry.fire_at_us, entry.payload))
    }

    pub fn peek_time(&self) -> Option<u64> {
        self.heap.peek().map(|e| e.fire_at_us)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equal_times_pop_in_insertion_order() {
        let mut q = EventQueue::new();
        q.schedule(5, "a");
        q.schedule(3, "b");
        q.schedule(5, "c");
        let order: Vec<_> = std::iter::from_fn(|| q.pop()).collect();
        assert_eq!(order, vec![(3, "b"), (5, "a"), (5, "c")]);
        assert_eq!(q.now_us(), 5);
    }

    #[test]
    fn event_at_now_is_returned() {
        let mut q = EventQueue::new();
        q.schedule(0, ());
        assert_eq!(q.pop(), Some((0, ())));
        assert!(q.pop().is_none());
    }

    #[test]
    #[should_panic(expected = "scheduled in the past")]
    fn scheduling_in_the_past_panics() {
        let mut q = EventQueue::new();
        q.schedule(10, ());
        q.pop();
        q.schedule(9, ());
    }

    #[test]
    fn random_events_pop_sorted_by_time_then_sequence() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut q = EventQueue::new();
        let mut input = Vec::new();
        for i in 0..1000u64 {
            let t = rng.gen_range(0..200u64);
            q.schedule(t, i);
            input.push((t, i));
        }
        // oracle: stable sort of the input list by time
        input.sort_by_key(|&(t, _)| t);
        let popped: Vec<_> = std::iter::from_fn(|| q.pop()).collect();
        assert_eq!(popped, input);
    }

    #[test]
    #[should_panic(expected = "backwards")]
    fn clock_never_decreases() {
        let mut c = SimClock::new();
        c.advance_to(10);
        c.advance_to(4);
    }
}
