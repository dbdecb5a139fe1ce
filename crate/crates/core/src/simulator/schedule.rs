use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

/// Which active house executes the next landlord notice. Every policy
/// yields the same odometer and final configuration on shared stacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OrderPolicy {
    /// One global FIFO of active houses; a house that is still active after
    /// its notice goes to the back.
    #[default]
    FifoHouseQueue,
    /// One FIFO per village, villages served in cyclic order.
    VillageRoundRobin,
    /// Smallest `(village, house)` first.
    LowestIndexFirst,
}

impl OrderPolicy {
    pub const ALL: [OrderPolicy; 3] = [
        OrderPolicy::FifoHouseQueue,
        OrderPolicy::VillageRoundRobin,
        OrderPolicy::LowestIndexFirst,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OrderPolicy::FifoHouseQueue => "fifo",
            OrderPolicy::VillageRoundRobin => "round-robin",
            OrderPolicy::LowestIndexFirst => "lowest-index",
        }
    }
}

impl fmt::Display for OrderPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OrderPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fifo" | "fifo-house-queue" => Ok(OrderPolicy::FifoHouseQueue),
            "round-robin" | "village-round-robin" => Ok(OrderPolicy::VillageRoundRobin),
            "lowest-index" | "lowest-index-first" => Ok(OrderPolicy::LowestIndexFirst),
            other => Err(format!(
                "unknown order policy '{other}' (expected fifo, round-robin or lowest-index)"
            )),
        }
    }
}

/// Pending active houses. A house is pushed exactly when it becomes active
/// and popped once per notice, so it is never queued twice.
pub(crate) trait Schedule {
    fn push(&mut self, village: u32, house: u32);
    fn pop(&mut self) -> Option<(u32, u32)>;
}

#[derive(Default)]
pub(crate) struct Fifo(VecDeque<(u32, u32)>);

impl Schedule for Fifo {
    #[inline]
    fn push(&mut self, village: u32, house: u32) {
        self.0.push_back((village, house));
    }

    #[inline]
    fn pop(&mut self) -> Option<(u32, u32)> {
        self.0.pop_front()
    }
}

pub(crate) struct RoundRobin {
    queues: Vec<VecDeque<u32>>,
    cursor: usize,
    pending: usize,
}

impl RoundRobin {
    pub(crate) fn new(villages: usize) -> Self {
        Self {
            queues: vec![VecDeque::new(); villages],
            cursor: 0,
            pending: 0,
        }
    }
}

impl Schedule for RoundRobin {
    fn push(&mut self, village: u32, house: u32) {
        self.queues[village as usize].push_back(house);
        self.pending += 1;
    }

    fn pop(&mut self) -> Option<(u32, u32)> {
        if self.pending == 0 {
            return None;
        }
        loop {
            let x = self.cursor;
            self.cursor = (self.cursor + 1) % self.queues.len();
            if let Some(i) = self.queues[x].pop_front() {
                self.pending -= 1;
                return Some((x as u32, i));
            }
        }
    }
}

#[derive(Default)]
pub(crate) struct LowestIndex(BTreeSet<(u32, u32)>);

impl Schedule for LowestIndex {
    fn push(&mut self, village: u32, house: u32) {
        self.0.insert((village, house));
    }

    fn pop(&mut self) -> Option<(u32, u32)> {
        self.0.pop_first()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_names_round_trip() {
        for p in OrderPolicy::ALL {
            assert_eq!(p.name().parse::<OrderPolicy>().unwrap(), p);
        }
        assert!("random".parse::<OrderPolicy>().is_err());
    }

    #[test]
    fn round_robin_cycles_villages() {
        let mut rr = RoundRobin::new(3);
        rr.push(0, 1);
        rr.push(0, 2);
        rr.push(2, 5);
        assert_eq!(rr.pop(), Some((0, 1)));
        assert_eq!(rr.pop(), Some((2, 5)));
        assert_eq!(rr.pop(), Some((0, 2)));
        assert_eq!(rr.pop(), None);
    }

    #[test]
    fn lowest_index_orders_lexicographically() {
        let mut s = LowestIndex::default();
        s.push(1, 0);
        s.push(0, 9);
        s.push(0, 3);
        assert_eq!(s.pop(), Some((0, 3)));
        assert_eq!(s.pop(), Some((0, 9)));
        assert_eq!(s.pop(), Some((1, 0)));
    }
}
