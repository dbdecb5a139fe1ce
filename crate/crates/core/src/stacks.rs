//! Instruction stacks: airplane tickets, taxi tickets and landlord notices.
//!
//! Every stack is an independent random stream keyed by its identity
//! `(kind, village, house)` mixed into the master seed. Instruction `j` of a
//! stack is a pure function of `(key, j)`, so two sources built from the same
//! seed agree on every instruction no matter in which order they are
//! queried. Realized values are memoized, which lets the full stabilization
//! and the single-loop evaluation read the very same instructions.
//!
//! Instruction indices are 1-based, houses are numbered `1..=n`.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::model::ModelParams;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

const TAG_AIRPLANE: u64 = 0xA1;
const TAG_TAXI: u64 = 0x7A;
const TAG_LANDLORD: u64 = 0x1D;
const TAG_AUX: u64 = 0xC3;

/// Stored airplane value for the graveyard; outside every village index.
const GRAVEYARD: u32 = u32::MAX;

/// SplitMix64 output function.
#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit key of a stream identity.
#[inline]
pub(crate) fn stream_key(master: u64, tag: u64, a: u64, b: u64) -> u64 {
    let mut h = mix64(master.wrapping_add(GOLDEN));
    h = mix64(h ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    h = mix64(h ^ a.wrapping_mul(0xA076_1D64_78BD_642F));
    mix64(h ^ b.wrapping_mul(0xE703_7ED1_A0B4_28DB))
}

/// Raw 64 random bits at 0-based position `index` of the stream `key`.
#[inline]
pub(crate) fn draw(key: u64, index: u64) -> u64 {
    mix64(key.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Uniform in `[0, 1)` with 53 bits.
#[inline]
pub(crate) fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Derives a child seed, e.g. the seed of trial `t` from a base seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    stream_key(base, 0x5EED, index, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Destination {
    Village(usize),
    Graveyard,
}

impl fmt::Display for Destination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Destination::Village(y) => write!(f, "{y}"),
            Destination::Graveyard => f.write_str("graveyard"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Notice {
    Sleep,
    Jump,
}

impl Notice {
    #[inline]
    pub fn is_jump(self) -> bool {
        matches!(self, Notice::Jump)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StackKind {
    Airplane,
    Taxi,
    Landlord,
}

impl fmt::Display for StackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StackKind::Airplane => "airplane",
            StackKind::Taxi => "taxi",
            StackKind::Landlord => "landlord",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StackError {
    #[error("{kind} stack of village {village}{} has no injected instruction {index}", house.map(|h| format!(", house {h}")).unwrap_or_default())]
    Exhausted {
        kind: StackKind,
        village: usize,
        house: Option<u32>,
        index: u64,
    },
    #[error("instruction indices start at 1")]
    ZeroIndex,
    #[error("village {village} out of range (|V| = {villages})")]
    VillageOutOfRange { village: usize, villages: usize },
    #[error("house {house} outside 1..={n}")]
    HouseOutOfRange { house: u32, n: u32 },
    #[error("injected {kind} instruction for village {village} is invalid: {detail}")]
    InvalidInjection {
        kind: StackKind,
        village: usize,
        detail: String,
    },
    #[error("number of houses must be positive")]
    NoHouses,
}

#[derive(Debug, Clone)]
struct Stack<T> {
    key: u64,
    values: Vec<T>,
    served: u64,
}

impl<T: Copy> Stack<T> {
    fn new(key: u64) -> Self {
        Self {
            key,
            values: Vec::new(),
            served: 0,
        }
    }

    fn injected(key: u64, values: Vec<T>) -> Self {
        Self {
            key,
            values,
            served: 0,
        }
    }

    /// `None` only when `strict` and `j` is past the realized prefix.
    #[inline]
    fn get(&mut self, j: u64, strict: bool, decode: impl Fn(u64) -> T) -> Option<T> {
        let idx = (j - 1) as usize;
        if idx >= self.values.len() {
            if strict {
                return None;
            }
            self.values.reserve(idx + 1 - self.values.len());
            for k in self.values.len()..=idx {
                self.values.push(decode(draw(self.key, k as u64)));
            }
        }
        self.served = self.served.max(j);
        Some(self.values[idx])
    }
}

/// Explicit instruction prefixes for hand-traced fixtures.
#[derive(Debug, Clone, Default)]
pub struct Injection {
    airplane: HashMap<usize, Vec<Destination>>,
    taxi: HashMap<usize, Vec<u32>>,
    landlord: HashMap<(usize, u32), Vec<Notice>>,
}

impl Injection {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn airplane(mut self, village: usize, values: Vec<Destination>) -> Self {
        self.airplane.insert(village, values);
        self
    }

    pub fn taxi(mut self, village: usize, houses: Vec<u32>) -> Self {
        self.taxi.insert(village, houses);
        self
    }

    pub fn landlord(mut self, village: usize, house: u32, notices: Vec<Notice>) -> Self {
        self.landlord.insert((village, house), notices);
        self
    }
}

/// Lazily realized, memoized instruction stacks of one VARW instance.
///
/// A source is owned by one run at a time; independent runs use
/// independent sources.
#[derive(Debug, Clone)]
pub struct StackSource {
    seed: u64,
    n: u32,
    strict: bool,
    /// Cumulative kernel rows; mass beyond the last entry is the graveyard.
    cdf: Vec<Vec<f64>>,
    sleep_prob: Vec<f64>,
    airplane: Vec<Stack<u32>>,
    taxi: Vec<Stack<u32>>,
    /// Keyed by `village * n + (house - 1)`; allocated on first touch.
    landlord: HashMap<u64, Stack<bool>>,
}

impl StackSource {
    pub fn new(params: &ModelParams, n: u32, seed: u64) -> Result<Self, StackError> {
        if n == 0 {
            return Err(StackError::NoHouses);
        }
        let v = params.num_villages();
        let cdf = (0..v)
            .map(|x| {
                let mut acc = 0.0;
                params
                    .kernel_row(x)
                    .iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            seed,
            n,
            strict: false,
            cdf,
            sleep_prob: params.critical_profile(),
            airplane: (0..v)
                .map(|x| Stack::new(stream_key(seed, TAG_AIRPLANE, x as u64, 0)))
                .collect(),
            taxi: (0..v)
                .map(|x| Stack::new(stream_key(seed, TAG_TAXI, x as u64, 0)))
                .collect(),
            landlord: HashMap::new(),
        })
    }

    /// A source serving `injection` first. Past an injected prefix a strict
    /// source fails; a non-strict one continues with the seeded stream.
    /// Stacks without an injected prefix are empty in strict mode.
    pub fn with_injection(
        params: &ModelParams,
        n: u32,
        seed: u64,
        injection: Injection,
        strict: bool,
    ) -> Result<Self, StackError> {
        let mut src = Self::new(params, n, seed)?;
        src.strict = strict;
        let v = params.num_villages();
        let check_village = |village: usize| {
            if village < v {
                Ok(())
            } else {
                Err(StackError::VillageOutOfRange {
                    village,
                    villages: v,
                })
            }
        };
        for (x, values) in injection.airplane {
            check_village(x)?;
            let encoded = values
                .into_iter()
                .map(|d| match d {
                    Destination::Graveyard => Ok(GRAVEYARD),
                    Destination::Village(y) if y < v => Ok(y as u32),
                    Destination::Village(y) => Err(StackError::InvalidInjection {
                        kind: StackKind::Airplane,
                        village: x,
                        detail: format!("destination {y} out of range"),
                    }),
                })
                .collect::<Result<Vec<_>, _>>()?;
            src.airplane[x] = Stack::injected(src.airplane[x].key, encoded);
        }
        for (x, houses) in injection.taxi {
            check_village(x)?;
            if let Some(&h) = houses.iter().find(|&&h| h == 0 || h > n) {
                return Err(StackError::InvalidInjection {
                    kind: StackKind::Taxi,
                    village: x,
                    detail: format!("house {h} outside 1..={n}"),
                });
            }
            src.taxi[x] = Stack::injected(src.taxi[x].key, houses);
        }
        for ((x, i), notices) in injection.landlord {
            check_village(x)?;
            src.check_house(i)?;
            let key = src.landlord_key(x, i);
            src.landlord.insert(
                src.landlord_slot(x, i),
                Stack::injected(key, notices.into_iter().map(Notice::is_jump).collect()),
            );
        }
        Ok(src)
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_villages(&self) -> usize {
        self.airplane.len()
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    fn check_village(&self, x: usize) -> Result<(), StackError> {
        if x < self.airplane.len() {
            Ok(())
        } else {
            Err(StackError::VillageOutOfRange {
                village: x,
                villages: self.airplane.len(),
            })
        }
    }

    fn check_house(&self, i: u32) -> Result<(), StackError> {
        if (1..=self.n).contains(&i) {
            Ok(())
        } else {
            Err(StackError::HouseOutOfRange {
                house: i,
                n: self.n,
            })
        }
    }

    #[inline]
    fn landlord_slot(&self, x: usize, i: u32) -> u64 {
        x as u64 * self.n as u64 + (i - 1) as u64
    }

    fn landlord_key(&self, x: usize, i: u32) -> u64 {
        stream_key(self.seed, TAG_LANDLORD, x as u64, i as u64)
    }

    /// `ζ_{j,x}`: destination of the `j`-th jump out of village `x`.
    pub fn airplane(&mut self, x: usize, j: u64) -> Result<Destination, StackError> {
        self.check_village(x)?;
        if j == 0 {
            return Err(StackError::ZeroIndex);
        }
        let cdf = &self.cdf[x];
        let raw = self.airplane[x]
            .get(j, self.strict, |bits| {
                let u = unit_f64(bits);
                cdf.iter()
                    .position(|&c| u < c)
                    .map_or(GRAVEYARD, |y| y as u32)
            })
            .ok_or(StackError::Exhausted {
                kind: StackKind::Airplane,
                village: x,
                house: None,
                index: j,
            })?;
        Ok(if raw == GRAVEYARD {
            Destination::Graveyard
        } else {
            Destination::Village(raw as usize)
        })
    }

    /// `γ_{j,x}`: house taken by the `j`-th arrival at village `x`.
    pub fn taxi(&mut self, x: usize, j: u64) -> Result<u32, StackError> {
        self.check_village(x)?;
        if j == 0 {
            return Err(StackError::ZeroIndex);
        }
        let n = self.n as u64;
        self.taxi[x]
            .get(j, self.strict, |bits| {
                (((bits as u128 * n as u128) >> 64) as u32) + 1
            })
            .ok_or(StackError::Exhausted {
                kind: StackKind::Taxi,
                village: x,
                house: None,
                index: j,
            })
    }

    /// `κ_{j,(x,i)}`: the `j`-th landlord notice of house `i` in village `x`.
    pub fn landlord(&mut self, x: usize, i: u32, j: u64) -> Result<Notice, StackError> {
        self.check_village(x)?;
        self.check_house(i)?;
        if j == 0 {
            return Err(StackError::ZeroIndex);
        }
        let slot = self.landlord_slot(x, i);
        let sleep = self.sleep_prob[x];
        let strict = self.strict;
        let stack = match self.landlord.get_mut(&slot) {
            Some(s) => s,
            None => {
                let key = self.landlord_key(x, i);
                self.landlord.entry(slot).or_insert_with(|| Stack::new(key))
            }
        };
        let jump =
            stack
                .get(j, strict, |bits| unit_f64(bits) >= sleep)
                .ok_or(StackError::Exhausted {
                    kind: StackKind::Landlord,
                    village: x,
                    house: Some(i),
                    index: j,
                })?;
        Ok(if jump { Notice::Jump } else { Notice::Sleep })
    }

    /// Highest airplane index served for village `x`.
    pub fn served_airplane(&self, x: usize) -> u64 {
        self.airplane[x].served
    }

    pub fn served_taxi(&self, x: usize) -> u64 {
        self.taxi[x].served
    }

    pub fn served_landlord(&self, x: usize, i: u32) -> u64 {
        self.landlord
            .get(&self.landlord_slot(x, i))
            .map_or(0, |s| s.served)
    }

    /// Number of houses whose landlord stack has been allocated.
    pub fn touched_houses(&self) -> usize {
        self.landlord.len()
    }
}

/// Fresh Bernoulli variable attached to house `(x, i)`, independent of every
/// instruction stack: true with probability `p`.
pub fn aux_bernoulli(aux_seed: u64, x: usize, i: u32, p: f64) -> bool {
    unit_f64(draw(stream_key(aux_seed, TAG_AUX, x as u64, i as u64), 0)) < p
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn params(kernel: Vec<Vec<f64>>, lambda: Vec<f64>) -> ModelParams {
        let v = kernel.len();
        ModelParams::new(kernel, lambda, vec![0.0; v], vec![0.0; v]).unwrap()
    }

    fn scalar(p: f64, lambda: f64) -> ModelParams {
        params(vec![vec![p]], vec![lambda])
    }

    #[test]
    fn empty_row_is_always_graveyard() {
        let p = params(vec![vec![0.0, 0.0], vec![0.5, 0.0]], vec![1.0, 1.0]);
        let mut s = StackSource::new(&p, 10, 3).unwrap();
        for j in 1..=1000 {
            assert_eq!(s.airplane(0, j).unwrap(), Destination::Graveyard);
        }
    }

    #[test]
    fn deterministic_row() {
        let p = params(vec![vec![0.0, 1.0], vec![0.5, 0.0]], vec![1.0, 1.0]);
        let mut s = StackSource::new(&p, 10, 3).unwrap();
        for j in 1..=1000 {
            assert_eq!(s.airplane(0, j).unwrap(), Destination::Village(1));
        }
    }

    #[test]
    fn graveyard_frequency() {
        let mut s = StackSource::new(&scalar(0.5, 1.0), 10, 11).unwrap();
        let dead = (1..=100_000)
            .filter(|&j| s.airplane(0, j).unwrap() == Destination::Graveyard)
            .count();
        let freq = dead as f64 / 1e5;
        assert!((freq - 0.5).abs() < 0.01, "{freq}");
    }

    #[test]
    fn single_house_taxi() {
        let mut s = StackSource::new(&scalar(0.5, 1.0), 1, 5).unwrap();
        assert!((1..=100).all(|j| s.taxi(0, j).unwrap() == 1));
    }

    #[test]
    fn taxi_memoized_and_uniform() {
        let mut s = StackSource::new(&scalar(0.5, 1.0), 4, 5).unwrap();
        let first = s.taxi(0, 17).unwrap();
        assert_eq!(s.taxi(0, 17).unwrap(), first);
        let mut counts = [0usize; 4];
        for j in 1..=100_000 {
            let h = s.taxi(0, j).unwrap();
            assert!((1..=4).contains(&h));
            counts[h as usize - 1] += 1;
        }
        for c in counts {
            assert!((c as f64 / 1e5 - 0.25).abs() < 0.01, "{counts:?}");
        }
        assert_eq!(s.taxi(0, 17).unwrap(), first);
        assert_eq!(s.served_taxi(0), 100_000);
    }

    #[test]
    fn zero_sleep_rate_always_jumps() {
        let mut s = StackSource::new(&scalar(0.5, 0.0), 3, 9).unwrap();
        for i in 1..=3 {
            for j in 1..=1000 {
                assert_eq!(s.landlord(0, i, j).unwrap(), Notice::Jump);
            }
        }
    }

    #[test]
    fn landlord_sleep_frequency() {
        let mut s = StackSource::new(&scalar(0.5, 1.0), 3, 9).unwrap();
        let sleeps = (1..=100_000)
            .filter(|&j| s.landlord(0, 2, j).unwrap() == Notice::Sleep)
            .count();
        assert!((sleeps as f64 / 1e5 - 0.5).abs() < 0.01);
        assert_eq!(s.touched_houses(), 1);
    }

    #[test]
    fn landlord_memoized_across_houses() {
        let p = scalar(0.5, 1.0);
        let mut s = StackSource::new(&p, 8, 21).unwrap();
        let a: Vec<_> = (1..=50).map(|j| s.landlord(0, 3, j).unwrap()).collect();
        for j in 1..=50 {
            s.landlord(0, 5, j).unwrap();
            s.landlord(0, 1, 2 * j).unwrap();
        }
        let b: Vec<_> = (1..=50).map(|j| s.landlord(0, 3, j).unwrap()).collect();
        assert_eq!(a, b);
        assert_eq!(s.served_landlord(0, 1), 100);
        assert_eq!(s.served_landlord(0, 4), 0);
    }

    #[test]
    fn injected_values_are_echoed() {
        let p = scalar(0.5, 1.0);
        let inj = Injection::new()
            .taxi(0, vec![2])
            .landlord(0, 2, vec![Notice::Sleep])
            .airplane(0, vec![Destination::Graveyard]);
        let mut s = StackSource::with_injection(&p, 4, 0, inj, true).unwrap();
        assert_eq!(s.taxi(0, 1).unwrap(), 2);
        assert_eq!(s.landlord(0, 2, 1).unwrap(), Notice::Sleep);
        assert_eq!(s.airplane(0, 1).unwrap(), Destination::Graveyard);
        assert_eq!(
            s.taxi(0, 2),
            Err(StackError::Exhausted {
                kind: StackKind::Taxi,
                village: 0,
                house: None,
                index: 2
            })
        );
        assert!(s.landlord(0, 1, 1).is_err());
    }

    #[test]
    fn non_strict_injection_falls_back_to_seed() {
        let p = scalar(0.5, 1.0);
        let mut plain = StackSource::new(&p, 4, 77).unwrap();
        let inj = Injection::new().taxi(0, vec![4, 4]);
        let mut s = StackSource::with_injection(&p, 4, 77, inj, false).unwrap();
        assert_eq!(s.taxi(0, 1).unwrap(), 4);
        for j in 3..50 {
            assert_eq!(s.taxi(0, j).unwrap(), plain.taxi(0, j).unwrap());
        }
    }

    #[test]
    fn invalid_queries_and_injections() {
        let p = scalar(0.5, 1.0);
        let mut s = StackSource::new(&p, 4, 1).unwrap();
        assert_eq!(s.taxi(0, 0), Err(StackError::ZeroIndex));
        assert!(matches!(
            s.taxi(1, 1),
            Err(StackError::VillageOutOfRange { .. })
        ));
        assert!(matches!(
            s.landlord(0, 5, 1),
            Err(StackError::HouseOutOfRange { .. })
        ));
        assert!(matches!(
            s.landlord(0, 0, 1),
            Err(StackError::HouseOutOfRange { .. })
        ));
        assert!(matches!(
            StackSource::new(&p, 0, 1),
            Err(StackError::NoHouses)
        ));
        let bad = Injection::new().taxi(0, vec![5]);
        assert!(matches!(
            StackSource::with_injection(&p, 4, 0, bad, true),
            Err(StackError::InvalidInjection { .. })
        ));
        let bad = Injection::new().airplane(0, vec![Destination::Village(3)]);
        assert!(StackSource::with_injection(&p, 4, 0, bad, true).is_err());
    }

    #[test]
    fn distinct_stacks_pass_independence_test() {
        // 4x4 contingency table of paired taxi draws from two villages.
        let p = params(vec![vec![0.0, 0.5], vec![0.5, 0.0]], vec![1.0, 1.0]);
        let mut s = StackSource::new(&p, 4, 2024).unwrap();
        let trials = 10_000;
        let mut table = [[0f64; 4]; 4];
        for j in 1..=trials {
            let a = s.taxi(0, j).unwrap() as usize - 1;
            let b = s.taxi(1, j).unwrap() as usize - 1;
            table[a][b] += 1.0;
        }
        let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
        let cols: Vec<f64> = (0..4).map(|c| table.iter().map(|r| r[c]).sum()).collect();
        let total = trials as f64;
        let mut stat = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                let e = rows[a] * cols[b] / total;
                stat += (table[a][b] - e).powi(2) / e;
            }
        }
        let p_value = ChiSquared::new(9.0).unwrap().sf(stat);
        assert!(p_value > 0.001, "p = {p_value}");
    }

    #[test]
    fn aux_bernoulli_frequency() {
        let hits = (1..=100_000u32)
            .filter(|&i| aux_bernoulli(42, 0, i, 0.3))
            .count();
        assert!((hits as f64 / 1e5 - 0.3).abs() < 0.01);
        assert!((1..=100u32).all(|i| aux_bernoulli(42, 0, i, 1.0)));
    }

    proptest! {
        #[test]
        fn query_order_does_not_matter(seed: u64, order in prop::collection::vec((0usize..2, 1u32..=6, 1u64..40), 1..200)) {
            let p = params(vec![vec![0.1, 0.4], vec![0.3, 0.2]], vec![0.7, 2.0]);
            let mut a = StackSource::new(&p, 6, seed).unwrap();
            let mut b = StackSource::new(&p, 6, seed).unwrap();
            for &(x, i, j) in &order {
                a.landlord(x, i, j).unwrap();
                a.taxi(x, j).unwrap();
                a.airplane(x, j).unwrap();
            }
            // b realizes everything in a different interleaving: backwards
            for &(x, i, j) in order.iter().rev() {
                b.airplane(x, j).unwrap();
                b.landlord(x, i, j).unwrap();
                b.taxi(x, j).unwrap();
            }
            for x in 0..2 {
                for j in 1..40 {
                    prop_assert_eq!(a.airplane(x, j).unwrap(), b.airplane(x, j).unwrap());
                    prop_assert_eq!(a.taxi(x, j).unwrap(), b.taxi(x, j).unwrap());
                    for i in 1..=6 {
                        prop_assert_eq!(a.landlord(x, i, j).unwrap(), b.landlord(x, i, j).unwrap());
                    }
                }
            }
        }
    }
}
