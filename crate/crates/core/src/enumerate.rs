//! Exhaustive enumeration of fixed-length symbol sequences.

use alloc::vec;
use alloc::vec::Vec;

/// Visits every sequence of length `len` over `0..k` in lexicographic
/// order, last position fastest.
#[derive(Debug, Clone)]
pub struct Odometer {
    k: usize,
    digits: Vec<usize>,
    started: bool,
    done: bool,
}

impl Odometer {
    pub fn new(k: usize, len: usize) -> Self {
        Self {
            k,
            digits: vec![0; len],
            started: false,
            done: k == 0 && len > 0,
        }
    }

    /// Next sequence, or `None` once all `k^len` have been produced. A
    /// zero-length odometer yields the empty sequence once.
    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> Option<&[usize]> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(&self.digits);
        }
        for i in (0..self.digits.len()).rev() {
            self.digits[i] += 1;
            if self.digits[i] < self.k {
                return Some(&self.digits);
            }
            self.digits[i] = 0;
        }
        self.done = true;
        None
    }
}

/// `k^len` as a float, so callers can compare against budgets without
/// overflow.
pub fn count(k: usize, len: usize) -> f64 {
    libm::pow(k as f64, len as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn visits_all_in_order() {
        let mut o = Odometer::new(3, 2);
        let mut seen = Vec::new();
        while let Some(s) = o.next() {
            seen.push(s.to_vec());
        }
        assert_eq!(seen.len(), 9);
        assert_eq!(seen[0], vec![0, 0]);
        assert_eq!(seen[1], vec![0, 1]);
        assert_eq!(seen[8], vec![2, 2]);
    }

    #[test]
    fn empty_length_yields_once() {
        let mut o = Odometer::new(2, 0);
        assert_eq!(o.next(), Some(&[][..]));
        assert_eq!(o.next(), None);
    }
}
