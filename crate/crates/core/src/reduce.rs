//! Compensated summation.

/// Neumaier's variant of Kahan summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// Folds another partial sum in, keeping both compensation terms.
    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of a stream of reals.
pub fn kahan_reduce<I: IntoIterator<Item = f64>>(partials: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for x in partials {
        acc.add(x);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cancels_large_terms() {
        assert_eq!(kahan_reduce([1e16, 1.0, -1e16]), 1.0);
    }

    #[test]
    fn many_tenths() {
        let s = kahan_reduce(std::iter::repeat_n(0.1, 1_000_000));
        assert!((s - 1e5).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn permutation_and_partition_invariant(
            xs in proptest::collection::vec(-1e6f64..1e6, 1..400),
            split in 0usize..400,
            seed in any::<u64>(),
        ) {
            let whole = kahan_reduce(xs.iter().copied());
            let mut shuffled = xs.clone();
            let mut s = seed | 1;
            for i in (1..shuffled.len()).rev() {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                shuffled.swap(i, (s % (i as u64 + 1)) as usize);
            }
            let permuted = kahan_reduce(shuffled.iter().copied());
            let cut = split.min(xs.len());
            let mut a = CompensatedSum::new();
            xs[..cut].iter().for_each(|&x| a.add(x));
            let mut b = CompensatedSum::new();
            xs[cut..].iter().for_each(|&x| b.add(x));
            a.merge(&b);
            let scale = xs.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
            prop_assert!((whole - permuted).abs() <= 1e-13 * scale);
            prop_assert!((whole - a.value()).abs() <= 1e-13 * scale);
        }
    }
}
