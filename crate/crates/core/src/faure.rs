//! Faure low-discrepancy sequence.
//!
//! Base `b` is the smallest prime `>= max(dim, 2)`. Coordinate 0 is the
//! radical inverse of the index in base `b`; coordinate `k` first maps the
//! digit vector through the `k`-th power of the Pascal matrix mod `b`.

#[derive(Debug, Clone)]
pub struct Faure {
    dim: usize,
    base: u64,
    /// binom[j][i] = C(j, i) mod base
    binom: Vec<Vec<u64>>,
}

/// Number of base-`b` digits needed for any `u64` index.
fn max_digits(base: u64) -> usize {
    let mut n = 0;
    let mut v = u64::MAX;
    while v > 0 {
        v /= base;
        n += 1;
    }
    n
}

pub fn smallest_prime_at_least(n: u64) -> u64 {
    let mut p = n.max(2);
    loop {
        if (2..).take_while(|d| d * d <= p).all(|d| p % d != 0) {
            return p;
        }
        p += 1;
    }
}

impl Faure {
    pub fn new(dim: usize) -> Self {
        let base = smallest_prime_at_least(dim as u64);
        let digits = max_digits(base);
        let mut binom = vec![vec![0u64; digits]; digits];
        for j in 0..digits {
            binom[j][0] = 1;
            for i in 1..=j {
                binom[j][i] = (binom[j - 1][i - 1] + if i < j { binom[j - 1][i] } else { 0 }) % base;
            }
        }
        Faure { dim, base, binom }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn base(&self) -> u64 {
        self.base
    }

    /// Point number `index` of the sequence, each coordinate in `[0, 1)`.
    pub fn point(&self, index: u64) -> Vec<f64> {
        let b = self.base;
        let mut digits = Vec::new();
        let mut n = index;
        while n > 0 {
            digits.push(n % b);
            n /= b;
        }
        let mut out = Vec::with_capacity(self.dim);
        let mut current = digits.clone();
        for k in 0..self.dim {
            if k > 0 {
                // one more application of the Pascal matrix:
                // y_i = sum_{j >= i} C(j, i) a_j mod b
                let mut next = vec![0u64; current.len()];
                for (i, slot) in next.iter_mut().enumerate() {
                    let mut acc = 0u64;
                    for (j, &a) in current.iter().enumerate().skip(i) {
                        acc = (acc + self.binom[j][i] * a) % b;
                    }
                    *slot = acc;
                }
                current = next;
            }
            let mut value = 0.0;
            let mut scale = 1.0 / b as f64;
            for &d in &current {
                value += d as f64 * scale;
                scale /= b as f64;
            }
            out.push(value);
        }
        out
    }

    /// `count` consecutive points starting at `start`.
    pub fn points(&self, start: u64, count: usize) -> Vec<Vec<f64>> {
        (0..count as u64).map(|i| self.point(start + i)).collect()
    }

    /// Conventional starting index `b^4 - 1`, which skips the poorly
    /// distributed leading points in high dimension.
    pub fn quality_skip(&self) -> u64 {
        self.base.saturating_pow(4) - 1
    }
}

/// Maps a unit-cube point into the box `bounds`.
pub fn scale_to_box(unit: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    unit.iter()
        .zip(bounds)
        .map(|(u, (lo, hi))| lo + u * (hi - lo))
        .collect()
}
