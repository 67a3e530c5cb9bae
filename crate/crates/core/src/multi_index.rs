//! Occupation-number vectors and the enumeration of all vectors with a given total.

use std::fmt;

use statrs::function::gamma::ln_gamma;

/// Occupation numbers `(n_1, ..., n_r)` of the `r` primary oscillators.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(n: Vec<u32>) -> Self {
        MultiIndex(n)
    }

    pub fn zeros(r: usize) -> Self {
        MultiIndex(vec![0; r])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().map(|&n| n as u64).sum()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<u32> {
        self.0
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(v: Vec<u32>) -> Self {
        MultiIndex(v)
    }
}

impl std::ops::Index<usize> for MultiIndex {
    type Output = u32;
    fn index(&self, i: usize) -> &u32 {
        &self.0[i]
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{n}")?;
        }
        write!(f, ")")
    }
}

/// Iterates all `MultiIndex` of length `parts` summing to `total`, in
/// lexicographic order of `(n_1, ..., n_r)`, without recursion.
///
/// ```
/// use thermo_entangle::multi_index::Compositions;
/// let all: Vec<Vec<u32>> = Compositions::new(2, 2).map(|m| m.into_vec()).collect();
/// assert_eq!(all, vec![vec![0, 2], vec![1, 1], vec![2, 0]]);
/// ```
#[derive(Debug, Clone)]
pub struct Compositions {
    current: Option<Vec<u32>>,
}

impl Compositions {
    pub fn new(total: u32, parts: usize) -> Self {
        let current = match parts {
            0 if total == 0 => Some(Vec::new()),
            0 => None,
            _ => {
                let mut v = vec![0; parts];
                v[parts - 1] = total;
                Some(v)
            }
        };
        Compositions { current }
    }
}

impl Iterator for Compositions {
    type Item = MultiIndex;

    fn next(&mut self) -> Option<MultiIndex> {
        let out = self.current.take()?;
        let parts = out.len();
        if parts >= 2 {
            // Successor: find the rightmost position before the last with
            // something to its right, bump it, and dump the remainder at the end.
            let mut next = out.clone();
            let mut j = parts - 1;
            while j > 0 {
                j -= 1;
                let tail: u32 = next[j + 1..].iter().sum();
                if tail > 0 {
                    next[j] += 1;
                    let rest = tail - 1;
                    for v in next[j + 1..].iter_mut() {
                        *v = 0;
                    }
                    next[parts - 1] = rest;
                    self.current = Some(next);
                    break;
                }
            }
        }
        Some(MultiIndex(out))
    }
}

/// All multi-indices of length `parts` with total at most `max_total`,
/// ordered by total and then lexicographically.
pub fn up_to_total(max_total: u32, parts: usize) -> impl Iterator<Item = MultiIndex> {
    (0..=max_total).flat_map(move |n| Compositions::new(n, parts))
}

/// Number of compositions of `total` into `parts` non-negative parts.
pub fn composition_count(total: u64, parts: usize) -> u64 {
    if parts == 0 {
        return u64::from(total == 0);
    }
    // C(total + parts − 1, parts − 1)
    let k = (parts - 1) as u64;
    let n = total + k;
    let mut c: u64 = 1;
    for i in 0..k {
        c = c * (n - i) / (i + 1);
    }
    c
}

/// `ln( (Σn)! / Π n_i! )`.
pub fn ln_multinomial(idx: &MultiIndex) -> f64 {
    // ln Γ(1) = ln Γ(2) = 0; skipping them keeps trivial cases exact.
    let ln_factorial = |n: u64| if n <= 1 { 0.0 } else { ln_gamma(n as f64 + 1.0) };
    ln_factorial(idx.total()) - idx.as_slice().iter().map(|&n| ln_factorial(n as u64)).sum::<f64>()
}
