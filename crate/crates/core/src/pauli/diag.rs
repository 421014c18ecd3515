use super::{range_mask, Interval, C64};

/// A complex function of the Z-configuration restricted to a support interval.
///
/// The table is indexed by the support bits with the lowest site as the least
/// significant bit. A function without support is a constant.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagFn {
    support: Option<Interval>,
    table: Vec<C64>,
}

impl DiagFn {
    pub fn constant(c: C64) -> Self {
        DiagFn { support: None, table: vec![c] }
    }

    pub fn zero() -> Self {
        Self::constant(C64::new(0.0, 0.0))
    }

    pub fn one() -> Self {
        Self::constant(C64::new(1.0, 0.0))
    }

    /// Tabulate `f` over all configurations of `support`.
    ///
    /// `f` receives a global configuration word with only the support bits populated.
    pub fn from_fn(support: Interval, mut f: impl FnMut(u64) -> C64) -> Self {
        let n = 1usize << support.len();
        let table = (0..n).map(|l| f((l as u64) << support.lo)).collect();
        DiagFn { support: Some(support), table }
    }

    pub fn from_real_fn(support: Interval, mut f: impl FnMut(u64) -> f64) -> Self {
        Self::from_fn(support, |b| C64::new(f(b), 0.0))
    }

    pub fn support(&self) -> Option<Interval> {
        self.support
    }

    pub fn table(&self) -> &[C64] {
        &self.table
    }

    #[inline]
    pub fn eval(&self, bits: u64) -> C64 {
        match self.support {
            None => self.table[0],
            Some(s) => self.table[((bits >> s.lo) & local_mask(s)) as usize],
        }
    }

    /// Same function tabulated over a larger support.
    pub fn extended_to(&self, support: Interval) -> DiagFn {
        if self.support == Some(support) {
            return self.clone();
        }
        if let Some(s) = self.support {
            assert!(support.contains_interval(&s), "cannot shrink {s:?} to {support:?}");
        }
        DiagFn::from_fn(support, |b| self.eval(b))
    }

    pub fn extended_opt(&self, support: Option<Interval>) -> DiagFn {
        match support {
            Some(s) => self.extended_to(s),
            None => self.clone(),
        }
    }

    /// `(f ⊙ g)(σ) = op(f(σ), g(σ))` on the hull of both supports.
    pub fn zip_with(&self, other: &DiagFn, mut op: impl FnMut(C64, C64) -> C64) -> DiagFn {
        match Interval::hull_opt(self.support, other.support) {
            None => DiagFn::constant(op(self.table[0], other.table[0])),
            Some(h) => {
                if self.support == Some(h) && other.support == Some(h) {
                    let table = self.table.iter().zip(&other.table).map(|(&a, &b)| op(a, b)).collect();
                    DiagFn { support: Some(h), table }
                } else {
                    DiagFn::from_fn(h, |b| op(self.eval(b), other.eval(b)))
                }
            }
        }
    }

    pub fn map(&self, mut op: impl FnMut(C64) -> C64) -> DiagFn {
        DiagFn { support: self.support, table: self.table.iter().map(|&v| op(v)).collect() }
    }

    /// `g(σ) = f(σ ⊕ mask)`: flips the configuration on the sites of `mask`.
    pub fn flipped(&self, mask: u64) -> DiagFn {
        match self.support {
            None => self.clone(),
            Some(s) => {
                let m = ((mask & s.mask()) >> s.lo) as usize;
                if m == 0 {
                    return self.clone();
                }
                let table = (0..self.table.len()).map(|l| self.table[l ^ m]).collect();
                DiagFn { support: self.support, table }
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.table.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn min_abs(&self) -> f64 {
        self.table.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min)
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.max_abs() <= tol
    }

    /// Largest change of `f` under flipping `site`.
    pub fn dependence_on(&self, site: usize) -> f64 {
        match self.support {
            Some(s) if s.contains(site) => {
                let bit = 1usize << (site - s.lo);
                (0..self.table.len())
                    .filter(|l| l & bit == 0)
                    .map(|l| (self.table[l] - self.table[l | bit]).norm())
                    .fold(0.0, f64::max)
            }
            _ => 0.0,
        }
    }

    /// Shrink the support from both ends while the function does not depend on
    /// the end site (within `tol`), keeping every site of `keep`.
    pub fn refit(&self, keep: u64, tol: f64) -> DiagFn {
        let Some(mut s) = self.support else {
            return self.clone();
        };
        let keep_hull = Interval::hull_of_mask(keep);
        let mut f = self.clone();
        loop {
            let mut changed = false;
            for end in [s.lo, s.hi] {
                let pinned = keep_hull.is_some_and(|k| k.contains(end));
                if pinned || f.dependence_on(end) > tol {
                    continue;
                }
                if s.lo == s.hi {
                    // constant function
                    let avg = f.table.iter().sum::<C64>() / f.table.len() as f64;
                    return DiagFn::constant(avg);
                }
                let new_s = if end == s.lo { Interval::new(s.lo + 1, s.hi) } else { Interval::new(s.lo, s.hi - 1) };
                f = f.restricted_average(new_s);
                s = new_s;
                changed = true;
                break;
            }
            if !changed {
                return f;
            }
        }
    }

    /// Average over the sites of the support that are dropped by `sub`.
    fn restricted_average(&self, sub: Interval) -> DiagFn {
        let s = self.support.expect("restriction of a constant");
        debug_assert!(s.contains_interval(&sub));
        let dropped = s.mask() & !sub.mask();
        let n_dropped = dropped.count_ones();
        let weight = 1.0 / (1u64 << n_dropped) as f64;
        let mut table = vec![C64::new(0.0, 0.0); 1usize << sub.len()];
        for (l, &v) in self.table.iter().enumerate() {
            let bits = (l as u64) << s.lo;
            table[((bits >> sub.lo) & local_mask(sub)) as usize] += v * weight;
        }
        DiagFn { support: Some(sub), table }
    }

    /// Entries in lexicographic order of the support configuration, lowest site most significant.
    pub fn lexicographic_table(&self) -> Vec<C64> {
        match self.support {
            None => self.table.clone(),
            Some(s) => {
                let n = s.len();
                (0..self.table.len()).map(|lex| self.table[reverse_low_bits(lex, n)]).collect()
            }
        }
    }

    pub fn from_lexicographic_table(support: Option<Interval>, lex: &[C64]) -> Option<DiagFn> {
        let expected = support.map_or(1, |s| 1usize << s.len());
        if lex.len() != expected {
            return None;
        }
        let table = match support {
            None => lex.to_vec(),
            Some(s) => (0..lex.len()).map(|l| lex[reverse_low_bits(l, s.len())]).collect(),
        };
        Some(DiagFn { support, table })
    }
}

#[inline]
fn local_mask(s: Interval) -> u64 {
    range_mask(0, s.len() - 1)
}

fn reverse_low_bits(x: usize, n: usize) -> usize {
    if n == 0 {
        return x;
    }
    x.reverse_bits() >> (usize::BITS as usize - n)
}
